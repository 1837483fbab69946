fn main() {
    std::process::exit(robin_ocp::cli::run_command(std::env::args_os()));
}
