//! Parsing and evaluating target functions.
use robin_ocp::expr::parse_expr;
use robin_ocp::problem::{EXAMPLE1_TARGET, EXAMPLE2_TARGET};

fn main() {
    for text in [EXAMPLE1_TARGET, EXAMPLE2_TARGET, "-(x1 - 0.5)*(x1 - 0.5) + cos(2*pi*x2)/4"] {
        let e = parse_expr(text).unwrap();
        println!("{e}");
        for (x1, x2) in [(0.5, 0.5), (1.0, 0.5), (0.25, 0.75)] {
            println!("  ({x1}, {x2}) -> {}", e.eval(x1, x2));
        }
    }
    for bad in ["sin(", "x3 + 1", "2 x1", "sin(x1, x2)"] {
        println!("{bad:>12}: {}", parse_expr(bad).unwrap_err());
    }
}
