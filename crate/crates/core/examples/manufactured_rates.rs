//! Observed h-convergence of the forward Robin solver against
//! y = sin(pi x1) sin(pi x2) + x1 x2.
use robin_ocp::verify::{manufactured_check_on, Manufactured, MeshSpec};

fn main() {
    for family in ["quad", "tri-crisscross", "tri-diagonal"] {
        for p in 1..=3 {
            let r = manufactured_check_on(p, &[4, 8, 16], MeshSpec::from_kind(family, 1).unwrap(), &Manufactured::smooth()).unwrap();
            let h1: Vec<String> = r.h1.iter().map(|e| format!("{e:.3e}")).collect();
            println!("{family:<15} p={p}  H1 errors [{}]  slope {:.3}  L2 slope {:.3}", h1.join(", "), r.h1_slope, r.l2_slope);
        }
    }
}
