//! Shape functions and quadrature on the reference triangle and square.
use robin_ocp::element::{make_quadrature, ShapeBasis};
use robin_ocp::mesh::ElementKind;

fn main() {
    for kind in [ElementKind::Triangle, ElementKind::Quad] {
        for p in 1..=4 {
            let basis = ShapeBasis::new(kind, p).unwrap();
            let rule = make_quadrature(kind, 2 * p);
            // ∫ φ_i over the element, summed, is the element area
            let total: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(&x, w)| w * basis.eval(x).values.iter().sum::<f64>())
                .sum();
            println!(
                "{kind:?} p={p}: {:>2} shape functions, {:>2}-point rule of exactness {}, integral of the sum = {total:.15}",
                basis.count(),
                rule.len(),
                rule.exactness
            );
        }
    }
}
