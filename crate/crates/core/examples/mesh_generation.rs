//! Structured meshes of the unit square and their shape-regularity constant.
use robin_ocp::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, shape_regularity, TriangleSplit};

fn main() {
    let meshes = [
        ("quad n=4", build_uniform_quad_mesh(4)),
        ("diagonal n=4", build_uniform_tri_mesh(4, TriangleSplit::Diagonal)),
        ("crisscross n=2", build_uniform_tri_mesh(2, TriangleSplit::Crisscross)),
        ("crisscross n=4", build_uniform_tri_mesh(4, TriangleSplit::Crisscross)),
    ];
    println!("{:<16} {:>8} {:>8} {:>6} {:>10}", "mesh", "elements", "vertices", "edges", "gamma");
    for (name, m) in &meshes {
        let boundary = m.edges.iter().filter(|e| e.is_boundary()).count();
        println!(
            "{name:<16} {:>8} {:>8} {:>6} {:>10.4}   ({boundary} on the boundary)",
            m.num_elements(),
            m.vertices.len(),
            m.edges.len(),
            shape_regularity(m).unwrap()
        );
    }
    let json = build_uniform_tri_mesh(1, TriangleSplit::Diagonal).to_json();
    println!("\n{}", serde_json::to_string_pretty(&json).unwrap());
}
