//! Field output: legacy VTK for visualization and nodal CSV for exchange.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::mesh::ElementKind;
use crate::optimizer::Triple;
use crate::space::Field;

/// Scientific notation with 9 significant digits and a signed two-digit
/// exponent, e.g. `6.39863400e-04`.
pub fn fmt_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.8e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

/// Reference lattice of an element of degree `p`: points and sub-cells.
fn lattice(kind: ElementKind, p: usize) -> (Vec<[f64; 2]>, Vec<Vec<usize>>) {
    let h = 1.0 / p as f64;
    let mut pts = Vec::new();
    let mut cells = Vec::new();
    match kind {
        ElementKind::Quad => {
            for j in 0..=p {
                for i in 0..=p {
                    pts.push([i as f64 * h, j as f64 * h]);
                }
            }
            let id = |i: usize, j: usize| j * (p + 1) + i;
            for j in 0..p {
                for i in 0..p {
                    cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
        }
        ElementKind::Triangle => {
            let mut index = vec![vec![0; p + 1]; p + 1];
            for j in 0..=p {
                for i in 0..=p - j {
                    index[j][i] = pts.len();
                    pts.push([i as f64 * h, j as f64 * h]);
                }
            }
            for j in 0..p {
                for i in 0..p - j {
                    cells.push(vec![index[j][i], index[j][i + 1], index[j + 1][i]]);
                    if i + j + 1 < p {
                        cells.push(vec![index[j][i + 1], index[j + 1][i + 1], index[j + 1][i]]);
                    }
                }
            }
        }
    }
    (pts, cells)
}

/// Legacy ASCII VTK (3.0) unstructured grid sampling `u`, `y`, `z` on a
/// lattice of each element matching its state degree.
pub fn write_vtk<W: Write>(t: &Triple, w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    let space = t.y.space();
    let mesh = space.mesh();
    let mut points = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut cell_types = Vec::new();
    let mut values: [Vec<f64>; 3] = Default::default();
    for (el, element) in mesh.elements.iter().enumerate() {
        let (lat, sub) = lattice(element.kind, space.degree(el));
        let base = points.len();
        for &xi in &lat {
            points.push(element.map.apply(xi));
            for (vals, f) in values.iter_mut().zip([&t.u, &t.y, &t.z]) {
                vals.push(f.eval_in_element(el, xi).value);
            }
        }
        for c in sub {
            cell_types.push(if c.len() == 4 { 9 } else { 5 });
            cells.push(c.iter().map(|i| base + i).collect());
        }
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "optimal control fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(w, "{:?} {:?} 0", p.x1, p.x2)?;
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    writeln!(w, "CELLS {} {}", cells.len(), size)?;
    for c in &cells {
        write!(w, "{}", c.len())?;
        for i in c {
            write!(w, " {i}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", cell_types.len())?;
    for ct in &cell_types {
        writeln!(w, "{ct}")?;
    }
    writeln!(w, "POINT_DATA {}", points.len())?;
    for (name, vals) in ["u", "y", "z"].iter().zip(&values) {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in vals {
            writeln!(w, "{v:?}")?;
        }
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalValue {
    pub field: String,
    pub index: usize,
    pub x1: f64,
    pub x2: f64,
    pub value: f64,
}

fn nodal_rows<'a>(name: &'a str, f: &'a Field) -> impl Iterator<Item = NodalValue> + 'a {
    f.space()
        .dof_points()
        .iter()
        .zip(f.coeffs())
        .enumerate()
        .map(move |(index, (p, &value))| NodalValue {
            field: name.to_string(),
            index,
            x1: p.x1,
            x2: p.x2,
            value,
        })
}

/// Nodal coefficients of `u`, `y`, `z` with their node locations. Values are
/// written in shortest round-trip form so re-reading is exact.
pub fn write_nodal_csv<W: Write>(t: &Triple, w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "field,index,x1,x2,value")?;
    for r in nodal_rows("u", &t.u).chain(nodal_rows("y", &t.y)).chain(nodal_rows("z", &t.z)) {
        writeln!(w, "{},{},{:e},{:e},{:e}", r.field, r.index, r.x1, r.x2, r.value)?;
    }
    w.flush()
}

fn bad(line: usize, msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

pub fn read_nodal_csv<R: io::Read>(r: R) -> io::Result<Vec<NodalValue>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "field,index,x1,x2,value" {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad(i + 1, "expected 5 columns"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        out.push(NodalValue {
            field: cols[0].to_string(),
            index: cols[1].trim().parse().map_err(|_| bad(i + 1, "bad index"))?,
            x1: num(cols[2])?,
            x2: num(cols[3])?,
            value: num(cols[4])?,
        });
    }
    Ok(out)
}

/// Writes `<prefix>.vtk` and `<prefix>_nodal.csv`; returns the paths.
pub fn export_fields(t: &Triple, prefix: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref();
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = prefix.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let vtk = prefix.with_file_name(format!("{name}.vtk"));
    let csv = prefix.with_file_name(format!("{name}_nodal.csv"));
    write_vtk(t, File::create(&vtk)?)?;
    write_nodal_csv(t, File::create(&csv)?)?;
    Ok(vec![vtk, csv])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, DegreeVector, Mesh, TriangleSplit};
    use crate::space::{build_control_space, build_state_space};
    use std::sync::Arc;

    fn triple(mesh: Mesh, p: usize) -> Triple {
        let mesh = Arc::new(mesh);
        let n = mesh.num_elements();
        Triple::zeros(
            build_state_space(mesh.clone(), DegreeVector::uniform(n, p)).unwrap(),
            build_control_space(mesh, DegreeVector::uniform(n, p)).unwrap(),
        )
    }

    #[test]
    fn sci_format() {
        assert_eq!(fmt_sci(6.398634e-4), "6.39863400e-04");
        assert_eq!(fmt_sci(1.0), "1.00000000e+00");
        assert_eq!(fmt_sci(-2.5e12), "-2.50000000e+12");
        assert_eq!(fmt_sci(0.0), "0.00000000e+00");
        assert_eq!(fmt_sci(1.597850e-23), "1.59785000e-23");
    }

    #[test]
    fn lattice_sizes() {
        let (p, c) = lattice(ElementKind::Quad, 2);
        assert_eq!((p.len(), c.len()), (9, 4));
        let (p, c) = lattice(ElementKind::Triangle, 3);
        assert_eq!((p.len(), c.len()), (10, 9));
    }

    #[test]
    fn zero_triple_vtk() {
        let t = triple(build_uniform_quad_mesh(2), 2);
        let mut buf = Vec::new();
        write_vtk(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("POINTS 36 double"));
        assert!(text.contains("CELLS 16 80"));
        let data = text.split("POINT_DATA").nth(1).unwrap();
        assert!(data
            .lines()
            .filter(|l| !l.starts_with("SCALARS") && !l.starts_with("LOOKUP") && !l.trim().starts_with("36") && !l.is_empty())
            .all(|l| l == "0.0"));
    }

    #[test]
    fn nodal_csv_round_trip_is_exact() {
        let mut t = triple(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2);
        for (i, c) in t.y.coeffs_mut().iter_mut().enumerate() {
            *c = (i as f64 * 0.37).sin() / 3.0;
        }
        let mut buf = Vec::new();
        write_nodal_csv(&t, &mut buf).unwrap();
        let rows = read_nodal_csv(buf.as_slice()).unwrap();
        let ys: Vec<f64> = rows.iter().filter(|r| r.field == "y").map(|r| r.value).collect();
        assert_eq!(ys, t.y.coeffs());
        assert_eq!(rows.len(), t.u.coeffs().len() + 2 * t.y.coeffs().len());
    }

    #[test]
    fn export_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = triple(build_uniform_quad_mesh(1), 1);
        let paths = export_fields(&t, dir.path().join("out/run")).unwrap();
        assert!(paths.iter().all(|p| p.exists()));
    }
}
