//! Legacy ASCII VTK (`UNSTRUCTURED_GRID`, triangles) and a reader for the
//! same subset.
//!
//! Two point layouts:
//!
//! * [`Layout::Vertices`]: the mesh vertices, `POINTS n_vertices`.
//! * [`Layout::Cloud`]: a discontinuous point cloud of `3 n_elements` points;
//!   point `3e + i` is local vertex `i` of element `e` and cell `e` is
//!   `(3e, 3e+1, 3e+2)`. Broken fields are written as their per-cell vertex
//!   triples; continuous fields are repeated at each copy of a vertex.
//!
//! Values use `{:.16e}` (17 significant digits) and read back exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::fem::{FunctionSpace, SpaceKind};
use crate::mesh::{Mesh, Point};

pub const VTK_TRIANGLE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Vertices,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Point,
    Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkField {
    pub name: String,
    pub location: Location,
    /// 1 (SCALARS) or 3 (VECTORS)
    pub components: usize,
    pub values: Vec<f64>,
}

impl VtkField {
    pub fn point_scalar(name: &str, values: Vec<f64>) -> Self {
        Self::new(name, Location::Point, 1, values)
    }

    pub fn cell_scalar(name: &str, values: Vec<f64>) -> Self {
        Self::new(name, Location::Cell, 1, values)
    }

    pub fn point_vector(name: &str, values: &[Point]) -> Self {
        Self::new(name, Location::Point, 3, pad(values))
    }

    pub fn cell_vector(name: &str, values: &[Point]) -> Self {
        Self::new(name, Location::Cell, 3, pad(values))
    }

    fn new(name: &str, location: Location, components: usize, values: Vec<f64>) -> Self {
        VtkField {
            name: name.to_string(),
            location,
            components,
            values,
        }
    }
}

fn pad(v: &[Point]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, 0.0]).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum VtkError {
    #[error("field `{name}` has {got} values, expected {expected}")]
    Length {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("field name `{0}` must be non-empty and free of whitespace")]
    Name(String),
    #[error("malformed VTK: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn n_points(mesh: &Mesh, layout: Layout) -> usize {
    match layout {
        Layout::Vertices => mesh.n_vertices(),
        Layout::Cloud => 3 * mesh.n_elements(),
    }
}

pub fn render_vtk(
    mesh: &Mesh,
    layout: Layout,
    fields: &[VtkField],
    title: &str,
) -> Result<String, VtkError> {
    let np = n_points(mesh, layout);
    let ne = mesh.n_elements();
    for f in fields {
        if f.name.is_empty() || f.name.contains(char::is_whitespace) {
            return Err(VtkError::Name(f.name.clone()));
        }
        let expected = match f.location {
            Location::Point => np,
            Location::Cell => ne,
        };
        if f.values.len() != expected * f.components || !matches!(f.components, 1 | 3) {
            return Err(VtkError::Length {
                name: f.name.clone(),
                expected: expected * f.components,
                got: f.values.len(),
            });
        }
    }
    let mut s = String::with_capacity(64 * (np + ne) * (1 + fields.len()));
    s.push_str("# vtk DataFile Version 3.0\n");
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    s.push_str(if title.is_empty() { "mechbio" } else { &title });
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {np} double").unwrap();
    let mut point = |p: &Point| writeln!(s, "{:.16e} {:.16e} 0", p.x, p.y).unwrap();
    match layout {
        Layout::Vertices => mesh.vertices.iter().for_each(&mut point),
        Layout::Cloud => mesh
            .elements
            .iter()
            .flat_map(|el| el.iter().map(|&v| &mesh.vertices[v]))
            .for_each(&mut point),
    }
    writeln!(s, "CELLS {ne} {}", 4 * ne).unwrap();
    for (e, el) in mesh.elements.iter().enumerate() {
        let ids = match layout {
            Layout::Vertices => *el,
            Layout::Cloud => [3 * e, 3 * e + 1, 3 * e + 2],
        };
        writeln!(s, "3 {} {} {}", ids[0], ids[1], ids[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "{VTK_TRIANGLE}").unwrap();
    }
    for (loc, header, n) in [
        (Location::Point, "POINT_DATA", np),
        (Location::Cell, "CELL_DATA", ne),
    ] {
        let group: Vec<&VtkField> = fields.iter().filter(|f| f.location == loc).collect();
        if group.is_empty() {
            continue;
        }
        writeln!(s, "{header} {n}").unwrap();
        for f in group {
            if f.components == 1 {
                writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name).unwrap();
                for v in &f.values {
                    writeln!(s, "{v:.16e}").unwrap();
                }
            } else {
                writeln!(s, "VECTORS {} double", f.name).unwrap();
                for c in f.values.chunks(3) {
                    writeln!(s, "{:.16e} {:.16e} {:.16e}", c[0], c[1], c[2]).unwrap();
                }
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    layout: Layout,
    fields: &[VtkField],
    title: &str,
) -> Result<(), VtkError> {
    let text = render_vtk(mesh, layout, fields, title)?;
    fs::write(path, text)?;
    Ok(())
}

/// Values of component `component` of a P1, P1-bubble (vertex part), broken
/// P1 or P0 coefficient vector at the points of `layout` (P0: at the cells).
/// Points and cells outside the space's region get zero.
pub fn sample(space: &FunctionSpace, values: &[f64], component: usize, layout: Layout) -> Vec<f64> {
    let mesh = space.mesh();
    let off = component * space.n_scalar_dofs();
    if space.kind() == SpaceKind::P0 {
        let mut out = vec![0.0; mesh.n_elements()];
        for e in space.active_elements() {
            out[e] = values[off + space.local_dofs(e)[0]];
        }
        return out;
    }
    let mut out = vec![0.0; n_points(mesh, layout)];
    for e in space.active_elements() {
        let dofs = space.local_dofs(e);
        for i in 0..3 {
            let slot = match layout {
                Layout::Vertices => mesh.elements[e][i],
                Layout::Cloud => 3 * e + i,
            };
            out[slot] = values[off + dofs[i]];
        }
    }
    out
}

/// Two-component field from a vector-valued space, as points.
pub fn sample_vector(space: &FunctionSpace, values: &[f64], layout: Layout) -> Vec<Point> {
    let x = sample(space, values, 0, layout);
    let y = sample(space, values, 1, layout);
    x.into_iter()
        .zip(y)
        .map(|(a, b)| Point::new(a, b))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedVtk {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub fields: Vec<VtkField>,
}

impl ParsedVtk {
    pub fn field(&self, name: &str) -> Option<&VtkField> {
        self.fields.iter().find(|f| f.name == name)
    }
}

struct Tokens<'a> {
    it: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, VtkError> {
        self.it
            .next()
            .ok_or_else(|| VtkError::Format(format!("unexpected end of file, expected {what}")))
    }

    fn expect(&mut self, word: &str) -> Result<(), VtkError> {
        let t = self.next(word)?;
        if t == word {
            Ok(())
        } else {
            Err(VtkError::Format(format!("expected `{word}`, found `{t}`")))
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, VtkError> {
        let t = self.next(what)?;
        t.parse()
            .map_err(|_| VtkError::Format(format!("bad {what} `{t}`")))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>, VtkError> {
        (0..n).map(|_| self.parse(what)).collect()
    }
}

/// Reads the subset written by [`render_vtk`], checking the structural
/// invariants of the legacy format along the way.
pub fn parse_vtk(text: &str) -> Result<ParsedVtk, VtkError> {
    let mut lines = text.splitn(4, '\n');
    let first = lines.next().unwrap_or_default();
    if first != "# vtk DataFile Version 3.0" {
        return Err(VtkError::Format(format!("bad first line `{first}`")));
    }
    let title = lines.next().unwrap_or_default().to_string();
    if lines.next() != Some("ASCII") {
        return Err(VtkError::Format("only ASCII files are supported".into()));
    }
    let mut t = Tokens {
        it: lines
            .next()
            .unwrap_or_default()
            .split_whitespace()
            .peekable(),
    };
    t.expect("DATASET")?;
    t.expect("UNSTRUCTURED_GRID")?;
    t.expect("POINTS")?;
    let np: usize = t.parse("point count")?;
    t.next("point type")?;
    let coords = t.floats(3 * np, "coordinate")?;
    let points = coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    t.expect("CELLS")?;
    let nc: usize = t.parse("cell count")?;
    let size: usize = t.parse("cell list size")?;
    let mut cells = Vec::with_capacity(nc);
    let mut read = 0;
    for _ in 0..nc {
        let k: usize = t.parse("cell size")?;
        let ids = (0..k)
            .map(|_| t.parse("point index"))
            .collect::<Result<Vec<usize>, _>>()?;
        if ids.iter().any(|&i| i >= np) {
            return Err(VtkError::Format("cell references a missing point".into()));
        }
        read += k + 1;
        cells.push(ids);
    }
    if read != size {
        return Err(VtkError::Format(format!(
            "CELLS size {size} does not match {read} entries"
        )));
    }
    t.expect("CELL_TYPES")?;
    if t.parse::<usize>("cell type count")? != nc {
        return Err(VtkError::Format(
            "CELL_TYPES count differs from CELLS".into(),
        ));
    }
    let cell_types = (0..nc)
        .map(|_| t.parse("cell type"))
        .collect::<Result<Vec<u8>, _>>()?;
    let mut fields = Vec::new();
    let mut current: Option<(Location, usize)> = None;
    while let Some(word) = t.it.next() {
        match word {
            "POINT_DATA" | "CELL_DATA" => {
                let n: usize = t.parse("data count")?;
                let (loc, expected) = if word == "POINT_DATA" {
                    (Location::Point, np)
                } else {
                    (Location::Cell, nc)
                };
                if n != expected {
                    return Err(VtkError::Format(format!("{word} {n}, expected {expected}")));
                }
                current = Some((loc, n));
            }
            "SCALARS" | "VECTORS" => {
                let (loc, n) = current
                    .ok_or_else(|| VtkError::Format(format!("{word} outside a data section")))?;
                let name = t.next("field name")?.to_string();
                t.next("data type")?;
                let components = if word == "SCALARS" {
                    let c: usize = t.parse("component count")?;
                    t.expect("LOOKUP_TABLE")?;
                    t.next("lookup table name")?;
                    c
                } else {
                    3
                };
                let values = t.floats(n * components, "field value")?;
                fields.push(VtkField {
                    name,
                    location: loc,
                    components,
                    values,
                });
            }
            other => return Err(VtkError::Format(format!("unexpected keyword `{other}`"))),
        }
    }
    Ok(ParsedVtk {
        title,
        points,
        cells,
        cell_types,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::mesh::{structured_generator, GeometrySpec};

    fn two_triangles() -> Mesh {
        structured_generator(1, 1, &GeometrySpec::UnitSquarePorous).unwrap()
    }

    #[test]
    fn two_triangles_with_a_cell_field() {
        let m = two_triangles();
        let text = render_vtk(
            &m,
            Layout::Vertices,
            &[VtkField::cell_scalar("p", vec![1.0, 2.0])],
            "t",
        )
        .unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("DATASET UNSTRUCTURED_GRID\n"));
        assert!(text.contains("\nCELL_DATA 2\n"));
        assert!(!text.contains("POINT_DATA"));
        let back = parse_vtk(&text).unwrap();
        assert_eq!(back.cells.len(), 2);
        assert_eq!(back.cell_types, vec![VTK_TRIANGLE; 2]);
        assert_eq!(back.field("p").unwrap().values, vec![1.0, 2.0]);
    }

    #[test]
    fn cloud_layout_is_three_points_per_cell() {
        let m = structured_generator(3, 2, &GeometrySpec::UnitSquarePorous).unwrap();
        let ne = m.n_elements();
        let c: Vec<f64> = (0..3 * ne).map(|i| i as f64 * 0.1).collect();
        let text = render_vtk(
            &m,
            Layout::Cloud,
            &[VtkField::point_scalar("c1", c.clone())],
            "",
        )
        .unwrap();
        let back = parse_vtk(&text).unwrap();
        assert_eq!(back.points.len(), 3 * ne);
        for (e, cell) in back.cells.iter().enumerate() {
            assert_eq!(cell, &vec![3 * e, 3 * e + 1, 3 * e + 2]);
            for i in 0..3 {
                let p = back.points[3 * e + i];
                let v = m.vertices[m.elements[e][i]];
                assert_eq!([p[0], p[1]], [v.x, v.y]);
            }
        }
        assert_eq!(back.field("c1").unwrap().values, c);
    }

    #[test]
    fn length_and_name_are_checked() {
        let m = two_triangles();
        assert!(matches!(
            render_vtk(
                &m,
                Layout::Vertices,
                &[VtkField::point_scalar("h", vec![0.0; 3])],
                ""
            ),
            Err(VtkError::Length { .. })
        ));
        assert!(matches!(
            render_vtk(
                &m,
                Layout::Vertices,
                &[VtkField::cell_scalar("a b", vec![0.0; 2])],
                ""
            ),
            Err(VtkError::Name(_))
        ));
    }

    #[test]
    fn sampling_follows_the_dof_maps() {
        let m = Arc::new(structured_generator(2, 2, &GeometrySpec::UnitSquarePorous).unwrap());
        let p1 = FunctionSpace::new(m.clone(), SpaceKind::P1);
        let vals: Vec<f64> = (0..p1.n_dofs()).map(|d| d as f64).collect();
        let at_vertices = sample(&p1, &vals, 0, Layout::Vertices);
        for v in 0..m.n_vertices() {
            assert_eq!(at_vertices[v], p1.vertex_dof(v).unwrap() as f64);
        }
        let cloud = sample(&p1, &vals, 0, Layout::Cloud);
        for e in 0..m.n_elements() {
            for i in 0..3 {
                assert_eq!(cloud[3 * e + i], at_vertices[m.elements[e][i]]);
            }
        }
    }

    proptest! {
        #[test]
        fn values_round_trip_exactly(vals in proptest::collection::vec(-1e300f64..1e300, 4), tiny in -1e-300f64..1e-300) {
            let m = two_triangles();
            let mut v = vals.clone();
            v[0] = tiny;
            let pts = [Point::new(v[0], v[1]), Point::new(v[2], v[3])];
            let text = render_vtk(&m, Layout::Vertices, &[
                VtkField::point_scalar("s", v.clone()),
                VtkField::cell_vector("u", &pts),
            ], "").unwrap();
            let back = parse_vtk(&text).unwrap();
            prop_assert_eq!(&back.field("s").unwrap().values, &v);
            prop_assert_eq!(&back.field("u").unwrap().values, &vec![v[0], v[1], 0.0, v[2], v[3], 0.0]);
        }
    }
}
