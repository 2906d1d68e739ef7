//! Simplicial (triangle) meshes with face connectivity and boundary tags.
//!
//! Faces are stored once with a `left` element and an optional `right`
//! element. The stored unit normal always points from `left` to `right`, or
//! outward for boundary faces. Jumps and averages used by the dG assembly are
//! defined against this orientation: `[u] = u_left - u_right`.

mod gmsh;
mod refine;
mod structured;

pub use gmsh::{read_msh, write_msh, MshError};
pub use refine::uniform_refine;
pub use structured::{structured_generator, GeometrySpec};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type Point = Vector2<f64>;

/// Label carried by boundary faces (and interior faces on the fluid/porous interface).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    PorousWall,
    FluidWall,
    Inflow,
    Outflow,
    Interface,
    Free,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 6] = [
        BoundaryTag::PorousWall,
        BoundaryTag::FluidWall,
        BoundaryTag::Inflow,
        BoundaryTag::Outflow,
        BoundaryTag::Interface,
        BoundaryTag::Free,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::PorousWall => "PorousWall",
            BoundaryTag::FluidWall => "FluidWall",
            BoundaryTag::Inflow => "Inflow",
            BoundaryTag::Outflow => "Outflow",
            BoundaryTag::Interface => "Interface",
            BoundaryTag::Free => "Free",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoundaryTag::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown boundary tag `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subdomain {
    Porous,
    Fluid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    /// Local index of this face in `left` (the face opposite that local vertex).
    pub local_left: usize,
    pub local_right: Option<usize>,
    /// Unit normal pointing from `left` to `right` (outward on the boundary).
    pub normal: Point,
    pub measure: f64,
    pub tag: Option<BoundaryTag>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn midpoint(&self, mesh: &Mesh) -> Point {
        0.5 * (mesh.vertices[self.vertices[0]] + mesh.vertices[self.vertices[1]])
    }

    pub fn tangent(&self) -> Point {
        Point::new(-self.normal.y, self.normal.x)
    }

    /// +1 if the normal points out of `element`, -1 if into it.
    pub fn orientation_for(&self, element: usize) -> f64 {
        if self.left == element {
            1.0
        } else {
            -1.0
        }
    }
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates (constant on the element).
    pub grad_lambda: [Point; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
        let area = 0.5 * det;
        // grad λ_i = rot(p_{i+2} - p_{i+1}) / (2|T|), rotated so it points toward vertex i
        let grad = |a: Point, b: Point| Point::new(a.y - b.y, b.x - a.x) / det;
        ElementGeometry {
            vertices,
            area,
            grad_lambda: [grad(p1, p2), grad(p2, p0), grad(p0, p1)],
        }
    }

    pub fn map(&self, bary: [f64; 3]) -> Point {
        bary[0] * self.vertices[0] + bary[1] * self.vertices[1] + bary[2] * self.vertices[2]
    }

    pub fn centroid(&self) -> Point {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.vertices;
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MeshError {
    #[error("mesh has no elements")]
    Empty,
    #[error("element {element} references vertex {vertex}, but only {n_vertices} vertices exist")]
    DanglingVertex {
        element: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("element {element} repeats vertex {vertex}")]
    RepeatedVertex { element: usize, vertex: usize },
    #[error("element {element} duplicates element {original}")]
    DuplicateElement { element: usize, original: usize },
    #[error("element {element} is inverted or degenerate (signed area {area:e})")]
    Inverted { element: usize, area: f64 },
    #[error("face ({a}, {b}) is shared by more than two elements")]
    NonManifold { a: usize, b: usize },
    #[error("expected {expected} subdomain labels, got {got}")]
    SubdomainCount { expected: usize, got: usize },
    #[error("unknown geometry `{0}` (expected unit-square-porous or channel-over-porous)")]
    UnknownGeometry(String),
    #[error("invalid structured mesh size {nx}x{ny}")]
    InvalidSize { nx: usize, ny: usize },
}

/// Immutable triangle mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
    pub subdomains: Vec<Subdomain>,
    pub faces: Vec<Face>,
    /// `element_faces[e][i]` is the face opposite local vertex `i`.
    pub element_faces: Vec<[usize; 3]>,
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Builds a mesh and its face table.
///
/// `boundary` is queried once per boundary face with the face's vertex pair and
/// midpoint; `None` means [`BoundaryTag::Free`]. Interior faces that separate a
/// fluid element from a porous element are tagged [`BoundaryTag::Interface`]
/// automatically.
pub fn build_mesh<F>(
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    subdomains: Vec<Subdomain>,
    boundary: F,
) -> Result<Mesh, MeshError>
where
    F: Fn([usize; 2], Point) -> Option<BoundaryTag>,
{
    if elements.is_empty() {
        return Err(MeshError::Empty);
    }
    if subdomains.len() != elements.len() {
        return Err(MeshError::SubdomainCount {
            expected: elements.len(),
            got: subdomains.len(),
        });
    }
    let n_vertices = vertices.len();
    let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(elements.len());
    for (e, el) in elements.iter().enumerate() {
        for &v in el {
            if v >= n_vertices {
                return Err(MeshError::DanglingVertex {
                    element: e,
                    vertex: v,
                    n_vertices,
                });
            }
        }
        if el[0] == el[1] || el[0] == el[2] {
            return Err(MeshError::RepeatedVertex {
                element: e,
                vertex: el[0],
            });
        }
        if el[1] == el[2] {
            return Err(MeshError::RepeatedVertex {
                element: e,
                vertex: el[1],
            });
        }
        let mut key = *el;
        key.sort_unstable();
        if let Some(&original) = seen.get(&key) {
            return Err(MeshError::DuplicateElement {
                element: e,
                original,
            });
        }
        seen.insert(key, e);
        let geo = ElementGeometry::new([vertices[el[0]], vertices[el[1]], vertices[el[2]]]);
        if !(geo.area > 0.0) {
            return Err(MeshError::Inverted {
                element: e,
                area: geo.area,
            });
        }
    }

    let mut faces: Vec<Face> = Vec::with_capacity(elements.len() * 2 + 8);
    let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(elements.len() * 2);
    let mut element_faces = vec![[usize::MAX; 3]; elements.len()];
    for (e, el) in elements.iter().enumerate() {
        for i in 0..3 {
            let a = el[(i + 1) % 3];
            let b = el[(i + 2) % 3];
            let key = sorted_pair(a, b);
            match lookup.get(&key) {
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.right.is_some() {
                        return Err(MeshError::NonManifold {
                            a: key[0],
                            b: key[1],
                        });
                    }
                    face.right = Some(e);
                    face.local_right = Some(i);
                    element_faces[e][i] = f;
                }
                None => {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    let d = pb - pa;
                    let measure = d.norm();
                    // counter-clockwise element: outward normal is d rotated clockwise
                    let normal = Point::new(d.y, -d.x) / measure;
                    lookup.insert(key, faces.len());
                    element_faces[e][i] = faces.len();
                    faces.push(Face {
                        vertices: [a, b],
                        left: e,
                        right: None,
                        local_left: i,
                        local_right: None,
                        normal,
                        measure,
                        tag: None,
                    });
                }
            }
        }
    }

    for face in faces.iter_mut() {
        match face.right {
            None => {
                let mid = 0.5 * (vertices[face.vertices[0]] + vertices[face.vertices[1]]);
                let requested = boundary(sorted_pair(face.vertices[0], face.vertices[1]), mid);
                face.tag = Some(requested.unwrap_or(BoundaryTag::Free));
            }
            Some(r) if subdomains[face.left] != subdomains[r] => {
                face.tag = Some(BoundaryTag::Interface)
            }
            Some(_) => {}
        }
    }

    Ok(Mesh {
        vertices,
        elements,
        subdomains,
        faces,
        element_faces,
    })
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        let el = self.elements[e];
        ElementGeometry::new([
            self.vertices[el[0]],
            self.vertices[el[1]],
            self.vertices[el[2]],
        ])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.geometry(e).area).sum()
    }

    pub fn subdomain_area(&self, sub: Subdomain) -> f64 {
        (0..self.n_elements())
            .filter(|&e| self.subdomains[e] == sub)
            .map(|e| self.geometry(e).area)
            .sum()
    }

    pub fn has_subdomain(&self, sub: Subdomain) -> bool {
        self.subdomains.iter().any(|&s| s == sub)
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &Face)> {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_boundary())
    }

    pub fn faces_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = (usize, &Face)> {
        self.faces
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == Some(tag))
    }

    pub fn tag_measure(&self, tag: BoundaryTag) -> f64 {
        self.faces_with_tag(tag).map(|(_, f)| f.measure).sum()
    }

    pub fn max_face_diameter(&self) -> f64 {
        self.faces.iter().map(|f| f.measure).fold(0.0, f64::max)
    }

    pub fn max_element_diameter(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.geometry(e).diameter())
            .fold(0.0, f64::max)
    }

    /// Unit normal of local face `i` of element `e`, pointing out of `e`.
    pub fn outward_normal(&self, e: usize, i: usize) -> Point {
        let face = &self.faces[self.element_faces[e][i]];
        face.orientation_for(e) * face.normal
    }

    /// The element on the other side of local face `i` of `e`.
    pub fn neighbor(&self, e: usize, i: usize) -> Option<usize> {
        let face = &self.faces[self.element_faces[e][i]];
        if face.left == e {
            face.right
        } else {
            Some(face.left)
        }
    }

    /// Sum over faces of (outward normal * measure) per element; zero for closed polygons.
    pub fn closure_defect(&self, e: usize) -> Point {
        (0..3)
            .map(|i| self.outward_normal(e, i) * self.faces[self.element_faces[e][i]].measure)
            .sum()
    }

    /// Connected components of the element adjacency graph restricted to `sub`.
    /// Returns a component id per element (`usize::MAX` for elements outside `sub`).
    pub fn components(&self, sub: Option<Subdomain>) -> Vec<usize> {
        let inside = |e: usize| sub.map_or(true, |s| self.subdomains[e] == s);
        let mut comp = vec![usize::MAX; self.n_elements()];
        let mut next = 0;
        for start in 0..self.n_elements() {
            if comp[start] != usize::MAX || !inside(start) {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = next;
            while let Some(e) = stack.pop() {
                for i in 0..3 {
                    if let Some(n) = self.neighbor(e, i) {
                        if comp[n] == usize::MAX && inside(n) {
                            comp[n] = next;
                            stack.push(n);
                        }
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Places the parts side by side in one mesh, keeping subdomains and
    /// boundary tags. Parts must not overlap.
    pub fn disjoint_union(parts: &[Mesh]) -> Result<Mesh, MeshError> {
        let mut vertices = Vec::new();
        let mut elements = Vec::new();
        let mut subdomains = Vec::new();
        let mut tags = HashMap::new();
        for part in parts {
            let off = vertices.len();
            vertices.extend_from_slice(&part.vertices);
            elements.extend(part.elements.iter().map(|el| el.map(|v| v + off)));
            subdomains.extend_from_slice(&part.subdomains);
            for f in part.faces.iter().filter(|f| f.is_boundary()) {
                let [a, b] = f.vertices;
                if let Some(t) = f.tag {
                    tags.insert(sorted_pair(a + off, b + off), t);
                }
            }
        }
        build_mesh(vertices, elements, subdomains, |pair, _| {
            tags.get(&sorted_pair(pair[0], pair[1])).copied()
        })
    }

    /// Content hash of vertex coordinates, connectivity, subdomains and tags.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            h.update(v.x.to_bits().to_le_bytes());
            h.update(v.y.to_bits().to_le_bytes());
        }
        for (el, sub) in self.elements.iter().zip(&self.subdomains) {
            for &v in el {
                h.update((v as u64).to_le_bytes());
            }
            h.update([*sub as u8]);
        }
        for f in &self.faces {
            h.update([f.tag.map_or(255, |t| t as u8)]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_triangle_square() -> Mesh {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        build_mesh(
            v,
            vec![[0, 1, 2], [0, 2, 3]],
            vec![Subdomain::Porous; 2],
            |_, _| Some(BoundaryTag::PorousWall),
        )
        .unwrap()
    }

    #[test]
    fn minimal_square_counts() {
        let m = two_triangle_square();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_faces(), 5);
        assert_eq!(m.boundary_faces().count(), 4);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        for f in &m.faces {
            assert!((f.normal.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn interior_normal_points_left_to_right() {
        let m = two_triangle_square();
        let (_, f) = m
            .faces
            .iter()
            .enumerate()
            .find(|(_, f)| !f.is_boundary())
            .unwrap();
        let cl = m.geometry(f.left).centroid();
        let cr = m.geometry(f.right.unwrap()).centroid();
        assert!(f.normal.dot(&(cr - cl)) > 0.0);
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = two_triangle_square();
        for (_, f) in m.boundary_faces() {
            let c = m.geometry(f.left).centroid();
            assert!(f.normal.dot(&(f.midpoint(&m) - c)) > 0.0);
        }
    }

    #[test]
    fn closed_surface_identity() {
        let m = two_triangle_square();
        for e in 0..m.n_elements() {
            assert!(m.closure_defect(e).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_dangling_vertex() {
        let err = build_mesh(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
            ],
            vec![[0, 1, 7]],
            vec![Subdomain::Porous],
            |_, _| None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            MeshError::DanglingVertex {
                element: 0,
                vertex: 7,
                n_vertices: 3
            }
        );
    }

    #[test]
    fn rejects_inverted_and_duplicate() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let err = build_mesh(
            v.clone(),
            vec![[0, 2, 1]],
            vec![Subdomain::Porous],
            |_, _| None,
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::Inverted { element: 0, .. }));
        let err = build_mesh(
            v,
            vec![[0, 1, 2], [1, 2, 0]],
            vec![Subdomain::Porous; 2],
            |_, _| None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            MeshError::DuplicateElement {
                element: 1,
                original: 0
            }
        );
    }

    #[test]
    fn unspecified_boundary_defaults_to_free() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let m = build_mesh(v, vec![[0, 1, 2]], vec![Subdomain::Porous], |_, _| None).unwrap();
        assert!(m.faces.iter().all(|f| f.tag == Some(BoundaryTag::Free)));
    }

    #[test]
    fn tag_names_round_trip() {
        for t in BoundaryTag::ALL {
            assert_eq!(t.name().parse::<BoundaryTag>().unwrap(), t);
        }
        assert!("Wall".parse::<BoundaryTag>().is_err());
    }

    #[test]
    fn disjoint_union_keeps_tags_and_components() {
        let a = two_triangle_square();
        let mut b = two_triangle_square();
        for v in &mut b.vertices {
            v.x += 2.0;
        }
        let b = build_mesh(b.vertices, b.elements, b.subdomains, |_, mid| {
            Some(if mid.y > 0.99 {
                BoundaryTag::Inflow
            } else {
                BoundaryTag::PorousWall
            })
        })
        .unwrap();
        let u = Mesh::disjoint_union(&[a, b]).unwrap();
        assert_eq!(u.n_elements(), 4);
        assert_eq!(u.components(None).iter().max(), Some(&1));
        assert!((u.tag_measure(BoundaryTag::Inflow) - 1.0).abs() < 1e-15);
        assert!((u.tag_measure(BoundaryTag::PorousWall) - 7.0).abs() < 1e-15);
    }
}
