use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FemError;
use crate::mesh::{ElementGeometry, Mesh, Point, Subdomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceKind {
    /// Continuous piecewise linears.
    P1,
    /// Broken (discontinuous) piecewise linears.
    DgP1,
    /// P1 enriched with one cubic bubble per element.
    P1Bubble,
    /// Lowest-order Raviart–Thomas; one total-flux dof per face.
    Rt0,
    /// Piecewise constants.
    P0,
}

impl SpaceKind {
    pub fn local_dofs(self) -> usize {
        match self {
            SpaceKind::P1 | SpaceKind::DgP1 | SpaceKind::Rt0 => 3,
            SpaceKind::P1Bubble => 4,
            SpaceKind::P0 => 1,
        }
    }
}

/// A discrete space on (a subdomain of) a mesh.
///
/// Vector-valued spaces are blocked by component: global dof of component `c`
/// is `c * n_scalar_dofs() + scalar_dof`.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    kind: SpaceKind,
    components: usize,
    region: Option<Subdomain>,
    n_scalar: usize,
    active: Vec<bool>,
    local: Vec<[usize; 4]>,
    vertex_dof: Vec<Option<usize>>,
    face_dof: Vec<Option<usize>>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        Self::build(mesh, kind, 1, None)
    }

    pub fn vector(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        Self::build(mesh, kind, 2, None)
    }

    pub fn on_region(
        mesh: Arc<Mesh>,
        kind: SpaceKind,
        components: usize,
        region: Subdomain,
    ) -> Self {
        Self::build(mesh, kind, components, Some(region))
    }

    pub fn build(
        mesh: Arc<Mesh>,
        kind: SpaceKind,
        components: usize,
        region: Option<Subdomain>,
    ) -> Self {
        assert!(components >= 1);
        let ne = mesh.n_elements();
        let active: Vec<bool> = (0..ne)
            .map(|e| region.map_or(true, |r| mesh.subdomains[e] == r))
            .collect();
        let mut vertex_dof = vec![None; mesh.n_vertices()];
        let mut face_dof = vec![None; mesh.n_faces()];
        let mut local = vec![[usize::MAX; 4]; ne];
        let mut n = 0;
        match kind {
            SpaceKind::P1 | SpaceKind::P1Bubble => {
                for e in (0..ne).filter(|&e| active[e]) {
                    for &v in &mesh.elements[e] {
                        if vertex_dof[v].is_none() {
                            vertex_dof[v] = Some(n);
                            n += 1;
                        }
                    }
                }
                for e in (0..ne).filter(|&e| active[e]) {
                    for i in 0..3 {
                        local[e][i] = vertex_dof[mesh.elements[e][i]].unwrap();
                    }
                }
                if kind == SpaceKind::P1Bubble {
                    for e in (0..ne).filter(|&e| active[e]) {
                        local[e][3] = n;
                        n += 1;
                    }
                }
            }
            SpaceKind::DgP1 => {
                for e in (0..ne).filter(|&e| active[e]) {
                    for (i, slot) in local[e].iter_mut().take(3).enumerate() {
                        *slot = n + i;
                    }
                    n += 3;
                }
            }
            SpaceKind::P0 => {
                for e in (0..ne).filter(|&e| active[e]) {
                    local[e][0] = n;
                    n += 1;
                }
            }
            SpaceKind::Rt0 => {
                for e in (0..ne).filter(|&e| active[e]) {
                    for i in 0..3 {
                        let f = mesh.element_faces[e][i];
                        if face_dof[f].is_none() {
                            face_dof[f] = Some(n);
                            n += 1;
                        }
                        local[e][i] = face_dof[f].unwrap();
                    }
                }
            }
        }
        FunctionSpace {
            mesh,
            kind,
            components,
            region,
            n_scalar: n,
            active,
            local,
            vertex_dof,
            face_dof,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn region(&self) -> Option<Subdomain> {
        self.region
    }

    pub fn n_scalar_dofs(&self) -> usize {
        self.n_scalar
    }

    pub fn n_dofs(&self) -> usize {
        self.n_scalar * self.components
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    pub fn active_elements(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.active.len()).filter(move |&e| self.active[e])
    }

    /// Scalar dofs of element `e` (empty for inactive elements).
    pub fn local_dofs(&self, e: usize) -> &[usize] {
        if self.active[e] {
            &self.local[e][..self.kind.local_dofs()]
        } else {
            &[]
        }
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dof[v]
    }

    pub fn face_dof(&self, f: usize) -> Option<usize> {
        self.face_dof[f]
    }

    /// Orientation of RT0 local basis `i` on element `e`: +1 when the global face
    /// normal points out of `e`.
    pub fn rt0_sign(&self, e: usize, i: usize) -> f64 {
        self.mesh.faces[self.mesh.element_faces[e][i]].orientation_for(e)
    }

    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

/// Values and gradients of the local scalar basis at a barycentric point.
#[derive(Debug, Clone, Copy)]
pub struct ScalarBasis {
    pub n: usize,
    pub values: [f64; 4],
    pub gradients: [Point; 4],
}

pub fn scalar_basis(kind: SpaceKind, geo: &ElementGeometry, bary: [f64; 3]) -> ScalarBasis {
    let mut values = [0.0; 4];
    let mut gradients = [Point::zeros(); 4];
    let n = kind.local_dofs();
    match kind {
        SpaceKind::P0 => {
            values[0] = 1.0;
        }
        SpaceKind::P1 | SpaceKind::DgP1 | SpaceKind::P1Bubble => {
            values[..3].copy_from_slice(&bary);
            gradients[..3].copy_from_slice(&geo.grad_lambda);
            if kind == SpaceKind::P1Bubble {
                let [l0, l1, l2] = bary;
                let g = geo.grad_lambda;
                values[3] = 27.0 * l0 * l1 * l2;
                gradients[3] = 27.0 * (l1 * l2 * g[0] + l0 * l2 * g[1] + l0 * l1 * g[2]);
            }
        }
        SpaceKind::Rt0 => panic!("RT0 is vector-valued; use rt0_basis"),
    }
    ScalarBasis {
        n,
        values,
        gradients,
    }
}

/// RT0 local basis on `e` at physical point `x`: `(values, divergences)`.
/// Basis `i` carries unit total flux through local face `i` along the global face normal.
pub fn rt0_basis(
    space: &FunctionSpace,
    e: usize,
    geo: &ElementGeometry,
    x: Point,
) -> ([Point; 3], [f64; 3]) {
    let mut v = [Point::zeros(); 3];
    let mut d = [0.0; 3];
    for i in 0..3 {
        let s = space.rt0_sign(e, i);
        v[i] = s * (x - geo.vertices[i]) / (2.0 * geo.area);
        d[i] = s / geo.area;
    }
    (v, d)
}

/// Barycentric coordinates of a physical point with respect to an element.
pub fn barycentric(geo: &ElementGeometry, x: Point) -> [f64; 3] {
    let c = geo.centroid();
    let d = x - c;
    [
        1.0 / 3.0 + geo.grad_lambda[0].dot(&d),
        1.0 / 3.0 + geo.grad_lambda[1].dot(&d),
        1.0 / 3.0 + geo.grad_lambda[2].dot(&d),
    ]
}

/// Coefficients of a discrete field.
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub space: Arc<FunctionSpace>,
    pub values: Vec<f64>,
}

/// Point evaluation of a field: one value and gradient per component. For
/// RT0 fields `value` holds the two vector components.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: Vec<f64>,
    pub gradient: Vec<Point>,
    pub divergence: f64,
}

impl FieldVector {
    pub fn zeros(space: Arc<FunctionSpace>) -> Self {
        let n = space.n_dofs();
        FieldVector {
            space,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(space: Arc<FunctionSpace>, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != space.n_dofs() {
            return Err(FemError::Length {
                expected: space.n_dofs(),
                got: values.len(),
            });
        }
        Ok(FieldVector { space, values })
    }

    pub fn evaluate(&self, e: usize, bary: [f64; 3]) -> Result<Evaluation, FemError> {
        let mesh = self.space.mesh();
        if e >= mesh.n_elements() {
            return Err(FemError::ElementOutOfRange {
                element: e,
                n_elements: mesh.n_elements(),
            });
        }
        if !self.space.is_active(e) {
            return Err(FemError::InactiveElement(e));
        }
        let geo = mesh.geometry(e);
        let dofs = self.space.local_dofs(e);
        let ns = self.space.n_scalar_dofs();
        if self.space.kind() == SpaceKind::Rt0 {
            let x = geo.map(bary);
            let (phi, div) = rt0_basis(&self.space, e, &geo, x);
            let mut val = Point::zeros();
            let mut divergence = 0.0;
            let mut grad_scale = 0.0;
            for i in 0..3 {
                let c = self.values[dofs[i]];
                val += c * phi[i];
                divergence += c * div[i];
                grad_scale += c * self.space.rt0_sign(e, i) / (2.0 * geo.area);
            }
            return Ok(Evaluation {
                value: vec![val.x, val.y],
                gradient: vec![Point::new(grad_scale, 0.0), Point::new(0.0, grad_scale)],
                divergence,
            });
        }
        let basis = scalar_basis(self.space.kind(), &geo, bary);
        let mut value = Vec::with_capacity(self.space.components());
        let mut gradient = Vec::with_capacity(self.space.components());
        for c in 0..self.space.components() {
            let mut v = 0.0;
            let mut g = Point::zeros();
            for (k, &d) in dofs.iter().enumerate() {
                let coef = self.values[c * ns + d];
                v += coef * basis.values[k];
                g += coef * basis.gradients[k];
            }
            value.push(v);
            gradient.push(g);
        }
        let divergence = if gradient.len() == 2 {
            gradient[0].x + gradient[1].y
        } else {
            0.0
        };
        Ok(Evaluation {
            value,
            gradient,
            divergence,
        })
    }

    /// `∫ u` over active elements (component 0).
    pub fn integral(&self) -> f64 {
        let mesh = self.space.mesh();
        let rule = super::QuadratureRule::triangle(2);
        self.space
            .active_elements()
            .map(|e| {
                let geo = mesh.geometry(e);
                rule.on_element(geo.area)
                    .map(|(b, w)| w * self.evaluate(e, b).map(|ev| ev.value[0]).unwrap_or(0.0))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Interpolates `f` (returning one entry per component, or two for RT0).
///
/// Nodal spaces use vertex values, P1-bubble fixes the bubble by the centroid
/// value, P0 takes element means, and RT0 takes face flux moments.
pub fn interpolate(space: &Arc<FunctionSpace>, f: impl Fn(Point) -> Vec<f64>) -> FieldVector {
    let mesh = space.mesh().clone();
    let ns = space.n_scalar_dofs();
    let mut values = vec![0.0; space.n_dofs()];
    let nc = space.components();
    match space.kind() {
        SpaceKind::P1 | SpaceKind::P1Bubble | SpaceKind::DgP1 => {
            for e in space.active_elements() {
                let geo = mesh.geometry(e);
                let dofs = space.local_dofs(e);
                let nodal: Vec<Vec<f64>> = geo.vertices.iter().map(|&p| f(p)).collect();
                for (i, &d) in dofs.iter().take(3).enumerate() {
                    for c in 0..nc {
                        values[c * ns + d] = nodal[i][c];
                    }
                }
                if space.kind() == SpaceKind::P1Bubble {
                    let fc = f(geo.centroid());
                    for c in 0..nc {
                        let linear = (nodal[0][c] + nodal[1][c] + nodal[2][c]) / 3.0;
                        values[c * ns + dofs[3]] = fc[c] - linear;
                    }
                }
            }
        }
        SpaceKind::P0 => {
            let rule = super::QuadratureRule::triangle(4);
            for e in space.active_elements() {
                let geo = mesh.geometry(e);
                let d = space.local_dofs(e)[0];
                for c in 0..nc {
                    let s: f64 = rule
                        .on_element(geo.area)
                        .map(|(b, w)| w * f(geo.map(b))[c])
                        .sum();
                    values[c * ns + d] = s / geo.area;
                }
            }
        }
        SpaceKind::Rt0 => {
            let line = super::LineRule::gauss(3);
            for (fi, face) in mesh.faces.iter().enumerate() {
                let Some(d) = space.face_dof(fi) else {
                    continue;
                };
                let a = mesh.vertices[face.vertices[0]];
                let b = mesh.vertices[face.vertices[1]];
                let flux: f64 = line
                    .points
                    .iter()
                    .zip(&line.weights)
                    .map(|(&t, &w)| {
                        let v = f(a + t * (b - a));
                        w * (v[0] * face.normal.x + v[1] * face.normal.y)
                    })
                    .sum();
                values[d] = flux * face.measure;
            }
        }
    }
    FieldVector {
        space: space.clone(),
        values,
    }
}

pub fn interpolate_scalar(space: &Arc<FunctionSpace>, f: impl Fn(Point) -> f64) -> FieldVector {
    interpolate(space, |p| vec![f(p)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_generator, uniform_refine, GeometrySpec};

    fn mesh() -> Arc<Mesh> {
        let m = structured_generator(3, 2, &GeometrySpec::UnitSquarePorous).unwrap();
        Arc::new(uniform_refine(&m))
    }

    #[test]
    fn dof_counts() {
        let m = mesh();
        let (nv, ne, nf) = (m.n_vertices(), m.n_elements(), m.n_faces());
        assert_eq!(FunctionSpace::new(m.clone(), SpaceKind::P1).n_dofs(), nv);
        assert_eq!(
            FunctionSpace::new(m.clone(), SpaceKind::DgP1).n_dofs(),
            3 * ne
        );
        assert_eq!(FunctionSpace::new(m.clone(), SpaceKind::P0).n_dofs(), ne);
        assert_eq!(FunctionSpace::new(m.clone(), SpaceKind::Rt0).n_dofs(), nf);
        assert_eq!(
            FunctionSpace::vector(m.clone(), SpaceKind::P1Bubble).n_dofs(),
            2 * (nv + ne)
        );
    }

    #[test]
    fn region_restricted_counts() {
        let m = Arc::new(structured_generator(4, 4, &GeometrySpec::channel_default(2)).unwrap());
        let p1 = FunctionSpace::on_region(m.clone(), SpaceKind::P1, 1, Subdomain::Fluid);
        assert_eq!(p1.n_dofs(), 5 * 3);
        let rt = FunctionSpace::on_region(m.clone(), SpaceKind::Rt0, 1, Subdomain::Porous);
        let porous = structured_generator(4, 2, &GeometrySpec::UnitSquarePorous).unwrap();
        assert_eq!(rt.n_dofs(), porous.n_faces());
    }

    #[test]
    fn p1_reproduces_affine() {
        let m = mesh();
        let s = Arc::new(FunctionSpace::new(m.clone(), SpaceKind::P1));
        let u = interpolate_scalar(&s, |p| p.x);
        for e in 0..m.n_elements() {
            for b in [[0.2, 0.3, 0.5], [1.0 / 3.0; 3], [0.9, 0.05, 0.05]] {
                let x = m.geometry(e).map(b);
                let ev = u.evaluate(e, b).unwrap();
                assert!((ev.value[0] - x.x).abs() < 1e-15);
                assert!((ev.gradient[0] - Point::new(1.0, 0.0)).norm() < 1e-13);
            }
        }
        assert!(matches!(
            u.evaluate(9999, [1.0, 0.0, 0.0]),
            Err(FemError::ElementOutOfRange { .. })
        ));
    }

    #[test]
    fn p0_of_one() {
        let s = Arc::new(FunctionSpace::new(mesh(), SpaceKind::P0));
        let u = interpolate_scalar(&s, |_| 1.0);
        assert!(u.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bubble_interpolates_quadratic_at_centroid() {
        let m = mesh();
        let s = Arc::new(FunctionSpace::new(m.clone(), SpaceKind::P1Bubble));
        let f = |p: Point| p.x * p.y;
        let u = interpolate_scalar(&s, f);
        for e in 0..m.n_elements() {
            let geo = m.geometry(e);
            let ev = u.evaluate(e, [1.0 / 3.0; 3]).unwrap();
            assert!((ev.value[0] - f(geo.centroid())).abs() < 1e-14);
        }
    }

    #[test]
    fn rt0_position_field_has_divergence_two() {
        let m = mesh();
        let s = Arc::new(FunctionSpace::new(m.clone(), SpaceKind::Rt0));
        let u = interpolate(&s, |p| vec![p.x, p.y]);
        for e in 0..m.n_elements() {
            let ev = u.evaluate(e, [0.2, 0.2, 0.6]).unwrap();
            assert!((ev.divergence - 2.0).abs() < 1e-12);
            let x = m.geometry(e).map([0.2, 0.2, 0.6]);
            assert!((ev.value[0] - x.x).abs() < 1e-12 && (ev.value[1] - x.y).abs() < 1e-12);
        }
    }

    #[test]
    fn rt0_unit_flux_divergence() {
        let m = mesh();
        let s = Arc::new(FunctionSpace::new(m.clone(), SpaceKind::Rt0));
        let (f, face) = m
            .faces
            .iter()
            .enumerate()
            .find(|(_, f)| !f.is_boundary())
            .unwrap();
        let mut u = FieldVector::zeros(s.clone());
        u.values[s.face_dof(f).unwrap()] = 1.0;
        for (e, sign) in [(face.left, 1.0), (face.right.unwrap(), -1.0)] {
            let area = m.geometry(e).area;
            let ev = u.evaluate(e, [1.0 / 3.0; 3]).unwrap();
            assert!((ev.divergence - sign / area).abs() < 1e-12);
        }
        // scaled to unit normal component the divergence is ±|F|/|T|
        u.values[s.face_dof(f).unwrap()] = face.measure;
        let area = m.geometry(face.left).area;
        let ev = u.evaluate(face.left, [1.0 / 3.0; 3]).unwrap();
        assert!((ev.divergence - face.measure / area).abs() < 1e-12);
    }

    #[test]
    fn rt0_normal_component_on_own_face() {
        let m = mesh();
        let s = Arc::new(FunctionSpace::new(m.clone(), SpaceKind::Rt0));
        for e in 0..m.n_elements() {
            let geo = m.geometry(e);
            for i in 0..3 {
                let face = &m.faces[m.element_faces[e][i]];
                let x = face.midpoint(&m);
                let (phi, _) = rt0_basis(&s, e, &geo, x);
                for (j, p) in phi.iter().enumerate() {
                    let flux = p.dot(&face.normal) * face.measure;
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((flux - expected).abs() < 1e-12);
                }
            }
        }
    }
}
