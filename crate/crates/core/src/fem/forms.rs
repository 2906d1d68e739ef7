//! Bilinear form catalogue. Rows are test dofs, columns trial dofs.

use nalgebra::Matrix2;

use super::quadrature::{LineRule, QuadratureRule};
use super::space::{barycentric, rt0_basis, scalar_basis, FunctionSpace, SpaceKind};
use super::FemError;
use crate::mesh::{BoundaryTag, Point};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Interior-penalty weight on a face: `eta0 * a_max / h_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub eta0: f64,
    pub a_max: f64,
}

impl Penalty {
    pub fn on_face(&self, h: f64) -> f64 {
        self.eta0 * self.a_max / h
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Form<'a> {
    /// `(c u, v)`
    Mass { coefficient: f64 },
    /// `(K ∇u, ∇v)`, volume part only (no face terms for broken spaces)
    Stiffness { coefficient: Matrix2<f64> },
    /// NIP dG diffusion on interior faces:
    /// `(a∇u,∇v) + ([u],{a∇v·n}) - ([v],{a∇u·n}) + (η[u],[v])`
    DgDiffusion { coefficient: f64, penalty: Penalty },
    /// dG transport `-(u w, ∇v) + ((w·n u)↑, [v])` on interior faces with an
    /// elementwise-constant velocity `w`; face velocity is the mean of the
    /// two neighbours.
    DgAdvection { velocity: &'a [Point] },
    /// `(q, ∇·u)`
    Divergence,
    /// `λ(∇·u, ∇·v) + 2μ(ε(u), ε(v))`
    SymmetricGradient { lambda: f64, mu: f64 },
    /// Symmetric Nitsche for `u = 0` on tagged boundary faces:
    /// `-(a∇u·n, v) - (u, a∇v·n) + (γ a / h)(u, v)`
    Nitsche {
        tag: BoundaryTag,
        coefficient: f64,
        penalty: f64,
    },
}

pub fn assemble_bilinear(
    form: &Form,
    trial: &FunctionSpace,
    test: &FunctionSpace,
) -> Result<CsrMatrix, FemError> {
    let t = assemble_triplets(form, trial, test)?;
    Ok(t.build()?)
}

fn incompatible(form: &Form, trial: &FunctionSpace, test: &FunctionSpace) -> FemError {
    FemError::Incompatible(format!(
        "{:?} cannot pair trial {:?}x{} with test {:?}x{}",
        std::mem::discriminant(form),
        trial.kind(),
        trial.components(),
        test.kind(),
        test.components()
    ))
}

fn quad_degree(a: SpaceKind, b: SpaceKind, derivatives: usize) -> usize {
    let deg = |k: SpaceKind| -> usize {
        match k {
            SpaceKind::P0 => 0,
            SpaceKind::P1 | SpaceKind::DgP1 | SpaceKind::Rt0 => 1,
            SpaceKind::P1Bubble => 3,
        }
    };
    (deg(a) + deg(b)).saturating_sub(derivatives).clamp(1, 6)
}

pub fn assemble_triplets(
    form: &Form,
    trial: &FunctionSpace,
    test: &FunctionSpace,
) -> Result<TripletBuilder, FemError> {
    if !trial.same_mesh(test) {
        return Err(FemError::Incompatible(
            "spaces live on different meshes".into(),
        ));
    }
    let mesh = test.mesh();
    let mut out = TripletBuilder::new(test.n_dofs(), trial.n_dofs());
    let elements: Vec<usize> = test
        .active_elements()
        .filter(|&e| trial.is_active(e))
        .collect();
    let (ns_trial, ns_test) = (trial.n_scalar_dofs(), test.n_scalar_dofs());
    let scalar_h1 =
        |k: SpaceKind| matches!(k, SpaceKind::P1 | SpaceKind::DgP1 | SpaceKind::P1Bubble);

    match *form {
        Form::Mass { coefficient } => {
            if trial.kind() != test.kind() || trial.components() != test.components() {
                return Err(incompatible(form, trial, test));
            }
            let rule = QuadratureRule::triangle(quad_degree(trial.kind(), test.kind(), 0));
            for &e in &elements {
                let geo = mesh.geometry(e);
                let (rd, cd) = (test.local_dofs(e), trial.local_dofs(e));
                if trial.kind() == SpaceKind::Rt0 {
                    for (b, w) in rule.on_element(geo.area) {
                        let (phi, _) = rt0_basis(trial, e, &geo, geo.map(b));
                        for i in 0..3 {
                            for j in 0..3 {
                                out.add(rd[i], cd[j], coefficient * w * phi[i].dot(&phi[j]));
                            }
                        }
                    }
                    continue;
                }
                for (b, w) in rule.on_element(geo.area) {
                    let bt = scalar_basis(test.kind(), &geo, b);
                    for i in 0..bt.n {
                        for j in 0..bt.n {
                            let v = coefficient * w * bt.values[i] * bt.values[j];
                            for c in 0..test.components() {
                                out.add(c * ns_test + rd[i], c * ns_trial + cd[j], v);
                            }
                        }
                    }
                }
            }
        }
        Form::Stiffness { coefficient } => {
            if trial.kind() != test.kind()
                || !scalar_h1(test.kind())
                || trial.components() != test.components()
            {
                return Err(incompatible(form, trial, test));
            }
            let rule = QuadratureRule::triangle(quad_degree(trial.kind(), test.kind(), 2));
            for &e in &elements {
                let geo = mesh.geometry(e);
                let (rd, cd) = (test.local_dofs(e), trial.local_dofs(e));
                for (b, w) in rule.on_element(geo.area) {
                    let bs = scalar_basis(test.kind(), &geo, b);
                    for i in 0..bs.n {
                        for j in 0..bs.n {
                            let v = w * bs.gradients[i].dot(&(coefficient * bs.gradients[j]));
                            for c in 0..test.components() {
                                out.add(c * ns_test + rd[i], c * ns_trial + cd[j], v);
                            }
                        }
                    }
                }
            }
        }
        Form::DgDiffusion {
            coefficient,
            penalty,
        } => {
            if trial.kind() != SpaceKind::DgP1
                || test.kind() != SpaceKind::DgP1
                || test.components() != 1
                || trial.components() != 1
            {
                return Err(incompatible(form, trial, test));
            }
            for &e in &elements {
                let geo = mesh.geometry(e);
                let d = test.local_dofs(e);
                for i in 0..3 {
                    for j in 0..3 {
                        out.add(
                            d[i],
                            trial.local_dofs(e)[j],
                            coefficient * geo.area * geo.grad_lambda[i].dot(&geo.grad_lambda[j]),
                        );
                    }
                }
            }
            dg_faces(mesh, trial, test, |ctx| {
                let eta = penalty.on_face(ctx.measure);
                for (a, sa) in [(0usize, 1.0), (1, -1.0)] {
                    for (b, sb) in [(0usize, 1.0), (1, -1.0)] {
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = 0.0;
                                for q in 0..ctx.weights.len() {
                                    let w = ctx.weights[q];
                                    let phi_j = ctx.values[a][q][j];
                                    let phi_i = ctx.values[b][q][i];
                                    let dn_j = ctx.grads[a][j].dot(&ctx.normal);
                                    let dn_i = ctx.grads[b][i].dot(&ctx.normal);
                                    v += w
                                        * (sa * phi_j * 0.5 * coefficient * dn_i
                                            - sb * phi_i * 0.5 * coefficient * dn_j
                                            + eta * sa * sb * phi_j * phi_i);
                                }
                                out.add(ctx.dofs_test[b][i], ctx.dofs_trial[a][j], v);
                            }
                        }
                    }
                }
            });
        }
        Form::DgAdvection { velocity } => {
            if trial.kind() != SpaceKind::DgP1
                || test.kind() != SpaceKind::DgP1
                || test.components() != 1
                || trial.components() != 1
            {
                return Err(incompatible(form, trial, test));
            }
            if velocity.len() != mesh.n_elements() {
                return Err(FemError::Length {
                    expected: mesh.n_elements(),
                    got: velocity.len(),
                });
            }
            for &e in &elements {
                let geo = mesh.geometry(e);
                let (rd, cd) = (test.local_dofs(e), trial.local_dofs(e));
                // ∫ λ_j = |T|/3
                for i in 0..3 {
                    let vg = velocity[e].dot(&geo.grad_lambda[i]);
                    for j in 0..3 {
                        out.add(rd[i], cd[j], -vg * geo.area / 3.0);
                    }
                }
            }
            dg_faces(mesh, trial, test, |ctx| {
                let vf = 0.5 * (velocity[ctx.elements[0]] + velocity[ctx.elements[1]]);
                let vn = vf.dot(&ctx.normal);
                let upwind: [f64; 2] = upwind_weights(vn);
                for (a, wa) in upwind.iter().enumerate() {
                    if *wa == 0.0 {
                        continue;
                    }
                    for (b, sb) in [(0usize, 1.0), (1, -1.0)] {
                        for i in 0..3 {
                            for j in 0..3 {
                                let v: f64 = (0..ctx.weights.len())
                                    .map(|q| {
                                        ctx.weights[q]
                                            * vn
                                            * wa
                                            * ctx.values[a][q][j]
                                            * sb
                                            * ctx.values[b][q][i]
                                    })
                                    .sum();
                                out.add(ctx.dofs_test[b][i], ctx.dofs_trial[a][j], v);
                            }
                        }
                    }
                }
            });
        }
        Form::Divergence => {
            let trial_ok = trial.kind() == SpaceKind::Rt0
                || (trial.components() == 2
                    && matches!(trial.kind(), SpaceKind::P1 | SpaceKind::P1Bubble));
            let test_ok = test.components() == 1
                && matches!(test.kind(), SpaceKind::P0 | SpaceKind::P1 | SpaceKind::DgP1);
            if !trial_ok || !test_ok {
                return Err(incompatible(form, trial, test));
            }
            let rule = QuadratureRule::triangle(quad_degree(trial.kind(), test.kind(), 1).max(2));
            for &e in &elements {
                let geo = mesh.geometry(e);
                let (rd, cd) = (test.local_dofs(e), trial.local_dofs(e));
                for (b, w) in rule.on_element(geo.area) {
                    let q = scalar_basis(test.kind(), &geo, b);
                    if trial.kind() == SpaceKind::Rt0 {
                        let (_, div) = rt0_basis(trial, e, &geo, geo.map(b));
                        for i in 0..q.n {
                            for j in 0..3 {
                                out.add(rd[i], cd[j], w * q.values[i] * div[j]);
                            }
                        }
                    } else {
                        let u = scalar_basis(trial.kind(), &geo, b);
                        for i in 0..q.n {
                            for j in 0..u.n {
                                for c in 0..2 {
                                    out.add(
                                        rd[i],
                                        c * ns_trial + cd[j],
                                        w * q.values[i] * u.gradients[j][c],
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        Form::SymmetricGradient { lambda, mu } => {
            let ok = |s: &FunctionSpace| {
                s.components() == 2 && matches!(s.kind(), SpaceKind::P1 | SpaceKind::P1Bubble)
            };
            if !ok(trial) || !ok(test) || trial.kind() != test.kind() {
                return Err(incompatible(form, trial, test));
            }
            let rule = QuadratureRule::triangle(quad_degree(trial.kind(), test.kind(), 2));
            for &e in &elements {
                let geo = mesh.geometry(e);
                let (rd, cd) = (test.local_dofs(e), trial.local_dofs(e));
                for (b, w) in rule.on_element(geo.area) {
                    let bs = scalar_basis(test.kind(), &geo, b);
                    for i in 0..bs.n {
                        for ci in 0..2 {
                            for j in 0..bs.n {
                                for cj in 0..2 {
                                    let v = w * elastic_pair(
                                        lambda,
                                        mu,
                                        bs.gradients[j],
                                        cj,
                                        bs.gradients[i],
                                        ci,
                                    );
                                    if v != 0.0 {
                                        out.add(ci * ns_test + rd[i], cj * ns_trial + cd[j], v);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Form::Nitsche {
            tag,
            coefficient,
            penalty,
        } => {
            if trial.kind() != SpaceKind::P1
                || test.kind() != SpaceKind::P1
                || test.components() != 1
            {
                return Err(incompatible(form, trial, test));
            }
            let line = LineRule::gauss(2);
            for (_, face) in mesh.faces_with_tag(tag).filter(|(_, f)| f.is_boundary()) {
                let e = face.left;
                if !test.is_active(e) {
                    continue;
                }
                let geo = mesh.geometry(e);
                let d = test.local_dofs(e);
                let n = face.normal;
                let gamma = penalty * coefficient / face.measure;
                let (pa, pb) = (
                    mesh.vertices[face.vertices[0]],
                    mesh.vertices[face.vertices[1]],
                );
                for (&t, &w) in line.points.iter().zip(&line.weights) {
                    let b = barycentric(&geo, pa + t * (pb - pa));
                    let w = w * face.measure;
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = -coefficient * geo.grad_lambda[j].dot(&n) * b[i]
                                - coefficient * b[j] * geo.grad_lambda[i].dot(&n)
                                + gamma * b[i] * b[j];
                            out.add(d[i], d[j], w * v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Weights given to the left/right traces by full upwinding on `w·n`.
pub fn upwind_weights(vn: f64) -> [f64; 2] {
    if vn > 0.0 {
        [1.0, 0.0]
    } else if vn < 0.0 {
        [0.0, 1.0]
    } else {
        [0.5, 0.5]
    }
}

/// `λ div(φ_j e_cj) div(φ_i e_ci) + 2μ ε(φ_j e_cj) : ε(φ_i e_ci)`
pub fn elastic_pair(lambda: f64, mu: f64, gj: Point, cj: usize, gi: Point, ci: usize) -> f64 {
    let div = lambda * gj[cj] * gi[ci];
    // ε(φ e_c)_{ab} = (δ_{ac} ∂_b φ + δ_{bc} ∂_a φ) / 2
    let mut eps = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let ej = 0.5 * (if a == cj { gj[b] } else { 0.0 } + if b == cj { gj[a] } else { 0.0 });
            let ei = 0.5 * (if a == ci { gi[b] } else { 0.0 } + if b == ci { gi[a] } else { 0.0 });
            eps += ej * ei;
        }
    }
    div + 2.0 * mu * eps
}

/// Per-face data handed to dG face kernels. Index 0 is the left element, 1 the right.
pub struct FaceContext<'s> {
    pub elements: [usize; 2],
    pub normal: Point,
    pub measure: f64,
    pub weights: Vec<f64>,
    /// `values[side][q][j]`: local P1 basis `j` of `side` at face point `q`.
    pub values: [Vec<[f64; 3]>; 2],
    pub grads: [[Point; 3]; 2],
    pub dofs_trial: [&'s [usize]; 2],
    pub dofs_test: [&'s [usize]; 2],
}

/// Visits interior faces whose neighbours are both active in `test` and `trial`.
pub fn dg_faces<'s>(
    mesh: &crate::mesh::Mesh,
    trial: &'s FunctionSpace,
    test: &'s FunctionSpace,
    mut kernel: impl FnMut(&FaceContext<'s>),
) {
    let line = LineRule::gauss(2);
    for face in &mesh.faces {
        let Some(r) = face.right else { continue };
        let l = face.left;
        if !(test.is_active(l) && test.is_active(r) && trial.is_active(l) && trial.is_active(r)) {
            continue;
        }
        let (gl, gr) = (mesh.geometry(l), mesh.geometry(r));
        let (pa, pb) = (
            mesh.vertices[face.vertices[0]],
            mesh.vertices[face.vertices[1]],
        );
        let mut values = [Vec::with_capacity(2), Vec::with_capacity(2)];
        for &t in &line.points {
            let x = pa + t * (pb - pa);
            values[0].push(barycentric(&gl, x));
            values[1].push(barycentric(&gr, x));
        }
        let ctx = FaceContext {
            elements: [l, r],
            normal: face.normal,
            measure: face.measure,
            weights: line.weights.iter().map(|w| w * face.measure).collect(),
            values,
            grads: [gl.grad_lambda, gr.grad_lambda],
            dofs_trial: [trial.local_dofs(l), trial.local_dofs(r)],
            dofs_test: [test.local_dofs(l), test.local_dofs(r)],
        };
        kernel(&ctx);
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{interpolate_scalar, FieldVector};
    use crate::mesh::{
        build_mesh, structured_generator, uniform_refine, GeometrySpec, Mesh, Subdomain,
    };

    fn reference_triangle() -> Arc<Mesh> {
        Arc::new(
            build_mesh(
                vec![
                    Point::new(0.0, 0.0),
                    Point::new(1.0, 0.0),
                    Point::new(0.0, 1.0),
                ],
                vec![[0, 1, 2]],
                vec![Subdomain::Porous],
                |_, _| None,
            )
            .unwrap(),
        )
    }

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(uniform_refine(
            &structured_generator(n, n, &GeometrySpec::UnitSquarePorous).unwrap(),
        ))
    }

    #[test]
    fn p1_reference_mass() {
        let s = FunctionSpace::new(reference_triangle(), SpaceKind::P1);
        let m = assemble_bilinear(&Form::Mass { coefficient: 1.0 }, &s, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let mesh = square(3);
        for kind in [SpaceKind::P1, SpaceKind::DgP1, SpaceKind::P1Bubble] {
            let s = FunctionSpace::new(mesh.clone(), kind);
            let k = assemble_bilinear(
                &Form::Stiffness {
                    coefficient: Matrix2::identity(),
                },
                &s,
                &s,
            )
            .unwrap();
            let ones = vec![1.0; s.n_dofs()];
            // bubbles are not part of the partition of unity; constants live in the P1 part
            let mut c = ones.clone();
            if kind == SpaceKind::P1Bubble {
                for e in 0..mesh.n_elements() {
                    c[s.local_dofs(e)[3]] = 0.0;
                }
            }
            let r = k.matvec(&c);
            assert!(r.iter().all(|v| v.abs() < 1e-13), "{kind:?}");
        }
    }

    #[test]
    fn dg_laplacian_matches_continuous_action() {
        let mesh = square(2);
        let dg = Arc::new(FunctionSpace::new(mesh.clone(), SpaceKind::DgP1));
        let p1 = Arc::new(FunctionSpace::new(mesh.clone(), SpaceKind::P1));
        let pen = Penalty {
            eta0: 4.0,
            a_max: 1.0,
        };
        let a_dg = assemble_bilinear(
            &Form::DgDiffusion {
                coefficient: 1.0,
                penalty: pen,
            },
            &dg,
            &dg,
        )
        .unwrap();
        let a_p1 = assemble_bilinear(
            &Form::Stiffness {
                coefficient: Matrix2::identity(),
            },
            &p1,
            &p1,
        )
        .unwrap();
        let f = |p: Point| 0.3 + 2.0 * p.x - 1.5 * p.y;
        let u_dg = interpolate_scalar(&dg, f);
        let u_p1 = interpolate_scalar(&p1, f);
        let r_dg = a_dg.matvec(&u_dg.values);
        let r_p1 = a_p1.matvec(&u_p1.values);
        let mut gathered = vec![0.0; p1.n_dofs()];
        for e in 0..mesh.n_elements() {
            for i in 0..3 {
                let v = p1.vertex_dof(mesh.elements[e][i]).unwrap();
                gathered[v] += r_dg[dg.local_dofs(e)[i]];
            }
        }
        for (a, b) in gathered.iter().zip(&r_p1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_fields_have_no_face_contribution() {
        let mesh = square(2);
        let dg = FunctionSpace::new(mesh.clone(), SpaceKind::DgP1);
        let pen = Penalty {
            eta0: 4.0,
            a_max: 1.0,
        };
        let a = assemble_bilinear(
            &Form::DgDiffusion {
                coefficient: 0.7,
                penalty: pen,
            },
            &dg,
            &dg,
        )
        .unwrap();
        let ones = vec![1.0; dg.n_dofs()];
        assert!(a.matvec(&ones).iter().all(|v| v.abs() < 1e-13));
        let vel: Vec<Point> = (0..mesh.n_elements())
            .map(|e| Point::new(1.0, -0.5 + e as f64 * 0.01))
            .collect();
        let adv = assemble_bilinear(&Form::DgAdvection { velocity: &vel }, &dg, &dg).unwrap();
        // summing all test functions gives the discrete net boundary outflow, which is zero
        // because boundary faces carry no flux
        let total: f64 = adv.matvec(&ones).iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn rt0_divergence_pattern() {
        let mesh = square(2);
        let rt = FunctionSpace::new(mesh.clone(), SpaceKind::Rt0);
        let p0 = FunctionSpace::new(mesh.clone(), SpaceKind::P0);
        let b = assemble_bilinear(&Form::Divergence, &rt, &p0).unwrap();
        for e in 0..mesh.n_elements() {
            for i in 0..3 {
                let f = mesh.element_faces[e][i];
                let face = &mesh.faces[f];
                // ∫_T div φ_F = ±1, i.e. ±|F|/|T| per unit normal flux density
                let v = b.get(p0.local_dofs(e)[0], rt.face_dof(f).unwrap());
                assert!((v - face.orientation_for(e)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn divergence_of_position_field() {
        let mesh = square(2);
        let rt = Arc::new(FunctionSpace::new(mesh.clone(), SpaceKind::Rt0));
        let p0 = FunctionSpace::new(mesh.clone(), SpaceKind::P0);
        let u = crate::fem::interpolate(&rt, |p| vec![p.x, p.y]);
        let b = assemble_bilinear(&Form::Divergence, &rt, &p0).unwrap();
        let div = b.matvec(&u.values);
        for e in 0..mesh.n_elements() {
            assert!((div[e] / mesh.geometry(e).area - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn incompatible_spaces_rejected() {
        let mesh = square(1);
        let p1 = FunctionSpace::new(mesh.clone(), SpaceKind::P1);
        let dg = FunctionSpace::new(mesh.clone(), SpaceKind::DgP1);
        let pen = Penalty {
            eta0: 1.0,
            a_max: 1.0,
        };
        assert!(matches!(
            assemble_bilinear(
                &Form::DgDiffusion {
                    coefficient: 1.0,
                    penalty: pen
                },
                &p1,
                &p1
            ),
            Err(FemError::Incompatible(_))
        ));
        assert!(assemble_bilinear(&Form::Mass { coefficient: 1.0 }, &p1, &dg).is_err());
    }

    #[test]
    fn elasticity_kills_rigid_motions() {
        let mesh = square(2);
        let v = Arc::new(FunctionSpace::vector(mesh.clone(), SpaceKind::P1));
        let k = assemble_bilinear(
            &Form::SymmetricGradient {
                lambda: 2.0,
                mu: 1.0,
            },
            &v,
            &v,
        )
        .unwrap();
        for field in [
            crate::fem::interpolate(&v, |_| vec![1.0, 0.0]),
            crate::fem::interpolate(&v, |p| vec![-p.y, p.x]),
        ] {
            let r = k.matvec(&field.values);
            assert!(r.iter().all(|x| x.abs() < 1e-12));
        }
        let _ = FieldVector::zeros(v);
    }
}
