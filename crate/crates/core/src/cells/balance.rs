//! Per-element flux balance of the cell equations, recomputed from explicit
//! face fluxes rather than from the assembled residual.

use super::{CellProblem, CellState, RateField};
use crate::fem::QuadratureRule;

#[derive(Debug, Clone, PartialEq)]
pub struct ElementBalance {
    /// storage + reactions + net outflow for c1, per mesh element
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl ElementBalance {
    pub fn max_abs(&self) -> f64 {
        self.c1
            .iter()
            .chain(&self.c2)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// For each element T:
/// `|T| Δc̄/dt + ∫_T reaction + Σ_F ±(−{a∇c·n} + η[c] + (v·n c)↑)|F| = 0`
/// once a step has converged. Fields are affine on each face, so midpoint
/// values integrate the face terms exactly.
pub fn element_balance(
    problem: &CellProblem,
    new: &CellState,
    old: &CellState,
    rates: &RateField,
    dt: f64,
) -> ElementBalance {
    let mesh = problem.mesh();
    let dg = problem.dg_space();
    let p1 = problem.p1_space();
    let params = problem.params();
    let n = mesh.n_elements();
    let mut c1 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    let rule = QuadratureRule::triangle(5);

    let trace = |field: &[f64], e: usize, x: crate::mesh::Point| -> f64 {
        let geo = mesh.geometry(e);
        let b = crate::fem::barycentric(&geo, x);
        let d = dg.local_dofs(e);
        b[0] * field[d[0]] + b[1] * field[d[1]] + b[2] * field[d[2]]
    };
    let grad = |field: &[f64], e: usize| -> crate::mesh::Point {
        let g = mesh.geometry(e).grad_lambda;
        let d = dg.local_dofs(e);
        g[0] * field[d[0]] + g[1] * field[d[1]] + g[2] * field[d[2]]
    };
    let velocity = |e: usize| -> crate::mesh::Point {
        let g = mesh.geometry(e).grad_lambda;
        let d = p1.local_dofs(e);
        (0..3)
            .map(|j| g[j] * (params.b1 * new.h[d[j]] + params.b2 * new.k[d[j]]))
            .sum()
    };

    for e in dg.active_elements() {
        let geo = mesh.geometry(e);
        let d = dg.local_dofs(e);
        let mean = |f: &[f64]| (f[d[0]] + f[d[1]] + f[d[2]]) / 3.0;
        c1[e] += geo.area * (mean(&new.c1) - mean(&old.c1)) / dt;
        c2[e] += geo.area * (mean(&new.c2) - mean(&old.c2)) / dt;
        let pd = p1.local_dofs(e);
        for (b, w) in rule.on_element(geo.area) {
            let x = geo.map(b);
            let u1 = trace(&new.c1, e, x);
            let u2 = trace(&new.c2, e, x);
            let k = b[0] * new.k[pd[0]] + b[1] * new.k[pd[1]] + b[2] * new.k[pd[2]];
            let transfer = rates.alpha1[e] * u1 - rates.alpha2[e] * u2;
            c1[e] += w * (transfer - params.beta * u1 * (1.0 - u1 - u2 - k));
            c2[e] -= w * transfer;
        }
    }

    let a_max = params.a_max();
    for face in &mesh.faces {
        let Some(r) = face.right else { continue };
        let l = face.left;
        if !(dg.is_active(l) && dg.is_active(r)) {
            continue;
        }
        let x = face.midpoint(mesh);
        let nrm = face.normal;
        let eta = params.eta0 * a_max / face.measure;
        let vn = (0.5 * (velocity(l) + velocity(r))).dot(&nrm);
        for (field, coef, out, advect) in [
            (&new.c1, params.a1, &mut c1, true),
            (&new.c2, 1.0, &mut c2, false),
        ] {
            let (ul, ur) = (trace(field, l, x), trace(field, r, x));
            let avg_flux = 0.5 * coef * (grad(field, l) + grad(field, r)).dot(&nrm);
            let mut flux = -avg_flux + eta * (ul - ur);
            if advect {
                let up = if vn > 0.0 {
                    ul
                } else if vn < 0.0 {
                    ur
                } else {
                    0.5 * (ul + ur)
                };
                flux += vn * up;
            }
            out[l] += flux * face.measure;
            out[r] -= flux * face.measure;
        }
    }
    ElementBalance { c1, c2 }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::cells::{BiologyParams, NewtonConfig};
    use crate::mesh::{structured_generator, GeometrySpec};

    #[test]
    fn converged_step_balances_every_element() {
        let mesh = Arc::new(structured_generator(5, 5, &GeometrySpec::UnitSquarePorous).unwrap());
        let params = BiologyParams {
            b1: 0.2,
            b2: 0.1,
            ..Default::default()
        };
        let p = CellProblem::new(mesh.clone(), params, NewtonConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut old = p.uniform_state([0.0; 4]);
        for v in old
            .c1
            .iter_mut()
            .chain(old.c2.iter_mut())
            .chain(old.h.iter_mut())
            .chain(old.k.iter_mut())
        {
            *v = rng.gen_range(0.0..0.5);
        }
        let rates = RateField {
            alpha1: (0..mesh.n_elements())
                .map(|_| rng.gen_range(0.05..0.1))
                .collect(),
            alpha2: (0..mesh.n_elements())
                .map(|_| rng.gen_range(0.05..0.1))
                .collect(),
        };
        let (new, _) = p.step(&old, &rates, 0.1).unwrap();
        let bal = element_balance(&p, &new, &old, &rates, 0.1);
        assert!(bal.max_abs() < 1e-10, "{}", bal.max_abs());
    }
}
