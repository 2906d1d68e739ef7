//! Manufactured solutions for the cell model. Every field has the form
//! `e^{−λt} (A + B cos(mπx) cos(nπy))` on the unit square, so normal
//! derivatives vanish on the boundary and the zero-flux conditions hold.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConvergenceError, ConvergenceReport};
use crate::cells::{BiologyParams, CellError, CellProblem, CellState, NewtonConfig, RateField};
use crate::fem::QuadratureRule;
use crate::mesh::{structured_generator, GeometrySpec, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub n: f64,
    pub decay: f64,
}

impl Mode {
    fn envelope(&self, t: f64) -> f64 {
        (-self.decay * t).exp()
    }

    pub fn value(&self, t: f64, x: Point) -> f64 {
        self.envelope(t) * (self.a + self.b * (self.m * PI * x.x).cos() * (self.n * PI * x.y).cos())
    }

    pub fn time_derivative(&self, t: f64, x: Point) -> f64 {
        -self.decay * self.value(t, x)
    }

    pub fn gradient(&self, t: f64, x: Point) -> Point {
        let (mx, ny) = (self.m * PI * x.x, self.n * PI * x.y);
        self.envelope(t)
            * self.b
            * Point::new(
                -self.m * PI * mx.sin() * ny.cos(),
                -self.n * PI * mx.cos() * ny.sin(),
            )
    }

    pub fn laplacian(&self, t: f64, x: Point) -> f64 {
        let (mx, ny) = (self.m * PI * x.x, self.n * PI * x.y);
        -self.envelope(t)
            * self.b
            * (self.m * self.m + self.n * self.n)
            * PI
            * PI
            * mx.cos()
            * ny.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    pub c1: Mode,
    pub c2: Mode,
    pub h: Mode,
    pub k: Mode,
}

impl Default for Manufactured {
    fn default() -> Self {
        let mode = |a, b, m, n, decay| Mode { a, b, m, n, decay };
        Manufactured {
            c1: mode(0.4, 0.2, 1.0, 1.0, 1.0),
            c2: mode(0.2, 0.1, 1.0, 2.0, 0.5),
            h: mode(1.0, 0.5, 2.0, 1.0, 1.0),
            k: mode(0.1, 0.05, 1.0, 1.0, 0.5),
        }
    }
}

impl Manufactured {
    pub fn exact(&self, t: f64, x: Point) -> [f64; 4] {
        [
            self.c1.value(t, x),
            self.c2.value(t, x),
            self.h.value(t, x),
            self.k.value(t, x),
        ]
    }

    /// Right-hand sides making [`exact`](Self::exact) solve the model with
    /// constant rates.
    pub fn source(
        &self,
        p: &BiologyParams,
        alpha1: f64,
        alpha2: f64,
        t: f64,
        x: Point,
    ) -> [f64; 4] {
        let [c1, c2, h, k] = self.exact(t, x);
        let v = p.b1 * self.h.gradient(t, x) + p.b2 * self.k.gradient(t, x);
        let div_v = p.b1 * self.h.laplacian(t, x) + p.b2 * self.k.laplacian(t, x);
        let transfer = alpha1 * c1 - alpha2 * c2;
        [
            self.c1.time_derivative(t, x) - p.a1 * self.c1.laplacian(t, x)
                + self.c1.gradient(t, x).dot(&v)
                + c1 * div_v
                + transfer
                - p.beta * c1 * (1.0 - c1 - c2 - k),
            self.c2.time_derivative(t, x) - self.c2.laplacian(t, x) - transfer,
            self.h.time_derivative(t, x) + p.gamma1 * h * c2 - c2 / (1.0 + c2),
            self.k.time_derivative(t, x) + p.delta1 * k * c1 - c2,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsSetup {
    pub params: BiologyParams,
    pub alpha1: f64,
    pub alpha2: f64,
    pub solution: Manufactured,
    pub t_end: f64,
    /// cells per side on the coarsest level
    pub base_n: usize,
    /// time steps on the coarsest level; ×4 per level so that dt ∝ h²
    pub base_steps: usize,
}

impl Default for MmsSetup {
    fn default() -> Self {
        MmsSetup {
            params: BiologyParams::default(),
            alpha1: 0.05,
            alpha2: 0.05,
            solution: Manufactured::default(),
            t_end: 0.1,
            base_n: 8,
            base_steps: 4,
        }
    }
}

impl MmsSetup {
    /// Diffusion only: no taxis, proliferation or differentiation.
    pub fn diffusion() -> Self {
        MmsSetup {
            params: BiologyParams {
                b1: 0.0,
                b2: 0.0,
                beta: 0.0,
                ..Default::default()
            },
            alpha1: 0.0,
            alpha2: 0.0,
            ..Default::default()
        }
    }

    /// All terms active, with taxis coefficients large enough to matter.
    pub fn full_with_taxis() -> Self {
        MmsSetup {
            params: BiologyParams {
                b1: 0.1,
                b2: 0.05,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsLevel {
    pub n: usize,
    pub steps: usize,
    /// L² errors of c1, c2, h, k at `t_end`
    pub errors: [f64; 4],
}

pub fn run_level(setup: &MmsSetup, n: usize, steps: usize) -> Result<MmsLevel, CellError> {
    let mesh = Arc::new(
        structured_generator(n, n, &GeometrySpec::UnitSquarePorous)
            .map_err(|e| CellError::Observer(format!("mesh generation failed: {e}")))?,
    );
    let sol = setup.solution;
    let (params, a1, a2) = (setup.params, setup.alpha1, setup.alpha2);
    let problem = CellProblem::new(mesh.clone(), params, NewtonConfig::default())?
        .with_source(Arc::new(move |t, x| sol.source(&params, a1, a2, t, x)));
    let rates = RateField::constant(mesh.n_elements(), a1, a2);
    let dt = setup.t_end / steps as f64;
    let mut state = problem.interpolate_state(|x| sol.exact(0.0, x), 0.0);
    for _ in 0..steps {
        state = problem.step(&state, &rates, dt)?.0;
    }
    Ok(MmsLevel {
        n,
        steps,
        errors: l2_errors(&problem, &state, &sol),
    })
}

fn l2_errors(problem: &CellProblem, s: &CellState, sol: &Manufactured) -> [f64; 4] {
    let mesh = problem.mesh();
    let (dg, p1) = (problem.dg_space(), problem.p1_space());
    let rule = QuadratureRule::triangle(6);
    let mut e2 = [0.0; 4];
    for e in dg.active_elements() {
        let geo = mesh.geometry(e);
        let (dd, pd) = (dg.local_dofs(e), p1.local_dofs(e));
        for (b, w) in rule.on_element(geo.area) {
            let exact = sol.exact(s.t, geo.map(b));
            let at = |f: &[f64], d: &[usize]| b[0] * f[d[0]] + b[1] * f[d[1]] + b[2] * f[d[2]];
            let num = [at(&s.c1, dd), at(&s.c2, dd), at(&s.h, pd), at(&s.k, pd)];
            for i in 0..4 {
                e2[i] += w * (num[i] - exact[i]).powi(2);
            }
        }
    }
    e2.map(f64::sqrt)
}

/// Refinement study with `levels ≥ 3`; `thresholds` are the required c1/c2 orders.
pub fn mms_cells(
    setup: &MmsSetup,
    levels: usize,
    threshold: f64,
) -> Result<ConvergenceReport, MmsError> {
    if levels < 3 {
        return Err(ConvergenceError::TooFewLevels(levels).into());
    }
    let runs: Vec<MmsLevel> = (0..levels)
        .into_par_iter()
        .map(|i| run_level(setup, setup.base_n << i, setup.base_steps << (2 * i)))
        .collect::<Result<_, _>>()?;
    let h = runs.iter().map(|r| 1.0 / r.n as f64).collect();
    let col = |i: usize| runs.iter().map(|r| r.errors[i]).collect::<Vec<_>>();
    Ok(ConvergenceReport::new(
        h,
        vec![
            ("c1".into(), col(0), Some(threshold)),
            ("c2".into(), col(1), Some(threshold)),
            ("h".into(), col(2), None),
            ("k".into(), col(3), None),
        ],
    )?)
}

#[derive(Debug, thiserror::Error)]
pub enum MmsError {
    #[error(transparent)]
    Cells(#[from] CellError),
    #[error(transparent)]
    Convergence(#[from] ConvergenceError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_derivatives_match_finite_differences() {
        let m = Manufactured::default().h;
        let (t, x) = (0.3, Point::new(0.31, 0.77));
        let eps = 1e-5;
        let ex = Point::new(eps, 0.0);
        let ey = Point::new(0.0, eps);
        let g = m.gradient(t, x);
        assert!(((m.value(t, x + ex) - m.value(t, x - ex)) / (2.0 * eps) - g.x).abs() < 1e-8);
        assert!(((m.value(t, x + ey) - m.value(t, x - ey)) / (2.0 * eps) - g.y).abs() < 1e-8);
        let lap =
            (m.value(t, x + ex) + m.value(t, x - ex) + m.value(t, x + ey) + m.value(t, x - ey)
                - 4.0 * m.value(t, x))
                / (eps * eps);
        assert!((lap - m.laplacian(t, x)).abs() < 1e-4);
        assert!(
            ((m.value(t + eps, x) - m.value(t - eps, x)) / (2.0 * eps) - m.time_derivative(t, x))
                .abs()
                < 1e-8
        );
    }

    #[test]
    fn zero_solution_needs_no_source() {
        let zero = Mode {
            a: 0.0,
            b: 0.0,
            m: 1.0,
            n: 1.0,
            decay: 1.0,
        };
        let sol = Manufactured {
            c1: zero,
            c2: zero,
            h: zero,
            k: zero,
        };
        let f = sol.source(
            &BiologyParams::default(),
            0.05,
            0.05,
            0.2,
            Point::new(0.3, 0.4),
        );
        assert_eq!(f, [0.0; 4]);
        let setup = MmsSetup {
            solution: sol,
            ..Default::default()
        };
        let lvl = run_level(&setup, 4, 2).unwrap();
        assert_eq!(lvl.errors, [0.0; 4]);
    }

    #[test]
    fn coarse_errors_decrease() {
        let setup = MmsSetup::diffusion();
        let a = run_level(&setup, 4, 1).unwrap();
        let b = run_level(&setup, 8, 4).unwrap();
        assert!(b.errors[0] < a.errors[0] / 2.5);
    }
}
