use std::sync::Arc;

use super::{BiologyParams, CellError, CellState, NewtonConfig, RateField, StepRecord};
use crate::fem::{
    assemble_bilinear, dg_faces, interpolate_scalar, upwind_weights, Form, FunctionSpace, Penalty,
    QuadratureRule, SpaceKind,
};
use crate::mesh::{Mesh, Point, Subdomain};
use crate::sparse::{norm2, solve, CsrMatrix, TripletBuilder};

/// Manufactured source `(t, x) -> [f1, f2, fh, fk]` added to the right-hand
/// sides of the four equations.
pub type SourceFn = Arc<dyn Fn(f64, Point) -> [f64; 4] + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Spaces and the state-independent operators of the cell system.
/// Unknowns are ordered `[c1, c2, h, k]`.
pub struct CellProblem {
    mesh: Arc<Mesh>,
    dg: Arc<FunctionSpace>,
    p1: Arc<FunctionSpace>,
    params: BiologyParams,
    newton: NewtonConfig,
    mass: CsrMatrix,
    diff1: CsrMatrix,
    diff2: CsrMatrix,
    /// `∫ φ_i ψ_d` with φ continuous P1 (rows) and ψ broken P1 (columns)
    proj: CsrMatrix,
    lumped: Vec<f64>,
    rule: QuadratureRule,
    source: Option<SourceFn>,
}

impl std::fmt::Debug for CellProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CellProblem")
            .field("dg_dofs", &self.dg.n_dofs())
            .field("p1_dofs", &self.p1.n_dofs())
            .field("params", &self.params)
            .finish()
    }
}

fn add_csr(out: &mut TripletBuilder, r0: usize, c0: usize, m: &CsrMatrix, scale: f64) {
    for i in 0..m.nrows() {
        for (j, v) in m.row(i) {
            out.add(r0 + i, c0 + j, scale * v);
        }
    }
}

impl CellProblem {
    pub fn new(
        mesh: Arc<Mesh>,
        params: BiologyParams,
        newton: NewtonConfig,
    ) -> Result<Self, CellError> {
        params.validate()?;
        newton.validate()?;
        let dg = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::DgP1,
            1,
            Subdomain::Porous,
        ));
        let p1 = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::P1,
            1,
            Subdomain::Porous,
        ));
        if dg.n_dofs() == 0 {
            return Err(CellError::EmptyRegion);
        }
        let mass = assemble_bilinear(&Form::Mass { coefficient: 1.0 }, &dg, &dg)?;
        let penalty = Penalty {
            eta0: params.eta0,
            a_max: params.a_max(),
        };
        let diff1 = assemble_bilinear(
            &Form::DgDiffusion {
                coefficient: params.a1,
                penalty,
            },
            &dg,
            &dg,
        )?;
        let diff2 = assemble_bilinear(
            &Form::DgDiffusion {
                coefficient: 1.0,
                penalty,
            },
            &dg,
            &dg,
        )?;
        let mut proj = TripletBuilder::new(p1.n_dofs(), dg.n_dofs());
        let mut lumped = vec![0.0; p1.n_dofs()];
        for e in dg.active_elements() {
            let area = mesh.geometry(e).area;
            let (pd, dd) = (p1.local_dofs(e), dg.local_dofs(e));
            for i in 0..3 {
                lumped[pd[i]] += area / 3.0;
                for j in 0..3 {
                    let m = if i == j { area / 6.0 } else { area / 12.0 };
                    proj.add(pd[i], dd[j], m);
                }
            }
        }
        Ok(CellProblem {
            mesh,
            dg,
            p1,
            params,
            newton,
            mass,
            diff1,
            diff2,
            proj: proj.build()?,
            lumped,
            rule: QuadratureRule::triangle(4),
            source: None,
        })
    }

    pub fn with_source(mut self, source: SourceFn) -> Self {
        self.source = Some(source);
        self
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dg_space(&self) -> &Arc<FunctionSpace> {
        &self.dg
    }

    pub fn p1_space(&self) -> &Arc<FunctionSpace> {
        &self.p1
    }

    pub fn params(&self) -> &BiologyParams {
        &self.params
    }

    pub fn newton_config(&self) -> &NewtonConfig {
        &self.newton
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.dg.n_dofs() + 2 * self.p1.n_dofs()
    }

    fn offsets(&self) -> [usize; 4] {
        let (nd, np) = (self.dg.n_dofs(), self.p1.n_dofs());
        [0, nd, 2 * nd, 2 * nd + np]
    }

    /// Nodal interpolation of `f(x) = [c1, c2, h, k]`.
    pub fn interpolate_state(&self, f: impl Fn(Point) -> [f64; 4], t: f64) -> CellState {
        let comp = |i: usize, s: &Arc<FunctionSpace>| interpolate_scalar(s, |x| f(x)[i]).values;
        CellState {
            c1: comp(0, &self.dg),
            c2: comp(1, &self.dg),
            h: comp(2, &self.p1),
            k: comp(3, &self.p1),
            t,
        }
    }

    pub fn uniform_state(&self, v: [f64; 4]) -> CellState {
        let (nd, np) = (self.dg.n_dofs(), self.p1.n_dofs());
        CellState {
            c1: vec![v[0]; nd],
            c2: vec![v[1]; nd],
            h: vec![v[2]; np],
            k: vec![v[3]; np],
            t: 0.0,
        }
    }

    pub fn check_state(&self, s: &CellState) -> Result<(), CellError> {
        let (nd, np) = (self.dg.n_dofs(), self.p1.n_dofs());
        for (what, len, expected) in [
            ("c1", s.c1.len(), nd),
            ("c2", s.c2.len(), nd),
            ("h", s.h.len(), np),
            ("k", s.k.len(), np),
        ] {
            if len != expected {
                return Err(CellError::Dimension {
                    what,
                    expected,
                    got: len,
                });
            }
        }
        Ok(())
    }

    fn check_rates(&self, r: &RateField) -> Result<(), CellError> {
        let n = self.mesh.n_elements();
        for (what, len) in [("alpha1", r.alpha1.len()), ("alpha2", r.alpha2.len())] {
            if len != n {
                return Err(CellError::Dimension {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// Lumped L² projection of a broken field onto continuous P1 nodes.
    pub fn nodal_projection(&self, c: &[f64]) -> Vec<f64> {
        let mut out = self.proj.matvec(c);
        for (o, m) in out.iter_mut().zip(&self.lumped) {
            *o /= m;
        }
        out
    }

    /// `v = b1 ∇h + b2 ∇k` per element (zero outside the porous region).
    pub fn taxis_velocity(&self, h: &[f64], k: &[f64]) -> Vec<Point> {
        let mut v = vec![Point::zeros(); self.mesh.n_elements()];
        for e in self.p1.active_elements() {
            let g = self.mesh.geometry(e).grad_lambda;
            let d = self.p1.local_dofs(e);
            for j in 0..3 {
                v[e] += g[j] * (self.params.b1 * h[d[j]] + self.params.b2 * k[d[j]]);
            }
        }
        v
    }

    /// Implicit Euler residual of all four blocks at `new`.
    pub fn residual(
        &self,
        new: &CellState,
        old: &CellState,
        rates: &RateField,
        dt: f64,
    ) -> Result<Vec<f64>, CellError> {
        self.check_state(new)?;
        self.check_state(old)?;
        self.check_rates(rates)?;
        let p = &self.params;
        let [o1, o2, oh, ok] = self.offsets();
        let mut r = vec![0.0; self.n_dofs()];

        let v = self.taxis_velocity(&new.h, &new.k);
        let adv = assemble_bilinear(&Form::DgAdvection { velocity: &v }, &self.dg, &self.dg)?;
        let dc1: Vec<f64> = new
            .c1
            .iter()
            .zip(&old.c1)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let dc2: Vec<f64> = new
            .c2
            .iter()
            .zip(&old.c2)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        let terms1 = [
            self.mass.matvec(&dc1),
            self.diff1.matvec(&new.c1),
            adv.matvec(&new.c1),
        ];
        let terms2 = [self.mass.matvec(&dc2), self.diff2.matvec(&new.c2)];
        for i in 0..self.dg.n_dofs() {
            r[o1 + i] = terms1[0][i] + terms1[1][i] + terms1[2][i];
            r[o2 + i] = terms2[0][i] + terms2[1][i];
        }

        for e in self.dg.active_elements() {
            let area = self.mesh.geometry(e).area;
            let (dd, pd) = (self.dg.local_dofs(e), self.p1.local_dofs(e));
            let (a1, a2) = (rates.alpha1[e], rates.alpha2[e]);
            for (b, w) in self.rule.on_element(area) {
                let at = |f: &[f64], d: &[usize]| b[0] * f[d[0]] + b[1] * f[d[1]] + b[2] * f[d[2]];
                let (c1, c2, k) = (at(&new.c1, dd), at(&new.c2, dd), at(&new.k, pd));
                let transfer = a1 * c1 - a2 * c2;
                let growth = p.beta * c1 * (1.0 - c1 - c2 - k);
                for i in 0..3 {
                    r[o1 + dd[i]] += w * (transfer - growth) * b[i];
                    r[o2 + dd[i]] -= w * transfer * b[i];
                }
            }
        }

        let cn1 = self.nodal_projection(&new.c1);
        let cn2 = self.nodal_projection(&new.c2);
        for i in 0..self.p1.n_dofs() {
            let m = self.lumped[i];
            let (h, k) = (new.h[i], new.k[i]);
            r[oh + i] = m * ((h - old.h[i]) / dt + p.gamma1 * h * cn2[i] - cn2[i] / (1.0 + cn2[i]));
            r[ok + i] = m * ((k - old.k[i]) / dt + p.delta1 * k * cn1[i] - cn2[i]);
        }

        if let Some(src) = &self.source {
            let rule = QuadratureRule::triangle(6);
            for e in self.dg.active_elements() {
                let geo = self.mesh.geometry(e);
                let dd = self.dg.local_dofs(e);
                for (b, w) in rule.on_element(geo.area) {
                    let f = src(new.t, geo.map(b));
                    for i in 0..3 {
                        r[o1 + dd[i]] -= w * f[0] * b[i];
                        r[o2 + dd[i]] -= w * f[1] * b[i];
                    }
                }
            }
            for (vtx, x) in self.mesh.vertices.iter().enumerate() {
                if let Some(i) = self.p1.vertex_dof(vtx) {
                    let f = src(new.t, *x);
                    r[oh + i] -= self.lumped[i] * f[2];
                    r[ok + i] -= self.lumped[i] * f[3];
                }
            }
        }
        Ok(r)
    }

    /// Analytic Jacobian of [`residual`](Self::residual) with respect to `new`.
    /// The upwind side of each face is frozen at its current choice.
    pub fn jacobian(
        &self,
        new: &CellState,
        rates: &RateField,
        dt: f64,
    ) -> Result<CsrMatrix, CellError> {
        self.check_state(new)?;
        self.check_rates(rates)?;
        let p = &self.params;
        let [o1, o2, oh, ok] = self.offsets();
        let n = self.n_dofs();
        let mut jac = TripletBuilder::with_capacity(n, n, 40 * n);

        let v = self.taxis_velocity(&new.h, &new.k);
        let adv = assemble_bilinear(&Form::DgAdvection { velocity: &v }, &self.dg, &self.dg)?;
        add_csr(&mut jac, o1, o1, &self.mass, 1.0 / dt);
        add_csr(&mut jac, o1, o1, &self.diff1, 1.0);
        add_csr(&mut jac, o1, o1, &adv, 1.0);
        add_csr(&mut jac, o2, o2, &self.mass, 1.0 / dt);
        add_csr(&mut jac, o2, o2, &self.diff2, 1.0);

        // taxis: ∂/∂h and ∂/∂k of -(c1 v, ∇ν) + ((v·n c1)↑, [ν])
        for e in self.dg.active_elements() {
            let geo = self.mesh.geometry(e);
            let (dd, pd) = (self.dg.local_dofs(e), self.p1.local_dofs(e));
            let mean = (new.c1[dd[0]] + new.c1[dd[1]] + new.c1[dd[2]]) * geo.area / 3.0;
            for i in 0..3 {
                for j in 0..3 {
                    let g = geo.grad_lambda[j].dot(&geo.grad_lambda[i]) * mean;
                    jac.add(o1 + dd[i], oh + pd[j], -p.b1 * g);
                    jac.add(o1 + dd[i], ok + pd[j], -p.b2 * g);
                }
            }
        }
        dg_faces(&self.mesh, &self.dg, &self.dg, |ctx| {
            let vf = 0.5 * (v[ctx.elements[0]] + v[ctx.elements[1]]);
            let up = upwind_weights(vf.dot(&ctx.normal));
            let nq = ctx.weights.len();
            let c_up: Vec<f64> = (0..nq)
                .map(|q| {
                    (0..2)
                        .map(|a| {
                            up[a]
                                * (0..3)
                                    .map(|j| new.c1[ctx.dofs_trial[a][j]] * ctx.values[a][q][j])
                                    .sum::<f64>()
                        })
                        .sum()
                })
                .collect();
            for s in 0..2 {
                let pd = self.p1.local_dofs(ctx.elements[s]);
                for j in 0..3 {
                    let dvn = 0.5 * ctx.grads[s][j].dot(&ctx.normal);
                    for (b, sb) in [(0usize, 1.0), (1, -1.0)] {
                        for i in 0..3 {
                            let flux: f64 = (0..nq)
                                .map(|q| ctx.weights[q] * c_up[q] * ctx.values[b][q][i])
                                .sum();
                            let val = sb * dvn * flux;
                            jac.add(o1 + ctx.dofs_test[b][i], oh + pd[j], p.b1 * val);
                            jac.add(o1 + ctx.dofs_test[b][i], ok + pd[j], p.b2 * val);
                        }
                    }
                }
            }
        });

        for e in self.dg.active_elements() {
            let area = self.mesh.geometry(e).area;
            let (dd, pd) = (self.dg.local_dofs(e), self.p1.local_dofs(e));
            let (a1, a2) = (rates.alpha1[e], rates.alpha2[e]);
            for (b, w) in self.rule.on_element(area) {
                let at = |f: &[f64], d: &[usize]| b[0] * f[d[0]] + b[1] * f[d[1]] + b[2] * f[d[2]];
                let (c1, c2, k) = (at(&new.c1, dd), at(&new.c2, dd), at(&new.k, pd));
                let d11 = a1 - p.beta + 2.0 * p.beta * c1 + p.beta * c2 + p.beta * k;
                let d12 = -a2 + p.beta * c1;
                let d1k = p.beta * c1;
                for i in 0..3 {
                    for j in 0..3 {
                        let phi = w * b[i] * b[j];
                        jac.add(o1 + dd[i], o1 + dd[j], d11 * phi);
                        jac.add(o1 + dd[i], o2 + dd[j], d12 * phi);
                        jac.add(o1 + dd[i], ok + pd[j], d1k * phi);
                        jac.add(o2 + dd[i], o1 + dd[j], -a1 * phi);
                        jac.add(o2 + dd[i], o2 + dd[j], a2 * phi);
                    }
                }
            }
        }

        let cn1 = self.nodal_projection(&new.c1);
        let cn2 = self.nodal_projection(&new.c2);
        for i in 0..self.p1.n_dofs() {
            let m = self.lumped[i];
            let (h, k) = (new.h[i], new.k[i]);
            jac.add(oh + i, oh + i, m * (1.0 / dt + p.gamma1 * cn2[i]));
            jac.add(ok + i, ok + i, m * (1.0 / dt + p.delta1 * cn1[i]));
            let dh_dc2 = p.gamma1 * h - 1.0 / ((1.0 + cn2[i]) * (1.0 + cn2[i]));
            for (d, pv) in self.proj.row(i) {
                jac.add(oh + i, o2 + d, dh_dc2 * pv);
                jac.add(ok + i, o1 + d, p.delta1 * k * pv);
                jac.add(ok + i, o2 + d, -pv);
            }
        }
        Ok(jac.build()?)
    }

    /// One implicit Euler step solved by Newton, starting from `old`.
    pub fn step(
        &self,
        old: &CellState,
        rates: &RateField,
        dt: f64,
    ) -> Result<(CellState, NewtonReport), CellError> {
        crate::validate::positive("dt", dt)?;
        let t = old.t + dt;
        let (nd, np) = (self.dg.n_dofs(), self.p1.n_dofs());
        let mut cur = CellState { t, ..old.clone() };
        let mut history = Vec::new();
        let mut threshold = 0.0;
        for it in 0..=self.newton.max_iterations {
            let r = self.residual(&cur, old, rates, dt)?;
            let norm = norm2(&r);
            if it == 0 {
                threshold = self.newton.tolerance * norm.max(1.0);
            }
            history.push(norm);
            if !norm.is_finite() {
                break;
            }
            if norm <= threshold {
                return Ok((
                    cur,
                    NewtonReport {
                        iterations: it,
                        history,
                    },
                ));
            }
            if it == self.newton.max_iterations {
                break;
            }
            let jac = self.jacobian(&cur, rates, dt)?;
            let (dx, _) = solve(&jac, &r, &self.newton.linear)?;
            let mut x = cur.pack();
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi -= d;
            }
            cur = CellState::unpack(&x, nd, np, t);
        }
        Err(CellError::NonConvergence {
            iterations: history.len().saturating_sub(1),
            history,
        })
    }

    /// `[∫c1, ∫c2, ∫h, ∫k]` over the porous region.
    pub fn integrals(&self, s: &CellState) -> [f64; 4] {
        let mut out = [0.0; 4];
        for e in self.dg.active_elements() {
            let area = self.mesh.geometry(e).area;
            let d = self.dg.local_dofs(e);
            out[0] += area / 3.0 * (s.c1[d[0]] + s.c1[d[1]] + s.c1[d[2]]);
            out[1] += area / 3.0 * (s.c2[d[0]] + s.c2[d[1]] + s.c2[d[2]]);
        }
        for (i, m) in self.lumped.iter().enumerate() {
            out[2] += m * s.h[i];
            out[3] += m * s.k[i];
        }
        out
    }

    pub fn record(&self, step: usize, s: &CellState, newton_iterations: usize) -> StepRecord {
        let [int_c1, int_c2, int_h, int_k] = self.integrals(s);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        StepRecord {
            step,
            t: s.t,
            int_c1,
            int_c2,
            int_h,
            int_k,
            min_c1: min(&s.c1),
            min_c2: min(&s.c2),
            newton_iterations,
        }
    }
}
