//! Stokes–Biot coupling across the `Interface` faces by Nitsche's method.
//!
//! With `n` the fluid outward normal, `λ(U) = p_f − 2μ D(u_f)n·n`, the mass
//! jump `J(U) = (u_f − ∂t η − u_p)·n` and `T(U) = (u_f − ∂t η)·t`, the
//! interface adds
//!
//! ```text
//! ⟨λ(U), J(V)⟩ − ⟨λ(V), J(U)⟩ + (γ_N μ/h)⟨J(U), J(V)⟩ + β⟨T(U), T(V)⟩
//! ```
//!
//! where `J(V)`, `T(V)` use the test displacement in place of `∂t η`. The
//! first two terms cancel in the energy identity, so the scheme dissipates
//! for any `γ_N > 0`. `β = slip·sqrt(μ/K)` (Beavers–Joseph–Saffman).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{InterfaceBc, StokesError, StokesOperator, StokesOptions, StokesState};
use crate::fem::{barycentric, rt0_basis, scalar_basis, LineRule, SpaceKind};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::poro::{
    BiotOperator, DisplacementBc, FlowBc, MechParams, PoroBoundary, PoroLoads, PoroMode, PoroState,
};
use crate::sparse::{LuFactor, TripletBuilder};
use crate::validate::{self, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfaceParams {
    /// Nitsche penalty γ_N
    pub gamma_n: f64,
    /// Beavers–Joseph–Saffman slip coefficient
    pub slip: f64,
}

impl Default for InterfaceParams {
    fn default() -> Self {
        InterfaceParams {
            gamma_n: 100.0,
            slip: 1.0,
        }
    }
}

impl InterfaceParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::positive("gamma_n", self.gamma_n)?;
        validate::non_negative("slip", self.slip)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub fluid: StokesState,
    pub wall: PoroState,
}

impl CoupledState {
    pub fn t(&self) -> f64 {
        self.wall.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceDiagnostics {
    /// `‖(u_f − ∂t η − u_p)·n‖_{L²(Γ)}`
    pub mismatch: f64,
    /// `‖u_f·n‖_{L²(Γ)}`
    pub normal_flux: f64,
    /// `‖(u_f − ∂t η)·t‖_{L²(Γ)}`
    pub slip: f64,
}

type Functional = Vec<(usize, f64)>;

/// Linear functionals of the global unknowns at one interface quadrature point.
#[derive(Debug, Clone)]
struct InterfacePoint {
    weight: f64,
    /// γ_N μ / h
    penalty: f64,
    lambda: Functional,
    uf_n: Functional,
    uf_t: Functional,
    eta_n: Functional,
    eta_t: Functional,
    up_n: Functional,
}

fn combine(parts: &[(&Functional, f64)]) -> Functional {
    parts
        .iter()
        .flat_map(|(f, s)| f.iter().map(move |&(i, v)| (i, v * s)))
        .collect()
}

fn apply(f: &Functional, x: &[f64], offset: usize) -> f64 {
    f.iter().map(|&(i, v)| v * x[i - offset]).sum()
}

fn outer(lhs: &mut TripletBuilder, rows: &Functional, cols: &Functional, scale: f64) {
    for &(i, a) in rows {
        for &(j, b) in cols {
            lhs.add(i, j, scale * a * b);
        }
    }
}

/// Monolithic fluid–wall system over `[u_f, p_f, η, u_p, p_p]`, factorised once.
#[derive(Debug)]
pub struct CoupledSolver {
    stokes: StokesOperator,
    biot: BiotOperator,
    iface: InterfaceParams,
    beta: f64,
    dt: f64,
    offset: usize,
    points: Vec<InterfacePoint>,
    constrained: Vec<bool>,
    lu: LuFactor,
}

impl CoupledSolver {
    /// `boundary` applies to the outer porous boundary; the interface is
    /// always free and permeable.
    pub fn new(
        mesh: Arc<Mesh>,
        params: MechParams,
        boundary: PoroBoundary,
        iface: InterfaceParams,
        dt: f64,
        mode: PoroMode,
    ) -> Result<Self, StokesError> {
        iface.validate()?;
        let options = StokesOptions {
            interface: InterfaceBc::Coupled,
            ..Default::default()
        };
        let stokes = StokesOperator::new(mesh.clone(), params, options, Some(dt))?;
        let boundary = boundary.with(
            BoundaryTag::Interface,
            DisplacementBc::Free,
            FlowBc::Drained,
        );
        let biot = BiotOperator::new(mesh.clone(), params, boundary, dt, mode)?;
        let offset = stokes.n_dofs();
        let n = offset + biot.n_dofs();
        let mu = params.mu_f;
        let beta = iface.slip * (mu / params.mobility()).sqrt();
        let points = interface_points(&mesh, &stokes, &biot, offset, iface.gamma_n * mu)?;

        let mut lhs = TripletBuilder::new(n, n);
        lhs.add_block(0, 0, stokes.lhs());
        lhs.add_block(offset, offset, biot.lhs());
        for pt in &points {
            let j_trial = combine(&[(&pt.uf_n, 1.0), (&pt.eta_n, -1.0 / dt), (&pt.up_n, -1.0)]);
            let j_test = combine(&[(&pt.uf_n, 1.0), (&pt.eta_n, -1.0), (&pt.up_n, -1.0)]);
            let t_trial = combine(&[(&pt.uf_t, 1.0), (&pt.eta_t, -1.0 / dt)]);
            let t_test = combine(&[(&pt.uf_t, 1.0), (&pt.eta_t, -1.0)]);
            outer(&mut lhs, &j_test, &pt.lambda, pt.weight);
            outer(&mut lhs, &pt.lambda, &j_trial, -pt.weight);
            outer(&mut lhs, &j_test, &j_trial, pt.weight * pt.penalty);
            outer(&mut lhs, &t_test, &t_trial, pt.weight * beta);
        }
        let constrained: Vec<bool> = stokes
            .dirichlet()
            .iter()
            .map(Option::is_some)
            .chain(biot.constrained().iter().copied())
            .collect();
        lhs.constrain_rows(&constrained);
        let lu = LuFactor::new(&lhs.build()?)?;
        Ok(CoupledSolver {
            stokes,
            biot,
            iface,
            beta,
            dt,
            offset,
            points,
            constrained,
            lu,
        })
    }

    pub fn stokes(&self) -> &StokesOperator {
        &self.stokes
    }

    pub fn biot(&self) -> &BiotOperator {
        &self.biot
    }

    pub fn interface_params(&self) -> InterfaceParams {
        self.iface
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_dofs(&self) -> usize {
        self.offset + self.biot.n_dofs()
    }

    pub fn zero_state(&self) -> CoupledState {
        CoupledState {
            fluid: self.stokes.zero_state(),
            wall: self.biot.zero_state(),
        }
    }

    pub fn rhs(&self, old: &CoupledState, loads: &PoroLoads) -> Result<Vec<f64>, StokesError> {
        let t = old.t() + self.dt;
        let mut b = self.stokes.rhs(&old.fluid, t)?;
        b.extend(self.biot.rhs(&old.wall, loads)?);
        let mut extra = vec![0.0; b.len()];
        for pt in &self.points {
            let j_old = apply(&pt.eta_n, &old.wall.eta, self.offset) / self.dt;
            let t_old = apply(&pt.eta_t, &old.wall.eta, self.offset) / self.dt;
            let j_test = combine(&[(&pt.uf_n, 1.0), (&pt.eta_n, -1.0), (&pt.up_n, -1.0)]);
            let t_test = combine(&[(&pt.uf_t, 1.0), (&pt.eta_t, -1.0)]);
            for &(i, c) in &pt.lambda {
                extra[i] += pt.weight * c * j_old;
            }
            for &(i, c) in &j_test {
                extra[i] -= pt.weight * pt.penalty * c * j_old;
            }
            for &(i, c) in &t_test {
                extra[i] -= pt.weight * self.beta * c * t_old;
            }
        }
        for ((bi, e), &c) in b.iter_mut().zip(extra).zip(&self.constrained) {
            if !c {
                *bi += e;
            }
        }
        Ok(b)
    }

    pub fn step(&self, old: &CoupledState, loads: &PoroLoads) -> Result<CoupledState, StokesError> {
        let t = old.t() + self.dt;
        let b = self.rhs(old, loads)?;
        let (x, _) = self.lu.solve(&b)?;
        Ok(CoupledState {
            fluid: self.stokes.unpack(&x[..self.offset], t),
            wall: self.biot.unpack(&x[self.offset..], &old.wall, t),
        })
    }

    /// Kinetic energy of the fluid plus stored energy of the wall.
    pub fn energy(&self, s: &CoupledState) -> f64 {
        self.stokes.energy(&s.fluid) + self.biot.energy(&s.wall)
    }

    pub fn diagnostics(&self, new: &CoupledState, old: &CoupledState) -> InterfaceDiagnostics {
        let mut x = new.fluid.u.clone();
        x.extend(&new.fluid.p);
        x.extend(&new.wall.eta);
        x.extend(&new.wall.u);
        let (mut jj, mut nn, mut tt) = (0.0, 0.0, 0.0);
        for pt in &self.points {
            let un = apply(&pt.uf_n, &x, 0);
            let vel_n =
                (apply(&pt.eta_n, &x, 0) - apply(&pt.eta_n, &old.wall.eta, self.offset)) / self.dt;
            let vel_t =
                (apply(&pt.eta_t, &x, 0) - apply(&pt.eta_t, &old.wall.eta, self.offset)) / self.dt;
            let j = un - vel_n - apply(&pt.up_n, &x, 0);
            let t = apply(&pt.uf_t, &x, 0) - vel_t;
            jj += pt.weight * j * j;
            nn += pt.weight * un * un;
            tt += pt.weight * t * t;
        }
        InterfaceDiagnostics {
            mismatch: jj.sqrt(),
            normal_flux: nn.sqrt(),
            slip: tt.sqrt(),
        }
    }

    /// Seepage velocity `u_p/Φ` per element (zero in the fluid).
    pub fn seepage_velocity(&self, s: &CoupledState) -> Vec<Point> {
        let phi = self.biot.params().phi;
        self.biot
            .darcy_velocity(&s.wall)
            .into_iter()
            .map(|v| v / phi)
            .collect()
    }
}

fn interface_points(
    mesh: &Mesh,
    stokes: &StokesOperator,
    biot: &BiotOperator,
    offset: usize,
    gamma_mu: f64,
) -> Result<Vec<InterfacePoint>, StokesError> {
    let (vel, pres) = (stokes.velocity_space(), stokes.pressure_space());
    let (disp, flux) = (biot.displacement_space(), biot.flux_space());
    let (nsv, nse) = (vel.n_scalar_dofs(), disp.n_scalar_dofs());
    let nv = vel.n_dofs();
    let ou = offset + biot.offsets()[1];
    let mu = stokes.params().mu_f;
    let rule = LineRule::gauss(3);
    let mut out = Vec::new();
    for rf in stokes
        .region_faces()
        .iter()
        .filter(|f| f.tag == BoundaryTag::Interface)
    {
        let face = &mesh.faces[rf.face];
        let ef = rf.element;
        let Some(ep) = (if face.left == ef {
            face.right
        } else {
            Some(face.left)
        }) else {
            continue;
        };
        let (n, t) = (rf.normal, Point::new(-rf.normal.y, rf.normal.x));
        let (a, b) = (
            mesh.vertices[face.vertices[0]],
            mesh.vertices[face.vertices[1]],
        );
        let (geo_f, geo_p) = (mesh.geometry(ef), mesh.geometry(ep));
        let (vd, pd) = (vel.local_dofs(ef), pres.local_dofs(ef));
        let (dd, fd) = (disp.local_dofs(ep), flux.local_dofs(ep));
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = a + (b - a) * s;
            let bf = barycentric(&geo_f, x);
            let basis = scalar_basis(SpaceKind::P1Bubble, &geo_f, bf);
            let mut pt = InterfacePoint {
                weight: w * face.measure,
                penalty: gamma_mu / face.measure,
                lambda: (0..3).map(|j| (nv + pd[j], bf[j])).collect(),
                uf_n: Vec::new(),
                uf_t: Vec::new(),
                eta_n: Vec::new(),
                eta_t: Vec::new(),
                up_n: Vec::new(),
            };
            for j in 0..4 {
                let dn = basis.gradients[j].dot(&n);
                for c in 0..2 {
                    let i = c * nsv + vd[j];
                    pt.lambda.push((i, -2.0 * mu * n[c] * dn));
                    pt.uf_n.push((i, basis.values[j] * n[c]));
                    pt.uf_t.push((i, basis.values[j] * t[c]));
                }
            }
            let bp = barycentric(&geo_p, x);
            for j in 0..3 {
                for c in 0..2 {
                    let i = offset + c * nse + dd[j];
                    pt.eta_n.push((i, bp[j] * n[c]));
                    pt.eta_t.push((i, bp[j] * t[c]));
                }
            }
            let (phi, _) = rt0_basis(flux, ep, &geo_p, x);
            for i in 0..3 {
                pt.up_n.push((ou + fd[i], phi[i].dot(&n)));
            }
            out.push(pt);
        }
    }
    if out.is_empty() {
        return Err(StokesError::MissingTag(BoundaryTag::Interface));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_generator, GeometrySpec};
    use crate::stokes::{OutflowBc, StokesSolver};

    fn channel(nx: usize, ny: usize) -> Arc<Mesh> {
        Arc::new(structured_generator(nx, ny, &GeometrySpec::channel_default(0)).unwrap())
    }

    fn solver(params: MechParams, iface: InterfaceParams) -> CoupledSolver {
        CoupledSolver::new(
            channel(8, 8),
            params,
            PoroBoundary::default(),
            iface,
            0.1,
            PoroMode::QuasiStatic,
        )
        .unwrap()
    }

    #[test]
    fn zero_forcing_zero_solution() {
        let s = solver(
            MechParams {
                p_max: 0.0,
                ..Default::default()
            },
            InterfaceParams::default(),
        );
        let z = s.zero_state();
        let next = s.step(&z, &PoroLoads::none()).unwrap();
        let all = next
            .fluid
            .u
            .iter()
            .chain(&next.fluid.p)
            .chain(&next.wall.eta)
            .chain(&next.wall.u)
            .chain(&next.wall.p);
        assert!(all.into_iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_decays_once_forcing_stops() {
        let params = MechParams::default();
        let forced = solver(params, InterfaceParams::default());
        let mut s = forced.zero_state();
        for _ in 0..3 {
            s = forced.step(&s, &PoroLoads::none()).unwrap();
        }
        let quiet = solver(
            MechParams {
                p_max: 0.0,
                ..params
            },
            InterfaceParams::default(),
        );
        let mut e = quiet.energy(&s);
        assert!(e > 0.0);
        for _ in 0..5 {
            s = quiet.step(&s, &PoroLoads::none()).unwrap();
            let e1 = quiet.energy(&s);
            assert!(e1 <= e * (1.0 + 1e-10), "{e1} > {e}");
            e = e1;
        }
    }

    #[test]
    fn larger_penalty_shrinks_mismatch() {
        let run = |gamma_n: f64| {
            let s = solver(
                MechParams::default(),
                InterfaceParams { gamma_n, slip: 1.0 },
            );
            let z = s.zero_state();
            let a = s.step(&z, &PoroLoads::none()).unwrap();
            let b = s.step(&a, &PoroLoads::none()).unwrap();
            s.diagnostics(&b, &a)
        };
        let (lo, hi) = (run(100.0), run(1e6));
        assert!(hi.mismatch < lo.mismatch, "{hi:?} vs {lo:?}");
        assert!(
            hi.mismatch < 1e-3 * hi.normal_flux.max(lo.normal_flux),
            "{hi:?}"
        );
    }

    #[test]
    fn rigid_impermeable_wall_matches_no_slip_stokes() {
        let mesh = channel(8, 8);
        let rigid = MechParams {
            kappa: 1e-20,
            young: 1e6,
            ..Default::default()
        };
        let coupled = CoupledSolver::new(
            mesh.clone(),
            rigid,
            PoroBoundary::default(),
            InterfaceParams::default(),
            0.1,
            PoroMode::QuasiStatic,
        )
        .unwrap();
        let c = coupled
            .step(&coupled.zero_state(), &PoroLoads::none())
            .unwrap();
        let options = StokesOptions {
            interface: InterfaceBc::Wall,
            outflow: OutflowBc::Natural,
            ..Default::default()
        };
        let alone =
            StokesSolver::new(StokesOperator::new(mesh, rigid, options, Some(0.1)).unwrap())
                .unwrap();
        let s = alone.step(&alone.operator().zero_state()).unwrap();
        let m = |u: &[f64]| {
            alone
                .operator()
                .energy(&StokesState {
                    u: u.to_vec(),
                    p: vec![],
                    t: 0.0,
                })
                .sqrt()
        };
        let diff: Vec<f64> = c.fluid.u.iter().zip(&s.u).map(|(a, b)| a - b).collect();
        let rel = m(&diff) / m(&s.u);
        assert!(rel < 0.05, "relative difference {rel}");
    }
}
