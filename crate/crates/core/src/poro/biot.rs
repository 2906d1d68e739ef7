use std::sync::Arc;

use super::{lame_from_table, MechParams, PoroBoundary, PoroError, PoroLoads, PoroMode, PoroState};
use crate::fem::{assemble_triplets, rt0_basis, Form, FunctionSpace, QuadratureRule, SpaceKind};
use crate::mesh::{BoundaryTag, Mesh, Point, Subdomain};
use crate::sparse::{CsrMatrix, LuFactor, TripletBuilder};

const NEWMARK_BETA: f64 = 0.25;
const NEWMARK_GAMMA: f64 = 0.5;

/// A face on the boundary of the porous region, seen from its porous element.
#[derive(Debug, Clone, Copy)]
pub struct RegionFace {
    pub face: usize,
    pub element: usize,
    /// outward from the porous region
    pub normal: Point,
    pub tag: BoundaryTag,
}

/// Discrete Biot system over `[η (vector P1), u (RT0), p (P0)]`:
///
/// ```text
/// a(η, ξ) − α(p, ∇·ξ)                         = ⟨t, ξ⟩
/// (u, w)/K − (p, ∇·w)                          = −⟨p_b, w·n⟩ + (ρ_f g, w)
/// −[S(p, q) + α(∇·η, q)]/dt − (∇·u, q)        = −[S(p_old, q) + α(∇·η_old, q)]/dt
/// ```
///
/// Dynamic mode adds `ρ_s (∂tt η, ξ)` with Newmark β = 1/4, γ = 1/2.
#[derive(Debug, Clone)]
pub struct BiotOperator {
    mesh: Arc<Mesh>,
    disp: Arc<FunctionSpace>,
    flux: Arc<FunctionSpace>,
    pressure: Arc<FunctionSpace>,
    params: MechParams,
    lame: (f64, f64),
    dt: f64,
    mode: PoroMode,
    boundary: PoroBoundary,
    lhs: TripletBuilder,
    constrained: Vec<bool>,
    div_eta: CsrMatrix,
    elastic: CsrMatrix,
    mass_eta: Option<CsrMatrix>,
    region_faces: Vec<RegionFace>,
}

impl BiotOperator {
    pub fn new(
        mesh: Arc<Mesh>,
        params: MechParams,
        boundary: PoroBoundary,
        dt: f64,
        mode: PoroMode,
    ) -> Result<Self, PoroError> {
        params.validate()?;
        crate::validate::positive("dt", dt)?;
        let lame = lame_from_table(&params)?;
        let disp = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::P1,
            2,
            Subdomain::Porous,
        ));
        let flux = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::Rt0,
            1,
            Subdomain::Porous,
        ));
        let pressure = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::P0,
            1,
            Subdomain::Porous,
        ));
        if pressure.n_dofs() == 0 {
            return Err(PoroError::EmptyRegion);
        }
        let region_faces = region_faces(&mesh, &pressure);
        if !region_faces
            .iter()
            .any(|f| f.tag == BoundaryTag::PorousWall)
        {
            return Err(PoroError::MissingTag(BoundaryTag::PorousWall));
        }

        let (ne, nu, np) = (disp.n_dofs(), flux.n_dofs(), pressure.n_dofs());
        let (ou, op) = (ne, ne + nu);
        let n = ne + nu + np;
        let alpha = params.alpha_biot;
        let (lambda, mu) = lame;
        let mut lhs = TripletBuilder::new(n, n);
        let elastic = assemble_triplets(&Form::SymmetricGradient { lambda, mu }, &disp, &disp)?;
        lhs.add_block(0, 0, &elastic);
        let mass_eta = match mode {
            PoroMode::QuasiStatic => None,
            PoroMode::Dynamic => {
                let m = assemble_triplets(
                    &Form::Mass {
                        coefficient: params.solid_density(),
                    },
                    &disp,
                    &disp,
                )?;
                lhs.add_block_scaled(0, 0, &m, 1.0 / (NEWMARK_BETA * dt * dt));
                Some(m.build()?)
            }
        };
        let bv = assemble_triplets(&Form::Divergence, &disp, &pressure)?;
        lhs.add_block_transposed(0, op, &bv, -alpha);
        lhs.add_block_scaled(op, 0, &bv, -alpha / dt);

        let mass_u = assemble_triplets(
            &Form::Mass {
                coefficient: 1.0 / params.mobility(),
            },
            &flux,
            &flux,
        )?;
        lhs.add_block(ou, ou, &mass_u);
        let brt = assemble_triplets(&Form::Divergence, &flux, &pressure)?;
        lhs.add_block_transposed(ou, op, &brt, -1.0);
        lhs.add_block_scaled(op, ou, &brt, -1.0);
        let mp = assemble_triplets(&Form::Mass { coefficient: 1.0 }, &pressure, &pressure)?;
        lhs.add_block_scaled(op, op, &mp, -params.inv_m / dt);

        let mut constrained = vec![false; n];
        let ns = disp.n_scalar_dofs();
        for rf in &region_faces {
            let cond = boundary.get(rf.tag);
            let fixed = cond.displacement.fixed_components();
            for &v in &mesh.faces[rf.face].vertices {
                if let Some(d) = disp.vertex_dof(v) {
                    for c in 0..2 {
                        if fixed[c] {
                            constrained[c * ns + d] = true;
                        }
                    }
                }
            }
            if cond.flow == super::FlowBc::NoFlux {
                if let Some(d) = flux.face_dof(rf.face) {
                    constrained[ou + d] = true;
                }
            }
        }

        Ok(BiotOperator {
            div_eta: bv.build()?,
            elastic: elastic.build()?,
            mesh,
            disp,
            flux,
            pressure,
            params,
            lame,
            dt,
            mode,
            boundary,
            lhs,
            constrained,
            mass_eta,
            region_faces,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn displacement_space(&self) -> &Arc<FunctionSpace> {
        &self.disp
    }

    pub fn flux_space(&self) -> &Arc<FunctionSpace> {
        &self.flux
    }

    pub fn pressure_space(&self) -> &Arc<FunctionSpace> {
        &self.pressure
    }

    pub fn params(&self) -> &MechParams {
        &self.params
    }

    pub fn lame(&self) -> (f64, f64) {
        self.lame
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> PoroMode {
        self.mode
    }

    pub fn boundary(&self) -> &PoroBoundary {
        &self.boundary
    }

    pub fn region_faces(&self) -> &[RegionFace] {
        &self.region_faces
    }

    /// Block offsets `[η, u, p]`.
    pub fn offsets(&self) -> [usize; 3] {
        let ne = self.disp.n_dofs();
        [0, ne, ne + self.flux.n_dofs()]
    }

    pub fn n_dofs(&self) -> usize {
        self.disp.n_dofs() + self.flux.n_dofs() + self.pressure.n_dofs()
    }

    /// Unconstrained system matrix.
    pub fn lhs(&self) -> &TripletBuilder {
        &self.lhs
    }

    /// Rows carrying essential conditions (zero displacement components, zero flux).
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn zero_state(&self) -> PoroState {
        let dynamic = self.mode == PoroMode::Dynamic;
        PoroState {
            eta: vec![0.0; self.disp.n_dofs()],
            u: vec![0.0; self.flux.n_dofs()],
            p: vec![0.0; self.pressure.n_dofs()],
            velocity: dynamic.then(|| vec![0.0; self.disp.n_dofs()]),
            acceleration: dynamic.then(|| vec![0.0; self.disp.n_dofs()]),
            t: 0.0,
        }
    }

    pub fn check_state(&self, s: &PoroState) -> Result<(), PoroError> {
        for (what, got, expected) in [
            ("eta", s.eta.len(), self.disp.n_dofs()),
            ("u", s.u.len(), self.flux.n_dofs()),
            ("p", s.p.len(), self.pressure.n_dofs()),
        ] {
            if got != expected {
                return Err(PoroError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Right-hand side for the step from `old`; constrained rows are zero.
    pub fn rhs(&self, old: &PoroState, loads: &PoroLoads) -> Result<Vec<f64>, PoroError> {
        self.check_state(old)?;
        let [_, ou, op] = self.offsets();
        let mut b = vec![0.0; self.n_dofs()];
        let ns = self.disp.n_scalar_dofs();

        for rf in &self.region_faces {
            let face = &self.mesh.faces[rf.face];
            if let Some(&pn) = loads.normal_pressure.get(&rf.tag) {
                for &v in &face.vertices {
                    if let Some(d) = self.disp.vertex_dof(v) {
                        for c in 0..2 {
                            b[c * ns + d] -= pn * rf.normal[c] * face.measure / 2.0;
                        }
                    }
                }
            }
            if self.boundary.get(rf.tag).flow == super::FlowBc::Drained {
                if let (Some(&pb), Some(d)) = (
                    loads.pore_pressure.get(&rf.tag),
                    self.flux.face_dof(rf.face),
                ) {
                    // ∫_F φ_F·n_out = ±1 depending on the stored face orientation
                    b[ou + d] -= pb * face.orientation_for(rf.element);
                }
            }
        }

        let g = Point::new(self.params.gravity[0], self.params.gravity[1])
            * self.params.fluid_density();
        if g.norm() > 0.0 {
            let rule = QuadratureRule::triangle(2);
            for e in self.flux.active_elements() {
                let geo = self.mesh.geometry(e);
                let d = self.flux.local_dofs(e);
                for (bary, w) in rule.on_element(geo.area) {
                    let (phi, _) = rt0_basis(&self.flux, e, &geo, geo.map(bary));
                    for i in 0..3 {
                        b[ou + d[i]] += w * g.dot(&phi[i]);
                    }
                }
            }
        }

        let s_dt = self.params.inv_m / self.dt;
        let a_dt = self.params.alpha_biot / self.dt;
        let div_old = self.div_eta.matvec(&old.eta);
        for e in self.pressure.active_elements() {
            let i = self.pressure.local_dofs(e)[0];
            let area = self.mesh.geometry(e).area;
            b[op + i] -= s_dt * area * old.p[i] + a_dt * div_old[i];
        }

        if let Some(m) = &self.mass_eta {
            let dt = self.dt;
            let v = old.velocity.as_deref().ok_or(PoroError::Dimension {
                what: "velocity",
                expected: old.eta.len(),
                got: 0,
            })?;
            let a = old.acceleration.as_deref().ok_or(PoroError::Dimension {
                what: "acceleration",
                expected: old.eta.len(),
                got: 0,
            })?;
            let pred: Vec<f64> = (0..old.eta.len())
                .map(|i| {
                    (old.eta[i] + dt * v[i]) / (NEWMARK_BETA * dt * dt)
                        + (0.5 / NEWMARK_BETA - 1.0) * a[i]
                })
                .collect();
            for (bi, mi) in b.iter_mut().zip(m.matvec(&pred)) {
                *bi += mi;
            }
        }

        for (bi, &c) in b.iter_mut().zip(&self.constrained) {
            if c {
                *bi = 0.0;
            }
        }
        Ok(b)
    }

    /// Stored energy `a(η, η)/2 + (1/M)‖p‖²/2` (plus `ρ_s‖∂t η‖²/2` in dynamic mode).
    pub fn energy(&self, s: &PoroState) -> f64 {
        let ka: f64 = crate::sparse::dot(&s.eta, &self.elastic.matvec(&s.eta));
        let storage: f64 = self
            .pressure
            .active_elements()
            .map(|e| self.mesh.geometry(e).area * s.p[self.pressure.local_dofs(e)[0]].powi(2))
            .sum();
        let kinetic = match (&self.mass_eta, &s.velocity) {
            (Some(m), Some(v)) => crate::sparse::dot(v, &m.matvec(v)),
            _ => 0.0,
        };
        0.5 * (ka + self.params.inv_m * storage + kinetic)
    }

    /// Darcy velocity at each element centroid (zero outside the region).
    pub fn darcy_velocity(&self, s: &PoroState) -> Vec<Point> {
        let mut out = vec![Point::zeros(); self.mesh.n_elements()];
        for e in self.flux.active_elements() {
            let geo = self.mesh.geometry(e);
            let (phi, _) = rt0_basis(&self.flux, e, &geo, geo.centroid());
            let d = self.flux.local_dofs(e);
            out[e] = (0..3)
                .map(|i| phi[i] * s.u[d[i]])
                .fold(Point::zeros(), |a, b| a + b);
        }
        out
    }

    /// Splits a Biot block solution into a state, updating Newmark histories.
    pub fn unpack(&self, x: &[f64], old: &PoroState, t: f64) -> PoroState {
        let [_, ou, op] = self.offsets();
        let eta = x[..ou].to_vec();
        let (velocity, acceleration) = match (&old.velocity, &old.acceleration) {
            (Some(v0), Some(a0)) if self.mode == PoroMode::Dynamic => {
                let dt = self.dt;
                let a1: Vec<f64> = (0..eta.len())
                    .map(|i| {
                        (eta[i] - old.eta[i] - dt * v0[i]) / (NEWMARK_BETA * dt * dt)
                            - (0.5 / NEWMARK_BETA - 1.0) * a0[i]
                    })
                    .collect();
                let v1: Vec<f64> = (0..eta.len())
                    .map(|i| v0[i] + dt * ((1.0 - NEWMARK_GAMMA) * a0[i] + NEWMARK_GAMMA * a1[i]))
                    .collect();
                (Some(v1), Some(a1))
            }
            _ => (None, None),
        };
        PoroState {
            eta,
            u: x[ou..op].to_vec(),
            p: x[op..].to_vec(),
            velocity,
            acceleration,
            t,
        }
    }
}

/// Faces with exactly one neighbour in the region of `space`.
pub(crate) fn region_faces(mesh: &Mesh, space: &FunctionSpace) -> Vec<RegionFace> {
    let mut out = Vec::new();
    for (fi, face) in mesh.faces.iter().enumerate() {
        let l = space.is_active(face.left);
        let r = face.right.map(|r| space.is_active(r));
        let element = match (l, r) {
            (true, None) | (true, Some(false)) => face.left,
            (false, Some(true)) => face.right.unwrap_or(face.left),
            _ => continue,
        };
        out.push(RegionFace {
            face: fi,
            element,
            normal: face.normal * face.orientation_for(element),
            tag: face.tag.unwrap_or(BoundaryTag::Free),
        });
    }
    out
}

/// Factorised Biot system for repeated steps at a fixed `dt`.
#[derive(Debug)]
pub struct PoroSolver {
    op: BiotOperator,
    lu: LuFactor,
}

impl PoroSolver {
    pub fn new(op: BiotOperator) -> Result<Self, PoroError> {
        let mut lhs = op.lhs().clone();
        lhs.constrain_rows(op.constrained());
        let lu = LuFactor::new(&lhs.build()?)?;
        Ok(PoroSolver { op, lu })
    }

    pub fn operator(&self) -> &BiotOperator {
        &self.op
    }

    pub fn step(
        &self,
        old: &PoroState,
        loads: &PoroLoads,
        dt: f64,
    ) -> Result<PoroState, PoroError> {
        if (dt - self.op.dt).abs() > 1e-14 * dt.abs().max(1.0) {
            return Err(PoroError::TimeStep {
                assembled: self.op.dt,
                requested: dt,
            });
        }
        let b = self.op.rhs(old, loads)?;
        let (x, _) = self.lu.solve(&b)?;
        Ok(self.op.unpack(&x, old, old.t + dt))
    }
}

/// Per-element storage balance
/// `S|T|Δp/dt + α ∫_T Δ(∇·η)/dt + ∫_∂T u·n`, recomputed from the fields.
pub fn mass_balance(op: &BiotOperator, new: &PoroState, old: &PoroState) -> Vec<f64> {
    let mesh = op.mesh();
    let (disp, flux, pres) = (
        op.displacement_space(),
        op.flux_space(),
        op.pressure_space(),
    );
    let ns = disp.n_scalar_dofs();
    let dt = new.t - old.t;
    let params = op.params();
    let mut out = vec![0.0; mesh.n_elements()];
    for e in pres.active_elements() {
        let geo = mesh.geometry(e);
        let i = pres.local_dofs(e)[0];
        let d = disp.local_dofs(e);
        let div = |eta: &[f64]| -> f64 {
            (0..3)
                .map(|j| geo.grad_lambda[j].x * eta[d[j]] + geo.grad_lambda[j].y * eta[ns + d[j]])
                .sum::<f64>()
                * geo.area
        };
        let outflow: f64 = (0..3)
            .map(|j| {
                let f = mesh.element_faces[e][j];
                mesh.faces[f].orientation_for(e) * new.u[flux.face_dof(f).unwrap_or(0)]
            })
            .sum();
        out[e] = params.inv_m * geo.area * (new.p[i] - old.p[i]) / dt
            + params.alpha_biot * (div(&new.eta) - div(&old.eta)) / dt
            + outflow;
    }
    out
}
