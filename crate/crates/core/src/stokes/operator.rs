use std::sync::Arc;

use super::{
    InflowBc, InterfaceBc, OutflowBc, StokesError, StokesOptions, StokesState, TANGENTIAL_PENALTY,
};
use crate::fem::{assemble_triplets, Form, FunctionSpace, SpaceKind};
use crate::mesh::{BoundaryTag, Mesh, Subdomain};
use crate::poro::{region_faces, MechParams, RegionFace};
use crate::sparse::{dot, CsrMatrix, LuFactor, TripletBuilder};

/// Stokes system over `[u (vector P1-bubble), p (P1)]` on the fluid region.
/// `dt = None` drops the time derivative.
#[derive(Debug, Clone)]
pub struct StokesOperator {
    mesh: Arc<Mesh>,
    vel: Arc<FunctionSpace>,
    pres: Arc<FunctionSpace>,
    params: MechParams,
    options: StokesOptions,
    dt: Option<f64>,
    lhs: TripletBuilder,
    mass: CsrMatrix,
    dirichlet: Vec<Option<f64>>,
    faces: Vec<RegionFace>,
}

impl StokesOperator {
    pub fn new(
        mesh: Arc<Mesh>,
        params: MechParams,
        options: StokesOptions,
        dt: Option<f64>,
    ) -> Result<Self, StokesError> {
        params.validate()?;
        if let Some(dt) = dt {
            crate::validate::positive("dt", dt)?;
        }
        let vel = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::P1Bubble,
            2,
            Subdomain::Fluid,
        ));
        let pres = Arc::new(FunctionSpace::on_region(
            mesh.clone(),
            SpaceKind::P1,
            1,
            Subdomain::Fluid,
        ));
        if pres.n_dofs() == 0 {
            return Err(StokesError::EmptyRegion);
        }
        let faces = region_faces(&mesh, &pres);
        let (nv, np) = (vel.n_dofs(), pres.n_dofs());
        let n = nv + np;
        let mu = params.mu_f;
        let rho = params.fluid_density();

        let mut lhs = TripletBuilder::new(n, n);
        lhs.add_block(
            0,
            0,
            &assemble_triplets(&Form::SymmetricGradient { lambda: 0.0, mu }, &vel, &vel)?,
        );
        let mass = assemble_triplets(&Form::Mass { coefficient: rho }, &vel, &vel)?;
        if let Some(dt) = dt {
            lhs.add_block_scaled(0, 0, &mass, 1.0 / dt);
        }
        let b = assemble_triplets(&Form::Divergence, &vel, &pres)?;
        lhs.add_block_transposed(0, nv, &b, -1.0);
        lhs.add_block(nv, 0, &b);

        let ns = vel.n_scalar_dofs();
        let mesh_ref = &mesh;
        let dofs = |f: &RegionFace| -> Vec<usize> {
            mesh_ref.faces[f.face]
                .vertices
                .iter()
                .filter_map(|&v| vel.vertex_dof(v))
                .collect()
        };
        for f in &faces {
            let penalised = match f.tag {
                BoundaryTag::Inflow => options.inflow == InflowBc::Traction,
                BoundaryTag::Outflow => options.outflow == OutflowBc::NoTangential,
                _ => false,
            };
            if !penalised {
                continue;
            }
            let face = &mesh.faces[f.face];
            let t = face.tangent();
            let pen = TANGENTIAL_PENALTY * mu / face.measure;
            let d = dofs(f);
            for (a, &da) in d.iter().enumerate() {
                for (b, &db) in d.iter().enumerate() {
                    let m = face.measure / 6.0 * if a == b { 2.0 } else { 1.0 };
                    for c in 0..2 {
                        for e in 0..2 {
                            lhs.add(c * ns + da, e * ns + db, pen * m * t[c] * t[e]);
                        }
                    }
                }
            }
        }

        let mut dirichlet = vec![None; n];
        if let InflowBc::Parabolic { peak } = options.inflow {
            let inflow: Vec<&RegionFace> = faces
                .iter()
                .filter(|f| f.tag == BoundaryTag::Inflow)
                .collect();
            if inflow.is_empty() {
                return Err(StokesError::MissingTag(BoundaryTag::Inflow));
            }
            // profile across the inflow section, parametrised along its tangent
            let t = mesh.faces[inflow[0].face].tangent();
            let s = |v: usize| mesh.vertices[v].dot(&t);
            let verts: Vec<usize> = inflow
                .iter()
                .flat_map(|f| mesh.faces[f.face].vertices)
                .collect();
            let lo = verts.iter().map(|&v| s(v)).fold(f64::INFINITY, f64::min);
            let hi = verts
                .iter()
                .map(|&v| s(v))
                .fold(f64::NEG_INFINITY, f64::max);
            for f in &inflow {
                for &v in &mesh.faces[f.face].vertices {
                    if let Some(d) = vel.vertex_dof(v) {
                        let r = (s(v) - lo) / (hi - lo);
                        let speed = 4.0 * peak * r * (1.0 - r);
                        for c in 0..2 {
                            dirichlet[c * ns + d] = Some(-speed * f.normal[c]);
                        }
                    }
                }
            }
        }
        for f in &faces {
            let wall = f.tag == BoundaryTag::FluidWall
                || (f.tag == BoundaryTag::Interface && options.interface == InterfaceBc::Wall);
            if wall {
                for d in dofs(f) {
                    dirichlet[d] = Some(0.0);
                    dirichlet[ns + d] = Some(0.0);
                }
            }
        }

        Ok(StokesOperator {
            mass: mass.build()?,
            mesh,
            vel,
            pres,
            params,
            options,
            dt,
            lhs,
            dirichlet,
            faces,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn velocity_space(&self) -> &Arc<FunctionSpace> {
        &self.vel
    }

    pub fn pressure_space(&self) -> &Arc<FunctionSpace> {
        &self.pres
    }

    pub fn params(&self) -> &MechParams {
        &self.params
    }

    pub fn options(&self) -> StokesOptions {
        self.options
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    /// Faces on the boundary of the fluid region, seen from the fluid side.
    pub fn region_faces(&self) -> &[RegionFace] {
        &self.faces
    }

    pub fn n_dofs(&self) -> usize {
        self.vel.n_dofs() + self.pres.n_dofs()
    }

    /// Unconstrained system matrix.
    pub fn lhs(&self) -> &TripletBuilder {
        &self.lhs
    }

    /// Prescribed values of essential rows.
    pub fn dirichlet(&self) -> &[Option<f64>] {
        &self.dirichlet
    }

    pub fn zero_state(&self) -> StokesState {
        StokesState {
            u: vec![0.0; self.vel.n_dofs()],
            p: vec![0.0; self.pres.n_dofs()],
            t: 0.0,
        }
    }

    pub fn check_state(&self, s: &StokesState) -> Result<(), StokesError> {
        for (what, got, expected) in [
            ("u", s.u.len(), self.vel.n_dofs()),
            ("p", s.p.len(), self.pres.n_dofs()),
        ] {
            if got != expected {
                return Err(StokesError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Right-hand side at time `t` (the new level); essential rows hold their values.
    pub fn rhs(&self, old: &StokesState, t: f64) -> Result<Vec<f64>, StokesError> {
        self.check_state(old)?;
        let mut b = vec![0.0; self.n_dofs()];
        if let Some(dt) = self.dt {
            for (bi, mi) in b.iter_mut().zip(self.mass.matvec(&old.u)) {
                *bi = mi / dt;
            }
        }
        if self.options.inflow == InflowBc::Traction {
            let p_in = self.params.inflow_pressure(t);
            let ns = self.vel.n_scalar_dofs();
            for f in self.faces.iter().filter(|f| f.tag == BoundaryTag::Inflow) {
                let face = &self.mesh.faces[f.face];
                for &v in &face.vertices {
                    if let Some(d) = self.vel.vertex_dof(v) {
                        for c in 0..2 {
                            b[c * ns + d] -= p_in * f.normal[c] * face.measure / 2.0;
                        }
                    }
                }
            }
        }
        for (bi, d) in b.iter_mut().zip(&self.dirichlet) {
            if let Some(v) = d {
                *bi = *v;
            }
        }
        Ok(b)
    }

    pub fn unpack(&self, x: &[f64], t: f64) -> StokesState {
        let nv = self.vel.n_dofs();
        StokesState {
            u: x[..nv].to_vec(),
            p: x[nv..nv + self.pres.n_dofs()].to_vec(),
            t,
        }
    }

    /// Kinetic energy `ρ_f ‖u‖²/2`.
    pub fn energy(&self, s: &StokesState) -> f64 {
        0.5 * dot(&s.u, &self.mass.matvec(&s.u))
    }

    /// `(q, ∇·u)` for every pressure basis function.
    pub fn divergence_residual(&self, s: &StokesState) -> Result<Vec<f64>, StokesError> {
        let b = crate::fem::assemble_bilinear(&Form::Divergence, &self.vel, &self.pres)?;
        Ok(b.matvec(&s.u))
    }
}

/// Factorised Stokes system.
#[derive(Debug)]
pub struct StokesSolver {
    op: StokesOperator,
    lu: LuFactor,
}

impl StokesSolver {
    pub fn new(op: StokesOperator) -> Result<Self, StokesError> {
        let mut lhs = op.lhs().clone();
        let mask: Vec<bool> = op.dirichlet().iter().map(Option::is_some).collect();
        lhs.constrain_rows(&mask);
        let lu = LuFactor::new(&lhs.build()?)?;
        Ok(StokesSolver { op, lu })
    }

    pub fn operator(&self) -> &StokesOperator {
        &self.op
    }

    /// Advances by the assembled `dt`, or solves the steady problem at `old.t`.
    pub fn step(&self, old: &StokesState) -> Result<StokesState, StokesError> {
        let t = old.t + self.op.dt.unwrap_or(0.0);
        let b = self.op.rhs(old, t)?;
        let (x, _) = self.lu.solve(&b)?;
        Ok(self.op.unpack(&x, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::QuadratureRule;
    use crate::mesh::{structured_generator, GeometrySpec, Point};

    fn channel(nx: usize, ny: usize) -> Arc<Mesh> {
        let spec = GeometrySpec::Rectangle {
            origin: [0.0, 0.0],
            width: 4.0,
            height: 1.0,
            subdomain: Subdomain::Fluid,
            left: BoundaryTag::Inflow,
            right: BoundaryTag::Outflow,
            bottom: BoundaryTag::FluidWall,
            top: BoundaryTag::FluidWall,
        };
        Arc::new(structured_generator(nx, ny, &spec).unwrap())
    }

    fn velocity_at(op: &StokesOperator, s: &StokesState, e: usize, bary: [f64; 3]) -> Point {
        let vel = op.velocity_space();
        let geo = op.mesh().geometry(e);
        let basis = crate::fem::scalar_basis(SpaceKind::P1Bubble, &geo, bary);
        let ns = vel.n_scalar_dofs();
        let d = vel.local_dofs(e);
        let mut u = Point::zeros();
        for j in 0..4 {
            u.x += basis.values[j] * s.u[d[j]];
            u.y += basis.values[j] * s.u[ns + d[j]];
        }
        u
    }

    #[test]
    fn steady_poiseuille() {
        let mesh = channel(32, 8);
        let options = StokesOptions {
            inflow: InflowBc::Parabolic { peak: 1.0 },
            outflow: OutflowBc::NoTangential,
            interface: InterfaceBc::Wall,
        };
        let op = StokesOperator::new(mesh.clone(), MechParams::default(), options, None).unwrap();
        let solver = StokesSolver::new(op).unwrap();
        let s = solver.step(&solver.operator().zero_state()).unwrap();
        let op = solver.operator();
        let rule = QuadratureRule::triangle(4);
        let (mut e2, mut r2) = (0.0, 0.0);
        for e in 0..mesh.n_elements() {
            let geo = mesh.geometry(e);
            for (b, w) in rule.on_element(geo.area) {
                let x = geo.map(b);
                let exact = Point::new(4.0 * x.y * (1.0 - x.y), 0.0);
                e2 += w * (velocity_at(op, &s, e, b) - exact).norm_squared();
                r2 += w * exact.norm_squared();
            }
        }
        let rel = (e2 / r2).sqrt();
        assert!(rel < 0.02, "relative L2 error {rel}");
        // pressure drop 8 μ U L / H² along the channel, zero at the outlet
        let mu = MechParams::default().mu_f;
        let pres = op.pressure_space();
        for (v, x) in mesh.vertices.iter().enumerate() {
            let p = s.p[pres.vertex_dof(v).unwrap()];
            let exact = 8.0 * mu * (4.0 - x.x);
            assert!(
                (p - exact).abs() < 0.05 * 32.0 * mu,
                "p at {x:?}: {p} vs {exact}"
            );
        }
        let div = op.divergence_residual(&s).unwrap();
        assert!(div.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn zero_forcing_zero_flow() {
        let params = MechParams {
            p_max: 0.0,
            ..Default::default()
        };
        let op = StokesOperator::new(channel(6, 3), params, StokesOptions::default(), Some(0.1))
            .unwrap();
        let solver = StokesSolver::new(op).unwrap();
        let s = solver.step(&solver.operator().zero_state()).unwrap();
        assert!(s.u.iter().chain(&s.p).all(|&v| v == 0.0));
    }

    #[test]
    fn pressure_driven_flow_runs_downstream_and_loses_energy_when_released() {
        let op = StokesOperator::new(
            channel(8, 4),
            MechParams::default(),
            StokesOptions::default(),
            Some(0.1),
        )
        .unwrap();
        let solver = StokesSolver::new(op).unwrap();
        let mut s = solver.operator().zero_state();
        s = solver.step(&s).unwrap();
        let op = solver.operator();
        let mid = velocity_at(op, &s, 30, [1.0 / 3.0; 3]);
        assert!(mid.x > 0.0, "{mid:?}");
        // continue with the forcing removed
        let quiet = StokesOperator::new(
            op.mesh().clone(),
            MechParams {
                p_max: 0.0,
                ..Default::default()
            },
            StokesOptions::default(),
            Some(0.1),
        )
        .unwrap();
        let quiet = StokesSolver::new(quiet).unwrap();
        let mut e = quiet.operator().energy(&s);
        for _ in 0..3 {
            s = quiet.step(&s).unwrap();
            let e1 = quiet.operator().energy(&s);
            assert!(e1 <= e * (1.0 + 1e-12));
            e = e1;
        }
    }

    #[test]
    fn porous_only_mesh_is_rejected() {
        let mesh = Arc::new(structured_generator(2, 2, &GeometrySpec::UnitSquarePorous).unwrap());
        assert!(matches!(
            StokesOperator::new(mesh, MechParams::default(), StokesOptions::default(), None),
            Err(StokesError::EmptyRegion)
        ));
    }
}
