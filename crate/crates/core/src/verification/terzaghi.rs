//! One-dimensional consolidation of a loaded column, emulated by a thin strip:
//! lateral displacement fixed, impermeable fixed base, drained loaded top.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConvergenceError, ConvergenceReport};
use crate::fem::QuadratureRule;
use crate::mesh::{structured_generator, BoundaryTag, GeometrySpec, Mesh, Point, Subdomain};
use crate::poro::{
    lame_from_table, BiotOperator, DisplacementBc, FlowBc, MechParams, PoroBoundary, PoroError,
    PoroLoads, PoroMode, PoroSolver,
};

pub const SERIES_TERMS: usize = 50;

/// Normalised excess pressure `p/p_i` at depth `z` below the drained top of a
/// column of height `l`, time factor `t_v = c_v t / l²`.
pub fn series_pressure(z: f64, l: f64, t_v: f64) -> f64 {
    (0..SERIES_TERMS)
        .map(|k| {
            let m = (2 * k + 1) as f64;
            4.0 / (PI * m) * (m * PI * z / (2.0 * l)).sin() * (-m * m * PI * PI * t_v / 4.0).exp()
        })
        .sum()
}

/// Degree of consolidation `U = 1 − p̄/p_i`.
pub fn series_degree(t_v: f64) -> f64 {
    1.0 - (0..SERIES_TERMS)
        .map(|k| {
            let m = (2 * k + 1) as f64;
            8.0 / (m * m * PI * PI) * (-m * m * PI * PI * t_v / 4.0).exp()
        })
        .sum::<f64>()
}

/// `c_v = K / (1/M + α²/(λ + 2μ))`.
pub fn consolidation_coefficient(p: &MechParams) -> Result<f64, PoroError> {
    let (l, m) = lame_from_table(p)?;
    Ok(p.mobility() / (p.inv_m + p.alpha_biot * p.alpha_biot / (l + 2.0 * m)))
}

/// Undrained pressure right after applying `load`: `α q / (α² + (λ+2μ)/M)`.
pub fn initial_pressure(p: &MechParams, load: f64) -> Result<f64, PoroError> {
    let (l, m) = lame_from_table(p)?;
    Ok(p.alpha_biot * load / (p.alpha_biot * p.alpha_biot + (l + 2.0 * m) * p.inv_m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerzaghiSetup {
    pub params: MechParams,
    /// column height, mm
    pub height: f64,
    /// top load, MPa
    pub load: f64,
    /// final time factor
    pub t_v_end: f64,
    /// rows of the coarsest level
    pub base_rows: usize,
    /// time steps of the coarsest level (both double per level)
    pub base_steps: usize,
}

impl Default for TerzaghiSetup {
    fn default() -> Self {
        TerzaghiSetup {
            params: MechParams {
                inv_m: 0.0,
                ..MechParams::default()
            },
            height: 1.0,
            load: 1.0,
            t_v_end: 1.0,
            base_rows: 16,
            base_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerzaghiLevel {
    pub rows: usize,
    pub steps: usize,
    pub h: f64,
    /// degree of consolidation at `t_v_end`
    pub degree: f64,
    pub degree_exact: f64,
    /// space–time relative L² error of the pore pressure
    pub pressure_error: f64,
    /// `p̄/p_i` after the first step and its series value
    pub first_step_pressure: f64,
    pub first_step_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerzaghiReport {
    pub levels: Vec<TerzaghiLevel>,
    pub convergence: ConvergenceReport,
}

impl TerzaghiReport {
    pub fn finest(&self) -> &TerzaghiLevel {
        self.levels.last().expect("at least one level")
    }

    pub fn errors_decrease(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].pressure_error < w[0].pressure_error)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>6} {:>6} {:>10} {:>10} {:>10} {:>12}\n",
            "rows", "steps", "h", "U", "U_exact", "rel_L2(p)"
        );
        for l in &self.levels {
            s += &format!(
                "{:>6} {:>6} {:>10.4e} {:>10.6} {:>10.6} {:>12.4e}\n",
                l.rows, l.steps, l.h, l.degree, l.degree_exact, l.pressure_error
            );
        }
        s += &self.convergence.table();
        s
    }
}

fn strip(setup: &TerzaghiSetup, rows: usize) -> Result<Arc<Mesh>, crate::mesh::MeshError> {
    let h = setup.height / rows as f64;
    let spec = GeometrySpec::Rectangle {
        origin: [0.0, 0.0],
        width: h,
        height: setup.height,
        subdomain: Subdomain::Porous,
        left: BoundaryTag::Free,
        right: BoundaryTag::Free,
        bottom: BoundaryTag::PorousWall,
        top: BoundaryTag::Inflow,
    };
    Ok(Arc::new(structured_generator(1, rows, &spec)?))
}

pub fn boundary() -> PoroBoundary {
    PoroBoundary::default()
        .with(
            BoundaryTag::PorousWall,
            DisplacementBc::Fixed,
            FlowBc::NoFlux,
        )
        .with(BoundaryTag::Free, DisplacementBc::FixedX, FlowBc::NoFlux)
        .with(BoundaryTag::Inflow, DisplacementBc::Free, FlowBc::Drained)
}

pub fn run_level(
    setup: &TerzaghiSetup,
    rows: usize,
    steps: usize,
) -> Result<TerzaghiLevel, PoroError> {
    let mesh = strip(setup, rows).map_err(|e| {
        PoroError::Invalid(crate::validate::ValidationError::new(
            "mesh",
            e,
            "valid strip",
        ))
    })?;
    let c_v = consolidation_coefficient(&setup.params)?;
    let p_i = initial_pressure(&setup.params, setup.load)?;
    let l = setup.height;
    let t_end = setup.t_v_end * l * l / c_v;
    let dt = t_end / steps as f64;
    let op = BiotOperator::new(
        mesh.clone(),
        setup.params,
        boundary(),
        dt,
        PoroMode::QuasiStatic,
    )?;
    let solver = PoroSolver::new(op)?;
    let loads = PoroLoads {
        normal_pressure: [(BoundaryTag::Inflow, setup.load)].into(),
        pore_pressure: [(BoundaryTag::Inflow, 0.0)].into(),
    };
    let pres = solver.operator().pressure_space().clone();
    let rule = QuadratureRule::triangle(4);
    let area = mesh.total_area();
    let mut state = solver.operator().zero_state();
    let (mut err2, mut ref2) = (0.0, 0.0);
    let mut first = (0.0, 0.0);
    let mut mean = 0.0;
    for n in 1..=steps {
        state = solver.step(&state, &loads, dt)?;
        let t_v = c_v * state.t / (l * l);
        mean = 0.0;
        for e in pres.active_elements() {
            let geo = mesh.geometry(e);
            let ph = state.p[pres.local_dofs(e)[0]] / p_i;
            mean += ph * geo.area;
            for (b, w) in rule.on_element(geo.area) {
                let x: Point = geo.map(b);
                let pe = series_pressure(l - x.y, l, t_v);
                err2 += dt * w * (ph - pe).powi(2);
                ref2 += dt * w * pe * pe;
            }
        }
        mean /= area;
        if n == 1 {
            first = (mean, 1.0 - series_degree(t_v));
        }
    }
    Ok(TerzaghiLevel {
        rows,
        steps,
        h: l / rows as f64,
        degree: 1.0 - mean,
        degree_exact: series_degree(setup.t_v_end),
        pressure_error: (err2 / ref2).sqrt(),
        first_step_pressure: first.0,
        first_step_exact: first.1,
    })
}

/// Runs `levels` levels, doubling rows and time steps each time.
pub fn terzaghi(setup: &TerzaghiSetup, levels: usize) -> Result<TerzaghiReport, TerzaghiError> {
    if levels < 3 {
        return Err(ConvergenceError::TooFewLevels(levels).into());
    }
    let runs: Vec<TerzaghiLevel> = (0..levels)
        .into_par_iter()
        .map(|i| run_level(setup, setup.base_rows << i, setup.base_steps << i))
        .collect::<Result<_, _>>()?;
    let convergence = ConvergenceReport::new(
        runs.iter().map(|l| l.h).collect(),
        vec![(
            "p".into(),
            runs.iter().map(|l| l.pressure_error).collect(),
            None,
        )],
    )?;
    Ok(TerzaghiReport {
        levels: runs,
        convergence,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum TerzaghiError {
    #[error(transparent)]
    Poro(#[from] PoroError),
    #[error(transparent)]
    Convergence(#[from] ConvergenceError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_values() {
        assert!((series_degree(1.0) - 0.9313).abs() < 1e-4);
        assert!(series_degree(0.0).abs() < 2e-2);
        // fully drained at the top, undrained deep inside at early times
        assert!(series_pressure(0.0, 1.0, 0.1).abs() < 1e-14);
        assert!((series_pressure(1.0, 1.0, 1e-3) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn incompressible_limit_initial_pressure_equals_load() {
        let p = MechParams {
            inv_m: 0.0,
            ..Default::default()
        };
        assert!((initial_pressure(&p, 2.5).unwrap() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn coarse_column_is_close() {
        let lvl = run_level(&TerzaghiSetup::default(), 8, 25).unwrap();
        assert!((lvl.degree - lvl.degree_exact).abs() < 0.03, "{lvl:?}");
    }

    #[test]
    fn doubling_permeability_doubles_the_time_factor() {
        let base = TerzaghiSetup {
            t_v_end: 0.25,
            ..Default::default()
        };
        let fast = TerzaghiSetup {
            params: MechParams {
                kappa: 2.0 * base.params.kappa,
                ..base.params
            },
            t_v_end: 0.5,
            ..base
        };
        let t_end = |s: &TerzaghiSetup| {
            s.t_v_end * s.height * s.height / consolidation_coefficient(&s.params).unwrap()
        };
        assert!((t_end(&base) - t_end(&fast)).abs() <= 1e-12 * t_end(&base));
        let (a, b) = (
            run_level(&base, 16, 100).unwrap(),
            run_level(&fast, 16, 100).unwrap(),
        );
        assert!((a.degree - series_degree(0.25)).abs() < 0.02, "{a:?}");
        assert!((b.degree - series_degree(0.5)).abs() < 0.02, "{b:?}");
        assert!(b.degree > a.degree + 0.1);
    }
}
