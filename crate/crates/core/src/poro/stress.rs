use nalgebra::Matrix2;

use super::{BiotOperator, PoroState};

pub type Tensor2 = Matrix2<f64>;

/// Elementwise constant strain and stress (plane strain). Elements outside
/// the porous region hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub strain: Vec<Tensor2>,
    /// `λ tr(ε) I + 2μ ε`
    pub effective: Vec<Tensor2>,
    /// `σ_e − α p I`
    pub total: Vec<Tensor2>,
    pub von_mises: Vec<f64>,
    pub octahedral_shear: Vec<f64>,
}

/// Engineering octahedral shear strain of an in-plane strain with `ε_zz = 0`:
/// `(2/3) sqrt((εxx−εyy)² + εyy² + εxx² + 6 εxy²)`.
pub fn octahedral_shear_strain(eps: &Tensor2) -> f64 {
    let (xx, yy, xy) = (eps[(0, 0)], eps[(1, 1)], eps[(0, 1)]);
    2.0 / 3.0 * ((xx - yy).powi(2) + yy * yy + xx * xx + 6.0 * xy * xy).sqrt()
}

fn von_mises_plane_strain(sigma: &Tensor2, szz: f64) -> f64 {
    let (xx, yy, xy) = (sigma[(0, 0)], sigma[(1, 1)], sigma[(0, 1)]);
    (0.5 * ((xx - yy).powi(2) + (yy - szz).powi(2) + (szz - xx).powi(2)) + 3.0 * xy * xy).sqrt()
}

pub fn compute_stress(op: &BiotOperator, state: &PoroState) -> StressField {
    let mesh = op.mesh();
    let disp = op.displacement_space();
    let pres = op.pressure_space();
    let ns = disp.n_scalar_dofs();
    let (lambda, mu) = op.lame();
    let alpha = op.params().alpha_biot;
    let n = mesh.n_elements();
    let mut out = StressField {
        strain: vec![Tensor2::zeros(); n],
        effective: vec![Tensor2::zeros(); n],
        total: vec![Tensor2::zeros(); n],
        von_mises: vec![0.0; n],
        octahedral_shear: vec![0.0; n],
    };
    for e in disp.active_elements() {
        let g = mesh.geometry(e).grad_lambda;
        let d = disp.local_dofs(e);
        let mut grad = Tensor2::zeros();
        for j in 0..3 {
            for c in 0..2 {
                grad[(c, 0)] += state.eta[c * ns + d[j]] * g[j].x;
                grad[(c, 1)] += state.eta[c * ns + d[j]] * g[j].y;
            }
        }
        let eps = 0.5 * (grad + grad.transpose());
        let tr = eps.trace();
        let se = Tensor2::identity() * (lambda * tr) + 2.0 * mu * eps;
        let p = state.p[pres.local_dofs(e)[0]];
        let sp = se - Tensor2::identity() * (alpha * p);
        out.strain[e] = eps;
        out.effective[e] = se;
        out.total[e] = sp;
        out.von_mises[e] = von_mises_plane_strain(&sp, lambda * tr - alpha * p);
        out.octahedral_shear[e] = octahedral_shear_strain(&eps);
    }
    out
}
