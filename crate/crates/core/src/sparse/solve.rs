use std::sync::Once;

use faer::prelude::Solve;
use serde::{Deserialize, Serialize};

use super::{dot, norm2, residual_norm, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    DirectLu,
    Gmres,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    Jacobi,
    Ilu0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSolverConfig {
    pub method: SolveMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
    /// Krylov subspace size between GMRES restarts.
    pub restart: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            method: SolveMethod::DirectLu,
            tolerance: 1e-10,
            max_iterations: 10_000,
            preconditioner: Preconditioner::Ilu0,
            restart: 50,
        }
    }
}

impl LinearSolverConfig {
    pub fn direct() -> Self {
        Self::default()
    }

    pub fn gmres(tolerance: f64, preconditioner: Preconditioner) -> Self {
        LinearSolverConfig {
            method: SolveMethod::Gmres,
            tolerance,
            preconditioner,
            ..Self::default()
        }
    }

    pub fn bicgstab(tolerance: f64, preconditioner: Preconditioner) -> Self {
        LinearSolverConfig {
            method: SolveMethod::BiCgStab,
            tolerance,
            preconditioner,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tolerance > 0.0) {
            return Err(format!(
                "solver tolerance must be > 0, got {}",
                self.tolerance
            ));
        }
        if self.max_iterations == 0 || self.restart == 0 {
            return Err("solver iteration limits must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("dimension mismatch: matrix {nrows}x{ncols}, rhs {rhs}")]
    Dimension {
        nrows: usize,
        ncols: usize,
        rhs: usize,
    },
    #[error("singular factorization: zero pivot at row {row}")]
    SingularPivot { row: usize },
    #[error(
        "iterative solver broke down at iteration {iteration} (relative residual {residual:e})"
    )]
    Breakdown { iteration: usize, residual: f64 },
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`, recomputed from the returned solution.
    pub relative_residual: f64,
}

static SEQUENTIAL: Once = Once::new();

fn force_sequential_factorization() {
    // bitwise reproducibility of direct solves
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Sparse LU factorisation that can be reused for many right-hand sides.
pub struct LuFactor {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    matrix: CsrMatrix,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

/// Power-of-two row then column equilibration (exact in floating point).
fn equilibrate(a: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let pow2 = |m: f64| {
        if m > 0.0 && m.is_finite() {
            2f64.powi(-(m.log2().round() as i32))
        } else {
            1.0
        }
    };
    let r: Vec<f64> = (0..a.nrows())
        .map(|i| pow2(a.row(i).fold(0.0, |m, (_, v)| m.max(v.abs()))))
        .collect();
    let mut cmax = vec![0.0f64; a.ncols()];
    for (i, ri) in r.iter().enumerate() {
        for (j, v) in a.row(i) {
            cmax[j] = cmax[j].max((v * ri).abs());
        }
    }
    (r, cmax.into_iter().map(pow2).collect())
}

impl std::fmt::Debug for LuFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactor")
            .field("n", &self.matrix.nrows())
            .finish()
    }
}

impl LuFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolveError> {
        force_sequential_factorization();
        if a.nrows() != a.ncols() {
            return Err(SolveError::Dimension {
                nrows: a.nrows(),
                ncols: a.ncols(),
                rhs: a.nrows(),
            });
        }
        for i in 0..a.nrows() {
            if a.row(i).all(|(_, v)| v == 0.0) {
                return Err(SolveError::SingularPivot { row: i });
            }
        }
        let (row_scale, col_scale) = equilibrate(a);
        let lu = a
            .scaled(&row_scale, &col_scale)
            .to_faer()
            .sp_lu()
            .map_err(|e| match e {
                faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                    SolveError::SingularPivot { row: index }
                }
                faer::sparse::linalg::LuError::Generic(g) => SolveError::Config(format!("{g:?}")),
            })?;
        Ok(LuFactor {
            lu,
            matrix: a.clone(),
            row_scale,
            col_scale,
        })
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = faer::Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i] * self.row_scale[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len())
            .map(|i| x[(i, 0)] * self.col_scale[i])
            .collect()
    }

    /// Solves with up to two steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveStats), SolveError> {
        let a = &self.matrix;
        if b.len() != a.nrows() {
            return Err(SolveError::Dimension {
                nrows: a.nrows(),
                ncols: a.ncols(),
                rhs: b.len(),
            });
        }
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok((
                vec![0.0; b.len()],
                SolveStats {
                    iterations: 0,
                    relative_residual: 0.0,
                },
            ));
        }
        let mut x = self.raw_solve(b);
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::SingularPivot { row });
        }
        let mut res = residual_norm(a, &x, b);
        let mut refinements = 0;
        while res > 1e-14 * bnorm && refinements < 2 {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.raw_solve(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(p, q)| p + q).collect();
            let trial_res = residual_norm(a, &trial, b);
            refinements += 1;
            if trial_res < res {
                x = trial;
                res = trial_res;
            } else {
                break;
            }
        }
        Ok((
            x,
            SolveStats {
                iterations: refinements,
                relative_residual: res / bnorm,
            },
        ))
    }
}

/// Solves `A x = b`.
///
/// Iterative methods guarantee `‖b - A x‖ <= tol ‖b‖` on success (the true
/// residual is recomputed before returning).
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, SolveStats), SolveError> {
    cfg.validate().map_err(SolveError::Config)?;
    if a.nrows() != a.ncols() || b.len() != a.nrows() {
        return Err(SolveError::Dimension {
            nrows: a.nrows(),
            ncols: a.ncols(),
            rhs: b.len(),
        });
    }
    match cfg.method {
        SolveMethod::DirectLu => LuFactor::new(a)?.solve(b),
        SolveMethod::Gmres | SolveMethod::BiCgStab => {
            let pre = Precond::new(a, cfg.preconditioner)?;
            let bnorm = norm2(b);
            if bnorm == 0.0 {
                return Ok((
                    vec![0.0; b.len()],
                    SolveStats {
                        iterations: 0,
                        relative_residual: 0.0,
                    },
                ));
            }
            let (x, it) = if cfg.method == SolveMethod::Gmres {
                gmres(a, b, &pre, cfg)?
            } else {
                bicgstab(a, b, &pre, cfg)?
            };
            let rel = residual_norm(a, &x, b) / bnorm;
            if rel > cfg.tolerance {
                return Err(SolveError::MaxIterations {
                    iterations: it,
                    residual: rel,
                });
            }
            Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: rel,
                },
            ))
        }
    }
}

enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Ilu0 { lu: CsrMatrix, diag_pos: Vec<usize> },
}

impl Precond {
    fn new(a: &CsrMatrix, kind: Preconditioner) -> Result<Self, SolveError> {
        match kind {
            Preconditioner::None => Ok(Precond::Identity),
            Preconditioner::Jacobi => {
                let d = a.diagonal();
                if let Some(row) = d.iter().position(|&v| v == 0.0) {
                    return Err(SolveError::SingularPivot { row });
                }
                Ok(Precond::Jacobi(d.iter().map(|v| 1.0 / v).collect()))
            }
            Preconditioner::Ilu0 => ilu0(a),
        }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Precond::Identity => r.to_vec(),
            Precond::Jacobi(inv) => r.iter().zip(inv).map(|(a, b)| a * b).collect(),
            Precond::Ilu0 { lu, diag_pos } => {
                let n = r.len();
                let (rp, ci, v) = (lu.row_ptr(), lu.col_idx(), lu.values());
                let mut y = r.to_vec();
                for i in 0..n {
                    let mut s = y[i];
                    for k in rp[i]..diag_pos[i] {
                        s -= v[k] * y[ci[k]];
                    }
                    y[i] = s;
                }
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in diag_pos[i] + 1..rp[i + 1] {
                        s -= v[k] * y[ci[k]];
                    }
                    y[i] = s / v[diag_pos[i]];
                }
                y
            }
        }
    }
}

fn ilu0(a: &CsrMatrix) -> Result<Precond, SolveError> {
    let n = a.nrows();
    let mut lu = a.clone();
    let rp = lu.row_ptr.clone();
    let ci = lu.col_idx.clone();
    let mut diag_pos = vec![0; n];
    for i in 0..n {
        diag_pos[i] = match ci[rp[i]..rp[i + 1]].binary_search(&i) {
            Ok(k) => rp[i] + k,
            Err(_) => return Err(SolveError::SingularPivot { row: i }),
        };
    }
    let mut pos = vec![usize::MAX; n];
    for i in 0..n {
        for k in rp[i]..rp[i + 1] {
            pos[ci[k]] = k;
        }
        for k in rp[i]..diag_pos[i] {
            let j = ci[k];
            let pivot = lu.values[diag_pos[j]];
            if pivot == 0.0 {
                return Err(SolveError::SingularPivot { row: j });
            }
            let f = lu.values[k] / pivot;
            lu.values[k] = f;
            for kk in diag_pos[j] + 1..rp[j + 1] {
                let p = pos[ci[kk]];
                if p != usize::MAX {
                    lu.values[p] -= f * lu.values[kk];
                }
            }
        }
        for k in rp[i]..rp[i + 1] {
            pos[ci[k]] = usize::MAX;
        }
        if lu.values[diag_pos[i]] == 0.0 {
            return Err(SolveError::SingularPivot { row: i });
        }
    }
    Ok(Precond::Ilu0 { lu, diag_pos })
}

/// Restarted, right-preconditioned GMRES (minimises the true residual).
fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    pre: &Precond,
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let m = cfg.restart.min(n.max(1));
    let bnorm = norm2(b);
    let target = cfg.tolerance * bnorm;
    let mut x = vec![0.0; n];
    let mut total = 0;
    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        if beta <= target {
            return Ok((x, total));
        }
        if total >= cfg.max_iterations {
            return Err(SolveError::MaxIterations {
                iterations: total,
                residual: beta / bnorm,
            });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            let zj = pre.apply(&v[j]);
            let mut w = a.matvec(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= h[i][j] * vk;
                }
            }
            h[j + 1][j] = norm2(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                return Err(SolveError::Breakdown {
                    iteration: total,
                    residual: g[j].abs() / bnorm,
                });
            }
            let hj1 = h[j + 1][j];
            cs[j] = h[j][j] / denom;
            sn[j] = hj1 / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= target || total >= cfg.max_iterations || hj1 == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hj1).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (zi, yi) in z.iter().zip(&y) {
            for (xk, zk) in x.iter_mut().zip(zi) {
                *xk += yi * zk;
            }
        }
    }
}

fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    pre: &Precond,
    cfg: &LinearSolverConfig,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let bnorm = norm2(b);
    let target = cfg.tolerance * bnorm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=cfg.max_iterations {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(SolveError::Breakdown {
                iteration: it,
                residual: norm2(&r) / bnorm,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = pre.apply(&p);
        v = a.matvec(&p_hat);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(SolveError::Breakdown {
                iteration: it,
                residual: norm2(&r) / bnorm,
            });
        }
        alpha = rho / rv;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((x, it));
        }
        let s_hat = pre.apply(&s);
        let t = a.matvec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= target {
            return Ok((x, it));
        }
    }
    Err(SolveError::MaxIterations {
        iterations: cfg.max_iterations,
        residual: norm2(&r) / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{assemble, TripletBuilder};
    use rand::{Rng, SeedableRng};

    fn laplacian(n: usize) -> CsrMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.add(i, i, 2.0);
            if i > 0 {
                t.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
            }
        }
        t.build().unwrap()
    }

    fn configs() -> Vec<LinearSolverConfig> {
        let mut v = vec![LinearSolverConfig::direct()];
        for p in [
            Preconditioner::None,
            Preconditioner::Jacobi,
            Preconditioner::Ilu0,
        ] {
            v.push(LinearSolverConfig::gmres(1e-13, p));
            v.push(LinearSolverConfig::bicgstab(1e-13, p));
        }
        v
    }

    #[test]
    fn identity_solve() {
        let a = CsrMatrix::identity(5);
        let mut e1 = vec![0.0; 5];
        e1[0] = 1.0;
        for cfg in configs() {
            let (x, _) = solve(&a, &e1, &cfg).unwrap();
            assert_eq!(x, e1, "{cfg:?}");
        }
    }

    #[test]
    fn laplacian_recovers_random_solution() {
        let n = 100;
        let a = laplacian(n);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&xs);
        for cfg in configs() {
            let (x, stats) = solve(&a, &b, &cfg).unwrap();
            let err = x
                .iter()
                .zip(&xs)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{cfg:?}: {err}");
            let rel = residual_norm(&a, &x, &b) / norm2(&b);
            assert!((rel - stats.relative_residual).abs() < 1e-15);
            assert!(rel <= cfg.tolerance.max(1e-14));
        }
    }

    #[test]
    fn saddle_point_direct() {
        // [[A, B^T], [B, 0]] with A = 1D Laplacian and B a difference operator
        let n = 20;
        let m = 5;
        let a = laplacian(n);
        let mut t = TripletBuilder::new(n + m, n + m);
        for i in 0..n {
            for (j, v) in a.row(i) {
                t.add(i, j, v);
            }
        }
        for k in 0..m {
            t.add(n + k, 4 * k, 1.0);
            t.add(n + k, 4 * k + 1, -1.0);
            t.add(4 * k, n + k, 1.0);
            t.add(4 * k + 1, n + k, -1.0);
        }
        let s = t.build().unwrap();
        let b: Vec<f64> = (0..n + m).map(|i| (i as f64).sin()).collect();
        let (x, stats) = solve(&s, &b, &LinearSolverConfig::direct()).unwrap();
        assert!(residual_norm(&s, &x, &b) / norm2(&b) <= 1e-10);
        assert!(stats.relative_residual <= 1e-10);
    }

    #[test]
    fn singular_reports_row() {
        let a = assemble(3, 3, [(0, 0, 1.0), (2, 2, 1.0), (1, 0, 0.0)]).unwrap();
        match solve(&a, &[1.0, 1.0, 1.0], &LinearSolverConfig::direct()) {
            Err(SolveError::SingularPivot { row }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_iterations_carries_residual() {
        let a = laplacian(200);
        let b = vec![1.0; 200];
        let cfg = LinearSolverConfig {
            max_iterations: 3,
            ..LinearSolverConfig::gmres(1e-12, Preconditioner::None)
        };
        match solve(&a, &b, &cfg) {
            Err(SolveError::MaxIterations {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12 && residual.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_and_config_errors() {
        let a = laplacian(3);
        assert!(matches!(
            solve(&a, &[1.0], &LinearSolverConfig::direct()),
            Err(SolveError::Dimension { .. })
        ));
        let bad = LinearSolverConfig {
            tolerance: 0.0,
            ..LinearSolverConfig::default()
        };
        assert!(matches!(
            solve(&a, &[1.0; 3], &bad),
            Err(SolveError::Config(_))
        ));
    }
}
