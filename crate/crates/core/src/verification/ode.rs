//! Reduced ODE system for spatially uniform cell data:
//!
//! ```text
//! c1' = −α1 c1 + α2 c2 + β c1 (1 − c1 − c2 − k)
//! c2' =  α1 c1 − α2 c2
//! h'  = −γ1 h c2 + c2/(1 + c2)
//! k'  = −δ1 c1 k + c2
//! ```

use nalgebra::{Matrix4, Vector4};

use crate::cells::BiologyParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeRates {
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("implicit Euler Newton failed at step {step}")]
    Newton { step: usize },
}

pub fn derivative(p: &BiologyParams, r: OdeRates, y: [f64; 4]) -> [f64; 4] {
    let [c1, c2, h, k] = y;
    let transfer = r.alpha1 * c1 - r.alpha2 * c2;
    [
        -transfer + p.beta * c1 * (1.0 - c1 - c2 - k),
        transfer,
        -p.gamma1 * h * c2 + c2 / (1.0 + c2),
        -p.delta1 * c1 * k + c2,
    ]
}

fn jacobian(p: &BiologyParams, r: OdeRates, y: [f64; 4]) -> Matrix4<f64> {
    let [c1, c2, h, k] = y;
    let b = p.beta;
    Matrix4::new(
        -r.alpha1 + b * (1.0 - 2.0 * c1 - c2 - k),
        r.alpha2 - b * c1,
        0.0,
        -b * c1,
        r.alpha1,
        -r.alpha2,
        0.0,
        0.0,
        0.0,
        -p.gamma1 * h + 1.0 / ((1.0 + c2) * (1.0 + c2)),
        -p.gamma1 * c2,
        0.0,
        -p.delta1 * k,
        1.0,
        0.0,
        -p.delta1 * c1,
    )
}

/// Implicit Euler with Newton to `1e-14`; returns the state after each step
/// (index 0 is the initial value).
pub fn implicit_euler(
    p: &BiologyParams,
    r: OdeRates,
    y0: [f64; 4],
    dt: f64,
    steps: usize,
) -> Result<Vec<[f64; 4]>, OdeError> {
    let mut out = vec![y0];
    let mut y = Vector4::from(y0);
    for step in 1..=steps {
        let old = y;
        let mut converged = false;
        for _ in 0..50 {
            let f = Vector4::from(derivative(p, r, y.into()));
            let g = y - old - dt * f;
            if g.amax() < 1e-15 {
                converged = true;
                break;
            }
            let j = Matrix4::identity() - dt * jacobian(p, r, y.into());
            let dy = j.lu().solve(&g).ok_or(OdeError::Newton { step })?;
            y -= dy;
            if dy.amax() < 1e-15 * y.amax().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(OdeError::Newton { step });
        }
        out.push(y.into());
    }
    Ok(out)
}

// Dormand–Prince 5(4) tableau (autonomous system, nodes not needed)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive embedded Runge–Kutta integration with mixed absolute/relative
/// tolerance `tol`. Returns the state at each requested output time.
pub fn adaptive(
    p: &BiologyParams,
    r: OdeRates,
    y0: [f64; 4],
    outputs: &[f64],
    tol: f64,
) -> Result<Vec<[f64; 4]>, OdeError> {
    let f = |y: Vector4<f64>| Vector4::from(derivative(p, r, y.into()));
    let mut y = Vector4::from(y0);
    let mut t = 0.0;
    let mut h: f64 = 1e-3;
    let mut out = Vec::with_capacity(outputs.len());
    for &target in outputs {
        while t < target {
            let step = h.min(target - t);
            if step < 1e-14 * target.max(1.0) && target - t > step {
                return Err(OdeError::StepUnderflow { t });
            }
            let mut k = [Vector4::zeros(); 7];
            for s in 0..7 {
                let mut ys = y;
                for j in 0..s {
                    ys += step * A[s][j] * k[j];
                }
                k[s] = f(ys);
            }
            let mut y5 = y;
            let mut y4 = y;
            for s in 0..7 {
                y5 += step * B5[s] * k[s];
                y4 += step * B4[s] * k[s];
            }
            let err = (0..4)
                .map(|i| ((y5[i] - y4[i]) / (tol * (1.0 + y[i].abs().max(y5[i].abs())))).abs())
                .fold(0.0f64, f64::max);
            if err <= 1.0 {
                t += step;
                y = y5;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = step * factor;
            if h < 1e-14 {
                return Err(OdeError::StepUnderflow { t });
            }
        }
        out.push(y.into());
    }
    Ok(out)
}

/// `c' = β c (1 − c)`, `c(0) = c0`.
pub fn logistic(beta: f64, c0: f64, t: f64) -> f64 {
    c0 / (c0 + (1.0 - c0) * (-beta * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: OdeRates = OdeRates {
        alpha1: 0.05,
        alpha2: 0.05,
    };

    #[test]
    fn zero_is_fixed_point() {
        let p = BiologyParams::default();
        let traj = adaptive(&p, R, [0.0; 4], &[1.0, 10.0], 1e-12).unwrap();
        assert!(traj.iter().flatten().all(|&v| v == 0.0));
        let ie = implicit_euler(&p, R, [0.0; 4], 0.1, 10).unwrap();
        assert!(ie.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_derivative() {
        let d = derivative(&BiologyParams::default(), R, [0.5, 0.0, 0.0, 0.0]);
        let expected = [0.1, 0.025, 0.0, 0.0];
        for i in 0..4 {
            assert!((d[i] - expected[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_closed_form() {
        let p = BiologyParams::default();
        let r = OdeRates {
            alpha1: 0.0,
            alpha2: 0.0,
        };
        let times: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let traj = adaptive(&p, r, [0.1, 0.0, 0.0, 0.0], &times, 1e-12).unwrap();
        for (t, y) in times.iter().zip(&traj) {
            assert!((y[0] - logistic(p.beta, 0.1, *t)).abs() < 1e-10);
        }
    }

    #[test]
    fn implicit_euler_converges_to_adaptive() {
        let p = BiologyParams::default();
        let y0 = [0.3, 0.1, 1.0, 0.0];
        let exact = adaptive(&p, R, y0, &[2.0], 1e-12).unwrap()[0];
        let mut prev = f64::INFINITY;
        for n in [20, 40, 80] {
            let ie = implicit_euler(&p, R, y0, 2.0 / n as f64, n).unwrap();
            let err = (0..4)
                .map(|i| (ie[n][i] - exact[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < prev * 0.6);
            prev = err;
        }
    }

    #[test]
    fn hyaluron_stays_nonnegative() {
        let p = BiologyParams {
            gamma1: 2.0,
            ..Default::default()
        };
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 0.5).collect();
        for y0 in [
            [0.2, 0.5, 0.0, 0.0],
            [0.0, 3.0, 1e-3, 0.0],
            [0.5, 0.1, 0.0, 0.5],
        ] {
            let traj = adaptive(&p, R, y0, &times, 1e-12).unwrap();
            assert!(traj.iter().all(|y| y[2] >= 0.0));
        }
    }
}
