//! Symmetric quadrature on the reference triangle and Gauss–Legendre rules on
//! faces. Triangle weights sum to the reference area 1/2; line weights sum to 1.

/// Quadrature rule on the reference triangle, points in barycentric form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        pts.push(p);
        wts.push(w);
    }
}

fn orbit6(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        pts.push(p);
        wts.push(w);
    }
}

impl QuadratureRule {
    /// Smallest tabulated rule exact for polynomials of total degree `degree` (max 6).
    pub fn triangle(degree: usize) -> Self {
        let mut p = Vec::new();
        let mut w = Vec::new();
        let exact = match degree {
            0 | 1 => {
                p.push([1.0 / 3.0; 3]);
                w.push(1.0);
                1
            }
            2 => {
                orbit3(1.0 / 6.0, 1.0 / 3.0, &mut p, &mut w);
                2
            }
            3 | 4 => {
                orbit3(0.445_948_490_915_965, 0.223_381_589_678_011, &mut p, &mut w);
                orbit3(0.091_576_213_509_771, 0.109_951_743_655_322, &mut p, &mut w);
                4
            }
            5 => {
                p.push([1.0 / 3.0; 3]);
                w.push(0.225);
                orbit3(0.470_142_064_105_115, 0.132_394_152_788_506, &mut p, &mut w);
                orbit3(0.101_286_507_323_456, 0.125_939_180_544_827, &mut p, &mut w);
                5
            }
            6 => {
                orbit3(0.063_089_014_491_502, 0.050_844_906_370_207, &mut p, &mut w);
                orbit3(0.249_286_745_170_910, 0.116_786_275_726_379, &mut p, &mut w);
                orbit6(
                    0.053_145_049_844_817,
                    0.310_352_451_033_784,
                    0.082_851_075_618_374,
                    &mut p,
                    &mut w,
                );
                6
            }
            d => panic!("no triangle rule tabulated for degree {d}"),
        };
        // tabulated weights are normalised to 1; rescale to the reference area
        let sum: f64 = w.iter().sum();
        let weights = w.iter().map(|x| 0.5 * x / sum).collect();
        QuadratureRule {
            points: p,
            weights,
            degree: exact,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Iterates `(barycentric point, weight scaled to an element of the given area)`.
    pub fn on_element(&self, area: f64) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        let scale = 2.0 * area;
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().map(move |w| w * scale))
    }
}

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl LineRule {
    pub fn gauss(n: usize) -> Self {
        let (x, w): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = 1.0 / 3f64.sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = (3.0f64 / 5.0).sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => {
                let s = (6.0f64 / 5.0).sqrt() * 2.0 / 7.0;
                let a = (3.0 / 7.0 - s).sqrt();
                let b = (3.0 / 7.0 + s).sqrt();
                let wa = (18.0 + 30f64.sqrt()) / 36.0;
                let wb = (18.0 - 30f64.sqrt()) / 36.0;
                (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
            }
            k => panic!("no Gauss rule with {k} points"),
        };
        LineRule {
            points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|v| 0.5 * v).collect(),
            degree: 2 * n - 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_monomial_exactness() {
        for deg in 1..=6 {
            let rule = QuadratureRule::triangle(deg);
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for i in 0..=rule.degree as u32 {
                for j in 0..=(rule.degree as u32 - i) {
                    let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(i as i32) * p[2].powi(j as i32))
                        .sum();
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "degree {deg}: x^{i} y^{j}: {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn line_exactness() {
        for n in 1..=4 {
            let r = LineRule::gauss(n);
            for k in 0..=r.degree as i32 {
                let approx: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(t, w)| w * t.powi(k))
                    .sum();
                assert!((approx - 1.0 / (k as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
