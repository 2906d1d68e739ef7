//! Mechanical stimulus and the stimulus-to-rate map.
//!
//! `S = γ_oct / a_strain + |u_p/Φ| / a_vel` per element; the differentiation
//! rates follow a trapezoidal bump over the window `[S_min, S_max]`.

use serde::{Deserialize, Serialize};

use crate::cells::RateField;
use crate::mesh::Point;
use crate::poro::{compute_stress, BiotOperator, PoroState};
use crate::validate::{self, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    ConstantRates,
    #[default]
    StressMapped,
}

/// Piecewise-affine bump: `alpha_min` outside `[s_min, s_max]`, `alpha_max`
/// on `[s_min + w, s_max − w]` with `w = ramp (s_max − s_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trapezoid {
    #[serde(rename = "S_min")]
    pub s_min: f64,
    #[serde(rename = "S_max")]
    pub s_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub ramp: f64,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Trapezoid {
            s_min: 1.0,
            s_max: 3.0,
            alpha_min: 0.05,
            alpha_max: 0.1,
            ramp: 0.1,
        }
    }
}

impl Trapezoid {
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate::non_negative("S_min", self.s_min)?;
        if !(self.s_max > self.s_min) || !self.s_max.is_finite() {
            return Err(ValidationError::new(
                "S_max",
                self.s_max,
                "finite and > S_min",
            ));
        }
        validate::non_negative("alpha_min", self.alpha_min)?;
        if !(self.alpha_max >= self.alpha_min) || !self.alpha_max.is_finite() {
            return Err(ValidationError::new(
                "alpha_max",
                self.alpha_max,
                "finite and >= alpha_min",
            ));
        }
        if !(self.ramp > 0.0 && self.ramp <= 0.5) {
            return Err(ValidationError::new("ramp", self.ramp, "in (0, 0.5]"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.ramp * (self.s_max - self.s_min)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let w = self.width();
        let (lo, hi) = (self.alpha_min, self.alpha_max);
        if !(s > self.s_min && s < self.s_max) {
            lo
        } else if s < self.s_min + w {
            lo + (hi - lo) * (s - self.s_min) / w
        } else if s > self.s_max - w {
            lo + (hi - lo) * (self.s_max - s) / w
        } else {
            hi
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_min && s <= self.s_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StimulusParams {
    #[serde(rename = "S_min")]
    pub s_min: f64,
    #[serde(rename = "S_max")]
    pub s_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// ramp fraction ρ_r
    pub ramp: f64,
    /// octahedral shear strain scale (placeholder; not published)
    pub a_strain: f64,
    /// seepage speed scale, mm/s (placeholder; not published)
    pub a_vel: f64,
    pub mode: RateMode,
    /// rates used in constant-rates mode
    pub alpha1: f64,
    pub alpha2: f64,
    /// separate map for α₂; α₂ follows `window` when absent
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2_window: Option<Trapezoid>,
}

impl Default for StimulusParams {
    fn default() -> Self {
        let w = Trapezoid::default();
        StimulusParams {
            s_min: w.s_min,
            s_max: w.s_max,
            alpha_min: w.alpha_min,
            alpha_max: w.alpha_max,
            ramp: w.ramp,
            a_strain: 0.0375,
            a_vel: 0.003,
            mode: RateMode::StressMapped,
            alpha1: 0.05,
            alpha2: 0.05,
            alpha2_window: None,
        }
    }
}

impl StimulusParams {
    /// The α₁ map.
    pub fn window(&self) -> Trapezoid {
        Trapezoid {
            s_min: self.s_min,
            s_max: self.s_max,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            ramp: self.ramp,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.window().validate()?;
        if let Some(w) = &self.alpha2_window {
            w.validate().map_err(|e| e.within("alpha2_window"))?;
        }
        validate::positive("a_strain", self.a_strain)?;
        validate::positive("a_vel", self.a_vel)?;
        validate::non_negative("alpha1", self.alpha1)?;
        validate::non_negative("alpha2", self.alpha2)
    }

    pub fn alpha2_map(&self) -> Trapezoid {
        self.alpha2_window.unwrap_or(self.window())
    }
}

/// Elementwise stimulus; zero outside the porous region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusField {
    pub s: Vec<f64>,
}

impl StimulusField {
    pub fn zeros(n_elements: usize) -> Self {
        StimulusField {
            s: vec![0.0; n_elements],
        }
    }

    /// Share of `elements` whose stimulus lies in the window.
    pub fn occupancy(&self, window: &Trapezoid, elements: impl IntoIterator<Item = usize>) -> f64 {
        let (mut inside, mut total) = (0usize, 0usize);
        for e in elements {
            total += 1;
            if window.contains(self.s[e]) {
                inside += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            inside as f64 / total as f64
        }
    }
}

/// `S = γ_oct / a_strain + |v| / a_vel` from per-element octahedral shear
/// strain and seepage velocity.
pub fn stimulus_from_parts(
    octahedral: &[f64],
    seepage: &[Point],
    p: &StimulusParams,
) -> StimulusField {
    StimulusField {
        s: octahedral
            .iter()
            .zip(seepage)
            .map(|(g, v)| g / p.a_strain + v.norm() / p.a_vel)
            .collect(),
    }
}

pub fn compute_stimulus(op: &BiotOperator, state: &PoroState, p: &StimulusParams) -> StimulusField {
    let stress = compute_stress(op, state);
    let phi = op.params().phi;
    let seepage: Vec<Point> = op
        .darcy_velocity(state)
        .into_iter()
        .map(|v| v / phi)
        .collect();
    stimulus_from_parts(&stress.octahedral_shear, &seepage, p)
}

/// Rates per element for the configured mode.
pub fn rate_map(field: &StimulusField, p: &StimulusParams) -> RateField {
    match p.mode {
        RateMode::ConstantRates => RateField::constant(field.s.len(), p.alpha1, p.alpha2),
        RateMode::StressMapped => {
            let (m1, m2) = (p.window(), p.alpha2_map());
            RateField {
                alpha1: field.s.iter().map(|&s| m1.eval(s)).collect(),
                alpha2: field.s.iter().map(|&s| m2.eval(s)).collect(),
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StimulusError {
    #[error("stress-mapped rates requested at biology step {step} before any mechanics solution")]
    StaleMechanics { step: usize },
    #[error("stimulus has {got} elements, mesh has {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Holds the latest stimulus and hands out rates to the biology loop,
/// refreshing them every `cadence` steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coupler {
    params: StimulusParams,
    cadence: usize,
    n_elements: usize,
    stimulus: Option<StimulusField>,
    rates: Option<RateField>,
    refreshed_at: Option<usize>,
}

impl Coupler {
    pub fn new(
        params: StimulusParams,
        cadence: usize,
        n_elements: usize,
    ) -> Result<Self, ValidationError> {
        params.validate()?;
        validate::at_least_one("rate_cadence", cadence)?;
        Ok(Coupler {
            params,
            cadence,
            n_elements,
            stimulus: None,
            rates: None,
            refreshed_at: None,
        })
    }

    pub fn params(&self) -> &StimulusParams {
        &self.params
    }

    pub fn stimulus(&self) -> Option<&StimulusField> {
        self.stimulus.as_ref()
    }

    /// Records a fresh mechanics snapshot.
    pub fn update(&mut self, stimulus: StimulusField) -> Result<(), StimulusError> {
        if stimulus.s.len() != self.n_elements {
            return Err(StimulusError::Dimension {
                expected: self.n_elements,
                got: stimulus.s.len(),
            });
        }
        self.stimulus = Some(stimulus);
        Ok(())
    }

    /// Rates for biology step `step` (1-based).
    pub fn rates(&mut self, step: usize) -> Result<RateField, StimulusError> {
        if self.params.mode == RateMode::ConstantRates {
            return Ok(RateField::constant(
                self.n_elements,
                self.params.alpha1,
                self.params.alpha2,
            ));
        }
        let due = match self.refreshed_at {
            None => true,
            Some(last) => step >= last + self.cadence,
        };
        if due || self.rates.is_none() {
            let s = self
                .stimulus
                .as_ref()
                .ok_or(StimulusError::StaleMechanics { step })?;
            self.rates = Some(rate_map(s, &self.params));
            self.refreshed_at = Some(step);
        }
        Ok(self.rates.clone().expect("rates set above"))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn table_values() {
        let p = StimulusParams::default();
        let w = p.window();
        assert_eq!(w.eval(0.0), 0.05);
        assert_eq!(w.eval(2.0), 0.1);
        let mid = w.s_min + w.width() / 2.0;
        assert!((w.eval(mid) - 0.075).abs() < 1e-15);
        assert_eq!(w.eval(1.0), 0.05);
        assert_eq!(w.eval(3.0), 0.05);
    }

    #[test]
    fn stimulus_by_definition() {
        let p = StimulusParams::default();
        let s = stimulus_from_parts(
            &[0.0, 0.0375],
            &[Point::new(0.0, 2.0 * p.a_vel), Point::zeros()],
            &p,
        );
        assert!((s.s[0] - 2.0).abs() < 1e-15);
        assert!((s.s[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_stimulus_gives_minimum_rates() {
        let mut c = Coupler::new(StimulusParams::default(), 1, 4).unwrap();
        assert_eq!(c.rates(1), Err(StimulusError::StaleMechanics { step: 1 }));
        c.update(StimulusField::zeros(4)).unwrap();
        let r = c.rates(1).unwrap();
        assert!(r.alpha1.iter().chain(&r.alpha2).all(|&a| a == 0.05));
    }

    #[test]
    fn cadence_holds_rates_between_refreshes() {
        let mut c = Coupler::new(StimulusParams::default(), 3, 1).unwrap();
        c.update(StimulusField { s: vec![0.0] }).unwrap();
        assert_eq!(c.rates(1).unwrap().alpha1[0], 0.05);
        c.update(StimulusField { s: vec![2.0] }).unwrap();
        assert_eq!(c.rates(2).unwrap().alpha1[0], 0.05);
        assert_eq!(c.rates(4).unwrap().alpha1[0], 0.1);
    }

    #[test]
    fn constant_mode_ignores_mechanics() {
        let p = StimulusParams {
            mode: RateMode::ConstantRates,
            alpha1: 0.07,
            ..Default::default()
        };
        let mut c = Coupler::new(p, 1, 2).unwrap();
        let r = c.rates(1).unwrap();
        assert_eq!(r.alpha1, vec![0.07; 2]);
        assert_eq!(r.alpha2, vec![0.05; 2]);
    }

    #[test]
    fn invalid_window_names_key() {
        let p = StimulusParams {
            s_max: 0.5,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().key, "S_max");
        let p = StimulusParams {
            ramp: 0.7,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().key, "ramp");
    }

    #[test]
    fn dense_sampling_is_continuous() {
        let w = Trapezoid::default();
        let mut prev_jump = f64::INFINITY;
        for n in [1_000usize, 10_000, 100_000] {
            let jump = (0..n)
                .map(|i| {
                    let (a, b) = (4.0 * i as f64 / n as f64, 4.0 * (i + 1) as f64 / n as f64);
                    (w.eval(b) - w.eval(a)).abs()
                })
                .fold(0.0, f64::max);
            assert!(jump < prev_jump);
            prev_jump = jump;
        }
        assert!(prev_jump < 1e-3);
    }

    fn window() -> impl Strategy<Value = Trapezoid> {
        (
            0.0..5.0f64,
            0.01..5.0f64,
            0.0..1.0f64,
            0.0..1.0f64,
            0.01..=0.5f64,
        )
            .prop_map(|(lo, span, a, da, ramp)| Trapezoid {
                s_min: lo,
                s_max: lo + span,
                alpha_min: a,
                alpha_max: a + da,
                ramp,
            })
    }

    proptest! {
        #[test]
        fn output_within_bounds(w in window(), s in -10.0..20.0f64) {
            let a = w.eval(s);
            prop_assert!(a >= w.alpha_min && a <= w.alpha_max);
        }

        #[test]
        fn monotone_ramps(w in window(), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let up = |t: f64| w.eval(w.s_min + t * w.width());
            let down = |t: f64| w.eval(w.s_max - w.width() + t * w.width());
            prop_assert!(up(t1) <= up(t2) + 1e-15);
            prop_assert!(down(t1) + 1e-15 >= down(t2));
        }

        #[test]
        fn homogeneous_in_each_part(g in 0.0..1.0f64, vx in -1.0..1.0f64, vy in -1.0..1.0f64, k in 0.0..10.0f64) {
            let p = StimulusParams::default();
            let v = Point::new(vx, vy);
            let base = stimulus_from_parts(&[g], &[v], &p).s[0];
            let strain_only = stimulus_from_parts(&[k * g], &[Point::zeros()], &p).s[0];
            let vel_only = stimulus_from_parts(&[0.0], &[k * v], &p).s[0];
            let both = stimulus_from_parts(&[k * g], &[k * v], &p).s[0];
            prop_assert!((strain_only - k * g / p.a_strain).abs() <= 1e-12 * (1.0 + strain_only));
            prop_assert!((vel_only - k * v.norm() / p.a_vel).abs() <= 1e-9 * (1.0 + vel_only));
            prop_assert!((both - k * base).abs() <= 1e-9 * (1.0 + both));
        }
    }
}
