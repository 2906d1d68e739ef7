//! Independent oracles and convergence harnesses: the reduced ODE system,
//! Terzaghi consolidation, and manufactured solutions for the cell model.

pub mod mms;
pub mod ode;
pub mod terzaghi;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConvergence {
    pub name: String,
    pub errors: Vec<f64>,
    /// `log2(e_{i} / e_{i+1}) / log2(h_{i} / h_{i+1})` between successive levels
    pub orders: Vec<f64>,
    pub threshold: Option<f64>,
}

impl FieldConvergence {
    pub fn final_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }

    pub fn passes(&self) -> bool {
        self.threshold.map_or(true, |t| self.final_order() >= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub h: Vec<f64>,
    pub fields: Vec<FieldConvergence>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConvergenceError {
    #[error("observed orders need at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("field `{0}` has {1} errors for {2} levels")]
    Length(String, usize, usize),
}

impl ConvergenceReport {
    pub fn new(
        h: Vec<f64>,
        fields: Vec<(String, Vec<f64>, Option<f64>)>,
    ) -> Result<Self, ConvergenceError> {
        if h.len() < 3 {
            return Err(ConvergenceError::TooFewLevels(h.len()));
        }
        let mut out = Vec::new();
        for (name, errors, threshold) in fields {
            if errors.len() != h.len() {
                return Err(ConvergenceError::Length(name, errors.len(), h.len()));
            }
            let orders = (1..h.len())
                .map(|i| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln())
                .collect();
            out.push(FieldConvergence {
                name,
                errors,
                orders,
                threshold,
            });
        }
        Ok(ConvergenceReport { h, fields: out })
    }

    pub fn field(&self, name: &str) -> Option<&FieldConvergence> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn passes(&self) -> bool {
        self.fields.iter().all(FieldConvergence::passes)
    }

    /// Plain-text table: one row per level, error and order per field.
    pub fn table(&self) -> String {
        let mut s = format!("{:>12}", "h");
        for f in &self.fields {
            let _ = write!(s, " {:>14} {:>7}", format!("err({})", f.name), "order");
        }
        s.push('\n');
        for (i, h) in self.h.iter().enumerate() {
            let _ = write!(s, "{h:>12.5e}");
            for f in &self.fields {
                let order = if i == 0 {
                    "-".to_string()
                } else {
                    format!("{:.3}", f.orders[i - 1])
                };
                let _ = write!(s, " {:>14.6e} {order:>7}", f.errors[i]);
            }
            s.push('\n');
        }
        for f in &self.fields {
            if let Some(t) = f.threshold {
                let verdict = if f.passes() { "PASS" } else { "FAIL" };
                let _ = writeln!(
                    s,
                    "{}: observed order {:.3} (required >= {t}) {verdict}",
                    f.name,
                    f.final_order()
                );
            }
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("h");
        for f in &self.fields {
            let _ = write!(s, ",err_{}", f.name);
        }
        s.push('\n');
        for (i, h) in self.h.iter().enumerate() {
            let _ = write!(s, "{h}");
            for f in &self.fields {
                let _ = write!(s, ",{}", f.errors[i]);
            }
            s.push('\n');
        }
        s
    }
}
