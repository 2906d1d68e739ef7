//! Range checks shared by all parameter sets.

use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key} = {value} violates bound: {bound}")]
pub struct ValidationError {
    pub key: String,
    pub value: String,
    pub bound: String,
}

impl ValidationError {
    pub fn new(key: impl Into<String>, value: impl fmt::Display, bound: impl Into<String>) -> Self {
        ValidationError {
            key: key.into(),
            value: value.to_string(),
            bound: bound.into(),
        }
    }

    /// Prefixes the key with a section name, e.g. `nu` → `mechanics.nu`.
    pub fn within(mut self, section: &str) -> Self {
        self.key = format!("{section}.{}", self.key);
        self
    }
}

pub fn positive(key: &str, v: f64) -> Result<(), ValidationError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(key, v, "> 0"))
    }
}

pub fn non_negative(key: &str, v: f64) -> Result<(), ValidationError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(key, v, ">= 0"))
    }
}

/// Open interval `(lo, hi)`.
pub fn open(key: &str, v: f64, lo: f64, hi: f64) -> Result<(), ValidationError> {
    if v > lo && v < hi {
        Ok(())
    } else {
        Err(ValidationError::new(key, v, format!("in ({lo}, {hi})")))
    }
}

/// Half-open interval `(lo, hi]`.
pub fn left_open(key: &str, v: f64, lo: f64, hi: f64) -> Result<(), ValidationError> {
    if v > lo && v <= hi {
        Ok(())
    } else {
        Err(ValidationError::new(key, v, format!("in ({lo}, {hi}]")))
    }
}

pub fn at_least_one(key: &str, v: usize) -> Result<(), ValidationError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ValidationError::new(key, v, ">= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(positive("a", 1e-300).is_ok());
        assert!(positive("a", 0.0).is_err());
        assert!(positive("a", f64::NAN).is_err());
        assert!(open("nu", 0.5, 0.0, 0.5).is_err());
        assert!(left_open("alpha", 1.0, 0.0, 1.0).is_ok());
        let e = open("nu", 0.6, 0.0, 0.5).unwrap_err().within("mechanics");
        assert_eq!(e.key, "mechanics.nu");
        assert!(e.to_string().contains("mechanics.nu"));
    }
}
