//! The family `D_s = {p in [0,1]^T : sum_t p_t^s <= 1}` read through
//! `x -> |<p, x>|`.

use super::Feature;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsFamily {
    pub horizon: usize,
    pub s: f64,
}

impl DsFamily {
    pub const SLACK: f64 = 1e-12;

    pub fn new(horizon: usize, s: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("D_s horizon must be positive".into()));
        }
        if !(s >= 1.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("D_s exponent {s} must be finite and >= 1")));
        }
        Ok(Self { horizon, s })
    }

    pub fn check_member(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                expected: self.horizon,
                got: p.len(),
            });
        }
        if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbability(*v));
        }
        let mass: f64 = p.iter().map(|v| v.powf(self.s)).sum();
        if mass > 1.0 + Self::SLACK {
            return Err(Error::OutsideBall {
                norm: mass,
                radius: 1.0,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn eval_raw(&self, p: &[f64], x: &Feature) -> f64 {
        x.dot(p).abs().min(1.0)
    }

    /// `ln sup_{p in D_s} p(y^T)` for a sequence with `k` ones on distinct
    /// basis features: `-(k/s) ln k`, zero for `k = 0`.
    pub fn log_sup(k: usize, s: f64) -> f64 {
        if k <= 1 {
            0.0
        } else {
            -(k as f64 / s) * (k as f64).ln()
        }
    }
}

/// Maps `p` into `D_s`: unchanged when `sum p_t^s <= 1`, otherwise rescaled
/// by `(sum p_t^s)^{-1/s}`. Entries are first clamped into `[0, 1]`.
pub fn ds_project(p: &[f64], s: f64) -> Vec<f64> {
    let mut q: Vec<f64> = p
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
        .collect();
    let mass: f64 = q.iter().map(|v| v.powf(s)).sum();
    if mass > 1.0 {
        let scale = mass.powf(-1.0 / s);
        for v in q.iter_mut() {
            *v *= scale;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(ds_project(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
        assert_eq!(ds_project(&[1.0, 1.0], 1.0), vec![0.5, 0.5]);
        assert_eq!(ds_project(&[1.0, 0.0, 0.0], 2.0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn log_sup_examples() {
        assert!((DsFamily::log_sup(2, 1.0) - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(DsFamily::log_sup(0, 2.0), 0.0);
        assert_eq!(DsFamily::log_sup(1, 3.0), 0.0);
    }

    proptest! {
        #[test]
        fn projection_lands_in_family(
            p in proptest::collection::vec(0.0f64..=1.0, 1..8),
            s in 1.0f64..6.0,
        ) {
            let fam = DsFamily::new(p.len(), s).unwrap();
            let q = ds_project(&p, s);
            prop_assert!(fam.check_member(&q).is_ok());
        }
    }
}
