use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities.
pub const DEFAULT_KL_EPS: f64 = 1e-10;

const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub clip_id: String,
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(clip_id: impl Into<String>, probs: Vec<f64>) -> Self {
        Self {
            clip_id: clip_id.into(),
            probs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "label distribution for {:?} has negative or non-finite entries",
                self.clip_id
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "label distribution for {:?} sums to {sum}, not 1",
                self.clip_id
            )));
        }
        Ok(())
    }
}

/// `D(target ‖ pred) = Σ tᵢ ln(tᵢ / max(pᵢ, eps))`; zero-probability target
/// labels contribute nothing.
pub fn label_kl(target: &LabelDistribution, pred: &LabelDistribution, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!(
            "KL floor must be positive, got {eps}"
        )));
    }
    if target.probs.len() != pred.probs.len() {
        return Err(Error::Shape(format!(
            "label dimensions differ: {} vs {}",
            target.probs.len(),
            pred.probs.len()
        )));
    }
    target.validate()?;
    pred.validate()?;
    let kl: f64 = target
        .probs
        .iter()
        .zip(&pred.probs)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| t * (t / p.max(eps)).ln())
        .sum();
    if kl < -1e-12 {
        return Err(Error::Numerical(format!(
            "KL divergence came out negative ({kl:e})"
        )));
    }
    Ok(kl.max(0.0))
}

/// Mean of per-clip KL divergences over `(target, pred)` pairs with matching
/// clip ids.
pub fn corpus_kl(pairs: &[(LabelDistribution, LabelDistribution)], eps: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("corpus KL needs at least one pair"));
    }
    let mut total = 0.0;
    for (t, p) in pairs {
        if t.clip_id != p.clip_id {
            return Err(Error::invalid(format!(
                "misaligned clips: target {:?} vs pred {:?}",
                t.clip_id, p.clip_id
            )));
        }
        total += label_kl(t, p, eps)?;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(id: &str, p: &[f64]) -> LabelDistribution {
        LabelDistribution::new(id, p.to_vec())
    }

    #[test]
    fn identical_distributions_have_zero_kl() {
        let p = d("a", &[0.2, 0.3, 0.5]);
        assert_eq!(label_kl(&p, &p, DEFAULT_KL_EPS).unwrap(), 0.0);
    }

    #[test]
    fn two_term_sum() {
        let kl = label_kl(&d("a", &[0.5, 0.5]), &d("a", &[0.25, 0.75]), DEFAULT_KL_EPS).unwrap();
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((kl - 0.143_841).abs() < 1e-6);
    }

    #[test]
    fn floored_prediction_gives_log_inverse_eps() {
        let eps = 1e-10;
        let kl = label_kl(&d("a", &[1.0, 0.0]), &d("a", &[0.0, 1.0]), eps).unwrap();
        assert!((kl - (1.0 / eps).ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = d("a", &[0.5, 0.5]);
        assert!(label_kl(&a, &d("a", &[1.0]), 1e-10).is_err());
        assert!(label_kl(&a, &d("a", &[0.7, 0.7]), 1e-10).is_err());
        assert!(label_kl(&a, &a, 0.0).is_err());
    }

    #[test]
    fn corpus_kl_is_mean_of_pairs() {
        let k1 = 0.5 * (4.0f64 / 3.0).ln();
        let pairs = vec![
            (d("x", &[0.5, 0.5]), d("x", &[0.25, 0.75])),
            (d("y", &[0.1, 0.9]), d("y", &[0.1, 0.9])),
        ];
        let got = corpus_kl(&pairs, DEFAULT_KL_EPS).unwrap();
        assert!((got - k1 / 2.0).abs() < 1e-15);
        assert_eq!(corpus_kl(&pairs[1..], DEFAULT_KL_EPS).unwrap(), 0.0);
        assert!((corpus_kl(&pairs[..1], DEFAULT_KL_EPS).unwrap() - k1).abs() < 1e-15);
    }

    #[test]
    fn corpus_kl_errors() {
        assert!(corpus_kl(&[], DEFAULT_KL_EPS).is_err());
        let pairs = vec![(d("x", &[1.0]), d("y", &[1.0]))];
        assert!(corpus_kl(&pairs, DEFAULT_KL_EPS).is_err());
    }
}
