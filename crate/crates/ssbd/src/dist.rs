//! Next-token probability distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::TokenId;

/// Absolute tolerance for normalization checks.
pub const DIST_TOL: f64 = 1e-9;

/// A normalized next-token distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<ProbDist> {
        if probs.is_empty() {
            return Err(Error::Validation("empty distribution".into()));
        }
        let mut sum = 0.0;
        for (i, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::Validation(format!(
                    "probability {p} at id {i} is not a finite non-negative value"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DIST_TOL {
            return Err(Error::Validation(format!(
                "distribution sums to {sum}, expected 1 within {DIST_TOL:e}"
            )));
        }
        Ok(ProbDist { probs })
    }

    pub fn uniform(size: usize) -> ProbDist {
        ProbDist {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn one_hot(size: usize, id: TokenId) -> ProbDist {
        let mut probs = vec![0.0; size];
        probs[id.index()] = 1.0;
        ProbDist { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs[id.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Lowest token id among the maxima. Deterministic tie-break.
    pub fn canonical_argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }
}

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<ProbDist> {
        ProbDist::new(probs)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(d: ProbDist) -> Vec<f64> {
        d.probs
    }
}

/// Softmax normalization for backends emitting unnormalized scores.
/// Order-preserving: the argmax of the logits is the argmax of the output.
pub fn logits_to_probs(logits: &[f64]) -> Result<ProbDist> {
    if logits.is_empty() {
        return Err(Error::MalformedLogits("empty logit vector".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::MalformedLogits(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbDist {
        probs: exps.iter().map(|e| e / sum).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_scans_lowest_id_on_tie() {
        let d = ProbDist::new(vec![0.1, 0.6, 0.3, 0.0, 0.0]).unwrap();
        assert_eq!(d.canonical_argmax(), TokenId(1));
        assert_eq!(ProbDist::one_hot(5, TokenId(3)).canonical_argmax(), TokenId(3));
        let tie = ProbDist::new(vec![0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(tie.canonical_argmax(), TokenId(0));
    }

    #[test]
    fn softmax_matches_hand_values() {
        let d = logits_to_probs(&[0.0; 5]).unwrap();
        for p in d.as_slice() {
            assert!((p - 0.2).abs() < 1e-12);
        }
        let d = logits_to_probs(&[2f64.ln(), 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((d.prob(TokenId(0)) - 2.0 / 6.0).abs() < 1e-12);
        for i in 1..5 {
            assert!((d.prob(TokenId(i)) - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_preserves_argmax_and_rejects_nan() {
        let logits = [3.2, 1.1, 0.0, -1.0, -1.0];
        let d = logits_to_probs(&logits).unwrap();
        assert_eq!(d.canonical_argmax(), TokenId(0));
        assert!(logits_to_probs(&[1.0, f64::NAN]).is_err());
        assert!(logits_to_probs(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn constructor_enforces_normalization() {
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![0.5, -0.5, 1.0]).is_err());
        assert!(ProbDist::new(vec![0.5, 0.5]).is_ok());
    }
}
