use serde::{Deserialize, Serialize};

use crate::corpus::{argmax, PolarityLabel, NUM_LABELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities over the five labels in [`PolarityLabel::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbDist([f64; NUM_LABELS]);

impl ProbDist {
    pub fn new(p: [f64; NUM_LABELS]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Format(format!("not a probability distribution: {p:?}")));
        }
        Ok(Self(p))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_LABELS as f64; NUM_LABELS])
    }

    /// Numerically stable softmax, evaluated in f64.
    pub fn from_logits<T: Scalar>(logits: &[T]) -> Result<Self> {
        if logits.len() != NUM_LABELS {
            return Err(Error::DimensionMismatch { expected: NUM_LABELS, actual: logits.len() });
        }
        Ok(Self(softmax(logits)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, label: PolarityLabel) -> f64 {
        self.0[label.index()]
    }

    /// Maximum softmax probability.
    pub fn msp(&self) -> f64 {
        argmax(&self.0).1
    }

    /// Most probable label; ties go to the lower index.
    pub fn argmax(&self) -> PolarityLabel {
        PolarityLabel::ALL[argmax(&self.0).0]
    }
}

pub fn msp(d: &ProbDist) -> f64 {
    d.msp()
}

pub(crate) fn softmax<T: Scalar>(logits: &[T]) -> [f64; NUM_LABELS] {
    let max = logits.iter().map(|z| z.f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_LABELS];
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z.f64() - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msp_examples() {
        assert!((ProbDist::uniform().msp() - 0.2).abs() < 1e-15);
        let d = ProbDist::new([0.7, 0.1, 0.1, 0.05, 0.05]).unwrap();
        assert_eq!(msp(&d), 0.7);
        assert_eq!(d.argmax(), PolarityLabel::Positive);

        let e = [2f64.exp(), 1f64.exp(), 1.0, 1.0, 1.0];
        let want = e[0] / e.iter().sum::<f64>();
        let got = ProbDist::from_logits(&[2.0f64, 1.0, 0.0, 0.0, 0.0]).unwrap().msp();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits() {
        let d = ProbDist::from_logits(&[1.0f32; 5]).unwrap();
        for &p in d.as_slice() {
            assert!((p - 0.2).abs() < 1e-15);
        }
        assert_eq!(d.argmax(), PolarityLabel::Positive);
    }

    #[test]
    fn rejects_invalid() {
        assert!(ProbDist::new([0.5, 0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(ProbDist::from_logits(&[0.0f64; 4]).is_err());
    }
}
