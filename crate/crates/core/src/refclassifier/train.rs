//! Minibatch gradient descent on mean cross-entropy.
//!
//! With pseudo labels, an example whose confidence `ŝ` is below the gate
//! contributes nothing, and with confidence weighting its gradient is scaled
//! by `ŝ`. Gated examples are removed before batching, so a gated run and a
//! run on the pre-filtered set follow the same trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::featurize::FeatureVector;
use super::params::ClassifierParams;
use super::prob::softmax;
use crate::corpus::{NliPair, PairSet, PolarityLabel, Source, NUM_LABELS};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Gold,
    Pseudo,
    /// Gold for source-translated pairs, pseudo for target pairs.
    BySource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Scale each pseudo-labeled example's gradient by its MSP.
    pub confidence_weighting: bool,
    /// Pseudo-labeled examples with MSP below this contribute zero gradient.
    pub msp_gate: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            confidence_weighting: true,
            msp_gate: Some(0.5),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if let Some(t) = self.msp_gate {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("msp_gate must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Examples that passed the gate and were trained on.
    pub active_examples: usize,
    pub initial_loss: f64,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ClassifierParams<T>,
    pub report: TrainReport,
}

/// Gradient of one example's cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub body: BTreeMap<u32, Vec<T>>,
    pub head: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    fn zeros(hidden: usize) -> Self {
        Self { body: BTreeMap::new(), head: vec![T::zero(); hidden * NUM_LABELS], bias: vec![T::zero(); NUM_LABELS] }
    }

    pub fn norm(&self) -> f64 {
        self.body.values().flatten().chain(&self.head).chain(&self.bias).map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
    }
}

pub fn cross_entropy<T: Scalar>(params: &ClassifierParams<T>, f: &FeatureVector, y: PolarityLabel) -> Result<f64> {
    let p = softmax(&params.logits(f)?);
    Ok(-p[y.index()].ln())
}

/// Adds `scale · ∇ℓ(f, y)` into `acc` and returns the example's loss.
fn accumulate<T: Scalar>(
    params: &ClassifierParams<T>,
    f: &FeatureVector,
    y: PolarityLabel,
    scale: T,
    acc: &mut Gradient<T>,
) -> Result<f64> {
    let pre = params.pre_activation(f)?;
    let h: Vec<T> = pre.iter().map(|&x| x.max(T::zero())).collect();
    let p = softmax(&params.logits_from_hidden(&h));
    let loss = -p[y.index()].ln();
    let dz: Vec<T> = (0..NUM_LABELS).map(|k| T::of(p[k] - if k == y.index() { 1.0 } else { 0.0 }) * scale).collect();
    for (a, &d) in acc.bias.iter_mut().zip(&dz) {
        *a += d;
    }
    let mut dpre = vec![T::zero(); params.hidden];
    for j in 0..params.hidden {
        let row = &params.head[j * NUM_LABELS..(j + 1) * NUM_LABELS];
        if h[j] != T::zero() {
            for (a, &d) in acc.head[j * NUM_LABELS..(j + 1) * NUM_LABELS].iter_mut().zip(&dz) {
                *a += h[j] * d;
            }
        }
        if pre[j] > T::zero() {
            dpre[j] = row.iter().zip(&dz).map(|(&w, &d)| w * d).sum();
        }
    }
    for &(i, w) in f.entries() {
        let w = T::of(w);
        let g = acc.body.entry(i).or_insert_with(|| vec![T::zero(); params.hidden]);
        for (gj, &d) in g.iter_mut().zip(&dpre) {
            *gj += w * d;
        }
    }
    Ok(loss)
}

/// Analytic gradient of the cross-entropy of a single example.
pub fn example_gradient<T: Scalar>(
    params: &ClassifierParams<T>,
    f: &FeatureVector,
    y: PolarityLabel,
) -> Result<Gradient<T>> {
    let mut g = Gradient::zeros(params.hidden);
    accumulate(params, f, y, T::one(), &mut g)?;
    Ok(g)
}

fn apply<T: Scalar>(params: &mut ClassifierParams<T>, g: &Gradient<T>, lr: T) {
    for (w, &d) in params.head.iter_mut().zip(&g.head) {
        *w -= lr * d;
    }
    for (w, &d) in params.bias.iter_mut().zip(&g.bias) {
        *w -= lr * d;
    }
    for (&i, d) in &g.body {
        let row = params.row_mut(i);
        for (w, &dj) in row.iter_mut().zip(d) {
            *w -= lr * dj;
        }
    }
}

struct Example {
    features: FeatureVector,
    label: PolarityLabel,
    weight: f64,
}

fn select_label(pair: &NliPair, source: LabelSource) -> Result<(PolarityLabel, bool)> {
    let use_pseudo = match source {
        LabelSource::Gold => false,
        LabelSource::Pseudo => true,
        LabelSource::BySource => pair.source == Source::Target,
    };
    let label = pair.label(use_pseudo).ok_or_else(|| Error::MissingField {
        pair_id: pair.pair_id.clone(),
        what: if use_pseudo { "a pseudo label" } else { "a gold label" },
    })?;
    Ok((label, use_pseudo))
}

fn build_examples<T: Scalar>(
    params: &ClassifierParams<T>,
    pairs: &PairSet,
    cfg: &TrainConfig,
    source: LabelSource,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for pair in pairs {
        let (label, pseudo) = select_label(pair, source)?;
        let mut weight = 1.0;
        if pseudo {
            let needs_msp = cfg.confidence_weighting || cfg.msp_gate.is_some();
            let s = match pair.msp {
                Some(s) => s,
                None if needs_msp => {
                    return Err(Error::MissingField { pair_id: pair.pair_id.clone(), what: "an msp score" })
                }
                None => 1.0,
            };
            if cfg.msp_gate.is_some_and(|t| s < t) {
                continue;
            }
            if cfg.confidence_weighting {
                weight = s;
            }
        }
        out.push(Example { features: params.featurize(&pair.x_s, &pair.x_a)?, label, weight });
    }
    Ok(out)
}

fn mean_loss<T: Scalar>(params: &ClassifierParams<T>, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in examples {
        total += cross_entropy(params, &e.features, e.label)?;
    }
    Ok(total / examples.len() as f64)
}

pub fn train<T: Scalar>(
    params: &ClassifierParams<T>,
    pairs: &PairSet,
    cfg: &TrainConfig,
    source: LabelSource,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let examples = build_examples(params, pairs, cfg, source)?;
    let mut params = params.clone();
    let initial_loss = mean_loss(&params, &examples)?;
    let mut report = TrainReport { active_examples: examples.len(), initial_loss, epoch_losses: Vec::new() };
    if examples.is_empty() {
        return Ok(TrainOutcome { params, report });
    }
    let lr = T::of(cfg.learning_rate);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffler = rng::seeded(cfg.seed);
    for epoch in 0..cfg.epochs {
        rng::fisher_yates(&mut order, &mut shuffler);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Gradient::zeros(params.hidden);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &examples[i];
                let loss = accumulate(&params, &e.features, e.label, T::of(e.weight * inv), &mut g)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
            }
            apply(&mut params, &g, lr);
        }
        let loss = mean_loss(&params, &examples)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        report.epoch_losses.push(loss);
    }
    Ok(TrainOutcome { params, report })
}

/// Fraction of pairs whose argmax prediction equals the selected label.
pub fn accuracy<T: Scalar>(params: &ClassifierParams<T>, pairs: &PairSet, source: LabelSource) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("accuracy over an empty pair set"));
    }
    let mut correct = 0;
    for pair in pairs {
        let (label, _) = select_label(pair, source)?;
        if params.predict(&pair.x_s, &pair.x_a)?.argmax() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}
