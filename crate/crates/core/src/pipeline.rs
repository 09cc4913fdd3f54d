//! Two-phase training: a phase-1 classifier fitted on labeled translated
//! source pairs pseudo-labels the target pairs, which are dual-filtered and
//! used for phase-2 training under one of three regimes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{concat_shuffled, PairSet, PolarityLabel, Source};
use crate::error::{Error, Result};
use crate::filtering::{dual_filter, FilterConfig, FilterReport};
use crate::metrics::{evaluate, EvalReport};
use crate::refclassifier::params::hex_digest;
use crate::refclassifier::{
    example_gradient, fresh, pseudo_label, train, ClassifierParams, Featurizer, LabelSource, TrainConfig, TrainReport,
};
use crate::scalar::Scalar;
use crate::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Fresh classifier trained on filtered pseudo-labeled target pairs only.
    TargetOnly,
    /// Fresh classifier on one shuffled stream of gold source and pseudo target pairs.
    JointShuffled,
    /// Phase-1 body with a reinitialized head, trained on filtered target pairs.
    #[default]
    Transfer,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_only" | "target-only" => Ok(Regime::TargetOnly),
            "joint_shuffled" | "joint-shuffled" | "joint" => Ok(Regime::JointShuffled),
            "transfer" => Ok(Regime::Transfer),
            _ => Err(Error::Config(format!("unknown regime `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub seed: u64,
    pub phase1: TrainConfig,
    pub phase2: TrainConfig,
    pub filter: FilterConfig,
    pub filtering_enabled: bool,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Transfer,
            seed: 0,
            phase1: TrainConfig::default(),
            phase2: TrainConfig::default(),
            filter: FilterConfig::default(),
            filtering_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// No pair survived filtering; phase 2 had nothing to train on.
    EmptyAfterFiltering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingVolume {
    pub pairs: usize,
    /// UTF-8 bytes of review plus aspect text.
    pub bytes: usize,
    /// Whitespace-separated tokens of review plus aspect text.
    pub whitespace_tokens: usize,
}

impl TrainingVolume {
    fn of(pairs: &PairSet) -> Self {
        let mut v = Self { pairs: pairs.len(), ..Default::default() };
        for p in pairs {
            v.bytes += p.x_s.len() + p.x_a.len();
            v.whitespace_tokens += p.x_s.split_whitespace().count() + p.x_a.split_whitespace().count();
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub formats: BTreeMap<String, u32>,
    pub config: RegimeConfig,
    /// SHA-256 of each input's canonical pair-JSONL rendering.
    pub inputs: BTreeMap<String, String>,
    pub status: RunStatus,
    pub phase1: Option<TrainReport>,
    pub phase2: TrainReport,
    pub filter: Option<FilterReport>,
    pub eval: Option<EvalReport>,
    pub training_volume: TrainingVolume,
    pub phase1_model_digest: String,
    pub phase2_model_digest: String,
    /// Wall-clock field; the only part that differs between identical reruns.
    pub created_unix_secs: u64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// JSON with the wall-clock field zeroed, for determinism comparisons.
    pub fn deterministic_json(&self) -> String {
        Self { created_unix_secs: 0, ..self.clone() }.to_json()
    }
}

pub fn format_versions() -> BTreeMap<String, u32> {
    ["EMB1", "LGT1", "KPC1"].iter().map(|k| (k.to_string(), 1)).collect()
}

pub fn digest_pairs(pairs: &PairSet) -> String {
    digest_bytes(pairs.to_jsonl_string().as_bytes())
}

/// Hex SHA-256, the digest used for every input and model in manifests.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_digest(h)
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct Phase1 {
    pub params: Classifier,
    pub report: TrainReport,
}

/// Trains the phase-1 classifier on gold-labeled source pairs.
pub fn run_phase1(source: &PairSet, cfg: &TrainConfig, seed: u64) -> Result<Phase1> {
    cfg.validate()?;
    for p in source {
        if p.gold.is_none() {
            return Err(Error::MissingField { pair_id: p.pair_id.clone(), what: "a gold label" });
        }
        if p.source != Source::SourceTranslated {
            return Err(Error::Config(format!("phase 1 pair `{}` is not source_translated", p.pair_id)));
        }
    }
    let init: Classifier = fresh(source, seed);
    let out = train(&init, source, cfg, LabelSource::Gold)?;
    Ok(Phase1 { params: out.params, report: out.report })
}

#[derive(Debug, Clone)]
pub struct Phase2 {
    pub params: Classifier,
    pub manifest: RunManifest,
    /// Target pairs with pseudo labels and (when available) labse scores.
    pub pseudo_labeled: PairSet,
    /// Pairs that entered phase-2 training as target data.
    pub kept: PairSet,
}

fn head_seed(seed: u64) -> u64 {
    seed ^ 0x00C1_A55E_5EED
}

fn strip_gold(pairs: PairSet) -> PairSet {
    pairs.map_pairs(|p| p.gold = None)
}

/// Pseudo-labels (unless every pair already carries imported probabilities),
/// filters, and trains the phase-2 classifier.
pub fn run_phase2(pre: &Classifier, target: &PairSet, source: Option<&PairSet>, cfg: &RegimeConfig) -> Result<Phase2> {
    cfg.phase2.validate()?;
    cfg.filter.validate()?;
    if cfg.regime == Regime::JointShuffled && source.is_none() {
        return Err(Error::Config("joint_shuffled regime requires source pairs".into()));
    }

    let pseudo_labeled = if !target.is_empty() && target.iter().all(|p| p.probs.is_some()) {
        target.clone()
    } else {
        pseudo_label(pre, target.clone())?
    };

    let (kept, filter_report) = if cfg.filtering_enabled {
        let (kept, report) = dual_filter(&pseudo_labeled, &cfg.filter)?;
        (kept, Some(report))
    } else {
        (pseudo_labeled.clone(), None)
    };
    // Phase 2 never sees target gold labels.
    let train_target = strip_gold(kept.clone());

    let mut phase2_cfg = cfg.phase2.clone();
    phase2_cfg.seed = cfg.seed;
    let status = if train_target.is_empty() { RunStatus::EmptyAfterFiltering } else { RunStatus::Completed };

    let (init, train_set, labels) = match cfg.regime {
        Regime::TargetOnly => (fresh(&train_target, cfg.seed), train_target, LabelSource::Pseudo),
        Regime::JointShuffled => {
            let combined = concat_shuffled(source.expect("checked above"), &train_target, cfg.seed)?;
            (fresh(&combined, cfg.seed), combined, LabelSource::BySource)
        }
        Regime::Transfer => {
            // Body rows carry over; idf statistics are refitted on the target
            // stream so frequent target-only grams do not all get the unseen weight.
            let mut init = pre.reinit_head(head_seed(cfg.seed));
            if !train_target.is_empty() {
                init = init
                    .with_featurizer(Featurizer::fit(train_target.iter().map(|p| (p.x_s.as_str(), p.x_a.as_str()))));
            }
            (init, train_target, LabelSource::Pseudo)
        }
    };
    let outcome = train(&init, &train_set, &phase2_cfg, labels)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("target".to_string(), digest_pairs(target));
    if let Some(s) = source {
        inputs.insert("source".to_string(), digest_pairs(s));
    }
    let manifest = RunManifest {
        toolkit_version: crate::VERSION.to_string(),
        formats: format_versions(),
        config: cfg.clone(),
        inputs,
        status,
        phase1: None,
        phase2: outcome.report,
        filter: filter_report,
        eval: None,
        training_volume: TrainingVolume::of(&train_set),
        phase1_model_digest: pre.digest(),
        phase2_model_digest: outcome.params.digest(),
        created_unix_secs: now(),
    };
    Ok(Phase2 { params: outcome.params, manifest, pseudo_labeled, kept })
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub pre: Classifier,
    pub post: Classifier,
    pub pseudo_labeled: PairSet,
    pub kept: PairSet,
    /// Test pairs labeled by the phase-2 classifier, when a test set was given.
    pub predictions: Option<PairSet>,
    pub manifest: RunManifest,
}

/// Phase 1, phase 2 and (optionally) evaluation of the phase-2 classifier on
/// gold-labeled test pairs.
pub fn run_pipeline(
    source: &PairSet,
    target: &PairSet,
    test: Option<&PairSet>,
    cfg: &RegimeConfig,
) -> Result<PipelineRun> {
    let phase1 = run_phase1(source, &cfg.phase1, cfg.seed)?;
    let phase2 = run_phase2(&phase1.params, target, Some(source), cfg)?;
    let mut manifest = phase2.manifest;
    manifest.phase1 = Some(phase1.report);
    let predictions = match test {
        Some(t) => {
            let pred = pseudo_label(&phase2.params, t.clone())?;
            manifest.eval = Some(evaluate(&pred, t)?);
            manifest.inputs.insert("test".to_string(), digest_pairs(t));
            Some(pred)
        }
        None => None,
    };
    Ok(PipelineRun {
        pre: phase1.params,
        post: phase2.params,
        pseudo_labeled: phase2.pseudo_labeled,
        kept: phase2.kept,
        predictions,
        manifest,
    })
}

pub mod run_dir {
    pub const PSEUDO_LABELED: &str = "pseudo_labeled.jsonl";
    pub const FILTERED: &str = "filtered.jsonl";
    pub const PHASE1_MODEL: &str = "phase1.kpc";
    pub const PHASE2_MODEL: &str = "phase2.kpc";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const MANIFEST: &str = "manifest.json";
}

/// Writes every artifact of a run under `dir` with the fixed names in [`run_dir`].
pub fn write_run_dir(dir: &Path, run: &PipelineRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run.pseudo_labeled.save(dir.join(run_dir::PSEUDO_LABELED))?;
    run.kept.save(dir.join(run_dir::FILTERED))?;
    run.pre.save(dir.join(run_dir::PHASE1_MODEL))?;
    run.post.save(dir.join(run_dir::PHASE2_MODEL))?;
    if let Some(p) = &run.predictions {
        p.save(dir.join(run_dir::PREDICTIONS))?;
    }
    let path = dir.join(run_dir::MANIFEST);
    fs::write(&path, run.manifest.to_json()).map_err(|e| Error::io(path, e))
}

fn pseudo_of(p: &crate::corpus::NliPair) -> Result<PolarityLabel> {
    p.pseudo.ok_or_else(|| Error::MissingField { pair_id: p.pair_id.clone(), what: "a pseudo label" })
}

/// Mean over `pairs` of `P_post(ŷ|x) − P_pre(ŷ|x)` for the pseudo label ŷ.
pub fn property_check_lemma4<T: Scalar>(
    pre: &ClassifierParams<T>,
    post: &ClassifierParams<T>,
    pairs: &PairSet,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("confidence delta over an empty pair set"));
    }
    let mut total = 0.0;
    for p in pairs {
        let y = pseudo_of(p)?;
        let before = pre.predict(&p.x_s, &p.x_a)?.get(y);
        let after = post.predict(&p.x_s, &p.x_a)?.get(y);
        total += after - before;
    }
    Ok(total / pairs.len() as f64)
}

fn gradient_norms<T: Scalar>(params: &ClassifierParams<T>, pairs: &PairSet) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            let f = params.featurize(&p.x_s, &p.x_a)?;
            Ok(example_gradient(params, &f, pseudo_of(p)?)?.norm())
        })
        .collect()
}

fn population_variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Population variance of per-example cross-entropy gradient norms (against
/// pseudo labels) over the full and the filtered sets.
pub fn property_check_lemma1<T: Scalar>(
    params: &ClassifierParams<T>,
    full: &PairSet,
    filtered: &PairSet,
) -> Result<(f64, f64)> {
    if full.is_empty() || filtered.is_empty() {
        return Err(Error::EmptyInput("gradient variance over an empty pair set"));
    }
    let a = gradient_norms(params, full)?;
    let b = gradient_norms(params, filtered)?;
    Ok((population_variance(&a), population_variance(&b)))
}

/// Fraction of pairs whose pseudo-label probability rises after a single
/// gradient step taken from `params` with a freshly drawn head.
pub fn confidence_direction_rate(params: &Classifier, pairs: &PairSet, learning_rate: f64, seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("confidence direction over an empty pair set"));
    }
    let fresh_head = params.reinit_head(seed);
    let cfg =
        TrainConfig { learning_rate, epochs: 1, batch_size: 1, seed, confidence_weighting: false, msp_gate: None };
    let mut rising = 0;
    for p in pairs {
        let y = pseudo_of(p)?;
        let single = PairSet::new(vec![p.clone()])?;
        let stepped = train(&fresh_head, &single, &cfg, LabelSource::Pseudo)?.params;
        if stepped.predict(&p.x_s, &p.x_a)?.get(y) > fresh_head.predict(&p.x_s, &p.x_a)?.get(y) {
            rising += 1;
        }
    }
    Ok(rising as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub gradient_variance_full: f64,
    pub gradient_variance_filtered: f64,
    pub gradient_variance_reduced: bool,
    pub mean_confidence_delta: f64,
    pub confidence_increased: bool,
    pub confidence_direction_rate: f64,
}

/// Runs the gradient-variance, confidence-delta and confidence-direction checks.
pub fn property_report(
    pre: &Classifier,
    post: &Classifier,
    full: &PairSet,
    filtered: &PairSet,
    learning_rate: f64,
    seed: u64,
) -> Result<PropertyReport> {
    let (vf, vk) = property_check_lemma1(pre, full, filtered)?;
    let delta = property_check_lemma4(pre, post, filtered)?;
    let rate = confidence_direction_rate(pre, filtered, learning_rate, seed)?;
    Ok(PropertyReport {
        gradient_variance_full: vf,
        gradient_variance_filtered: vk,
        gradient_variance_reduced: vk <= vf,
        mean_confidence_delta: delta,
        confidence_increased: delta > 0.0,
        confidence_direction_rate: rate,
    })
}
