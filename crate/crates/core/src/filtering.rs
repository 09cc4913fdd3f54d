//! Dual filtering of pseudo-labeled pairs by classifier confidence (MSP) and
//! review/aspect embedding similarity.
//!
//! A pair is kept iff `msp > τ1` and `labse > τ2`. In `fixed` mode τ2 is the
//! configured threshold; in `batch_mean` mode it is the mean labse score of
//! every input pair, taken before the MSP gate. Both comparisons are strict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{NliPair, PairSet, PolarityLabel};
use crate::embeddings::stats::{mean, pearson, sample_std, Correlation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabseMode {
    #[default]
    Fixed,
    BatchMean,
}

impl std::str::FromStr for LabseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LabseMode::Fixed),
            "batch_mean" | "batch-mean" => Ok(LabseMode::BatchMean),
            _ => Err(Error::Config(format!("unknown labse mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub msp_threshold: f64,
    pub labse_mode: LabseMode,
    pub labse_threshold: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { msp_threshold: 0.5, labse_mode: LabseMode::Fixed, labse_threshold: 0.15 }
    }
}

impl FilterConfig {
    /// Thresholds that every scored pair passes.
    pub fn pass_all() -> Self {
        Self { msp_threshold: 0.0, labse_mode: LabseMode::Fixed, labse_threshold: -1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.msp_threshold) {
            return Err(Error::Config(format!("msp_threshold must lie in [0, 1], got {}", self.msp_threshold)));
        }
        if !(-1.0..=1.0).contains(&self.labse_threshold) {
            return Err(Error::Config(format!("labse_threshold must lie in [-1, 1], got {}", self.labse_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
}

impl ScoreSummary {
    fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), std: sample_std(xs) }
    }
}

/// Counts of `none`-labeled pairs by which gates they pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateQuadrants {
    pub both: usize,
    pub msp_only: usize,
    pub labse_only: usize,
    pub neither: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub config: FilterConfig,
    /// τ2 actually applied (equals the batch mean in `batch_mean` mode).
    pub effective_labse_threshold: f64,
    pub input_count: usize,
    pub kept_count: usize,
    /// Empirical estimate of the expected pass rate of the dual filter.
    pub retention_rate: f64,
    pub labse_before: ScoreSummary,
    pub labse_after: ScoreSummary,
    pub msp_before: ScoreSummary,
    pub msp_after: ScoreSummary,
    /// Pearson correlation of labse vs msp over `none`-pseudo-labeled pairs;
    /// absent when undefined (fewer than 3 pairs or zero variance).
    pub none_correlation_before: Option<Correlation>,
    pub none_correlation_after: Option<Correlation>,
    pub none_count_before: usize,
    pub none_count_after: usize,
    pub none_ratio_before: f64,
    pub none_ratio_after: f64,
    pub kept_per_label: BTreeMap<PolarityLabel, usize>,
    pub none_quadrants: GateQuadrants,
}

impl FilterReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn scores(pair: &NliPair) -> Result<(f64, f64)> {
    let msp = pair.msp.ok_or_else(|| Error::MissingField { pair_id: pair.pair_id.clone(), what: "an msp score" })?;
    let labse =
        pair.labse.ok_or_else(|| Error::MissingField { pair_id: pair.pair_id.clone(), what: "a labse score" })?;
    Ok((msp, labse))
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn none_correlation(pairs: &[(&NliPair, f64, f64)]) -> Option<Correlation> {
    let (ls, ms): (Vec<f64>, Vec<f64>) =
        pairs.iter().filter(|(p, ..)| p.pseudo == Some(PolarityLabel::None)).map(|&(_, m, l)| (l, m)).unzip();
    pearson(&ls, &ms).ok()
}

pub fn dual_filter(pairs: &PairSet, cfg: &FilterConfig) -> Result<(PairSet, FilterReport)> {
    cfg.validate()?;
    let scored: Vec<(&NliPair, f64, f64)> =
        pairs.iter().map(|p| scores(p).map(|(m, l)| (p, m, l))).collect::<Result<_>>()?;
    let all_labse: Vec<f64> = scored.iter().map(|s| s.2).collect();
    let all_msp: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let threshold = match cfg.labse_mode {
        LabseMode::Fixed => cfg.labse_threshold,
        LabseMode::BatchMean => mean(&all_labse),
    };

    let mut quadrants = GateQuadrants::default();
    let mut kept = Vec::new();
    for &(p, m, l) in &scored {
        let (msp_ok, labse_ok) = (m > cfg.msp_threshold, l > threshold);
        if p.pseudo == Some(PolarityLabel::None) {
            match (msp_ok, labse_ok) {
                (true, true) => quadrants.both += 1,
                (true, false) => quadrants.msp_only += 1,
                (false, true) => quadrants.labse_only += 1,
                (false, false) => quadrants.neither += 1,
            }
        }
        if msp_ok && labse_ok {
            kept.push((p, m, l));
        }
    }

    let kept_labse: Vec<f64> = kept.iter().map(|s| s.2).collect();
    let kept_msp: Vec<f64> = kept.iter().map(|s| s.1).collect();
    let is_none = |s: &&(&NliPair, f64, f64)| s.0.pseudo == Some(PolarityLabel::None);
    let none_before = scored.iter().filter(is_none).count();
    let none_after = kept.iter().filter(is_none).count();
    let mut per_label: BTreeMap<PolarityLabel, usize> = PolarityLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for (p, ..) in &kept {
        if let Some(l) = p.pseudo {
            *per_label.entry(l).or_insert(0) += 1;
        }
    }

    let report = FilterReport {
        config: *cfg,
        effective_labse_threshold: threshold,
        input_count: scored.len(),
        kept_count: kept.len(),
        retention_rate: ratio(kept.len(), scored.len()),
        labse_before: ScoreSummary::of(&all_labse),
        labse_after: ScoreSummary::of(&kept_labse),
        msp_before: ScoreSummary::of(&all_msp),
        msp_after: ScoreSummary::of(&kept_msp),
        none_correlation_before: none_correlation(&scored),
        none_correlation_after: none_correlation(&kept),
        none_count_before: none_before,
        none_count_after: none_after,
        none_ratio_before: ratio(none_before, scored.len()),
        none_ratio_after: ratio(none_after, kept.len()),
        kept_per_label: per_label,
        none_quadrants: quadrants,
    };
    let kept = PairSet::new(kept.into_iter().map(|s| s.0.clone()).collect())?;
    Ok((kept, report))
}

/// Straight-line re-evaluation of the keep predicate, sharing no code with
/// [`dual_filter`]. Exists as a reference for differential tests.
pub mod oracle {
    use std::collections::BTreeSet;

    use super::{FilterConfig, LabseMode};
    use crate::corpus::PairSet;
    use crate::error::{Error, Result};

    pub fn filter_oracle(pairs: &PairSet, cfg: &FilterConfig) -> Result<BTreeSet<String>> {
        let mut total = 0.0;
        let mut n = 0usize;
        for p in pairs.pairs() {
            if p.msp.is_none() || p.labse.is_none() {
                return Err(Error::MissingField { pair_id: p.pair_id.clone(), what: "scores" });
            }
            total += p.labse.unwrap();
            n += 1;
        }
        let cut = if cfg.labse_mode == LabseMode::BatchMean { total / n.max(1) as f64 } else { cfg.labse_threshold };
        let mut out = BTreeSet::new();
        for p in pairs.pairs() {
            if p.msp.unwrap() > cfg.msp_threshold && p.labse.unwrap() > cut {
                out.insert(p.pair_id.clone());
            }
        }
        Ok(out)
    }
}

pub use oracle::filter_oracle;
