//! Joint evaluation of aspect detection (micro-F1 over `label != none`) and
//! aspect polarity (n-way accuracy over gold pairs in the variant's classes).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{PairSet, PolarityLabel};
use crate::embeddings::stats::{mean, pearson, sample_std, Correlation};
use crate::error::{Error, Result};
use crate::filtering::ScoreSummary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityScores {
    pub acc_4way: f64,
    pub acc_3way: f64,
    pub acc_binary: f64,
    pub support_4way: usize,
    pub support_3way: usize,
    pub support_binary: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acd: DetectionScores,
    pub acp: PolarityScores,
}

const FOUR_WAY: &[PolarityLabel] =
    &[PolarityLabel::Positive, PolarityLabel::Negative, PolarityLabel::Neutral, PolarityLabel::Conflict];
const THREE_WAY: &[PolarityLabel] = &[PolarityLabel::Positive, PolarityLabel::Negative, PolarityLabel::Neutral];
const BINARY: &[PolarityLabel] = &[PolarityLabel::Positive, PolarityLabel::Negative];

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Scores `pred` (its `pseudo` labels) against `gold` (its `gold` labels).
/// Both sets must contain exactly the same pair ids, in any order.
pub fn evaluate(pred: &PairSet, gold: &PairSet) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::PairMismatch(format!("{} predicted vs {} gold pairs", pred.len(), gold.len())));
    }
    let mut predicted: HashMap<&str, PolarityLabel> = HashMap::with_capacity(pred.len());
    for p in pred {
        let l =
            p.pseudo.ok_or_else(|| Error::MissingField { pair_id: p.pair_id.clone(), what: "a predicted label" })?;
        predicted.insert(&p.pair_id, l);
    }

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut support = [0usize; 3];
    let mut correct = [0usize; 3];
    for g in gold {
        let gl = g.gold.ok_or_else(|| Error::MissingField { pair_id: g.pair_id.clone(), what: "a gold label" })?;
        let pl = *predicted
            .get(g.pair_id.as_str())
            .ok_or_else(|| Error::PairMismatch(format!("`{}` has no prediction", g.pair_id)))?;
        match (pl.is_detected(), gl.is_detected()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        for (v, classes) in [FOUR_WAY, THREE_WAY, BINARY].iter().enumerate() {
            if classes.contains(&gl) {
                support[v] += 1;
                if pl == gl {
                    correct[v] += 1;
                }
            }
        }
    }

    Ok(EvalReport {
        acd: DetectionScores {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // Same value as 2PR/(P+R), without the intermediate rounding.
            micro_f1: ratio(2 * tp, 2 * tp + fp + fn_),
        },
        acp: PolarityScores {
            acc_4way: ratio(correct[0], support[0]),
            acc_3way: ratio(correct[1], support[1]),
            acc_binary: ratio(correct[2], support[2]),
            support_4way: support[0],
            support_3way: support[1],
            support_binary: support[2],
        },
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table with detection and polarity columns.
    pub fn render(&self, name: &str) -> String {
        let pct = |x: f64| format!("{:>8.2}", 100.0 * x);
        format!(
            "{:<24}{:>8}{:>8}{:>8}  {:>8}{:>8}{:>8}\n{:<24}{}{}{}  {}{}{}\n",
            "model",
            "P",
            "R",
            "F1",
            "4-way",
            "3-way",
            "binary",
            name,
            pct(self.acd.precision),
            pct(self.acd.recall),
            pct(self.acd.micro_f1),
            pct(self.acp.acc_4way),
            pct(self.acp.acc_3way),
            pct(self.acp.acc_binary),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub count: usize,
    pub labse: ScoreSummary,
    pub msp: ScoreSummary,
    pub none_count: usize,
    pub none_correlation: Option<Correlation>,
    /// Why `none_correlation` is absent, if it is.
    pub correlation_flag: Option<String>,
}

/// Count, mean and sample std of both scores, and their Pearson correlation
/// over pairs pseudo-labeled `none`.
pub fn stats_table(pairs: &PairSet) -> Result<StatsTable> {
    let mut labse = Vec::with_capacity(pairs.len());
    let mut msp = Vec::with_capacity(pairs.len());
    let (mut none_l, mut none_m) = (Vec::new(), Vec::new());
    for p in pairs {
        let l = p.labse.ok_or_else(|| Error::MissingField { pair_id: p.pair_id.clone(), what: "a labse score" })?;
        let m = p.msp.ok_or_else(|| Error::MissingField { pair_id: p.pair_id.clone(), what: "an msp score" })?;
        labse.push(l);
        msp.push(m);
        if p.pseudo == Some(PolarityLabel::None) {
            none_l.push(l);
            none_m.push(m);
        }
    }
    let (none_correlation, correlation_flag) = match pearson(&none_l, &none_m) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(StatsTable {
        count: pairs.len(),
        labse: ScoreSummary { mean: mean(&labse), std: sample_std(&labse) },
        msp: ScoreSummary { mean: mean(&msp), std: sample_std(&msp) },
        none_count: none_l.len(),
        none_correlation,
        correlation_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_to_nli, AspectSet, Review, Source};

    fn pairs_with(labels: &[(&str, PolarityLabel)]) -> PairSet {
        let reviews: Vec<Review> = ["r1", "r2"]
            .iter()
            .map(|id| Review {
                id: (*id).into(),
                text: "t".into(),
                source: Source::Target,
                gold: Some(Default::default()),
            })
            .collect();
        expand_to_nli(&reviews, &AspectSet::default()).unwrap().map_pairs(|p| {
            let l = labels.iter().find(|(id, _)| *id == p.pair_id).map_or(PolarityLabel::None, |x| x.1);
            p.gold = Some(l);
            p.pseudo = Some(l);
        })
    }

    #[test]
    fn hand_counted_example() {
        use PolarityLabel::*;
        let gold = pairs_with(&[("r1#food", Positive), ("r1#service", Negative), ("r2#price", Positive)]);
        let pred = pairs_with(&[("r1#food", Positive), ("r1#ambience", Negative), ("r2#price", Negative)]);
        let r = evaluate(&pred, &gold).unwrap();
        assert_eq!((r.acd.tp, r.acd.fp, r.acd.fn_), (2, 1, 1));
        assert_eq!(r.acd.precision, 2.0 / 3.0);
        assert_eq!(r.acd.recall, 2.0 / 3.0);
        assert_eq!(r.acd.micro_f1, 2.0 / 3.0);
        assert_eq!(r.acp.acc_4way, 1.0 / 3.0);
        assert_eq!(r.acp.support_4way, 3);
    }

    #[test]
    fn identity_and_all_none() {
        use PolarityLabel::*;
        let gold = pairs_with(&[("r1#food", Positive), ("r2#service", Neutral)]);
        let r = evaluate(&gold, &gold).unwrap();
        assert_eq!(r.acd.micro_f1, 1.0);
        assert_eq!((r.acp.acc_4way, r.acp.acc_3way, r.acp.acc_binary), (1.0, 1.0, 1.0));
        assert_eq!((r.acp.support_3way, r.acp.support_binary), (2, 1));

        let none = pairs_with(&[]);
        let r = evaluate(&none, &gold).unwrap();
        assert_eq!((r.acd.recall, r.acd.micro_f1), (0.0, 0.0));
    }

    #[test]
    fn mismatched_ids() {
        let gold = pairs_with(&[]);
        let other = PairSet::new(gold.pairs()[..9].to_vec()).unwrap();
        assert!(matches!(evaluate(&other, &gold), Err(Error::PairMismatch(_))));
    }

    #[test]
    fn stats_degenerate_cases() {
        let mut one = pairs_with(&[]).into_pairs();
        one.truncate(1);
        one[0].labse = Some(0.3);
        one[0].msp = Some(0.9);
        let t = stats_table(&PairSet::new(one).unwrap()).unwrap();
        assert_eq!(t.count, 1);
        assert_eq!(t.labse.std, 0.0);
        assert!(t.none_correlation.is_none() && t.correlation_flag.is_some());

        let constant = pairs_with(&[]).map_pairs(|p| {
            p.labse = Some(0.2);
            p.msp = Some(0.5 + 0.01 * p.pair_id.len() as f64);
        });
        let t = stats_table(&constant).unwrap();
        assert!(t.none_correlation.is_none());
        assert!(t.correlation_flag.unwrap().contains("zero variance"));
    }

    #[test]
    fn render_has_columns() {
        let gold = pairs_with(&[]);
        let text = evaluate(&gold, &gold).unwrap().render("demo");
        assert!(text.contains("4-way") && text.contains("demo"));
    }
}
