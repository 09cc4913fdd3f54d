//! Synthetic two-dialect benchmark.
//!
//! Source reviews use a standard dialect. Target and test reviews switch
//! about half of their clause endings to a second dialect and add dialect
//! openers and fillers. Each clause is an aspect mention directly followed by
//! a polarity word. Review and aspect embeddings are constructed
//! so that the cosine of every (review, aspect) pair equals a drawn
//! similarity: aspect vectors are orthonormal and each review vector is
//! `Σ_a sim_a · e_a` plus an orthogonal remainder. About a third of target
//! pairs get a low similarity (below 0.15); [`inject_label_noise`] corrupts
//! the pseudo labels of detected pairs among them.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::corpus::{expand_to_nli, AspectSet, PairSet, PolarityLabel, Review, Source};
use crate::embeddings::{score_pairs, EmbeddingStore};
use crate::error::Result;
use crate::metrics::{evaluate, EvalReport};
use crate::pipeline::{property_report, run_phase1, run_phase2, Phase1, Phase2, PropertyReport, RegimeConfig};
use crate::refclassifier::{apply_probs, pseudo_label, ProbDist};
use crate::rng::{self, seeded, unit_f64, SeededRng};
use crate::Embeddings;

pub const EMBEDDING_DIM: usize = 16;
/// Constructed similarities below this are "low"; above it, "clean".
pub const LOW_SIMILARITY: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub source_reviews: usize,
    pub target_reviews: usize,
    pub test_reviews: usize,
    pub seed: u64,
    /// Fraction of target pairs drawn with low similarity.
    pub low_similarity_rate: f64,
    /// Probability that a detected low-similarity pair gets a wrong pseudo label.
    pub noise_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            source_reviews: 200,
            target_reviews: 400,
            test_reviews: 200,
            seed: 0,
            low_similarity_rate: 0.35,
            noise_rate: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub aspects: AspectSet,
    pub source: Vec<Review>,
    pub target: Vec<Review>,
    pub test: Vec<Review>,
    /// Vectors for every source, target and test review.
    pub review_embeddings: Embeddings,
    pub aspect_embeddings: Embeddings,
}

struct Lexicon {
    mentions: BTreeMap<&'static str, &'static str>,
    source_words: [[&'static str; 2]; 3],
    target_words: [[&'static str; 2]; 3],
}

const POLARITIES: [PolarityLabel; 3] = [PolarityLabel::Positive, PolarityLabel::Negative, PolarityLabel::Neutral];
const SOURCE_OPENERS: [&str; 3] = ["어제 갔는데", "점심에", "친구랑 갔어요"];
const TARGET_OPENERS: [&str; 3] = ["어제 가봤는데예", "점심에 갔다 아이가", "친구캉 갔는데"];
/// Per-clause probability of the target ending, of a trailing filler, and per
/// review of a target-dialect opener.
const DIALECT_RATE: f64 = 0.5;
const FILLER_RATE: f64 = 0.15;
const OPENER_RATE: f64 = 0.5;
const TARGET_FILLERS: [&str; 2] = [" 마", " 아이가"];

fn lexicon() -> Lexicon {
    let mut mentions = BTreeMap::new();
    mentions.insert("price", "가격");
    mentions.insert("anecdotes", "추억");
    mentions.insert("food", "음식");
    mentions.insert("ambience", "분위기");
    mentions.insert("service", "서비스");
    Lexicon {
        mentions,
        source_words: [["좋아요", "훌륭해요"], ["별로예요", "나빠요"], ["보통이에요", "무난해요"]],
        target_words: [["좋아예", "훌륭해예"], ["별로라예", "나빠예"], ["보통이라예", "무난해예"]],
    }
}

fn pick<'a, T>(rng: &mut SeededRng, items: &'a [T]) -> &'a T {
    &items[rng::uniform_inclusive(rng, items.len() as u64 - 1) as usize]
}

fn draw_polarity(rng: &mut SeededRng) -> PolarityLabel {
    let u = unit_f64(rng);
    if u < 0.4 {
        PolarityLabel::Positive
    } else if u < 0.75 {
        PolarityLabel::Negative
    } else {
        PolarityLabel::Neutral
    }
}

fn polarity_slot(l: PolarityLabel) -> usize {
    POLARITIES.iter().position(|&p| p == l).expect("clause polarity is positive, negative or neutral")
}

fn make_review(rng: &mut SeededRng, lex: &Lexicon, aspects: &AspectSet, id: String, source: Source) -> Review {
    let keys: Vec<&str> = aspects.iter().map(|a| a.key.as_str()).collect();
    let n = 2 + (unit_f64(rng) < 0.4) as usize;
    let mut chosen: Vec<&str> = Vec::new();
    while chosen.len() < n {
        let k = *pick(rng, &keys);
        if !chosen.contains(&k) {
            chosen.push(k);
        }
    }
    let target = source == Source::Target;
    let mut gold = BTreeMap::new();
    let mut clauses = Vec::new();
    if unit_f64(rng) < 0.5 {
        let openers = if target && unit_f64(rng) < OPENER_RATE { &TARGET_OPENERS } else { &SOURCE_OPENERS };
        clauses.push(pick(rng, openers).to_string());
    }
    for k in chosen {
        let label = draw_polarity(rng);
        gold.insert(k.to_string(), label);
        let mention = lex.mentions[k];
        let slot = polarity_slot(label);
        let dialect = target && unit_f64(rng) < DIALECT_RATE;
        let word = if dialect { pick(rng, &lex.target_words[slot]) } else { pick(rng, &lex.source_words[slot]) };
        let mut clause = format!("{mention}{word}");
        if target && unit_f64(rng) < FILLER_RATE {
            clause.push_str(pick(rng, &TARGET_FILLERS));
        }
        clauses.push(clause);
    }
    Review { id, text: clauses.join(", "), source, gold: Some(gold) }
}

fn similarity(rng: &mut SeededRng, low_rate: f64) -> f64 {
    if unit_f64(rng) < low_rate {
        -0.05 + 0.19 * unit_f64(rng)
    } else {
        0.16 + 0.26 * unit_f64(rng)
    }
}

/// Unit vector with the given cosines against `e_0..e_{k-1}`.
fn review_vector(rng: &mut SeededRng, sims: &[f64]) -> Vec<f32> {
    let mut v = vec![0.0f64; EMBEDDING_DIM];
    v[..sims.len()].copy_from_slice(sims);
    let rest: f64 = 1.0 - sims.iter().map(|s| s * s).sum::<f64>();
    let mut u = rng::gaussian_vec(rng, EMBEDDING_DIM - sims.len(), 1.0);
    let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut u {
        *x *= rest.max(0.0).sqrt() / un;
    }
    v[sims.len()..].copy_from_slice(&u);
    v.into_iter().map(|x| x as f32).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let aspects = AspectSet::default();
    let lex = lexicon();
    let mut text_rng = seeded(cfg.seed);
    let mut sim_rng = rng::seeded_stream(cfg.seed, 1);

    let mut review_embeddings = EmbeddingStore::new(EMBEDDING_DIM)?;
    let mut aspect_embeddings = EmbeddingStore::new(EMBEDDING_DIM)?;
    for (i, a) in aspects.iter().enumerate() {
        let mut e = vec![0.0f32; EMBEDDING_DIM];
        e[i] = 1.0;
        aspect_embeddings.insert(a.key.clone(), e)?;
    }

    let mut build = |prefix: &str, count: usize, source: Source, low_rate: f64| -> Result<Vec<Review>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let r = make_review(&mut text_rng, &lex, &aspects, format!("{prefix}{i:04}"), source);
            let sims: Vec<f64> = (0..aspects.len()).map(|_| similarity(&mut sim_rng, low_rate)).collect();
            review_embeddings.insert(r.id.clone(), review_vector(&mut sim_rng, &sims))?;
            out.push(r);
        }
        Ok(out)
    };
    let source = build("s", cfg.source_reviews, Source::SourceTranslated, 0.0)?;
    let target = build("t", cfg.target_reviews, Source::Target, cfg.low_similarity_rate)?;
    let test = build("x", cfg.test_reviews, Source::Target, cfg.low_similarity_rate)?;
    Ok(SynthCorpus { aspects, source, target, test, review_embeddings, aspect_embeddings })
}

/// Replaces the pseudo label of detected (non-`none`) pairs whose labse score
/// is below [`LOW_SIMILARITY`], with probability `noise_rate`, by a different
/// polarity with confidence drawn from `[0.55, 0.95)`.
pub fn inject_label_noise(pairs: PairSet, noise_rate: f64, seed: u64) -> PairSet {
    let mut rng = rng::seeded_stream(seed, 2);
    pairs.map_pairs(|p| {
        let Some(current) = p.pseudo else { return };
        let low = p.labse.is_some_and(|s| s < LOW_SIMILARITY);
        if !low || !POLARITIES.contains(&current) {
            return;
        }
        let roll = unit_f64(&mut rng);
        let shift = 1 + (rng.next_u64() % 2) as usize;
        let confidence = 0.55 + 0.4 * unit_f64(&mut rng);
        if roll >= noise_rate {
            return;
        }
        let wrong = POLARITIES[(polarity_slot(current) + shift) % 3];
        let rest = (1.0 - confidence) / 4.0;
        let mut probs = [rest; 5];
        probs[wrong.index()] = confidence;
        let d = ProbDist::new(probs).expect("constructed distribution is valid");
        apply_probs(p, &d);
    })
}

/// Source pairs with gold labels, scored target pairs and gold test pairs.
#[derive(Debug, Clone)]
pub struct BenchmarkPairs {
    pub source: PairSet,
    pub target: PairSet,
    pub test: PairSet,
}

impl SynthCorpus {
    pub fn pairs(&self) -> Result<BenchmarkPairs> {
        let target = expand_to_nli(&self.target, &self.aspects)?;
        Ok(BenchmarkPairs {
            source: expand_to_nli(&self.source, &self.aspects)?,
            target: score_pairs(target, &self.review_embeddings, &self.aspect_embeddings)?,
            test: expand_to_nli(&self.test, &self.aspects)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub phase1: Phase1,
    /// Target pairs pseudo-labeled by the phase-1 model, after noise injection.
    pub noisy_target: PairSet,
    pub filtered: Phase2,
    pub unfiltered: Phase2,
    pub filtered_eval: EvalReport,
    pub unfiltered_eval: EvalReport,
    pub properties: PropertyReport,
}

/// Phase 1 on source, pseudo labels plus injected noise on target, then two
/// phase-2 runs that differ only in `filtering_enabled`, both evaluated on
/// the test pairs.
pub fn run_benchmark(synth: &SynthConfig, regime: &RegimeConfig) -> Result<BenchmarkRun> {
    let pairs = generate(synth)?.pairs()?;
    let phase1 = run_phase1(&pairs.source, &regime.phase1, regime.seed)?;
    let labeled = pseudo_label(&phase1.params, pairs.target)?;
    let noisy_target = inject_label_noise(labeled, synth.noise_rate, synth.seed);

    let run = |filtering_enabled: bool| -> Result<(Phase2, EvalReport)> {
        let cfg = RegimeConfig { filtering_enabled, ..regime.clone() };
        let p2 = run_phase2(&phase1.params, &noisy_target, Some(&pairs.source), &cfg)?;
        let eval = evaluate(&pseudo_label(&p2.params, pairs.test.clone())?, &pairs.test)?;
        Ok((p2, eval))
    };
    let (filtered, filtered_eval) = run(true)?;
    let (unfiltered, unfiltered_eval) = run(false)?;
    let properties = property_report(
        &phase1.params,
        &filtered.params,
        &noisy_target,
        &filtered.kept,
        regime.phase2.learning_rate,
        regime.seed,
    )?;
    Ok(BenchmarkRun { phase1, noisy_target, filtered, unfiltered, filtered_eval, unfiltered_eval, properties })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { source_reviews: 20, target_reviews: 40, test_reviews: 10, ..Default::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.review_embeddings, b.review_embeddings);
        assert_eq!(a.source.len(), 20);
        assert!(a.source.iter().all(|r| r.source == Source::SourceTranslated));
    }

    #[test]
    fn constructed_similarities_avoid_the_threshold() {
        let c = generate(&small()).unwrap();
        let pairs = expand_to_nli(&c.target, &c.aspects).unwrap();
        let scored = score_pairs(pairs, &c.review_embeddings, &c.aspect_embeddings).unwrap();
        let mut low = 0;
        for p in &scored {
            let s = p.labse.unwrap();
            assert!((s - LOW_SIMILARITY).abs() > 0.005, "{s}");
            low += (s < LOW_SIMILARITY) as usize;
        }
        let rate = low as f64 / scored.len() as f64;
        assert!((0.2..0.5).contains(&rate), "{rate}");
    }

    #[test]
    fn noise_keeps_detection_status() {
        let c = generate(&small()).unwrap();
        let pairs = expand_to_nli(&c.target, &c.aspects).unwrap();
        let scored = score_pairs(pairs, &c.review_embeddings, &c.aspect_embeddings).unwrap();
        let labeled = scored.map_pairs(|p| {
            let mut probs = [0.05; 5];
            probs[p.gold.unwrap().index()] = 0.8;
            apply_probs(p, &ProbDist::new(probs).unwrap());
        });
        let noisy = inject_label_noise(labeled.clone(), 1.0, 3);
        let mut flipped = 0;
        for (a, b) in labeled.iter().zip(noisy.iter()) {
            assert_eq!(a.pseudo.unwrap().is_detected(), b.pseudo.unwrap().is_detected());
            if a.pseudo != b.pseudo {
                flipped += 1;
                assert!(a.labse.unwrap() < LOW_SIMILARITY);
                b.validate().unwrap();
            }
        }
        assert!(flipped > 0);
    }
}
