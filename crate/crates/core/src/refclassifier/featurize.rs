//! Hashed character n-gram tf-idf features over a (review, aspect) pair.
//!
//! Grams of length 1 to 3 are taken over Unicode scalar values and hashed
//! with 64-bit FNV-1a. Review grams land in `[0, 2^17)`, aspect grams in
//! `[2^17, 2^18)`. Weights are `tf · idf · scale`, where the scale is a single
//! constant fitted with the idf statistics.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};

pub const FEATURE_BITS: u32 = 18;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;
pub const HALF_DIM: u32 = 1 << (FEATURE_BITS - 1);
pub const MAX_NGRAM: usize = 3;

/// Character n-grams, n = 1..=3, in order of length then position.
pub fn char_ngrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for n in 1..=MAX_NGRAM {
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Bucket of a gram within its half (`aspect_half` selects the upper half).
pub fn bucket(gram: &str, aspect_half: bool) -> u32 {
    let b = (fnv1a64(gram.as_bytes()) % HALF_DIM as u64) as u32;
    if aspect_half {
        b + HALF_DIM
    } else {
        b
    }
}

fn term_counts(text: &str, aspect_half: bool, counts: &mut BTreeMap<u32, u32>) {
    for g in char_ngrams(text) {
        *counts.entry(bucket(&g, aspect_half)).or_insert(0) += 1;
    }
}

fn pair_counts(x_s: &str, x_a: &str) -> BTreeMap<u32, u32> {
    let mut counts = BTreeMap::new();
    term_counts(x_s, false, &mut counts);
    term_counts(x_a, true, &mut counts);
    counts
}

/// Sparse feature vector, sorted by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Format(format!("duplicate feature index {}", w[0].0)));
            }
        }
        for &(i, v) in &entries {
            if i as usize >= FEATURE_DIM {
                return Err(Error::DimensionMismatch { expected: FEATURE_DIM, actual: i as usize + 1 });
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Format(format!("feature {i} has invalid weight {v}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// RMS feature norm of the fitted corpus after scaling.
pub const FEATURE_RMS: f64 = 8.0;

/// Document frequencies fitted on a training corpus of pairs, plus one
/// global scale that brings the fitted documents to RMS norm [`FEATURE_RMS`]. The
/// scale is shared by every document, so grams unseen at fit time never
/// shrink the weight of known grams.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    n_docs: u64,
    df: HashMap<u32, u32>,
    scale: f64,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self { n_docs: 0, df: HashMap::new(), scale: 1.0 }
    }
}

impl Featurizer {
    pub fn fit<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let counts: Vec<BTreeMap<u32, u32>> = docs.into_iter().map(|(x_s, x_a)| pair_counts(x_s, x_a)).collect();
        let mut df: HashMap<u32, u32> = HashMap::new();
        for c in &counts {
            for &idx in c.keys() {
                *df.entry(idx).or_insert(0) += 1;
            }
        }
        let mut fz = Self { n_docs: counts.len() as u64, df, scale: 1.0 };
        let sq: f64 = counts.iter().map(|c| fz.raw(c).map(|(_, w)| w * w).sum::<f64>()).sum();
        let mean_sq = sq / counts.len().max(1) as f64;
        if mean_sq > 0.0 {
            fz.scale = FEATURE_RMS / mean_sq.sqrt();
        }
        fz
    }

    pub(crate) fn from_parts(n_docs: u64, df: HashMap<u32, u32>, scale: f64) -> Self {
        Self { n_docs, df, scale }
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    /// Global multiplier applied to every tf-idf weight.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `(index, df)` pairs sorted by index.
    pub fn document_frequencies(&self) -> Vec<(u32, u32)> {
        let mut v: Vec<_> = self.df.iter().map(|(&k, &v)| (k, v)).collect();
        v.sort_unstable();
        v
    }

    /// `ln((N + 1) / (df + 1))`; unseen buckets get `ln(N + 1)`.
    pub fn idf(&self, index: u32) -> f64 {
        let df = self.df.get(&index).copied().unwrap_or(0) as f64;
        ((self.n_docs as f64 + 1.0) / (df + 1.0)).ln()
    }

    fn raw<'a>(&'a self, counts: &'a BTreeMap<u32, u32>) -> impl Iterator<Item = (u32, f64)> + 'a {
        counts.iter().map(|(&i, &tf)| (i, tf as f64 * self.idf(i))).filter(|&(_, w)| w > 0.0)
    }

    pub fn featurize(&self, x_s: &str, x_a: &str) -> Result<FeatureVector> {
        if x_s.is_empty() || x_a.is_empty() {
            return Err(Error::Format("featurize needs non-empty review and aspect text".into()));
        }
        let counts = pair_counts(x_s, x_a);
        let entries = self.raw(&counts).map(|(i, w)| (i, w * self.scale)).collect();
        Ok(FeatureVector { entries })
    }
}
