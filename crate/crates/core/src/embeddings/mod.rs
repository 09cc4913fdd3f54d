//! Sentence-embedding storage and the review/aspect cosine score.
//!
//! Review vectors are keyed by review id and aspect vectors by aspect key;
//! the score of a pair is the cosine between the two.

pub mod format;
pub mod stats;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{NliPair, PairSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use format::VectorFile;
pub use stats::{pearson, spearman, Correlation};

/// Id-indexed dense vectors of a common dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T = f32> {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<T>>,
    index: HashMap<String, usize>,
    normalized: bool,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dim must be positive".into()));
        }
        Ok(Self { dim, ids: Vec::new(), vectors: Vec::new(), index: HashMap::new(), normalized: true })
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<T>) -> Result<()> {
        let id = id.into();
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.normalized &= is_unit(&v);
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[T]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }

    /// Whether every vector has unit L2 norm (within 1e-6).
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Replaces every vector by its unit-norm version.
    pub fn normalize(&mut self) -> Result<()> {
        for v in &mut self.vectors {
            *v = l2_normalize(v)?;
        }
        self.normalized = true;
        Ok(())
    }
}

impl EmbeddingStore<f32> {
    /// Builds a store from EMB1 records, normalizing unless the file is
    /// flagged as already normalized.
    pub fn from_file(file: VectorFile) -> Result<Self> {
        let mut store = Self::new(file.width)?;
        for (id, v) in file.records {
            store.insert(id, v)?;
        }
        if !file.normalized {
            store.normalize()?;
        }
        Ok(store)
    }

    pub fn to_file(&self) -> VectorFile {
        VectorFile {
            width: self.dim,
            normalized: self.normalized,
            records: self.ids.iter().cloned().zip(self.vectors.iter().cloned()).collect(),
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore<f32>> {
    EmbeddingStore::from_file(format::load_emb1(path)?)
}

pub fn save_embeddings(path: impl AsRef<Path>, store: &EmbeddingStore<f32>) -> Result<()> {
    format::save_emb1(path, &store.to_file())
}

fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.f64() * x.f64()).sum::<f64>().sqrt()
}

fn is_unit<T: Scalar>(v: &[T]) -> bool {
    (norm(v) - 1.0).abs() <= 1e-6
}

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(v.iter().map(|x| T::of(x.f64() / n)).collect())
}

/// Cosine similarity, accumulated in f64 and clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x.f64() * y.f64()).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn labse_score<T: Scalar>(pair: &NliPair, reviews: &EmbeddingStore<T>, aspects: &EmbeddingStore<T>) -> Result<f64> {
    let s = reviews.get(&pair.review_id).ok_or_else(|| Error::MissingId(pair.review_id.clone()))?;
    let key = pair.aspect_key();
    let a = aspects.get(key).ok_or_else(|| Error::MissingId(key.to_string()))?;
    cosine(s, a)
}

/// Fills the `labse` field of every pair.
pub fn score_pairs<T: Scalar>(
    pairs: PairSet,
    reviews: &EmbeddingStore<T>,
    aspects: &EmbeddingStore<T>,
) -> Result<PairSet> {
    let scores = pairs.iter().map(|p| labse_score(p, reviews, aspects)).collect::<Result<Vec<_>>>()?;
    let mut it = scores.into_iter();
    Ok(pairs.map_pairs(|p| p.labse = it.next()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    LabseCosine,
    Msp,
    PearsonR,
    SpearmanRho,
}

/// A score tagged with what it measures, range-checked on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredValue {
    pub value: f64,
    pub kind: ScoreKind,
}

impl ScoredValue {
    pub fn new(kind: ScoreKind, value: f64) -> Result<Self> {
        let ok = match kind {
            ScoreKind::Msp => value > 0.0 && value <= 1.0,
            _ => (-1.0..=1.0).contains(&value),
        };
        if !ok {
            return Err(Error::Format(format!("{value} out of range for {kind:?}")));
        }
        Ok(Self { value, kind })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_to_nli, AspectSet, Review, Source};

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0f32, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0f32, 0.0]), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3f32, -0.2], &[0.3, -0.2]).unwrap() - 1.0).abs() < 1e-7);
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0f32, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn scores_pairs_and_reports_missing_ids() {
        let reviews = vec![Review { id: "r1".into(), text: "t".into(), source: Source::Target, gold: None }];
        let aspects = AspectSet::parse_list("food,service").unwrap();
        let pairs = expand_to_nli(&reviews, &aspects).unwrap();
        let mut rs = EmbeddingStore::new(2).unwrap();
        rs.insert("r1", vec![1.0f32, 1.0]).unwrap();
        let mut as_ = EmbeddingStore::new(2).unwrap();
        as_.insert("food", vec![1.0f32, 0.0]).unwrap();
        assert!(matches!(score_pairs(pairs.clone(), &rs, &as_), Err(Error::MissingId(k)) if k == "service"));
        as_.insert("service", vec![0.0f32, 2.0]).unwrap();
        let scored = score_pairs(pairs, &rs, &as_).unwrap();
        for p in &scored {
            assert!((p.labse.unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn store_normalizes_on_load_unless_flagged() {
        let file = VectorFile { width: 2, normalized: false, records: vec![("a".into(), vec![3.0, 4.0])] };
        let store = EmbeddingStore::from_file(file.clone()).unwrap();
        assert!(store.is_normalized());
        assert!((store.get("a").unwrap()[0] - 0.6).abs() < 1e-7);
        let kept = EmbeddingStore::from_file(VectorFile { normalized: true, ..file }).unwrap();
        assert_eq!(kept.get("a").unwrap(), &[3.0, 4.0]);
        assert!(!kept.is_normalized());
        let zero = VectorFile { width: 2, normalized: false, records: vec![("z".into(), vec![0.0, 0.0])] };
        assert!(matches!(EmbeddingStore::from_file(zero), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn scored_value_ranges() {
        assert!(ScoredValue::new(ScoreKind::Msp, 0.0).is_err());
        assert!(ScoredValue::new(ScoreKind::Msp, 1.0).is_ok());
        assert!(ScoredValue::new(ScoreKind::LabseCosine, -1.0).is_ok());
        assert!(ScoredValue::new(ScoreKind::SpearmanRho, 1.5).is_err());
    }
}
