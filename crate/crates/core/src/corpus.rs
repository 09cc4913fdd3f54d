//! Review corpora and their expansion into sentence-pair classification units.
//!
//! A review `x_s` is paired with the surface string `x_a` of every aspect in
//! the aspect set. The pair label is the review's polarity toward that aspect,
//! or [`PolarityLabel::None`] when the review is labeled but does not address
//! the aspect. Unlabeled reviews yield unlabeled pairs.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Number of polarity classes, in the fixed order of [`PolarityLabel::ALL`].
pub const NUM_LABELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarityLabel {
    Positive,
    Negative,
    Neutral,
    Conflict,
    /// The aspect is not addressed by the review. Not the same as `Neutral`.
    None,
}

impl PolarityLabel {
    pub const ALL: [PolarityLabel; NUM_LABELS] = [
        PolarityLabel::Positive,
        PolarityLabel::Negative,
        PolarityLabel::Neutral,
        PolarityLabel::Conflict,
        PolarityLabel::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolarityLabel::Positive => "positive",
            PolarityLabel::Negative => "negative",
            PolarityLabel::Neutral => "neutral",
            PolarityLabel::Conflict => "conflict",
            PolarityLabel::None => "none",
        }
    }

    /// Whether the label marks the aspect as detected.
    pub fn is_detected(self) -> bool {
        self != PolarityLabel::None
    }
}

impl fmt::Display for PolarityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolarityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|l| l.as_str() == s).ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Machine-translated labeled benchmark data.
    SourceTranslated,
    /// Real data in the target language, normally unlabeled.
    #[default]
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectCategory {
    pub key: String,
    pub surface: String,
}

impl AspectCategory {
    pub fn new(key: impl Into<String>, surface: impl Into<String>) -> Self {
        Self { key: key.into(), surface: surface.into() }
    }
}

/// An ordered, validated list of aspect categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectSet(Vec<AspectCategory>);

impl AspectSet {
    pub fn new(aspects: Vec<AspectCategory>) -> Result<Self> {
        if aspects.is_empty() {
            return Err(Error::InvalidAspects("aspect set is empty".into()));
        }
        let mut seen = HashSet::new();
        for a in &aspects {
            if a.key.is_empty() {
                return Err(Error::InvalidAspects("empty aspect key".into()));
            }
            if a.key.contains('#') {
                return Err(Error::InvalidAspects(format!("aspect key `{}` contains '#'", a.key)));
            }
            if a.surface.is_empty() {
                return Err(Error::InvalidAspects(format!("aspect `{}` has empty surface", a.key)));
            }
            if !seen.insert(a.key.as_str()) {
                return Err(Error::InvalidAspects(format!("duplicate aspect key `{}`", a.key)));
            }
        }
        Ok(Self(aspects))
    }

    /// Parses a comma list. Each item is `key=surface` or a bare key from the
    /// default set.
    pub fn parse_list(spec: &str) -> Result<Self> {
        let defaults = Self::default();
        let mut out = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('=') {
                Some((k, s)) => out.push(AspectCategory::new(k.trim(), s.trim())),
                None => match defaults.get(item) {
                    Some(a) => out.push(a.clone()),
                    None => {
                        return Err(Error::InvalidAspects(format!("`{item}` is not a default aspect; use key=surface")))
                    }
                },
            }
        }
        Self::new(out)
    }

    pub fn get(&self, key: &str) -> Option<&AspectCategory> {
        self.0.iter().find(|a| a.key == key)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AspectCategory> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for AspectSet {
    fn default() -> Self {
        Self(vec![
            AspectCategory::new("price", "가격"),
            AspectCategory::new("anecdotes", "일화"),
            AspectCategory::new("food", "음식"),
            AspectCategory::new("ambience", "분위기"),
            AspectCategory::new("service", "서비스"),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<BTreeMap<String, PolarityLabel>>,
}

#[derive(Deserialize)]
struct RawReview {
    id: String,
    text: String,
    #[serde(default)]
    source: Source,
    #[serde(default)]
    gold: Option<GoldEntries>,
}

/// Gold map as written in the file, keeping duplicate keys visible.
struct GoldEntries(Vec<(String, String)>);

impl<'de> Deserialize<'de> for GoldEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = GoldEntries;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping aspect keys to polarity labels")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<GoldEntries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(GoldEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Review>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Review>> {
    let mut reviews = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReview =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        if raw.text.is_empty() {
            return Err(Error::EmptyText(raw.id));
        }
        if !ids.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        let gold = match raw.gold {
            None => None,
            Some(GoldEntries(entries)) => {
                let mut map = BTreeMap::new();
                for (k, v) in entries {
                    let label: PolarityLabel = v.parse()?;
                    if map.insert(k.clone(), label).is_some() {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("duplicate gold entry for aspect `{k}`"),
                        });
                    }
                }
                Some(map)
            }
        };
        reviews.push(Review { id: raw.id, text: raw.text, source: raw.source, gold });
    }
    Ok(reviews)
}

pub fn write_corpus(path: impl AsRef<Path>, reviews: &[Review]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in reviews {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One (review, aspect) classification unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPair {
    pub pair_id: String,
    pub review_id: String,
    pub x_s: String,
    pub x_a: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<PolarityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<PolarityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labse: Option<f64>,
}

pub fn pair_id(review_id: &str, aspect_key: &str) -> String {
    format!("{review_id}#{aspect_key}")
}

impl NliPair {
    /// Aspect key, recovered from the `reviewId#aspectKey` pair id.
    pub fn aspect_key(&self) -> &str {
        self.pair_id.rsplit_once('#').map(|(_, k)| k).unwrap_or("")
    }

    /// Label used for training under the given label source.
    pub fn label(&self, use_pseudo: bool) -> Option<PolarityLabel> {
        if use_pseudo {
            self.pseudo
        } else {
            self.gold
        }
    }

    /// Checks the probs/pseudo/msp consistency invariant.
    pub fn validate(&self) -> Result<()> {
        if self.pair_id.rsplit_once('#').map(|(r, _)| r) != Some(self.review_id.as_str()) {
            return Err(Error::Format(format!(
                "pair_id `{}` does not match review_id `{}`",
                self.pair_id, self.review_id
            )));
        }
        if let Some(probs) = &self.probs {
            if probs.len() != NUM_LABELS {
                return Err(Error::DimensionMismatch { expected: NUM_LABELS, actual: probs.len() });
            }
            let (arg, max) = argmax(probs);
            if self.pseudo != PolarityLabel::from_index(arg) || self.msp != Some(max) {
                return Err(Error::Format(format!("pair `{}`: pseudo/msp inconsistent with probs", self.pair_id)));
            }
        }
        Ok(())
    }
}

/// Index and value of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Ordered pairs with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet {
    pairs: Vec<NliPair>,
}

impl PairSet {
    pub fn new(pairs: Vec<NliPair>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(Error::DuplicateId(p.pair_id.clone()));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[NliPair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<NliPair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NliPair> {
        self.pairs.iter()
    }

    /// Applies `f` to every pair. Ids must not be changed.
    pub fn map_pairs(mut self, mut f: impl FnMut(&mut NliPair)) -> Self {
        for p in &mut self.pairs {
            f(p);
        }
        self
    }

    /// Aspect keys in order of first appearance.
    pub fn aspect_keys(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs.iter().map(NliPair::aspect_key).filter(|k| seen.insert(*k)).collect()
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for p in &self.pairs {
            serde_json::to_writer(&mut *w, p)?;
            w.write_all(b"\n").map_err(|e| Error::io("<pairs>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(r: impl Read) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: NliPair =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            pair.validate().map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            pairs.push(pair);
        }
        Self::new(pairs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(file)
    }
}

impl<'a> IntoIterator for &'a PairSet {
    type Item = &'a NliPair;
    type IntoIter = std::slice::Iter<'a, NliPair>;
    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// Expands each review into one pair per aspect, review-major.
pub fn expand_to_nli(reviews: &[Review], aspects: &AspectSet) -> Result<PairSet> {
    let mut pairs = Vec::with_capacity(reviews.len() * aspects.len());
    for r in reviews {
        for a in aspects.iter() {
            let gold = r.gold.as_ref().map(|g| g.get(&a.key).copied().unwrap_or(PolarityLabel::None));
            pairs.push(NliPair {
                pair_id: pair_id(&r.id, &a.key),
                review_id: r.id.clone(),
                x_s: r.text.clone(),
                x_a: a.surface.clone(),
                source: r.source,
                gold,
                pseudo: None,
                probs: None,
                msp: None,
                labse: None,
            });
        }
    }
    PairSet::new(pairs)
}

/// Concatenates `a` and `b` and applies a Fisher–Yates permutation seeded
/// with `seed` (see [`crate::rng`]).
pub fn concat_shuffled(a: &PairSet, b: &PairSet, seed: u64) -> Result<PairSet> {
    let mut all: Vec<NliPair> = a.pairs.iter().chain(b.pairs.iter()).cloned().collect();
    let mut seen = HashSet::with_capacity(all.len());
    for p in &all {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(Error::DuplicateId(p.pair_id.clone()));
        }
    }
    rng::fisher_yates(&mut all, &mut rng::seeded(seed));
    Ok(PairSet { pairs: all })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn review(id: &str, gold: Option<&[(&str, PolarityLabel)]>) -> Review {
        Review {
            id: id.into(),
            text: format!("text of {id}"),
            source: Source::Target,
            gold: gold.map(|g| g.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        }
    }

    #[test]
    fn loads_review_line() {
        let input = r#"{"id":"r1","text":"맛 집이라고 찾아서...","gold":{"food":"negative"}}"#;
        let reviews = read_corpus(input.as_bytes()).unwrap();
        assert_eq!(reviews.len(), 1);
        assert_eq!(reviews[0].source, Source::Target);
        let gold = reviews[0].gold.as_ref().unwrap();
        assert_eq!(gold.len(), 1);
        assert_eq!(gold["food"], PolarityLabel::Negative);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(read_corpus("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn corpus_errors() {
        let dup = "{\"id\":\"r1\",\"text\":\"a\"}\n{\"id\":\"r1\",\"text\":\"b\"}\n";
        assert!(matches!(read_corpus(dup.as_bytes()), Err(Error::DuplicateId(id)) if id == "r1"));

        let bad = "{\"id\":\"r1\",\"text\":\"a\"}\n{not json\n";
        assert!(matches!(read_corpus(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));

        let label = r#"{"id":"r1","text":"a","gold":{"food":"great"}}"#;
        assert!(matches!(read_corpus(label.as_bytes()), Err(Error::UnknownLabel(l)) if l == "great"));

        let empty = r#"{"id":"r1","text":""}"#;
        assert!(matches!(read_corpus(empty.as_bytes()), Err(Error::EmptyText(_))));

        let twice = r#"{"id":"r1","text":"a","gold":{"food":"positive","food":"negative"}}"#;
        assert!(matches!(read_corpus(twice.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ignores_unknown_fields_and_reads_source() {
        let line = r#"{"id":"s1","text":"a","source":"source_translated","extra":3}"#;
        let r = read_corpus(line.as_bytes()).unwrap();
        assert_eq!(r[0].source, Source::SourceTranslated);
        assert!(r[0].gold.is_none());
    }

    #[test]
    fn label_strings() {
        for l in PolarityLabel::ALL {
            assert_eq!(l.as_str().parse::<PolarityLabel>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.as_str()));
        }
        assert_eq!(PolarityLabel::None.index(), 4);
    }

    #[test]
    fn expansion_order_and_cardinality() {
        let set = expand_to_nli(&[review("r1", None), review("r2", None)], &AspectSet::default()).unwrap();
        let ids: Vec<_> = set.iter().map(|p| p.pair_id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "r1#price",
                "r1#anecdotes",
                "r1#food",
                "r1#ambience",
                "r1#service",
                "r2#price",
                "r2#anecdotes",
                "r2#food",
                "r2#ambience",
                "r2#service"
            ]
        );
        assert!(set.iter().all(|p| p.gold.is_none()));
        assert_eq!(set.pairs()[2].x_a, "음식");
    }

    #[test]
    fn unmentioned_aspects_become_none() {
        let set =
            expand_to_nli(&[review("r", Some(&[("food", PolarityLabel::Positive)]))], &AspectSet::default()).unwrap();
        for p in &set {
            let want = if p.aspect_key() == "food" { PolarityLabel::Positive } else { PolarityLabel::None };
            assert_eq!(p.gold, Some(want));
        }
    }

    #[test]
    fn aspect_set_validation() {
        assert!(AspectSet::new(vec![]).is_err());
        assert!(AspectSet::new(vec![AspectCategory::new("a", "x"), AspectCategory::new("a", "y")]).is_err());
        assert!(AspectSet::new(vec![AspectCategory::new("", "x")]).is_err());
        let parsed = AspectSet::parse_list("food, taste=맛").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed.get("taste").unwrap().surface, "맛");
        assert!(AspectSet::parse_list("nope").is_err());
    }

    #[test]
    fn concat_shuffled_is_permutation() {
        let a = expand_to_nli(&[review("a", None)], &AspectSet::parse_list("price,food,service").unwrap()).unwrap();
        let b = expand_to_nli(&[review("b", None)], &AspectSet::parse_list("price,food").unwrap()).unwrap();
        let out = concat_shuffled(&a, &b, 42).unwrap();
        assert_eq!(out.len(), 5);
        let mut got: Vec<_> = out.iter().map(|p| p.pair_id.clone()).collect();
        got.sort();
        let mut want: Vec<_> = a.iter().chain(b.iter()).map(|p| p.pair_id.clone()).collect();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(out.to_jsonl_string(), concat_shuffled(&a, &b, 42).unwrap().to_jsonl_string());

        let empty = PairSet::default();
        let only_b = concat_shuffled(&empty, &b, 9).unwrap();
        assert_eq!(only_b.len(), b.len());

        assert!(matches!(concat_shuffled(&a, &a, 1), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn pair_validation_rejects_inconsistent_probs() {
        let mut p = expand_to_nli(&[review("r", None)], &AspectSet::parse_list("food").unwrap())
            .unwrap()
            .into_pairs()
            .remove(0);
        p.probs = Some(vec![0.7, 0.1, 0.1, 0.05, 0.05]);
        p.pseudo = Some(PolarityLabel::Negative);
        p.msp = Some(0.7);
        assert!(p.validate().is_err());
        p.pseudo = Some(PolarityLabel::Positive);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.4, 0.4, 0.1, 0.05, 0.05]), (0, 0.4));
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.3, 0.0]).0, 1);
    }
}
