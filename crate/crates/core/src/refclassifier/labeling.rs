use std::collections::HashMap;
use std::path::Path;

use super::params::ClassifierParams;
use super::prob::ProbDist;
use crate::corpus::{NliPair, PairSet, NUM_LABELS};
use crate::embeddings::format::{self, VectorFile};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Writes `probs`, the argmax `pseudo` label and `msp` onto a pair.
pub fn apply_probs(pair: &mut NliPair, d: &ProbDist) {
    pair.probs = Some(d.as_slice().to_vec());
    pair.pseudo = Some(d.argmax());
    pair.msp = Some(d.msp());
}

/// Labels every pair with the classifier's prediction. Gold labels are kept.
pub fn pseudo_label<T: Scalar>(params: &ClassifierParams<T>, pairs: PairSet) -> Result<PairSet> {
    let dists = pairs.iter().map(|p| params.predict(&p.x_s, &p.x_a)).collect::<Result<Vec<_>>>()?;
    let mut it = dists.into_iter();
    Ok(pairs.map_pairs(|p| apply_probs(p, &it.next().expect("one distribution per pair"))))
}

/// Labels pairs from externally produced logits (softmax is applied here).
pub fn import_logits_file(pairs: PairSet, logits: &VectorFile) -> Result<PairSet> {
    if logits.width != NUM_LABELS {
        return Err(Error::DimensionMismatch { expected: NUM_LABELS, actual: logits.width });
    }
    let by_id: HashMap<&str, &[f32]> = logits.records.iter().map(|(id, v)| (id.as_str(), v.as_slice())).collect();
    let mut dists = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let z = by_id.get(p.pair_id.as_str()).ok_or_else(|| Error::MissingId(p.pair_id.clone()))?;
        dists.push(ProbDist::from_logits(z)?);
    }
    let mut it = dists.into_iter();
    Ok(pairs.map_pairs(|p| apply_probs(p, &it.next().expect("one distribution per pair"))))
}

pub fn import_logits(pairs: PairSet, path: impl AsRef<Path>) -> Result<PairSet> {
    import_logits_file(pairs, &format::load_lgt1(path)?)
}
