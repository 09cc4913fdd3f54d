//! Reference pseudo-classifier: hashed n-gram features, a ReLU body and a
//! reinitializable softmax head.

pub mod featurize;
pub mod gradcheck;
pub mod labeling;
pub mod params;
pub mod prob;
pub mod train;

pub use featurize::{char_ngrams, FeatureVector, Featurizer};
pub use gradcheck::finite_difference_check;
pub use labeling::{apply_probs, import_logits, import_logits_file, pseudo_label};
pub use params::ClassifierParams;
pub use prob::{msp, ProbDist};
pub use train::{accuracy, example_gradient, train, Gradient, LabelSource, TrainConfig, TrainOutcome, TrainReport};

/// Fits a featurizer on the pairs and draws fresh parameters from `seed`.
pub fn fresh<T: crate::scalar::Scalar>(pairs: &crate::corpus::PairSet, seed: u64) -> ClassifierParams<T> {
    let fz = Featurizer::fit(pairs.iter().map(|p| (p.x_s.as_str(), p.x_a.as_str())));
    ClassifierParams::init(fz, seed)
}
