use rand::seq::index;

use super::featurize::FeatureVector;
use super::params::ClassifierParams;
use super::train::{cross_entropy, example_gradient};
use crate::corpus::{PolarityLabel, NUM_LABELS};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Coordinates sampled per parameter block (all of them if the block is smaller).
pub const COORDS_PER_BLOCK: usize = 64;
const SAMPLE_SEED: u64 = 0x6772_6164;

#[derive(Clone, Copy)]
enum Coord {
    Body(u32, usize),
    Head(usize),
    Bias(usize),
}

fn slot(p: &mut ClassifierParams<f64>, c: Coord) -> &mut f64 {
    match c {
        Coord::Body(i, j) => &mut p.row_mut(i)[j],
        Coord::Head(i) => &mut p.head[i],
        Coord::Bias(i) => &mut p.bias[i],
    }
}

fn sample(block_len: usize, rng: &mut rng::SeededRng) -> Vec<usize> {
    if block_len <= COORDS_PER_BLOCK {
        (0..block_len).collect()
    } else {
        let mut v = index::sample(rng, block_len, COORDS_PER_BLOCK).into_vec();
        v.sort_unstable();
        v
    }
}

/// Largest relative error between the analytic cross-entropy gradient and
/// central differences of step `epsilon`, over sampled coordinates of the
/// body rows touched by `f`, the head, and the bias. Runs in f64.
pub fn finite_difference_check<T: Scalar>(
    params: &ClassifierParams<T>,
    f: &FeatureVector,
    y: PolarityLabel,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Config(format!("epsilon must lie in (0, 1e-2], got {epsilon}")));
    }
    let mut p: ClassifierParams<f64> = params.cast();
    let indices: Vec<u32> = f.indices().collect();
    for &i in &indices {
        p.row_mut(i);
    }
    let grad = example_gradient(&p, f, y)?;
    let hidden = p.hidden;

    let mut rng = rng::seeded(SAMPLE_SEED);
    let mut coords = Vec::new();
    for flat in sample(indices.len() * hidden, &mut rng) {
        coords.push(Coord::Body(indices[flat / hidden], flat % hidden));
    }
    coords.extend(sample(hidden * NUM_LABELS, &mut rng).into_iter().map(Coord::Head));
    coords.extend(sample(NUM_LABELS, &mut rng).into_iter().map(Coord::Bias));

    let mut worst: f64 = 0.0;
    for c in coords {
        let analytic = match c {
            Coord::Body(i, j) => grad.body.get(&i).map_or(0.0, |r| r[j]),
            Coord::Head(i) => grad.head[i],
            Coord::Bias(i) => grad.bias[i],
        };
        let orig = *slot(&mut p, c);
        *slot(&mut p, c) = orig + epsilon;
        let up = cross_entropy(&p, f, y)?;
        *slot(&mut p, c) = orig - epsilon;
        let down = cross_entropy(&p, f, y)?;
        *slot(&mut p, c) = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}
