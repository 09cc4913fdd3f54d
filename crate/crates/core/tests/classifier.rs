// The oracles are written index by index on purpose.
#![allow(clippy::needless_range_loop)]

use dualfilter::corpus::{NliPair, PairSet, PolarityLabel, Source, NUM_LABELS};
use dualfilter::embeddings::format::VectorFile;
use dualfilter::refclassifier::{
    accuracy, example_gradient, finite_difference_check, fresh, import_logits_file, msp, pseudo_label, train,
    FeatureVector, LabelSource, ProbDist, TrainConfig,
};
use dualfilter::{Classifier, Classifier64, Error};

fn pair(id: &str, x_s: &str, x_a: &str, source: Source, gold: Option<PolarityLabel>) -> NliPair {
    NliPair {
        pair_id: format!("{id}#{x_a}"),
        review_id: id.to_string(),
        x_s: x_s.to_string(),
        x_a: x_a.to_string(),
        source,
        gold,
        pseudo: None,
        probs: None,
        msp: None,
        labse: None,
    }
}

/// Five pairs per class, each class written with its own alphabet.
fn separable() -> PairSet {
    let alphabets = [("positive", "abc"), ("negative", "xyz"), ("neutral", "klm"), ("none", "pqr")];
    let mut pairs = Vec::new();
    for (label, chars) in alphabets {
        let c: Vec<char> = chars.chars().collect();
        for i in 0..5 {
            let text: String = (0..4 + i).map(|k| c[(k * (i + 1)) % 3]).collect();
            pairs.push(pair(
                &format!("{label}{i}"),
                &text,
                "food",
                Source::SourceTranslated,
                Some(label.parse().unwrap()),
            ));
        }
    }
    PairSet::new(pairs).unwrap()
}

fn mixed(n: usize) -> PairSet {
    let words = ["음식좋아요", "서비스별로예요", "가격보통이에요", "분위기훌륭해요", "추억나빠요"];
    let pairs = (0..n)
        .map(|i| {
            let text = format!("{}, {}", words[i % 5], words[(i * 3 + 1) % 5]);
            let label = PolarityLabel::from_index(i % NUM_LABELS).unwrap();
            pair(&format!("r{i}"), &text, ["음식", "서비스"][i % 2], Source::SourceTranslated, Some(label))
        })
        .collect();
    PairSet::new(pairs).unwrap()
}

/// Straight-line forward pass over the public parameter accessors.
fn forward_oracle(p: &Classifier64, f: &FeatureVector) -> [f64; NUM_LABELS] {
    let h = p.hidden();
    let mut pre = vec![0.0; h];
    for &(i, w) in f.entries() {
        let row = p.body_row(i);
        for j in 0..h {
            pre[j] += w * row[j];
        }
    }
    let mut z = [0.0; NUM_LABELS];
    for k in 0..NUM_LABELS {
        z[k] = p.bias()[k];
        for j in 0..h {
            if pre[j] > 0.0 {
                z[k] += pre[j] * p.head()[j * NUM_LABELS + k];
            }
        }
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let mut out = [0.0; NUM_LABELS];
    for k in 0..NUM_LABELS {
        out[k] = e[k] / s;
    }
    out
}

fn trained(seed: u64) -> Classifier64 {
    let set = mixed(30);
    let init: Classifier64 = fresh(&set, seed);
    let cfg = TrainConfig { epochs: 3, seed, ..Default::default() };
    train(&init, &set, &cfg, LabelSource::Gold).unwrap().params
}

#[test]
fn forward_matches_straight_line_oracle() {
    let p = trained(0);
    for q in mixed(10).iter() {
        let f = p.featurize(&q.x_s, &q.x_a).unwrap();
        let got = p.forward(&f).unwrap();
        let want = forward_oracle(&p, &f);
        for k in 0..NUM_LABELS {
            assert!((got.as_slice()[k] - want[k]).abs() < 1e-9);
        }
        assert!((got.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn pseudo_labels_match_oracle_argmax() {
    let p = trained(1);
    let pairs = mixed(10);
    let labeled = pseudo_label(&p, pairs.clone()).unwrap();
    for (orig, q) in pairs.iter().zip(labeled.iter()) {
        let want = forward_oracle(&p, &p.featurize(&q.x_s, &q.x_a).unwrap());
        let mut best = 0;
        for k in 1..NUM_LABELS {
            if want[k] > want[best] {
                best = k;
            }
        }
        assert_eq!(q.pseudo.unwrap().index(), best);
        assert!((q.msp.unwrap() - want[best]).abs() < 1e-9);
        assert_eq!(q.gold, orig.gold);
    }
}

#[test]
fn softmax_is_shift_invariant() {
    let z = [0.3f64, -1.2, 2.5, 0.0, 0.7];
    let a = ProbDist::from_logits(&z).unwrap();
    let shifted: Vec<f64> = z.iter().map(|v| v + 123.4).collect();
    let b = ProbDist::from_logits(&shifted).unwrap();
    for k in 0..NUM_LABELS {
        assert!((a.as_slice()[k] - b.as_slice()[k]).abs() < 1e-9);
    }
    let u = ProbDist::from_logits(&[1.0f64; 5]).unwrap();
    assert!(u.as_slice().iter().all(|p| (p - 0.2).abs() < 1e-15));
}

#[test]
fn msp_of_softmax_2_1_0_0_0() {
    let d = ProbDist::from_logits(&[2.0f64, 1.0, 0.0, 0.0, 0.0]).unwrap();
    let e2 = 2f64.exp();
    let want = e2 / (e2 + 1f64.exp() + 3.0);
    assert!((msp(&d) - want).abs() < 1e-12);
}

#[test]
fn separable_set_reaches_full_accuracy() {
    let set = separable();
    let init: Classifier = fresh(&set, 0);
    let out = train(&init, &set, &TrainConfig::default(), LabelSource::Gold).unwrap();
    assert_eq!(accuracy(&out.params, &set, LabelSource::Gold).unwrap(), 1.0);
    assert!(out.report.final_loss() <= out.report.initial_loss);
}

#[test]
fn training_is_deterministic() {
    let set = mixed(40);
    let init: Classifier = fresh(&set, 5);
    let cfg = TrainConfig { epochs: 4, seed: 9, ..Default::default() };
    let a = train(&init, &set, &cfg, LabelSource::Gold).unwrap();
    let b = train(&init, &set, &cfg, LabelSource::Gold).unwrap();
    assert_eq!(a.params.digest(), b.params.digest());
    assert_eq!(a.report, b.report);
    let c = train(&init, &set, &TrainConfig { seed: 10, ..cfg }, LabelSource::Gold).unwrap();
    assert_ne!(a.params.digest(), c.params.digest());
}

fn with_msp(set: PairSet, msp_of: impl Fn(usize) -> f64) -> PairSet {
    let mut i = 0;
    set.map_pairs(|p| {
        let s = msp_of(i);
        i += 1;
        let y = p.gold.unwrap();
        let rest = (1.0 - s) / 4.0;
        let mut probs = vec![rest; NUM_LABELS];
        probs[y.index()] = s;
        p.probs = Some(probs);
        p.pseudo = Some(y);
        p.msp = Some(s);
    })
}

#[test]
fn fully_gated_training_leaves_params_unchanged() {
    let set = with_msp(mixed(12), |_| 0.3);
    let init: Classifier = fresh(&set, 2);
    let out = train(&init, &set, &TrainConfig::default(), LabelSource::Pseudo).unwrap();
    assert_eq!(out.params.digest(), init.digest());
    assert_eq!(out.report.active_examples, 0);
}

#[test]
fn gating_matches_training_on_prefiltered_set() {
    let set = with_msp(mixed(40), |i| if i % 3 == 0 { 0.4 } else { 0.6 + 0.01 * i as f64 });
    let init: Classifier = fresh(&set, 3);
    let cfg = TrainConfig { epochs: 3, ..Default::default() };
    let gated = train(&init, &set, &cfg, LabelSource::Pseudo).unwrap();
    let kept: Vec<NliPair> = set.iter().filter(|p| p.msp.unwrap() >= 0.5).cloned().collect();
    let pre = train(&init, &PairSet::new(kept).unwrap(), &cfg, LabelSource::Pseudo).unwrap();
    assert_eq!(gated.params.digest(), pre.params.digest());
    assert_eq!(gated.report, pre.report);
}

#[test]
fn confidence_weighting_scales_the_step() {
    let set = with_msp(mixed(1), |_| 0.5);
    let init: Classifier64 = fresh(&set, 4);
    let cfg = TrainConfig { epochs: 1, batch_size: 1, msp_gate: None, ..Default::default() };
    let weighted = train(&init, &set, &cfg, LabelSource::Pseudo).unwrap().params;
    let half_lr = TrainConfig { confidence_weighting: false, learning_rate: 0.05, ..cfg };
    let plain = train(&init, &set, &half_lr, LabelSource::Pseudo).unwrap().params;
    for (a, b) in weighted.head().iter().zip(plain.head()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn missing_label_is_an_error() {
    let mut pairs = mixed(3).into_pairs();
    pairs[1].gold = None;
    let set = PairSet::new(pairs).unwrap();
    let init: Classifier = fresh(&set, 0);
    assert!(matches!(train(&init, &set, &TrainConfig::default(), LabelSource::Gold), Err(Error::MissingField { .. })));
    assert!(matches!(
        train(&init, &set, &TrainConfig::default(), LabelSource::Pseudo),
        Err(Error::MissingField { .. })
    ));
}

#[test]
fn one_step_from_fresh_head_raises_label_probability() {
    let pre: Classifier = trained(6).cast();
    let head = pre.reinit_head(17);
    let cfg =
        TrainConfig { epochs: 1, batch_size: 1, confidence_weighting: false, msp_gate: None, ..Default::default() };
    for p in mixed(10).iter() {
        let single = PairSet::new(vec![p.clone()]).unwrap();
        let stepped = train(&head, &single, &cfg, LabelSource::Gold).unwrap().params;
        let y = p.gold.unwrap();
        let before = head.predict(&p.x_s, &p.x_a).unwrap().get(y);
        let after = stepped.predict(&p.x_s, &p.x_a).unwrap().get(y);
        assert!(after > before, "{} {before} -> {after}", p.pair_id);
    }
}

#[test]
fn finite_differences_agree_on_twenty_instances() {
    let set = mixed(20);
    for seed in 0..20u64 {
        let p = trained(seed);
        let q = &set.pairs()[seed as usize];
        let f = p.featurize(&q.x_s, &q.x_a).unwrap();
        let y = PolarityLabel::from_index((seed as usize * 7) % NUM_LABELS).unwrap();
        let err = finite_difference_check(&p, &f, y, 1e-5).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn confident_correct_example_has_tiny_gradient() {
    let set = separable();
    let single = PairSet::new(vec![set.pairs()[0].clone()]).unwrap();
    let init: Classifier64 = fresh(&set, 0);
    let cfg = TrainConfig { epochs: 300, learning_rate: 1.0, ..Default::default() };
    let p = train(&init, &single, &cfg, LabelSource::Gold).unwrap().params;
    let q = &single.pairs()[0];
    let f = p.featurize(&q.x_s, &q.x_a).unwrap();
    let y = q.gold.unwrap();
    let py = p.forward(&f).unwrap().get(y);
    assert!(py > 0.9999, "{py}");
    let g = example_gradient(&p, &f, y).unwrap().norm();
    assert!(g < 1e-2, "{g}");
}

#[test]
fn epsilon_precondition() {
    let p = trained(0);
    let f = p.featurize("음식", "음식").unwrap();
    assert!(matches!(finite_difference_check(&p, &f, PolarityLabel::None, 0.0), Err(Error::Config(_))));
    assert!(finite_difference_check(&p, &f, PolarityLabel::None, 0.1).is_err());
}

#[test]
fn reinit_head_contract() {
    let p: Classifier = trained(2).cast();
    let a = p.reinit_head(1);
    let b = p.reinit_head(1);
    let c = p.reinit_head(2);
    assert_eq!(a.body_digest(), p.body_digest());
    assert_eq!(a.head(), b.head());
    assert_ne!(a.head(), c.head());
    assert!(a.bias().iter().all(|&x| x == 0.0));
}

#[test]
fn msp_stays_in_range_for_initialized_and_trained_params() {
    let set = mixed(20);
    let init: Classifier = fresh(&set, 0);
    let done = train(&init, &set, &TrainConfig::default(), LabelSource::Gold).unwrap().params;
    for p in [&init, &done] {
        for q in &set {
            let s = p.predict(&q.x_s, &q.x_a).unwrap().msp();
            assert!((0.2..1.0).contains(&s), "{s}");
        }
    }
}

fn logits_file(ids: &[String], rows: impl Fn(usize) -> Vec<f32>) -> VectorFile {
    VectorFile {
        width: NUM_LABELS,
        normalized: false,
        records: ids.iter().enumerate().map(|(i, id)| (id.clone(), rows(i))).collect(),
    }
}

#[test]
fn import_logits_softmaxes_raw_rows() {
    let set = mixed(4);
    let ids: Vec<String> = set.iter().map(|p| p.pair_id.clone()).collect();
    let zeros = import_logits_file(set.clone(), &logits_file(&ids, |_| vec![0.0; 5])).unwrap();
    for p in &zeros {
        assert!(p.probs.as_ref().unwrap().iter().all(|x| (x - 0.2).abs() < 1e-12));
        assert_eq!(p.pseudo, Some(PolarityLabel::Positive));
    }
    let raw = |i: usize| vec![i as f32, 0.5, -1.0, 2.0, 0.25];
    let imported = import_logits_file(set.clone(), &logits_file(&ids, raw)).unwrap();
    for (i, p) in imported.iter().enumerate() {
        let z: Vec<f64> = raw(i).iter().map(|&v| v as f64).collect();
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let best = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((p.msp.unwrap() - best.exp() / denom).abs() < 1e-6);
    }
}

#[test]
fn import_logits_errors() {
    let set = mixed(4);
    let ids: Vec<String> = set.iter().map(|p| p.pair_id.clone()).collect();
    let short = logits_file(&ids[..3], |_| vec![0.0; 5]);
    assert!(matches!(import_logits_file(set.clone(), &short), Err(Error::MissingId(_))));
    let wide = VectorFile { width: 3, normalized: false, records: vec![(ids[0].clone(), vec![0.0; 3])] };
    assert!(matches!(import_logits_file(set, &wide), Err(Error::DimensionMismatch { expected: 5, actual: 3 })));
}
