mod common;

use common::{random_point, random_vectors, stats_and_confidence};
use marf::features::ConfidenceReport;
use marf::tree::{
    dichotomous_weights, find_best_dichotomous_threshold, find_best_split, train_srf_tree, train_tree, Node,
    TreeTrainer, WeightedSample,
};
use marf::{FeatureId, FeatureVector, Label, TrainParams, Tree, TreeKind, FEATURE_COUNT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mass(pos: f64, neg: f64) -> f64 {
    if pos + neg > 0.0 {
        2.0 * pos * neg / (pos + neg)
    } else {
        0.0
    }
}

fn grid(values: &mut Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

/// Brute-force minimum of the hard objective over every candidate feature
/// and every midpoint.
fn brute_hard(samples: &[WeightedSample<'_>], candidates: &[FeatureId]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &f in candidates {
        let mut vals: Vec<f64> = samples.iter().map(|s| s.values[f.index()]).collect();
        for tau in grid(&mut vals) {
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            for s in samples {
                let left = s.values[f.index()] < tau;
                match (left, s.label) {
                    (true, Label::Leg) => lp += s.weight,
                    (true, Label::NonLeg) => ln += s.weight,
                    (false, Label::Leg) => rp += s.weight,
                    (false, Label::NonLeg) => rn += s.weight,
                }
            }
            let obj = mass(lp, ln) + mass(rp, rn);
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

fn soft_objective(samples: &[WeightedSample<'_>], f: FeatureId, tau: f64, sigma: f64) -> f64 {
    let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (wl, wr) = dichotomous_weights(s.values[f.index()], tau, sigma);
        if s.label.is_leg() {
            lp += s.weight * wl;
            rp += s.weight * wr;
        } else {
            ln += s.weight * wl;
            rn += s.weight * wr;
        }
    }
    mass(lp, ln) + mass(rp, rn)
}

fn brute_soft(samples: &[WeightedSample<'_>], f: FeatureId, sigma: f64) -> f64 {
    let mut vals: Vec<f64> = samples.iter().map(|s| s.values[f.index()]).collect();
    grid(&mut vals)
        .into_iter()
        .map(|tau| soft_objective(samples, f, tau, sigma))
        .fold(f64::INFINITY, f64::min)
}

fn random_sample_set(rng: &mut ChaCha8Rng) -> (Vec<[f64; FEATURE_COUNT]>, Vec<(f64, Label)>) {
    let n = rng.gen_range(2..=64);
    let rows: Vec<[f64; FEATURE_COUNT]> = (0..n)
        .map(|_| {
            let mut x = [0.0; FEATURE_COUNT];
            for v in &mut x {
                // coarse values so ties are common
                *v = (rng.gen_range(0.0..10.0f64) * 4.0).round() / 4.0;
            }
            x
        })
        .collect();
    let meta = (0..n)
        .map(|_| (rng.gen_range(0.05..2.0), if rng.gen_bool(0.5) { Label::Leg } else { Label::NonLeg }))
        .collect();
    (rows, meta)
}

#[test]
fn hard_split_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (rows, meta) = random_sample_set(&mut rng);
        let samples: Vec<WeightedSample> = rows
            .iter()
            .zip(&meta)
            .map(|(v, &(weight, label))| WeightedSample { values: v, weight, label })
            .collect();
        let k = rng.gen_range(1..=FEATURE_COUNT);
        let candidates: Vec<FeatureId> = FeatureId::ALL[..k].to_vec();
        match (find_best_split(&samples, &candidates), brute_hard(&samples, &candidates)) {
            (Ok(choice), Some(best)) => {
                assert!((choice.impurity - best).abs() <= 1e-12, "{} vs {best}", choice.impurity);
                // the returned split really achieves that objective
                let single = brute_hard_at(&samples, choice.feature, choice.threshold);
                assert!((single - choice.impurity).abs() <= 1e-12);
            }
            (Err(_), None) => {}
            (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
        }
    }
}

fn brute_hard_at(samples: &[WeightedSample<'_>], f: FeatureId, tau: f64) -> f64 {
    let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let left = s.values[f.index()] < tau;
        let w = s.weight;
        match (left, s.label.is_leg()) {
            (true, true) => lp += w,
            (true, false) => ln += w,
            (false, true) => rp += w,
            (false, false) => rn += w,
        }
    }
    mass(lp, ln) + mass(rp, rn)
}

#[test]
fn soft_threshold_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let (rows, meta) = random_sample_set(&mut rng);
        let samples: Vec<WeightedSample> = rows
            .iter()
            .zip(&meta)
            .map(|(v, &(weight, label))| WeightedSample { values: v, weight, label })
            .collect();
        let f = FeatureId::ALL[rng.gen_range(0..FEATURE_COUNT)];
        let sigma = rng.gen_range(0.05..5.0);
        let brute = brute_soft(&samples, f, sigma);
        match find_best_dichotomous_threshold(&samples, f, sigma) {
            Ok((tau, obj)) => {
                assert!((obj - brute).abs() <= 1e-12, "{obj} vs {brute}");
                assert!((soft_objective(&samples, f, tau, sigma) - brute).abs() <= 1e-12);
            }
            Err(_) => assert!(brute.is_infinite()),
        }
    }
}

#[test]
fn tiny_sigma_soft_threshold_tracks_hard_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    for _ in 0..100 {
        let (rows, meta) = random_sample_set(&mut rng);
        let samples: Vec<WeightedSample> = rows
            .iter()
            .zip(&meta)
            .map(|(v, &(weight, label))| WeightedSample { values: v, weight, label })
            .collect();
        let f = FeatureId::Width;
        let Ok(hard) = find_best_split(&samples, &[f]) else { continue };
        let (_, soft_obj) = find_best_dichotomous_threshold(&samples, f, 1e-9 * 10.0).unwrap();
        assert!((soft_obj - hard.impurity).abs() < 1e-9);
        checked += 1;
    }
    assert!(checked > 50);
}

/// Every root-to-leaf path with its weight product, by recursion.
fn leaf_paths(tree: &Tree, x: &[f64; FEATURE_COUNT]) -> Vec<(Label, f64, u32)> {
    fn walk(nodes: &[Node], i: usize, x: &[f64; FEATURE_COUNT], w: f64, d: u32, out: &mut Vec<(Label, f64, u32)>) {
        match nodes[i] {
            Node::Regular { feature, threshold, left, right } => {
                let next = if x[feature.index()] < threshold { left } else { right };
                walk(nodes, next as usize, x, w, d + 1, out);
            }
            Node::Dichotomous { feature, threshold, sigma, left, right } => {
                let (wl, wr) = dichotomous_weights(x[feature.index()], threshold, sigma);
                walk(nodes, left as usize, x, w * wl, d + 1, out);
                walk(nodes, right as usize, x, w * wr, d + 1, out);
            }
            Node::Leaf { label, .. } => out.push((label, w, d)),
        }
    }
    let mut out = Vec::new();
    walk(tree.nodes(), 0, x, 1.0, 0, &mut out);
    out
}

fn adaptive_params(seed: u64) -> TrainParams {
    TrainParams { seed, max_depth: 12, ..TrainParams::default() }
}

#[test]
fn weight_conservation_and_score_oracle() {
    let data = random_vectors(300, 5);
    let (stats, conf) = stats_and_confidence(&data);
    // zero global confidence forces plenty of dichotomous nodes
    let zero = ConfidenceReport { c: [0.0; FEATURE_COUNT], ..conf.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..6 {
        let params = TrainParams { min_soft_gain: 0.0, ..adaptive_params(seed) };
        let tree = train_tree(&data, if seed % 2 == 0 { &zero } else { &conf }, &stats, &params).unwrap();
        for _ in 0..100 {
            let x = random_point(&mut rng);
            let paths = leaf_paths(&tree, &x);
            let total: f64 = paths.iter().map(|p| p.1).sum();
            assert!((total - 1.0).abs() < 1e-9, "total {total}");
            let leg: f64 = paths.iter().filter(|p| p.0.is_leg()).map(|p| p.1).sum();
            let out = tree.predict_values(&x);
            assert!((out.score - leg).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&out.score));
            assert_eq!(out.label.is_leg(), leg > 0.5);
        }
    }
}

#[test]
fn infinite_epsilon_reproduces_standard_tree() {
    let data = random_vectors(400, 7);
    let (stats, conf) = stats_and_confidence(&data);
    for seed in 0..5 {
        let params = TrainParams { epsilon: f64::INFINITY, ..adaptive_params(seed) };
        let adaptive = train_tree(&data, &conf, &stats, &params).unwrap();
        let srf = train_srf_tree(&data, &stats, &params).unwrap();
        assert_eq!(adaptive, srf);
        assert_eq!(adaptive.stats().dichotomous_count, 0);
    }
}

#[test]
fn zero_global_confidence_and_zero_epsilon_make_every_split_dichotomous() {
    let data = random_vectors(200, 8);
    let (stats, conf) = stats_and_confidence(&data);
    let zero = ConfidenceReport { c: [0.0; FEATURE_COUNT], ..conf };
    let params = TrainParams { epsilon: 0.0, min_soft_gain: 0.0, ..adaptive_params(1) };
    let tree = train_tree(&data, &zero, &stats, &params).unwrap();
    assert!(tree.nodes().len() > 1);
    for n in tree.nodes() {
        assert!(!matches!(n, Node::Regular { .. }));
    }
}

#[test]
fn separable_data_gives_a_stump() {
    let data: Vec<FeatureVector> = (0..40)
        .map(|i| {
            let mut values = [1.0; FEATURE_COUNT];
            values[0] = i as f64 / 40.0;
            FeatureVector {
                values,
                label: Some(if values[0] < 0.5 { Label::NonLeg } else { Label::Leg }),
                scan_id: String::new(),
            }
        })
        .collect();
    let (stats, conf) = stats_and_confidence(&data);
    let tree = train_tree(&data, &conf, &stats, &TrainParams::default()).unwrap();
    assert_eq!(tree.nodes().len(), 3);
    match tree.nodes()[0] {
        Node::Regular { feature, threshold, .. } => {
            assert_eq!(feature, FeatureId::Width);
            assert!((threshold - 0.4875).abs() < 1e-12);
        }
        other => panic!("root is {other:?}"),
    }
    assert_eq!(tree.stats().mean_leaf_depth, 1.0);
}

#[test]
fn rebalanced_prf_without_floor_equals_always_switching_tree() {
    let data = random_vectors(200, 9);
    let (stats, conf) = stats_and_confidence(&data);
    let rows: Vec<usize> = (0..data.len()).collect();
    for seed in 0..3 {
        let params = TrainParams { epsilon: f64::NEG_INFINITY, min_soft_gain: 0.0, ..adaptive_params(seed) };
        let (a, _) = TreeTrainer::new(TreeKind::AdaptiveSwitch, &params, &conf, &stats).train_rows(&data, &rows).unwrap();
        let prf = TreeKind::Probabilistic { p_min: 0.0, rebalance: true };
        let (b, _) = TreeTrainer::new(prf, &params, &conf, &stats).train_rows(&data, &rows).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn switch_decisions_match_the_tree() {
    let data = random_vectors(300, 10);
    let (stats, conf) = stats_and_confidence(&data);
    let rows: Vec<usize> = (0..data.len()).collect();
    for gain in [0.0, 0.05] {
        let params = TrainParams { epsilon: 0.05, min_soft_gain: gain, ..adaptive_params(3) };
        let (tree, log) = TreeTrainer::new(TreeKind::AdaptiveSwitch, &params, &conf, &stats).train_rows(&data, &rows).unwrap();
        let internal = tree.nodes().iter().filter(|n| !matches!(n, Node::Leaf { .. })).count();
        assert_eq!(log.decisions.len(), internal);
        let mut switched = 0;
        for d in &log.decisions {
            let local = d.local_confidence.unwrap();
            let conflict = local - d.global_confidence >= params.epsilon;
            assert_eq!(d.conflict, conflict);
            let expect = conflict && d.sigma > 0.0 && (gain == 0.0 || d.soft_gain.unwrap() >= gain);
            assert_eq!(d.dichotomous, expect, "{d:?}");
            let is_dich = matches!(tree.nodes()[d.node as usize], Node::Dichotomous { .. });
            assert_eq!(is_dich, d.dichotomous);
            switched += usize::from(is_dich);
        }
        if gain == 0.0 {
            assert!(switched > 0);
        }
    }
}

#[test]
fn tiny_sigma_routing_agrees_with_hard_routing() {
    let data = random_vectors(300, 14);
    let (stats, conf) = stats_and_confidence(&data);
    let tiny = stats.scaled_sigma(1e-9);
    let params = TrainParams { epsilon: f64::NEG_INFINITY, ..adaptive_params(2) };
    let tree = train_tree(&data, &conf, &tiny, &params).unwrap();
    let dich: Vec<(FeatureId, f64, f64)> = tree
        .nodes()
        .iter()
        .filter_map(|n| match *n {
            Node::Dichotomous { feature, threshold, sigma, .. } => Some((feature, threshold, sigma)),
            _ => None,
        })
        .collect();
    assert!(!dich.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut agree = 0;
    let total = 10_000;
    for _ in 0..total {
        let (f, tau, sigma) = dich[rng.gen_range(0..dich.len())];
        let x = data[rng.gen_range(0..data.len())].values[f.index()];
        let (wl, _) = dichotomous_weights(x, tau, sigma);
        let hard_left = x < tau;
        if (hard_left && wl > 1.0 - 1e-9) || (!hard_left && wl < 1e-9) {
            agree += 1;
        }
    }
    assert!(agree as f64 >= 0.999 * total as f64, "{agree}/{total}");
}

#[test]
fn training_is_deterministic() {
    let data = random_vectors(250, 16);
    let (stats, conf) = stats_and_confidence(&data);
    let p = adaptive_params(99);
    let a = train_tree(&data, &conf, &stats, &p).unwrap();
    let b = train_tree(&data, &conf, &stats, &p).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a.to_records()).unwrap(), serde_json::to_string(&b.to_records()).unwrap());
}

#[test]
fn tree_stats_match_path_enumeration() {
    let data = random_vectors(300, 17);
    let (stats, conf) = stats_and_confidence(&data);
    let tree = train_tree(&data, &conf, &stats, &adaptive_params(4)).unwrap();
    fn depths(nodes: &[Node], i: usize, d: u32, out: &mut Vec<u32>) {
        match nodes[i] {
            Node::Regular { left, right, .. } | Node::Dichotomous { left, right, .. } => {
                depths(nodes, left as usize, d + 1, out);
                depths(nodes, right as usize, d + 1, out);
            }
            Node::Leaf { depth, .. } => {
                assert_eq!(depth, d);
                out.push(d);
            }
        }
    }
    let mut leaf_depths = Vec::new();
    depths(tree.nodes(), 0, 0, &mut leaf_depths);
    let s = tree.stats();
    assert_eq!(s.leaf_count, leaf_depths.len());
    let mean = leaf_depths.iter().map(|&d| d as f64).sum::<f64>() / leaf_depths.len() as f64;
    assert!((s.mean_leaf_depth - mean).abs() < 1e-12);
    assert_eq!(s.depth_histogram.values().sum::<usize>(), leaf_depths.len());
    assert!(tree.max_depth() as usize <= adaptive_params(4).max_depth);
}

#[test]
fn single_class_data_is_rejected() {
    let mut data = random_vectors(30, 18);
    for v in &mut data {
        v.label = Some(Label::Leg);
    }
    let (stats, conf) = stats_and_confidence(&random_vectors(30, 18));
    assert!(train_tree(&data, &conf, &stats, &TrainParams::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn predictions_conserve_weight(seed in 0u64..1000, xs in proptest::collection::vec(-5.0f64..20.0, FEATURE_COUNT)) {
        let data = random_vectors(120, seed);
        let (stats, conf) = stats_and_confidence(&data);
        let zero = ConfidenceReport { c: [0.0; FEATURE_COUNT], ..conf };
        let params = TrainParams { min_soft_gain: 0.0, max_depth: 8, seed, ..TrainParams::default() };
        let tree = train_tree(&data, &zero, &stats, &params).unwrap();
        let x: [f64; FEATURE_COUNT] = xs.try_into().unwrap();
        let total: f64 = leaf_paths(&tree, &x).iter().map(|p| p.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let s = tree.predict_values(&x).score;
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn weights_approach_indicator_as_sigma_shrinks(x in -10.0f64..10.0, tau in -10.0f64..10.0) {
        prop_assume!((x - tau).abs() > 1e-6);
        let (wl, wr) = dichotomous_weights(x, tau, 1e-9);
        let hard = if x < tau { 1.0 } else { 0.0 };
        prop_assert_eq!(wl, hard);
        prop_assert_eq!(wr, 1.0 - hard);
    }
}
