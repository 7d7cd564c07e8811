use rand::Rng as _;
use rand_distr::StandardNormal;

use super::*;

fn numeric(columns: Vec<Vec<f64>>) -> FeatureMatrix {
    let kinds = vec![FeatureKind::Numeric; columns.len()];
    FeatureMatrix::new(kinds, columns).unwrap()
}

fn params(num_trees: usize, seed: u64) -> ForestParams {
    ForestParams { num_trees, seed, ..Default::default() }
}

fn noisy_regression(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = rng::rng_from_seed(seed);
    let x0: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y = x0
        .iter()
        .zip(&x1)
        .map(|(a, b)| a + 0.5 * b + rng.sample::<f64, _>(StandardNormal))
        .collect();
    (numeric(vec![x0, x1]), y)
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn perfect_binary_predictor_gives_single_split_trees() {
    let n = 40;
    let x0: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let x1: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
    let y = x0.clone();
    let p = ForestParams { mtry: Some(2), min_node_size: Some(1), ..params(50, 3) };
    let f = fit_forest(&numeric(vec![x0, x1]), Response::Regression(&y), &p).unwrap();
    for tree in &f.trees {
        assert_eq!(tree.n_nodes(), 3);
        assert!(matches!(tree.nodes[0], tree::Node::Numeric { feature: 0, threshold, .. } if threshold == 0.5));
    }
}

#[test]
fn constant_response_gives_single_leaves() {
    let (x, _) = noisy_regression(30, 1);
    let y = vec![2.5; 30];
    let f = fit_forest(&x, Response::Regression(&y), &params(20, 1)).unwrap();
    assert!(f.node_counts().iter().all(|&c| c == 1));
    let pred = f.predict(&x).unwrap();
    assert!(pred.values.iter().all(|&v| v == 2.5));
}

#[test]
fn fixed_seed_is_deterministic() {
    let (x, y) = noisy_regression(200, 2);
    let a = fit_forest(&x, Response::Regression(&y), &params(30, 9)).unwrap();
    let b = fit_forest(&x, Response::Regression(&y), &params(30, 9)).unwrap();
    let c = fit_forest(&x, Response::Regression(&y), &params(30, 10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn deterministic_across_thread_pools() {
    let (x, y) = noisy_regression(300, 4);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit_forest(&x, Response::Regression(&y), &params(40, 5)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(one.predict(&x).unwrap(), four.predict(&x).unwrap());
}

#[test]
fn one_tree_prediction_matches_hand_trace() {
    // y is a strictly increasing function of x and min_node_size is 1, so the
    // tree isolates every distinct in-bag x. An in-bag row lands on its own
    // leaf; an out-of-bag row lands on the nearest in-bag x (midpoint ties go
    // left, i.e. to the smaller value).
    let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let y = vec![10.0, 20.0, 30.0, 40.0, 50.0];
    let fm = numeric(vec![x.clone()]);
    for seed in 0..20 {
        let p = ForestParams { min_node_size: Some(1), ..params(1, seed) };
        let f = fit_forest(&fm, Response::Regression(&y), &p).unwrap();
        let counts = f.inbag_counts(0);
        let inbag: Vec<usize> = (0..5).filter(|&i| counts[i] > 0).collect();
        for row in 0..5 {
            let expected = inbag
                .iter()
                .min_by(|&&a, &&b| (x[a] - x[row]).abs().total_cmp(&(x[b] - x[row]).abs()).then(a.cmp(&b)))
                .map(|&i| y[i])
                .unwrap();
            assert_eq!(f.tree_predict_row(0, &fm, row).unwrap(), vec![expected], "seed {seed} row {row}");
        }
    }
}

#[test]
fn probability_rows_sum_to_one() {
    let (x, y) = noisy_regression(300, 6);
    let labels: Vec<u32> = y.iter().map(|&v| if v < -0.5 { 0 } else if v < 0.5 { 1 } else { 2 }).collect();
    let f = fit_forest(&x, Response::Classes { labels: &labels, n_classes: 3 }, &params(50, 6)).unwrap();
    let pred = f.predict(&x).unwrap();
    for i in 0..pred.n_rows() {
        assert!((pred.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    for tree in &f.trees {
        for leaf in tree.leaf_values.chunks(3) {
            assert!((leaf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let oob = f.oob_predict().unwrap();
    for i in (0..300).filter(|&i| oob.covered[i]) {
        assert!((oob.predictions.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn oob_fraction_near_e_inverse() {
    let (x, y) = noisy_regression(1000, 7);
    let f = fit_forest(&x, Response::Regression(&y), &params(500, 7)).unwrap();
    let oob = f.oob_predict().unwrap();
    let mean = oob.trees_excluding.iter().map(|&c| c as f64 / 500.0).sum::<f64>() / 1000.0;
    assert!((mean - 0.368).abs() < 0.02, "mean OOB fraction {mean}");
}

#[test]
fn single_tree_leaves_inbag_rows_uncovered() {
    let (x, y) = noisy_regression(100, 8);
    let f = fit_forest(&x, Response::Regression(&y), &params(1, 8)).unwrap();
    let counts = f.inbag_counts(0);
    let oob = f.oob_predict().unwrap();
    for i in 0..100 {
        assert_eq!(oob.covered[i], counts[i] == 0);
        assert_eq!(oob.predictions.row(i)[0].is_nan(), counts[i] > 0);
    }
}

#[test]
fn oob_prediction_uses_only_excluding_trees() {
    let (x, y) = noisy_regression(80, 9);
    let f = fit_forest(&x, Response::Regression(&y), &params(25, 9)).unwrap();
    let oob = f.oob_predict().unwrap();
    let counts: Vec<Vec<u32>> = (0..25).map(|t| f.inbag_counts(t)).collect();
    for row in 0..80 {
        let (mut sum, mut k) = (0.0, 0);
        for (t, c) in counts.iter().enumerate() {
            if c[row] == 0 {
                sum += f.tree_predict_row(t, &x, row).unwrap()[0];
                k += 1;
            }
        }
        assert_eq!(oob.trees_excluding[row], k);
        if k > 0 {
            assert!((oob.predictions.row(row)[0] - sum / k as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn apparent_error_not_above_oob_error_on_average() {
    let mut apparent_wins = 0;
    let (mut app_total, mut oob_total) = (0.0, 0.0);
    for seed in 0..20 {
        let (x, y) = noisy_regression(200, 100 + seed);
        let f = fit_forest(&x, Response::Regression(&y), &params(60, seed)).unwrap();
        let app = mse(&f.predict(&x).unwrap().values, &y);
        let oob = f.oob_predict().unwrap();
        let covered: Vec<usize> = (0..200).filter(|&i| oob.covered[i]).collect();
        let oob_mse = covered.iter().map(|&i| (oob.predictions.row(i)[0] - y[i]).powi(2)).sum::<f64>()
            / covered.len() as f64;
        app_total += app;
        oob_total += oob_mse;
        if app <= oob_mse {
            apparent_wins += 1;
        }
    }
    assert!(app_total / 20.0 <= oob_total / 20.0);
    assert!(apparent_wins >= 18, "apparent <= oob in only {apparent_wins} of 20 seeds");
}

#[test]
fn deeper_trees_never_fit_their_bootstrap_worse() {
    let (x, y) = noisy_regression(150, 11);
    let inbag_sse = |depth: usize| {
        let p = ForestParams { mtry: Some(2), min_node_size: Some(1), max_depth: depth, ..params(10, 12) };
        let f = fit_forest(&x, Response::Regression(&y), &p).unwrap();
        (0..10)
            .map(|t| {
                let counts = f.inbag_counts(t);
                (0..150)
                    .map(|i| counts[i] as f64 * (f.tree_predict_row(t, &x, i).unwrap()[0] - y[i]).powi(2))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
    };
    let mut prev = inbag_sse(1);
    for depth in 2..12 {
        let cur = inbag_sse(depth);
        for (c, p) in cur.iter().zip(&prev) {
            assert!(*c <= p + 1e-9, "depth {depth}: {c} > {p}");
        }
        prev = cur;
    }
}

#[test]
fn class_renaming_permutes_probabilities() {
    let (x, y) = noisy_regression(250, 13);
    let labels: Vec<u32> = y.iter().map(|&v| if v < -0.3 { 0 } else if v < 0.6 { 1 } else { 2 }).collect();
    let perm = [2u32, 0, 1];
    let renamed: Vec<u32> = labels.iter().map(|&l| perm[l as usize]).collect();
    let a = fit_forest(&x, Response::Classes { labels: &labels, n_classes: 3 }, &params(30, 13)).unwrap();
    let b = fit_forest(&x, Response::Classes { labels: &renamed, n_classes: 3 }, &params(30, 13)).unwrap();
    let (pa, pb) = (a.predict(&x).unwrap(), b.predict(&x).unwrap());
    for i in 0..250 {
        for k in 0..3 {
            assert_eq!(pa.row(i)[k], pb.row(i)[perm[k] as usize]);
        }
    }
}

#[test]
fn categorical_predictor_is_learned_and_unseen_levels_follow_majority() {
    let n = 300;
    let levels: Vec<f64> = (0..n).map(|i| [0.0, 1.0, 2.0, 0.0, 0.0][i % 5]).collect();
    let y: Vec<f64> = levels.iter().map(|&l| [5.0, -3.0, 1.0][l as usize]).collect();
    let x = FeatureMatrix::new(vec![FeatureKind::Categorical { n_levels: 3 }], vec![levels]).unwrap();
    let f = fit_forest(&x, Response::Regression(&y), &params(40, 14)).unwrap();
    let pred = f.predict(&x).unwrap();
    for i in 0..n {
        assert!((pred.values[i] - y[i]).abs() < 1e-9);
    }
    let probe = FeatureMatrix::new(vec![FeatureKind::Categorical { n_levels: 3 }], vec![vec![7.0, 0.0]]).unwrap();
    let p = f.predict(&probe).unwrap();
    assert_eq!(p.values[0], p.values[1]);
}

#[test]
fn error_paths() {
    let empty = FeatureMatrix::new(vec![], vec![]).unwrap();
    assert_eq!(fit_forest(&empty, Response::Regression(&[]), &params(1, 0)), Err(ForestError::NoFeatures));
    let one = numeric(vec![vec![1.0]]);
    assert_eq!(fit_forest(&one, Response::Regression(&[1.0]), &params(1, 0)), Err(ForestError::TooFewRows(1)));
    let (x, y) = noisy_regression(10, 0);
    let bad = ForestParams { mtry: Some(3), ..params(1, 0) };
    assert!(matches!(fit_forest(&x, Response::Regression(&y), &bad), Err(ForestError::Params(_))));
    let f = fit_forest(&x, Response::Regression(&y), &params(2, 0)).unwrap();
    assert_eq!(f.predict(&numeric(vec![vec![0.0]])), Err(ForestError::FeatureMismatch));
    assert!(matches!(
        FeatureMatrix::new(vec![FeatureKind::Numeric], vec![vec![f64::NAN]]),
        Err(ForestError::BadValue { .. })
    ));
}

#[test]
fn resolved_defaults() {
    let (x, y) = noisy_regression(20, 0);
    let f = fit_forest(&x, Response::Regression(&y), &params(1, 0)).unwrap();
    assert_eq!((f.mtry(), f.min_node_size(), f.max_depth()), (1, 5, 0));
    let labels = vec![0u32; 20];
    let g = fit_forest(&x, Response::Classes { labels: &labels, n_classes: 2 }, &params(1, 0)).unwrap();
    assert_eq!(g.min_node_size(), 10);
}

#[test]
fn codec_round_trip_predicts_identically() {
    let n = 120;
    let (x, y) = noisy_regression(n, 15);
    let cat: Vec<f64> = (0..n).map(|i| (i % 4) as f64).collect();
    let mut cols: Vec<Vec<f64>> = (0..2).map(|j| x.column(j).to_vec()).collect();
    cols.push(cat);
    let kinds = vec![FeatureKind::Numeric, FeatureKind::Numeric, FeatureKind::Categorical { n_levels: 4 }];
    let fm = FeatureMatrix::new(kinds, cols).unwrap();
    let labels: Vec<u32> = y.iter().map(|&v| u32::from(v > 0.0)).collect();
    let f = fit_forest(&fm, Response::Classes { labels: &labels, n_classes: 2 }, &params(15, 15)).unwrap();
    let mut buf = Vec::new();
    codec::write_forest(&mut buf, &f).unwrap();
    let back = codec::read_forest(&mut buf.as_slice()).unwrap();
    let mut expected = f.clone();
    expected.discard_oob();
    assert_eq!(back, expected);
    assert_eq!(back.predict(&fm).unwrap(), f.predict(&fm).unwrap());
    assert!(codec::read_forest(&mut &buf[..buf.len() / 2]).is_err());
}
