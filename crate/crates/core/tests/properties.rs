use proptest::prelude::*;

use rfimpute::ampute::{AmputationSpec, Mechanism};
use rfimpute::forest::Response;
use rfimpute::imputer::{read_model, write_model, ForestSettings};
use rfimpute::metrics;
use rfimpute::tabular::{dummy_decode, dummy_encode, write_csv_to, RawTable, ReadOptions};
use rfimpute::{fit, fit_forest, Column, ColumnKind, Dataset, FeatureKind, FeatureMatrix, ForestParams, ImputerConfig};

const LEVELS: [&str; 3] = ["high", "low", "mid"];

/// Mixed table: two continuous columns and one categorical, each cell
/// independently missing with `miss_rate`.
fn table(rows: &[(f64, f64, usize, u8)], miss_rate: u8) -> Dataset {
    let miss = |code: u8, bit: u8| (code >> bit) & 1 == 1 && code % 100 < miss_rate;
    let a = Column::continuous("a", rows.iter().map(|r| (!miss(r.3, 0)).then_some(r.0)).collect());
    let b = Column::continuous("b", rows.iter().map(|r| (!miss(r.3, 1)).then_some(r.1)).collect());
    let cells: Vec<Option<&str>> = rows.iter().map(|r| (!miss(r.3, 2)).then_some(LEVELS[r.2])).collect();
    let g = Column::categorical("g", LEVELS.iter().map(|s| s.to_string()).collect(), cells.iter().map(|c| c.map(|l| LEVELS.iter().position(|x| *x == l).unwrap() as u32)).collect()).unwrap();
    Dataset::new(vec![a, b, g]).unwrap()
}

fn rows_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<(f64, f64, usize, u8)>> {
    prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, 0..3usize, any::<u8>()), min..max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn nmse_is_affine_invariant(
        pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..50),
        scale in 0.1..10.0f64,
        shift in -50.0..50.0f64,
    ) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics::mean(&y);
        prop_assume!(y.iter().any(|v| (v - m).abs() > 1e-6));
        let base = metrics::nmse_continuous(&y, &p, m).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
        let ps: Vec<f64> = p.iter().map(|v| v * scale + shift).collect();
        let moved = metrics::nmse_continuous(&ys, &ps, m * scale + shift).unwrap();
        prop_assert!((base - moved).abs() <= 1e-8 * base.max(1.0));
    }

    #[test]
    fn predicting_the_reference_gives_unit_nmse(y in prop::collection::vec(-10.0..10.0f64, 2..50)) {
        let m = metrics::mean(&y);
        prop_assume!(y.iter().any(|v| (v - m).abs() > 1e-6));
        let constant = vec![m; y.len()];
        prop_assert!((metrics::nmse_continuous(&y, &constant, m).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(metrics::nmse_continuous(&y, &y, m).unwrap(), 0.0);
    }

    #[test]
    fn class_proportion_forecast_has_unit_categorical_nmse(labels in prop::collection::vec(0..4u32, 2..60)) {
        let props = metrics::class_proportions(&labels, 4);
        prop_assume!(props.iter().filter(|&&p| p > 0.0).count() >= 2);
        let probs: Vec<f64> = labels.iter().flat_map(|_| props.iter().copied()).collect();
        let nmse = metrics::nmse_categorical(&labels, &probs, 4, &props).unwrap();
        prop_assert!((nmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_flips_with_score_sign(
        items in prop::collection::vec((any::<bool>(), 0..20i32), 2..80),
    ) {
        let (t, s): (Vec<bool>, Vec<f64>) = items.into_iter().map(|(b, v)| (b, f64::from(v))).unzip();
        prop_assume!(t.iter().any(|&b| b) && t.iter().any(|&b| !b));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let sum = metrics::auroc(&t, &s).unwrap() + metrics::auroc(&t, &neg).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_rates_are_bounded(pairs in prop::collection::vec((0..3u32, 0..3u32), 1..60)) {
        let (t, p): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
        for v in [metrics::mer(&t, &p).unwrap(), metrics::f1(&t, &p, 0).unwrap(), metrics::macro_f1(&t, &p).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(metrics::mer(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn dummy_coding_round_trips(rows in rows_strategy(1, 40), miss in 0..60u8) {
        let d = table(&rows, miss);
        let (encoded, codecs) = dummy_encode(&d, &["g"]).unwrap();
        prop_assert_eq!(encoded.n_cols(), 2 + LEVELS.len() - 1);
        prop_assert_eq!(dummy_decode(&encoded, &codecs).unwrap(), d);
    }

    #[test]
    fn csv_round_trips(rows in rows_strategy(1, 40), miss in 0..60u8) {
        let d = table(&rows, miss);
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let schema: Vec<(String, ColumnKind)> = d.columns().iter().map(|c| (c.name().to_string(), c.kind().clone())).collect();
        let back = RawTable::from_reader(buf.as_slice()).unwrap().to_dataset(&ReadOptions::with_schema(schema)).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn mcar_masks_exact_count_and_keeps_other_cells(n in 10..300usize, rate in 0.0..0.9f64, seed in any::<u64>()) {
        let d = Dataset::new(vec![
            Column::from_values("x", (0..n).map(|i| i as f64).collect()),
            Column::from_values("y", (0..n).map(|i| (i * 7 % 13) as f64).collect()),
        ]).unwrap();
        let mut spec = AmputationSpec::new(Mechanism::Mcar, vec!["x".into()], seed);
        spec.rate = rate;
        let (out, report) = rfimpute::ampute(&d, &spec).unwrap();
        let x = out.column_by_name("x").unwrap();
        prop_assert_eq!(x.n_missing(), (rate * n as f64).round() as usize);
        prop_assert_eq!(report.strata[0].masked, x.n_missing());
        prop_assert_eq!(out.column_by_name("y").unwrap(), d.column_by_name("y").unwrap());
        for r in (0..n).filter(|&r| !x.is_missing(r)) {
            prop_assert_eq!(x.get(r), d.column(0).get(r));
        }
    }

    #[test]
    fn regression_forest_predictions_stay_in_response_range(
        data in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -20.0..20.0f64), 5..60),
        seed in any::<u64>(),
    ) {
        let x = FeatureMatrix::new(
            vec![FeatureKind::Numeric; 2],
            vec![data.iter().map(|r| r.0).collect(), data.iter().map(|r| r.1).collect()],
        ).unwrap();
        let y: Vec<f64> = data.iter().map(|r| r.2).collect();
        let f = fit_forest(&x, Response::Regression(&y), &ForestParams { num_trees: 10, seed, ..Default::default() }).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for &v in &f.predict(&x).unwrap().values {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn probability_rows_sum_to_one(
        data in prop::collection::vec((-5.0..5.0f64, 0..3u32), 5..60),
        seed in any::<u64>(),
    ) {
        let x = FeatureMatrix::new(vec![FeatureKind::Numeric], vec![data.iter().map(|r| r.0).collect()]).unwrap();
        let labels: Vec<u32> = data.iter().map(|r| r.1).collect();
        let f = fit_forest(&x, Response::Classes { labels: &labels, n_classes: 3 }, &ForestParams { num_trees: 8, seed, ..Default::default() }).unwrap();
        let pred = f.predict(&x).unwrap();
        for i in 0..pred.n_rows() {
            prop_assert!((pred.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn fit_fills_every_cell_and_keeps_observed_values(rows in rows_strategy(12, 50), miss in 10..50u8, seed in any::<u64>()) {
        let d = table(&rows, miss);
        prop_assume!(d.columns().iter().all(|c| c.len() - c.n_missing() >= 2));
        prop_assume!(d.n_missing() > 0);
        let cfg = ImputerConfig { forest: ForestSettings { num_trees: 5, ..Default::default() }, max_iterations: 3, seed, ..Default::default() };
        let (imputed, model) = fit(&d, &cfg).unwrap();
        prop_assert_eq!(imputed.n_missing(), 0);
        for (orig, out) in d.columns().iter().zip(imputed.columns()) {
            for r in (0..d.n_rows()).filter(|&r| !orig.is_missing(r)) {
                prop_assert_eq!(orig.get(r), out.get(r));
            }
        }
        // retained iteration is never worse than the earlier ones
        let g = &model.trace().global_oob;
        if model.n_iter() > 0 {
            let kept = g[model.n_iter() - 1];
            prop_assert!(kept < 1.0);
            prop_assert!(g[..model.n_iter()].iter().all(|&e| kept <= e));
        }
    }

    #[test]
    fn model_bytes_round_trip_and_reject_any_flipped_byte(rows in rows_strategy(12, 40), seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let d = table(&rows, 30);
        prop_assume!(d.columns().iter().all(|c| c.len() - c.n_missing() >= 2));
        prop_assume!(d.n_missing() > 0);
        let cfg = ImputerConfig { forest: ForestSettings { num_trees: 3, ..Default::default() }, max_iterations: 2, seed, ..Default::default() };
        let (_, model) = fit(&d, &cfg).unwrap();
        let mut bytes = Vec::new();
        write_model(&mut bytes, &model).unwrap();
        let mut again = Vec::new();
        write_model(&mut again, &read_model(bytes.as_slice()).unwrap()).unwrap();
        prop_assert_eq!(&again, &bytes);
        let i = pick.index(bytes.len());
        bytes[i] ^= 0x5A;
        prop_assert!(read_model(bytes.as_slice()).is_err());
    }
}

#[test]
fn forest_is_identical_across_thread_counts() {
    let n = 300;
    let x = FeatureMatrix::new(
        vec![FeatureKind::Numeric, FeatureKind::Categorical { n_levels: 3 }],
        vec![(0..n).map(|i| ((i * 37) % 101) as f64).collect(), (0..n).map(|i| (i % 3) as f64).collect()],
    )
    .unwrap();
    let y: Vec<f64> = (0..n).map(|i| ((i * 13) % 29) as f64 + (i % 3) as f64 * 5.0).collect();
    let params = ForestParams { num_trees: 40, seed: 5, ..Default::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let f = fit_forest(&x, Response::Regression(&y), &params).unwrap();
            (f.predict(&x).unwrap().values, f.oob_predict().unwrap().predictions.values)
        })
    };
    let (one, four) = (run(1), run(4));
    assert!(one.0.iter().zip(&four.0).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(one.1.iter().zip(&four.1).all(|(a, b)| a.to_bits() == b.to_bits()));
}
