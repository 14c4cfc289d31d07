use perfpred::featurize::FeatureVector;
use perfpred::gbrt::{fit, fit_with_trace, BoosterParams, Node};
use proptest::prelude::*;

type Row = (Option<f64>, Option<f64>, f64);

fn rows() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(
        (
            prop::option::weighted(0.85, -100.0..100.0f64),
            prop::option::weighted(0.85, -100.0..100.0f64),
            -50.0..50.0f64,
        ),
        1..40,
    )
}

fn split(rows: &[Row]) -> (Vec<FeatureVector>, Vec<f64>) {
    let v = rows
        .iter()
        .map(|(a, b, _)| FeatureVector::from_options([*a, *b]))
        .collect();
    (v, rows.iter().map(|r| r.2).collect())
}

fn names() -> Vec<String> {
    vec!["a".into(), "b".into()]
}

fn small() -> BoosterParams {
    BoosterParams {
        num_trees: 15,
        max_depth: 4,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn training_rmse_never_increases(rows in rows(), eta in 0.05..=1.0f64, lambda in 0.0..4.0f64) {
        let (v, y) = split(&rows);
        let params = BoosterParams { learning_rate: eta, lambda, ..small() };
        let (_, trace) = fit_with_trace(&v, &y, names(), &params).unwrap();
        for w in trace.train_rmse.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn fit_is_deterministic_and_order_free(rows in rows(), seed in any::<u64>()) {
        let (v, y) = split(&rows);
        let a = fit(&v, &y, names(), &small()).unwrap();
        prop_assert_eq!(&fit(&v, &y, names(), &small()).unwrap(), &a);

        let mut shuffled = rows.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed.wrapping_mul(i as u64 + 1) % n as u64) as usize;
            shuffled.swap(i, j);
        }
        let (sv, sy) = split(&shuffled);
        let b = fit(&sv, &sy, names(), &small()).unwrap();
        for x in &v {
            prop_assert_eq!(a.predict(x).unwrap().to_bits(), b.predict(x).unwrap().to_bits());
        }
    }

    #[test]
    fn monotone_feature_transform_keeps_training_predictions(rows in rows()) {
        let (v, y) = split(&rows);
        let warped: Vec<FeatureVector> = rows
            .iter()
            .map(|(a, b, _)| FeatureVector::from_options([a.map(|x| x * 3.0 + 7.0), b.map(|x| x.powi(3))]))
            .collect();
        let m1 = fit(&v, &y, names(), &small()).unwrap();
        let m2 = fit(&warped, &y, names(), &small()).unwrap();
        for (x1, x2) in v.iter().zip(&warped) {
            let (p1, p2) = (m1.predict(x1).unwrap(), m2.predict(x2).unwrap());
            prop_assert!((p1 - p2).abs() <= 1e-9 * (1.0 + p1.abs()), "{p1} vs {p2}");
        }
    }

    #[test]
    fn importance_sums_realized_gains(rows in rows()) {
        let (v, y) = split(&rows);
        let (model, trace) = fit_with_trace(&v, &y, names(), &small()).unwrap();
        let total: f64 = model.feature_importance().values().sum();
        prop_assert!((total - trace.total_gain).abs() <= 1e-9 * (1.0 + total.abs()));
        prop_assert!(model.feature_importance().values().all(|g| *g > 0.0));
    }

    #[test]
    fn all_missing_input_follows_default_directions(rows in rows()) {
        let (v, y) = split(&rows);
        let model = fit(&v, &y, names(), &small()).unwrap();
        let missing = FeatureVector::from_options([None, None]);
        let mut expected = model.base_score;
        for tree in &model.trees {
            let mut idx = 0;
            let weight = loop {
                match &tree.nodes[idx] {
                    Node::Leaf { weight } => break *weight,
                    Node::Split { default, children, .. } => {
                        idx = match default {
                            perfpred::gbrt::Direction::Left => children[0],
                            perfpred::gbrt::Direction::Right => children[1],
                        };
                    }
                }
            };
            expected += model.params.learning_rate * weight;
        }
        let got = model.predict(&missing).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

#[test]
fn overfits_distinct_points() {
    let xs: Vec<FeatureVector> = (0..30)
        .map(|i| FeatureVector::from_options([Some(i as f64)]))
        .collect();
    let ys: Vec<f64> = (0..30).map(|i| ((i * 17) % 23) as f64).collect();
    let params = BoosterParams {
        num_trees: 300,
        learning_rate: 0.3,
        lambda: 0.0,
        ..Default::default()
    };
    let model = fit(&xs, &ys, vec!["x".into()], &params).unwrap();
    let mean = ys.iter().sum::<f64>() / 30.0;
    let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 30.0).sqrt();
    let rmse = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (model.predict(x).unwrap() - y).powi(2))
        .sum::<f64>()
        / 30.0)
        .sqrt();
    assert!(rmse < 1e-2 * std, "rmse {rmse}, std {std}");
}

#[test]
fn single_driver_feature_dominates_importance() {
    let xs: Vec<FeatureVector> = (0..60)
        .map(|i| {
            FeatureVector::from_options([
                Some(((i * 7) % 13) as f64),
                Some(i as f64),
                Some(((i * 5) % 11) as f64),
            ])
        })
        .collect();
    let ys: Vec<f64> = (0..60).map(|i| (i as f64).sqrt() * 10.0).collect();
    let names = vec!["noise1".into(), "driver".into(), "noise2".into()];
    let model = fit(&xs, &ys, names, &BoosterParams::default()).unwrap();
    let imp = model.feature_importance();
    let total: f64 = imp.values().sum();
    assert!(imp["driver"] / total > 0.9, "{imp:?}");
}
