mod common;

use common::{langs, record, schema};
use perfpred::evaluation::rmse;
use perfpred::evaluation::{
    kfold_evaluate, langwise_baseline, EvalOptions, GbrtPredictor, Predictor, PredictorKind,
};
use perfpred::extrapolation::{loo_model_mean, new_model_curve, ExtrapolationOptions};
use perfpred::gbrt::BoosterParams;
use perfpred::record_store::{
    load_records, read_records, save_records, ExperimentRecord, LangRole, PartitionUnit,
};
use perfpred::subset_search::{dataset_keys, subset_rmse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fast() -> BoosterParams {
    BoosterParams {
        num_trees: 30,
        ..Default::default()
    }
}

#[test]
fn records_survive_a_save_load_cycle() {
    let s = schema(
        "t",
        &[LangRole::Source, LangRole::Target],
        &["a", "b"],
        true,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<ExperimentRecord> = (0..20)
        .map(|i| {
            let a = if i % 4 == 0 {
                None
            } else {
                Some(rng.gen_range(0.0..1.0) / 3.0)
            };
            record(
                "t",
                if i % 2 == 0 { "x" } else { "y" },
                langs(Some(&format!("l{}", i / 2)), Some("eng"), None),
                &[("a", a), ("b", Some(i as f64 * 0.1))],
                rng.gen_range(0.0..100.0),
            )
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    save_records(&path, &records, &s).unwrap();
    assert_eq!(load_records(&path, &s).unwrap(), records);
}

#[test]
fn multi_model_store_needs_two_models() {
    let s = schema("t", &[LangRole::Source], &[], true);
    let csv = "task,model,src_lang,score\nt,a,eng,1\nt,a,fra,2\n";
    assert!(read_records(csv.as_bytes(), &s).is_err());
}

#[test]
fn langwise_equals_mean_when_one_language_is_shared() {
    let s = schema("t", &[LangRole::Source, LangRole::Target], &[], false);
    let train: Vec<ExperimentRecord> = (0..7)
        .map(|i| {
            record(
                "t",
                "m",
                langs(Some(&format!("l{i}")), Some("eng"), None),
                &[],
                i as f64 * 1.5,
            )
        })
        .collect();
    let lw = langwise_baseline(&train, &s, LangRole::Target).unwrap();
    let mean = train.iter().map(|r| r.score).sum::<f64>() / 7.0;
    for r in &train {
        assert_eq!(lw.predict(&r.setting).unwrap(), mean);
    }
}

#[test]
fn dataset_unit_folds_keep_datasets_together() {
    let s = schema("t", &[LangRole::Source], &["a"], true);
    let records: Vec<ExperimentRecord> = (0..30)
        .map(|i| {
            record(
                "t",
                ["p", "q", "r"][i % 3],
                langs(Some(&format!("l{}", i / 3)), None, None),
                &[("a", Some(i as f64))],
                (i / 3) as f64,
            )
        })
        .collect();
    let opts = EvalOptions {
        runs: 2,
        unit: PartitionUnit::Dataset,
        params: fast(),
        ..Default::default()
    };
    let report = kfold_evaluate(&records, &s, PredictorKind::NlperfMm, &opts).unwrap();
    assert_eq!(report.unit, PartitionUnit::Dataset);
    // every model appears in every held-out dataset, so each fold has three per-model values
    assert!(report.per_model_rmse.iter().flatten().all(|m| m.len() == 3));
}

fn two_model_store(offset: f64) -> Vec<ExperimentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for d in 0..40 {
        let x = rng.gen_range(0.0..10.0);
        let y = 20.0 + 4.0 * x;
        out.push(record(
            "t",
            "base",
            langs(Some(&format!("l{d}")), None, None),
            &[("x", Some(x))],
            y,
        ));
        out.push(record(
            "t",
            "new",
            langs(Some(&format!("l{d}")), None, None),
            &[("x", Some(x))],
            y + offset,
        ));
    }
    out
}

#[test]
fn identical_model_is_predicted_without_revealed_records() {
    let s = schema("t", &[LangRole::Source], &["x"], true);
    let store = two_model_store(0.0);
    let opts = ExtrapolationOptions {
        n_max: 2,
        splits: 3,
        samples: 3,
        seed: 1,
        params: BoosterParams::default(),
    };
    let curve = new_model_curve(&store, &s, "new", &opts).unwrap();
    let spread = 40.0;
    assert!(curve.mean[0] < 0.05 * spread, "RMSE@0 {}", curve.mean[0]);
    assert!(curve.baseline.iter().all(|b| b.rmse == Some(0.0)));
}

#[test]
fn revealed_records_help_a_shifted_model() {
    let s = schema("t", &[LangRole::Source], &["x"], true);
    let store = two_model_store(15.0);
    let opts = ExtrapolationOptions {
        n_max: 5,
        splits: 4,
        samples: 4,
        seed: 2,
        params: BoosterParams::default(),
    };
    let curve = new_model_curve(&store, &s, "new", &opts).unwrap();
    assert!(curve.median[5] <= curve.median[0], "{:?}", curve.median);
    assert_eq!(curve.rmse[0].len(), 16);
    // the baseline depends only on the split
    let first = curve.baseline[0].rmse.unwrap();
    assert!((first - 15.0).abs() < 1e-9);
}

#[test]
fn loo_mean_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records: Vec<ExperimentRecord> = (0..60)
        .map(|i| {
            record(
                "t",
                &format!("m{}", i % 4),
                langs(
                    Some(&format!("l{}", rng.gen_range(0..8))),
                    None,
                    Some(&format!("k{i}")),
                ),
                &[],
                rng.gen_range(0.0..50.0),
            )
        })
        .collect();
    for key in dataset_keys(&records) {
        for left in ["m0", "m1", "m2", "m3"] {
            let scan: Vec<f64> = records
                .iter()
                .filter(|r| r.dataset_key() == key && r.model_id() != left)
                .map(|r| r.score)
                .collect();
            let expected = (!scan.is_empty()).then(|| scan.iter().sum::<f64>() / scan.len() as f64);
            assert_eq!(loo_model_mean(&records, &key, left), expected);
        }
    }
}

#[test]
fn subset_objective_matches_recomputation() {
    // both directions of one language pair are distinct datasets
    let s = schema("t", &[LangRole::Source, LangRole::Target], &["a"], true);
    let pairs = [
        ("eng", "deu"),
        ("deu", "eng"),
        ("eng", "fra"),
        ("fra", "eng"),
        ("spa", "eng"),
    ];
    let mut records = Vec::new();
    for (i, (src, tgt)) in pairs.iter().enumerate() {
        for (m, shift) in [("p", 0.0), ("q", 3.0)] {
            records.push(record(
                "t",
                m,
                langs(Some(src), Some(tgt), None),
                &[("a", Some(i as f64))],
                10.0 * i as f64 + shift,
            ));
        }
    }
    let keys = dataset_keys(&records);
    let subset = vec![keys[0].clone(), keys[1].clone()];
    let got = subset_rmse(&subset, &records, &s, &fast()).unwrap();

    let (train, test): (Vec<ExperimentRecord>, Vec<ExperimentRecord>) = records
        .iter()
        .cloned()
        .partition(|r| subset.contains(&r.dataset_key()));
    let mut train = train;
    train.sort_by_key(|r| r.dataset_key());
    let p = GbrtPredictor::fit(&train, &s, true, &fast()).unwrap();
    let preds: Vec<f64> = test
        .iter()
        .map(|r| p.predict(&r.setting).unwrap())
        .collect();
    let truths: Vec<f64> = test.iter().map(|r| r.score).collect();
    assert!((got - rmse(&preds, &truths).unwrap()).abs() < 1e-12);
}

#[test]
fn linear_scores_are_learned_from_small_subsets() {
    let s = schema("t", &[LangRole::Source], &["a"], false);
    let records: Vec<ExperimentRecord> = (0..12)
        .map(|i| {
            record(
                "t",
                "m",
                langs(Some(&format!("l{i:02}")), None, None),
                &[("a", Some((i % 2) as f64))],
                if i % 2 == 0 { 10.0 } else { 30.0 },
            )
        })
        .collect();
    let keys = dataset_keys(&records);
    let r = subset_rmse(&keys[..2], &records, &s, &BoosterParams::default()).unwrap();
    assert!(r < 0.5, "{r}");
}
