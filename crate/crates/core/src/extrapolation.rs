//! How well can scores of an unseen model be predicted from other models' records
//! plus a handful of its own?

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{rmse, GbrtPredictor, Predictor};
use crate::gbrt::BoosterParams;
use crate::mix_seed;
use crate::record_store::{DatasetKey, ExperimentRecord, TaskSchema};

/// Mean score of every model other than `left_out` on `dataset`; `None` if there is none.
pub fn loo_model_mean(
    records: &[ExperimentRecord],
    dataset: &DatasetKey,
    left_out: &str,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        if r.model_id() != left_out && r.dataset_key() == *dataset {
            sum += r.score;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationOptions {
    pub n_max: usize,
    pub splits: usize,
    pub samples: usize,
    pub seed: u64,
    pub params: BoosterParams,
}

impl Default for ExtrapolationOptions {
    fn default() -> Self {
        ExtrapolationOptions {
            n_max: 5,
            splits: 50,
            samples: 50,
            seed: 0,
            params: BoosterParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitBaseline {
    /// RMSE of the other-model mean on the test half, if any test record has one.
    pub rmse: Option<f64>,
    /// Test records without any other-model record on their dataset.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationCurve {
    pub target_model: String,
    pub n_max: usize,
    pub splits: usize,
    pub samples: usize,
    pub seed: u64,
    /// `rmse[n][split * samples + sample]`.
    pub rmse: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub baseline: Vec<SplitBaseline>,
    /// Mean over splits of the available baseline RMSEs.
    pub baseline_mean: Option<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn test_rmse(predictor: &impl Predictor, test: &[&ExperimentRecord]) -> Result<f64> {
    let predictions = test
        .iter()
        .map(|r| predictor.predict(&r.setting))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = test.iter().map(|r| r.score).collect();
    rmse(&predictions, &truths)
}

/// Splits the target model's records into a sample half and a test half (which
/// gets the odd record out), reveals the first `n` of a random permutation of the
/// sample half, and scores a multi-model booster on the test half for every `n`.
pub fn new_model_curve(
    records: &[ExperimentRecord],
    schema: &TaskSchema,
    target_model: &str,
    opts: &ExtrapolationOptions,
) -> Result<ExtrapolationCurve> {
    if !schema.multi_model {
        return Err(Error::Extrapolation(format!(
            "task `{}` has a single model",
            schema.task_id
        )));
    }
    if opts.splits == 0 || opts.samples == 0 {
        return Err(Error::Extrapolation(
            "splits and samples must be positive".into(),
        ));
    }
    let mut target: Vec<&ExperimentRecord> = records
        .iter()
        .filter(|r| r.model_id() == target_model)
        .collect();
    if target.is_empty() {
        return Err(Error::Extrapolation(format!(
            "model `{target_model}` has no records"
        )));
    }
    target.sort_by_key(|r| r.dataset_key());
    let half = target.len() / 2;
    if half < opts.n_max.max(1) {
        return Err(Error::Extrapolation(format!(
            "{} records of `{target_model}` are too few to reveal {} of them",
            target.len(),
            opts.n_max
        )));
    }
    let others: Vec<ExperimentRecord> = records
        .iter()
        .filter(|r| r.model_id() != target_model)
        .cloned()
        .collect();
    if others.is_empty() {
        return Err(Error::Extrapolation("no records of other models".into()));
    }

    // other-model mean per dataset of the target model
    let loo: BTreeMap<DatasetKey, Option<f64>> = target
        .iter()
        .map(|r| {
            let key = r.dataset_key();
            let m = loo_model_mean(&others, &key, target_model);
            (key, m)
        })
        .collect();

    let splits: Vec<(Vec<&ExperimentRecord>, Vec<&ExperimentRecord>)> = (0..opts.splits)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, s as u64, 0));
            let mut shuffled = target.clone();
            shuffled.shuffle(&mut rng);
            let test = shuffled.split_off(half);
            (shuffled, test)
        })
        .collect();

    let baseline: Vec<SplitBaseline> = splits
        .iter()
        .map(|(_, test)| {
            let mut preds = Vec::new();
            let mut truths = Vec::new();
            for r in test {
                if let Some(m) = loo[&r.dataset_key()] {
                    preds.push(m);
                    truths.push(r.score);
                }
            }
            Ok(SplitBaseline {
                rmse: (!preds.is_empty())
                    .then(|| rmse(&preds, &truths))
                    .transpose()?,
                excluded: test.len() - preds.len(),
            })
        })
        .collect::<Result<_>>()?;

    let zero = GbrtPredictor::fit(&others, schema, true, &opts.params)?;
    let zero_rmse = splits
        .iter()
        .map(|(_, test)| test_rmse(&zero, test))
        .collect::<Result<Vec<f64>>>()?;

    let reps: Vec<(usize, usize)> = (0..opts.splits)
        .flat_map(|s| (0..opts.samples).map(move |j| (s, j)))
        .collect();
    let revealed = reps
        .par_iter()
        .map(|&(s, j)| {
            let (sample_half, test) = &splits[s];
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, s as u64, j as u64 + 1));
            let mut drawn = sample_half.clone();
            drawn.shuffle(&mut rng);
            (1..=opts.n_max)
                .map(|n| {
                    let mut train = others.clone();
                    train.extend(drawn[..n].iter().map(|r| (*r).clone()));
                    let p = GbrtPredictor::fit(&train, schema, true, &opts.params)?;
                    test_rmse(&p, test)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = vec![Vec::with_capacity(reps.len()); opts.n_max + 1];
    for (&(s, _), row) in reps.iter().zip(&revealed) {
        table[0].push(zero_rmse[s]);
        for (n, v) in row.iter().enumerate() {
            table[n + 1].push(*v);
        }
    }
    let available: Vec<f64> = baseline.iter().filter_map(|b| b.rmse).collect();
    Ok(ExtrapolationCurve {
        target_model: target_model.to_string(),
        n_max: opts.n_max,
        splits: opts.splits,
        samples: opts.samples,
        seed: opts.seed,
        mean: table
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect(),
        median: table.iter().map(|v| median(v)).collect(),
        rmse: table,
        baseline_mean: (!available.is_empty())
            .then(|| available.iter().sum::<f64>() / available.len() as f64),
        baseline,
    })
}

/// Writes `n,repetition,rmse,baseline`; the baseline is blank when unavailable.
pub fn write_curve_csv<W: Write>(writer: W, curve: &ExtrapolationCurve) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["n", "repetition", "rmse", "baseline"])?;
    for (n, row) in curve.rmse.iter().enumerate() {
        for (rep, v) in row.iter().enumerate() {
            let split = rep / curve.samples;
            let base = curve.baseline[split]
                .rmse
                .map(|b| b.to_string())
                .unwrap_or_default();
            wtr.write_record([n.to_string(), rep.to_string(), v.to_string(), base])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
