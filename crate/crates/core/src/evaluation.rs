//! K-fold evaluation of the booster against simple baselines, and single-feature sweeps.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{FeatureEncoder, FeatureVector};
use crate::gbrt::{fit, BoostedModel, BoosterParams};
use crate::record_store::{
    partition_kfold, DatasetKey, ExperimentRecord, LangRole, PartitionUnit, Setting, TaskSchema,
};

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput("rmse of zero pairs".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / truths.len() as f64).sqrt())
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Anything that maps a setting to a predicted score.
pub trait Predictor: Send + Sync {
    fn predict(&self, setting: &Setting) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanBaseline {
    pub mean: f64,
}

impl Predictor for MeanBaseline {
    fn predict(&self, _: &Setting) -> Result<f64> {
        Ok(self.mean)
    }
}

/// Mean of the training scores, summed in training order.
pub fn mean_baseline(train: &[ExperimentRecord]) -> Result<MeanBaseline> {
    mean(train.iter().map(|r| r.score))
        .map(|mean| MeanBaseline { mean })
        .ok_or(Error::EmptyTrainingSet)
}

/// Mean training score of records that share the test record's language in one role.
#[derive(Clone, Debug, PartialEq)]
pub struct LangwiseBaseline {
    pub role: LangRole,
    pub fallback: f64,
    pub group_means: HashMap<String, f64>,
}

impl Predictor for LangwiseBaseline {
    fn predict(&self, setting: &Setting) -> Result<f64> {
        Ok(setting
            .langs
            .get(self.role)
            .and_then(|l| self.group_means.get(l))
            .copied()
            .unwrap_or(self.fallback))
    }
}

pub fn langwise_baseline(
    train: &[ExperimentRecord],
    schema: &TaskSchema,
    role: LangRole,
) -> Result<LangwiseBaseline> {
    if !schema.has_role(role) {
        return Err(Error::InvalidKind {
            kind: format!("lang_{}", role.prefix()),
            task: schema.task_id.clone(),
            reason: format!("the task has no {} language", role.column()),
        });
    }
    let fallback = mean_baseline(train)?.mean;
    let mut sums: HashMap<String, (f64, usize)> = HashMap::new();
    for r in train {
        if let Some(lang) = r.lang(role) {
            let e = sums.entry(lang.to_string()).or_insert((0.0, 0));
            e.0 += r.score;
            e.1 += 1;
        }
    }
    Ok(LangwiseBaseline {
        role,
        fallback,
        group_means: sums
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
    })
}

/// Mean training score of the other models on the test record's dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelwiseBaseline {
    pub fallback: f64,
    by_dataset: HashMap<DatasetKey, Vec<(String, f64)>>,
}

impl Predictor for ModelwiseBaseline {
    fn predict(&self, setting: &Setting) -> Result<f64> {
        let others = self
            .by_dataset
            .get(&setting.dataset_key())
            .and_then(|rows| {
                mean(
                    rows.iter()
                        .filter(|(m, _)| *m != setting.model_id)
                        .map(|(_, s)| *s),
                )
            });
        Ok(others.unwrap_or(self.fallback))
    }
}

pub fn modelwise_baseline(
    train: &[ExperimentRecord],
    schema: &TaskSchema,
) -> Result<ModelwiseBaseline> {
    if !schema.multi_model {
        return Err(Error::InvalidKind {
            kind: PredictorKind::ModelWise.to_string(),
            task: schema.task_id.clone(),
            reason: "the task has a single model".into(),
        });
    }
    let fallback = mean_baseline(train)?.mean;
    let mut by_dataset: HashMap<DatasetKey, Vec<(String, f64)>> = HashMap::new();
    for r in train {
        by_dataset
            .entry(r.dataset_key())
            .or_default()
            .push((r.model_id().to_string(), r.score));
    }
    Ok(ModelwiseBaseline {
        fallback,
        by_dataset,
    })
}

/// A booster together with the encoder that produced its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbrtPredictor {
    pub encoder: FeatureEncoder,
    pub model: BoostedModel,
}

impl GbrtPredictor {
    /// Fits on `train`; with `model_block` the model id becomes a one-hot input.
    pub fn fit(
        train: &[ExperimentRecord],
        schema: &TaskSchema,
        model_block: bool,
        params: &BoosterParams,
    ) -> Result<Self> {
        let encoder = if model_block {
            FeatureEncoder::multi_model(schema, train.iter().map(|r| r.model_id()))
        } else {
            FeatureEncoder::single_model(schema)
        };
        let vectors: Vec<FeatureVector> =
            train.iter().map(|r| encoder.encode(&r.setting)).collect();
        let targets: Vec<f64> = train.iter().map(|r| r.score).collect();
        let model = fit(&vectors, &targets, encoder.names(), params)?;
        Ok(GbrtPredictor { encoder, model })
    }
}

impl Predictor for GbrtPredictor {
    fn predict(&self, setting: &Setting) -> Result<f64> {
        self.model.predict(&self.encoder.encode(setting))
    }
}

/// One booster per model; models without training records fall back to the global mean.
#[derive(Clone, Debug, PartialEq)]
pub struct PerModelPredictor {
    pub per_model: BTreeMap<String, GbrtPredictor>,
    pub fallback: MeanBaseline,
}

impl PerModelPredictor {
    pub fn fit(
        train: &[ExperimentRecord],
        schema: &TaskSchema,
        params: &BoosterParams,
    ) -> Result<Self> {
        let fallback = mean_baseline(train)?;
        let mut groups: BTreeMap<&str, Vec<ExperimentRecord>> = BTreeMap::new();
        for r in train {
            groups.entry(r.model_id()).or_default().push(r.clone());
        }
        let per_model = groups
            .into_iter()
            .map(|(m, rs)| {
                Ok((
                    m.to_string(),
                    GbrtPredictor::fit(&rs, schema, false, params)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(PerModelPredictor {
            per_model,
            fallback,
        })
    }
}

impl Predictor for PerModelPredictor {
    fn predict(&self, setting: &Setting) -> Result<f64> {
        match self.per_model.get(&setting.model_id) {
            Some(p) => p.predict(setting),
            None => self.fallback.predict(setting),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    NlperfSm,
    NlperfMm,
    Mean,
    LangSrc,
    LangTgt,
    LangTsf,
    ModelWise,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 7] = [
        PredictorKind::NlperfSm,
        PredictorKind::NlperfMm,
        PredictorKind::Mean,
        PredictorKind::LangSrc,
        PredictorKind::LangTgt,
        PredictorKind::LangTsf,
        PredictorKind::ModelWise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::NlperfSm => "nlperf_sm",
            PredictorKind::NlperfMm => "nlperf_mm",
            PredictorKind::Mean => "mean",
            PredictorKind::LangSrc => "lang_src",
            PredictorKind::LangTgt => "lang_tgt",
            PredictorKind::LangTsf => "lang_tsf",
            PredictorKind::ModelWise => "model_wise",
        }
    }

    fn lang_role(self) -> Option<LangRole> {
        match self {
            PredictorKind::LangSrc => Some(LangRole::Source),
            PredictorKind::LangTgt => Some(LangRole::Target),
            PredictorKind::LangTsf => Some(LangRole::Transfer),
            _ => None,
        }
    }

    /// Refuses combinations that make no sense for the task.
    pub fn check(self, schema: &TaskSchema) -> Result<()> {
        let refuse = |reason: &str| {
            Err(Error::InvalidKind {
                kind: self.to_string(),
                task: schema.task_id.clone(),
                reason: reason.to_string(),
            })
        };
        match self {
            PredictorKind::NlperfMm | PredictorKind::ModelWise if !schema.multi_model => {
                refuse("the task has a single model")
            }
            _ => match self.lang_role() {
                Some(role) if !schema.has_role(role) => {
                    refuse(&format!("the task has no {} language", role.column()))
                }
                _ => Ok(()),
            },
        }
    }

    /// Builds the predictor from training records only.
    pub fn build(
        self,
        train: &[ExperimentRecord],
        schema: &TaskSchema,
        params: &BoosterParams,
    ) -> Result<Box<dyn Predictor>> {
        self.check(schema)?;
        Ok(match self {
            PredictorKind::NlperfSm if schema.multi_model => {
                Box::new(PerModelPredictor::fit(train, schema, params)?)
            }
            PredictorKind::NlperfSm => Box::new(GbrtPredictor::fit(train, schema, false, params)?),
            PredictorKind::NlperfMm => Box::new(GbrtPredictor::fit(train, schema, true, params)?),
            PredictorKind::Mean => Box::new(mean_baseline(train)?),
            PredictorKind::ModelWise => Box::new(modelwise_baseline(train, schema)?),
            lang => Box::new(langwise_baseline(train, schema, lang.lang_role().unwrap())?),
        })
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PredictorKind::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown predictor kind `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub unit: PartitionUnit,
    pub params: BoosterParams,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 5,
            runs: 10,
            seed: 0,
            unit: PartitionUnit::Record,
            params: BoosterParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub predictor_kind: PredictorKind,
    pub k: usize,
    pub num_runs: usize,
    pub seed: u64,
    pub unit: PartitionUnit,
    /// `fold_rmse[run][fold]`.
    pub fold_rmse: Vec<Vec<f64>>,
    /// Per-model RMSE behind each fold value; empty for single-model tasks.
    pub per_model_rmse: Vec<Vec<BTreeMap<String, f64>>>,
    pub run_rmse: Vec<f64>,
    pub final_rmse: f64,
}

impl EvalReport {
    /// Mean over runs of the mean over folds, recomputed from the stored fold values.
    pub fn aggregate(fold_rmse: &[Vec<f64>]) -> (Vec<f64>, f64) {
        let runs: Vec<f64> = fold_rmse
            .iter()
            .map(|folds| folds.iter().sum::<f64>() / folds.len() as f64)
            .collect();
        let overall = runs.iter().sum::<f64>() / runs.len() as f64;
        (runs, overall)
    }
}

/// RMSE of one held-out fold; on multi-model tasks the mean of per-model RMSEs.
fn fold_score(
    test: &[&ExperimentRecord],
    predictions: &[f64],
    multi_model: bool,
) -> Result<(f64, BTreeMap<String, f64>)> {
    if !multi_model {
        let truths: Vec<f64> = test.iter().map(|r| r.score).collect();
        return Ok((rmse(predictions, &truths)?, BTreeMap::new()));
    }
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, p) in test.iter().zip(predictions) {
        let g = groups.entry(r.model_id()).or_default();
        g.0.push(*p);
        g.1.push(r.score);
    }
    let per_model = groups
        .into_iter()
        .map(|(m, (p, t))| Ok((m.to_string(), rmse(&p, &t)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let value = per_model.values().sum::<f64>() / per_model.len() as f64;
    Ok((value, per_model))
}

pub fn kfold_evaluate(
    records: &[ExperimentRecord],
    schema: &TaskSchema,
    kind: PredictorKind,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    kind.check(schema)?;
    if records.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if opts.runs == 0 {
        return Err(Error::EmptyInput("zero evaluation runs".into()));
    }
    let partitions = (0..opts.runs)
        .map(|run| partition_kfold(records, opts.unit, opts.k, opts.seed ^ run as u64))
        .collect::<Result<Vec<_>>>()?;

    let units: Vec<(usize, usize)> = (0..opts.runs)
        .flat_map(|run| (0..opts.k).map(move |fold| (run, fold)))
        .collect();
    let scored = units
        .par_iter()
        .map(|&(run, fold)| {
            let part = &partitions[run];
            let train: Vec<ExperimentRecord> = part
                .train_indices(fold)
                .into_iter()
                .map(|i| records[i].clone())
                .collect();
            let test: Vec<&ExperimentRecord> = part
                .fold_indices(fold)
                .into_iter()
                .map(|i| &records[i])
                .collect();
            let predictor = kind.build(&train, schema, &opts.params)?;
            let predictions = test
                .iter()
                .map(|r| predictor.predict(&r.setting))
                .collect::<Result<Vec<_>>>()?;
            fold_score(&test, &predictions, schema.multi_model)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut fold_rmse = vec![Vec::with_capacity(opts.k); opts.runs];
    let mut per_model_rmse = vec![Vec::with_capacity(opts.k); opts.runs];
    for (&(run, _), (value, per_model)) in units.iter().zip(scored) {
        fold_rmse[run].push(value);
        per_model_rmse[run].push(per_model);
    }
    let (run_rmse, final_rmse) = EvalReport::aggregate(&fold_rmse);
    Ok(EvalReport {
        task_id: schema.task_id.clone(),
        predictor_kind: kind,
        k: opts.k,
        num_runs: opts.runs,
        seed: opts.seed,
        unit: opts.unit,
        fold_rmse,
        per_model_rmse,
        run_rmse,
        final_rmse,
    })
}

/// One grid row: feature name and the value it takes (`None` masks the feature).
pub type Override = Vec<(String, Option<f64>)>;

/// Predicts `base` with each row of overrides applied in turn.
pub fn sweep_feature(
    model: &BoostedModel,
    base: &FeatureVector,
    overrides: &[Override],
) -> Result<Vec<(Override, f64)>> {
    let index: HashMap<&str, usize> = model
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    overrides
        .iter()
        .map(|row| {
            let mut v = base.clone();
            for (name, value) in row {
                let &i = index
                    .get(name.as_str())
                    .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                v.set(i, *value);
            }
            Ok((row.clone(), model.predict(&v)?))
        })
        .collect()
}

/// Reads a grid CSV whose header names features; blank cells mask the feature.
pub fn read_grid<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Override>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = columns
            .iter()
            .zip(rec.iter())
            .map(|(c, raw)| {
                if raw.is_empty() {
                    return Ok((c.clone(), None));
                }
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(|v| (c.clone(), Some(v)))
                    .ok_or_else(|| Error::NotNumeric {
                        row: i + 2,
                        column: c.clone(),
                        value: raw.to_string(),
                    })
            })
            .collect::<Result<Override>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

/// Writes `override...,prediction`.
pub fn write_sweep_csv<W: Write>(
    writer: W,
    columns: &[String],
    results: &[(Override, f64)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = columns.iter().map(String::as_str).collect();
    header.push("prediction");
    wtr.write_record(&header)?;
    for (row, prediction) in results {
        let mut out: Vec<String> = columns
            .iter()
            .map(|c| {
                row.iter()
                    .find(|(n, _)| n == c)
                    .and_then(|(_, v)| *v)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            })
            .collect();
        out.push(prediction.to_string());
        wtr.write_record(&out)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
