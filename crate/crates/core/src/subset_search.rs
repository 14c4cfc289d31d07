//! Search for the subset of datasets whose trained predictor best (or worst)
//! explains all remaining datasets.

use std::collections::{BTreeMap, BTreeSet};
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchDirection {
    /// Most representative: smallest held-out RMSE.
    Min,
    /// Least representative: largest held-out RMSE.
    Max,
}

impl std::str::FromStr for SearchDirection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min" => Ok(SearchDirection::Min),
            "max" => Ok(SearchDirection::Max),
            other => Err(format!("unknown direction `{other}` (expected min or max)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSubset {
    pub datasets: Vec<DatasetKey>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetLevel {
    pub size: usize,
    /// Kept subsets, best first.
    pub ranked: Vec<ScoredSubset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSearchResult {
    pub direction: SearchDirection,
    pub beam_width: usize,
    pub max_size: usize,
    pub levels: Vec<SubsetLevel>,
}

impl SubsetSearchResult {
    /// Best subset of each size.
    pub fn best(&self) -> Vec<&ScoredSubset> {
        self.levels
            .iter()
            .filter_map(|l| l.ranked.first())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOptions {
    pub max_size: usize,
    pub beam_width: usize,
    pub direction: SearchDirection,
    pub params: BoosterParams,
}

impl Default for BeamOptions {
    fn default() -> Self {
        BeamOptions {
            max_size: 5,
            beam_width: 100,
            direction: SearchDirection::Min,
            params: BoosterParams::default(),
        }
    }
}

/// Records grouped by dataset, with datasets in sorted key order.
struct Pool<'a> {
    records: &'a [ExperimentRecord],
    schema: &'a TaskSchema,
    keys: Vec<DatasetKey>,
    members: Vec<Vec<usize>>,
}

impl<'a> Pool<'a> {
    fn new(records: &'a [ExperimentRecord], schema: &'a TaskSchema) -> Self {
        let mut groups: BTreeMap<DatasetKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            groups.entry(r.dataset_key()).or_default().push(i);
        }
        let (keys, members) = groups.into_iter().unzip();
        Pool {
            records,
            schema,
            keys,
            members,
        }
    }

    fn indices_of(&self, subset: &[DatasetKey]) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = subset
            .iter()
            .map(|k| {
                self.keys
                    .binary_search(k)
                    .map_err(|_| Error::InvalidSubset(format!("unknown dataset {k}")))
            })
            .collect::<Result<_>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Trains on the subset's records and returns the pooled RMSE on every other record.
    fn score(&self, subset: &[usize], params: &BoosterParams) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::InvalidSubset("empty training subset".into()));
        }
        if subset.len() >= self.keys.len() {
            return Err(Error::InvalidSubset(
                "the complement of the subset is empty".into(),
            ));
        }
        let chosen: BTreeSet<usize> = subset.iter().copied().collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (d, members) in self.members.iter().enumerate() {
            let side = if chosen.contains(&d) {
                &mut train
            } else {
                &mut test
            };
            side.extend(members.iter().map(|&i| &self.records[i]));
        }
        let train: Vec<ExperimentRecord> = train.into_iter().cloned().collect();
        let predictor = GbrtPredictor::fit(&train, self.schema, self.schema.multi_model, params)?;
        let predictions = test
            .iter()
            .map(|r| predictor.predict(&r.setting))
            .collect::<Result<Vec<_>>>()?;
        let truths: Vec<f64> = test.iter().map(|r| r.score).collect();
        rmse(&predictions, &truths)
    }

    fn keys_of(&self, subset: &[usize]) -> Vec<DatasetKey> {
        subset.iter().map(|&i| self.keys[i].clone()).collect()
    }
}

/// Sorted distinct dataset keys of a store.
pub fn dataset_keys(records: &[ExperimentRecord]) -> Vec<DatasetKey> {
    let set: BTreeSet<DatasetKey> = records.iter().map(|r| r.dataset_key()).collect();
    set.into_iter().collect()
}

/// Held-out RMSE of a predictor trained on the records of `subset`.
pub fn subset_rmse(
    subset: &[DatasetKey],
    records: &[ExperimentRecord],
    schema: &TaskSchema,
    params: &BoosterParams,
) -> Result<f64> {
    let pool = Pool::new(records, schema);
    let idx = pool.indices_of(subset)?;
    pool.score(&idx, params)
}

fn rank(scored: &mut [(Vec<usize>, f64)], direction: SearchDirection) {
    scored.sort_by(|a, b| {
        let by_score = match direction {
            SearchDirection::Min => a.1.total_cmp(&b.1),
            SearchDirection::Max => b.1.total_cmp(&a.1),
        };
        by_score.then_with(|| a.0.cmp(&b.0))
    });
}

pub fn beam_search(
    records: &[ExperimentRecord],
    schema: &TaskSchema,
    opts: &BeamOptions,
) -> Result<SubsetSearchResult> {
    let pool = Pool::new(records, schema);
    let n = pool.keys.len();
    if opts.max_size < 2 || opts.max_size >= n {
        return Err(Error::InvalidSubset(format!(
            "max size {} must be at least 2 and below the {n} datasets",
            opts.max_size
        )));
    }
    if opts.beam_width == 0 {
        return Err(Error::InvalidSubset("beam width must be positive".into()));
    }

    let mut candidates: Vec<Vec<usize>> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| vec![a, b]))
        .collect();
    let mut levels = Vec::new();
    for size in 2..=opts.max_size {
        let mut scored = candidates
            .par_iter()
            .map(|c| Ok((c.clone(), pool.score(c, &opts.params)?)))
            .collect::<Result<Vec<_>>>()?;
        rank(&mut scored, opts.direction);
        scored.truncate(opts.beam_width);

        let mut next = BTreeSet::new();
        if size < opts.max_size {
            for (subset, _) in &scored {
                for d in (0..n).filter(|d| !subset.contains(d)) {
                    let mut grown = subset.clone();
                    grown.push(d);
                    grown.sort_unstable();
                    next.insert(grown);
                }
            }
        }
        levels.push(SubsetLevel {
            size,
            ranked: scored
                .into_iter()
                .map(|(s, objective)| ScoredSubset {
                    datasets: pool.keys_of(&s),
                    objective,
                })
                .collect(),
        });
        candidates = next.into_iter().collect();
    }
    Ok(SubsetSearchResult {
        direction: opts.direction,
        beam_width: opts.beam_width,
        max_size: opts.max_size,
        levels,
    })
}

/// Mean objective per subset size over random growth paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchResult {
    pub runs: usize,
    pub seed: u64,
    /// `(size, mean objective)` for sizes 2..=max_size.
    pub mean_objective: Vec<(usize, f64)>,
}

/// Starts from a uniformly random pair and adds a uniformly random absent dataset per step.
pub fn random_search(
    records: &[ExperimentRecord],
    schema: &TaskSchema,
    max_size: usize,
    runs: usize,
    seed: u64,
    params: &BoosterParams,
) -> Result<RandomSearchResult> {
    let pool = Pool::new(records, schema);
    let n = pool.keys.len();
    if max_size < 2 || max_size >= n {
        return Err(Error::InvalidSubset(format!(
            "max size {max_size} must be at least 2 and below the {n} datasets"
        )));
    }
    if runs == 0 {
        return Err(Error::InvalidSubset("zero random runs".into()));
    }
    let paths = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, run as u64, 0));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            (2..=max_size)
                .map(|size| {
                    let mut subset = order[..size].to_vec();
                    subset.sort_unstable();
                    pool.score(&subset, params)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_objective = (2..=max_size)
        .enumerate()
        .map(|(j, size)| (size, paths.iter().map(|p| p[j]).sum::<f64>() / runs as f64))
        .collect();
    Ok(RandomSearchResult {
        runs,
        seed,
        mean_objective,
    })
}

/// Writes `size,rank,datasets,objective`; datasets are `;`-separated, ranks start at 1.
pub fn write_subsets_csv<W: Write>(writer: W, result: &SubsetSearchResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["size", "rank", "datasets", "objective"])?;
    for level in &result.levels {
        for (rank, s) in level.ranked.iter().enumerate() {
            let names: Vec<String> = s.datasets.iter().map(|k| k.to_string()).collect();
            wtr.write_record([
                level.size.to_string(),
                (rank + 1).to_string(),
                names.join(";"),
                s.objective.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
