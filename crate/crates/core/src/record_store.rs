//! Experimental records: loading, validation, persistence and k-fold partitioning.
//!
//! A record is one finished experiment: the task, the model (architecture plus
//! training procedure, as a single categorical id), the languages it involves,
//! the dataset features it was trained on, and the score it obtained.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TASK_COLUMN: &str = "task";
pub const MODEL_COLUMN: &str = "model";
pub const DATASET_COLUMN: &str = "dataset";
pub const SCORE_COLUMN: &str = "score";

/// The role a language plays in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LangRole {
    Source,
    Target,
    Transfer,
}

impl LangRole {
    pub const ALL: [LangRole; 3] = [LangRole::Source, LangRole::Target, LangRole::Transfer];

    /// Column name in the records CSV.
    pub fn column(self) -> &'static str {
        match self {
            LangRole::Source => "src_lang",
            LangRole::Target => "tgt_lang",
            LangRole::Transfer => "tsf_lang",
        }
    }

    /// Prefix used in feature names (`src_ttr`, `tsf_word_overlap`, ...).
    pub fn prefix(self) -> &'static str {
        match self {
            LangRole::Source => "src",
            LangRole::Target => "tgt",
            LangRole::Transfer => "tsf",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        LangRole::ALL.into_iter().find(|r| r.prefix() == prefix)
    }
}

impl fmt::Display for LangRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LangRole::Source => "source",
            LangRole::Target => "target",
            LangRole::Transfer => "transfer",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "BLEU")]
    Bleu,
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "F1")]
    F1,
}

impl Metric {
    pub fn admits(self, score: f64) -> bool {
        if !score.is_finite() {
            return false;
        }
        match self {
            Metric::Bleu => score >= 0.0,
            Metric::Accuracy | Metric::F1 => (0.0..=100.0).contains(&score),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Bleu => "BLEU",
            Metric::Accuracy => "accuracy",
            Metric::F1 => "F1",
        })
    }
}

/// Per-task declaration of language roles, metric and ordered feature names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub task_id: String,
    pub metric_name: Metric,
    pub language_roles: Vec<LangRole>,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub multi_model: bool,
}

impl TaskSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: TaskSchema = serde_json::from_reader(file)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::InvalidSchema("task_id is empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if name.is_empty() {
                return Err(Error::InvalidSchema("empty feature name".into()));
            }
            if is_reserved_column(name) {
                return Err(Error::InvalidSchema(format!(
                    "feature name `{name}` collides with a reserved column"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature `{name}`")));
            }
        }
        let roles: HashSet<_> = self.language_roles.iter().collect();
        if roles.len() != self.language_roles.len() {
            return Err(Error::InvalidSchema("duplicate language role".into()));
        }
        Ok(())
    }

    pub fn has_role(&self, role: LangRole) -> bool {
        self.language_roles.contains(&role)
    }
}

fn is_reserved_column(name: &str) -> bool {
    matches!(
        name,
        TASK_COLUMN | MODEL_COLUMN | DATASET_COLUMN | SCORE_COLUMN | "predicted"
    ) || LangRole::ALL.iter().any(|r| r.column() == name)
}

/// ISO-639-3 codes per language role.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Languages {
    pub source: Option<String>,
    pub target: Option<String>,
    pub transfer: Option<String>,
}

impl Languages {
    pub fn get(&self, role: LangRole) -> Option<&str> {
        match role {
            LangRole::Source => self.source.as_deref(),
            LangRole::Target => self.target.as_deref(),
            LangRole::Transfer => self.transfer.as_deref(),
        }
    }

    pub fn set(&mut self, role: LangRole, lang: Option<String>) {
        match role {
            LangRole::Source => self.source = lang,
            LangRole::Target => self.target = lang,
            LangRole::Transfer => self.transfer = lang,
        }
    }
}

/// Identity of a dataset: the present language roles plus an optional explicit name.
///
/// Ordering is lexicographic over (source, target, transfer, name), which is the
/// canonical order used for tie-breaking throughout the crate.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetKey {
    pub langs: Languages,
    pub name: Option<String>,
}

impl fmt::Display for DatasetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            write!(f, "{name}:")?;
        }
        let parts: Vec<&str> = LangRole::ALL
            .iter()
            .filter_map(|r| self.langs.get(*r))
            .collect();
        f.write_str(&parts.join("-"))
    }
}

/// The inputs of an experiment: everything except its score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub task_id: String,
    pub model_id: String,
    pub langs: Languages,
    pub dataset: Option<String>,
    /// Precomputed feature values; `None` is a missing value.
    pub features: BTreeMap<String, Option<f64>>,
}

impl Setting {
    pub fn dataset_key(&self) -> DatasetKey {
        DatasetKey {
            langs: self.langs.clone(),
            name: self.dataset.clone(),
        }
    }

    pub fn feature(&self, name: &str) -> Option<f64> {
        self.features.get(name).copied().flatten()
    }

    fn key_string(&self) -> String {
        format!("{}/{}/{}", self.task_id, self.model_id, self.dataset_key())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub setting: Setting,
    pub score: f64,
}

impl ExperimentRecord {
    pub fn model_id(&self) -> &str {
        &self.setting.model_id
    }

    pub fn lang(&self, role: LangRole) -> Option<&str> {
        self.setting.langs.get(role)
    }

    pub fn dataset_key(&self) -> DatasetKey {
        self.setting.dataset_key()
    }
}

/// A row of a records file whose score may be blank.
pub type TableRow = (Setting, Option<f64>);

/// Loads a records CSV, requiring every row to carry a score.
pub fn load_records(path: impl AsRef<Path>, schema: &TaskSchema) -> Result<Vec<ExperimentRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, schema)
}

pub fn read_records<R: Read>(reader: R, schema: &TaskSchema) -> Result<Vec<ExperimentRecord>> {
    let rows = read_table_inner(reader, schema, false)?;
    let records: Vec<ExperimentRecord> = rows
        .into_iter()
        .map(|(setting, score)| ExperimentRecord {
            setting,
            score: score.expect("scores are required"),
        })
        .collect();
    if schema.multi_model {
        let models: HashSet<&str> = records.iter().map(|r| r.model_id()).collect();
        if models.len() < 2 {
            return Err(Error::InvalidSchema(format!(
                "multi-model task `{}` has {} distinct model(s)",
                schema.task_id,
                models.len()
            )));
        }
    }
    Ok(records)
}

/// Loads a records CSV where scores may be blank (the rows to be filled in).
pub fn load_table(path: impl AsRef<Path>, schema: &TaskSchema) -> Result<Vec<TableRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

pub fn read_table<R: Read>(reader: R, schema: &TaskSchema) -> Result<Vec<TableRow>> {
    read_table_inner(reader, schema, true)
}

fn read_table_inner<R: Read>(
    reader: R,
    schema: &TaskSchema,
    allow_blank_score: bool,
) -> Result<Vec<TableRow>> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();

    for h in headers.iter() {
        if h.ends_with("_lang") && !LangRole::ALL.iter().any(|r| r.column() == h) {
            return Err(Error::UnknownRoleColumn(h.to_string()));
        }
    }
    let required = [TASK_COLUMN, MODEL_COLUMN, SCORE_COLUMN]
        .into_iter()
        .chain(schema.language_roles.iter().map(|r| r.column()));
    for col in required {
        if !index.contains_key(col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }

    let feature_cols: Vec<(usize, &str)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !is_reserved_column(h))
        .collect();

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let cell = |col: &str| -> &str { index.get(col).and_then(|&c| row.get(c)).unwrap_or("") };

        let task_id = cell(TASK_COLUMN).to_string();
        if task_id != schema.task_id {
            return Err(Error::SchemaMismatch {
                record: task_id,
                schema: schema.task_id.clone(),
            });
        }

        let mut langs = Languages::default();
        for role in LangRole::ALL {
            let value = cell(role.column());
            match (schema.has_role(role), value.is_empty()) {
                (true, true) => {
                    return Err(Error::MissingRole {
                        row: line,
                        role: role.to_string(),
                    })
                }
                (false, false) => {
                    return Err(Error::UnexpectedRole {
                        row: line,
                        role: role.to_string(),
                    })
                }
                (true, false) => langs.set(role, Some(value.to_string())),
                (false, true) => {}
            }
        }
        let dataset = Some(cell(DATASET_COLUMN))
            .filter(|s| !s.is_empty())
            .map(str::to_string);

        let mut features = BTreeMap::new();
        for &(c, name) in &feature_cols {
            let raw = row.get(c).unwrap_or("");
            features.insert(name.to_string(), parse_optional(raw, line, name)?);
        }

        let score = parse_optional(cell(SCORE_COLUMN), line, SCORE_COLUMN)?;
        match score {
            None if !allow_blank_score => {
                return Err(Error::NotNumeric {
                    row: line,
                    column: SCORE_COLUMN.into(),
                    value: String::new(),
                })
            }
            Some(s) if !schema.metric_name.admits(s) => {
                return Err(Error::ScoreOutOfRange {
                    row: line,
                    score: s,
                    metric: schema.metric_name.to_string(),
                })
            }
            _ => {}
        }

        let setting = Setting {
            task_id,
            model_id: cell(MODEL_COLUMN).to_string(),
            langs,
            dataset,
            features,
        };
        if !seen.insert(setting.key_string()) {
            return Err(Error::DuplicateRecord(setting.key_string()));
        }
        rows.push((setting, score));
    }
    Ok(rows)
}

fn parse_optional(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::NotNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Feature columns for output: schema order first, then any extra columns sorted.
fn output_feature_columns<'a>(
    schema: &'a TaskSchema,
    settings: impl Iterator<Item = &'a Setting>,
) -> Vec<String> {
    let declared: HashSet<&str> = schema.feature_names.iter().map(String::as_str).collect();
    let extras: BTreeSet<&str> = settings
        .flat_map(|s| s.features.keys().map(String::as_str))
        .filter(|k| !declared.contains(k))
        .collect();
    schema
        .feature_names
        .iter()
        .cloned()
        .chain(extras.into_iter().map(str::to_string))
        .collect()
}

pub fn save_records(
    path: impl AsRef<Path>,
    records: &[ExperimentRecord],
    schema: &TaskSchema,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<(&Setting, Option<f64>)> = records
        .iter()
        .map(|r| (&r.setting, Some(r.score)))
        .collect();
    write_table(file, schema, &rows, None)
}

/// Writes rows in the records CSV layout, optionally followed by a `predicted` flag column.
pub fn write_table<W: Write>(
    writer: W,
    schema: &TaskSchema,
    rows: &[(&Setting, Option<f64>)],
    predicted: Option<&[bool]>,
) -> Result<()> {
    let features = output_feature_columns(schema, rows.iter().map(|(s, _)| *s));
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = vec![TASK_COLUMN, MODEL_COLUMN];
    header.extend(LangRole::ALL.iter().map(|r| r.column()));
    header.push(DATASET_COLUMN);
    header.extend(features.iter().map(String::as_str));
    header.push(SCORE_COLUMN);
    if predicted.is_some() {
        header.push("predicted");
    }
    wtr.write_record(&header)?;

    for (i, (setting, score)) in rows.iter().enumerate() {
        let mut out: Vec<String> = vec![setting.task_id.clone(), setting.model_id.clone()];
        for role in LangRole::ALL {
            out.push(setting.langs.get(role).unwrap_or("").to_string());
        }
        out.push(setting.dataset.clone().unwrap_or_default());
        for name in &features {
            out.push(format_optional(setting.feature(name)));
        }
        out.push(format_optional(*score));
        if let Some(flags) = predicted {
            out.push(flags[i].to_string());
        }
        wtr.write_record(&out)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn format_optional(v: Option<f64>) -> String {
    // `Display` for f64 prints the shortest representation that parses back exactly.
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Order-preserving filter.
pub fn select<F>(records: &[ExperimentRecord], predicate: F) -> Vec<ExperimentRecord>
where
    F: Fn(&ExperimentRecord) -> bool,
{
    records.iter().filter(|r| predicate(r)).cloned().collect()
}

/// Conjunctive filter on model id and language roles; `None` fields match anything.
#[derive(Clone, Debug, Default)]
pub struct RecordFilter {
    pub model_id: Option<String>,
    pub source: Option<String>,
    pub target: Option<String>,
    pub transfer: Option<String>,
}

impl RecordFilter {
    pub fn matches(&self, record: &ExperimentRecord) -> bool {
        let lang_ok = |role, want: &Option<String>| {
            want.as_deref().is_none_or(|w| record.lang(role) == Some(w))
        };
        self.model_id
            .as_deref()
            .is_none_or(|m| record.model_id() == m)
            && lang_ok(LangRole::Source, &self.source)
            && lang_ok(LangRole::Target, &self.target)
            && lang_ok(LangRole::Transfer, &self.transfer)
    }
}

/// What a fold partition shuffles and deals out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionUnit {
    /// Every record is its own unit.
    Record,
    /// All records of one dataset (across models) form one unit.
    Dataset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub unit: PartitionUnit,
    /// Fold index per record, aligned with the input record order.
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded k-fold partition.
///
/// Units are put in canonical key order, shuffled with a seeded Fisher-Yates
/// permutation, then dealt round-robin to folds, so unit counts per fold differ
/// by at most one and the result does not depend on input order.
pub fn partition_kfold(
    records: &[ExperimentRecord],
    unit: PartitionUnit,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    // unit id per record, and the canonically sorted list of unit keys
    let keys: Vec<String> = records
        .iter()
        .map(|r| match unit {
            PartitionUnit::Record => r.setting.key_string(),
            PartitionUnit::Dataset => r.dataset_key().to_string(),
        })
        .collect();
    let mut units: Vec<&str> = keys.iter().map(String::as_str).collect();
    units.sort_unstable();
    units.dedup();
    if k < 2 || k > units.len() {
        return Err(Error::FoldCountOutOfRange {
            k,
            units: units.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let fold_of: HashMap<&str, usize> = units
        .iter()
        .enumerate()
        .map(|(pos, u)| (*u, pos % k))
        .collect();
    let assignment = keys.iter().map(|key| fold_of[key.as_str()]).collect();
    Ok(FoldAssignment {
        k,
        seed,
        unit,
        assignment,
    })
}
