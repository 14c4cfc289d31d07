//! Schema-aligned feature vectors.
//!
//! Feature names follow `<role>_<feature>` (`src_ttr`, `tgt_word_vocab`,
//! `tsf_word_overlap`), with `dist_<kind>` for source-target language distances
//! and `tsf_dist_<kind>` for distances to the transfer language. A name is
//! resolved to a value either from a precomputed column of the record or by
//! computing it from the supplied corpus statistics and language tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus_features::{
    arc_feature_names, ttr_distance, vocab_overlap, ArcProportions, CorpusStats, TagStats,
};
use crate::error::{Error, Result};
use crate::lang_features::{DistanceKind, DistanceTable, SyntaxTable};
use crate::record_store::{LangRole, Setting, TaskSchema};

/// Prefix of the one-hot model indicator columns.
pub const MODEL_FEATURE_PREFIX: &str = "model=";

/// Numeric values with a missing-value mask. Masked slots hold `0.0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl FeatureVector {
    pub fn from_options<I: IntoIterator<Item = Option<f64>>>(items: I) -> Self {
        let mut v = FeatureVector::default();
        for item in items {
            v.push(item);
        }
        v
    }

    pub fn push(&mut self, value: Option<f64>) {
        self.values.push(value.unwrap_or(0.0));
        self.missing.push(value.is_none());
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn set(&mut self, i: usize, value: Option<f64>) {
        self.values[i] = value.unwrap_or(0.0);
        self.missing[i] = value.is_none();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

/// One-hot indicator block for a model id; unknown ids yield all zeros.
pub fn encode_model(model_id: &str, known_models: &[String]) -> Vec<f64> {
    known_models
        .iter()
        .map(|m| if m == model_id { 1.0 } else { 0.0 })
        .collect()
}

/// Everything `assemble` may compute features from. Absent inputs become masked values.
#[derive(Clone, Debug, Default)]
pub struct FeatureInputs<'a> {
    pub corpora: BTreeMap<LangRole, &'a CorpusStats>,
    pub tags: BTreeMap<LangRole, &'a TagStats>,
    pub arcs: BTreeMap<LangRole, &'a ArcProportions>,
    pub distances: Option<&'a DistanceTable>,
    pub syntax: Option<&'a SyntaxTable>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SideStat {
    DatasetSize,
    WordVocab,
    SubwordVocab,
    AvgSentLen,
    Ttr,
    SingleTagTypes,
    FusedTagTypes,
    AvgTagsPerWord,
    Arc(usize),
    Syntax(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PairStat {
    WordOverlap,
    SubwordOverlap,
    TtrDistance,
}

/// A feature name resolved to the computation that produces it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FeatureSpec {
    /// Dataset size of the anchor side (parallel corpora share one size).
    SharedDatasetSize,
    Side(LangRole, SideStat),
    /// `None` pairs source with target; `Some(Transfer)` pairs the anchor with the transfer side.
    Pair(Option<LangRole>, PairStat),
    Distance(Option<LangRole>, DistanceKind),
}

impl FeatureSpec {
    fn parse(name: &str) -> Option<Self> {
        if name == "dataset_size" {
            return Some(FeatureSpec::SharedDatasetSize);
        }
        if let Some(kind) = name.strip_prefix("dist_").and_then(DistanceKind::from_name) {
            return Some(FeatureSpec::Distance(None, kind));
        }
        if let Some(stat) = parse_pair_stat(name) {
            return Some(FeatureSpec::Pair(None, stat));
        }
        let (prefix, rest) = name.split_once('_')?;
        let role = LangRole::from_prefix(prefix)?;
        if role == LangRole::Transfer {
            if let Some(kind) = rest.strip_prefix("dist_").and_then(DistanceKind::from_name) {
                return Some(FeatureSpec::Distance(Some(role), kind));
            }
            if let Some(stat) = parse_pair_stat(rest) {
                return Some(FeatureSpec::Pair(Some(role), stat));
            }
        }
        let stat = match rest {
            "dataset_size" => SideStat::DatasetSize,
            "word_vocab" => SideStat::WordVocab,
            "subword_vocab" => SideStat::SubwordVocab,
            "avg_sent_len" => SideStat::AvgSentLen,
            "ttr" => SideStat::Ttr,
            "single_tag_types" => SideStat::SingleTagTypes,
            "fused_tag_types" => SideStat::FusedTagTypes,
            "avg_tags_per_word" => SideStat::AvgTagsPerWord,
            other => {
                if let Some(i) = other.strip_prefix("syntax_").and_then(|s| s.parse().ok()) {
                    SideStat::Syntax(i)
                } else {
                    let arc = other.strip_prefix("arc_")?;
                    SideStat::Arc(arc_feature_names().iter().position(|n| n == arc)?)
                }
            }
        };
        Some(FeatureSpec::Side(role, stat))
    }
}

fn parse_pair_stat(name: &str) -> Option<PairStat> {
    match name {
        "word_overlap" => Some(PairStat::WordOverlap),
        "subword_overlap" => Some(PairStat::SubwordOverlap),
        "ttr_distance" => Some(PairStat::TtrDistance),
        _ => None,
    }
}

/// The role the transfer side is compared against: the source if present, else the target.
fn anchor_role(setting: &Setting) -> LangRole {
    if setting.langs.source.is_some() {
        LangRole::Source
    } else {
        LangRole::Target
    }
}

fn pair_roles(setting: &Setting, other: Option<LangRole>) -> (LangRole, LangRole) {
    match other {
        None => (LangRole::Source, LangRole::Target),
        Some(role) => (anchor_role(setting), role),
    }
}

fn compute(spec: FeatureSpec, setting: &Setting, inputs: &FeatureInputs) -> Option<f64> {
    match spec {
        FeatureSpec::SharedDatasetSize => inputs
            .corpora
            .get(&anchor_role(setting))
            .map(|c| c.dataset_size as f64),
        FeatureSpec::Side(role, stat) => side_stat(role, stat, setting, inputs),
        FeatureSpec::Pair(other, stat) => {
            let (a, b) = pair_roles(setting, other);
            let ca = inputs.corpora.get(&a)?;
            let cb = inputs.corpora.get(&b)?;
            match stat {
                PairStat::WordOverlap => vocab_overlap(&ca.word_vocab, &cb.word_vocab).ok(),
                PairStat::SubwordOverlap => {
                    vocab_overlap(ca.subword_vocab.as_ref()?, cb.subword_vocab.as_ref()?).ok()
                }
                // the compared side over the reference side
                PairStat::TtrDistance => ttr_distance(cb.ttr, ca.ttr).ok(),
            }
        }
        FeatureSpec::Distance(other, kind) => {
            let (a, b) = pair_roles(setting, other);
            let la = setting.langs.get(a)?;
            let lb = setting.langs.get(b)?;
            inputs.distances?.distance(la, lb, kind)
        }
    }
}

fn side_stat(
    role: LangRole,
    stat: SideStat,
    setting: &Setting,
    inputs: &FeatureInputs,
) -> Option<f64> {
    let corpus = || inputs.corpora.get(&role).copied();
    let tags = || inputs.tags.get(&role).copied();
    match stat {
        SideStat::DatasetSize => corpus().map(|c| c.dataset_size as f64),
        SideStat::WordVocab => corpus().map(|c| c.word_vocab_size() as f64),
        SideStat::SubwordVocab => corpus()?.subword_vocab_size().map(|n| n as f64),
        SideStat::AvgSentLen => corpus().map(|c| c.avg_sentence_length),
        SideStat::Ttr => corpus().map(|c| c.ttr),
        SideStat::SingleTagTypes => tags().map(|t| t.single_tag_types as f64),
        SideStat::FusedTagTypes => tags().map(|t| t.fused_tag_types as f64),
        SideStat::AvgTagsPerWord => tags().map(|t| t.avg_tags_per_word),
        SideStat::Arc(i) => inputs.arcs.get(&role)?.values()[i],
        SideStat::Syntax(i) => {
            let lang = setting.langs.get(role)?;
            let vector = inputs.syntax?.syntax_vector(lang);
            vector.values.get(i).copied().flatten()
        }
    }
}

/// Builds the schema-aligned vector for one setting.
///
/// A non-missing precomputed column wins over recomputation; a feature that can
/// be neither looked up nor computed is masked.
pub fn assemble(
    setting: &Setting,
    schema: &TaskSchema,
    inputs: &FeatureInputs,
) -> Result<FeatureVector> {
    if setting.task_id != schema.task_id {
        return Err(Error::SchemaMismatch {
            record: setting.task_id.clone(),
            schema: schema.task_id.clone(),
        });
    }
    Ok(FeatureVector::from_options(
        schema.feature_names.iter().map(|name| {
            setting.feature(name).or_else(|| {
                FeatureSpec::parse(name).and_then(|spec| compute(spec, setting, inputs))
            })
        }),
    ))
}

/// Task families with a fixed feature recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    /// Translation: corpus features on both sides, their overlap and TTR distance, source-target distances.
    Mt,
    /// Cross-lingual transfer: corpus features of the task and transfer languages plus distances.
    Transfer,
    /// Morphological analysis: size, vocabulary, TTR and tag statistics.
    Ma,
    /// Dependency parsing: size, vocabulary, TTR and arc-direction proportions.
    Ud,
    /// Lexicon induction: language distances and syntactic vectors of both languages.
    Bli,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipeOptions {
    /// The schema's language roles.
    pub roles: Vec<LangRole>,
    /// Whether subword-segmented corpora are available.
    pub subwords: bool,
    /// Width of the syntax table (BLI only).
    pub syntax_width: usize,
}

/// Ordered feature names a recipe produces.
pub fn recipe_feature_names(recipe: Recipe, opts: &RecipeOptions) -> Vec<String> {
    let mut names = Vec::new();
    let side = |names: &mut Vec<String>, role: LangRole, with_size: bool| {
        let p = role.prefix();
        if with_size {
            names.push(format!("{p}_dataset_size"));
        }
        names.push(format!("{p}_word_vocab"));
        if opts.subwords {
            names.push(format!("{p}_subword_vocab"));
        }
        names.push(format!("{p}_avg_sent_len"));
        names.push(format!("{p}_ttr"));
    };
    let distances = |names: &mut Vec<String>, prefix: &str| {
        names.extend(
            DistanceKind::ALL
                .iter()
                .map(|k| format!("{prefix}dist_{}", k.name())),
        );
    };
    let single_language = |names: &mut Vec<String>| -> &'static str {
        let p = LangRole::Target.prefix();
        names.push(format!("{p}_dataset_size"));
        names.push(format!("{p}_word_vocab"));
        if opts.subwords {
            names.push(format!("{p}_subword_vocab"));
        }
        names.push(format!("{p}_ttr"));
        p
    };
    match recipe {
        Recipe::Mt => {
            names.push("dataset_size".into());
            side(&mut names, LangRole::Source, false);
            side(&mut names, LangRole::Target, false);
            names.push("word_overlap".into());
            if opts.subwords {
                names.push("subword_overlap".into());
            }
            names.push("ttr_distance".into());
            distances(&mut names, "");
        }
        Recipe::Transfer => {
            let anchor = if opts.roles.contains(&LangRole::Source) {
                LangRole::Source
            } else {
                LangRole::Target
            };
            side(&mut names, anchor, true);
            side(&mut names, LangRole::Transfer, true);
            names.push("tsf_word_overlap".into());
            if opts.subwords {
                names.push("tsf_subword_overlap".into());
            }
            names.push("tsf_ttr_distance".into());
            distances(&mut names, "tsf_");
            if opts.roles.contains(&LangRole::Source) && opts.roles.contains(&LangRole::Target) {
                distances(&mut names, "");
            }
        }
        Recipe::Ma => {
            let p = single_language(&mut names);
            names.push(format!("{p}_single_tag_types"));
            names.push(format!("{p}_fused_tag_types"));
            names.push(format!("{p}_avg_tags_per_word"));
        }
        Recipe::Ud => {
            let p = single_language(&mut names);
            names.extend(arc_feature_names().iter().map(|a| format!("{p}_arc_{a}")));
        }
        Recipe::Bli => {
            distances(&mut names, "");
            for role in [LangRole::Source, LangRole::Target] {
                names.extend(
                    (0..opts.syntax_width).map(|i| format!("{}_syntax_{i}", role.prefix())),
                );
            }
        }
    }
    names
}

/// Turns settings into predictor inputs: schema features followed by a one-hot model block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub feature_names: Vec<String>,
    pub known_models: Vec<String>,
}

impl FeatureEncoder {
    /// Encoder without a model block (single-model prediction).
    pub fn single_model(schema: &TaskSchema) -> Self {
        FeatureEncoder {
            feature_names: schema.feature_names.clone(),
            known_models: Vec::new(),
        }
    }

    /// Encoder with one indicator per model, in sorted model-id order.
    pub fn multi_model<'a, I>(schema: &TaskSchema, models: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut known: Vec<String> = models.into_iter().map(str::to_string).collect();
        known.sort_unstable();
        known.dedup();
        FeatureEncoder {
            feature_names: schema.feature_names.clone(),
            known_models: known,
        }
    }

    pub fn register_model(&mut self, model_id: &str) {
        if let Err(pos) = self
            .known_models
            .binary_search_by(|m| m.as_str().cmp(model_id))
        {
            self.known_models.insert(pos, model_id.to_string());
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.feature_names
            .iter()
            .cloned()
            .chain(
                self.known_models
                    .iter()
                    .map(|m| format!("{MODEL_FEATURE_PREFIX}{m}")),
            )
            .collect()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len() + self.known_models.len()
    }

    pub fn encode(&self, setting: &Setting) -> FeatureVector {
        let mut v =
            FeatureVector::from_options(self.feature_names.iter().map(|n| setting.feature(n)));
        for x in encode_model(&setting.model_id, &self.known_models) {
            v.push(Some(x));
        }
        v
    }
}
