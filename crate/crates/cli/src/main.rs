use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use perfpred::corpus_features::{
    compute_arc_proportions, compute_corpus_stats, compute_tag_stats, ArcProportions, CorpusStats,
    TagStats,
};
use perfpred::evaluation::{
    kfold_evaluate, read_grid, sweep_feature, write_sweep_csv, EvalOptions, GbrtPredictor,
    Predictor, PredictorKind,
};
use perfpred::extrapolation::{new_model_curve, write_curve_csv, ExtrapolationOptions};
use perfpred::featurize::{assemble, FeatureInputs};
use perfpred::gbrt::{BoostedModel, BoosterParams};
use perfpred::lang_features::{DistanceTable, SyntaxTable};
use perfpred::record_store::{
    load_records, load_table, write_table, ExperimentRecord, LangRole, PartitionUnit, Setting,
    TaskSchema,
};
use perfpred::subset_search::{
    beam_search, random_search, write_subsets_csv, BeamOptions, SearchDirection,
};

/// Predict NLP experiment scores and run evaluation studies on record sets.
#[derive(Parser, Debug)]
#[command(name = "perfpred", version)]
struct Cli {
    /// Worker threads for the harnesses (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute feature columns from corpora and language tables.
    Features(FeaturesArgs),
    /// K-fold evaluation of a predictor or baseline.
    Evaluate(EvaluateArgs),
    /// Train on scored rows and predict the blank ones.
    Fill(FillArgs),
    /// Beam search for the most or least representative datasets.
    Subsets(SubsetsArgs),
    /// Predict an unseen model's scores from n of its records.
    Newmodel(NewmodelArgs),
    /// Predict one record under a grid of feature overrides.
    Sweep(SweepArgs),
    /// Per-feature total split gain of a trained booster.
    Importance(ImportanceArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Records CSV; relative paths that do not exist are also looked up under $NLPERF_DATA.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Task schema JSON (same lookup as --records).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BoosterArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    min_child_weight: f64,
}

impl BoosterArgs {
    fn params(&self, seed: u64) -> Result<BoosterParams> {
        let p = BoosterParams {
            learning_rate: self.learning_rate,
            num_trees: self.trees,
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            seed,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    common: Common,
    /// CSV manifest `lang,dataset,kind,path` with kind in text|subword|tagged|treebank.
    #[arg(long)]
    corpora: Option<PathBuf>,
    /// Pairwise distance table CSV.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Syntax vector table CSV.
    #[arg(long)]
    syntax: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
    /// nlperf_sm, nlperf_mm, mean, lang_src, lang_tgt, lang_tsf or model_wise.
    #[arg(long)]
    kind: PredictorKind,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Partition unit: record or dataset.
    #[arg(long, default_value = "record", value_parser = parse_unit)]
    unit: PartitionUnit,
}

#[derive(Args, Debug)]
struct FillArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
}

#[derive(Args, Debug)]
struct SubsetsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
    #[arg(long, default_value_t = 5)]
    max_size: usize,
    #[arg(long, default_value_t = 100)]
    beam_width: usize,
    /// min (most representative) or max (least representative).
    #[arg(long, default_value = "min")]
    direction: SearchDirection,
    /// Also write `size,rank,datasets,objective` here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Random-growth comparator runs (0 disables it).
    #[arg(long, default_value_t = 0)]
    random_runs: usize,
}

#[derive(Args, Debug)]
struct NewmodelArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
    /// The held-out model.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 5)]
    n_max: usize,
    #[arg(long, default_value_t = 50)]
    splits: usize,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Also write `n,repetition,rmse,baseline` here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
    /// Zero-based row of the records file whose features are varied.
    #[arg(long)]
    base: usize,
    /// CSV whose header names the overridden features, one grid point per row.
    #[arg(long)]
    grid: PathBuf,
    /// Leave the base record out of training.
    #[arg(long)]
    exclude_base: bool,
}

#[derive(Args, Debug)]
struct ImportanceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    booster: BoosterArgs,
    /// Use this booster JSON instead of training on --records.
    #[arg(long)]
    model_in: Option<PathBuf>,
    /// Save the trained booster JSON here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn parse_unit(s: &str) -> Result<PartitionUnit, String> {
    match s {
        "record" => Ok(PartitionUnit::Record),
        "dataset" => Ok(PartitionUnit::Dataset),
        other => Err(format!(
            "unknown unit `{other}` (expected record or dataset)"
        )),
    }
}

/// Falls back to `$NLPERF_DATA/<path>` for relative paths missing from the working directory.
fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("NLPERF_DATA") {
        Some(root) => {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                candidate
            } else {
                path.to_path_buf()
            }
        }
        None => path.to_path_buf(),
    }
}

impl Common {
    fn schema(&self) -> Result<TaskSchema> {
        let path = self
            .schema
            .as_deref()
            .ok_or_else(|| anyhow!("--schema is required"))?;
        let path = resolve(path);
        TaskSchema::load(&path).with_context(|| format!("loading schema {}", path.display()))
    }

    fn records_path(&self) -> Result<PathBuf> {
        let path = self
            .records
            .as_deref()
            .ok_or_else(|| anyhow!("--records is required"))?;
        Ok(resolve(path))
    }

    fn records(&self, schema: &TaskSchema) -> Result<Vec<ExperimentRecord>> {
        let path = self.records_path()?;
        load_records(&path, schema).with_context(|| format!("loading records {}", path.display()))
    }

    fn create_out(&self) -> Result<BufWriter<File>> {
        create(&self.out)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    pool.install(|| match cli.command {
        Command::Features(a) => cmd_features(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Fill(a) => cmd_fill(a),
        Command::Subsets(a) => cmd_subsets(a),
        Command::Newmodel(a) => cmd_newmodel(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Importance(a) => cmd_importance(a),
    })
}

/// Statistics loaded for one (language, dataset) entry of the manifest.
#[derive(Default)]
struct CorpusEntry {
    stats: Option<CorpusStats>,
    tags: Option<TagStats>,
    arcs: Option<ArcProportions>,
}

fn load_manifest(path: &Path) -> Result<BTreeMap<(String, String), CorpusEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let mut rows = Vec::new();
    for row in rdr.deserialize::<(String, String, String, PathBuf)>() {
        rows.push(row.context("malformed manifest row")?);
    }
    // text corpora first so subword vocabularies have something to attach to
    rows.sort_by_key(|(_, _, kind, _)| kind != "text");

    let mut out: BTreeMap<(String, String), CorpusEntry> = BTreeMap::new();
    for (lang, dataset, kind, file) in rows {
        let file = if file.is_absolute() {
            file
        } else {
            base.join(file)
        };
        let text =
            fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let entry = out.entry((lang.clone(), dataset.clone())).or_default();
        let ctx = || format!("{kind} corpus {}", file.display());
        match kind.as_str() {
            "text" => entry.stats = Some(compute_corpus_stats(&text).with_context(ctx)?),
            "subword" => {
                let stats = entry.stats.take().ok_or_else(|| {
                    anyhow!("subword corpus for {lang}/{dataset} has no text corpus")
                })?;
                entry.stats = Some(stats.with_subwords(&text).with_context(ctx)?);
            }
            "tagged" => entry.tags = Some(compute_tag_stats(&text).with_context(ctx)?),
            "treebank" => entry.arcs = Some(compute_arc_proportions(&text).with_context(ctx)?),
            other => bail!("unknown corpus kind `{other}` in manifest"),
        }
    }
    Ok(out)
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let schema = a.common.schema()?;
    let path = a.common.records_path()?;
    let rows = load_table(&path, &schema).with_context(|| format!("loading {}", path.display()))?;
    let corpora = match &a.corpora {
        Some(p) => load_manifest(&resolve(p))?,
        None => BTreeMap::new(),
    };
    let distances = a
        .distances
        .as_ref()
        .map(|p| DistanceTable::load(resolve(p)))
        .transpose()?;
    let syntax = a
        .syntax
        .as_ref()
        .map(|p| SyntaxTable::load(resolve(p)))
        .transpose()?;

    let mut settings: Vec<Setting> = Vec::with_capacity(rows.len());
    for (setting, _) in &rows {
        let mut inputs = FeatureInputs {
            distances: distances.as_ref(),
            syntax: syntax.as_ref(),
            ..Default::default()
        };
        for role in LangRole::ALL {
            let Some(lang) = setting.langs.get(role) else {
                continue;
            };
            let key = (
                lang.to_string(),
                setting.dataset.clone().unwrap_or_default(),
            );
            if let Some(entry) = corpora.get(&key) {
                if let Some(s) = &entry.stats {
                    inputs.corpora.insert(role, s);
                }
                if let Some(t) = &entry.tags {
                    inputs.tags.insert(role, t);
                }
                if let Some(x) = &entry.arcs {
                    inputs.arcs.insert(role, x);
                }
            }
        }
        let vector = assemble(setting, &schema, &inputs)?;
        let mut out = setting.clone();
        for (i, name) in schema.feature_names.iter().enumerate() {
            out.features.insert(name.clone(), vector.get(i));
        }
        settings.push(out);
    }
    let table: Vec<(&Setting, Option<f64>)> = settings
        .iter()
        .zip(&rows)
        .map(|(s, (_, score))| (s, *score))
        .collect();
    write_table(a.common.create_out()?, &schema, &table, None)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let schema = a.common.schema()?;
    a.kind.check(&schema)?;
    let records = a.common.records(&schema)?;
    let opts = EvalOptions {
        k: a.k,
        runs: a.runs,
        seed: a.common.seed,
        unit: a.unit,
        params: a.booster.params(a.common.seed)?,
    };
    let report = kfold_evaluate(&records, &schema, a.kind, &opts)?;
    write_json(&a.common.out, &report)
}

fn cmd_fill(a: FillArgs) -> Result<()> {
    let schema = a.common.schema()?;
    let path = a.common.records_path()?;
    let rows = load_table(&path, &schema).with_context(|| format!("loading {}", path.display()))?;
    let scored: Vec<ExperimentRecord> = rows
        .iter()
        .filter_map(|(s, score)| {
            score.map(|score| ExperimentRecord {
                setting: s.clone(),
                score,
            })
        })
        .collect();
    if scored.is_empty() {
        bail!("no scored rows to train on");
    }
    let params = a.booster.params(a.common.seed)?;
    let predictor = GbrtPredictor::fit(&scored, &schema, schema.multi_model, &params)?;
    let mut table = Vec::with_capacity(rows.len());
    let mut flags = Vec::with_capacity(rows.len());
    for (setting, score) in &rows {
        match score {
            Some(s) => {
                table.push((setting, Some(*s)));
                flags.push(false);
            }
            None => {
                table.push((setting, Some(predictor.predict(setting)?)));
                flags.push(true);
            }
        }
    }
    write_table(a.common.create_out()?, &schema, &table, Some(&flags))?;
    Ok(())
}

fn cmd_subsets(a: SubsetsArgs) -> Result<()> {
    let schema = a.common.schema()?;
    let records = a.common.records(&schema)?;
    let params = a.booster.params(a.common.seed)?;
    let opts = BeamOptions {
        max_size: a.max_size,
        beam_width: a.beam_width,
        direction: a.direction,
        params: params.clone(),
    };
    let result = beam_search(&records, &schema, &opts)?;
    let random = if a.random_runs > 0 {
        Some(random_search(
            &records,
            &schema,
            a.max_size,
            a.random_runs,
            a.common.seed,
            &params,
        )?)
    } else {
        None
    };
    write_json(
        &a.common.out,
        &serde_json::json!({ "beam": result, "random": random }),
    )?;
    if let Some(csv_path) = &a.csv {
        write_subsets_csv(create(csv_path)?, &result)?;
    }
    Ok(())
}

fn cmd_newmodel(a: NewmodelArgs) -> Result<()> {
    let schema = a.common.schema()?;
    if !schema.multi_model {
        bail!(
            "task `{}` has a single model; newmodel needs a multi-model task",
            schema.task_id
        );
    }
    let records = a.common.records(&schema)?;
    let opts = ExtrapolationOptions {
        n_max: a.n_max,
        splits: a.splits,
        samples: a.samples,
        seed: a.common.seed,
        params: a.booster.params(a.common.seed)?,
    };
    let curve = new_model_curve(&records, &schema, &a.model, &opts)?;
    write_json(&a.common.out, &curve)?;
    if let Some(csv_path) = &a.csv {
        write_curve_csv(create(csv_path)?, &curve)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let schema = a.common.schema()?;
    let records = a.common.records(&schema)?;
    let base = records.get(a.base).ok_or_else(|| {
        anyhow!(
            "--base {} is out of range for {} records",
            a.base,
            records.len()
        )
    })?;
    let train: Vec<ExperimentRecord> = records
        .iter()
        .enumerate()
        .filter(|(i, _)| !(a.exclude_base && *i == a.base))
        .map(|(_, r)| r.clone())
        .collect();
    let params = a.booster.params(a.common.seed)?;
    let predictor = GbrtPredictor::fit(&train, &schema, schema.multi_model, &params)?;
    let grid_path = resolve(&a.grid);
    let grid =
        File::open(&grid_path).with_context(|| format!("opening {}", grid_path.display()))?;
    let (columns, overrides) = read_grid(grid)?;
    let vector = predictor.encoder.encode(&base.setting);
    let results = sweep_feature(&predictor.model, &vector, &overrides)?;
    write_sweep_csv(a.common.create_out()?, &columns, &results)?;
    Ok(())
}

fn cmd_importance(a: ImportanceArgs) -> Result<()> {
    let model = match &a.model_in {
        Some(p) => BoostedModel::load(resolve(p))?,
        None => {
            let schema = a.common.schema()?;
            let records = a.common.records(&schema)?;
            let params = a.booster.params(a.common.seed)?;
            GbrtPredictor::fit(&records, &schema, schema.multi_model, &params)?.model
        }
    };
    if let Some(p) = &a.model_out {
        model.save(p)?;
    }
    let importance = model.feature_importance();
    let total: f64 = importance.values().sum();
    let mut ranked: Vec<(&String, &f64)> = importance.iter().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(x.1).then_with(|| x.0.cmp(y.0)));

    let mut wtr = csv::Writer::from_writer(a.common.create_out()?);
    wtr.write_record(["feature", "gain", "share"])?;
    for (name, gain) in ranked {
        wtr.write_record([name.clone(), gain.to_string(), (gain / total).to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
