#![allow(dead_code)]

use std::path::PathBuf;

use perfpred::record_store::{ExperimentRecord, LangRole, Languages, Metric, Setting, TaskSchema};

pub fn schema(task: &str, roles: &[LangRole], features: &[&str], multi_model: bool) -> TaskSchema {
    TaskSchema {
        task_id: task.into(),
        metric_name: Metric::Accuracy,
        language_roles: roles.to_vec(),
        feature_names: features.iter().map(|s| s.to_string()).collect(),
        multi_model,
    }
}

pub fn langs(src: Option<&str>, tgt: Option<&str>, tsf: Option<&str>) -> Languages {
    Languages {
        source: src.map(Into::into),
        target: tgt.map(Into::into),
        transfer: tsf.map(Into::into),
    }
}

pub fn record(
    task: &str,
    model: &str,
    langs: Languages,
    features: &[(&str, Option<f64>)],
    score: f64,
) -> ExperimentRecord {
    ExperimentRecord {
        setting: Setting {
            task_id: task.into(),
            model_id: model.into(),
            langs,
            dataset: None,
            features: features.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        },
        score,
    }
}

/// Directory with vendored record sets: `$NLPERF_DATA`, else the crate's `data/`.
pub fn data_dir() -> PathBuf {
    std::env::var_os("NLPERF_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"))
}
