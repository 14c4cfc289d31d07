//! Predicting experiment scores of NLP systems from dataset, language and model features.

pub mod corpus_features;
pub mod error;
pub mod evaluation;
pub mod extrapolation;
pub mod featurize;
pub mod gbrt;
pub mod lang_features;
pub mod record_store;
pub mod subset_search;

pub use error::{Error, Result};
pub use evaluation::{
    kfold_evaluate, EvalOptions, EvalReport, GbrtPredictor, Predictor, PredictorKind,
};
pub use featurize::{FeatureEncoder, FeatureVector};
pub use gbrt::{BoostedModel, BoosterParams};
pub use record_store::{DatasetKey, ExperimentRecord, LangRole, Metric, Setting, TaskSchema};

/// Derives an independent 64-bit seed from a base seed and two indices (splitmix64 finalizer).
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn splitmix(z: u64) -> u64 {
        let z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ a) ^ b)
}
