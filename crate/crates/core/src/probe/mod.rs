//! Probing numeral embeddings: decoding, addition and list extremum tasks,
//! their downstream models, metrics and report emission.

pub mod dataset;
pub mod embedder;
pub mod gbt;
pub mod lstm;
pub mod metrics;
pub mod report;
pub mod tasks;

pub use dataset::{build_probe_dataset, NumeralSet, ProbeDataset, RangeLabel, RangeSpec, Split, Task};
pub use embedder::{
    CachedEmbedder, CheckpointEmbedder, ConstantEmbedder, LogFeatureEmbedder, NumeralEmbedder,
    RandomEmbedder,
};
pub use gbt::{train_gbt_regressor, GbtConfig, GbtRegressor};
pub use lstm::{train_list_classifier, ListClassifier, ListClassifierConfig};
pub use metrics::{accuracy, cosine, log_rmse, r_squared};
pub use report::{run_probe_plan, ProbeCell, ProbePlan, ProbeReport};
pub use tasks::{
    cosine_heatmap, run_addition, run_decoding, run_list_extremum, Extremum, Heatmap,
    RegressionOutcome,
};
