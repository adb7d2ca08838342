//! Training loops, cluster extraction and matched F1 evaluation.

mod eval;
mod matching;
mod trainer;

pub use eval::{evaluate, predict_centers, score, truth_centers, Counts, EvalOptions, EvalReport, ExampleMatch, Method, MATCH_RADIUS_M};
pub use matching::{connected_components, extract_clusters, match_detections, Center, MatchResult};
pub use trainer::{log_csv, train, weight_divergence, EpochLog, LrSchedule, TrainConfig, TrainMode, TrainOutcome};
