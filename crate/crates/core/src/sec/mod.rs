//! Sound event classifier, its training loop and the per-device
//! evaluation protocol.

mod eval;
mod metrics;
mod model;
mod train;

pub use eval::{embed, evaluate_matrix, predict, render_table, DeviceScore, EmbeddingRow, EvalReport};
pub use metrics::{confusion, mean_ci95, t_quantile_975, weighted_f1, weighted_f1_from_confusion};
pub use model::{input_batch, zscore, BnStats, Classifier, ClassifierCfg, ForwardOut, Mode, RfnCfg};
pub use train::{train_sec, AugmentContext, McSource, SecEpoch, SecObserver, SecOutcome, SecTrainConfig, WaveSource};
