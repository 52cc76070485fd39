//! Synthetic data, noise injection and the pre-train/joint schedule.

mod config;
mod gradcheck;
mod schedule;
mod source;
mod step;

pub use config::{split_budget, TrainConfig};
pub use gradcheck::{check_model_gradients, ModelGradCheck};
pub use schedule::{
    eval_trend, final_smoothed, init_params, initial_smoothed, pretrain_branch, run_phase, run_schedule, smoothed,
    train_joint, train_sensitive_only, write_curve_csv, CurvePoint, PhaseSummary, TrainReport, TrendRow,
    SMOOTHING_WINDOW,
};
pub use source::{
    apply_noise, batch_noise, Batch, BatchSource, DatasetSource, SyntheticLightstage, SyntheticPointlight,
};
pub use step::{batch_loss, loss_and_grad, total_loss, Objective, StepLoss};
