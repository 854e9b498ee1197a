//! Losses, the training loop and label disturbance.

mod fit;
mod losses;

pub use fit::{disturb_labels, fit, EpochRecord, FitResult, TrainConfig, TrainFailure, ValMetrics};
pub use losses::{
    bce_value, cls_value, laplace_nll_value, scene_loss, select_winner, winner_targets, SceneLoss, WinnerSelection,
};
