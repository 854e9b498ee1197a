//! Forecast metrics, the constant-velocity baseline and the ablation,
//! latency and data-loss harnesses.

mod harness;
mod metrics;

pub use harness::{drop_observations, droploss_harness, latency_harness, resync_scenario, AblationSwitch};
pub use metrics::{
    agent_errors, cv_forecast, evaluate, evaluate_cv, forecast_metrics, AgentResult, EvalOptions, MetricsReport,
    ScenarioResult,
};
