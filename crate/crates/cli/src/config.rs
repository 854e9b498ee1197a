//! TOML run configuration. Every section and key is optional; missing keys
//! take the documented defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use coopgraph::association::LabelGenConfig;
use coopgraph::evaluation::EvalOptions;
use coopgraph::model::ModelConfig;
use coopgraph::scenario::{GenConfig, MapSpec};
use coopgraph::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "COOPGRAPH_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub gen: GenSection,
    pub labels: LabelSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub n_agents: usize,
    pub n_views: usize,
    pub arm_length: f64,
    pub lane_width: f64,
    pub sample_step: f64,
    pub noise_sigma: f64,
    pub occlusion_sectors: usize,
    pub detection_range: f64,
    pub fragmentation_prob: f64,
    pub turn_prob: f64,
    pub accel_prob: f64,
    pub dt: f64,
    pub t_obs: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection::from(&GenConfig::default())
    }
}

impl From<&GenConfig> for GenSection {
    fn from(g: &GenConfig) -> Self {
        GenSection {
            n_agents: g.n_agents,
            n_views: g.n_views,
            arm_length: g.map.arm_length,
            lane_width: g.map.lane_width,
            sample_step: g.map.sample_step,
            noise_sigma: g.noise_sigma,
            occlusion_sectors: g.occlusion_sectors,
            detection_range: g.detection_range,
            fragmentation_prob: g.fragmentation_prob,
            turn_prob: g.turn_prob,
            accel_prob: g.accel_prob,
            dt: g.dt,
            t_obs: g.t_obs,
            horizon: g.horizon,
            seed: g.seed,
        }
    }
}

impl GenSection {
    pub fn to_core(&self) -> GenConfig {
        GenConfig {
            n_agents: self.n_agents,
            n_views: self.n_views,
            map: MapSpec {
                arm_length: self.arm_length,
                lane_width: self.lane_width,
                sample_step: self.sample_step,
            },
            noise_sigma: self.noise_sigma,
            occlusion_sectors: self.occlusion_sectors,
            detection_range: self.detection_range,
            fragmentation_prob: self.fragmentation_prob,
            turn_prob: self.turn_prob,
            accel_prob: self.accel_prob,
            dt: self.dt,
            t_obs: self.t_obs,
            horizon: self.horizon,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    pub tau_iou: f64,
    pub eps_length: usize,
}

impl Default for LabelSection {
    fn default() -> Self {
        let d = LabelGenConfig::default();
        LabelSection {
            tau_iou: d.tau_iou,
            eps_length: d.eps_length,
        }
    }
}

impl LabelSection {
    pub fn to_core(&self) -> LabelGenConfig {
        LabelGenConfig {
            tau_iou: self.tau_iou,
            eps_length: self.eps_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub n_heads: usize,
    pub motion_sa_layers: usize,
    pub st_sa_layers: usize,
    pub edge_sa_layers: usize,
    pub mfg_layers: usize,
    pub alg_layers: usize,
    pub cig_layers: usize,
    #[serde(rename = "K")]
    pub k_modes: usize,
    pub lane_range: f64,
    pub assoc_threshold: f64,
    pub layer_norm: bool,
    pub t_obs: usize,
    pub horizon: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection::from(&ModelConfig::default())
    }
}

impl From<&ModelConfig> for ModelSection {
    fn from(m: &ModelConfig) -> Self {
        ModelSection {
            d: m.d,
            n_heads: m.n_heads,
            motion_sa_layers: m.motion_sa_layers,
            st_sa_layers: m.st_sa_layers,
            edge_sa_layers: m.edge_sa_layers,
            mfg_layers: m.mfg_layers,
            alg_layers: m.alg_layers,
            cig_layers: m.cig_layers,
            k_modes: m.k_modes,
            lane_range: m.lane_range,
            assoc_threshold: m.assoc_threshold,
            layer_norm: m.layer_norm,
            t_obs: m.t_obs,
            horizon: m.horizon,
        }
    }
}

impl ModelSection {
    pub fn to_core(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            n_heads: self.n_heads,
            motion_sa_layers: self.motion_sa_layers,
            st_sa_layers: self.st_sa_layers,
            edge_sa_layers: self.edge_sa_layers,
            mfg_layers: self.mfg_layers,
            alg_layers: self.alg_layers,
            cig_layers: self.cig_layers,
            k_modes: self.k_modes,
            lane_range: self.lane_range,
            assoc_threshold: self.assoc_threshold,
            layer_norm: self.layer_norm,
            t_obs: self.t_obs,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub w_dis: f64,
    pub w_reg: f64,
    pub w_cls: f64,
    pub clip_norm: f64,
    pub teacher_forcing: bool,
    /// Share of the data file used for training, taken after a seeded shuffle.
    pub fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr0: t.lr0,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: t.seed,
            w_dis: t.w_dis,
            w_reg: t.w_reg,
            w_cls: t.w_cls,
            clip_norm: t.clip_norm,
            teacher_forcing: t.teacher_forcing,
            fraction: 1.0,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed: self.seed,
            w_dis: self.w_dis,
            w_reg: self.w_reg,
            w_cls: self.w_cls,
            clip_norm: self.clip_norm,
            teacher_forcing: self.teacher_forcing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub miss_threshold: f64,
    /// Score every decoded agent rather than the target only.
    pub all_agents: bool,
    /// Seed of the random-loss harness.
    pub drop_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            miss_threshold: EvalOptions::default().miss_threshold,
            all_agents: false,
            drop_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`], or falls back to defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(env) {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
            None => Ok(RunConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.to_core().validate()?;
        self.labels.to_core().validate()?;
        self.model.to_core().validate()?;
        self.train.to_core().validate()?;
        if !(self.train.fraction > 0.0 && self.train.fraction <= 1.0) {
            return Err(CliError::Config("train.fraction: 0 < fraction <= 1".into()));
        }
        if !(self.eval.miss_threshold > 0.0) {
            return Err(CliError::Config("eval.miss_threshold: > 0".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            miss_threshold: self.eval.miss_threshold,
            all_agents: self.eval.all_agents,
            ..EvalOptions::default()
        }
    }
}
