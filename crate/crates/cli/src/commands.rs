use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use coopgraph::association::{candidate_pairs, generate_pseudo_labels, label_set, TrackPair};
use coopgraph::evaluation::{
    droploss_harness, evaluate, evaluate_cv, latency_harness, AblationSwitch, EvalOptions, MetricsReport,
};
use coopgraph::model::{init_params, model_forward, ForwardOptions, Mode, ModelConfig};
use coopgraph::numerics::ParamStore;
use coopgraph::scenario::{fraction_count, generate_dataset, Scenario, ViewKind};
use coopgraph::training::{disturb_labels, fit};
use coopgraph::Rng;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::history;
use crate::labels_io;
use crate::report;
use crate::scenario_io::{read_scenarios, write_scenarios, ScenarioReader};
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "coopgraph", version, about = "Cooperative multi-view trajectory forecasting")]
pub struct Cli {
    /// TOML run configuration (defaults to $COOPGRAPH_CONFIG, then built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic cooperative scenarios.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Produce IoU/assignment pseudo labels for a scenario file.
    Labels {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tau_iou: Option<f64>,
        #[arg(long)]
        eps_length: Option<usize>,
    },
    /// Train a model and write a checkpoint plus `<out>.history.jsonl`.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Held-out scenarios scored after every epoch.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint (or the constant-velocity baseline).
    Eval {
        #[command(flatten)]
        common: EvalArgs,
        /// Comma-separated view kinds to empty before evaluation.
        #[arg(long, value_delimiter = ',')]
        mask_views: Vec<String>,
        #[arg(long)]
        ablate: Option<String>,
        /// Evaluate the constant-velocity baseline instead of a checkpoint.
        #[arg(long)]
        baseline_cv: bool,
    },
    /// Latency and data-loss robustness sweeps.
    Robust {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(
            long,
            value_delimiter = ',',
            conflicts_with = "drop",
            required_unless_present = "drop"
        )]
        latency: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        drop: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render one SVG per scenario.
    Viz {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub miss_threshold: Option<f64>,
    #[arg(long)]
    pub all_agents: bool,
    /// Write the summary records here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print an aligned table.
    #[arg(long)]
    pub table: bool,
}

fn required(p: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("missing path: --{what}")))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn echo_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    fs::write(path, cfg.to_toml()).map_err(CliError::io(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn load_params(path: &Path, mcfg: &ModelConfig) -> Result<ParamStore> {
    checkpoint::load(path, &init_params(mcfg, 0)?)
}

fn parse_views(names: &[String]) -> Result<Vec<ViewKind>> {
    names
        .iter()
        .map(|n| match ViewKind::parse(n.trim()) {
            Some(ViewKind::Ego) => Err(CliError::Config("mask-views: the ego view cannot be masked".into())),
            Some(k) => Ok(k),
            None => Err(CliError::Config(format!("mask-views: unknown view kind `{n}`"))),
        })
        .collect()
}

/// Seeded subset of `ceil(fraction * n)` indices, in file order.
pub fn training_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::derive(seed, "fraction").shuffle(&mut idx);
    idx.truncate(fraction_count(n, fraction));
    idx.sort_unstable();
    idx
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let out_err = |e: std::io::Error| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match &cli.command {
        Command::Gen { out, n, seed } => {
            if let Some(s) = seed {
                cfg.gen.seed = *s;
            }
            cfg.validate()?;
            let data = generate_dataset(&cfg.gen.to_core(), *n)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(CliError::io(dir))?;
            }
            write_scenarios(out, &data)?;
            echo_config(&sibling(out, ".config.toml"), &cfg)?;
        }
        Command::Labels {
            data,
            out,
            tau_iou,
            eps_length,
        } => {
            if let Some(x) = tau_iou {
                cfg.labels.tau_iou = *x;
            }
            if let Some(k) = eps_length {
                cfg.labels.eps_length = *k;
            }
            cfg.validate()?;
            let data = required(data, &cfg.paths.data, "data")?;
            let lcfg = cfg.labels.to_core();
            let mut w = create(out)?;
            for (i, s) in ScenarioReader::open(&data)?.enumerate() {
                let recs = labels_io::records(i, &generate_pseudo_labels(&s?, &lcfg));
                labels_io::write_records(&mut w, &recs).map_err(CliError::io(out))?;
            }
            w.flush().map_err(CliError::io(out))?;
            echo_config(&sibling(out, ".config.toml"), &cfg)?;
        }
        Command::Train {
            data,
            labels,
            out,
            val,
            fraction,
            ablate,
            seed,
        } => {
            if let Some(s) = seed {
                cfg.train.seed = *s;
            }
            if let Some(f) = fraction {
                cfg.train.fraction = *f;
            }
            cfg.validate()?;
            let switch = ablate.as_deref().map(AblationSwitch::parse).transpose()?;
            let data = required(data, &cfg.paths.data, "data")?;
            let labels = required(labels, &cfg.paths.labels, "labels")?;
            let all = read_scenarios(&data)?;
            let all_labels = labels_io::read_label_sets(&labels, all.len())?;
            let tcfg = cfg.train.to_core();
            let subset = training_subset(all.len(), cfg.train.fraction, tcfg.seed);
            let train: Vec<Scenario> = subset.iter().map(|&i| all[i].clone()).collect();
            let mut train_labels: Vec<BTreeSet<TrackPair>> = subset.iter().map(|&i| all_labels[i].clone()).collect();
            if let Some(AblationSwitch::DisturbLabels(p)) = switch {
                for (k, (s, l)) in train.iter().zip(train_labels.iter_mut()).enumerate() {
                    let mut rng = Rng::derive(tcfg.seed, &format!("disturb/{}", subset[k]));
                    *l = disturb_labels(l, &candidate_pairs(s), p, &mut rng);
                }
            }
            let val = match val.as_ref().or(cfg.paths.val_data.as_ref()) {
                Some(p) => read_scenarios(p)?,
                None => Vec::new(),
            };
            let ablation = switch.map(|s| s.ablation()).unwrap_or_default();
            let hist_path = sibling(out, ".history.jsonl");
            let mut hist = create(&hist_path)?;
            let mut io_err = None;
            let result = fit(
                &train,
                &train_labels,
                &val,
                &cfg.model.to_core(),
                &tcfg,
                ablation,
                &mut |rec, _| {
                    if let Err(e) = history::write_line(&mut hist, rec).and_then(|_| hist.flush()) {
                        io_err.get_or_insert(e);
                    }
                },
            );
            if let Some(e) = io_err {
                return Err(CliError::Io {
                    path: hist_path,
                    source: e,
                });
            }
            echo_config(&sibling(out, ".config.toml"), &cfg)?;
            match result {
                Ok(r) => checkpoint::save(out, &r.params)?,
                Err(failure) => {
                    checkpoint::save(out, &failure.last_good)?;
                    return Err(failure.error.into());
                }
            }
        }
        Command::Eval {
            common,
            mask_views,
            ablate,
            baseline_cv,
        } => {
            apply_eval_flags(&mut cfg, common)?;
            let data = read_scenarios(&required(&common.data, &cfg.paths.data, "data")?)?;
            let mut opts = cfg.eval_options();
            opts.mask_views = parse_views(mask_views)?;
            if let Some(a) = ablate {
                opts.ablation = AblationSwitch::parse(a)?.ablation();
            }
            let (name, r) = if *baseline_cv {
                let masked: Vec<Scenario> = data.iter().map(|s| s.with_views_masked(&opts.mask_views)).collect();
                ("cv".to_string(), evaluate_cv(&masked, &opts)?)
            } else {
                let mcfg = cfg.model.to_core();
                let params = load_params(&required(&common.ckpt, &cfg.paths.checkpoint, "ckpt")?, &mcfg)?;
                let name = if mask_views.is_empty() {
                    "model".to_string()
                } else {
                    format!("mask:{}", mask_views.join("+"))
                };
                (name, evaluate(&data, &params, &mcfg, &opts)?)
            };
            emit(stdout, common, &cfg, &[(name, r)]).map_err(out_err)??;
        }
        Command::Robust {
            common,
            latency,
            drop,
            seed,
        } => {
            apply_eval_flags(&mut cfg, common)?;
            if let Some(s) = seed {
                cfg.eval.drop_seed = *s;
            }
            let data = read_scenarios(&required(&common.data, &cfg.paths.data, "data")?)?;
            let mcfg = cfg.model.to_core();
            let params = load_params(&required(&common.ckpt, &cfg.paths.checkpoint, "ckpt")?, &mcfg)?;
            let opts: EvalOptions = cfg.eval_options();
            let rows: Vec<(String, MetricsReport)> = if latency.is_empty() {
                droploss_harness(&data, &params, &mcfg, drop, cfg.eval.drop_seed, &opts)?
                    .into_iter()
                    .map(|(r, m)| (format!("drop={r}"), m))
                    .collect()
            } else {
                latency_harness(&data, &params, &mcfg, latency, &opts)?
                    .into_iter()
                    .map(|(k, m)| (format!("latency={k}"), m))
                    .collect()
            };
            emit(stdout, common, &cfg, &rows).map_err(out_err)??;
        }
        Command::Viz { data, ckpt, out } => {
            cfg.validate()?;
            let data = required(data, &cfg.paths.data, "data")?;
            fs::create_dir_all(out).map_err(CliError::io(out))?;
            let mcfg = cfg.model.to_core();
            let params = ckpt
                .as_ref()
                .or(cfg.paths.checkpoint.as_ref())
                .map(|p| load_params(p, &mcfg))
                .transpose()?;
            let lcfg = cfg.labels.to_core();
            for (i, s) in ScenarioReader::open(&data)?.enumerate() {
                let s = s?;
                let (links, forecasts) = match &params {
                    Some(p) => {
                        let o = model_forward(&s, p, &mcfg, Mode::Infer, &ForwardOptions::default())?;
                        (o.association.associated(), o.forecasts)
                    }
                    None => (label_set(&generate_pseudo_labels(&s, &lcfg)), Vec::new()),
                };
                let path = out.join(format!("scenario_{i:04}.svg"));
                fs::write(&path, svg::render(&s, &links, &forecasts)).map_err(CliError::io(&path))?;
            }
            echo_config(&out.join("config.toml"), &cfg)?;
        }
    }
    Ok(())
}

fn apply_eval_flags(cfg: &mut RunConfig, common: &EvalArgs) -> Result<()> {
    if let Some(m) = common.miss_threshold {
        cfg.eval.miss_threshold = m;
    }
    if common.all_agents {
        cfg.eval.all_agents = true;
    }
    cfg.validate()
}

fn emit(
    stdout: &mut dyn Write,
    common: &EvalArgs,
    cfg: &RunConfig,
    rows: &[(String, MetricsReport)],
) -> std::io::Result<Result<()>> {
    let lines: Vec<String> = rows.iter().map(|(s, r)| report::record_line(s, r)).collect();
    for l in &lines {
        writeln!(stdout, "{l}")?;
    }
    if common.table {
        let t: Vec<(String, &MetricsReport)> = rows.iter().map(|(s, r)| (s.clone(), r)).collect();
        write!(stdout, "{}", report::table(&t))?;
    }
    if let Some(out) = &common.out {
        let write = || -> Result<()> {
            let mut w = create(out)?;
            for l in &lines {
                writeln!(w, "{l}").map_err(CliError::io(out))?;
            }
            w.flush().map_err(CliError::io(out))?;
            echo_config(&sibling(out, ".config.toml"), cfg)
        };
        return Ok(write());
    }
    Ok(Ok(()))
}
