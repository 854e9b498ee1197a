use std::io::Write;

use coopgraph::training::EpochRecord;
use serde::Serialize;

/// One line of the training history file; `null` marks metrics that were not computed.
#[derive(Debug, Serialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub lr: f64,
    pub l_dis: f64,
    pub l_reg: f64,
    pub l_cls: f64,
    pub train_scenarios: usize,
    pub val_min_ade: Option<f64>,
    pub val_min_fde: Option<f64>,
    pub val_mr: Option<f64>,
    pub val_f1: Option<f64>,
}

impl From<&EpochRecord> for HistoryLine {
    fn from(r: &EpochRecord) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        HistoryLine {
            epoch: r.epoch,
            lr: r.lr,
            l_dis: r.l_dis,
            l_reg: r.l_reg,
            l_cls: r.l_cls,
            train_scenarios: r.train_scenarios,
            val_min_ade: r.val.map(|v| v.min_ade),
            val_min_fde: r.val.map(|v| v.min_fde),
            val_mr: r.val.map(|v| v.mr),
            val_f1: r.val.and_then(|v| finite(v.f1)),
        }
    }
}

pub fn write_line(w: &mut impl Write, r: &EpochRecord) -> std::io::Result<()> {
    writeln!(
        w,
        "{}",
        serde_json::to_string(&HistoryLine::from(r)).expect("history lines always serialize")
    )
}
