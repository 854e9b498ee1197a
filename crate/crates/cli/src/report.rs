use coopgraph::association::AssocCounts;
use coopgraph::evaluation::MetricsReport;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct SummaryRecord<'a> {
    pub setting: &'a str,
    #[serde(rename = "minADE")]
    pub min_ade: f64,
    #[serde(rename = "minFDE")]
    pub min_fde: f64,
    #[serde(rename = "MR")]
    pub mr: f64,
    pub n_agents: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub association: Option<AssocRecord>,
}

#[derive(Debug, Serialize)]
pub struct AssocRecord {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<AssocCounts> for AssocRecord {
    fn from(c: AssocCounts) -> Self {
        let m = c.metrics();
        AssocRecord {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

pub fn summary<'a>(setting: &'a str, r: &MetricsReport) -> SummaryRecord<'a> {
    SummaryRecord {
        setting,
        min_ade: r.min_ade,
        min_fde: r.min_fde,
        mr: r.mr,
        n_agents: r.n_agents,
        association: r.association.map(AssocRecord::from),
    }
}

pub fn record_line(setting: &str, r: &MetricsReport) -> String {
    serde_json::to_string(&summary(setting, r)).expect("summaries always serialize")
}

/// Aligned plain-text table, one row per setting.
pub fn table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(s, _)| s.len()).max().unwrap_or(0).max(7);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>6}  {:>6}  {:>6}\n",
        "setting", "minADE", "minFDE", "MR", "F1", "agents"
    );
    for (s, r) in rows {
        let f1 = r
            .association
            .map_or("-".to_string(), |a| format!("{:.3}", a.metrics().f1));
        out.push_str(&format!(
            "{:<width$}  {:>8.4}  {:>8.4}  {:>6.3}  {:>6}  {:>6}\n",
            s, r.min_ade, r.min_fde, r.mr, f1, r.n_agents
        ));
    }
    out
}
