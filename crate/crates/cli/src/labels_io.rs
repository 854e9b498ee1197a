//! Pseudo-label files: one record per (scenario, view pair), keyed by the
//! scenario's zero-based line index in its scenario file.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use coopgraph::association::{label_set, LabelPair, TrackPair, ViewPairLabels};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub scenario_id: usize,
    pub view_pair: [u32; 2],
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub a: u32,
    pub b: u32,
    pub count: usize,
}

pub fn records(scenario_id: usize, labels: &[ViewPairLabels]) -> Vec<LabelRecord> {
    labels
        .iter()
        .map(|l| LabelRecord {
            scenario_id,
            view_pair: [l.view_a, l.view_b],
            pairs: l
                .pairs
                .iter()
                .map(|p| PairRecord {
                    a: p.a,
                    b: p.b,
                    count: p.count,
                })
                .collect(),
        })
        .collect()
}

pub fn write_records(w: &mut impl Write, recs: &[LabelRecord]) -> std::io::Result<()> {
    for r in recs {
        writeln!(
            w,
            "{}",
            serde_json::to_string(r).expect("label records always serialize")
        )?;
    }
    Ok(())
}

pub fn write_labels(path: &Path, per_scenario: &[Vec<ViewPairLabels>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    for (i, l) in per_scenario.iter().enumerate() {
        write_records(&mut w, &records(i, l)).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads a labels file into one positive-pair set per scenario.
pub fn read_label_sets(path: &Path, n_scenarios: usize) -> Result<Vec<BTreeSet<TrackPair>>> {
    let reader = BufReader::new(File::open(path).map_err(CliError::io(path))?);
    let mut grouped: Vec<Vec<ViewPairLabels>> = vec![Vec::new(); n_scenarios];
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let slot = grouped.get_mut(rec.scenario_id).ok_or_else(|| {
            parse_err(format!(
                "scenario_id {} beyond the {n_scenarios} scenarios",
                rec.scenario_id
            ))
        })?;
        slot.push(ViewPairLabels {
            view_a: rec.view_pair[0],
            view_b: rec.view_pair[1],
            pairs: rec
                .pairs
                .iter()
                .map(|p| LabelPair {
                    a: p.a,
                    b: p.b,
                    count: p.count,
                })
                .collect(),
        });
    }
    Ok(grouped.iter().map(|g| label_set(g)).collect())
}
