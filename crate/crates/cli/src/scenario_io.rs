//! Line-delimited scenario files: one JSON object per scenario, missing
//! frames as `null`, floats in shortest round-trip decimal form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use coopgraph::geometry::Vec2;
use coopgraph::scenario::{
    AgentTrack, AgentType, BBox, LaneSegment, ObservedState, RoadType, Scenario, TrackRef, Truth, Turn, View, ViewKind,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRecord {
    version: u32,
    dt: f64,
    #[serde(rename = "T")]
    t_obs: usize,
    #[serde(rename = "H")]
    horizon: usize,
    target: TrackRecord,
    views: Vec<ViewRecord>,
    map: Vec<LaneRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<TruthRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackRecord {
    view: u32,
    track: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewRecord {
    view_id: u32,
    kind: String,
    tracks: Vec<AgentTrackRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentTrackRecord {
    track_id: u32,
    agent_type: String,
    frames: Vec<Option<FrameRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: usize,
    p: [f64; 2],
    r: [f64; 2],
    bbox: [f64; 4],
    speed: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneRecord {
    start: [f64; 2],
    end: [f64; 2],
    turn: String,
    road_type: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthRecord {
    identities: Vec<IdentityRecord>,
    futures: Vec<FutureRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityRecord {
    view: u32,
    track: u32,
    agent: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FutureRecord {
    agent: u32,
    positions: Vec<[f64; 2]>,
}

fn v2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

fn arr(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

impl From<&Scenario> for ScenarioRecord {
    fn from(s: &Scenario) -> Self {
        ScenarioRecord {
            version: FORMAT_VERSION,
            dt: s.dt,
            t_obs: s.t_obs,
            horizon: s.horizon,
            target: TrackRecord {
                view: s.target.view,
                track: s.target.track,
            },
            views: s
                .views
                .iter()
                .map(|v| ViewRecord {
                    view_id: v.view_id,
                    kind: v.kind.as_str().into(),
                    tracks: v
                        .tracks
                        .iter()
                        .map(|tr| AgentTrackRecord {
                            track_id: tr.track_id,
                            agent_type: tr.agent_type.as_str().into(),
                            frames: tr
                                .frames
                                .iter()
                                .enumerate()
                                .map(|(t, f)| {
                                    f.as_ref().map(|o| FrameRecord {
                                        t,
                                        p: arr(o.position),
                                        r: arr(o.heading),
                                        bbox: [o.bbox.length, o.bbox.width, o.bbox.heading.x, o.bbox.heading.y],
                                        speed: o.speed,
                                    })
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
            map: s
                .map
                .iter()
                .map(|l| LaneRecord {
                    start: arr(l.start),
                    end: arr(l.end),
                    turn: l.turn.as_str().into(),
                    road_type: l.road_type.as_str().into(),
                })
                .collect(),
            truth: s.truth.as_ref().map(|t| TruthRecord {
                identities: t
                    .identities
                    .iter()
                    .map(|(r, a)| IdentityRecord {
                        view: r.view,
                        track: r.track,
                        agent: *a,
                    })
                    .collect(),
                futures: t
                    .futures
                    .iter()
                    .map(|(a, f)| FutureRecord {
                        agent: *a,
                        positions: f.iter().map(|p| arr(*p)).collect(),
                    })
                    .collect(),
            }),
        }
    }
}

impl TryFrom<ScenarioRecord> for Scenario {
    type Error = String;

    fn try_from(r: ScenarioRecord) -> std::result::Result<Self, String> {
        if r.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", r.version));
        }
        let mut views = Vec::with_capacity(r.views.len());
        for v in r.views {
            let kind = ViewKind::parse(&v.kind).ok_or_else(|| format!("unknown view kind `{}`", v.kind))?;
            let mut tracks = Vec::with_capacity(v.tracks.len());
            for tr in v.tracks {
                let agent_type = AgentType::parse(&tr.agent_type)
                    .ok_or_else(|| format!("unknown agent type `{}`", tr.agent_type))?;
                let mut frames = Vec::with_capacity(tr.frames.len());
                for (t, f) in tr.frames.into_iter().enumerate() {
                    frames.push(match f {
                        None => None,
                        Some(f) if f.t != t => {
                            return Err(format!("track {} frame {t} carries t={}", tr.track_id, f.t))
                        }
                        Some(f) => Some(ObservedState {
                            position: v2(f.p),
                            heading: v2(f.r),
                            bbox: BBox {
                                length: f.bbox[0],
                                width: f.bbox[1],
                                heading: Vec2::new(f.bbox[2], f.bbox[3]),
                            },
                            speed: f.speed,
                        }),
                    });
                }
                tracks.push(AgentTrack {
                    track_id: tr.track_id,
                    agent_type,
                    frames,
                });
            }
            views.push(View {
                view_id: v.view_id,
                kind,
                tracks,
            });
        }
        let mut map = Vec::with_capacity(r.map.len());
        for l in r.map {
            map.push(LaneSegment {
                start: v2(l.start),
                end: v2(l.end),
                turn: Turn::parse(&l.turn).ok_or_else(|| format!("unknown turn `{}`", l.turn))?,
                road_type: RoadType::parse(&l.road_type)
                    .ok_or_else(|| format!("unknown road type `{}`", l.road_type))?,
            });
        }
        let truth = r.truth.map(|t| Truth {
            identities: t
                .identities
                .iter()
                .map(|i| (TrackRef::new(i.view, i.track), i.agent))
                .collect(),
            futures: t
                .futures
                .into_iter()
                .map(|f| (f.agent, f.positions.into_iter().map(v2).collect()))
                .collect::<BTreeMap<_, _>>(),
        });
        let s = Scenario {
            dt: r.dt,
            t_obs: r.t_obs,
            horizon: r.horizon,
            target: TrackRef::new(r.target.view, r.target.track),
            views,
            map,
            truth,
        };
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

pub fn to_line(s: &Scenario) -> String {
    serde_json::to_string(&ScenarioRecord::from(s)).expect("scenario records always serialize")
}

pub fn from_line(line: &str) -> std::result::Result<Scenario, String> {
    let rec: ScenarioRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Scenario::try_from(rec)
}

pub fn write_scenarios<'a>(path: &Path, scenarios: impl IntoIterator<Item = &'a Scenario>) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    for s in scenarios {
        writeln!(w, "{}", to_line(s)).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Streaming reader: holds one line at a time.
pub struct ScenarioReader<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl ScenarioReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(CliError::io(path))?;
        Ok(Self::new(path, BufReader::new(file)))
    }
}

impl<R: BufRead> ScenarioReader<R> {
    pub fn new(path: &Path, reader: R) -> Self {
        ScenarioReader {
            path: path.to_path_buf(),
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for ScenarioReader<R> {
    type Item = Result<Scenario>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(CliError::Io {
                        path: self.path.clone(),
                        source: e,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(from_line(&line).map_err(|message| CliError::Parse {
                path: self.path.clone(),
                line: self.line_no,
                message,
            }));
        }
    }
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    ScenarioReader::open(path)?.collect()
}
