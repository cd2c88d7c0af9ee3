//! Stitch log: the auditable record of every stitching event and
//! iteration, with a line-delimited text serialization.
//!
//! Schema (one record per line, `key=value` fields):
//!
//! ```text
//! # stitchlog v1
//! iter k=<n> replaced=<n> events=<n> truncated=<n> neg_margin=<n> \
//!     mean_before=<f> mean_after=<f>
//! event k=<n> traj=<id> new_step=<n> src=<traj>:<step> \
//!     target=<traj>:<step> action_norm=<f> reward=<f> src_state=<c,c,...>
//! ```

use crate::error::{Error, Result};

/// One accepted stitching event. `src` is the dataset position of the
/// default transition the walk replaced; `target` addresses the new next
/// state occurrence; `new_step` is the event's index in the rebuilt
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchEvent {
    pub traj: u64,
    pub new_step: usize,
    pub src: (u64, usize),
    pub src_state: Vec<f64>,
    pub target: (u64, usize),
    pub action_norm: f64,
    pub predicted_reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub replaced: usize,
    pub stitch_events: usize,
    pub truncated: usize,
    pub negative_margin_replacements: usize,
    pub mean_return_before: f64,
    pub mean_return_after: f64,
    pub events: Vec<StitchEvent>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StitchLog {
    pub iterations: Vec<IterationLog>,
}

impl StitchLog {
    pub fn total_replacements(&self) -> usize {
        self.iterations.iter().map(|i| i.replaced).sum()
    }

    pub fn total_events(&self) -> usize {
        self.iterations.iter().map(|i| i.stitch_events).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# stitchlog v1\n");
        for it in &self.iterations {
            out.push_str(&format!(
                "iter k={} replaced={} events={} truncated={} neg_margin={} mean_before={} mean_after={}\n",
                it.iteration,
                it.replaced,
                it.stitch_events,
                it.truncated,
                it.negative_margin_replacements,
                it.mean_return_before,
                it.mean_return_after,
            ));
            for e in &it.events {
                let state = e
                    .src_state
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                out.push_str(&format!(
                    "event k={} traj={} new_step={} src={}:{} target={}:{} action_norm={} reward={} src_state={}\n",
                    it.iteration,
                    e.traj,
                    e.new_step,
                    e.src.0,
                    e.src.1,
                    e.target.0,
                    e.target.1,
                    e.action_norm,
                    e.predicted_reward,
                    state,
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<StitchLog> {
        let mut log = StitchLog::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let kind = fields.next().unwrap_or_default();
            let mut map = std::collections::HashMap::new();
            for f in fields {
                let (k, v) = f.split_once('=').ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected key=value, got `{f}`"),
                })?;
                map.insert(k, v);
            }
            let get = |map: &std::collections::HashMap<&str, &str>, k: &str| -> Result<String> {
                map.get(k).map(|v| v.to_string()).ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("missing field `{k}`"),
                })
            };
            let num = |map: &std::collections::HashMap<&str, &str>, k: &str| -> Result<f64> {
                get(map, k)?.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("malformed number in `{k}`"),
                })
            };
            let pair = |map: &std::collections::HashMap<&str, &str>,
                        k: &str|
             -> Result<(u64, usize)> {
                let v = get(map, k)?;
                let (a, b) = v.split_once(':').ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected traj:step in `{k}`"),
                })?;
                Ok((
                    a.parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad trajectory id in `{k}`"),
                    })?,
                    b.parse().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad step in `{k}`"),
                    })?,
                ))
            };
            match kind {
                "iter" => log.iterations.push(IterationLog {
                    iteration: num(&map, "k")? as usize,
                    replaced: num(&map, "replaced")? as usize,
                    stitch_events: num(&map, "events")? as usize,
                    truncated: num(&map, "truncated")? as usize,
                    negative_margin_replacements: num(&map, "neg_margin")? as usize,
                    mean_return_before: num(&map, "mean_before")?,
                    mean_return_after: num(&map, "mean_after")?,
                    events: Vec::new(),
                }),
                "event" => {
                    let it = log.iterations.last_mut().ok_or_else(|| Error::Parse {
                        line: lineno + 1,
                        msg: "event before any iter record".into(),
                    })?;
                    let state = get(&map, "src_state")?
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse().map_err(|_| Error::Parse {
                                line: lineno + 1,
                                msg: "malformed src_state".into(),
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    it.events.push(StitchEvent {
                        traj: num(&map, "traj")? as u64,
                        new_step: num(&map, "new_step")? as usize,
                        src: pair(&map, "src")?,
                        src_state: state,
                        target: pair(&map, "target")?,
                        action_norm: num(&map, "action_norm")?,
                        predicted_reward: num(&map, "reward")?,
                    });
                }
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("unknown record kind `{other}`"),
                    })
                }
            }
        }
        Ok(log)
    }
}
