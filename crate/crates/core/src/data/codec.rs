//! Dataset file codecs.
//!
//! Two forms are supported:
//!
//! - **Text** (portable, debuggable): first line `TSDS v1 dS=<int> dA=<int>`,
//!   then one line per transition,
//!   `<traj_id> <step> <s…> <a…> <r> <s'…> <term{0|1}>`, fields
//!   space-separated, reals printed in shortest round-trip decimal.
//! - **Binary** (canonical, bit-exact): magic `TSDS`, version `u32 = 1`,
//!   `dS u32`, `dA u32`, trajectory count `u64`, then per trajectory:
//!   `id u64`, `length u64`, then each transition as `f64` little-endian
//!   in field order (state, action, reward, next_state) followed by the
//!   terminal flag as `u8`.
//!
//! The binary form is canonical for round-trip guarantees; the text form is
//! value-exact for `f64` thanks to shortest round-trip decimal printing.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::{Dataset, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"TSDS";
const VERSION: u32 = 1;

/// Serializes in the text form.
pub fn to_text<S: Scalar>(ds: &Dataset<S>) -> String {
    let (d_s, d_a) = ds.dims();
    let mut out = String::new();
    let _ = writeln!(out, "TSDS v1 dS={d_s} dA={d_a}");
    for traj in ds.trajectories() {
        for (step, t) in traj.steps.iter().enumerate() {
            let _ = write!(out, "{} {}", traj.id, step);
            for v in &t.state {
                let _ = write!(out, " {}", v.into_f64());
            }
            for v in &t.action {
                let _ = write!(out, " {}", v.into_f64());
            }
            let _ = write!(out, " {}", t.reward.into_f64());
            for v in &t.next_state {
                let _ = write!(out, " {}", v.into_f64());
            }
            let _ = writeln!(out, " {}", if t.terminal { 1 } else { 0 });
        }
    }
    out
}

/// Parses the text form.
pub fn from_text<S: Scalar>(text: &str) -> Result<Dataset<S>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
    let (d_s, d_a) = parse_header(header)?;

    let mut trajectories: Vec<Trajectory<S>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let traj_id: u64 = next_field(&mut fields, lineno, "traj_id")?;
        let step: usize = next_field(&mut fields, lineno, "step")?;
        let state = parse_reals::<S>(&mut fields, d_s, lineno, "state")?;
        let action = parse_reals::<S>(&mut fields, d_a, lineno, "action")?;
        let reward: f64 = next_field(&mut fields, lineno, "reward")?;
        let next_state = parse_reals::<S>(&mut fields, d_s, lineno, "next_state")?;
        let term_raw: u8 = next_field(&mut fields, lineno, "terminal")?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: "trailing fields".into(),
            });
        }
        let terminal = match term_raw {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("terminal flag must be 0 or 1, got {other}"),
                })
            }
        };
        let transition = Transition {
            state,
            action,
            reward: S::of_f64(reward),
            next_state,
            terminal,
        };
        match trajectories.last_mut() {
            Some(last) if last.id == traj_id => {
                if step != last.steps.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!(
                            "step index {step} out of order (expected {})",
                            last.steps.len()
                        ),
                    });
                }
                last.steps.push(transition);
            }
            _ => {
                if step != 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("trajectory {traj_id} must start at step 0, got {step}"),
                    });
                }
                trajectories.push(Trajectory {
                    id: traj_id,
                    steps: vec![transition],
                });
            }
        }
    }
    Ok(Dataset::new((d_s, d_a), trajectories, Default::default()))
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = header.split_ascii_whitespace().collect();
    if parts.len() != 4 || parts[0] != "TSDS" || parts[1] != "v1" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad header `{header}` (expected `TSDS v1 dS=<int> dA=<int>`)"),
        });
    }
    let d_s = parse_kv(parts[2], "dS")?;
    let d_a = parse_kv(parts[3], "dA")?;
    Ok((d_s, d_a))
}

fn parse_kv(field: &str, key: &str) -> Result<usize> {
    field
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("expected `{key}=<int>`, got `{field}`"),
        })
}

fn next_field<T: std::str::FromStr>(
    fields: &mut std::str::SplitAsciiWhitespace<'_>,
    line: usize,
    name: &str,
) -> Result<T> {
    fields
        .next()
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("missing field `{name}`"),
        })?
        .parse()
        .map_err(|_| Error::Parse {
            line,
            msg: format!("malformed field `{name}`"),
        })
}

fn parse_reals<S: Scalar>(
    fields: &mut std::str::SplitAsciiWhitespace<'_>,
    n: usize,
    line: usize,
    name: &str,
) -> Result<Vec<S>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v: f64 = next_field(fields, line, name)?;
        out.push(S::of_f64(v));
    }
    Ok(out)
}

/// Serializes in the binary form.
pub fn to_binary<S: Scalar>(ds: &Dataset<S>) -> Vec<u8> {
    let (d_s, d_a) = ds.dims();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(d_s as u32).to_le_bytes());
    buf.extend_from_slice(&(d_a as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.trajectories().len() as u64).to_le_bytes());
    for traj in ds.trajectories() {
        buf.extend_from_slice(&traj.id.to_le_bytes());
        buf.extend_from_slice(&(traj.steps.len() as u64).to_le_bytes());
        for t in &traj.steps {
            for v in &t.state {
                buf.extend_from_slice(&v.into_f64().to_le_bytes());
            }
            for v in &t.action {
                buf.extend_from_slice(&v.into_f64().to_le_bytes());
            }
            buf.extend_from_slice(&t.reward.into_f64().to_le_bytes());
            for v in &t.next_state {
                buf.extend_from_slice(&v.into_f64().to_le_bytes());
            }
            buf.push(u8::from(t.terminal));
        }
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                line: self.pos,
                msg: format!("unexpected end of binary data reading {what}"),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses the binary form.
pub fn from_binary<S: Scalar>(buf: &[u8]) -> Result<Dataset<S>> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Schema(format!("bad magic {magic:?}")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Schema(format!("unsupported version {version}")));
    }
    let d_s = cur.u32("dS")? as usize;
    let d_a = cur.u32("dA")? as usize;
    let n_traj = cur.u64("trajectory count")? as usize;
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let id = cur.u64("trajectory id")?;
        let len = cur.u64("trajectory length")? as usize;
        let mut steps = Vec::with_capacity(len);
        fn read_vec<S: Scalar>(cur: &mut Cursor<'_>, n: usize, what: &str) -> Result<Vec<S>> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(S::of_f64(cur.f64(what)?));
            }
            Ok(v)
        }
        for _ in 0..len {
            let state = read_vec(&mut cur, d_s, "state")?;
            let action = read_vec(&mut cur, d_a, "action")?;
            let reward = S::of_f64(cur.f64("reward")?);
            let next_state = read_vec(&mut cur, d_s, "next_state")?;
            let terminal = match cur.u8("terminal")? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::Schema(format!("terminal byte must be 0/1, got {other}")))
                }
            };
            steps.push(Transition {
                state,
                action,
                reward,
                next_state,
                terminal,
            });
        }
        trajectories.push(Trajectory { id, steps });
    }
    if cur.pos != buf.len() {
        return Err(Error::Schema(format!(
            "{} trailing bytes after dataset",
            buf.len() - cur.pos
        )));
    }
    Ok(Dataset::new((d_s, d_a), trajectories, Default::default()))
}

/// Saves the binary form to a file.
pub fn save_binary<S: Scalar>(ds: &Dataset<S>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&to_binary(ds))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads the binary form from a file.
pub fn load_binary<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    from_binary(&buf)
}

/// Saves the text form to a file.
pub fn save_text<S: Scalar>(ds: &Dataset<S>, path: &Path) -> Result<()> {
    fs::write(path, to_text(ds)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads the text form from a file.
pub fn load_text<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_text(&text)
}
