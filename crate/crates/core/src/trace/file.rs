//! Line-delimited trajectory files.
//!
//! Each trajectory is a header line followed by one line per step:
//!
//! ```text
//! {"trajectory_id":"t0","environment_tag":"shop","outcome":"failure","length":2}
//! {"step_index":0,"metadata":{},"observation":"...","action":"...","tool":"","arguments":"","result":"","status":"ok"}
//! {"step_index":1,...}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Outcome, StepView, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    trajectory_id: String,
    environment_tag: String,
    outcome: Outcome,
    length: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Header(Header),
    Step(StepView),
}

pub fn write_trajectories_to<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    let ser = |e| Error::json("serialize trajectory", e);
    let io = |e| Error::io("<trajectory stream>", e);
    for t in trajectories {
        t.validate()?;
        let header = Header {
            trajectory_id: t.trajectory_id.clone(),
            environment_tag: t.environment_tag.clone(),
            outcome: t.outcome,
            length: t.steps.len(),
        };
        serde_json::to_writer(&mut out, &header).map_err(ser)?;
        out.write_all(b"\n").map_err(io)?;
        for step in &t.steps {
            serde_json::to_writer(&mut out, step).map_err(ser)?;
            out.write_all(b"\n").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectories_to(BufWriter::new(file), trajectories)
}

pub fn read_trajectories_from<R: Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::new();
    let mut expected = 0usize;
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<trajectory stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("trajectory line {}", lineno + 1), e))?;
        match parsed {
            Line::Header(h) => {
                if let Some(prev) = out.last() {
                    if prev.steps.len() != expected {
                        return Err(truncated(prev, expected));
                    }
                }
                expected = h.length;
                out.push(Trajectory {
                    trajectory_id: h.trajectory_id,
                    environment_tag: h.environment_tag,
                    steps: Vec::with_capacity(h.length),
                    outcome: h.outcome,
                });
            }
            Line::Step(step) => {
                let current = out.last_mut().ok_or_else(|| {
                    Error::Validation(format!("line {}: step before any header", lineno + 1))
                })?;
                if current.steps.len() == expected {
                    return Err(Error::Validation(format!(
                        "line {}: trajectory `{}` declares {expected} steps but has more",
                        lineno + 1,
                        current.trajectory_id
                    )));
                }
                current.steps.push(step);
            }
        }
    }
    if let Some(last) = out.last() {
        if last.steps.len() != expected {
            return Err(truncated(last, expected));
        }
    }
    for t in &out {
        t.validate()?;
    }
    Ok(out)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories_from(file)
}

fn truncated(t: &Trajectory, expected: usize) -> Error {
    Error::Validation(format!(
        "trajectory `{}` declares {expected} steps but has {}",
        t.trajectory_id,
        t.steps.len()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Status;

    fn sample() -> Vec<Trajectory> {
        let mut step = StepView {
            action: "click".into(),
            status: Status::Ok,
            ..Default::default()
        };
        step.metadata.insert("component".into(), "browser".into());
        vec![
            Trajectory::new("a", "shop", vec![step.clone(), step.clone()], Outcome::Failure)
                .unwrap(),
            Trajectory::new("b", "shop", vec![step], Outcome::Success).unwrap(),
        ]
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_trajectories_to(&mut buf, &sample()).unwrap();
        let back = read_trajectories_from(&buf[..]).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn step_lines_use_exact_field_names() {
        let mut buf = Vec::new();
        write_trajectories_to(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let step_line = text.lines().nth(1).unwrap();
        let v: serde_json::Value = serde_json::from_str(step_line).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        let mut expected = vec![
            "step_index",
            "metadata",
            "observation",
            "action",
            "tool",
            "arguments",
            "result",
            "status",
        ];
        expected.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn extra_field_rejected() {
        let text = concat!(
            r#"{"trajectory_id":"a","environment_tag":"e","outcome":"success","length":1}"#,
            "\n",
            r#"{"step_index":0,"metadata":{},"observation":"","action":"","tool":"","arguments":"","result":"","status":"ok","reward":1}"#,
            "\n"
        );
        assert!(read_trajectories_from(text.as_bytes()).is_err());
    }

    #[test]
    fn missing_steps_rejected() {
        let text = concat!(
            r#"{"trajectory_id":"a","environment_tag":"e","outcome":"success","length":2}"#,
            "\n",
            r#"{"step_index":0,"metadata":{},"observation":"","action":"","tool":"","arguments":"","result":"","status":"ok"}"#,
            "\n"
        );
        assert!(read_trajectories_from(text.as_bytes()).is_err());
    }
}
