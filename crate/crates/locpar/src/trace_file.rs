//! Schedule traces as JSON lines, one decision per line:
//! `{"step":0,"task":"0","action":"fork","local":3}`. Joins also carry
//! the ivar.

use locpar_core::eval_par::{Action, Decision, TaskId};
use locpar_core::Name;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Bad { line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct Line {
    step: u64,
    task: String,
    action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ivar: Option<String>,
    #[serde(default)]
    local: u64,
}

pub fn to_json_lines(ds: &[Decision]) -> String {
    let mut out = String::new();
    for d in ds {
        let ivar = match &d.action {
            Action::Join { ivar, .. } => Some(ivar.as_str().to_owned()),
            _ => None,
        };
        let line = Line {
            step: d.step,
            task: d.action.task().to_string(),
            action: d.action.kind().to_owned(),
            ivar,
            local: d.local,
        };
        out.push_str(&serde_json::to_string(&line).expect("trace lines serialize"));
        out.push('\n');
    }
    out
}

pub fn from_json_lines(text: &str) -> Result<Vec<Decision>, TraceFileError> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let l: Line =
            serde_json::from_str(raw).map_err(|source| TraceFileError::Json { line, source })?;
        let task: TaskId = l.task.parse().map_err(|_| TraceFileError::Bad {
            line,
            reason: format!("bad task id `{}`", l.task),
        })?;
        let action = match (l.action.as_str(), l.ivar) {
            ("step", _) => Action::Step(task),
            ("fork", _) => Action::Fork(task),
            ("join", Some(x)) => Action::Join {
                consumer: task,
                ivar: Name::new(&x),
            },
            ("join", None) => {
                return Err(TraceFileError::Bad {
                    line,
                    reason: "join without an ivar".into(),
                })
            }
            (other, _) => {
                return Err(TraceFileError::Bad {
                    line,
                    reason: format!("unknown action `{other}`"),
                })
            }
        };
        out.push(Decision {
            step: l.step,
            action,
            local: l.local,
        });
    }
    Ok(out)
}
