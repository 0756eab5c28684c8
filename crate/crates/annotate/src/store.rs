//! Append-only per-task event logs and the task state they replay to.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Open,
    Submitted,
    Validated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Queue {
    Paraphrase,
    Validation,
}

impl Queue {
    pub fn serves(self, state: TaskState) -> bool {
        matches!(
            (self, state),
            (Queue::Paraphrase, TaskState::Open) | (Queue::Validation, TaskState::Submitted)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Leased {
        session: String,
        queue: Queue,
        until: DateTime<Utc>,
    },
    Submitted {
        attempt: u32,
        nl_text: String,
        ned: f64,
        diversity_bonus: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotator: Option<String>,
        at: DateTime<Utc>,
    },
    AiChecked {
        attempt: u32,
        first_attempt_correct: bool,
        this_attempt_correct: bool,
        adversarial_bonus: bool,
        checker: String,
        at: DateTime<Utc>,
    },
    Validated {
        attempt: u32,
        meaning_preserved: bool,
        naturalness: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        validator: Option<String>,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub attempt: u32,
    pub nl_text: String,
    pub ned: f64,
    pub diversity_bonus: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub at: DateTime<Utc>,
    /// Checker name and adversarial bonus, once the AI answer was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checked_by: Option<String>,
    #[serde(default)]
    pub adversarial_bonus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lease {
    pub session: String,
    pub queue: Queue,
    pub until: DateTime<Utc>,
}

/// A task folded from its events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskStatus {
    pub state: TaskState,
    pub submissions: Vec<Submission>,
    pub lease: Option<Lease>,
    /// Attempt accepted by validation.
    pub validated_attempt: Option<u32>,
    pub rejections: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransitionError {
    #[error("task is {0:?}; paraphrases are taken only before validation")]
    Closed(TaskState),
    #[error("task is {0:?}; only submitted tasks can be validated")]
    NotSubmitted(TaskState),
    #[error("attempt {0} does not exist")]
    UnknownAttempt(u32),
    #[error("attempt {got} out of order, expected {want}")]
    AttemptOrder { got: u32, want: u32 },
}

impl TaskStatus {
    fn new() -> Self {
        TaskStatus {
            state: TaskState::Open,
            submissions: Vec::new(),
            lease: None,
            validated_attempt: None,
            rejections: 0,
        }
    }

    /// Applies one event, refusing transitions the state machine forbids:
    /// open -> submitted -> validated, or submitted -> open on rejection.
    pub fn apply(&mut self, event: &Event) -> Result<(), TransitionError> {
        match event {
            Event::Leased { session, queue, until } => {
                self.lease = Some(Lease {
                    session: session.clone(),
                    queue: *queue,
                    until: *until,
                });
            }
            Event::Submitted {
                attempt,
                nl_text,
                ned,
                diversity_bonus,
                annotator,
                at,
            } => {
                if self.state == TaskState::Validated {
                    return Err(TransitionError::Closed(self.state));
                }
                let want = self.submissions.len() as u32 + 1;
                if *attempt != want {
                    return Err(TransitionError::AttemptOrder { got: *attempt, want });
                }
                self.submissions.push(Submission {
                    attempt: *attempt,
                    nl_text: nl_text.clone(),
                    ned: *ned,
                    diversity_bonus: *diversity_bonus,
                    annotator: annotator.clone(),
                    at: *at,
                    checked_by: None,
                    adversarial_bonus: false,
                });
                self.state = TaskState::Submitted;
                self.lease = None;
            }
            Event::AiChecked {
                attempt,
                adversarial_bonus,
                checker,
                ..
            } => {
                let s = self
                    .submissions
                    .get_mut((*attempt as usize).wrapping_sub(1))
                    .ok_or(TransitionError::UnknownAttempt(*attempt))?;
                s.checked_by = Some(checker.clone());
                s.adversarial_bonus = *adversarial_bonus;
            }
            Event::Validated {
                attempt,
                meaning_preserved,
                ..
            } => {
                if self.state != TaskState::Submitted {
                    return Err(TransitionError::NotSubmitted(self.state));
                }
                if *attempt as usize != self.submissions.len() {
                    return Err(TransitionError::UnknownAttempt(*attempt));
                }
                if *meaning_preserved {
                    self.state = TaskState::Validated;
                    self.validated_attempt = Some(*attempt);
                } else {
                    self.state = TaskState::Open;
                    self.rejections += 1;
                }
                self.lease = None;
            }
        }
        Ok(())
    }

    /// The lease, if it is still running at `now`.
    pub fn live_lease(&self, now: DateTime<Utc>) -> Option<&Lease> {
        self.lease.as_ref().filter(|l| l.until > now && l.queue.serves(self.state))
    }

    pub fn latest(&self) -> Option<&Submission> {
        self.submissions.last()
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt task store {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// Event logs, one `<hex qid>.jsonl` file per task, and their replayed state.
#[derive(Debug)]
pub struct TaskStore {
    dir: PathBuf,
    tasks: BTreeMap<String, TaskStatus>,
}

impl TaskStore {
    /// Replays every log under `dir`. Every logged qid must be in `qids`.
    pub fn open<'a>(dir: &Path, qids: impl IntoIterator<Item = &'a str>) -> Result<Self, StoreError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut tasks: BTreeMap<String, TaskStatus> = qids.into_iter().map(|q| (q.to_string(), TaskStatus::new())).collect();
        for entry in std::fs::read_dir(dir).map_err(io(dir))? {
            let path = entry.map_err(io(dir))?.path();
            let Some(stem) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".jsonl")) else {
                continue;
            };
            let corrupt = |msg: String| StoreError::Corrupt {
                path: path.clone(),
                msg,
            };
            let qid = hex::decode(stem)
                .ok()
                .and_then(|b| String::from_utf8(b).ok())
                .ok_or_else(|| corrupt("file name is not a hex-encoded qid".into()))?;
            let status = tasks
                .get_mut(&qid)
                .ok_or_else(|| corrupt(format!("task `{qid}` is not in the dataset")))?;
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let event: Event = serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
                status.apply(&event).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
            }
        }
        Ok(TaskStore {
            dir: dir.to_path_buf(),
            tasks,
        })
    }

    pub fn get(&self, qid: &str) -> Option<&TaskStatus> {
        self.tasks.get(qid)
    }

    /// Checks the event against the task, makes it durable, then applies it.
    pub fn append(&mut self, qid: &str, event: Event) -> Result<(), StoreError> {
        let status = self.tasks.get_mut(qid).expect("known task");
        let mut next = status.clone();
        next.apply(&event)?;
        let path = self.dir.join(format!("{}.jsonl", hex::encode(qid)));
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let line = serde_json::to_string(&event).expect("events serialize") + "\n";
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)?;
        *status = next;
        Ok(())
    }
}
