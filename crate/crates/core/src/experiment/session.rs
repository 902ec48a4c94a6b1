use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::schedule::{build_schedule, ScheduledTrial};
use crate::error::{Error, Result};
use crate::inference::Choice;
use crate::synth::GridSpec;

/// A trial's measured interval durations may deviate by this fraction
/// from the nominal stimulus duration before it is flagged.
pub const TIMING_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub trial: ScheduledTrial,
    pub response: Choice,
    pub response_time_ms: f64,
    #[serde(default)]
    pub timing_flagged: bool,
    /// Measured on-screen durations of the two intervals, when reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presentation_ms: Option<[f64; 2]>,
}

impl TrialRecord {
    /// Whether the observer picked the speed-varied stimulus as faster.
    pub fn chose_speed_varied(&self) -> bool {
        self.response == self.trial.u_interval
    }
}

/// What the client reports for a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub response: Choice,
    pub response_time_ms: f64,
    #[serde(default)]
    pub timing_flagged: bool,
    #[serde(default)]
    pub presentation_ms: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    session_id: String,
    status: SessionStatus,
    seed: u64,
    config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
}

/// One observer session: header plus the append-only list of answered
/// trials. The schedule itself is regenerated from `(config, seed)`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    session_id: String,
    status: SessionStatus,
    seed: u64,
    config: ExperimentConfig,
    grid: Option<GridSpec>,
    schedule: Vec<ScheduledTrial>,
    trials: Vec<TrialRecord>,
}

impl SessionStore {
    pub fn new(session_id: impl Into<String>, config: ExperimentConfig, seed: u64, grid: Option<GridSpec>) -> Result<Self> {
        let schedule = build_schedule(&config, seed)?;
        if let Some(g) = &grid {
            g.validate()?;
        }
        Ok(Self {
            session_id: session_id.into(),
            status: SessionStatus::Active,
            seed,
            config,
            grid,
            schedule,
            trials: Vec::new(),
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }
    pub fn status(&self) -> SessionStatus {
        self.status
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }
    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }
    pub fn schedule(&self) -> &[ScheduledTrial] {
        &self.schedule
    }
    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }
    pub fn n_remaining(&self) -> usize {
        self.schedule.len() - self.trials.len()
    }

    pub fn next_trial(&self) -> Option<&ScheduledTrial> {
        match self.status {
            SessionStatus::Complete => None,
            SessionStatus::Active => self.schedule.get(self.trials.len()),
        }
    }

    pub fn trial(&self, trial_id: usize) -> Result<&ScheduledTrial> {
        self.schedule
            .get(trial_id)
            .ok_or_else(|| Error::NotFound(format!("trial {trial_id} in session {}", self.session_id)))
    }

    /// Records the response to `trial_id`, which must be the next pending
    /// trial. Answering twice or answering a completed session conflicts.
    pub fn record(&mut self, trial_id: usize, response: Response) -> Result<&TrialRecord> {
        let trial = *self.trial(trial_id)?;
        if self.status == SessionStatus::Complete {
            return Err(Error::Conflict(format!("session {} is complete", self.session_id)));
        }
        if trial_id < self.trials.len() {
            return Err(Error::Conflict(format!("trial {trial_id} already has a response")));
        }
        if trial_id > self.trials.len() {
            return Err(Error::Conflict(format!(
                "trial {trial_id} is not the next trial ({})",
                self.trials.len()
            )));
        }
        if !(response.response_time_ms >= 0.0 && response.response_time_ms.is_finite()) {
            return Err(Error::Domain(format!("invalid response time {}", response.response_time_ms)));
        }
        let nominal = self.config.stimulus_ms;
        let off = response
            .presentation_ms
            .is_some_and(|d| d.iter().any(|&x| !((x - nominal).abs() <= TIMING_TOLERANCE * nominal)));
        self.trials.push(TrialRecord {
            trial,
            response: response.response,
            response_time_ms: response.response_time_ms,
            timing_flagged: response.timing_flagged || off,
            presentation_ms: response.presentation_ms,
        });
        if self.trials.len() == self.schedule.len() {
            self.status = SessionStatus::Complete;
        }
        Ok(self.trials.last().unwrap())
    }

    fn header(&self) -> Header {
        Header {
            kind: "header".into(),
            session_id: self.session_id.clone(),
            status: self.status,
            seed: self.seed,
            config: self.config.clone(),
            grid: self.grid,
        }
    }

    /// JSON Lines: a header, then one line per answered trial.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header())?;
        out.push('\n');
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty session file".into(),
        })?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::Parse {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
        if header.kind != "header" {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header line, found kind {:?}", header.kind),
            });
        }
        let mut store = Self::new(header.session_id, header.config, header.seed, header.grid).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        for (i, line) in lines {
            let lineno = i + 1;
            let last = match store.trials.last() {
                Some(t) => format!("last valid trial {}", t.trial.trial_id),
                None => "no valid trials".to_string(),
            };
            let rec: TrialRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: lineno,
                message: format!("{e} ({last})"),
            })?;
            let expected = store.trial(rec.trial.trial_id).ok().copied();
            if expected != Some(rec.trial) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("trial {} does not match the schedule ({last})", rec.trial.trial_id),
                });
            }
            if rec.trial.trial_id != store.trials.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("trial {} out of order ({last})", rec.trial.trial_id),
                });
            }
            store.trials.push(rec);
        }
        store.status = if store.trials.len() == store.schedule.len() {
            SessionStatus::Complete
        } else {
            SessionStatus::Active
        };
        if header.status == SessionStatus::Complete && store.status != SessionStatus::Complete {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header marks the session complete but only {} of {} trials are present",
                    store.trials.len(),
                    store.schedule.len()
                ),
            });
        }
        Ok(store)
    }

    /// Writes atomically via a temporary sibling and rename.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_jsonl()?.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answer(choice: Choice) -> Response {
        Response {
            response: choice,
            response_time_ms: 420.0,
            timing_flagged: false,
            presentation_ms: None,
        }
    }

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            delta_u: vec![-1.0, 1.0],
            delta_z: vec![0.0, 0.5],
            reps_per_cell: 2,
            ..Default::default()
        }
    }

    #[test]
    fn lifecycle() {
        let mut s = SessionStore::new("s1", small(), 3, None).unwrap();
        assert_eq!(s.n_remaining(), 8);
        for i in 0..8 {
            assert_eq!(s.next_trial().unwrap().trial_id, i);
            s.record(i, answer(Choice::First)).unwrap();
        }
        assert_eq!(s.status(), SessionStatus::Complete);
        assert!(s.next_trial().is_none());
        assert!(matches!(s.record(7, answer(Choice::First)), Err(Error::Conflict(_))));
    }

    #[test]
    fn double_and_out_of_order_responses_conflict() {
        let mut s = SessionStore::new("s", small(), 3, None).unwrap();
        s.record(0, answer(Choice::First)).unwrap();
        assert!(matches!(s.record(0, answer(Choice::Second)), Err(Error::Conflict(_))));
        assert!(matches!(s.record(5, answer(Choice::Second)), Err(Error::Conflict(_))));
        assert!(matches!(s.record(99, answer(Choice::Second)), Err(Error::NotFound(_))));
        assert_eq!(s.trials().len(), 1);
        assert_eq!(s.trials()[0].response, Choice::First);
    }

    #[test]
    fn timing_flag() {
        let mut s = SessionStore::new("s", small(), 3, None).unwrap();
        let mut r = answer(Choice::First);
        r.presentation_ms = Some([250.0, 240.0]);
        assert!(!s.record(0, r).unwrap().timing_flagged);
        r.presentation_ms = Some([250.0, 310.0]);
        assert!(s.record(1, r).unwrap().timing_flagged);
        r.presentation_ms = None;
        r.timing_flagged = true;
        assert!(s.record(2, r).unwrap().timing_flagged);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut s = SessionStore::new("abc", small(), 11, Some(GridSpec::new(32, 32, 8.0, 50.0))).unwrap();
        for i in 0..3 {
            s.record(i, answer(if i % 2 == 0 { Choice::First } else { Choice::Second })).unwrap();
        }
        let text = s.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 4);
        let back = SessionStore::from_jsonl(&text).unwrap();
        assert_eq!(back.trials(), s.trials());
        assert_eq!(back.schedule(), s.schedule());
        assert_eq!(back.status(), SessionStatus::Active);
        assert_eq!(back.grid(), s.grid());
    }

    #[test]
    fn truncated_line_reports_position() {
        let mut s = SessionStore::new("abc", small(), 11, None).unwrap();
        for i in 0..3 {
            s.record(i, answer(Choice::First)).unwrap();
        }
        let text = s.to_jsonl().unwrap();
        let cut = &text[..text.len() - 20];
        match SessionStore::from_jsonl(cut) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("last valid trial 1"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn tampered_trial_rejected() {
        let mut s = SessionStore::new("abc", small(), 11, None).unwrap();
        s.record(0, answer(Choice::First)).unwrap();
        let text = s.to_jsonl().unwrap().replace("\"du\":", "\"du\":100.0,\"x\":");
        assert!(SessionStore::from_jsonl(&text).is_err());
    }

    #[test]
    fn persist_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut s = SessionStore::new("p", small(), 1, None).unwrap();
        s.record(0, answer(Choice::Second)).unwrap();
        s.persist(&path).unwrap();
        let back = SessionStore::load(&path).unwrap();
        assert_eq!(back.trials(), s.trials());
        assert!(!path.with_extension("jsonl.tmp").exists());
    }
}
