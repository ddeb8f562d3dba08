//! Click-line game: locate the planted alignment in a positive stimulus.
//!
//! Sessions play sequences of ten stimuli. Each answer is scored by its
//! distance to the planted segment, and after every sequence the difficulty
//! tier moves along a fixed ladder of (length, jitter) pairs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use gestalt_core::geometry::{point_segment_distance, Domain, Point};
use gestalt_core::stimulus::{generate, StimulusRecord, StimulusSpec};
use serde::{Deserialize, Serialize};

pub const SEQUENCE_LEN: usize = 10;
pub const HARDER_AT: f64 = 70.0;
pub const EASIER_AT: f64 = 40.0;

/// Difficulty ladder, easiest first: (planted elements, jitter).
pub const TIERS: [(usize, f64); 8] = [
    (10, 0.0),
    (9, PI / 5.0),
    (8, PI / 4.0),
    (7, PI / 3.0),
    (6, PI / 2.0),
    (5, 2.0 * PI / 3.0),
    (4, 3.0 * PI / 4.0),
    (3, 4.0 * PI / 5.0),
];

/// Score in `[0, 100]`, linear in the distance and zero from `d_max` on.
pub fn score(distance: f64, d_max: f64) -> f64 {
    100.0 * (1.0 - distance / d_max).max(0.0)
}

/// Tier after a completed sequence with the given mean score.
pub fn adapt_tier(tier: usize, mean_score: f64) -> usize {
    if mean_score >= HARDER_AT {
        (tier + 1).min(TIERS.len() - 1)
    } else if mean_score <= EASIER_AT {
        tier.saturating_sub(1)
    } else {
        tier
    }
}

#[derive(Debug, Clone)]
pub struct ClicklineConfig {
    pub n: usize,
    pub domain: Domain,
}

impl Default for ClicklineConfig {
    fn default() -> Self {
        ClicklineConfig {
            n: 200,
            domain: Domain::new(496.0, 496.0),
        }
    }
}

impl ClicklineConfig {
    pub fn d_max(&self) -> f64 {
        self.domain.diagonal() / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub stimulus_id: String,
    pub sequence: usize,
    pub tier: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub click: [f64; 2],
    pub distance: f64,
    pub score: f64,
}

#[derive(Debug)]
pub struct Session {
    pub tier: usize,
    pub sequence: usize,
    /// Scores of the sequence in progress.
    pub current: Vec<f64>,
    pub history: Vec<TrialRecord>,
    pending: Option<StimulusRecord>,
}

impl Session {
    fn new() -> Self {
        Session {
            tier: 0,
            sequence: 0,
            current: Vec::new(),
            history: Vec::new(),
            pending: None,
        }
    }
}

/// Stimulus as shown to the player: positions and orientations only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServedStimulus {
    pub session: String,
    pub stimulus_id: String,
    pub sequence: usize,
    /// Position within the sequence, from 0.
    pub index: usize,
    pub tier: usize,
    /// The first sequence is a training run on the easiest tier.
    pub training: bool,
    pub domain: gestalt_core::stimulus::DomainSpec,
    pub elements: Vec<gestalt_core::gabor::GaborElement>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerResult {
    pub stimulus_id: String,
    pub distance: f64,
    pub score: f64,
    pub d_max: f64,
    /// Planted segment endpoints, revealed only now.
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub sequence: usize,
    pub index: usize,
    pub sequence_complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_mean: Option<f64>,
    /// Tier for the next stimulus.
    pub tier: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClicklineError {
    #[error("unknown session")]
    UnknownSession,
    #[error("no stimulus awaiting an answer")]
    NotServed,
    #[error("stimulus_id: {0} is not the stimulus awaiting an answer")]
    WrongStimulus(String),
    #[error("click: outside the stimulus domain")]
    OutsideDomain,
    #[error("click: coordinates must be finite")]
    NonFinite,
    #[error("stimulus generation failed: {0}")]
    Generation(String),
}

#[derive(Default)]
pub struct Sessions {
    config: ClicklineConfig,
    map: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl Sessions {
    pub fn new(config: ClicklineConfig) -> Self {
        Sessions {
            config,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ClicklineConfig {
        &self.config
    }

    fn lookup(&self, token: &str) -> Option<Arc<Mutex<Session>>> {
        self.map.lock().expect("sessions lock").get(token).cloned()
    }

    fn create(&self) -> (String, Arc<Mutex<Session>>) {
        let token = format!("{:032x}", rand::random::<u128>());
        let session = Arc::new(Mutex::new(Session::new()));
        self.map
            .lock()
            .expect("sessions lock")
            .insert(token.clone(), session.clone());
        (token, session)
    }

    /// Serve the stimulus awaiting an answer, generating one if needed. A
    /// missing token starts a new session.
    pub fn next(&self, token: Option<&str>) -> Result<ServedStimulus, ClicklineError> {
        let (token, session) = match token {
            Some(t) => (
                t.to_string(),
                self.lookup(t).ok_or(ClicklineError::UnknownSession)?,
            ),
            None => self.create(),
        };
        let mut s = session.lock().expect("session lock");
        if s.pending.is_none() {
            let (length, jitter) = TIERS[s.tier];
            let spec = StimulusSpec::positive(self.config.n, self.config.domain, length, jitter, rand::random());
            let record = generate(&spec).map_err(|e| ClicklineError::Generation(e.to_string()))?;
            s.pending = Some(record);
        }
        let record = s.pending.as_ref().expect("pending stimulus");
        Ok(ServedStimulus {
            session: token,
            stimulus_id: record.id.clone(),
            sequence: s.sequence,
            index: s.current.len(),
            tier: s.tier,
            training: s.sequence == 0,
            domain: record.field.domain().into(),
            elements: record.field.elements().to_vec(),
        })
    }

    pub fn answer(
        &self,
        token: &str,
        stimulus_id: &str,
        click: Point,
    ) -> Result<AnswerResult, ClicklineError> {
        let session = self.lookup(token).ok_or(ClicklineError::UnknownSession)?;
        let mut s = session.lock().expect("session lock");
        let record = s.pending.as_ref().ok_or(ClicklineError::NotServed)?;
        if record.id != stimulus_id {
            return Err(ClicklineError::WrongStimulus(stimulus_id.to_string()));
        }
        if !(click.x.is_finite() && click.y.is_finite()) {
            return Err(ClicklineError::NonFinite);
        }
        if !record.field.domain().contains(click) {
            return Err(ClicklineError::OutsideDomain);
        }
        let truth = record.truth.clone().expect("positive stimulus");
        let (a, b) = truth.endpoints();
        let d_max = self.config.d_max();
        let distance = point_segment_distance(click, a, b);
        let sc = score(distance, d_max);
        let trial = TrialRecord {
            stimulus_id: record.id.clone(),
            sequence: s.sequence,
            tier: s.tier,
            a: truth.a,
            b: truth.b,
            click: [click.x, click.y],
            distance,
            score: sc,
        };
        s.pending = None;
        s.history.push(trial);
        s.current.push(sc);
        let index = s.current.len() - 1;
        let sequence = s.sequence;

        let (mut scores, mut mean) = (None, None);
        let complete = s.current.len() == SEQUENCE_LEN;
        if complete {
            let done = std::mem::take(&mut s.current);
            let m = done.iter().sum::<f64>() / done.len() as f64;
            s.tier = adapt_tier(s.tier, m);
            s.sequence += 1;
            scores = Some(done);
            mean = Some(m);
        }
        Ok(AnswerResult {
            stimulus_id: stimulus_id.to_string(),
            distance,
            score: sc,
            d_max,
            a: truth.a,
            b: truth.b,
            sequence,
            index,
            sequence_complete: complete,
            sequence_scores: scores,
            sequence_mean: mean,
            tier: s.tier,
        })
    }
}
