//! Structured text format for MDPs.
//!
//! A document carries `states`, `actions`, `horizon`, `gamma_e`, `start`,
//! `transitions` (rows of (s, a, s_next, prob)) and `rewards` (rows of
//! (s, a, s_next, t-or-"any", value)). Unlisted transitions have
//! probability 0 and unlisted rewards are 0. A state with no outgoing rows
//! at all is terminal: it absorbs with zero reward.

use serde::Deserialize;
use thiserror::Error;

use crate::mdp::{Mdp, MdpError, RewardTableBuilder};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("malformed MDP document: {0}")]
    Parse(String),

    #[error("reward row {row}: time must be an integer or \"any\", got {got:?}")]
    InvalidTime { row: usize, got: String },

    #[error("reward row {row}: timestep {t} outside horizon {horizon}")]
    TimeOutOfRange { row: usize, t: usize, horizon: usize },

    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Reward row timestamp: a concrete step or every step.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    At(usize),
    Keyword(String),
}

/// Parsed MDP document.
#[derive(Debug, Clone, Deserialize)]
pub struct MdpSpec {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub gamma_e: f64,
    pub start: Vec<f64>,
    #[serde(default)]
    pub transitions: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    pub rewards: Vec<(usize, usize, usize, TimeSpec, f64)>,
}

pub fn parse_mdp_spec(text: &str) -> Result<MdpSpec, SpecError> {
    toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))
}

/// Realize a parsed document as a validated MDP.
pub fn build_mdp(spec: &MdpSpec) -> Result<Mdp, SpecError> {
    let mut has_row = vec![false; spec.states];
    for &(s, _, _, _) in &spec.transitions {
        if s < spec.states {
            has_row[s] = true;
        }
    }
    let terminal: Vec<bool> = has_row.iter().map(|&h| !h).collect();

    let mut rb = RewardTableBuilder::new(spec.states, spec.actions);
    for (row, &(s, a, s_next, ref time, value)) in spec.rewards.iter().enumerate() {
        match time {
            TimeSpec::At(t) => {
                if *t >= spec.horizon {
                    return Err(SpecError::TimeOutOfRange { row, t: *t, horizon: spec.horizon });
                }
                rb.set_at(s, a, s_next, *t, value);
            }
            TimeSpec::Keyword(word) if word == "any" => {
                rb.set(s, a, s_next, value);
            }
            TimeSpec::Keyword(word) => {
                return Err(SpecError::InvalidTime { row, got: word.clone() });
            }
        }
    }

    Ok(Mdp::new(
        spec.states,
        spec.actions,
        spec.start.clone(),
        &spec.transitions,
        rb.build(),
        spec.gamma_e,
        spec.horizon,
        terminal,
    )?)
}

/// Parse and build in one step.
pub fn mdp_from_str(text: &str) -> Result<Mdp, SpecError> {
    build_mdp(&parse_mdp_spec(text)?)
}
