//! History-dependent intrinsic-motivation streams: the raw bonus signal
//! that the shaping transforms rewrite.
//!
//! Streams are stateful across an entire run (never reset at episode
//! boundaries) and deterministic given the visitation history, so the
//! certification oracle can replay them exactly as state-transition
//! functions.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-state visit counters backing the count-based bonus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisitCounts {
    counts: Vec<u32>,
}

impl VisitCounts {
    pub fn new(num_states: usize) -> Self {
        Self { counts: vec![0; num_states] }
    }

    pub fn count(&self, s: usize) -> u32 {
        self.counts[s]
    }
}

/// Count bonus beta / sqrt(count(s) + 1); increments count(s) afterwards.
pub fn count_bonus(counts: &mut VisitCounts, s: usize, beta: f64) -> f64 {
    debug_assert!(beta >= 0.0);
    let bonus = beta / ((counts.counts[s] as f64) + 1.0).sqrt();
    counts.counts[s] += 1;
    bonus
}

/// Tabular prediction-error novelty: a fixed random target per state and a
/// predictor that decays toward it with each visit.
#[derive(Debug, Clone)]
pub struct NoveltyModel {
    target: Arc<Vec<f64>>,
    predictor: Vec<f64>,
    lr: f64,
}

impl NoveltyModel {
    /// Targets drawn uniformly from [0, 1), immutable after seeding.
    pub fn seeded(num_states: usize, seed: u64, lr: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target: Vec<f64> = (0..num_states).map(|_| rng.gen::<f64>()).collect();
        Self { target: Arc::new(target), predictor: vec![0.0; num_states], lr }
    }

    /// Explicit targets, for fixtures that need designed error magnitudes.
    pub fn with_targets(target: Vec<f64>, lr: f64) -> Self {
        Self { predictor: vec![0.0; target.len()], target: Arc::new(target), lr }
    }

    pub fn target(&self, s: usize) -> f64 {
        self.target[s]
    }

    pub fn predictor(&self, s: usize) -> f64 {
        self.predictor[s]
    }
}

/// Squared prediction error (target(s) - predictor(s))^2; the predictor then
/// moves toward the target by lr * error-signal.
pub fn prediction_error_bonus(model: &mut NoveltyModel, s: usize) -> f64 {
    let err = model.target[s] - model.predictor[s];
    let bonus = err * err;
    model.predictor[s] += model.lr * err;
    bonus
}

/// Which bonus family a stream produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImKind {
    Count,
    RndTabular,
    Constant,
}

/// Configuration for an intrinsic stream (config keys `im.*`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImConfig {
    pub kind: ImKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// States whose novelty never decays (noisy-TV analogue).
    #[serde(default)]
    pub noisy_states: BTreeSet<usize>,
    /// If set, only transitions entering these states earn a bonus.
    #[serde(default)]
    pub states: Option<BTreeSet<usize>>,
    /// Seed for the novelty target table.
    #[serde(default)]
    pub seed: u64,
    /// Multiplier applied to every emitted bonus.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.6
}

fn default_lr() -> f64 {
    0.5
}

impl ImConfig {
    pub fn constant(beta: f64) -> Self {
        Self {
            kind: ImKind::Constant,
            beta,
            lr: default_lr(),
            noisy_states: BTreeSet::new(),
            states: None,
            seed: 0,
            scale: 1.0,
        }
    }

    pub fn count(beta: f64) -> Self {
        Self { kind: ImKind::Count, ..Self::constant(beta) }
    }

    pub fn rnd_tabular(seed: u64, lr: f64) -> Self {
        Self { kind: ImKind::RndTabular, lr, seed, ..Self::constant(default_beta()) }
    }

    /// Scale every emitted bonus.
    pub fn scaled(mut self, scale: f64) -> Self {
        assert!(scale >= 0.0);
        self.scale = scale;
        self
    }

    /// Restrict bonuses to the given states.
    pub fn only_states(mut self, states: impl IntoIterator<Item = usize>) -> Self {
        self.states = Some(states.into_iter().collect());
        self
    }

    /// Flag states as persistently novel.
    pub fn noisy(mut self, states: impl IntoIterator<Item = usize>) -> Self {
        self.noisy_states = states.into_iter().collect();
        self
    }

    /// Bonus stream that never emits anything.
    pub fn none() -> Self {
        Self::constant(0.0)
    }
}

/// The immutable part of a stream: config plus any seeded tables.
#[derive(Debug, Clone)]
pub struct ImDef {
    config: ImConfig,
    target: Option<Arc<Vec<f64>>>,
    num_states: usize,
}

/// The mutable part of a stream, snapshotable for exact augmentation.
/// Hash/Eq are over raw float bits; all updates are deterministic, so
/// equal digests mean equal histories.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ImState {
    Count(Vec<u32>),
    Rnd(Vec<u64>),
    Constant,
}

impl ImDef {
    pub fn new(config: ImConfig, num_states: usize) -> Self {
        let target = match config.kind {
            ImKind::RndTabular => {
                Some(NoveltyModel::seeded(num_states, config.seed, config.lr).target)
            }
            _ => None,
        };
        Self { config, target, num_states }
    }

    /// Build with an explicit novelty model (designed targets).
    pub fn with_novelty_model(config: ImConfig, model: &NoveltyModel) -> Self {
        Self { num_states: model.target.len(), target: Some(model.target.clone()), config }
    }

    pub fn config(&self) -> &ImConfig {
        &self.config
    }

    pub fn initial_state(&self) -> ImState {
        match self.config.kind {
            ImKind::Count => ImState::Count(vec![0; self.num_states]),
            ImKind::RndTabular => ImState::Rnd(vec![0.0f64.to_bits(); self.num_states]),
            ImKind::Constant => ImState::Constant,
        }
    }

    fn eligible(&self, s_next: usize) -> bool {
        match &self.config.states {
            Some(allowed) => allowed.contains(&s_next),
            None => true,
        }
    }

    /// Pure transition: bonus for entering `s_next` plus the successor
    /// stream state. Noisy states return their first-visit bonus forever.
    pub fn transition(&self, state: &ImState, s_next: usize) -> (f64, ImState) {
        let (bonus, next) = self.transition_unscaled(state, s_next);
        (self.config.scale * bonus, next)
    }

    fn transition_unscaled(&self, state: &ImState, s_next: usize) -> (f64, ImState) {
        if !self.eligible(s_next) {
            return (0.0, state.clone());
        }
        let noisy = self.config.noisy_states.contains(&s_next);
        match state {
            ImState::Count(counts) => {
                let mut c = VisitCounts { counts: counts.clone() };
                let bonus = if noisy {
                    c.counts[s_next] += 1;
                    self.config.beta
                } else {
                    count_bonus(&mut c, s_next, self.config.beta)
                };
                (bonus, ImState::Count(c.counts))
            }
            ImState::Rnd(bits) => {
                let target = self.target.as_ref().expect("rnd stream has a target table");
                let mut model = NoveltyModel {
                    target: target.clone(),
                    predictor: bits.iter().map(|&b| f64::from_bits(b)).collect(),
                    lr: self.config.lr,
                };
                let bonus = if noisy {
                    let err = model.target[s_next];
                    err * err
                } else {
                    prediction_error_bonus(&mut model, s_next)
                };
                (bonus, ImState::Rnd(model.predictor.iter().map(|v| v.to_bits()).collect()))
            }
            ImState::Constant => (self.config.beta, ImState::Constant),
        }
    }
}

/// Stateful per-run stream wrapping the pure transition.
#[derive(Debug, Clone)]
pub struct IntrinsicStream {
    def: ImDef,
    state: ImState,
}

impl IntrinsicStream {
    pub fn new(def: ImDef) -> Self {
        let state = def.initial_state();
        Self { def, state }
    }

    pub fn from_config(config: ImConfig, num_states: usize) -> Self {
        Self::new(ImDef::new(config, num_states))
    }

    /// Bonus for entering `s_next`; advances the stream state.
    pub fn step(&mut self, s_next: usize) -> f64 {
        let (bonus, next) = self.def.transition(&self.state, s_next);
        self.state = next;
        bonus
    }

    pub fn state(&self) -> &ImState {
        &self.state
    }

    pub fn def(&self) -> &ImDef {
        &self.def
    }

    /// Reset the run history (explicit only; never per episode).
    pub fn reset(&mut self) {
        self.state = self.def.initial_state();
    }
}
