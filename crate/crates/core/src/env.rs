//! Bundled small MDPs exercising the failure modes the shapers target:
//! sparse rewards, a hackable novelty decoy, and long episodes that
//! trigger the end-of-episode correction blowup.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError, Policy, RewardTableBuilder};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cell {cell} out of range for {what} (num_states = {num_states})")]
    CellOutOfRange { what: &'static str, cell: usize, num_states: usize },

    #[error("grid dimensions must be at least 2x2, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },

    #[error("corridor length must be >= 1")]
    CorridorTooShort,

    #[error("horizon must be >= 1")]
    ZeroHorizon,

    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Which bundled environment to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    GridWorld,
    CliffWalk,
    LongCorridor,
    TwoPathChest,
}

/// Parameters for a bundled environment. Unset fields take per-kind defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
    /// Corridor length in moves from start to goal.
    #[serde(default)]
    pub length: Option<usize>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub gamma_e: Option<f64>,
    /// States granting persistent novelty (never-decaying intrinsic bait).
    #[serde(default)]
    pub noisy_cells: Option<Vec<usize>>,
    #[serde(default)]
    pub goal_reward: Option<f64>,
    #[serde(default)]
    pub step_cost: Option<f64>,
    #[serde(default)]
    pub cliff_penalty: Option<f64>,
    /// Chest payouts for the two paths.
    #[serde(default)]
    pub left_reward: Option<f64>,
    #[serde(default)]
    pub right_reward: Option<f64>,
}

impl EnvSpec {
    pub fn builtin(kind: EnvKind) -> Self {
        Self {
            kind,
            width: None,
            height: None,
            length: None,
            horizon: None,
            gamma_e: None,
            noisy_cells: None,
            goal_reward: None,
            step_cost: None,
            cliff_penalty: None,
            left_reward: None,
            right_reward: None,
        }
    }

    pub fn two_path_chest() -> Self {
        Self::builtin(EnvKind::TwoPathChest)
    }

    pub fn long_corridor(length: usize) -> Self {
        let mut s = Self::builtin(EnvKind::LongCorridor);
        s.length = Some(length);
        s
    }
}

/// A constructed environment: the MDP plus fixture metadata.
#[derive(Debug, Clone)]
pub struct BuiltEnv {
    pub mdp: Mdp,
    pub name: String,
    /// The state whose action choice the experiment metrics probe.
    pub decision_state: usize,
    /// States flagged as persistently novel (noisy-TV analogue).
    pub noisy_cells: BTreeSet<usize>,
    pub state_labels: Vec<String>,
}

/// Chest environment state indices.
pub mod chest {
    pub const START: usize = 0;
    pub const LEFT_ROOM: usize = 1;
    pub const RIGHT_ROOM: usize = 2;
    pub const GOAL: usize = 3;
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
}

/// Deterministically build the environment described by `spec`.
/// Identical specs produce identical MDPs.
pub fn build_env(spec: &EnvSpec) -> Result<BuiltEnv, EnvError> {
    let built = match spec.kind {
        EnvKind::TwoPathChest => build_chest(spec)?,
        EnvKind::LongCorridor => build_corridor(spec)?,
        EnvKind::CliffWalk => build_cliff(spec)?,
        EnvKind::GridWorld => build_grid(spec)?,
    };
    if let Some(h) = spec.horizon {
        if h == 0 {
            return Err(EnvError::ZeroHorizon);
        }
    }
    Ok(built)
}

fn resolve_noisy(
    spec: &EnvSpec,
    default: &[usize],
    num_states: usize,
) -> Result<BTreeSet<usize>, EnvError> {
    let cells: Vec<usize> = match &spec.noisy_cells {
        Some(v) => v.clone(),
        None => default.to_vec(),
    };
    let mut out = BTreeSet::new();
    for cell in cells {
        if cell >= num_states {
            return Err(EnvError::CellOutOfRange { what: "noisy cell", cell, num_states });
        }
        out.insert(cell);
    }
    Ok(out)
}

/// Two paths to a chest: LEFT pays 1.0, RIGHT pays 0.5, and the right-hand
/// room is a designated novelty decoy. The extrinsically unique optimum is
/// LEFT; an unchecked novelty bonus above the payout gap flips it.
fn build_chest(spec: &EnvSpec) -> Result<BuiltEnv, EnvError> {
    use chest::*;
    let horizon = spec.horizon.unwrap_or(3);
    if horizon == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let gamma = spec.gamma_e.unwrap_or(0.9);
    let left_reward = spec.left_reward.unwrap_or(1.0);
    let right_reward = spec.right_reward.unwrap_or(0.5);

    let mut rb = RewardTableBuilder::new(4, 2);
    rb.set(LEFT_ROOM, LEFT, GOAL, left_reward);
    rb.set(LEFT_ROOM, RIGHT, GOAL, left_reward);
    rb.set(RIGHT_ROOM, LEFT, GOAL, right_reward);
    rb.set(RIGHT_ROOM, RIGHT, GOAL, right_reward);
    let transitions = [
        (START, LEFT, LEFT_ROOM, 1.0),
        (START, RIGHT, RIGHT_ROOM, 1.0),
        (LEFT_ROOM, LEFT, GOAL, 1.0),
        (LEFT_ROOM, RIGHT, GOAL, 1.0),
        (RIGHT_ROOM, LEFT, GOAL, 1.0),
        (RIGHT_ROOM, RIGHT, GOAL, 1.0),
    ];
    let mdp = Mdp::new(
        4,
        2,
        vec![1.0, 0.0, 0.0, 0.0],
        &transitions,
        rb.build(),
        gamma,
        horizon,
        vec![false, false, false, true],
    )?;
    let noisy = resolve_noisy(spec, &[RIGHT_ROOM], 4)?;
    Ok(BuiltEnv {
        mdp,
        name: "two_path_chest".into(),
        decision_state: START,
        noisy_cells: noisy,
        state_labels: vec!["s0".into(), "L1".into(), "R1".into(), "G".into()],
    })
}

/// A corridor of `length` moves: cells 0..=length, start at 0, terminal goal
/// at cell `length` paying `goal_reward` on entry. Action 0 steps left
/// (clamped), action 1 steps right.
fn build_corridor(spec: &EnvSpec) -> Result<BuiltEnv, EnvError> {
    let length = spec.length.unwrap_or(10);
    if length == 0 {
        return Err(EnvError::CorridorTooShort);
    }
    let horizon = spec.horizon.unwrap_or(length);
    if horizon == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let gamma = spec.gamma_e.unwrap_or(0.9);
    let goal_reward = spec.goal_reward.unwrap_or(1.0);
    let n = length + 1;
    let goal = length;

    let mut rb = RewardTableBuilder::new(n, 2);
    let mut transitions = Vec::new();
    for s in 0..length {
        let left = s.saturating_sub(1);
        let right = s + 1;
        transitions.push((s, 0, left, 1.0));
        transitions.push((s, 1, right, 1.0));
        if right == goal {
            rb.set(s, 1, goal, goal_reward);
        }
    }
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    let mut start = vec![0.0; n];
    start[0] = 1.0;
    let mdp = Mdp::new(n, 2, start, &transitions, rb.build(), gamma, horizon, terminal)?;
    let noisy = resolve_noisy(spec, &[], n)?;
    Ok(BuiltEnv {
        mdp,
        name: format!("long_corridor_{length}"),
        decision_state: 0,
        noisy_cells: noisy,
        state_labels: (0..n).map(|s| format!("c{s}")).collect(),
    })
}

fn grid_step(x: usize, y: usize, a: usize, w: usize, h: usize) -> (usize, usize) {
    match a {
        0 => (x, (y + 1).min(h - 1)),          // up
        1 => (x, y.saturating_sub(1)),         // down
        2 => (x.saturating_sub(1), y),         // left
        _ => ((x + 1).min(w - 1), y),          // right
    }
}

/// Classic cliff walk: start bottom-left, goal bottom-right, cliff cells in
/// between along the bottom row. Stepping into the cliff ends the episode
/// with a penalty; every move pays a small step cost.
fn build_cliff(spec: &EnvSpec) -> Result<BuiltEnv, EnvError> {
    let w = spec.width.unwrap_or(4);
    let h = spec.height.unwrap_or(4);
    if w < 2 || h < 2 {
        return Err(EnvError::GridTooSmall { width: w, height: h });
    }
    let horizon = spec.horizon.unwrap_or(w + h);
    if horizon == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let gamma = spec.gamma_e.unwrap_or(0.95);
    let step_cost = spec.step_cost.unwrap_or(-0.01);
    let cliff_penalty = spec.cliff_penalty.unwrap_or(-1.0);
    let goal_reward = spec.goal_reward.unwrap_or(1.0);

    let n = w * h;
    let idx = |x: usize, y: usize| y * w + x;
    let goal = idx(w - 1, 0);
    let cliff: BTreeSet<usize> = (1..w - 1).map(|x| idx(x, 0)).collect();

    let mut rb = RewardTableBuilder::new(n, 4);
    let mut transitions = Vec::new();
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    for &c in &cliff {
        terminal[c] = true;
    }
    for y in 0..h {
        for x in 0..w {
            let s = idx(x, y);
            if terminal[s] {
                continue;
            }
            for a in 0..4 {
                let (nx, ny) = grid_step(x, y, a, w, h);
                let s_next = idx(nx, ny);
                transitions.push((s, a, s_next, 1.0));
                let mut r = step_cost;
                if s_next == goal {
                    r += goal_reward;
                } else if cliff.contains(&s_next) {
                    r += cliff_penalty;
                }
                rb.set(s, a, s_next, r);
            }
        }
    }
    let mut start = vec![0.0; n];
    start[idx(0, 0)] = 1.0;
    let mdp = Mdp::new(n, 4, start, &transitions, rb.build(), gamma, horizon, terminal)?;
    let noisy = resolve_noisy(spec, &[], n)?;
    Ok(BuiltEnv {
        mdp,
        name: format!("cliff_walk_{w}x{h}"),
        decision_state: idx(0, 0),
        noisy_cells: noisy,
        state_labels: (0..n).map(|s| format!("({},{})", s % w, s / w)).collect(),
    })
}

/// Open grid room: start bottom-left, terminal goal bottom-right paying 1.
/// The straight walk along the start row is uniquely optimal; everything
/// above it is reward-free space for exploration streams to wander.
fn build_grid(spec: &EnvSpec) -> Result<BuiltEnv, EnvError> {
    let w = spec.width.unwrap_or(3);
    let h = spec.height.unwrap_or(3);
    if w < 2 || h < 2 {
        return Err(EnvError::GridTooSmall { width: w, height: h });
    }
    let horizon = spec.horizon.unwrap_or(w + h);
    if horizon == 0 {
        return Err(EnvError::ZeroHorizon);
    }
    let gamma = spec.gamma_e.unwrap_or(0.95);
    let goal_reward = spec.goal_reward.unwrap_or(1.0);
    let step_cost = spec.step_cost.unwrap_or(0.0);

    let n = w * h;
    let idx = |x: usize, y: usize| y * w + x;
    let goal = idx(w - 1, 0);

    let mut rb = RewardTableBuilder::new(n, 4);
    let mut transitions = Vec::new();
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    for y in 0..h {
        for x in 0..w {
            let s = idx(x, y);
            if terminal[s] {
                continue;
            }
            for a in 0..4 {
                let (nx, ny) = grid_step(x, y, a, w, h);
                let s_next = idx(nx, ny);
                transitions.push((s, a, s_next, 1.0));
                let r = step_cost + if s_next == goal { goal_reward } else { 0.0 };
                rb.set(s, a, s_next, r);
            }
        }
    }
    let mut start = vec![0.0; n];
    start[idx(0, 0)] = 1.0;
    let mdp = Mdp::new(n, 4, start, &transitions, rb.build(), gamma, horizon, terminal)?;
    let noisy = resolve_noisy(spec, &[], n)?;
    Ok(BuiltEnv {
        mdp,
        name: format!("grid_world_{w}x{h}"),
        decision_state: idx(0, 0),
        noisy_cells: noisy,
        state_labels: (0..n).map(|s| format!("({},{})", s % w, s / w)).collect(),
    })
}

/// One recorded environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub r_ext: f64,
    pub s_next: usize,
    pub done: bool,
}

/// A rolled-out episode: ends at the horizon or on entering a terminal state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn extrinsic_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        for step in self.steps.iter().rev() {
            acc = step.r_ext + gamma * acc;
        }
        acc
    }
}

/// Sample an index from a cumulative scan of `weights`; weights must sum to ~1.
pub(crate) fn sample_weighted(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = (usize, f64)>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (idx, w) in weights {
        acc += w;
        last = idx;
        if u < acc {
            return idx;
        }
    }
    last
}

/// Roll one episode under `policy`, reproducible per seed.
pub fn rollout(mdp: &Mdp, policy: &Policy, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_with_rng(mdp, policy, &mut rng)
}

pub(crate) fn rollout_with_rng(mdp: &Mdp, policy: &Policy, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut steps = Vec::new();
    let mut s = sample_weighted(rng, mdp.start_distribution().iter().cloned().enumerate());
    for t in 0..mdp.horizon() {
        if mdp.is_terminal(s) {
            break;
        }
        let dist = policy.action_distribution(s, t);
        let a = sample_weighted(rng, dist.iter().cloned().enumerate());
        let s_next = sample_weighted(rng, mdp.successors(s, a).iter().cloned());
        let r = mdp.reward(s, a, s_next, t);
        let done = t + 1 == mdp.horizon() || mdp.is_terminal(s_next);
        steps.push(Step { t, s, a, r_ext: r, s_next, done });
        if done {
            break;
        }
        s = s_next;
    }
    Trajectory { steps }
}
