//! Finite-horizon MDP representation and exact solvers.
//!
//! Everything downstream (environments, shapers, the certification oracle,
//! the tabular learners) operates on the types here. All solvers run exact
//! backward induction over the finite horizon; there is no
//! iterate-to-convergence loop and no approximation.

use std::sync::Arc;

use thiserror::Error;

/// Errors from MDP construction and the exact solvers.
#[derive(Debug, Error)]
pub enum MdpError {
    #[error("transition row for (s={s}, a={a}) sums to {sum}, expected 1 within {tol}")]
    UnnormalizedTransition { s: usize, a: usize, sum: f64, tol: f64 },

    #[error("start distribution sums to {sum}, expected 1 within {tol}")]
    UnnormalizedStart { sum: f64, tol: f64 },

    #[error("discount factor {0} outside [0, 1]")]
    InvalidDiscount(f64),

    #[error("horizon must be >= 1")]
    ZeroHorizon,

    #[error("state space and action space must be nonempty")]
    EmptySpace,

    #[error("transition references out-of-range index (s={s}, a={a}, s_next={s_next})")]
    IndexOutOfRange { s: usize, a: usize, s_next: usize },

    #[error("non-finite reward {value} at (s={s}, a={a}, s_next={s_next}, t={t})")]
    NonFiniteReward { s: usize, a: usize, s_next: usize, t: usize, value: f64 },

    #[error("policy distribution at (s={s}, t={t}) sums to {sum}, expected 1 within {tol}")]
    UnnormalizedPolicy { s: usize, t: usize, sum: f64, tol: f64 },

    #[error("policy table has wrong shape: expected {expected} entries, got {got}")]
    PolicyShape { expected: usize, got: usize },

    #[error("discounted return of an empty reward sequence is undefined")]
    EmptyRewardSequence,

    #[error("from_t={from_t} outside reward sequence of length {len}")]
    FromOutOfRange { from_t: usize, len: usize },
}

/// Normalization tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-12;

/// Default tie tolerance for optimal-action-set extraction. Far above
/// float64 backward-induction error at horizons <= 64, far below any
/// designed reward gap in the bundled environments.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// Extrinsic reward function: (s, a, s_next, t) -> value.
#[derive(Clone)]
pub enum RewardFn {
    /// Dense table indexed [s][a][s_next], plus sparse time-indexed
    /// overrides keyed (s, a, s_next, t). Lookup checks the override first.
    Table {
        base: Arc<Vec<f64>>,
        timed: Arc<Vec<((usize, usize, usize, usize), f64)>>,
    },
    /// Arbitrary closure; used by tests and reward overrides.
    Custom(Arc<dyn Fn(usize, usize, usize, usize) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for RewardFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardFn::Table { .. } => f.write_str("RewardFn::Table"),
            RewardFn::Custom(_) => f.write_str("RewardFn::Custom"),
        }
    }
}

/// A finite MDP with time-dependent rewards and a finite episode horizon.
///
/// Immutable after construction; safe to share read-only across concurrent
/// experiment runs. Terminal states are absorbing: they self-loop with zero
/// reward, and episodes end on entry.
#[derive(Debug, Clone)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    start: Vec<f64>,
    /// Sparse successor lists indexed [s * num_actions + a].
    succ: Vec<Vec<(usize, f64)>>,
    reward: RewardFn,
    gamma_e: f64,
    horizon: usize,
    terminal: Vec<bool>,
}

impl Mdp {
    /// Build and validate an MDP from sparse transitions.
    ///
    /// `transitions` holds (s, a, s_next, prob) entries; every (s, a) row
    /// must sum to 1 within `PROB_TOL`. `terminal` states may omit rows
    /// entirely (zero-reward self-loops are added for every action).
    pub fn new(
        num_states: usize,
        num_actions: usize,
        start: Vec<f64>,
        transitions: &[(usize, usize, usize, f64)],
        reward: RewardFn,
        gamma_e: f64,
        horizon: usize,
        terminal: Vec<bool>,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::EmptySpace);
        }
        if horizon == 0 {
            return Err(MdpError::ZeroHorizon);
        }
        if !(0.0..=1.0).contains(&gamma_e) {
            return Err(MdpError::InvalidDiscount(gamma_e));
        }
        let start_sum: f64 = start.iter().sum();
        if start.len() != num_states || (start_sum - 1.0).abs() > PROB_TOL {
            return Err(MdpError::UnnormalizedStart { sum: start_sum, tol: PROB_TOL });
        }

        let mut succ = vec![Vec::new(); num_states * num_actions];
        for &(s, a, s_next, p) in transitions {
            if s >= num_states || a >= num_actions || s_next >= num_states {
                return Err(MdpError::IndexOutOfRange { s, a, s_next });
            }
            if p > 0.0 {
                succ[s * num_actions + a].push((s_next, p));
            }
        }
        for s in 0..num_states {
            if terminal[s] {
                for a in 0..num_actions {
                    succ[s * num_actions + a] = vec![(s, 1.0)];
                }
                continue;
            }
            for a in 0..num_actions {
                let sum: f64 = succ[s * num_actions + a].iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::UnnormalizedTransition { s, a, sum, tol: PROB_TOL });
                }
            }
        }

        Ok(Self { num_states, num_actions, start, succ, reward, gamma_e, horizon, terminal })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn start_distribution(&self) -> &[f64] {
        &self.start
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Successors of (s, a) as (s_next, probability) pairs, zero entries omitted.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.succ[s * self.num_actions + a]
    }

    /// Extrinsic reward at (s, a, s_next, t). Entering or leaving a terminal
    /// state's self-loop pays zero regardless of the reward table.
    pub fn reward(&self, s: usize, a: usize, s_next: usize, t: usize) -> f64 {
        if self.terminal[s] {
            return 0.0;
        }
        match &self.reward {
            RewardFn::Table { base, timed } => {
                for &((rs, ra, rn, rt), v) in timed.iter() {
                    if rs == s && ra == a && rn == s_next && rt == t {
                        return v;
                    }
                }
                base[(s * self.num_actions + a) * self.num_states + s_next]
            }
            RewardFn::Custom(f) => f(s, a, s_next, t),
        }
    }
}

/// Helper for assembling a dense reward table.
pub struct RewardTableBuilder {
    num_states: usize,
    num_actions: usize,
    base: Vec<f64>,
    timed: Vec<((usize, usize, usize, usize), f64)>,
}

impl RewardTableBuilder {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            base: vec![0.0; num_states * num_actions * num_states],
            timed: Vec::new(),
        }
    }

    /// Reward for (s, a, s_next) at every timestep.
    pub fn set(&mut self, s: usize, a: usize, s_next: usize, value: f64) -> &mut Self {
        self.base[(s * self.num_actions + a) * self.num_states + s_next] = value;
        self
    }

    /// Reward for (s, a, s_next) at one specific timestep only.
    pub fn set_at(&mut self, s: usize, a: usize, s_next: usize, t: usize, value: f64) -> &mut Self {
        self.timed.push(((s, a, s_next, t), value));
        self
    }

    pub fn build(self) -> RewardFn {
        RewardFn::Table { base: Arc::new(self.base), timed: Arc::new(self.timed) }
    }
}

/// A time-dependent stochastic policy: a probability vector over actions
/// for every (s, t) with t in [0, horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// Indexed [t][s][a], flattened.
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        probs: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let expected = num_states * num_actions * horizon;
        if probs.len() != expected {
            return Err(MdpError::PolicyShape { expected, got: probs.len() });
        }
        let p = Self { num_states, num_actions, horizon, probs };
        for t in 0..horizon {
            for s in 0..num_states {
                let sum: f64 = p.action_distribution(s, t).iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::UnnormalizedPolicy { s, t, sum, tol: PROB_TOL });
                }
            }
        }
        Ok(p)
    }

    /// Uniform over all actions at every (s, t).
    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            num_states,
            num_actions,
            horizon,
            probs: vec![p; num_states * num_actions * horizon],
        }
    }

    /// Deterministic policy from an action table indexed [t][s].
    pub fn deterministic(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        actions: &[usize],
    ) -> Self {
        let mut probs = vec![0.0; num_states * num_actions * horizon];
        for t in 0..horizon {
            for s in 0..num_states {
                let a = actions[t * num_states + s];
                probs[(t * num_states + s) * num_actions + a] = 1.0;
            }
        }
        Self { num_states, num_actions, horizon, probs }
    }

    /// Deterministic stationary policy from an action per state.
    pub fn stationary(num_states: usize, num_actions: usize, horizon: usize, actions: &[usize]) -> Self {
        let mut per_t = Vec::with_capacity(horizon * num_states);
        for _ in 0..horizon {
            per_t.extend_from_slice(actions);
        }
        Self::deterministic(num_states, num_actions, horizon, &per_t)
    }

    /// Greedy policy that takes the first maximizing action of `q` at each (s, t).
    pub fn greedy_from_q(q: &QTable) -> Self {
        let mut actions = Vec::with_capacity(q.horizon * q.num_states);
        for t in 0..q.horizon {
            for s in 0..q.num_states {
                let mut best = 0;
                for a in 1..q.num_actions {
                    if q.get(s, a, t) > q.get(s, best, t) {
                        best = a;
                    }
                }
                actions.push(best);
            }
        }
        Self::deterministic(q.num_states, q.num_actions, q.horizon, &actions)
    }

    pub fn action_distribution(&self, s: usize, t: usize) -> &[f64] {
        let off = (t * self.num_states + s) * self.num_actions;
        &self.probs[off..off + self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize, t: usize) -> f64 {
        self.probs[(t * self.num_states + s) * self.num_actions + a]
    }

    /// Copy of this policy with the action at (s, t) replaced by a point mass on `a`.
    pub fn with_action(&self, s: usize, t: usize, a: usize) -> Self {
        let mut out = self.clone();
        let off = (t * self.num_states + s) * self.num_actions;
        for slot in &mut out.probs[off..off + self.num_actions] {
            *slot = 0.0;
        }
        out.probs[off + a] = 1.0;
        out
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// State values indexed (s, t) for t in [0, horizon]; the boundary row
/// values[., horizon] is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    num_states: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(num_states: usize, horizon: usize) -> Self {
        Self { num_states, horizon, values: vec![0.0; num_states * (horizon + 1)] }
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[t * self.num_states + s]
    }

    pub fn set(&mut self, s: usize, t: usize, v: f64) {
        debug_assert!(t < self.horizon, "boundary row is fixed at zero");
        self.values[t * self.num_states + s] = v;
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Action values indexed (s, a, t) for t in [0, horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self { num_states, num_actions, horizon, values: vec![0.0; num_states * num_actions * horizon] }
    }

    pub fn get(&self, s: usize, a: usize, t: usize) -> f64 {
        self.values[(t * self.num_states + s) * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, t: usize, v: f64) {
        self.values[(t * self.num_states + s) * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize, t: usize) -> &[f64] {
        let off = (t * self.num_states + s) * self.num_actions;
        &self.values[off..off + self.num_actions]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Per-(s, t) sets of actions within `tie_tolerance` of the max Q value.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalActionSet {
    num_states: usize,
    horizon: usize,
    tie_tolerance: f64,
    sets: Vec<Vec<usize>>,
}

impl OptimalActionSet {
    pub fn actions(&self, s: usize, t: usize) -> &[usize] {
        &self.sets[t * self.num_states + s]
    }

    pub fn contains(&self, s: usize, t: usize, a: usize) -> bool {
        self.actions(s, t).contains(&a)
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie_tolerance
    }
}

/// Extract the tie-tolerant optimal action set from a Q table:
/// per (s, t), all actions with Q >= max_a Q - tie_tolerance.
pub fn optimal_action_set(q: &QTable, tie_tolerance: f64) -> OptimalActionSet {
    assert!(tie_tolerance > 0.0, "tie_tolerance must be positive");
    let mut sets = Vec::with_capacity(q.num_states * q.horizon);
    for t in 0..q.horizon {
        for s in 0..q.num_states {
            sets.push(tie_argmax(q.row(s, t), tie_tolerance));
        }
    }
    OptimalActionSet { num_states: q.num_states, horizon: q.horizon, tie_tolerance, sets }
}

/// All indices within `tol` of the maximum of `row`.
pub fn tie_argmax(row: &[f64], tol: f64) -> Vec<usize> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.iter().enumerate().filter(|&(_, &v)| v >= max - tol).map(|(a, _)| a).collect()
}

fn backward_induction(
    mdp: &Mdp,
    reward_override: Option<&dyn Fn(usize, usize, usize, usize) -> f64>,
    mut pick: impl FnMut(usize, usize, &[f64]) -> f64,
) -> Result<(ValueTable, QTable), MdpError> {
    let n = mdp.horizon;
    let mut v = ValueTable::zeros(mdp.num_states, n);
    let mut q = QTable::zeros(mdp.num_states, mdp.num_actions, n);
    let mut row = vec![0.0; mdp.num_actions];
    for t in (0..n).rev() {
        for s in 0..mdp.num_states {
            for a in 0..mdp.num_actions {
                let mut acc = 0.0;
                for &(s_next, p) in mdp.successors(s, a) {
                    let r = match reward_override {
                        Some(f) => f(s, a, s_next, t),
                        None => mdp.reward(s, a, s_next, t),
                    };
                    if !r.is_finite() {
                        return Err(MdpError::NonFiniteReward { s, a, s_next, t, value: r });
                    }
                    acc += p * (r + mdp.gamma_e * v.get(s_next, t + 1));
                }
                q.set(s, a, t, acc);
                row[a] = acc;
            }
            let val = pick(s, t, &row);
            v.set(s, t, val);
        }
    }
    Ok((v, q))
}

/// Exact optimal values by backward induction:
/// Q*[s,a,t] = sum_{s'} P(s'|s,a) (R(s,a,s',t) + gamma V*[s',t+1]),
/// V*[s,t] = max_a Q*[s,a,t].
pub fn value_iteration(
    mdp: &Mdp,
    reward_override: Option<&dyn Fn(usize, usize, usize, usize) -> f64>,
) -> Result<(ValueTable, QTable), MdpError> {
    backward_induction(mdp, reward_override, |_, _, row| {
        row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Exact policy values by backward induction:
/// V^pi[s,t] = sum_a pi(a|s,t) Q^pi[s,a,t].
pub fn policy_evaluation(
    mdp: &Mdp,
    policy: &Policy,
    reward_override: Option<&dyn Fn(usize, usize, usize, usize) -> f64>,
) -> Result<(ValueTable, QTable), MdpError> {
    if policy.num_states != mdp.num_states
        || policy.num_actions != mdp.num_actions
        || policy.horizon != mdp.horizon
    {
        return Err(MdpError::PolicyShape {
            expected: mdp.num_states * mdp.num_actions * mdp.horizon,
            got: policy.probs.len(),
        });
    }
    backward_induction(mdp, reward_override, |s, t, row| {
        let dist = policy.action_distribution(s, t);
        row.iter().zip(dist).map(|(q, p)| p * q).sum()
    })
}

/// Discounted tail sum: sum_{j = from_t}^{end} gamma^(j - from_t) * rewards[j].
pub fn discounted_return(rewards: &[f64], gamma: f64, from_t: usize) -> Result<f64, MdpError> {
    if rewards.is_empty() {
        return Err(MdpError::EmptyRewardSequence);
    }
    if from_t >= rewards.len() {
        return Err(MdpError::FromOutOfRange { from_t, len: rewards.len() });
    }
    // Horner evaluation from the tail.
    let mut acc = 0.0;
    for &r in rewards[from_t..].iter().rev() {
        acc = r + gamma * acc;
    }
    Ok(acc)
}
