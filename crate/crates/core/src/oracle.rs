//! Exact brute-force certification on small instances.
//!
//! History-dependent shaped rewards are made Markovian by augmenting the
//! state with a digest: the intrinsic stream's internal state plus, for the
//! matching shapers, the episode ledger. Over the resulting layered DAG,
//! backward induction is exact, so claims about optimal policy sets can be
//! certified or falsified rather than sampled.
//!
//! Certification evaluates the shaped problem as a single reward stream
//! R + F' under the environment discount. Component-level checks (the
//! ADOPS argmax and case-sign properties, instability tests) evaluate the
//! extrinsic and intrinsic parts separately, with the intrinsic side under
//! the shaper's own discount.

use indexmap::IndexMap;
use thiserror::Error;

use crate::intrinsic::{ImDef, ImState};
use crate::mdp::{
    optimal_action_set, policy_evaluation, tie_argmax, value_iteration, Mdp, MdpError, Policy,
    QTable, ValueTable,
};
use crate::shaping::{
    adops_f2, AdopsInputs, LedgerSnapshot, ShaperConfig, ShaperKind, ShapingEvent, StreamShaper,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("augmented state space exceeded the cap of {cap} nodes (reached {reached})")]
    CapExceeded { cap: usize, reached: usize },

    #[error("shaper kind {0:?} has no policy-independent shaped problem")]
    PolicyDependentShaper(ShaperKind),

    #[error("no state/time with an action-dependent optimal return (largest gap {max_gap})")]
    NoDistinguishingState { max_gap: f64 },

    #[error("site (s={s}, t={t}) is unreachable under the given policy")]
    UnreachableSite { s: usize, t: usize },

    #[error(transparent)]
    Mdp(#[from] MdpError),

    #[error("shaping failure during augmentation: {0}")]
    Shaping(#[from] crate::shaping::ShapingError),
}

/// Limits and tolerances for augmented-space construction.
#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Maximum number of augmented nodes.
    pub cap: usize,
    pub tie_tolerance: f64,
    /// Mean estimate the normalized shapers start the episode with.
    pub initial_mean_estimate: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { cap: 1_000_000, tie_tolerance: 1e-9, initial_mean_estimate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NodeKey {
    s: usize,
    t: usize,
    im: ImState,
    ledger: Option<LedgerSnapshot>,
}

/// One augmented state: base state, time, stream digest.
#[derive(Debug, Clone)]
pub struct Node {
    pub s: usize,
    pub t: usize,
    /// Episode over: no outgoing edges.
    pub done: bool,
    pub im: ImState,
}

/// One augmented transition.
#[derive(Debug, Clone)]
pub struct Edge {
    pub next: usize,
    pub p: f64,
    pub r_ext: f64,
    pub f_raw: f64,
    pub f_shaped: f64,
}

/// A shaped MDP rendered Markovian over digest-augmented nodes, along with
/// the unshaped problem's exact solution for comparisons.
#[derive(Debug)]
pub struct ShapedProblem {
    nodes: Vec<Node>,
    /// Edges indexed [node][action].
    edges: Vec<Vec<Vec<Edge>>>,
    start: Vec<(usize, f64)>,
    num_actions: usize,
    gamma_e: f64,
    base_v: ValueTable,
    base_q: QTable,
}

impl ShapedProblem {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self, node: usize, a: usize) -> &[Edge] {
        &self.edges[node][a]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn start_nodes(&self) -> &[(usize, f64)] {
        &self.start
    }

    /// Exact unshaped state values V*_E.
    pub fn base_values(&self) -> &ValueTable {
        &self.base_v
    }

    /// Exact unshaped action values Q*_E.
    pub fn base_q(&self) -> &QTable {
        &self.base_q
    }

    /// Forward occupancy of every node under `policy`, starting from the
    /// problem's start distribution.
    pub fn occupancy(&self, policy: &Policy) -> Vec<f64> {
        let mut occ = vec![0.0; self.nodes.len()];
        for &(idx, p) in &self.start {
            occ[idx] += p;
        }
        for idx in 0..self.nodes.len() {
            if occ[idx] == 0.0 || self.nodes[idx].done {
                continue;
            }
            let node = &self.nodes[idx];
            for a in 0..self.num_actions {
                let pa = policy.prob(node.s, a, node.t);
                if pa == 0.0 {
                    continue;
                }
                for e in &self.edges[idx][a] {
                    occ[e.next] += occ[idx] * pa * e.p;
                }
            }
        }
        occ
    }

    /// Backward induction maximizing the combined stream R + F' under the
    /// environment discount. Returns per-node values and per-(node, action)
    /// action values (flattened).
    pub fn optimal_combined(&self) -> (Vec<f64>, Vec<f64>) {
        self.induct_max(|e, cont| e.r_ext + e.f_shaped + self.gamma_e * cont, None)
    }

    /// Backward induction maximizing one reward component with its own
    /// discount, optionally restricting each node to an allowed action set.
    fn induct_max(
        &self,
        edge_value: impl Fn(&Edge, f64) -> f64,
        allowed: Option<&dyn Fn(&Node, usize) -> bool>,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.nodes.len()];
        let mut q = vec![f64::NEG_INFINITY; self.nodes.len() * self.num_actions];
        for idx in (0..self.nodes.len()).rev() {
            if self.nodes[idx].done {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.num_actions {
                let qa: f64 =
                    self.edges[idx][a].iter().map(|e| e.p * edge_value(e, v[e.next])).sum();
                q[idx * self.num_actions + a] = qa;
                let permitted = allowed.map_or(true, |f| f(&self.nodes[idx], a));
                if permitted && qa > best {
                    best = qa;
                }
            }
            v[idx] = best;
        }
        (v, q)
    }

    /// Exact policy evaluation of one reward component over the DAG.
    /// `edge_value` sees each edge and the successor's value.
    pub fn evaluate_policy_component(
        &self,
        policy: &Policy,
        edge_value: impl Fn(&Edge, f64) -> f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; self.nodes.len()];
        let mut q = vec![0.0; self.nodes.len() * self.num_actions];
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if node.done {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..self.num_actions {
                let qa: f64 =
                    self.edges[idx][a].iter().map(|e| e.p * edge_value(e, v[e.next])).sum();
                q[idx * self.num_actions + a] = qa;
                acc += policy.prob(node.s, a, node.t) * qa;
            }
            v[idx] = acc;
        }
        (v, q)
    }
}

fn ledgered(kind: ShaperKind) -> bool {
    matches!(kind, ShaperKind::Pbim | ShaperKind::PbimNorm | ShaperKind::Grm | ShaperKind::GrmNorm)
}

/// Build the augmented shaped problem for a policy-independent shaper
/// (everything except practical adops/adopes). For `adops_ideal` the edge
/// corrections are derived from the unshaped optimum and the restricted
/// intrinsic optimum computed on the same graph.
pub fn build_shaped_problem(
    mdp: &Mdp,
    im: &ImDef,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<ShapedProblem, OracleError> {
    match shaper.kind {
        ShaperKind::Adops | ShaperKind::Adopes => {
            return Err(OracleError::PolicyDependentShaper(shaper.kind));
        }
        _ => {}
    }
    let mut problem = expand_graph(mdp, im, shaper, opts)?;

    if shaper.kind == ShaperKind::AdopsIdeal {
        let sets = optimal_action_set(&problem.base_q, opts.tie_tolerance);
        let (v_star_i, _) = problem.induct_max(
            |e, cont| e.f_raw + shaper.gamma_i * cont,
            Some(&|node: &Node, a: usize| sets.contains(node.s, node.t, a)),
        );
        // Second pass: fill in the ideal corrections now that V*_I is known.
        for idx in 0..problem.nodes.len() {
            let node = problem.nodes[idx].clone();
            if node.done {
                continue;
            }
            for a in 0..problem.num_actions {
                for ei in 0..problem.edges[idx][a].len() {
                    let e = &problem.edges[idx][a][ei];
                    let inputs = AdopsInputs {
                        v_e: problem.base_v.get(node.s, node.t),
                        q_e: problem.base_q.get(node.s, a, node.t),
                        v_i: v_star_i[idx],
                        v_i_next: v_star_i[e.next],
                        gamma_i: shaper.gamma_i,
                        f: e.f_raw,
                        epsilon: shaper.epsilon,
                    };
                    let f2 = adops_f2(&inputs);
                    let e = &mut problem.edges[idx][a][ei];
                    e.f_shaped = e.f_raw + f2;
                }
            }
        }
    }
    Ok(problem)
}

fn expand_graph(
    mdp: &Mdp,
    im: &ImDef,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<ShapedProblem, OracleError> {
    let (base_v, base_q) = value_iteration(mdp, None)?;
    let with_ledger = ledgered(shaper.kind);
    let template = if with_ledger || matches!(shaper.kind, ShaperKind::Pies) {
        Some(StreamShaper::with_mean_estimate(shaper.clone(), opts.initial_mean_estimate))
    } else {
        None
    };

    let mut index: IndexMap<NodeKey, usize> = IndexMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut shapers: Vec<Option<StreamShaper>> = Vec::new();
    let mut edges: Vec<Vec<Vec<Edge>>> = Vec::new();
    let mut start = Vec::new();

    fn add_node(
        nodes: &mut Vec<Node>,
        shapers: &mut Vec<Option<StreamShaper>>,
        edges: &mut Vec<Vec<Vec<Edge>>>,
        index: &mut IndexMap<NodeKey, usize>,
        cap: usize,
        with_ledger: bool,
        s: usize,
        t: usize,
        done: bool,
        im_state: ImState,
        sh: Option<StreamShaper>,
    ) -> Result<usize, OracleError> {
        let key = NodeKey {
            s,
            t,
            im: im_state.clone(),
            ledger: if with_ledger { sh.as_ref().map(|x| x.snapshot()) } else { None },
        };
        if let Some(&idx) = index.get(&key) {
            return Ok(idx);
        }
        let idx = nodes.len();
        if idx >= cap {
            return Err(OracleError::CapExceeded { cap, reached: idx + 1 });
        }
        index.insert(key, idx);
        nodes.push(Node { s, t, done, im: im_state });
        shapers.push(sh);
        edges.push(Vec::new());
        Ok(idx)
    }

    for (s, &p) in mdp.start_distribution().iter().enumerate() {
        if p > 0.0 {
            let done = mdp.is_terminal(s);
            let idx = add_node(
                &mut nodes,
                &mut shapers,
                &mut edges,
                &mut index,
                opts.cap,
                with_ledger,
                s,
                0,
                done,
                im.initial_state(),
                template.clone(),
            )?;
            start.push((idx, p));
        }
    }

    let mut cursor = 0;
    while cursor < nodes.len() {
        let idx = cursor;
        cursor += 1;
        let node = nodes[idx].clone();
        if node.done {
            continue;
        }
        let node_shaper = shapers[idx].clone();
        let mut per_action = Vec::with_capacity(mdp.num_actions());
        for a in 0..mdp.num_actions() {
            let mut out = Vec::new();
            for &(s_next, p) in mdp.successors(node.s, a) {
                let r_ext = mdp.reward(node.s, a, s_next, node.t);
                if !r_ext.is_finite() {
                    return Err(MdpError::NonFiniteReward {
                        s: node.s,
                        a,
                        s_next,
                        t: node.t,
                        value: r_ext,
                    }
                    .into());
                }
                let (f_raw, im_next) = im.transition(&node.im, s_next);
                let done = node.t + 1 == mdp.horizon() || mdp.is_terminal(s_next);
                let ev = ShapingEvent { t: node.t, s: node.s, a, s_next, f_raw, done };
                let (f_shaped, sh_next) = match &node_shaper {
                    Some(sh) => {
                        let mut sh = sh.clone();
                        let f = sh.step(&ev)?;
                        (f, Some(sh))
                    }
                    None => {
                        // Raw passthrough; `none` emits zero and the ideal
                        // corrections are filled in afterwards.
                        let f = match shaper.kind {
                            ShaperKind::None => 0.0,
                            _ => f_raw,
                        };
                        (f, None)
                    }
                };
                let next_idx = add_node(
                    &mut nodes,
                    &mut shapers,
                    &mut edges,
                    &mut index,
                    opts.cap,
                    with_ledger,
                    s_next,
                    node.t + 1,
                    done,
                    im_next,
                    sh_next,
                )?;
                out.push(Edge { next: next_idx, p, r_ext, f_raw, f_shaped });
            }
            per_action.push(out);
        }
        edges[idx] = per_action;
    }

    Ok(ShapedProblem {
        nodes,
        edges,
        start,
        num_actions: mdp.num_actions(),
        gamma_e: mdp.gamma_e(),
        base_v,
        base_q,
    })
}

/// Tie-tolerant optimal action sets of the shaped problem, per node.
#[derive(Debug, Clone)]
pub struct AugmentedActionSets {
    pub sets: Vec<Vec<usize>>,
}

/// Exact optimal action sets of the shaped problem (combined stream).
pub fn optimal_policy_set_bruteforce(
    problem: &ShapedProblem,
    tie_tolerance: f64,
) -> AugmentedActionSets {
    let (_, q) = problem.optimal_combined();
    let a = problem.num_actions();
    let sets = (0..problem.num_nodes())
        .map(|idx| {
            if problem.node(idx).done {
                Vec::new()
            } else {
                tie_argmax(&q[idx * a..(idx + 1) * a], tie_tolerance)
            }
        })
        .collect();
    AugmentedActionSets { sets }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Preserved,
    Violated,
}

/// Per-(state, time) comparison row.
#[derive(Debug, Clone)]
pub struct OptimalityRow {
    pub s: usize,
    pub t: usize,
    pub baseline: Vec<usize>,
    /// Union of shaped optimal sets across every reachable digest at (s, t).
    pub shaped: Vec<usize>,
    pub matches: bool,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub s: usize,
    pub t: usize,
    pub action: usize,
    /// How far the offending action sits from the relevant optimum.
    pub q_gap: f64,
}

/// Result of an optimality-preservation check.
#[derive(Debug, Clone)]
pub struct OptimalityReport {
    pub rows: Vec<OptimalityRow>,
    pub violations: Vec<Violation>,
    /// Extrinsically optimal behaviors whose shaped-intrinsic returns
    /// disagree: (s, t, spread).
    pub equal_value_violations: Vec<(usize, usize, f64)>,
    /// Extrinsically suboptimal actions not strictly below the shaped
    /// optimum.
    pub strict_inferiority_violations: Vec<Violation>,
    pub verdict: Verdict,
}

impl OptimalityReport {
    pub fn preserved(&self) -> bool {
        self.verdict == Verdict::Preserved
    }
}

/// Compare the shaped problem's optimal action sets against the unshaped
/// ones at every reachable (s, t), and additionally check that all
/// extrinsically optimal behaviors share one shaped value and that every
/// extrinsically suboptimal action stays strictly below it.
pub fn check_optimality_preserved(
    mdp: &Mdp,
    im: &ImDef,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<OptimalityReport, OracleError> {
    let problem = build_shaped_problem(mdp, im, shaper, opts)?;
    Ok(compare_optimal_sets(&problem, opts.tie_tolerance))
}

/// The comparison half of `check_optimality_preserved`, reusable when the
/// caller already built the problem.
pub fn compare_optimal_sets(problem: &ShapedProblem, tie_tolerance: f64) -> OptimalityReport {
    let a_n = problem.num_actions;
    let base_sets = optimal_action_set(&problem.base_q, tie_tolerance);
    let shaped_sets = optimal_policy_set_bruteforce(problem, tie_tolerance);
    let (v_ie, q_ie) = problem.optimal_combined();

    // Restricted inductions over the shaped-intrinsic component: the max and
    // min attainable while acting extrinsically optimally.
    let restrict = |node: &Node, a: usize| base_sets.contains(node.s, node.t, a);
    let (u_max, _) =
        problem.induct_max(|e, cont| e.f_shaped + problem.gamma_e * cont, Some(&restrict));
    let (neg_u_min, _) =
        problem.induct_max(|e, cont| -e.f_shaped + problem.gamma_e * cont, Some(&restrict));

    let mut rows_map: IndexMap<(usize, usize), OptimalityRow> = IndexMap::new();
    let mut violations: Vec<Violation> = Vec::new();
    let mut equal_value_violations = Vec::new();
    let mut strict_inferiority_violations = Vec::new();

    for idx in 0..problem.num_nodes() {
        let node = problem.node(idx);
        if node.done {
            continue;
        }
        let baseline = base_sets.actions(node.s, node.t).to_vec();
        let shaped = &shaped_sets.sets[idx];
        let row = rows_map.entry((node.t, node.s)).or_insert_with(|| OptimalityRow {
            s: node.s,
            t: node.t,
            baseline: baseline.clone(),
            shaped: Vec::new(),
            matches: true,
        });
        for &a in shaped {
            if !row.shaped.contains(&a) {
                row.shaped.push(a);
            }
        }
        if *shaped != baseline {
            row.matches = false;
            for &a in shaped {
                if !baseline.contains(&a) {
                    let gap = problem.base_v.get(node.s, node.t)
                        - problem.base_q.get(node.s, a, node.t);
                    push_violation(&mut violations, node.s, node.t, a, gap);
                }
            }
            for &a in &baseline {
                if !shaped.contains(&a) {
                    let gap = v_ie[idx] - q_ie[idx * a_n + a];
                    push_violation(&mut violations, node.s, node.t, a, gap);
                }
            }
        }

        // Spread of shaped-intrinsic return across extrinsically optimal
        // behaviors from this node.
        let spread = u_max[idx] + neg_u_min[idx];
        if spread.abs() > tie_tolerance {
            equal_value_violations.push((node.s, node.t, spread));
        }

        // Strict inferiority of extrinsically suboptimal actions under the
        // best extrinsically optimal continuation.
        let v_star_ie = problem.base_v.get(node.s, node.t) + u_max[idx];
        for a in 0..a_n {
            if baseline.contains(&a) {
                continue;
            }
            let q_bar: f64 = problem
                .edges(idx, a)
                .iter()
                .map(|e| {
                    let next = problem.node(e.next);
                    let cont = if next.done {
                        0.0
                    } else {
                        problem.base_v.get(next.s, next.t) + u_max[e.next]
                    };
                    e.p * (e.r_ext + e.f_shaped + problem.gamma_e * cont)
                })
                .sum();
            if q_bar >= v_star_ie - tie_tolerance {
                push_violation(
                    &mut strict_inferiority_violations,
                    node.s,
                    node.t,
                    a,
                    v_star_ie - q_bar,
                );
            }
        }
    }

    let mut rows: Vec<OptimalityRow> = rows_map.into_values().collect();
    rows.sort_by_key(|r| (r.t, r.s));
    for row in &mut rows {
        row.shaped.sort_unstable();
    }
    let verdict = if violations.is_empty() { Verdict::Preserved } else { Verdict::Violated };
    OptimalityReport {
        rows,
        violations,
        equal_value_violations,
        strict_inferiority_violations,
        verdict,
    }
}

fn push_violation(list: &mut Vec<Violation>, s: usize, t: usize, action: usize, q_gap: f64) {
    if let Some(existing) = list.iter_mut().find(|v| v.s == s && v.t == t && v.action == action) {
        if q_gap > existing.q_gap {
            existing.q_gap = q_gap;
        }
        return;
    }
    list.push(Violation { s, t, action, q_gap });
}

/// The maximum intrinsic return attainable while acting extrinsically
/// optimally: a restricted induction over the raw intrinsic stream,
/// breaking intrinsic ties toward the maximum. Returns the supporting
/// graph plus the per-node values.
pub fn compute_v_star_i(
    mdp: &Mdp,
    im: &ImDef,
    gamma_i: f64,
    opts: &OracleOptions,
) -> Result<(ShapedProblem, Vec<f64>), OracleError> {
    let problem = build_shaped_problem(mdp, im, &ShaperConfig::of_kind(ShaperKind::None), opts)?;
    let sets = optimal_action_set(&problem.base_q, opts.tie_tolerance);
    let (v, _) = problem.induct_max(
        |e, cont| e.f_raw + gamma_i * cont,
        Some(&|node: &Node, a: usize| sets.contains(node.s, node.t, a)),
    );
    Ok((problem, v))
}

/// Component values of a policy on an augmented problem: exact extrinsic
/// tables on the base MDP plus per-node intrinsic values.
pub struct PolicyComponentValues {
    pub v_e: ValueTable,
    pub q_e: QTable,
    /// Raw intrinsic state values per node, under the shaper's discount.
    pub v_i_raw: Vec<f64>,
    /// Shaped intrinsic state/action values per node.
    pub v_i_shaped: Vec<f64>,
    pub q_i_shaped: Vec<f64>,
}

/// Evaluate one policy's extrinsic and intrinsic components exactly.
///
/// For the critic-based shapers (`adops`, `adopes`; `adops_ideal` is
/// handled upstream by the problem builder), the correction on each edge is
/// derived from this same policy's exact values: the extrinsic tables and
/// the raw intrinsic values stand in for the converged critics, and the
/// one-step shaped backup continues with the raw intrinsic value, mirroring
/// how a critic trained on the shaped stream is consulted.
pub fn evaluate_policy_components(
    problem: &ShapedProblem,
    policy: &Policy,
    mdp: &Mdp,
    shaper: &ShaperConfig,
) -> Result<PolicyComponentValues, OracleError> {
    let (v_e, q_e) = policy_evaluation(mdp, policy, None)?;
    let gamma_i = shaper.gamma_i;
    let (v_i_raw, _) =
        problem.evaluate_policy_component(policy, |e, cont| e.f_raw + gamma_i * cont);

    let critic_based = matches!(shaper.kind, ShaperKind::Adops | ShaperKind::Adopes);
    let zeta = match shaper.kind {
        ShaperKind::Adopes => shaper.zeta0.unwrap_or(0.0),
        _ => 1.0,
    };

    let a_n = problem.num_actions();
    let mut v_i_shaped = vec![0.0; problem.num_nodes()];
    let mut q_i_shaped = vec![0.0; problem.num_nodes() * a_n];
    for idx in (0..problem.num_nodes()).rev() {
        let node = problem.node(idx);
        if node.done {
            continue;
        }
        let mut acc = 0.0;
        for a in 0..a_n {
            let qa: f64 = problem
                .edges(idx, a)
                .iter()
                .map(|e| {
                    let f_shaped = if critic_based {
                        let inputs = AdopsInputs {
                            v_e: v_e.get(node.s, node.t),
                            q_e: q_e.get(node.s, a, node.t),
                            v_i: v_i_raw[idx],
                            v_i_next: v_i_raw[e.next],
                            gamma_i,
                            f: e.f_raw,
                            epsilon: shaper.epsilon,
                        };
                        e.f_raw + zeta * adops_f2(&inputs)
                    } else {
                        e.f_shaped
                    };
                    // Continuation on the same estimate the correction uses.
                    let cont = if critic_based { v_i_raw[e.next] } else { v_i_shaped[e.next] };
                    e.p * (f_shaped + gamma_i * cont)
                })
                .sum();
            q_i_shaped[idx * a_n + a] = qa;
            acc += policy.prob(node.s, a, node.t) * qa;
        }
        v_i_shaped[idx] = acc;
    }
    Ok(PolicyComponentValues { v_e, q_e, v_i_raw, v_i_shaped, q_i_shaped })
}

impl PolicyComponentValues {
    /// Combined state value at a node: V_E + V_I (raw intrinsic estimate
    /// for the critic-based shapers).
    pub fn v_ie(&self, problem: &ShapedProblem, idx: usize, critic_based: bool) -> f64 {
        let node = problem.node(idx);
        let vi = if critic_based { self.v_i_raw[idx] } else { self.v_i_shaped[idx] };
        self.v_e.get(node.s, node.t) + vi
    }

    /// Combined action value at a node.
    pub fn q_ie(&self, problem: &ShapedProblem, idx: usize, a: usize) -> f64 {
        let node = problem.node(idx);
        self.q_e.get(node.s, a, node.t) + self.q_i_shaped[idx * problem.num_actions() + a]
    }
}

fn im_graph(mdp: &Mdp, im: &ImDef, opts: &OracleOptions) -> Result<ShapedProblem, OracleError> {
    build_shaped_problem(mdp, im, &ShaperConfig::of_kind(ShaperKind::None), opts)
}

fn problem_for_policy_checks(
    mdp: &Mdp,
    im: &ImDef,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<ShapedProblem, OracleError> {
    match shaper.kind {
        ShaperKind::Adops | ShaperKind::Adopes => im_graph(mdp, im, opts),
        _ => build_shaped_problem(mdp, im, shaper, opts),
    }
}

/// Decide whether the one-action perturbation structure around `policy` at
/// site (s, t) is unstable: taking `a_n` there is strictly worse under the
/// policy that takes `a_m`, while `a_m` is no worse under the policy that
/// takes `a_n`. Both sides are evaluated by exact policy evaluation of the
/// shaped problem; for the critic-based shapers each side's corrections are
/// derived from that side's own exact values.
#[allow(clippy::too_many_arguments)]
pub fn is_unstable(
    mdp: &Mdp,
    im: &ImDef,
    shaper: &ShaperConfig,
    policy: &Policy,
    s: usize,
    t: usize,
    a_n: usize,
    a_m: usize,
    opts: &OracleOptions,
) -> Result<bool, OracleError> {
    if a_n == a_m {
        return Ok(false);
    }
    let problem = problem_for_policy_checks(mdp, im, shaper, opts)?;
    is_unstable_on(&problem, mdp, shaper, policy, s, t, a_n, a_m)
}

/// `is_unstable` against a prebuilt problem graph (the stream graph for the
/// critic-based shapers, the shaped graph otherwise).
#[allow(clippy::too_many_arguments)]
pub fn is_unstable_on(
    problem: &ShapedProblem,
    mdp: &Mdp,
    shaper: &ShaperConfig,
    policy: &Policy,
    s: usize,
    t: usize,
    a_n: usize,
    a_m: usize,
) -> Result<bool, OracleError> {
    if a_n == a_m {
        return Ok(false);
    }
    let pi_n = policy.with_action(s, t, a_n);
    let pi_m = policy.with_action(s, t, a_m);

    let vals_n = evaluate_policy_components(problem, &pi_n, mdp, shaper)?;
    let vals_m = evaluate_policy_components(problem, &pi_m, mdp, shaper)?;
    let critic_based = matches!(shaper.kind, ShaperKind::Adops | ShaperKind::Adopes);

    // The two policies agree before (s, t), so the reachable digests there
    // coincide; occupancy under either policy identifies them.
    let occ = problem.occupancy(&pi_m);
    let mut found_site = false;
    for idx in 0..problem.num_nodes() {
        let node = problem.node(idx);
        if node.s != s || node.t != t || node.done || occ[idx] == 0.0 {
            continue;
        }
        found_site = true;
        let worse_under_m =
            vals_m.q_ie(problem, idx, a_n) < vals_m.v_ie(problem, idx, critic_based);
        let no_worse_under_n =
            vals_n.q_ie(problem, idx, a_m) >= vals_n.v_ie(problem, idx, critic_based);
        if worse_under_m && no_worse_under_n {
            return Ok(true);
        }
    }
    if !found_site {
        return Err(OracleError::UnreachableSite { s, t });
    }
    Ok(false)
}

/// One argmax disagreement found by `adops_policy_check`.
#[derive(Debug, Clone)]
pub struct ArgmaxMismatch {
    pub node: usize,
    pub s: usize,
    pub t: usize,
    pub extrinsic: Vec<usize>,
    pub combined: Vec<usize>,
}

/// One case-sign disagreement: an action on the wrong side of the value.
#[derive(Debug, Clone)]
pub struct CaseSignViolation {
    pub node: usize,
    pub s: usize,
    pub t: usize,
    pub action: usize,
    pub q_e_minus_v_e: f64,
    pub q_ie_minus_v_ie: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AdopsPolicyReport {
    pub argmax_mismatches: Vec<ArgmaxMismatch>,
    pub case_sign_violations: Vec<CaseSignViolation>,
    pub nodes_checked: usize,
}

/// Check the practical-correction properties for one policy with exact
/// critic values, at every node reachable under any behavior:
///
/// * case-sign: an action is combined-worse than the policy's value exactly
///   when it is extrinsically worse;
/// * argmax: the combined and extrinsic optimal action sets coincide.
pub fn adops_policy_check(
    mdp: &Mdp,
    im: &ImDef,
    policy: &Policy,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<AdopsPolicyReport, OracleError> {
    let problem = im_graph(mdp, im, opts)?;
    adops_policy_check_on(&problem, mdp, policy, shaper, opts)
}

/// `adops_policy_check` against a prebuilt stream graph, for sweeps over
/// many policies.
pub fn adops_policy_check_on(
    problem: &ShapedProblem,
    mdp: &Mdp,
    policy: &Policy,
    shaper: &ShaperConfig,
    opts: &OracleOptions,
) -> Result<AdopsPolicyReport, OracleError> {
    let vals = evaluate_policy_components(problem, policy, mdp, shaper)?;
    let a_n = problem.num_actions();

    let mut report = AdopsPolicyReport::default();
    for idx in 0..problem.num_nodes() {
        let node = problem.node(idx);
        if node.done {
            continue;
        }
        report.nodes_checked += 1;
        let v_e = vals.v_e.get(node.s, node.t);
        let v_ie = vals.v_ie(problem, idx, true);

        let mut q_e_row = Vec::with_capacity(a_n);
        let mut q_ie_row = Vec::with_capacity(a_n);
        for a in 0..a_n {
            let q_e = vals.q_e.get(node.s, a, node.t);
            let q_ie = vals.q_ie(problem, idx, a);
            q_e_row.push(q_e);
            q_ie_row.push(q_ie);
            let ext_worse = q_e < v_e;
            let sign_ok = if ext_worse { q_ie < v_ie } else { q_ie >= v_ie - 1e-12 };
            if !sign_ok {
                report.case_sign_violations.push(CaseSignViolation {
                    node: idx,
                    s: node.s,
                    t: node.t,
                    action: a,
                    q_e_minus_v_e: q_e - v_e,
                    q_ie_minus_v_ie: q_ie - v_ie,
                });
            }
        }
        let ext_set = tie_argmax(&q_e_row, opts.tie_tolerance);
        let comb_set = tie_argmax(&q_ie_row, opts.tie_tolerance);
        if ext_set != comb_set {
            report.argmax_mismatches.push(ArgmaxMismatch {
                node: idx,
                s: node.s,
                t: node.t,
                extrinsic: ext_set,
                combined: comb_set,
            });
        }
    }
    Ok(report)
}

/// Per-action returns of the counterexample shaping stream F' = R at the
/// most action-separated (s, t).
#[derive(Debug, Clone)]
pub struct InexpressibilityReport {
    pub s: usize,
    pub t: usize,
    /// Return of taking each action, then continuing optimally, with the
    /// shaping stream equal to the extrinsic reward.
    pub returns: Vec<f64>,
    pub gap: f64,
    pub tie_tolerance: f64,
}

impl InexpressibilityReport {
    /// The counterexample applies: the stream's return depends on the
    /// action, so no future-agnostic matching can reproduce it.
    pub fn passes(&self) -> bool {
        self.gap > self.tie_tolerance
    }
}

/// Instantiate the counterexample shaping stream F' = R and measure the
/// action-dependence of its return at the most distinguishing (s, t). A
/// matching-based transform forces that return to be action-independent,
/// so a positive gap certifies inexpressibility.
pub fn grm_inexpressibility_check(
    mdp: &Mdp,
    tie_tolerance: f64,
) -> Result<InexpressibilityReport, OracleError> {
    let (_, q) = value_iteration(mdp, None)?;
    let mut best: Option<(usize, usize, f64)> = None;
    for t in 0..mdp.horizon() {
        for s in 0..mdp.num_states() {
            if mdp.is_terminal(s) {
                continue;
            }
            let row = q.row(s, t);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let gap = max - min;
            if best.map_or(true, |(_, _, g)| gap > g) {
                best = Some((s, t, gap));
            }
        }
    }
    let (s, t, gap) = best.unwrap_or((0, 0, 0.0));
    if gap <= tie_tolerance {
        return Err(OracleError::NoDistinguishingState { max_gap: gap });
    }
    Ok(InexpressibilityReport { s, t, returns: q.row(s, t).to_vec(), gap, tie_tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_env, chest, EnvSpec};
    use crate::intrinsic::ImConfig;
    use crate::mdp::RewardTableBuilder;

    fn chest_env() -> crate::env::BuiltEnv {
        build_env(&EnvSpec::two_path_chest()).unwrap()
    }

    /// The designed hack: a count bonus of 0.6 granted only at the right
    /// room, exceeding the discounted payout gap of 0.45.
    fn hack_im(mdp: &Mdp) -> ImDef {
        ImDef::new(ImConfig::count(0.6).only_states([chest::RIGHT_ROOM]), mdp.num_states())
    }

    fn cert_opts() -> OracleOptions {
        OracleOptions::default()
    }

    fn cert_shaper(kind: ShaperKind, gamma_e: f64) -> ShaperConfig {
        ShaperConfig::of_kind(kind).with_gamma_i(gamma_e)
    }

    #[test]
    fn unshaped_chest_optimum_is_left() {
        let env = chest_env();
        let im = ImDef::new(ImConfig::none(), 4);
        let problem = build_shaped_problem(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::None, env.mdp.gamma_e()),
            &cert_opts(),
        )
        .unwrap();
        let sets = optimal_policy_set_bruteforce(&problem, 1e-9);
        let start = problem.start_nodes()[0].0;
        assert_eq!(sets.sets[start], vec![chest::LEFT]);
    }

    #[test]
    fn raw_count_bonus_flips_the_chest() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let problem = build_shaped_problem(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::Raw, env.mdp.gamma_e()),
            &cert_opts(),
        )
        .unwrap();
        let sets = optimal_policy_set_bruteforce(&problem, 1e-9);
        let start = problem.start_nodes()[0].0;
        assert_eq!(sets.sets[start], vec![chest::RIGHT]);

        let report = check_optimality_preserved(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::Raw, env.mdp.gamma_e()),
            &cert_opts(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
        assert!(report.violations.iter().any(|v| v.s == chest::START && v.t == 0));
    }

    #[test]
    fn zero_shaping_preserves_everything() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let report = check_optimality_preserved(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::None, env.mdp.gamma_e()),
            &cert_opts(),
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::Preserved);
        assert!(report.equal_value_violations.is_empty());
        assert!(report.strict_inferiority_violations.is_empty());
    }

    #[test]
    fn preserving_shapers_certify_on_the_hack_fixture() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let g = env.mdp.gamma_e();
        for shaper in [
            cert_shaper(ShaperKind::AdopsIdeal, g),
            cert_shaper(ShaperKind::Grm, g).with_d(1),
            cert_shaper(ShaperKind::Pbim, g),
            cert_shaper(ShaperKind::PbimNorm, g),
            cert_shaper(ShaperKind::Pies, g).with_zeta0(0.0),
        ] {
            let report = check_optimality_preserved(&env.mdp, &im, &shaper, &cert_opts()).unwrap();
            assert_eq!(
                report.verdict,
                Verdict::Preserved,
                "{:?} failed: {:?}",
                shaper.kind,
                report.violations
            );
        }
    }

    #[test]
    fn ideal_adops_clamps_the_decoy_by_epsilon() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let shaper = cert_shaper(ShaperKind::AdopsIdeal, env.mdp.gamma_e());
        let problem = build_shaped_problem(&env.mdp, &im, &shaper, &cert_opts()).unwrap();
        let (_, q) = problem.optimal_combined();
        let start = problem.start_nodes()[0].0;
        let a = problem.num_actions();
        let q_left = q[start * a + chest::LEFT];
        let q_right = q[start * a + chest::RIGHT];
        assert!((q_left - 0.9).abs() < 1e-12);
        assert!((q_right - (0.9 - 1e-7)).abs() < 1e-9);
    }

    #[test]
    fn v_star_i_examples() {
        let env = chest_env();
        // No intrinsic stream: identically zero.
        let im = ImDef::new(ImConfig::none(), 4);
        let (_, v) = compute_v_star_i(&env.mdp, &im, 0.9, &cert_opts()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));

        // Unique extrinsic optimum (LEFT): the decoy bonus on the other
        // path is unreachable while acting optimally.
        let im = hack_im(&env.mdp);
        let (problem, v) = compute_v_star_i(&env.mdp, &im, 0.9, &cert_opts()).unwrap();
        assert_eq!(v[problem.start_nodes()[0].0], 0.0);

        // Extrinsically tied paths with different intrinsic returns: the
        // restricted optimum takes the richer one.
        let mut spec = EnvSpec::two_path_chest();
        spec.right_reward = Some(1.0);
        let env = build_env(&spec).unwrap();
        let model = crate::intrinsic::NoveltyModel::with_targets(
            vec![0.0, 0.3f64.sqrt(), 0.5f64.sqrt(), 0.0],
            0.5,
        );
        let im = ImDef::with_novelty_model(
            ImConfig::rnd_tabular(0, 0.5).only_states([chest::LEFT_ROOM, chest::RIGHT_ROOM]),
            &model,
        );
        let (problem, v) = compute_v_star_i(&env.mdp, &im, 0.9, &cert_opts()).unwrap();
        assert!((v[problem.start_nodes()[0].0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let opts = OracleOptions { cap: 3, ..OracleOptions::default() };
        let err = check_optimality_preserved(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::Raw, env.mdp.gamma_e()),
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::CapExceeded { cap: 3, .. }));
    }

    #[test]
    fn practical_shapers_rejected_by_problem_builder() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let err = build_shaped_problem(
            &env.mdp,
            &im,
            &cert_shaper(ShaperKind::Adops, env.mdp.gamma_e()),
            &cert_opts(),
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::PolicyDependentShaper(ShaperKind::Adops)));
    }

    #[test]
    fn instability_examples() {
        let env = chest_env();
        let im = hack_im(&env.mdp);
        let shaper = cert_shaper(ShaperKind::Adops, env.mdp.gamma_e());
        let right_everywhere = Policy::stationary(4, 2, 3, &[chest::RIGHT; 4]);

        // Same action on both sides: trivially stable.
        assert!(!is_unstable(
            &env.mdp,
            &im,
            &shaper,
            &right_everywhere,
            chest::START,
            0,
            chest::RIGHT,
            chest::RIGHT,
            &cert_opts()
        )
        .unwrap());

        // Taking the extrinsically suboptimal branch under the practical
        // correction: the constructed instability.
        assert!(is_unstable(
            &env.mdp,
            &im,
            &shaper,
            &right_everywhere,
            chest::START,
            0,
            chest::RIGHT,
            chest::LEFT,
            &cert_opts()
        )
        .unwrap());

        // Unshaped problem, extrinsically optimal policy: stable against
        // every one-action perturbation at every reachable site.
        let im0 = ImDef::new(ImConfig::none(), 4);
        let none = cert_shaper(ShaperKind::None, env.mdp.gamma_e());
        let left_everywhere = Policy::stationary(4, 2, 3, &[chest::LEFT; 4]);
        for (s, t) in [(chest::START, 0), (chest::LEFT_ROOM, 1)] {
            for a_m in 0..2 {
                assert!(!is_unstable(
                    &env.mdp,
                    &im0,
                    &none,
                    &left_everywhere,
                    s,
                    t,
                    chest::LEFT,
                    a_m,
                    &cert_opts()
                )
                .unwrap());
            }
        }
    }

    #[test]
    fn inexpressibility_bandit_and_chest() {
        // One-step bandit with payouts 1.0 / 0.5.
        let mut rb = RewardTableBuilder::new(2, 2);
        rb.set(0, 0, 1, 1.0);
        rb.set(0, 1, 1, 0.5);
        let bandit = Mdp::new(
            2,
            2,
            vec![1.0, 0.0],
            &[(0, 0, 1, 1.0), (0, 1, 1, 1.0)],
            rb.build(),
            0.99,
            1,
            vec![false, true],
        )
        .unwrap();
        let report = grm_inexpressibility_check(&bandit, 1e-9).unwrap();
        assert!((report.gap - 0.5).abs() < 1e-12);
        assert!(report.passes());

        let env = chest_env();
        let report = grm_inexpressibility_check(&env.mdp, 1e-9).unwrap();
        assert_eq!((report.s, report.t), (chest::START, 0));
        assert!((report.gap - 0.45).abs() < 1e-12);

        // All actions identical everywhere: counterexample inapplicable.
        let mut rb = RewardTableBuilder::new(2, 2);
        rb.set(0, 0, 1, 1.0);
        rb.set(0, 1, 1, 1.0);
        let flat = Mdp::new(
            2,
            2,
            vec![1.0, 0.0],
            &[(0, 0, 1, 1.0), (0, 1, 1, 1.0)],
            rb.build(),
            0.99,
            1,
            vec![false, true],
        )
        .unwrap();
        assert!(matches!(
            grm_inexpressibility_check(&flat, 1e-9),
            Err(OracleError::NoDistinguishingState { .. })
        ));
    }

    #[test]
    fn equal_value_property_under_ideal_adops() {
        // Extrinsically tied paths with asymmetric intrinsic bonuses: the
        // ideal correction tops the poorer path up to parity.
        let mut spec = EnvSpec::two_path_chest();
        spec.right_reward = Some(1.0);
        let env = build_env(&spec).unwrap();
        let im =
            ImDef::new(ImConfig::count(0.6).only_states([chest::RIGHT_ROOM]), env.mdp.num_states());
        let shaper = cert_shaper(ShaperKind::AdopsIdeal, env.mdp.gamma_e());
        let report = check_optimality_preserved(&env.mdp, &im, &shaper, &cert_opts()).unwrap();
        assert_eq!(report.verdict, Verdict::Preserved);
        assert!(report.equal_value_violations.is_empty());

        let problem = build_shaped_problem(&env.mdp, &im, &shaper, &cert_opts()).unwrap();
        let (_, q) = problem.optimal_combined();
        let start = problem.start_nodes()[0].0;
        let a = problem.num_actions();
        assert!((q[start * a + chest::LEFT] - q[start * a + chest::RIGHT]).abs() < 1e-9);
    }
}
