//! Streaming reward-shaping transforms.
//!
//! Five families turn a raw intrinsic stream F_t into a shaped stream F'_t:
//!
//! * PBIM: emit F_t (optionally mean-shifted) during the episode, then
//!   subtract the whole discounted backlog in one end-of-episode correction.
//! * GRM: match every issued reward with discounted subtractions at later
//!   steps via a matching function; the delay-D family subtracts each reward
//!   D steps later or at episode end, whichever comes first.
//! * PIES: scale the raw stream by a coefficient that decays linearly to 0.
//! * ADOPS: add a correction F2 derived from value estimates that clamps the
//!   intrinsic signal exactly when it would flip an action's optimality
//!   status (ideal form uses optimal values, practical form uses critics).
//! * ADOPES: ADOPS with the F2 correction ramped in from 0 to 1.
//!
//! The end-of-episode correction uses the exponent convention that makes the
//! discounted shaped return of every episode exactly zero, under which the
//! delay family with D >= N-1 coincides bit-for-bit with PBIM.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("shaping event after episode end; call end_episode first")]
    EventAfterDone,

    #[error("out-of-order shaping event: expected t={expected}, got t={got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("matching function failed validation: {0}")]
    InvalidMatching(String),
}

/// One step of the stream a shaper consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingEvent {
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    /// Raw intrinsic reward issued this step.
    pub f_raw: f64,
    /// True exactly once per episode, on its final step.
    pub done: bool,
}

/// Combined reward seen by the agent: R'_t = R_t + F'_t.
pub fn shaped_reward(r_ext: f64, f_shaped: f64) -> f64 {
    r_ext + f_shaped
}

// ---------------------------------------------------------------------------
// Episode ledger (PBIM / GRM bookkeeping)
// ---------------------------------------------------------------------------

/// Per-episode bookkeeping for the matching shapers plus the cross-episode
/// mean estimate used by the normalized variants.
///
/// `shifted` holds the issued rewards (mean-shifted when normalizing);
/// `matched` holds, per issued reward, the fraction already subtracted.
#[derive(Debug, Clone)]
pub struct EpisodeLedger {
    shifted: Vec<f64>,
    matched: Vec<f64>,
    step: usize,
    done_seen: bool,
    /// Smoothed per-step mean of the raw stream, updated at episode end.
    mean_estimate: f64,
    alpha: f64,
    raw_sum: f64,
    raw_count: usize,
}

/// Hashable snapshot of a ledger's episode state. All ledger updates are
/// deterministic, so bit-equal snapshots imply identical histories.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LedgerSnapshot {
    shifted: Vec<u64>,
    matched: Vec<u64>,
    step: usize,
    done_seen: bool,
    mean_estimate: u64,
}

impl EpisodeLedger {
    pub fn new(alpha: f64) -> Self {
        Self {
            shifted: Vec::new(),
            matched: Vec::new(),
            step: 0,
            done_seen: false,
            mean_estimate: 0.0,
            alpha,
            raw_sum: 0.0,
            raw_count: 0,
        }
    }

    /// Start from a given mean estimate (e.g. mid-run certification).
    pub fn with_mean_estimate(alpha: f64, mean_estimate: f64) -> Self {
        let mut l = Self::new(alpha);
        l.mean_estimate = mean_estimate;
        l
    }

    pub fn mean_estimate(&self) -> f64 {
        self.mean_estimate
    }

    /// Discounted sum of the issued rewards so far: sum_i gamma^i shifted[i].
    pub fn discounted_backlog(&self, gamma_i: f64) -> f64 {
        let mut acc = 0.0;
        for &f in self.shifted.iter().rev() {
            acc = f + gamma_i * acc;
        }
        acc
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            shifted: self.shifted.iter().map(|v| v.to_bits()).collect(),
            matched: self.matched.iter().map(|v| v.to_bits()).collect(),
            step: self.step,
            done_seen: self.done_seen,
            mean_estimate: self.mean_estimate.to_bits(),
        }
    }

    fn admit(&mut self, ev: &ShapingEvent) -> Result<(), ShapingError> {
        if self.done_seen {
            return Err(ShapingError::EventAfterDone);
        }
        if ev.t != self.step {
            return Err(ShapingError::OutOfOrder { expected: self.step, got: ev.t });
        }
        self.raw_sum += ev.f_raw;
        self.raw_count += 1;
        Ok(())
    }

    /// Final-step correction: subtract every not-yet-matched reward,
    /// discounted back to the final step T. The final step's own reward is
    /// issued and matched simultaneously, contributing nothing.
    fn collapse(&mut self, gamma_i: f64) -> f64 {
        let t_final = self.step as i64;
        let mut acc = 0.0;
        for (i, (&f, &w)) in self.shifted.iter().zip(self.matched.iter()).enumerate() {
            let remaining = 1.0 - w;
            if remaining != 0.0 {
                acc += gamma_i.powi((i as i64 - t_final) as i32) * f * remaining;
            }
        }
        self.done_seen = true;
        -acc
    }

    /// Close the episode: fold the episode's raw mean into the smoothed
    /// estimate and clear per-episode state. Required after a done event
    /// before the next episode's events are admitted.
    pub fn end_episode(&mut self) {
        if self.raw_count > 0 {
            let episode_mean = self.raw_sum / self.raw_count as f64;
            self.mean_estimate = (1.0 - self.alpha) * self.mean_estimate + self.alpha * episode_mean;
        }
        self.shifted.clear();
        self.matched.clear();
        self.step = 0;
        self.done_seen = false;
        self.raw_sum = 0.0;
        self.raw_count = 0;
    }
}

/// PBIM transform: pass the (optionally mean-shifted) stream through and
/// account for all of it in one end-of-episode correction.
pub fn pbim_step(
    ledger: &mut EpisodeLedger,
    ev: &ShapingEvent,
    gamma_i: f64,
    normalized: bool,
) -> Result<f64, ShapingError> {
    ledger.admit(ev)?;
    let shift = if normalized { ledger.mean_estimate } else { 0.0 };
    let issued = ev.f_raw - shift;
    if ev.done {
        return Ok(ledger.collapse(gamma_i));
    }
    ledger.shifted.push(issued);
    ledger.matched.push(0.0);
    ledger.step += 1;
    Ok(issued)
}

/// Delay-D matching: each issued reward is subtracted D steps later, or at
/// episode end, whichever comes first. D = 0 cancels every reward on the
/// spot; D >= N-1 defers everything to the final step.
pub fn grm_delay_step(
    ledger: &mut EpisodeLedger,
    ev: &ShapingEvent,
    gamma_i: f64,
    d: usize,
    normalized: bool,
) -> Result<f64, ShapingError> {
    ledger.admit(ev)?;
    let shift = if normalized { ledger.mean_estimate } else { 0.0 };
    let issued = ev.f_raw - shift;
    if ev.done {
        return Ok(ledger.collapse(gamma_i));
    }
    ledger.shifted.push(issued);
    ledger.matched.push(0.0);
    let t = ledger.step;
    let mut out = issued;
    if t >= d {
        let i = t - d;
        out -= gamma_i.powi(-(d as i32)) * ledger.shifted[i] * 1.0;
        ledger.matched[i] = 1.0;
    }
    ledger.step += 1;
    Ok(out)
}

// ---------------------------------------------------------------------------
// General matching functions
// ---------------------------------------------------------------------------

/// A matching function m(t, t') in [0, 1] over 0 <= t, t' < n: the fraction
/// of the reward issued at t' subtracted at step t.
#[derive(Clone)]
pub struct MatchingFunction {
    n: usize,
    m: Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>,
}

impl MatchingFunction {
    pub fn new(n: usize, m: impl Fn(usize, usize) -> f64 + Send + Sync + 'static) -> Self {
        Self { n, m: Arc::new(m) }
    }

    /// Identity matching: every reward cancels itself immediately.
    pub fn identity(n: usize) -> Self {
        Self::new(n, |t, tp| if t == tp { 1.0 } else { 0.0 })
    }

    /// The delay-D family expressed as a matching function: reward issued at
    /// t' is matched at min(t' + D, n - 1).
    pub fn delay(n: usize, d: usize) -> Self {
        Self::new(n, move |t, tp| if t == (tp + d).min(n - 1) { 1.0 } else { 0.0 })
    }

    pub fn value(&self, t: usize, t_prime: usize) -> f64 {
        (self.m)(t, t_prime)
    }

    pub fn horizon(&self) -> usize {
        self.n
    }
}

impl std::fmt::Debug for MatchingFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MatchingFunction(n={})", self.n)
    }
}

/// One violated matching condition.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchingViolation {
    /// sum_{j >= t'} m(j, t') differs from 1.
    NotFullyMatching { t_prime: usize, sum: f64 },
    /// m(t, t') != 0 for t' > t: depends on a reward not yet issued.
    NotFutureAgnostic { t: usize, t_prime: usize, value: f64 },
    /// m(t, t') outside [0, 1].
    OutOfRange { t: usize, t_prime: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub struct MatchingReport {
    pub violations: Vec<MatchingViolation>,
}

impl MatchingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A matching function that passed `check_matching`.
#[derive(Debug, Clone)]
pub struct ValidatedMatching(MatchingFunction);

impl ValidatedMatching {
    pub fn inner(&self) -> &MatchingFunction {
        &self.0
    }
}

pub const MATCHING_TOL: f64 = 1e-12;

/// Validate a matching function over horizon `n`: every issued reward must
/// be subtracted exactly once in total, only at or after its issue step,
/// with weights in [0, 1]. All violations are reported.
pub fn check_matching(m: &MatchingFunction, n: usize) -> MatchingReport {
    let mut violations = Vec::new();
    for t_prime in 0..n {
        let mut sum = 0.0;
        for t in 0..n {
            let v = m.value(t, t_prime);
            if !(0.0..=1.0).contains(&v) {
                violations.push(MatchingViolation::OutOfRange { t, t_prime, value: v });
            }
            if t_prime > t && v != 0.0 {
                violations.push(MatchingViolation::NotFutureAgnostic { t, t_prime, value: v });
            }
            if t >= t_prime {
                sum += v;
            }
        }
        if (sum - 1.0).abs() > MATCHING_TOL {
            violations.push(MatchingViolation::NotFullyMatching { t_prime, sum });
        }
    }
    MatchingReport { violations }
}

/// Validate and wrap a matching function for use with `grm_general_step`.
pub fn validate_matching(m: MatchingFunction, n: usize) -> Result<ValidatedMatching, ShapingError> {
    let report = check_matching(&m, n);
    if report.passed() {
        Ok(ValidatedMatching(m))
    } else {
        Err(ShapingError::InvalidMatching(format!(
            "{} violation(s), first: {:?}",
            report.violations.len(),
            report.violations[0]
        )))
    }
}

/// General matching transform: F'_t = F_t - sum_{i<=t} gamma^(i-t) F_i m(t, i).
/// An episode ending before the matching horizon collapses the outstanding
/// remainder into the final step, mirroring the delay family.
pub fn grm_general_step(
    ledger: &mut EpisodeLedger,
    ev: &ShapingEvent,
    gamma_i: f64,
    matching: &ValidatedMatching,
) -> Result<f64, ShapingError> {
    ledger.admit(ev)?;
    let issued = ev.f_raw;
    if ev.done {
        return Ok(ledger.collapse(gamma_i));
    }
    ledger.shifted.push(issued);
    ledger.matched.push(0.0);
    let t = ledger.step;
    let mut out = issued;
    for i in 0..=t {
        let w = matching.0.value(t, i);
        if w != 0.0 {
            out -= gamma_i.powi((i as i64 - t as i64) as i32) * ledger.shifted[i] * w;
            ledger.matched[i] += w;
        }
    }
    ledger.step += 1;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Zeta schedules (PIES / ADOPES)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaDirection {
    /// PIES: decay from 1 to 0.
    Down,
    /// ADOPES: ramp from 0 to 1.
    Up,
}

/// Linear coefficient schedule over training iterations. `C` is the number
/// of updates to traverse the unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaSchedule {
    c: f64,
    zeta0: f64,
    updates: u64,
    pub direction: ZetaDirection,
}

impl ZetaSchedule {
    pub fn new(c: f64, zeta0: f64, direction: ZetaDirection) -> Self {
        assert!(c > 0.0, "decay horizon C must be positive");
        assert!((0.0..=1.0).contains(&zeta0));
        Self { c, zeta0, updates: 0, direction }
    }

    pub fn pies(c: f64) -> Self {
        Self::new(c, 1.0, ZetaDirection::Down)
    }

    pub fn adopes(c: f64) -> Self {
        Self::new(c, 0.0, ZetaDirection::Up)
    }

    /// Current coefficient. Computed in closed form (equivalent to the
    /// stepwise recurrence, without accumulated rounding): down-schedules
    /// clamp at exactly 0, up-schedules at exactly 1.
    pub fn value(&self) -> f64 {
        let offset = self.updates as f64 / self.c;
        match self.direction {
            ZetaDirection::Down => (self.zeta0 - offset).max(0.0),
            ZetaDirection::Up => (self.zeta0 + offset).min(1.0),
        }
    }

    /// Advance one training iteration and return the new coefficient.
    pub fn update(&mut self) -> f64 {
        self.updates += 1;
        self.value()
    }
}

/// One PIES coefficient update (down-schedule).
pub fn pies_update(schedule: &mut ZetaSchedule) -> f64 {
    debug_assert_eq!(schedule.direction, ZetaDirection::Down);
    schedule.update()
}

// ---------------------------------------------------------------------------
// ADOPS / ADOPES
// ---------------------------------------------------------------------------

/// Value estimates feeding one ADOPS correction: extrinsic state/action
/// values at (s, t), intrinsic state values at s and the realized s', the
/// intrinsic discount, the raw intrinsic reward, and the strictness margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdopsInputs {
    pub v_e: f64,
    pub q_e: f64,
    pub v_i: f64,
    pub v_i_next: f64,
    pub gamma_i: f64,
    pub f: f64,
    pub epsilon: f64,
}

/// The correction residual and its mutually exclusive case indicators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaDecomposition {
    pub omega: f64,
    /// Extrinsically worse action whose residual is positive.
    pub c1: bool,
    /// Extrinsically no-worse action with a negative residual.
    pub c2: bool,
    /// Extrinsically worse action with a non-positive residual.
    pub c3: bool,
}

/// Residual Omega = V_E - Q_E + V_I - gamma_i V_I(s') - F with its case
/// split. At most one indicator is set.
pub fn omega_decomposition(inputs: &AdopsInputs) -> OmegaDecomposition {
    let omega = inputs.v_e - inputs.q_e + inputs.v_i - inputs.gamma_i * inputs.v_i_next - inputs.f;
    let worse = inputs.q_e < inputs.v_e;
    OmegaDecomposition {
        omega,
        c1: worse && omega > 0.0,
        c2: !worse && omega < 0.0,
        c3: worse && omega <= 0.0,
    }
}

/// The ADOPS correction:
///
/// * extrinsically worse action: clamp the intrinsic signal down until the
///   action stays strictly worse (by at least epsilon);
/// * extrinsically no-worse action: top the intrinsic signal up until the
///   action's combined return reaches parity.
///
/// Fed optimal values this is the ideal form; fed critic estimates under
/// the current policy it is the practical form.
pub fn adops_f2(inputs: &AdopsInputs) -> f64 {
    debug_assert!(inputs.epsilon > 0.0);
    let omega = inputs.v_e - inputs.q_e + inputs.v_i - inputs.gamma_i * inputs.v_i_next - inputs.f;
    if inputs.q_e < inputs.v_e {
        (omega - inputs.epsilon).min(0.0)
    } else {
        omega.max(0.0)
    }
}

/// Indicator form of the correction; agrees with `adops_f2` except on the
/// narrow band 0 < Omega < epsilon for extrinsically worse actions, where
/// the cased form is authoritative.
pub fn adops_f2_indicator_form(inputs: &AdopsInputs) -> f64 {
    let d = omega_decomposition(inputs);
    let c12 = (d.c1 as u8 + d.c2 as u8) as f64;
    let c3 = d.c3 as u8 as f64;
    d.omega - c12 * d.omega - c3 * inputs.epsilon
}

/// ADOPES step: the raw reward plus the ramped correction, F + zeta * F2.
/// At zeta = 1 this is exactly ADOPS; at zeta = 0, the raw stream.
pub fn adopes_step(schedule: &ZetaSchedule, f: f64, f2: f64) -> f64 {
    debug_assert_eq!(schedule.direction, ZetaDirection::Up);
    f + schedule.value() * f2
}

// ---------------------------------------------------------------------------
// Configured shapers
// ---------------------------------------------------------------------------

/// Which transform to apply (config key `shaper.kind`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShaperKind {
    None,
    Raw,
    Pbim,
    PbimNorm,
    Grm,
    GrmNorm,
    Pies,
    AdopsIdeal,
    Adops,
    Adopes,
}

impl ShaperKind {
    /// Whether the transform needs per-step value estimates.
    pub fn is_critic_based(self) -> bool {
        matches!(self, ShaperKind::AdopsIdeal | ShaperKind::Adops | ShaperKind::Adopes)
    }
}

/// Shaper configuration (config keys `shaper.*`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShaperConfig {
    pub kind: ShaperKind,
    /// Matching delay for the grm kinds.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Schedule horizon for pies/adopes.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_gamma_i")]
    pub gamma_i: f64,
    /// Mean-estimate smoothing factor for the normalized variants.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Initial schedule coefficient override (defaults: pies 1, adopes 0).
    #[serde(default)]
    pub zeta0: Option<f64>,
}

fn default_d() -> usize {
    1
}

fn default_c() -> f64 {
    1000.0
}

fn default_epsilon() -> f64 {
    1e-7
}

fn default_gamma_i() -> f64 {
    0.99
}

fn default_alpha() -> f64 {
    0.05
}

impl ShaperConfig {
    pub fn of_kind(kind: ShaperKind) -> Self {
        Self {
            kind,
            d: default_d(),
            c: default_c(),
            epsilon: default_epsilon(),
            gamma_i: default_gamma_i(),
            alpha: default_alpha(),
            zeta0: None,
        }
    }

    pub fn with_gamma_i(mut self, gamma_i: f64) -> Self {
        self.gamma_i = gamma_i;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_zeta0(mut self, zeta0: f64) -> Self {
        self.zeta0 = Some(zeta0);
        self
    }

    fn schedule(&self) -> Option<ZetaSchedule> {
        match self.kind {
            ShaperKind::Pies => {
                Some(ZetaSchedule::new(self.c, self.zeta0.unwrap_or(1.0), ZetaDirection::Down))
            }
            ShaperKind::Adopes => {
                Some(ZetaSchedule::new(self.c, self.zeta0.unwrap_or(0.0), ZetaDirection::Up))
            }
            _ => None,
        }
    }
}

/// A configured stream shaper: consumes raw-reward events, no value
/// estimates involved. Covers none/raw/pbim/pbim_norm/grm/grm_norm/pies.
#[derive(Debug, Clone)]
pub struct StreamShaper {
    config: ShaperConfig,
    ledger: EpisodeLedger,
    schedule: Option<ZetaSchedule>,
}

impl StreamShaper {
    pub fn new(config: ShaperConfig) -> Self {
        Self::with_mean_estimate(config, 0.0)
    }

    /// Start with a given cross-episode mean estimate.
    pub fn with_mean_estimate(config: ShaperConfig, mean_estimate: f64) -> Self {
        assert!(
            !config.kind.is_critic_based(),
            "critic-based shapers are driven through CriticShaper"
        );
        let schedule = config.schedule();
        let ledger = EpisodeLedger::with_mean_estimate(config.alpha, mean_estimate);
        Self { config, ledger, schedule }
    }

    pub fn config(&self) -> &ShaperConfig {
        &self.config
    }

    pub fn zeta(&self) -> f64 {
        self.schedule.map_or(f64::NAN, |s| s.value())
    }

    pub fn ledger(&self) -> &EpisodeLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut EpisodeLedger {
        &mut self.ledger
    }

    /// Shape one event.
    pub fn step(&mut self, ev: &ShapingEvent) -> Result<f64, ShapingError> {
        let g = self.config.gamma_i;
        match self.config.kind {
            ShaperKind::None => {
                self.ledger.admit(ev)?;
                self.after_passthrough(ev);
                Ok(0.0)
            }
            ShaperKind::Raw => {
                self.ledger.admit(ev)?;
                self.after_passthrough(ev);
                Ok(ev.f_raw)
            }
            ShaperKind::Pies => {
                self.ledger.admit(ev)?;
                self.after_passthrough(ev);
                let zeta = self.schedule.as_ref().expect("pies has a schedule").value();
                Ok(zeta * ev.f_raw)
            }
            ShaperKind::Pbim => pbim_step(&mut self.ledger, ev, g, false),
            ShaperKind::PbimNorm => pbim_step(&mut self.ledger, ev, g, true),
            ShaperKind::Grm => grm_delay_step(&mut self.ledger, ev, g, self.config.d, false),
            ShaperKind::GrmNorm => grm_delay_step(&mut self.ledger, ev, g, self.config.d, true),
            _ => unreachable!("critic-based kind in StreamShaper"),
        }
    }

    fn after_passthrough(&mut self, ev: &ShapingEvent) {
        if ev.done {
            self.ledger.done_seen = true;
        } else {
            self.ledger.step += 1;
        }
    }

    /// Close the episode: fold the mean estimate and advance the schedule
    /// by one training iteration.
    pub fn end_episode(&mut self) {
        self.ledger.end_episode();
        if let Some(s) = self.schedule.as_mut() {
            s.update();
        }
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }
}

/// A configured critic-based shaper (adops / adops_ideal / adopes): each
/// step takes the value estimates alongside the raw reward.
#[derive(Debug, Clone)]
pub struct CriticShaper {
    config: ShaperConfig,
    schedule: Option<ZetaSchedule>,
}

impl CriticShaper {
    pub fn new(config: ShaperConfig) -> Self {
        assert!(config.kind.is_critic_based());
        let schedule = config.schedule();
        Self { config, schedule }
    }

    pub fn config(&self) -> &ShaperConfig {
        &self.config
    }

    /// Coefficient multiplying the correction: 1 for the adops kinds,
    /// the ramp value for adopes.
    pub fn zeta(&self) -> f64 {
        self.schedule.map_or(1.0, |s| s.value())
    }

    /// Shaped reward F' = F + zeta * F2.
    pub fn step(&self, inputs: &AdopsInputs) -> f64 {
        let f2 = adops_f2(inputs);
        inputs.f + self.zeta() * f2
    }

    pub fn end_episode(&mut self) {
        if let Some(s) = self.schedule.as_mut() {
            s.update();
        }
    }
}
