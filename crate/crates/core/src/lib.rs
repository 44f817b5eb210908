//! Optimality-preserving reward shaping over finite MDPs.
//!
//! The crate bundles:
//!
//! * exact finite-horizon solvers ([`mdp`]),
//! * small benchmark environments with designed failure modes ([`env`]),
//! * history-dependent intrinsic-motivation streams ([`intrinsic`]),
//! * the shaping transforms themselves ([`shaping`]),
//! * a brute-force certification oracle that decides whether a shaped
//!   problem preserves the unshaped optimal policy set ([`oracle`]),
//! * tabular actor-critic / Q-learning training loops ([`learner`]),
//! * a structured text format for MDPs ([`specfile`]).

pub mod env;
pub mod intrinsic;
pub mod learner;
pub mod mdp;
pub mod oracle;
pub mod shaping;
pub mod specfile;

pub use env::{build_env, rollout, BuiltEnv, EnvKind, EnvSpec, Trajectory};
pub use intrinsic::{ImConfig, ImDef, ImKind, ImState, IntrinsicStream};
pub use mdp::{
    discounted_return, optimal_action_set, policy_evaluation, value_iteration, Mdp, MdpError,
    OptimalActionSet, Policy, QTable, ValueTable, DEFAULT_TIE_TOLERANCE,
};
pub use learner::{exact_critic_snapshot, train, Critic, LearningCurve, PolicyKind, TrainConfig, TrainError};
pub use oracle::{
    adops_policy_check, build_shaped_problem, check_optimality_preserved, compute_v_star_i,
    grm_inexpressibility_check, is_unstable, optimal_policy_set_bruteforce, OptimalityReport,
    OracleError, OracleOptions, ShapedProblem, Verdict,
};
pub use shaping::{
    adops_f2, adopes_step, check_matching, grm_delay_step, grm_general_step, omega_decomposition,
    pbim_step, pies_update, shaped_reward, AdopsInputs, CriticShaper, EpisodeLedger,
    MatchingFunction, ShaperConfig, ShaperKind, ShapingEvent, StreamShaper, ZetaSchedule,
};
