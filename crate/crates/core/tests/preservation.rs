//! Preservation sweep: every bundled environment, crossed with each
//! intrinsic stream kind and each guarantee-bearing shaper, must certify as
//! optimality-preserving by exact augmented-space induction. The zero-delay
//! and raw transforms bracket the sweep as sanity checks.

use opshape_core::env::{build_env, chest, EnvKind, EnvSpec};
use opshape_core::intrinsic::{ImConfig, ImDef};
use opshape_core::mdp::Policy;
use opshape_core::oracle::{
    build_shaped_problem, check_optimality_preserved, compare_optimal_sets, OracleOptions,
    Verdict,
};
use opshape_core::shaping::{ShaperConfig, ShaperKind};

fn sweep_envs() -> Vec<opshape_core::env::BuiltEnv> {
    let mut corridor = EnvSpec::long_corridor(6);
    corridor.gamma_e = Some(0.9);
    let mut cliff = EnvSpec::builtin(EnvKind::CliffWalk);
    cliff.horizon = Some(7);
    vec![
        build_env(&EnvSpec::two_path_chest()).unwrap(),
        build_env(&corridor).unwrap(),
        build_env(&EnvSpec::builtin(EnvKind::GridWorld)).unwrap(),
        build_env(&cliff).unwrap(),
    ]
}

fn sweep_ims(num_states: usize) -> Vec<(&'static str, ImDef)> {
    vec![
        ("count", ImDef::new(ImConfig::count(0.6), num_states)),
        ("rnd_tabular", ImDef::new(ImConfig::rnd_tabular(11, 0.5), num_states)),
        ("constant", ImDef::new(ImConfig::constant(0.3), num_states)),
    ]
}

fn sweep_shapers(gamma_e: f64) -> Vec<(&'static str, ShaperConfig)> {
    vec![
        ("grm_d1", ShaperConfig::of_kind(ShaperKind::Grm).with_gamma_i(gamma_e).with_d(1)),
        ("grm_d2", ShaperConfig::of_kind(ShaperKind::Grm).with_gamma_i(gamma_e).with_d(2)),
        ("pbim", ShaperConfig::of_kind(ShaperKind::Pbim).with_gamma_i(gamma_e)),
        ("pbim_norm", ShaperConfig::of_kind(ShaperKind::PbimNorm).with_gamma_i(gamma_e)),
        ("adops_ideal", ShaperConfig::of_kind(ShaperKind::AdopsIdeal).with_gamma_i(gamma_e)),
        ("pies_zeta0", ShaperConfig::of_kind(ShaperKind::Pies).with_gamma_i(gamma_e).with_zeta0(0.0)),
    ]
}

#[test]
fn guarantee_bearing_shapers_preserve_on_every_fixture() {
    // A nonzero running mean exercises the normalized variants' shift path.
    let opts = OracleOptions { initial_mean_estimate: 0.1, ..OracleOptions::default() };
    for env in sweep_envs() {
        for (im_name, im) in sweep_ims(env.mdp.num_states()) {
            for (shaper_name, shaper) in sweep_shapers(env.mdp.gamma_e()) {
                let report =
                    check_optimality_preserved(&env.mdp, &im, &shaper, &opts).unwrap();
                assert_eq!(
                    report.verdict,
                    Verdict::Preserved,
                    "{} x {im_name} x {shaper_name}: {:?}",
                    env.name,
                    report.violations
                );
                assert!(
                    report.strict_inferiority_violations.is_empty(),
                    "{} x {im_name} x {shaper_name}: suboptimal action not strictly below: {:?}",
                    env.name,
                    report.strict_inferiority_violations
                );
            }
        }
    }
}

/// Exhaustive cross-check on the decoy fixture: enumerate every
/// deterministic policy over the augmented graph directly, recover the
/// optimal action set at the start from plain policy evaluation, and compare
/// with the induction-based certifier for both a violating and a preserving
/// shaper.
#[test]
fn enumeration_cross_checks_the_certifier() {
    let env = build_env(&EnvSpec::two_path_chest()).unwrap();
    let im = ImDef::new(
        ImConfig::count(0.6).only_states([chest::RIGHT_ROOM]),
        env.mdp.num_states(),
    );
    let opts = OracleOptions::default();

    for (kind, expected_start) in [
        (ShaperKind::Raw, vec![chest::RIGHT]),
        (ShaperKind::Grm, vec![chest::LEFT]),
        (ShaperKind::AdopsIdeal, vec![chest::LEFT]),
    ] {
        let shaper = ShaperConfig::of_kind(kind).with_gamma_i(env.mdp.gamma_e()).with_d(1);
        let problem = build_shaped_problem(&env.mdp, &im, &shaper, &opts).unwrap();

        // Enumerate deterministic stationary-in-(s, t) policies and evaluate
        // the combined stream exactly; collect the best-start-value actions.
        let n_states = env.mdp.num_states();
        let horizon = env.mdp.horizon();
        let slots = n_states * horizon;
        let mut best = f64::NEG_INFINITY;
        let mut best_actions: Vec<usize> = Vec::new();
        for mask in 0..(1u32 << slots) {
            let actions: Vec<usize> =
                (0..slots).map(|i| ((mask >> i) & 1) as usize).collect();
            let policy = Policy::deterministic(n_states, 2, horizon, &actions);
            let (v, _) = problem
                .evaluate_policy_component(&policy, |e, cont| {
                    e.r_ext + e.f_shaped + problem.gamma_e() * cont
                });
            let start_value: f64 =
                problem.start_nodes().iter().map(|&(idx, p)| p * v[idx]).sum();
            let start_action = actions[env.decision_state];
            if start_value > best + 1e-9 {
                best = start_value;
                best_actions = vec![start_action];
            } else if start_value >= best - 1e-9 && !best_actions.contains(&start_action) {
                best_actions.push(start_action);
            }
        }
        best_actions.sort_unstable();

        let report = compare_optimal_sets(&problem, opts.tie_tolerance);
        let start_row =
            report.rows.iter().find(|r| r.s == env.decision_state && r.t == 0).unwrap();
        assert_eq!(
            start_row.shaped, expected_start,
            "{kind:?}: certifier start set disagrees with expectation"
        );
        assert_eq!(
            best_actions, expected_start,
            "{kind:?}: enumeration start set disagrees with expectation"
        );
    }
}
