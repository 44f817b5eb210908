//! Experiment execution: seed dispatch, CSV emission, aggregation, the
//! delay sweep, the verification report and the blowup calculator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use opshape_core::env::BuiltEnv;
use opshape_core::learner::{train, LearningCurve, TrainError};
use opshape_core::oracle::{
    check_optimality_preserved, OptimalityReport, OracleError, OracleOptions, Verdict,
};
use opshape_core::intrinsic::ImDef;
use opshape_core::shaping::ShaperKind;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("training aborted: {0}")]
    Train(#[from] TrainError),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("delay sweep requires shaper kind grm or grm_norm, got {0:?}")]
    SweepShaper(ShaperKind),

    #[error("delay sweep values must be nonempty and distinct")]
    SweepValues,
}

/// Per-seed raw CSV column order; every emitted curve file uses exactly this
/// header.
pub const CURVE_HEADER: &str = "iteration,episode,seed,ext_return,int_return_raw,int_return_shaped,zeta,max_action_prob,greedy_optimal,ext_return_smoothed";

/// Aggregate CSV column order.
pub const AGGREGATE_HEADER: &str = "iteration,episode,n_seeds,ext_return_mean,ext_return_stderr,int_return_raw_mean,int_return_shaped_mean,zeta_mean,max_action_prob_mean,greedy_optimal_rate,ext_return_smoothed";

/// Smoothing window for the trailing-mean return column.
pub const SMOOTHING_WINDOW: usize = 10;

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| HarnessError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, contents)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn trailing_mean(values: &[f64], idx: usize, window: usize) -> f64 {
    let from = (idx + 1).saturating_sub(window);
    let slice = &values[from..=idx];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Render one seed's curve in the pinned schema.
pub fn curve_csv(curve: &LearningCurve, seed: u64) -> String {
    let ext: Vec<f64> = curve.records.iter().map(|r| r.ext_return).collect();
    let mut out = String::with_capacity(64 * (curve.records.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for (i, r) in curve.records.iter().enumerate() {
        let smoothed = trailing_mean(&ext, i, SMOOTHING_WINDOW);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.episode,
            seed,
            r.ext_return,
            r.int_return_raw,
            r.int_return_shaped,
            r.zeta,
            r.max_action_prob,
            r.greedy_optimal as u8,
            smoothed
        )
        .expect("string write");
    }
    out
}

/// Render the across-seed aggregate (means, standard errors, flag rate,
/// trailing-smoothed mean return).
pub fn aggregate_csv(curves: &[(u64, LearningCurve)]) -> String {
    let n = curves.len();
    let rows = curves.iter().map(|(_, c)| c.records.len()).min().unwrap_or(0);
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    let mut ext_means = Vec::with_capacity(rows);
    for i in 0..rows {
        let cells: Vec<_> = curves.iter().map(|(_, c)| &c.records[i]).collect();
        let mean = |f: &dyn Fn(&opshape_core::learner::CurveRecord) -> f64| {
            cells.iter().map(|r| f(r)).sum::<f64>() / n as f64
        };
        let ext_mean = mean(&|r| r.ext_return);
        let ext_var = if n > 1 {
            cells.iter().map(|r| (r.ext_return - ext_mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        let stderr = (ext_var / n as f64).sqrt();
        ext_means.push(ext_mean);
        let smoothed = trailing_mean(&ext_means, i, SMOOTHING_WINDOW);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            cells[0].iteration,
            cells[0].episode,
            n,
            ext_mean,
            stderr,
            mean(&|r| r.int_return_raw),
            mean(&|r| r.int_return_shaped),
            mean(&|r| r.zeta),
            mean(&|r| r.max_action_prob),
            mean(&|r| if r.greedy_optimal { 1.0 } else { 0.0 }),
            smoothed
        )
        .expect("string write");
    }
    out
}

/// Outcome of one `run`: per-seed curves in seed order plus file locations.
pub struct RunOutcome {
    pub curves: Vec<(u64, LearningCurve)>,
    pub seed_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
}

impl RunOutcome {
    /// Mean final extrinsic return across seeds.
    pub fn final_mean_ext_return(&self) -> f64 {
        let n = self.curves.len() as f64;
        self.curves
            .iter()
            .filter_map(|(_, c)| c.final_record())
            .map(|r| r.ext_return)
            .sum::<f64>()
            / n
    }
}

/// Thread pool honoring the OPSHAPE_THREADS cap.
fn seed_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("OPSHAPE_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads > 0 {
                builder = builder.num_threads(threads);
            }
        }
    }
    builder.build().expect("thread pool")
}

/// Execute every seed of a config concurrently and write one CSV per seed
/// plus the aggregate. Results are merged in ascending seed order, so output
/// is independent of scheduling.
pub fn run(config: &RunConfig, config_dir: &Path) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let env = config.build_env(config_dir)?;
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();

    let pool = seed_pool();
    let results: Vec<(u64, Result<LearningCurve, TrainError>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| (seed, train(&env, &config.im, &config.shaper, &config.train, seed)))
            .collect()
    });

    let mut curves = Vec::with_capacity(results.len());
    for (seed, result) in results {
        curves.push((seed, result?));
    }

    let mut seed_files = Vec::new();
    for (seed, curve) in &curves {
        let path = config.output.join(format!("seed_{seed}.csv"));
        write_file(&path, &curve_csv(curve, *seed))?;
        seed_files.push(path);
    }
    let aggregate_file = config.output.join("aggregate.csv");
    write_file(&aggregate_file, &aggregate_csv(&curves))?;
    Ok(RunOutcome { curves, seed_files, aggregate_file })
}

/// One delay value's outcome in a sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub d: usize,
    pub final_mean_ext_return: f64,
    pub output: PathBuf,
}

/// Run the config once per delay value and rank the delays by final mean
/// extrinsic return (best first). Writes a ranking table next to the
/// per-delay outputs.
pub fn sweep_d(
    config: &RunConfig,
    config_dir: &Path,
    d_values: &[usize],
) -> Result<Vec<SweepEntry>, HarnessError> {
    if !matches!(config.shaper.kind, ShaperKind::Grm | ShaperKind::GrmNorm) {
        return Err(HarnessError::SweepShaper(config.shaper.kind));
    }
    if d_values.is_empty() {
        return Err(HarnessError::SweepValues);
    }
    let mut distinct = d_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != d_values.len() {
        return Err(HarnessError::SweepValues);
    }

    let mut entries = Vec::new();
    for &d in d_values {
        let mut sub = config.clone();
        sub.shaper.d = d;
        sub.output = config.output.join(format!("d_{d}"));
        let outcome = run(&sub, config_dir)?;
        entries.push(SweepEntry {
            d,
            final_mean_ext_return: outcome.final_mean_ext_return(),
            output: sub.output,
        });
    }
    entries.sort_by(|a, b| {
        b.final_mean_ext_return
            .partial_cmp(&a.final_mean_ext_return)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.d.cmp(&b.d))
    });

    let mut table = String::from("rank,d,final_mean_ext_return\n");
    for (rank, e) in entries.iter().enumerate() {
        writeln!(table, "{},{},{}", rank + 1, e.d, e.final_mean_ext_return).expect("string write");
    }
    write_file(&config.output.join("ranking.csv"), &table)?;
    Ok(entries)
}

/// Run the preservation check the config describes.
pub fn verify(
    config: &RunConfig,
    config_dir: &Path,
    opts: &OracleOptions,
) -> Result<(BuiltEnv, OptimalityReport), HarnessError> {
    let env = config.build_env(config_dir)?;
    let im = ImDef::new(config.im.clone(), env.mdp.num_states());
    let report = check_optimality_preserved(&env.mdp, &im, &config.shaper, opts)?;
    Ok((env, report))
}

/// Render an optimality report as the per-(state, time) text document.
pub fn render_report(env: &BuiltEnv, report: &OptimalityReport) -> String {
    let label = |s: usize| env.state_labels.get(s).cloned().unwrap_or_else(|| format!("s{s}"));
    let set = |actions: &[usize]| {
        let inner: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
        format!("{{{}}}", inner.join(","))
    };
    let mut out = String::new();
    writeln!(out, "state\tt\tbaseline\tshaped\tmatch").expect("string write");
    for row in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            label(row.s),
            row.t,
            set(&row.baseline),
            set(&row.shaped),
            if row.matches { "yes" } else { "NO" }
        )
        .expect("string write");
    }
    for v in &report.violations {
        writeln!(
            out,
            "violation: state={} t={} action={} q_gap={}",
            label(v.s),
            v.t,
            v.action,
            v.q_gap
        )
        .expect("string write");
    }
    for (s, t, spread) in &report.equal_value_violations {
        writeln!(out, "optimal-value spread: state={} t={} spread={}", label(*s), t, spread)
            .expect("string write");
    }
    for v in &report.strict_inferiority_violations {
        writeln!(
            out,
            "non-strict suboptimal action: state={} t={} action={} margin={}",
            label(v.s),
            v.t,
            v.action,
            v.q_gap
        )
        .expect("string write");
    }
    writeln!(
        out,
        "verdict: {}",
        if report.verdict == Verdict::Preserved { "preserved" } else { "violated" }
    )
    .expect("string write");
    out
}

/// Analytic end-of-episode correction magnitude for a constant stream.
#[derive(Debug, Clone, Copy)]
pub struct BlowupReport {
    pub gamma: f64,
    pub n: usize,
    pub f: f64,
    /// Discounted backlog of the first n-1 rewards.
    pub backlog: f64,
    /// |final correction| = backlog / gamma^(n-1).
    pub final_magnitude: f64,
    /// 1 / gamma^(n-1).
    pub inverse_discount: f64,
    /// Any reported quantity overflowed to infinity.
    pub overflowed: bool,
}

/// Compute the correction magnitude a constant stream of `f` accumulates
/// over an `n`-step episode at discount `gamma`. Overflow is reported as
/// infinity with a flag, never a crash.
pub fn blowup_demo(gamma: f64, n: usize, f: f64) -> BlowupReport {
    assert!(gamma > 0.0 && gamma <= 1.0, "discount must lie in (0, 1]");
    assert!(n >= 2, "need at least two steps");
    let steps = (n - 1) as f64;
    let backlog = if gamma == 1.0 { f * steps } else { f * (1.0 - gamma.powf(steps)) / (1.0 - gamma) };
    let inverse_discount = gamma.powi(-((n - 1) as i32));
    let final_magnitude = (backlog * inverse_discount).abs();
    BlowupReport {
        gamma,
        n,
        f,
        backlog,
        final_magnitude,
        inverse_discount,
        overflowed: !final_magnitude.is_finite() || !inverse_discount.is_finite(),
    }
}

pub fn render_blowup(report: &BlowupReport) -> String {
    let mut out = String::new();
    writeln!(out, "gamma = {}", report.gamma).expect("string write");
    writeln!(out, "episode length n = {}", report.n).expect("string write");
    writeln!(out, "constant reward f = {}", report.f).expect("string write");
    writeln!(out, "discounted backlog = {}", report.backlog).expect("string write");
    writeln!(out, "1/gamma^(n-1) = {}", report.inverse_discount).expect("string write");
    writeln!(out, "|final correction| = {}", report.final_magnitude).expect("string write");
    if report.overflowed {
        writeln!(out, "overflow: quantities exceeded float range").expect("string write");
    }
    out
}
