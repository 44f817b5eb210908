use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opshape_cli::config::{load_config_file, ConfigError};
use opshape_cli::harness::{self, blowup_demo, render_blowup, render_report, HarnessError};
use opshape_core::learner::TrainError;
use opshape_core::mdp::{optimal_action_set, value_iteration, DEFAULT_TIE_TOLERANCE};
use opshape_core::oracle::{OracleOptions, Verdict};
use opshape_core::specfile;

/// Optimality-preserving reward shaping experiments on finite MDPs.
#[derive(Parser)]
#[command(name = "opshape", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config document.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --set shaper.kind=pbim
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write per-seed and aggregate CSVs.
    Run(ConfigArgs),
    /// Run the config once per matching delay and rank the delays.
    SweepD {
        #[command(flatten)]
        config: ConfigArgs,
        /// Delay values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        d: Vec<usize>,
    },
    /// Certify whether the configured shaping preserves the optimal policy
    /// set; exits nonzero when it does not.
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = DEFAULT_TIE_TOLERANCE)]
        tie_tolerance: f64,
        /// Augmented-node cap.
        #[arg(long, default_value_t = 1_000_000)]
        cap: usize,
    },
    /// Report the analytic end-of-episode correction magnitude.
    BlowupDemo {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        n: usize,
        /// Constant per-step intrinsic reward.
        #[arg(long, default_value_t = 1.0)]
        f: f64,
    },
    /// Solve an MDP document exactly and dump V* (and optionally Q*).
    Solve {
        /// MDP document path.
        #[arg(long)]
        mdp: PathBuf,
        /// Also dump action values.
        #[arg(long)]
        q: bool,
    },
}

/// Exit codes: 0 success, 1 config error, 2 verification violated,
/// 3 runtime abort.
const EXIT_CONFIG: u8 = 1;
const EXIT_VIOLATED: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_for(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(_) | HarnessError::SweepShaper(_) | HarnessError::SweepValues => {
            EXIT_CONFIG
        }
        HarnessError::Train(TrainError::NonFinite { .. }) => EXIT_RUNTIME,
        _ => EXIT_RUNTIME,
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match load_config_file(&args.config, &args.set) {
                Ok(c) => c,
                Err(e) => return fail_config(e),
            };
            match harness::run(&config, &config_dir(&args.config)) {
                Ok(outcome) => {
                    for path in &outcome.seed_files {
                        println!("wrote {}", path.display());
                    }
                    println!("wrote {}", outcome.aggregate_file.display());
                    println!("final mean extrinsic return: {}", outcome.final_mean_ext_return());
                    ExitCode::SUCCESS
                }
                Err(e) => fail_harness(e),
            }
        }
        Command::SweepD { config: args, d } => {
            let config = match load_config_file(&args.config, &args.set) {
                Ok(c) => c,
                Err(e) => return fail_config(e),
            };
            match harness::sweep_d(&config, &config_dir(&args.config), &d) {
                Ok(entries) => {
                    println!("rank\td\tfinal_mean_ext_return");
                    for (rank, e) in entries.iter().enumerate() {
                        println!("{}\t{}\t{}", rank + 1, e.d, e.final_mean_ext_return);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail_harness(e),
            }
        }
        Command::Verify { config: args, tie_tolerance, cap } => {
            let config = match load_config_file(&args.config, &args.set) {
                Ok(c) => c,
                Err(e) => return fail_config(e),
            };
            let opts = OracleOptions { cap, tie_tolerance, ..OracleOptions::default() };
            match harness::verify(&config, &config_dir(&args.config), &opts) {
                Ok((env, report)) => {
                    print!("{}", render_report(&env, &report));
                    if report.verdict == Verdict::Violated {
                        ExitCode::from(EXIT_VIOLATED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail_harness(e),
            }
        }
        Command::BlowupDemo { gamma, n, f } => {
            if !(gamma > 0.0 && gamma <= 1.0) || n < 2 {
                eprintln!("error: gamma must lie in (0, 1] and n must be at least 2");
                return ExitCode::from(EXIT_CONFIG);
            }
            print!("{}", render_blowup(&blowup_demo(gamma, n, f)));
            ExitCode::SUCCESS
        }
        Command::Solve { mdp, q } => {
            let text = match std::fs::read_to_string(&mdp) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", mdp.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let problem = match specfile::mdp_from_str(&text) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let (v, qt) = match value_iteration(&problem, None) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            println!("table,state,action,t,value");
            for t in 0..=problem.horizon() {
                for s in 0..problem.num_states() {
                    println!("V,{s},,{t},{}", v.get(s, t));
                }
            }
            if q {
                let sets = optimal_action_set(&qt, DEFAULT_TIE_TOLERANCE);
                for t in 0..problem.horizon() {
                    for s in 0..problem.num_states() {
                        for a in 0..problem.num_actions() {
                            println!("Q,{s},{a},{t},{}", qt.get(s, a, t));
                        }
                        let best: Vec<String> =
                            sets.actions(s, t).iter().map(|a| a.to_string()).collect();
                        println!("argmax,{s},{},{t},", best.join("|"));
                    }
                }
            }
            ExitCode::SUCCESS
        }
    }
}

fn fail_config(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn fail_harness(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(&e))
}
