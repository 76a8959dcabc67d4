//! `decaf` command-line driver. Exit codes: 0 success, 1 usage, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use decaf::envs::EnvKind;
use decaf::error::{Error, Result};
use decaf::experiment::config::ExperimentConfig;
use decaf::experiment::run::emit_csv as emit;
use decaf::experiment::select::{DEFAULT_W_F, DEFAULT_W_U};
use decaf::experiment::{
    cmd_evaluate, cmd_heatmap, cmd_pareto_approx, cmd_select, cmd_sweep, cmd_theorem_check, cmd_train,
};
use decaf::fairness::FairnessKind;
use decaf::learner::Mode;

#[derive(Parser, Debug)]
#[command(name = "decaf", version, about = "Fair multi-agent allocation: training, sweeps and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; the DECAF_OUT environment variable takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel runs for sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Config override `key.path=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone, Default)]
struct RunFlags {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    fairness: Option<FairnessKind>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct EvalFlags {
    /// Run directories written by `train` or `sweep`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Comma-separated test weights.
    #[arg(long, value_delimiter = ',')]
    beta_test: Option<Vec<f64>>,
    /// Greedy episodes per evaluation (default: each run's n_eval).
    #[arg(long)]
    n_eval: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write its run directory.
    Train {
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Train modes x betas x seeds in parallel and aggregate the results.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate SO/FO runs over a beta_train x beta_test grid.
    Heatmap {
        #[command(flatten)]
        eval: EvalFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Approximate a front from a few SO/FO runs by nearest-beta dispatch.
    ParetoApprox {
        #[command(flatten)]
        eval: EvalFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Pick the best beta per (env, mode) from evaluation CSVs.
    Select {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_W_U)]
        w_u: f64,
        #[arg(long, default_value_t = DEFAULT_W_F)]
        w_f: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Check the one-step trade-off guarantees on random instances.
    TheoremCheck {
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy evaluation of saved runs.
    Evaluate {
        #[command(flatten)]
        eval: EvalFlags,
        #[command(flatten)]
        common: Common,
    },
}

const DEFAULT_BETA_TEST: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn load_config(common: &Common, extra: &[String]) -> Result<ExperimentConfig> {
    let base = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let mut overrides: Vec<String> = extra.to_vec();
    overrides.extend(common.set.iter().cloned());
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    base.with_overrides(&overrides).map_err(|e| match e {
        Error::Usage(m) => Error::Usage(m),
        other => Error::Usage(other.to_string()),
    })
}

fn run_overrides(run: &RunFlags) -> Vec<String> {
    let mut o = Vec::new();
    if let Some(e) = run.env {
        o.push(format!("env.kind={}", e.name()));
    }
    if let Some(m) = run.mode {
        o.push(format!("learner.mode={}", m.name()));
    }
    if let Some(b) = run.beta {
        o.push(format!("learner.beta={b}"));
    }
    if let Some(f) = run.fairness {
        o.push(format!("fairness.kind={}", f.name()));
    }
    if let Some(n) = run.episodes {
        o.push(format!("learner.n_episodes={n}"));
    }
    o
}

fn json_list<T: ToString>(xs: &[T]) -> String {
    format!("[{}]", xs.iter().map(|x| format!("\"{}\"", x.to_string())).collect::<Vec<_>>().join(","))
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os("DECAF_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| common.out.clone())
        .unwrap_or_else(|| cfg.output.directory.clone())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { run, common } => {
            let cfg = load_config(&common, &run_overrides(&run))?;
            cfg.resolve_run().map_err(|e| Error::Usage(e.to_string()))?;
            let out = out_dir(&common, &cfg);
            let rec = cmd_train(&cfg, &out)?;
            let r = &rec.row;
            println!(
                "{}: utility {:.4} +- {:.4}, variance {:.6} -> {}",
                r.run_id,
                r.utility_mean,
                r.utility_std,
                r.variance_mean,
                rec.run_dir.display()
            );
        }
        Command::Sweep { run, betas, seeds, modes, common } => {
            let mut extra = run_overrides(&run);
            if let Some(b) = betas {
                extra.push(format!("sweep.betas={b:?}"));
            }
            if let Some(s) = seeds {
                extra.push(format!("sweep.seeds={s:?}"));
            }
            if let Some(m) = modes {
                extra.push(format!("sweep.modes={}", json_list(&m)));
            }
            if let Some(s) = common.seed {
                extra.push(format!("sweep.seeds=[{s}]"));
            }
            let cfg = load_config(&common, &extra)?;
            cfg.resolve_sweep().map_err(|e| Error::Usage(e.to_string()))?;
            let out = out_dir(&common, &cfg);
            let res = cmd_sweep(&cfg, &out, common.workers.unwrap_or(0))?;
            let rows = emit(&out, &cfg.output.sweep_csv, &res.rows)?;
            let front = emit(&out, &cfg.output.pareto_csv, &res.pareto)?;
            let failed = res.rows.iter().filter(|r| !r.is_ok()).count();
            println!("{} runs ({failed} failed) -> {}, {}", res.rows.len(), rows.display(), front.display());
            if failed == res.rows.len() {
                return Err(Error::Config("every sweep run failed".into()));
            }
        }
        Command::Heatmap { eval, common } => {
            let cfg = load_config(&common, &[])?;
            let out = out_dir(&common, &cfg);
            let bt = eval.beta_test.unwrap_or_else(|| DEFAULT_BETA_TEST.to_vec());
            let rows = cmd_heatmap(&eval.runs, &bt, eval.n_eval, cfg.seed.unwrap_or(1))?;
            let path = emit(&out, &cfg.output.heatmap_csv, &rows)?;
            println!("{} cells -> {}", rows.len() / 2, path.display());
        }
        Command::ParetoApprox { eval, common } => {
            let cfg = load_config(&common, &[])?;
            let out = out_dir(&common, &cfg);
            let bt = eval.beta_test.unwrap_or_else(|| DEFAULT_BETA_TEST.to_vec());
            let rows = cmd_pareto_approx(&eval.runs, &bt, eval.n_eval, cfg.seed.unwrap_or(1))?;
            let path = emit(&out, &cfg.output.pareto_approx_csv, &rows)?;
            println!("{} points -> {}", rows.len(), path.display());
        }
        Command::Select { csv, w_u, w_f, common } => {
            let cfg = load_config(&common, &[])?;
            let out = out_dir(&common, &cfg);
            let mut text = String::new();
            for (i, p) in csv.iter().enumerate() {
                let t = std::fs::read_to_string(p)?;
                // Keep one header when concatenating files.
                let body = if i == 0 { t.as_str() } else { t.split_once('\n').map_or("", |x| x.1) };
                text.push_str(body);
                if !text.ends_with('\n') {
                    text.push('\n');
                }
            }
            let rows = cmd_select(&text, w_u, w_f)?;
            for r in &rows {
                println!(
                    "{} {}: beta_train {} beta_test {} utility {:.4} variance {:.6} score {:.6}",
                    r.env, r.mode, r.beta_train, r.beta_test, r.utility_mean, r.variance_mean, r.score
                );
            }
            emit(&out, &cfg.output.select_csv, &rows)?;
        }
        Command::TheoremCheck { instances, common } => {
            let cfg = load_config(&common, &[])?;
            let out = out_dir(&common, &cfg);
            let report = cmd_theorem_check(instances, cfg.seed.unwrap_or(1))?;
            for c in &report.checks {
                println!("{:<26} instances {:>5} evaluations {:>7} violations {}", c.check, c.instances, c.evaluations, c.violations);
            }
            emit(&out, &cfg.output.theorem_csv, &report.checks)?;
            if !report.passed() {
                for v in report.violations.iter().take(10) {
                    eprintln!("instance {} {}: {} repro {}", v.instance, v.check, v.detail, v.repro);
                }
                return Err(Error::Config(format!("{} violations", report.violations.len())));
            }
        }
        Command::Evaluate { eval, common } => {
            let cfg = load_config(&common, &[])?;
            let out = out_dir(&common, &cfg);
            let rows = cmd_evaluate(&eval.runs, eval.beta_test.as_deref(), eval.n_eval, cfg.seed.unwrap_or(1))?;
            for r in &rows {
                println!(
                    "{} beta_test {}: utility {:.4} +- {:.4}, variance {:.6}",
                    r.run_id, r.beta_test, r.utility_mean, r.utility_std, r.variance_mean
                );
            }
            emit(&out, &cfg.output.evaluate_csv, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
