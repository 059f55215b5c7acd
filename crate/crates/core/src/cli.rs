//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::arms::{DeadlineArm, EnvKind, RecoveringArm, RecoveringClass, WirelessArm, WirelessParams};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate_config, learning_curve, noisy_sweep, plot_curve, ConfigFile, CurveRow, ExperimentConfig, NoisyRow,
    PolicySpec,
};
use crate::oracle::{ds_curves, ds_curves_csv, index_table, lambda_grid, strong_indexability_check, DpSettings, FiniteArm};
use crate::training::train;

#[derive(Debug, Parser)]
#[command(name = "neurwin", version, about = "Neural Whittle index training and restless-bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Instance {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an index network on one arm.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        class: Option<RecoveringClass>,
        #[arg(long)]
        good_prob: Option<f64>,
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Evaluate a policy on N arms with budget M.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        instance: Instance,
        /// whittle-oracle | size-aware | lookahead:d=N | qwic | neurwin:ckpt=PATH[,PATH...]
        #[arg(long)]
        policy: Option<String>,
    },
    /// Evaluate every checkpoint of a training run.
    Curve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        instance: Instance,
        /// Checkpoint directory; repeat once per arm type.
        #[arg(long = "ckpt-dir", required = true)]
        ckpt_dirs: Vec<PathBuf>,
    },
    /// Exact Whittle indices and activation-advantage curves of one arm.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        class: Option<RecoveringClass>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        lambda_max: Option<f64>,
        #[arg(long)]
        lambda_step: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check that the activation advantage strictly decreases in the cost.
    Indexability {
        #[command(flatten)]
        common: Common,
        /// Recovering class; all four when omitted.
        #[arg(long)]
        class: Option<RecoveringClass>,
    },
    /// Train on noisy simulators and evaluate on the true arms.
    Noisy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        instance: Instance,
        /// Comma-separated noise levels.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        episodes: Option<u64>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Train { common, .. }
            | Self::Evaluate { common, .. }
            | Self::Curve { common, .. }
            | Self::Oracle { common, .. }
            | Self::Indexability { common, .. }
            | Self::Noisy { common, .. } => common,
        }
    }
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn set(config: &mut ExperimentConfig, key: &str, value: Option<String>) -> Result<()> {
    match value {
        Some(v) => config.set(key, &v),
        None => Ok(()),
    }
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let env = match (common.env, file.get("env")) {
        (Some(e), _) => e,
        (None, Some(v)) => v.parse()?,
        (None, None) => return Err(Error::InvalidArgument("no environment given (--env or 'env' key)".into())),
    };
    let mut config = ExperimentConfig::new(env);
    file.apply(&mut config)?;
    set(&mut config, "seed", common.seed.map(|s| s.to_string()))?;
    Ok(config)
}

fn apply_instance(config: &mut ExperimentConfig, inst: &Instance) -> Result<()> {
    set(config, "n", inst.n.map(|x| x.to_string()))?;
    set(config, "m", inst.m.map(|x| x.to_string()))?;
    set(config, "runs", inst.runs.map(|x| x.to_string()))
}

fn configure(command: &Command) -> Result<ExperimentConfig> {
    let mut c = base_config(command.common())?;
    match command {
        Command::Train {
            class,
            good_prob,
            episodes,
            ..
        } => {
            set(&mut c, "class", class.map(|x| x.to_string()))?;
            set(&mut c, "good_prob", good_prob.map(|x| x.to_string()))?;
            set(&mut c, "episodes", episodes.map(|x| x.to_string()))?;
        }
        Command::Evaluate { instance, policy, .. } => {
            apply_instance(&mut c, instance)?;
            set(&mut c, "policy", policy.clone())?;
        }
        Command::Curve { instance, .. } => apply_instance(&mut c, instance)?,
        Command::Oracle {
            class,
            lambda_min,
            lambda_max,
            lambda_step,
            tol,
            ..
        } => {
            set(&mut c, "class", class.map(|x| x.to_string()))?;
            set(&mut c, "lambda_min", lambda_min.map(|x| x.to_string()))?;
            set(&mut c, "lambda_max", lambda_max.map(|x| x.to_string()))?;
            set(&mut c, "lambda_step", lambda_step.map(|x| x.to_string()))?;
            set(&mut c, "tol", tol.map(|x| x.to_string()))?;
        }
        Command::Indexability { class, .. } => set(&mut c, "class", class.map(|x| x.to_string()))?,
        Command::Noisy {
            instance,
            levels,
            episodes,
            ..
        } => {
            apply_instance(&mut c, instance)?;
            set(&mut c, "noise_levels", levels.clone())?;
            set(&mut c, "episodes", episodes.map(|x| x.to_string()))?;
        }
    }
    c.validate()?;
    Ok(c)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn say(out: &mut dyn Write, text: String) {
    let _ = writeln!(out, "{text}");
}

fn execute(command: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let config = configure(&command).map_err(Failure::Usage)?;
    let dir = command.common().out.clone();
    let rt = Failure::Runtime;
    match &command {
        Command::Train { .. } => train_cmd(&config, &dir, out).map_err(rt),
        Command::Evaluate { .. } => evaluate_cmd(&config, &dir, out).map_err(rt),
        Command::Curve { ckpt_dirs, .. } => curve_cmd(&config, ckpt_dirs, &dir, out).map_err(rt),
        Command::Oracle { .. } => oracle_cmd(&config, &dir, out).map_err(rt),
        Command::Indexability { class, .. } => indexability_cmd(&config, *class, &dir, out).map_err(rt),
        Command::Noisy { .. } => noisy_cmd(&config, &dir, out).map_err(rt),
    }
}

fn train_cmd(config: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let outcome = match config.env {
        EnvKind::Deadline => train(&DeadlineArm::default(), &config.training)?,
        EnvKind::Recovering => train(&RecoveringArm::new(config.class.params(), 20)?, &config.training)?,
        EnvKind::Wireless => train(&WirelessArm::new(WirelessParams::with_good_prob(config.good_prob))?, &config.training)?,
    };
    outcome.write(dir)?;
    say(
        out,
        format!(
            "trained {} episodes, wrote {} checkpoints to {}",
            config.training.episodes,
            outcome.checkpoints.len(),
            dir.display()
        ),
    );
    Ok(())
}

fn summary_csv(config: &ExperimentConfig, mean: f64, std: f64) -> String {
    format!(
        "env,policy,n,m,runs,mean,std\n{},{},{},{},{},{},{}\n",
        config.env, config.policy, config.n, config.m, config.runs, mean, std
    )
}

fn evaluate_cmd(config: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let e = evaluate_config(config)?;
    write_file(&dir.join("evaluation.csv"), &e.runs_csv())?;
    write_file(&dir.join("summary.csv"), &summary_csv(config, e.mean, e.std))?;
    say(
        out,
        format!(
            "{} on {} (N={}, M={}): mean {:.6} std {:.6} over {} runs",
            config.policy, config.env, config.n, config.m, e.mean, e.std, config.runs
        ),
    );
    Ok(())
}

fn curve_cmd(config: &ExperimentConfig, dirs: &[PathBuf], dir: &Path, out: &mut dyn Write) -> Result<()> {
    let rows = learning_curve(config, dirs)?;
    let reference = ExperimentConfig {
        policy: PolicySpec::default_for(config.env),
        ..config.clone()
    };
    let baseline = evaluate_config(&reference)?;
    write_file(&dir.join("learning_curve.csv"), &CurveRow::csv(&rows))?;
    let label = reference.policy.to_string();
    plot_curve(&dir.join("learning_curve.svg"), &rows, Some((&label, baseline.mean)))?;
    say(
        out,
        format!(
            "{} checkpoints evaluated; {label} reference mean {:.6}",
            rows.len(),
            baseline.mean
        ),
    );
    Ok(())
}

fn oracle_for<A: FiniteArm>(arm: &A, config: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let dp = DpSettings {
        discount: config.discount,
        horizon: config.horizon,
    };
    let model = arm.model()?;
    let table = index_table(&model, &dp, config.tol)?;
    let grid = lambda_grid(config.lambda_min, config.lambda_max, config.lambda_step);
    let curves = ds_curves(&model, &grid, &dp)?;
    write_file(&dir.join("index_table.csv"), &table.to_csv(arm))?;
    write_file(&dir.join("ds_curves.csv"), &ds_curves_csv(arm, &curves))?;
    say(
        out,
        format!(
            "{} states, {} grid points, wrote index_table.csv and ds_curves.csv",
            model.len(),
            grid.len()
        ),
    );
    Ok(())
}

fn oracle_cmd(config: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    match config.env {
        EnvKind::Deadline => oracle_for(&DeadlineArm::default(), config, dir, out),
        EnvKind::Recovering => oracle_for(&RecoveringArm::new(config.class.params(), 20)?, config, dir, out),
        EnvKind::Wireless => oracle_for(&WirelessArm::default(), config, dir, out),
    }
}

fn check_one<A: FiniteArm>(
    label: &str,
    arm: &A,
    config: &ExperimentConfig,
    grid: &[f64],
    csv: &mut String,
    out: &mut dyn Write,
) -> Result<bool> {
    let dp = DpSettings {
        discount: config.discount,
        horizon: config.horizon,
    };
    let report = strong_indexability_check(&arm.model()?, grid, &dp, 1e-9)?;
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    say(
        out,
        format!(
            "{label}: {verdict} ({} states, {} grid points, {} violations)",
            report.states,
            report.grid_points,
            report.violations.len()
        ),
    );
    for v in &report.violations {
        let coords: Vec<String> = arm.coords(&v.state).iter().map(|c| c.to_string()).collect();
        csv.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            coords.join(" "),
            v.lambda,
            v.next_lambda,
            v.d,
            v.next_d
        ));
    }
    Ok(report.passed())
}

fn indexability_cmd(
    config: &ExperimentConfig,
    class: Option<RecoveringClass>,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let grid = lambda_grid(config.lambda_min, config.lambda_max, config.lambda_step);
    let mut csv = String::from("arm,state,lambda,next_lambda,d_s,next_d_s\n");
    let mut all = true;
    match config.env {
        EnvKind::Deadline => all &= check_one("deadline", &DeadlineArm::default(), config, &grid, &mut csv, out)?,
        EnvKind::Recovering => {
            let classes = class.map(|c| vec![c]).unwrap_or_else(|| RecoveringClass::ALL.to_vec());
            for c in classes {
                let arm = RecoveringArm::new(c.params(), 20)?;
                all &= check_one(&format!("recovering-{c}"), &arm, config, &grid, &mut csv, out)?;
            }
        }
        EnvKind::Wireless => {
            all &= check_one("wireless", &WirelessArm::default(), config, &grid, &mut csv, out)?;
        }
    }
    write_file(&dir.join("indexability_violations.csv"), &csv)?;
    say(out, (if all { "PASS" } else { "FAIL" }).to_string());
    Ok(())
}

fn noisy_cmd(config: &ExperimentConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let rows = noisy_sweep(config, &config.noise_levels)?;
    write_file(&dir.join("noisy_sweep.csv"), &NoisyRow::csv(&rows))?;
    for r in &rows {
        say(out, format!("noise {}: mean {:.6} std {:.6}", r.noise_level, r.mean, r.std));
    }
    Ok(())
}
