use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use regretlab::bounds::{finite_constants, infinite_constants, RegretEvaluator};
use regretlab::ce::ce_policy;
use regretlab::experiment::{noisy_prediction, reproduce_fig1, run_sweep, sample_disturbance, ExperimentConfig, FIG1_SEED};
use regretlab::hinf::{build_controller, check_x0_admissible, find_gamma_bar};
use regretlab::io::{load_signal_csv, matrix_rows, write_signal_csv, SystemSpec};
use regretlab::{CostSpec64, Error, Horizon, Plant64, Prediction, Signal64};

#[derive(Parser)]
#[command(name = "regretlab", version, about = "Regret experiments for H∞ and certainty-equivalent control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config or bare system JSON; defaults to the scalar
    /// reference system.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Finite horizon T (overrides the config).
    #[arg(long)]
    horizon: Option<usize>,
    /// Use the infinite-horizon formulation.
    #[arg(long, conflicts_with = "horizon")]
    infinite: bool,
    /// Bisection tolerance of the γ searches.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Hinf,
    Ce,
    Lqr,
}

#[derive(Subcommand)]
enum Command {
    /// γ̲, γ̄ and the saddle-point gains as JSON.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Worst-case disturbance at γ̄ (or --gamma) as CSV.
    Worstcase {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Regret of one controller on one disturbance realization as JSON.
    Regret {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "hinf")]
        controller: Controller,
        /// Disturbance CSV; sampled around w* when omitted.
        #[arg(long)]
        disturbance: Option<PathBuf>,
        /// ‖w − w*‖ of the sampled disturbance.
        #[arg(long, default_value_t = 0.0)]
        gap: f64,
        /// Prediction CSV for the CE controller.
        #[arg(long)]
        prediction: Option<PathBuf>,
        /// ‖w̄ − w‖ of the sampled prediction.
        #[arg(long, default_value_t = 0.0)]
        prediction_gap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regret sweep over the configured gap-norm grid as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Writes fig1_data.csv and a gnuplot script for the scalar reference sweep.
    #[command(name = "reproduce-fig1")]
    ReproduceFig1 {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = FIG1_SEED)]
        seed: u64,
    },
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_infeasibility() => 2,
            CliError::Lib(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(s) => write!(f, "{s}"),
        }
    }
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut config = match &common.config {
        None => ExperimentConfig::default(),
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(Error::Json(first)) => match SystemSpec::load(path) {
                Ok(spec) => ExperimentConfig {
                    system: regretlab::experiment::SystemRef::Inline(spec),
                    ..ExperimentConfig::default()
                },
                Err(_) => return Err(Error::Json(first).into()),
            },
            Err(e) => return Err(e.into()),
        },
    };
    if let Some(t) = common.horizon {
        config.horizon = Horizon::Finite(t).into();
    }
    if common.infinite {
        config.horizon = Horizon::Infinite.into();
    }
    if let Some(tol) = common.tol {
        config.tol = tol;
    }
    config.validate()?;
    Ok(config)
}

fn system(config: &ExperimentConfig) -> CliResult<(Plant64, CostSpec64)> {
    Ok(config.system_spec()?.build::<f64>()?)
}

fn emit(out: &Option<PathBuf>, file: &str, text: &str) -> CliResult<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(file);
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(value: &impl serde::Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    s.push('\n');
    Ok(s)
}

fn synth(common: &Common) -> CliResult<()> {
    let config = load_config(common)?;
    let (plant, cost) = system(&config)?;
    let horizon = config.horizon.horizon();
    let adm = check_x0_admissible(&plant, &cost, horizon);
    if !adm.admissible {
        return Err(Error::NotAdmissible {
            energy_min: adm.energy_min,
            energy_max: adm.energy_max,
        }
        .into());
    }
    let gb = find_gamma_bar(&plant, &cost, horizon, config.tol)?;
    let syn = &gb.synthesis;
    let steps = horizon.finite().unwrap_or(1);
    let gains: Vec<_> = (0..steps).map(|t| matrix_rows(syn.gain(t))).collect();
    let report = json!({
        "horizon": horizon,
        "gamma_lower": gb.gamma_lower,
        "gamma_bar": gb.gamma_bar,
        "worst_case_energy": gb.worst_case.energy,
        "worst_case_window": gb.worst_case.window,
        "monotone_prescan": gb.monotone_prescan,
        "closed_loop_radius": syn.closed_loop_radius,
        "gains": gains,
        "M0": matrix_rows(syn.riccati.m0()),
        "admissibility": adm.diagnostic,
    });
    emit(&common.out, "synth.json", &pretty(&report)?)
}

fn worstcase(common: &Common, gamma: Option<f64>) -> CliResult<()> {
    let config = load_config(common)?;
    let (plant, cost) = system(&config)?;
    let horizon = config.horizon.horizon();
    let wc = match gamma {
        Some(g) => build_controller(&plant, &cost, g, horizon)?.worst_case(&plant, None)?,
        None => find_gamma_bar(&plant, &cost, horizon, config.tol)?.worst_case,
    };
    eprintln!("gamma = {}, energy = {}, window = {}", wc.gamma, wc.energy, wc.window);
    let mut buf = Vec::new();
    write_signal_csv(&wc.w_star, &mut buf)?;
    emit(&common.out, "worstcase.csv", &String::from_utf8_lossy(&buf))
}

#[allow(clippy::too_many_arguments)]
fn regret(
    common: &Common,
    controller: Controller,
    disturbance: Option<&Path>,
    gap: f64,
    prediction: Option<&Path>,
    prediction_gap: f64,
    seed: u64,
) -> CliResult<()> {
    let config = load_config(common)?;
    let (plant, cost) = system(&config)?;
    let horizon = config.horizon.horizon();
    let gb = find_gamma_bar(&plant, &cost, horizon, config.tol);
    let w: Signal64 = match disturbance {
        Some(p) => load_signal_csv(p)?,
        None => {
            let gb = gb.as_ref().map_err(|e| CliError::Usage(format!("cannot sample around w*: {e}")))?;
            sample_disturbance(&gb.worst_case.w_star, gap, seed)?
        }
    };
    let eval = RegretEvaluator::new(&plant, &cost, horizon)?;
    let report = match controller {
        Controller::Hinf => {
            let gb = gb.map_err(CliError::Lib)?;
            let policy = gb.synthesis.policy();
            let report = eval.report(&plant, &cost, &policy, "hinf", &w)?;
            let gap_norm = regretlab::gap(&w, &gb.worst_case.w_star)
                .map_err(|_| CliError::Usage("disturbance length differs from w*".into()))?
                .energy();
            let constants = match horizon {
                Horizon::Finite(_) => finite_constants(&plant, &cost, &gb.synthesis),
                Horizon::Infinite => infinite_constants(&plant, &cost, &gb.synthesis),
            };
            report.with_bound(gap_norm, constants.map(|k| (k.evaluate(gap_norm), k)))
        }
        Controller::Ce | Controller::Lqr => {
            let pred = match (controller, prediction) {
                (Controller::Lqr, _) => Prediction::custom(Signal64::zeros(w.dim(), w.horizon()))?,
                (_, Some(p)) => Prediction::custom(load_signal_csv(p)?)?,
                (_, None) => noisy_prediction(&w, prediction_gap, seed ^ 0x9e37_79b9)?,
            };
            let policy = ce_policy(&plant, &cost, &pred, horizon)?;
            let tag = if matches!(controller, Controller::Lqr) { "lqr" } else { "ce" };
            let report = eval.report(&plant, &cost, &policy, tag, &w)?;
            let fitted = match horizon {
                Horizon::Finite(t) => pred.w_bar.resized(t),
                Horizon::Infinite => pred.w_bar.resized(w.horizon().max(pred.w_bar.horizon())),
            };
            let gap_norm = regretlab::gap(&fitted, &w.resized(fitted.horizon()))?.energy();
            report.with_scalar_bound(gap_norm, regretlab::ce_bound(&plant, &cost, gap_norm))
        }
    };
    emit(&common.out, "regret.json", &pretty(&report)?)
}

fn sweep(common: &Common, seed: Option<u64>) -> CliResult<()> {
    let mut config = load_config(common)?;
    if let Some(s) = seed {
        config.rng_seed = s;
    }
    let result = run_sweep(&config)?;
    let out = common.out.clone().or_else(|| config.output.clone());
    if out.is_some() {
        emit(&out, "sweep_samples.csv", &result.samples_csv()?)?;
    }
    emit(&out, "sweep.csv", &result.to_csv()?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { common } => synth(&common),
        Command::Worstcase { common, gamma } => worstcase(&common, gamma),
        Command::Regret {
            common,
            controller,
            disturbance,
            gap,
            prediction,
            prediction_gap,
            seed,
        } => regret(
            &common,
            controller,
            disturbance.as_deref(),
            gap,
            prediction.as_deref(),
            prediction_gap,
            seed,
        ),
        Command::Sweep { common, seed } => sweep(&common, seed),
        Command::ReproduceFig1 { out, seed } => {
            let fig = reproduce_fig1(&out, seed)?;
            eprintln!("wrote {} and {}", fig.data_path.display(), fig.script_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
