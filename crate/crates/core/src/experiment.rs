//! Seeded disturbance sampling and regret sweeps over gap-norm grids.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{finite_constants, infinite_constants, BoundConstants, RegretEvaluator};
use crate::ce::{ce_policy_with, Prediction, PredictionSource};
use crate::error::{Error, Result};
use crate::hinf::{check_x0_admissible, find_gamma_bar, GammaBar};
use crate::io::SystemSpec;
use crate::lti::{CostSpec, Horizon, Plant, Signal};
use crate::scalar::{lit, to_f64, Real};

/// Environment variable capping the sweep thread pool.
pub const THREADS_ENV: &str = "REGRETLAB_THREADS";
pub const FIG1_SEED: u64 = 2024;
const PREDICTION_SALT: u64 = 0x5ce5_ce5c_e5ce_5ce5;

/// Counter-based seed derivation (splitmix64 finalizer over the inputs).
pub fn mix_seed(seed: u64, grid_index: u64, sample_index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(seed) ^ grid_index) ^ sample_index)
}

/// Direction drawn uniformly from the unit sphere in `ℝ^{dim·horizon}`.
pub fn random_unit_signal<T: Real>(dim: usize, horizon: usize, seed: u64) -> Signal<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dim * horizon;
    loop {
        let draws: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            let values: Vec<T> = draws.iter().map(|v| lit(v / norm)).collect();
            let m = nalgebra::DMatrix::from_column_slice(dim, horizon, &values);
            return Signal::from_matrix(m).expect("finite unit direction");
        }
    }
}

/// `w_ref + gap_norm·d` with `d` uniform on the unit sphere.
pub fn sample_disturbance<T: Real>(w_ref: &Signal<T>, gap_norm: T, seed: u64) -> Result<Signal<T>> {
    if !(gap_norm >= T::zero()) {
        return Err(Error::InvalidInput("gap norm must be non-negative".into()));
    }
    if gap_norm == T::zero() {
        return Ok(w_ref.clone());
    }
    let d = random_unit_signal(w_ref.dim(), w_ref.horizon(), seed);
    w_ref.axpy(gap_norm, &d)
}

/// Noisy prediction `w + σ·d`, `‖d‖ = 1`.
pub fn noisy_prediction<T: Real>(w: &Signal<T>, sigma: T, seed: u64) -> Result<Prediction<T>> {
    Prediction::new(
        sample_disturbance(w, sigma, seed)?,
        PredictionSource::Noisy { sigma: to_f64(sigma) },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Hinf,
    Ce,
    Lqr,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Hinf => "hinf",
            ControllerKind::Ce => "ce",
            ControllerKind::Lqr => "lqr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Inline(SystemSpec),
    Path(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonConfig {
    Steps(usize),
    Named(NamedHorizon),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedHorizon {
    Infinite,
}

impl HorizonConfig {
    pub fn horizon(&self) -> Horizon {
        match self {
            HorizonConfig::Steps(t) => Horizon::Finite(*t),
            HorizonConfig::Named(NamedHorizon::Infinite) => Horizon::Infinite,
        }
    }
}

impl From<Horizon> for HorizonConfig {
    fn from(h: Horizon) -> Self {
        match h {
            Horizon::Finite(t) => HorizonConfig::Steps(t),
            Horizon::Infinite => HorizonConfig::Named(NamedHorizon::Infinite),
        }
    }
}

fn default_system() -> SystemRef {
    SystemRef::Inline(SystemSpec::scalar_unit(4.0))
}

fn default_horizon() -> HorizonConfig {
    HorizonConfig::Steps(100)
}

fn default_controllers() -> Vec<ControllerKind> {
    vec![ControllerKind::Hinf, ControllerKind::Ce]
}

fn default_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

fn default_samples() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-9
}

/// Sweep configuration, read from JSON. Every field has a default that
/// reproduces the scalar experiment (`A = B = Q = R = 1`, `x0 = 4`,
/// `T = 100`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_system")]
    pub system: SystemRef,
    #[serde(default = "default_horizon")]
    pub horizon: HorizonConfig,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<ControllerKind>,
    #[serde(default = "default_grid")]
    pub gap_norms: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_point: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: default_system(),
            horizon: default_horizon(),
            controllers: default_controllers(),
            gap_norms: default_grid(),
            samples_per_point: default_samples(),
            rng_seed: 0,
            tol: default_tol(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Loads a config; a relative system path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        if let SystemRef::Path(p) = &config.system {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    config.system = SystemRef::Path(dir.join(p));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gap_norms.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidInput(format!("gap norms must be positive, got {g}")));
        }
        if self.samples_per_point == 0 {
            return Err(Error::InvalidInput("samples_per_point must be at least 1".into()));
        }
        if matches!(self.horizon, HorizonConfig::Steps(0)) {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        Ok(())
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        match &self.system {
            SystemRef::Inline(spec) => Ok(spec.clone()),
            SystemRef::Path(p) => SystemSpec::load(p),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub controller: ControllerKind,
    pub grid_index: usize,
    pub sample_index: usize,
    pub sample_seed: u64,
    /// `‖w − w*‖` of the realized disturbance.
    pub gap_norm: f64,
    /// `‖w̄ − w‖` for the prediction-based controllers.
    pub prediction_gap: Option<f64>,
    pub regret: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub controller: ControllerKind,
    pub gap_norm: f64,
    pub samples: usize,
    pub max_regret: f64,
    pub min_regret: f64,
    pub bound: Option<f64>,
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub horizon: Horizon,
    pub gamma_lower: Option<f64>,
    pub gamma_bar: Option<f64>,
    pub constants: Option<BoundConstants<f64>>,
    pub rows: Vec<SweepRow>,
    pub samples: Vec<SampleRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn row(&self, controller: ControllerKind, grid_index: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.controller == controller)
            .nth(grid_index)
    }

    /// Aggregate rows as CSV: `controller,gap_norm,samples,max_regret,min_regret,bound,slack`.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(["controller", "gap_norm", "samples", "max_regret", "min_regret", "bound", "slack"])?;
        for r in &self.rows {
            out.write_record([
                r.controller.name().to_string(),
                r.gap_norm.to_string(),
                r.samples.to_string(),
                r.max_regret.to_string(),
                r.min_regret.to_string(),
                fmt_opt(r.bound),
                fmt_opt(r.slack),
            ])?;
        }
        finish(out)
    }

    /// Per-sample records as CSV.
    pub fn samples_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record([
            "controller",
            "grid_index",
            "sample_index",
            "sample_seed",
            "gap_norm",
            "prediction_gap",
            "regret",
            "bound",
        ])?;
        for s in &self.samples {
            out.write_record([
                s.controller.name().to_string(),
                s.grid_index.to_string(),
                s.sample_index.to_string(),
                s.sample_seed.to_string(),
                s.gap_norm.to_string(),
                fmt_opt(s.prediction_gap),
                s.regret.to_string(),
                fmt_opt(s.bound),
            ])?;
        }
        finish(out)
    }
}

fn finish(out: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Thread pool honoring `REGRETLAB_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))
}

struct Context {
    plant: Plant<f64>,
    cost: CostSpec<f64>,
    horizon: Horizon,
    evaluator: RegretEvaluator<f64>,
    synthesis: Option<GammaBar<f64>>,
    constants: Option<BoundConstants<f64>>,
    /// CE tail factor when no H∞ constants are available.
    ce_coefficient: f64,
}

impl Context {
    fn reference(&self) -> Signal<f64> {
        match &self.synthesis {
            Some(gb) => gb.worst_case.w_star.clone(),
            None => Signal::zeros(self.plant.n(), self.horizon.finite().unwrap_or(1)),
        }
    }

    fn hinf_bound(&self, gap: f64) -> Option<f64> {
        self.constants.as_ref().map(|k| k.evaluate(gap))
    }

    fn ce_bound(&self, gap: f64) -> f64 {
        match &self.constants {
            Some(k) => k.ce_bound(gap),
            None => gap * gap * self.ce_coefficient,
        }
    }

    fn sample(&self, kind: ControllerKind, grid_index: usize, sample_index: usize, gap: f64, seed: u64) -> Result<SampleRecord> {
        let (plant, cost) = (&self.plant, &self.cost);
        let w_ref = self.reference();
        let sample_seed = mix_seed(seed, grid_index as u64, sample_index as u64);
        let w = sample_disturbance(&w_ref, gap, sample_seed)?;
        let realized_gap = crate::lti::gap(&w, &w_ref)?.energy();
        let (regret, prediction_gap, bound) = match kind {
            ControllerKind::Hinf => {
                let gb = self.synthesis.as_ref().expect("H∞ sweeps carry a synthesis");
                let policy = gb.synthesis.policy();
                let r = self.evaluator.policy_cost(plant, cost, &policy, &w)? - self.evaluator.offline_cost(plant, cost, &w)?;
                (r, None, self.hinf_bound(gap))
            }
            ControllerKind::Ce => {
                let pred = noisy_prediction(&w, gap, sample_seed ^ PREDICTION_SALT)?;
                let policy = ce_policy_with(plant, cost, &self.evaluator.lqr, &pred)?;
                let r = self.evaluator.policy_cost(plant, cost, &policy, &w)? - self.evaluator.offline_cost(plant, cost, &w)?;
                let pg = crate::lti::gap(&pred.w_bar, &w)?.energy();
                (r, Some(pg), Some(self.ce_bound(pg)))
            }
            ControllerKind::Lqr => {
                let zero = Prediction::custom(Signal::zeros(w.dim(), w.horizon()))?;
                let policy = ce_policy_with(plant, cost, &self.evaluator.lqr, &zero)?;
                let r = self.evaluator.policy_cost(plant, cost, &policy, &w)? - self.evaluator.offline_cost(plant, cost, &w)?;
                let pg = w.energy();
                (r, Some(pg), Some(self.ce_bound(pg)))
            }
        };
        Ok(SampleRecord {
            controller: kind,
            grid_index,
            sample_index,
            sample_seed,
            gap_norm: realized_gap,
            prediction_gap,
            regret,
            bound,
        })
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Context> {
    let (plant, cost) = config.system_spec()?.build::<f64>()?;
    let horizon = config.horizon.horizon();
    let evaluator = RegretEvaluator::new(&plant, &cost, horizon)?;
    let wants_hinf = config.controllers.contains(&ControllerKind::Hinf);
    let synthesis = if wants_hinf {
        let adm = check_x0_admissible(&plant, &cost, horizon);
        if !adm.admissible {
            return Err(Error::NotAdmissible {
                energy_min: to_f64(adm.energy_min),
                energy_max: to_f64(adm.energy_max),
            });
        }
        Some(find_gamma_bar(&plant, &cost, horizon, config.tol)?)
    } else {
        find_gamma_bar(&plant, &cost, horizon, config.tol).ok()
    };
    let constants = match &synthesis {
        Some(gb) => {
            let k = match horizon {
                Horizon::Finite(_) => finite_constants(&plant, &cost, &gb.synthesis),
                Horizon::Infinite => infinite_constants(&plant, &cost, &gb.synthesis),
            };
            match k {
                Ok(k) => Some(k),
                Err(e) if wants_hinf => return Err(e),
                Err(_) => None,
            }
        }
        None => None,
    };
    let ce_coefficient = crate::bounds::ce_coefficient(&plant, &cost)?;
    Ok(Context {
        plant,
        cost,
        horizon,
        evaluator,
        synthesis,
        constants,
        ce_coefficient,
    })
}

/// Samples `samples_per_point` disturbances at every grid point and
/// records the regret of each configured controller.
///
/// H∞ samples are `w = w* + g·d`. CE samples reuse that `w` as the realized
/// disturbance and draw the prediction `w̄ = w + g·d′`; the LQR baseline is
/// CE with `w̄ = 0`. Results depend only on the config and seed.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let horizon = config.horizon.horizon();
    let mut controllers = config.controllers.clone();
    controllers.sort();
    controllers.dedup();
    if controllers.is_empty() {
        return Ok(SweepResult {
            horizon,
            gamma_lower: None,
            gamma_bar: None,
            constants: None,
            rows: Vec::new(),
            samples: Vec::new(),
        });
    }
    let ctx = prepare(config)?;
    let jobs: Vec<(ControllerKind, usize, usize)> = controllers
        .iter()
        .flat_map(|&c| (0..config.gap_norms.len()).flat_map(move |g| (0..config.samples_per_point).map(move |s| (c, g, s))))
        .collect();
    let pool = thread_pool()?;
    let samples: Vec<SampleRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, g, s)| ctx.sample(c, g, s, config.gap_norms[g], config.rng_seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for &c in &controllers {
        for (g, &gap) in config.gap_norms.iter().enumerate() {
            let group: Vec<&SampleRecord> = samples.iter().filter(|s| s.controller == c && s.grid_index == g).collect();
            let max_regret = group.iter().map(|s| s.regret).fold(f64::NEG_INFINITY, f64::max);
            let min_regret = group.iter().map(|s| s.regret).fold(f64::INFINITY, f64::min);
            let bound = match c {
                ControllerKind::Hinf => ctx.hinf_bound(gap),
                _ => group.iter().filter_map(|s| s.bound).fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b)))),
            };
            rows.push(SweepRow {
                controller: c,
                gap_norm: gap,
                samples: group.len(),
                max_regret,
                min_regret,
                bound,
                slack: bound.map(|b| b - max_regret),
            });
        }
    }
    Ok(SweepResult {
        horizon,
        gamma_lower: ctx.synthesis.as_ref().map(|gb| gb.gamma_lower),
        gamma_bar: ctx.synthesis.as_ref().map(|gb| gb.gamma_bar),
        constants: ctx.constants.clone(),
        rows,
        samples,
    })
}

/// Configuration of the scalar reference figure: `T = 100`, `x0 = 4`,
/// 20 gap norms in `(0, 2]`, 200 samples per point.
pub fn fig1_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        rng_seed: seed,
        ..ExperimentConfig::default()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fig1Row {
    pub gap_norm: f64,
    pub hinf_max_regret: f64,
    pub hinf_bound: f64,
    pub ce_max_regret: f64,
    pub ce_bound: f64,
}

#[derive(Debug, Clone)]
pub struct Fig1Output {
    pub rows: Vec<Fig1Row>,
    pub sweep: SweepResult,
    pub csv: String,
    pub data_path: PathBuf,
    pub script_path: PathBuf,
}

/// Runs the reference sweep and writes `fig1_data.csv` and `fig1.gp`.
///
/// The CE bound is evaluated at each grid point's gap norm, which is the
/// prediction gap of every CE sample.
pub fn reproduce_fig1(output_dir: &Path, seed: u64) -> Result<Fig1Output> {
    let config = fig1_config(seed);
    let sweep = run_sweep(&config)?;
    let constants = sweep
        .constants
        .clone()
        .ok_or_else(|| Error::BoundNotApplicable("no bound constants for the reference system".into()))?;
    let rows: Vec<Fig1Row> = config
        .gap_norms
        .iter()
        .enumerate()
        .map(|(g, &gap)| Fig1Row {
            gap_norm: gap,
            hinf_max_regret: sweep.row(ControllerKind::Hinf, g).expect("hinf row").max_regret,
            hinf_bound: constants.evaluate(gap),
            ce_max_regret: sweep.row(ControllerKind::Ce, g).expect("ce row").max_regret,
            ce_bound: constants.ce_bound(gap),
        })
        .collect();
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["gap_norm", "hinf_max_regret", "hinf_bound", "ce_max_regret", "ce_bound"])?;
    for r in &rows {
        out.write_record([
            r.gap_norm.to_string(),
            r.hinf_max_regret.to_string(),
            r.hinf_bound.to_string(),
            r.ce_max_regret.to_string(),
            r.ce_bound.to_string(),
        ])?;
    }
    let csv = finish(out)?;
    std::fs::create_dir_all(output_dir)?;
    let data_path = output_dir.join("fig1_data.csv");
    let script_path = output_dir.join("fig1.gp");
    std::fs::write(&data_path, &csv)?;
    std::fs::write(&script_path, FIG1_SCRIPT)?;
    Ok(Fig1Output {
        rows,
        sweep,
        csv,
        data_path,
        script_path,
    })
}

const FIG1_SCRIPT: &str = r#"# gnuplot -e "set terminal pngcairo; set output 'fig1.png'" fig1.gp
set datafile separator ","
set key top left
set logscale y
set xlabel "gap norm"
set ylabel "regret"
plot "fig1_data.csv" using 1:3 with lines lw 2 title "H-inf bound", \
     "fig1_data.csv" using 1:2 with linespoints title "H-inf max regret", \
     "fig1_data.csv" using 1:5 with lines lw 2 dt 2 title "CE bound", \
     "fig1_data.csv" using 1:4 with linespoints title "CE max regret"
"#;
