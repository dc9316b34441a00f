//! `hitfit` command line: simulate, fit, fit-windows, synth.
//!
//! Every command writes into `--out-dir`. Fitting commands also write
//! `report.json`, which records the tool version, SHA-256 digests of the
//! inputs, the complete fit and simulation configuration, and the results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{self, EpisodeSchedule, MissingPolicy};
use crate::error::{HitError, Result};
use crate::estimator::{self, FitBounds, FitConfig, FitResult, InitialInterest};
use crate::model::{self, ExposureSet, HitParams, Integrator, SimOptions, TimeGrid, TimeSeries};
use crate::synth::{self, NoiseSpec};

pub const REPORT_FILE: &str = "report.json";
pub const FIT_CURVE_FILE: &str = "fit_curve.csv";
pub const EPISODE_PARAMS_FILE: &str = "episode_params.csv";
pub const SIMULATED_FILE: &str = "simulated.csv";
pub const SYNTH_COUNTS_FILE: &str = "counts.csv";
pub const SYNTH_EXPOSURES_FILE: &str = "exposures.csv";
pub const SYNTH_PARAMS_FILE: &str = "params.json";

#[derive(Debug, Parser)]
#[command(name = "hitfit", version, about = "Hit-phenomenon interest model: simulate and fit daily count series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate interest from exposures and a parameter file.
    Simulate(SimulateArgs),
    /// Fit the model over the whole observed series.
    Fit(FitArgs),
    /// Fit the model separately on every episode window of a schedule.
    FitWindows(FitArgs),
    /// Write a synthetic counts series from known parameters.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MissingArg {
    Zero,
    Interpolate,
    Error,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitialArg {
    Fit,
    First,
    Chain,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Integration step in days; must divide one day evenly.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
    pub integrator: IntegratorArg,
    #[arg(long, default_value_t = 1e12)]
    pub blowup_cap: f64,
    /// Let interest go negative instead of clamping at zero.
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Debug, Args)]
pub struct ExposureArgs {
    /// Long-format exposures file (`date,channel,value`).
    #[arg(long)]
    pub exposures: Option<PathBuf>,
    /// Broadcast schedule (`episode,date`).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Add an impulse channel with this magnitude on every scheduled day.
    #[arg(long, requires = "schedule")]
    pub tv_impulses: Option<f64>,
    #[arg(long, default_value = "tv")]
    pub tv_channel: String,
    #[arg(long, value_enum, default_value_t = MissingArg::Error)]
    pub missing: MissingArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub inputs: ExposureArgs,
    /// Parameter file (JSON) with `channels`, `c`, `d`, `p`, `i0`.
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observed counts file (`date,count`).
    #[arg(long)]
    pub counts: PathBuf,
    #[command(flatten)]
    pub inputs: ExposureArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    /// Number of best starts refined by the simplex.
    #[arg(long, default_value_t = 8)]
    pub refine: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long = "i0", value_enum, default_value_t = InitialArg::Fit)]
    pub initial: InitialArg,
    /// Bounds file (JSON): `{"c": [[lo, hi], ...], "d": [lo, hi], "p": [lo, hi], "i0": [lo, hi]}`.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// Known generating parameters; the report then lists recovery errors.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub inputs: ExposureArgs,
    /// First day of the grid when exposures come only from a schedule.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Number of days when exposures come only from a schedule.
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parameter file contents: coefficients keyed by channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub channels: Vec<String>,
    pub c: Vec<f64>,
    pub d: f64,
    pub p: f64,
    pub i0: f64,
}

impl ParamsFile {
    pub fn from_params(params: &HitParams, channels: Vec<String>) -> Self {
        Self {
            channels,
            c: params.c.clone(),
            d: params.d,
            p: params.p,
            i0: params.i0,
        }
    }

    /// Parameters ordered to match `exposures`.
    pub fn to_params(&self, exposures: &ExposureSet) -> Result<HitParams> {
        if self.channels.len() != self.c.len() {
            return Err(HitError::DimensionMismatch {
                what: "params file coefficients vs its channel names",
                expected: self.channels.len(),
                found: self.c.len(),
            });
        }
        if self.c.len() != exposures.n_channels() {
            return Err(HitError::DimensionMismatch {
                what: "params file coefficients vs exposure channels",
                expected: exposures.n_channels(),
                found: self.c.len(),
            });
        }
        let c = exposures
            .names()
            .iter()
            .map(|name| {
                self.channels
                    .iter()
                    .position(|n| n == name)
                    .map(|i| self.c[i])
                    .ok_or_else(|| HitError::InvalidInput(format!("params file has no channel {name:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        HitParams::new(c, self.d, self.p, self.i0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub parameter: String,
    pub truth: f64,
    pub fitted: f64,
    pub relative_error: f64,
}

/// Everything needed to reproduce a fitting run from the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub missing_policy: MissingPolicy,
    pub tv_impulses: Option<f64>,
    pub fit_config: FitConfig,
    pub sim_options: SimOptions,
    pub channels: Vec<String>,
    pub results: Vec<FitResult>,
    pub recovery: Option<Vec<Recovery>>,
    pub wall_clock_seconds: f64,
}

fn sim_options(args: &SimArgs) -> Result<SimOptions> {
    let per_day = 1.0 / args.dt;
    let substeps = per_day.round();
    if !(args.dt > 0.0 && substeps >= 1.0 && (per_day - substeps).abs() < 1e-9) {
        return Err(HitError::InvalidInput(format!(
            "--dt must be 1/n days for a whole number n, got {}",
            args.dt
        )));
    }
    let options = SimOptions {
        integrator: match args.integrator {
            IntegratorArg::Euler => Integrator::EulerForward,
            IntegratorArg::Rk4 => Integrator::Rk4,
        },
        blowup_cap: args.blowup_cap,
        clamp_nonnegative: !args.no_clamp,
        substeps: substeps as usize,
    };
    options.validate()?;
    Ok(options)
}

fn missing_policy(arg: MissingArg) -> MissingPolicy {
    match arg {
        MissingArg::Zero => MissingPolicy::Zero,
        MissingArg::Interpolate => MissingPolicy::LinearInterpolate,
        MissingArg::Error => MissingPolicy::Error,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HitError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HitError::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HitError::InvalidInput(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HitError::io(path, e))
}

fn digest(role: &str, path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| HitError::io(path, e))?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HitError::io(dir, e))
}

/// Exposures from files, placed on `grid` when one is given.
///
/// Without a grid, the exposures file defines it; the impulse channel is
/// then built on that grid.
fn load_exposures(args: &ExposureArgs, grid: Option<&TimeGrid>) -> Result<ExposureSet> {
    let policy = missing_policy(args.missing);
    let mut set = match (&args.exposures, grid) {
        (Some(path), _) => dataio::read_exposures(path, policy)?,
        (None, Some(grid)) => ExposureSet::empty(grid.clone()),
        (None, None) => {
            return Err(HitError::InvalidInput(
                "no exposures file and no grid to build exposures on".into(),
            ))
        }
    };
    if let Some(magnitude) = args.tv_impulses {
        let schedule = read_schedule(args)?;
        let pulses = dataio::schedule_to_impulses(&schedule, set.grid(), magnitude)?;
        set = set.with_channel(args.tv_channel.clone(), pulses)?;
    }
    Ok(set)
}

fn read_schedule(args: &ExposureArgs) -> Result<EpisodeSchedule> {
    let path = args
        .schedule
        .as_ref()
        .ok_or_else(|| HitError::InvalidInput("--schedule is required".into()))?;
    dataio::read_schedule(path)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let options = sim_options(&args.sim)?;
    let exposures = load_exposures(&args.inputs, None)?;
    let params = read_json::<ParamsFile>(&args.params)?.to_params(&exposures)?;
    let series = model::simulate(&params, &exposures, &options)?;
    ensure_dir(&args.out_dir)?;
    dataio::write_counts(&series, args.out_dir.join(SIMULATED_FILE))
}

struct FitInputs {
    observed: TimeSeries,
    exposures: ExposureSet,
    config: FitConfig,
    options: SimOptions,
    digests: Vec<InputDigest>,
    truth: Option<HitParams>,
}

fn prepare_fit(args: &FitArgs) -> Result<FitInputs> {
    let options = sim_options(&args.sim)?;
    let policy = missing_policy(args.inputs.missing);
    let mut digests = vec![digest("counts", &args.counts)?];
    let counts = dataio::read_counts(&args.counts, policy)?;

    // Impulses are laid on the aligned grid, so load the file part first.
    let file_exposures = match &args.inputs.exposures {
        Some(path) => {
            digests.push(digest("exposures", path)?);
            Some(dataio::read_exposures(path, policy)?)
        }
        None => None,
    };
    let (observed, mut exposures) = match file_exposures {
        Some(ex) => dataio::align(&counts, &ex)?,
        None => {
            let grid = counts.grid().clone();
            (counts, ExposureSet::empty(grid))
        }
    };
    if let Some(path) = &args.inputs.schedule {
        digests.push(digest("schedule", path)?);
    }
    if let Some(magnitude) = args.inputs.tv_impulses {
        let schedule = read_schedule(&args.inputs)?;
        let pulses = dataio::schedule_to_impulses(&schedule, exposures.grid(), magnitude)?;
        exposures = exposures.with_channel(args.inputs.tv_channel.clone(), pulses)?;
    }

    let bounds = match &args.bounds {
        Some(path) => {
            digests.push(digest("bounds", path)?);
            read_json::<FitBounds>(path)?
        }
        None => FitBounds::default(),
    };
    let truth = match &args.truth {
        Some(path) => {
            digests.push(digest("truth", path)?);
            Some(read_json::<ParamsFile>(path)?.to_params(&exposures)?)
        }
        None => None,
    };
    let config = FitConfig {
        bounds,
        n_starts: args.starts,
        n_refine: args.refine,
        seed: args.seed,
        refine_max_iters: args.max_iters,
        refine_tolerance: args.tolerance,
        initial_interest: match args.initial {
            InitialArg::Fit => InitialInterest::Fit,
            InitialArg::First => InitialInterest::FirstObserved,
            InitialArg::Chain => InitialInterest::Chain,
        },
    };
    Ok(FitInputs {
        observed,
        exposures,
        config,
        options,
        digests,
        truth,
    })
}

fn relative_error(fitted: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        fitted.abs()
    } else {
        ((fitted - truth) / truth).abs()
    }
}

fn recovery(truth: &HitParams, fitted: &HitParams, channels: &[String]) -> Vec<Recovery> {
    let mut rows: Vec<(String, f64, f64)> = channels
        .iter()
        .zip(truth.c.iter().zip(&fitted.c))
        .map(|(name, (&t, &f))| (format!("c_{name}"), t, f))
        .collect();
    rows.push(("D".into(), truth.d, fitted.d));
    rows.push(("P".into(), truth.p, fitted.p));
    rows.push(("I0".into(), truth.i0, fitted.i0));
    rows.into_iter()
        .map(|(parameter, truth, fitted)| Recovery {
            parameter,
            truth,
            fitted,
            relative_error: relative_error(fitted, truth),
        })
        .collect()
}

fn report(command: &str, args: &FitArgs, inputs: FitInputs, results: Vec<FitResult>, started: Instant) -> RunReport {
    let channels = inputs.exposures.names();
    let recovery = match (&inputs.truth, results.as_slice()) {
        (Some(truth), [single]) => Some(recovery(truth, &single.params, &channels)),
        _ => None,
    };
    RunReport {
        tool: "hitfit".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        inputs: inputs.digests,
        missing_policy: missing_policy(args.inputs.missing),
        tv_impulses: args.inputs.tv_impulses,
        fit_config: inputs.config,
        sim_options: inputs.options,
        channels,
        results,
        recovery,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    }
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let inputs = prepare_fit(args)?;
    let result = estimator::fit_full_run(&inputs.observed, &inputs.exposures, &inputs.config, &inputs.options)?;
    ensure_dir(&args.out_dir)?;
    dataio::export_fit_curve(
        &result,
        &inputs.observed,
        &inputs.exposures,
        &inputs.options,
        args.out_dir.join(FIT_CURVE_FILE),
    )?;
    let report = report("fit", args, inputs, vec![result], started);
    write_json(&report, &args.out_dir.join(REPORT_FILE))
}

fn cmd_fit_windows(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let schedule = read_schedule(&args.inputs)?;
    let inputs = prepare_fit(args)?;
    let results = estimator::fit_per_episode(
        &inputs.observed,
        &inputs.exposures,
        &schedule,
        &inputs.config,
        &inputs.options,
    )?;
    ensure_dir(&args.out_dir)?;
    dataio::export_episode_params(
        &results,
        &inputs.exposures.names(),
        args.out_dir.join(EPISODE_PARAMS_FILE),
    )?;
    let report = report("fit-windows", args, inputs, results, started);
    write_json(&report, &args.out_dir.join(REPORT_FILE))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let options = sim_options(&args.sim)?;
    let grid = match (args.start, args.days) {
        (Some(start), Some(days)) => Some(TimeGrid::daily(start, days)?),
        (None, None) => None,
        _ => {
            return Err(HitError::InvalidInput(
                "--start and --days must be given together".into(),
            ))
        }
    };
    if grid.is_some() && args.inputs.exposures.is_some() {
        return Err(HitError::InvalidInput(
            "--start/--days conflict with --exposures, which defines the grid".into(),
        ));
    }
    let exposures = load_exposures(&args.inputs, grid.as_ref())?;
    let file = read_json::<ParamsFile>(&args.params)?;
    let params = file.to_params(&exposures)?;
    let noise = if args.sigma > 0.0 {
        NoiseSpec::gaussian(args.sigma, args.noise_seed)?
    } else {
        NoiseSpec::none()
    };
    let series = synth::generate(&params, &exposures, &noise, &options)?;

    ensure_dir(&args.out_dir)?;
    dataio::write_counts(&series, args.out_dir.join(SYNTH_COUNTS_FILE))?;
    dataio::write_exposures(&exposures, args.out_dir.join(SYNTH_EXPOSURES_FILE))?;
    write_json(
        &ParamsFile::from_params(&params, exposures.names()),
        &args.out_dir.join(SYNTH_PARAMS_FILE),
    )
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::FitWindows(args) => cmd_fit_windows(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// One-line error rendering: `error[<Code>]: <message>`.
pub fn error_line(err: &HitError) -> String {
    format!("error[{}]: {}", err.code(), err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_must_divide_a_day() {
        let args = |dt| SimArgs {
            dt,
            integrator: IntegratorArg::Euler,
            blowup_cap: 1e12,
            no_clamp: false,
        };
        assert_eq!(sim_options(&args(1.0)).unwrap().substeps, 1);
        assert_eq!(sim_options(&args(0.25)).unwrap().substeps, 4);
        assert!(sim_options(&args(0.3)).is_err());
        assert!(sim_options(&args(2.0)).is_err());
        assert!(sim_options(&args(0.0)).is_err());
    }

    #[test]
    fn params_file_reorders_by_channel_name() {
        let grid = TimeGrid::daily(NaiveDate::from_ymd_opt(2016, 10, 11).unwrap(), 3).unwrap();
        let zero = TimeSeries::constant(grid.clone(), 0.0).unwrap();
        let ex = ExposureSet::empty(grid)
            .with_channel("tv", zero.clone())
            .unwrap()
            .with_channel("news", zero)
            .unwrap();
        let file = ParamsFile {
            channels: vec!["news".into(), "tv".into()],
            c: vec![1.0, 2.0],
            d: 0.0,
            p: 0.0,
            i0: 1.0,
        };
        assert_eq!(file.to_params(&ex).unwrap().c, vec![2.0, 1.0]);
        let short = ParamsFile {
            channels: vec!["tv".into()],
            c: vec![1.0],
            ..file
        };
        assert!(matches!(short.to_params(&ex), Err(HitError::DimensionMismatch { .. })));
    }

    #[test]
    fn recovery_uses_relative_error() {
        let truth = HitParams::new(vec![10.0], -0.5, 0.0, 4.0).unwrap();
        let fit = HitParams::new(vec![11.0], -0.5, 0.001, 4.0).unwrap();
        let rows = recovery(&truth, &fit, &["tv".into()]);
        assert_eq!(rows[0].parameter, "c_tv");
        assert!((rows[0].relative_error - 0.1).abs() < 1e-12);
        assert_eq!(rows[2].relative_error, 0.001);
    }
}
