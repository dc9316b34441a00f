//! Least-squares estimation of [`HitParams`] from observed counts.
//!
//! A fit draws `n_starts` uniform samples inside the parameter box, ranks
//! them by objective, and polishes the best `n_refine` of them with a
//! bounded Nelder-Mead simplex. Each start
//! is drawn from its own ChaCha stream keyed by `(seed, start index)`, so
//! results do not depend on how the starts are scheduled across threads.

pub mod simplex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::EpisodeSchedule;
use crate::error::{HitError, Result};
use crate::model::{self, ExposureSet, HitParams, SimOptions, TimeSeries};

use self::simplex::SimplexOptions;

/// Objective value reported when the simulation blows up.
pub const BLOWUP_SENTINEL: f64 = f64::MAX;

/// Half-open range of grid indices `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, n_points: usize) -> Result<()> {
        if self.start >= self.end || self.end > n_points {
            return Err(HitError::InvalidWindow(format!(
                "window {:?} = [{}, {}) is not a nonempty range inside {} points",
                self.label, self.start, self.end, n_points
            )));
        }
        Ok(())
    }
}

/// How the initial interest of a window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialInterest {
    /// Free parameter within the I0 bounds.
    #[default]
    Fit,
    /// Fixed to the first observed value of the window.
    FirstObserved,
    /// Per-episode fits continue from the previous window's fitted model;
    /// the first window is fitted. Behaves like `Fit` for single windows.
    Chain,
}

/// Search box. Unset entries fall back to the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    /// One interval per channel; empty means `[0, 1e3]` for every channel.
    #[serde(default)]
    pub c: Vec<(f64, f64)>,
    pub d: (f64, f64),
    pub p: (f64, f64),
    /// `None` means `[0, 10 * max(observed in window)]`.
    #[serde(default)]
    pub i0: Option<(f64, f64)>,
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            c: Vec::new(),
            d: (-10.0, 10.0),
            p: (-1.0, 1.0),
            i0: None,
        }
    }
}

pub const DEFAULT_C_BOUNDS: (f64, f64) = (0.0, 1e3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bounds: FitBounds,
    pub n_starts: usize,
    /// Number of best starts polished by the simplex; the best polished
    /// point wins.
    pub n_refine: usize,
    pub seed: u64,
    pub refine_max_iters: usize,
    pub refine_tolerance: f64,
    pub initial_interest: InitialInterest,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: FitBounds::default(),
            n_starts: 64,
            n_refine: 8,
            seed: 0,
            refine_max_iters: 500,
            refine_tolerance: 1e-10,
            initial_interest: InitialInterest::Fit,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub window: Window,
    pub params: HitParams,
    pub sse: f64,
    pub rmse: f64,
    /// Absent when the observed window is constant.
    pub r_squared: Option<f64>,
    pub n_evaluations: usize,
    pub converged: bool,
}

fn check_inputs(observed: &TimeSeries, exposures: &ExposureSet, n_channels: usize) -> Result<()> {
    if observed.grid() != exposures.grid() {
        return Err(HitError::InvalidInput(
            "observed series and exposures are on different grids".into(),
        ));
    }
    if n_channels != exposures.n_channels() {
        return Err(HitError::DimensionMismatch {
            what: "media coefficients vs exposure channels",
            expected: exposures.n_channels(),
            found: n_channels,
        });
    }
    Ok(())
}

/// Sum of squared residuals of the model against `observed` over `window`.
///
/// The model starts at `params.i0` on the first index of the window. A
/// blowup yields [`BLOWUP_SENTINEL`] instead of an error.
pub fn objective(
    params: &HitParams,
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    options: &SimOptions,
) -> Result<f64> {
    check_inputs(observed, exposures, params.c.len())?;
    window.check(observed.len())?;
    params.validate()?;
    options.validate()?;
    Ok(window_sse(params, observed, exposures, window, options))
}

/// [`objective`] without input validation.
pub(crate) fn window_sse(
    params: &HitParams,
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    options: &SimOptions,
) -> f64 {
    match model::integrate(params, exposures, window.start, window.end, params.i0, options) {
        Ok(model) => {
            let sse: f64 = model
                .iter()
                .zip(&observed.values()[window.start..window.end])
                .map(|(m, o)| (m - o) * (m - o))
                .sum();
            if sse.is_finite() {
                sse
            } else {
                BLOWUP_SENTINEL
            }
        }
        Err(_) => BLOWUP_SENTINEL,
    }
}

/// Maps between [`HitParams`] and the flat vector searched by the optimizer.
#[derive(Debug, Clone)]
struct Layout {
    n_channels: usize,
    /// `Some(v)`: I0 is pinned to `v` and not part of the vector.
    pinned_i0: Option<f64>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.n_channels + 2 + usize::from(self.pinned_i0.is_none())
    }

    fn params(&self, x: &[f64]) -> HitParams {
        let m = self.n_channels;
        HitParams {
            c: x[..m].to_vec(),
            d: x[m],
            p: x[m + 1],
            i0: self.pinned_i0.unwrap_or_else(|| x[m + 2]),
        }
    }
}

fn check_interval(name: String, (lo, hi): (f64, f64)) -> Result<(f64, f64)> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(HitError::EmptyBounds { param: name, lo, hi });
    }
    Ok((lo, hi))
}

/// Concrete search box for the layout, validated.
fn resolve_bounds(
    bounds: &FitBounds,
    exposures: &ExposureSet,
    observed_max: f64,
    layout: &Layout,
) -> Result<Vec<(f64, f64)>> {
    let names = exposures.names();
    let c: Vec<(f64, f64)> = if bounds.c.is_empty() {
        vec![DEFAULT_C_BOUNDS; names.len()]
    } else if bounds.c.len() == names.len() {
        bounds.c.clone()
    } else {
        return Err(HitError::DimensionMismatch {
            what: "c bounds vs exposure channels",
            expected: names.len(),
            found: bounds.c.len(),
        });
    };
    let mut out = Vec::with_capacity(layout.dim());
    for (name, iv) in names.iter().zip(c) {
        out.push(check_interval(format!("c[{name}]"), iv)?);
    }
    out.push(check_interval("D".into(), bounds.d)?);
    out.push(check_interval("P".into(), bounds.p)?);
    if layout.pinned_i0.is_none() {
        let iv = bounds.i0.unwrap_or((0.0, 10.0 * observed_max.max(0.0)));
        out.push(check_interval("I0".into(), iv)?);
    }
    Ok(out)
}

/// Uniform sample for start `index`, independent of every other start.
fn draw_start(seed: u64, index: usize, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    bounds
        .iter()
        .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
        .collect()
}

fn diagnostics(observed: &[f64], sse: f64) -> (f64, Option<f64>) {
    let n = observed.len() as f64;
    let rmse = (sse / n).sqrt();
    let mean = observed.iter().sum::<f64>() / n;
    let tss: f64 = observed.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r2 = (tss > 0.0).then(|| 1.0 - sse / tss);
    (rmse, r2)
}

/// Validated search problem for one window.
struct Problem {
    layout: Layout,
    bounds: Vec<(f64, f64)>,
}

impl Problem {
    fn new(
        observed: &TimeSeries,
        exposures: &ExposureSet,
        window: &Window,
        config: &FitConfig,
        pinned_i0: Option<f64>,
    ) -> Result<Self> {
        if config.n_starts == 0 {
            return Err(HitError::InvalidInput("n_starts must be >= 1".into()));
        }
        if config.refine_tolerance.is_nan() || config.refine_tolerance < 0.0 {
            return Err(HitError::InvalidInput("refine_tolerance must be >= 0".into()));
        }
        let layout = Layout {
            n_channels: exposures.n_channels(),
            pinned_i0,
        };
        if window.len() < layout.dim() + 1 {
            return Err(HitError::InvalidWindow(format!(
                "window {:?} has {} points, need at least {} for {} free parameters",
                window.label,
                window.len(),
                layout.dim() + 1,
                layout.dim()
            )));
        }
        let observed_max = observed.values()[window.start..window.end]
            .iter()
            .copied()
            .fold(0.0, f64::max);
        let bounds = resolve_bounds(&config.bounds, exposures, observed_max, &layout)?;
        Ok(Self { layout, bounds })
    }

    fn starts<F>(&self, config: &FitConfig, eval: &F) -> Vec<(Vec<f64>, f64)>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        (0..config.n_starts)
            .into_par_iter()
            .map(|i| {
                let x = draw_start(config.seed, i, &self.bounds);
                let f = eval(&x);
                (x, f)
            })
            .collect()
    }
}

fn pinned_i0(observed: &TimeSeries, window: &Window, config: &FitConfig) -> Option<f64> {
    match config.initial_interest {
        InitialInterest::FirstObserved => Some(observed.values()[window.start]),
        InitialInterest::Fit | InitialInterest::Chain => None,
    }
}

/// The random starts [`fit`] would draw, in draw order, with their objectives.
pub fn evaluate_starts(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    config: &FitConfig,
    options: &SimOptions,
) -> Result<Vec<(HitParams, f64)>> {
    check_inputs(observed, exposures, exposures.n_channels())?;
    window.check(observed.len())?;
    options.validate()?;
    let problem = Problem::new(observed, exposures, window, config, pinned_i0(observed, window, config))?;
    let eval = |x: &[f64]| window_sse(&problem.layout.params(x), observed, exposures, window, options);
    Ok(problem
        .starts(config, &eval)
        .into_iter()
        .map(|(x, f)| (problem.layout.params(&x), f))
        .collect())
}

/// Fit over one window with I0 optionally pinned.
fn fit_window(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    config: &FitConfig,
    options: &SimOptions,
    pinned_i0: Option<f64>,
) -> Result<FitResult> {
    let problem = Problem::new(observed, exposures, window, config, pinned_i0)?;
    let (layout, bounds) = (&problem.layout, &problem.bounds);
    let observed_window = &observed.values()[window.start..window.end];
    let eval = |x: &[f64]| window_sse(&layout.params(x), observed, exposures, window, options);
    let starts = problem.starts(config, &eval);

    // Rank by objective; ties go to the lowest start index.
    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| starts[a].1.total_cmp(&starts[b].1).then(a.cmp(&b)));
    let simplex_opts = SimplexOptions {
        max_iters: config.refine_max_iters,
        tolerance: config.refine_tolerance,
        ..SimplexOptions::default()
    };
    let refined: Vec<simplex::SimplexResult> = order[..config.n_refine.clamp(1, starts.len())]
        .par_iter()
        .map(|&i| simplex::minimize(eval, &starts[i].0, bounds, &simplex_opts))
        .collect();

    let best_start = &starts[order[0]];
    let mut x = best_start.0.clone();
    let mut sse = best_start.1;
    let mut converged = false;
    let mut n_evaluations = config.n_starts;
    for r in &refined {
        n_evaluations += r.evaluations;
        if r.f < sse || (r.f == sse && !converged && r.converged) {
            x = r.x.clone();
            sse = r.f;
            converged = r.converged;
        }
    }

    let (rmse, r_squared) = diagnostics(observed_window, sse);
    Ok(FitResult {
        window: window.clone(),
        params: layout.params(&x),
        sse,
        rmse,
        r_squared,
        n_evaluations,
        converged,
    })
}

/// Fit parameters over a single window.
pub fn fit(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    config: &FitConfig,
    options: &SimOptions,
) -> Result<FitResult> {
    check_inputs(observed, exposures, exposures.n_channels())?;
    window.check(observed.len())?;
    options.validate()?;
    fit_window(observed, exposures, window, config, options, pinned_i0(observed, window, config))
}

/// Fit over the whole observation grid.
pub fn fit_full_run(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    config: &FitConfig,
    options: &SimOptions,
) -> Result<FitResult> {
    let window = Window::new("full", 0, observed.len());
    fit(observed, exposures, &window, config, options)
}

/// One window per episode: broadcast day up to the next broadcast day,
/// the last running to the end of the series.
pub fn episode_windows(observed: &TimeSeries, schedule: &EpisodeSchedule) -> Result<Vec<Window>> {
    let grid = observed.grid();
    let mut starts = Vec::with_capacity(schedule.len());
    for entry in schedule.entries() {
        let idx = grid.index_of(entry.date).ok_or_else(|| HitError::ScheduleOutOfRange {
            label: entry.label.clone(),
            date: entry.date.to_string(),
        })?;
        if let Some(&(_, prev)) = starts.last() {
            if idx <= prev {
                return Err(HitError::UnsortedSchedule {
                    label: entry.label.clone(),
                });
            }
        }
        starts.push((entry.label.clone(), idx));
    }
    let mut windows = Vec::with_capacity(starts.len());
    for (k, (label, start)) in starts.iter().enumerate() {
        let end = starts.get(k + 1).map_or(observed.len(), |s| s.1);
        windows.push(Window::new(label.clone(), *start, end));
    }
    Ok(windows)
}

/// Independent fit per episode window, in schedule order.
pub fn fit_per_episode(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    schedule: &EpisodeSchedule,
    config: &FitConfig,
    options: &SimOptions,
) -> Result<Vec<FitResult>> {
    check_inputs(observed, exposures, exposures.n_channels())?;
    options.validate()?;
    let windows = episode_windows(observed, schedule)?;

    match config.initial_interest {
        InitialInterest::Chain => {
            let mut results: Vec<FitResult> = Vec::with_capacity(windows.len());
            for window in &windows {
                let pinned = match results.last() {
                    None => None,
                    Some(prev) => Some(carry_over(prev, exposures, window.start, options)?),
                };
                results.push(fit_window(observed, exposures, window, config, options, pinned)?);
            }
            Ok(results)
        }
        _ => windows
            .par_iter()
            .map(|w| fit(observed, exposures, w, config, options))
            .collect(),
    }
}

/// Model interest at grid index `at`, continuing the previous window's fit.
fn carry_over(prev: &FitResult, exposures: &ExposureSet, at: usize, options: &SimOptions) -> Result<f64> {
    let path = model::integrate(&prev.params, exposures, prev.window.start, at + 1, prev.params.i0, options)?;
    Ok(*path.last().expect("nonempty path"))
}

/// Model curve for a fitted window, aligned with `result.window`.
pub fn model_curve(result: &FitResult, exposures: &ExposureSet, options: &SimOptions) -> Result<Vec<f64>> {
    if result.params.c.len() != exposures.n_channels() {
        return Err(HitError::DimensionMismatch {
            what: "media coefficients vs exposure channels",
            expected: exposures.n_channels(),
            found: result.params.c.len(),
        });
    }
    result.window.check(exposures.grid().len())?;
    model::integrate(
        &result.params,
        exposures,
        result.window.start,
        result.window.end,
        result.params.i0,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TimeGrid, TimeSeries};
    use chrono::NaiveDate;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 10, 11).unwrap()
    }

    fn zero_channel(len: usize) -> ExposureSet {
        let grid = TimeGrid::daily(day0(), len).unwrap();
        let series = TimeSeries::constant(grid.clone(), 0.0).unwrap();
        ExposureSet::empty(grid).with_channel("tv", series).unwrap()
    }

    fn observed(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(TimeGrid::daily(day0(), values.len()).unwrap(), values).unwrap()
    }

    #[test]
    fn constant_model_hand_sse() {
        let ex = zero_channel(3);
        let obs = observed(vec![5.0, 6.0, 5.0]);
        let params = HitParams::new(vec![0.0], 0.0, 0.0, 5.0).unwrap();
        let w = Window::new("all", 0, 3);
        let f = objective(&params, &obs, &ex, &w, &SimOptions::default()).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn self_generated_series_has_zero_objective() {
        let ex = zero_channel(20);
        let params = HitParams::new(vec![0.0], -0.1, 0.002, 40.0).unwrap();
        let sim = model::simulate(&params, &ex, &SimOptions::default()).unwrap();
        let w = Window::new("all", 0, 20);
        assert_eq!(objective(&params, &sim, &ex, &w, &SimOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn blowup_maps_to_sentinel() {
        let ex = zero_channel(10);
        let obs = observed(vec![1.0; 10]);
        let params = HitParams::new(vec![0.0], 0.0, 1.0, 10.0).unwrap();
        let w = Window::new("all", 0, 10);
        assert_eq!(
            objective(&params, &obs, &ex, &w, &SimOptions::default()).unwrap(),
            BLOWUP_SENTINEL
        );
    }

    #[test]
    fn objective_window_errors() {
        let ex = zero_channel(5);
        let obs = observed(vec![1.0; 5]);
        let params = HitParams::new(vec![0.0], 0.0, 0.0, 1.0).unwrap();
        for w in [Window::new("x", 2, 2), Window::new("x", 3, 6), Window::new("x", 4, 1)] {
            assert!(matches!(
                objective(&params, &obs, &ex, &w, &SimOptions::default()),
                Err(HitError::InvalidWindow(_))
            ));
        }
        let bad = HitParams::new(vec![], 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            objective(&bad, &obs, &ex, &Window::new("x", 0, 5), &SimOptions::default()),
            Err(HitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn window_starts_simulation_at_its_first_index() {
        let mut a = vec![0.0; 6];
        a[3] = 2.0;
        let grid = TimeGrid::daily(day0(), 6).unwrap();
        let ex = ExposureSet::empty(grid.clone())
            .with_channel("tv", TimeSeries::new(grid, a).unwrap())
            .unwrap();
        let obs = observed(vec![9.0, 9.0, 9.0, 1.0, 3.0, 3.0]);
        let params = HitParams::new(vec![1.0], 0.0, 0.0, 1.0).unwrap();
        let w = Window::new("tail", 3, 6);
        assert_eq!(objective(&params, &obs, &ex, &w, &SimOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn fit_constant_series() {
        let ex = zero_channel(30);
        let obs = observed(vec![7.0; 30]);
        let r = fit_full_run(&obs, &ex, &FitConfig::default(), &SimOptions::default()).unwrap();
        assert!(r.sse <= 1e-9, "sse = {}", r.sse);
        assert_eq!(r.r_squared, None);
    }

    #[test]
    fn fit_rejects_short_windows_and_bad_bounds() {
        let ex = zero_channel(4);
        let obs = observed(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            fit_full_run(&obs, &ex, &FitConfig::default(), &SimOptions::default()),
            Err(HitError::InvalidWindow(_))
        ));
        let ex = zero_channel(10);
        let obs = observed(vec![1.0; 10]);
        let mut config = FitConfig::default();
        config.bounds.d = (1.0, -1.0);
        assert!(matches!(
            fit_full_run(&obs, &ex, &config, &SimOptions::default()),
            Err(HitError::EmptyBounds { .. })
        ));
        let mut config = FitConfig::default();
        config.bounds.c = vec![(0.0, 1.0), (0.0, 1.0)];
        assert!(matches!(
            fit_full_run(&obs, &ex, &config, &SimOptions::default()),
            Err(HitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pinned_i0_uses_first_observation() {
        let ex = zero_channel(12);
        let obs = observed((0..12).map(|k| 3.0 + k as f64).collect());
        let config = FitConfig {
            initial_interest: InitialInterest::FirstObserved,
            ..FitConfig::default()
        };
        let r = fit_full_run(&obs, &ex, &config, &SimOptions::default()).unwrap();
        assert_eq!(r.params.i0, 3.0);
    }

    #[test]
    fn starts_are_reproducible_per_index() {
        let b = vec![(0.0, 1.0), (-2.0, 2.0), (5.0, 5.0)];
        assert_eq!(draw_start(9, 3, &b), draw_start(9, 3, &b));
        assert_ne!(draw_start(9, 3, &b), draw_start(9, 4, &b));
        assert_eq!(draw_start(9, 3, &b)[2], 5.0);
    }

    #[test]
    fn diagnostics_match_definitions() {
        let (rmse, r2) = diagnostics(&[1.0, 2.0, 3.0], 0.5);
        assert!((rmse - (0.5f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r2.unwrap() - 0.75).abs() < 1e-15);
    }
}
