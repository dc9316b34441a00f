//! Interest dynamics driven by media exposure, conversation and rumor.
//!
//! The state is a scalar interest `I(t)` evolving as
//!
//! ```text
//! dI/dt = sum_k c_k A_k(t) + D I + P I^2
//! ```
//!
//! where `A_k` are exposure channels (TV broadcasts, web news counts, ...),
//! `D` is the direct-communication rate and `P` the indirect (rumor)
//! coefficient. Exposures are piecewise constant over each grid step.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{HitError, Result};

/// Uniform time grid: points `t0 + k * dt` for `k = 0..=n_steps`, `dt` in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: NaiveDate,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t0: NaiveDate, n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(HitError::InvalidInput("time grid needs n_steps >= 1".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(HitError::InvalidInput(format!("time grid step must be > 0, got {dt}")));
        }
        Ok(Self { t0, n_steps, dt })
    }

    /// Daily grid covering `len` consecutive days starting at `t0`.
    pub fn daily(t0: NaiveDate, len: usize) -> Result<Self> {
        Self::new(t0, len.saturating_sub(1), 1.0)
    }

    pub fn t0(&self) -> NaiveDate {
        self.t0
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Elapsed time of point `k` in days.
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Calendar day containing grid point `k`.
    pub fn date_at(&self, k: usize) -> NaiveDate {
        self.t0 + Duration::days(self.time_at(k).floor() as i64)
    }

    /// Grid index landing exactly on the start of `date`, if any.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let days = (date - self.t0).num_days();
        if days < 0 {
            return None;
        }
        let k = (days as f64 / self.dt).round();
        if k as usize >= self.len() || (k * self.dt - days as f64).abs() > 1e-9 {
            return None;
        }
        Some(k as usize)
    }

    pub fn last_date(&self) -> NaiveDate {
        self.date_at(self.n_steps)
    }

    /// Sub-grid of points `start..end` (half-open), re-anchored at `start`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(HitError::InvalidWindow(format!(
                "[{start}, {end}) is not inside a grid of {} points",
                self.len()
            )));
        }
        TimeGrid::new(self.date_at(start), end - start - 1, self.dt)
    }
}

/// Values sampled on every point of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HitError::DimensionMismatch {
                what: "series values vs grid points",
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(HitError::InvalidInput(format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Like [`TimeSeries::new`] but also rejects negative values.
    pub fn new_counts(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|&v| v < 0.0) {
            return Err(HitError::InvalidInput(format!("negative count at index {k}")));
        }
        Self::new(grid, values)
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let grid = self.grid.slice(start, end)?;
        Ok(Self {
            grid,
            values: self.values[start..end].to_vec(),
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One named exposure channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub series: TimeSeries,
}

/// Exposure channels sharing one grid. May hold zero channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSet {
    grid: TimeGrid,
    channels: Vec<Channel>,
}

impl ExposureSet {
    pub fn new(grid: TimeGrid, channels: Vec<Channel>) -> Result<Self> {
        for (i, ch) in channels.iter().enumerate() {
            if ch.series.grid() != &grid {
                return Err(HitError::InvalidInput(format!(
                    "channel {:?} is not on the shared grid",
                    ch.name
                )));
            }
            if channels[..i].iter().any(|other| other.name == ch.name) {
                return Err(HitError::InvalidInput(format!("duplicate channel name {:?}", ch.name)));
            }
            if ch.series.values().iter().any(|&v| v < 0.0) {
                return Err(HitError::InvalidInput(format!(
                    "channel {:?} has negative exposure",
                    ch.name
                )));
            }
        }
        Ok(Self { grid, channels })
    }

    pub fn empty(grid: TimeGrid) -> Self {
        Self {
            grid,
            channels: Vec::new(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn with_channel(mut self, name: impl Into<String>, series: TimeSeries) -> Result<Self> {
        let mut channels = std::mem::take(&mut self.channels);
        channels.push(Channel {
            name: name.into(),
            series,
        });
        Self::new(self.grid, channels)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let grid = self.grid.slice(start, end)?;
        let channels = self
            .channels
            .iter()
            .map(|ch| {
                Ok(Channel {
                    name: ch.name.clone(),
                    series: ch.series.slice(start, end)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, channels })
    }

    /// Weighted exposure `sum_k c_k A_k` at grid index `k`.
    #[inline]
    pub(crate) fn forcing(&self, c: &[f64], k: usize) -> f64 {
        self.channels
            .iter()
            .zip(c)
            .map(|(ch, ck)| ck * ch.series.values[k])
            .sum()
    }
}

/// Model parameters. Bounds apply only while fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitParams {
    /// Media coefficient per exposure channel.
    pub c: Vec<f64>,
    /// Direct-communication rate (1/day).
    pub d: f64,
    /// Indirect-communication (rumor) coefficient (1/(interest day)).
    pub p: f64,
    /// Interest at the first grid point.
    pub i0: f64,
}

impl HitParams {
    pub fn new(c: Vec<f64>, d: f64, p: f64, i0: f64) -> Result<Self> {
        let params = Self { c, d, p, i0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.d.is_finite()
            && self.p.is_finite()
            && self.i0.is_finite();
        if !finite {
            return Err(HitError::InvalidInput("parameters must be finite".into()));
        }
        if self.i0 < 0.0 {
            return Err(HitError::InvalidInput(format!("I0 must be >= 0, got {}", self.i0)));
        }
        Ok(())
    }

    fn check_channels(&self, exposures: &ExposureSet) -> Result<()> {
        if self.c.len() != exposures.n_channels() {
            return Err(HitError::DimensionMismatch {
                what: "media coefficients vs exposure channels",
                expected: exposures.n_channels(),
                found: self.c.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    EulerForward,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub integrator: Integrator,
    /// Any `|I|` above this aborts the run with `BlowupDetected`.
    pub blowup_cap: f64,
    /// Set negative step results to zero.
    pub clamp_nonnegative: bool,
    /// Integration sub-steps per grid interval; exposure is held fixed across them.
    pub substeps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::EulerForward,
            blowup_cap: 1e12,
            clamp_nonnegative: true,
            substeps: 1,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if self.blowup_cap.is_nan() || self.blowup_cap <= 0.0 {
            return Err(HitError::InvalidInput(format!(
                "blowup_cap must be > 0, got {}",
                self.blowup_cap
            )));
        }
        if self.substeps == 0 {
            return Err(HitError::InvalidInput("substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Right-hand side of the interest equation at grid index `t_index`.
pub fn rhs(params: &HitParams, exposures: &ExposureSet, t_index: usize, interest: f64) -> Result<f64> {
    params.check_channels(exposures)?;
    if t_index >= exposures.grid().len() {
        return Err(HitError::InvalidInput(format!(
            "time index {t_index} outside grid of {} points",
            exposures.grid().len()
        )));
    }
    let forcing = exposures.forcing(&params.c, t_index);
    Ok(forcing + params.d * interest + params.p * interest * interest)
}

/// Simulate interest on the exposure grid starting from `params.i0`.
pub fn simulate(params: &HitParams, exposures: &ExposureSet, options: &SimOptions) -> Result<TimeSeries> {
    params.validate()?;
    params.check_channels(exposures)?;
    options.validate()?;
    let grid = exposures.grid();
    let values = integrate(params, exposures, 0, grid.len(), params.i0, options)?;
    TimeSeries::new(grid.clone(), values)
}

/// Integrate over grid indices `start..end` with `I(start) = i0`.
///
/// Callers have already checked channel counts and the index range.
pub(crate) fn integrate(
    params: &HitParams,
    exposures: &ExposureSet,
    start: usize,
    end: usize,
    i0: f64,
    options: &SimOptions,
) -> Result<Vec<f64>> {
    debug_assert!(start < end && end <= exposures.grid().len());
    let cap = options.blowup_cap;
    if i0.is_nan() || i0.abs() > cap {
        return Err(HitError::BlowupDetected { step: 0, value: i0 });
    }
    let h = exposures.grid().dt() / options.substeps as f64;
    let (d, p) = (params.d, params.p);

    let mut out = Vec::with_capacity(end - start);
    let mut interest = i0;
    out.push(interest);
    for k in start..end - 1 {
        let forcing = exposures.forcing(&params.c, k);
        let f = |i: f64| forcing + d * i + p * i * i;
        for _ in 0..options.substeps {
            interest = match options.integrator {
                Integrator::EulerForward => interest + h * f(interest),
                Integrator::Rk4 => {
                    let k1 = f(interest);
                    let k2 = f(interest + 0.5 * h * k1);
                    let k3 = f(interest + 0.5 * h * k2);
                    let k4 = f(interest + h * k3);
                    interest + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                }
            };
            if options.clamp_nonnegative && interest < 0.0 {
                interest = 0.0;
            }
            // NaN fails the comparison and is reported as a blowup too.
            if interest.is_nan() || interest.abs() > cap {
                return Err(HitError::BlowupDetected {
                    step: k - start + 1,
                    value: interest,
                });
            }
        }
        out.push(interest);
    }
    Ok(out)
}
