//! Synthetic observations and a brute-force grid oracle for the estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HitError, Result};
use crate::estimator::{self, Window};
use crate::model::{self, ExposureSet, HitParams, SimOptions, TimeSeries};

pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    GaussianAdditive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    kind: NoiseKind,
    sigma: f64,
    seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(HitError::InvalidInput(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::GaussianAdditive,
            sigma,
            seed,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Simulate and add i.i.d. noise; clamps at zero when the options clamp.
pub fn generate(
    params: &HitParams,
    exposures: &ExposureSet,
    noise: &NoiseSpec,
    options: &SimOptions,
) -> Result<TimeSeries> {
    let clean = model::simulate(params, exposures, options)?;
    if noise.kind == NoiseKind::None || noise.sigma == 0.0 {
        return Ok(clean);
    }
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| HitError::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let values = clean
        .values()
        .iter()
        .map(|&v| {
            let noisy = v + normal.sample(&mut rng);
            if options.clamp_nonnegative {
                noisy.max(0.0)
            } else {
                noisy
            }
        })
        .collect();
    TimeSeries::new(clean.grid().clone(), values)
}

/// Candidate values per parameter; the oracle evaluates their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub p: Vec<f64>,
    pub i0: Vec<f64>,
    pub cap: u128,
}

impl GridSpec {
    pub fn new(c: Vec<Vec<f64>>, d: Vec<f64>, p: Vec<f64>, i0: Vec<f64>) -> Result<Self> {
        let spec = Self {
            c,
            d,
            p,
            i0,
            cap: DEFAULT_GRID_CAP,
        };
        if spec.axes().any(|a| a.is_empty()) {
            return Err(HitError::InvalidInput("every grid axis needs at least one value".into()));
        }
        Ok(spec)
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    /// `points` evenly spaced values on every interval, endpoints included.
    pub fn spanning(c: &[(f64, f64)], d: (f64, f64), p: (f64, f64), i0: (f64, f64), points: usize) -> Result<Self> {
        let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
            if points <= 1 || hi == lo {
                return vec![lo];
            }
            (0..points)
                .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                .collect()
        };
        Self::new(c.iter().map(|&iv| axis(iv)).collect(), axis(d), axis(p), axis(i0))
    }

    /// Axes in lexicographic order: c channels, D, P, I0.
    fn axes(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.c.iter().chain([&self.d, &self.p, &self.i0])
    }

    pub fn cardinality(&self) -> u128 {
        self.axes().map(|a| a.len() as u128).product()
    }

    /// Parameters at flat index `idx`, last axis varying fastest.
    fn point(&self, mut idx: usize) -> HitParams {
        let axes: Vec<&Vec<f64>> = self.axes().collect();
        let mut x = vec![0.0; axes.len()];
        for (slot, axis) in x.iter_mut().zip(&axes).rev() {
            *slot = axis[idx % axis.len()];
            idx /= axis.len();
        }
        let m = self.c.len();
        HitParams {
            c: x[..m].to_vec(),
            d: x[m],
            p: x[m + 1],
            i0: x[m + 2],
        }
    }
}

/// Exhaustive minimum of the window objective over `grid`.
///
/// Ties resolve to the lowest flat index, so the answer does not depend on
/// evaluation order. Points with negative I0 are skipped as invalid.
pub fn grid_oracle(
    observed: &TimeSeries,
    exposures: &ExposureSet,
    window: &Window,
    grid: &GridSpec,
    options: &SimOptions,
) -> Result<(HitParams, f64)> {
    let size = grid.cardinality();
    if size > grid.cap {
        return Err(HitError::GridTooLarge { size, cap: grid.cap });
    }
    // Validates grids, window and channel count once, up front.
    let first = grid.point(0);
    estimator::objective(
        &HitParams { i0: first.i0.max(0.0), ..first },
        observed,
        exposures,
        window,
        options,
    )?;

    let values: Vec<f64> = (0..size as usize)
        .into_par_iter()
        .map(|idx| {
            let params = grid.point(idx);
            if params.validate().is_err() {
                return f64::INFINITY;
            }
            estimator::window_sse(&params, observed, exposures, window, options)
        })
        .collect();
    let (best_idx, best) = values
        .iter()
        .enumerate()
        .fold((0usize, values[0]), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    if best == f64::INFINITY {
        return Err(HitError::InvalidInput("grid holds no valid parameter point".into()));
    }
    Ok((grid.point(best_idx), best))
}
