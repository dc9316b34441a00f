#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use hitfit::dataio::{schedule_to_impulses, EpisodeSchedule};
use hitfit::estimator::FitBounds;
use hitfit::model::{self, ExposureSet, HitParams, SimOptions, TimeGrid, TimeSeries};
use hitfit::synth::{self, NoiseSpec};

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 10, 11).unwrap()
}

pub fn weekly_schedule(episodes: usize) -> EpisodeSchedule {
    EpisodeSchedule::numbered((0..episodes as i64).map(|k| day0() + Duration::days(7 * k))).unwrap()
}

/// One "tv" channel with unit pulses every 7 days from day 0.
pub fn weekly_tv(days: usize) -> ExposureSet {
    let grid = TimeGrid::daily(day0(), days).unwrap();
    let schedule = weekly_schedule(days.div_ceil(7));
    let pulses = schedule_to_impulses(&schedule, &grid, 1.0).unwrap();
    ExposureSet::empty(grid).with_channel("tv", pulses).unwrap()
}

/// Search box around the plausible region of the synthetic instances.
pub fn realistic_bounds() -> FitBounds {
    FitBounds {
        c: vec![(0.0, 100.0)],
        d: (-1.0, 1.0),
        p: (-0.01, 0.01),
        i0: None,
    }
}

pub fn recovery_truth() -> HitParams {
    HitParams::new(vec![60.0], -0.5, 0.003, 100.0).unwrap()
}

pub fn max_relative_error(fitted: &HitParams, truth: &HitParams) -> f64 {
    let pairs = fitted
        .c
        .iter()
        .zip(&truth.c)
        .chain([(&fitted.d, &truth.d), (&fitted.p, &truth.p), (&fitted.i0, &truth.i0)]);
    pairs.map(|(f, t)| ((f - t) / t).abs()).fold(0.0, f64::max)
}

pub fn tss(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}

pub const SPIKE_EPISODES: usize = 11;
pub const SPIKE_WINDOW: usize = 4;

/// 77 days, 11 weekly episodes; P is raised only inside episode 5.
///
/// Each window is simulated with its own parameters and starts where the
/// previous window's trajectory would be on that day.
pub fn planted_spike_series(noise_seed: u64) -> (TimeSeries, ExposureSet, EpisodeSchedule) {
    let days = 7 * SPIKE_EPISODES;
    let exposures = weekly_tv(days);
    let options = SimOptions::default();
    let mut values = Vec::with_capacity(days);
    let mut start_interest = 20.0;
    for k in 0..SPIKE_EPISODES {
        let p = if k == SPIKE_WINDOW { 0.0025 } else { 0.001 };
        let params = HitParams::new(vec![100.0], -0.4, p, start_interest).unwrap();
        let end = (7 * k + 8).min(days);
        let piece = model::simulate(&params, &exposures.slice(7 * k, end).unwrap(), &options).unwrap();
        values.extend_from_slice(&piece.values()[..7]);
        if end == 7 * k + 8 {
            start_interest = piece.values()[7];
        }
    }
    let clean = TimeSeries::new(exposures.grid().clone(), values).unwrap();
    let sigma = 0.01 * clean.max();
    let zero = HitParams::new(vec![0.0], 0.0, 0.0, 0.0).unwrap();
    let raw = SimOptions {
        clamp_nonnegative: false,
        ..SimOptions::default()
    };
    let noise = synth::generate(&zero, &exposures, &NoiseSpec::gaussian(sigma, noise_seed).unwrap(), &raw).unwrap();
    let noisy = clean
        .values()
        .iter()
        .zip(noise.values())
        .map(|(c, n)| (c + n).max(0.0))
        .collect();
    let observed = TimeSeries::new(clean.grid().clone(), noisy).unwrap();
    (observed, exposures, weekly_schedule(SPIKE_EPISODES))
}
