//! Tabular file formats, calendar alignment and missing-day handling.
//!
//! All inputs are comma-separated UTF-8 with a fixed header:
//!
//! | file      | header               |
//! |-----------|----------------------|
//! | counts    | `date,count`         |
//! | exposures | `date,channel,value` |
//! | schedule  | `episode,date`       |
//!
//! Dates are `YYYY-MM-DD`. Exported reals use 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{HitError, Result};
use crate::estimator::{self, FitResult};
use crate::model::{Channel, ExposureSet, SimOptions, TimeGrid, TimeSeries};

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    Zero,
    LinearInterpolate,
    #[default]
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub label: String,
    pub date: NaiveDate,
}

/// Broadcast dates in strictly increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSchedule {
    entries: Vec<Episode>,
}

impl EpisodeSchedule {
    pub fn new(entries: Vec<Episode>) -> Result<Self> {
        if entries.is_empty() {
            return Err(HitError::InvalidInput("schedule has no entries".into()));
        }
        for pair in entries.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(HitError::UnsortedSchedule {
                    label: pair[1].label.clone(),
                });
            }
        }
        Ok(Self { entries })
    }

    /// Episodes labelled `"1"`, `"2"`, ... on the given dates.
    pub fn numbered(dates: impl IntoIterator<Item = NaiveDate>) -> Result<Self> {
        Self::new(
            dates
                .into_iter()
                .enumerate()
                .map(|(k, date)| Episode {
                    label: (k + 1).to_string(),
                    date,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[Episode] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Format a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| HitError::Parse {
        line,
        message: format!("bad date {s:?}: {e}"),
    })
}

fn parse_value(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|e| HitError::Parse {
        line,
        message: format!("bad number {s:?}: {e}"),
    })?;
    if !v.is_finite() {
        return Err(HitError::Parse {
            line,
            message: format!("non-finite number {s:?}"),
        });
    }
    if v < 0.0 {
        return Err(HitError::NegativeCount { line });
    }
    Ok(v)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| HitError::io(path, e))
}

/// Rows of a headed CSV as `(line number, fields)`.
fn records<R: Read>(reader: R, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| HitError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(HitError::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| HitError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(HitError::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// Fill the daily grid `[first, last]` from sparse `(date, value)` points.
///
/// `points` must be sorted by date. Interpolation is linear in calendar
/// days; days before the first or after the last point take the nearest
/// observed value.
fn fill_days(
    points: &[(NaiveDate, f64)],
    first: NaiveDate,
    last: NaiveDate,
    policy: MissingPolicy,
    channel: Option<&str>,
) -> Result<Vec<f64>> {
    let len = (last - first).num_days() as usize + 1;
    let mut values = vec![None; len];
    for &(d, v) in points {
        values[(d - first).num_days() as usize] = Some(v);
    }
    let missing_at = |k: usize| HitError::MissingData {
        date: (first + Duration::days(k as i64)).to_string(),
        channel: channel.map(str::to_string),
    };
    match policy {
        MissingPolicy::Error => values
            .iter()
            .enumerate()
            .map(|(k, v)| v.ok_or_else(|| missing_at(k)))
            .collect(),
        MissingPolicy::Zero => Ok(values.into_iter().map(|v| v.unwrap_or(0.0)).collect()),
        MissingPolicy::LinearInterpolate => {
            let known: Vec<(usize, f64)> = values
                .iter()
                .enumerate()
                .filter_map(|(k, v)| v.map(|v| (k, v)))
                .collect();
            let Some(&(k_first, v_first)) = known.first() else {
                return Err(missing_at(0));
            };
            let (k_last, v_last) = *known.last().unwrap();
            let mut out = vec![0.0; len];
            for slot in out.iter_mut().take(k_first) {
                *slot = v_first;
            }
            for pair in known.windows(2) {
                let ((ka, va), (kb, vb)) = (pair[0], pair[1]);
                for (k, slot) in out.iter_mut().enumerate().take(kb).skip(ka) {
                    let frac = (k - ka) as f64 / (kb - ka) as f64;
                    *slot = va + (vb - va) * frac;
                }
            }
            for slot in out.iter_mut().skip(k_last) {
                *slot = v_last;
            }
            Ok(out)
        }
    }
}

fn daily_grid(first: NaiveDate, last: NaiveDate) -> Result<TimeGrid> {
    let len = (last - first).num_days() as usize + 1;
    if len < 2 {
        return Err(HitError::InvalidInput(
            "a series needs at least two distinct days".into(),
        ));
    }
    TimeGrid::daily(first, len)
}

pub fn parse_counts<R: Read>(reader: R, policy: MissingPolicy) -> Result<TimeSeries> {
    let mut points: Vec<(NaiveDate, f64)> = Vec::new();
    for (line, rec) in records(reader, &["date", "count"])? {
        let date = parse_date(&rec[0], line)?;
        let value = parse_value(&rec[1], line)?;
        if points.last().is_some_and(|&(prev, _)| date <= prev) {
            return Err(HitError::NonMonotonicDates { line });
        }
        points.push((date, value));
    }
    let (Some(&(first, _)), Some(&(last, _))) = (points.first(), points.last()) else {
        return Err(HitError::InvalidInput("counts file has no rows".into()));
    };
    let grid = daily_grid(first, last)?;
    let values = fill_days(&points, first, last, policy, None)?;
    TimeSeries::new_counts(grid, values)
}

/// Read a `date,count` file onto a daily grid spanning its first to last date.
pub fn read_counts(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<TimeSeries> {
    parse_counts(open(path.as_ref())?, policy)
}

pub fn parse_exposures<R: Read>(reader: R, policy: MissingPolicy) -> Result<ExposureSet> {
    // Channels in order of first appearance.
    let mut channels: Vec<(String, Vec<(NaiveDate, f64)>)> = Vec::new();
    let mut prev_date: Option<NaiveDate> = None;
    for (line, rec) in records(reader, &["date", "channel", "value"])? {
        let date = parse_date(&rec[0], line)?;
        let name = rec[1].trim().to_string();
        if name.is_empty() {
            return Err(HitError::Parse {
                line,
                message: "empty channel name".into(),
            });
        }
        let value = parse_value(&rec[2], line)?;
        if prev_date.is_some_and(|p| date < p) {
            return Err(HitError::NonMonotonicDates { line });
        }
        prev_date = Some(date);
        let idx = match channels.iter().position(|(n, _)| *n == name) {
            Some(i) => i,
            None => {
                channels.push((name.clone(), Vec::new()));
                channels.len() - 1
            }
        };
        let points = &mut channels[idx].1;
        if points.last().is_some_and(|&(d, _)| d == date) {
            return Err(HitError::DuplicateChannelDate {
                channel: name,
                date: date.to_string(),
                line,
            });
        }
        points.push((date, value));
    }
    let first = channels.iter().filter_map(|(_, p)| p.first()).map(|p| p.0).min();
    let last = channels.iter().filter_map(|(_, p)| p.last()).map(|p| p.0).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(HitError::InvalidInput("exposures file has no rows".into()));
    };
    let grid = daily_grid(first, last)?;
    let mut set = ExposureSet::empty(grid.clone());
    for (name, points) in channels {
        let values = fill_days(&points, first, last, policy, Some(&name))?;
        set = set.with_channel(name, TimeSeries::new(grid.clone(), values)?)?;
    }
    Ok(set)
}

/// Read a long-format `date,channel,value` file onto the union daily grid.
pub fn read_exposures(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<ExposureSet> {
    parse_exposures(open(path.as_ref())?, policy)
}

pub fn parse_schedule<R: Read>(reader: R) -> Result<EpisodeSchedule> {
    let mut entries = Vec::new();
    for (line, rec) in records(reader, &["episode", "date"])? {
        entries.push(Episode {
            label: rec[0].trim().to_string(),
            date: parse_date(&rec[1], line)?,
        });
    }
    EpisodeSchedule::new(entries)
}

pub fn read_schedule(path: impl AsRef<Path>) -> Result<EpisodeSchedule> {
    parse_schedule(open(path.as_ref())?)
}

/// Broadcast pulses: `magnitude` on each scheduled day, zero elsewhere.
pub fn schedule_to_impulses(schedule: &EpisodeSchedule, grid: &TimeGrid, magnitude: f64) -> Result<TimeSeries> {
    if !(magnitude.is_finite() && magnitude >= 0.0) {
        return Err(HitError::InvalidInput(format!(
            "impulse magnitude must be >= 0, got {magnitude}"
        )));
    }
    let mut values = vec![0.0; grid.len()];
    for entry in schedule.entries() {
        let k = grid.index_of(entry.date).ok_or_else(|| HitError::ScheduleOutOfRange {
            label: entry.label.clone(),
            date: entry.date.to_string(),
        })?;
        values[k] = magnitude;
    }
    TimeSeries::new(grid.clone(), values)
}

/// Restrict both inputs to their common dates.
///
/// Both grids must share the step size and phase. Fails with `NoOverlap`
/// unless at least two grid points are shared.
pub fn align(observed: &TimeSeries, exposures: &ExposureSet) -> Result<(TimeSeries, ExposureSet)> {
    let (og, eg) = (observed.grid(), exposures.grid());
    if og == eg {
        return Ok((observed.clone(), exposures.clone()));
    }
    if og.dt() != eg.dt() {
        return Err(HitError::InvalidInput(format!(
            "cannot align grids with steps {} and {}",
            og.dt(),
            eg.dt()
        )));
    }
    let start = og.t0().max(eg.t0());
    let (Some(o0), Some(e0)) = (og.index_of(start), eg.index_of(start)) else {
        return Err(HitError::NoOverlap);
    };
    let n = (og.len() - o0).min(eg.len() - e0);
    if n < 2 {
        return Err(HitError::NoOverlap);
    }
    Ok((observed.slice(o0, o0 + n)?, exposures.slice(e0, e0 + n)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| HitError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| HitError::io(path, e))
}

fn write_lines<W: Write>(w: &mut W, lines: impl IntoIterator<Item = String>) -> std::io::Result<()> {
    for line in lines {
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Render a series in the counts format (shortest round-trip decimal).
pub fn counts_to_string(series: &TimeSeries) -> String {
    let grid = series.grid();
    let mut out = String::from("date,count\n");
    for (k, v) in series.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", grid.date_at(k).format(DATE_FORMAT), v));
    }
    out
}

pub fn write_counts(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    if series.grid().dt() != 1.0 {
        return Err(HitError::InvalidInput("counts files hold daily series only".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, counts_to_string(series)).map_err(|e| HitError::io(path, e))
}

pub fn write_exposures(exposures: &ExposureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let grid = exposures.grid();
    let mut w = create(path)?;
    let rows = (0..grid.len()).flat_map(|k| {
        exposures.channels().iter().map(move |ch| {
            format!("{},{},{}", grid.date_at(k).format(DATE_FORMAT), ch.name, ch.series.values()[k])
        })
    });
    write_lines(&mut w, std::iter::once("date,channel,value".to_string()).chain(rows))
        .map_err(|e| HitError::io(path, e))?;
    finish(path, w)
}

pub fn write_schedule(schedule: &EpisodeSchedule, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("episode,date\n");
    for e in schedule.entries() {
        text.push_str(&format!("{},{}\n", e.label, e.date.format(DATE_FORMAT)));
    }
    std::fs::write(path, text).map_err(|e| HitError::io(path, e))
}

/// Fit-curve table: `date,observed,model,<channel>...` over the fit window.
pub fn fit_curve_to_string(
    result: &FitResult,
    observed: &TimeSeries,
    exposures: &ExposureSet,
    options: &SimOptions,
) -> Result<String> {
    if observed.grid() != exposures.grid() {
        return Err(HitError::InvalidInput(
            "observed series and exposures are on different grids".into(),
        ));
    }
    let model = estimator::model_curve(result, exposures, options)?;
    let grid = observed.grid();
    let mut header = vec!["date".to_string(), "observed".into(), "model".into()];
    header.extend(exposures.names());
    let mut out = header.join(",");
    out.push('\n');
    for (j, k) in (result.window.start..result.window.end).enumerate() {
        let mut row = vec![
            grid.date_at(k).format(DATE_FORMAT).to_string(),
            fmt_real(observed.values()[k]),
            fmt_real(model[j]),
        ];
        row.extend(exposures.channels().iter().map(|ch: &Channel| fmt_real(ch.series.values()[k])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn export_fit_curve(
    result: &FitResult,
    observed: &TimeSeries,
    exposures: &ExposureSet,
    options: &SimOptions,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let text = fit_curve_to_string(result, observed, exposures, options)?;
    std::fs::write(path, text).map_err(|e| HitError::io(path, e))
}

/// Per-episode parameter table:
/// `episode_label,c_<channel>...,D,P,I0,sse,rmse,r_squared`.
///
/// An absent R² is written as an empty field.
pub fn episode_params_to_string(results: &[FitResult], channel_names: &[String]) -> Result<String> {
    let mut header = vec!["episode_label".to_string()];
    header.extend(channel_names.iter().map(|n| format!("c_{n}")));
    header.extend(["D", "P", "I0", "sse", "rmse", "r_squared"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    for r in results {
        if r.params.c.len() != channel_names.len() {
            return Err(HitError::DimensionMismatch {
                what: "media coefficients vs channel names",
                expected: channel_names.len(),
                found: r.params.c.len(),
            });
        }
        let mut row = vec![r.window.label.clone()];
        row.extend(r.params.c.iter().map(|&v| fmt_real(v)));
        row.extend([r.params.d, r.params.p, r.params.i0, r.sse, r.rmse].map(fmt_real));
        row.push(r.r_squared.map(fmt_real).unwrap_or_default());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn export_episode_params(results: &[FitResult], channel_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = episode_params_to_string(results, channel_names)?;
    std::fs::write(path, text).map_err(|e| HitError::io(path, e))
}
