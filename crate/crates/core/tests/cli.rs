use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hitfit::cli::RunReport;
use tempfile::TempDir;

fn hitfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitfit"))
        .args(args)
        .output()
        .expect("run hitfit")
}

fn ok(args: &[&str]) -> Output {
    let out = hitfit(args);
    assert!(
        out.status.success(),
        "hitfit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Weekly episodes from 2016-10-11 that fall inside the first `days` days.
fn write_schedule(path: &Path, days: i64) {
    let day0 = chrono::NaiveDate::from_ymd_opt(2016, 10, 11).unwrap();
    let mut text = String::from("episode,date\n");
    for k in (0..11).take_while(|k| 7 * k < days) {
        text.push_str(&format!("{},{}\n", k + 1, day0 + chrono::Duration::days(7 * k)));
    }
    fs::write(path, text).unwrap();
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        write_schedule(&dir.path().join("schedule.csv"), 77);
        fs::write(
            dir.path().join("params.json"),
            r#"{"channels":["tv"],"c":[60.0],"d":-0.5,"p":0.003,"i0":100.0}"#,
        )
        .unwrap();
        fs::write(
            dir.path().join("bounds.json"),
            r#"{"c":[[0.0,100.0]],"d":[-1.0,1.0],"p":[-0.01,0.01],"i0":null}"#,
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Synthetic counts + exposures under `<name>/`.
    fn synth(&self, name: &str, days: usize, sigma: f64) -> PathBuf {
        let out = self.path(name);
        let schedule = self.path(&format!("schedule_{days}.csv"));
        write_schedule(&schedule, days as i64);
        ok(&[
            "synth",
            "--schedule",
            s(&schedule),
            "--tv-impulses",
            "1",
            "--start",
            "2016-10-11",
            "--days",
            &days.to_string(),
            "--params",
            s(&self.path("params.json")),
            "--sigma",
            &sigma.to_string(),
            "--noise-seed",
            "42",
            "--out-dir",
            s(&out),
        ]);
        out
    }
}

#[test]
fn synth_then_fit_recovers_parameters() {
    let fx = Fixture::new();
    let data = fx.synth("data", 60, 0.0);
    let out = fx.path("fit");
    ok(&[
        "fit",
        "--counts",
        s(&data.join("counts.csv")),
        "--exposures",
        s(&data.join("exposures.csv")),
        "--bounds",
        s(&fx.path("bounds.json")),
        "--truth",
        s(&data.join("params.json")),
        "--seed",
        "3",
        "--out-dir",
        s(&out),
    ]);
    let report: RunReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let recovery = report.recovery.expect("recovery section");
    assert_eq!(recovery.len(), 4);
    for row in &recovery {
        assert!(row.relative_error <= 0.01, "{row:?}");
    }
    assert_eq!(report.fit_config.seed, 3);
    assert_eq!(report.inputs.len(), 4);
    assert!(report.inputs.iter().all(|d| d.sha256.len() == 64));

    let curve = fs::read_to_string(out.join("fit_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("date,observed,model,tv"));
    assert_eq!(lines.count(), 60);
}

#[test]
fn fit_windows_writes_one_row_per_episode() {
    let fx = Fixture::new();
    let data = fx.synth("data", 77, 1.0);
    let out = fx.path("windows");
    ok(&[
        "fit-windows",
        "--counts",
        s(&data.join("counts.csv")),
        "--schedule",
        s(&fx.path("schedule.csv")),
        "--tv-impulses",
        "1",
        "--bounds",
        s(&fx.path("bounds.json")),
        "--out-dir",
        s(&out),
    ]);
    let table = fs::read_to_string(out.join("episode_params.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "episode_label,c_tv,D,P,I0,sse,rmse,r_squared");
    assert_eq!(lines.len(), 12);
    assert!(lines[11].starts_with("11,"));
}

#[test]
fn mismatched_params_file_fails_with_code() {
    let fx = Fixture::new();
    let data = fx.synth("data", 30, 0.0);
    fs::write(
        fx.path("two.json"),
        r#"{"channels":["tv","news"],"c":[1.0,2.0],"d":0.0,"p":0.0,"i0":1.0}"#,
    )
    .unwrap();
    let out = hitfit(&[
        "fit",
        "--counts",
        s(&data.join("counts.csv")),
        "--exposures",
        s(&data.join("exposures.csv")),
        "--truth",
        s(&fx.path("two.json")),
        "--out-dir",
        s(&fx.path("bad")),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[DimensionMismatch]: "), "{stderr}");
}

#[test]
fn missing_input_reports_io_error() {
    let fx = Fixture::new();
    let out = hitfit(&["fit", "--counts", s(&fx.path("nope.csv")), "--out-dir", s(&fx.path("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[IoError]: "));
}

#[test]
fn simulate_writes_series() {
    let fx = Fixture::new();
    let data = fx.synth("data", 20, 0.0);
    let out = fx.path("sim");
    ok(&[
        "simulate",
        "--exposures",
        s(&data.join("exposures.csv")),
        "--params",
        s(&fx.path("params.json")),
        "--out-dir",
        s(&out),
    ]);
    // Noise-free synth output and a plain simulation agree exactly.
    assert_eq!(
        fs::read_to_string(out.join("simulated.csv")).unwrap(),
        fs::read_to_string(data.join("counts.csv")).unwrap()
    );
    ok(&[
        "simulate",
        "--exposures",
        s(&data.join("exposures.csv")),
        "--params",
        s(&fx.path("params.json")),
        "--integrator",
        "rk4",
        "--dt",
        "0.5",
        "--out-dir",
        s(&fx.path("sim_rk4")),
    ]);
}

#[test]
fn identical_runs_give_identical_reports() {
    let fx = Fixture::new();
    let data = fx.synth("data", 77, 2.0);
    let run = |name: &str| {
        let out = fx.path(name);
        ok(&[
            "fit-windows",
            "--counts",
            s(&data.join("counts.csv")),
            "--exposures",
            s(&data.join("exposures.csv")),
            "--schedule",
            s(&fx.path("schedule.csv")),
            "--bounds",
            s(&fx.path("bounds.json")),
            "--seed",
            "17",
            "--out-dir",
            s(&out),
        ]);
        let mut report: RunReport =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        report.wall_clock_seconds = 0.0;
        (fs::read(out.join("episode_params.csv")).unwrap(), report)
    };
    let (table_a, report_a) = run("a");
    let (table_b, report_b) = run("b");
    assert_eq!(table_a, table_b);
    assert_eq!(report_a, report_b);
}
