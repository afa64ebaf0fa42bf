use std::path::{Path, PathBuf};
use std::process::Command;

use backaction_cli::config::{OutputConfig, PulseConfig, PulseKindConfig, Spacing, SystemConfig};
use backaction_cli::{format_number, meta_path, run_single, run_sweep, Config, OracleConfig, RunOptions, SweepAxis, SweepConfig};
use donor_backaction::analytics::loglog_slope;
use proptest::prelude::*;

fn base(kind: PulseKindConfig, a: Vec<f64>, state: &str) -> Config {
    Config {
        initial_state: state.into(),
        system: SystemConfig { hyperfine_mhz: a, b_field_t: 1.4, gamma_e_mhz_per_t: None, gamma_n_mhz_per_t: None },
        pulse: PulseConfig {
            kind,
            tau_up_out_us: 80.0,
            tau_in_us: 120.0,
            tau_down_out_us: (kind == PulseKindConfig::Resonant).then_some(80.0),
            duration_us: 1000.0,
            sample_points: None,
        },
        sweep: None,
        output: None,
        oracle: None,
    }
}

fn sweep(mut cfg: Config, axis: SweepAxis, start: f64, stop: f64, n: usize) -> Config {
    cfg.sweep = Some(SweepConfig { axis, start, stop, num_points: n, spacing: Spacing::Log });
    cfg
}

fn out(dir: &Path, name: &str) -> RunOptions {
    RunOptions { out: Some(dir.join(name)), ..Default::default() }
}

/// Header plus numeric rows; panics on any cell that is not a finite number.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let row: Vec<f64> = l
                .split(',')
                .map(|c| {
                    let x: f64 = c.parse().unwrap_or_else(|_| panic!("cell `{c}`"));
                    assert!(x.is_finite(), "cell `{c}`");
                    x
                })
                .collect();
            assert_eq!(row.len(), header.len());
            row
        })
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k]).collect()
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![0.01..1e4f64, Just(f64::INFINITY)]
}

fn arb_config() -> impl Strategy<Value = Config> {
    let system = (prop::collection::vec(0.0..300.0f64, 1..=3), 0.05..5.0f64, prop::option::of(1.0..3e4f64))
        .prop_map(|(a, b, ge)| SystemConfig { hyperfine_mhz: a, b_field_t: b, gamma_e_mhz_per_t: ge, gamma_n_mhz_per_t: None });
    let pulse = (any::<bool>(), positive(), positive(), positive(), 0.0..5000.0f64, prop::option::of(2usize..5000))
        .prop_map(|(res, up, tin, down, d, n)| PulseConfig {
            kind: if res { PulseKindConfig::Resonant } else { PulseKindConfig::Readout },
            tau_up_out_us: up,
            tau_in_us: tin,
            tau_down_out_us: res.then_some(down),
            duration_us: d,
            sample_points: n,
        });
    let extras = (
        prop::option::of((0.1..10.0f64, 2usize..50, any::<bool>())),
        prop::option::of("[a-z]{1,8}\\.csv"),
        prop::option::of((1u64..1_000_000, any::<u64>())),
    );
    (system, pulse, 1usize..=4, extras).prop_map(|(system, pulse, e, (sw, csv, oracle))| Config {
        initial_state: format!("e{e}"),
        system,
        pulse,
        sweep: sw.map(|(start, n, log)| SweepConfig {
            axis: SweepAxis::BField,
            start,
            stop: start * 2.0,
            num_points: n,
            spacing: if log { Spacing::Log } else { Spacing::Linear },
        }),
        output: csv.map(|c| OutputConfig { csv: PathBuf::from(c) }),
        oracle: oracle.map(|(num_trajectories, seed)| OracleConfig { num_trajectories, seed }),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_toml(cfg in arb_config()) {
        let text = cfg.to_toml();
        let back: Config = toml::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn formatted_numbers_parse_back(x in prop_oneof![-1e15..1e15f64, -1e-3..1e-3f64, Just(0.0)]) {
        let s = format_number(x);
        let y: f64 = s.parse().unwrap();
        prop_assert!((y - x).abs() <= 1e-11 * x.abs(), "{} -> {} -> {}", x, s, y);
        prop_assert!(!s.contains(' ') && !s.contains('_'));
    }
}

#[test]
fn number_format_switches_to_scientific_below_1e_3() {
    assert_eq!(format_number(0.0), "0");
    assert_eq!(format_number(1000.0), "1000");
    assert_eq!(format_number(0.5), "0.5");
    assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
    assert_eq!(format_number(4.462054e-6), "4.46205400000e-6");
    assert_eq!(format_number(-2.0e-4), "-2.00000000000e-4");
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let good = base(PulseKindConfig::Readout, vec![117.0], "e4").to_toml();
    assert!(Config::from_toml(&good).is_ok());
    let err = Config::from_toml(&format!("{good}\n[extra]\nx = 1\n")).unwrap_err();
    assert_eq!(err.category(), "config");
    let err = Config::from_toml(&good.replace("tau_in_us = 120.0", "tau_in_us = -1.0")).unwrap_err();
    assert!(err.to_string().starts_with("pulse"), "{err}");
    let err = Config::from_toml(&good.replace("\"e4\"", "\"UUu\"")).unwrap_err();
    assert!(err.to_string().starts_with("initial_state"), "{err}");
    let mut stark = sweep(base(PulseKindConfig::Readout, vec![117.0], "e4"), SweepAxis::StarkShift, 1.0, 10.0, 3);
    assert!(stark.validate().is_err());
    stark.system.hyperfine_mhz = vec![67.0, 50.0];
    stark.initial_state = "~UDu".into();
    assert!(stark.validate().is_ok());
    stark.sweep.as_mut().unwrap().stop = 117.0;
    assert!(stark.validate().is_err());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn readout_time_series_shape_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = base(PulseKindConfig::Readout, vec![117.0], "e4");
    let report = run_single(&cfg, &out(dir.path(), "r.csv")).unwrap();
    assert_eq!(report.rows, 1001);
    let (header, rows) = read_csv(&report.csv);
    assert_eq!(header, ["time_us", "P_U", "P_D", "P_e_up", "P_e_down", "P_e_set"]);
    assert_eq!(rows.len(), 1001);
    assert_eq!(rows[1000][0], 1000.0);
    for r in &rows {
        assert!((r[1] + r[2] - 1.0).abs() < 1e-8);
        assert!((r[3] + r[4] + r[5] - 1.0).abs() < 1e-8);
    }
    let meta: toml::Table = std::fs::read_to_string(meta_path(&report.csv)).unwrap().parse().unwrap();
    assert_eq!(meta["run"]["command"].as_str(), Some("simulate"));
    assert_eq!(meta["units"]["time"].as_str(), Some("us"));
    let params: Config = meta["parameters"].clone().try_into().unwrap();
    assert_eq!(params, cfg);
    let flip = meta["results"]["flip_1"].as_float().unwrap();
    assert!((flip / 4.462e-6 - 1.0).abs() < 0.01, "{flip}");
}

#[test]
fn resonant_nuclear_up_never_increases() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_single(&base(PulseKindConfig::Resonant, vec![117.0], "e4"), &out(dir.path(), "r.csv")).unwrap();
    let (header, rows) = read_csv(&report.csv);
    let up = column(&header, &rows, "P_U");
    assert!(up.windows(2).all(|w| w[1] <= w[0]));
    assert!(up[1000] < 1.0 - 1e-5);
}

#[test]
fn zero_duration_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base(PulseKindConfig::Readout, vec![117.0, 50.0], "UDu");
    cfg.pulse.duration_us = 0.0;
    let report = run_single(&cfg, &out(dir.path(), "z.csv")).unwrap();
    let (header, rows) = read_csv(&report.csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(header.len(), 1 + 4 + 3);
    assert_eq!(column(&header, &rows, "P_UD"), [1.0]);
}

#[test]
fn reruns_are_byte_identical_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = sweep(base(PulseKindConfig::Readout, vec![67.0, 50.0], "~UDu"), SweepAxis::StarkShift, 10.0, 40.0, 4);
    cfg.oracle = Some(OracleConfig { num_trajectories: 2000, seed: 11 });
    let run = |threads: usize, name: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let r = pool.install(|| run_sweep(&cfg, &out(dir.path(), name))).unwrap();
        (std::fs::read(&r.csv).unwrap(), std::fs::read(&r.meta).unwrap())
    };
    let (a, ma) = run(1, "a.csv");
    let (b, mb) = run(4, "b.csv");
    let (c, mc) = run(4, "c.csv");
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_eq!(ma, mb);
    let (header, rows) = read_csv(&dir.path().join("a.csv"));
    assert_eq!(rows.len(), 4);
    assert!(header.iter().any(|h| h == "flipflop_12_mc_se"));
    let budget = column(&header, &rows, "budget_boundary_mhz");
    assert!(budget.iter().all(|b| (b - 35.05).abs() < 0.05));
}

#[test]
fn seed_override_changes_oracle_columns_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep(base(PulseKindConfig::Resonant, vec![117.0], "~Uu"), SweepAxis::HyperfineA1, 100.0, 200.0, 2);
    let opts = |seed, name: &str| RunOptions { out: Some(dir.path().join(name)), oracle: true, seed: Some(seed) };
    let (ha, a) = read_csv(&run_sweep(&cfg, &opts(1, "a.csv")).unwrap().csv);
    let (_, b) = read_csv(&run_sweep(&cfg, &opts(2, "b.csv")).unwrap().csv);
    let k = ha.iter().position(|h| h == "flip_1_mc").unwrap();
    assert_eq!(column(&ha, &a, "flip_1"), column(&ha, &b, "flip_1"));
    assert_ne!(a.iter().map(|r| r[k]).collect::<Vec<_>>(), b.iter().map(|r| r[k]).collect::<Vec<_>>());
}

#[test]
fn field_sweep_analytic_slope_is_minus_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep(base(PulseKindConfig::Readout, vec![117.0], "~Uu"), SweepAxis::BField, 1.0, 5.0, 5);
    let (header, rows) = read_csv(&run_sweep(&cfg, &out(dir.path(), "b.csv")).unwrap().csv);
    let b = column(&header, &rows, "b_field_t");
    assert!((loglog_slope(&b, &column(&header, &rows, "flip_1_analytic")) + 2.0).abs() < 0.01);
    assert!((loglog_slope(&b, &column(&header, &rows, "flip_1")) + 2.0).abs() < 0.05);
    let rate = column(&header, &rows, "flip_1_rate_hz");
    for (r, p) in rate.iter().zip(column(&header, &rows, "flip_1")) {
        assert!((r - p / 1e-3).abs() <= 1e-9 * r);
    }
}

#[test]
fn stark_sweep_trends() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep(base(PulseKindConfig::Readout, vec![67.0, 50.0], "~UDu"), SweepAxis::StarkShift, 5.0, 60.0, 5);
    let (header, rows) = read_csv(&run_sweep(&cfg, &out(dir.path(), "s.csv")).unwrap().csv);
    let decreasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] < w[0]);
    assert!(decreasing(column(&header, &rows, "flipflop_12")));
    assert!(decreasing(column(&header, &rows, "flipflop_12_approx")));
    assert!(decreasing(column(&header, &rows, "flip_2")));
    assert!(!decreasing(column(&header, &rows, "flip_1")));
}

#[test]
fn tunnel_sweep_keeps_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep(base(PulseKindConfig::Readout, vec![117.0], "~Uu"), SweepAxis::TunnelRate, 40.0, 1000.0, 4);
    let (header, rows) = read_csv(&run_sweep(&cfg, &out(dir.path(), "t.csv")).unwrap().csv);
    let tau = column(&header, &rows, "tau_total_us");
    assert_eq!(tau[0], 40.0);
    assert!(tau.windows(2).all(|w| w[1] > w[0]));
    let flips = column(&header, &rows, "flip_1");
    assert!(flips.windows(2).all(|w| w[1] < w[0]), "{flips:?}");
}

fn binary(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_backaction")).args(args).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8(o.stderr).unwrap())
}

#[test]
fn binary_reports_error_categories() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    let (code, err) = binary(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.starts_with("error[io]: "), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "initial_state = \"e4\"\nsurprise = 1\n").unwrap();
    let (code, err) = binary(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error[config]: "), "{err}");

    let good = dir.path().join("good.toml");
    std::fs::write(&good, base(PulseKindConfig::Readout, vec![117.0], "e4").to_toml()).unwrap();
    let csv = dir.path().join("out/g.csv");
    let (code, err) = binary(&["simulate", "--config", good.to_str().unwrap(), "--out", csv.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read_csv(&csv).1.len(), 1001);
    let (code, _) = binary(&["sweep", "--config", good.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code, 2);
}
