use std::path::{Path, PathBuf};

use donor_backaction::spin::NuclearConfig;
use donor_backaction::{
    backaction_budget_2p, flip_probability, flipflop_probability, run_trajectories, PreparedSystem, PulseSchedule,
    Simulation, SpinSystemSpec, StateLabel, TrajectoryConfig, TrajectoryEstimate,
};
use rayon::prelude::*;

use crate::config::{Config, OracleConfig, SweepAxis};
use crate::error::CliError;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Run the trajectory oracle even without an `[oracle]` section.
    pub oracle: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub rows: usize,
}

/// Formats a CSV cell: 12 significant digits, scientific below 1e-3 in
/// magnitude, never locale dependent.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs();
    if !(1e-3..1e12).contains(&mag) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - mag.log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn csv_line(cells: &[f64]) -> String {
    let mut line = cells.iter().map(|&x| format_number(x)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

fn output_path(cfg: &Config, opts: &RunOptions) -> Result<PathBuf, CliError> {
    opts.out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.csv.clone()))
        .ok_or_else(|| CliError::Config("output.csv: no output path in the config and no --out given".into()))
}

fn oracle_settings(cfg: &Config, opts: &RunOptions) -> Option<OracleConfig> {
    if !opts.oracle && cfg.oracle.is_none() {
        return None;
    }
    let mut o = cfg.oracle.clone().unwrap_or_default();
    if let Some(seed) = opts.seed {
        o.seed = seed;
    }
    Some(o)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn run_oracle(
    spec: &SpinSystemSpec,
    sched: &PulseSchedule,
    label: &StateLabel,
    o: &OracleConfig,
) -> Result<TrajectoryEstimate, CliError> {
    let tc = TrajectoryConfig::new(spec.clone(), sched.clone(), *label, o.num_trajectories, o.seed)?;
    Ok(run_trajectories(&tc)?)
}

struct Meta {
    command: &'static str,
    columns: Vec<String>,
    oracle: Option<OracleConfig>,
    extra: toml::Table,
}

fn render_meta(cfg: &Config, meta: Meta) -> String {
    use toml::{Table, Value};
    let s = |v: &str| Value::String(v.into());
    let mut run = Table::new();
    run.insert("command".into(), s(meta.command));
    run.insert("version".into(), s(env!("CARGO_PKG_VERSION")));
    run.insert("columns".into(), Value::Array(meta.columns.iter().map(|c| s(c)).collect()));

    let mut units = Table::new();
    for (k, v) in [
        ("time", "us"),
        ("frequency", "MHz"),
        ("field", "T"),
        ("rate", "Hz"),
        ("probability", "1"),
    ] {
        units.insert(k.into(), s(v));
    }

    let mut conv = Table::new();
    conv.insert("rate".into(), s("final probability divided by the pulse duration"));
    conv.insert(
        "flip".into(),
        s("probability at the end of the pulse of the nuclear configuration that differs from the dominant initial one in exactly the named nuclei"),
    );
    conv.insert("nuclear_labels".into(), s("U = nuclear up, D = nuclear down, donor 1 first"));
    if let Some(o) = &meta.oracle {
        conv.insert("oracle_method".into(), s("Monte Carlo wave function quantum jumps"));
        conv.insert("oracle_standard_error".into(), s("sqrt(p (1 - p) / N) at the estimated p"));
        conv.insert("oracle_trajectories".into(), Value::Integer(o.num_trajectories as i64));
        conv.insert("oracle_seed".into(), Value::Integer(o.seed as i64));
    }

    let mut root = Table::new();
    root.insert("run".into(), Value::Table(run));
    root.insert("units".into(), Value::Table(units));
    root.insert("conventions".into(), Value::Table(conv));
    if !meta.extra.is_empty() {
        root.insert("results".into(), Value::Table(meta.extra));
    }
    let mut params = cfg.clone();
    params.output = None;
    params.oracle = meta.oracle;
    root.insert("parameters".into(), Value::try_from(&params).expect("config serializes"));
    toml::to_string(&root).expect("meta serializes")
}

/// Writes the population time series of one pulse.
pub fn run_single(cfg: &Config, opts: &RunOptions) -> Result<RunReport, CliError> {
    let path = output_path(cfg, opts)?;
    let (spec, sched, label) = (cfg.spec()?, cfg.schedule()?, cfg.label()?);
    let m = spec.num_donors();
    log::info!("simulating {} donor(s), {:?} pulse, {} us", m, sched.kind(), sched.duration());
    let sim = PreparedSystem::new(&spec, &sched)?.simulate(&label)?;

    let mut columns = vec!["time_us".to_string()];
    columns.extend(NuclearConfig::all(m).map(|c| format!("P_{c}")));
    columns.extend(["P_e_up", "P_e_down", "P_e_set"].map(String::from));
    let mut csv = columns.join(",") + "\n";
    for s in &sim.series.samples {
        let mut row = vec![s.time];
        row.extend(&s.nuclear);
        row.extend(s.electron);
        csv.push_str(&csv_line(&row));
    }

    let oracle = oracle_settings(cfg, opts);
    let mut extra = toml::Table::new();
    let phys = &sim.series.physicality;
    extra.insert("max_trace_drift".into(), phys.max_trace_drift.into());
    extra.insert("min_eigenvalue".into(), phys.min_eigenvalue.into());
    for j in 0..m {
        extra.insert(format!("flip_{}", j + 1), sim.flip(j).into());
    }
    if let Some(o) = &oracle {
        let est = run_oracle(&spec, &sched, &label, o)?;
        for j in 0..m {
            let k = sim.initial_config.flipped(j).index();
            extra.insert(format!("flip_{}_mc", j + 1), est.probabilities[k].into());
            extra.insert(format!("flip_{}_mc_se", j + 1), est.standard_errors[k].into());
        }
    }

    let rows = sim.series.len();
    let meta = render_meta(cfg, Meta { command: "simulate", columns, oracle, extra });
    write_file(&path, &csv)?;
    let mpath = meta_path(&path);
    write_file(&mpath, &meta)?;
    Ok(RunReport { csv: path, meta: mpath, rows })
}

fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect()
}

fn sweep_columns(axis: SweepAxis, m: usize, oracle: bool, budget: bool) -> Vec<String> {
    let mut c = vec![axis.column().to_string()];
    for j in 1..=m {
        c.extend([format!("flip_{j}"), format!("flip_{j}_analytic"), format!("flip_{j}_rate_hz")]);
        if oracle {
            c.extend([format!("flip_{j}_mc"), format!("flip_{j}_mc_se")]);
        }
    }
    for (i, j) in pairs(m) {
        let n = format!("flipflop_{}{}", i + 1, j + 1);
        c.extend([n.clone(), format!("{n}_exact"), format!("{n}_approx"), format!("{n}_rate_hz")]);
        if oracle {
            c.extend([format!("{n}_mc"), format!("{n}_mc_se")]);
        }
    }
    if budget {
        c.push("budget_boundary_mhz".into());
    }
    c
}

fn sweep_row(
    cfg: &Config,
    value: f64,
    label: &StateLabel,
    oracle: Option<&OracleConfig>,
    budget: Option<f64>,
) -> Result<Vec<f64>, CliError> {
    let (spec, sched) = cfg.point(value)?;
    let sim: Simulation = PreparedSystem::new(&spec, &sched)?.simulate(label)?;
    let est = oracle.map(|o| run_oracle(&spec, &sched, label, o)).transpose()?;
    let seconds = sched.duration() * 1e-6;
    let a = spec.hyperfine();
    let mut row = vec![value];
    for j in 0..a.len() {
        let p = sim.flip(j);
        row.extend([p, flip_probability(a[j], &spec), p / seconds]);
        if let Some(e) = &est {
            let k = sim.initial_config.flipped(j).index();
            row.extend([e.probabilities[k], e.standard_errors[k]]);
        }
    }
    for (i, j) in pairs(a.len()) {
        let p = sim.flipflop(i, j).expect("distinct nuclei");
        let ff = flipflop_probability(a[i], a[j], &spec)?;
        row.extend([p, ff.exact, ff.approximate, p / seconds]);
        if let Some(e) = &est {
            let k = sim.initial_config.flipped(i).flipped(j).index();
            row.extend([e.probabilities[k], e.standard_errors[k]]);
        }
    }
    row.extend(budget);
    Ok(row)
}

/// Runs every sweep point and writes one CSV row per point, in sweep order
/// regardless of how many threads ran them.
pub fn run_sweep(cfg: &Config, opts: &RunOptions) -> Result<RunReport, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: section missing".into()))?;
    let path = output_path(cfg, opts)?;
    let label = cfg.label()?;
    let m = cfg.system.hyperfine_mhz.len();
    let oracle = oracle_settings(cfg, opts);
    let budget = if sweep.axis == SweepAxis::StarkShift {
        let a = &cfg.system.hyperfine_mhz;
        backaction_budget_2p(a[0] + a[1], &cfg.spec()?)?
    } else {
        None
    };
    let columns = sweep_columns(sweep.axis, m, oracle.is_some(), budget.is_some());
    let values = cfg.sweep_values();
    log::info!("sweeping {} over {} points", sweep.axis.column(), values.len());

    let rows = values
        .par_iter()
        .map(|&v| {
            log::debug!("{} = {v}", sweep.axis.column());
            sweep_row(cfg, v, &label, oracle.as_ref(), budget)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = columns.join(",") + "\n";
    for r in &rows {
        csv.push_str(&csv_line(r));
    }
    let mut extra = toml::Table::new();
    extra.insert("sweep_unit".into(), toml::Value::String(sweep.axis.unit().into()));
    if let Some(b) = budget {
        extra.insert("budget_boundary_mhz".into(), b.into());
    }
    let meta = render_meta(cfg, Meta { command: "sweep", columns, oracle, extra });
    write_file(&path, &csv)?;
    let mpath = meta_path(&path);
    write_file(&mpath, &meta)?;
    Ok(RunReport { csv: path, meta: mpath, rows: rows.len() })
}
