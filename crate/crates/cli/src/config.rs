//! TOML run description.
//!
//! A config names a spin system, a pulse, an initial state and optionally a
//! sweep axis, output paths and trajectory oracle settings. Unknown keys are
//! rejected. Frequencies are in MHz, fields in T, times in us.

use std::path::{Path, PathBuf};

use donor_backaction::pulse::DEFAULT_SAMPLE_POINTS;
use donor_backaction::{PulseSchedule, SpinSystemSpec, StateLabel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Eigenstate (`e4`), product (`UUu`) or nearest-eigenstate (`~UUu`) label.
    pub initial_state: String,
    pub system: SystemConfig,
    pub pulse: PulseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// One contact hyperfine constant per donor.
    pub hyperfine_mhz: Vec<f64>,
    pub b_field_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_e_mhz_per_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_n_mhz_per_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKindConfig {
    Readout,
    Resonant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub kind: PulseKindConfig,
    pub tau_up_out_us: f64,
    pub tau_in_us: f64,
    /// Required for `resonant`, rejected for `readout`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_down_out_us: Option<f64>,
    pub duration_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Hyperfine constant of donor 1.
    HyperfineA1,
    BField,
    /// A1 - A2 at fixed A1 + A2 taken from the system section.
    StarkShift,
    /// tau_up_out + tau_in; every tunneling time is scaled by the same factor.
    TunnelRate,
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::HyperfineA1 => "a1_mhz",
            SweepAxis::BField => "b_field_t",
            SweepAxis::StarkShift => "stark_shift_mhz",
            SweepAxis::TunnelRate => "tau_total_us",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepAxis::HyperfineA1 | SweepAxis::StarkShift => "MHz",
            SweepAxis::BField => "T",
            SweepAxis::TunnelRate => "us",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub num_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// CSV path; relative paths resolve against the config file.
    pub csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub num_trajectories: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { num_trajectories: 100_000, seed: 0 }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(out) = cfg.output.as_mut() {
            if out.csv.is_relative() {
                if let Some(dir) = path.parent() {
                    out.csv = dir.join(&out.csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.label()?;
        self.spec()?;
        self.schedule()?;
        if let Some(o) = &self.oracle {
            if o.num_trajectories == 0 {
                return Err(invalid("oracle.num_trajectories", "must be at least 1"));
            }
        }
        if let Some(s) = &self.sweep {
            self.validate_sweep(s)?;
        }
        Ok(())
    }

    fn validate_sweep(&self, s: &SweepConfig) -> Result<(), CliError> {
        if !(s.start.is_finite() && s.stop.is_finite()) || s.start >= s.stop {
            return Err(invalid("sweep", format!("need finite start < stop, got {} and {}", s.start, s.stop)));
        }
        if s.num_points < 2 {
            return Err(invalid("sweep.num_points", "must be at least 2"));
        }
        if s.spacing == Spacing::Log && s.start <= 0.0 {
            return Err(invalid("sweep.start", "log spacing needs a positive start"));
        }
        if self.pulse.duration_us <= 0.0 {
            return Err(invalid("pulse.duration_us", "sweeps report rates and need a positive duration"));
        }
        let a = &self.system.hyperfine_mhz;
        match s.axis {
            SweepAxis::StarkShift => {
                if a.len() < 2 {
                    return Err(invalid("sweep.axis", "stark_shift needs at least two donors"));
                }
                let total = a[0] + a[1];
                if s.start < 0.0 || s.stop >= total {
                    return Err(invalid("sweep", format!("stark shift must lie in [0, {total}) MHz")));
                }
            }
            SweepAxis::HyperfineA1 | SweepAxis::BField => {
                if s.start < 0.0 {
                    return Err(invalid("sweep.start", "must be non-negative"));
                }
                if s.axis == SweepAxis::BField && s.start == 0.0 {
                    return Err(invalid("sweep.start", "field must be positive"));
                }
            }
            SweepAxis::TunnelRate => {
                let base = self.pulse.tau_up_out_us + self.pulse.tau_in_us;
                if !base.is_finite() {
                    return Err(invalid("sweep.axis", "tunnel_rate needs finite tau_up_out_us and tau_in_us"));
                }
                if s.start <= 0.0 {
                    return Err(invalid("sweep.start", "must be positive"));
                }
            }
        }
        for v in self.sweep_values() {
            self.point(v)?;
        }
        Ok(())
    }

    pub fn label(&self) -> Result<StateLabel, CliError> {
        let label: StateLabel = self.initial_state.parse().map_err(|e| invalid("initial_state", e))?;
        let m = self.system.hyperfine_mhz.len();
        let donors = match &label {
            StateLabel::Eigenstate(_) => None,
            StateLabel::Product { nuclear, .. } | StateLabel::NearestEigenstate { nuclear, .. } => {
                Some(nuclear.num_donors())
            }
        };
        match donors {
            Some(n) if n != m => Err(invalid("initial_state", format!("names {n} nuclei but the system has {m}"))),
            _ => Ok(label),
        }
    }

    pub fn spec(&self) -> Result<SpinSystemSpec, CliError> {
        let s = &self.system;
        let base = SpinSystemSpec::new(s.hyperfine_mhz.clone(), s.b_field_t).map_err(|e| invalid("system", e))?;
        let ge = s.gamma_e_mhz_per_t.unwrap_or(base.gamma_e());
        let gn = s.gamma_n_mhz_per_t.unwrap_or(base.gamma_n());
        SpinSystemSpec::with_gyromagnetic(s.hyperfine_mhz.clone(), s.b_field_t, ge, gn).map_err(|e| invalid("system", e))
    }

    pub fn schedule(&self) -> Result<PulseSchedule, CliError> {
        let p = &self.pulse;
        let sched = match (p.kind, p.tau_down_out_us) {
            (PulseKindConfig::Readout, None) => PulseSchedule::readout(p.tau_up_out_us, p.tau_in_us, p.duration_us),
            (PulseKindConfig::Resonant, Some(down)) => {
                PulseSchedule::resonant(p.tau_up_out_us, p.tau_in_us, down, p.duration_us)
            }
            (PulseKindConfig::Readout, Some(_)) => {
                return Err(invalid("pulse.tau_down_out_us", "only allowed for resonant pulses"))
            }
            (PulseKindConfig::Resonant, None) => return Err(invalid("pulse.tau_down_out_us", "required for resonant pulses")),
        }
        .map_err(|e| invalid("pulse", e))?;
        sched
            .with_sample_points(p.sample_points.unwrap_or(DEFAULT_SAMPLE_POINTS))
            .map_err(|e| invalid("pulse.sample_points", e))
    }

    /// Swept values in order, empty without a sweep section.
    pub fn sweep_values(&self) -> Vec<f64> {
        use donor_backaction::analytics::{linspace, logspace};
        match &self.sweep {
            None => Vec::new(),
            Some(s) => match s.spacing {
                Spacing::Linear => linspace(s.start, s.stop, s.num_points),
                Spacing::Log => logspace(s.start, s.stop, s.num_points),
            },
        }
    }

    /// System and pulse at one sweep value.
    pub fn point(&self, value: f64) -> Result<(SpinSystemSpec, PulseSchedule), CliError> {
        let (spec, sched) = (self.spec()?, self.schedule()?);
        let axis = match &self.sweep {
            Some(s) => s.axis,
            None => return Ok((spec, sched)),
        };
        let bad = |e| invalid("sweep", format!("at {} = {value}: {e}", axis.column()));
        Ok(match axis {
            SweepAxis::HyperfineA1 => {
                let mut a = spec.hyperfine().to_vec();
                a[0] = value;
                (spec.with_hyperfine(a).map_err(bad)?, sched)
            }
            SweepAxis::BField => (spec.with_b_field(value).map_err(bad)?, sched),
            SweepAxis::StarkShift => {
                let mut a = spec.hyperfine().to_vec();
                let total = a[0] + a[1];
                a[0] = 0.5 * (total + value);
                a[1] = 0.5 * (total - value);
                (spec.with_hyperfine(a).map_err(bad)?, sched)
            }
            SweepAxis::TunnelRate => {
                let factor = value / (sched.tau_up_out() + sched.tau_in());
                (spec, sched.with_scaled_times(factor).map_err(bad)?)
            }
        })
    }
}
