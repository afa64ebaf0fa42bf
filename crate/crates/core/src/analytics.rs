//! Closed-form backaction estimates.
//!
//! Frequencies taken or returned in MHz unless a name says otherwise. Only the
//! field and gyromagnetic ratios of the [`SpinSystemSpec`] argument are used;
//! hyperfine constants are passed explicitly.

use crate::error::{Error, Result};
use crate::spin::{mhz_to_angular, SpinSystemSpec};

/// Mixing of the `⇑↓`/`⇓↑` pair of a single donor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingParameters {
    /// `atan(A / (omega_n - omega_e))`, negative for positive `A`.
    pub theta: f64,
    /// Upper eigenfrequency of the mixed pair, rad/us.
    pub omega_1: f64,
    /// Lower eigenfrequency of the mixed pair, rad/us.
    pub omega_3: f64,
}

pub fn mixing_parameters(a: f64, spec: &SpinSystemSpec) -> MixingParameters {
    let (we, wn, a) = (spec.omega_e(), spec.omega_n(), mhz_to_angular(a));
    let root = ((wn - we).powi(2) + a * a).sqrt();
    MixingParameters {
        theta: (a / (wn - we)).atan(),
        omega_1: -a / 4.0 + root / 2.0,
        omega_3: -a / 4.0 - root / 2.0,
    }
}

/// Time-averaged probability that one tunnel-in event flips the nucleus,
/// `A^2 / (2 (A^2 + (omega_n - omega_e)^2))`.
pub fn flip_probability(a: f64, spec: &SpinSystemSpec) -> f64 {
    let det = spec.omega_n_mhz() - spec.omega_e_mhz();
    0.5 * a * a / (a * a + det * det)
}

/// Second-order effective Hamiltonian of the `{⇑⇓↓, ⇓⇑↓}` pair, MHz, with the
/// electron-down Zeeman energy as origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTwoLevel {
    /// `h22 - h11`.
    pub delta: f64,
    /// `2 h12`.
    pub tau_c: f64,
    /// `[[h11, h12], [h12, h22]]`.
    pub block: [[f64; 2]; 2],
}

impl EffectiveTwoLevel {
    /// Block eigenvalues, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[h11, h12], [_, h22]] = self.block;
        let mean = 0.5 * (h11 + h22);
        let half = (0.25 * (h22 - h11).powi(2) + h12 * h12).sqrt();
        [mean - half, mean + half]
    }
}

pub fn schrieffer_wolff_2p(a1: f64, a2: f64, spec: &SpinSystemSpec) -> Result<EffectiveTwoLevel> {
    if !(a1 >= 0.0 && a2 >= 0.0 && a1.is_finite() && a2.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "hyperfine constants must be finite and non-negative, got {a1}, {a2}"
        )));
    }
    let gap = spec.omega_e_mhz() - spec.omega_n_mhz();
    if gap == 0.0 {
        return Err(Error::InvalidSpec(
            "electron and nuclear Zeeman frequencies coincide".into(),
        ));
    }
    let h11 = -a1 * a1 / (4.0 * gap) - a1 / 4.0 + a2 / 4.0;
    let h22 = -a2 * a2 / (4.0 * gap) - a2 / 4.0 + a1 / 4.0;
    let h12 = -a1 * a2 / (4.0 * gap);
    Ok(EffectiveTwoLevel {
        delta: h22 - h11,
        tau_c: 2.0 * h12,
        block: [[h11, h12], [h12, h22]],
    })
}

/// Flip-flop probability in both forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipFlop {
    /// `tau^2 / (2 (tau^2 + Delta^2))` from the effective block.
    pub exact: f64,
    /// Large-detuning form `(A1 A2 / 2 omega_e)^2 / (2 ((A1 - A2) / 2)^2)`;
    /// infinite for equal non-zero constants.
    pub approximate: f64,
}

pub fn flipflop_probability(a1: f64, a2: f64, spec: &SpinSystemSpec) -> Result<FlipFlop> {
    let eff = schrieffer_wolff_2p(a1, a2, spec)?;
    let (t2, d2) = (eff.tau_c * eff.tau_c, eff.delta * eff.delta);
    let exact = if t2 == 0.0 { 0.0 } else { 0.5 * t2 / (t2 + d2) };

    let coupling = a1 * a2 / (2.0 * spec.omega_e_mhz());
    let detuning = 0.5 * (a1 - a2);
    let approximate = if coupling == 0.0 {
        0.0
    } else if detuning == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (coupling / detuning).powi(2)
    };
    Ok(FlipFlop { exact, approximate })
}

/// Stark-shift resolution of the budget search, MHz.
pub const BUDGET_TOLERANCE: f64 = 0.01;
const BUDGET_MARGIN: f64 = 0.1;

/// `flip(A1) + flipflop(A1, A2) - flip(a_total)` with
/// `A1,2 = (a_total +- stark) / 2`, approximate flip-flop form.
pub fn budget_excess(stark: f64, a_total: f64, spec: &SpinSystemSpec) -> Result<f64> {
    let a1 = 0.5 * (a_total + stark);
    let a2 = 0.5 * (a_total - stark);
    let ff = flipflop_probability(a1, a2, spec)?.approximate;
    Ok(flip_probability(a1, spec) + ff - flip_probability(a_total, spec))
}

/// Stark shift `A1 - A2` above which two coupled donors disturb nucleus 1 less
/// than a lone donor with the same total hyperfine.
///
/// Bisects on `[0.1, a_total - 0.1]` MHz to [`BUDGET_TOLERANCE`]. `None` when
/// the excess does not change sign on that bracket.
pub fn backaction_budget_2p(a_total: f64, spec: &SpinSystemSpec) -> Result<Option<f64>> {
    if !(a_total > 0.0 && a_total.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "total hyperfine must be positive, got {a_total}"
        )));
    }
    let (mut lo, mut hi) = (BUDGET_MARGIN, a_total - BUDGET_MARGIN);
    if lo >= hi {
        return Ok(None);
    }
    let f_lo = budget_excess(lo, a_total, spec)?;
    let f_hi = budget_excess(hi, a_total, spec)?;
    if f_lo.signum() == f_hi.signum() {
        return Ok(None);
    }
    while hi - lo > BUDGET_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if budget_excess(mid, a_total, spec)?.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` points from `start` to `stop` inclusive, evenly spaced in log.
pub fn logspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let (a, b) = (start.ln(), stop.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                stop
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` points from `start` to `stop` inclusive, evenly spaced.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                stop
            } else {
                start + (stop - start) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
