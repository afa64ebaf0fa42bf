//! Tunneling pulses expressed as Lindblad jump operators.
//!
//! Each donor eigenstate tunnels out to the reservoir with one overall rate,
//! split into one jump operator per nuclear configuration it overlaps. The
//! branch amplitude is the norm of the eigenstate's projection onto that
//! configuration, so tunneling leaves nuclear populations untouched. An
//! electron returning from the reservoir is always spin down.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::spin::{BasisLayout, ElectronLevel, ElectronSpace, NuclearConfig, OperatorMatrix};

/// Branches with a smaller amplitude than this are dropped.
pub const BRANCH_CUTOFF: f64 = 1e-12;

/// Electron-up populations within this distance of 1/2 are ambiguous.
const CLASSIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    /// Reservoir level between the spin levels: only up-like states empty.
    Readout,
    /// Reservoir level resonant with the spin-down levels: both manifolds
    /// tunnel out, at different rates.
    ResonantTunneling,
}

/// Tunneling times and sampling window of one pulse. All times in us.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    kind: PulseKind,
    tau_up_out: f64,
    tau_in: f64,
    tau_down_out: Option<f64>,
    duration: f64,
    sample_points: usize,
}

/// Default number of sampling intervals over a pulse.
pub const DEFAULT_SAMPLE_POINTS: usize = 1000;

impl PulseSchedule {
    pub fn readout(tau_up_out: f64, tau_in: f64, duration: f64) -> Result<Self> {
        let s = Self {
            kind: PulseKind::Readout,
            tau_up_out,
            tau_in,
            tau_down_out: None,
            duration,
            sample_points: DEFAULT_SAMPLE_POINTS,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn resonant(tau_up_out: f64, tau_in: f64, tau_down_out: f64, duration: f64) -> Result<Self> {
        let s = Self {
            kind: PulseKind::ResonantTunneling,
            tau_up_out,
            tau_in,
            tau_down_out: Some(tau_down_out),
            duration,
            sample_points: DEFAULT_SAMPLE_POINTS,
        };
        s.validate()?;
        Ok(s)
    }

    /// 80 us out, 120 us in, 1 ms window.
    pub fn standard_readout() -> Self {
        Self::readout(80.0, 120.0, 1000.0).expect("valid constants")
    }

    /// The standard readout plus an 80 us spin-down tunnel-out path.
    pub fn standard_resonant() -> Self {
        Self::resonant(80.0, 120.0, 80.0, 1000.0).expect("valid constants")
    }

    pub fn with_sample_points(mut self, n: usize) -> Result<Self> {
        self.sample_points = n;
        self.validate()?;
        Ok(self)
    }

    pub fn with_duration(mut self, duration: f64) -> Result<Self> {
        self.duration = duration;
        self.validate()?;
        Ok(self)
    }

    /// Multiplies every tunneling time by `factor`.
    pub fn with_scaled_times(mut self, factor: f64) -> Result<Self> {
        self.tau_up_out *= factor;
        self.tau_in *= factor;
        self.tau_down_out = self.tau_down_out.map(|t| t * factor);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 || v == f64::INFINITY {
                Ok(())
            } else {
                Err(Error::InvalidSchedule(format!("{name} = {v} must be positive")))
            }
        };
        positive("tau_up_out", self.tau_up_out)?;
        positive("tau_in", self.tau_in)?;
        match (self.kind, self.tau_down_out) {
            (PulseKind::ResonantTunneling, Some(t)) => positive("tau_down_out", t)?,
            (PulseKind::ResonantTunneling, None) => {
                return Err(Error::InvalidSchedule(
                    "resonant tunneling needs tau_down_out".into(),
                ))
            }
            (PulseKind::Readout, _) => {}
        }
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "duration = {} must be non-negative",
                self.duration
            )));
        }
        if self.sample_points < 2 {
            return Err(Error::InvalidSchedule("sample_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> PulseKind {
        self.kind
    }

    pub fn tau_up_out(&self) -> f64 {
        self.tau_up_out
    }

    pub fn tau_in(&self) -> f64 {
        self.tau_in
    }

    /// Spin-down tunnel-out time; `None` for readout pulses.
    pub fn tau_down_out(&self) -> Option<f64> {
        match self.kind {
            PulseKind::Readout => None,
            PulseKind::ResonantTunneling => self.tau_down_out,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Number of sampling intervals; a run reports `sample_points + 1` rows.
    pub fn sample_points(&self) -> usize {
        self.sample_points
    }

    /// Sample times from 0 to `duration`, or just `[0]` for a zero window.
    pub fn sample_times(&self) -> Vec<f64> {
        if self.duration == 0.0 {
            return vec![0.0];
        }
        let n = self.sample_points;
        (0..=n).map(|k| self.duration * k as f64 / n as f64).collect()
    }
}

/// Majority electron-spin character of a donor eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinCharacter {
    UpLike,
    DownLike,
}

/// Partition of donor eigenstates into electron-up-like and -down-like sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub up_like: Vec<usize>,
    pub down_like: Vec<usize>,
    /// Electron-up population of every eigenstate, in eigen order.
    pub up_population: Vec<f64>,
}

impl Classification {
    pub fn character(&self, k: usize) -> SpinCharacter {
        if self.up_population[k] > 0.5 {
            SpinCharacter::UpLike
        } else {
            SpinCharacter::DownLike
        }
    }
}

fn require_bound(eig: &EigenSystem) -> Result<BasisLayout> {
    let layout = eig.layout();
    if layout.electron() != ElectronSpace::Bound {
        return Err(Error::WrongLayout(
            "expected an eigensystem of the donor-bound Hamiltonian".into(),
        ));
    }
    Ok(layout)
}

/// Splits donor eigenstates by their total electron-up population.
pub fn classify_eigenstates(eig: &EigenSystem) -> Result<Classification> {
    let layout = require_bound(eig)?;
    let mut out = Classification {
        up_like: Vec::new(),
        down_like: Vec::new(),
        up_population: Vec::with_capacity(eig.len()),
    };
    for k in 0..eig.len() {
        let v = eig.vector(k);
        let up: f64 = NuclearConfig::all(layout.num_donors())
            .map(|n| v[layout.index(n, ElectronLevel::Up.index())].norm_sqr())
            .sum();
        if (up - 0.5).abs() < CLASSIFY_TOL {
            return Err(Error::AmbiguousClassification {
                index: k,
                population: up,
            });
        }
        out.up_population.push(up);
        if up > 0.5 {
            out.up_like.push(k);
        } else {
            out.down_like.push(k);
        }
    }
    Ok(out)
}

/// Which tunneling process a jump operator describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Donor eigenstate `source` empties into the reservoir leaving nuclear
    /// configuration `target`.
    TunnelOut {
        source: usize,
        character: SpinCharacter,
        target: NuclearConfig,
    },
    /// A spin-down electron returns from the reservoir.
    TunnelIn,
}

/// One jump operator with its rate prefactor already applied.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub channel: Channel,
    /// Prefactor `branch amplitude / sqrt(tau)`.
    pub amplitude: f64,
    pub operator: OperatorMatrix,
}

/// Jump operators of one pulse over the three-level-electron space.
#[derive(Debug, Clone)]
pub struct LindbladSet {
    operators: Vec<JumpOperator>,
    layout: BasisLayout,
}

impl LindbladSet {
    /// A set with no jumps, for closed-system runs.
    pub fn empty(layout: BasisLayout) -> Self {
        Self {
            operators: Vec::new(),
            layout,
        }
    }

    pub fn operators(&self) -> &[JumpOperator] {
        &self.operators
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &JumpOperator> {
        self.operators.iter()
    }
}

fn combined_layout(m: usize) -> BasisLayout {
    BasisLayout::new(m, ElectronSpace::WithReservoir)
}

/// Donor eigenvector `k` embedded in the three-level space.
pub fn embed_eigenvector(eig: &EigenSystem, k: usize) -> ndarray::Array1<C64> {
    let bound = eig.layout();
    let combined = combined_layout(bound.num_donors());
    let v = eig.vector(k);
    let mut out = ndarray::Array1::zeros(combined.dim());
    for i in 0..bound.dim() {
        let (n, slot) = bound.split(i);
        out[combined.index(n, slot)] = v[i];
    }
    out
}

/// Norm of the projection of donor eigenvector `k` onto nuclear config `n`.
fn branch_norm(eig: &EigenSystem, k: usize, n: NuclearConfig) -> f64 {
    let layout = eig.layout();
    let v = eig.vector(k);
    (0..layout.electron_dim())
        .map(|s| v[layout.index(n, s)].norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn check_tau(name: &str, tau: f64) -> Result<()> {
    if tau > 0.0 && !tau.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!("{name} = {tau} must be positive")))
    }
}

fn tunnel_out_operators(
    eig: &EigenSystem,
    sources: &[usize],
    character: SpinCharacter,
    tau: f64,
) -> Vec<JumpOperator> {
    let m = eig.layout().num_donors();
    let layout = combined_layout(m);
    let mut out = Vec::new();
    if tau.is_infinite() {
        return out;
    }
    for &k in sources {
        let bra = embed_eigenvector(eig, k).mapv(|z| z.conj());
        for n in NuclearConfig::all(m) {
            let branch = branch_norm(eig, k, n);
            if branch < BRANCH_CUTOFF {
                continue;
            }
            let amplitude = branch / tau.sqrt();
            let row = layout.index(n, ElectronLevel::Reservoir.index());
            let mut op = Array2::zeros((layout.dim(), layout.dim()));
            op.row_mut(row).assign(&bra.mapv(|z| z * amplitude));
            out.push(JumpOperator {
                channel: Channel::TunnelOut {
                    source: k,
                    character,
                    target: n,
                },
                amplitude,
                operator: OperatorMatrix::new(op, layout).expect("square by construction"),
            });
        }
    }
    out
}

fn tunnel_in_operator(m: usize, tau_in: f64) -> JumpOperator {
    let layout = combined_layout(m);
    let amplitude = 1.0 / tau_in.sqrt();
    let mut op = Array2::zeros((layout.dim(), layout.dim()));
    for n in NuclearConfig::all(m) {
        op[[
            layout.index(n, ElectronLevel::Down.index()),
            layout.index(n, ElectronLevel::Reservoir.index()),
        ]] = C64::new(amplitude, 0.0);
    }
    JumpOperator {
        channel: Channel::TunnelIn,
        amplitude,
        operator: OperatorMatrix::new(op, layout).expect("square by construction"),
    }
}

/// Jump operators of a readout pulse: up-like eigenstates tunnel out, a
/// spin-down electron tunnels back in.
pub fn build_readout_lindblads(eig: &EigenSystem, sched: &PulseSchedule) -> Result<LindbladSet> {
    require_bound(eig)?;
    check_tau("tau_up_out", sched.tau_up_out())?;
    check_tau("tau_in", sched.tau_in())?;
    let class = classify_eigenstates(eig)?;
    let m = eig.layout().num_donors();
    let mut operators =
        tunnel_out_operators(eig, &class.up_like, SpinCharacter::UpLike, sched.tau_up_out());
    if sched.tau_in().is_finite() {
        operators.push(tunnel_in_operator(m, sched.tau_in()));
    }
    Ok(LindbladSet {
        operators,
        layout: combined_layout(m),
    })
}

/// Readout operators plus tunnel-out from the down-like manifold.
pub fn build_resonant_lindblads(eig: &EigenSystem, sched: &PulseSchedule) -> Result<LindbladSet> {
    let tau_down = sched.tau_down_out().ok_or_else(|| {
        Error::InvalidSchedule("resonant tunneling needs tau_down_out".into())
    })?;
    check_tau("tau_down_out", tau_down)?;
    let mut set = build_readout_lindblads(eig, sched)?;
    let class = classify_eigenstates(eig)?;
    let extra = tunnel_out_operators(eig, &class.down_like, SpinCharacter::DownLike, tau_down);
    // Keep the tunnel-in operator last.
    let tunnel_in = match set.operators.last() {
        Some(op) if op.channel == Channel::TunnelIn => set.operators.pop(),
        _ => None,
    };
    set.operators.extend(extra);
    set.operators.extend(tunnel_in);
    Ok(set)
}

/// Dispatches on the pulse kind.
pub fn build_lindblads(eig: &EigenSystem, sched: &PulseSchedule) -> Result<LindbladSet> {
    match sched.kind() {
        PulseKind::Readout => build_readout_lindblads(eig, sched),
        PulseKind::ResonantTunneling => build_resonant_lindblads(eig, sched),
    }
}
