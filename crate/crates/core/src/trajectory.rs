//! Quantum-jump (Monte Carlo wave function) unraveling of the pulse dynamics.
//!
//! Each trajectory carries an unnormalized pure state under the effective
//! Hamiltonian `H - i/2 sum L^dag L` and jumps when its squared norm falls
//! below a uniform draw. Averaged over trajectories this reproduces the master
//! equation, so it serves as an independent check on `lindblad`.
//!
//! Trajectory `i` draws from ChaCha8 stream `i` of the configured seed, and
//! per-configuration results are merged as integer counts, so estimates do not
//! depend on thread count or scheduling.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eigen::eigendecompose;
use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::lindblad::clean;
use crate::pulse::{Channel, PulseSchedule};
use crate::scenario::PreparedSystem;
use crate::spin::{adjoint, BasisLayout, NuclearConfig, SpinSystemSpec};
use crate::state::{initial_vector, StateLabel};

/// Off-diagonal decay entries below this fraction of the largest count as
/// zero when deciding whether the drift is diagonal.
const DIAGONAL_TOL: f64 = 1e-14;
/// Jump times are resolved to this fraction of the drift step.
const JUMP_TIME_RESOLUTION: f64 = 1e-3;
const NORM_FLOOR: f64 = 1e-300;
const CHUNK: usize = 4096;

/// Monte Carlo run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub num_trajectories: u64,
    pub seed: u64,
    pub system: SpinSystemSpec,
    pub pulse: PulseSchedule,
    pub initial: StateLabel,
}

impl TrajectoryConfig {
    pub fn new(
        system: SpinSystemSpec,
        pulse: PulseSchedule,
        initial: StateLabel,
        num_trajectories: u64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            num_trajectories,
            seed,
            system,
            pulse,
            initial,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trajectories == 0 {
            return Err(Error::InvalidSpec("at least one trajectory is required".into()));
        }
        self.system.validate()?;
        self.pulse.validate()
    }
}

/// Empirical end-of-pulse nuclear distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    /// Trajectories ending in each nuclear configuration, in basis order.
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    /// Binomial `sqrt(p (1 - p) / N)` at the empirical frequency.
    pub standard_errors: Vec<f64>,
    pub num_trajectories: u64,
    pub seed: u64,
    pub total_tunnel_in: u64,
    pub total_tunnel_out: u64,
}

impl TrajectoryEstimate {
    fn from_counts(counts: Vec<u64>, tunnel_in: u64, tunnel_out: u64, n: u64, seed: u64) -> Self {
        let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let standard_errors = probabilities.iter().map(|&p| binomial_standard_error(p, n)).collect();
        Self {
            counts,
            probabilities,
            standard_errors,
            num_trajectories: n,
            seed,
            total_tunnel_in: tunnel_in,
            total_tunnel_out: tunnel_out,
        }
    }

    pub fn mean_tunnel_in(&self) -> f64 {
        self.total_tunnel_in as f64 / self.num_trajectories as f64
    }

    pub fn mean_tunnel_out(&self) -> f64 {
        self.total_tunnel_out as f64 / self.num_trajectories as f64
    }
}

pub fn binomial_standard_error(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// One quantum jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Microseconds from the pulse start.
    pub time: f64,
    pub channel: Channel,
}

/// Outcome of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub jumps: Vec<JumpEvent>,
    pub final_config: NuclearConfig,
}

#[derive(Debug, Clone)]
enum Drift {
    /// `exp(g t)` elementwise.
    Diagonal(Vec<C64>),
    /// Generator and its precomputed one-step exponential.
    Dense { generator: Array2<C64>, step: Array2<C64> },
}

/// Jump-unraveling engine for one system and pulse.
///
/// Works in the eigenbasis of the Hamiltonian, where the effective drift is
/// usually diagonal and can be evaluated exactly at any time.
#[derive(Debug, Clone)]
pub struct TrajectorySimulator {
    layout: BasisLayout,
    basis: Array2<C64>,
    jumps: Vec<Array2<C64>>,
    channels: Vec<Channel>,
    drift: Drift,
    dt: f64,
    duration: f64,
    initial: Array1<C64>,
}

impl TrajectorySimulator {
    pub fn new(system: &PreparedSystem, initial: &StateLabel) -> Result<Self> {
        let h = system.hamiltonian();
        let layout = h.layout();
        let eig = eigendecompose(h)?;
        let basis = eig.eigenvectors().clone();
        let basis_dag = adjoint(&basis);
        let d = layout.dim();

        let jumps: Vec<Array2<C64>> = system
            .jumps()
            .iter()
            .map(|j| clean(basis_dag.dot(j.operator.matrix()).dot(&basis)))
            .collect();
        let channels = system.jumps().iter().map(|j| j.channel).collect();
        let mut decay = Array2::<C64>::zeros((d, d));
        for l in &jumps {
            decay = decay + adjoint(l).dot(l);
        }
        let mut generator = Array2::<C64>::zeros((d, d));
        for (k, lam) in eig.eigenvalues().iter().enumerate() {
            generator[[k, k]] = C64::new(0.0, -lam);
        }
        generator = generator - decay.mapv(|z| z * 0.5);

        let sched = system.schedule();
        let taus = [Some(sched.tau_up_out()), Some(sched.tau_in()), sched.tau_down_out()];
        let tau_min = taus.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let mut dt = (tau_min / 50.0).min(sched.duration() / 1000.0);
        if !(dt > 0.0 && dt.is_finite()) {
            dt = if sched.duration() > 0.0 { sched.duration() } else { 1.0 };
        }

        let max_decay = decay.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let off_diagonal = decay
            .indexed_iter()
            .filter(|((i, j), _)| i != j)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        let drift = if off_diagonal <= DIAGONAL_TOL * max_decay.max(f64::MIN_POSITIVE) {
            Drift::Diagonal(generator.diag().to_vec())
        } else {
            let step = matrix_exponential(&generator.mapv(|z| z * dt))?;
            Drift::Dense { generator, step }
        };

        let psi = initial_vector(initial, system.donor_eigen())?;
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let initial = basis_dag.dot(&psi).mapv(|z| z / norm);

        Ok(Self {
            layout,
            basis,
            jumps,
            channels,
            drift,
            dt,
            duration: sched.duration(),
            initial,
        })
    }

    /// Drift step used between jump checks, microseconds.
    pub fn step(&self) -> f64 {
        self.dt
    }

    /// Whether the no-jump evolution is diagonal in the energy eigenbasis.
    pub fn is_diagonal(&self) -> bool {
        matches!(self.drift, Drift::Diagonal(_))
    }

    fn evolve(&self, psi: &Array1<C64>, t: f64) -> Result<Array1<C64>> {
        match &self.drift {
            Drift::Diagonal(g) => Ok(Array1::from_iter(
                psi.iter().zip(g).map(|(c, g)| c * (g * t).exp()),
            )),
            Drift::Dense { generator, step } => {
                if t == self.dt {
                    Ok(step.dot(psi))
                } else {
                    Ok(matrix_exponential(&generator.mapv(|z| z * t))?.dot(psi))
                }
            }
        }
    }

    /// Time within `(0, h]` at which the squared norm `norm_at(s)` of the
    /// drifting state reaches `target`, given `n0 > target >= n1` at the ends.
    fn jump_time<F>(&self, h: f64, target: f64, n0: f64, n1: f64, norm_at: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let (mut lo, mut hi) = (0.0, h);
        let (mut n_lo, mut n_hi) = (n0, n1);
        let resolution = JUMP_TIME_RESOLUTION * self.dt;
        while hi - lo > resolution {
            let w = hi - lo;
            // Log-linear interpolation of the norm, kept away from the ends.
            let frac = if n_hi > 0.0 {
                ((target / n_lo).ln() / (n_hi / n_lo).ln()).clamp(0.1, 0.9)
            } else {
                0.5
            };
            let mid = lo + frac * w;
            let n_mid = norm_at(mid)?;
            if n_mid > target {
                lo = mid;
                n_lo = n_mid;
            } else {
                hi = mid;
                n_hi = n_mid;
            }
        }
        Ok(hi)
    }

    /// Runs one trajectory drawing from `rng`.
    pub fn run_one<R: Rng>(&self, rng: &mut R) -> Result<TrajectoryRecord> {
        match &self.drift {
            Drift::Diagonal(g) => self.run_diagonal(g, rng),
            Drift::Dense { .. } => self.run_dense(rng),
        }
    }

    /// Diagonal drift: populations decay independently, so the squared norm
    /// is tracked with real factors and amplitudes are rebuilt only at jumps.
    fn run_diagonal<R: Rng>(&self, g: &[C64], rng: &mut R) -> Result<TrajectoryRecord> {
        let rates: Vec<f64> = g.iter().map(|g| 2.0 * g.re).collect();
        let step_decay: Vec<f64> = rates.iter().map(|r| (r * self.dt).exp()).collect();
        let amplitudes = |anchor: &Array1<C64>, since: f64| {
            Array1::from_iter(anchor.iter().zip(g).map(|(c, g)| c * (g * since).exp()))
        };

        let mut anchor = self.initial.clone();
        let mut weights: Vec<f64> = anchor.iter().map(|z| z.norm_sqr()).collect();
        let mut norm: f64 = weights.iter().sum();
        let (mut t, mut since) = (0.0, 0.0);
        let mut target: f64 = 1.0 - rng.random::<f64>();
        let mut events = Vec::new();
        while t < self.duration {
            let h = self.dt.min(self.duration - t);
            let n_next: f64 = if h == self.dt {
                weights.iter().zip(&step_decay).map(|(w, d)| w * d).sum()
            } else {
                weights.iter().zip(&rates).map(|(w, r)| w * (r * h).exp()).sum()
            };
            if n_next > target {
                if h == self.dt {
                    weights.iter_mut().zip(&step_decay).for_each(|(w, d)| *w *= d);
                } else {
                    weights.iter_mut().zip(&rates).for_each(|(w, r)| *w *= (r * h).exp());
                }
                norm = n_next;
                t += h;
                since += h;
                if norm < NORM_FLOOR {
                    return Err(Error::NormUnderflow { time: t });
                }
                continue;
            }
            let s = self.jump_time(h, target, norm, n_next, |s| {
                Ok(weights.iter().zip(&rates).map(|(w, r)| w * (r * s).exp()).sum())
            })?;
            t += s;
            let at_jump = amplitudes(&anchor, since + s);
            let (channel, after) = self.jump(&at_jump, rng.random::<f64>(), t)?;
            events.push(JumpEvent { time: t, channel });
            anchor = after;
            since = 0.0;
            weights = anchor.iter().map(|z| z.norm_sqr()).collect();
            norm = weights.iter().sum();
            target = 1.0 - rng.random::<f64>();
        }
        let final_config = self.measure(&amplitudes(&anchor, since), rng.random::<f64>())?;
        Ok(TrajectoryRecord {
            jumps: events,
            final_config,
        })
    }

    fn run_dense<R: Rng>(&self, rng: &mut R) -> Result<TrajectoryRecord> {
        let mut psi = self.initial.clone();
        let mut t = 0.0;
        let mut target: f64 = 1.0 - rng.random::<f64>();
        let mut events = Vec::new();
        let mut norm = norm_sqr(&psi);
        while t < self.duration {
            let h = self.dt.min(self.duration - t);
            let next = self.evolve(&psi, h)?;
            let n_next = norm_sqr(&next);
            if !(n_next >= 0.0) {
                return Err(Error::NormUnderflow { time: t });
            }
            if n_next > target {
                psi = next;
                norm = n_next;
                t += h;
                if norm < NORM_FLOOR {
                    return Err(Error::NormUnderflow { time: t });
                }
                continue;
            }
            let s = self.jump_time(h, target, norm, n_next, |s| Ok(norm_sqr(&self.evolve(&psi, s)?)))?;
            let at_jump = self.evolve(&psi, s)?;
            t += s;
            let (channel, after) = self.jump(&at_jump, rng.random::<f64>(), t)?;
            events.push(JumpEvent { time: t, channel });
            psi = after;
            norm = 1.0;
            target = 1.0 - rng.random::<f64>();
        }
        let final_config = self.measure(&psi, rng.random::<f64>())?;
        Ok(TrajectoryRecord {
            jumps: events,
            final_config,
        })
    }

    fn jump(&self, psi: &Array1<C64>, u: f64, t: f64) -> Result<(Channel, Array1<C64>)> {
        let branches: Vec<Array1<C64>> = self.jumps.iter().map(|l| l.dot(psi)).collect();
        let weights: Vec<f64> = branches.iter().map(norm_sqr).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidChannelWeights(format!(
                "total jump weight {total} at t = {t} us"
            )));
        }
        let mut acc = 0.0;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u * total < acc {
                chosen = i;
                break;
            }
        }
        let w = weights[chosen].sqrt();
        Ok((self.channels[chosen], branches[chosen].mapv(|z| z / w)))
    }

    fn measure(&self, psi: &Array1<C64>, u: f64) -> Result<NuclearConfig> {
        let comp = self.basis.dot(psi);
        let total = norm_sqr(&comp);
        if !(total > 0.0) {
            return Err(Error::NormUnderflow { time: self.duration });
        }
        let l = self.layout;
        let m = l.num_donors();
        let mut acc = 0.0;
        let mut last = NuclearConfig::all_up(m);
        for n in NuclearConfig::all(m) {
            acc += (0..l.electron_dim())
                .map(|s| comp[l.index(n, s)].norm_sqr())
                .sum::<f64>()
                / total;
            last = n;
            if u < acc {
                return Ok(n);
            }
        }
        Ok(last)
    }
}

fn norm_sqr(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Generator for trajectory `index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Default)]
struct Tally {
    counts: Vec<u64>,
    tunnel_in: u64,
    tunnel_out: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.tunnel_in += other.tunnel_in;
        self.tunnel_out += other.tunnel_out;
        self
    }
}

/// Runs `cfg.num_trajectories` trajectories on the current rayon pool.
pub fn run_trajectories(cfg: &TrajectoryConfig) -> Result<TrajectoryEstimate> {
    cfg.validate()?;
    let system = PreparedSystem::new(&cfg.system, &cfg.pulse)?;
    let sim = TrajectorySimulator::new(&system, &cfg.initial)?;
    let n = cfg.num_trajectories;
    let num_configs = 1usize << cfg.system.num_donors();
    let chunks: Vec<(u64, u64)> = (0..n)
        .step_by(CHUNK)
        .map(|start| (start, (start + CHUNK as u64).min(n)))
        .collect();
    let tally = chunks
        .par_iter()
        .map(|&(start, end)| -> Result<Tally> {
            let mut t = Tally {
                counts: vec![0; num_configs],
                ..Tally::default()
            };
            for i in start..end {
                let record = sim.run_one(&mut trajectory_rng(cfg.seed, i))?;
                t.counts[record.final_config.index()] += 1;
                for e in &record.jumps {
                    match e.channel {
                        Channel::TunnelIn => t.tunnel_in += 1,
                        Channel::TunnelOut { .. } => t.tunnel_out += 1,
                    }
                }
            }
            Ok(t)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let mut counts = tally.counts;
    counts.resize(num_configs, 0);
    Ok(TrajectoryEstimate::from_counts(
        counts,
        tally.tunnel_in,
        tally.tunnel_out,
        n,
        cfg.seed,
    ))
}
