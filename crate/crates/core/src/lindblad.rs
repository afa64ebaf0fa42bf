//! Liouvillian construction and density-matrix propagation.
//!
//! States are vectorized row-major, `vec(rho)[i * d + j] = rho[i][j]`, so that
//! `vec(A rho B) = (A (x) B^T) vec(rho)`. In that convention the generator is
//!
//! ```text
//! L = -i (H (x) 1 - 1 (x) H^T)
//!     + sum_mu [ L_mu (x) conj(L_mu) - 1/2 (L_mu^dag L_mu (x) 1 + 1 (x) (L_mu^dag L_mu)^T) ]
//! ```
//!
//! The generator is time independent within a pulse, so propagation applies
//! one precomputed `exp(L dt)` per sampling interval. That exponential is
//! formed in the Hamiltonian eigenbasis, where the gigahertz electron phases
//! separate from the slow population dynamics (see `StepOperator`).

use log::warn;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::eigen::eigendecompose;
use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::pulse::{LindbladSet, PulseSchedule};
use crate::spin::{adjoint, BasisLayout, ElectronSpace, OperatorMatrix};
use crate::state::{clamp_probability, DensityMatrix};

/// Trace drift beyond this aborts propagation.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-8;
/// A state eigenvalue below this aborts propagation.
pub const NEGATIVITY_LIMIT: f64 = -1e-6;
/// Eigenvalues between this and [`NEGATIVITY_LIMIT`] are logged.
pub const NEGATIVITY_WARN: f64 = -1e-9;

/// Superoperator acting on row-major vectorized density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    matrix: Array2<C64>,
    layout: BasisLayout,
    hamiltonian: OperatorMatrix,
    jumps: Vec<Array2<C64>>,
}

impl Liouvillian {
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    /// Number of jump operators it was built from.
    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// `d rho / dt` for the given state.
    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        let d = self.layout.dim();
        if rho.dim() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rho.nrows(),
            });
        }
        let v = vectorize(rho);
        Ok(unvectorize(&self.matrix.dot(&v), d))
    }

    /// `exp(L dt)` by dense scaling and squaring.
    pub fn propagator(&self, dt: f64) -> Result<Array2<C64>> {
        matrix_exponential(&self.matrix.mapv(|z| z * dt))
    }
}

pub fn vectorize(rho: &Array2<C64>) -> Array1<C64> {
    Array1::from_iter(rho.iter().copied())
}

pub fn unvectorize(v: &Array1<C64>, d: usize) -> Array2<C64> {
    Array2::from_shape_fn((d, d), |(i, j)| v[i * d + j])
}

/// Adds `scale * a (x) conj(b)` into `out`, visiting only the non-zero
/// entries of the factors.
fn add_kron_conj(out: &mut Array2<C64>, a: &Array2<C64>, b: &Array2<C64>, scale: f64) {
    let d = a.nrows();
    let nz = |m: &Array2<C64>| -> Vec<(usize, usize, C64)> {
        m.indexed_iter()
            .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
            .map(|((i, j), z)| (i, j, *z))
            .collect()
    };
    let (na, nb) = (nz(a), nz(b));
    for &(i, j, x) in &na {
        for &(k, l, y) in &nb {
            out[[i * d + k, j * d + l]] += x * y.conj() * scale;
        }
    }
}

/// Dissipative part `sum L (x) conj(L) - 1/2 (K (x) 1 + 1 (x) K^T)`.
fn dissipator(jumps: &[Array2<C64>], d: usize) -> Array2<C64> {
    let id: Array2<C64> = Array2::eye(d);
    let mut out = Array2::<C64>::zeros((d * d, d * d));
    let mut decay = Array2::<C64>::zeros((d, d));
    for l in jumps {
        add_kron_conj(&mut out, l, l, 1.0);
        decay = decay + adjoint(l).dot(l);
    }
    // K is Hermitian, so K^T = conj(K).
    add_kron_conj(&mut out, &decay, &id, -0.5);
    add_kron_conj(&mut out, &id, &decay, -0.5);
    out
}

/// Assembles the Liouvillian of `h` with the jump operators in `jumps`.
pub fn build_liouvillian(h: &OperatorMatrix, jumps: &LindbladSet) -> Result<Liouvillian> {
    let layout = h.layout();
    if jumps.layout() != layout {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: jumps.layout().dim(),
        });
    }
    let d = layout.dim();
    let ops: Vec<Array2<C64>> = jumps.iter().map(|j| j.operator.matrix().clone()).collect();
    if let Some(bad) = ops.iter().find(|l| l.dim() != (d, d)) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.nrows(),
        });
    }
    let id: Array2<C64> = Array2::eye(d);
    let mut lv = dissipator(&ops, d);
    // -i H (x) 1 + i 1 (x) H^T, and i H^T = conj(-i H) for Hermitian H.
    let minus_ih = h.matrix().mapv(|z| z * C64::new(0.0, -1.0));
    add_kron_conj(&mut lv, &minus_ih, &id, 1.0);
    add_kron_conj(&mut lv, &id, &minus_ih, 1.0);
    Ok(Liouvillian {
        matrix: lv,
        layout,
        hamiltonian: h.clone(),
        jumps: ops,
    })
}

/// Entries this far below the largest one are treated as exact zeros after a
/// change of basis.
const CLEAN_TOL: f64 = 1e-10;
/// Required ratio between fast rates and the slow block norm.
const SEPARATION: f64 = 10.0;
const NEUMANN_MAX_ITER: usize = 1000;

pub(crate) fn clean(mut m: Array2<C64>) -> Array2<C64> {
    let max = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    m.mapv_inplace(|z| if z.norm() <= CLEAN_TOL * max { C64::new(0.0, 0.0) } else { z });
    m
}

fn block_norm(m: &Array2<C64>, idx: &[usize]) -> f64 {
    let mut col = vec![0.0; idx.len()];
    let mut row = vec![0.0; idx.len()];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let v = m[[i, j]].norm();
            row[a] += v;
            col[b] += v;
        }
    }
    col.into_iter().chain(row).fold(0.0, f64::max)
}

/// `exp(L dt)` in the Hamiltonian eigenbasis, split by time scale.
///
/// In that basis every coherence between states far apart in energy feeds no
/// other element and only rotates and decays, so the generator is block
/// lower-triangular `[[S, 0], [C, diag(f)]]`. The slow block `S` has a small
/// norm and is exponentiated directly; the fast diagonal is exact; the
/// coupling block follows from the commutation of the generator with its
/// exponential. The trace lives entirely in the slow block.
struct StepOperator {
    basis: Array2<C64>,
    slow: Vec<usize>,
    fast: Vec<usize>,
    slow_step: Array2<C64>,
    fast_phase: Vec<C64>,
    coupling: Array2<C64>,
}

impl StepOperator {
    fn new(lv: &Liouvillian, dt: f64) -> Result<Self> {
        let eig = eigendecompose(&lv.hamiltonian)?;
        let basis = eig.eigenvectors().clone();
        let basis_dag = adjoint(&basis);
        let d = basis.nrows();
        let ops: Vec<Array2<C64>> = lv
            .jumps
            .iter()
            .map(|l| clean(basis_dag.dot(l).dot(&basis)))
            .collect();
        let mut gen = dissipator(&ops, d);
        let scale = gen.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lam = eig.eigenvalues();
        for a in 0..d {
            for b in 0..d {
                gen[[a * d + b, a * d + b]] += C64::new(0.0, -(lam[a] - lam[b]));
            }
        }

        let n = d * d;
        let trivial: Vec<bool> = (0..n)
            .map(|j| (0..n).all(|i| i == j || gen[[i, j]].norm() <= CLEAN_TOL * scale))
            .collect();
        let mut fast: Vec<usize> = (0..n).filter(|&j| trivial[j]).collect();
        let mut slow: Vec<usize>;
        loop {
            slow = (0..n).filter(|j| !fast.contains(j)).collect();
            let norm = block_norm(&gen, &slow);
            let before = fast.len();
            fast.retain(|&j| gen[[j, j]].norm() > SEPARATION * norm);
            if fast.len() == before {
                break;
            }
        }

        let sub = |rows: &[usize], cols: &[usize]| {
            Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| gen[[rows[a], cols[b]]])
        };
        let s = sub(&slow, &slow);
        let slow_step = matrix_exponential(&s.mapv(|z| z * dt))?;
        let f: Vec<C64> = fast.iter().map(|&j| gen[[j, j]]).collect();
        let fast_phase: Vec<C64> = f.iter().map(|z| (z * dt).exp()).collect();

        // Row i of the coupling block is c_i (e^{f_i dt} - e^{S dt}) (f_i - S)^{-1}.
        let c = sub(&fast, &slow);
        let mut rhs = -c.dot(&slow_step);
        for (i, mut row) in rhs.rows_mut().into_iter().enumerate() {
            row.scaled_add(fast_phase[i], &c.row(i));
        }
        let inv_f: Vec<C64> = f.iter().map(|z| 1.0 / z).collect();
        let divide = |mut m: Array2<C64>| {
            for (i, mut row) in m.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|z| z * inv_f[i]);
            }
            m
        };
        let mut y = divide(rhs.clone());
        let mut converged = fast.is_empty();
        for _ in 0..NEUMANN_MAX_ITER {
            if converged {
                break;
            }
            let next = divide(&rhs + &y.dot(&s));
            let change = (&next - &y).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let size = next.iter().map(|z| z.norm()).fold(0.0, f64::max);
            y = next;
            converged = change <= 1e-14 * size;
        }
        if !converged {
            return Err(Error::NumericalFailure(
                "coupling block of the propagator did not converge".into(),
            ));
        }
        Ok(Self {
            basis,
            slow,
            fast,
            slow_step,
            fast_phase,
            coupling: y,
        })
    }

    fn to_eigenbasis(&self, rho: &Array2<C64>) -> Array1<C64> {
        vectorize(&adjoint(&self.basis).dot(rho).dot(&self.basis))
    }

    fn from_eigenbasis(&self, v: &Array1<C64>) -> Array2<C64> {
        let d = self.basis.nrows();
        self.basis.dot(&unvectorize(v, d)).dot(&adjoint(&self.basis))
    }

    fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        let s = Array1::from_iter(self.slow.iter().map(|&i| v[i]));
        let s_next = self.slow_step.dot(&s);
        let f_next = self.coupling.dot(&s);
        let mut out = Array1::zeros(v.len());
        for (a, &i) in self.slow.iter().enumerate() {
            out[i] = s_next[a];
        }
        for (a, &i) in self.fast.iter().enumerate() {
            out[i] = f_next[a] + self.fast_phase[a] * v[i];
        }
        out
    }
}

/// Running worst-case physicality residuals over a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub max_trace_drift: f64,
    pub max_hermiticity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_nuclear_sum_error: f64,
    pub max_electron_sum_error: f64,
}

impl Default for Physicality {
    fn default() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermiticity_residual: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_nuclear_sum_error: 0.0,
            max_electron_sum_error: 0.0,
        }
    }
}

impl Physicality {
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            max_trace_drift: self.max_trace_drift.max(other.max_trace_drift),
            max_hermiticity_residual: self
                .max_hermiticity_residual
                .max(other.max_hermiticity_residual),
            min_eigenvalue: self.min_eigenvalue.min(other.min_eigenvalue),
            max_nuclear_sum_error: self.max_nuclear_sum_error.max(other.max_nuclear_sum_error),
            max_electron_sum_error: self.max_electron_sum_error.max(other.max_electron_sum_error),
        }
    }
}

/// Observables of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    /// Probability of each nuclear configuration, in basis order.
    pub nuclear: Vec<f64>,
    /// Electron `[up, down, reservoir]` probabilities.
    pub electron: [f64; 3],
}

/// Observables on the sampling grid of one pulse.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub samples: Vec<Sample>,
    pub num_donors: usize,
    pub physicality: Physicality,
    pub final_state: DensityMatrix,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// Time trace of one nuclear configuration probability.
    pub fn nuclear_trace(&self, config_index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.nuclear[config_index]).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a time series has at least one sample")
    }
}

fn observe(rho: &DensityMatrix, time: f64, phys: &mut Physicality) -> Result<Sample> {
    let trace = rho.trace();
    let drift = (trace - 1.0).abs();
    if !(drift <= TRACE_DRIFT_LIMIT) {
        return Err(Error::NumericalFailure(format!(
            "trace drifted by {drift:.3e} at t = {time} us"
        )));
    }
    let min = rho.min_eigenvalue()?;
    if min < NEGATIVITY_LIMIT {
        return Err(Error::NumericalFailure(format!(
            "state eigenvalue {min:.3e} at t = {time} us"
        )));
    }
    if min < NEGATIVITY_WARN {
        warn!("state eigenvalue {min:.3e} at t = {time} us; clamping populations");
    }
    let nuclear = rho
        .nuclear_populations()
        .into_iter()
        .map(clamp_probability)
        .collect::<Result<Vec<_>>>()?;
    let raw_e = rho.electron_populations();
    let electron = [
        clamp_probability(raw_e[0])?,
        clamp_probability(raw_e[1])?,
        clamp_probability(raw_e[2])?,
    ];

    phys.max_trace_drift = phys.max_trace_drift.max(drift);
    phys.max_hermiticity_residual = phys.max_hermiticity_residual.max(rho.hermiticity_residual());
    phys.min_eigenvalue = phys.min_eigenvalue.min(min);
    phys.max_nuclear_sum_error = phys
        .max_nuclear_sum_error
        .max((nuclear.iter().sum::<f64>() - 1.0).abs());
    phys.max_electron_sum_error = phys
        .max_electron_sum_error
        .max((electron.iter().sum::<f64>() - 1.0).abs());

    Ok(Sample {
        time,
        nuclear,
        electron,
    })
}

/// Propagates `rho0` over the pulse window and samples observables.
///
/// The window is split into `sample_points` equal intervals; a zero-length
/// window yields only the initial sample.
pub fn propagate(rho0: &DensityMatrix, lv: &Liouvillian, sched: &PulseSchedule) -> Result<TimeSeries> {
    let layout = lv.layout();
    if rho0.layout() != layout {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            found: rho0.dim(),
        });
    }
    if layout.electron() != ElectronSpace::WithReservoir {
        log::debug!("propagating on a layout without a reservoir level");
    }
    let times = sched.sample_times();
    let mut phys = Physicality::default();
    let mut samples = Vec::with_capacity(times.len());
    samples.push(observe(rho0, 0.0, &mut phys)?);

    let mut rho = rho0.clone();
    if times.len() > 1 {
        let dt = sched.duration() / sched.sample_points() as f64;
        let step = StepOperator::new(lv, dt)?;
        let mut v = step.to_eigenbasis(rho0.matrix());
        for &t in &times[1..] {
            v = step.apply(&v);
            rho = DensityMatrix::new_unchecked(step.from_eigenbasis(&v), layout)?;
            samples.push(observe(&rho, t, &mut phys)?);
        }
    }
    Ok(TimeSeries {
        samples,
        num_donors: layout.num_donors(),
        physicality: phys,
        final_state: rho,
    })
}
