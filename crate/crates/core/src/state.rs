//! Density matrices, state labels and projective observables.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::pulse::embed_eigenvector;
use crate::spin::{
    frobenius, hermiticity_residual, BasisLayout, ElectronLevel, ElectronSpace, NuclearConfig,
    OperatorMatrix,
};

/// Tolerances a [`DensityMatrix`] is checked against on construction.
pub const RHO_HERMITIAN_TOL: f64 = 1e-10;
pub const RHO_TRACE_TOL: f64 = 1e-10;
pub const RHO_MIN_EIGENVALUE: f64 = -1e-9;

/// Probabilities this far outside `[0, 1]` are clamped instead of rejected.
pub const PROBABILITY_SLACK: f64 = 1e-9;

/// Hermitian, unit-trace, positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: Array2<C64>,
    layout: BasisLayout,
}

impl DensityMatrix {
    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn new(matrix: Array2<C64>, layout: BasisLayout) -> Result<Self> {
        let rho = Self::new_unchecked(matrix, layout)?;
        let herm = rho.hermiticity_residual();
        if herm > RHO_HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual: herm });
        }
        let drift = (rho.trace() - 1.0).abs();
        if drift > RHO_TRACE_TOL {
            return Err(Error::NumericalFailure(format!("trace deviates from 1 by {drift:.3e}")));
        }
        let min = rho.min_eigenvalue()?;
        if min < RHO_MIN_EIGENVALUE {
            return Err(Error::NumericalFailure(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    pub(crate) fn new_unchecked(matrix: Array2<C64>, layout: BasisLayout) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c || r != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: r.max(c),
            });
        }
        Ok(Self { matrix, layout })
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn from_pure(psi: &Array1<C64>, layout: BasisLayout) -> Result<Self> {
        if psi.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: psi.len(),
            });
        }
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 || !norm2.is_finite() {
            return Err(Error::NumericalFailure("cannot normalize state vector".into()));
        }
        let d = psi.len();
        let m = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj() / norm2);
        Ok(Self { matrix: m, layout })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().iter().map(|z| z.re).sum()
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        // Tr(rho rho) = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho.
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.matrix)
    }

    /// Probability of each nuclear configuration, in basis order.
    pub fn nuclear_populations(&self) -> Vec<f64> {
        let l = self.layout;
        NuclearConfig::all(l.num_donors())
            .map(|n| {
                (0..l.electron_dim())
                    .map(|s| self.matrix[[l.index(n, s), l.index(n, s)]].re)
                    .sum()
            })
            .collect()
    }

    /// Electron populations `[up, down, reservoir]`; entries absent from the
    /// layout are zero.
    pub fn electron_populations(&self) -> [f64; 3] {
        let l = self.layout;
        let mut out = [0.0; 3];
        if l.electron() == ElectronSpace::Absent {
            out[2] = self.trace();
            return out;
        }
        for i in 0..l.dim() {
            let (_, s) = l.split(i);
            out[s] += self.matrix[[i, i]].re;
        }
        out
    }
}

/// Names an initial state.
///
/// Text forms: `e4` or `e_4` for the fourth donor eigenstate in ascending
/// energy; a product state such as `UDu` (nuclear `U`/`D` per donor, then the
/// electron `u`, `d` or `S` for the reservoir; `⇑⇓↑↓` are accepted too); and
/// `~UDu` for the donor eigenstate with the largest overlap with that product
/// state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    /// One-based index into the ascending donor eigenstates.
    Eigenstate(usize),
    Product {
        nuclear: NuclearConfig,
        electron: ElectronLevel,
    },
    NearestEigenstate {
        nuclear: NuclearConfig,
        electron: ElectronLevel,
    },
}

impl StateLabel {
    pub fn product(nuclear: NuclearConfig, electron: ElectronLevel) -> Self {
        StateLabel::Product { nuclear, electron }
    }

    pub fn nearest(nuclear: NuclearConfig, electron: ElectronLevel) -> Self {
        StateLabel::NearestEigenstate { nuclear, electron }
    }
}

fn parse_product(s: &str, original: &str) -> Result<(NuclearConfig, ElectronLevel)> {
    let unknown = || Error::UnknownLabel(original.to_string());
    let (nuc, electron) = if let Some(stripped) = s.strip_suffix("SET") {
        (stripped, ElectronLevel::Reservoir)
    } else {
        let mut chars = s.chars();
        let last = chars.next_back().ok_or_else(unknown)?;
        let level = match last {
            'u' | '↑' => ElectronLevel::Up,
            'd' | '↓' => ElectronLevel::Down,
            'S' => ElectronLevel::Reservoir,
            _ => return Err(unknown()),
        };
        (chars.as_str(), level)
    };
    let downs = nuc
        .chars()
        .map(|c| match c {
            'U' | '⇑' => Ok(false),
            'D' | '⇓' => Ok(true),
            _ => Err(unknown()),
        })
        .collect::<Result<Vec<bool>>>()?;
    if downs.is_empty() || downs.len() > 8 {
        return Err(unknown());
    }
    Ok((NuclearConfig::from_downs(&downs), electron))
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(rest) = t.strip_prefix('e') {
            let digits = rest.strip_prefix('_').unwrap_or(rest);
            return match digits.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(StateLabel::Eigenstate(k)),
                _ => Err(Error::UnknownLabel(s.to_string())),
            };
        }
        if let Some(rest) = t.strip_prefix('~') {
            let (nuclear, electron) = parse_product(rest, s)?;
            return Ok(StateLabel::NearestEigenstate { nuclear, electron });
        }
        let (nuclear, electron) = parse_product(t, s)?;
        Ok(StateLabel::Product { nuclear, electron })
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Eigenstate(k) => write!(f, "e{k}"),
            StateLabel::Product { nuclear, electron } => write!(f, "{nuclear}{}", electron.symbol()),
            StateLabel::NearestEigenstate { nuclear, electron } => {
                write!(f, "~{nuclear}{}", electron.symbol())
            }
        }
    }
}

fn check_donors(label_donors: usize, layout: BasisLayout, label: &StateLabel) -> Result<()> {
    if label_donors != layout.num_donors() {
        return Err(Error::UnknownLabel(format!(
            "{label} names {label_donors} donors but the system has {}",
            layout.num_donors()
        )));
    }
    Ok(())
}

/// Resolves a label to a donor eigenstate index (zero based).
pub fn resolve_eigenstate(label: &StateLabel, eig: &EigenSystem) -> Result<Option<usize>> {
    let layout = eig.layout();
    match *label {
        StateLabel::Eigenstate(k) => {
            if k == 0 || k > eig.len() {
                return Err(Error::UnknownLabel(format!(
                    "{label}: only e1..e{} exist",
                    eig.len()
                )));
            }
            Ok(Some(k - 1))
        }
        StateLabel::NearestEigenstate { nuclear, electron } => {
            check_donors(nuclear.num_donors(), layout, label)?;
            if electron == ElectronLevel::Reservoir {
                return Err(Error::UnknownLabel(format!(
                    "{label}: reservoir states are not donor eigenstates"
                )));
            }
            let i = layout.index(nuclear, electron.index());
            let best = (0..eig.len())
                .max_by(|&a, &b| {
                    eig.vector(a)[i]
                        .norm_sqr()
                        .total_cmp(&eig.vector(b)[i].norm_sqr())
                        .then(b.cmp(&a))
                })
                .expect("non-empty eigensystem");
            Ok(Some(best))
        }
        StateLabel::Product { .. } => Ok(None),
    }
}

/// State vector over the three-level-electron space named by `label`.
///
/// `eig` must be the eigensystem of the donor-bound Hamiltonian.
pub fn initial_vector(label: &StateLabel, eig: &EigenSystem) -> Result<Array1<C64>> {
    let bound = eig.layout();
    if bound.electron() != ElectronSpace::Bound {
        return Err(Error::WrongLayout(
            "initial states are resolved against the donor-bound eigensystem".into(),
        ));
    }
    let layout = BasisLayout::new(bound.num_donors(), ElectronSpace::WithReservoir);
    match resolve_eigenstate(label, eig)? {
        Some(k) => Ok(embed_eigenvector(eig, k)),
        None => {
            let StateLabel::Product { nuclear, electron } = *label else {
                unreachable!("only product labels resolve to no eigenstate")
            };
            check_donors(nuclear.num_donors(), layout, label)?;
            let mut psi = Array1::zeros(layout.dim());
            psi[layout.index(nuclear, electron.index())] = C64::new(1.0, 0.0);
            Ok(psi)
        }
    }
}

/// Pure initial state over the three-level-electron space.
pub fn initial_state(label: &StateLabel, eig: &EigenSystem) -> Result<DensityMatrix> {
    let layout = BasisLayout::new(eig.layout().num_donors(), ElectronSpace::WithReservoir);
    DensityMatrix::from_pure(&initial_vector(label, eig)?, layout)
}

/// Projector onto nuclear configuration `n`, any electron level.
pub fn nuclear_projector(layout: BasisLayout, n: NuclearConfig) -> OperatorMatrix {
    let mut p = OperatorMatrix::zeros(layout).into_matrix();
    for s in 0..layout.electron_dim() {
        let i = layout.index(n, s);
        p[[i, i]] = C64::new(1.0, 0.0);
    }
    OperatorMatrix::new(p, layout).expect("layout-sized")
}

/// Projector onto one electron level, any nuclear configuration.
pub fn electron_projector(layout: BasisLayout, level: ElectronLevel) -> Result<OperatorMatrix> {
    if level.index() >= layout.electron_dim() {
        return Err(Error::WrongLayout(format!("layout has no {level:?} level")));
    }
    let mut p = OperatorMatrix::zeros(layout).into_matrix();
    for n in NuclearConfig::all(layout.num_donors()) {
        let i = layout.index(n, level.index());
        p[[i, i]] = C64::new(1.0, 0.0);
    }
    OperatorMatrix::new(p, layout)
}

/// Maps a computed probability into `[0, 1]`, tolerating rounding slack.
pub(crate) fn clamp_probability(p: f64) -> Result<f64> {
    if !p.is_finite() || p < -PROBABILITY_SLACK || p > 1.0 + PROBABILITY_SLACK {
        return Err(Error::NumericalFailure(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `Tr(rho Pi)` for an orthogonal projector `Pi`.
pub fn expectation(rho: &DensityMatrix, projector: &OperatorMatrix) -> Result<f64> {
    if rho.layout() != projector.layout() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: projector.dim(),
        });
    }
    let p = projector.matrix();
    let scale = frobenius(p).max(1.0);
    let idempotency = frobenius(&(p.dot(p) - p)) / scale;
    let residual = idempotency.max(projector.hermiticity_residual());
    if residual > 1e-10 {
        return Err(Error::NotProjector { residual });
    }
    let r = rho.matrix();
    let value: C64 = r.iter().zip(p.t().iter()).map(|(a, b)| a * b).sum();
    if value.im.abs() > 1e-10 {
        return Err(Error::NumericalFailure(format!(
            "expectation value has imaginary part {:.3e}",
            value.im
        )));
    }
    clamp_probability(value.re)
}
