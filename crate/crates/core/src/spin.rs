//! Spin operators and Hamiltonians of a donor cluster sharing one electron.
//!
//! Frequencies enter as ordinary frequencies in MHz. Every matrix built here
//! holds angular frequencies in rad/us (a factor of 2pi applied once, in
//! [`SpinSystemSpec::omega_e`] and friends), so that `exp(-i H t)` with `t` in
//! microseconds carries the right phase.
//!
//! Basis states are ordered nuclear-major: the nuclear configuration runs from
//! all-up to all-down with donor 1 as the most significant spin, and the
//! electron level (up, down and, when present, the reservoir level) runs
//! fastest. For one donor and a reservoir level this is
//! `{Uu, Ud, US, Du, Dd, DS}`.

use std::f64::consts::TAU;
use std::fmt;

use ndarray::{linalg::kron, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Electron gyromagnetic ratio in MHz/T.
pub const GAMMA_E_MHZ_PER_T: f64 = 27_958.0;
/// Phosphorus nuclear gyromagnetic ratio in MHz/T.
pub const GAMMA_N_MHZ_PER_T: f64 = -17.217;

/// Relative tolerance for the Hermiticity of assembled Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Converts an ordinary frequency in MHz to an angular frequency in rad/us.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// Converts an angular frequency in rad/us back to MHz.
pub fn angular_to_mhz(w: f64) -> f64 {
    w / TAU
}

/// Physical parameters of an m-donor, one-electron spin system.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystemSpec {
    hyperfine: Vec<f64>,
    b_field: f64,
    gamma_e: f64,
    gamma_n: f64,
}

impl SpinSystemSpec {
    /// A system with the given contact hyperfine constants (MHz) in a field of
    /// `b_field` tesla, using the phosphorus-in-silicon gyromagnetic ratios.
    pub fn new(hyperfine_mhz: Vec<f64>, b_field: f64) -> Result<Self> {
        Self::with_gyromagnetic(hyperfine_mhz, b_field, GAMMA_E_MHZ_PER_T, GAMMA_N_MHZ_PER_T)
    }

    pub fn with_gyromagnetic(
        hyperfine_mhz: Vec<f64>,
        b_field: f64,
        gamma_e: f64,
        gamma_n: f64,
    ) -> Result<Self> {
        let spec = Self {
            hyperfine: hyperfine_mhz,
            b_field,
            gamma_e,
            gamma_n,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single phosphorus donor in the usual 1.4 T readout field.
    pub fn single_donor(a_mhz: f64) -> Result<Self> {
        Self::new(vec![a_mhz], 1.4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hyperfine.is_empty() {
            return Err(Error::InvalidSpec("at least one donor is required".into()));
        }
        if self.hyperfine.len() > 8 {
            return Err(Error::InvalidSpec(format!(
                "{} donors exceeds the dense-matrix limit of 8",
                self.hyperfine.len()
            )));
        }
        if let Some((j, a)) = self
            .hyperfine
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a < 0.0)
        {
            return Err(Error::InvalidSpec(format!(
                "hyperfine constant A_{} = {a} MHz must be finite and non-negative",
                j + 1
            )));
        }
        if !self.b_field.is_finite() || self.b_field <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "magnetic field {} T must be positive",
                self.b_field
            )));
        }
        if !self.gamma_e.is_finite() || !self.gamma_n.is_finite() {
            return Err(Error::InvalidSpec("gyromagnetic ratios must be finite".into()));
        }
        Ok(())
    }

    pub fn num_donors(&self) -> usize {
        self.hyperfine.len()
    }

    /// Contact hyperfine constants in MHz.
    pub fn hyperfine(&self) -> &[f64] {
        &self.hyperfine
    }

    pub fn b_field(&self) -> f64 {
        self.b_field
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }

    /// Electron Larmor frequency `gamma_e * B` in MHz.
    pub fn omega_e_mhz(&self) -> f64 {
        self.gamma_e * self.b_field
    }

    /// Nuclear Larmor frequency `gamma_n * B` in MHz (negative for phosphorus).
    pub fn omega_n_mhz(&self) -> f64 {
        self.gamma_n * self.b_field
    }

    /// Electron Larmor frequency in rad/us.
    pub fn omega_e(&self) -> f64 {
        mhz_to_angular(self.omega_e_mhz())
    }

    /// Nuclear Larmor frequency in rad/us.
    pub fn omega_n(&self) -> f64 {
        mhz_to_angular(self.omega_n_mhz())
    }

    pub fn with_b_field(&self, b_field: f64) -> Result<Self> {
        let mut out = self.clone();
        out.b_field = b_field;
        out.validate()?;
        Ok(out)
    }

    pub fn with_hyperfine(&self, hyperfine_mhz: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.hyperfine = hyperfine_mhz;
        out.validate()?;
        Ok(out)
    }

    pub fn layout(&self, electron: ElectronSpace) -> BasisLayout {
        BasisLayout::new(self.num_donors(), electron)
    }
}

/// Which electron levels a layout carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElectronSpace {
    /// Nuclear spins only (electron on the reservoir, not represented).
    Absent,
    /// Electron bound to the donors: `{up, down}`.
    Bound,
    /// Three-level electron: `{up, down, reservoir}`.
    WithReservoir,
}

impl ElectronSpace {
    pub fn dim(self) -> usize {
        match self {
            ElectronSpace::Absent => 1,
            ElectronSpace::Bound => 2,
            ElectronSpace::WithReservoir => 3,
        }
    }
}

/// Electron level in the three-level description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElectronLevel {
    Up,
    Down,
    Reservoir,
}

impl ElectronLevel {
    pub fn index(self) -> usize {
        match self {
            ElectronLevel::Up => 0,
            ElectronLevel::Down => 1,
            ElectronLevel::Reservoir => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ElectronLevel::Up),
            1 => Some(ElectronLevel::Down),
            2 => Some(ElectronLevel::Reservoir),
            _ => None,
        }
    }

    /// `u`, `d` or `S`.
    pub fn symbol(self) -> char {
        match self {
            ElectronLevel::Up => 'u',
            ElectronLevel::Down => 'd',
            ElectronLevel::Reservoir => 'S',
        }
    }
}

/// Configuration of all nuclear spins, stored as bits with donor 1 in the
/// most significant position and a set bit meaning spin down.
///
/// The numeric value equals the nuclear index in the basis ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NuclearConfig {
    bits: u32,
    num_donors: usize,
}

impl NuclearConfig {
    pub fn from_index(index: usize, num_donors: usize) -> Self {
        debug_assert!(index < 1 << num_donors);
        Self {
            bits: index as u32,
            num_donors,
        }
    }

    /// All nuclear spins up.
    pub fn all_up(num_donors: usize) -> Self {
        Self::from_index(0, num_donors)
    }

    /// Builds a configuration from per-donor flags, `true` meaning spin down.
    pub fn from_downs(downs: &[bool]) -> Self {
        let m = downs.len();
        let bits = downs
            .iter()
            .enumerate()
            .filter(|(_, d)| **d)
            .fold(0u32, |acc, (j, _)| acc | 1 << (m - 1 - j));
        Self { bits, num_donors: m }
    }

    pub fn index(self) -> usize {
        self.bits as usize
    }

    pub fn num_donors(self) -> usize {
        self.num_donors
    }

    /// Whether donor `j` (zero based) is spin down.
    pub fn is_down(self, j: usize) -> bool {
        self.bits >> (self.num_donors - 1 - j) & 1 == 1
    }

    /// `I_jz` eigenvalue of donor `j`: +1/2 or -1/2.
    pub fn spin_z(self, j: usize) -> f64 {
        if self.is_down(j) {
            -0.5
        } else {
            0.5
        }
    }

    /// The configuration with donor `j` flipped.
    pub fn flipped(self, j: usize) -> Self {
        Self {
            bits: self.bits ^ 1 << (self.num_donors - 1 - j),
            num_donors: self.num_donors,
        }
    }

    /// Number of donors whose spin differs between the two configurations.
    pub fn hamming(self, other: Self) -> u32 {
        (self.bits ^ other.bits).count_ones()
    }

    /// All `2^m` configurations in basis order.
    pub fn all(num_donors: usize) -> impl Iterator<Item = Self> {
        (0..1usize << num_donors).map(move |i| Self::from_index(i, num_donors))
    }
}

impl fmt::Display for NuclearConfig {
    /// `U`/`D` per donor, e.g. `UD` for donor 1 up and donor 2 down.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.num_donors {
            f.write_str(if self.is_down(j) { "D" } else { "U" })?;
        }
        Ok(())
    }
}

/// Dimensions and ordering of a nuclear (x) electron product basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLayout {
    num_donors: usize,
    electron: ElectronSpace,
}

impl BasisLayout {
    pub fn new(num_donors: usize, electron: ElectronSpace) -> Self {
        Self {
            num_donors,
            electron,
        }
    }

    pub fn num_donors(&self) -> usize {
        self.num_donors
    }

    pub fn electron(&self) -> ElectronSpace {
        self.electron
    }

    pub fn nuclear_dim(&self) -> usize {
        1 << self.num_donors
    }

    pub fn electron_dim(&self) -> usize {
        self.electron.dim()
    }

    pub fn dim(&self) -> usize {
        self.nuclear_dim() * self.electron_dim()
    }

    /// Basis index of a nuclear configuration and electron slot.
    pub fn index(&self, nuclear: NuclearConfig, electron_slot: usize) -> usize {
        debug_assert!(electron_slot < self.electron_dim());
        nuclear.index() * self.electron_dim() + electron_slot
    }

    /// Inverse of [`BasisLayout::index`].
    pub fn split(&self, index: usize) -> (NuclearConfig, usize) {
        let e = self.electron_dim();
        (
            NuclearConfig::from_index(index / e, self.num_donors),
            index % e,
        )
    }

    /// Human-readable label of a basis state such as `UDd`.
    pub fn state_label(&self, index: usize) -> String {
        let (n, slot) = self.split(index);
        match self.electron {
            ElectronSpace::Absent => n.to_string(),
            _ => format!("{n}{}", ElectronLevel::from_index(slot).unwrap().symbol()),
        }
    }
}

/// Dense complex operator over a [`BasisLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    matrix: Array2<C64>,
    layout: BasisLayout,
}

impl OperatorMatrix {
    pub fn new(matrix: Array2<C64>, layout: BasisLayout) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: c,
            });
        }
        if r != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: r,
            });
        }
        Ok(Self { matrix, layout })
    }

    pub fn zeros(layout: BasisLayout) -> Self {
        let d = layout.dim();
        Self {
            matrix: Array2::zeros((d, d)),
            layout,
        }
    }

    pub fn identity(layout: BasisLayout) -> Self {
        Self {
            matrix: Array2::eye(layout.dim()),
            layout,
        }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn layout(&self) -> BasisLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: adjoint(&self.matrix),
            layout: self.layout,
        }
    }

    /// `||A - A^dagger||_F / ||A||_F`, zero for the zero matrix.
    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }

    /// Matrix product `self * other`.
    pub fn dot(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: self.matrix.dot(&other.matrix),
            layout: self.layout,
        })
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.dot(other)?;
        let ba = other.dot(self)?;
        Ok(Self {
            matrix: ab.matrix - ba.matrix,
            layout: self.layout,
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            matrix: &self.matrix * factor,
            layout: self.layout,
        }
    }
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: Self) -> OperatorMatrix {
        assert_eq!(self.layout, rhs.layout, "layout mismatch in operator sum");
        OperatorMatrix {
            matrix: &self.matrix + &rhs.matrix,
            layout: self.layout,
        }
    }
}

pub(crate) fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

pub(crate) fn frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn hermiticity_residual(m: &Array2<C64>) -> f64 {
    let norm = frobenius(m);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius(&(m - &adjoint(m))) / norm
}

/// Cartesian components of one spin-1/2 embedded in the full space.
#[derive(Debug, Clone)]
pub struct SpinTriple {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub z: OperatorMatrix,
}

/// Embedded spin operators `I_j` for every nucleus and `S` for the electron.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub nuclear: Vec<SpinTriple>,
    /// Electron spin; `None` when the layout has no electron factor.
    pub electron: Option<SpinTriple>,
}

fn pauli_halves() -> [Array2<C64>; 3] {
    let h = 0.5;
    let x = Array2::from_shape_vec((2, 2), vec![ZERO, C64::new(h, 0.0), C64::new(h, 0.0), ZERO])
        .unwrap();
    let y = Array2::from_shape_vec(
        (2, 2),
        vec![ZERO, C64::new(0.0, -h), C64::new(0.0, h), ZERO],
    )
    .unwrap();
    let z = Array2::from_shape_vec((2, 2), vec![C64::new(h, 0.0), ZERO, ZERO, C64::new(-h, 0.0)])
        .unwrap();
    [x, y, z]
}

/// Embeds a 2x2 spin operator in the electron factor of the given size; the
/// reservoir level (if any) is annihilated.
fn electron_factor(op: &Array2<C64>, dim: usize) -> Array2<C64> {
    let mut out = Array2::zeros((dim, dim));
    out.slice_mut(ndarray::s![0..2, 0..2]).assign(op);
    out
}

/// Tensor product of the listed factors, left to right.
fn kron_all(factors: &[Array2<C64>]) -> Array2<C64> {
    factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| kron(&acc, f))
}

/// Builds the spin-1/2 operators of every nucleus and of the electron,
/// embedded in `layout`.
pub fn build_spin_operators(layout: BasisLayout) -> SpinOperators {
    let m = layout.num_donors();
    let e_dim = layout.electron_dim();
    let paulis = pauli_halves();
    let id2: Array2<C64> = Array2::eye(2);
    let id_e: Array2<C64> = Array2::eye(e_dim);

    let embed_nuclear = |j: usize, op: &Array2<C64>| {
        let mut factors: Vec<Array2<C64>> = (0..m)
            .map(|k| if k == j { op.clone() } else { id2.clone() })
            .collect();
        factors.push(id_e.clone());
        OperatorMatrix {
            matrix: kron_all(&factors),
            layout,
        }
    };

    let nuclear = (0..m)
        .map(|j| SpinTriple {
            x: embed_nuclear(j, &paulis[0]),
            y: embed_nuclear(j, &paulis[1]),
            z: embed_nuclear(j, &paulis[2]),
        })
        .collect();

    let electron = (layout.electron() != ElectronSpace::Absent).then(|| {
        let embed = |op: &Array2<C64>| {
            let mut factors: Vec<Array2<C64>> = vec![id2.clone(); m];
            factors.push(electron_factor(op, e_dim));
            OperatorMatrix {
                matrix: kron_all(&factors),
                layout,
            }
        };
        SpinTriple {
            x: embed(&paulis[0]),
            y: embed(&paulis[1]),
            z: embed(&paulis[2]),
        }
    });

    SpinOperators { nuclear, electron }
}

/// Hamiltonian with the electron bound to the donors:
/// `sum_j w_n I_jz + w_e S_z + sum_j A_j I_j.S`, in rad/us.
pub fn build_donor_hamiltonian(spec: &SpinSystemSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let layout = spec.layout(ElectronSpace::Bound);
    let ops = build_spin_operators(layout);
    let s = ops.electron.as_ref().expect("bound layout has an electron");
    let w_n = C64::new(spec.omega_n(), 0.0);
    let w_e = C64::new(spec.omega_e(), 0.0);

    let mut h = s.z.matrix() * w_e;
    for (i, a) in ops.nuclear.iter().zip(spec.hyperfine()) {
        h = h + i.z.matrix() * w_n;
        let a = C64::new(mhz_to_angular(*a), 0.0);
        let contact = i.x.matrix().dot(s.x.matrix())
            + i.y.matrix().dot(s.y.matrix())
            + i.z.matrix().dot(s.z.matrix());
        h = h + contact * a;
    }
    OperatorMatrix::new(h, layout)
}

/// Nuclear Zeeman Hamiltonian `sum_j w_n I_jz` on the nuclear-only space.
pub fn build_nuclear_zeeman(spec: &SpinSystemSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let layout = spec.layout(ElectronSpace::Absent);
    let w_n = spec.omega_n();
    let mut h = Array2::zeros((layout.dim(), layout.dim()));
    for n in NuclearConfig::all(spec.num_donors()) {
        let e: f64 = (0..spec.num_donors()).map(|j| n.spin_z(j)).sum::<f64>() * w_n;
        h[[n.index(), n.index()]] = C64::new(e, 0.0);
    }
    OperatorMatrix::new(h, layout)
}

/// Isometry embedding the bound-electron space into the three-level space.
pub fn donor_projector(num_donors: usize) -> Array2<C64> {
    let mut p = Array2::zeros((3, 2));
    p[[0, 0]] = ONE;
    p[[1, 1]] = ONE;
    kron(&Array2::eye(1 << num_donors), &p)
}

/// Isometry embedding the nuclear-only space as the reservoir sector.
pub fn reservoir_projector(num_donors: usize) -> Array2<C64> {
    let mut p = Array2::zeros((3, 1));
    p[[2, 0]] = ONE;
    kron(&Array2::eye(1 << num_donors), &p)
}

/// Combines the bound and reservoir Hamiltonians into one operator on the
/// three-level-electron space: `P_d H_donor P_d^dagger + P_s H_zn P_s^dagger`.
pub fn assemble_combined(h_donor: &OperatorMatrix, h_zn: &OperatorMatrix) -> Result<OperatorMatrix> {
    let ld = h_donor.layout();
    let lz = h_zn.layout();
    if ld.electron() != ElectronSpace::Bound {
        return Err(Error::WrongLayout("donor Hamiltonian must use the bound layout".into()));
    }
    if lz.electron() != ElectronSpace::Absent {
        return Err(Error::WrongLayout(
            "reservoir Hamiltonian must act on nuclear spins only".into(),
        ));
    }
    if ld.num_donors() != lz.num_donors() {
        return Err(Error::DimensionMismatch {
            expected: ld.nuclear_dim(),
            found: lz.nuclear_dim(),
        });
    }
    let m = ld.num_donors();
    let pd = donor_projector(m);
    let ps = reservoir_projector(m);
    let h = pd.dot(h_donor.matrix()).dot(&adjoint(&pd)) + ps.dot(h_zn.matrix()).dot(&adjoint(&ps));
    OperatorMatrix::new(h, BasisLayout::new(m, ElectronSpace::WithReservoir))
}

/// Combined Hamiltonian straight from the system parameters.
pub fn build_combined_hamiltonian(spec: &SpinSystemSpec) -> Result<OperatorMatrix> {
    assemble_combined(&build_donor_hamiltonian(spec)?, &build_nuclear_zeeman(spec)?)
}
