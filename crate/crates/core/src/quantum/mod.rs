//! Few-qubit quantum states and their tetrahedral-POVM encoding.
//!
//! Density matrices live in the computational basis with qubit 1 as the most
//! significant tensor factor. Multi-qubit POVM outcomes `(a_1, ..., a_N)` are
//! flattened the same way, `a_1` being the most significant base-4 digit, so
//! the flat outcome index coincides with the visible-unit index produced by
//! [`crate::topology::encode_outcomes`].

mod metrics;
mod povm;

pub use metrics::{bell_witness, chsh_operator, dkl, fidelity};
pub use povm::{
    born_distribution, expectation, make_tetrahedral_povm, observable_coefficients,
    reconstruct_density, TetrahedralPovm,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const HERMITIAN_TOL: f64 = 1e-12;
pub(crate) const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues down to this value are treated as round-off and clamped.
pub const PSD_TOL: f64 = 1e-10;
pub(crate) const NORM_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub(crate) fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and eigenvectors (as columns) of a Hermitian matrix.
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub(crate) fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for (j, value) in values.iter().enumerate() {
        let s = f(*value);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vectors.adjoint()
}

/// Square root of a positive semidefinite Hermitian matrix.
///
/// Eigenvalues in `[-PSD_TOL, 0)` are clamped; anything more negative is an error.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let (values, _) = hermitian_eigen(m);
    if values[0] < -PSD_TOL {
        return Err(Error::NotPositive(values[0]));
    }
    Ok(hermitian_map(m, |x| x.max(0.0).sqrt()))
}

pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Hermitian, unit-trace state on `n_qubits` qubits.
///
/// States built from closed forms are validated to be positive semidefinite.
/// States reconstructed from sampled distributions may carry small negative
/// eigenvalues; they are kept and flagged via [`DensityMatrix::is_physical`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: CMatrix,
    min_eigenvalue: f64,
}

impl DensityMatrix {
    /// Validated physical state: Hermitian, unit trace and PSD.
    pub fn new(n_qubits: usize, entries: CMatrix) -> Result<Self> {
        let state = Self::unchecked_positivity(n_qubits, entries)?;
        if state.min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositive(state.min_eigenvalue));
        }
        Ok(state)
    }

    /// Hermitian and unit trace, positivity only recorded.
    pub fn unchecked_positivity(n_qubits: usize, entries: CMatrix) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Domain("a state needs at least one qubit".into()));
        }
        let dim = 1usize << n_qubits;
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: entries.nrows().max(entries.ncols()),
            });
        }
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::BadTrace(trace.re));
        }
        let entries = hermitize(&entries);
        let (values, _) = hermitian_eigen(&entries);
        Ok(Self {
            n_qubits,
            entries,
            min_eigenvalue: values[0],
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// False for reconstructions whose spectrum dips below `-PSD_TOL`.
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.entries).0
    }

    /// Maximally mixed state `1/2^N`.
    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Domain("a state needs at least one qubit".into()));
        }
        let dim = 1usize << n_qubits;
        Self::new(n_qubits, CMatrix::identity(dim, dim).scale(1.0 / dim as f64))
    }

    /// `r * self + (1 - r) * other`.
    pub fn mix(&self, other: &DensityMatrix, r: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Self::unchecked_positivity(
            self.n_qubits,
            self.entries.scale(r) + other.entries.scale(1.0 - r),
        )
    }

    /// `Tr[rho O]` computed directly from the matrix.
    pub fn trace_with(&self, obs: &Observable) -> Result<f64> {
        if obs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: obs.dim(),
            });
        }
        Ok((&self.entries * obs.matrix()).trace().re)
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixRepr {
    n_qubits: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = self.dim();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                re.push(self.entries[(i, j)].re);
                im.push(self.entries[(i, j)].im);
            }
        }
        DensityMatrixRepr {
            n_qubits: self.n_qubits,
            re,
            im,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DensityMatrixRepr::deserialize(deserializer)?;
        if repr.n_qubits == 0 || repr.n_qubits > 12 {
            return Err(D::Error::custom("n_qubits must be in 1..=12"));
        }
        let dim = 1usize << repr.n_qubits;
        if repr.re.len() != dim * dim || repr.im.len() != dim * dim {
            return Err(D::Error::custom(format!(
                "expected {} entries in re and im",
                dim * dim
            )));
        }
        let entries = CMatrix::from_fn(dim, dim, |i, j| c(repr.re[i * dim + j], repr.im[i * dim + j]));
        DensityMatrix::unchecked_positivity(repr.n_qubits, entries).map_err(D::Error::custom)
    }
}

/// Bell state `(|00> + |11>)/sqrt(2)` as a density matrix.
pub fn bell_state() -> DensityMatrix {
    ghz_state(2).expect("two-qubit GHZ state is valid")
}

/// Werner state `r * rho_B + (1 - r) * 1/4`.
pub fn werner_state(r: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("Werner parameter r = {r} outside [0, 1]")));
    }
    let entries = CMatrix::from_fn(4, 4, |i, j| match (i, j) {
        (0, 0) | (3, 3) => c((1.0 + r) / 4.0, 0.0),
        (1, 1) | (2, 2) => c((1.0 - r) / 4.0, 0.0),
        (0, 3) | (3, 0) => c(r / 2.0, 0.0),
        _ => c(0.0, 0.0),
    });
    DensityMatrix::new(2, entries)
}

/// GHZ state `(|0...0> + |1...1>)/sqrt(2)` on `n >= 2` qubits.
pub fn ghz_state(n: usize) -> Result<DensityMatrix> {
    if !(2..=12).contains(&n) {
        return Err(Error::Domain(format!("GHZ state needs 2..=12 qubits, got {n}")));
    }
    let dim = 1usize << n;
    let last = dim - 1;
    let entries = CMatrix::from_fn(dim, dim, |i, j| {
        if (i == 0 || i == last) && (j == 0 || j == last) {
            c(0.5, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    DensityMatrix::new(n, entries)
}

/// Hermitian operator on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    n_qubits: usize,
    entries: CMatrix,
}

impl Observable {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let dim = entries.nrows();
        if dim != entries.ncols() || dim < 2 || !dim.is_power_of_two() {
            return Err(Error::Domain(format!(
                "observable must be a square 2^N matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            entries,
        })
    }

    pub fn identity() -> Self {
        Self::from_trusted(CMatrix::identity(2, 2))
    }

    pub fn pauli_x() -> Self {
        Self::from_trusted(CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
    }

    pub fn pauli_y() -> Self {
        Self::from_trusted(CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)],
        ))
    }

    pub fn pauli_z() -> Self {
        Self::from_trusted(CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        ))
    }

    /// Spin measurement along angle `theta` in the x-z plane: `cos(theta) Z + sin(theta) X`.
    pub fn spin_xz(theta: f64) -> Self {
        Self::pauli_z()
            .scaled(theta.cos())
            .add(&Self::pauli_x().scaled(theta.sin()))
            .expect("same dimension")
    }

    fn from_trusted(entries: CMatrix) -> Self {
        let n_qubits = entries.nrows().trailing_zeros() as usize;
        Self { n_qubits, entries }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Observable) -> Self {
        Self::from_trusted(kron(&self.entries, &other.entries))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_trusted(self.entries.scale(factor))
    }

    pub fn add(&self, other: &Observable) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self::from_trusted(&self.entries + &other.entries))
    }
}

/// Probabilities over the `4^N` tetrahedral-POVM outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    n_qubits: usize,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    /// Entries above `-1e-12` are accepted, with tiny negatives snapped to zero.
    pub fn new(n_qubits: usize, mut probs: Vec<f64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::Domain("a distribution needs at least one qubit".into()));
        }
        let len = 1usize << (2 * n_qubits);
        if probs.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: probs.len(),
            });
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -1e-12 {
                return Err(Error::Domain(format!("invalid probability {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { n_qubits, probs })
    }

    /// Builds a distribution from a visible-unit marginal over `2N` binary units.
    pub fn from_visible(probs: Vec<f64>) -> Result<Self> {
        let len = probs.len();
        if len < 4 || !len.is_power_of_two() || len.trailing_zeros() % 2 != 0 {
            return Err(Error::Domain(format!(
                "visible marginal of length {len} does not cover whole qubits"
            )));
        }
        Self::new(len.trailing_zeros() as usize / 2, probs)
    }

    pub fn uniform(n_qubits: usize) -> Result<Self> {
        let len = 1usize << (2 * n_qubits);
        Self::new(n_qubits, vec![1.0 / len as f64; len])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Probability of an outcome tuple `(a_1, ..., a_N)`.
    pub fn get(&self, outcomes: &[u8]) -> Option<f64> {
        if outcomes.len() != self.n_qubits || outcomes.iter().any(|&a| a > 3) {
            return None;
        }
        let index = outcomes.iter().fold(0usize, |acc, &a| acc * 4 + a as usize);
        Some(self.probs[index])
    }
}

impl<'de> Deserialize<'de> for OutcomeDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Repr {
            n_qubits: usize,
            probs: Vec<f64>,
        }
        let repr = Repr::deserialize(deserializer)?;
        if repr.n_qubits == 0 || repr.n_qubits > 12 {
            return Err(D::Error::custom("n_qubits must be in 1..=12"));
        }
        OutcomeDistribution::new(repr.n_qubits, repr.probs).map_err(D::Error::custom)
    }
}
