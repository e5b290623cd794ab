use alloc::format;
use nalgebra::{Complex, DMatrix};

use crate::error::{bail, Error};
use crate::Result;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

/// An `n`-qubit density matrix of dimension `2ⁿ`.
///
/// Construction only checks the shape; physical validity is reported by
/// [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let qubits = qubits_for(&matrix)?;
        Ok(Self { qubits, matrix })
    }

    /// `I / 2ⁿ`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        super::check_dense_qubits(n)?;
        let d = 1usize << n;
        let m = CMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0));
        Ok(Self { qubits: n, matrix: m })
    }

    /// `|i⟩⟨i|` for a computational-basis index.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        super::check_dense_qubits(n)?;
        let d = 1usize << n;
        if index >= d {
            bail!(InvalidInput, "basis index {index} out of range for {n} qubits");
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = C64::new(1.0, 0.0);
        Ok(Self { qubits: n, matrix: m })
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let d = psi.len();
        if d < 2 || !d.is_power_of_two() {
            bail!(Structure, "state vector length {d} is not a power of two >= 2");
        }
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if norm <= 0.0 {
            bail!(InvalidInput, "zero state vector");
        }
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm);
        Self::new(m)
    }

    /// The `n`-qubit GHZ state `(|0…0⟩ + |1…1⟩)/√2`.
    pub fn ghz(n: usize) -> Result<Self> {
        super::check_dense_qubits(n)?;
        let d = 1usize << n;
        let mut psi = alloc::vec![C64::new(0.0, 0.0); d];
        psi[0] = C64::new(1.0, 0.0);
        psi[d - 1] = C64::new(1.0, 0.0);
        Self::from_pure(&psi)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Real eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> alloc::vec::Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn validate(&self) -> ValidityReport {
        report(&self.matrix)
    }
}

fn qubits_for(m: &CMatrix) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c {
        bail!(Structure, "matrix is {r}x{c}, not square");
    }
    if r < 2 || !r.is_power_of_two() {
        bail!(Structure, "dimension {r} is not a power of two >= 2");
    }
    Ok(r.trailing_zeros() as usize)
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> alloc::vec::Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: alloc::vec::Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Residuals of the three density-matrix invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityReport {
    /// `max |ρ_ij − conj(ρ_ji)|`
    pub hermitian_residual: f64,
    /// `|Tr ρ − 1|`
    pub trace_residual: f64,
    pub min_eigenvalue: f64,
}

impl ValidityReport {
    pub fn hermitian(&self) -> bool {
        self.hermitian_residual <= HERMITIAN_TOL
    }

    pub fn unit_trace(&self) -> bool {
        self.trace_residual <= TRACE_TOL
    }

    pub fn positive(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }

    pub fn passes(&self) -> bool {
        self.hermitian() && self.unit_trace() && self.positive()
    }
}

/// Check Hermiticity, unit trace and positivity of a square matrix.
pub fn validate(m: &CMatrix) -> Result<ValidityReport> {
    qubits_for(m)?;
    Ok(report(m))
}

fn report(m: &CMatrix) -> ValidityReport {
    let d = m.nrows();
    let mut herm = 0.0f64;
    for i in 0..d {
        for j in i..d {
            herm = herm.max(crate::math::cabs(m[(i, j)] - m[(j, i)].conj()));
        }
    }
    let trace = m.trace();
    let trace_residual = crate::math::cabs(trace - C64::new(1.0, 0.0));
    let min_eigenvalue = hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
    ValidityReport {
        hermitian_residual: herm,
        trace_residual,
        min_eigenvalue,
    }
}

/// `p·ρ + (1−p)·I/2ⁿ`.
pub fn add_white_noise(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        bail!(InvalidInput, "noise weight p = {p} outside [0, 1]");
    }
    let d = rho.dim();
    let mut m = rho.matrix() * C64::new(p, 0.0);
    let shift = (1.0 - p) / d as f64;
    for i in 0..d {
        m[(i, i)] += C64::new(shift, 0.0);
    }
    Ok(DensityMatrix {
        qubits: rho.qubits,
        matrix: m,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhzSign {
    Plus,
    Minus,
}

impl GhzSign {
    pub fn factor(self) -> f64 {
        match self {
            GhzSign::Plus => 1.0,
            GhzSign::Minus => -1.0,
        }
    }
}

/// `⟨ψ|ρ|ψ⟩` for the GHZ-basis state `|ψ⟩ = (|i⟩ ± |ī⟩)/√2`, `ī` the bitwise
/// complement of `i`.
pub fn ghz_fidelity(rho: &DensityMatrix, index: usize, sign: GhzSign) -> Result<f64> {
    let d = rho.dim();
    if index >= d / 2 {
        return Err(Error::InvalidInput(format!(
            "GHZ basis index {index} out of range (< {})",
            d / 2
        )));
    }
    let j = d - 1 - index;
    let m = rho.matrix();
    let cross = m[(index, j)].re + m[(j, index)].re;
    Ok(0.5 * (m[(index, index)].re + m[(j, j)].re + sign.factor() * cross))
}
