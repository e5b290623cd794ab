//! Quantum-state representation and generation.
//!
//! Qubits are numbered `1..=n`; qubit 1 is the most significant bit of a
//! computational-basis index (standard Kronecker ordering).

mod bipartition;
mod density;
mod ghz;
mod random;

pub use bipartition::{enumerate_bipartitions, partial_transpose, partial_transpose_index, Bipartition};
pub use density::{
    add_white_noise, ghz_fidelity, validate, CMatrix, DensityMatrix, GhzSign, ValidityReport, C64,
    HERMITIAN_TOL, PSD_TOL, TRACE_TOL,
};
pub use ghz::{random_ghz_diagonal, random_noisy_ghz_diagonal, to_density_matrix, GhzDiagonalSpec};
pub use random::{random_density_matrix, random_rank};

/// Largest qubit count for which dense `2ⁿ×2ⁿ` matrices are built.
pub const MAX_DENSE_QUBITS: usize = 8;

pub(crate) fn check_dense_qubits(n: usize) -> crate::Result<()> {
    if n == 0 || n > MAX_DENSE_QUBITS {
        crate::error::bail!(
            Capacity,
            "dense matrices need 1 <= n <= {MAX_DENSE_QUBITS}, got n = {n}"
        );
    }
    Ok(())
}

pub(crate) use bipartition::partial_transpose_matrix;
pub(crate) use density::hermitian_eigenvalues;
