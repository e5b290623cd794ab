use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{CMatrix, DensityMatrix};
use crate::error::bail;
use crate::Result;

/// A split `α|ᾱ` of `n` qubits.
///
/// Canonical bipartitions never contain qubit `n`, so each unordered split has
/// exactly one representative. [`Bipartition::diagnostic`] relaxes this for
/// checks such as the full transpose (`α` = all qubits).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bipartition {
    n: usize,
    /// bit `k-1` set iff qubit `k` ∈ α
    subset: u32,
}

impl Bipartition {
    /// Canonical bipartition from 1-based qubit labels.
    pub fn new(n: usize, alpha: &[usize]) -> Result<Self> {
        let b = Self::diagnostic(n, alpha)?;
        if b.subset & (1 << (n - 1)) != 0 {
            bail!(InvalidInput, "canonical bipartition may not contain qubit {n}");
        }
        Ok(b)
    }

    /// Any nonempty subset of qubits, including the full set.
    pub fn diagnostic(n: usize, alpha: &[usize]) -> Result<Self> {
        if n < 1 || n > 31 {
            bail!(InvalidInput, "qubit count {n} out of range");
        }
        let mut subset = 0u32;
        for &q in alpha {
            if q == 0 || q > n {
                bail!(InvalidInput, "qubit label {q} outside 1..={n}");
            }
            subset |= 1 << (q - 1);
        }
        if subset == 0 {
            bail!(InvalidInput, "empty subsystem");
        }
        Ok(Self { n, subset })
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    /// Qubits in α, ascending.
    pub fn alpha(&self) -> Vec<usize> {
        (1..=self.n).filter(|q| self.subset & (1 << (q - 1)) != 0).collect()
    }

    pub fn complement(&self) -> Vec<usize> {
        (1..=self.n).filter(|q| self.subset & (1 << (q - 1)) == 0).collect()
    }

    pub fn is_canonical(&self) -> bool {
        self.subset & (1 << (self.n - 1)) == 0
    }

    /// Bit mask over computational-basis indices selecting the α factors.
    pub fn index_mask(&self) -> usize {
        let mut mask = 0usize;
        for q in 1..=self.n {
            if self.subset & (1 << (q - 1)) != 0 {
                mask |= 1 << (self.n - q);
            }
        }
        mask
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = |qs: Vec<usize>| -> String {
            qs.iter()
                .map(|q| alloc::format!("{q}"))
                .collect::<Vec<_>>()
                .join(if self.n > 9 { "," } else { "" })
        };
        write!(f, "{}|{}", digits(self.alpha()), digits(self.complement()))
    }
}

/// All `2^(n−1) − 1` canonical bipartitions, ordered by subset bitmask with
/// qubit 1 as the lowest bit (`n = 3`: `1|23, 2|13, 12|3`).
pub fn enumerate_bipartitions(n: usize) -> Result<Vec<Bipartition>> {
    if !(2..=31).contains(&n) {
        bail!(InvalidInput, "bipartitions need 2 <= n <= 31, got {n}");
    }
    Ok((1u32..(1u32 << (n - 1)))
        .map(|subset| Bipartition { n, subset })
        .collect())
}

/// Image of the matrix position `(i, j)` under the partial transpose with
/// index mask `mask`: the α bits of the row and column indices are exchanged.
#[inline]
pub fn partial_transpose_index(i: usize, j: usize, mask: usize) -> (usize, usize) {
    ((i & !mask) | (j & mask), (j & !mask) | (i & mask))
}

/// `ρ^{T_α}`.
pub fn partial_transpose(rho: &DensityMatrix, alpha: &Bipartition) -> Result<CMatrix> {
    if alpha.qubit_count() != rho.qubits() {
        bail!(
            InvalidInput,
            "bipartition over {} qubits applied to a {}-qubit state",
            alpha.qubit_count(),
            rho.qubits()
        );
    }
    Ok(partial_transpose_matrix(rho.matrix(), alpha.index_mask()))
}

pub(crate) fn partial_transpose_matrix(m: &CMatrix, mask: usize) -> CMatrix {
    let d = m.nrows();
    CMatrix::from_fn(d, d, |i, j| {
        let (a, b) = partial_transpose_index(i, j, mask);
        m[(a, b)]
    })
}
