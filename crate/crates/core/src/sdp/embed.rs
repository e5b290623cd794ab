use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::SparseSym;
use crate::error::bail;
use crate::statekit::{CMatrix, C64};
use crate::Result;

/// `[[Re M, −Im M], [Im M, Re M]]` for Hermitian `M`.
///
/// The real symmetric image has the spectrum of `M` with every eigenvalue
/// doubled, and the map is an algebra homomorphism, so Hermitian PSD
/// constraints become real PSD constraints.
pub fn embed_complex(m: &CMatrix) -> Result<DMatrix<f64>> {
    let (r, c) = m.shape();
    if r != c {
        bail!(Structure, "matrix is {r}x{c}, not square");
    }
    let scale = m.iter().map(|v| crate::math::cabs(*v)).fold(1.0, f64::max);
    let resid = (m - m.adjoint()).iter().map(|v| crate::math::cabs(*v)).fold(0.0, f64::max);
    if resid > 1e-12 * scale {
        bail!(InvalidInput, "matrix is not Hermitian (residual {resid:e})");
    }
    let d = r;
    Ok(DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let v = m[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    }))
}

/// Inverse of [`embed_complex`] (averaging the redundant copies).
pub(crate) fn unembed(m: &DMatrix<f64>) -> CMatrix {
    let d = m.nrows() / 2;
    CMatrix::from_fn(d, d, |i, j| {
        let re = 0.5 * (m[(i, j)] + m[(i + d, j + d)]);
        let im = 0.5 * (m[(i + d, j)] - m[(i, j + d)]);
        C64::new(re, im)
    })
}

/// One nonzero of a sparse complex matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermitianEntry {
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

/// Real coordinates of `d×d` Hermitian matrices: for each `a ≤ b` in row-major
/// order, `E_aa` on the diagonal, else `E_ab + E_ba` followed by
/// `i(E_ab − E_ba)`. There are `d²` elements.
pub fn hermitian_basis(d: usize) -> Vec<Vec<HermitianEntry>> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in a..d {
            if a == b {
                out.push(alloc::vec![HermitianEntry { row: a, col: a, value: one }]);
            } else {
                out.push(alloc::vec![
                    HermitianEntry { row: a, col: b, value: one },
                    HermitianEntry { row: b, col: a, value: one },
                ]);
                out.push(alloc::vec![
                    HermitianEntry { row: a, col: b, value: i },
                    HermitianEntry { row: b, col: a, value: -i },
                ]);
            }
        }
    }
    out
}

/// Real embedding of a sparse `d×d` complex matrix, scaled by `factor`.
pub fn embed_entries(entries: &[HermitianEntry], d: usize, factor: f64) -> SparseSym {
    let mut out = Vec::with_capacity(4 * entries.len());
    for e in entries {
        let (r, c, v) = (e.row, e.col, e.value * factor);
        if v.re != 0.0 {
            out.push((r, c, v.re));
            out.push((r + d, c + d, v.re));
        }
        if v.im != 0.0 {
            out.push((r + d, c, v.im));
            out.push((r, c + d, -v.im));
        }
    }
    SparseSym::from_entries(out)
}
