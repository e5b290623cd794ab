use alloc::vec::Vec;
use core::ops::Range;
use nalgebra::{DMatrix, SymmetricEigen};

use super::embed::{embed_entries, hermitian_basis, HermitianEntry};
use crate::error::bail;
use crate::statekit::{enumerate_bipartitions, partial_transpose_index, Bipartition, CMatrix, DensityMatrix, C64};
use crate::Result;

/// Sparse real symmetric matrix stored with both triangles explicit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    /// Merges duplicate positions and drops zeros.
    pub fn from_entries(mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        Self { entries: out }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: (0..dim).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `⟨A, M⟩ = Σ A_rc M_rc`.
    #[inline]
    pub fn dot(&self, m: &DMatrix<f64>) -> f64 {
        let rows = m.nrows();
        let s = m.as_slice();
        self.entries.iter().map(|&(r, c, v)| v * s[r + c * rows]).sum()
    }

    /// `M ← M + α·A`.
    pub fn add_to(&self, alpha: f64, m: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += alpha * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        self.add_to(1.0, &mut m);
        m
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum()
    }
}

/// Partition of the variable vector for the arrowhead Schur solve.
///
/// `linking` variables may share blocks with anything; each `local` group
/// may only share blocks with linking variables and itself.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableGroups {
    pub linking: Range<usize>,
    pub local: Vec<Range<usize>>,
}

/// A block-diagonal real SDP pair
///
/// ```text
/// primal: min Σ_b ⟨C_b, X_b⟩  s.t.  Σ_b ⟨A_ib, X_b⟩ = b_i,  X_b ⪰ 0
/// dual:   max bᵀy            s.t.  Z_b = C_b − Σ_i y_i A_ib ⪰ 0
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub c: Vec<SparseSym>,
    /// Per variable: the blocks it enters and its coefficient matrix there.
    pub a: Vec<Vec<(usize, SparseSym)>>,
    pub b: Vec<f64>,
    pub groups: VariableGroups,
    /// Optional strictly dual-feasible starting point.
    pub y0: Option<Vec<f64>>,
}

impl SdpProblem {
    /// Single linking group, no initial point.
    pub fn new(
        block_dims: Vec<usize>,
        c: Vec<SparseSym>,
        a: Vec<Vec<(usize, SparseSym)>>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let m = a.len();
        let p = Self {
            block_dims,
            c,
            a,
            b,
            groups: VariableGroups {
                linking: 0..m,
                local: Vec::new(),
            },
            y0: None,
        };
        p.check()?;
        Ok(p)
    }

    pub fn variable_count(&self) -> usize {
        self.a.len()
    }

    pub fn block_count(&self) -> usize {
        self.block_dims.len()
    }

    /// Total cone dimension `Σ_b dim_b`.
    pub fn cone_dimension(&self) -> usize {
        self.block_dims.iter().sum()
    }

    pub fn check(&self) -> Result<()> {
        let nb = self.block_dims.len();
        if self.c.len() != nb {
            bail!(Structure, "{} cost blocks for {nb} cone blocks", self.c.len());
        }
        if self.b.len() != self.a.len() {
            bail!(Structure, "{} objective entries for {} variables", self.b.len(), self.a.len());
        }
        let in_bounds = |s: &SparseSym, b: usize| {
            s.entries
                .iter()
                .all(|&(r, c, _)| r < self.block_dims[b] && c < self.block_dims[b])
        };
        let symmetric = |s: &SparseSym| {
            s.entries.iter().all(|&(r, c, v)| {
                s.entries
                    .binary_search_by(|e| (e.0, e.1).cmp(&(c, r)))
                    .map(|k| s.entries[k].2 == v)
                    .unwrap_or(false)
            })
        };
        for (b, c) in self.c.iter().enumerate() {
            if !in_bounds(c, b) || !symmetric(c) {
                bail!(Structure, "cost block {b} is out of bounds or asymmetric");
            }
        }
        for (i, terms) in self.a.iter().enumerate() {
            for (k, (b, s)) in terms.iter().enumerate() {
                if *b >= nb || !in_bounds(s, *b) || !symmetric(s) {
                    bail!(Structure, "coefficient of variable {i} in block {b} is malformed");
                }
                if terms[..k].iter().any(|(other, _)| other == b) {
                    bail!(Structure, "variable {i} lists block {b} twice");
                }
            }
        }
        // groups cover 0..m exactly once and never share a block
        let m = self.a.len();
        let mut owner = alloc::vec![usize::MAX; m];
        let all = core::iter::once(&self.groups.linking).chain(&self.groups.local);
        for (g, range) in all.enumerate() {
            for i in range.clone() {
                if i >= m || owner[i] != usize::MAX {
                    bail!(Structure, "variable groups do not partition the variables");
                }
                owner[i] = g;
            }
        }
        if owner.contains(&usize::MAX) {
            bail!(Structure, "variable groups do not cover every variable");
        }
        let mut block_group = alloc::vec![0usize; nb];
        for (i, terms) in self.a.iter().enumerate() {
            if owner[i] == 0 {
                continue;
            }
            for (b, _) in terms {
                if block_group[*b] != 0 && block_group[*b] != owner[i] {
                    bail!(Structure, "block {b} couples two local variable groups");
                }
                block_group[*b] = owner[i];
            }
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != m {
                bail!(Structure, "initial point has {} entries for {m} variables", y0.len());
            }
        }
        Ok(())
    }
}

/// Eigenvalues of `ρ` at or below this are treated as exact zeros when
/// restricting the `P_α` blocks to the support of `ρ`.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Layout of the witness SDP: variables `[W̃, Q_1, …, Q_K]` and blocks
/// `[P_α, Q_α, S_α]` per bipartition, with
///
/// ```text
/// P̃_α = W̃ − V†Q_α^{T_α}V ⪰ 0,   Q_α ⪰ 0,   S_α = I − Q_α ⪰ 0
/// ```
///
/// and objective `max −Tr(W̃ V†ρV)`. `V` is an orthonormal basis of the
/// support of `ρ` (the identity when `ρ` has full rank). Every primal part
/// `ρ_α` of `ρ = Σ ρ_α` lives on that support, so restricting `P_α` to it
/// gives the reduced primal a strict interior; the full witness is
/// recovered as `W = V W̃ V† + t(I − VV†)` for a large enough `t`.
pub(crate) struct WitnessLayout {
    pub d: usize,
    /// rank of `ρ`
    pub r: usize,
    pub bipartitions: Vec<Bipartition>,
    pub basis: Vec<Vec<HermitianEntry>>,
    pub reduced_basis: Vec<Vec<HermitianEntry>>,
    /// `d × r` orthonormal basis of the support, `None` at full rank
    pub support: Option<CMatrix>,
    /// `d × (d − r)` orthonormal basis of the kernel
    pub kernel: CMatrix,
    /// `V†ρV`
    pub compressed: CMatrix,
}

impl WitnessLayout {
    pub fn w_range(&self) -> Range<usize> {
        0..self.r * self.r
    }

    pub fn q_range(&self, k: usize) -> Range<usize> {
        let start = self.r * self.r + k * self.d * self.d;
        start..start + self.d * self.d
    }

    /// Blocks `(P, Q, S)` of bipartition `k`.
    pub fn blocks(&self, k: usize) -> (usize, usize, usize) {
        (3 * k, 3 * k + 1, 3 * k + 2)
    }

    /// `V†MV`, or `M` itself at full rank.
    pub fn compress(&self, m: &CMatrix) -> CMatrix {
        match &self.support {
            Some(v) => v.adjoint() * m * v,
            None => m.clone(),
        }
    }

    /// `V M V†`, or `M` itself at full rank.
    pub fn lift(&self, m: &CMatrix) -> CMatrix {
        match &self.support {
            Some(v) => v * m * v.adjoint(),
            None => m.clone(),
        }
    }
}

/// Witness SDP for `ρ` in real-embedded block form.
pub fn assemble_problem(rho: &DensityMatrix) -> Result<SdpProblem> {
    Ok(assemble_with_layout(rho)?.0)
}

fn support_split(rho: &CMatrix) -> (Option<CMatrix>, CMatrix) {
    let d = rho.nrows();
    let h = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let (keep, drop): (Vec<usize>, Vec<usize>) = (0..d).partition(|&k| eig.eigenvalues[k] > SUPPORT_TOL);
    let columns = |idx: &[usize]| CMatrix::from_fn(d, idx.len(), |i, j| eig.eigenvectors[(i, idx[j])]);
    let support = if drop.is_empty() { None } else { Some(columns(&keep)) };
    (support, columns(&drop))
}

/// Real embedding of a dense Hermitian matrix with exact symmetry.
fn embed_dense(m: &CMatrix) -> SparseSym {
    let d = m.nrows();
    let mut entries = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in a..d {
            let v = if a == b { C64::new(m[(a, a)].re, 0.0) } else { (m[(a, b)] + m[(b, a)].conj()) * 0.5 };
            entries.push(HermitianEntry { row: a, col: b, value: v });
            if a != b {
                entries.push(HermitianEntry { row: b, col: a, value: v.conj() });
            }
        }
    }
    embed_entries(&entries, d, 1.0)
}

fn sparse_to_dense(entries: &[HermitianEntry], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for e in entries {
        m[(e.row, e.col)] += e.value;
    }
    m
}

pub(crate) fn assemble_with_layout(rho: &DensityMatrix) -> Result<(SdpProblem, WitnessLayout)> {
    let n = rho.qubits();
    if n < 2 {
        bail!(InvalidInput, "genuine multipartite entanglement needs n >= 2");
    }
    let d = rho.dim();
    let (support, kernel) = support_split(rho.matrix());
    let r = support.as_ref().map_or(d, |v| v.ncols());
    let mut layout = WitnessLayout {
        d,
        r,
        bipartitions: enumerate_bipartitions(n)?,
        basis: hermitian_basis(d),
        reduced_basis: hermitian_basis(r),
        support,
        kernel,
        compressed: CMatrix::zeros(0, 0),
    };
    layout.compressed = layout.compress(rho.matrix());
    let k_count = layout.bipartitions.len();
    let nvars = r * r + d * d * k_count;
    let mut a: Vec<Vec<(usize, SparseSym)>> = (0..nvars).map(|_| Vec::new()).collect();

    let negate = |s: &SparseSym| SparseSym {
        entries: s.entries.iter().map(|&(i, j, v)| (i, j, -v)).collect(),
    };
    for (j, entries) in layout.reduced_basis.iter().enumerate() {
        let neg = negate(&embed_entries(entries, r, 1.0));
        for k in 0..k_count {
            a[j].push((layout.blocks(k).0, neg.clone()));
        }
    }
    let embedded: Vec<SparseSym> = layout.basis.iter().map(|e| embed_entries(e, d, 1.0)).collect();
    for (k, bip) in layout.bipartitions.iter().enumerate() {
        let mask = bip.index_mask();
        let (pb, qb, sb) = layout.blocks(k);
        for (j, entries) in layout.basis.iter().enumerate() {
            let transposed: Vec<HermitianEntry> = entries
                .iter()
                .map(|e| {
                    let (row, col) = partial_transpose_index(e.row, e.col, mask);
                    HermitianEntry { row, col, value: e.value }
                })
                .collect();
            let in_p = match layout.support {
                Some(_) => embed_dense(&layout.compress(&sparse_to_dense(&transposed, d))),
                None => embed_entries(&transposed, d, 1.0),
            };
            let q_var = layout.q_range(k).start + j;
            a[q_var].push((pb, in_p));
            a[q_var].push((qb, negate(&embedded[j])));
            a[q_var].push((sb, embedded[j].clone()));
        }
    }

    // b_j = −Tr(B̃_j V†ρV) for W̃ coordinates, 0 for Q
    let mut b = alloc::vec![0.0; nvars];
    for (j, entries) in layout.reduced_basis.iter().enumerate() {
        let tr: f64 = entries
            .iter()
            .map(|e| (e.value * layout.compressed[(e.col, e.row)]).re)
            .sum();
        b[j] = -tr;
    }

    let mut c = Vec::with_capacity(3 * k_count);
    let mut block_dims = Vec::with_capacity(3 * k_count);
    for _ in 0..k_count {
        c.push(SparseSym::default());
        c.push(SparseSym::default());
        c.push(SparseSym::identity(2 * d));
        block_dims.extend([2 * r, 2 * d, 2 * d]);
    }

    // W̃ = I, Q_α = I/2 makes every slack block I/2
    let mut y0 = alloc::vec![0.0; nvars];
    for (j, entries) in layout.reduced_basis.iter().enumerate() {
        if entries.len() == 1 {
            y0[j] = 1.0;
        }
    }
    for (j, entries) in layout.basis.iter().enumerate() {
        if entries.len() == 1 {
            for k in 0..k_count {
                y0[layout.q_range(k).start + j] = 0.5;
            }
        }
    }

    let problem = SdpProblem {
        block_dims,
        c,
        a,
        b,
        groups: VariableGroups {
            linking: layout.w_range(),
            local: (0..k_count).map(|k| layout.q_range(k)).collect(),
        },
        y0: Some(y0),
    };
    Ok((problem, layout))
}
