//! Infeasible primal-dual path-following for block SDPs.
//!
//! Search directions are HKM (`dX = σμZ⁻¹ − X − X·dZ·Z⁻¹`, symmetrized) with
//! Mehrotra predictor-corrector centering. The Schur complement
//! `M_ij = Tr(A_i X A_j Z⁻¹)` is assembled from the sparse coefficient
//! matrices and factored with an arrowhead elimination over the problem's
//! variable groups: local groups are eliminated first and only the linking
//! block is factored densely.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, Dyn};

use super::problem::{SdpProblem, SparseSym};
use crate::error::Error;
use crate::linalg::{gemm, matmul_tn, View, ViewMut};
use crate::math::sqrt;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Bound on the duality gap, complementarity and scaled infeasibilities.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOutput {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal − dual|` objective difference at termination.
    pub gap: f64,
    /// `Σ_b ⟨X_b, Z_b⟩`.
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

pub fn solve_interior_point(problem: &SdpProblem, tol: f64, max_iter: usize) -> Result<SolverOutput> {
    solve_with(problem, &SolverOptions { tol, max_iter })
}

pub fn solve_with(problem: &SdpProblem, opts: &SolverOptions) -> Result<SolverOutput> {
    problem.check()?;
    Solver::new(problem).run(opts, None)
}

/// Problem-specific primal bound used when the primal cone has no interior
/// and `|pobj − dobj|` stalls.
pub(crate) trait Certifier {
    /// Objective value of an exactly feasible primal point built from `x`.
    fn upper_bound(&self, x: &[DMatrix<f64>]) -> Option<f64>;
}

/// Like [`solve_with`], but terminates on `best_upper − best_lower ≤ tol`,
/// where lower bounds come from dual-feasible iterates and upper bounds from
/// `cert`. The returned `y`/`z` is the best dual-feasible iterate.
pub(crate) fn solve_certified(problem: &SdpProblem, opts: &SolverOptions, cert: &dyn Certifier) -> Result<SolverOutput> {
    problem.check()?;
    Solver::new(problem).run(opts, Some(cert))
}

type Blocks = Vec<DMatrix<f64>>;

struct Solver<'a> {
    p: &'a SdpProblem,
    /// per block: variables entering it with their coefficients
    touch: Vec<Vec<(usize, &'a SparseSym)>>,
    /// variable → (group, index within group); group 0 is the linking group
    loc: Vec<(usize, usize)>,
    group_sizes: Vec<usize>,
}

struct Schur {
    diag: Vec<DMatrix<f64>>,
    /// `coupling[k]` is `n_k × n_0` (unused for k = 0)
    coupling: Vec<DMatrix<f64>>,
}

struct Factor {
    chol: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl<'a> Solver<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let mut touch: Vec<Vec<(usize, &SparseSym)>> = p.block_dims.iter().map(|_| Vec::new()).collect();
        for (i, terms) in p.a.iter().enumerate() {
            for (b, s) in terms {
                touch[*b].push((i, s));
            }
        }
        let mut loc = alloc::vec![(0, 0); p.a.len()];
        let mut group_sizes = Vec::with_capacity(1 + p.groups.local.len());
        let groups = core::iter::once(&p.groups.linking).chain(&p.groups.local);
        for (g, range) in groups.enumerate() {
            for (k, i) in range.clone().enumerate() {
                loc[i] = (g, k);
            }
            group_sizes.push(range.len());
        }
        Self {
            p,
            touch,
            loc,
            group_sizes,
        }
    }

    fn apply_a(&self, m: &[DMatrix<f64>]) -> Vec<f64> {
        self.p
            .a
            .iter()
            .map(|terms| terms.iter().map(|(b, s)| s.dot(&m[*b])).sum())
            .collect()
    }

    fn apply_at(&self, y: &[f64]) -> Blocks {
        let mut out: Blocks = self.p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (i, terms) in self.p.a.iter().enumerate() {
            if y[i] != 0.0 {
                for (b, s) in terms {
                    s.add_to(y[i], &mut out[*b]);
                }
            }
        }
        out
    }

    fn cost(&self) -> Blocks {
        self.p
            .c
            .iter()
            .zip(&self.p.block_dims)
            .map(|(c, &d)| c.to_dense(d))
            .collect()
    }

    fn schur(&self, x: &[DMatrix<f64>], g: &[DMatrix<f64>]) -> Schur {
        let n0 = self.group_sizes[0];
        let mut diag: Vec<DMatrix<f64>> = self.group_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut coupling: Vec<DMatrix<f64>> = self
            .group_sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| if k == 0 { DMatrix::zeros(0, 0) } else { DMatrix::zeros(n, n0) })
            .collect();
        for (b, list) in self.touch.iter().enumerate() {
            let dim = self.p.block_dims[b];
            let xs = x[b].as_slice();
            let gs = g[b].as_slice();
            // Coefficients denser than a diagonal go through F_i = X A_i G;
            // their mutual entries ⟨A_j, F_i⟩ come out of one product Dᵀ F.
            let (dense, sparse): (Vec<_>, Vec<_>) = list.iter().copied().partition(|(_, a)| a.entries.len() > dim);
            if !dense.is_empty() {
                let m = dense.len();
                let mut dm = DMatrix::zeros(dim * dim, m);
                for (k, (_, ai)) in dense.iter().enumerate() {
                    for &(r, c, v) in &ai.entries {
                        dm[(r + c * dim, k)] += v;
                    }
                }
                // dm viewed as dim × (dim·m) is [A_1 … A_m]; H = X [A_1 … A_m]
                let blocks = View {
                    data: dm.as_slice(),
                    rows: dim,
                    cols: dim * m,
                    row_stride: 1,
                    col_stride: dim,
                };
                let mut h = alloc::vec![0.0; dim * dim * m];
                gemm(1.0, View::col_major(&x[b]), blocks, 0.0, ViewMut::col_major_slice(&mut h, dim, dim * m));
                // (X A_k)ᵀ = A_k X, so G·[A_k X] stacks F_kᵀ with F_k = X A_k G
                let mut ht = alloc::vec![0.0; dim * dim * m];
                for k in 0..m {
                    let off = k * dim * dim;
                    for c in 0..dim {
                        for r in 0..dim {
                            ht[off + r + c * dim] = h[off + c + r * dim];
                        }
                    }
                }
                let mut fm = DMatrix::zeros(dim * dim, m);
                let hv = View {
                    data: &ht,
                    rows: dim,
                    cols: dim * m,
                    row_stride: 1,
                    col_stride: dim,
                };
                gemm(1.0, View::col_major(&g[b]), hv, 0.0, ViewMut::col_major_slice(fm.as_mut_slice(), dim, dim * m));
                // Tr(A_i X A_j G) = ⟨A_j, F_i⟩ = ⟨A_j, F_iᵀ⟩ for symmetric A_j
                for (k, &(i, _)) in dense.iter().enumerate() {
                    let fs = fm.column(k);
                    for &(j, aj) in &sparse {
                        let val: f64 = aj.entries.iter().map(|&(r, c, w)| w * fs[r + c * dim]).sum();
                        accumulate(&self.loc, &mut diag, &mut coupling, i, j, val);
                    }
                }
                let prod = matmul_tn(&dm, &fm);
                for (ki, &(i, _)) in dense.iter().enumerate() {
                    for (kj, &(j, _)) in dense.iter().enumerate().skip(ki) {
                        accumulate(&self.loc, &mut diag, &mut coupling, i, j, prod[(kj, ki)]);
                    }
                }
            }
            for (ii, &(i, ai)) in sparse.iter().enumerate() {
                for &(j, aj) in &sparse[ii..] {
                    // Tr(A_i X A_j G) = Σ v·w·X[q,r]·G[s,p] over (p,q,v) ∈ A_i, (r,s,w) ∈ A_j
                    let mut val = 0.0;
                    for &(pp, q, v) in &ai.entries {
                        let mut inner = 0.0;
                        for &(r, s, w) in &aj.entries {
                            inner += w * xs[q + r * dim] * gs[s + pp * dim];
                        }
                        val += v * inner;
                    }
                    accumulate(&self.loc, &mut diag, &mut coupling, i, j, val);
                }
            }
        }
        Schur { diag, coupling }
    }

    fn factor(&self, s: Schur) -> Option<Factor> {
        let groups = self.group_sizes.len();
        let mut chol = alloc::vec![DMatrix::zeros(0, 0); groups];
        let mut v = alloc::vec![DMatrix::zeros(0, 0); groups];
        let Schur { mut diag, coupling } = s;
        let mut linking = core::mem::replace(&mut diag[0], DMatrix::zeros(0, 0));
        for (k, (dk, mut ck)) in diag.into_iter().zip(coupling).enumerate().skip(1) {
            let l = robust_cholesky(dk)?;
            if !l.solve_lower_triangular_mut(&mut ck) {
                return None;
            }
            if linking.nrows() > 0 {
                linking -= matmul_tn(&ck, &ck);
            }
            chol[k] = l;
            v[k] = ck;
        }
        chol[0] = robust_cholesky(linking)?;
        Some(Factor { chol, v })
    }

    fn solve(&self, f: &Factor, rhs: &[f64]) -> Vec<f64> {
        let groups = self.group_sizes.len();
        let mut parts: Vec<nalgebra::DVector<f64>> =
            self.group_sizes.iter().map(|&n| nalgebra::DVector::zeros(n)).collect();
        for (i, &(g, k)) in self.loc.iter().enumerate() {
            parts[g][k] = rhs[i];
        }
        for k in 1..groups {
            f.chol[k].solve_lower_triangular_mut(&mut parts[k]);
            if parts[0].len() > 0 {
                let t = f.v[k].tr_mul(&parts[k]);
                parts[0] -= t;
            }
        }
        f.chol[0].solve_lower_triangular_mut(&mut parts[0]);
        f.chol[0].tr_solve_lower_triangular_mut(&mut parts[0]);
        for k in 1..groups {
            if parts[0].len() > 0 {
                let t = &f.v[k] * &parts[0];
                parts[k] -= t;
            }
            f.chol[k].tr_solve_lower_triangular_mut(&mut parts[k]);
        }
        self.loc.iter().map(|&(g, k)| parts[g][k]).collect()
    }

    fn run(&self, opts: &SolverOptions, cert: Option<&dyn Certifier>) -> Result<SolverOutput> {
        let p = self.p;
        let nblocks = p.block_dims.len();
        let cone = p.cone_dimension().max(1) as f64;
        let cost = self.cost();
        let b_norm = sqrt(p.b.iter().map(|v| v * v).sum());
        let c_norm = sqrt(p.c.iter().map(|c| c.frobenius_sq()).sum());

        // starting point
        let max_a = p
            .a
            .iter()
            .map(|t| sqrt(t.iter().map(|(_, s)| s.frobenius_sq()).sum()))
            .fold(0.0, f64::max);
        let mut y = alloc::vec![0.0; p.a.len()];
        let mut z: Blocks = Vec::new();
        if let Some(y0) = &p.y0 {
            let at = self.apply_at(y0);
            let cand: Blocks = cost.iter().zip(&at).map(|(c, a)| c - a).collect();
            if cand.iter().all(|m| Cholesky::new(m.clone()).is_some()) {
                y.clone_from(y0);
                z = cand;
            }
        }
        if z.is_empty() {
            let eta = 1.0f64.max(c_norm).max(max_a);
            z = p.block_dims.iter().map(|&d| DMatrix::identity(d, d) * eta).collect();
        }
        let xi = p
            .a
            .iter()
            .zip(&p.b)
            .map(|(t, bi)| {
                let na = sqrt(t.iter().map(|(_, s)| s.frobenius_sq()).sum::<f64>());
                (1.0 + bi.abs()) / (1.0 + na)
            })
            .fold(1.0, f64::max);
        let mut x: Blocks = p.block_dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect();

        let mut best = (f64::INFINITY, 0.0);
        let mut lower = (f64::NEG_INFINITY, Vec::new(), Vec::new());
        let mut upper = f64::INFINITY;
        let mut iterations = 0;
        loop {
            let ax = self.apply_a(&x);
            let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let aty = self.apply_at(&y);
            let rd: Blocks = (0..nblocks).map(|k| &cost[k] - &z[k] - &aty[k]).collect();
            let pobj: f64 = p.c.iter().zip(&x).map(|(c, xb)| c.dot(xb)).sum();
            let dobj: f64 = p.b.iter().zip(&y).map(|(b, v)| b * v).sum();
            let xz: f64 = x.iter().zip(&z).map(|(a, b)| a.dot(b)).sum();
            let pinf = sqrt(rp.iter().map(|v| v * v).sum()) / (1.0 + b_norm);
            let dinf = sqrt(rd.iter().map(|m| m.norm_squared()).sum()) / (1.0 + c_norm);
            let gap = (pobj - dobj).abs();
            let merit = gap.max(xz).max(pinf).max(dinf);
            if !merit.is_finite() {
                return Err(self.fail(iterations, best));
            }
            if let Some(cert) = cert {
                if dinf <= opts.tol && dobj > lower.0 {
                    lower = (dobj, y.clone(), z.clone());
                }
                if let Some(u) = cert.upper_bound(&x) {
                    upper = upper.min(u);
                }
                let certified = upper - lower.0;
                best = (certified, lower.0);
                if certified <= opts.tol {
                    let (dual_objective, y, z) = lower;
                    return Ok(SolverOutput {
                        x,
                        y,
                        z,
                        primal_objective: upper,
                        dual_objective,
                        gap: certified,
                        complementarity: xz,
                        primal_infeasibility: pinf,
                        dual_infeasibility: dinf,
                        iterations,
                    });
                }
            } else {
                if merit < best.0 {
                    best = (merit, dobj);
                }
                if gap <= opts.tol && xz <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
                    return Ok(SolverOutput {
                        x,
                        y,
                        z,
                        primal_objective: pobj,
                        dual_objective: dobj,
                        gap,
                        complementarity: xz,
                        primal_infeasibility: pinf,
                        dual_infeasibility: dinf,
                        iterations,
                    });
                }
            }
            if iterations >= opts.max_iter {
                return Err(self.fail(iterations, best));
            }
            iterations += 1;

            let mu = xz / cone;
            let mut g: Blocks = Vec::with_capacity(nblocks);
            for zb in &z {
                match Cholesky::new(zb.clone()) {
                    Some(c) => g.push(symmetrize(c.inverse())),
                    None => return Err(self.fail(iterations, best)),
                }
            }
            let factor = match self.factor(self.schur(&x, &g)) {
                Some(f) => f,
                None => return Err(self.fail(iterations, best)),
            };

            // predictor
            let xrdg: Blocks = (0..nblocks).map(|k| &x[k] * &rd[k] * &g[k]).collect();
            let a_xrdg = self.apply_a(&xrdg);
            let rhs: Vec<f64> = p.b.iter().zip(&a_xrdg).map(|(b, t)| b + t).collect();
            let dy_a = self.solve(&factor, &rhs);
            let dz_a = self.dual_step(&rd, &dy_a);
            let dx_a: Blocks = (0..nblocks)
                .map(|k| symmetrize(-&x[k] - &x[k] * &dz_a[k] * &g[k]))
                .collect();
            let ap_a = max_step(&x, &dx_a).min(1.0);
            let ad_a = max_step(&z, &dz_a).min(1.0);
            let mu_aff: f64 = (0..nblocks)
                .map(|k| (&x[k] + &dx_a[k] * ap_a).dot(&(&z[k] + &dz_a[k] * ad_a)))
                .sum::<f64>()
                / cone;
            let ratio = (mu_aff / mu).clamp(0.0, 1.0);
            let sigma = ratio * ratio * ratio;

            // corrector
            let cross: Blocks = (0..nblocks).map(|k| &dx_a[k] * &dz_a[k] * &g[k]).collect();
            let a_g = self.apply_a(&g);
            let a_cross = self.apply_a(&cross);
            let rhs: Vec<f64> = (0..p.b.len())
                .map(|i| p.b[i] + a_xrdg[i] - sigma * mu * a_g[i] + a_cross[i])
                .collect();
            let dy = self.solve(&factor, &rhs);
            let dz = self.dual_step(&rd, &dy);
            let dx: Blocks = (0..nblocks)
                .map(|k| {
                    symmetrize(
                        &g[k] * (sigma * mu) - &x[k] - (&x[k] * &dz[k] + &dx_a[k] * &dz_a[k]) * &g[k],
                    )
                })
                .collect();
            let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
            let ap = (gamma * max_step(&x, &dx)).min(1.0);
            let ad = (gamma * max_step(&z, &dz)).min(1.0);
            for k in 0..nblocks {
                x[k] += &dx[k] * ap;
                z[k] += &dz[k] * ad;
                x[k] = symmetrize(core::mem::replace(&mut x[k], DMatrix::zeros(0, 0)));
                z[k] = symmetrize(core::mem::replace(&mut z[k], DMatrix::zeros(0, 0)));
            }
            for (yi, di) in y.iter_mut().zip(&dy) {
                *yi += ad * di;
            }
        }
    }

    fn dual_step(&self, rd: &[DMatrix<f64>], dy: &[f64]) -> Blocks {
        let atdy = self.apply_at(dy);
        rd.iter().zip(atdy).map(|(r, a)| r - a).collect()
    }

    fn fail(&self, iterations: usize, best: (f64, f64)) -> Error {
        Error::Convergence {
            iterations,
            gap: best.0,
            objective: best.1,
        }
    }
}

fn accumulate(
    loc: &[(usize, usize)],
    diag: &mut [DMatrix<f64>],
    coupling: &mut [DMatrix<f64>],
    i: usize,
    j: usize,
    val: f64,
) {
    let (gi, li) = loc[i];
    let (gj, lj) = loc[j];
    if gi == gj {
        diag[gi][(li, lj)] += val;
        if i != j {
            diag[gi][(lj, li)] += val;
        }
    } else if gi == 0 {
        coupling[gj][(lj, li)] += val;
    } else {
        coupling[gi][(li, lj)] += val;
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Cholesky factor `L`, retrying with growing diagonal shifts when the
/// Schur complement is numerically singular.
fn robust_cholesky(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(m);
    }
    if let Some(c) = Cholesky::<f64, Dyn>::new(m.clone()) {
        return Some(c.unpack());
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut shift = 1e-14;
    while shift <= 1e-6 {
        let mut t = m.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += shift * scale;
        }
        if let Some(c) = Cholesky::<f64, Dyn>::new(t) {
            return Some(c.unpack());
        }
        shift *= 100.0;
    }
    None
}

/// Largest `α` with `M + α·dM ⪰ 0` over all blocks (∞ if unbounded).
fn max_step(m: &[DMatrix<f64>], dm: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (mb, db) in m.iter().zip(dm) {
        let l = match Cholesky::new(mb.clone()) {
            Some(c) => c.unpack(),
            None => return 0.0,
        };
        let mut t = db.clone();
        l.solve_lower_triangular_mut(&mut t);
        let mut t = t.transpose();
        l.solve_lower_triangular_mut(&mut t);
        let lam = symmetrize(t)
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v));
        if lam < 0.0 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    alpha
}
