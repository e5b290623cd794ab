use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::embed::{unembed, HermitianEntry};
use super::problem::{assemble_with_layout, WitnessLayout};
use super::solver::{solve_certified, Certifier, SolverOptions};
use crate::error::bail;
use crate::statekit::{hermitian_eigenvalues, partial_transpose_matrix, Bipartition, CMatrix, DensityMatrix, C64};
use crate::{Error, Result};

/// Largest qubit count the dense solver accepts.
pub const MAX_SDP_QUBITS: usize = 4;
pub const DEFAULT_TOL: f64 = 1e-7;
const MIN_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct WitnessBlock {
    pub bipartition: Bipartition,
    pub p: CMatrix,
    pub q: CMatrix,
}

#[derive(Clone, Debug)]
pub struct WitnessSolution {
    pub w: CMatrix,
    pub per_bipartition: Vec<WitnessBlock>,
    /// `−Tr(Wρ)`.
    pub gmn_value: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl WitnessSolution {
    /// Largest `‖W − (P_α + Q_α^{T_α})‖_F` over bipartitions.
    pub fn decomposition_residual(&self) -> f64 {
        self.per_bipartition
            .iter()
            .map(|blk| {
                let qt = partial_transpose_matrix(&blk.q, blk.bipartition.index_mask());
                (&self.w - &blk.p - qt).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `Tr(Wσ)` for any matrix of matching size.
    pub fn expectation(&self, sigma: &CMatrix) -> f64 {
        (&self.w * sigma).trace().re
    }
}

pub fn gmn_sdp(rho: &DensityMatrix, tol: f64) -> Result<WitnessSolution> {
    gmn_sdp_with(
        rho,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn gmn_sdp_with(rho: &DensityMatrix, options: &SolverOptions) -> Result<WitnessSolution> {
    let n = rho.qubits();
    if n > MAX_SDP_QUBITS {
        bail!(Capacity, "SDP solver supports at most {MAX_SDP_QUBITS} qubits, got {n}");
    }
    if !(options.tol >= MIN_TOL) {
        bail!(InvalidInput, "tolerance {} below {MIN_TOL}", options.tol);
    }
    let (problem, layout) = assemble_with_layout(rho)?;
    let cert = DecompositionBound::new(&layout);
    let out = solve_certified(&problem, options, &cert)?;
    if out.dual_objective < 0.0 {
        // W = 0 is exactly feasible and certifies the better lower bound 0
        return Ok(zero_witness(&layout, out.primal_objective, out.iterations));
    }

    let w_reduced = combine(&layout.reduced_basis, &out.y[layout.w_range()], layout.r);
    let qs: Vec<CMatrix> = (0..layout.bipartitions.len())
        .map(|k| combine(&layout.basis, &out.y[layout.q_range(k)], layout.d))
        .collect();
    let w = match &layout.support {
        None => w_reduced,
        Some(v) => {
            let t = kernel_weight(&layout, v, &w_reduced, &qs).ok_or(Error::Convergence {
                iterations: out.iterations,
                gap: out.gap,
                objective: out.dual_objective,
            })?;
            let k = &layout.kernel;
            v * &w_reduced * v.adjoint() + k * k.adjoint() * C64::new(t, 0.0)
        }
    };
    let per_bipartition = layout
        .bipartitions
        .iter()
        .zip(qs)
        .map(|(bip, q)| WitnessBlock {
            bipartition: *bip,
            p: &w - partial_transpose_matrix(&q, bip.index_mask()),
            q,
        })
        .collect();
    let gmn_value = -(&w * rho.matrix()).trace().re;
    Ok(WitnessSolution {
        w,
        per_bipartition,
        gmn_value,
        duality_gap: out.gap,
        iterations: out.iterations,
    })
}

fn zero_witness(layout: &WitnessLayout, upper: f64, iterations: usize) -> WitnessSolution {
    let zero = CMatrix::zeros(layout.d, layout.d);
    WitnessSolution {
        w: zero.clone(),
        per_bipartition: layout
            .bipartitions
            .iter()
            .map(|bip| WitnessBlock {
                bipartition: *bip,
                p: zero.clone(),
                q: zero.clone(),
            })
            .collect(),
        gmn_value: 0.0,
        duality_gap: upper.max(0.0),
        iterations,
    }
}

fn combine(basis: &[Vec<HermitianEntry>], coords: &[f64], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for (c, entries) in coords.iter().zip(basis) {
        for &HermitianEntry { row, col, value } in entries {
            m[(row, col)] += value * *c;
        }
    }
    m
}

/// Smallest `t` (plus a hair) making every `W − Q_α^{T_α}` PSD when
/// `W = V W̃ V† + t K K†`: in the basis `[V, K]` the kernel block must
/// dominate `K†Q^T K + B† P̃⁻¹ B` with `P̃ = W̃ − V†Q^T V`, `B = V†Q^T K`.
fn kernel_weight(layout: &WitnessLayout, v: &CMatrix, w_reduced: &CMatrix, qs: &[CMatrix]) -> Option<f64> {
    let k = &layout.kernel;
    let mut t = 0.0f64;
    for (q, bip) in qs.iter().zip(&layout.bipartitions) {
        let qt = partial_transpose_matrix(q, bip.index_mask());
        let p = w_reduced - v.adjoint() * &qt * v;
        let chol = Cholesky::new((&p + p.adjoint()) * C64::new(0.5, 0.0))?;
        let b = v.adjoint() * &qt * k;
        let need = k.adjoint() * &qt * k + b.adjoint() * chol.solve(&b);
        t = t.max(*hermitian_eigenvalues(&need).last()?);
    }
    Some(t + 1e-9 * (1.0 + t.abs()))
}

/// Upper bound on the optimum from the primal side: a decomposition
/// `ρ = Σ_α ρ_α` into PSD parts has value `Σ_α ‖(ρ_α^{T_α})₋‖₁`.
///
/// The interior-point primal iterate only satisfies `Σ ρ_α ≈ ρ`; the
/// congruence `ρ_α ↦ M ρ_α M†` with `M = ρ^{1/2} T^{-1/2}`, `T = Σ ρ_α`,
/// makes the sum exact while keeping every part PSD.
struct DecompositionBound<'a> {
    layout: &'a WitnessLayout,
    sqrt_compressed: CMatrix,
}

impl<'a> DecompositionBound<'a> {
    fn new(layout: &'a WitnessLayout) -> Self {
        Self {
            layout,
            sqrt_compressed: hermitian_fn(&layout.compressed, |v| crate::math::sqrt(v.max(0.0))),
        }
    }
}

impl Certifier for DecompositionBound<'_> {
    fn upper_bound(&self, x: &[DMatrix<f64>]) -> Option<f64> {
        let parts: Vec<CMatrix> = (0..self.layout.bipartitions.len())
            .map(|k| unembed(&x[self.layout.blocks(k).0]))
            .collect();
        let mut total = CMatrix::zeros(self.layout.r, self.layout.r);
        for part in &parts {
            total += part;
        }
        if hermitian_eigenvalues(&total)[0] <= 0.0 {
            return None;
        }
        let m = &self.sqrt_compressed * hermitian_fn(&total, |v| 1.0 / crate::math::sqrt(v));
        let mut value = 0.0;
        for (part, bip) in parts.iter().zip(&self.layout.bipartitions) {
            let repaired = self.layout.lift(&(&m * part * m.adjoint()));
            let pt = partial_transpose_matrix(&repaired, bip.index_mask());
            value += hermitian_eigenvalues(&pt).iter().map(|v| (-v).max(0.0)).sum::<f64>();
        }
        value.is_finite().then_some(value)
    }
}

fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let v = &eig.eigenvectors;
    let scaled = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f(eig.eigenvalues[j]));
    scaled * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmn::gmn_analytic;
    use crate::statekit::{random_ghz_diagonal, to_density_matrix};
    use crate::Label;

    fn check_feasible(sol: &WitnessSolution) {
        assert!(sol.decomposition_residual() <= 1e-7);
        for blk in &sol.per_bipartition {
            let pe = hermitian_eigenvalues(&blk.p);
            let qe = hermitian_eigenvalues(&blk.q);
            assert!(pe[0] >= -1e-8, "P min eig {}", pe[0]);
            assert!(qe[0] >= -1e-8, "Q min eig {}", qe[0]);
            assert!(*qe.last().unwrap() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn ghz3_reaches_one_half() {
        let sol = gmn_sdp(&DensityMatrix::ghz(3).unwrap(), DEFAULT_TOL).unwrap();
        assert!((sol.gmn_value - 0.5).abs() < 1e-5, "{}", sol.gmn_value);
        check_feasible(&sol);
    }

    #[test]
    fn product_and_mixed_give_zero() {
        for rho in [DensityMatrix::basis_state(3, 0).unwrap(), DensityMatrix::maximally_mixed(3).unwrap()] {
            let sol = gmn_sdp(&rho, DEFAULT_TOL).unwrap();
            assert!(sol.gmn_value.abs() < 1e-6, "{}", sol.gmn_value);
            assert!(sol.gmn_value >= -1e-8);
            check_feasible(&sol);
        }
    }

    #[test]
    fn bell_state_two_qubits() {
        let sol = gmn_sdp(&DensityMatrix::ghz(2).unwrap(), DEFAULT_TOL).unwrap();
        assert!((sol.gmn_value - 0.5).abs() < 1e-5);
    }

    #[test]
    fn agrees_with_analytic_on_ghz_diagonal() {
        for seed in 0..6 {
            let target = if seed % 2 == 0 { Label::Entangled } else { Label::NotDetected };
            let spec = random_ghz_diagonal(3, target, seed).unwrap();
            let rho = to_density_matrix(&spec).unwrap();
            let sol = gmn_sdp(&rho, DEFAULT_TOL).unwrap();
            let oracle = gmn_analytic(&spec).value;
            assert!((sol.gmn_value - oracle).abs() <= 1e-5, "seed {seed}: {} vs {oracle}", sol.gmn_value);
        }
    }

    #[test]
    fn rejects_budget_and_tolerance() {
        let rho = DensityMatrix::maximally_mixed(5).unwrap();
        assert!(matches!(gmn_sdp(&rho, DEFAULT_TOL), Err(Error::Capacity(_))));
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(matches!(gmn_sdp(&rho, 1e-10), Err(Error::InvalidInput(_))));
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        assert!(gmn_sdp(&rho, DEFAULT_TOL).is_err());
    }
}
