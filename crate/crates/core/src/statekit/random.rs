use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{check_dense_qubits, CMatrix, DensityMatrix, C64};
use crate::error::bail;
use crate::rng::{seeded, Rng};
use crate::Result;

/// Rank-`r` Hilbert–Schmidt-induced random state: `G G† / Tr(G G†)` with `G`
/// a `2ⁿ×r` matrix of independent standard complex Gaussians.
pub fn random_density_matrix(n: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    check_dense_qubits(n)?;
    let d = 1usize << n;
    if rank == 0 || rank > d {
        bail!(InvalidInput, "rank {rank} outside 1..={d}");
    }
    let mut rng = seeded(seed);
    Ok(ginibre_state(d, rank, &mut rng))
}

pub(crate) fn ginibre_state(d: usize, rank: usize, rng: &mut Rng) -> DensityMatrix {
    let g = CMatrix::from_fn(d, rank, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let mut m = &g * g.adjoint();
    // exact Hermiticity regardless of summation order
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    m = h;
    let tr = m.trace().re;
    m /= C64::new(tr, 0.0);
    DensityMatrix::new(m).expect("power-of-two dimension")
}

/// Rank drawn uniformly from `1..=2ⁿ`.
pub fn random_rank(n: usize, seed: u64) -> usize {
    let mut rng = seeded(seed);
    rng.random_range(1..=(1usize << n))
}
