use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::Exp1;

use super::{check_dense_qubits, CMatrix, DensityMatrix, C64};
use crate::error::bail;
use crate::gmn::{Label, LABEL_THRESHOLD};
use crate::rng::{seeded, Rng};
use crate::Result;

/// Normalization and positivity tolerance for spec parameters.
const SPEC_TOL: f64 = 1e-12;

/// Fidelity headroom above 1/2 for generated entangled states, keeping them
/// clear of the labeling threshold.
const ENTANGLED_MARGIN: f64 = 2.0 * LABEL_THRESHOLD;

/// Parameters `(λ_i, μ_i)`, `i < 2^(n−1)`, of an `n`-qubit GHZ-diagonal state.
///
/// In the computational basis the state has `λ_i` at diagonal positions `i`
/// and `2ⁿ−1−i`, `μ_i` at `(i, 2ⁿ−1−i)` and `conj(μ_i)` at the mirrored
/// position. `μ` is real by default; complex anti-diagonals are an extension.
#[derive(Clone, Debug, PartialEq)]
pub struct GhzDiagonalSpec {
    n: usize,
    lambdas: Vec<f64>,
    mus: Vec<C64>,
}

impl GhzDiagonalSpec {
    pub fn new(n: usize, lambdas: Vec<f64>, mus: Vec<f64>) -> Result<Self> {
        Self::new_complex(n, lambdas, mus.into_iter().map(|m| C64::new(m, 0.0)).collect())
    }

    pub fn new_complex(n: usize, lambdas: Vec<f64>, mus: Vec<C64>) -> Result<Self> {
        if !(2..=30).contains(&n) {
            bail!(InvalidInput, "GHZ-diagonal states need 2 <= n <= 30, got {n}");
        }
        let half = 1usize << (n - 1);
        if lambdas.len() != half || mus.len() != half {
            bail!(
                Structure,
                "expected {half} lambdas and mus, got {} and {}",
                lambdas.len(),
                mus.len()
            );
        }
        let total: f64 = 2.0 * lambdas.iter().sum::<f64>();
        if (total - 1.0).abs() > SPEC_TOL {
            bail!(InvalidInput, "2·Σλ = {total}, expected 1");
        }
        for (i, (l, m)) in lambdas.iter().zip(&mus).enumerate() {
            if !l.is_finite() || !m.re.is_finite() || !m.im.is_finite() {
                bail!(InvalidInput, "non-finite parameter at index {i}");
            }
            if *l < crate::math::cabs(*m) - SPEC_TOL {
                bail!(InvalidInput, "λ_{i} = {l} < |μ_{i}| = {}", crate::math::cabs(*m));
            }
        }
        Ok(Self { n, lambdas, mus })
    }

    /// The pure GHZ state `λ_0 = μ_0 = 1/2`.
    pub fn ghz(n: usize) -> Result<Self> {
        let half = 1usize << (n.clamp(2, 30) - 1);
        let mut l = alloc::vec![0.0; half];
        let mut m = alloc::vec![0.0; half];
        l[0] = 0.5;
        m[0] = 0.5;
        Self::new(n, l, m)
    }

    /// `I/2ⁿ`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        let half = 1usize << (n.clamp(2, 30) - 1);
        Self::new(n, alloc::vec![0.5 / half as f64; half], alloc::vec![0.0; half])
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn mus(&self) -> &[C64] {
        &self.mus
    }

    /// True when any `μ_i` has a nonzero imaginary part.
    pub fn is_complex(&self) -> bool {
        self.mus.iter().any(|m| m.im != 0.0)
    }

    /// GHZ-basis eigenvalues `(λ_0+μ_0, λ_0−μ_0, λ_1+μ_1, …)`; for complex `μ`
    /// the pair is `λ_i ± |μ_i|`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let complex = self.is_complex();
        let mut out = Vec::with_capacity(2 * self.lambdas.len());
        for (l, m) in self.lambdas.iter().zip(&self.mus) {
            let a = if complex { crate::math::cabs(*m) } else { m.re };
            out.push(l + a);
            out.push(l - a);
        }
        out
    }

    /// White noise in parameter space: `λ ← pλ + (1−p)/2ⁿ`, `μ ← pμ`.
    pub fn with_noise(&self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            bail!(InvalidInput, "noise weight p = {p} outside [0, 1]");
        }
        let shift = (1.0 - p) / (1u64 << self.n) as f64;
        Ok(Self {
            n: self.n,
            lambdas: self.lambdas.iter().map(|l| p * l + shift).collect(),
            mus: self.mus.iter().map(|m| m * p).collect(),
        })
    }

    /// Little-endian `(n: u32, λ: f64[h], μ: f64[h])`; complex specs append
    /// `Im μ: f64[h]`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let h = self.lambdas.len();
        let mut out = Vec::with_capacity(4 + 16 * h);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for l in &self.lambdas {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for m in &self.mus {
            out.extend_from_slice(&m.re.to_le_bytes());
        }
        if self.is_complex() {
            for m in &self.mus {
                out.extend_from_slice(&m.im.to_le_bytes());
            }
        }
        out
    }
}

/// Computational-basis matrix of a GHZ-diagonal spec.
pub fn to_density_matrix(spec: &GhzDiagonalSpec) -> Result<DensityMatrix> {
    check_dense_qubits(spec.n)?;
    let d = 1usize << spec.n;
    let mut m = CMatrix::zeros(d, d);
    for (i, (l, mu)) in spec.lambdas.iter().zip(&spec.mus).enumerate() {
        let j = d - 1 - i;
        m[(i, i)] = C64::new(*l, 0.0);
        m[(j, j)] = C64::new(*l, 0.0);
        m[(i, j)] = *mu;
        m[(j, i)] = mu.conj();
    }
    DensityMatrix::new(m)
}

/// Random GHZ-diagonal spec whose analytic label equals `target`.
///
/// `λ` is a symmetric Dirichlet sample scaled by 1/2 and `μ_i` uniform in
/// `[−λ_i, λ_i]`. For an entangled target one random index gets
/// `|μ_i| ∈ (w_i, λ_i]`, first boosting `λ_i` above 1/4 when needed; for the
/// other label every `|μ_i|` is clamped to `w_i = 1/2 − λ_i`.
pub fn random_ghz_diagonal(n: usize, target: Label, seed: u64) -> Result<GhzDiagonalSpec> {
    random_noisy_ghz_diagonal(n, target, 1.0, seed)
}

/// Like [`random_ghz_diagonal`] but returns `spec.with_noise(p)` and the
/// label is that of the noisy state. Entangled targets are impossible when
/// even a pure GHZ state is not detected after mixing; that case is an error.
pub fn random_noisy_ghz_diagonal(
    n: usize,
    target: Label,
    p: f64,
    seed: u64,
) -> Result<GhzDiagonalSpec> {
    if !(2..=30).contains(&n) {
        bail!(InvalidInput, "GHZ-diagonal states need 2 <= n <= 30, got {n}");
    }
    if !(0.0..=1.0).contains(&p) {
        bail!(InvalidInput, "noise weight p = {p} outside [0, 1]");
    }
    let white = 1.0 / (1u64 << n) as f64;
    let mut rng = seeded(seed);
    let (mut lambdas, mut mus) = base_parameters(n, &mut rng);
    match target {
        Label::Entangled => {
            // noisy fidelity p·F + (1−p)/2ⁿ must exceed 1/2 + margin
            let floor = if p > 0.0 {
                (0.5 + ENTANGLED_MARGIN - (1.0 - p) * white) / p
            } else {
                f64::INFINITY
            };
            if floor >= 1.0 {
                bail!(
                    InvalidInput,
                    "no GHZ-diagonal state of {n} qubits is entangled at p = {p}"
                );
            }
            let i = rng.random_range(0..lambdas.len());
            if 2.0 * lambdas[i] <= floor {
                let u = 1.0 - rng.random::<f64>();
                let boosted = 0.5 * floor + u * (0.5 - 0.5 * floor);
                let rest = 0.5 - lambdas[i];
                let scale = if rest > 0.0 { (0.5 - boosted) / rest } else { 0.0 };
                for (k, (l, m)) in lambdas.iter_mut().zip(mus.iter_mut()).enumerate() {
                    if k != i {
                        *l *= scale;
                        *m *= scale;
                    }
                }
                lambdas[i] = boosted;
            }
            renormalize(&mut lambdas, &mut mus);
            let low = floor - lambdas[i];
            let u = 1.0 - rng.random::<f64>();
            let magnitude = (low + u * (lambdas[i] - low)).min(lambdas[i]);
            mus[i] = if rng.random::<bool>() { magnitude } else { -magnitude };
        }
        Label::NotDetected => {
            let ceiling = if p > 0.0 {
                (0.5 - (1.0 - p) * white) / p
            } else {
                f64::INFINITY
            };
            for (l, m) in lambdas.iter().zip(mus.iter_mut()) {
                let cap = l.min((ceiling - l).max(0.0));
                *m = m.clamp(-cap, cap);
            }
        }
    }
    let spec = GhzDiagonalSpec::new(n, lambdas, mus)?;
    if p < 1.0 {
        spec.with_noise(p)
    } else {
        Ok(spec)
    }
}

fn base_parameters(n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let half = 1usize << (n - 1);
    let mut lambdas: Vec<f64> = (0..half).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = lambdas.iter().sum();
    for l in &mut lambdas {
        *l *= 0.5 / total;
    }
    let mus = lambdas
        .iter()
        .map(|l| l * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    (lambdas, mus)
}

fn renormalize(lambdas: &mut [f64], mus: &mut [f64]) {
    let total: f64 = 2.0 * lambdas.iter().sum::<f64>();
    let s = 1.0 / total;
    for (l, m) in lambdas.iter_mut().zip(mus.iter_mut()) {
        *l *= s;
        *m *= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmn::gmn_analytic;
    use crate::statekit::{ghz_fidelity, GhzSign};

    #[test]
    fn pure_ghz_projector() {
        let spec = GhzDiagonalSpec::ghz(3).unwrap();
        let rho = to_density_matrix(&spec).unwrap();
        let target = crate::statekit::DensityMatrix::ghz(3).unwrap();
        assert!((rho.matrix() - target.matrix()).camax() < 1e-15);
    }

    #[test]
    fn uniform_lambdas_give_identity() {
        let spec = GhzDiagonalSpec::new(3, alloc::vec![0.125; 4], alloc::vec![0.0; 4]).unwrap();
        let rho = to_density_matrix(&spec).unwrap();
        let target = CMatrix::identity(8, 8) * C64::new(0.125, 0.0);
        assert_eq!(rho.matrix(), &target);
    }

    #[test]
    fn central_block_singlet_like() {
        // λ_3 = 1/2, μ_3 = −1/2 → eigenvalue 1 on (|011⟩ − |100⟩)/√2
        let mut l = alloc::vec![0.0; 4];
        let mut m = alloc::vec![0.0; 4];
        l[3] = 0.5;
        m[3] = -0.5;
        let rho = to_density_matrix(&GhzDiagonalSpec::new(3, l, m).unwrap()).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-15);
        let f = ghz_fidelity(&rho, 3, GhzSign::Minus).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        let ev = rho.eigenvalues();
        assert!((ev[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariants_enforced() {
        assert!(GhzDiagonalSpec::new(3, alloc::vec![0.1; 4], alloc::vec![0.0; 4]).is_err());
        assert!(GhzDiagonalSpec::new(
            3,
            alloc::vec![0.125; 4],
            alloc::vec![0.2, 0.0, 0.0, 0.0]
        )
        .is_err());
        assert!(GhzDiagonalSpec::new(3, alloc::vec![0.25; 2], alloc::vec![0.0; 2]).is_err());
    }

    #[test]
    fn generated_labels_match_targets() {
        for n in 2..=8 {
            for s in 0..200 {
                for target in [Label::Entangled, Label::NotDetected] {
                    let spec = random_ghz_diagonal(n, target, s).unwrap();
                    assert_eq!(gmn_analytic(&spec).label, target, "n={n} seed={s}");
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_ghz_diagonal(4, Label::Entangled, 77).unwrap();
        let b = random_ghz_diagonal(4, Label::Entangled, 77).unwrap();
        assert_eq!(a, b);
        assert!(gmn_analytic(&a).value > 0.0);
        let c = random_ghz_diagonal(4, Label::NotDetected, 77).unwrap();
        assert_eq!(gmn_analytic(&c).value, 0.0);
    }

    #[test]
    fn noisy_generation_respects_noise_boundary() {
        // p* = 127/255 at n = 8
        assert!(random_noisy_ghz_diagonal(8, Label::Entangled, 0.45, 1).is_err());
        for p in [0.6, 0.8, 1.0] {
            for s in 0..100 {
                for t in [Label::Entangled, Label::NotDetected] {
                    let spec = random_noisy_ghz_diagonal(8, t, p, s).unwrap();
                    assert_eq!(gmn_analytic(&spec).label, t);
                }
            }
        }
        let spec = random_noisy_ghz_diagonal(8, Label::NotDetected, 0.0, 3).unwrap();
        assert_eq!(spec, GhzDiagonalSpec::maximally_mixed(8).unwrap());
    }

    #[test]
    fn serialization_layout() {
        let spec = GhzDiagonalSpec::ghz(3).unwrap();
        let bytes = spec.to_le_bytes();
        assert_eq!(bytes.len(), 4 + 8 * 8);
        assert_eq!(&bytes[..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..12], &0.5f64.to_le_bytes());
    }
}
