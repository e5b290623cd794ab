//! State → classifier input conversion.
//!
//! Dense mode packs `Re ρ` row-major followed by the off-diagonal entries of
//! `Im ρ` row-major, `(2H−1)·H` values for `H = 2ⁿ`. GHZ-diagonal mode is the
//! `2ⁿ` GHZ-basis eigenvalues `(λ_0+μ_0, λ_0−μ_0, …)`.

use alloc::vec::Vec;

use crate::error::bail;
use crate::statekit::{CMatrix, DensityMatrix, GhzDiagonalSpec, C64};
use crate::Result;

/// Smallest per-position scale used by [`NormStats`].
pub const SCALE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Dense,
    GhzDiagonal,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Dense => 0,
            FeatureKind::GhzDiagonal => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::Dense),
            1 => Some(FeatureKind::GhzDiagonal),
            _ => None,
        }
    }

    /// Feature length for `n` qubits.
    pub fn length(self, n: usize) -> usize {
        let h = 1usize << n;
        match self {
            FeatureKind::Dense => (2 * h - 1) * h,
            FeatureKind::GhzDiagonal => h,
        }
    }
}

/// A `length × channels` sequence stored channels-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub length: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn single_channel(values: Vec<f64>) -> Self {
        Self {
            length: values.len(),
            channels: 1,
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn featurize_dense(rho: &DensityMatrix) -> FeatureTensor {
    let m = rho.matrix();
    let h = m.nrows();
    let mut values = Vec::with_capacity((2 * h - 1) * h);
    for i in 0..h {
        for j in 0..h {
            values.push(m[(i, j)].re);
        }
    }
    for i in 0..h {
        for j in 0..h {
            if i != j {
                values.push(m[(i, j)].im);
            }
        }
    }
    FeatureTensor::single_channel(values)
}

/// Inverse of [`featurize_dense`] (the diagonal of `Im ρ` is zero).
pub fn unfeaturize_dense(values: &[f64]) -> Result<CMatrix> {
    let len = values.len();
    let mut h = 1;
    while (2 * h - 1) * h < len {
        h *= 2;
    }
    if (2 * h - 1) * h != len {
        bail!(InvalidInput, "length {len} is not (2H-1)H for a power of two H");
    }
    let (re, im) = values.split_at(h * h);
    let mut m = CMatrix::from_fn(h, h, |i, j| C64::new(re[i * h + j], 0.0));
    let mut k = 0;
    for i in 0..h {
        for j in 0..h {
            if i != j {
                m[(i, j)].im = im[k];
                k += 1;
            }
        }
    }
    Ok(m)
}

pub fn featurize_ghz_diagonal(spec: &GhzDiagonalSpec) -> FeatureTensor {
    FeatureTensor::single_channel(spec.eigenvalues())
}

/// Per-position standardization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    /// Population mean and standard deviation per position over `rows`.
    pub fn fit<'a, I>(rows: I, length: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut mean = alloc::vec![0.0; length];
        let mut m2 = alloc::vec![0.0; length];
        // Welford, so large feature vectors need a single pass
        for row in rows {
            if row.len() != length {
                bail!(InvalidInput, "row of length {} in a set of length {length}", row.len());
            }
            count += 1;
            let c = count as f64;
            for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
                let delta = x - *m;
                *m += delta / c;
                *s += delta * (x - *m);
            }
        }
        if count == 0 {
            bail!(InvalidInput, "cannot fit normalization on an empty set");
        }
        let scale = m2
            .iter()
            .map(|s| crate::math::sqrt(s / count as f64).max(SCALE_FLOOR))
            .collect();
        Ok(Self { mean, scale })
    }

    /// One mean and standard deviation pooled over every position, stored
    /// per position. Suits inputs whose positions are exchangeable.
    pub fn fit_pooled<'a, I>(rows: I, length: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for row in rows {
            if row.len() != length {
                bail!(InvalidInput, "row of length {} in a set of length {length}", row.len());
            }
            for &x in row {
                count += 1;
                let delta = x - mean;
                mean += delta / count as f64;
                m2 += delta * (x - mean);
            }
        }
        if count == 0 {
            bail!(InvalidInput, "cannot fit normalization on an empty set");
        }
        let scale = crate::math::sqrt(m2 / count as f64).max(SCALE_FLOOR);
        Ok(Self {
            mean: alloc::vec![mean; length],
            scale: alloc::vec![scale; length],
        })
    }

    /// Identity transform of the given length.
    pub fn identity(length: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; length],
            scale: alloc::vec![1.0; length],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply_in_place(&self, values: &mut [f64]) -> Result<()> {
        if values.len() != self.mean.len() {
            bail!(InvalidInput, "features of length {} vs stats of length {}", values.len(), self.mean.len());
        }
        for ((x, m), s) in values.iter_mut().zip(&self.mean).zip(&self.scale) {
            *x = (*x - m) / s;
        }
        Ok(())
    }
}

pub fn normalize_features(t: &FeatureTensor, stats: &NormStats) -> Result<FeatureTensor> {
    let mut out = t.clone();
    stats.apply_in_place(&mut out.values)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmn::Label;
    use crate::statekit::{random_density_matrix, random_ghz_diagonal, to_density_matrix};
    use proptest::prelude::*;

    #[test]
    fn dense_lengths() {
        assert_eq!(featurize_dense(&DensityMatrix::maximally_mixed(4).unwrap()).length, 496);
        assert_eq!(featurize_dense(&DensityMatrix::maximally_mixed(2).unwrap()).length, 28);
        assert_eq!(FeatureKind::Dense.length(4), 496);
        assert_eq!(FeatureKind::GhzDiagonal.length(20), 1 << 20);
    }

    #[test]
    fn real_state_has_zero_imaginary_segment() {
        let t = featurize_dense(&DensityMatrix::ghz(3).unwrap());
        assert!(t.values[64..].iter().all(|&v| v == 0.0));
        assert_eq!(t.values.len() - 64, 56);
    }

    #[test]
    fn ghz_diagonal_lengths_and_pure_ghz() {
        let t = featurize_ghz_diagonal(&GhzDiagonalSpec::ghz(5).unwrap());
        assert_eq!(t.length, 32);
        assert_eq!(t.values[0], 1.0);
        assert!(t.values[1..].iter().all(|&v| v == 0.0));
        let big = featurize_ghz_diagonal(&GhzDiagonalSpec::maximally_mixed(20).unwrap());
        assert_eq!(big.length, 1_048_576);
    }

    #[test]
    fn ghz_features_are_the_spectrum() {
        for seed in 0..10 {
            let spec = random_ghz_diagonal(4, Label::Entangled, seed).unwrap();
            let mut f = featurize_ghz_diagonal(&spec).values;
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let mut ev = to_density_matrix(&spec).unwrap().eigenvalues();
            f.sort_by(f64::total_cmp);
            ev.sort_by(f64::total_cmp);
            for (a, b) in f.iter().zip(&ev) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_positions_normalize_to_zero() {
        let rows = [[1.0, 2.0, 5.0], [1.0, 4.0, 5.0]];
        let stats = NormStats::fit(rows.iter().map(|r| &r[..]), 3).unwrap();
        assert_eq!(stats.scale[0], SCALE_FLOOR);
        let t = normalize_features(&FeatureTensor::single_channel(rows[0].to_vec()), &stats).unwrap();
        assert_eq!(t.values, [0.0, -1.0, 0.0]);
    }

    #[test]
    fn test_split_uses_training_statistics() {
        let train = [[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let stats = NormStats::fit(train.iter().map(|r| &r[..]), 2).unwrap();
        let shifted = FeatureTensor::single_channel(alloc::vec![10.0, 11.0]);
        let own = NormStats::fit([&shifted.values[..]], 2).unwrap();
        let a = normalize_features(&shifted, &stats).unwrap();
        let b = normalize_features(&shifted, &own).unwrap();
        assert_ne!(a, b);
        assert!((a.values[0] - (10.0 - 2.0) / stats.scale[0]).abs() < 1e-15);
    }

    #[test]
    fn pooled_stats_share_one_scale() {
        let rows = [[1.0, 3.0], [5.0, 7.0]];
        let stats = NormStats::fit_pooled(rows.iter().map(|r| &r[..]), 2).unwrap();
        assert_eq!(stats.mean, [4.0, 4.0]);
        assert!((stats.scale[0] - 5.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(stats.scale[0], stats.scale[1]);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let stats = NormStats::identity(3);
        assert!(normalize_features(&FeatureTensor::single_channel(alloc::vec![1.0]), &stats).is_err());
        assert!(NormStats::fit([&[1.0][..], &[1.0, 2.0][..]], 1).is_err());
    }

    proptest! {
        #[test]
        fn dense_round_trip(seed in any::<u64>(), n in 1usize..=4, rank_pick in any::<usize>()) {
            let rank = 1 + rank_pick % (1 << n);
            let rho = random_density_matrix(n, rank, seed).unwrap();
            let back = unfeaturize_dense(&featurize_dense(&rho).values).unwrap();
            let err = (back - rho.matrix()).iter().map(|z| crate::math::cabs(*z)).fold(0.0, f64::max);
            prop_assert!(err <= 1e-14);
        }

        #[test]
        fn training_stats_center_the_training_set(seed in any::<u64>()) {
            let rows: alloc::vec::Vec<alloc::vec::Vec<f64>> = (0..20)
                .map(|k| featurize_dense(&random_density_matrix(2, 4, seed ^ k).unwrap()).values)
                .collect();
            let stats = NormStats::fit(rows.iter().map(|r| &r[..]), 28).unwrap();
            let mut sums = alloc::vec![0.0; 28];
            for r in &rows {
                let t = normalize_features(&FeatureTensor::single_channel(r.clone()), &stats).unwrap();
                for (s, v) in sums.iter_mut().zip(&t.values) {
                    *s += v / 20.0;
                }
            }
            prop_assert!(sums.iter().all(|m| m.abs() < 1e-9));
        }
    }
}
