//! Sliced 2-Wasserstein distance over an explicit projection basis.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::basis::ProjectionBasis;
use crate::error::{Error, Result};
use crate::workload::EmbeddingSet;

/// Default size of the quantile grid used when the two sets differ in size.
pub const DEFAULT_QUANTILES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Serial,
    /// Evaluate slices on the rayon pool. Per-slice values are reduced in
    /// slice order, so the result matches `Serial` bit for bit.
    Parallel,
}

/// Projects the stacked `[src; tgt]` rows onto every direction with a single
/// matrix product. Column `l` of the result holds slice `l`: the first
/// `src.rows()` entries come from the source, the rest from the target.
pub fn project_joint(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    basis: &ProjectionBasis,
) -> Result<DMatrix<f64>> {
    for found in [src.dim(), tgt.dim()] {
        if found != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found,
            });
        }
    }
    let (n, m, d) = (src.rows(), tgt.rows(), basis.dim());
    let x = DMatrix::from_row_iterator(
        n + m,
        d,
        src.data().iter().chain(tgt.data()).map(|&v| v as f64),
    );
    let dirs = DMatrix::from_row_slice(basis.len(), d, basis.directions());
    Ok(x * dirs.transpose())
}

/// Empirical quantile at level `p` of sorted samples, interpolating linearly
/// between order statistics placed at the midpoints `(i + 0.5) / n`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let t = (p * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i = t.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let frac = t - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Squared 1-D W₂ between two sample sets; both slices are sorted in place.
///
/// Equal sizes use the exact sorted pairing. Otherwise both quantile functions
/// are evaluated on the midpoint grid `(q − 0.5) / Q`, `q = 1..Q`.
pub fn w2_squared_1d(a: &mut [f64], b: &mut [f64], quantiles: usize) -> f64 {
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    if a.len() == b.len() {
        let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        return sum / a.len() as f64;
    }
    let q = quantiles as f64;
    let sum: f64 = (1..=quantiles)
        .map(|i| {
            let p = (i as f64 - 0.5) / q;
            let d = quantile_sorted(a, p) - quantile_sorted(b, p);
            d * d
        })
        .sum();
    sum / q
}

/// Squared W₂ of every slice, in basis order.
pub fn sliced_w2_per_slice(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    basis: &ProjectionBasis,
    quantiles: usize,
    execution: Execution,
) -> Result<Vec<f64>> {
    if quantiles == 0 {
        return Err(Error::InvalidArgument("quantile grid must be non-empty".into()));
    }
    let proj = project_joint(src, tgt, basis)?;
    let n = src.rows();
    let slice = |l: usize| {
        let col = proj.column(l);
        let col = col.as_slice();
        let mut a = col[..n].to_vec();
        let mut b = col[n..].to_vec();
        w2_squared_1d(&mut a, &mut b, quantiles)
    };
    Ok(match execution {
        Execution::Serial => (0..basis.len()).map(slice).collect(),
        Execution::Parallel => (0..basis.len()).into_par_iter().map(slice).collect(),
    })
}

/// `sqrt(mean_l W₂²(slice l))`.
pub fn sliced_w2(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    basis: &ProjectionBasis,
    quantiles: usize,
) -> Result<f64> {
    sliced_w2_with(src, tgt, basis, quantiles, Execution::Serial)
}

pub fn sliced_w2_with(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    basis: &ProjectionBasis,
    quantiles: usize,
    execution: Execution,
) -> Result<f64> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("projection basis is empty".into()));
    }
    let per_slice = sliced_w2_per_slice(src, tgt, basis, quantiles, execution)?;
    Ok((per_slice.iter().sum::<f64>() / per_slice.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::super::basis::{random_directions, Provenance};
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn line(values: &[f64]) -> EmbeddingSet {
        let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        EmbeddingSet::from_rows(&rows).unwrap()
    }

    fn plus_one() -> ProjectionBasis {
        ProjectionBasis::new(vec![1.0], 1, vec![Provenance::Random]).unwrap()
    }

    #[test]
    fn identical_sets_are_zero() {
        let s = line(&[0.3, -1.0, 2.5]);
        assert_eq!(sliced_w2(&s, &s, &plus_one(), 256).unwrap(), 0.0);
    }

    #[test]
    fn two_point_example() {
        let d = sliced_w2(&line(&[0.0, 2.0]), &line(&[1.0, 3.0]), &plus_one(), 256).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_gaussians() {
        let mut rng = seed::rng(3);
        let a: Vec<f64> = (0..20_000)
            .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| Normal::new(3.0, 1.0).unwrap().sample(&mut rng))
            .collect();
        for sign in [1.0, -1.0] {
            let basis = ProjectionBasis::new(vec![sign], 1, vec![Provenance::Random]).unwrap();
            let d = sliced_w2(&line(&a), &line(&b), &basis, 256).unwrap();
            assert!((d - 3.0).abs() < 0.05, "d = {d}");
        }
    }

    #[test]
    fn quantile_grid_reproduces_sorted_pairing() {
        // With Q = n = m the midpoint grid hits every order statistic exactly.
        let mut a = vec![0.5, -1.0, 3.0, 2.0];
        let mut b = vec![1.0, 0.0, 4.0, -2.0];
        let exact = w2_squared_1d(&mut a.clone(), &mut b.clone(), 4);
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let grid: f64 = (1..=4)
            .map(|q| {
                let p = (q as f64 - 0.5) / 4.0;
                (quantile_sorted(&a, p) - quantile_sorted(&b, p)).powi(2)
            })
            .sum::<f64>()
            / 4.0;
        assert!((exact - grid).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes_use_quantiles() {
        // {0, 1} vs {0, 0.5, 1}: midpoint quantile functions differ only inside.
        let d = sliced_w2(&line(&[0.0, 1.0]), &line(&[0.0, 0.5, 1.0]), &plus_one(), 1000).unwrap();
        assert!(d > 0.0 && d < 0.2);
        let sym = sliced_w2(&line(&[0.0, 0.5, 1.0]), &line(&[0.0, 1.0]), &plus_one(), 1000).unwrap();
        assert!((d - sym).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmbeddingSet::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            sliced_w2(&a, &a, &plus_one(), 8),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn parallel_matches_serial() {
        let mut rng = seed::rng(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows = |shift: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..300)
                .map(|_| (0..6).map(|_| normal.sample(rng) + shift).collect())
                .collect()
        };
        let a = EmbeddingSet::from_rows(&rows(0.0, &mut rng)).unwrap();
        let b = EmbeddingSet::from_rows(&rows(0.4, &mut rng)).unwrap();
        let basis = random_directions(32, 6, 5);
        let s = sliced_w2_with(&a, &b, &basis, 256, Execution::Serial).unwrap();
        let p = sliced_w2_with(&a, &b, &basis, 256, Execution::Parallel).unwrap();
        assert_eq!(s.to_bits(), p.to_bits());
    }

    fn arb_pair() -> impl Strategy<Value = (EmbeddingSet, EmbeddingSet)> {
        (1usize..20, 1usize..20, 1usize..5).prop_flat_map(|(n, m, d)| {
            (
                proptest::collection::vec(-50f32..50f32, n * d),
                proptest::collection::vec(-50f32..50f32, m * d),
            )
                .prop_map(move |(a, b)| {
                    (
                        EmbeddingSet::new(a, n, d).unwrap(),
                        EmbeddingSet::new(b, m, d).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_sign_invariant((a, b) in arb_pair(), seed_ in any::<u64>()) {
            let basis = random_directions(6, a.dim(), seed_);
            let ab = sliced_w2_per_slice(&a, &b, &basis, 64, Execution::Serial).unwrap();
            let ba = sliced_w2_per_slice(&b, &a, &basis, 64, Execution::Serial).unwrap();
            let neg = sliced_w2_per_slice(&a, &b, &basis.negated(), 64, Execution::Serial).unwrap();
            for l in 0..basis.len() {
                let tol = 1e-9 * (1.0 + ab[l]);
                prop_assert!((ab[l] - ba[l]).abs() <= tol);
                prop_assert!((ab[l] - neg[l]).abs() <= tol);
            }
        }

        #[test]
        fn translation_invariant((a, b) in arb_pair(), shift in -20f32..20f32, seed_ in any::<u64>()) {
            let move_by = |s: &EmbeddingSet| {
                EmbeddingSet::new(s.data().iter().map(|v| v + shift).collect(), s.rows(), s.dim()).unwrap()
            };
            let basis = random_directions(4, a.dim(), seed_);
            let before = sliced_w2(&a, &b, &basis, 64).unwrap();
            let after = sliced_w2(&move_by(&a), &move_by(&b), &basis, 64).unwrap();
            // Translating in f32 rounds each coordinate; allow for that.
            prop_assert!((before - after).abs() <= 1e-4 * (1.0 + before + shift.abs() as f64));
        }

        #[test]
        fn self_distance_is_zero((a, _b) in arb_pair(), seed_ in any::<u64>()) {
            let basis = random_directions(5, a.dim(), seed_);
            prop_assert_eq!(sliced_w2(&a, &a, &basis, 32).unwrap(), 0.0);
        }
    }
}
