//! Top-k principal axes via randomized subspace iteration with power steps.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use super::basis::{random_directions_tagged, ProjectionBasis, Provenance};
use crate::error::{Error, Result};
use crate::seed;
use crate::workload::EmbeddingSet;

pub const DEFAULT_OVERSAMPLE: usize = 8;
pub const DEFAULT_POWER_ITERS: usize = 2;

/// Singular values at or below `RANK_TOLERANCE · σ_max` count as zero. Inputs
/// are `f32`, so smaller relative values carry no information.
const RANK_TOLERANCE: f64 = 1e-6;

/// Column-centered copy of the set as an `n × D` matrix.
#[cfg(test)]
pub(crate) fn centered_matrix(set: &EmbeddingSet) -> DMatrix<f64> {
    let (n, d) = (set.rows(), set.dim());
    let mut x = DMatrix::from_row_iterator(n, d, set.data().iter().map(|&v| v as f64));
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    x
}

/// `XᵀX` of the column-centered rows, as a `D × D` matrix.
fn centered_gram<'a, I>(rows: I, d: usize) -> DMatrix<f64>
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    let mut mean = vec![0.0f64; d];
    let mut n = 0usize;
    for r in rows.clone() {
        mean.iter_mut().zip(r).for_each(|(m, &v)| *m += v as f64);
        n += 1;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut upper = vec![0.0f64; d * d];
    let mut c = vec![0.0f64; d];
    for r in rows {
        c.iter_mut().zip(r).zip(&mean).for_each(|((c, &v), m)| *c = v as f64 - m);
        for a in 0..d {
            let xa = c[a];
            upper[a * d + a..(a + 1) * d]
                .iter_mut()
                .zip(&c[a..])
                .for_each(|(g, xb)| *g += xa * xb);
        }
    }
    DMatrix::from_fn(d, d, |i, j| if i <= j { upper[i * d + j] } else { upper[j * d + i] })
}

fn orthonormal_columns(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Approximates the top-`k` principal axes of the centered `joint` data.
///
/// Directions are orthonormal and sign-normalized so that each one's largest
/// magnitude component is positive. If the data has fewer than `k` nonzero
/// singular values the missing axes are filled with random unit directions
/// tagged [`Provenance::PcaPadding`].
pub fn pca_directions(
    joint: &EmbeddingSet,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<ProjectionBasis> {
    let rows = (0..joint.rows()).map(|i| joint.row(i));
    pca_from_rows(rows, joint.rows(), joint.dim(), k, oversample, power_iters, seed)
}

/// As [`pca_directions`] over `count` rows of width `d`.
///
/// The range finder runs on the right singular space: the iterates
/// `orth((XᵀX)^{q+1} Ω)` span the same subspace as the row space of `QᵀX` in
/// the left-sided scheme, at `O(n·D²)` cost for the Gram product.
pub(crate) fn pca_from_rows<'a, I>(
    rows: I,
    count: usize,
    d: usize,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<ProjectionBasis>
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    if k == 0 || k > count.min(d) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={} for a {count}x{d} matrix",
            count.min(d)
        )));
    }
    let gram = centered_gram(rows, d);
    let width = (k + oversample).min(d).min(count);

    let mut rng = seed::rng(seed);
    let omega = DMatrix::from_fn(d, width, |_, _| StandardNormal.sample(&mut rng));
    let mut z = orthonormal_columns(&gram * omega);
    for _ in 0..power_iters {
        z = orthonormal_columns(&gram * z);
    }
    // Rayleigh-Ritz on the captured subspace.
    let small = z.tr_mul(&(&gram * &z));
    let small = (&small + small.transpose()) * 0.5;
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);

    let mut directions = Vec::with_capacity(k * d);
    let mut provenance = Vec::with_capacity(k);
    for (rank, &i) in order.iter().take(k).enumerate() {
        if sigma_max == 0.0 || sigma[rank] <= RANK_TOLERANCE * sigma_max {
            break;
        }
        let mut row: Vec<f64> = (&z * eig.eigenvectors.column(i)).iter().copied().collect();
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        directions.extend(row.iter().map(|v| v / norm));
        provenance.push(Provenance::Pca);
    }
    let basis = ProjectionBasis::new(directions, d, provenance)?;
    let missing = k - basis.len();
    if missing == 0 {
        return Ok(basis);
    }
    let pad = random_directions_tagged(
        missing,
        d,
        seed::derive(seed, seed::tag::RANDOM_DIRECTIONS),
        Provenance::PcaPadding,
    );
    basis.stack(&pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    /// Exact top-k eigenvectors of the covariance matrix, descending.
    fn exact_axes(set: &EmbeddingSet, k: usize) -> DMatrix<f64> {
        let x = centered_matrix(set);
        let cov = x.tr_mul(&x);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        DMatrix::from_fn(set.dim(), k, |r, c| eig.eigenvectors[(r, order[c])])
    }

    fn basis_matrix(b: &ProjectionBasis) -> DMatrix<f64> {
        DMatrix::from_row_slice(b.len(), b.dim(), b.directions()).transpose()
    }

    /// Largest principal angle (radians) between two orthonormal column spans.
    fn max_subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let s = a.tr_mul(b).svd(false, false).singular_values;
        let min_cos = s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
        min_cos.acos()
    }

    fn gaussian(n: usize, d: usize, seed_: u64) -> EmbeddingSet {
        let mut rng = seed::rng(seed_);
        let data: Vec<f32> = (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|v: f64| v as f32)
            .collect();
        EmbeddingSet::new(data, n, d).unwrap()
    }

    #[test]
    fn line_data_recovers_line_direction() {
        let u = [0.6, -0.8, 0.0];
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 / 4.0 - 5.0;
                u.iter().map(|c| c * t).collect()
            })
            .collect();
        let set = EmbeddingSet::from_rows(&rows).unwrap();
        let b = pca_directions(&set, 1, 8, 2, 3).unwrap();
        let oracle = exact_axes(&set, 1);
        let cos_oracle: f64 = (0..3).map(|i| oracle[(i, 0)] * b.direction(0)[i]).sum();
        let cos_line: f64 = (0..3).map(|i| u[i] * b.direction(0)[i]).sum();
        assert!(cos_oracle.abs() >= 0.999);
        assert!(cos_line.abs() >= 0.999);
    }

    #[test]
    fn isotropic_data_captures_expected_variance_fraction() {
        let set = gaussian(5000, 16, 21);
        let b = pca_directions(&set, 2, 8, 2, 4).unwrap();
        let x = centered_matrix(&set);
        let total: f64 = x.iter().map(|v| v * v).sum();
        let proj = &x * basis_matrix(&b);
        let captured: f64 = proj.iter().map(|v| v * v).sum();
        let frac = captured / total;
        assert!((frac - 2.0 / 16.0).abs() < 0.05, "fraction {frac}");

        // Same quantity computed from the exact eigendecomposition.
        let exact = &x * exact_axes(&set, 2);
        let exact_frac: f64 = exact.iter().map(|v| v * v).sum::<f64>() / total;
        assert!(frac <= exact_frac + 1e-9);
        assert!(exact_frac - frac < 0.01);
    }

    #[test]
    fn full_rank_tiny_matrix_matches_exact_svd() {
        let set = gaussian(8, 4, 77);
        for k in 1..=4 {
            let b = pca_directions(&set, k, 8, 2, 5).unwrap();
            let angle = max_subspace_angle(&basis_matrix(&b), &exact_axes(&set, k));
            assert!(angle <= 1e-6, "k={k} angle {angle}");
        }
    }

    #[test]
    fn rank_deficient_data_is_padded() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let set = EmbeddingSet::from_rows(&rows).unwrap();
        let b = pca_directions(&set, 3, 8, 2, 1).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.count(Provenance::Pca), 1);
        assert_eq!(b.count(Provenance::PcaPadding), 2);
    }

    #[test]
    fn deterministic_and_validated() {
        let set = gaussian(100, 6, 2);
        assert_eq!(
            pca_directions(&set, 3, 8, 2, 11).unwrap(),
            pca_directions(&set, 3, 8, 2, 11).unwrap()
        );
        assert!(pca_directions(&set, 7, 8, 2, 11).is_err());
        assert!(pca_directions(&set, 0, 8, 2, 11).is_err());
    }

    #[test]
    fn directions_are_orthonormal() {
        let set = gaussian(300, 12, 8);
        let b = basis_matrix(&pca_directions(&set, 5, 8, 2, 1).unwrap());
        let gram = b.tr_mul(&b);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-9);
            }
        }
    }
}
