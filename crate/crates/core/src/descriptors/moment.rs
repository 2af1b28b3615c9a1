//! Moment-based descriptors: the Fréchet drift term and whitened target radii.

use crate::error::{Error, Result};
use crate::workload::{EmbeddingSet, MomentSummary};

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between the diagonal Gaussians matching
/// the two summaries: `‖μ_t − μ_s‖² + Σ_d (σ_s[d] − σ_t[d])²`.
pub fn frechet_descriptor(src: &MomentSummary, tgt: &MomentSummary) -> Result<f64> {
    check_dims(src.dim(), tgt.dim())?;
    let mean_shift: f64 = src
        .mean
        .iter()
        .zip(&tgt.mean)
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    let scale_shift: f64 = src
        .std()
        .zip(tgt.std())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(mean_shift + scale_shift)
}

/// Per-coordinate `ln(σ²_t / σ²_s)`. Diagnostic only; not part of the shift vector.
pub fn variance_log_ratios(src: &MomentSummary, tgt: &MomentSummary) -> Result<Vec<f64>> {
    check_dims(src.dim(), tgt.dim())?;
    Ok(src
        .var
        .iter()
        .zip(&tgt.var)
        .map(|(s, t)| (t / s).ln())
        .collect())
}

pub fn euclidean_mean_distance(src: &MomentSummary, tgt: &MomentSummary) -> Result<f64> {
    check_dims(src.dim(), tgt.dim())?;
    Ok(src
        .mean
        .iter()
        .zip(&tgt.mean)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt())
}

/// Whitened radius of each target row under the source statistics.
pub fn whitened_radii(src: &MomentSummary, target: &EmbeddingSet) -> Result<Vec<f64>> {
    check_dims(src.dim(), target.dim())?;
    let inv_std: Vec<f64> = src.std().map(|s| 1.0 / s).collect();
    Ok((0..target.rows())
        .map(|j| {
            target
                .row(j)
                .iter()
                .zip(&src.mean)
                .zip(&inv_std)
                .map(|((&x, m), w)| {
                    let z = (x as f64 - m) * w;
                    z * z
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Population mean and standard deviation of the whitened target radii.
pub fn mahalanobis_descriptor(src: &MomentSummary, target: &EmbeddingSet) -> Result<(f64, f64)> {
    let radii = whitened_radii(src, target)?;
    let n = radii.len() as f64;
    let mean = radii.iter().sum::<f64>() / n;
    let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::workload::moments;
    use rand_distr::{Distribution, StandardNormal};

    fn summary(mean: &[f64], var: &[f64]) -> MomentSummary {
        MomentSummary {
            mean: mean.to_vec(),
            var: var.to_vec(),
            count: 1,
        }
    }

    #[test]
    fn frechet_examples() {
        let a = summary(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(frechet_descriptor(&a, &a).unwrap(), 0.0);
        let b = summary(&[3.0, 4.0], &[1.0, 1.0]);
        assert_eq!(frechet_descriptor(&a, &b).unwrap(), 25.0);
        let c = summary(&[0.0, 0.0], &[9.0, 9.0]);
        assert!((frechet_descriptor(&a, &c).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(
            frechet_descriptor(&b, &c).unwrap(),
            frechet_descriptor(&c, &b).unwrap()
        );
    }

    #[test]
    fn frechet_dimension_mismatch() {
        let a = summary(&[0.0], &[1.0]);
        let b = summary(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(
            frechet_descriptor(&a, &b),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn log_ratios() {
        let a = summary(&[0.0, 0.0], &[1.0, 2.0]);
        let b = summary(&[0.0, 0.0], &[1.0, 8.0]);
        let r = variance_log_ratios(&a, &b).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_examples() {
        let src = summary(&[0.0, 0.0], &[1.0, 1.0]);
        let tgt = EmbeddingSet::from_rows(&[[3.0, 4.0], [3.0, 4.0]]).unwrap();
        assert_eq!(mahalanobis_descriptor(&src, &tgt).unwrap(), (5.0, 0.0));

        let at_mean = EmbeddingSet::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(mahalanobis_descriptor(&src, &at_mean).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mahalanobis_matches_chi_mean() {
        // E[chi_16] = sqrt(2) Γ(8.5) / Γ(8)
        let chi_mean = 2f64.sqrt() * (2_027_025.0 * std::f64::consts::PI.sqrt() / 256.0) / 5040.0;
        assert!((chi_mean - 3.938_025_6).abs() < 1e-6);

        let src = summary(&vec![0.0; 16], &vec![1.0; 16]);
        let mut rng = seed::rng(5);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..16).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let tgt = EmbeddingSet::from_rows(&rows).unwrap();
        let (mean_r, _) = mahalanobis_descriptor(&src, &tgt).unwrap();
        assert!((mean_r - chi_mean).abs() < 0.05, "mean_r = {mean_r}");
    }

    #[test]
    fn mahalanobis_permutation_invariant() {
        let mut rng = seed::rng(2);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let tgt = EmbeddingSet::from_rows(&rows).unwrap();
        let src = moments(&tgt, 1e-8);
        let mut rev = rows.clone();
        rev.reverse();
        let a = mahalanobis_descriptor(&src, &tgt).unwrap();
        let b = mahalanobis_descriptor(&src, &EmbeddingSet::from_rows(&rev).unwrap()).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }
}
