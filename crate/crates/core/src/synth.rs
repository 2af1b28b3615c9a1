//! Synthetic Gaussian workloads and a published accuracy function for them.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptors::{ShiftDescriptor, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::seed;
use crate::workload::EmbeddingSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

/// Diagonal Gaussian, or a mixture of them when `mixture` is set (the
/// top-level `mean`/`stddev` are then unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianWorkloadSpec {
    pub dim: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<MixtureComponent>>,
}

fn check_moments(dim: usize, mean: &[f64], stddev: &[f64]) -> Result<()> {
    if mean.len() != dim || stddev.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if mean.len() != dim { mean.len() } else { stddev.len() },
        });
    }
    if mean.iter().any(|m| !m.is_finite()) || stddev.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("means must be finite and stddevs positive".into()));
    }
    Ok(())
}

impl GaussianWorkloadSpec {
    pub fn isotropic(dim: usize, count: usize, mean: f64, stddev: f64) -> Self {
        GaussianWorkloadSpec {
            dim,
            count,
            mean: vec![mean; dim],
            stddev: vec![stddev; dim],
            mixture: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.count == 0 {
            return Err(Error::InvalidArgument("dim and count must be positive".into()));
        }
        match &self.mixture {
            None => check_moments(self.dim, &self.mean, &self.stddev),
            Some(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidArgument("empty mixture".into()));
                }
                for p in parts {
                    check_moments(self.dim, &p.mean, &p.stddev)?;
                    if !(p.weight >= 0.0) {
                        return Err(Error::InvalidArgument("negative mixture weight".into()));
                    }
                }
                let total: f64 = parts.iter().map(|p| p.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
        }
    }

    fn translate(&mut self, axis: usize, by: f64) {
        self.mean[axis] += by;
        if let Some(parts) = &mut self.mixture {
            parts.iter_mut().for_each(|p| p.mean[axis] += by);
        }
    }
}

pub fn gen_gaussian_workload(spec: &GaussianWorkloadSpec, seed: u64) -> Result<EmbeddingSet> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let single = [(spec.mean.as_slice(), spec.stddev.as_slice())];
    let components: Vec<(&[f64], &[f64])> = match &spec.mixture {
        None => single.to_vec(),
        Some(parts) => parts
            .iter()
            .map(|p| (p.mean.as_slice(), p.stddev.as_slice()))
            .collect(),
    };
    let picker = match &spec.mixture {
        Some(parts) => Some(
            WeightedIndex::new(parts.iter().map(|p| p.weight))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?,
        ),
        None => None,
    };
    let mut data = Vec::with_capacity(spec.count * spec.dim);
    for _ in 0..spec.count {
        let (mean, std) = components[picker.as_ref().map_or(0, |w| w.sample(&mut rng))];
        for (m, s) in mean.iter().zip(std) {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push((m + s * z) as f32);
        }
    }
    let mut set = EmbeddingSet::new(data, spec.count, spec.dim)?;
    set.set_provenance("synthetic", format!("gaussian:seed={seed}"));
    Ok(set)
}

/// One spec per shift, translated by `shift` along the first coordinate axis.
pub fn shift_family(base: &GaussianWorkloadSpec, mean_shifts: &[f64]) -> Result<Vec<GaussianWorkloadSpec>> {
    base.validate()?;
    if mean_shifts.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("mean shifts must be sorted ascending".into()));
    }
    Ok(mean_shifts
        .iter()
        .map(|&s| {
            let mut spec = base.clone();
            if s != 0.0 {
                spec.translate(0, s);
            }
            spec
        })
        .collect())
}

/// `logistic(Σ wᵢ·Δᵢ/sᵢ + bias)`. The defaults are the published fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyFn {
    pub weights: [f64; FEATURE_COUNT],
    pub scales: [f64; FEATURE_COUNT],
}

impl Default for AccuracyFn {
    fn default() -> Self {
        AccuracyFn {
            weights: [-0.5, -0.5, -0.3, -1.0, -0.5],
            scales: [10.0, 5.0, 1.0, 1.0, 3.0],
        }
    }
}

impl AccuracyFn {
    pub fn logit(&self, delta: &ShiftDescriptor) -> f64 {
        delta
            .features()
            .iter()
            .zip(&self.weights)
            .zip(&self.scales)
            .map(|((x, w), s)| w * x / s)
            .sum()
    }

    pub fn eval(&self, delta: &ShiftDescriptor, task_bias: f64, noise_seed: u64, noise_scale: f64) -> Result<f64> {
        if !(noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise_scale must be nonnegative".into()));
        }
        let clean = logistic(self.logit(delta) + task_bias);
        let noise = if noise_scale > 0.0 {
            let z: f64 = StandardNormal.sample(&mut seed::rng(noise_seed));
            noise_scale * z
        } else {
            0.0
        };
        Ok((clean + noise).clamp(0.0, 1.0))
    }
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// [`AccuracyFn::eval`] with the default fixture.
pub fn synthetic_accuracy_fn(delta: &ShiftDescriptor, task_bias: f64, noise_seed: u64, noise_scale: f64) -> Result<f64> {
    AccuracyFn::default().eval(delta, task_bias, noise_seed, noise_scale)
}
