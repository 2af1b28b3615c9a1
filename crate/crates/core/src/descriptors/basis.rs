use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Random,
    Pca,
    /// Random direction standing in for a principal axis the data did not have.
    PcaPadding,
}

/// `L` unit-length slice directions in `ℝ^D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    directions: Vec<f64>,
    dim: usize,
    provenance: Vec<Provenance>,
}

impl ProjectionBasis {
    pub fn new(directions: Vec<f64>, dim: usize, provenance: Vec<Provenance>) -> Result<Self> {
        if dim == 0 || directions.len() != provenance.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} directions of dim {dim}",
                directions.len(),
                provenance.len()
            )));
        }
        for (l, row) in directions.chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "direction {l} has norm {norm}"
                )));
            }
        }
        Ok(ProjectionBasis {
            directions,
            dim,
            provenance,
        })
    }

    /// Builds a basis by normalizing each row; zero rows are rejected.
    pub fn from_unnormalized(mut directions: Vec<f64>, dim: usize, tag: Provenance) -> Result<Self> {
        if dim == 0 || directions.len() % dim != 0 {
            return Err(Error::ShapeMismatch("ragged direction matrix".into()));
        }
        for row in directions.chunks_exact_mut(dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidArgument("zero direction".into()));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let count = directions.len() / dim;
        Self::new(directions, dim, vec![tag; count])
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self, l: usize) -> &[f64] {
        &self.directions[l * self.dim..(l + 1) * self.dim]
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    /// Concatenates the directions of `self` and `other`.
    pub fn stack(mut self, other: &ProjectionBasis) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        self.directions.extend_from_slice(&other.directions);
        self.provenance.extend_from_slice(&other.provenance);
        Ok(self)
    }

    pub fn negated(&self) -> Self {
        ProjectionBasis {
            directions: self.directions.iter().map(|v| -v).collect(),
            dim: self.dim,
            provenance: self.provenance.clone(),
        }
    }
}

/// `count` directions drawn uniformly on the unit sphere in `ℝ^dim`.
pub fn random_directions(count: usize, dim: usize, seed: u64) -> ProjectionBasis {
    random_directions_tagged(count, dim, seed, Provenance::Random)
}

pub(crate) fn random_directions_tagged(
    count: usize,
    dim: usize,
    seed: u64,
    tag: Provenance,
) -> ProjectionBasis {
    let mut rng = seed::rng(seed);
    let mut directions = Vec::with_capacity(count * dim);
    let mut row = vec![0.0f64; dim];
    for _ in 0..count {
        loop {
            row.iter_mut()
                .for_each(|v| *v = StandardNormal.sample(&mut rng));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                directions.extend(row.iter().map(|v| v / norm));
                break;
            }
        }
    }
    ProjectionBasis {
        directions,
        dim: dim.max(1),
        provenance: vec![tag; count],
    }
}

/// Memoizes random bases by `(count, dim, seed)` so repeated evaluations over
/// batches of the same workload reuse one set of directions.
#[derive(Debug, Default)]
pub struct DirectionCache {
    entries: Mutex<HashMap<(usize, usize, u64), Arc<ProjectionBasis>>>,
}

impl DirectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, count: usize, dim: usize, seed: u64) -> Arc<ProjectionBasis> {
        let mut entries = self.entries.lock().expect("direction cache poisoned");
        entries
            .entry((count, dim, seed))
            .or_insert_with(|| Arc::new(random_directions(count, dim, seed)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("direction cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_rows() {
        let b = random_directions(3, 5, 42);
        assert_eq!(b.len(), 3);
        for l in 0..3 {
            let n: f64 = b.direction(l).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(random_directions(4, 7, 1), random_directions(4, 7, 1));
        assert_ne!(random_directions(4, 7, 1), random_directions(4, 7, 2));
    }

    #[test]
    fn one_dimensional_directions_are_signs() {
        let b = random_directions(20, 1, 9);
        assert!(b.directions().iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn cache_reuses_entries() {
        let cache = DirectionCache::new();
        let a = cache.get(8, 4, 3);
        let b = cache.get(8, 4, 3);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, random_directions(8, 4, 3));
        cache.get(8, 4, 4);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn new_rejects_non_unit_rows() {
        assert!(ProjectionBasis::new(vec![1.0, 1.0], 2, vec![Provenance::Random]).is_err());
        assert!(ProjectionBasis::from_unnormalized(vec![1.0, 1.0], 2, Provenance::Random).is_ok());
    }
}
