//! Slice-direction strategies, registered by name and selected by
//! [`SwdConfig::mode`].

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::basis::{random_directions, ProjectionBasis};
use super::pca::{self, pca_from_rows};
use super::sliced::{self, Execution};
use crate::error::{Error, Result};
use crate::seed;
use crate::workload::{sample_indices, EmbeddingSet};

pub const ALL_RANDOM: &str = "all_random";
pub const HYBRID: &str = "hybrid";

/// Slice configuration for the sliced-Wasserstein descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwdConfig {
    /// Name of a registered [`SliceStrategy`].
    pub mode: String,
    /// Random unit directions.
    pub l_random: usize,
    /// Data-aware (principal) directions.
    pub k_pca: usize,
    /// Quantile grid size for unequal sample sizes.
    pub quantiles: usize,
    /// Rows drawn from the joint set before the principal-axis search.
    pub pca_subsample: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for SwdConfig {
    fn default() -> Self {
        SwdConfig::hybrid(8, 16)
    }
}

impl SwdConfig {
    pub fn hybrid(k_pca: usize, l_random: usize) -> Self {
        SwdConfig {
            mode: HYBRID.to_string(),
            l_random,
            k_pca,
            quantiles: sliced::DEFAULT_QUANTILES,
            pca_subsample: 4096,
            oversample: pca::DEFAULT_OVERSAMPLE,
            power_iters: pca::DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }

    pub fn all_random(l_random: usize) -> Self {
        SwdConfig {
            mode: ALL_RANDOM.to_string(),
            k_pca: 0,
            ..SwdConfig::hybrid(0, l_random)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_slices(&self) -> usize {
        self.k_pca + self.l_random
    }

    /// Checks the generic fields and the mode's own invariants.
    pub fn validate(&self) -> Result<()> {
        if self.quantiles == 0 || self.pca_subsample == 0 {
            return Err(Error::InvalidArgument(
                "quantiles and pca_subsample must be positive".into(),
            ));
        }
        registry().get(&self.mode)?.validate(self)
    }
}

/// A way of choosing the slice directions for one source/target pair.
pub trait SliceStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn validate(&self, cfg: &SwdConfig) -> Result<()>;

    fn basis(&self, src: &EmbeddingSet, tgt: &EmbeddingSet, cfg: &SwdConfig)
        -> Result<ProjectionBasis>;
}

/// `l_random` directions uniform on the sphere.
#[derive(Debug, Default, Clone, Copy)]
pub struct AllRandom;

impl SliceStrategy for AllRandom {
    fn name(&self) -> &'static str {
        ALL_RANDOM
    }

    fn validate(&self, cfg: &SwdConfig) -> Result<()> {
        if cfg.k_pca != 0 || cfg.l_random == 0 {
            return Err(Error::InvalidArgument(format!(
                "all_random needs k_pca = 0 and l_random >= 1 (got k_pca = {}, l_random = {})",
                cfg.k_pca, cfg.l_random
            )));
        }
        Ok(())
    }

    fn basis(
        &self,
        src: &EmbeddingSet,
        _tgt: &EmbeddingSet,
        cfg: &SwdConfig,
    ) -> Result<ProjectionBasis> {
        self.validate(cfg)?;
        Ok(random_directions(cfg.l_random, src.dim(), cfg.seed))
    }
}

/// `k_pca` principal axes of a joint subsample followed by `l_random` random
/// directions.
#[derive(Debug, Default, Clone, Copy)]
pub struct Hybrid;

impl SliceStrategy for Hybrid {
    fn name(&self) -> &'static str {
        HYBRID
    }

    fn validate(&self, cfg: &SwdConfig) -> Result<()> {
        if cfg.k_pca == 0 {
            return Err(Error::InvalidArgument("hybrid needs k_pca >= 1".into()));
        }
        Ok(())
    }

    fn basis(
        &self,
        src: &EmbeddingSet,
        tgt: &EmbeddingSet,
        cfg: &SwdConfig,
    ) -> Result<ProjectionBasis> {
        self.validate(cfg)?;
        if src.dim() != tgt.dim() {
            return Err(Error::DimensionMismatch {
                expected: src.dim(),
                found: tgt.dim(),
            });
        }
        let (n, total) = (src.rows(), src.rows() + tgt.rows());
        let row = |i: usize| if i < n { src.row(i) } else { tgt.row(i - n) };
        let size = cfg.pca_subsample.min(total);
        let pca_seed = seed::derive(cfg.seed, seed::tag::PCA);
        let basis = if size == total {
            let rows = (0..total).map(row);
            pca_from_rows(rows, total, src.dim(), cfg.k_pca, cfg.oversample, cfg.power_iters, pca_seed)?
        } else {
            let picked = sample_indices(total, size, seed::derive(cfg.seed, seed::tag::SUBSAMPLE))?;
            let rows = picked.iter().map(|&i| row(i));
            pca_from_rows(rows, size, src.dim(), cfg.k_pca, cfg.oversample, cfg.power_iters, pca_seed)?
        };
        if cfg.l_random == 0 {
            return Ok(basis);
        }
        basis.stack(&random_directions(cfg.l_random, src.dim(), cfg.seed))
    }
}

pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn SliceStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            strategies: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(AllRandom));
        r.register(Arc::new(Hybrid));
        r
    }

    /// Adds a strategy, replacing any existing one with the same name.
    pub fn register(&mut self, strategy: Arc<dyn SliceStrategy>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn SliceStrategy> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}

/// The process-wide registry holding the built-in strategies.
pub fn registry() -> &'static StrategyRegistry {
    static REGISTRY: OnceLock<StrategyRegistry> = OnceLock::new();
    REGISTRY.get_or_init(StrategyRegistry::builtin)
}

/// Sliced W₂ with the slice set chosen by `cfg.mode` from the built-in registry.
pub fn hybrid_swd(src: &EmbeddingSet, tgt: &EmbeddingSet, cfg: &SwdConfig) -> Result<f64> {
    swd_with(registry(), src, tgt, cfg, Execution::Serial)
}

pub fn swd_with(
    registry: &StrategyRegistry,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    cfg: &SwdConfig,
    execution: Execution,
) -> Result<f64> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    let basis = registry.get(&cfg.mode)?.basis(src, tgt, cfg)?;
    sliced::sliced_w2_with(src, tgt, &basis, cfg.quantiles, execution)
}

#[cfg(test)]
mod tests {
    use super::super::basis::Provenance;
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, shift: f64, seed_: u64) -> EmbeddingSet {
        let mut rng = seed::rng(seed_);
        let data: Vec<f32> = (0..n * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z + if i % d == 0 { shift } else { 0.0 }) as f32
            })
            .collect();
        EmbeddingSet::new(data, n, d).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(SwdConfig::default().validate().is_ok());
        assert!(SwdConfig::all_random(64).validate().is_ok());
        assert!(SwdConfig::all_random(0).validate().is_err());
        let mut bad = SwdConfig::all_random(4);
        bad.k_pca = 2;
        assert!(bad.validate().is_err());
        assert!(SwdConfig::hybrid(0, 16).validate().is_err());
        assert!(SwdConfig::hybrid(2, 0).validate().is_ok());
        let mut unknown = SwdConfig::default();
        unknown.mode = "mystery".into();
        assert!(matches!(unknown.validate(), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn registry_lists_builtins() {
        let names: Vec<_> = registry().names().collect();
        assert_eq!(names, vec![ALL_RANDOM, HYBRID]);
    }

    #[test]
    fn identical_sets_zero_under_both_modes() {
        let a = gaussian(200, 8, 0.0, 1);
        for cfg in [SwdConfig::all_random(16), SwdConfig::hybrid(3, 5)] {
            assert_eq!(hybrid_swd(&a, &a, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn all_random_matches_explicit_basis() {
        let a = gaussian(150, 5, 0.0, 2);
        let b = gaussian(170, 5, 0.7, 3);
        let cfg = SwdConfig::all_random(12).with_seed(99);
        let via_mode = hybrid_swd(&a, &b, &cfg).unwrap();
        let explicit = sliced::sliced_w2(&a, &b, &random_directions(12, 5, 99), cfg.quantiles).unwrap();
        assert_eq!(via_mode, explicit);
    }

    #[test]
    fn hybrid_basis_layout() {
        let a = gaussian(100, 6, 0.0, 4);
        let b = gaussian(100, 6, 1.0, 5);
        let cfg = SwdConfig::hybrid(3, 4);
        let basis = Hybrid.basis(&a, &b, &cfg).unwrap();
        assert_eq!(basis.len(), 7);
        assert_eq!(&basis.provenance()[..3], &[Provenance::Pca; 3]);
        assert_eq!(basis.count(Provenance::Random), 4);
    }

    #[test]
    fn custom_strategy_can_be_registered() {
        struct FirstAxis;
        impl SliceStrategy for FirstAxis {
            fn name(&self) -> &'static str {
                "first_axis"
            }
            fn validate(&self, _: &SwdConfig) -> Result<()> {
                Ok(())
            }
            fn basis(&self, src: &EmbeddingSet, _: &EmbeddingSet, _: &SwdConfig) -> Result<ProjectionBasis> {
                let mut e = vec![0.0; src.dim()];
                e[0] = 1.0;
                ProjectionBasis::new(e, src.dim(), vec![Provenance::Random])
            }
        }
        let mut reg = StrategyRegistry::builtin();
        reg.register(Arc::new(FirstAxis));
        let a = gaussian(50, 3, 0.0, 6);
        let mut b_rows = Vec::new();
        for i in 0..50 {
            let r = a.row(i);
            b_rows.push(vec![r[0] as f64 + 2.0, r[1] as f64, r[2] as f64]);
        }
        let b = EmbeddingSet::from_rows(&b_rows).unwrap();
        let mut cfg = SwdConfig::all_random(1);
        cfg.mode = "first_axis".into();
        let d = swd_with(&reg, &a, &b, &cfg, Execution::Serial).unwrap();
        assert!((d - 2.0).abs() < 1e-5);
        assert!(hybrid_swd(&a, &b, &cfg).is_err());
    }

    #[test]
    fn monotone_in_mean_shift() {
        let base = gaussian(1000, 16, 0.0, 7);
        for cfg in [SwdConfig::all_random(32), SwdConfig::hybrid(4, 8)] {
            let values: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&s| hybrid_swd(&base, &gaussian(1000, 16, s, 8), &cfg).unwrap())
                .collect();
            assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
        }
    }
}
