//! Shift descriptors between a source and a target embedding set.

pub mod basis;
pub mod delta;
pub mod moment;
pub mod pca;
pub mod sliced;
pub mod strategy;

pub use basis::{random_directions, DirectionCache, ProjectionBasis, Provenance};
pub use delta::{compute_delta, config_digest, ShiftDescriptor, FEATURE_COUNT, FEATURE_NAMES};
pub use moment::{frechet_descriptor, mahalanobis_descriptor, variance_log_ratios};
pub use pca::pca_directions;
pub use sliced::{sliced_w2, sliced_w2_per_slice, sliced_w2_with, Execution};
pub use strategy::{
    hybrid_swd, registry, swd_with, SliceStrategy, StrategyRegistry, SwdConfig, ALL_RANDOM, HYBRID,
};
