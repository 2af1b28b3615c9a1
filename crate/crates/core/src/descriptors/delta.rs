use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::moment::{euclidean_mean_distance, frechet_descriptor, mahalanobis_descriptor};
use super::strategy::{hybrid_swd, SwdConfig};
use crate::error::{Error, Result};
use crate::workload::{moments, EmbeddingSet};

/// Feature order of [`ShiftDescriptor::features`].
pub const FEATURE_NAMES: [&str; 5] = ["sd_f", "sd_m_mean", "sd_m_std", "sd_sw", "euclid_mean"];
pub const FEATURE_COUNT: usize = FEATURE_NAMES.len();

/// The shift vector between a source and a target embedding set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDescriptor {
    pub sd_f: f64,
    pub sd_m_mean: f64,
    pub sd_m_std: f64,
    pub sd_sw: f64,
    pub euclid_mean: f64,
    /// Hex SHA-256 of the canonical JSON of the slice config and variance floor.
    pub config_digest: String,
}

impl ShiftDescriptor {
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.sd_f,
            self.sd_m_mean,
            self.sd_m_std,
            self.sd_sw,
            self.euclid_mean,
        ]
    }

    pub fn from_features(features: [f64; FEATURE_COUNT], config_digest: impl Into<String>) -> Self {
        let [sd_f, sd_m_mean, sd_m_std, sd_sw, euclid_mean] = features;
        ShiftDescriptor {
            sd_f,
            sd_m_mean,
            sd_m_std,
            sd_sw,
            euclid_mean,
            config_digest: config_digest.into(),
        }
    }
}

#[derive(Serialize)]
struct DigestInput<'a> {
    swd: &'a SwdConfig,
    variance_floor: f64,
}

/// Digest binding a descriptor to the settings that produced it.
pub fn config_digest(cfg: &SwdConfig, variance_floor: f64) -> String {
    // Struct fields serialize in declaration order, so the JSON is canonical.
    let canonical = serde_json::to_vec(&DigestInput {
        swd: cfg,
        variance_floor,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

/// Computes all five shift features of `tgt` relative to `src`.
///
/// `src` is always the whitening reference for the Mahalanobis terms, so
/// swapping the arguments changes `sd_m_*` but not `sd_f` or `sd_sw`.
pub fn compute_delta(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    cfg: &SwdConfig,
    variance_floor: f64,
) -> Result<ShiftDescriptor> {
    if !(variance_floor > 0.0) {
        return Err(Error::InvalidArgument("variance_floor must be positive".into()));
    }
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: tgt.dim(),
        });
    }
    cfg.validate()?;
    let ms_src = moments(src, variance_floor);
    let ms_tgt = moments(tgt, variance_floor);
    let sd_f = frechet_descriptor(&ms_src, &ms_tgt)?;
    let (sd_m_mean, sd_m_std) = mahalanobis_descriptor(&ms_src, tgt)?;
    let sd_sw = hybrid_swd(src, tgt, cfg)?;
    let euclid_mean = euclidean_mean_distance(&ms_src, &ms_tgt)?;
    Ok(ShiftDescriptor {
        sd_f,
        sd_m_mean,
        sd_m_std,
        sd_sw,
        euclid_mean,
        config_digest: config_digest(cfg, variance_floor),
    })
}
