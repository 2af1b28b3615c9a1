//! Embedding sets: the `.fsemb` container, moment summaries and subsampling.
//!
//! An `.fsemb` file is a fixed little-endian header followed by a row-major
//! `f32` payload:
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 8    | magic `FSEMB\0\0\0`        |
//! | 8      | 4    | `u32` format version (1)   |
//! | 12     | 8    | `u64` row count            |
//! | 20     | 4    | `u32` embedding dimension  |
//! | 24     | 1    | `u8` dtype code (0 = f32)  |
//! | 25     | 4·n·D| payload                    |
//!
//! A JSON sidecar at `<path>.json` repeats `count`/`dim` and carries the
//! free-form provenance fields.

use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::seed;

pub const MAGIC: &[u8; 8] = b"FSEMB\0\0\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 25;

/// Default floor applied to element-wise variances.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            other => Err(Error::UnknownDtype(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: u64,
    pub dim: u32,
    pub dtype: Dtype,
    /// Opaque label for how the rows were pooled, e.g. `mean-last-layer`.
    pub pooling: String,
    pub source_id: String,
    pub created_at: String,
}

impl Manifest {
    pub fn new(count: usize, dim: usize) -> Self {
        Manifest {
            count: count as u64,
            dim: dim as u32,
            dtype: Dtype::F32,
            pooling: "unspecified".to_string(),
            source_id: String::new(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

/// An `n × D` matrix of pooled embeddings, stored row-major as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f32>,
    rows: usize,
    dim: usize,
    manifest: Manifest,
}

impl EmbeddingSet {
    /// Builds a set from row-major data; rejects empty shapes and non-finite values.
    pub fn new(data: Vec<f32>, rows: usize, dim: usize) -> Result<Self> {
        Self::with_manifest(data, Manifest::new(rows, dim))
    }

    pub fn with_manifest(data: Vec<f32>, manifest: Manifest) -> Result<Self> {
        let rows = manifest.count as usize;
        let dim = manifest.dim as usize;
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding set must be non-empty, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{dim} set",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(EmbeddingSet {
            data,
            rows,
            dim,
            manifest,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(data, rows.len(), dim)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn set_provenance(&mut self, pooling: impl Into<String>, source_id: impl Into<String>) {
        self.manifest.pooling = pooling.into();
        self.manifest.source_id = source_id.into();
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        let mut manifest = self.manifest.clone();
        manifest.count = (self.rows + other.rows) as u64;
        EmbeddingSet::with_manifest(data, manifest)
    }

    fn select(&self, indices: &[usize]) -> EmbeddingSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut manifest = self.manifest.clone();
        manifest.count = indices.len() as u64;
        EmbeddingSet {
            data,
            rows: indices.len(),
            dim: self.dim,
            manifest,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_embedding_set(set: &EmbeddingSet) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + set.data.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(set.rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(set.dim as u32).to_le_bytes());
    bytes.push(set.manifest.dtype.code());
    for v in &set.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Parses an `.fsemb` payload. `origin` only labels errors.
pub fn decode_embedding_set(bytes: &[u8], origin: &Path) -> Result<(Vec<f32>, usize, usize, Dtype)> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let dtype = Dtype::from_code(bytes[24])?;

    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(dim as u64)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::ManifestMismatch(format!("{count}x{dim} overflows")))?;
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes {
            extra: found - expected,
        });
    }
    let (rows, dim) = (count as usize, dim as usize);
    let mut data = Vec::with_capacity(rows * dim);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                row: idx / dim,
                col: idx % dim,
            });
        }
        data.push(v);
    }
    Ok((data, rows, dim, dtype))
}

pub fn load_embedding_set(path: &Path) -> Result<EmbeddingSet> {
    let bytes = fsutil::read(path)?;
    let (data, rows, dim, dtype) = decode_embedding_set(&bytes, path)?;

    let sidecar = sidecar_path(path);
    let manifest = if sidecar.exists() {
        let m: Manifest = fsutil::read_json(&sidecar)?;
        if m.count != rows as u64 || m.dim as usize != dim || m.dtype != dtype {
            return Err(Error::ManifestMismatch(format!(
                "sidecar says {}x{} {:?}, payload is {rows}x{dim} {dtype:?}",
                m.count, m.dim, m.dtype
            )));
        }
        m
    } else {
        let mut m = Manifest::new(rows, dim);
        m.created_at = String::new();
        m
    };
    EmbeddingSet::with_manifest(data, manifest)
}

/// Writes the binary payload and its JSON sidecar, each atomically.
pub fn save_embedding_set(set: &EmbeddingSet, path: &Path) -> Result<()> {
    fsutil::atomic_write(path, &encode_embedding_set(set))?;
    fsutil::write_json(&sidecar_path(path), &set.manifest)
}

/// Element-wise mean and population variance of an embedding set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> impl Iterator<Item = f64> + '_ {
        self.var.iter().map(|v| v.sqrt())
    }
}

/// Population moments (divide by `n`), each variance floored at `variance_floor`.
pub fn moments(set: &EmbeddingSet, variance_floor: f64) -> MomentSummary {
    let n = set.rows as f64;
    let mut mean = vec![0.0f64; set.dim];
    for row in set.data.chunks_exact(set.dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0f64; set.dim];
    for row in set.data.chunks_exact(set.dim) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v as f64 - m;
            *s += d * d;
        }
    }
    var.iter_mut()
        .for_each(|s| *s = (*s / n).max(variance_floor));

    MomentSummary {
        mean,
        var,
        count: set.rows,
    }
}

/// Draws `size` distinct rows; the output order is the sampling order.
pub fn subsample(set: &EmbeddingSet, size: usize, seed: u64) -> Result<EmbeddingSet> {
    Ok(set.select(&sample_indices(set.rows, size, seed)?))
}

/// The row indices [`subsample`] keeps, in draw order.
pub fn sample_indices(population: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidArgument("subsample size must be positive".into()));
    }
    if size > population {
        return Err(Error::SizeExceedsPopulation { size, population });
    }
    Ok(index::sample(&mut seed::rng(seed), population, size).into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows).unwrap()
    }

    #[test]
    fn round_trip_small_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fsemb");
        let s = set(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        save_embedding_set(&s, &path).unwrap();
        let back = load_embedding_set(&path).unwrap();
        assert_eq!(back.rows(), 2);
        assert_eq!(back.dim(), 3);
        assert_eq!(back, s);
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, 25 + 24);
    }

    #[test]
    fn single_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.fsemb");
        let s = set(&[&[0.5]]);
        save_embedding_set(&s, &path).unwrap();
        assert_eq!(load_embedding_set(&path).unwrap(), s);
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fsemb");
        let s = set(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let mut bytes = encode_embedding_set(&s);
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_embedding_set(&path),
            Err(Error::TruncatedPayload { expected: 24, found: 23 })
        ));
    }

    #[test]
    fn nan_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.fsemb");
        let s = set(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let mut bytes = encode_embedding_set(&s);
        bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_embedding_set(&path),
            Err(Error::NonFiniteValue { row: 0, col: 1 })
        ));
    }

    #[test]
    fn bad_magic_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fsemb");
        std::fs::write(&path, b"NOTFSEMB-and-more-bytes-here").unwrap();
        assert!(matches!(load_embedding_set(&path), Err(Error::BadMagic(_))));
        assert!(matches!(
            load_embedding_set(&dir.path().join("nope.fsemb")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let s = set(&[&[1.0]]);
        let err = save_embedding_set(&s, Path::new("/nonexistent-dir/x.fsemb")).unwrap_err();
        assert_eq!(err.kind(), "IoFailure");
    }

    #[test]
    fn sidecar_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fsemb");
        let s = set(&[&[1.0, 2.0]]);
        save_embedding_set(&s, &path).unwrap();
        let mut m = s.manifest().clone();
        m.count = 5;
        fsutil::write_json(&sidecar_path(&path), &m).unwrap();
        assert!(matches!(load_embedding_set(&path), Err(Error::ManifestMismatch(_))));
    }

    #[test]
    fn moments_arithmetic() {
        let m = moments(&set(&[&[0.0, 0.0], &[2.0, 2.0]]), 1e-8);
        assert_eq!(m.mean, vec![1.0, 1.0]);
        assert_eq!(m.var, vec![1.0, 1.0]);

        let m = moments(&set(&[&[5.0, 5.0]]), 1e-8);
        assert_eq!(m.mean, vec![5.0, 5.0]);
        assert_eq!(m.var, vec![1e-8, 1e-8]);
    }

    #[test]
    fn moments_of_standard_normal_sample() {
        let mut rng = seed::rng(11);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let m = moments(&EmbeddingSet::from_rows(&rows).unwrap(), 1e-8);
        for d in 0..4 {
            assert!(m.mean[d].abs() < 0.05, "mean[{d}] = {}", m.mean[d]);
            assert!((m.var[d] - 1.0).abs() < 0.1, "var[{d}] = {}", m.var[d]);
        }
    }

    #[test]
    fn subsample_contracts() {
        let s = set(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let full = subsample(&s, 4, 3).unwrap();
        let mut vals: Vec<f32> = full.data().to_vec();
        vals.sort_by(f32::total_cmp);
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(full.manifest().count, 4);

        let one = subsample(&s, 1, 3).unwrap();
        assert_eq!(one.rows(), 1);
        assert!(s.data().contains(&one.data()[0]));

        assert_eq!(subsample(&s, 2, 9).unwrap(), subsample(&s, 2, 9).unwrap());
        assert!(matches!(
            subsample(&s, 5, 0),
            Err(Error::SizeExceedsPopulation { size: 5, population: 4 })
        ));
    }

    fn arb_set() -> impl Strategy<Value = EmbeddingSet> {
        (1usize..12, 1usize..6).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-1e6f32..1e6f32, n * d)
                .prop_map(move |data| EmbeddingSet::new(data, n, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn save_load_is_bit_exact(s in arb_set()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.fsemb");
            save_embedding_set(&s, &path).unwrap();
            let back = load_embedding_set(&path).unwrap();
            let a: Vec<u32> = s.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.manifest(), s.manifest());
        }

        #[test]
        fn moments_permutation_and_duplication_invariant(s in arb_set(), seed in any::<u64>()) {
            let m = moments(&s, 1e-8);
            let perm = subsample(&s, s.rows(), seed).unwrap();
            let mp = moments(&perm, 1e-8);
            let doubled = moments(&s.concat(&s).unwrap(), 1e-8);
            for d in 0..s.dim() {
                let scale = 1.0 + m.mean[d].abs() + m.var[d].sqrt();
                prop_assert!((m.mean[d] - mp.mean[d]).abs() <= 1e-9 * scale);
                prop_assert!((m.var[d] - mp.var[d]).abs() <= 1e-9 * scale * scale);
                prop_assert!((m.mean[d] - doubled.mean[d]).abs() <= 1e-9 * scale);
                prop_assert!((m.var[d] - doubled.var[d]).abs() <= 1e-9 * scale * scale);
            }
        }

        #[test]
        fn subsample_rows_unique_and_present(n in 1usize..40, frac in 0.0f64..1.0, seed in any::<u64>()) {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
            let s = EmbeddingSet::from_rows(&rows).unwrap();
            let size = 1 + ((n - 1) as f64 * frac) as usize;
            let sub = subsample(&s, size, seed).unwrap();
            let mut seen: Vec<f32> = sub.data().to_vec();
            prop_assert!(seen.iter().all(|v| *v >= 0.0 && (*v as usize) < n));
            seen.sort_by(f32::total_cmp);
            seen.dedup();
            prop_assert_eq!(seen.len(), size);
        }
    }
}
