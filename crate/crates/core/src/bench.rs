//! Latency and memory measurements for the sliced-Wasserstein descriptor.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::descriptors::{registry, swd_with, Execution, SwdConfig, ALL_RANDOM, HYBRID};
use crate::error::{Error, Result};
use crate::seed;
use crate::synth::{gen_gaussian_workload, shift_family, GaussianWorkloadSpec};
use crate::workload::EmbeddingSet;

/// PCA slices used by hybrid rows of a slice-count sweep.
pub const HYBRID_PCA_SLICES: usize = 8;
pub const PEAK_METHOD: &str = "analytic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub trial: usize,
    pub wall_ms: f64,
    pub peak_bytes: u64,
    pub swd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub mode: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub trials: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub peak_bytes: u64,
    pub swd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEnvironment {
    pub execution: String,
    pub threads: usize,
    pub warmup_runs: usize,
    pub peak_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
    pub environment: BenchEnvironment,
}

impl BenchResult {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "summary": self.summary,
            "environment": self.environment,
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Transient bytes for one descriptor evaluation: stacked rows, the slice
/// projections, the basis, and the PCA sample and sketch when present.
pub fn analytic_peak_bytes(cfg: &SwdConfig, n: usize, m: usize, d: usize) -> u64 {
    let rows = (n + m) as u64;
    let l = cfg.total_slices() as u64;
    let mut bytes = 8 * (rows * d as u64 + rows * l + l * d as u64);
    if cfg.k_pca > 0 {
        let sample = cfg.pca_subsample.min(n + m) as u64;
        let width = (cfg.k_pca + cfg.oversample).min(d).min(n + m) as u64;
        bytes += 4 * rows * d as u64 + 8 * (sample * d as u64 + 2 * sample * width);
    }
    bytes
}

/// Wall times in milliseconds of `trials` timed runs after one warmup, and
/// the descriptor value.
pub fn time_swd(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    cfg: &SwdConfig,
    trials: usize,
    execution: Execution,
) -> Result<(Vec<f64>, f64)> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let value = swd_with(registry(), src, tgt, cfg, execution)?;
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        let v = swd_with(registry(), src, tgt, cfg, execution)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        debug_assert_eq!(v.to_bits(), value.to_bits());
    }
    Ok((times, value))
}

pub fn sweep_config(mode: &str, slices: usize, seed_: u64) -> Result<SwdConfig> {
    let cfg = match mode {
        ALL_RANDOM => SwdConfig::all_random(slices),
        HYBRID => {
            let k = HYBRID_PCA_SLICES.min(slices);
            SwdConfig::hybrid(k, slices - k)
        }
        other => return Err(Error::UnknownStrategy(other.to_string())),
    };
    let cfg = cfg.with_seed(seed_);
    cfg.validate()?;
    Ok(cfg)
}

/// Benchmark inputs: `N(0, I)` against the same law shifted by one along the
/// first axis.
pub fn bench_inputs(n: usize, m: usize, d: usize, seed_: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let base = GaussianWorkloadSpec::isotropic(d, n, 0.0, 1.0);
    let mut shifted = shift_family(&base, &[1.0])?.remove(0);
    shifted.count = m;
    Ok((
        gen_gaussian_workload(&base, seed::derive(seed_, 1))?,
        gen_gaussian_workload(&shifted, seed::derive(seed_, 2))?,
    ))
}

pub fn bench_swd(
    sizes: &[(usize, usize, usize)],
    slice_counts: &[usize],
    modes: &[&str],
    trials: usize,
    seed_: u64,
    execution: Execution,
) -> Result<BenchResult> {
    if sizes.is_empty() || slice_counts.is_empty() || modes.is_empty() {
        return Err(Error::InvalidArgument("benchmark grid is empty".into()));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &(n, m, d) in sizes {
        let (src, tgt) = bench_inputs(n, m, d, seed_)?;
        for &mode in modes {
            for &l in slice_counts {
                let cfg = sweep_config(mode, l, seed::derive(seed_, tag_for(mode)))?;
                let peak = analytic_peak_bytes(&cfg, n, m, d);
                let (times, swd) = time_swd(&src, &tgt, &cfg, trials, execution)?;
                for (trial, &wall_ms) in times.iter().enumerate() {
                    rows.push(BenchRow {
                        mode: mode.to_string(),
                        l,
                        k: cfg.k_pca,
                        r: cfg.l_random,
                        n,
                        m,
                        d,
                        trial,
                        wall_ms,
                        peak_bytes: peak,
                        swd,
                    });
                }
                summary.push(BenchSummary {
                    mode: mode.to_string(),
                    l,
                    k: cfg.k_pca,
                    r: cfg.l_random,
                    n,
                    m,
                    d,
                    trials,
                    median_ms: median(&times),
                    min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
                    max_ms: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    peak_bytes: peak,
                    swd,
                });
            }
        }
    }
    let (name, threads) = match execution {
        Execution::Serial => ("serial", 1),
        Execution::Parallel => ("parallel", rayon::current_num_threads()),
    };
    Ok(BenchResult {
        rows,
        summary,
        environment: BenchEnvironment {
            execution: name.into(),
            threads,
            warmup_runs: 1,
            peak_method: PEAK_METHOD.into(),
        },
    })
}

fn tag_for(mode: &str) -> u64 {
    mode.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64))
}
