//! Ground-truth metrics, evaluator error and conformal intervals.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

const KEYWORDS: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "AVG", "BETWEEN", "BY", "CASE", "CAST", "COUNT", "CROSS", "DESC",
    "DISTINCT", "ELSE", "END", "EXCEPT", "EXISTS", "FROM", "FULL", "GROUP", "HAVING", "IN",
    "INNER", "INTERSECT", "IS", "JOIN", "LEFT", "LIKE", "LIMIT", "MAX", "MIN", "NOT", "NULL",
    "OFFSET", "ON", "OR", "ORDER", "OUTER", "RIGHT", "SELECT", "SUM", "THEN", "UNION", "WHEN",
    "WHERE", "WITH",
];

fn is_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORDS.binary_search(&upper.as_str()).is_ok()
}

/// Collapses whitespace, uppercases keywords, drops a trailing `;`. Text inside
/// single or double quotes is left untouched.
pub fn canonicalize_sql(sql: &str) -> String {
    let mut out = String::with_capacity(sql.len());
    let mut word = String::new();
    let mut quote: Option<char> = None;
    let mut pending_space = false;
    let flush = |word: &mut String, out: &mut String| {
        if !word.is_empty() {
            if is_keyword(word) {
                out.push_str(&word.to_ascii_uppercase());
            } else {
                out.push_str(word);
            }
            word.clear();
        }
    };
    for c in sql.chars() {
        if let Some(q) = quote {
            out.push(c);
            if c == q {
                quote = None;
            }
            continue;
        }
        if c.is_whitespace() {
            flush(&mut word, &mut out);
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut out);
        if c == '\'' || c == '"' {
            quote = Some(c);
        }
        out.push(c);
    }
    flush(&mut word, &mut out);
    if quote.is_none() {
        while out.ends_with(';') || out.ends_with(' ') {
            out.pop();
        }
    }
    out
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    canonicalize_sql(pred) == canonicalize_sql(gold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub predicted_sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ex: Option<u8>,
}

impl PredictionRecord {
    pub fn new(pred: impl Into<String>, gold: Option<&str>) -> Self {
        PredictionRecord {
            predicted_sql: pred.into(),
            gold_sql: gold.map(str::to_string),
            schema: None,
            em: None,
            ex: None,
        }
    }
}

/// Fills `em` on every record that has gold; returns the mean over those.
pub fn score_exact_match(records: &mut [PredictionRecord]) -> Result<f64> {
    let mut hits = 0usize;
    let mut scored = 0usize;
    for r in records.iter_mut() {
        r.em = r.gold_sql.as_deref().map(|g| u8::from(exact_match(&r.predicted_sql, g)));
        if let Some(v) = r.em {
            hits += v as usize;
            scored += 1;
        }
    }
    if scored == 0 {
        return Err(Error::Empty("records with gold"));
    }
    Ok(hits as f64 / scored as f64)
}

/// Per-record EM as CSV: `index,predicted_sql,gold_sql,em`.
pub fn em_csv(records: &[PredictionRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(["index", "predicted_sql", "gold_sql", "em"]).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let em = r.em.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            i.to_string().as_str(),
            r.predicted_sql.as_str(),
            r.gold_sql.as_deref().unwrap_or(""),
            em.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Decides whether two queries are execution-equivalent. Implementations
/// live outside this crate; only [`ExactMatchHook`] ships.
pub trait EquivalenceHook: Send + Sync {
    fn name(&self) -> &'static str;
    fn equivalent(&self, pred: &str, gold: &str, schema: Option<&str>) -> Result<bool>;
}

pub struct ExactMatchHook;

impl EquivalenceHook for ExactMatchHook {
    fn name(&self) -> &'static str {
        "exact_match"
    }

    fn equivalent(&self, pred: &str, gold: &str, _schema: Option<&str>) -> Result<bool> {
        Ok(exact_match(pred, gold))
    }
}

#[derive(Clone, Default)]
pub struct HookRegistry {
    hooks: BTreeMap<&'static str, Arc<dyn EquivalenceHook>>,
}

impl HookRegistry {
    pub fn builtin() -> Self {
        let mut r = HookRegistry::default();
        r.register(Arc::new(ExactMatchHook));
        r
    }

    pub fn register(&mut self, hook: Arc<dyn EquivalenceHook>) {
        self.hooks.insert(hook.name(), hook);
    }

    pub fn get(&self, name: &str) -> Result<&dyn EquivalenceHook> {
        self.hooks
            .get(name)
            .map(|h| h.as_ref())
            .ok_or_else(|| Error::HookUnavailable(format!("no equivalence hook named {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.hooks.keys().copied()
    }
}

pub fn hooks() -> &'static HookRegistry {
    static HOOKS: OnceLock<HookRegistry> = OnceLock::new();
    HOOKS.get_or_init(HookRegistry::builtin)
}

pub fn execution_accuracy(records: &[PredictionRecord], hook: Option<&dyn EquivalenceHook>) -> Result<f64> {
    let hook = hook.ok_or_else(|| Error::HookUnavailable("EX needs an equivalence hook".into()))?;
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let mut hits = 0usize;
    for (i, r) in records.iter().enumerate() {
        let gold = r.gold_sql.as_deref().ok_or(Error::MissingGold(i))?;
        hits += usize::from(hook.equivalent(&r.predicted_sql, gold, r.schema.as_deref())?);
    }
    Ok(hits as f64 / records.len() as f64)
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("mae inputs"));
    }
    Ok(predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalQuantile {
    pub delta: f64,
    pub rank: usize,
    /// The rank exceeded the number of residuals; `delta` is the maximum.
    pub insufficient: bool,
}

/// Split-conformal half-width: the `⌈(m+1)(1−α)⌉`-th smallest residual.
pub fn conformal_interval(residuals: &[f64], alpha: f64) -> Result<ConformalQuantile> {
    if residuals.is_empty() {
        return Err(Error::Empty("calibration residuals"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if residuals.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument("residuals must be finite and nonnegative".into()));
    }
    let m = residuals.len();
    let rank = (((m + 1) as f64) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize;
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ConformalQuantile {
        delta: sorted[rank.min(m) - 1],
        rank,
        insufficient: rank > m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub half_width: f64,
    pub alpha: f64,
}

impl Interval {
    pub fn bounds(&self) -> [f64; 2] {
        [
            (self.center - self.half_width).clamp(0.0, 1.0),
            (self.center + self.half_width).clamp(0.0, 1.0),
        ]
    }

    pub fn contains(&self, value: f64) -> bool {
        let [lo, hi] = self.bounds();
        (lo..=hi).contains(&value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub m_hat: f64,
    pub delta_alpha: Option<f64>,
    pub alpha: Option<f64>,
    pub interval: Option<[f64; 2]>,
    pub config_digest: String,
    pub n_target: usize,
    #[serde(default)]
    pub calibration_insufficient: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl AccuracyReport {
    pub fn point(m_hat: f64, config_digest: &str, n_target: usize) -> Self {
        AccuracyReport {
            m_hat,
            delta_alpha: None,
            alpha: None,
            interval: None,
            config_digest: config_digest.to_string(),
            n_target,
            calibration_insufficient: false,
            provenance: None,
        }
    }

    pub fn with_interval(mut self, alpha: f64, q: ConformalQuantile) -> Self {
        let interval = Interval {
            center: self.m_hat,
            half_width: q.delta,
            alpha,
        };
        self.delta_alpha = Some(q.delta);
        self.alpha = Some(alpha);
        self.interval = Some(interval.bounds());
        self.calibration_insufficient = q.insufficient;
        self
    }
}

pub fn read_records(path: &Path) -> Result<Vec<PredictionRecord>> {
    fsutil::read_jsonl(path)
}
