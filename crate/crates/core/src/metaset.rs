//! Supervision meta-sets and the spending model used to build them.
//!
//! Costs are tracked in integer units of 10⁻⁵ currency so that the ledger's
//! running total is always the exact sum of its charges.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::{compute_delta, ShiftDescriptor, SwdConfig};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::seed;
use crate::workload::EmbeddingSet;

/// Currency units per cost unit.
pub const UNITS_PER_CURRENCY: f64 = 1e5;
/// Default number of samples charged per generation batch.
pub const DEFAULT_CHARGE_BATCH: u64 = 24;

/// One `(Δ, accuracy)` supervision pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaInstance {
    pub task_id: String,
    pub sample_set_id: String,
    pub sample_set_size: usize,
    pub delta: ShiftDescriptor,
    pub accuracy: f64,
}

pub fn read_meta_set(path: &Path) -> Result<Vec<MetaInstance>> {
    fsutil::read_jsonl(path)
}

pub fn write_meta_set(path: &Path, instances: &[MetaInstance]) -> Result<()> {
    fsutil::write_jsonl(path, instances)
}

/// Pairs the descriptor of `sample_set` against `train_set` with a known accuracy.
pub fn build_meta_instance(
    train_set: &EmbeddingSet,
    sample_set: &EmbeddingSet,
    accuracy: f64,
    cfg: &SwdConfig,
    variance_floor: f64,
    task_id: &str,
    sample_set_id: &str,
) -> Result<MetaInstance> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::InvalidArgument(format!(
            "accuracy {accuracy} outside [0, 1]"
        )));
    }
    Ok(MetaInstance {
        task_id: task_id.to_string(),
        sample_set_id: sample_set_id.to_string(),
        sample_set_size: sample_set.rows(),
        delta: compute_delta(train_set, sample_set, cfg, variance_floor)?,
        accuracy,
    })
}

/// `n_sets` index sets over `0..corpus_size`, sizes log-uniform in
/// `[min_size, max_size]`. Set `i` uses its own stream derived from `seed`.
pub fn draw_sample_sets(
    corpus_size: usize,
    n_sets: usize,
    max_size: usize,
    min_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if min_size == 0 || min_size > max_size || max_size > corpus_size {
        return Err(Error::InvalidBounds(format!(
            "need 1 <= min_size ({min_size}) <= max_size ({max_size}) <= corpus_size ({corpus_size})"
        )));
    }
    let (lo, hi) = ((min_size as f64).ln(), (max_size as f64).ln());
    Ok((0..n_sets)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let size = if lo == hi {
                min_size
            } else {
                let u: f64 = rng.random_range(lo..=hi);
                (u.exp().round() as usize).clamp(min_size, max_size)
            };
            index::sample(&mut rng, corpus_size, size).into_vec()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub c_gen: f64,
    pub c_val: f64,
    pub c_exec: f64,
    pub gen_multiplier: f64,
    pub val_multiplier: f64,
    pub exec_multiplier: f64,
    /// Total budget.
    pub budget: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            c_gen: 0.00012,
            c_val: 0.00003,
            c_exec: 0.0004,
            gen_multiplier: 1.05,
            val_multiplier: 1.05,
            exec_multiplier: 0.10,
            budget: 1000.0,
        }
    }
}

fn to_units(name: &str, value: f64) -> Result<u64> {
    let scaled = value * UNITS_PER_CURRENCY;
    let rounded = scaled.round();
    if !(value >= 0.0) || (scaled - rounded).abs() > 1e-6 || rounded > u64::MAX as f64 {
        return Err(Error::InvalidValue {
            key: name.to_string(),
            reason: format!("{value} is not a nonnegative multiple of 1e-5"),
        });
    }
    Ok(rounded as u64)
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_gen", self.c_gen),
            ("c_val", self.c_val),
            ("c_exec", self.c_exec),
            ("gen_multiplier", self.gen_multiplier),
            ("val_multiplier", self.val_multiplier),
            ("exec_multiplier", self.exec_multiplier),
        ];
        for (key, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidValue {
                    key: key.into(),
                    reason: format!("{v} must be finite and nonnegative"),
                });
            }
        }
        if !(self.budget > 0.0) {
            return Err(Error::InvalidValue {
                key: "budget".into(),
                reason: "must be positive".into(),
            });
        }
        self.rates().map(|_| ())
    }

    pub fn rates(&self) -> Result<CostRates> {
        Ok(CostRates {
            gen: to_units("c_gen", self.c_gen)?,
            val: to_units("c_val", self.c_val)?,
            exec: to_units("c_exec", self.c_exec)?,
        })
    }

    pub fn budget_units(&self) -> Result<u64> {
        to_units("budget", self.budget)
    }
}

/// Per-sample costs in integer units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRates {
    pub gen: u64,
    pub val: u64,
    pub exec: u64,
}

impl CostRates {
    fn of(&self, kind: ChargeKind) -> u64 {
        match kind {
            ChargeKind::Gen => self.gen,
            ChargeKind::Val => self.val,
            ChargeKind::Exec => self.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub accepted_pairs: u64,
    pub expected_cost: f64,
    pub budget: f64,
    pub feasible: bool,
}

/// Expected spend for `accepted_pairs` accepted pairs:
/// `N·(m_gen·c_gen + m_val·c_val + m_exec·c_exec)`.
pub fn plan_budget(cm: &CostModel, accepted_pairs: u64) -> Result<BudgetPlan> {
    cm.validate()?;
    let per_pair =
        cm.gen_multiplier * cm.c_gen + cm.val_multiplier * cm.c_val + cm.exec_multiplier * cm.c_exec;
    let expected_cost = accepted_pairs as f64 * per_pair;
    Ok(BudgetPlan {
        accepted_pairs,
        expected_cost,
        budget: cm.budget,
        feasible: expected_cost <= cm.budget,
    })
}

/// `db_count·(cap_gen·(c_gen + c_val) + cap_exec·c_exec)`, computed exactly in units.
pub fn worst_case_bound(cm: &CostModel, db_count: u64, cap_gen: u64, cap_exec: u64) -> Result<f64> {
    let r = cm.rates()?;
    let units = db_count as u128
        * (cap_gen as u128 * (r.gen + r.val) as u128 + cap_exec as u128 * r.exec as u128);
    Ok(units as f64 / UNITS_PER_CURRENCY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ChargeKind {
    Gen,
    Val,
    Exec,
}

impl ChargeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChargeKind::Gen => "gen",
            ChargeKind::Val => "val",
            ChargeKind::Exec => "exec",
        }
    }
}

impl std::str::FromStr for ChargeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen" => Ok(ChargeKind::Gen),
            "val" => Ok(ChargeKind::Val),
            "exec" => Ok(ChargeKind::Exec),
            other => Err(Error::InvalidArgument(format!("unknown charge kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbCounters {
    pub gen: u64,
    pub val: u64,
    pub exec: u64,
}

impl DbCounters {
    fn get_mut(&mut self, kind: ChargeKind) -> &mut u64 {
        match kind {
            ChargeKind::Gen => &mut self.gen,
            ChargeKind::Val => &mut self.val,
            ChargeKind::Exec => &mut self.exec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub gen: u64,
    pub exec: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { gen: 160, exec: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChargeReceipt {
    pub cost_units: u64,
    pub total_units: u64,
}

/// Per-database spend counters with caps on generation and execution.
/// Validation checks are bounded only by the global budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    rates: CostRates,
    caps: Caps,
    budget_units: u64,
    total_units: u64,
    databases: BTreeMap<String, DbCounters>,
}

impl BudgetLedger {
    pub fn new(cm: &CostModel, caps: Caps) -> Result<Self> {
        cm.validate()?;
        Ok(BudgetLedger {
            rates: cm.rates()?,
            caps,
            budget_units: cm.budget_units()?,
            total_units: 0,
            databases: BTreeMap::new(),
        })
    }

    /// Applies a charge atomically; on rejection nothing changes.
    pub fn charge(&mut self, db_id: &str, kind: ChargeKind, count: u64) -> Result<ChargeReceipt> {
        if count == 0 {
            return Err(Error::InvalidArgument("charge count must be positive".into()));
        }
        let current = self.databases.get(db_id).copied().unwrap_or_default();
        let cap = match kind {
            ChargeKind::Gen => Some(self.caps.gen),
            ChargeKind::Exec => Some(self.caps.exec),
            ChargeKind::Val => None,
        };
        let mut next = current;
        let slot = next.get_mut(kind);
        let over_cap = match slot.checked_add(count) {
            Some(v) => {
                *slot = v;
                cap.is_some_and(|c| v > c)
            }
            None => true,
        };
        if over_cap {
            return Err(Error::CapExceeded {
                db_id: db_id.to_string(),
                kind: kind.as_str().to_string(),
            });
        }
        let remaining = self.budget_units - self.total_units;
        let cost = self.rates.of(kind).checked_mul(count);
        match cost {
            Some(cost) if cost <= remaining => {
                self.total_units += cost;
                self.databases.insert(db_id.to_string(), next);
                Ok(ChargeReceipt {
                    cost_units: cost,
                    total_units: self.total_units,
                })
            }
            _ => Err(Error::BudgetExhausted {
                requested: cost.unwrap_or(u64::MAX),
                remaining,
            }),
        }
    }

    pub fn total_units(&self) -> u64 {
        self.total_units
    }

    pub fn total_cost(&self) -> f64 {
        self.total_units as f64 / UNITS_PER_CURRENCY
    }

    pub fn budget_units(&self) -> u64 {
        self.budget_units
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn counters(&self, db_id: &str) -> DbCounters {
        self.databases.get(db_id).copied().unwrap_or_default()
    }

    pub fn databases(&self) -> &BTreeMap<String, DbCounters> {
        &self.databases
    }

    /// Recomputes the total from the counters.
    pub fn recomputed_units(&self) -> u128 {
        self.databases
            .values()
            .map(|c| {
                c.gen as u128 * self.rates.gen as u128
                    + c.val as u128 * self.rates.val as u128
                    + c.exec as u128 * self.rates.exec as u128
            })
            .sum()
    }

    /// Checks the ledger invariants; used when loading a snapshot.
    pub fn verify(&self) -> Result<()> {
        if self.recomputed_units() != self.total_units as u128 {
            return Err(Error::InvalidArgument("ledger total disagrees with counters".into()));
        }
        if self.total_units > self.budget_units {
            return Err(Error::InvalidArgument("ledger total exceeds budget".into()));
        }
        if let Some((db, _)) = self
            .databases
            .iter()
            .find(|(_, c)| c.gen > self.caps.gen || c.exec > self.caps.exec)
        {
            return Err(Error::CapExceeded {
                db_id: db.clone(),
                kind: "snapshot".into(),
            });
        }
        Ok(())
    }

    pub fn snapshot_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("ledger serializes");
        v["total_cost"] = serde_json::json!(self.total_cost());
        v["budget"] = serde_json::json!(self.budget_units as f64 / UNITS_PER_CURRENCY);
        v
    }

    pub fn from_snapshot(value: serde_json::Value) -> Result<Self> {
        let mut value = value;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("total_cost");
            obj.remove("budget");
            obj.remove("provenance");
        }
        let ledger: BudgetLedger = serde_json::from_value(value)?;
        ledger.verify()?;
        Ok(ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plan_reproduces_reference_total() {
        let plan = plan_budget(&CostModel::default(), 3_373_204).unwrap();
        assert!((plan.expected_cost - 666.21).abs() <= 0.01, "{}", plan.expected_cost);
        assert!(plan.feasible);
        let zero = plan_budget(&CostModel::default(), 0).unwrap();
        assert_eq!(zero.expected_cost, 0.0);
        assert!(zero.feasible);
    }

    #[test]
    fn plan_feasibility_boundary() {
        // Per-pair cost 0.0001975 puts the threshold at B / 0.0001975 = 5_063_291.1...
        let cm = CostModel::default();
        assert!(plan_budget(&cm, 5_063_291).unwrap().feasible);
        assert!(!plan_budget(&cm, 5_063_292).unwrap().feasible);
    }

    #[test]
    fn worst_case_examples() {
        let cm = CostModel::default();
        assert!((worst_case_bound(&cm, 24_625, 160, 40).unwrap() - 985.0).abs() <= 0.005);
        assert_eq!(worst_case_bound(&cm, 0, 160, 40).unwrap(), 0.0);
        assert!((worst_case_bound(&cm, 1, 1, 0).unwrap() - 0.00015).abs() < 1e-15);
    }

    #[test]
    fn rates_must_be_unit_multiples() {
        let cm = CostModel {
            c_gen: 0.000123,
            ..CostModel::default()
        };
        assert!(matches!(cm.validate(), Err(Error::InvalidValue { .. })));
    }

    #[test]
    fn generation_cap() {
        let mut ledger = BudgetLedger::new(&CostModel::default(), Caps::default()).unwrap();
        ledger.charge("db1", ChargeKind::Gen, 160).unwrap();
        let before = ledger.clone();
        assert!(matches!(
            ledger.charge("db1", ChargeKind::Gen, 1),
            Err(Error::CapExceeded { .. })
        ));
        assert_eq!(ledger, before);
        ledger.charge("db2", ChargeKind::Gen, 1).unwrap();
    }

    #[test]
    fn validation_runs_until_budget() {
        let cm = CostModel {
            budget: 0.001,
            ..CostModel::default()
        };
        let mut ledger = BudgetLedger::new(&cm, Caps::default()).unwrap();
        // 100 units of budget, 3 units per validation: 33 accepted.
        let mut accepted = 0;
        loop {
            match ledger.charge("db", ChargeKind::Val, 1) {
                Ok(_) => accepted += 1,
                Err(Error::BudgetExhausted { .. }) => break,
                Err(e) => panic!("{e}"),
            }
        }
        assert_eq!(accepted, 33);
        assert_eq!(ledger.total_units(), 99);
        let before = ledger.clone();
        assert!(ledger.charge("db", ChargeKind::Val, 1).is_err());
        assert_eq!(ledger, before);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut ledger = BudgetLedger::new(&CostModel::default(), Caps::default()).unwrap();
        ledger.charge("a", ChargeKind::Gen, 24).unwrap();
        ledger.charge("a", ChargeKind::Exec, 3).unwrap();
        let snap = ledger.snapshot_json();
        assert!((snap["total_cost"].as_f64().unwrap() - (24.0 * 0.00012 + 3.0 * 0.0004)).abs() < 1e-12);
        assert_eq!(BudgetLedger::from_snapshot(snap).unwrap(), ledger);
    }

    #[test]
    fn sample_set_contracts() {
        let fixed = draw_sample_sets(50, 5, 7, 7, 1).unwrap();
        assert!(fixed.iter().all(|s| s.len() == 7));
        let sets = draw_sample_sets(100, 20, 60, 2, 3).unwrap();
        assert!(sets.iter().flatten().all(|&i| i < 100));
        assert_eq!(sets, draw_sample_sets(100, 20, 60, 2, 3).unwrap());
        assert!(matches!(draw_sample_sets(10, 1, 11, 1, 0), Err(Error::InvalidBounds(_))));
        assert!(matches!(draw_sample_sets(10, 1, 3, 4, 0), Err(Error::InvalidBounds(_))));
        assert!(matches!(draw_sample_sets(10, 1, 3, 0, 0), Err(Error::InvalidBounds(_))));
    }

    #[test]
    fn sizes_are_log_uniform() {
        let sets = draw_sample_sets(10_000, 10_000, 10_000, 100, 17).unwrap();
        let low = sets.iter().filter(|s| s.len() < 1000).count() as f64 / 1e4;
        let high = 1.0 - low;
        // Log-uniform on [100, 10^4] gives half the mass to each decade.
        assert!(low >= 0.2 && high >= 0.2, "low {low} high {high}");
        assert!((low - 0.5).abs() < 0.03);
        assert!(sets.iter().any(|s| s.len() < 150) && sets.iter().any(|s| s.len() > 9000));
    }

    #[test]
    fn meta_instance_requires_valid_accuracy() {
        let s = EmbeddingSet::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]).unwrap();
        let cfg = SwdConfig::hybrid(1, 2);
        let m = build_meta_instance(&s, &s, 0.7, &cfg, 1e-8, "model", "s0").unwrap();
        assert_eq!(m.delta.sd_f, 0.0);
        assert_eq!(m.delta.sd_sw, 0.0);
        assert_eq!(m.delta.euclid_mean, 0.0);
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m, build_meta_instance(&s, &s, 0.7, &cfg, 1e-8, "model", "s0").unwrap());
        assert!(build_meta_instance(&s, &s, 1.2, &cfg, 1e-8, "model", "s0").is_err());
    }

    fn arb_charge() -> impl Strategy<Value = (u8, u8, u64)> {
        (0u8..4, 0u8..3, 1u64..60)
    }

    proptest! {
        #[test]
        fn ledger_conserves_cost(charges in proptest::collection::vec(arb_charge(), 1..200)) {
            let cm = CostModel { budget: 0.5, ..CostModel::default() };
            let mut ledger = BudgetLedger::new(&cm, Caps::default()).unwrap();
            for (db, kind, count) in charges {
                let kind = [ChargeKind::Gen, ChargeKind::Val, ChargeKind::Exec][kind as usize];
                let _ = ledger.charge(&format!("db{db}"), kind, count);
                prop_assert_eq!(ledger.recomputed_units(), ledger.total_units() as u128);
                prop_assert!(ledger.total_units() <= ledger.budget_units());
                for c in ledger.databases().values() {
                    prop_assert!(c.gen <= 160 && c.exec <= 40);
                }
            }
        }
    }
}
