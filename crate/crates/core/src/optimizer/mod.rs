//! Detection of repeated storage accesses and their source-level caching.

pub mod transform;

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use primitive_types::U256;
use serde_json::{json, Value};

use crate::bounds::engine::{as_poly, total, CellVec};
use crate::bounds::poly::Poly;
use crate::bounds::{static_gas, Env, FunctionAnalysis, Resource, SstorePricing, SymbolicBound};
use crate::cfg::values::SymValue;
use crate::error::OptimizeError;
use crate::evm::{GasSchedule, Opcode};

pub use transform::{getter_name, setter_name, transform, Transformed};

/// Gas of the memory operation replacing one cached storage access.
pub const MEMORY_OP_GAS: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldAccess {
    pub slot: U256,
    pub reads: SymbolicBound,
    pub writes: SymbolicBound,
    pub total: SymbolicBound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageAccessSummary {
    pub function: String,
    /// Basic fields of the layout accessed by the function itself.
    pub per_field: BTreeMap<String, FieldAccess>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationCandidate {
    pub function: String,
    pub field: String,
    pub slot: U256,
    pub reads: SymbolicBound,
    pub writes: SymbolicBound,
    pub total_bound: SymbolicBound,
    pub read_only: bool,
    pub safe: bool,
    pub reason_if_unsafe: Option<String>,
}

/// Fraction of gas saved, in `[0, 1]`, under both SSTORE prices.
#[derive(Clone, Debug, PartialEq)]
pub struct Savings {
    pub worst: BigRational,
    pub best: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformResult {
    pub new_source: String,
    pub getter_name: String,
    pub setter_name: Option<String>,
    pub savings_worst: BigRational,
    pub savings_best: BigRational,
}

fn field_cells<'a>(cells: &'a CellVec, field: &'a str, op: Option<Opcode>) -> impl Iterator<Item = &'a SymbolicBound> {
    cells
        .iter()
        .filter(move |(c, _)| {
            c.op.is_storage_access() && !c.transitive && c.field.as_deref() == Some(field) && op.is_none_or(|o| o == c.op)
        })
        .map(|(_, b)| b)
}

fn sum<'a>(it: impl Iterator<Item = &'a SymbolicBound>) -> SymbolicBound {
    it.fold(SymbolicBound::zero(), |acc, b| acc.add(b))
}

/// Per-field SLOAD/SSTORE counts of the function, without transitive calls.
pub fn summarize_storage(analysis: &FunctionAnalysis) -> StorageAccessSummary {
    let schedule = GasSchedule::default();
    let cells = analysis.cell_costs(Resource::Instructions, &Env::new(&schedule));
    let mut per_field = BTreeMap::new();
    for entry in analysis.layout.scalars() {
        let reads = sum(field_cells(&cells, &entry.name, Some(Opcode::SLOAD)));
        let writes = sum(field_cells(&cells, &entry.name, Some(Opcode::SSTORE)));
        let total = reads.add(&writes);
        if !total.is_zero() {
            per_field.insert(entry.name.clone(), FieldAccess { slot: entry.slot, reads, writes, total });
        }
    }
    StorageAccessSummary { function: analysis.unit.name(), per_field }
}

/// One candidate per field whose access bound is not exactly one.
pub fn detect_candidates(summary: &StorageAccessSummary) -> Vec<OptimizationCandidate> {
    summary
        .per_field
        .iter()
        .filter(|(_, a)| !a.total.is_one() && !a.total.is_zero())
        .map(|(name, a)| OptimizationCandidate {
            function: summary.function.clone(),
            field: name.clone(),
            slot: a.slot,
            reads: a.reads.clone(),
            writes: a.writes.clone(),
            total_bound: a.total.clone(),
            read_only: a.writes.is_zero(),
            safe: true,
            reason_if_unsafe: None,
        })
        .collect()
}

/// Marks the candidate unsafe when caching could be observed by other code.
pub fn check_safety(candidate: &OptimizationCandidate, analysis: &FunctionAnalysis) -> OptimizationCandidate {
    let mut out = candidate.clone();
    let cfg = analysis.cfg;
    let external = analysis
        .graph
        .nodes
        .iter()
        .any(|b| cfg.block(*b).instructions.iter().any(|i| i.opcode.is_external_call()));
    let transitive = analysis.graph.transitive.iter().any(|b| {
        cfg.block(*b).instructions.iter().filter(|i| i.opcode.is_storage_access()).any(|i| {
            match analysis.slot_of(i.pc) {
                Some(slot) => slot == candidate.slot,
                None => analysis.facts.operand(i.pc, 0) != SymValue::Hashed,
            }
        })
    });
    let reason = if external {
        Some("external call")
    } else if transitive {
        Some("transitive access")
    } else {
        None
    };
    out.safe = reason.is_none();
    out.reason_if_unsafe = reason.map(String::from);
    out
}

fn growth(p: &Poly) -> BigRational {
    p.terms().filter(|(m, _)| !m.is_empty()).fold(BigRational::zero(), |acc, (_, c)| acc + c)
}

fn clamp_unit(q: BigRational) -> BigRational {
    if q.is_negative() {
        BigRational::zero()
    } else if q > BigRational::one() {
        BigRational::one()
    } else {
        q
    }
}

fn savings_under(analysis: &FunctionAnalysis, candidate: &OptimizationCandidate, env: &Env) -> BigRational {
    let gas = analysis.cell_costs(Resource::Gas, env);
    let counts = analysis.cell_costs(Resource::Instructions, env);
    let field = candidate.field.as_str();
    let cached_gas = sum(field_cells(&gas, field, None));
    let accesses = sum(field_cells(&counts, field, None));
    let mut once = static_gas(Opcode::SLOAD, env.schedule, env.pricing);
    if !candidate.read_only {
        once += static_gas(Opcode::SSTORE, env.schedule, env.pricing);
    }
    let replaced = accesses.scale(MEMORY_OP_GAS).add(&SymbolicBound::constant(once));
    let (Some(cached), Some(replaced)) = (as_poly(&cached_gas), as_poly(&replaced)) else {
        return BigRational::zero();
    };
    if candidate.total_bound.is_constant() {
        let orig = cached.constant_term();
        if orig.is_zero() {
            return BigRational::zero();
        }
        return clamp_unit(BigRational::one() - replaced.constant_term() / orig);
    }
    let Some(original) = as_poly(&total(&gas)).cloned() else {
        return BigRational::zero();
    };
    let optimized = original.sub(cached).add(replaced);
    let g = growth(&original);
    if g.is_zero() {
        return BigRational::zero();
    }
    clamp_unit(BigRational::one() - growth(&optimized) / g)
}

/// Estimated relative reduction of the function's per-iteration gas (or of
/// the field's access gas when its bound is constant) after caching.
pub fn estimate_savings(analysis: &FunctionAnalysis, candidate: &OptimizationCandidate, schedule: &GasSchedule) -> Savings {
    let worst = savings_under(analysis, candidate, &Env::new(schedule).with_pricing(SstorePricing::Worst));
    let best = savings_under(analysis, candidate, &Env::new(schedule).with_pricing(SstorePricing::Best));
    Savings { worst, best }
}

pub fn ratio_to_f64(q: &BigRational) -> f64 {
    q.numer().to_f64().unwrap_or(0.0) / q.denom().to_f64().unwrap_or(1.0)
}

impl OptimizationCandidate {
    pub fn to_json(&self, savings: Option<&Savings>) -> Value {
        json!({
            "function": self.function,
            "field": self.field,
            "total_bound": self.total_bound.render(),
            "reads": self.reads.render(),
            "writes": self.writes.render(),
            "read_only": self.read_only,
            "safe": self.safe,
            "reason": self.reason_if_unsafe,
            "savings_worst": savings.map(|s| ratio_to_f64(&s.worst)),
            "savings_best": savings.map(|s| ratio_to_f64(&s.best)),
        })
    }
}

/// Outcome of optimizing one function.
#[derive(Clone, Debug)]
pub struct OptimizationReport {
    pub candidates: Vec<(OptimizationCandidate, Savings)>,
    /// Source with every safe candidate transformed, if any was.
    pub new_source: Option<String>,
    pub results: Vec<TransformResult>,
}

impl OptimizationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "candidates": self.candidates.iter().map(|(c, s)| c.to_json(Some(s))).collect::<Vec<_>>(),
            "transformed": self.results.iter().map(|r| json!({
                "getter": r.getter_name,
                "setter": r.setter_name,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Detects, checks and transforms every candidate of one function.
pub fn optimize_function(
    analysis: &FunctionAnalysis,
    source: &str,
    function: &str,
    schedule: &GasSchedule,
) -> Result<OptimizationReport, OptimizeError> {
    let summary = summarize_storage(analysis);
    let mut candidates = Vec::new();
    let mut results = Vec::new();
    let mut current = source.to_string();
    for c in detect_candidates(&summary) {
        let c = check_safety(&c, analysis);
        let savings = estimate_savings(analysis, &c, schedule);
        if c.safe {
            let t = transform(&current, function, &c)?;
            current = t.new_source.clone();
            results.push(TransformResult {
                new_source: t.new_source,
                getter_name: t.getter_name,
                setter_name: t.setter_name,
                savings_worst: savings.worst.clone(),
                savings_best: savings.best.clone(),
            });
        }
        candidates.push((c, savings));
    }
    let new_source = (!results.is_empty()).then_some(current);
    Ok(OptimizationReport { candidates, new_source, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::poly::rat;
    use crate::fixtures;

    fn analysis_of<'c>(cfg: &'c crate::cfg::Cfg, f: &fixtures::Fixture) -> FunctionAnalysis<'c> {
        let split = f.split(cfg);
        let u = split.find(f.functions[0].signature).unwrap();
        FunctionAnalysis::new(cfg, u, Some(&f.layout()))
    }

    #[test]
    fn fill_summary_and_candidate() {
        let f = fixtures::fill();
        let cfg = f.cfg();
        let a = analysis_of(&cfg, &f);
        let s = summarize_storage(&a);
        let ts = &s.per_field["totalSupply"];
        assert_eq!(ts.reads.render(), "data");
        assert_eq!(ts.writes.render(), "data");
        assert_eq!(ts.total.render(), "2*data");
        let c = detect_candidates(&s);
        assert_eq!(c.len(), 1);
        assert!(!c[0].read_only);
        assert!(check_safety(&c[0], &a).safe);
    }

    #[test]
    fn read_only_savings_formula() {
        let f = fixtures::read_only();
        let cfg = f.cfg();
        let a = analysis_of(&cfg, &f);
        let c = detect_candidates(&summarize_storage(&a));
        assert!(c[0].read_only);
        let sched = GasSchedule::default();
        let s = estimate_savings(&a, &c[0], &sched);
        let sload = sched.sload as i128;
        let want = (rat(3 * sload) - rat(sload + 9)) / rat(3 * sload);
        assert_eq!(s.worst, want);
        assert_eq!(s.best, want);
    }

    #[test]
    fn single_access_is_not_a_candidate() {
        let f = fixtures::multi_function();
        let cfg = f.cfg();
        let a = analysis_of(&cfg, &f);
        assert!(detect_candidates(&summarize_storage(&a)).is_empty());
    }

    #[test]
    fn unsafe_fixtures() {
        for (f, reason) in [(fixtures::transitive_access(), "transitive access"), (fixtures::external_call(), "external call")] {
            let cfg = f.cfg();
            let a = analysis_of(&cfg, &f);
            let c = detect_candidates(&summarize_storage(&a));
            let ts = c.iter().find(|c| c.field == "totalSupply").unwrap();
            let checked = check_safety(ts, &a);
            assert!(!checked.safe, "{}", f.name);
            assert_eq!(checked.reason_if_unsafe.as_deref(), Some(reason));
        }
    }
}
