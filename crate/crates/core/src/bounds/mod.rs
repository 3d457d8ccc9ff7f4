//! Symbolic upper bounds on gas and instruction counts.

pub mod analysis;
pub mod engine;
pub mod memory;
pub mod model;
pub mod params;
pub mod poly;
pub mod report;

use std::collections::BTreeMap;

pub use analysis::{Env, FunctionAnalysis};
pub use engine::CellVec;
pub use model::{charge, static_gas, Cell, ChargeContext, CostModelConfig, Resource, Scope, SstorePricing};
pub use params::{Param, ParamOrigin, ParamRegistry};
pub use poly::{Evaluated, MemTerm, Poly, SymbolicBound};
pub use report::BoundReport;

use crate::cfg::{Cfg, FunctionUnit, LoopInfo};
use crate::error::BoundError;
use crate::evm::GasSchedule;
use crate::ingest::StorageLayout;

impl FunctionAnalysis<'_> {
    /// Bound report of the function under one cost model.
    pub fn compute(&self, config: &CostModelConfig, env: &Env) -> Result<BoundReport, BoundError> {
        config.validate(Some(&self.layout))?;
        if config.scope == Scope::Line && env.srcmap.is_none_or(|m| m.is_empty()) {
            return Err(BoundError::MissingSourceMap);
        }
        let cells = self.cell_costs(config.resource, env);
        let keys = config.report_keys(cells.keys(), Some(&self.layout));
        let mut sums: BTreeMap<String, SymbolicBound> = BTreeMap::new();
        for (cell, b) in &cells {
            if let Some(k) = config.key_of(cell) {
                let e = sums.entry(k).or_insert_with(SymbolicBound::zero);
                *e = e.add(b);
            }
        }
        let entries = keys
            .into_iter()
            .map(|k| {
                let b = sums.get(&k).cloned().unwrap_or_else(SymbolicBound::zero);
                (k, b)
            })
            .collect();
        let memory_gas =
            (config.scope == Scope::All && config.resource == Resource::Gas).then(|| self.memory_gas(env.schedule));
        Ok(BoundReport {
            function: self.unit.name(),
            selector: self.unit.selector.map(|s| s.to_hex()),
            resource: config.resource,
            scope: config.scope,
            entries,
            memory_gas,
            params: self.params.params.values().cloned().collect(),
        })
    }
}

/// Bound report for one function of a CFG.
pub fn compute_bound(
    cfg: &Cfg,
    unit: &FunctionUnit,
    layout: Option<&StorageLayout>,
    config: &CostModelConfig,
    env: &Env,
) -> Result<BoundReport, BoundError> {
    FunctionAnalysis::new(cfg, unit, layout).compute(config, env)
}

/// Gas bound split by gas family.
pub fn family_partition(
    cfg: &Cfg,
    unit: &FunctionUnit,
    env: &Env,
) -> Result<BTreeMap<String, SymbolicBound>, BoundError> {
    let report = compute_bound(cfg, unit, None, &CostModelConfig::gas(Scope::GasFamily), env)?;
    Ok(report.entries.into_iter().collect())
}

/// Bound on the number of iterations of a loop of the analyzed function.
pub fn infer_loop_bound(analysis: &FunctionAnalysis, info: &LoopInfo) -> SymbolicBound {
    if info.irreducible {
        return SymbolicBound::unbounded();
    }
    analysis.loop_bound_symbolic(info.header)
}

/// Memory expansion gas bound of a function.
pub fn memory_gas_bound(cfg: &Cfg, unit: &FunctionUnit, schedule: &GasSchedule) -> SymbolicBound {
    FunctionAnalysis::new(cfg, unit, None).memory_gas(schedule)
}
