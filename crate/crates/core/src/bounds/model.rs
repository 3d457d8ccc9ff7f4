//! Cost models: what is charged, at what rate, and under which report key.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::poly::rat;
use crate::error::BoundError;
use crate::evm::{family_of, GasFamily, GasSchedule, Instruction, Opcode};
use crate::ingest::{StorageLayout, UNKNOWN_FIELD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Gas,
    Instructions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    All,
    GasFamily,
    Storage,
    StorageOptimization,
    Line,
    Selected,
}

impl Scope {
    pub const ALL: [Scope; 6] =
        [Scope::All, Scope::GasFamily, Scope::Storage, Scope::StorageOptimization, Scope::Line, Scope::Selected];

    pub fn name(self) -> &'static str {
        match self {
            Scope::All => "all",
            Scope::GasFamily => "gas-family",
            Scope::Storage => "storage",
            Scope::StorageOptimization => "storage-optimization",
            Scope::Line => "line",
            Scope::Selected => "selected",
        }
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Gas => "gas",
            Resource::Instructions => "instructions",
        })
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Price used for SSTORE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SstorePricing {
    #[default]
    Worst,
    Best,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostModelConfig {
    pub resource: Resource,
    pub scope: Scope,
    pub filter: Vec<String>,
}

impl CostModelConfig {
    /// Builds a config; the storage-optimization scope always counts
    /// instructions. The flag reports whether the resource was changed.
    pub fn new(resource: Resource, scope: Scope, filter: Vec<String>) -> (Self, bool) {
        let coerced = scope == Scope::StorageOptimization && resource != Resource::Instructions;
        let resource = if scope == Scope::StorageOptimization { Resource::Instructions } else { resource };
        (CostModelConfig { resource, scope, filter }, coerced)
    }

    pub fn gas(scope: Scope) -> Self {
        CostModelConfig::new(Resource::Gas, scope, Vec::new()).0
    }

    pub fn instructions(scope: Scope) -> Self {
        CostModelConfig::new(Resource::Instructions, scope, Vec::new()).0
    }

    pub fn with_filter(mut self, filter: &[&str]) -> Self {
        self.filter = filter.iter().map(|s| s.to_string()).collect();
        self
    }

    fn filter_has(&self, key: &str, case_sensitive: bool) -> bool {
        self.filter.is_empty()
            || self.filter.iter().any(|f| if case_sensitive { f == key } else { f.eq_ignore_ascii_case(key) })
    }

    /// Checks filter tokens against the scope's key domain.
    pub fn validate(&self, layout: Option<&StorageLayout>) -> Result<(), BoundError> {
        let bad = |t: &str| BoundError::BadFilter { scope: self.scope.name().into(), token: t.into() };
        for t in &self.filter {
            let ok = match self.scope {
                Scope::All => false,
                Scope::GasFamily => GasFamily::parse(t).is_some(),
                Scope::Storage | Scope::StorageOptimization => {
                    t == UNKNOWN_FIELD || layout.map_or(true, |l| l.scalar_named(t).is_some())
                }
                Scope::Line => t == UNKNOWN_LINE || t.parse::<u32>().is_ok_and(|l| l > 0),
                Scope::Selected => Opcode::from_mnemonic(t).is_some(),
            };
            if !ok {
                return Err(bad(t));
            }
        }
        Ok(())
    }

    /// Report key a cell is charged to, if any.
    pub fn key_of(&self, cell: &Cell) -> Option<String> {
        match self.scope {
            Scope::All => Some("all".into()),
            Scope::GasFamily => {
                let name = family_of(cell.op).name();
                let hit = self.filter.is_empty()
                    || self.filter.iter().any(|f| GasFamily::parse(f).is_some_and(|g| g == family_of(cell.op)));
                hit.then_some(name)
            }
            Scope::Storage | Scope::StorageOptimization => {
                if !cell.op.is_storage_access() || (self.scope == Scope::StorageOptimization && cell.transitive) {
                    return None;
                }
                let field = cell.field.clone().unwrap_or_else(|| UNKNOWN_FIELD.into());
                self.filter_has(&field, true).then_some(field)
            }
            Scope::Line => {
                let line = cell.line.map_or_else(|| UNKNOWN_LINE.to_string(), |l| l.to_string());
                self.filter_has(&line, true).then_some(line)
            }
            Scope::Selected => {
                let hit = self.filter.is_empty()
                    || self.filter.iter().any(|f| Opcode::from_mnemonic(f) == Some(cell.op));
                hit.then(|| cell.op.mnemonic().to_string())
            }
        }
    }

    /// Keys reported for this scope, given the cells that occur.
    pub fn report_keys<'a>(&self, cells: impl Iterator<Item = &'a Cell>, layout: Option<&StorageLayout>) -> Vec<String> {
        let present: Vec<&Cell> = cells.collect();
        match self.scope {
            Scope::All => vec!["all".into()],
            Scope::GasFamily if self.filter.is_empty() => {
                let mut keys: Vec<String> = GasFamily::NAMED.iter().map(|f| f.name()).collect();
                let singles: BTreeSet<Opcode> = present
                    .iter()
                    .filter(|c| matches!(family_of(c.op), GasFamily::Singleton(_)))
                    .map(|c| c.op)
                    .collect();
                keys.extend(singles.into_iter().map(|o| o.mnemonic().to_string()));
                keys
            }
            Scope::GasFamily => {
                let mut keys: Vec<String> = Vec::new();
                for f in &self.filter {
                    if let Some(name) = GasFamily::parse(f).map(|g| g.name()) {
                        if !keys.contains(&name) {
                            keys.push(name);
                        }
                    }
                }
                keys
            }
            Scope::Storage | Scope::StorageOptimization if self.filter.is_empty() => {
                let mut keys: Vec<String> =
                    layout.map(|l| l.scalars().map(|e| e.name.clone()).collect()).unwrap_or_default();
                if present.iter().any(|c| self.key_of(c).as_deref() == Some(UNKNOWN_FIELD)) {
                    keys.push(UNKNOWN_FIELD.into());
                }
                keys
            }
            Scope::Line if self.filter.is_empty() => {
                let lines: BTreeSet<u32> = present.iter().filter_map(|c| c.line).collect();
                let mut keys: Vec<String> = lines.into_iter().map(|l| l.to_string()).collect();
                if present.iter().any(|c| c.line.is_none()) {
                    keys.push(UNKNOWN_LINE.into());
                }
                keys
            }
            Scope::Selected if self.filter.is_empty() => {
                let ops: BTreeSet<Opcode> = present.iter().map(|c| c.op).collect();
                ops.into_iter().map(|o| o.mnemonic().to_string()).collect()
            }
            Scope::Selected => {
                let mut keys: Vec<String> = Vec::new();
                for f in &self.filter {
                    if let Some(name) = Opcode::from_mnemonic(f).map(|o| o.mnemonic().to_string()) {
                        if !keys.contains(&name) {
                            keys.push(name);
                        }
                    }
                }
                keys
            }
            _ => {
                let mut keys: Vec<String> = Vec::new();
                for f in &self.filter {
                    if !keys.contains(f) {
                        keys.push(f.clone());
                    }
                }
                keys
            }
        }
    }
}

/// Line key for instructions without a source location in file 0.
pub const UNKNOWN_LINE: &str = "unknown";

/// Everything about an instruction that decides its report key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub op: Opcode,
    pub line: Option<u32>,
    /// Accessed field for SLOAD/SSTORE.
    pub field: Option<String>,
    /// Only reached through an internal call.
    pub transitive: bool,
}

/// Static per-instruction price: the schedule's worst case, with SSTORE at
/// the reset price under best-case pricing.
pub fn static_gas(op: Opcode, schedule: &GasSchedule, pricing: SstorePricing) -> u64 {
    if op == Opcode::SSTORE && pricing == SstorePricing::Best {
        schedule.best_case_sstore()
    } else {
        schedule.worst_case_gas(op)
    }
}

/// Metadata about the instruction being charged.
#[derive(Clone, Debug, Default)]
pub struct ChargeContext {
    pub line: Option<u32>,
    pub field: Option<String>,
    pub transitive: bool,
    pub pricing: SstorePricing,
}

/// Static charge of one instruction under a cost model. Word-proportional
/// gas is added by the bound engine.
pub fn charge(
    instruction: &Instruction,
    config: &CostModelConfig,
    schedule: &GasSchedule,
    context: &ChargeContext,
) -> Result<BigRational, BoundError> {
    let cell = Cell {
        op: instruction.opcode,
        line: context.line,
        field: instruction.opcode.is_storage_access().then(|| context.field.clone().unwrap_or_else(|| UNKNOWN_FIELD.into())),
        transitive: context.transitive,
    };
    if config.key_of(&cell).is_none() {
        return Ok(BigRational::zero());
    }
    Ok(match config.resource {
        Resource::Instructions => rat(1),
        Resource::Gas => rat(static_gas(instruction.opcode, schedule, context.pricing) as i128),
    })
}
