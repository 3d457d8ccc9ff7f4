//! Static gas and instruction bounds for EVM runtime bytecode.

pub mod asm;
pub mod bounds;
pub mod cfg;
pub mod error;
pub mod evm;
pub mod fixtures;
pub mod ingest;
pub mod interp;
pub mod optimizer;

pub use cfg::{build_cfg, split_functions, BlockId, Cfg, FunctionUnit};
pub use error::{BoundError, CfgError, DisasmError, IngestError, OptimizeError, ScheduleError};
pub use evm::{disassemble, family_of, worst_case_gas, GasFamily, GasSchedule, Instruction, Opcode};
pub use bounds::{
    compute_bound, family_partition, infer_loop_bound, memory_gas_bound, BoundReport, CostModelConfig, Env,
    FunctionAnalysis, Poly, Resource, Scope, SstorePricing, SymbolicBound,
};
pub use ingest::{parse_source_map, parse_storage_layout, resolve_selector, Selector, SourceMap, StorageLayout};
pub use interp::{execute, measure, ExecResult, MachineState, MeasureContext, Outcome};
pub use optimizer::{
    check_safety, detect_candidates, estimate_savings, optimize_function, summarize_storage, transform,
    OptimizationCandidate, StorageAccessSummary, TransformResult,
};
