use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisasmError {
    #[error("PUSH immediate at pc {pc} runs past end of code")]
    TruncatedPush { pc: usize },
    #[error("invalid hex bytecode: {0}")]
    BadHex(String),
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("malformed gas schedule: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid gas schedule: {0}")]
    Invalid(String),
    #[error("unknown gas family {0:?}")]
    UnknownFamily(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CfgError {
    #[error("jump at pc {pc} targets {target:#x}, which is not a JUMPDEST")]
    InvalidJumpTarget { pc: usize, target: primitive_types::U256 },
    #[error("jump target at pc {pc} could not be resolved")]
    UnresolvedJump { pc: usize },
    #[error("no function dispatcher found")]
    NoDispatcher,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed storage layout at entry {index}: {reason}")]
    MalformedLayout { index: usize, reason: String },
    #[error("malformed storage layout: {0}")]
    LayoutJson(#[from] serde_json::Error),
    #[error("malformed source map at entry {index}: {reason}")]
    MalformedSrcmap { index: usize, reason: String },
    #[error("bad selector {0:?}: expected 0x + 8 hex digits or a signature name(type,...)")]
    BadSelector(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundError {
    #[error("the line cost model requires a source map")]
    MissingSourceMap,
    #[error("no binding for parameter {0:?}")]
    MissingBinding(String),
    #[error("unknown filter token {token:?} for scope {scope}")]
    BadFilter { scope: String, token: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OptimizeError {
    #[error("function {0:?} not found in source")]
    FunctionNotFound(String),
    #[error("unsupported syntax: {0}")]
    UnsupportedSyntax(String),
    #[error("candidate for field {0:?} is not safe to transform")]
    Unsafe(String),
}
