use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evmbound_core::bounds::{BoundReport, CostModelConfig, Env, FunctionAnalysis, Resource, Scope, SstorePricing};
use evmbound_core::cfg::dot::to_dot;
use evmbound_core::cfg::{build_cfg, split_functions, FunctionSplit, FunctionUnit, UnitKind};
use evmbound_core::evm::{disassemble, parse_hex, GasSchedule};
use evmbound_core::ingest::{parse_source_map, parse_storage_layout, resolve_selector, SourceMap, StorageLayout};
use evmbound_core::interp::execute;
use evmbound_core::optimizer::optimize_function;
use primitive_types::U256;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "evmbound", version, about = "Parametric gas and instruction bounds for EVM bytecode")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound the cost of public functions under a cost model
    Analyze(AnalyzeArgs),
    /// Same as `analyze --optimize`
    Optimize(AnalyzeArgs),
    /// List the functions found through the dispatcher
    Functions(FunctionsArgs),
    /// Run bytecode in the reference interpreter
    #[command(hide = true)]
    Exec(ExecArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ResourceArg {
    Gas,
    Instructions,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    GasFamily,
    Storage,
    StorageOptimization,
    Line,
    Selected,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Pricing {
    #[default]
    Worst,
    Best,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Runtime bytecode as hex (0x prefix and whitespace allowed)
    bytecode: PathBuf,
    #[arg(long, value_enum)]
    resource: Option<ResourceArg>,
    #[arg(long, visible_alias = "scope", value_enum)]
    model: Option<ScopeArg>,
    /// Comma-separated keys: fields, lines, families or mnemonics
    #[arg(long, value_delimiter = ',')]
    filter: Vec<String>,
    /// Selector (0x12345678) or canonical signature; repeatable
    #[arg(long)]
    function: Vec<String>,
    /// File with one canonical signature per line
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Storage layout JSON
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Compressed runtime source map
    #[arg(long, requires = "source")]
    srcmap: Option<PathBuf>,
    /// Source file the source map indexes into
    #[arg(long)]
    source: Option<PathBuf>,
    /// Solidity file to rewrite with --optimize (defaults to --source)
    #[arg(long)]
    sol: Option<PathBuf>,
    #[arg(long)]
    optimize: bool,
    /// Gas schedule JSON
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// SSTORE price used by the bounds
    #[arg(long, value_enum, default_value_t)]
    sstore: Pricing,
    /// Write the control flow graph in Graphviz format
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct FunctionsArgs {
    bytecode: PathBuf,
    #[arg(long)]
    signatures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ExecArgs {
    /// Bytecode as hex text
    code: String,
    #[arg(long, default_value = "")]
    calldata: String,
    /// Storage JSON object mapping slots to values
    #[arg(long)]
    storage: Option<String>,
    #[arg(long, default_value_t = 30_000_000)]
    gas_limit: u64,
    #[arg(long)]
    schedule: Option<PathBuf>,
}

/// A failure reported to the user with exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn with_path<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_schedule(path: Option<&Path>) -> Result<GasSchedule, Failure> {
    match path {
        Some(p) => with_path(p, GasSchedule::from_json(&read(p)?)),
        None => Ok(GasSchedule::default()),
    }
}

fn load_signatures(path: Option<&Path>) -> Result<Vec<String>, Failure> {
    let Some(p) = path else { return Ok(vec![]) };
    Ok(read(p)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect())
}

fn scope_of(s: ScopeArg) -> Scope {
    match s {
        ScopeArg::All => Scope::All,
        ScopeArg::GasFamily => Scope::GasFamily,
        ScopeArg::Storage => Scope::Storage,
        ScopeArg::StorageOptimization => Scope::StorageOptimization,
        ScopeArg::Line => Scope::Line,
        ScopeArg::Selected => Scope::Selected,
    }
}

fn opt_path(source: &Path, suffix: &str) -> PathBuf {
    let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    source.with_file_name(format!("{stem}_opt.{suffix}"))
}

fn select_units<'a>(split: &'a FunctionSplit, queries: &[String]) -> Result<Vec<&'a FunctionUnit>, Failure> {
    if queries.is_empty() {
        let public: Vec<&FunctionUnit> = split.units.iter().filter(|u| u.kind != UnitKind::Fallback).collect();
        return Ok(public);
    }
    queries
        .iter()
        .map(|q| {
            let r = resolve_selector(q)?;
            split.by_selector(r.selector).ok_or_else(|| Failure(format!("function {q} not found in dispatcher")))
        })
        .collect()
}

fn analyze(args: AnalyzeArgs, force_optimize: bool) -> Result<ExitCode, Failure> {
    let optimize = args.optimize || force_optimize;
    let scope = match (args.model, optimize) {
        (Some(s), _) => scope_of(s),
        (None, true) => Scope::StorageOptimization,
        (None, false) => Scope::All,
    };
    if optimize && scope != Scope::StorageOptimization {
        return Err(Failure("--optimize requires --model storage-optimization".into()));
    }
    if scope == Scope::Line && (args.srcmap.is_none() || args.source.is_none()) {
        return Err(Failure("--model line requires --srcmap and --source".into()));
    }
    let sol_path = args.sol.clone().or_else(|| args.source.clone());
    if optimize && sol_path.is_none() {
        return Err(Failure("--optimize requires a Solidity file (--sol or --source)".into()));
    }
    let requested = match args.resource {
        Some(ResourceArg::Instructions) => Resource::Instructions,
        _ => Resource::Gas,
    };
    let (config, coerced) = CostModelConfig::new(requested, scope, args.filter.clone());
    if coerced && args.resource.is_some() {
        eprintln!("warning: storage-optimization counts instructions; ignoring --resource gas");
    }

    let schedule = load_schedule(args.schedule.as_deref())?;
    let layout: Option<StorageLayout> = match &args.layout {
        Some(p) => Some(with_path(p, parse_storage_layout(&read(p)?))?),
        None => None,
    };
    with_path(Path::new("--filter"), config.validate(layout.as_ref()))?;

    let code = with_path(&args.bytecode, parse_hex(&read(&args.bytecode)?))?;
    let instructions = with_path(&args.bytecode, disassemble(&code))?;
    let cfg = with_path(&args.bytecode, build_cfg(&instructions))?;
    let srcmap: Option<SourceMap> = match (&args.srcmap, &args.source) {
        (Some(m), Some(s)) => Some(with_path(m, parse_source_map(&read(m)?, &instructions, &read(s)?))?),
        _ => None,
    };
    if let Some(p) = &args.dot {
        with_path(p, fs::write(p, to_dot(&cfg)))?;
    }

    let mut split = split_functions(&cfg);
    let mut sigs = load_signatures(args.signatures.as_deref())?;
    sigs.extend(args.function.iter().filter(|f| f.contains('(')).cloned());
    split.attach_signatures(&sigs);
    let units = select_units(&split, &args.function)?;

    let pricing = match args.sstore {
        Pricing::Worst => SstorePricing::Worst,
        Pricing::Best => SstorePricing::Best,
    };
    let env = Env::new(&schedule).with_srcmap(srcmap.as_ref()).with_pricing(pricing);
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut analyses = Vec::new();
    for unit in units {
        let analysis = FunctionAnalysis::new(&cfg, unit, layout.as_ref());
        reports.push(analysis.compute(&config, &env)?);
        analyses.push(analysis);
    }

    let mut optimization = Vec::new();
    if optimize {
        let sol_path = sol_path.expect("checked above");
        let mut source = read(&sol_path)?;
        let mut changed = false;
        for a in &analyses {
            let Some(sig) = a.unit.signature.clone() else {
                return Err(Failure(format!(
                    "function {} has no known signature; pass --function with a signature or --signatures",
                    a.unit.name()
                )));
            };
            let report = with_path(&sol_path, optimize_function(a, &source, &sig, &schedule))?;
            if let Some(s) = &report.new_source {
                source = s.clone();
                changed = true;
            }
            optimization.push(json!({ "function": sig, "report": report.to_json() }));
        }
        let out = opt_path(&sol_path, "sol");
        let sidecar = opt_path(&sol_path, "json");
        if changed {
            with_path(&out, fs::write(&out, &source))?;
        }
        let side = json!({ "source": sol_path.display().to_string(), "output": changed.then(|| out.display().to_string()), "functions": optimization });
        with_path(&sidecar, fs::write(&sidecar, serde_json::to_string_pretty(&side)?))?;
        eprintln!("{}", if changed { format!("wrote {}", out.display()) } else { "no safe candidate to transform".into() });
    }

    match args.format {
        Format::Text => {
            for r in &reports {
                print!("{}", r.render_text());
            }
        }
        Format::Json => {
            let v: Vec<Value> = reports.iter().map(|r| r.to_json()).collect();
            println!("{}", serde_json::to_string_pretty(&json!({ "reports": v }))?);
        }
    }
    let unbounded = reports.iter().any(|r| r.has_unbounded());
    Ok(if unbounded { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn functions(args: FunctionsArgs) -> Result<ExitCode, Failure> {
    let code = with_path(&args.bytecode, parse_hex(&read(&args.bytecode)?))?;
    let instructions = with_path(&args.bytecode, disassemble(&code))?;
    let cfg = with_path(&args.bytecode, build_cfg(&instructions))?;
    let mut split = split_functions(&cfg);
    split.attach_signatures(&load_signatures(args.signatures.as_deref())?);
    let rows: Vec<(String, String, usize)> = split
        .units
        .iter()
        .map(|u| {
            let kind = match u.kind {
                UnitKind::Public => "public",
                UnitKind::Fallback => "fallback",
                UnitKind::Anonymous => "anonymous",
            };
            let name = u.signature.clone().unwrap_or_else(|| kind.to_string());
            (u.selector.map_or_else(|| "-".into(), |s| s.to_hex()), name, u.entry.0)
        })
        .collect();
    match args.format {
        Format::Text => {
            if !split.found_dispatcher && !rows.is_empty() {
                println!("note: no dispatcher found; the whole program is one anonymous unit");
            }
            for (sel, name, entry) in &rows {
                println!("{sel:<12} {name:<32} entry={entry:#x}");
            }
        }
        Format::Json => {
            let v: Vec<Value> =
                rows.iter().map(|(s, n, e)| json!({ "selector": s, "name": n, "entry": e })).collect();
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_word(v: &Value) -> Result<U256, Failure> {
    let bad = || Failure(format!("bad storage word {v}"));
    match v {
        Value::Number(n) => n.as_u64().map(U256::from).ok_or_else(bad),
        Value::String(s) => match s.strip_prefix("0x") {
            Some(h) => U256::from_str_radix(h, 16).map_err(|_| bad()),
            None => U256::from_dec_str(s).map_err(|_| bad()),
        },
        _ => Err(bad()),
    }
}

fn exec(args: ExecArgs) -> Result<ExitCode, Failure> {
    let code = parse_hex(&args.code)?;
    let calldata = parse_hex(&args.calldata)?;
    let mut storage = BTreeMap::new();
    if let Some(s) = &args.storage {
        let v: Value = serde_json::from_str(s)?;
        for (k, val) in v.as_object().ok_or_else(|| Failure("storage must be a JSON object".into()))? {
            storage.insert(parse_word(&Value::String(k.clone()))?, parse_word(val)?);
        }
    }
    let schedule = load_schedule(args.schedule.as_deref())?;
    let r = execute(&code, &calldata, &storage, &schedule, args.gas_limit);
    let out = json!({
        "outcome": format!("{:?}", r.outcome),
        "gas_used": r.state.gas_used,
        "memory_words": r.state.memory_words,
        "stack": r.state.stack.iter().map(|w| format!("{w:#x}")).collect::<Vec<_>>(),
        "storage": r.state.storage.iter().map(|(k, v)| (format!("{k:#x}"), Value::String(format!("{v:#x}")))).collect::<serde_json::Map<_, _>>(),
        "opcode_counts": r.state.opcode_counts,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if r.outcome.is_success() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a, false),
        Command::Optimize(a) => analyze(a, true),
        Command::Functions(a) => functions(a),
        Command::Exec(a) => exec(a),
    };
    result.unwrap_or_else(|Failure(msg)| {
        eprintln!("error: {msg}");
        ExitCode::from(1)
    })
}
