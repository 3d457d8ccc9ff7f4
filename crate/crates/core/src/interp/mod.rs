//! A small concrete EVM interpreter with gas metering, used as a test oracle
//! for the static bounds.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use primitive_types::U256;

use crate::bounds::{Cell, CostModelConfig, Resource};
use crate::cfg::{Cfg, FunctionUnit, UnitGraph};
use crate::evm::word::{byte_len, fold, keccak256, words_for};
use crate::evm::{disassemble, GasSchedule, Instruction, Opcode};
use crate::ingest::{SourceMap, StorageLayout, UNKNOWN_FIELD};

pub const STACK_LIMIT: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Stop,
    Return(Vec<u8>),
    Revert,
    OutOfGas,
    Invalid,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Stop | Outcome::Return(_))
    }
}

/// One executed instruction and what it was charged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub pc: usize,
    pub op: Opcode,
    pub static_cost: u64,
    pub dynamic_cost: u64,
    pub memory_cost: u64,
    /// Slot touched by SLOAD/SSTORE.
    pub slot: Option<U256>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MachineState {
    pub stack: Vec<U256>,
    pub memory: Vec<u8>,
    /// High-water mark in words.
    pub memory_words: u64,
    pub storage: BTreeMap<U256, U256>,
    pub calldata: Vec<u8>,
    pub pc: usize,
    pub gas_used: u64,
    pub opcode_counts: BTreeMap<String, u64>,
    pub storage_access_log: Vec<(Opcode, U256)>,
    pub events: Vec<Event>,
}

impl MachineState {
    pub fn memory_gas(&self, schedule: &GasSchedule) -> u64 {
        memory_cost(self.memory_words, schedule)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub state: MachineState,
}

fn memory_cost(words: u64, s: &GasSchedule) -> u64 {
    s.memory_linear * words + words * words / s.memory_quadratic_divisor.max(1)
}

fn u64_of(v: U256) -> Option<u64> {
    (v <= U256::from(u64::MAX)).then(|| v.low_u64())
}

struct Machine<'a> {
    code: &'a [Instruction],
    by_pc: BTreeMap<usize, usize>,
    schedule: &'a GasSchedule,
    gas_limit: u64,
    st: MachineState,
}

impl Machine<'_> {
    fn pop(&mut self) -> Result<U256, Outcome> {
        self.st.stack.pop().ok_or(Outcome::Invalid)
    }

    fn push(&mut self, v: U256) -> Result<(), Outcome> {
        if self.st.stack.len() >= STACK_LIMIT {
            return Err(Outcome::Invalid);
        }
        self.st.stack.push(v);
        Ok(())
    }

    fn charge(&mut self, amount: u64) -> Result<(), Outcome> {
        let total = self.st.gas_used.checked_add(amount).filter(|&t| t <= self.gas_limit);
        match total {
            Some(t) => {
                self.st.gas_used = t;
                Ok(())
            }
            None => Err(Outcome::OutOfGas),
        }
    }

    /// Grows memory to cover `[off, off+size)`, returning the charge.
    fn expand(&mut self, off: U256, size: U256) -> Result<(u64, usize, usize), Outcome> {
        if size.is_zero() {
            return Ok((0, 0, 0));
        }
        let oog = || Outcome::OutOfGas;
        let off = u64_of(off).filter(|&o| o < 1 << 32).ok_or_else(oog)?;
        let size = u64_of(size).filter(|&s| s < 1 << 32).ok_or_else(oog)?;
        let words = words_for(off + size);
        let mut cost = 0;
        if words > self.st.memory_words {
            cost = memory_cost(words, self.schedule) - memory_cost(self.st.memory_words, self.schedule);
            self.st.memory_words = words;
            self.st.memory.resize(words as usize * 32, 0);
        }
        Ok((cost, off as usize, size as usize))
    }

    fn jump(&mut self, target: U256) -> Result<usize, Outcome> {
        let idx = u64_of(target)
            .and_then(|t| self.by_pc.get(&(t as usize)).copied())
            .filter(|&i| self.code[i].opcode == Opcode::JUMPDEST);
        idx.ok_or(Outcome::Invalid)
    }

    fn run(&mut self) -> Outcome {
        let mut idx = 0;
        loop {
            let Some(ins) = self.code.get(idx).cloned() else {
                return Outcome::Stop;
            };
            match self.step(&ins) {
                Ok(Some(next)) => idx = next,
                Ok(None) => idx += 1,
                Err(o) => return o,
            }
        }
    }

    fn word_copy(&mut self, dest: U256, src: &[u8], src_off: U256, size: U256) -> Result<u64, Outcome> {
        let (mem, d, n) = self.expand(dest, size)?;
        let s = u64_of(src_off).map_or(usize::MAX, |v| v as usize);
        for i in 0..n {
            self.st.memory[d + i] = s.checked_add(i).and_then(|j| src.get(j)).copied().unwrap_or(0);
        }
        Ok(mem)
    }

    fn step(&mut self, ins: &Instruction) -> Result<Option<usize>, Outcome> {
        let op = ins.opcode;
        let s = self.schedule;
        self.st.pc = ins.pc;
        let mut dynamic = 0u64;
        let mut mem = 0u64;
        let mut slot = None;
        let mut static_cost = s.worst_case_gas(op);
        let mut next = None;
        let mut halt = None;

        if op.is_push() {
            self.push(ins.immediate.unwrap_or_default())?;
        } else if let Some(d) = op.dup_depth() {
            let n = self.st.stack.len();
            let v = *n.checked_sub(d).and_then(|i| self.st.stack.get(i)).ok_or(Outcome::Invalid)?;
            self.push(v)?;
        } else if let Some(d) = op.swap_depth() {
            let n = self.st.stack.len();
            if n < d + 1 {
                return Err(Outcome::Invalid);
            }
            self.st.stack.swap(n - 1, n - 1 - d);
        } else if let Some(topics) = op.log_topics() {
            let off = self.pop()?;
            let size = self.pop()?;
            for _ in 0..topics {
                self.pop()?;
            }
            let (m, _, n) = self.expand(off, size)?;
            mem = m;
            dynamic = s.log_data_byte * n as u64;
        } else {
            match op.mnemonic() {
                "STOP" => halt = Some(Outcome::Stop),
                "SHA3" => {
                    let off = self.pop()?;
                    let size = self.pop()?;
                    let (m, o, n) = self.expand(off, size)?;
                    mem = m;
                    dynamic = s.sha3_word * words_for(n as u64);
                    let h = keccak256(if n == 0 { &[] } else { &self.st.memory[o..o + n] });
                    self.push(U256::from_big_endian(&h))?;
                }
                "EXP" => {
                    let a = self.pop()?;
                    let b = self.pop()?;
                    dynamic = s.exp_byte * byte_len(b);
                    self.push(fold(op, &[a, b]).expect("pure"))?;
                }
                "CALLDATALOAD" => {
                    let off = self.pop()?;
                    let mut buf = [0u8; 32];
                    if let Some(o) = u64_of(off) {
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = (o as usize).checked_add(i).and_then(|j| self.st.calldata.get(j)).copied().unwrap_or(0);
                        }
                    }
                    self.push(U256::from_big_endian(&buf))?;
                }
                "CALLDATASIZE" => self.push(self.st.calldata.len().into())?,
                "CODESIZE" => self.push(self.code_bytes().len().into())?,
                "CALLVALUE" => self.push(U256::zero())?,
                "CALLDATACOPY" | "CODECOPY" => {
                    let dest = self.pop()?;
                    let src = self.pop()?;
                    let size = self.pop()?;
                    let data = if op == Opcode::CALLDATACOPY { self.st.calldata.clone() } else { self.code_bytes() };
                    mem = self.word_copy(dest, &data, src, size)?;
                    dynamic = s.copy_word * words_for(u64_of(size).unwrap_or(0));
                }
                "POP" => {
                    self.pop()?;
                }
                "MLOAD" => {
                    let off = self.pop()?;
                    let (m, o, _) = self.expand(off, 32.into())?;
                    mem = m;
                    self.push(U256::from_big_endian(&self.st.memory[o..o + 32]))?;
                }
                "MSTORE" => {
                    let off = self.pop()?;
                    let v = self.pop()?;
                    let (m, o, _) = self.expand(off, 32.into())?;
                    mem = m;
                    v.to_big_endian(&mut self.st.memory[o..o + 32]);
                }
                "MSTORE8" => {
                    let off = self.pop()?;
                    let v = self.pop()?;
                    let (m, o, _) = self.expand(off, 1.into())?;
                    mem = m;
                    self.st.memory[o] = v.byte(0);
                }
                "SLOAD" => {
                    let k = self.pop()?;
                    slot = Some(k);
                    self.st.storage_access_log.push((op, k));
                    let v = self.st.storage.get(&k).copied().unwrap_or_default();
                    self.push(v)?;
                }
                "SSTORE" => {
                    let k = self.pop()?;
                    let v = self.pop()?;
                    slot = Some(k);
                    self.st.storage_access_log.push((op, k));
                    let current = self.st.storage.get(&k).copied().unwrap_or_default();
                    static_cost = match s.overrides.get("SSTORE") {
                        Some(&c) => c,
                        None if current.is_zero() => s.sstore_set,
                        None => s.sstore_reset,
                    };
                    self.st.storage.insert(k, v);
                }
                "JUMP" => {
                    let t = self.pop()?;
                    next = Some(self.jump(t)?);
                }
                "JUMPI" => {
                    let t = self.pop()?;
                    let c = self.pop()?;
                    if !c.is_zero() {
                        next = Some(self.jump(t)?);
                    }
                }
                "PC" => self.push(ins.pc.into())?,
                "MSIZE" => self.push((self.st.memory_words * 32).into())?,
                "GAS" => {
                    let left = self.gas_limit.saturating_sub(self.st.gas_used + static_cost);
                    self.push(left.into())?;
                }
                "JUMPDEST" => {}
                "RETURN" | "REVERT" => {
                    let off = self.pop()?;
                    let size = self.pop()?;
                    let (m, o, n) = self.expand(off, size)?;
                    mem = m;
                    halt = Some(if op == Opcode::RETURN {
                        Outcome::Return(self.st.memory[o..o + n].to_vec())
                    } else {
                        Outcome::Revert
                    });
                }
                _ => {
                    if op.stack_pushes() > 1 || !op.is_defined() || op.is_invalid() {
                        return Err(Outcome::Invalid);
                    }
                    let n = op.stack_pops();
                    let mut args = Vec::with_capacity(n);
                    for _ in 0..n {
                        args.push(self.pop()?);
                    }
                    let v = fold(op, &args).ok_or(Outcome::Invalid)?;
                    self.push(v)?;
                }
            }
        }

        self.charge(static_cost + dynamic + mem)?;
        *self.st.opcode_counts.entry(op.mnemonic().to_string()).or_default() += 1;
        self.st.events.push(Event { pc: ins.pc, op, static_cost, dynamic_cost: dynamic, memory_cost: mem, slot });
        match halt {
            Some(o) => Err(o),
            None => Ok(next),
        }
    }

    fn code_bytes(&self) -> Vec<u8> {
        crate::evm::encode(self.code)
    }
}

/// Runs `code` to completion. Errors are reported through the outcome.
pub fn execute(
    code: &[u8],
    calldata: &[u8],
    storage: &BTreeMap<U256, U256>,
    schedule: &GasSchedule,
    gas_limit: u64,
) -> ExecResult {
    let state = MachineState { storage: storage.clone(), calldata: calldata.to_vec(), ..MachineState::default() };
    let Ok(instructions) = disassemble(code) else {
        return ExecResult { outcome: Outcome::Invalid, state };
    };
    let by_pc = instructions.iter().enumerate().map(|(i, ins)| (ins.pc, i)).collect();
    let mut m = Machine { code: &instructions, by_pc, schedule, gas_limit, st: state };
    let outcome = m.run();
    ExecResult { outcome, state: m.st }
}

/// What `measure` needs to classify executed instructions like the bounds do.
#[derive(Clone, Debug)]
pub struct MeasureContext<'a> {
    pub schedule: &'a GasSchedule,
    pub layout: Option<&'a StorageLayout>,
    pub srcmap: Option<&'a SourceMap>,
    /// Instructions only reached through internal calls of the measured function.
    pub transitive_pcs: BTreeSet<usize>,
    pub gas_limit: u64,
}

impl<'a> MeasureContext<'a> {
    pub fn new(schedule: &'a GasSchedule) -> Self {
        MeasureContext { schedule, layout: None, srcmap: None, transitive_pcs: BTreeSet::new(), gas_limit: 100_000_000 }
    }

    /// Marks the transitive instructions of `unit`.
    pub fn for_function(mut self, cfg: &Cfg, unit: &FunctionUnit) -> Self {
        let graph = UnitGraph::new(cfg, unit);
        self.transitive_pcs =
            graph.transitive.iter().flat_map(|b| cfg.block(*b).instructions.iter().map(|i| i.pc)).collect();
        self
    }

    pub fn with_layout(mut self, layout: Option<&'a StorageLayout>) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_srcmap(mut self, srcmap: Option<&'a SourceMap>) -> Self {
        self.srcmap = srcmap;
        self
    }

    pub fn cell_of(&self, e: &Event) -> Cell {
        Cell {
            op: e.op,
            line: self.srcmap.and_then(|m| m.line_of(e.pc)),
            field: e.op.is_storage_access()
                .then(|| self.layout.map_or_else(|| UNKNOWN_FIELD.to_string(), |l| l.field_name(e.slot))),
            transitive: self.transitive_pcs.contains(&e.pc),
        }
    }

    /// Per-key measured cost of an execution, without memory expansion.
    pub fn project(&self, events: &[Event], config: &CostModelConfig) -> BTreeMap<String, BigUint> {
        let mut out: BTreeMap<String, BigUint> = BTreeMap::new();
        for e in events {
            if let Some(k) = config.key_of(&self.cell_of(e)) {
                let c = match config.resource {
                    Resource::Instructions => 1,
                    Resource::Gas => e.static_cost + e.dynamic_cost,
                };
                *out.entry(k).or_default() += c;
            }
        }
        out
    }
}

/// Cost of one execution under a cost model: the sum over all report keys.
pub fn measure(
    code: &[u8],
    calldata: &[u8],
    storage: &BTreeMap<U256, U256>,
    config: &CostModelConfig,
    ctx: &MeasureContext,
) -> Result<BigUint, Outcome> {
    let r = execute(code, calldata, storage, ctx.schedule, ctx.gas_limit);
    if !r.outcome.is_success() {
        return Err(r.outcome);
    }
    Ok(ctx.project(&r.state.events, config).into_values().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::bounds::Scope;

    fn run(src: &str, limit: u64) -> ExecResult {
        execute(&assemble(src).unwrap().code, &[], &BTreeMap::new(), &GasSchedule::default(), limit)
    }

    #[test]
    fn add_example() {
        let r = run("1 1 ADD STOP", 1000);
        assert_eq!(r.outcome, Outcome::Stop);
        assert_eq!(r.state.gas_used, 9);
        assert_eq!(r.state.stack, vec![U256::from(2)]);
        assert_eq!(run("1 1 ADD STOP", 5).outcome, Outcome::OutOfGas);
    }

    #[test]
    fn sstore_pricing() {
        let r = run("1 0 SSTORE 2 0 SSTORE STOP", 100_000);
        let costs: Vec<u64> = r.state.events.iter().filter(|e| e.op == Opcode::SSTORE).map(|e| e.static_cost).collect();
        assert_eq!(costs, vec![20000, 5000]);
    }

    #[test]
    fn memory_charges_telescope() {
        let s = GasSchedule::default();
        let r = run("1 0 MSTORE 1 0x400 MSTORE 1 0x4000 MSTORE8 STOP", 1_000_000);
        let charged: u64 = r.state.events.iter().map(|e| e.memory_cost).sum();
        assert_eq!(charged, r.state.memory_gas(&s));
        assert_eq!(r.state.memory_words, words_for(0x4001));
    }

    #[test]
    fn sha3_and_jumps() {
        let r = run("0 0 SHA3 @t JUMP INVALID t: STOP", 1000);
        assert_eq!(r.outcome, Outcome::Stop);
        assert_eq!(r.state.stack[0], U256::from_big_endian(&keccak256(&[])));
        assert_eq!(run("3 JUMP STOP", 1000).outcome, Outcome::Invalid);
        assert_eq!(run("0 0 0 0 0 0 0 CALL", 10_000).outcome, Outcome::Invalid);
    }

    #[test]
    fn return_data() {
        let r = run("42 0 MSTORE 0x20 0 RETURN", 1000);
        let mut want = vec![0u8; 32];
        want[31] = 42;
        assert_eq!(r.outcome, Outcome::Return(want));
    }

    #[test]
    fn measure_selected() {
        let code = assemble("1 0 SSTORE 2 1 SSTORE 0 SLOAD STOP").unwrap().code;
        let s = GasSchedule::default();
        let ctx = MeasureContext::new(&s);
        let cfg = CostModelConfig::instructions(Scope::Selected).with_filter(&["SSTORE"]);
        assert_eq!(measure(&code, &[], &BTreeMap::new(), &cfg, &ctx).unwrap(), BigUint::from(2u32));
        let all = CostModelConfig::gas(Scope::All);
        let r = execute(&code, &[], &BTreeMap::new(), &s, 1_000_000);
        assert_eq!(measure(&code, &[], &BTreeMap::new(), &all, &ctx).unwrap(), BigUint::from(r.state.gas_used));
    }
}
