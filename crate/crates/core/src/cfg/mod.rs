//! Control-flow reconstruction for EVM bytecode.
//!
//! Jump targets are resolved by simulating an abstract stack per block. The
//! simulation is context sensitive: each block is explored once per distinct
//! entry stack, up to [`MAX_CONTEXTS`] stacks, after which all of its entry
//! stacks are joined into one. Joining two different constants yields
//! `Unknown`.

pub mod dom;
pub mod dot;
pub mod functions;
pub mod loops;
pub mod unit;
pub mod values;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use primitive_types::U256;

use crate::error::CfgError;
use crate::evm::word::fold;
use crate::evm::{Instruction, Opcode};

pub use functions::{split_functions, FunctionSplit, FunctionUnit, UnitKind};
pub use loops::{find_loops, ExitCondition, Induction, LoopInfo, Relation};
pub use unit::UnitGraph;

/// Per-block cap on distinct entry stacks before they are joined.
pub const MAX_CONTEXTS: usize = 16;
pub const MAX_STACK: usize = 1024;

/// Start pc of a basic block.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{:#x}", self.0)
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AbstractValue {
    Const(U256),
    CallDataWord(usize),
    CallDataSize,
    Unknown,
}

impl AbstractValue {
    pub fn as_const(&self) -> Option<U256> {
        match self {
            AbstractValue::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn join(&self, other: &AbstractValue) -> AbstractValue {
        if self == other {
            self.clone()
        } else {
            AbstractValue::Unknown
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// Fallthrough or unconditional jump.
    Seq,
    /// Taken branch of a JUMPI.
    True,
    /// Not-taken branch of a JUMPI.
    False,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminator {
    Jump,
    JumpI,
    Halt(Opcode),
    Fallthrough,
}

#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub id: BlockId,
    pub instructions: Vec<Instruction>,
    pub successors: Vec<BlockId>,
    pub edge_kinds: Vec<EdgeKind>,
    pub entry_stack_height: usize,
    pub terminator: Terminator,
}

impl BasicBlock {
    pub fn start_pc(&self) -> usize {
        self.id.0
    }

    pub fn end_pc(&self) -> usize {
        self.instructions.last().map_or(self.id.0, |i| i.pc)
    }

    pub fn last(&self) -> &Instruction {
        self.instructions.last().expect("blocks are non-empty")
    }

    pub fn edge_kind(&self, target: BlockId) -> Option<EdgeKind> {
        self.successors.iter().position(|&s| s == target).map(|i| self.edge_kinds[i])
    }
}

/// An internal call: a JUMP that leaves a return address on the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CallSite {
    pub callee: BlockId,
    pub return_to: BlockId,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub blocks: BTreeMap<BlockId, BasicBlock>,
    pub entry: BlockId,
    /// Immediate dominators of reachable non-entry blocks.
    pub dominator_tree: BTreeMap<BlockId, BlockId>,
    /// Pcs of jumps whose target stayed `Unknown`.
    pub unresolved: BTreeSet<usize>,
    /// Constant targets that are not JUMPDESTs, as (pc, target).
    pub invalid_jumps: Vec<(usize, U256)>,
    pub calls: BTreeMap<BlockId, Vec<CallSite>>,
    /// Slot operand of every explored SLOAD/SSTORE, joined over contexts.
    pub slot_operands: BTreeMap<usize, AbstractValue>,
    pub jumpdests: BTreeSet<usize>,
}

impl Cfg {
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[&id]
    }

    pub fn block_of_pc(&self, pc: usize) -> Option<BlockId> {
        let (id, block) = self.blocks.range(..=BlockId(pc)).next_back()?;
        (pc <= block.end_pc()).then_some(*id)
    }

    pub fn predecessors(&self) -> BTreeMap<BlockId, Vec<BlockId>> {
        let mut preds: BTreeMap<BlockId, Vec<BlockId>> = self.blocks.keys().map(|&b| (b, Vec::new())).collect();
        for b in self.blocks.values() {
            for s in &b.successors {
                preds.entry(*s).or_default().push(b.id);
            }
        }
        preds
    }

    pub fn dominates(&self, a: BlockId, mut b: BlockId) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.dominator_tree.get(&b) {
                Some(&d) => b = d,
                None => return false,
            }
        }
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.values().flat_map(|b| b.instructions.iter())
    }

    pub fn has_unresolved_in(&self, blocks: &BTreeSet<BlockId>) -> bool {
        blocks.iter().any(|b| {
            let blk = self.block(*b);
            self.unresolved.contains(&blk.last().pc)
        })
    }

    /// Builds the CFG and records unresolved and invalid jumps without failing.
    pub fn build(instructions: &[Instruction]) -> Cfg {
        Builder::new(instructions).run()
    }
}

/// Builds the CFG, failing on constant jump targets that are not JUMPDESTs.
/// Unresolved jumps are recorded in [`Cfg::unresolved`] instead.
pub fn build_cfg(instructions: &[Instruction]) -> Result<Cfg, CfgError> {
    let cfg = Cfg::build(instructions);
    if let Some(&(pc, target)) = cfg.invalid_jumps.first() {
        return Err(CfgError::InvalidJumpTarget { pc, target });
    }
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct AbsStack(Vec<AbstractValue>);

impl AbsStack {
    fn pop(&mut self) -> AbstractValue {
        self.0.pop().unwrap_or(AbstractValue::Unknown)
    }

    fn push(&mut self, v: AbstractValue) {
        self.0.push(v);
        if self.0.len() > MAX_STACK {
            self.0.remove(0);
        }
    }

    fn ensure(&mut self, depth: usize) {
        while self.0.len() < depth {
            self.0.insert(0, AbstractValue::Unknown);
        }
    }

    fn join(&self, other: &AbsStack) -> AbsStack {
        let n = self.0.len().min(other.0.len());
        let a = &self.0[self.0.len() - n..];
        let b = &other.0[other.0.len() - n..];
        AbsStack(a.iter().zip(b).map(|(x, y)| x.join(y)).collect())
    }
}

struct RawBlock {
    start: usize,
    instrs: std::ops::Range<usize>,
}

struct Builder<'a> {
    instructions: &'a [Instruction],
    raw: Vec<RawBlock>,
    by_pc: HashMap<usize, usize>,
    jumpdests: BTreeSet<usize>,
    contexts: Vec<Vec<AbsStack>>,
    widened: Vec<Option<AbsStack>>,
    succ: Vec<BTreeMap<usize, EdgeKind>>,
    unresolved: BTreeSet<usize>,
    invalid: BTreeSet<(usize, U256)>,
    calls: BTreeMap<usize, BTreeSet<(usize, usize)>>,
    slots: BTreeMap<usize, AbstractValue>,
    entry_height: Vec<Option<usize>>,
}

impl<'a> Builder<'a> {
    fn new(instructions: &'a [Instruction]) -> Self {
        let mut raw = Vec::new();
        let mut start = 0;
        for (i, ins) in instructions.iter().enumerate() {
            if ins.opcode == Opcode::JUMPDEST && i > start {
                raw.push(RawBlock { start: instructions[start].pc, instrs: start..i });
                start = i;
            }
            if ins.opcode.is_block_terminator() {
                raw.push(RawBlock { start: instructions[start].pc, instrs: start..i + 1 });
                start = i + 1;
            }
        }
        if start < instructions.len() {
            raw.push(RawBlock { start: instructions[start].pc, instrs: start..instructions.len() });
        }
        let by_pc = raw.iter().enumerate().map(|(i, b)| (b.start, i)).collect();
        let jumpdests = instructions.iter().filter(|i| i.opcode == Opcode::JUMPDEST).map(|i| i.pc).collect();
        let n = raw.len();
        Builder {
            instructions,
            raw,
            by_pc,
            jumpdests,
            contexts: vec![Vec::new(); n],
            widened: vec![None; n],
            succ: vec![BTreeMap::new(); n],
            unresolved: BTreeSet::new(),
            invalid: BTreeSet::new(),
            calls: BTreeMap::new(),
            slots: BTreeMap::new(),
            entry_height: vec![None; n],
        }
    }

    /// Registers an entry stack; returns the stack to explore if it is new.
    fn admit(&mut self, block: usize, stack: AbsStack) -> Option<AbsStack> {
        self.entry_height[block].get_or_insert(stack.0.len());
        if let Some(w) = &self.widened[block] {
            let joined = w.join(&stack);
            if &joined == w {
                return None;
            }
            self.widened[block] = Some(joined.clone());
            return Some(joined);
        }
        if self.contexts[block].contains(&stack) {
            return None;
        }
        self.contexts[block].push(stack.clone());
        if self.contexts[block].len() > MAX_CONTEXTS {
            let mut it = self.contexts[block].iter();
            let first = it.next().expect("non-empty").clone();
            let joined = it.fold(first, |acc, s| acc.join(s));
            self.widened[block] = Some(joined.clone());
            return Some(joined);
        }
        Some(stack)
    }

    fn run(mut self) -> Cfg {
        let mut work = VecDeque::new();
        if !self.raw.is_empty() {
            if let Some(s) = self.admit(0, AbsStack(Vec::new())) {
                work.push_back((0, s));
            }
        }
        while let Some((block, stack)) = work.pop_front() {
            for (succ, kind, out) in self.step(block, stack) {
                self.succ[block].insert(succ, kind);
                if let Some(s) = self.admit(succ, out) {
                    work.push_back((succ, s));
                }
            }
        }
        self.finish()
    }

    fn next_block(&self, block: usize) -> Option<usize> {
        let end = self.raw[block].instrs.end;
        (end < self.instructions.len()).then(|| self.by_pc[&self.instructions[end].pc])
    }

    fn step(&mut self, block: usize, mut stack: AbsStack) -> Vec<(usize, EdgeKind, AbsStack)> {
        let range = self.raw[block].instrs.clone();
        let pushed: HashSet<U256> = self.instructions[range.clone()].iter().filter_map(|i| i.immediate).collect();
        for ins in &self.instructions[range.clone()] {
            let op = ins.opcode;
            if op == Opcode::JUMP || op == Opcode::JUMPI {
                break;
            }
            if op.is_storage_access() {
                let slot = stack.0.last().cloned().unwrap_or(AbstractValue::Unknown);
                self.slots
                    .entry(ins.pc)
                    .and_modify(|v| *v = v.join(&slot))
                    .or_insert(slot);
            }
            transfer(ins, &mut stack);
        }
        let last = &self.instructions[range.end - 1];
        let mut out = Vec::new();
        match last.opcode {
            Opcode::JUMP => {
                let target = stack.pop();
                if let Some(t) = self.resolve(last.pc, &target) {
                    if let Some(ret) = self.return_address(&stack, &pushed, t) {
                        self.calls.entry(block).or_default().insert((t, ret));
                    }
                    out.push((t, EdgeKind::Seq, stack));
                }
            }
            Opcode::JUMPI => {
                let target = stack.pop();
                let cond = stack.pop();
                let (may_jump, may_fall) = match cond.as_const() {
                    Some(c) => (!c.is_zero(), c.is_zero()),
                    None => (true, true),
                };
                if may_jump {
                    if let Some(t) = self.resolve(last.pc, &target) {
                        out.push((t, EdgeKind::True, stack.clone()));
                    }
                }
                if may_fall {
                    if let Some(n) = self.next_block(block) {
                        out.push((n, EdgeKind::False, stack));
                    }
                }
            }
            op if op.is_halting() => {}
            _ => {
                if let Some(n) = self.next_block(block) {
                    out.push((n, EdgeKind::Seq, stack));
                }
            }
        }
        out
    }

    fn resolve(&mut self, pc: usize, target: &AbstractValue) -> Option<usize> {
        match target {
            AbstractValue::Const(t) => {
                if *t <= U256::from(usize::MAX) && self.jumpdests.contains(&t.as_usize()) {
                    Some(self.by_pc[&t.as_usize()])
                } else {
                    self.invalid.insert((pc, *t));
                    None
                }
            }
            _ => {
                self.unresolved.insert(pc);
                None
            }
        }
    }

    /// A constant JUMPDEST pushed in this block and still below the jump
    /// target marks an internal call returning there.
    fn return_address(&self, stack: &AbsStack, pushed: &HashSet<U256>, target: usize) -> Option<usize> {
        stack.0.iter().rev().find_map(|v| {
            let c = v.as_const()?;
            if !pushed.contains(&c) || c > U256::from(usize::MAX) {
                return None;
            }
            let pc = c.as_usize();
            let blk = *self.by_pc.get(&pc)?;
            (self.jumpdests.contains(&pc) && blk != target).then_some(blk)
        })
    }

    fn finish(self) -> Cfg {
        let n = self.raw.len();
        let succs: Vec<Vec<usize>> = self.succ.iter().map(|m| m.keys().copied().collect()).collect();
        let mut blocks = BTreeMap::new();
        let mut dominator_tree = BTreeMap::new();
        let id = |i: usize| BlockId(self.raw[i].start);
        if n > 0 {
            let dom = dom::DomTree::compute(&succs, 0);
            for &b in dom.rpo() {
                let raw = &self.raw[b];
                blocks.insert(
                    id(b),
                    BasicBlock {
                        id: id(b),
                        instructions: self.instructions[raw.instrs.clone()].to_vec(),
                        successors: self.succ[b].keys().map(|&s| id(s)).collect(),
                        edge_kinds: self.succ[b].values().copied().collect(),
                        entry_stack_height: self.entry_height[b].unwrap_or(0),
                        terminator: terminator_of(&self.instructions[raw.instrs.end - 1]),
                    },
                );
                if let Some(d) = dom.idom(b) {
                    dominator_tree.insert(id(b), id(d));
                }
            }
        }
        let calls = self
            .calls
            .iter()
            .map(|(&b, set)| (id(b), set.iter().map(|&(c, r)| CallSite { callee: id(c), return_to: id(r) }).collect()))
            .collect();
        Cfg {
            entry: BlockId(0),
            blocks,
            dominator_tree,
            unresolved: self.unresolved,
            invalid_jumps: self.invalid.into_iter().collect(),
            calls,
            slot_operands: self.slots,
            jumpdests: self.jumpdests,
        }
    }
}

fn terminator_of(last: &Instruction) -> Terminator {
    match last.opcode {
        Opcode::JUMP => Terminator::Jump,
        Opcode::JUMPI => Terminator::JumpI,
        op if op.is_halting() => Terminator::Halt(op),
        _ => Terminator::Fallthrough,
    }
}

fn transfer(ins: &Instruction, stack: &mut AbsStack) {
    let op = ins.opcode;
    if op.is_push() {
        stack.push(AbstractValue::Const(ins.immediate.unwrap_or_default()));
        return;
    }
    if let Some(n) = op.dup_depth() {
        stack.ensure(n);
        let v = stack.0[stack.0.len() - n].clone();
        stack.push(v);
        return;
    }
    if let Some(n) = op.swap_depth() {
        stack.ensure(n + 1);
        let len = stack.0.len();
        stack.0.swap(len - 1, len - 1 - n);
        return;
    }
    let args: Vec<AbstractValue> = (0..op.stack_pops()).map(|_| stack.pop()).collect();
    let result = match op {
        Opcode::CALLDATALOAD => match args[0].as_const() {
            Some(off) if off <= U256::from(u32::MAX) => AbstractValue::CallDataWord(off.as_usize()),
            _ => AbstractValue::Unknown,
        },
        _ if op.mnemonic() == "CALLDATASIZE" => AbstractValue::CallDataSize,
        _ if op.mnemonic() == "PC" => AbstractValue::Const(U256::from(ins.pc)),
        _ => {
            let consts: Option<Vec<U256>> = args.iter().map(|a| a.as_const()).collect();
            consts.and_then(|c| fold(op, &c)).map_or(AbstractValue::Unknown, AbstractValue::Const)
        }
    };
    for _ in 0..op.stack_pushes() {
        stack.push(result.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn cfg_of(src: &str) -> Cfg {
        Cfg::build(&assemble(src).unwrap().instructions())
    }

    #[test]
    fn constant_target() {
        let cfg = build_cfg(&crate::evm::disassemble(&[0x60, 0x04, 0x56, 0xfe, 0x5b, 0x00]).unwrap()).unwrap();
        assert_eq!(cfg.block(BlockId(0)).successors, vec![BlockId(4)]);
        assert!(!cfg.blocks.contains_key(&BlockId(3)), "INVALID block is unreachable");
        assert_eq!(cfg.dominator_tree.get(&BlockId(4)), Some(&BlockId(0)));
    }

    #[test]
    fn invalid_target() {
        let code = crate::evm::disassemble(&[0x60, 0x03, 0x56, 0x00]).unwrap();
        assert!(matches!(build_cfg(&code), Err(CfgError::InvalidJumpTarget { pc: 2, .. })));
    }

    #[test]
    fn shared_jump_block_resolves_per_context() {
        let a = assemble(
            "CALLDATASIZE @left JUMPI
             @seven @shared JUMP
             left: @twelve @shared JUMP
             shared: JUMP
             seven: STOP
             twelve: STOP",
        )
        .unwrap();
        let cfg = Cfg::build(&a.instructions());
        let shared = cfg.block(BlockId(a.label("shared")));
        assert_eq!(shared.successors, vec![BlockId(a.label("seven")), BlockId(a.label("twelve"))]);
        assert!(cfg.unresolved.is_empty());
    }

    #[test]
    fn unknown_target_is_recorded() {
        let cfg = cfg_of("0 CALLDATALOAD JUMP");
        assert_eq!(cfg.unresolved.iter().copied().collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn internal_call_detected() {
        let a = assemble("@ret 5 @helper JUMP ret: STOP helper: POP JUMP").unwrap();
        let cfg = Cfg::build(&a.instructions());
        let calls = &cfg.calls[&BlockId(0)];
        assert_eq!(calls, &vec![CallSite { callee: BlockId(a.label("helper")), return_to: BlockId(a.label("ret")) }]);
        assert_eq!(cfg.block(BlockId(a.label("helper"))).successors, vec![BlockId(a.label("ret"))]);
    }

    #[test]
    fn loop_contexts_widen() {
        let cfg = cfg_of("0 head: DUP1 100 GT ISZERO @done JUMPI 1 ADD @head JUMP done: STOP");
        assert!(cfg.unresolved.is_empty());
        assert_eq!(cfg.blocks.len(), 4);
    }
}
