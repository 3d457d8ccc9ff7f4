//! Symbolic value analysis over a function's graph.
//!
//! Values are constants, affine combinations of *atoms* (calldata words,
//! calldata size, constant storage slots and loop-header stack slots),
//! comparisons, Keccak results, or unknown. Constant-offset memory words are
//! tracked as well, so that pointers spilled to memory survive a round trip.
//!
//! Every stack slot at a loop header starts out as a fresh symbol; comparing
//! back-edge stacks against the header state classifies each slot as
//! invariant, an induction variable with a constant step, or varying.
//! Invariant slots are then replaced by their entry value and the analysis
//! is repeated until the classes settle. A final round forgets varying slots
//! and demotes every class the back edges no longer confirm.

use std::collections::{BTreeMap, BTreeSet};

use primitive_types::U256;

use super::unit::UnitGraph;
use super::{AbstractValue, BlockId, Cfg};
use crate::evm::word::fold;
use crate::evm::{Instruction, Opcode};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    CallData(usize),
    CallDataSize,
    /// SLOAD of a constant slot.
    Storage(U256),
    /// Stack slot `depth` (0 = top) at entry of loop header `header`.
    Slot { header: BlockId, depth: usize },
}

/// `constant + Σ coeff·atom`, wrapping at 2^256. Always has at least one term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Linear {
    pub constant: i128,
    pub terms: BTreeMap<Atom, i128>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Slt,
    Sgt,
    Eq,
}

impl CmpOp {
    pub fn opcode(self) -> Opcode {
        match self {
            CmpOp::Lt => Opcode::LT,
            CmpOp::Gt => Opcode::GT,
            CmpOp::Slt => Opcode::SLT,
            CmpOp::Sgt => Opcode::SGT,
            CmpOp::Eq => Opcode::EQ,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymValue {
    Const(U256),
    Linear(Linear),
    /// `lhs op rhs`, logically negated when `negated`.
    Cmp { op: CmpOp, lhs: Box<SymValue>, rhs: Box<SymValue>, negated: bool },
    Hashed,
    Unknown,
}

fn i128_of(c: U256) -> Option<i128> {
    let limit = U256::one() << 126;
    if c < limit {
        Some(c.low_u128() as i128)
    } else {
        let neg = (!c).overflowing_add(U256::one()).0;
        (neg < limit).then(|| -(neg.low_u128() as i128))
    }
}

fn u256_of(c: i128) -> U256 {
    if c >= 0 {
        U256::from(c as u128)
    } else {
        (!U256::from(c.unsigned_abs())).overflowing_add(U256::one()).0
    }
}

impl Linear {
    pub fn atom(atom: Atom) -> Self {
        Linear { constant: 0, terms: BTreeMap::from([(atom, 1)]) }
    }

    fn normalize(mut self) -> SymValue {
        self.terms.retain(|_, c| *c != 0);
        if self.terms.is_empty() {
            SymValue::Const(u256_of(self.constant))
        } else {
            SymValue::Linear(self)
        }
    }

    fn scale(&self, k: i128) -> Option<Linear> {
        let mut terms = BTreeMap::new();
        for (a, c) in &self.terms {
            terms.insert(a.clone(), c.checked_mul(k)?);
        }
        Some(Linear { constant: self.constant.checked_mul(k)?, terms })
    }

    fn add(&self, other: &Linear) -> Option<Linear> {
        let mut out = self.clone();
        out.constant = out.constant.checked_add(other.constant)?;
        for (a, c) in &other.terms {
            let e = out.terms.entry(a.clone()).or_insert(0);
            *e = e.checked_add(*c)?;
        }
        Some(out)
    }

    pub fn mentions_header(&self, header: BlockId) -> bool {
        self.terms.keys().any(|a| matches!(a, Atom::Slot { header: h, .. } if *h == header))
    }
}

impl SymValue {
    pub fn atom(atom: Atom) -> Self {
        SymValue::Linear(Linear::atom(atom))
    }

    pub fn as_const(&self) -> Option<U256> {
        match self {
            SymValue::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Constant and linear values as a `Linear` (constants get no terms).
    pub fn as_linear(&self) -> Option<Linear> {
        match self {
            SymValue::Const(c) => Some(Linear { constant: i128_of(*c)?, terms: BTreeMap::new() }),
            SymValue::Linear(l) => Some(l.clone()),
            _ => None,
        }
    }

    pub fn to_abstract(&self) -> AbstractValue {
        match self {
            SymValue::Const(c) => AbstractValue::Const(*c),
            SymValue::Linear(l) if l.constant == 0 && l.terms.len() == 1 => match l.terms.iter().next() {
                Some((Atom::CallData(off), 1)) => AbstractValue::CallDataWord(*off),
                Some((Atom::CallDataSize, 1)) => AbstractValue::CallDataSize,
                _ => AbstractValue::Unknown,
            },
            _ => AbstractValue::Unknown,
        }
    }

    fn is_cmp(&self) -> bool {
        matches!(self, SymValue::Cmp { .. })
    }
}

fn lin_binop(a: &SymValue, b: &SymValue, f: impl Fn(&Linear, &Linear) -> Option<Linear>) -> SymValue {
    match (a.as_linear(), b.as_linear()) {
        (Some(x), Some(y)) => f(&x, &y).map_or(SymValue::Unknown, Linear::normalize),
        _ => SymValue::Unknown,
    }
}

/// Applies a non-stack, non-memory opcode to symbolic operands (`args[0]` is
/// the stack top).
pub fn apply(op: Opcode, args: &[SymValue]) -> SymValue {
    let consts: Option<Vec<U256>> = args.iter().map(|a| a.as_const()).collect();
    if let Some(c) = consts.as_ref() {
        if let Some(v) = fold(op, c) {
            return SymValue::Const(v);
        }
    }
    let cmp = |op: CmpOp| {
        if args[0].is_cmp() || args[1].is_cmp() {
            SymValue::Unknown
        } else {
            SymValue::Cmp { op, lhs: Box::new(args[0].clone()), rhs: Box::new(args[1].clone()), negated: false }
        }
    };
    match op.mnemonic() {
        "ADD" => lin_binop(&args[0], &args[1], |x, y| x.add(y)),
        "SUB" => lin_binop(&args[0], &args[1], |x, y| x.add(&y.scale(-1)?)),
        "MUL" => match (args[0].as_const().and_then(i128_of), args[1].as_const().and_then(i128_of)) {
            (Some(k), _) => args[1].as_linear().and_then(|l| l.scale(k)).map_or(SymValue::Unknown, Linear::normalize),
            (_, Some(k)) => args[0].as_linear().and_then(|l| l.scale(k)).map_or(SymValue::Unknown, Linear::normalize),
            _ => SymValue::Unknown,
        },
        "SHL" => match args[0].as_const() {
            Some(s) if s < U256::from(100) => args[1]
                .as_linear()
                .and_then(|l| l.scale(1i128 << s.low_u32()))
                .map_or(SymValue::Unknown, Linear::normalize),
            _ => SymValue::Unknown,
        },
        "LT" => cmp(CmpOp::Lt),
        "GT" => cmp(CmpOp::Gt),
        "SLT" => cmp(CmpOp::Slt),
        "SGT" => cmp(CmpOp::Sgt),
        "EQ" => match (&args[0], &args[1]) {
            (SymValue::Cmp { op, lhs, rhs, negated }, z) | (z, SymValue::Cmp { op, lhs, rhs, negated })
                if z.as_const() == Some(U256::zero()) =>
            {
                SymValue::Cmp { op: *op, lhs: lhs.clone(), rhs: rhs.clone(), negated: !negated }
            }
            _ => cmp(CmpOp::Eq),
        },
        "ISZERO" => match &args[0] {
            SymValue::Cmp { op, lhs, rhs, negated } => {
                SymValue::Cmp { op: *op, lhs: lhs.clone(), rhs: rhs.clone(), negated: !negated }
            }
            SymValue::Unknown => SymValue::Unknown,
            x => SymValue::Cmp {
                op: CmpOp::Eq,
                lhs: Box::new(x.clone()),
                rhs: Box::new(SymValue::Const(U256::zero())),
                negated: false,
            },
        },
        _ => SymValue::Unknown,
    }
}

/// Abstract machine state at a program point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    /// Absolute stack height, if the same on every path.
    pub height: Option<usize>,
    /// Known top of the stack (last = top); deeper entries are unknown.
    pub stack: Vec<SymValue>,
    /// Words stored at constant memory offsets.
    pub memory: BTreeMap<u64, SymValue>,
}

impl State {
    fn entry() -> Self {
        State { height: Some(0), stack: Vec::new(), memory: BTreeMap::new() }
    }

    fn top() -> Self {
        State { height: None, stack: Vec::new(), memory: BTreeMap::new() }
    }

    /// Stack slot at `depth` from the top.
    pub fn peek(&self, depth: usize) -> SymValue {
        self.stack.len().checked_sub(depth + 1).map_or(SymValue::Unknown, |i| self.stack[i].clone())
    }

    fn pop(&mut self) -> SymValue {
        if let Some(h) = self.height.as_mut() {
            *h = h.saturating_sub(1);
        }
        self.stack.pop().unwrap_or(SymValue::Unknown)
    }

    fn push(&mut self, v: SymValue) {
        if let Some(h) = self.height.as_mut() {
            *h += 1;
        }
        self.stack.push(v);
        if self.stack.len() > super::MAX_STACK {
            self.stack.remove(0);
        }
    }

    fn ensure(&mut self, depth: usize) {
        while self.stack.len() < depth {
            self.stack.insert(0, SymValue::Unknown);
        }
    }

    fn join(&self, other: &State) -> State {
        let n = self.stack.len().min(other.stack.len());
        let a = &self.stack[self.stack.len() - n..];
        let b = &other.stack[other.stack.len() - n..];
        let stack = a.iter().zip(b).map(|(x, y)| if x == y { x.clone() } else { SymValue::Unknown }).collect();
        let memory = self
            .memory
            .iter()
            .filter(|(k, v)| other.memory.get(k) == Some(v))
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        let height = if self.height == other.height { self.height } else { None };
        State { height, stack, memory }
    }

    fn invalidate_from(&mut self, start: &SymValue, size: Option<&SymValue>) {
        match start.as_linear() {
            Some(l) if l.terms.values().all(|&c| c >= 0) => {
                let lo = l.constant.max(0) as u64;
                let hi = match (l.terms.is_empty(), size.and_then(|s| s.as_const())) {
                    (true, Some(s)) if s < U256::from(u32::MAX) => Some(lo + s.low_u64()),
                    _ => None,
                };
                self.memory.retain(|&k, _| k + 32 <= lo || hi.is_some_and(|h| k >= h));
            }
            _ => self.memory.clear(),
        }
    }
}

/// Per-loop-header slot classification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotClass {
    Invariant,
    Induction { step: i128 },
    Varying,
}

#[derive(Clone, Debug, Default)]
pub struct HeaderInfo {
    /// Entry state from outside the loop.
    pub pre: Option<State>,
    /// Classification by depth from the top.
    pub slots: Vec<SlotClass>,
    pub invariant_memory: BTreeSet<u64>,
}

/// Result of the value analysis for one function.
#[derive(Clone, Debug, Default)]
pub struct ValueFacts {
    /// Popped operands of each analyzed instruction (first = stack top),
    /// keyed by pc.
    pub operands: BTreeMap<usize, Vec<SymValue>>,
    pub headers: BTreeMap<BlockId, HeaderInfo>,
    pub exit_states: BTreeMap<BlockId, State>,
}

impl ValueFacts {
    pub fn operand(&self, pc: usize, i: usize) -> SymValue {
        self.operands.get(&pc).and_then(|v| v.get(i).cloned()).unwrap_or(SymValue::Unknown)
    }
}

fn step(ins: &Instruction, state: &mut State, record: &mut BTreeMap<usize, Vec<SymValue>>) {
    let op = ins.opcode;
    if op.is_push() {
        state.push(SymValue::Const(ins.immediate.unwrap_or_default()));
        return;
    }
    if let Some(n) = op.dup_depth() {
        state.ensure(n);
        let v = state.peek(n - 1);
        state.push(v);
        return;
    }
    if let Some(n) = op.swap_depth() {
        state.ensure(n + 1);
        let len = state.stack.len();
        state.stack.swap(len - 1, len - 1 - n);
        return;
    }
    let args: Vec<SymValue> = (0..op.stack_pops()).map(|_| state.pop()).collect();
    let result = match op.mnemonic() {
        "CALLDATALOAD" => match args[0].as_const() {
            Some(off) if off <= U256::from(u32::MAX) => SymValue::atom(Atom::CallData(off.as_usize())),
            _ => SymValue::Unknown,
        },
        "CALLDATASIZE" => SymValue::atom(Atom::CallDataSize),
        "PC" => SymValue::Const(U256::from(ins.pc)),
        "SHA3" => SymValue::Hashed,
        "SLOAD" => match args[0].as_const() {
            Some(slot) => SymValue::atom(Atom::Storage(slot)),
            None => SymValue::Unknown,
        },
        "MLOAD" => match args[0].as_const() {
            Some(off) if off < U256::from(u64::MAX) => {
                state.memory.get(&off.low_u64()).cloned().unwrap_or(SymValue::Unknown)
            }
            _ => SymValue::Unknown,
        },
        "MSTORE" => {
            state.invalidate_from(&args[0], Some(&SymValue::Const(U256::from(32))));
            if let Some(off) = args[0].as_const().filter(|o| *o < U256::from(u64::MAX)) {
                state.memory.insert(off.low_u64(), args[1].clone());
            }
            SymValue::Unknown
        }
        "MSTORE8" => {
            state.invalidate_from(&args[0], Some(&SymValue::Const(U256::one())));
            SymValue::Unknown
        }
        "CALLDATACOPY" | "CODECOPY" | "RETURNDATACOPY" => {
            state.invalidate_from(&args[0], Some(&args[2]));
            SymValue::Unknown
        }
        "EXTCODECOPY" => {
            state.invalidate_from(&args[1], Some(&args[3]));
            SymValue::Unknown
        }
        "CALL" | "CALLCODE" | "DELEGATECALL" | "STATICCALL" | "CREATE" | "CREATE2" => {
            state.memory.clear();
            SymValue::Unknown
        }
        _ if op.stack_pushes() == 1 && op.stack_pops() > 0 => apply(op, &args),
        _ => SymValue::Unknown,
    };
    record.insert(ins.pc, args);
    for _ in 0..op.stack_pushes() {
        state.push(result.clone());
    }
}

fn run_block(cfg: &Cfg, block: BlockId, mut state: State, record: &mut BTreeMap<usize, Vec<SymValue>>) -> State {
    for ins in &cfg.block(block).instructions {
        step(ins, &mut state, record);
    }
    state
}

type Classes = (Vec<Option<SlotClass>>, BTreeSet<u64>);

fn classify(header: BlockId, entry: &State, latches: &[State]) -> Classes {
    let sym = |depth| SymValue::atom(Atom::Slot { header, depth });
    let slots = (0..entry.stack.len())
        .map(|depth| {
            let e = entry.peek(depth);
            let mut class: Option<SlotClass> = None;
            for l in latches {
                let v = l.peek(depth);
                let this = if l.height != entry.height || entry.height.is_none() || e == SymValue::Unknown {
                    SlotClass::Varying
                } else if v == e {
                    SlotClass::Invariant
                } else {
                    match (e == sym(depth), v.as_linear(), e.as_linear()) {
                        (true, Some(lv), Some(le)) if lv.terms == le.terms => SlotClass::Induction { step: lv.constant },
                        _ => SlotClass::Varying,
                    }
                };
                class = Some(match class {
                    None => this,
                    Some(prev) if prev == this => prev,
                    Some(_) => SlotClass::Varying,
                });
            }
            Some(class.unwrap_or(SlotClass::Varying))
        })
        .collect();
    let memory = entry
        .memory
        .iter()
        .filter(|(k, v)| latches.iter().all(|l| l.memory.get(k) == Some(v)))
        .map(|(k, _)| *k)
        .collect();
    (slots, memory)
}

struct Pass {
    exits: Vec<Option<State>>,
    pres: BTreeMap<usize, State>,
    entries: BTreeMap<usize, State>,
    record: BTreeMap<usize, Vec<SymValue>>,
}

fn run_pass(cfg: &Cfg, graph: &UnitGraph, headers: &BTreeSet<usize>, classes: &BTreeMap<usize, Classes>, forget: bool) -> Pass {
    let mut pass = Pass { exits: vec![None; graph.len()], pres: BTreeMap::new(), entries: BTreeMap::new(), record: BTreeMap::new() };
    for &v in graph.dom.rpo() {
        let entry = if v == graph.entry {
            State::entry()
        } else if graph.preds[v].iter().any(|&u| graph.is_irreducible_edge(u, v)) {
            State::top()
        } else {
            let incoming: Vec<&State> = graph.preds[v]
                .iter()
                .filter(|&&u| !graph.is_back_edge(u, v))
                .filter_map(|&u| pass.exits[u].as_ref())
                .collect();
            match incoming.split_first() {
                Some((first, rest)) => rest.iter().fold((*first).clone(), |acc, s| acc.join(s)),
                None => State::top(),
            }
        };
        let entry = if headers.contains(&v) {
            pass.pres.insert(v, entry.clone());
            let e = header_entry(graph.nodes[v], entry, classes.get(&v), forget);
            pass.entries.insert(v, e.clone());
            e
        } else {
            entry
        };
        pass.exits[v] = Some(run_block(cfg, graph.nodes[v], entry, &mut pass.record));
    }
    pass
}

/// Runs the value analysis over `graph`, iterating loop-slot
/// classification to a fixpoint.
pub fn analyze(cfg: &Cfg, graph: &UnitGraph) -> ValueFacts {
    let headers: BTreeSet<usize> = (0..graph.len())
        .filter(|&v| graph.dom.is_reachable(v) && graph.preds[v].iter().any(|&u| graph.is_back_edge(u, v)))
        .collect();
    let reclassify = |pass: &Pass| -> BTreeMap<usize, Classes> {
        headers
            .iter()
            .map(|&h| {
                let latches: Vec<State> = graph.preds[h]
                    .iter()
                    .filter(|&&u| graph.is_back_edge(u, h))
                    .filter_map(|&u| pass.exits[u].clone())
                    .collect();
                (h, classify(graph.nodes[h], &pass.entries[&h], &latches))
            })
            .collect()
    };
    // Optimistic rounds: varying slots keep their symbol so that relations
    // discovered later in enclosing loops are not lost.
    let mut classes: BTreeMap<usize, Classes> = BTreeMap::new();
    for _ in 0..8 {
        let next = reclassify(&run_pass(cfg, graph, &headers, &classes, false));
        if next == classes {
            break;
        }
        classes = next;
    }
    // Checking rounds: varying slots are forgotten and any slot whose class
    // is not reproduced is demoted until the classes are self-consistent.
    let pass = loop {
        let pass = run_pass(cfg, graph, &headers, &classes, true);
        let next = reclassify(&pass);
        let mut changed = false;
        for (h, (slots, mem)) in classes.iter_mut() {
            let (new_slots, new_mem) = &next[h];
            for (d, c) in slots.iter_mut().enumerate() {
                if new_slots.get(d) != Some(c) && *c != Some(SlotClass::Varying) {
                    *c = Some(SlotClass::Varying);
                    changed = true;
                }
            }
            let before = mem.len();
            mem.retain(|k| new_mem.contains(k));
            changed |= mem.len() != before;
        }
        if !changed && next.keys().all(|h| classes.contains_key(h)) {
            break pass;
        }
        for (h, c) in next {
            classes.entry(h).or_insert(c);
        }
    };
    let mut facts = ValueFacts { operands: pass.record, ..ValueFacts::default() };
    for &h in &headers {
        let (slots, invariant_memory) = classes[&h].clone();
        let slots = slots.into_iter().map(|c| c.unwrap_or(SlotClass::Varying)).collect();
        facts.headers.insert(graph.nodes[h], HeaderInfo { pre: pass.pres.get(&h).cloned(), slots, invariant_memory });
    }
    for (i, e) in pass.exits.into_iter().enumerate() {
        if let Some(s) = e {
            facts.exit_states.insert(graph.nodes[i], s);
        }
    }
    facts
}

fn header_entry(header: BlockId, pre: State, classes: Option<&Classes>, forget: bool) -> State {
    let n = pre.stack.len();
    let slot = |depth: usize| match classes.and_then(|c| c.0.get(depth)).cloned().flatten() {
        None | Some(SlotClass::Induction { .. }) => SymValue::atom(Atom::Slot { header, depth }),
        Some(SlotClass::Invariant) => pre.peek(depth),
        Some(SlotClass::Varying) if forget => SymValue::Unknown,
        Some(SlotClass::Varying) => SymValue::atom(Atom::Slot { header, depth }),
    };
    let stack = (0..n).rev().map(slot).collect();
    let memory = match classes {
        None => pre.memory.clone(),
        Some((_, mem)) => pre.memory.iter().filter(|(k, _)| mem.contains(k)).map(|(k, v)| (*k, v.clone())).collect(),
    };
    State { height: pre.height, stack, memory }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::cfg::{split_functions, Cfg};

    fn facts_of(src: &str) -> (crate::asm::Assembled, Cfg, UnitGraph, ValueFacts) {
        let a = assemble(src).unwrap();
        let cfg = Cfg::build(&a.instructions());
        let unit = split_functions(&cfg).units.remove(0);
        let graph = UnitGraph::new(&cfg, &unit);
        let facts = analyze(&cfg, &graph);
        (a, cfg, graph, facts)
    }

    #[test]
    fn counter_loop_slots() {
        // i on top of the stack, n = calldata[0x24] invariant below it.
        let (a, _, _, facts) = facts_of(
            "0x24 CALLDATALOAD 0
             head: DUP2 DUP2 LT ISZERO @done JUMPI
             1 ADD @head JUMP
             done: STOP",
        );
        let info = &facts.headers[&BlockId(a.label("head"))];
        assert_eq!(info.slots, vec![SlotClass::Induction { step: 1 }, SlotClass::Invariant]);
        let jumpi = a.instructions().iter().find(|i| i.opcode == Opcode::JUMPI).unwrap().pc;
        let cond = facts.operand(jumpi, 1);
        let head = BlockId(a.label("head"));
        assert_eq!(
            cond,
            SymValue::Cmp {
                op: CmpOp::Lt,
                lhs: Box::new(SymValue::atom(Atom::Slot { header: head, depth: 0 })),
                rhs: Box::new(SymValue::atom(Atom::CallData(0x24))),
                negated: true,
            }
        );
    }

    #[test]
    fn memory_pointer_round_trip() {
        let (a, _, _, facts) = facts_of("0x80 0x40 MSTORE 0x40 MLOAD 0x20 ADD MLOAD STOP");
        let second = a.instructions().iter().filter(|i| i.opcode == Opcode::MLOAD).nth(1).unwrap().pc;
        assert_eq!(facts.operand(second, 0), SymValue::Const(U256::from(0xa0)));
    }

    #[test]
    fn doubling_is_varying() {
        let (a, _, _, facts) = facts_of(
            "0x04 CALLDATALOAD 1
             head: DUP2 DUP2 LT ISZERO @done JUMPI
             2 MUL @head JUMP
             done: STOP",
        );
        assert_eq!(facts.headers[&BlockId(a.label("head"))].slots[0], SlotClass::Varying);
    }

    #[test]
    fn linear_arith() {
        let x = SymValue::atom(Atom::CallData(4));
        let v = apply(Opcode::MUL, &[SymValue::Const(U256::from(32)), x.clone()]);
        let v = apply(Opcode::ADD, &[SymValue::Const(U256::from(0xa0)), v]);
        assert_eq!(v.as_linear().unwrap().constant, 0xa0);
        assert_eq!(v.as_linear().unwrap().terms[&Atom::CallData(4)], 32);
        let back = apply(Opcode::SUB, &[v, SymValue::Const(U256::from(0xa0))]);
        assert_eq!(apply(Opcode::SUB, &[back.clone(), back]), SymValue::Const(U256::zero()));
    }
}
