//! Per-function analysis state: graph, value facts, loops, parameters, and
//! symbolic ranges of loop counters.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use primitive_types::U256;

use super::model::{Cell, SstorePricing};
use super::params::ParamRegistry;
use super::poly::{rat, Poly, SymbolicBound};
use crate::cfg::loops::find_loops_in;
use crate::cfg::values::{analyze, Atom, Linear, SlotClass, SymValue, ValueFacts};
use crate::cfg::{BlockId, Cfg, ExitCondition, FunctionUnit, LoopInfo, Relation, UnitGraph};
use crate::evm::{GasSchedule, Instruction, Opcode};
use crate::ingest::{SourceMap, StorageLayout};

/// Inputs shared by every cost model run.
#[derive(Clone, Copy, Debug)]
pub struct Env<'a> {
    pub schedule: &'a GasSchedule,
    pub srcmap: Option<&'a SourceMap>,
    pub pricing: SstorePricing,
}

impl<'a> Env<'a> {
    pub fn new(schedule: &'a GasSchedule) -> Self {
        Env { schedule, srcmap: None, pricing: SstorePricing::Worst }
    }

    pub fn with_srcmap(mut self, srcmap: Option<&'a SourceMap>) -> Self {
        self.srcmap = srcmap;
        self
    }

    pub fn with_pricing(mut self, pricing: SstorePricing) -> Self {
        self.pricing = pricing;
        self
    }
}

pub struct FunctionAnalysis<'c> {
    pub cfg: &'c Cfg,
    pub unit: FunctionUnit,
    pub graph: UnitGraph,
    pub facts: ValueFacts,
    pub loops: Vec<LoopInfo>,
    pub params: ParamRegistry,
    pub layout: StorageLayout,
    /// Slots written somewhere in the unit; `None` when any write may hit
    /// any slot.
    written_slots: Option<BTreeSet<U256>>,
    bound_memo: RefCell<BTreeMap<BlockId, Option<Option<Poly>>>>,
}

fn collect_atoms(v: &SymValue, out: &mut BTreeSet<Atom>) {
    match v {
        SymValue::Linear(l) => out.extend(l.terms.keys().cloned()),
        SymValue::Cmp { lhs, rhs, .. } => {
            collect_atoms(lhs, out);
            collect_atoms(rhs, out);
        }
        _ => {}
    }
}

impl<'c> FunctionAnalysis<'c> {
    pub fn new(cfg: &'c Cfg, unit: &FunctionUnit, layout: Option<&StorageLayout>) -> Self {
        let graph = UnitGraph::new(cfg, unit);
        let facts = analyze(cfg, &graph);
        let loops = find_loops_in(cfg, &graph, &facts);
        let mut params = ParamRegistry::new(unit.signature.as_deref(), layout);
        let mut atoms = BTreeSet::new();
        for args in facts.operands.values() {
            args.iter().for_each(|a| collect_atoms(a, &mut atoms));
        }
        for h in facts.headers.values() {
            if let Some(pre) = &h.pre {
                pre.stack.iter().for_each(|a| collect_atoms(a, &mut atoms));
            }
        }
        for a in &atoms {
            params.register(a);
        }
        let mut written = Some(BTreeSet::new());
        for &b in &graph.nodes {
            for ins in &cfg.block(b).instructions {
                if ins.opcode.is_external_call() || matches!(ins.opcode, Opcode::CREATE | Opcode::CREATE2) {
                    written = None;
                } else if ins.opcode == Opcode::SSTORE {
                    match facts.operand(ins.pc, 0).as_const() {
                        Some(slot) => {
                            if let Some(w) = written.as_mut() {
                                w.insert(slot);
                            }
                        }
                        None => written = None,
                    }
                }
            }
        }
        FunctionAnalysis {
            cfg,
            unit: unit.clone(),
            graph,
            facts,
            loops,
            params,
            layout: layout.cloned().unwrap_or_default(),
            written_slots: written,
            bound_memo: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn node_of(&self, block: BlockId) -> Option<usize> {
        self.graph.index.get(&block).copied()
    }

    pub fn instructions(&self, node: usize) -> &[Instruction] {
        &self.cfg.block(self.graph.nodes[node]).instructions
    }

    /// Constant slot operand of an SLOAD/SSTORE, if known.
    pub fn slot_of(&self, pc: usize) -> Option<U256> {
        match self.facts.operands.get(&pc) {
            Some(args) => args.first().and_then(|a| a.as_const()),
            None => self.cfg.slot_operands.get(&pc).and_then(|a| a.as_const()),
        }
    }

    pub fn cell_of(&self, ins: &Instruction, srcmap: Option<&SourceMap>) -> Cell {
        Cell {
            op: ins.opcode,
            line: srcmap.and_then(|m| m.line_of(ins.pc)),
            field: ins.opcode.is_storage_access().then(|| self.layout.field_name(self.slot_of(ins.pc))),
            transitive: self.cfg.block_of_pc(ins.pc).is_some_and(|b| self.graph.transitive.contains(&b)),
        }
    }

    /// Whether `node` only runs in iterations of loop `header` whose exit
    /// test passed.
    fn tight(&self, at: usize, header: BlockId) -> bool {
        self.loop_of(header).is_some_and(|l| {
            l.exit_conditions.iter().any(|e| {
                let (Some(s), Some(t)) = (self.node_of(e.stay_target), self.node_of(e.test_block)) else {
                    return false;
                };
                self.graph.preds[s] == [t] && self.graph.dom.dominates(s, at)
            })
        })
    }

    pub fn loop_of(&self, header: BlockId) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.header == header && !l.irreducible)
    }

    fn atom_upper(&self, atom: &Atom, at: usize) -> Option<Poly> {
        match atom {
            Atom::Slot { header, depth } => {
                let info = self.facts.headers.get(header)?;
                let Some(SlotClass::Induction { step }) = info.slots.get(*depth) else {
                    return None;
                };
                let init = info.pre.as_ref()?.peek(*depth);
                let hidx = self.node_of(*header)?;
                let init_up = self.upper(&init, hidx)?;
                if *step > 0 {
                    let n = self.loop_bound(*header)?;
                    let n = if self.tight(at, *header) { n.sub(&Poly::int(1)) } else { n };
                    Some(init_up.add(&n.scale(&rat(*step))))
                } else {
                    Some(init_up)
                }
            }
            Atom::Storage(slot) => {
                let stable = self.written_slots.as_ref().is_some_and(|w| !w.contains(slot));
                if !stable {
                    return None;
                }
                self.params.name_of(atom).map(Poly::param)
            }
            _ => self.params.name_of(atom).map(Poly::param),
        }
    }

    fn atom_lower(&self, atom: &Atom) -> Poly {
        if let Atom::Slot { header, depth } = atom {
            let info = self.facts.headers.get(header);
            if let Some(info) = info {
                if let (Some(SlotClass::Induction { step }), Some(pre)) = (info.slots.get(*depth), &info.pre) {
                    if *step > 0 {
                        if let Some(h) = self.node_of(*header) {
                            return self.lower(&pre.peek(*depth), h);
                        }
                    }
                }
            }
        }
        Poly::zero()
    }

    fn linear_upper(&self, lin: &Linear, at: usize) -> Option<Poly> {
        let mut p = Poly::int(lin.constant);
        for (atom, &c) in &lin.terms {
            let part = if c > 0 { self.atom_upper(atom, at)? } else { self.atom_lower(atom) };
            p = p.add(&part.scale(&rat(c)));
        }
        Some(p)
    }

    /// Upper bound of a value at `at`, possibly with negative coefficients.
    pub fn upper(&self, v: &SymValue, at: usize) -> Option<Poly> {
        self.linear_upper(&v.as_linear()?, at)
    }

    /// Lower bound of a value at `at`; zero when nothing better is known.
    pub fn lower(&self, v: &SymValue, at: usize) -> Poly {
        let Some(lin) = v.as_linear() else {
            return Poly::zero();
        };
        let mut p = Poly::int(lin.constant);
        for (atom, &c) in &lin.terms {
            if c > 0 {
                p = p.add(&self.atom_lower(atom).scale(&rat(c)));
            } else {
                match self.atom_upper(atom, at) {
                    Some(u) => p = p.add(&u.scale(&rat(c))),
                    None => return Poly::zero(),
                }
            }
        }
        p
    }

    /// Non-negative upper bound of a value, or `None`.
    pub fn upper_clamped(&self, v: &SymValue, at: usize) -> Option<Poly> {
        self.upper(v, at).map(|p| p.clamp())
    }

    /// Bound on the number of completed iterations of the loop at `header`.
    pub fn loop_bound(&self, header: BlockId) -> Option<Poly> {
        if let Some(m) = self.bound_memo.borrow().get(&header) {
            return m.clone().flatten();
        }
        self.bound_memo.borrow_mut().insert(header, None);
        let result = self
            .loop_of(header)
            .and_then(|l| l.exit_conditions.iter().find_map(|e| self.exit_bound(e)));
        self.bound_memo.borrow_mut().insert(header, Some(result.clone()));
        result
    }

    fn exit_bound(&self, e: &ExitCondition) -> Option<Poly> {
        let s = e.step?;
        if s == 0 {
            return None;
        }
        let at = self.node_of(e.test_block)?;
        let hidx = self.node_of(e.induction.header)?;
        let a = s.abs();
        let k = Poly::int(e.induction.offset);
        let x = if s > 0 {
            let base = self.upper(&e.limit, at)?.sub(&self.lower(&e.induction.init, hidx)).sub(&k);
            match e.relation {
                Relation::Lt => base.add(&Poly::int(a - 1)),
                Relation::Le => base.add(&Poly::int(a)),
                Relation::Ne if a == 1 => base,
                _ => return None,
            }
        } else {
            let base = self.upper(&e.induction.init, hidx)?.add(&k).sub(&self.lower(&e.limit, at));
            let limit_const = e.limit.as_const().filter(|c| *c < U256::from(u64::MAX)).map(|c| c.low_u64() as i128);
            match e.relation {
                Relation::Gt if a == 1 || limit_const.is_some_and(|c| c + 1 >= a) => base.add(&Poly::int(a - 1)),
                Relation::Ge if limit_const.is_some_and(|c| c >= a) => base.add(&Poly::int(a)),
                Relation::Ne if a == 1 => base,
                _ => return None,
            }
        };
        Some(x.scale(&BigRational::new(1.into(), a.into())).clamp())
    }

    /// Loop bound as a `SymbolicBound`.
    pub fn loop_bound_symbolic(&self, header: BlockId) -> SymbolicBound {
        match self.loop_bound(header) {
            Some(p) => SymbolicBound::from_poly(p),
            None => SymbolicBound::unbounded(),
        }
    }

    /// `⌈v / 32⌉` as a non-negative polynomial.
    pub fn words(&self, v: &SymValue, at: usize) -> Option<Poly> {
        if let Some(c) = v.as_const() {
            if c > U256::from(u64::MAX) {
                return None;
            }
            return Some(Poly::int(crate::evm::word::words_for(c.low_u64()) as i128));
        }
        let p = self.upper_clamped(v, at)?;
        Some(p.scale(&BigRational::new(1.into(), 32.into())).ceil_coeffs())
    }
}
