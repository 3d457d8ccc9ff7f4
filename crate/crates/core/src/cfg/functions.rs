//! Splitting a contract CFG into public functions through its dispatcher.
//!
//! A selector block ends in `PUSH4 <selector> (DUPn)? EQ PUSH <entry> JUMPI`
//! (operands of EQ in either order). The dispatcher region is every block
//! that lies on a path from the contract entry to a selector block without
//! passing through a function entry. Binary-search pivots (`GT`/`LT` against
//! a PUSH4) are part of the region as long as they lead to selector blocks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{BlockId, Cfg, EdgeKind};
use crate::evm::Opcode;
use crate::ingest::selector::Selector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnitKind {
    Public,
    Fallback,
    /// Whole program when no dispatcher was recognized.
    Anonymous,
}

#[derive(Clone, Debug)]
pub struct FunctionUnit {
    pub kind: UnitKind,
    pub selector: Option<Selector>,
    pub signature: Option<String>,
    pub entry: BlockId,
    /// Dispatcher blocks executed before `entry`, in order, starting at the
    /// contract entry. Empty for anonymous units.
    pub dispatch_path: Vec<BlockId>,
    /// Transitive successor closure of `entry`, without dispatcher blocks.
    pub reachable_blocks: BTreeSet<BlockId>,
}

impl FunctionUnit {
    pub fn name(&self) -> String {
        match (&self.signature, &self.selector, self.kind) {
            (Some(sig), _, _) => sig.clone(),
            (None, Some(sel), _) => sel.to_hex(),
            (None, None, UnitKind::Fallback) => "fallback".into(),
            _ => "anonymous".into(),
        }
    }

    /// Blocks analyzed for this unit: dispatch path plus reachable blocks.
    pub fn analyzed_blocks(&self) -> BTreeSet<BlockId> {
        self.dispatch_path.iter().copied().chain(self.reachable_blocks.iter().copied()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FunctionSplit {
    pub units: Vec<FunctionUnit>,
    pub dispatcher: BTreeSet<BlockId>,
    pub found_dispatcher: bool,
}

impl FunctionSplit {
    pub fn by_selector(&self, selector: Selector) -> Option<&FunctionUnit> {
        self.units.iter().find(|u| u.selector == Some(selector))
    }

    /// Attaches canonical signatures to the units whose selector they hash to.
    pub fn attach_signatures<S: AsRef<str>>(&mut self, signatures: &[S]) {
        for sig in signatures {
            let sel = Selector::from_signature(sig.as_ref());
            for u in self.units.iter_mut().filter(|u| u.selector == Some(sel)) {
                u.signature = Some(sig.as_ref().to_string());
            }
        }
    }

    /// Unit matching a selector given as hex or signature text.
    pub fn find(&self, query: &str) -> Option<&FunctionUnit> {
        let r = crate::ingest::resolve_selector(query).ok()?;
        self.by_selector(r.selector)
    }
}

/// Returns (selector, entry) if `block` is a selector comparison.
fn selector_match(cfg: &Cfg, block: BlockId) -> Option<(Selector, BlockId)> {
    let ins = &cfg.block(block).instructions;
    let n = ins.len();
    if n < 4 || ins[n - 1].opcode != Opcode::JUMPI || !ins[n - 2].opcode.is_push() || ins[n - 3].opcode != Opcode::EQ {
        return None;
    }
    let window = &ins[n.saturating_sub(5)..n - 3];
    let push4 = window.iter().rev().find(|i| i.opcode == Opcode::PUSH4)?;
    let target = ins[n - 2].immediate?;
    let entry = BlockId(usize::try_from(target.low_u64()).ok()?);
    let taken = cfg.block(block).edge_kind(entry)? == EdgeKind::True;
    if !taken {
        return None;
    }
    let mut bytes = [0u8; 32];
    push4.immediate?.to_big_endian(&mut bytes);
    Some((Selector([bytes[28], bytes[29], bytes[30], bytes[31]]), entry))
}

fn closure(cfg: &Cfg, from: BlockId, exclude: &BTreeSet<BlockId>) -> BTreeSet<BlockId> {
    let mut seen = BTreeSet::new();
    let mut work = vec![from];
    while let Some(b) = work.pop() {
        if exclude.contains(&b) || !seen.insert(b) {
            continue;
        }
        work.extend(cfg.block(b).successors.iter().copied());
    }
    seen
}

pub fn split_functions(cfg: &Cfg) -> FunctionSplit {
    let matches: BTreeMap<BlockId, (Selector, BlockId)> =
        cfg.blocks.keys().filter_map(|&b| selector_match(cfg, b).map(|m| (b, m))).collect();
    if matches.is_empty() || !cfg.blocks.contains_key(&cfg.entry) {
        return anonymous(cfg);
    }
    let entries: BTreeSet<BlockId> = matches.values().map(|&(_, e)| e).collect();

    // Forward from the contract entry, never stepping into a function entry.
    let forward = closure(cfg, cfg.entry, &entries);
    // Backward from selector blocks within the forward set.
    let preds = cfg.predecessors();
    let mut region = BTreeSet::new();
    let mut work: Vec<BlockId> = matches.keys().copied().filter(|b| forward.contains(b)).collect();
    while let Some(b) = work.pop() {
        if !region.insert(b) {
            continue;
        }
        for p in &preds[&b] {
            if forward.contains(p) && !entries.contains(p) {
                work.push(*p);
            }
        }
    }
    if region.is_empty() {
        return anonymous(cfg);
    }

    // Shortest dispatch path to each region block.
    let mut parent: BTreeMap<BlockId, BlockId> = BTreeMap::new();
    let mut queue = VecDeque::from([cfg.entry]);
    let mut seen = BTreeSet::from([cfg.entry]);
    while let Some(b) = queue.pop_front() {
        for &s in &cfg.block(b).successors {
            if region.contains(&s) && seen.insert(s) {
                parent.insert(s, b);
                queue.push_back(s);
            }
        }
    }
    let path_to = |b: BlockId| {
        let mut path = vec![b];
        let mut cur = b;
        while let Some(&p) = parent.get(&cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    };

    let mut units = Vec::new();
    for (&block, &(selector, entry)) in &matches {
        if !region.contains(&block) {
            continue;
        }
        units.push(FunctionUnit {
            kind: UnitKind::Public,
            selector: Some(selector),
            signature: None,
            entry,
            dispatch_path: path_to(block),
            reachable_blocks: closure(cfg, entry, &region),
        });
    }

    // The not-taken edge of a selector block that leaves the region starts
    // the fallback.
    let fallback = matches.keys().filter(|b| region.contains(b)).find_map(|&b| {
        let blk = cfg.block(b);
        blk.successors
            .iter()
            .zip(&blk.edge_kinds)
            .find(|(s, k)| **k == EdgeKind::False && !region.contains(s))
            .map(|(s, _)| (b, *s))
    });
    if let Some((from, entry)) = fallback {
        units.push(FunctionUnit {
            kind: UnitKind::Fallback,
            selector: None,
            signature: None,
            entry,
            dispatch_path: path_to(from),
            reachable_blocks: closure(cfg, entry, &region),
        });
    }
    FunctionSplit { units, dispatcher: region, found_dispatcher: true }
}

fn anonymous(cfg: &Cfg) -> FunctionSplit {
    let units = if cfg.blocks.is_empty() {
        Vec::new()
    } else {
        vec![FunctionUnit {
            kind: UnitKind::Anonymous,
            selector: None,
            signature: None,
            entry: cfg.entry,
            dispatch_path: Vec::new(),
            reachable_blocks: cfg.blocks.keys().copied().collect(),
        }]
    };
    FunctionSplit { units, dispatcher: BTreeSet::new(), found_dispatcher: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::cfg::Cfg;

    const THREE: &str = "
        0x80 0x40 MSTORE
        4 CALLDATASIZE LT @fallback JUMPI
        0 CALLDATALOAD 0xe0 SHR
        DUP1 PUSH4 0xa9059cbb EQ @f1 JUMPI
        DUP1 PUSH4 0x18160ddd EQ @f2 JUMPI
        DUP1 PUSH4 0x70a08231 EQ @f3 JUMPI
        fallback: 0 DUP1 REVERT
        f1: 1 0 SSTORE STOP
        f2: 2 0 SSTORE STOP
        f3: 3 0 SSTORE STOP";

    #[test]
    fn three_selectors() {
        let a = assemble(THREE).unwrap();
        let cfg = Cfg::build(&a.instructions());
        let split = split_functions(&cfg);
        assert!(split.found_dispatcher);
        let publics: Vec<_> = split.units.iter().filter(|u| u.kind == UnitKind::Public).collect();
        assert_eq!(publics.len(), 3);
        let entries: BTreeSet<_> = publics.iter().map(|u| u.entry).collect();
        assert_eq!(entries, [a.label("f1"), a.label("f2"), a.label("f3")].map(BlockId).into_iter().collect());
        let u = split.by_selector(Selector([0xa9, 0x05, 0x9c, 0xbb])).unwrap();
        assert_eq!(u.entry, BlockId(a.label("f1")));
        assert_eq!(u.reachable_blocks.len(), 1);
        let f3 = split.by_selector(Selector([0x70, 0xa0, 0x82, 0x31])).unwrap();
        assert_eq!(f3.dispatch_path.len(), 4);
        assert_eq!(f3.dispatch_path[0], cfg.entry);
        let fb = split.units.iter().find(|u| u.kind == UnitKind::Fallback).unwrap();
        assert_eq!(fb.entry, BlockId(a.label("fallback")));
        for unit in &split.units {
            assert!(unit.reachable_blocks.is_disjoint(&split.dispatcher));
        }
    }

    #[test]
    fn no_dispatcher() {
        let cfg = Cfg::build(&assemble("1 2 ADD POP STOP").unwrap().instructions());
        let split = split_functions(&cfg);
        assert!(!split.found_dispatcher);
        assert_eq!(split.units.len(), 1);
        assert_eq!(split.units[0].kind, UnitKind::Anonymous);
        assert_eq!(split.units[0].name(), "anonymous");
    }

    #[test]
    fn empty_code_has_no_units() {
        let cfg = Cfg::build(&[]);
        assert!(split_functions(&cfg).units.is_empty());
    }
}
