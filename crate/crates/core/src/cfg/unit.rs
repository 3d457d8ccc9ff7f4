//! Dense per-function view of the CFG used by the loop and bound analyses.

use std::collections::{BTreeMap, BTreeSet};

use super::dom::DomTree;
use super::{BlockId, Cfg, FunctionUnit};

#[derive(Clone, Debug)]
pub struct UnitGraph {
    pub nodes: Vec<BlockId>,
    pub index: BTreeMap<BlockId, usize>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub entry: usize,
    pub dom: DomTree,
    /// Blocks only reached through internal calls made by this unit.
    pub transitive: BTreeSet<BlockId>,
    /// Whether a jump in the unit could not be resolved.
    pub has_unresolved: bool,
}

impl UnitGraph {
    pub fn new(cfg: &Cfg, unit: &FunctionUnit) -> Self {
        let mut nodes: Vec<BlockId> = Vec::new();
        let mut index = BTreeMap::new();
        let mut add = |b: BlockId, nodes: &mut Vec<BlockId>| {
            *index.entry(b).or_insert_with(|| {
                nodes.push(b);
                nodes.len() - 1
            })
        };
        for &b in &unit.dispatch_path {
            add(b, &mut nodes);
        }
        add(unit.entry, &mut nodes);
        for &b in &unit.reachable_blocks {
            add(b, &mut nodes);
        }
        let dispatch: BTreeSet<BlockId> = unit.dispatch_path.iter().copied().collect();
        let mut succs = vec![Vec::new(); nodes.len()];
        for (i, &b) in nodes.iter().enumerate() {
            if let Some(pos) = unit.dispatch_path.iter().position(|&d| d == b) {
                let next = unit.dispatch_path.get(pos + 1).copied().unwrap_or(unit.entry);
                succs[i].push(index[&next]);
                continue;
            }
            for s in &cfg.block(b).successors {
                if dispatch.contains(s) {
                    continue;
                }
                if let Some(&j) = index.get(s) {
                    if !succs[i].contains(&j) {
                        succs[i].push(j);
                    }
                }
            }
        }
        let mut preds = vec![Vec::new(); nodes.len()];
        for (u, ss) in succs.iter().enumerate() {
            for &v in ss {
                preds[v].push(u);
            }
        }
        let dom = DomTree::compute(&succs, 0);
        let has_unresolved = cfg.has_unresolved_in(&unit.analyzed_blocks());

        // Local blocks: reachable from the entry without descending into
        // internal calls; a call continues at its return site.
        let mut local = BTreeSet::new();
        let mut work = vec![unit.entry];
        while let Some(b) = work.pop() {
            if !local.insert(b) {
                continue;
            }
            match cfg.calls.get(&b) {
                Some(calls) => {
                    let callees: BTreeSet<BlockId> = calls.iter().map(|c| c.callee).collect();
                    work.extend(calls.iter().map(|c| c.return_to));
                    work.extend(cfg.block(b).successors.iter().filter(|s| !callees.contains(s)));
                }
                None => work.extend(cfg.block(b).successors.iter().copied()),
            }
        }
        let transitive = unit.reachable_blocks.difference(&local).copied().collect();

        UnitGraph { entry: 0, nodes, index, succs, preds, dom, transitive, has_unresolved }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_back_edge(&self, from: usize, to: usize) -> bool {
        self.dom.dominates(to, from)
    }

    /// Edge that goes backwards in reverse postorder without being a back
    /// edge; present only in irreducible regions.
    pub fn is_irreducible_edge(&self, from: usize, to: usize) -> bool {
        match (self.dom.rpo_index(from), self.dom.rpo_index(to)) {
            (Some(f), Some(t)) => t <= f && !self.is_back_edge(from, to),
            _ => false,
        }
    }
}
