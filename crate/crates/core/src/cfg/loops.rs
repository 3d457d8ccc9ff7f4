//! Natural loops, their nesting, and counter-style exit conditions.

use std::collections::{BTreeMap, BTreeSet};

use super::unit::UnitGraph;
use super::values::{analyze, Atom, CmpOp, SlotClass, SymValue, ValueFacts};
use super::{AbstractValue, BlockId, Cfg, EdgeKind, FunctionUnit};
use crate::evm::Opcode;

/// Relation that keeps the loop running: `induction REL limit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

/// An induction variable seen at the test: `slot + offset`, where `slot`
/// holds `init` on loop entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Induction {
    pub header: BlockId,
    pub depth: usize,
    pub init: SymValue,
    pub offset: i128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExitCondition {
    pub test_block: BlockId,
    pub comparison: Opcode,
    pub relation: Relation,
    pub induction: Induction,
    pub limit: SymValue,
    /// Per-iteration step of the induction slot, if constant.
    pub step: Option<i128>,
    /// Successor of the test block that stays in the loop.
    pub stay_target: BlockId,
    pub induction_operand: AbstractValue,
    pub limit_operand: AbstractValue,
}

#[derive(Clone, Debug)]
pub struct LoopInfo {
    pub header: BlockId,
    pub body: BTreeSet<BlockId>,
    pub back_edges: Vec<(BlockId, BlockId)>,
    pub exit_conditions: Vec<ExitCondition>,
    /// Index of the innermost enclosing loop in the same list.
    pub parent: Option<usize>,
    pub irreducible: bool,
}

impl LoopInfo {
    pub fn latches(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.back_edges.iter().map(|&(u, _)| u)
    }
}

/// Loops of `unit`, outermost first.
pub fn find_loops(cfg: &Cfg, unit: &FunctionUnit) -> Vec<LoopInfo> {
    let graph = UnitGraph::new(cfg, unit);
    let facts = analyze(cfg, &graph);
    find_loops_in(cfg, &graph, &facts)
}

pub fn find_loops_in(cfg: &Cfg, graph: &UnitGraph, facts: &ValueFacts) -> Vec<LoopInfo> {
    let mut by_header: BTreeMap<usize, (BTreeSet<usize>, Vec<(usize, usize)>)> = BTreeMap::new();
    for u in 0..graph.len() {
        if !graph.dom.is_reachable(u) {
            continue;
        }
        for &h in &graph.succs[u] {
            if graph.is_back_edge(u, h) {
                let entry = by_header.entry(h).or_default();
                entry.1.push((u, h));
                natural_body(graph, u, h, &mut entry.0);
            }
        }
    }
    let mut loops: Vec<LoopInfo> = by_header
        .into_iter()
        .map(|(h, (body, edges))| {
            let mut info = LoopInfo {
                header: graph.nodes[h],
                body: body.iter().map(|&v| graph.nodes[v]).collect(),
                back_edges: edges.iter().map(|&(u, v)| (graph.nodes[u], graph.nodes[v])).collect(),
                exit_conditions: Vec::new(),
                parent: None,
                irreducible: false,
            };
            info.exit_conditions = exit_conditions(cfg, graph, facts, &info, &body, &edges);
            info
        })
        .collect();
    loops.extend(irreducible_regions(graph));
    loops.sort_by(|a, b| b.body.len().cmp(&a.body.len()).then(a.header.cmp(&b.header)));
    for i in 0..loops.len() {
        loops[i].parent = (0..loops.len())
            .filter(|&j| j != i && loops[j].body.len() > loops[i].body.len() && loops[i].body.is_subset(&loops[j].body))
            .min_by_key(|&j| loops[j].body.len());
    }
    loops
}

fn natural_body(graph: &UnitGraph, latch: usize, header: usize, body: &mut BTreeSet<usize>) {
    body.insert(header);
    let mut work = vec![latch];
    while let Some(v) = work.pop() {
        if body.insert(v) {
            work.extend(graph.preds[v].iter().copied().filter(|&p| graph.dom.is_reachable(p)));
        }
    }
}

/// Cycles that survive removing every back edge.
fn irreducible_regions(graph: &UnitGraph) -> Vec<LoopInfo> {
    let n = graph.len();
    let forward: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            if graph.dom.is_reachable(u) {
                graph.succs[u].iter().copied().filter(|&v| !graph.is_back_edge(u, v)).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut out = Vec::new();
    for scc in tarjan(&forward) {
        let cyclic = scc.len() > 1 || forward[scc[0]].contains(&scc[0]);
        if !cyclic {
            continue;
        }
        let members: BTreeSet<usize> = scc.iter().copied().collect();
        let header = *scc.iter().min_by_key(|&&v| graph.dom.rpo_index(v)).expect("non-empty");
        let back_edges = members
            .iter()
            .flat_map(|&u| forward[u].iter().filter(|v| members.contains(v)).map(move |&v| (u, v)))
            .filter(|&(u, v)| graph.is_irreducible_edge(u, v))
            .map(|(u, v)| (graph.nodes[u], graph.nodes[v]))
            .collect();
        out.push(LoopInfo {
            header: graph.nodes[header],
            body: members.iter().map(|&v| graph.nodes[v]).collect(),
            back_edges,
            exit_conditions: Vec::new(),
            parent: None,
            irreducible: true,
        });
    }
    out
}

/// Strongly connected components (Tarjan, iterative).
pub fn tarjan(succs: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succs.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if let Some(&w) = succs[v].get(*next) {
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

fn exit_conditions(
    cfg: &Cfg,
    graph: &UnitGraph,
    facts: &ValueFacts,
    info: &LoopInfo,
    body: &BTreeSet<usize>,
    edges: &[(usize, usize)],
) -> Vec<ExitCondition> {
    let Some(header_info) = facts.headers.get(&info.header) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for &t in body {
        let block = cfg.block(graph.nodes[t]);
        if block.last().opcode != Opcode::JUMPI || !edges.iter().all(|&(u, _)| graph.dom.dominates(t, u)) {
            continue;
        }
        let inside: Vec<(BlockId, EdgeKind)> = block
            .successors
            .iter()
            .zip(&block.edge_kinds)
            .filter(|(s, _)| graph.index.get(s).is_some_and(|i| body.contains(i)))
            .map(|(s, k)| (*s, *k))
            .collect();
        if inside.len() != 1 || block.successors.len() != 2 {
            continue;
        }
        let (stay_target, stay_kind) = inside[0];
        let SymValue::Cmp { op, lhs, rhs, negated } = facts.operand(block.last().pc, 1) else {
            continue;
        };
        let stay_when_true = (stay_kind == EdgeKind::True) != negated;
        let as_induction = |v: &SymValue| -> Option<(usize, i128)> {
            let lin = v.as_linear()?;
            match lin.terms.iter().collect::<Vec<_>>().as_slice() {
                [(Atom::Slot { header, depth }, 1)] if *header == info.header => Some((*depth, lin.constant)),
                _ => None,
            }
        };
        let mentions_header = |v: &SymValue| match v {
            SymValue::Linear(l) => l.mentions_header(info.header),
            SymValue::Const(_) => false,
            _ => true,
        };
        let (ind, limit, ind_on_left) = match (as_induction(&lhs), as_induction(&rhs)) {
            (Some(i), None) if !mentions_header(&rhs) => (i, (*rhs).clone(), true),
            (None, Some(i)) if !mentions_header(&lhs) => (i, (*lhs).clone(), false),
            _ => continue,
        };
        // Orient as `ind op' limit`.
        let oriented = match (op, ind_on_left) {
            (CmpOp::Lt | CmpOp::Slt, true) | (CmpOp::Gt | CmpOp::Sgt, false) => Relation::Lt,
            (CmpOp::Gt | CmpOp::Sgt, true) | (CmpOp::Lt | CmpOp::Slt, false) => Relation::Gt,
            (CmpOp::Eq, _) => Relation::Ne,
        };
        let relation = match (oriented, stay_when_true) {
            (Relation::Lt, true) => Relation::Lt,
            (Relation::Lt, false) => Relation::Ge,
            (Relation::Gt, true) => Relation::Gt,
            (Relation::Gt, false) => Relation::Le,
            (Relation::Ne, false) => Relation::Ne,
            _ => continue,
        };
        let (depth, offset) = ind;
        let step = match header_info.slots.get(depth) {
            Some(SlotClass::Induction { step }) => Some(*step),
            _ => None,
        };
        let init = header_info.pre.as_ref().map_or(SymValue::Unknown, |p| p.peek(depth));
        let induction = Induction { header: info.header, depth, init, offset };
        let induction_operand = if ind_on_left { lhs.to_abstract() } else { rhs.to_abstract() };
        out.push(ExitCondition {
            test_block: block.id,
            comparison: op.opcode(),
            relation,
            limit_operand: limit.to_abstract(),
            limit,
            step,
            stay_target,
            induction,
            induction_operand,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::cfg::split_functions;
    use primitive_types::U256;

    fn loops_of(src: &str) -> (crate::asm::Assembled, Vec<LoopInfo>) {
        let a = assemble(src).unwrap();
        let cfg = Cfg::build(&a.instructions());
        let unit = split_functions(&cfg).units.remove(0);
        let loops = find_loops(&cfg, &unit);
        (a, loops)
    }

    #[test]
    fn counter_loop() {
        let (a, loops) = loops_of(
            "0x24 CALLDATALOAD 0
             head: DUP2 DUP2 LT ISZERO @done JUMPI
             1 ADD @head JUMP
             done: STOP",
        );
        assert_eq!(loops.len(), 1);
        let l = &loops[0];
        assert_eq!(l.header, BlockId(a.label("head")));
        assert_eq!(l.exit_conditions.len(), 1);
        let e = &l.exit_conditions[0];
        assert_eq!(e.relation, Relation::Lt);
        assert_eq!(e.step, Some(1));
        assert_eq!(e.limit_operand, AbstractValue::CallDataWord(0x24));
        assert_eq!(e.induction.init, SymValue::Const(U256::zero()));
    }

    #[test]
    fn loop_free() {
        let (_, loops) = loops_of("1 2 ADD POP STOP");
        assert!(loops.is_empty());
    }

    #[test]
    fn nested() {
        let (a, loops) = loops_of(
            "0
             outer: DUP1 10 GT ISZERO @end JUMPI
             0
             inner: DUP1 5 GT ISZERO @inner_end JUMPI
             1 ADD @inner JUMP
             inner_end: POP 1 ADD @outer JUMP
             end: STOP",
        );
        assert_eq!(loops.len(), 2);
        assert_eq!(loops[0].header, BlockId(a.label("outer")));
        assert_eq!(loops[1].header, BlockId(a.label("inner")));
        assert!(loops[1].body.is_subset(&loops[0].body) && loops[1].body.len() < loops[0].body.len());
        assert_eq!(loops[1].parent, Some(0));
        for l in &loops {
            assert_eq!(l.exit_conditions.len(), 1);
            assert_eq!(l.exit_conditions[0].relation, Relation::Lt);
        }
        assert_eq!(loops[1].exit_conditions[0].limit, SymValue::Const(U256::from(5)));
    }

    #[test]
    fn irreducible_region() {
        let (_, loops) = loops_of(
            "0 CALLDATALOAD @b JUMPI
             a: 1 POP @b JUMP
             b: 0 CALLDATALOAD @a JUMPI
             STOP",
        );
        assert_eq!(loops.len(), 1);
        assert!(loops[0].irreducible);
        assert!(loops[0].exit_conditions.is_empty());
    }

    #[test]
    fn tarjan_components() {
        let succs = vec![vec![1], vec![2], vec![0, 3], vec![]];
        let mut comps: Vec<Vec<usize>> = tarjan(&succs).into_iter().map(|mut c| { c.sort(); c }).collect();
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3]]);
    }
}
