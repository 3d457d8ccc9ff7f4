//! Cell-wise cost accumulation over a function's CFG with loops collapsed
//! innermost-first.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::analysis::{Env, FunctionAnalysis};
use super::model::{static_gas, Cell, Resource};
use super::poly::{rat, Poly, SymbolicBound};
use crate::cfg::loops::tarjan;
use crate::evm::word::byte_len;
use crate::evm::{Instruction, Opcode};

/// Cost per cell.
pub type CellVec = BTreeMap<Cell, SymbolicBound>;

fn vec_add(a: &CellVec, b: &CellVec) -> CellVec {
    let mut out = a.clone();
    for (c, v) in b {
        let e = out.entry(c.clone()).or_insert_with(SymbolicBound::zero);
        *e = e.add(v);
    }
    out
}

fn vec_join(a: &CellVec, b: &CellVec) -> CellVec {
    let mut out = a.clone();
    for (c, v) in b {
        let e = out.entry(c.clone()).or_insert_with(SymbolicBound::zero);
        *e = e.max(v);
    }
    out
}

fn vec_mul(n: &SymbolicBound, a: &CellVec) -> CellVec {
    a.iter().map(|(c, v)| (c.clone(), n.mul(v))).collect()
}

fn poison(a: &CellVec) -> CellVec {
    a.keys().map(|c| (c.clone(), SymbolicBound::unbounded())).collect()
}

struct Local {
    nodes: BTreeSet<usize>,
    succs: BTreeMap<usize, BTreeSet<usize>>,
    latches: BTreeSet<usize>,
    exiting: BTreeSet<usize>,
}

impl Local {
    fn preds(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut preds: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&u, ss) in &self.succs {
            for &s in ss {
                preds.entry(s).or_default().push(u);
            }
        }
        preds
    }
}

impl FunctionAnalysis<'_> {
    fn dynamic_gas(&self, ins: &Instruction, at: usize, env: &Env) -> SymbolicBound {
        let s = env.schedule;
        let per_word = |idx: usize, rate: u64| match self.words(&self.facts.operand(ins.pc, idx), at) {
            Some(w) => SymbolicBound::from_poly(w.scale(&rat(rate as i128))),
            None => SymbolicBound::unbounded(),
        };
        match ins.opcode {
            Opcode::SHA3 => per_word(1, s.sha3_word),
            Opcode::CALLDATACOPY | Opcode::CODECOPY | Opcode::RETURNDATACOPY => per_word(2, s.copy_word),
            Opcode::EXTCODECOPY => per_word(3, s.copy_word),
            Opcode::EXP => {
                let bytes = self.facts.operand(ins.pc, 1).as_const().map_or(32, byte_len);
                SymbolicBound::constant(s.exp_byte * bytes)
            }
            op if op.log_topics().is_some() => match self.upper_clamped(&self.facts.operand(ins.pc, 1), at) {
                Some(p) => SymbolicBound::from_poly(p.scale(&rat(s.log_data_byte as i128))),
                None => SymbolicBound::unbounded(),
            },
            _ => SymbolicBound::zero(),
        }
    }

    fn instruction_cost(&self, ins: &Instruction, at: usize, resource: Resource, env: &Env) -> SymbolicBound {
        match resource {
            Resource::Instructions => SymbolicBound::constant(1),
            Resource::Gas => {
                SymbolicBound::constant(static_gas(ins.opcode, env.schedule, env.pricing)).add(&self.dynamic_gas(ins, at, env))
            }
        }
    }

    fn block_cost(&self, node: usize, resource: Resource, env: &Env) -> CellVec {
        let mut out = CellVec::new();
        for ins in self.instructions(node) {
            let cost = self.instruction_cost(ins, node, resource, env);
            let e = out.entry(self.cell_of(ins, env.srcmap)).or_insert_with(SymbolicBound::zero);
            *e = e.add(&cost);
        }
        out
    }

    fn local_graph(&self, rep: &[usize], set: &BTreeSet<usize>, header: Option<usize>) -> Local {
        let mut local = Local {
            nodes: BTreeSet::new(),
            succs: BTreeMap::new(),
            latches: BTreeSet::new(),
            exiting: BTreeSet::new(),
        };
        for &v in set {
            let r = rep[v];
            local.nodes.insert(r);
            local.succs.entry(r).or_default();
            let succs = &self.graph.succs[v];
            if succs.is_empty() {
                local.exiting.insert(r);
            }
            for &w in succs {
                if !set.contains(&w) {
                    local.exiting.insert(r);
                } else if Some(w) == header {
                    local.latches.insert(r);
                } else if rep[w] != r {
                    local.succs.entry(r).or_default().insert(rep[w]);
                }
            }
        }
        local
    }

    /// Replaces cyclic components of the local graph by unbounded nodes.
    fn condense(
        &self,
        local: &Local,
        rep: &mut [usize],
        members: &mut Vec<BTreeSet<usize>>,
        cost: &mut Vec<CellVec>,
    ) -> bool {
        let order: Vec<usize> = local.nodes.iter().copied().collect();
        let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let succs: Vec<Vec<usize>> = order
            .iter()
            .map(|n| local.succs.get(n).map_or(vec![], |ss| ss.iter().map(|s| pos[s]).collect()))
            .collect();
        let mut changed = false;
        for comp in tarjan(&succs) {
            if comp.len() < 2 {
                continue;
            }
            changed = true;
            let id = cost.len();
            let mut merged = CellVec::new();
            let mut group = BTreeSet::new();
            for &i in &comp {
                let n = order[i];
                merged = vec_add(&merged, &cost[n]);
                group.extend(members[n].iter().copied());
            }
            for &g in &group {
                rep[g] = id;
            }
            cost.push(poison(&merged));
            members.push(group);
        }
        changed
    }

    fn best_paths(&self, local: &Local, start: usize, cost: &[CellVec]) -> BTreeMap<usize, CellVec> {
        let mut reach = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &s in local.succs.get(&u).into_iter().flatten() {
                if reach.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        let preds = local.preds();
        let mut indeg: BTreeMap<usize, usize> = reach
            .iter()
            .map(|&n| (n, preds.get(&n).map_or(0, |p| p.iter().filter(|x| reach.contains(x)).count())))
            .collect();
        let mut best: BTreeMap<usize, CellVec> = BTreeMap::new();
        let mut ready: VecDeque<usize> = VecDeque::from([start]);
        while let Some(u) = ready.pop_front() {
            let mut incoming = CellVec::new();
            for p in preds.get(&u).into_iter().flatten() {
                if let Some(b) = best.get(p) {
                    incoming = vec_join(&incoming, b);
                }
            }
            best.insert(u, vec_add(&incoming, &cost[u]));
            for &s in local.succs.get(&u).into_iter().flatten() {
                let d = indeg.get_mut(&s).expect("reachable");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(s);
                }
            }
        }
        best
    }

    /// Upper bound of the cost accumulated in each cell over any execution
    /// of the function.
    pub fn cell_costs(&self, resource: Resource, env: &Env) -> CellVec {
        let n = self.graph.len();
        let mut cost: Vec<CellVec> = (0..n).map(|v| self.block_cost(v, resource, env)).collect();
        if self.graph.has_unresolved {
            return poison(&cost.iter().fold(CellVec::new(), |acc, c| vec_add(&acc, c)));
        }
        let mut rep: Vec<usize> = (0..n).collect();
        let mut members: Vec<BTreeSet<usize>> = (0..n).map(|v| BTreeSet::from([v])).collect();

        let mut order: Vec<usize> = (0..self.loops.len()).filter(|&i| !self.loops[i].irreducible).collect();
        order.sort_by_key(|&i| self.loops[i].body.len());
        for li in order {
            let l = &self.loops[li];
            let Some(h) = self.node_of(l.header) else { continue };
            let set: BTreeSet<usize> = l.body.iter().filter_map(|b| self.node_of(*b)).collect();
            let mut local = self.local_graph(&rep, &set, Some(h));
            if self.condense(&local, &mut rep, &mut members, &mut cost) {
                local = self.local_graph(&rep, &set, Some(h));
            }
            let best = self.best_paths(&local, rep[h], &cost);
            let join_over = |nodes: &BTreeSet<usize>| {
                nodes.iter().filter_map(|x| best.get(x)).fold(CellVec::new(), |acc, b| vec_join(&acc, b))
            };
            let iter = join_over(&local.latches);
            let fin = join_over(&local.exiting);
            let total = vec_add(&vec_mul(&self.loop_bound_symbolic(l.header), &iter), &fin);
            let id = cost.len();
            let group: BTreeSet<usize> = set.iter().flat_map(|&v| members[rep[v]].clone()).collect();
            for &g in &group {
                rep[g] = id;
            }
            cost.push(total);
            members.push(group);
        }

        let all: BTreeSet<usize> = (0..n).collect();
        let mut local = self.local_graph(&rep, &all, None);
        if self.condense(&local, &mut rep, &mut members, &mut cost) {
            local = self.local_graph(&rep, &all, None);
        }
        let best = self.best_paths(&local, rep[self.graph.entry], &cost);
        let mut out = CellVec::new();
        for (node, b) in &best {
            if local.succs.get(node).is_none_or(|s| s.is_empty()) {
                out = vec_join(&out, b);
            }
        }
        out
    }
}

/// Sum of the bounds of all cells.
pub fn total(cells: &CellVec) -> SymbolicBound {
    cells.values().fold(SymbolicBound::zero(), |acc, v| acc.add(v))
}

/// Polynomial `p` if the bound is a plain polynomial.
pub fn as_poly(b: &SymbolicBound) -> Option<&Poly> {
    (!b.unbounded && b.mem_terms.is_empty()).then_some(&b.poly)
}
