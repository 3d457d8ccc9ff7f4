//! Dominators over a small dense graph (Cooper, Harvey and Kennedy's
//! iterative algorithm on reverse postorder).

/// Dominator tree of the nodes reachable from `entry`.
#[derive(Clone, Debug)]
pub struct DomTree {
    idom: Vec<Option<usize>>,
    rpo: Vec<usize>,
    rpo_index: Vec<usize>,
}

const UNDEF: usize = usize::MAX;

/// Reverse postorder of the nodes reachable from `entry`.
pub fn reverse_postorder(succs: &[Vec<usize>], entry: usize) -> Vec<usize> {
    let n = succs.len();
    let mut visited = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack = vec![(entry, 0usize)];
    visited[entry] = true;
    while let Some((node, next)) = stack.last_mut() {
        if let Some(&s) = succs[*node].get(*next) {
            *next += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(*node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

impl DomTree {
    pub fn compute(succs: &[Vec<usize>], entry: usize) -> Self {
        let n = succs.len();
        let rpo = reverse_postorder(succs, entry);
        let mut rpo_index = vec![UNDEF; n];
        for (i, &b) in rpo.iter().enumerate() {
            rpo_index[b] = i;
        }
        let mut preds = vec![Vec::new(); n];
        for (u, ss) in succs.iter().enumerate() {
            if rpo_index[u] == UNDEF {
                continue;
            }
            for &v in ss {
                preds[v].push(u);
            }
        }
        let mut idom = vec![UNDEF; n];
        idom[entry] = entry;
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new_idom = UNDEF;
                for &p in &preds[b] {
                    if idom[p] == UNDEF {
                        continue;
                    }
                    new_idom = if new_idom == UNDEF { p } else { intersect(&idom, &rpo_index, p, new_idom) };
                }
                if new_idom != UNDEF && idom[b] != new_idom {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }
        let idom = idom
            .iter()
            .enumerate()
            .map(|(b, &d)| if d == UNDEF || b == entry { None } else { Some(d) })
            .collect();
        DomTree { idom, rpo, rpo_index }
    }

    pub fn idom(&self, node: usize) -> Option<usize> {
        self.idom[node]
    }

    pub fn is_reachable(&self, node: usize) -> bool {
        self.rpo_index.get(node).is_some_and(|&i| i != UNDEF)
    }

    pub fn rpo(&self) -> &[usize] {
        &self.rpo
    }

    pub fn rpo_index(&self, node: usize) -> Option<usize> {
        self.rpo_index.get(node).copied().filter(|&i| i != UNDEF)
    }

    /// Reflexive dominance.
    pub fn dominates(&self, a: usize, mut b: usize) -> bool {
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        loop {
            if a == b {
                return true;
            }
            match self.idom[b] {
                Some(d) => b = d,
                None => return false,
            }
        }
    }
}

fn intersect(idom: &[usize], order: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while order[a] > order[b] {
            a = idom[a];
        }
        while order[b] > order[a] {
            b = idom[b];
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `a` dominates `b` iff `b` is unreachable from entry once `a` is removed.
    fn brute_force_dominates(succs: &[Vec<usize>], entry: usize, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        if a == entry {
            return true;
        }
        let mut seen = vec![false; succs.len()];
        let mut stack = vec![entry];
        seen[entry] = true;
        while let Some(u) = stack.pop() {
            for &v in &succs[u] {
                if v != a && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        !seen[b]
    }

    fn graph() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (2usize..9).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(0..n, 0..3), n)
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(succs in graph()) {
            let dom = DomTree::compute(&succs, 0);
            let reach = reverse_postorder(&succs, 0);
            for &a in &reach {
                for &b in &reach {
                    prop_assert_eq!(dom.dominates(a, b), brute_force_dominates(&succs, 0, a, b), "a={} b={}", a, b);
                }
            }
            for &b in &reach {
                if b != 0 {
                    prop_assert!(dom.idom(b).is_some());
                }
            }
        }
    }

    #[test]
    fn diamond() {
        let succs = vec![vec![1, 2], vec![3], vec![3], vec![]];
        let dom = DomTree::compute(&succs, 0);
        assert_eq!(dom.idom(3), Some(0));
        assert_eq!(dom.idom(1), Some(0));
        assert!(!dom.dominates(1, 3));
    }
}
