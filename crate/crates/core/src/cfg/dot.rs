//! Graphviz dump of a CFG.

use std::fmt::Write;

use super::{Cfg, EdgeKind};

pub fn to_dot(cfg: &Cfg) -> String {
    let mut out = String::from("digraph cfg {\n  node [shape=box, fontname=monospace];\n");
    for block in cfg.blocks.values() {
        let _ = writeln!(
            out,
            "  b{} [label=\"{:#x}..{:#x}\"];",
            block.start_pc(),
            block.start_pc(),
            block.end_pc()
        );
    }
    for block in cfg.blocks.values() {
        for (s, k) in block.successors.iter().zip(&block.edge_kinds) {
            let label = match k {
                EdgeKind::Seq => "seq",
                EdgeKind::True => "true",
                EdgeKind::False => "false",
            };
            let _ = writeln!(out, "  b{} -> b{} [label=\"{label}\"];", block.start_pc(), s.0);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    #[test]
    fn labels_edges() {
        let cfg = Cfg::build(&assemble("0 CALLDATALOAD @t JUMPI STOP t: STOP").unwrap().instructions());
        let dot = to_dot(&cfg);
        assert!(dot.contains("[label=\"true\"]"));
        assert!(dot.contains("[label=\"false\"]"));
        assert!(dot.starts_with("digraph"));
    }
}
