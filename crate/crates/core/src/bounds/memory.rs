//! Bound on memory expansion gas.

use super::analysis::FunctionAnalysis;
use super::poly::{rat, Poly, SymbolicBound};
use crate::cfg::values::{apply, SymValue};
use crate::evm::{GasSchedule, Opcode};

enum Size {
    Fixed(u64),
    Operand(usize),
}

/// Memory regions touched by an instruction as (offset operand, size).
fn regions(op: Opcode) -> Vec<(usize, Size)> {
    use Size::*;
    match op {
        Opcode::MLOAD | Opcode::MSTORE => vec![(0, Fixed(32))],
        Opcode::MSTORE8 => vec![(0, Fixed(1))],
        Opcode::SHA3 | Opcode::RETURN | Opcode::REVERT => vec![(0, Operand(1))],
        Opcode::CALLDATACOPY | Opcode::CODECOPY | Opcode::RETURNDATACOPY => vec![(0, Operand(2))],
        Opcode::EXTCODECOPY => vec![(1, Operand(3))],
        Opcode::CALL | Opcode::CALLCODE => vec![(3, Operand(4)), (5, Operand(6))],
        Opcode::DELEGATECALL | Opcode::STATICCALL => vec![(2, Operand(3)), (4, Operand(5))],
        Opcode::CREATE | Opcode::CREATE2 => vec![(1, Operand(2))],
        op if op.log_topics().is_some() => vec![(0, Operand(1))],
        _ => vec![],
    }
}

impl FunctionAnalysis<'_> {
    /// Highest memory word count any execution can reach.
    pub fn memory_words(&self) -> Option<Poly> {
        let mut a = Poly::zero();
        for node in 0..self.graph.len() {
            for ins in self.instructions(node) {
                for (off, size) in regions(ins.opcode) {
                    let size = match size {
                        Size::Fixed(n) => SymValue::Const(n.into()),
                        Size::Operand(i) => self.facts.operand(ins.pc, i),
                    };
                    if size.as_const().is_some_and(|c| c.is_zero()) {
                        continue;
                    }
                    let end = apply(Opcode::ADD, &[self.facts.operand(ins.pc, off), size]);
                    let words = self.upper_clamped(&end, node)?.scale(&(rat(1) / rat(32))).ceil_coeffs();
                    a = a.max(&words);
                }
            }
        }
        Some(a)
    }

    /// Memory expansion gas of the function.
    pub fn memory_gas(&self, schedule: &GasSchedule) -> SymbolicBound {
        if self.graph.has_unresolved {
            return SymbolicBound::unbounded();
        }
        match self.memory_words() {
            Some(a) => SymbolicBound::memory(a, schedule.memory_linear, schedule.memory_quadratic_divisor),
            None => SymbolicBound::unbounded(),
        }
    }
}
