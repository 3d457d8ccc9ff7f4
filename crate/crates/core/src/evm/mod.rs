//! Opcode catalog, gas schedule and disassembler.

pub mod disasm;
pub mod opcode;
pub mod schedule;
pub mod word;

pub use disasm::{disassemble, disassemble_prefix, encode, parse_hex, Instruction};
pub use opcode::{defined_opcodes, OpInfo, Opcode};
pub use schedule::{family_of, worst_case_gas, GasFamily, GasSchedule};
