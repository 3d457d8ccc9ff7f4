//! EVM opcode catalog.
//!
//! Every byte value decodes to an [`Opcode`]. Bytes without an assigned
//! instruction decode to an opcode whose mnemonic is `INVALID`, like the
//! designated `0xfe`, but the original byte is preserved so that re-encoding
//! reproduces the input.

use std::fmt;

/// Static description of a defined opcode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpInfo {
    pub mnemonic: &'static str,
    pub immediate_len: u8,
    pub stack_pops: u8,
    pub stack_pushes: u8,
}

const fn op(mnemonic: &'static str, stack_pops: u8, stack_pushes: u8) -> Option<OpInfo> {
    Some(OpInfo { mnemonic, immediate_len: 0, stack_pops, stack_pushes })
}

const PUSH_NAMES: [&str; 33] = [
    "PUSH0", "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9",
    "PUSH10", "PUSH11", "PUSH12", "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18",
    "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23", "PUSH24", "PUSH25", "PUSH26", "PUSH27",
    "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
const DUP_NAMES: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11",
    "DUP12", "DUP13", "DUP14", "DUP15", "DUP16",
];
const SWAP_NAMES: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10",
    "SWAP11", "SWAP12", "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];
const LOG_NAMES: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

const fn info(code: u8) -> Option<OpInfo> {
    match code {
        0x00 => op("STOP", 0, 0),
        0x01 => op("ADD", 2, 1),
        0x02 => op("MUL", 2, 1),
        0x03 => op("SUB", 2, 1),
        0x04 => op("DIV", 2, 1),
        0x05 => op("SDIV", 2, 1),
        0x06 => op("MOD", 2, 1),
        0x07 => op("SMOD", 2, 1),
        0x08 => op("ADDMOD", 3, 1),
        0x09 => op("MULMOD", 3, 1),
        0x0a => op("EXP", 2, 1),
        0x0b => op("SIGNEXTEND", 2, 1),
        0x10 => op("LT", 2, 1),
        0x11 => op("GT", 2, 1),
        0x12 => op("SLT", 2, 1),
        0x13 => op("SGT", 2, 1),
        0x14 => op("EQ", 2, 1),
        0x15 => op("ISZERO", 1, 1),
        0x16 => op("AND", 2, 1),
        0x17 => op("OR", 2, 1),
        0x18 => op("XOR", 2, 1),
        0x19 => op("NOT", 1, 1),
        0x1a => op("BYTE", 2, 1),
        0x1b => op("SHL", 2, 1),
        0x1c => op("SHR", 2, 1),
        0x1d => op("SAR", 2, 1),
        0x20 => op("SHA3", 2, 1),
        0x30 => op("ADDRESS", 0, 1),
        0x31 => op("BALANCE", 1, 1),
        0x32 => op("ORIGIN", 0, 1),
        0x33 => op("CALLER", 0, 1),
        0x34 => op("CALLVALUE", 0, 1),
        0x35 => op("CALLDATALOAD", 1, 1),
        0x36 => op("CALLDATASIZE", 0, 1),
        0x37 => op("CALLDATACOPY", 3, 0),
        0x38 => op("CODESIZE", 0, 1),
        0x39 => op("CODECOPY", 3, 0),
        0x3a => op("GASPRICE", 0, 1),
        0x3b => op("EXTCODESIZE", 1, 1),
        0x3c => op("EXTCODECOPY", 4, 0),
        0x3d => op("RETURNDATASIZE", 0, 1),
        0x3e => op("RETURNDATACOPY", 3, 0),
        0x3f => op("EXTCODEHASH", 1, 1),
        0x40 => op("BLOCKHASH", 1, 1),
        0x41 => op("COINBASE", 0, 1),
        0x42 => op("TIMESTAMP", 0, 1),
        0x43 => op("NUMBER", 0, 1),
        0x44 => op("DIFFICULTY", 0, 1),
        0x45 => op("GASLIMIT", 0, 1),
        0x46 => op("CHAINID", 0, 1),
        0x47 => op("SELFBALANCE", 0, 1),
        0x48 => op("BASEFEE", 0, 1),
        0x50 => op("POP", 1, 0),
        0x51 => op("MLOAD", 1, 1),
        0x52 => op("MSTORE", 2, 0),
        0x53 => op("MSTORE8", 2, 0),
        0x54 => op("SLOAD", 1, 1),
        0x55 => op("SSTORE", 2, 0),
        0x56 => op("JUMP", 1, 0),
        0x57 => op("JUMPI", 2, 0),
        0x58 => op("PC", 0, 1),
        0x59 => op("MSIZE", 0, 1),
        0x5a => op("GAS", 0, 1),
        0x5b => op("JUMPDEST", 0, 0),
        0x5f..=0x7f => {
            let n = code - 0x5f;
            Some(OpInfo { mnemonic: PUSH_NAMES[n as usize], immediate_len: n, stack_pops: 0, stack_pushes: 1 })
        }
        0x80..=0x8f => {
            let n = code - 0x80 + 1;
            Some(OpInfo { mnemonic: DUP_NAMES[(n - 1) as usize], immediate_len: 0, stack_pops: n, stack_pushes: n + 1 })
        }
        0x90..=0x9f => {
            let n = code - 0x90 + 1;
            Some(OpInfo { mnemonic: SWAP_NAMES[(n - 1) as usize], immediate_len: 0, stack_pops: n + 1, stack_pushes: n + 1 })
        }
        0xa0..=0xa4 => {
            let n = code - 0xa0;
            Some(OpInfo { mnemonic: LOG_NAMES[n as usize], immediate_len: 0, stack_pops: n + 2, stack_pushes: 0 })
        }
        0xf0 => op("CREATE", 3, 1),
        0xf1 => op("CALL", 7, 1),
        0xf2 => op("CALLCODE", 7, 1),
        0xf3 => op("RETURN", 2, 0),
        0xf4 => op("DELEGATECALL", 6, 1),
        0xf5 => op("CREATE2", 4, 1),
        0xfa => op("STATICCALL", 6, 1),
        0xfd => op("REVERT", 2, 0),
        0xfe => op("INVALID", 0, 0),
        0xff => op("SELFDESTRUCT", 1, 0),
        _ => None,
    }
}

static TABLE: [Option<OpInfo>; 256] = {
    let mut table = [None; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = info(i as u8);
        i += 1;
    }
    table
};

const INVALID_INFO: OpInfo = OpInfo { mnemonic: "INVALID", immediate_len: 0, stack_pops: 0, stack_pushes: 0 };

/// A decoded opcode byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Opcode(u8);

impl Opcode {
    pub const STOP: Opcode = Opcode(0x00);
    pub const ADD: Opcode = Opcode(0x01);
    pub const MUL: Opcode = Opcode(0x02);
    pub const SUB: Opcode = Opcode(0x03);
    pub const EXP: Opcode = Opcode(0x0a);
    pub const LT: Opcode = Opcode(0x10);
    pub const GT: Opcode = Opcode(0x11);
    pub const SLT: Opcode = Opcode(0x12);
    pub const SGT: Opcode = Opcode(0x13);
    pub const EQ: Opcode = Opcode(0x14);
    pub const ISZERO: Opcode = Opcode(0x15);
    pub const SHA3: Opcode = Opcode(0x20);
    pub const CALLDATALOAD: Opcode = Opcode(0x35);
    pub const CALLDATACOPY: Opcode = Opcode(0x37);
    pub const CODECOPY: Opcode = Opcode(0x39);
    pub const EXTCODECOPY: Opcode = Opcode(0x3c);
    pub const RETURNDATACOPY: Opcode = Opcode(0x3e);
    pub const MLOAD: Opcode = Opcode(0x51);
    pub const MSTORE: Opcode = Opcode(0x52);
    pub const MSTORE8: Opcode = Opcode(0x53);
    pub const SLOAD: Opcode = Opcode(0x54);
    pub const SSTORE: Opcode = Opcode(0x55);
    pub const JUMP: Opcode = Opcode(0x56);
    pub const JUMPI: Opcode = Opcode(0x57);
    pub const JUMPDEST: Opcode = Opcode(0x5b);
    pub const PUSH1: Opcode = Opcode(0x60);
    pub const PUSH2: Opcode = Opcode(0x61);
    pub const PUSH4: Opcode = Opcode(0x63);
    pub const PUSH32: Opcode = Opcode(0x7f);
    pub const CREATE: Opcode = Opcode(0xf0);
    pub const CALL: Opcode = Opcode(0xf1);
    pub const CALLCODE: Opcode = Opcode(0xf2);
    pub const RETURN: Opcode = Opcode(0xf3);
    pub const DELEGATECALL: Opcode = Opcode(0xf4);
    pub const CREATE2: Opcode = Opcode(0xf5);
    pub const STATICCALL: Opcode = Opcode(0xfa);
    pub const REVERT: Opcode = Opcode(0xfd);
    pub const INVALID: Opcode = Opcode(0xfe);
    pub const SELFDESTRUCT: Opcode = Opcode(0xff);

    pub const fn from_byte(byte: u8) -> Self {
        Opcode(byte)
    }

    pub const fn code(self) -> u8 {
        self.0
    }

    /// Whether the byte value has an assigned instruction (`0xfe` counts as defined).
    pub fn is_defined(self) -> bool {
        TABLE[self.0 as usize].is_some()
    }

    /// `INVALID` for `0xfe` and for every undefined byte.
    pub fn is_invalid(self) -> bool {
        self.info().mnemonic == "INVALID"
    }

    pub fn info(self) -> OpInfo {
        TABLE[self.0 as usize].unwrap_or(INVALID_INFO)
    }

    pub fn mnemonic(self) -> &'static str {
        self.info().mnemonic
    }

    pub fn immediate_len(self) -> usize {
        self.info().immediate_len as usize
    }

    pub fn stack_pops(self) -> usize {
        self.info().stack_pops as usize
    }

    pub fn stack_pushes(self) -> usize {
        self.info().stack_pushes as usize
    }

    /// Case-insensitive lookup by mnemonic. `KECCAK256` is accepted for `SHA3`.
    pub fn from_mnemonic(name: &str) -> Option<Self> {
        let upper = name.trim().to_ascii_uppercase();
        let upper = if upper == "KECCAK256" { "SHA3".to_string() } else { upper };
        (0..=255u8).map(Opcode).find(|op| op.is_defined() && op.mnemonic() == upper)
    }

    pub fn is_push(self) -> bool {
        (0x5f..=0x7f).contains(&self.0)
    }

    /// PUSH1..PUSH32; PUSH0 has no immediate.
    pub fn push_width(self) -> Option<usize> {
        (0x60..=0x7f).contains(&self.0).then(|| (self.0 - 0x5f) as usize)
    }

    pub fn push_with_width(width: usize) -> Option<Self> {
        (1..=32).contains(&width).then(|| Opcode(0x5f + width as u8))
    }

    pub fn dup_depth(self) -> Option<usize> {
        (0x80..=0x8f).contains(&self.0).then(|| (self.0 - 0x80 + 1) as usize)
    }

    pub fn swap_depth(self) -> Option<usize> {
        (0x90..=0x9f).contains(&self.0).then(|| (self.0 - 0x90 + 1) as usize)
    }

    pub fn log_topics(self) -> Option<usize> {
        (0xa0..=0xa4).contains(&self.0).then(|| (self.0 - 0xa0) as usize)
    }

    /// Ends a basic block without a successor.
    pub fn is_halting(self) -> bool {
        matches!(self, Opcode::STOP | Opcode::RETURN | Opcode::REVERT | Opcode::SELFDESTRUCT) || self.is_invalid()
    }

    pub fn is_block_terminator(self) -> bool {
        self.is_halting() || matches!(self, Opcode::JUMP | Opcode::JUMPI)
    }

    pub fn is_storage_access(self) -> bool {
        matches!(self, Opcode::SLOAD | Opcode::SSTORE)
    }

    pub fn is_external_call(self) -> bool {
        matches!(self, Opcode::CALL | Opcode::CALLCODE | Opcode::DELEGATECALL | Opcode::STATICCALL)
    }
}

impl fmt::Debug for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_defined() {
            f.write_str(self.mnemonic())
        } else {
            write!(f, "INVALID(0x{:02x})", self.0)
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// All defined opcodes, in byte order.
pub fn defined_opcodes() -> impl Iterator<Item = Opcode> {
    (0..=255u8).map(Opcode).filter(|op| op.is_defined())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn immediates_only_on_push() {
        for op in defined_opcodes() {
            let len = op.immediate_len();
            assert!(len <= 32);
            if len > 0 {
                assert!(op.is_push(), "{op:?}");
            }
        }
        assert_eq!(Opcode::PUSH1.immediate_len(), 1);
        assert_eq!(Opcode::PUSH32.immediate_len(), 32);
        assert_eq!(Opcode::from_byte(0x5f).immediate_len(), 0);
    }

    #[test]
    fn mnemonics_unique() {
        let mut names: Vec<_> = defined_opcodes().map(|op| op.mnemonic()).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn undefined_bytes_are_invalid() {
        let op = Opcode::from_byte(0x0c);
        assert!(!op.is_defined());
        assert!(op.is_invalid());
        assert_eq!(op.mnemonic(), "INVALID");
        assert_eq!(op.code(), 0x0c);
    }

    #[test]
    fn mnemonic_lookup() {
        assert_eq!(Opcode::from_mnemonic("sstore"), Some(Opcode::SSTORE));
        assert_eq!(Opcode::from_mnemonic("keccak256"), Some(Opcode::SHA3));
        assert_eq!(Opcode::from_mnemonic("dup16").and_then(Opcode::dup_depth), Some(16));
        assert_eq!(Opcode::from_mnemonic("NOPE"), None);
    }
}
