//! Linear disassembly of runtime bytecode.

use std::fmt;

use primitive_types::U256;

use super::opcode::Opcode;
use crate::error::DisasmError;

#[derive(Clone, PartialEq, Eq)]
pub struct Instruction {
    pub pc: usize,
    pub opcode: Opcode,
    /// Present iff `opcode` carries inline data (PUSH1..PUSH32).
    pub immediate: Option<U256>,
}

impl Instruction {
    pub fn next_pc(&self) -> usize {
        self.pc + 1 + self.opcode.immediate_len()
    }

    /// Appends the byte encoding of this instruction.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.opcode.code());
        let width = self.opcode.immediate_len();
        if width > 0 {
            let mut word = [0u8; 32];
            self.immediate.unwrap_or_default().to_big_endian(&mut word);
            out.extend_from_slice(&word[32 - width..]);
        }
    }
}

impl fmt::Debug for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.immediate {
            Some(imm) => write!(f, "{:04x}: {:?} {:#x}", self.pc, self.opcode, imm),
            None => write!(f, "{:04x}: {:?}", self.pc, self.opcode),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Decodes `code` into instructions. Fails on a PUSH whose immediate runs
/// past the end of the code.
pub fn disassemble(code: &[u8]) -> Result<Vec<Instruction>, DisasmError> {
    let (instructions, truncated) = disassemble_prefix(code);
    match truncated {
        Some(pc) => Err(DisasmError::TruncatedPush { pc }),
        None => Ok(instructions),
    }
}

/// Like [`disassemble`] but returns the decodable prefix together with the pc
/// of a truncated trailing PUSH, if any. Contract metadata appended after the
/// code frequently ends this way.
pub fn disassemble_prefix(code: &[u8]) -> (Vec<Instruction>, Option<usize>) {
    let mut out = Vec::with_capacity(code.len());
    let mut pc = 0;
    while pc < code.len() {
        let opcode = Opcode::from_byte(code[pc]);
        let width = opcode.immediate_len();
        let immediate = if width > 0 {
            let start = pc + 1;
            if start + width > code.len() {
                return (out, Some(pc));
            }
            Some(U256::from_big_endian(&code[start..start + width]))
        } else {
            None
        };
        out.push(Instruction { pc, opcode, immediate });
        pc += 1 + width;
    }
    (out, None)
}

pub fn encode(instructions: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::new();
    for ins in instructions {
        ins.encode_into(&mut out);
    }
    out
}

/// Parses hex bytecode, tolerating a `0x` prefix and embedded whitespace.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, DisasmError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let body = cleaned.strip_prefix("0x").or_else(|| cleaned.strip_prefix("0X")).unwrap_or(&cleaned);
    hex::decode(body).map_err(|e| DisasmError::BadHex(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_simple_program() {
        let code = parse_hex("0x6001600101").unwrap();
        let ins = disassemble(&code).unwrap();
        assert_eq!(ins.len(), 3);
        assert_eq!((ins[0].pc, ins[0].opcode, ins[0].immediate), (0, Opcode::PUSH1, Some(U256::one())));
        assert_eq!((ins[1].pc, ins[1].opcode, ins[1].immediate), (2, Opcode::PUSH1, Some(U256::one())));
        assert_eq!((ins[2].pc, ins[2].opcode, ins[2].immediate), (4, Opcode::ADD, None));
    }

    #[test]
    fn empty_code() {
        assert!(disassemble(&[]).unwrap().is_empty());
    }

    #[test]
    fn truncated_push() {
        assert_eq!(disassemble(&[0x61, 0xff]), Err(DisasmError::TruncatedPush { pc: 0 }));
        let (prefix, trunc) = disassemble_prefix(&[0x01, 0x61, 0xff]);
        assert_eq!(prefix.len(), 1);
        assert_eq!(trunc, Some(1));
    }

    #[test]
    fn push32_keeps_full_width() {
        let mut code = vec![0x7f];
        code.extend([0xffu8; 32]);
        let ins = disassemble(&code).unwrap();
        assert_eq!(ins[0].immediate, Some(U256::MAX));
    }

    #[test]
    fn hex_whitespace_tolerated() {
        assert_eq!(parse_hex(" 60 01\n6001 01 ").unwrap(), vec![0x60, 1, 0x60, 1, 1]);
        assert!(parse_hex("0xzz").is_err());
    }

    proptest! {
        #[test]
        fn reencoding_reproduces_prefix(code in proptest::collection::vec(any::<u8>(), 0..256)) {
            let (ins, truncated) = disassemble_prefix(&code);
            let bytes = encode(&ins);
            let end = truncated.unwrap_or(code.len());
            prop_assert_eq!(&bytes[..], &code[..end]);
            for pair in ins.windows(2) {
                prop_assert_eq!(pair[0].next_pc(), pair[1].pc);
            }
            for i in &ins {
                prop_assert_eq!(i.immediate.is_some(), i.opcode.immediate_len() > 0);
            }
        }
    }
}
