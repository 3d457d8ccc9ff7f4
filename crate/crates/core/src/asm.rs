//! A tiny label-aware assembler for hand-written EVM programs.
//!
//! Text syntax, whitespace separated:
//!
//! ```text
//! ; comment to end of line
//! #17            set the source line for following instructions (#- clears it)
//! loop:          define a label (emits JUMPDEST)
//! @loop          PUSH2 of the label's pc
//! 0x20           push a literal with the narrowest PUSH
//! PUSH4 0x1234   push a literal with an explicit width
//! ADD            any other mnemonic
//! ```

use std::collections::BTreeMap;

use primitive_types::U256;
use thiserror::Error;

use crate::evm::{disassemble, Instruction, Opcode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("unknown mnemonic {0:?}")]
    UnknownMnemonic(String),
    #[error("bad literal {0:?}")]
    BadLiteral(String),
    #[error("undefined label {0:?}")]
    UndefinedLabel(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("{0} expects an immediate")]
    MissingImmediate(String),
}

#[derive(Clone, Debug)]
enum Item {
    Op(Opcode),
    Push { width: usize, value: U256 },
    PushLabel(String),
    Label(String),
}

/// Assembled program with per-instruction source lines.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub code: Vec<u8>,
    pub labels: BTreeMap<String, usize>,
    /// One entry per instruction, in order.
    pub lines: Vec<Option<u32>>,
}

impl Assembled {
    pub fn instructions(&self) -> Vec<Instruction> {
        disassemble(&self.code).expect("assembler emits complete pushes")
    }

    pub fn label(&self, name: &str) -> usize {
        self.labels[name]
    }
}

fn parse_literal(tok: &str) -> Result<U256, AsmError> {
    let res = match tok.strip_prefix("0x") {
        Some(hex) => U256::from_str_radix(hex, 16).ok(),
        None => U256::from_dec_str(tok).ok(),
    };
    res.ok_or_else(|| AsmError::BadLiteral(tok.to_string()))
}

fn narrowest(value: U256) -> usize {
    ((value.bits() + 7) / 8).max(1)
}

/// Assembles text in the syntax described in the module docs.
pub fn assemble(text: &str) -> Result<Assembled, AsmError> {
    let mut items: Vec<(Item, Option<u32>)> = Vec::new();
    let mut line = None;
    let mut tokens = text
        .lines()
        .flat_map(|l| l.split(';').next().unwrap_or("").split_whitespace())
        .peekable();
    while let Some(tok) = tokens.next() {
        if let Some(rest) = tok.strip_prefix('#') {
            line = if rest == "-" { None } else { Some(rest.parse().map_err(|_| AsmError::BadLiteral(tok.into()))?) };
        } else if let Some(name) = tok.strip_suffix(':') {
            items.push((Item::Label(name.to_string()), line));
        } else if let Some(name) = tok.strip_prefix('@') {
            items.push((Item::PushLabel(name.to_string()), line));
        } else if tok.starts_with(|c: char| c.is_ascii_digit()) {
            let value = parse_literal(tok)?;
            items.push((Item::Push { width: narrowest(value), value }, line));
        } else {
            let op = Opcode::from_mnemonic(tok).ok_or_else(|| AsmError::UnknownMnemonic(tok.to_string()))?;
            match op.push_width() {
                Some(width) => {
                    let lit = tokens.next().ok_or_else(|| AsmError::MissingImmediate(tok.to_string()))?;
                    items.push((Item::Push { width, value: parse_literal(lit)? }, line));
                }
                None => items.push((Item::Op(op), line)),
            }
        }
    }

    let mut labels = BTreeMap::new();
    let mut pc = 0;
    for (item, _) in &items {
        pc += match item {
            Item::Op(_) => 1,
            Item::Push { width, .. } => 1 + width,
            Item::PushLabel(_) => 3,
            Item::Label(name) => {
                if labels.insert(name.clone(), pc).is_some() {
                    return Err(AsmError::DuplicateLabel(name.clone()));
                }
                1
            }
        };
    }

    let mut code = Vec::with_capacity(pc);
    let mut lines = Vec::with_capacity(items.len());
    for (item, line) in &items {
        lines.push(*line);
        match item {
            Item::Op(op) => code.push(op.code()),
            Item::Label(_) => code.push(Opcode::JUMPDEST.code()),
            Item::Push { width, value } => push_bytes(&mut code, *width, *value),
            Item::PushLabel(name) => {
                let target = *labels.get(name).ok_or_else(|| AsmError::UndefinedLabel(name.clone()))?;
                push_bytes(&mut code, 2, U256::from(target));
            }
        }
    }
    Ok(Assembled { code, labels, lines })
}

fn push_bytes(code: &mut Vec<u8>, width: usize, value: U256) {
    let mut word = [0u8; 32];
    value.to_big_endian(&mut word);
    code.push(Opcode::push_with_width(width).expect("width in 1..=32").code());
    code.extend_from_slice(&word[32 - width..]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_lines() {
        let a = assemble("#3 @end JUMP INVALID\n#4 end: STOP").unwrap();
        assert_eq!(a.code, vec![0x61, 0x00, 0x05, 0x56, 0xfe, 0x5b, 0x00]);
        assert_eq!(a.label("end"), 5);
        assert_eq!(a.lines, vec![Some(3), Some(3), Some(3), Some(4), Some(4)]);
    }

    #[test]
    fn literal_widths() {
        let a = assemble("0 0xff 0x100 PUSH4 0xa9059cbb").unwrap();
        assert_eq!(a.code, vec![0x60, 0, 0x60, 0xff, 0x61, 1, 0, 0x63, 0xa9, 0x05, 0x9c, 0xbb]);
    }

    #[test]
    fn errors() {
        assert_eq!(assemble("FOO").unwrap_err(), AsmError::UnknownMnemonic("FOO".into()));
        assert_eq!(assemble("@x").unwrap_err(), AsmError::UndefinedLabel("x".into()));
        assert_eq!(assemble("a: a:").unwrap_err(), AsmError::DuplicateLabel("a".into()));
    }
}
