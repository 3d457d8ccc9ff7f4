//! 256-bit word semantics shared by the interpreter and constant folding.

use primitive_types::{U256, U512};
use sha3::{Digest, Keccak256};

use super::opcode::Opcode;

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

pub fn word_from_bool(b: bool) -> U256 {
    if b {
        U256::one()
    } else {
        U256::zero()
    }
}

fn is_negative(x: U256) -> bool {
    x.bit(255)
}

fn negate(x: U256) -> U256 {
    (!x).overflowing_add(U256::one()).0
}

fn abs(x: U256) -> U256 {
    if is_negative(x) {
        negate(x)
    } else {
        x
    }
}

pub fn slt(a: U256, b: U256) -> bool {
    let flip = U256::one() << 255;
    (a ^ flip) < (b ^ flip)
}

fn shift_amount(shift: U256) -> Option<usize> {
    (shift < U256::from(256)).then(|| shift.low_u64() as usize)
}

/// Folds a pure arithmetic/comparison/bitwise opcode over concrete operands
/// (`args[0]` is the stack top). Returns `None` for opcodes that are not pure.
pub fn fold(op: Opcode, args: &[U256]) -> Option<U256> {
    let a = *args.first().unwrap_or(&U256::zero());
    let b = *args.get(1).unwrap_or(&U256::zero());
    let c = *args.get(2).unwrap_or(&U256::zero());
    let v = match op.mnemonic() {
        "ADD" => a.overflowing_add(b).0,
        "MUL" => a.overflowing_mul(b).0,
        "SUB" => a.overflowing_sub(b).0,
        "DIV" => {
            if b.is_zero() {
                U256::zero()
            } else {
                a / b
            }
        }
        "SDIV" => {
            if b.is_zero() {
                U256::zero()
            } else {
                let q = abs(a) / abs(b);
                if is_negative(a) != is_negative(b) {
                    negate(q)
                } else {
                    q
                }
            }
        }
        "MOD" => {
            if b.is_zero() {
                U256::zero()
            } else {
                a % b
            }
        }
        "SMOD" => {
            if b.is_zero() {
                U256::zero()
            } else {
                let r = abs(a) % abs(b);
                if is_negative(a) {
                    negate(r)
                } else {
                    r
                }
            }
        }
        "ADDMOD" => {
            if c.is_zero() {
                U256::zero()
            } else {
                let sum = U512::from(a) + U512::from(b);
                U256::try_from(sum % U512::from(c)).expect("remainder fits")
            }
        }
        "MULMOD" => {
            if c.is_zero() {
                U256::zero()
            } else {
                let prod = a.full_mul(b);
                U256::try_from(prod % U512::from(c)).expect("remainder fits")
            }
        }
        "EXP" => a.overflowing_pow(b).0,
        "SIGNEXTEND" => {
            if a < U256::from(31) {
                let bit = a.low_u64() as usize * 8 + 7;
                let mask = (U256::one() << (bit + 1)) - U256::one();
                if b.bit(bit) {
                    b | !mask
                } else {
                    b & mask
                }
            } else {
                b
            }
        }
        "LT" => word_from_bool(a < b),
        "GT" => word_from_bool(a > b),
        "SLT" => word_from_bool(slt(a, b)),
        "SGT" => word_from_bool(slt(b, a)),
        "EQ" => word_from_bool(a == b),
        "ISZERO" => word_from_bool(a.is_zero()),
        "AND" => a & b,
        "OR" => a | b,
        "XOR" => a ^ b,
        "NOT" => !a,
        "BYTE" => {
            if a < U256::from(32) {
                (b >> (8 * (31 - a.low_u64() as usize))) & U256::from(0xff)
            } else {
                U256::zero()
            }
        }
        "SHL" => shift_amount(a).map_or(U256::zero(), |s| b << s),
        "SHR" => shift_amount(a).map_or(U256::zero(), |s| b >> s),
        "SAR" => {
            let neg = is_negative(b);
            match shift_amount(a) {
                Some(s) if neg => !((!b) >> s),
                Some(s) => b >> s,
                None if neg => U256::MAX,
                None => U256::zero(),
            }
        }
        _ => return None,
    };
    Some(v)
}

/// Number of bytes needed to represent `x` (0 for zero).
pub fn byte_len(x: U256) -> u64 {
    (x.bits() as u64).div_ceil(8)
}

pub fn words_for(bytes: u64) -> u64 {
    bytes.div_ceil(32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(x: i64) -> U256 {
        if x < 0 {
            negate(U256::from((-x) as u64))
        } else {
            U256::from(x as u64)
        }
    }

    #[test]
    fn signed_arithmetic() {
        assert_eq!(fold(Opcode::from_mnemonic("SDIV").unwrap(), &[w(-7), w(2)]), Some(w(-3)));
        assert_eq!(fold(Opcode::from_mnemonic("SMOD").unwrap(), &[w(-7), w(2)]), Some(w(-1)));
        assert_eq!(fold(Opcode::SLT, &[w(-1), w(0)]), Some(U256::one()));
        assert_eq!(fold(Opcode::SGT, &[w(-1), w(0)]), Some(U256::zero()));
        assert_eq!(fold(Opcode::from_mnemonic("SAR").unwrap(), &[w(1), w(-4)]), Some(w(-2)));
        assert_eq!(fold(Opcode::from_mnemonic("SIGNEXTEND").unwrap(), &[w(0), w(0xff)]), Some(w(-1)));
        assert_eq!(fold(Opcode::from_mnemonic("SIGNEXTEND").unwrap(), &[w(0), w(0x7f)]), Some(w(0x7f)));
    }

    #[test]
    fn modular_ops() {
        let addmod = Opcode::from_mnemonic("ADDMOD").unwrap();
        assert_eq!(fold(addmod, &[U256::MAX, U256::from(2), U256::from(10)]), Some(U256::from(7)));
        let mulmod = Opcode::from_mnemonic("MULMOD").unwrap();
        assert_eq!(fold(mulmod, &[U256::MAX, U256::MAX, U256::from(12)]), Some(U256::from(9)));
        assert_eq!(fold(Opcode::ADD, &[U256::MAX, U256::one()]), Some(U256::zero()));
    }

    #[test]
    fn shifts_and_bytes() {
        let shr = Opcode::from_mnemonic("SHR").unwrap();
        assert_eq!(fold(shr, &[U256::from(224), U256::MAX]), Some(U256::from(0xffff_ffffu64)));
        assert_eq!(fold(shr, &[U256::from(256), U256::MAX]), Some(U256::zero()));
        let byte = Opcode::from_mnemonic("BYTE").unwrap();
        assert_eq!(fold(byte, &[U256::from(31), U256::from(0xabcd)]), Some(U256::from(0xcd)));
        assert_eq!(byte_len(U256::from(256)), 2);
        assert_eq!(byte_len(U256::zero()), 0);
    }

    #[test]
    fn keccak_empty() {
        assert_eq!(
            hex::encode(keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
    }
}
