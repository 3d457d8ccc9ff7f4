//! Function selectors: 4-byte Keccak prefixes of canonical signatures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::evm::word::keccak256;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn from_signature(signature: &str) -> Self {
        let digest = keccak256(signature.as_bytes());
        Selector([digest[0], digest[1], digest[2], digest[3]])
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.0))
    }

    pub fn as_u32(&self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A selector as given by the user, with the signature when one was supplied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedSelector {
    pub selector: Selector,
    pub signature: Option<String>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// Splits the argument list of a canonical signature at top-level commas.
pub fn signature_arg_types(signature: &str) -> Option<Vec<String>> {
    let open = signature.find('(')?;
    let inner = signature[open + 1..].strip_suffix(')')?;
    if inner.is_empty() {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(inner[start..i].to_string());
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return None;
        }
    }
    out.push(inner[start..].to_string());
    Some(out)
}

/// Accepts `0x` + 8 hex digits, or a canonical signature such as
/// `transfer(address,uint256)`.
pub fn resolve_selector(input: &str) -> Result<ResolvedSelector, IngestError> {
    let input = input.trim();
    let bad = || IngestError::BadSelector(input.to_string());
    if let Some(hex_part) = input.strip_prefix("0x").or_else(|| input.strip_prefix("0X")) {
        if hex_part.len() != 8 {
            return Err(bad());
        }
        let bytes = hex::decode(hex_part).map_err(|_| bad())?;
        return Ok(ResolvedSelector { selector: Selector([bytes[0], bytes[1], bytes[2], bytes[3]]), signature: None });
    }
    let open = input.find('(').ok_or_else(bad)?;
    if !is_identifier(&input[..open]) || input.contains(char::is_whitespace) {
        return Err(bad());
    }
    let args = signature_arg_types(input).ok_or_else(bad)?;
    if args.iter().any(|a| a.is_empty()) {
        return Err(bad());
    }
    Ok(ResolvedSelector { selector: Selector::from_signature(input), signature: Some(input.to_string()) })
}

impl FromStr for Selector {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        resolve_selector(s).map(|r| r.selector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(sig: &str) -> [u8; 4] {
        use tiny_keccak::{Hasher, Keccak};
        let mut k = Keccak::v256();
        k.update(sig.as_bytes());
        let mut out = [0u8; 32];
        k.finalize(&mut out);
        [out[0], out[1], out[2], out[3]]
    }

    #[test]
    fn hex_passthrough() {
        let r = resolve_selector("0xa9059cbb").unwrap();
        assert_eq!(r.selector.0, [0xa9, 0x05, 0x9c, 0xbb]);
        assert_eq!(r.signature, None);
    }

    #[test]
    fn signatures_hash_like_independent_keccak() {
        let r = resolve_selector("transfer(address,uint256)").unwrap();
        assert_eq!(r.selector.to_hex(), "0xa9059cbb");
        assert_eq!(r.selector.0, oracle("transfer(address,uint256)"));
        for sig in ["fill(uint256[])", "balanceOf(address)", "f()", "g((uint256,bool),bytes)"] {
            assert_eq!(resolve_selector(sig).unwrap().selector.0, oracle(sig), "{sig}");
        }
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["0x123", "0xzzzzzzzz", "transfer", "1abc()", "f(uint256,)", "f (uint256)"] {
            assert!(resolve_selector(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hex_rendering_is_idempotent() {
        let s = Selector::from_signature("fill(uint256[])");
        assert_eq!(resolve_selector(&s.to_hex()).unwrap().selector, s);
    }

    #[test]
    fn arg_splitting() {
        assert_eq!(signature_arg_types("f()").unwrap(), Vec::<String>::new());
        assert_eq!(signature_arg_types("g((uint256,bool),bytes)").unwrap(), vec!["(uint256,bool)", "bytes"]);
    }
}
