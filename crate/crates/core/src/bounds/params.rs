//! Named parameters of a function's bounds and their concrete bindings.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use primitive_types::U256;

use crate::cfg::values::Atom;
use crate::ingest::{signature_arg_types, StorageLayout};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamOrigin {
    /// Length word of the dynamic array argument with this index.
    CallDataWordLength(usize),
    /// Head word of the argument with this index.
    CallDataScalar(usize),
    /// Calldata word at an offset outside the argument heads.
    CallDataWord(usize),
    CallDataSize,
    StorageScalar(U256),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub origin: ParamOrigin,
}

#[derive(Clone, Debug, Default)]
pub struct ParamRegistry {
    pub params: BTreeMap<String, Param>,
    by_atom: BTreeMap<Atom, String>,
    arg_types: Option<Vec<String>>,
    layout: StorageLayout,
}

fn is_dynamic(ty: &str) -> bool {
    ty.ends_with("[]") || ty == "bytes" || ty == "string"
}

impl ParamRegistry {
    pub fn new(signature: Option<&str>, layout: Option<&StorageLayout>) -> Self {
        ParamRegistry {
            arg_types: signature.and_then(signature_arg_types),
            layout: layout.cloned().unwrap_or_default(),
            ..ParamRegistry::default()
        }
    }

    fn describe(&self, atom: &Atom) -> Option<Param> {
        let (name, origin) = match atom {
            Atom::CallData(off) if *off >= 4 && (off - 4) % 32 == 0 => {
                let k = (off - 4) / 32;
                match &self.arg_types {
                    Some(types) if k < types.len() => (format!("arg{k}"), ParamOrigin::CallDataScalar(k)),
                    Some(types) if k == types.len() => match types.iter().position(|t| is_dynamic(t)) {
                        Some(i) => ("data".to_string(), ParamOrigin::CallDataWordLength(i)),
                        None => (format!("cd{off}"), ParamOrigin::CallDataWord(*off)),
                    },
                    Some(_) => (format!("cd{off}"), ParamOrigin::CallDataWord(*off)),
                    None => (format!("arg{k}"), ParamOrigin::CallDataScalar(k)),
                }
            }
            Atom::CallData(off) => (format!("cd{off}"), ParamOrigin::CallDataWord(*off)),
            Atom::CallDataSize => ("calldatasize".to_string(), ParamOrigin::CallDataSize),
            Atom::Storage(slot) => {
                let name = self.layout.scalar_at(*slot).map_or_else(|| format!("storage{slot}"), |e| e.name.clone());
                (name, ParamOrigin::StorageScalar(*slot))
            }
            Atom::Slot { .. } => return None,
        };
        Some(Param { name, origin })
    }

    /// Name of the parameter standing for `atom`, registering it if new.
    pub fn register(&mut self, atom: &Atom) -> Option<String> {
        if let Some(n) = self.by_atom.get(atom) {
            return Some(n.clone());
        }
        let p = self.describe(atom)?;
        let name = p.name.clone();
        self.by_atom.insert(atom.clone(), name.clone());
        self.params.insert(name.clone(), p);
        Some(name)
    }

    pub fn name_of(&self, atom: &Atom) -> Option<&str> {
        self.by_atom.get(atom).map(|s| s.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    /// Concrete values of every registered parameter for one call.
    pub fn bindings(&self, calldata: &[u8], storage: &BTreeMap<U256, U256>) -> BTreeMap<String, BigUint> {
        let word = |off: usize| {
            let mut buf = [0u8; 32];
            for (i, b) in buf.iter_mut().enumerate() {
                *b = calldata.get(off + i).copied().unwrap_or(0);
            }
            BigUint::from_bytes_be(&buf)
        };
        self.by_atom
            .iter()
            .map(|(atom, name)| {
                let v = match atom {
                    Atom::CallData(off) => word(*off),
                    Atom::CallDataSize => BigUint::from(calldata.len()),
                    Atom::Storage(slot) => {
                        let mut buf = [0u8; 32];
                        storage.get(slot).copied().unwrap_or_default().to_big_endian(&mut buf);
                        BigUint::from_bytes_be(&buf)
                    }
                    Atom::Slot { .. } => BigUint::default(),
                };
                (name.clone(), v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming() {
        let mut r = ParamRegistry::new(Some("fill(uint256[])"), None);
        assert_eq!(r.register(&Atom::CallData(36)).unwrap(), "data");
        assert_eq!(r.register(&Atom::CallData(4)).unwrap(), "arg0");
        assert_eq!(r.get("data").unwrap().origin, ParamOrigin::CallDataWordLength(0));
        let mut plain = ParamRegistry::new(Some("f(uint256,uint256)"), None);
        assert_eq!(plain.register(&Atom::CallData(36)).unwrap(), "arg1");
        assert_eq!(plain.register(&Atom::CallData(68)).unwrap(), "cd68");
        assert_eq!(plain.register(&Atom::CallDataSize).unwrap(), "calldatasize");
        assert!(plain.register(&Atom::Slot { header: crate::cfg::BlockId(0), depth: 0 }).is_none());
    }

    #[test]
    fn bindings_read_words() {
        let mut r = ParamRegistry::new(Some("fill(uint256[])"), None);
        r.register(&Atom::CallData(36));
        r.register(&Atom::Storage(U256::from(3)));
        let mut cd = vec![0u8; 68];
        cd[67] = 7;
        let storage = BTreeMap::from([(U256::from(3), U256::from(11))]);
        let b = r.bindings(&cd, &storage);
        assert_eq!(b["data"], BigUint::from(7u32));
        assert_eq!(b["storage3"], BigUint::from(11u32));
    }
}
