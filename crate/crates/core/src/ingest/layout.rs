//! Storage layout sidecar: `{"fields":[{"name","slot","kind"}]}`.
//!
//! A standard compiler `storageLayout` converts to this schema by keeping
//! `label` as `name`, `slot` as `slot`, and mapping the type's `encoding`
//! (`inplace` → `scalar`, `mapping` → `mapping`, `dynamic_array` →
//! `dyn_array`, anything else → `other`). Packed sub-word fields are not
//! represented.

use std::collections::BTreeSet;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::cfg::AbstractValue;
use crate::error::IngestError;
use crate::evm::Opcode;

/// Report key for accesses that cannot be attributed to a scalar field.
pub const UNKNOWN_FIELD: &str = "unknown";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    #[serde(rename = "scalar")]
    BasicScalar,
    Mapping,
    #[serde(rename = "dyn_array")]
    DynamicArray,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutEntry {
    pub slot: U256,
    pub name: String,
    pub kind: FieldKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StorageLayout {
    pub entries: Vec<LayoutEntry>,
}

#[derive(Deserialize)]
struct RawLayout {
    fields: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct RawField {
    name: String,
    slot: serde_json::Value,
    kind: FieldKind,
}

fn parse_slot(v: &serde_json::Value) -> Option<U256> {
    match v {
        serde_json::Value::Number(n) => n.as_u64().map(U256::from),
        serde_json::Value::String(s) => match s.strip_prefix("0x") {
            Some(hex) => U256::from_str_radix(hex, 16).ok(),
            None => U256::from_dec_str(s).ok(),
        },
        _ => None,
    }
}

pub fn parse_storage_layout(text: &str) -> Result<StorageLayout, IngestError> {
    let raw: RawLayout = serde_json::from_str(text)?;
    let mut entries = Vec::with_capacity(raw.fields.len());
    let mut names = BTreeSet::new();
    let mut scalar_slots = BTreeSet::new();
    for (index, value) in raw.fields.into_iter().enumerate() {
        let bad = |reason: String| IngestError::MalformedLayout { index, reason };
        let field: RawField = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        let slot = parse_slot(&field.slot).ok_or_else(|| bad(format!("bad slot {}", field.slot)))?;
        if field.name.is_empty() {
            return Err(bad("empty field name".into()));
        }
        if !names.insert(field.name.clone()) {
            return Err(bad(format!("duplicate field name {:?}", field.name)));
        }
        if field.kind == FieldKind::BasicScalar && !scalar_slots.insert(slot) {
            return Err(bad(format!("duplicate scalar slot {slot}")));
        }
        entries.push(LayoutEntry { slot, name: field.name, kind: field.kind });
    }
    Ok(StorageLayout { entries })
}

impl StorageLayout {
    pub fn scalar_at(&self, slot: U256) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.kind == FieldKind::BasicScalar && e.slot == slot)
    }

    pub fn scalar_named(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.kind == FieldKind::BasicScalar && e.name == name)
    }

    pub fn scalars(&self) -> impl Iterator<Item = &LayoutEntry> {
        self.entries.iter().filter(|e| e.kind == FieldKind::BasicScalar)
    }

    /// Field name for a storage slot value, or [`UNKNOWN_FIELD`].
    pub fn field_name(&self, slot: Option<U256>) -> String {
        slot.and_then(|s| self.scalar_at(s)).map_or_else(|| UNKNOWN_FIELD.to_string(), |e| e.name.clone())
    }
}

/// Field accessed by an SLOAD/SSTORE with the given slot operand.
pub fn resolve_slot(op: Opcode, operand: &AbstractValue, layout: &StorageLayout) -> String {
    debug_assert!(op.is_storage_access());
    layout.field_name(operand.as_const())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_mapping() {
        let l = parse_storage_layout(
            r#"{"fields":[{"name":"totalSupply","slot":3,"kind":"scalar"},
                          {"name":"balances","slot":"0x1","kind":"mapping"}]}"#,
        )
        .unwrap();
        assert_eq!(l.entries[0], LayoutEntry { slot: U256::from(3), name: "totalSupply".into(), kind: FieldKind::BasicScalar });
        assert_eq!(l.entries[1].kind, FieldKind::Mapping);
        assert_eq!(resolve_slot(Opcode::SSTORE, &AbstractValue::Const(U256::from(3)), &l), "totalSupply");
        assert_eq!(resolve_slot(Opcode::SLOAD, &AbstractValue::Const(U256::from(1)), &l), UNKNOWN_FIELD);
        assert_eq!(resolve_slot(Opcode::SSTORE, &AbstractValue::Unknown, &l), UNKNOWN_FIELD);
        assert_eq!(resolve_slot(Opcode::SLOAD, &AbstractValue::Const(U256::from(9)), &StorageLayout::default()), UNKNOWN_FIELD);
    }

    #[test]
    fn duplicate_scalar_slot() {
        let err = parse_storage_layout(
            r#"{"fields":[{"name":"a","slot":0,"kind":"scalar"},{"name":"b","slot":0,"kind":"scalar"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MalformedLayout { index: 1, .. }));
    }

    #[test]
    fn duplicate_name_and_bad_kind() {
        let dup = r#"{"fields":[{"name":"a","slot":0,"kind":"scalar"},{"name":"a","slot":1,"kind":"other"}]}"#;
        assert!(matches!(parse_storage_layout(dup), Err(IngestError::MalformedLayout { index: 1, .. })));
        let bad = r#"{"fields":[{"name":"a","slot":0,"kind":"struct"}]}"#;
        assert!(matches!(parse_storage_layout(bad), Err(IngestError::MalformedLayout { index: 0, .. })));
    }
}
