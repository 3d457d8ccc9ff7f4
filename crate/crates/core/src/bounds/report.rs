//! Bound reports and their JSON/text renderings.

use std::fmt::Write;

use serde_json::{json, Value};

use super::model::{Resource, Scope};
use super::params::{Param, ParamOrigin};
use super::poly::SymbolicBound;

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub function: String,
    pub selector: Option<String>,
    pub resource: Resource,
    pub scope: Scope,
    /// Report keys in display order.
    pub entries: Vec<(String, SymbolicBound)>,
    /// Memory expansion gas, reported apart from the per-key bounds.
    pub memory_gas: Option<SymbolicBound>,
    pub params: Vec<Param>,
}

pub fn describe_origin(origin: &ParamOrigin) -> String {
    match origin {
        ParamOrigin::CallDataWordLength(i) => format!("length of argument {i}"),
        ParamOrigin::CallDataScalar(i) => format!("value of argument {i}"),
        ParamOrigin::CallDataWord(off) => format!("calldata word at offset {off}"),
        ParamOrigin::CallDataSize => "calldata size".into(),
        ParamOrigin::StorageScalar(slot) => format!("storage slot {slot}"),
    }
}

impl BoundReport {
    pub fn get(&self, key: &str) -> Option<&SymbolicBound> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, b)| b)
    }

    /// Sum over all keys, without memory gas.
    pub fn total(&self) -> SymbolicBound {
        self.entries.iter().fold(SymbolicBound::zero(), |acc, (_, b)| acc.add(b))
    }

    pub fn has_unbounded(&self) -> bool {
        self.entries.iter().any(|(_, b)| b.unbounded) || self.memory_gas.as_ref().is_some_and(|m| m.unbounded)
    }

    pub fn to_json(&self) -> Value {
        let bounds: serde_json::Map<String, Value> =
            self.entries.iter().map(|(k, b)| (k.clone(), Value::String(b.render()))).collect();
        let exprs: serde_json::Map<String, Value> = self.entries.iter().map(|(k, b)| (k.clone(), b.to_json())).collect();
        let params: serde_json::Map<String, Value> =
            self.params.iter().map(|p| (p.name.clone(), Value::String(describe_origin(&p.origin)))).collect();
        json!({
            "function": self.function,
            "selector": self.selector,
            "resource": self.resource.to_string(),
            "scope": self.scope.name(),
            "keys": self.entries.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(),
            "bounds": bounds,
            "expressions": exprs,
            "memory_gas": self.memory_gas.as_ref().map(|m| m.render()),
            "memory_expression": self.memory_gas.as_ref().map(|m| m.to_json()),
            "params": params,
        })
    }

    /// Rebuilds a report from [`to_json`](Self::to_json) output. Parameter
    /// origins are not preserved.
    pub fn from_json(v: &Value) -> Option<BoundReport> {
        let resource = serde_json::from_value(v.get("resource")?.clone()).ok()?;
        let scope = serde_json::from_value(v.get("scope")?.clone()).ok()?;
        let exprs = v.get("expressions")?;
        let entries = v
            .get("keys")?
            .as_array()?
            .iter()
            .map(|k| {
                let k = k.as_str()?;
                Some((k.to_string(), SymbolicBound::from_json(exprs.get(k)?)?))
            })
            .collect::<Option<Vec<_>>>()?;
        let memory_gas = match v.get("memory_expression") {
            Some(Value::Null) | None => None,
            Some(m) => Some(SymbolicBound::from_json(m)?),
        };
        Some(BoundReport {
            function: v.get("function")?.as_str()?.to_string(),
            selector: v.get("selector").and_then(|s| s.as_str()).map(String::from),
            resource,
            scope,
            entries,
            memory_gas,
            params: Vec::new(),
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let sel = self.selector.as_deref().map(|s| format!(" [{s}]")).unwrap_or_default();
        let _ = writeln!(out, "{}{sel} ({}, {})", self.function, self.resource, self.scope);
        for (k, b) in &self.entries {
            let _ = writeln!(out, "  {k}: {}", b.render());
        }
        if let Some(m) = &self.memory_gas {
            let _ = writeln!(out, "  memory_gas: {}", m.render());
        }
        out
    }
}
