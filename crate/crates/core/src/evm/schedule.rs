//! Gas families and the gas schedule.
//!
//! The default schedule uses the pre-Istanbul constants: SSTORE 20000 on a
//! zero slot and 5000 otherwise, SLOAD 200, memory at 3 gas per word plus a
//! quadratic term with divisor 512.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::opcode::Opcode;
use crate::error::ScheduleError;

/// Cost group of an opcode. Opcodes outside the six named groups form one
/// singleton family each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GasFamily {
    Zero,
    Base,
    VeryLow,
    Low,
    Mid,
    High,
    Singleton(Opcode),
}

impl GasFamily {
    pub const NAMED: [GasFamily; 6] =
        [GasFamily::Zero, GasFamily::Base, GasFamily::VeryLow, GasFamily::Low, GasFamily::Mid, GasFamily::High];

    /// Lowercase group name, or the mnemonic for singleton families.
    pub fn name(&self) -> String {
        match self {
            GasFamily::Zero => "zero".into(),
            GasFamily::Base => "base".into(),
            GasFamily::VeryLow => "verylow".into(),
            GasFamily::Low => "low".into(),
            GasFamily::Mid => "mid".into(),
            GasFamily::High => "high".into(),
            GasFamily::Singleton(op) => op.mnemonic().to_string(),
        }
    }

    /// Accepts group names and mnemonics, case-insensitively.
    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let named = match lower.as_str() {
            "zero" => Some(GasFamily::Zero),
            "base" => Some(GasFamily::Base),
            "verylow" => Some(GasFamily::VeryLow),
            "low" => Some(GasFamily::Low),
            "mid" => Some(GasFamily::Mid),
            "high" => Some(GasFamily::High),
            _ => None,
        };
        named.or_else(|| {
            let op = Opcode::from_mnemonic(name)?;
            match family_of(op) {
                fam @ GasFamily::Singleton(_) => Some(fam),
                _ => None,
            }
        })
    }
}

impl fmt::Display for GasFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for GasFamily {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GasFamily::parse(s).ok_or_else(|| ScheduleError::UnknownFamily(s.to_string()))
    }
}

/// Family classification by the protocol's fee groups (W_zero .. W_high).
pub fn family_of(op: Opcode) -> GasFamily {
    if op.is_invalid() {
        return GasFamily::Singleton(Opcode::INVALID);
    }
    if op.dup_depth().is_some() || op.swap_depth().is_some() || op.push_width().is_some() {
        return GasFamily::VeryLow;
    }
    match op.mnemonic() {
        "STOP" | "RETURN" | "REVERT" => GasFamily::Zero,
        "ADDRESS" | "ORIGIN" | "CALLER" | "CALLVALUE" | "CALLDATASIZE" | "CODESIZE" | "GASPRICE"
        | "COINBASE" | "TIMESTAMP" | "NUMBER" | "DIFFICULTY" | "GASLIMIT" | "RETURNDATASIZE" | "POP"
        | "PC" | "MSIZE" | "GAS" | "CHAINID" | "BASEFEE" | "PUSH0" => GasFamily::Base,
        "ADD" | "SUB" | "NOT" | "LT" | "GT" | "SLT" | "SGT" | "EQ" | "ISZERO" | "AND" | "OR" | "XOR"
        | "BYTE" | "SHL" | "SHR" | "SAR" | "CALLDATALOAD" | "MLOAD" | "MSTORE" | "MSTORE8" => {
            GasFamily::VeryLow
        }
        "MUL" | "DIV" | "SDIV" | "MOD" | "SMOD" | "SIGNEXTEND" | "SELFBALANCE" => GasFamily::Low,
        "ADDMOD" | "MULMOD" | "JUMP" => GasFamily::Mid,
        "JUMPI" => GasFamily::High,
        _ => GasFamily::Singleton(op),
    }
}

/// Per-fork gas constants. Loadable from JSON; missing keys take defaults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    /// Keyed by family name (`verylow`, ...) or, for singleton families, mnemonic.
    pub family_cost: BTreeMap<String, u64>,
    pub sstore_set: u64,
    pub sstore_reset: u64,
    pub sload: u64,
    pub sha3_base: u64,
    pub sha3_word: u64,
    pub memory_linear: u64,
    pub memory_quadratic_divisor: u64,
    pub copy_word: u64,
    pub exp_byte: u64,
    pub log_data_byte: u64,
    pub overrides: BTreeMap<String, u64>,
}

impl Default for GasSchedule {
    fn default() -> Self {
        let family_cost = [
            ("zero", 0),
            ("base", 2),
            ("verylow", 3),
            ("low", 5),
            ("mid", 8),
            ("high", 10),
            ("JUMPDEST", 1),
            ("EXP", 10),
            ("BALANCE", 400),
            ("EXTCODESIZE", 700),
            ("EXTCODECOPY", 700),
            ("EXTCODEHASH", 400),
            ("BLOCKHASH", 20),
            ("CALLDATACOPY", 3),
            ("CODECOPY", 3),
            ("RETURNDATACOPY", 3),
            ("LOG0", 375),
            ("LOG1", 750),
            ("LOG2", 1125),
            ("LOG3", 1500),
            ("LOG4", 1875),
            ("CREATE", 32000),
            ("CREATE2", 32000),
            ("CALL", 700),
            ("CALLCODE", 700),
            ("DELEGATECALL", 700),
            ("STATICCALL", 700),
            ("SELFDESTRUCT", 5000),
            ("INVALID", 0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        GasSchedule {
            family_cost,
            sstore_set: 20000,
            sstore_reset: 5000,
            sload: 200,
            sha3_base: 30,
            sha3_word: 6,
            memory_linear: 3,
            memory_quadratic_divisor: 512,
            copy_word: 3,
            exp_byte: 50,
            log_data_byte: 8,
            overrides: BTreeMap::new(),
        }
    }
}

impl GasSchedule {
    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let mut schedule: GasSchedule = serde_json::from_str(text)?;
        // Partial family maps extend the defaults instead of replacing them.
        let mut families = GasSchedule::default().family_cost;
        families.append(&mut schedule.family_cost);
        schedule.family_cost = families;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.sstore_set < self.sstore_reset {
            return Err(ScheduleError::Invalid(format!(
                "sstore_set ({}) must not be below sstore_reset ({})",
                self.sstore_set, self.sstore_reset
            )));
        }
        if self.memory_quadratic_divisor == 0 {
            return Err(ScheduleError::Invalid("memory_quadratic_divisor must be positive".into()));
        }
        for name in self.overrides.keys() {
            if Opcode::from_mnemonic(name).is_none() {
                return Err(ScheduleError::Invalid(format!("override for unknown opcode {name}")));
            }
        }
        Ok(())
    }

    pub fn family_cost(&self, family: GasFamily) -> u64 {
        self.family_cost.get(&family.name()).copied().unwrap_or(0)
    }

    /// Static worst-case charge. Word-proportional parts of SHA3, copies,
    /// EXP and LOG, as well as memory expansion, are not included.
    pub fn worst_case_gas(&self, op: Opcode) -> u64 {
        if let Some(&cost) = self.overrides.get(op.mnemonic()) {
            return cost;
        }
        match op {
            Opcode::SSTORE => self.sstore_set,
            Opcode::SLOAD => self.sload,
            Opcode::SHA3 => self.sha3_base,
            _ => self.family_cost(family_of(op)),
        }
    }

    /// Same as [`worst_case_gas`](Self::worst_case_gas) but with SSTORE at its reset price.
    pub fn best_case_sstore(&self) -> u64 {
        self.overrides.get("SSTORE").copied().unwrap_or(self.sstore_reset)
    }
}

/// Free-function form of [`GasSchedule::worst_case_gas`].
pub fn worst_case_gas(op: Opcode, schedule: &GasSchedule) -> u64 {
    schedule.worst_case_gas(op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::opcode::defined_opcodes;

    #[test]
    fn families_follow_fee_schedule() {
        assert_eq!(family_of(Opcode::ADD), GasFamily::VeryLow);
        assert_eq!(family_of(Opcode::MUL), GasFamily::Low);
        assert_eq!(family_of(Opcode::SSTORE), GasFamily::Singleton(Opcode::SSTORE));
        assert_eq!(family_of(Opcode::SLOAD), GasFamily::Singleton(Opcode::SLOAD));
        assert_eq!(family_of(Opcode::JUMP), GasFamily::Mid);
        assert_eq!(family_of(Opcode::JUMPI), GasFamily::High);
        assert_eq!(family_of(Opcode::STOP), GasFamily::Zero);
        assert_eq!(family_of(Opcode::from_byte(0x0c)), GasFamily::Singleton(Opcode::INVALID));
    }

    #[test]
    fn worst_case_examples() {
        let s = GasSchedule::default();
        assert_eq!(s.worst_case_gas(Opcode::SSTORE), 20000);
        assert_eq!(s.worst_case_gas(Opcode::MLOAD), 3);
        assert_eq!(s.worst_case_gas(Opcode::STOP), 0);
        assert_eq!(s.worst_case_gas(Opcode::INVALID), 0);
        assert_eq!(s.worst_case_gas(Opcode::JUMPDEST), 1);
    }

    #[test]
    fn override_takes_precedence() {
        let mut s = GasSchedule::default();
        s.overrides.insert("ADD".into(), 42);
        s.overrides.insert("SSTORE".into(), 7);
        assert_eq!(s.worst_case_gas(Opcode::ADD), 42);
        assert_eq!(s.worst_case_gas(Opcode::SSTORE), 7);
        assert_eq!(s.worst_case_gas(Opcode::SUB), 3);
    }

    #[test]
    fn every_opcode_has_a_family_and_cost() {
        let s = GasSchedule::default();
        for op in defined_opcodes() {
            let fam = family_of(op);
            if let GasFamily::Singleton(inner) = fam {
                assert!(s.family_cost.contains_key(inner.mnemonic()) || op.is_storage_access() || op == Opcode::SHA3, "{op:?}");
            }
            let _ = s.worst_case_gas(op);
        }
    }

    #[test]
    fn family_names_roundtrip() {
        for fam in GasFamily::NAMED {
            assert_eq!(GasFamily::parse(&fam.name().to_uppercase()), Some(fam));
        }
        assert_eq!(GasFamily::parse("sstore"), Some(GasFamily::Singleton(Opcode::SSTORE)));
        assert_eq!(GasFamily::parse("add"), None);
    }

    #[test]
    fn json_schedule_partial() {
        let s = GasSchedule::from_json(r#"{"sload": 800, "family_cost": {"verylow": 4}, "overrides": {"SHA3": 1}}"#).unwrap();
        assert_eq!(s.sload, 800);
        assert_eq!(s.worst_case_gas(Opcode::ADD), 4);
        assert_eq!(s.worst_case_gas(Opcode::MUL), 5);
        assert_eq!(s.worst_case_gas(Opcode::SHA3), 1);
        assert_eq!(s.sstore_set, 20000);
        assert!(GasSchedule::from_json(r#"{"sstore_set": 1, "sstore_reset": 2}"#).is_err());
        assert!(GasSchedule::from_json(r#"{"overrides": {"FOO": 1}}"#).is_err());
    }
}
