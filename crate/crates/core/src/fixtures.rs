//! Hand-compiled contracts with their Solidity sources, storage layouts and
//! source maps. Shared by tests, benchmarks and the command line examples.

use std::collections::BTreeMap;

use primitive_types::U256;

use crate::asm::{assemble, Assembled};
use crate::cfg::{split_functions, Cfg, FunctionSplit};
use crate::ingest::srcmap::entries_for_lines;
use crate::ingest::{encode_source_map, parse_source_map, parse_storage_layout, Selector, SourceMap, StorageLayout};

/// Shape of a function's calldata, parameterised by one integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Input {
    None,
    /// A single `uint256` argument equal to the parameter.
    Scalar,
    /// A `uint256[]` of the given length holding `1, 2, ...`.
    Array,
}

#[derive(Clone, Debug)]
pub struct FixtureFn {
    pub signature: &'static str,
    pub label: &'static str,
    pub input: Input,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub source: &'static str,
    pub layout_json: &'static str,
    pub functions: Vec<FixtureFn>,
    pub asm: String,
    /// Whether the interpreter can run every function.
    pub executable: bool,
}

impl Fixture {
    pub fn assembled(&self) -> Assembled {
        assemble(&self.asm).unwrap_or_else(|e| panic!("fixture {}: {e}", self.name))
    }

    pub fn code(&self) -> Vec<u8> {
        self.assembled().code
    }

    pub fn hex(&self) -> String {
        hex::encode(self.code())
    }

    /// Compressed source map text, one entry per instruction.
    pub fn srcmap(&self) -> String {
        encode_source_map(&entries_for_lines(&self.assembled().lines, self.source))
    }

    pub fn source_map(&self) -> SourceMap {
        let a = self.assembled();
        parse_source_map(&self.srcmap(), &a.instructions(), self.source).expect("fixture source map")
    }

    pub fn layout(&self) -> StorageLayout {
        parse_storage_layout(self.layout_json).expect("fixture layout")
    }

    pub fn cfg(&self) -> Cfg {
        Cfg::build(&self.assembled().instructions())
    }

    pub fn split(&self, cfg: &Cfg) -> FunctionSplit {
        let mut split = split_functions(cfg);
        let sigs: Vec<&str> = self.functions.iter().map(|f| f.signature).collect();
        split.attach_signatures(&sigs);
        split
    }

    pub fn signatures(&self) -> Vec<&'static str> {
        self.functions.iter().map(|f| f.signature).collect()
    }

    pub fn function(&self, signature: &str) -> &FixtureFn {
        self.functions.iter().find(|f| f.signature == signature).expect("fixture function")
    }

    /// ABI calldata for `signature` with size parameter `n`.
    pub fn calldata(&self, signature: &str, n: u64) -> Vec<u8> {
        let f = self.function(signature);
        let mut out = Selector::from_signature(signature).0.to_vec();
        let mut word = |v: U256| {
            let mut buf = [0u8; 32];
            v.to_big_endian(&mut buf);
            out.extend_from_slice(&buf);
        };
        match f.input {
            Input::None => {}
            Input::Scalar => word(n.into()),
            Input::Array => {
                word(0x20.into());
                word(n.into());
                for i in 0..n {
                    word((i + 1).into());
                }
            }
        }
        out
    }

    pub fn initial_storage(&self) -> BTreeMap<U256, U256> {
        BTreeMap::new()
    }
}

fn dispatcher(functions: &[FixtureFn]) -> String {
    let mut out = String::from("#3 0x80 0x40 MSTORE 4 CALLDATASIZE LT @fallback JUMPI 0 CALLDATALOAD 0xe0 SHR\n");
    for f in functions {
        let sel = Selector::from_signature(f.signature).to_hex();
        out += &format!("#3 DUP1 PUSH4 {sel} EQ @{} JUMPI\n", f.label);
    }
    out + "#3 fallback: 0 DUP1 REVERT\n"
}

fn fixture(
    name: &'static str,
    source: &'static str,
    layout_json: &'static str,
    functions: Vec<FixtureFn>,
    body: &str,
    executable: bool,
) -> Fixture {
    let asm = dispatcher(&functions) + body;
    Fixture { name, source, layout_json, functions, asm, executable }
}

fn func(signature: &'static str, label: &'static str, input: Input) -> FixtureFn {
    FixtureFn { signature, label, input }
}

/// Copies the `uint256[]` argument to memory at 0xa0 with its length at
/// 0x80, leaving the length on the stack.
const COPY_ARRAY: &str = "0x24 CALLDATALOAD DUP1 0x80 MSTORE DUP1 0x20 MUL 0x44 0xa0 CALLDATACOPY";

pub const FILL_SOURCE: &str = "pragma solidity ^0.5.0;

contract Token {
    uint256 totalSupply;
    mapping(uint256 => uint256) balances;

    function fill(uint256[] memory data) public {
        for (uint256 i = 0; i < data.length; i++) {
            balances[i] = data[i];
            totalSupply += data[i];
        }
    }
}
";

pub const FILL_OPT_SOURCE: &str = "pragma solidity ^0.5.0;

contract Token {
    uint256 totalSupply;
    mapping(uint256 => uint256) balances;

    function fill(uint256[] memory data) public {
        uint256 totalSupply = get_field_totalSupply();
        for (uint256 i = 0; i < data.length; i++) {
            balances[i] = data[i];
            totalSupply += data[i];
        }
        set_field_totalSupply(totalSupply);
    }

    function get_field_totalSupply() internal view returns (uint256) {
        return totalSupply;
    }

    function set_field_totalSupply(uint256 value) internal {
        totalSupply = value;
    }
}
";

const TOKEN_LAYOUT: &str = r#"{"fields":[{"name":"totalSupply","slot":0,"kind":"scalar"},{"name":"balances","slot":1,"kind":"mapping"}]}"#;

pub fn straight_line() -> Fixture {
    fixture(
        "straight_line",
        "pragma solidity ^0.5.0;

contract Straight {
    uint256 a;
    uint256 b;

    function set(uint256 x) public {
        a = x;
        b = a + 1;
    }
}
",
        r#"{"fields":[{"name":"a","slot":0,"kind":"scalar"},{"name":"b","slot":1,"kind":"scalar"}]}"#,
        vec![func("set(uint256)", "f0", Input::Scalar)],
        "#7 f0:
         #8 4 CALLDATALOAD 0 SSTORE
         #9 1 0 SLOAD ADD 1 SSTORE
         #10 STOP",
        true,
    )
}

pub fn branch() -> Fixture {
    fixture(
        "branch",
        "pragma solidity ^0.5.0;

contract Branch {
    uint256 a;
    uint256 b;

    function pick(uint256 x) public {
        if (x > 3) {
            a = x;
        } else {
            b = 1;
        }
    }
}
",
        r#"{"fields":[{"name":"a","slot":0,"kind":"scalar"},{"name":"b","slot":1,"kind":"scalar"}]}"#,
        vec![func("pick(uint256)", "f0", Input::Scalar)],
        "#7 f0:
         #8 3 4 CALLDATALOAD GT @then JUMPI
         #11 1 1 SSTORE
         #12 @end JUMP
         #9 then: 4 CALLDATALOAD 0 SSTORE
         #13 end: STOP",
        true,
    )
}

pub fn calldata_loop() -> Fixture {
    fixture(
        "calldata_loop",
        "pragma solidity ^0.5.0;

contract Sum {
    function sum(uint256[] memory data) public pure returns (uint256 s) {
        for (uint256 i = 0; i < data.length; i++) {
            s += data[i];
        }
    }
}
",
        r#"{"fields":[]}"#,
        vec![func("sum(uint256[])", "f0", Input::Array)],
        &format!(
            "#4 f0:
             #4 {COPY_ARRAY} 0
             #5 0
             #5 loop: DUP3 DUP2 LT ISZERO @done JUMPI
             #6 DUP1 0x20 MUL 0xa0 ADD MLOAD DUP3 ADD SWAP2 POP
             #5 1 ADD @loop JUMP
             #8 done: POP 0 MSTORE 0x20 0 RETURN"
        ),
        true,
    )
}

pub fn constant_loop() -> Fixture {
    fixture(
        "constant_loop",
        "pragma solidity ^0.5.0;

contract Counter {
    uint256 count;

    function tick() public {
        for (uint256 i = 0; i < 10; i++) {
            count += 1;
        }
    }
}
",
        r#"{"fields":[{"name":"count","slot":0,"kind":"scalar"}]}"#,
        vec![func("tick()", "f0", Input::None)],
        "#6 f0:
         #7 0
         #7 loop: 10 DUP2 LT ISZERO @done JUMPI
         #8 1 0 SLOAD ADD 0 SSTORE
         #7 1 ADD @loop JUMP
         #10 done: POP STOP",
        true,
    )
}

pub fn nested_loops() -> Fixture {
    fixture(
        "nested_loops",
        "pragma solidity ^0.5.0;

contract Nested {
    uint256 acc;

    function grid(uint256 n) public {
        for (uint256 i = 0; i < n; i++) {
            for (uint256 j = 0; j < n; j++) {
                acc += i;
            }
        }
    }
}
",
        r#"{"fields":[{"name":"acc","slot":0,"kind":"scalar"}]}"#,
        vec![func("grid(uint256)", "f0", Input::Scalar)],
        "#6 f0:
         #7 4 CALLDATALOAD 0
         #7 outer: DUP2 DUP2 LT ISZERO @odone JUMPI
         #8 0
         #8 inner: DUP3 DUP2 LT ISZERO @idone JUMPI
         #9 DUP2 0 SLOAD ADD 0 SSTORE
         #8 1 ADD @inner JUMP
         #7 idone: POP 1 ADD @outer JUMP
         #12 odone: POP POP STOP",
        true,
    )
}

/// The storage loop: every iteration reads and writes `totalSupply`.
pub fn fill() -> Fixture {
    fixture(
        "fill",
        FILL_SOURCE,
        TOKEN_LAYOUT,
        vec![func("fill(uint256[])", "f0", Input::Array)],
        &format!(
            "#7 f0:
             #8 {COPY_ARRAY} 0
             #8 loop: DUP2 DUP2 LT ISZERO @done JUMPI
             #9 DUP1 0x20 MUL 0xa0 ADD MLOAD DUP2 0 MSTORE 1 0x20 MSTORE 0x40 0 SHA3 SSTORE
             #10 DUP1 0x20 MUL 0xa0 ADD MLOAD 0 SLOAD ADD 0 SSTORE
             #8 1 ADD @loop JUMP
             #12 done: POP POP STOP"
        ),
        true,
    )
}

/// `fill` after caching `totalSupply` in a local.
pub fn fill_opt() -> Fixture {
    fixture(
        "fill_opt",
        FILL_OPT_SOURCE,
        TOKEN_LAYOUT,
        vec![func("fill(uint256[])", "f0", Input::Array)],
        &format!(
            "#7 f0:
             #8 @r1 @getter JUMP
             #8 r1:
             #9 {COPY_ARRAY} 0
             #9 loop: DUP2 DUP2 LT ISZERO @done JUMPI
             #10 DUP1 0x20 MUL 0xa0 ADD MLOAD DUP2 0 MSTORE 1 0x20 MSTORE 0x40 0 SHA3 SSTORE
             #11 DUP1 0x20 MUL 0xa0 ADD MLOAD DUP4 ADD SWAP3 POP
             #9 1 ADD @loop JUMP
             #13 done: POP POP @r2 SWAP1 @setter JUMP
             #14 r2: STOP
             #16 getter:
             #17 0 SLOAD SWAP1 JUMP
             #20 setter:
             #21 0 SSTORE JUMP"
        ),
        true,
    )
}

pub fn unresolvable_loop() -> Fixture {
    fixture(
        "unresolvable_loop",
        "pragma solidity ^0.5.0;

contract Doubling {
    uint256 start;

    function grow(uint256 n) public {
        start = 1;
        uint256 i = 1;
        while (i < n) {
            i = i * 2;
        }
    }
}
",
        r#"{"fields":[{"name":"start","slot":0,"kind":"scalar"}]}"#,
        vec![func("grow(uint256)", "f0", Input::Scalar)],
        "#6 f0:
         #7 1 0 SSTORE
         #8 1
         #9 loop: 4 CALLDATALOAD DUP2 LT ISZERO @done JUMPI
         #10 2 MUL
         #9 @loop JUMP
         #12 done: POP STOP",
        true,
    )
}

pub fn multi_function() -> Fixture {
    fixture(
        "multi_function",
        "pragma solidity ^0.5.0;

contract Multi {
    uint256 value;
    uint256 hits;

    function get() public view returns (uint256) {
        return value;
    }

    function set(uint256 v) public {
        value = v;
        hits += 1;
    }

    function reset() public {
        value = 0;
    }
}
",
        r#"{"fields":[{"name":"value","slot":0,"kind":"scalar"},{"name":"hits","slot":1,"kind":"scalar"}]}"#,
        vec![
            func("get()", "f0", Input::None),
            func("set(uint256)", "f1", Input::Scalar),
            func("reset()", "f2", Input::None),
        ],
        "#7 f0:
         #8 0 SLOAD 0 MSTORE 0x20 0 RETURN
         #11 f1:
         #12 4 CALLDATALOAD 0 SSTORE
         #13 1 1 SLOAD ADD 1 SSTORE
         #14 STOP
         #16 f2:
         #17 0 0 SSTORE
         #18 STOP",
        true,
    )
}

/// A loop over `totalSupply` followed by an internal call that reads it.
pub fn transitive_access() -> Fixture {
    fixture(
        "transitive_access",
        "pragma solidity ^0.5.0;

contract Audit {
    uint256 totalSupply;
    uint256 lastSeen;

    function accumulate(uint256[] memory data) public {
        for (uint256 i = 0; i < data.length; i++) {
            totalSupply += data[i];
        }
        snapshot();
    }

    function snapshot() internal {
        lastSeen = totalSupply;
    }
}
",
        r#"{"fields":[{"name":"totalSupply","slot":0,"kind":"scalar"},{"name":"lastSeen","slot":1,"kind":"scalar"}]}"#,
        vec![func("accumulate(uint256[])", "f0", Input::Array)],
        &format!(
            "#7 f0:
             #8 {COPY_ARRAY} 0
             #8 loop: DUP2 DUP2 LT ISZERO @done JUMPI
             #9 DUP1 0x20 MUL 0xa0 ADD MLOAD 0 SLOAD ADD 0 SSTORE
             #8 1 ADD @loop JUMP
             #11 done: POP POP @ret @snap JUMP
             #12 ret: STOP
             #14 snap:
             #15 0 SLOAD 1 SSTORE JUMP"
        ),
        true,
    )
}

/// A loop over `totalSupply` followed by a call to another contract.
pub fn external_call() -> Fixture {
    fixture(
        "external_call",
        "pragma solidity ^0.5.0;

contract Notify {
    uint256 totalSupply;
    address listener;

    function accumulate(uint256[] memory data) public {
        for (uint256 i = 0; i < data.length; i++) {
            totalSupply += data[i];
        }
        listener.call(\"\");
    }
}
",
        r#"{"fields":[{"name":"totalSupply","slot":0,"kind":"scalar"},{"name":"listener","slot":1,"kind":"scalar"}]}"#,
        vec![func("accumulate(uint256[])", "f0", Input::Array)],
        &format!(
            "#7 f0:
             #8 {COPY_ARRAY} 0
             #8 loop: DUP2 DUP2 LT ISZERO @done JUMPI
             #9 DUP1 0x20 MUL 0xa0 ADD MLOAD 0 SLOAD ADD 0 SSTORE
             #8 1 ADD @loop JUMP
             #11 done: POP POP 0 0 0 0 0 1 SLOAD GAS CALL POP
             #12 STOP"
        ),
        false,
    )
}

pub fn read_only() -> Fixture {
    fixture(
        "read_only",
        "pragma solidity ^0.5.0;

contract Reader {
    uint256 totalSupply;

    function triple() public view returns (uint256) {
        uint256 r = totalSupply;
        r += totalSupply;
        r += totalSupply;
        return r;
    }
}
",
        r#"{"fields":[{"name":"totalSupply","slot":0,"kind":"scalar"}]}"#,
        vec![func("triple()", "f0", Input::None)],
        "#6 f0:
         #7 0 SLOAD
         #8 0 SLOAD ADD
         #9 0 SLOAD ADD
         #10 0 MSTORE 0x20 0 RETURN",
        true,
    )
}

/// Every fixture, in a stable order.
pub fn all() -> Vec<Fixture> {
    vec![
        straight_line(),
        branch(),
        calldata_loop(),
        constant_loop(),
        nested_loops(),
        fill(),
        unresolvable_loop(),
        multi_function(),
        fill_opt(),
        transitive_access(),
        external_call(),
        read_only(),
    ]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}
