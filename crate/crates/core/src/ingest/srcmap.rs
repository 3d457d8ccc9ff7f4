//! Compressed source maps (`s:l:f:j:m` entries separated by `;`).
//!
//! Empty fields inherit the value of the previous entry. Only byte offsets
//! and file indices are used; the jump and modifier-depth fields are parsed
//! and dropped. Lines are 1-based. Entries pointing at a file other than
//! index 0 (including `-1`, compiler-generated code) have no line.

use std::collections::BTreeMap;

use crate::error::IngestError;
use crate::evm::Instruction;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrcEntry {
    pub start: i64,
    pub length: i64,
    pub file: i64,
    pub jump: char,
    pub modifier_depth: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceMap {
    /// Instruction pc → (1-based line, file index).
    pub pc_to_line: BTreeMap<usize, (u32, i64)>,
    pub entries: Vec<SrcEntry>,
}

impl SourceMap {
    pub fn line_of(&self, pc: usize) -> Option<u32> {
        self.pc_to_line.get(&pc).map(|&(l, _)| l)
    }

    pub fn is_empty(&self) -> bool {
        self.pc_to_line.is_empty()
    }
}

fn line_starts(source: &str) -> Vec<usize> {
    std::iter::once(0).chain(source.match_indices('\n').map(|(i, _)| i + 1)).collect()
}

fn line_of_offset(starts: &[usize], offset: usize) -> u32 {
    (starts.partition_point(|&s| s <= offset)) as u32
}

pub fn parse_entries(text: &str) -> Result<Vec<SrcEntry>, IngestError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut out: Vec<SrcEntry> = Vec::new();
    for (index, raw) in text.split(';').enumerate() {
        let bad = |reason: &str| IngestError::MalformedSrcmap { index, reason: reason.to_string() };
        let fields: Vec<&str> = raw.split(':').collect();
        if fields.len() > 5 {
            return Err(bad("more than five fields"));
        }
        let prev = out.last().cloned();
        let field = |i: usize| fields.get(i).copied().filter(|f| !f.is_empty());
        let num = |i: usize, inherited: Option<i64>| -> Result<i64, IngestError> {
            match field(i) {
                Some(f) => f.parse::<i64>().map_err(|_| bad(&format!("bad number {f:?}"))),
                None => inherited.ok_or_else(|| bad("empty field with nothing to inherit")),
            }
        };
        let start = num(0, prev.as_ref().map(|p| p.start))?;
        let length = num(1, prev.as_ref().map(|p| p.length))?;
        let file = num(2, prev.as_ref().map(|p| p.file))?;
        let jump = match field(3) {
            Some(j @ ("i" | "o" | "-")) => j.chars().next().unwrap_or('-'),
            Some(j) => return Err(bad(&format!("bad jump type {j:?}"))),
            None => prev.as_ref().map_or('-', |p| p.jump),
        };
        let modifier_depth = match field(4) {
            Some(_) => num(4, None)?,
            None => prev.as_ref().map_or(0, |p| p.modifier_depth),
        };
        if start < 0 || length < 0 || file < -1 {
            return Err(bad("negative offset, length or file index"));
        }
        out.push(SrcEntry { start, length, file, jump, modifier_depth });
    }
    Ok(out)
}

/// Maps the i-th entry onto the i-th instruction. The entry count must equal
/// the instruction count.
pub fn parse_source_map(text: &str, instructions: &[Instruction], source: &str) -> Result<SourceMap, IngestError> {
    let entries = parse_entries(text)?;
    if entries.len() != instructions.len() {
        return Err(IngestError::MalformedSrcmap {
            index: entries.len().min(instructions.len()),
            reason: format!("{} entries for {} instructions", entries.len(), instructions.len()),
        });
    }
    let starts = line_starts(source);
    let pc_to_line = instructions
        .iter()
        .zip(&entries)
        .filter(|(_, e)| e.file == 0 && (e.start as usize) <= source.len())
        .map(|(ins, e)| (ins.pc, (line_of_offset(&starts, e.start as usize), e.file)))
        .collect();
    Ok(SourceMap { pc_to_line, entries })
}

/// Compresses entries, leaving fields empty when equal to the previous entry.
pub fn encode_source_map(entries: &[SrcEntry]) -> String {
    let mut parts = Vec::with_capacity(entries.len());
    let mut prev: Option<&SrcEntry> = None;
    for e in entries {
        let mut fields = vec![
            (prev.map(|p| p.start) != Some(e.start)).then(|| e.start.to_string()),
            (prev.map(|p| p.length) != Some(e.length)).then(|| e.length.to_string()),
            (prev.map(|p| p.file) != Some(e.file)).then(|| e.file.to_string()),
            (prev.map_or('-', |p| p.jump) != e.jump).then(|| e.jump.to_string()),
            (prev.map_or(0, |p| p.modifier_depth) != e.modifier_depth).then(|| e.modifier_depth.to_string()),
        ];
        while fields.last().is_some_and(|f| f.is_none()) {
            fields.pop();
        }
        parts.push(fields.into_iter().map(Option::unwrap_or_default).collect::<Vec<_>>().join(":"));
        prev = Some(e);
    }
    parts.join(";")
}

/// Entries for instructions annotated with 1-based source lines; each mapped
/// instruction points at the first non-blank character of its line.
pub fn entries_for_lines(lines: &[Option<u32>], source: &str) -> Vec<SrcEntry> {
    let starts = line_starts(source);
    lines
        .iter()
        .map(|l| match l.and_then(|l| starts.get(l as usize - 1).map(|&s| (s, l))) {
            Some((s, l)) => {
                let end = starts.get(l as usize).map_or(source.len(), |&e| e.saturating_sub(1));
                let text = &source[s..end];
                let indent = text.len() - text.trim_start().len();
                SrcEntry {
                    start: (s + indent) as i64,
                    length: text.trim().len() as i64,
                    file: 0,
                    jump: '-',
                    modifier_depth: 0,
                }
            }
            None => SrcEntry { start: 0, length: 0, file: -1, jump: '-', modifier_depth: 0 },
        })
        .collect()
}
