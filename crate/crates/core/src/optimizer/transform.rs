//! Source-level caching of a storage field in a local variable.

use crate::error::OptimizeError;

use super::OptimizationCandidate;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transformed {
    pub new_source: String,
    pub getter_name: String,
    pub setter_name: Option<String>,
}

/// Marks which bytes of `src` are code, as opposed to comments and string
/// literals.
fn code_mask(src: &str) -> Vec<bool> {
    let b = src.as_bytes();
    let mut mask = vec![true; b.len()];
    let mut i = 0;
    while i < b.len() {
        let start = i;
        let end = if b[i..].starts_with(b"//") {
            b[i..].iter().position(|&c| c == b'\n').map_or(b.len(), |p| i + p)
        } else if b[i..].starts_with(b"/*") {
            src[i + 2..].find("*/").map_or(b.len(), |p| i + 2 + p + 2)
        } else if b[i] == b'"' || b[i] == b'\'' {
            let q = b[i];
            let mut j = i + 1;
            while j < b.len() && b[j] != q {
                j += if b[j] == b'\\' { 2 } else { 1 };
            }
            (j + 1).min(b.len())
        } else {
            i += 1;
            continue;
        };
        mask[start..end].iter_mut().for_each(|m| *m = false);
        i = end;
    }
    mask
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

/// Code positions where the identifier `word` occurs.
fn find_word(src: &str, mask: &[bool], word: &str, from: usize, to: usize) -> Vec<usize> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = from;
    while let Some(p) = src[i..to].find(word) {
        let at = i + p;
        let end = at + word.len();
        let before_ok = at == 0 || !is_ident(b[at - 1]);
        let after_ok = end >= b.len() || !is_ident(b[end]);
        if mask[at] && before_ok && after_ok {
            out.push(at);
        }
        i = at + 1;
    }
    out
}

fn matching_brace(src: &str, mask: &[bool], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in src.bytes().enumerate().skip(open) {
        if !mask[i] {
            continue;
        }
        match c {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn line_start(src: &str, pos: usize) -> usize {
    src[..pos].rfind('\n').map_or(0, |p| p + 1)
}

fn indent_of(src: &str, pos: usize) -> &str {
    let ls = line_start(src, pos);
    let line = &src[ls..];
    &line[..line.len() - line.trim_start_matches([' ', '\t']).len()]
}

/// Position just past the `;` ending the statement that starts at `from`.
fn statement_end(src: &str, mask: &[bool], from: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in src.bytes().enumerate().skip(from) {
        if !mask[i] {
            continue;
        }
        match c {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b';' if depth == 0 => return Some(i + 1),
            _ => {}
        }
    }
    None
}

const TYPE_PREFIXES: [&str; 6] = ["uint", "int", "bool", "address", "bytes", "string"];

fn declares_local(body: &str, mask: &[bool], offset: usize, field: &str) -> bool {
    let src_positions = find_word(body, &mask[offset..offset + body.len()], field, 0, body.len());
    src_positions.into_iter().any(|p| {
        let before = body[..p].trim_end();
        let prev: String = before.chars().rev().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        let prev: String = prev.chars().rev().collect();
        matches!(prev.as_str(), "memory" | "storage" | "calldata")
            || TYPE_PREFIXES.iter().any(|t| prev.starts_with(t) && prev[t.len()..].chars().all(|c| c.is_ascii_digit()))
    })
}

pub fn getter_name(field: &str) -> String {
    format!("get_field_{field}")
}

pub fn setter_name(field: &str) -> String {
    format!("set_field_{field}")
}

/// Rewrites `function` so that `candidate.field` is read once into a local
/// of the same name and written back before every exit.
pub fn transform(source: &str, function: &str, candidate: &OptimizationCandidate) -> Result<Transformed, OptimizeError> {
    let name = function.split('(').next().unwrap_or(function).trim();
    let field = candidate.field.as_str();
    let mask = code_mask(source);
    let decl = find_word(source, &mask, "function", 0, source.len())
        .into_iter()
        .find(|&p| {
            let rest = source[p + "function".len()..].trim_start();
            rest.strip_prefix(name).is_some_and(|r| r.trim_start().starts_with('('))
        })
        .ok_or_else(|| OptimizeError::FunctionNotFound(name.to_string()))?;
    let open = (decl..source.len())
        .find(|&i| mask[i] && matches!(source.as_bytes()[i], b'{' | b';'))
        .filter(|&i| source.as_bytes()[i] == b'{')
        .ok_or_else(|| OptimizeError::UnsupportedSyntax(format!("function {name} has no body")))?;
    let close = matching_brace(source, &mask, open)
        .ok_or_else(|| OptimizeError::UnsupportedSyntax("unbalanced braces".into()))?;
    let body = &source[open + 1..close];
    if !find_word(source, &mask, "assembly", open, close).is_empty() {
        return Err(OptimizeError::UnsupportedSyntax("inline assembly".into()));
    }
    if declares_local(body, &mask, open + 1, field) {
        return Err(OptimizeError::UnsupportedSyntax(format!("{field} is already declared in {name}")));
    }

    let fn_indent = indent_of(source, decl).to_string();
    let indent = body
        .lines()
        .skip(1)
        .find(|l| !l.trim().is_empty())
        .map(|l| l[..l.len() - l.trim_start().len()].to_string())
        .unwrap_or_else(|| format!("{fn_indent}    "));
    let getter = getter_name(field);
    let setter = (!candidate.read_only).then(|| setter_name(field));
    let flush = setter.as_ref().map(|s| format!("{s}({field});"));

    // (position, text) edits, applied back to front.
    let mut edits: Vec<(usize, String)> = vec![(open + 1, format!("\n{indent}uint256 {field} = {getter}();"))];
    let returns = find_word(source, &mask, "return", open, close);
    if let Some(flush) = &flush {
        for &r in &returns {
            let ls = line_start(source, r);
            if source[ls..r].trim().is_empty() {
                edits.push((r, format!("{flush}\n{}", indent_of(source, r))));
            } else {
                let end = statement_end(source, &mask, r)
                    .ok_or_else(|| OptimizeError::UnsupportedSyntax("unterminated return".into()))?;
                edits.push((r, format!("{{ {flush} ")));
                edits.push((end, " }".into()));
            }
        }
        let ends_with_return = returns.last().is_some_and(|&r| {
            statement_end(source, &mask, r)
                .is_some_and(|e| (e..close).all(|i| !mask[i] || source.as_bytes()[i].is_ascii_whitespace()))
        });
        if !ends_with_return {
            let ls = line_start(source, close);
            if source[ls..close].trim().is_empty() && ls > open {
                edits.push((ls, format!("{indent}{flush}\n")));
            } else {
                edits.push((close, format!(" {flush} ")));
            }
        }
    }
    let mut appended = format!(
        "\n\n{fn_indent}function {getter}() internal view returns (uint256) {{\n{fn_indent}    return {field};\n{fn_indent}}}"
    );
    if let Some(s) = &setter {
        appended += &format!(
            "\n\n{fn_indent}function {s}(uint256 value) internal {{\n{fn_indent}    {field} = value;\n{fn_indent}}}"
        );
    }
    edits.push((close + 1, appended));

    edits.sort_by_key(|(p, _)| std::cmp::Reverse(*p));
    let mut out = source.to_string();
    for (p, text) in edits {
        out.insert_str(p, &text);
    }
    Ok(Transformed { new_source: out, getter_name: getter, setter_name: setter })
}
