//! Extracting ranked labels from free-form oracle replies.
//!
//! Accepted answer blocks, in order of preference:
//! 1. the last well-formed JSON object with a `"points"` array,
//! 2. the last well-formed `Arrow: [..]` list,
//! 3. the last well-formed `final answer` list.
//!
//! Only the last block of the preferred kind is read; numbers mentioned while
//! reasoning are ignored.

use alloc::vec::Vec;
use core::fmt;

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseError {
    /// No answer block of any accepted format.
    Unparseable,
    /// An answer block was found but none of its labels are on the image.
    EmptyAfterFilter,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Unparseable => f.write_str("no answer block found"),
            ParseError::EmptyAfterFilter => f.write_str("no valid labels in the answer"),
        }
    }
}

impl core::error::Error for ParseError {}

/// Ranked labels from `raw`, restricted to `valid_labels`, deduplicated,
/// preserving the reply's order.
pub fn parse_selection(raw: &str, valid_labels: &[u32]) -> Result<Vec<u32>, ParseError> {
    let labels = last_points_object(raw)
        .or_else(|| last_bracket_list(raw, "arrow:"))
        .or_else(|| last_final_answer(raw))
        .ok_or(ParseError::Unparseable)?;
    let mut out: Vec<u32> = Vec::new();
    for l in labels {
        if valid_labels.contains(&l) && !out.contains(&l) {
            out.push(l);
        }
    }
    if out.is_empty() {
        return Err(ParseError::EmptyAfterFilter);
    }
    Ok(out)
}

fn last_points_object(raw: &str) -> Option<Vec<u32>> {
    for (start, _) in raw.rmatch_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        let Some(Ok(Value::Object(map))) = stream.next() else {
            continue;
        };
        if let Some(Value::Array(items)) = map.get("points") {
            if let Some(labels) = items.iter().map(json_label).collect::<Option<Vec<u32>>>() {
                return Some(labels);
            }
        }
    }
    None
}

fn json_label(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()).or_else(|| {
            // Accept 3.0 but not 3.5.
            n.as_f64().filter(|f| libm::trunc(*f) == *f && *f >= 0.0 && *f <= f64::from(u32::MAX)).map(|f| f as u32)
        }),
        Value::String(s) => parse_label(s),
        _ => None,
    }
}

fn parse_label(s: &str) -> Option<u32> {
    let s = s.trim().trim_start_matches('#');
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Byte offsets of every ASCII-case-insensitive occurrence of `needle`.
fn find_all_ci(haystack: &str, needle: &str) -> Vec<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return Vec::new();
    }
    (0..=h.len() - n.len()).filter(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n)).collect()
}

/// Parses a `[a, b, c]` list starting at (or after whitespace/colons from)
/// `from`. Every entry must be an integer label.
fn bracket_list_at(raw: &str, from: usize) -> Option<Vec<u32>> {
    let rest = raw[from..].trim_start_matches(|c: char| c.is_whitespace() || c == ':' || c == '*' || c == '`');
    let body = rest.strip_prefix('[')?;
    let end = body.find(']')?;
    let inner = body[..end].trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(str::trim).filter(|t| !t.is_empty()).map(parse_label).collect()
}

fn last_bracket_list(raw: &str, keyword: &str) -> Option<Vec<u32>> {
    find_all_ci(raw, keyword).into_iter().rev().find_map(|i| bracket_list_at(raw, i + keyword.len()))
}

fn last_final_answer(raw: &str) -> Option<Vec<u32>> {
    const KEY: &str = "final answer";
    find_all_ci(raw, KEY).into_iter().rev().find_map(|i| {
        let after = i + KEY.len();
        let tail = &raw[after..];
        let tail = tail.trim_start_matches(['\'', '`', '"', '*']);
        // "final answer is [..]" as well as "final answer: [..]".
        let tail = {
            let t = tail.trim_start();
            match t.get(..2) {
                Some(w) if w.eq_ignore_ascii_case("is") => &t[2..],
                _ => tail,
            }
        };
        let offset = raw.len() - tail.len();
        bracket_list_at(raw, offset).or_else(|| bare_number_run(tail))
    })
}

/// `: 3, 5 and 7` up to the end of the line.
fn bare_number_run(tail: &str) -> Option<Vec<u32>> {
    let line = tail.lines().next().unwrap_or("");
    let line = line.trim_start_matches(|c: char| c.is_whitespace() || c == ':' || c == '-' || c == 'i' || c == 's');
    let mut out = Vec::new();
    for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
        let tok = tok.trim_end_matches('.');
        if tok.is_empty() || tok.eq_ignore_ascii_case("and") {
            continue;
        }
        match parse_label(tok) {
            Some(l) => out.push(l),
            None => break,
        }
    }
    (!out.is_empty()).then_some(out)
}
