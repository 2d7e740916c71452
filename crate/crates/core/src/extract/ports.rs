//! Port and parameter parsing for ANSI and non-ANSI module headers.
//!
//! Works on text with comments and strings masked out, splitting
//! declarations at top-level commas. Widths are resolved against the
//! module's parameters.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::width::{eval_const, resolve_width, ParamEnv};
use super::ExtractError;
use crate::model::{BitWidth, Direction, PortSpec};
use crate::scan::{mask, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortStyle {
    Ansi,
    NonAnsi,
    Portless,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleInterface {
    pub name: String,
    pub params: ParamEnv,
    pub ports: Vec<PortSpec>,
    pub style: PortStyle,
}

const MODIFIERS: &[&str] = &[
    "wire", "reg", "logic", "tri", "tri0", "tri1", "triand", "trior", "trireg", "wand", "wor",
    "supply0", "supply1", "uwire", "var", "signed", "unsigned", "integer", "time", "real",
    "realtime",
];

fn unparseable(detail: impl Into<String>) -> ExtractError {
    ExtractError::UnparseablePortList(detail.into())
}

/// Splits at commas outside `()`, `[]` and `{}`.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

/// Index one past the bracket matching the opener at `open`.
fn matching_close(text: &str, open: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let (o, c) = match bytes[open] {
        b'(' => (b'(', b')'),
        b'[' => (b'[', b']'),
        b'{' => (b'{', b'}'),
        _ => return None,
    };
    let mut depth = 0;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if b == o {
            depth += 1;
        } else if b == c {
            depth -= 1;
            if depth == 0 {
                return Some(i + 1);
            }
        }
    }
    None
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '\\'
}

/// Reads an identifier (plain or escaped) at the start of `text`.
fn read_ident(text: &str) -> Option<(&str, &str)> {
    let first = text.chars().next()?;
    if !is_ident_start(first) {
        return None;
    }
    let end = if first == '\\' {
        text.find(char::is_whitespace).unwrap_or(text.len())
    } else {
        text.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
            .unwrap_or(text.len())
    };
    Some((&text[..end], &text[end..]))
}

/// One comma-separated piece of a declaration.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
struct Segment {
    direction: Option<Direction>,
    modifiers: Vec<String>,
    ranges: Vec<String>,
    name: String,
}

/// Parses `[direction] [modifiers] [ranges] name [unpacked dims] [= init]`.
fn parse_segment(seg: &str) -> Result<Segment, ExtractError> {
    let mut out = Segment::default();
    let mut rest = seg.trim_start();
    loop {
        if rest.starts_with('[') {
            let end = matching_close(rest, 0)
                .ok_or_else(|| unparseable(format!("unbalanced range in `{}`", seg.trim())))?;
            out.ranges
                .push(rest[..end].split_whitespace().collect::<Vec<_>>().join(""));
            rest = rest[end..].trim_start();
            continue;
        }
        let Some((word, after)) = read_ident(rest) else {
            return Err(unparseable(format!("unexpected text `{}`", seg.trim())));
        };
        if let Some(dir) = Direction::parse(word) {
            if out.direction.is_some() || !out.modifiers.is_empty() || !out.ranges.is_empty() {
                return Err(unparseable(format!(
                    "misplaced direction in `{}`",
                    seg.trim()
                )));
            }
            out.direction = Some(dir);
        } else if MODIFIERS.contains(&word) {
            out.modifiers.push(word.to_string());
        } else {
            out.name = word.trim_start_matches('\\').to_string();
            rest = after.trim_start();
            break;
        }
        rest = after.trim_start();
    }
    // Unpacked dimensions, then an optional default value.
    while rest.starts_with('[') {
        let end = matching_close(rest, 0)
            .ok_or_else(|| unparseable(format!("unbalanced range in `{}`", seg.trim())))?;
        rest = rest[end..].trim_start();
    }
    if !(rest.is_empty() || rest.starts_with('=')) {
        return Err(unparseable(format!("unexpected text after `{}`", out.name)));
    }
    Ok(out)
}

fn width_of(modifiers: &[String], ranges: &[String], env: &ParamEnv) -> BitWidth {
    if !ranges.is_empty() {
        let mut total: u32 = 1;
        for r in ranges {
            match resolve_width(r, env) {
                BitWidth::Resolved(w) => match total.checked_mul(w) {
                    Some(t) => total = t,
                    None => return BitWidth::Unresolved(ranges.concat()),
                },
                BitWidth::Unresolved(_) => return BitWidth::Unresolved(ranges.concat()),
            }
        }
        return BitWidth::Resolved(total);
    }
    if modifiers.iter().any(|m| m == "integer") {
        BitWidth::Resolved(32)
    } else if modifiers.iter().any(|m| m == "time") {
        BitWidth::Resolved(64)
    } else if modifiers.iter().any(|m| m == "real" || m == "realtime") {
        BitWidth::Unresolved("real".into())
    } else {
        BitWidth::Resolved(1)
    }
}

/// Binds `NAME = expr` items from a parameter list; unevaluable values stay
/// unbound. Names already bound in `env` keep their binding.
fn bind_params(list: &str, env: &mut ParamEnv, fixed: &ParamEnv) {
    for item in split_top_level(list) {
        let mut rest = item.trim();
        loop {
            if rest.starts_with('[') {
                match matching_close(rest, 0) {
                    Some(end) => rest = rest[end..].trim_start(),
                    None => break,
                }
                continue;
            }
            match read_ident(rest) {
                Some((
                    "parameter" | "localparam" | "integer" | "signed" | "unsigned" | "real"
                    | "time",
                    after,
                )) => rest = after.trim_start(),
                _ => break,
            }
        }
        let Some((name, after)) = read_ident(rest) else {
            continue;
        };
        let Some(expr) = after.trim_start().strip_prefix('=') else {
            continue;
        };
        if fixed.get(name).is_some() {
            continue;
        }
        if let Some(value) = eval_const(expr, env) {
            env.bind(name, value);
        }
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:macromodule|module)\s+(\\\S+|[A-Za-z_][A-Za-z0-9_$]*)").unwrap()
    })
}

fn subroutine_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)\bfunction\b.*?\bendfunction\b|\btask\b.*?\bendtask\b").unwrap()
    })
}

fn first_word(stmt: &str) -> Option<&str> {
    read_ident(stmt.trim_start()).map(|(w, _)| w)
}

/// Parses one `module ... endmodule` text into its name, parameters and
/// ports. `env` supplies bindings that take precedence over the module's own
/// parameter defaults.
pub fn parse_module_interface(
    module_text: &str,
    env: &ParamEnv,
) -> Result<ModuleInterface, ExtractError> {
    let masked = mask(module_text, Mask::CommentsAndStrings);
    let caps = header_re()
        .captures(&masked)
        .ok_or_else(|| unparseable("missing module keyword"))?;
    let name = caps[1].trim_start_matches('\\').to_string();
    let mut pos = caps.get(0).unwrap().end();
    let skip_ws = |p: usize| p + masked[p..].len() - masked[p..].trim_start().len();

    let mut params = env.clone();
    pos = skip_ws(pos);
    if masked[pos..].starts_with('#') {
        pos = skip_ws(pos + 1);
        if !masked[pos..].starts_with('(') {
            return Err(unparseable("expected `(` after `#`"));
        }
        let end =
            matching_close(&masked, pos).ok_or_else(|| unparseable("unbalanced parameter list"))?;
        bind_params(&masked[pos + 1..end - 1], &mut params, env);
        pos = skip_ws(end);
    }
    let mut port_list = None;
    if masked[pos..].starts_with('(') {
        let end =
            matching_close(&masked, pos).ok_or_else(|| unparseable("unbalanced port list"))?;
        port_list = Some(&masked[pos + 1..end - 1]);
        pos = skip_ws(end);
    }
    if !masked[pos..].starts_with(';') {
        return Err(unparseable("expected `;` after module header"));
    }
    let body_end = masked
        .rfind("endmodule")
        .unwrap_or(masked.len())
        .max(pos + 1);
    let body = subroutine_re().replace_all(&masked[pos + 1..body_end], "");
    let statements: Vec<&str> = body.split(';').collect();

    for stmt in &statements {
        if matches!(first_word(stmt), Some("parameter" | "localparam")) {
            bind_params(stmt, &mut params, env);
        }
    }

    let items: Vec<&str> = port_list
        .map(split_top_level)
        .unwrap_or_default()
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .collect();
    let ansi = items
        .first()
        .and_then(|i| first_word(i))
        .is_some_and(|w| Direction::parse(w).is_some());

    let ports = if ansi {
        parse_ansi(&items, &params)?
    } else {
        parse_non_ansi(&items, &statements, &params)?
    };
    let style = match (ansi, ports.is_empty()) {
        (_, true) => PortStyle::Portless,
        (true, false) => PortStyle::Ansi,
        (false, false) => PortStyle::NonAnsi,
    };
    Ok(ModuleInterface {
        name,
        params,
        ports,
        style,
    })
}

fn parse_ansi(items: &[&str], params: &ParamEnv) -> Result<Vec<PortSpec>, ExtractError> {
    let mut ports = Vec::new();
    let mut current: Option<Segment> = None;
    for item in items {
        let seg = parse_segment(item)?;
        let effective = match (&seg.direction, &current) {
            (Some(_), _) => seg,
            (None, Some(prev)) if seg.modifiers.is_empty() && seg.ranges.is_empty() => Segment {
                name: seg.name,
                ..prev.clone()
            },
            (None, Some(prev)) => Segment {
                direction: prev.direction,
                ..seg
            },
            (None, None) => {
                return Err(unparseable(format!("port `{}` has no direction", seg.name)))
            }
        };
        ports.push(PortSpec {
            name: effective.name.clone(),
            direction: effective.direction.expect("direction set above"),
            bit_width: width_of(&effective.modifiers, &effective.ranges, params),
        });
        current = Some(effective);
    }
    Ok(ports)
}

fn parse_non_ansi(
    items: &[&str],
    statements: &[&str],
    params: &ParamEnv,
) -> Result<Vec<PortSpec>, ExtractError> {
    let mut listed = Vec::new();
    for item in items {
        match read_ident(item.trim()) {
            Some((name, rest)) if rest.trim().is_empty() => {
                listed.push(name.trim_start_matches('\\').to_string())
            }
            _ => {
                return Err(unparseable(format!(
                    "unsupported port list item `{}`",
                    item.trim()
                )))
            }
        }
    }

    let mut declared: Vec<(Segment, BitWidth)> = Vec::new();
    let mut net_widths: HashMap<String, BitWidth> = HashMap::new();
    for stmt in statements {
        let Some(word) = first_word(stmt) else {
            continue;
        };
        let is_direction = Direction::parse(word).is_some();
        if !is_direction && !MODIFIERS.contains(&word) {
            continue;
        }
        let mut current: Option<Segment> = None;
        for piece in split_top_level(stmt) {
            let seg = match parse_segment(piece) {
                Ok(seg) => seg,
                Err(e) if is_direction => return Err(e),
                // Net declarations only refine widths; skip what we cannot read.
                Err(_) => break,
            };
            let seg = match &current {
                Some(prev)
                    if seg.direction.is_none()
                        && seg.modifiers.is_empty()
                        && seg.ranges.is_empty() =>
                {
                    Segment {
                        name: seg.name,
                        ..prev.clone()
                    }
                }
                _ => seg,
            };
            let width = width_of(&seg.modifiers, &seg.ranges, params);
            if is_direction {
                declared.push((seg.clone(), width));
            } else if !seg.ranges.is_empty() {
                net_widths.insert(seg.name.clone(), width);
            }
            current = Some(seg);
        }
    }

    for name in &listed {
        if !declared.iter().any(|(s, _)| &s.name == name) {
            return Err(unparseable(format!(
                "port `{name}` has no direction declaration"
            )));
        }
    }

    Ok(declared
        .into_iter()
        .map(|(seg, width)| {
            let bit_width = if seg.ranges.is_empty() {
                net_widths.get(&seg.name).cloned().unwrap_or(width)
            } else {
                width
            };
            PortSpec {
                name: seg.name,
                direction: seg.direction.expect("direction statements only"),
                bit_width,
            }
        })
        .collect())
}

/// Ports of one module text, with `env` bindings applied.
pub fn parse_ports(module_text: &str, env: &ParamEnv) -> Result<Vec<PortSpec>, ExtractError> {
    parse_module_interface(module_text, env).map(|i| i.ports)
}
