//! Locating `module ... endmodule` regions in live (uncommented) code.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

use super::ExtractError;
use crate::scan::{mask, Mask};

/// One module region. All spans are byte offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpan {
    pub name: String,
    /// From the `module` keyword through the end of `endmodule`.
    pub span: Range<usize>,
    /// From the `module` keyword through the `;` closing the header.
    pub header: Range<usize>,
    /// Between the header and `endmodule`.
    pub body: Range<usize>,
}

fn module_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(?:(?:macromodule|module)\s+(\\\S+|[A-Za-z_][A-Za-z0-9_$]*)|(endmodule)\b)")
            .unwrap()
    })
}

/// Finds every live module in source order. Declarations inside comments or
/// strings are ignored; original whitespace is untouched.
pub fn find_modules(source: &str) -> Result<Vec<ModuleSpan>, ExtractError> {
    let masked = mask(source, Mask::CommentsAndStrings);
    let mut found = Vec::new();
    let mut open: Option<(String, usize, usize)> = None;
    for caps in module_re().captures_iter(&masked) {
        let whole = caps.get(0).unwrap();
        if let Some(name) = caps.get(1) {
            if let Some((prev, ..)) = open {
                return Err(ExtractError::UnterminatedModule(prev));
            }
            open = Some((
                name.as_str().trim_start_matches('\\').to_string(),
                whole.start(),
                name.end(),
            ));
        } else if let Some((name, start, name_end)) = open.take() {
            let header_end = header_end(&masked, name_end, whole.start()).unwrap_or(name_end);
            found.push(ModuleSpan {
                name,
                span: start..whole.end(),
                header: start..header_end,
                body: header_end..whole.start(),
            });
        }
    }
    if let Some((name, ..)) = open {
        return Err(ExtractError::UnterminatedModule(name));
    }
    if found.is_empty() {
        return Err(ExtractError::NoModuleFound);
    }
    Ok(found)
}

/// Offset just past the first `;` at parenthesis depth zero.
fn header_end(masked: &str, from: usize, limit: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, b) in masked.as_bytes()[from..limit].iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b';' if depth <= 0 => return Some(from + i + 1),
            _ => {}
        }
    }
    None
}
