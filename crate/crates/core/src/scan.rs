//! Lexical pre-pass that locates comments and string literals.
//!
//! Regex-based stages run over a masked copy of the source in which comment
//! and string bytes are blanked out. Masking is byte-for-byte (newlines kept)
//! so offsets in the masked text are valid offsets into the original.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    LineComment,
    BlockComment,
    StringLiteral,
}

impl RegionKind {
    pub fn is_comment(self) -> bool {
        matches!(self, RegionKind::LineComment | RegionKind::BlockComment)
    }
}

/// A comment or string span, delimiters included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub kind: RegionKind,
    pub span: Range<usize>,
}

pub fn scan_regions(text: &str) -> Vec<Region> {
    let bytes = text.as_bytes();
    let mut regions = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let end = memchr(b'\n', &bytes[i..]).map_or(bytes.len(), |n| i + n);
                regions.push(Region {
                    kind: RegionKind::LineComment,
                    span: i..end,
                });
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = find(&bytes[i + 2..], b"*/").map_or(bytes.len(), |n| i + 2 + n + 2);
                regions.push(Region {
                    kind: RegionKind::BlockComment,
                    span: i..end,
                });
                i = end;
            }
            b'"' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'"' && bytes[j] != b'\n' {
                    if bytes[j] == b'\\' {
                        j += 1;
                    }
                    j += 1;
                }
                let end = if j < bytes.len() && bytes[j] == b'"' {
                    j + 1
                } else {
                    j.min(bytes.len())
                };
                regions.push(Region {
                    kind: RegionKind::StringLiteral,
                    span: i..end,
                });
                i = end;
            }
            // Escaped identifiers run to the next whitespace and may contain
            // comment-like characters.
            b'\\' => {
                i += 1;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    regions
}

fn memchr(needle: u8, hay: &[u8]) -> Option<usize> {
    hay.iter().position(|&b| b == needle)
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// Which region kinds [`mask`] blanks out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    Comments,
    CommentsAndStrings,
}

/// Returns `text` with the selected regions replaced by spaces. Newlines
/// inside block comments are kept so line numbers survive.
pub fn mask(text: &str, which: Mask) -> String {
    let mut out = text.as_bytes().to_vec();
    for region in scan_regions(text) {
        let hit = match which {
            Mask::Comments => region.kind.is_comment(),
            Mask::CommentsAndStrings => true,
        };
        if hit {
            for b in &mut out[region.span] {
                if *b != b'\n' {
                    *b = b' ';
                }
            }
        }
    }
    // Every byte of each masked multi-byte character was replaced.
    String::from_utf8(out).expect("masking keeps UTF-8 valid")
}

/// Cleaned comment bodies in source order.
///
/// Delimiters are stripped and each comment is reduced to one line: block
/// comment lines are trimmed, a leading `*` decoration is dropped, and the
/// pieces are joined with single spaces. Empty bodies are skipped.
pub fn extract_comments(text: &str) -> Vec<String> {
    scan_regions(text)
        .into_iter()
        .filter_map(|region| {
            let raw = &text[region.span.clone()];
            let body = match region.kind {
                RegionKind::LineComment => raw[2..].to_string(),
                RegionKind::BlockComment => {
                    let inner = raw.strip_prefix("/*").unwrap_or(raw);
                    inner.strip_suffix("*/").unwrap_or(inner).to_string()
                }
                RegionKind::StringLiteral => return None,
            };
            let cleaned = body
                .lines()
                .map(|line| {
                    let line = line.trim();
                    line.strip_prefix('*').map(str::trim_start).unwrap_or(line)
                })
                .filter(|line| !line.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            (!cleaned.is_empty()).then_some(cleaned)
        })
        .collect()
}

/// Number of characters lying in comment regions, delimiters included.
pub fn comment_chars(text: &str) -> usize {
    scan_regions(text)
        .into_iter()
        .filter(|r| r.kind.is_comment())
        .map(|r| text[r.span].chars().count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_comment_forms_in_source_order() {
        assert_eq!(extract_comments("/* a */ code // b"), vec!["a", "b"]);
    }

    #[test]
    fn good_adder_comment() {
        let src = "// 8-bit up-counter with asynchronous reset\nmodule c; endmodule";
        assert_eq!(
            extract_comments(src),
            vec!["8-bit up-counter with asynchronous reset"]
        );
    }

    #[test]
    fn strings_hide_comment_markers() {
        let src = "initial $display(\"// not a comment /* nor this */\"); // real";
        assert_eq!(extract_comments(src), vec!["real"]);
    }

    #[test]
    fn block_comment_is_flattened() {
        let src = "/*\n * Line one\n *   line two\n */\nmodule m; endmodule";
        assert_eq!(extract_comments(src), vec!["Line one line two"]);
        assert!(extract_comments("//\n/**/").is_empty());
    }

    #[test]
    fn mask_preserves_offsets_and_newlines() {
        let src = "a /* x\ny */ b // é\nc \"s//\"";
        let masked = mask(src, Mask::CommentsAndStrings);
        assert_eq!(masked.len(), src.len());
        assert_eq!(masked.matches('\n').count(), src.matches('\n').count());
        assert!(!masked.contains('x') && !masked.contains('s'));
        assert!(masked.contains('b') && masked.contains('c'));
        let only_comments = mask(src, Mask::Comments);
        assert!(only_comments.contains("\"s//\""));
    }

    #[test]
    fn unterminated_block_runs_to_end() {
        let regions = scan_regions("a /* never closed");
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].span, 2..17);
    }

    #[test]
    fn comment_chars_include_delimiters() {
        assert_eq!(comment_chars("//ab"), 4);
        assert_eq!(comment_chars("x /*é*/"), 5);
        assert_eq!(comment_chars("no comments"), 0);
    }
}
