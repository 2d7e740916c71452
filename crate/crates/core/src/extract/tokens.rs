//! Token-count estimate used for context-window budgeting.
//!
//! The default rule splits on whitespace and on the statement terminator
//! `;`, which counts as a token of its own. `assign y = a;` is five tokens
//! (`assign`, `y`, `=`, `a`, `;`). The finer [`TokenRule::Punctuation`]
//! rule also splits at every character of [`PUNCTUATION_SEPARATORS`].
//! Both rules count each whitespace-delimited chunk independently, so
//! `tokens(a + " " + b) == tokens(a) + tokens(b)`.

use serde::{Deserialize, Serialize};

/// Separator set of the punctuation rule. Each occurrence is one token.
pub const PUNCTUATION_SEPARATORS: &[char] = &[
    '(', ')', '[', ']', '{', '}', ',', ';', ':', '.', '@', '#', '=', '+', '-', '*', '/', '<', '>',
    '!', '&', '|', '^', '~', '?', '\'', '"',
];

/// Separator set of the default rule.
pub const STATEMENT_SEPARATORS: &[char] = &[';'];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRule {
    #[default]
    Statement,
    Punctuation,
}

impl TokenRule {
    pub fn separators(self) -> &'static [char] {
        match self {
            TokenRule::Statement => STATEMENT_SEPARATORS,
            TokenRule::Punctuation => PUNCTUATION_SEPARATORS,
        }
    }

    pub fn parse(name: &str) -> Option<TokenRule> {
        match name {
            "statement" => Some(TokenRule::Statement),
            "punctuation" => Some(TokenRule::Punctuation),
            _ => None,
        }
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    estimate_tokens_with(text, TokenRule::default())
}

pub fn estimate_tokens_with(text: &str, rule: TokenRule) -> u64 {
    let seps = rule.separators();
    text.split_whitespace()
        .map(|chunk| {
            let mut count = 0u64;
            let mut in_word = false;
            for c in chunk.chars() {
                if seps.contains(&c) {
                    count += 1;
                    in_word = false;
                } else if !in_word {
                    count += 1;
                    in_word = true;
                }
            }
            count
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_simple_statement() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("  \n\t"), 0);
        assert_eq!(estimate_tokens("assign y = a;"), 5);
        assert_eq!(
            estimate_tokens_with("assign y = a;", TokenRule::Punctuation),
            5
        );
    }

    #[test]
    fn punctuation_rule_splits_every_separator() {
        // module, dec, (, input, [, 1, :, 0, ], I, ,
        assert_eq!(
            estimate_tokens_with("module dec (input [1:0] I,", TokenRule::Punctuation),
            11
        );
        // module, dec, (input, [1:0], I,
        assert_eq!(estimate_tokens("module dec (input [1:0] I,"), 5);
        assert_eq!(estimate_tokens("a;;b"), 4);
    }

    proptest! {
        #[test]
        fn concatenation_is_additive(a in "[ -~\n]{0,40}", b in "[ -~\n]{0,40}", punct in any::<bool>()) {
            let rule = if punct { TokenRule::Punctuation } else { TokenRule::Statement };
            let joined = format!("{a} {b}");
            prop_assert_eq!(
                estimate_tokens_with(&joined, rule),
                estimate_tokens_with(&a, rule) + estimate_tokens_with(&b, rule)
            );
        }
    }
}
