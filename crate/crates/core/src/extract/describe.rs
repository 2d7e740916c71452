//! One-sentence module descriptions, from a language model or from a
//! deterministic template.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::ChatClient;
use crate::model::{Direction, PortSpec, MAX_DESCRIPTION_WORDS};
use crate::scan::{mask, Mask};

/// Request text sent to the description model; `{verilog_code}` is replaced
/// by the module source.
pub const DESCRIPTION_PROMPT: &str = "Describe what the following Verilog code does in 40 words or less, ending with a period: \n\n{verilog_code}\n\n Focus on the module's core function.";

pub fn description_prompt(code: &str) -> String {
    DESCRIPTION_PROMPT.replace("{verilog_code}", code)
}

pub enum DescriptionClient {
    ExternalModel(ChatClient),
    TemplateFallback,
}

/// How a description was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Model,
    Template,
    /// The model was configured but unavailable.
    TemplateAfterFailure,
}

/// What the describer needs from a module under extraction.
#[derive(Debug, Clone, Copy)]
pub struct DescriptionDraft<'a> {
    pub module_name: &'a str,
    pub ports: &'a [PortSpec],
    pub verilog_code: &'a str,
}

fn edge_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:posedge|negedge|always_ff)\b").unwrap())
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("1 {word}")
    } else {
        format!("{n} {word}s")
    }
}

/// Deterministic offline description built from the name, port directions
/// and whether the code has edge-triggered processes.
pub fn template_description(draft: &DescriptionDraft<'_>) -> String {
    let count = |d: Direction| draft.ports.iter().filter(|p| p.direction == d).count();
    let (inputs, outputs, inouts) = (
        count(Direction::Input),
        count(Direction::Output),
        count(Direction::Inout),
    );
    let kind = if edge_re().is_match(&mask(draft.verilog_code, Mask::CommentsAndStrings)) {
        "sequential"
    } else {
        "combinational"
    };
    let ports = if draft.ports.is_empty() {
        "no ports".to_string()
    } else if inouts > 0 {
        format!(
            "{}, {} and {}",
            plural(inputs, "input"),
            plural(outputs, "output"),
            plural(inouts, "inout")
        )
    } else {
        format!(
            "{} and {}",
            plural(inputs, "input"),
            plural(outputs, "output")
        )
    };
    let text = format!(
        "Module {} with {ports} implementing {kind} logic.",
        draft.module_name
    );
    enforce_contract(&text).unwrap_or_else(|| format!("Module implementing {kind} logic."))
}

/// First sentence of `text`, or all of it when there is no terminator.
fn first_sentence(text: &str) -> &str {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1).map(|&(_, n)| n);
            if next.is_none_or(char::is_whitespace) {
                return &text[..pos + c.len_utf8()];
            }
        }
    }
    text
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Normalizes a reply to one sentence of at most forty words ending in a
/// period. Replies longer than the limit are hard-trimmed. `None` for empty
/// input.
pub fn enforce_contract(reply: &str) -> Option<String> {
    let collapsed = reply.split_whitespace().collect::<Vec<_>>().join(" ");
    let collapsed = collapsed
        .trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim();
    let sentence = first_sentence(collapsed);
    let words: Vec<&str> = sentence
        .split_whitespace()
        .take(MAX_DESCRIPTION_WORDS)
        .collect();
    let joined = words.join(" ");
    let body = joined.trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' && c != ']');
    (!body.is_empty()).then(|| format!("{body}."))
}

fn fits(reply: &str) -> bool {
    let s = first_sentence(reply.trim());
    !s.trim().is_empty() && word_count(s) <= MAX_DESCRIPTION_WORDS
}

/// Produces the description for a module. A model reply whose first sentence
/// exceeds the word limit is requested once more, then hard-trimmed. Any
/// client failure falls back to the template.
pub fn generate_description(
    draft: &DescriptionDraft<'_>,
    client: &DescriptionClient,
) -> (String, Provenance) {
    let DescriptionClient::ExternalModel(chat) = client else {
        return (template_description(draft), Provenance::Template);
    };
    let prompt = description_prompt(draft.verilog_code);
    let reply = match chat.complete(&prompt) {
        Ok(reply) if fits(&reply) => Ok(reply),
        Ok(long) => Ok(chat.complete(&prompt).unwrap_or(long)),
        Err(e) => Err(e),
    };
    match reply.ok().as_deref().and_then(enforce_contract) {
        Some(text) => (text, Provenance::Model),
        None => {
            log::warn!(
                "description model unavailable for `{}`; using template",
                draft.module_name
            );
            (
                template_description(draft),
                Provenance::TemplateAfterFailure,
            )
        }
    }
}
