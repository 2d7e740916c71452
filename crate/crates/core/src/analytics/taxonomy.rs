//! Thirteen-class functional taxonomy and the keyword classifier.

use std::sync::OnceLock;

use serde::Deserialize;

use crate::llm::ChatClient;
use crate::model::ModuleRecord;

pub const CLASS_COUNT: usize = 13;

const TAXONOMY_TOML: &str = include_str!("../../data/taxonomy.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct FunctionalClass {
    pub id: u8,
    pub name: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Taxonomy {
    #[serde(rename = "class")]
    pub classes: Vec<FunctionalClass>,
}

impl Taxonomy {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let t: Taxonomy = toml::from_str(text).map_err(|e| e.to_string())?;
        let ids: Vec<u8> = t.classes.iter().map(|c| c.id).collect();
        if ids != (1..=CLASS_COUNT as u8).collect::<Vec<_>>() {
            return Err(format!(
                "taxonomy must list classes 1..={CLASS_COUNT} in order"
            ));
        }
        Ok(t)
    }

    /// The bundled taxonomy.
    pub fn builtin() -> &'static Taxonomy {
        static T: OnceLock<Taxonomy> = OnceLock::new();
        T.get_or_init(|| Taxonomy::from_toml(TAXONOMY_TOML).expect("bundled taxonomy"))
    }

    pub fn name(&self, id: u8) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.name.as_str())
    }

    /// Rubric text listing every class with its vocabulary.
    pub fn rubric(&self) -> String {
        self.classes
            .iter()
            .map(|c| format!("{}. {}: {}", c.id, c.name, c.keywords.join(", ")))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Lowercase words, split at non-alphanumerics and lower→upper case changes.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in text.chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn word_eq(word: &str, key: &str, last: bool) -> bool {
    word == key
        || (last && (word.strip_suffix('s') == Some(key) || word.strip_suffix("es") == Some(key)))
}

fn contains_phrase(words: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty()
        && words.windows(phrase.len()).any(|w| {
            w.iter()
                .zip(phrase)
                .enumerate()
                .all(|(i, (a, b))| word_eq(a, b, i + 1 == phrase.len()))
        })
}

/// Keyword classifier. A keyword of `k` words scores `2k` when found in the
/// module name and `k` when found in the description; the highest total
/// wins, ties going to the lowest class id.
pub fn classify_by_keywords(record: &ModuleRecord, taxonomy: &Taxonomy) -> u8 {
    let name = words(&record.module_name);
    let desc = words(&record.description);
    let mut best = (0usize, 1u8);
    for class in &taxonomy.classes {
        let score: usize = class
            .keywords
            .iter()
            .map(|k| {
                let phrase = words(k);
                let weight = phrase.len();
                2 * weight * contains_phrase(&name, &phrase) as usize
                    + weight * contains_phrase(&desc, &phrase) as usize
            })
            .sum();
        if score > best.0 {
            best = (score, class.id);
        }
    }
    best.1
}

pub enum Classifier<'a> {
    ExternalModel(&'a ChatClient),
    Keywords,
}

pub fn classification_prompt(record: &ModuleRecord, taxonomy: &Taxonomy) -> String {
    format!(
        "Classify the following Verilog module into exactly one of these functional classes. Reply with the class number only.\n\n{}\n\n{}",
        taxonomy.rubric(),
        record.verilog_code
    )
}

fn parse_class(reply: &str) -> Option<u8> {
    reply
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .find_map(|s| s.parse::<u8>().ok())
        .filter(|n| (1..=CLASS_COUNT as u8).contains(n))
}

/// Class id in `1..=13`. A failing or unparseable model reply falls back to
/// the keyword classifier.
pub fn classify_module(
    record: &ModuleRecord,
    classifier: &Classifier<'_>,
    taxonomy: &Taxonomy,
) -> u8 {
    if let Classifier::ExternalModel(client) = classifier {
        match client.complete(&classification_prompt(record, taxonomy)) {
            Ok(reply) => {
                if let Some(id) = parse_class(&reply) {
                    return id;
                }
                log::warn!(
                    "unparseable class reply for `{}`: {reply:?}",
                    record.module_name
                );
            }
            Err(e) => log::warn!("classifier unavailable for `{}`: {e}", record.module_name),
        }
    }
    classify_by_keywords(record, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{testing, EndpointConfig};

    fn rec(name: &str, description: &str) -> ModuleRecord {
        ModuleRecord {
            module_name: name.into(),
            ports: vec![],
            comments: vec![],
            verilog_code: format!("module {name}; endmodule"),
            token_count: 3,
            description: description.into(),
        }
    }

    #[test]
    fn builtin_taxonomy_loads() {
        let t = Taxonomy::builtin();
        assert_eq!(t.classes.len(), CLASS_COUNT);
        assert_eq!(t.name(1), Some("Basic Digital Building Blocks"));
        assert!(Taxonomy::from_toml("[[class]]\nid = 2\nname = \"x\"\nkeywords = []\n").is_err());
    }

    #[test]
    fn word_splitting() {
        assert_eq!(words("aes_core"), ["aes", "core"]);
        assert_eq!(words("firFilter2"), ["fir", "filter2"]);
        assert_eq!(words("UART TX."), ["uart", "tx"]);
    }

    #[test]
    fn reference_classes() {
        let t = Taxonomy::builtin();
        let dec = rec(
            "dec",
            "Module dec with 2 inputs and 1 output implementing combinational logic.",
        );
        assert_eq!(classify_by_keywords(&dec, t), 1);
        assert_eq!(
            classify_by_keywords(&rec("aes_core", "AES-128 encryption round logic."), t),
            6
        );
        assert_eq!(
            classify_by_keywords(&rec("fir_filter", "A 16-tap FIR filter."), t),
            11
        );
        assert_eq!(
            classify_by_keywords(&rec("bus_ctrl", "Address decoder for peripherals."), t),
            7
        );
        assert_eq!(
            classify_by_keywords(&rec("uart_tx", "Serial transmitter."), t),
            5
        );
        assert_eq!(classify_by_keywords(&rec("blob", "Does something."), t), 1);
    }

    #[test]
    fn plural_tolerance_only_on_last_word() {
        assert!(contains_phrase(&words("two counters"), &words("counter")));
        assert!(contains_phrase(
            &words("many shift registers"),
            &words("shift register")
        ));
        assert!(!contains_phrase(
            &words("shifts register"),
            &words("shift register")
        ));
    }

    #[test]
    fn model_reply_and_fallback() {
        let t = Taxonomy::builtin();
        let server = testing::serve(vec![(200, "Class 4".into()), (200, "none".into())]);
        let client = ChatClient::new(EndpointConfig {
            url: server.url.clone(),
            api_key_env: None,
            min_interval_ms: 0,
            retries: 0,
            ..EndpointConfig::default()
        });
        let r = rec("fir_filter", "FIR.");
        assert_eq!(
            classify_module(&r, &Classifier::ExternalModel(&client), t),
            4
        );
        assert_eq!(
            classify_module(&r, &Classifier::ExternalModel(&client), t),
            11
        );
        let sent = &server.requests.lock().unwrap()[0];
        assert!(sent.contains("13. Error Handling"));
    }
}
