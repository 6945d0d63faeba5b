use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/lexicon.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Verb,
    Noun,
    Other,
}

impl std::str::FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "VERB" => Ok(PosTag::Verb),
            "NOUN" => Ok(PosTag::Noun),
            "OTHER" => Ok(PosTag::Other),
            _ => Err(Error::Invalid(format!(
                "unknown POS tag `{s}`; valid tags are VERB, NOUN, OTHER"
            ))),
        }
    }
}

const VERB_SUFFIXES: &[&str] = &["ized", "ised", "izing", "ising", "izes", "ated", "ating", "ified", "ifying"];
const NOUN_SUFFIXES: &[&str] = &[
    "tion", "tions", "sion", "sions", "ment", "ments", "ness", "ity", "ities", "ism", "ist",
    "ists", "ship", "hood", "ance", "ence", "ers", "ors",
];

/// Word-to-tag lexicon with suffix fallbacks.
#[derive(Clone, Debug, Default)]
pub struct PosLexicon {
    entries: HashMap<String, PosTag>,
}

impl PosLexicon {
    pub fn builtin() -> Self {
        Self::from_text(BUILTIN).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Parses `word<TAB>TAG` lines. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "expected `word<TAB>TAG`".into(),
            })?;
            let tag = tag.trim().parse().map_err(|e: Error| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
            entries.insert(word.trim().to_lowercase(), tag);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tag(&self, word: &str) -> PosTag {
        let lower = word.to_lowercase();
        if let Some(&t) = self.entries.get(&lower) {
            return t;
        }
        let first = word.chars().next();
        if !first.is_some_and(|c| c.is_lowercase()) || !word.chars().all(|c| c.is_alphabetic() || c == '-') {
            return PosTag::Other;
        }
        let n = word.chars().count();
        if n < 5 {
            return PosTag::Other;
        }
        if VERB_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            PosTag::Verb
        } else if NOUN_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            PosTag::Noun
        } else if word.ends_with("ed") || (n >= 6 && word.ends_with("ing")) {
            PosTag::Verb
        } else {
            PosTag::Other
        }
    }
}
