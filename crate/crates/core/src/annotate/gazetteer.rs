use std::collections::HashMap;
use std::path::Path;

use super::words::split_words;
use super::EntityType;
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/gazetteer.tsv");

/// Case-insensitive phrase table keyed by word sequence.
///
/// A phrase whose stored form starts with an uppercase letter only matches
/// text that does too, so "Windows" does not tag "the windows".
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    phrases: HashMap<Vec<String>, (EntityType, bool)>,
    max_len: usize,
}

impl Gazetteer {
    pub fn builtin() -> Self {
        Self::from_text(BUILTIN).expect("bundled gazetteer parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Parses `phrase<TAB>TYPE` lines. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, ty) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "expected `phrase<TAB>TYPE`".into(),
            })?;
            let ty: EntityType = ty.trim().parse().map_err(|e: Error| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
            g.insert(phrase, ty);
        }
        Ok(g)
    }

    pub fn insert(&mut self, phrase: &str, ty: EntityType) {
        let key: Vec<String> = split_words(phrase).iter().map(|w| w.to_lowercase()).collect();
        if key.is_empty() {
            return;
        }
        let cased = phrase.trim_start().starts_with(|c: char| c.is_uppercase());
        self.max_len = self.max_len.max(key.len());
        self.phrases.insert(key, (ty, cased));
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Longest phrase that prefixes `lower` (the lowercased words of the
    /// text). `first` is the original spelling of `lower[0]`.
    pub fn longest_match(&self, lower: &[String], first: &str) -> Option<(usize, EntityType)> {
        let capital = !first.starts_with(|c: char| c.is_lowercase());
        let top = self.max_len.min(lower.len());
        (1..=top).rev().find_map(|len| match self.phrases.get(&lower[..len]) {
            Some(&(t, cased)) if capital || !cased => Some((len, t)),
            _ => None,
        })
    }
}
