//! Rule-based named-entity and part-of-speech annotation.
//!
//! Entities come from a phrase gazetteer (greedy longest match, left to
//! right, case-insensitive) followed by a fixed set of numeric and temporal
//! patterns over the words the gazetteer left untouched; see [`rules`].
//! Part-of-speech tags are coarse (`VERB`, `NOUN`, `OTHER`) and resolve by
//! lexicon entry, then suffix rule, then `OTHER`.

mod gazetteer;
mod pos;
pub mod rules;
mod words;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gazetteer::Gazetteer;
pub use pos::{PosLexicon, PosTag};
pub use words::split_words;

use crate::error::{Error, Result};

/// The eighteen entity types, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EntityType {
    Person,
    Norp,
    Org,
    Date,
    Time,
    Fac,
    Gpe,
    Loc,
    Product,
    Event,
    Art,
    Law,
    Lan,
    Percent,
    Money,
    Quantity,
    Ordinal,
    Cardinal,
}

impl EntityType {
    pub const ALL: [EntityType; 18] = [
        EntityType::Person,
        EntityType::Norp,
        EntityType::Org,
        EntityType::Date,
        EntityType::Time,
        EntityType::Fac,
        EntityType::Gpe,
        EntityType::Loc,
        EntityType::Product,
        EntityType::Event,
        EntityType::Art,
        EntityType::Law,
        EntityType::Lan,
        EntityType::Percent,
        EntityType::Money,
        EntityType::Quantity,
        EntityType::Ordinal,
        EntityType::Cardinal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Norp => "NORP",
            EntityType::Org => "ORG",
            EntityType::Date => "DATE",
            EntityType::Time => "TIME",
            EntityType::Fac => "FAC",
            EntityType::Gpe => "GPE",
            EntityType::Loc => "LOC",
            EntityType::Product => "PRODUCT",
            EntityType::Event => "EVENT",
            EntityType::Art => "ART",
            EntityType::Law => "LAW",
            EntityType::Lan => "LAN",
            EntityType::Percent => "PERCENT",
            EntityType::Money => "MONEY",
            EntityType::Quantity => "QUANTITY",
            EntityType::Ordinal => "ORDINAL",
            EntityType::Cardinal => "CARDINAL",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = EntityType::ALL.iter().map(|t| t.as_str()).collect();
                Error::Invalid(format!(
                    "unknown entity type `{s}`; valid types are {}",
                    valid.join(", ")
                ))
            })
    }
}

impl From<EntityType> for String {
    fn from(t: EntityType) -> String {
        t.as_str().to_string()
    }
}

impl TryFrom<String> for EntityType {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Half-open word span `[start, end)` tagged with an entity type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    #[serde(default)]
    pub surface: String,
}

/// Words of one text with their entity spans and coarse tags.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub words: Vec<String>,
    #[serde(default)]
    pub entities: Vec<EntitySpan>,
    #[serde(default)]
    pub pos: Vec<PosTag>,
}

impl Annotation {
    /// Checks span ranges, overlap, and tag count; fills missing surfaces.
    pub fn validate(&mut self) -> std::result::Result<(), String> {
        let n = self.words.len();
        if !self.pos.is_empty() && self.pos.len() != n {
            return Err(format!("{} POS tags for {n} words", self.pos.len()));
        }
        let mut spans: Vec<&EntitySpan> = self.entities.iter().collect();
        spans.sort_by_key(|s| (s.start, s.end));
        for s in &spans {
            if s.start >= s.end || s.end > n {
                return Err(format!(
                    "span [{}, {}) out of range for {n} words",
                    s.start, s.end
                ));
            }
        }
        for w in spans.windows(2) {
            if w[1].start < w[0].end {
                return Err(format!(
                    "spans [{}, {}) and [{}, {}) overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                ));
            }
        }
        for s in &mut self.entities {
            if s.surface.is_empty() {
                s.surface = self.words[s.start..s.end].join(" ");
            }
        }
        Ok(())
    }
}

/// Greedy longest-match gazetteer tagging, then pattern rules on the rest.
pub fn tag_entities<S: AsRef<str>>(words: &[S], gazetteer: &Gazetteer) -> Vec<EntitySpan> {
    let lower: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
    let mut covered = vec![false; words.len()];
    let mut spans = Vec::new();
    let mut i = 0;
    while i < words.len() {
        match gazetteer.longest_match(&lower[i..], words[i].as_ref()) {
            Some((len, t)) => {
                spans.push(make_span(words, i, i + len, t));
                covered[i..i + len].iter_mut().for_each(|c| *c = true);
                i += len;
            }
            None => i += 1,
        }
    }
    let mut i = 0;
    while i < words.len() {
        if covered[i] {
            i += 1;
            continue;
        }
        let free = covered[i..].iter().take_while(|c| !**c).count();
        let window: Vec<&str> = words[i..i + free].iter().map(AsRef::as_ref).collect();
        match rules::match_at(&window) {
            Some((len, t)) => {
                spans.push(make_span(words, i, i + len, t));
                i += len;
            }
            None => i += 1,
        }
    }
    spans.sort_by_key(|s| s.start);
    spans
}

fn make_span<S: AsRef<str>>(words: &[S], start: usize, end: usize, t: EntityType) -> EntitySpan {
    let surface: Vec<&str> = words[start..end].iter().map(AsRef::as_ref).collect();
    EntitySpan {
        start,
        end,
        entity_type: t,
        surface: surface.join(" "),
    }
}

pub fn tag_pos<S: AsRef<str>>(words: &[S], lexicon: &PosLexicon) -> Vec<PosTag> {
    words.iter().map(|w| lexicon.tag(w.as_ref())).collect()
}

/// Built-in tagger bundle.
#[derive(Clone, Debug)]
pub struct Annotator {
    pub gazetteer: Gazetteer,
    pub lexicon: PosLexicon,
}

impl Default for Annotator {
    fn default() -> Self {
        Self {
            gazetteer: Gazetteer::builtin(),
            lexicon: PosLexicon::builtin(),
        }
    }
}

impl Annotator {
    pub fn new(gazetteer: Gazetteer, lexicon: PosLexicon) -> Self {
        Self { gazetteer, lexicon }
    }

    pub fn annotate(&self, text: &str) -> Annotation {
        let words = split_words(text);
        self.annotate_words(words)
    }

    pub fn annotate_words(&self, words: Vec<String>) -> Annotation {
        let entities = tag_entities(&words, &self.gazetteer);
        let pos = tag_pos(&words, &self.lexicon);
        Annotation {
            words,
            entities,
            pos,
        }
    }
}

/// Which text of a record an annotation belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatedField {
    #[default]
    Caption,
    Article,
}

/// One line of an external annotation file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    #[serde(default)]
    pub field: AnnotatedField,
    #[serde(flatten)]
    pub annotation: Annotation,
}

/// Parses externally produced annotations, one JSON object per line.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_annotations(&text)
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "missing `id`".into(),
            })?;
        let mut rec: AnnotationRecord = serde_json::from_value(value).map_err(|e| Error::Record {
            id: id.clone(),
            msg: e.to_string(),
        })?;
        rec.annotation
            .validate()
            .map_err(|msg| Error::Record { id, msg })?;
        out.push(rec);
    }
    Ok(out)
}
