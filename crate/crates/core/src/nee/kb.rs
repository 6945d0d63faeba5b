use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Anchor {
    pub start: usize,
    pub end: usize,
    pub entity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub words: Vec<String>,
    pub anchors: Vec<Anchor>,
}

impl Document {
    /// Distinct anchored entities, ascending.
    pub fn entities(&self) -> BTreeSet<usize> {
        self.anchors.iter().map(|a| a.entity).collect()
    }
}

/// Entities, undirected links between them, and anchored documents.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    pub entities: Vec<String>,
    pub index: HashMap<String, usize>,
    pub edges: Vec<(usize, usize)>,
    pub docs: Vec<Document>,
}

#[derive(Deserialize)]
struct RawAnchor {
    start: usize,
    end: usize,
    entity: String,
}

#[derive(Deserialize)]
struct RawDoc {
    words: Vec<String>,
    #[serde(default)]
    anchors: Vec<RawAnchor>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Entity { entity: String },
    Edge { edge: [String; 2] },
    Doc { doc: RawDoc },
}

/// Lowercased, underscores as spaces, single spaces.
pub fn normalize_surface(s: &str) -> String {
    s.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl KnowledgeBase {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Reads JSONL records `{"entity": id}`, `{"edge": [a, b]}` and
    /// `{"doc": {"words": [...], "anchors": [{"start", "end", "entity"}]}}`.
    /// Entities may be declared after the records that use them.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kb = Self::default();
        let mut edges = Vec::new();
        let mut docs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: n + 1,
                msg: format!("not an entity, edge or doc record ({e})"),
            })?;
            match parsed {
                Line::Entity { entity } => {
                    kb.add_entity(&entity);
                }
                Line::Edge { edge } => edges.push((n + 1, edge)),
                Line::Doc { doc } => docs.push((n + 1, doc)),
            }
        }
        let lookup = |kb: &Self, line: usize, id: &str| {
            kb.index.get(id).copied().ok_or_else(|| Error::Parse {
                line,
                msg: format!("unknown entity `{id}`"),
            })
        };
        for (line, [a, b]) in edges {
            let e = (lookup(&kb, line, &a)?, lookup(&kb, line, &b)?);
            kb.edges.push(e);
        }
        for (line, raw) in docs {
            let mut anchors = Vec::new();
            for a in raw.anchors {
                if a.start >= a.end || a.end > raw.words.len() {
                    return Err(Error::Parse {
                        line,
                        msg: format!(
                            "anchor [{}, {}) out of range for {} words",
                            a.start,
                            a.end,
                            raw.words.len()
                        ),
                    });
                }
                anchors.push(Anchor {
                    start: a.start,
                    end: a.end,
                    entity: lookup(&kb, line, &a.entity)?,
                });
            }
            kb.docs.push(Document {
                words: raw.words,
                anchors,
            });
        }
        Ok(kb)
    }

    pub fn add_entity(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.entities.push(id.to_string());
        self.index.insert(id.to_string(), self.entities.len() - 1);
        self.entities.len() - 1
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            out.push_str(&serde_json::json!({ "entity": e }).to_string());
            out.push('\n');
        }
        for &(a, b) in &self.edges {
            let edge = [&self.entities[a], &self.entities[b]];
            out.push_str(&serde_json::json!({ "edge": edge }).to_string());
            out.push('\n');
        }
        for d in &self.docs {
            let anchors: Vec<_> = d
                .anchors
                .iter()
                .map(|a| {
                    serde_json::json!({"start": a.start, "end": a.end, "entity": self.entities[a.entity]})
                })
                .collect();
            let doc = serde_json::json!({"doc": {"words": d.words, "anchors": anchors}});
            out.push_str(&doc.to_string());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_record_kinds() {
        let text = r#"{"entity":"A"}
{"entity":"B_C"}
{"edge":["A","B_C"]}
{"doc":{"words":["x","b","c"],"anchors":[{"start":1,"end":3,"entity":"B_C"}]}}
"#;
        let kb = KnowledgeBase::parse(text).unwrap();
        assert_eq!(kb.entities, ["A", "B_C"]);
        assert_eq!(kb.edges, [(0, 1)]);
        assert_eq!(kb.docs[0].anchors[0].entity, 1);
        let again = KnowledgeBase::parse(&kb.to_jsonl()).unwrap();
        assert_eq!(again.docs, kb.docs);
        assert_eq!(normalize_surface("B_C"), "b c");
    }

    #[test]
    fn rejects_bad_references() {
        assert!(KnowledgeBase::parse(r#"{"edge":["A","B"]}"#).is_err());
        let bad = r#"{"entity":"A"}
{"doc":{"words":["x"],"anchors":[{"start":0,"end":2,"entity":"A"}]}}"#;
        let err = KnowledgeBase::parse(bad).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
