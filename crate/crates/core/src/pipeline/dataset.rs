use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::{split_words, Annotation};
use crate::error::{Error, Result};

/// Environment variable naming the directory relative dataset paths are
/// looked up in.
pub const DATA_DIR_ENV: &str = "JOGANIC_DATA_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split `{s}`; expected train, val or test"))),
        }
    }
}

/// One image/article/caption example.
///
/// Either `article` text or pre-split `article_words` must be given. Gold
/// annotations, when present, replace the built-in tagger for that text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_words: Option<Vec<String>>,
    pub caption: String,
    /// Key of the feature file `<features>/<key>.jgft`.
    pub image_feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_annotation: Option<Annotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_annotation: Option<Annotation>,
}

impl DatasetRecord {
    pub fn article_words(&self) -> Vec<String> {
        match (&self.article_words, &self.article) {
            (Some(w), _) => w.clone(),
            (None, Some(a)) => split_words(a),
            (None, None) => Vec::new(),
        }
    }

    pub fn article_text(&self) -> String {
        match (&self.article, &self.article_words) {
            (Some(a), _) => a.clone(),
            (None, Some(w)) => w.join(" "),
            (None, None) => String::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Parses dataset JSONL. Blank lines are skipped; errors cite the line.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut rec: DatasetRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if rec.id.is_empty() {
            return Err(err("empty `id`".into()));
        }
        if rec.article.is_none() && rec.article_words.is_none() {
            return Err(err(format!("record `{}` has neither `article` nor `article_words`", rec.id)));
        }
        if rec.image_feature.is_empty() {
            return Err(err(format!("record `{}` has an empty `image_feature`", rec.id)));
        }
        if !seen.insert((rec.split, rec.id.clone())) {
            return Err(err(format!("duplicate id `{}` in split {}", rec.id, rec.split)));
        }
        for ann in [&mut rec.caption_annotation, &mut rec.article_annotation].into_iter().flatten() {
            ann.validate().map_err(|m| err(format!("record `{}`: {m}", rec.id)))?;
        }
        out.push(rec);
    }
    Ok(out)
}

/// Resolves a relative path against `JOGANIC_DATA_DIR` when the variable is
/// set and the file exists there; otherwise returns the path unchanged.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let path = resolve_data_path(path);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Invalid(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_dataset(&text)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_json());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Default feature directory: `features/` beside the dataset file.
pub fn default_features_dir(dataset: &Path) -> PathBuf {
    resolve_data_path(dataset)
        .parent()
        .map(|p| p.join("features"))
        .unwrap_or_else(|| PathBuf::from("features"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"a","article":"Obama spoke.","caption":"Obama speaks.","image_feature":"a"}"#;

    #[test]
    fn parses_and_defaults() {
        let recs = parse_dataset(&format!("{GOOD}\n\n")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].split, Split::Train);
        assert_eq!(recs[0].article_words(), vec!["Obama", "spoke", "."]);
        assert_eq!(parse_dataset(&recs[0].to_json()).unwrap(), recs);
    }

    #[test]
    fn errors_cite_lines() {
        let missing = r#"{"id":"b","article":"x","image_feature":"b"}"#;
        let e = parse_dataset(&format!("{GOOD}\n{missing}")).unwrap_err().to_string();
        assert!(e.starts_with("line 2:") && e.contains("caption"), "{e}");
        let e = parse_dataset(&format!("{GOOD}\n{GOOD}")).unwrap_err().to_string();
        assert!(e.starts_with("line 2:") && e.contains("duplicate"), "{e}");
        let other_split = GOOD.replace("\"id\"", "\"split\":\"test\",\"id\"");
        assert_eq!(parse_dataset(&format!("{GOOD}\n{other_split}")).unwrap().len(), 2);
        let e = parse_dataset("{not json").unwrap_err().to_string();
        assert!(e.starts_with("line 1:"));
        let no_article = r#"{"id":"c","caption":"x","image_feature":"c"}"#;
        assert!(parse_dataset(no_article).is_err());
        let bad_span = r#"{"id":"d","article":"x","caption":"A B","image_feature":"d","caption_annotation":{"words":["A","B"],"entities":[{"start":1,"end":3,"type":"PERSON"}]}}"#;
        let e = parse_dataset(bad_span).unwrap_err().to_string();
        assert!(e.contains("`d`"), "{e}");
    }
}
