use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::kb::normalize_surface;
use crate::error::{invalid, Error, Result};
use crate::math::{Bindings, Graph, Tensor};

pub const UNK_WORD: &str = "<unk>";
const MAGIC: &[u8; 4] = b"JGVE";
const ENTITY_PREFIX: &str = "ENTITY/";
const FC_ROW_PREFIX: &str = "<fc:";
const FC_BIAS: &str = "<fc:bias>";

/// Word and entity vectors in one space, plus the text projection.
///
/// Row 0 of the word table is the shared unknown-word vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub words: Vec<String>,
    pub entities: Vec<String>,
    pub word_vecs: Vec<f32>,
    pub entity_vecs: Vec<f32>,
    /// `[dim, dim]`, applied as `mean · fc_w + fc_b`.
    pub fc_w: Vec<f32>,
    pub fc_b: Vec<f32>,
    word_index: HashMap<String, usize>,
    entity_index: HashMap<String, usize>,
    surface_index: HashMap<String, usize>,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let den = (dot(a, a) * dot(b, b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        dot(a, b) / den
    }
}

impl EmbeddingTable {
    /// Builds a table from parts; `words` must start with [`UNK_WORD`].
    pub fn new(
        dim: usize,
        words: Vec<String>,
        entities: Vec<String>,
        word_vecs: Vec<f32>,
        entity_vecs: Vec<f32>,
        fc_w: Vec<f32>,
        fc_b: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("embedding dimension must be positive");
        }
        if words.first().map(String::as_str) != Some(UNK_WORD) {
            return invalid(format!("word table must start with {UNK_WORD}"));
        }
        if word_vecs.len() != words.len() * dim
            || entity_vecs.len() != entities.len() * dim
            || fc_w.len() != dim * dim
            || fc_b.len() != dim
        {
            return invalid("embedding table parts do not match the dimension");
        }
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let entity_index = entities.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let surface_index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (normalize_surface(e), i))
            .collect();
        Ok(Self {
            dim,
            words,
            entities,
            word_vecs,
            entity_vecs,
            fc_w,
            fc_b,
            word_index,
            entity_index,
            surface_index,
        })
    }

    /// Word id, lowercased lookup, `0` for unknown words.
    pub fn word_id(&self, word: &str) -> usize {
        self.word_index
            .get(word)
            .or_else(|| self.word_index.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    pub fn entity_id(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    /// Entity whose normalized id equals the normalized mention.
    pub fn resolve(&self, mention: &str) -> Option<usize> {
        self.surface_index.get(&normalize_surface(mention)).copied()
    }

    pub fn word_vector(&self, word: &str) -> &[f32] {
        let i = self.word_id(word);
        &self.word_vecs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entity_vector(&self, e: usize) -> &[f32] {
        &self.entity_vecs[e * self.dim..(e + 1) * self.dim]
    }

    pub fn mean_word_vector(&self, ids: &[usize]) -> Vec<f32> {
        let d = self.dim;
        let mut m = vec![0.0f32; d];
        for &i in ids {
            for (o, v) in m.iter_mut().zip(&self.word_vecs[i * d..(i + 1) * d]) {
                *o += v;
            }
        }
        let inv = 1.0 / ids.len() as f32;
        m.iter_mut().for_each(|x| *x *= inv);
        m
    }

    /// `mean · fc_w + fc_b`.
    pub fn project(&self, mean: &[f32]) -> Vec<f32> {
        let d = self.dim;
        let mut out = self.fc_b.clone();
        for (i, &m) in mean.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.fc_w[i * d..(i + 1) * d]) {
                *o += m * w;
            }
        }
        out
    }

    /// Projected mean of the word vectors of `text`.
    pub fn text_vector<S: AsRef<str>>(&self, text: &[S]) -> Result<Vec<f32>> {
        if text.is_empty() {
            return invalid("text vector of an empty text");
        }
        let ids: Vec<usize> = text.iter().map(|w| self.word_id(w.as_ref())).collect();
        Ok(self.project(&self.mean_word_vector(&ids)))
    }

    /// Softmax of `v_e · v_t` over `candidates`.
    pub fn nep_distribution(&self, v_t: &[f32], candidates: &[usize]) -> Vec<f64> {
        let logits: Vec<f64> = candidates
            .iter()
            .map(|&e| dot(self.entity_vector(e), v_t))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|x| x / z).collect()
    }

    /// Probability of entity `e` given `text`, normalised over `candidates`.
    pub fn nep_probability<S: AsRef<str>>(
        &self,
        e: usize,
        text: &[S],
        candidates: &[usize],
    ) -> Result<f64> {
        let Some(pos) = candidates.iter().position(|&c| c == e) else {
            return invalid(format!("entity {e} is not among the candidates"));
        };
        let v_t = self.text_vector(text)?;
        Ok(self.nep_distribution(&v_t, candidates)[pos])
    }

    /// The KB vector of a known mention, else the text vector of `context`.
    pub fn embed_entity<S: AsRef<str>>(&self, mention: &str, context: &[S]) -> Vec<f32> {
        match self.resolve(mention) {
            Some(e) => self.entity_vector(e).to_vec(),
            None if context.is_empty() => self.project(&self.mean_word_vector(&[0])),
            None => self.text_vector(context).expect("non-empty context"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    fn rows(&self) -> Vec<(String, &[f32])> {
        let d = self.dim;
        let mut rows: Vec<(String, &[f32])> = Vec::new();
        for (i, w) in self.words.iter().enumerate() {
            rows.push((w.clone(), &self.word_vecs[i * d..(i + 1) * d]));
        }
        for (i, e) in self.entities.iter().enumerate() {
            rows.push((format!("{ENTITY_PREFIX}{e}"), &self.entity_vecs[i * d..(i + 1) * d]));
        }
        for i in 0..d {
            rows.push((format!("{FC_ROW_PREFIX}{i}>"), &self.fc_w[i * d..(i + 1) * d]));
        }
        rows.push((FC_BIAS.to_string(), &self.fc_b));
        rows
    }

    /// `JGVE`, u32 dim, u32 row count, then per row a u32 byte length, the
    /// UTF-8 symbol and `dim` f32 values, all little-endian. Entities are
    /// prefixed `ENTITY/`; the projection is stored as rows `<fc:i>` and
    /// `<fc:bias>`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let rows = self.rows();
        let mut out = Vec::with_capacity(12 + rows.len() * (8 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
        for (sym, vals) in rows {
            out.extend_from_slice(&(sym.len() as u32).to_le_bytes());
            out.extend_from_slice(sym.as_bytes());
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing JGVE magic".into()));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let (mut words, mut word_vecs) = (Vec::new(), Vec::new());
        let (mut entities, mut entity_vecs) = (Vec::new(), Vec::new());
        let mut fc_rows: Vec<(usize, Vec<f32>)> = Vec::new();
        let mut fc_b = None;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let sym = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("symbol is not UTF-8".into()))?
                .to_string();
            let vals = r.f32s(dim)?;
            if sym == FC_BIAS {
                fc_b = Some(vals);
            } else if let Some(i) = sym
                .strip_prefix(FC_ROW_PREFIX)
                .and_then(|s| s.strip_suffix('>'))
                .and_then(|s| s.parse::<usize>().ok())
            {
                fc_rows.push((i, vals));
            } else if let Some(e) = sym.strip_prefix(ENTITY_PREFIX) {
                entities.push(e.to_string());
                entity_vecs.extend(vals);
            } else {
                words.push(sym);
                word_vecs.extend(vals);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after embedding rows".into()));
        }
        fc_rows.sort_by_key(|r| r.0);
        if fc_rows.len() != dim || fc_rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::Format("projection rows missing".into()));
        }
        let fc_w = fc_rows.into_iter().flat_map(|r| r.1).collect();
        let fc_b = fc_b.ok_or_else(|| Error::Format("projection bias missing".into()))?;
        Self::new(dim, words, entities, word_vecs, entity_vecs, fc_w, fc_b)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Cross-entropy of the first candidate under the entity predictor, as a
/// graph over parameters `words`, `entities`, `fc_w` and `fc_b`.
///
/// `word_ids` index rows of `words`; `candidates` index rows of `entities`
/// with the positive first.
pub fn nep_loss_graph(word_ids: &[usize], candidates: &[usize]) -> Graph<f64> {
    let mut g = Graph::new();
    let words = g.param("words");
    let entities = g.param("entities");
    let w = g.param("fc_w");
    let b = g.param("fc_b");
    let rows = g.embedding(words, word_ids);
    let mean = g.mean(rows, 0);
    let proj = g.matmul(mean, w);
    let v_t = g.add(proj, b);
    let cand = g.embedding(entities, candidates);
    let cand_t = g.transpose(cand);
    let logits = g.matmul(v_t, cand_t);
    let loss = g.cross_entropy(logits, &[0]);
    g.set_root(loss);
    g
}

/// Bindings for [`nep_loss_graph`] taken from a table.
pub fn nep_bindings(table: &EmbeddingTable) -> Bindings<f64> {
    let d = table.dim;
    let t = |shape: Vec<usize>, v: &[f32]| Tensor::<f32>::new(shape, v.to_vec()).unwrap().cast();
    let mut b = Bindings::new();
    b.insert("words", t(vec![table.words.len(), d], &table.word_vecs));
    b.insert("entities", t(vec![table.entities.len(), d], &table.entity_vecs));
    b.insert("fc_w", t(vec![d, d], &table.fc_w));
    b.insert("fc_b", t(vec![1, d], &table.fc_b));
    b
}
