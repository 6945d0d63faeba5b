//! Byte-level byte-pair encoding.
//!
//! Text is first cut into pre-tokens: a run of whitespace followed by a run
//! of non-whitespace bytes (a trailing whitespace run forms its own
//! pre-token). The leading whitespace is the word-boundary marker, and merges
//! never cross pre-token boundaries, so encoding is stable under
//! concatenation at word boundaries.
//!
//! Ids 0..4 are reserved (`PAD`, `BOS`, `EOS`, `UNK`), ids 4..260 are the 256
//! single bytes, and every merge rule after that adds at most one token.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const BYTE_OFFSET: usize = RESERVED.len();

/// Smallest legal vocabulary: reserved ids plus the byte alphabet.
pub const BASE_VOCAB_SIZE: usize = BYTE_OFFSET + 256;
pub const DEFAULT_VOCAB_SIZE: usize = 2000;
pub const MAX_VOCAB_SIZE: usize = 50264;

/// Token id ↔ byte string bijection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, TokenId>,
}

impl Vocabulary {
    fn bytes_only() -> Self {
        let mut tokens: Vec<Vec<u8>> = RESERVED.iter().map(|s| s.as_bytes().to_vec()).collect();
        let mut index = HashMap::new();
        for b in 0..=255u8 {
            index.insert(vec![b], tokens.len() as TokenId);
            tokens.push(vec![b]);
        }
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, bytes: &[u8]) -> Option<TokenId> {
        self.index.get(bytes).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < BYTE_OFFSET
    }

    fn push_or_get(&mut self, bytes: Vec<u8>) -> TokenId {
        if let Some(&id) = self.index.get(&bytes) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.index.insert(bytes.clone(), id);
        self.tokens.push(bytes);
        id
    }

    /// `id<TAB>escaped-token` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            if id < BYTE_OFFSET {
                let _ = writeln!(out, "{id}\t{}", RESERVED[id]);
            } else {
                let _ = writeln!(out, "{id}\t{}", escape(tok));
            }
        }
        out
    }
}

/// Ordered merge rules, highest priority first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeTable {
    rules: Vec<(TokenId, TokenId)>,
}

impl MergeTable {
    pub fn rules(&self) -> &[(TokenId, TokenId)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// A trained BPE model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: Vocabulary,
    merges: MergeTable,
    // pair -> (rank, merged id)
    ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
}

/// Splits bytes into whitespace-led pre-tokens.
pub fn pre_tokenize(bytes: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        out.push(&bytes[start..i]);
        start = i;
    }
    out
}

impl Tokenizer {
    /// Learns merges from `corpus` until the vocabulary holds `target_size`
    /// tokens or no adjacent pair remains.
    pub fn train<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Self> {
        if target_size < BASE_VOCAB_SIZE {
            return invalid(format!(
                "target vocabulary size {target_size} is below the byte alphabet ({BASE_VOCAB_SIZE})"
            ));
        }
        if target_size > MAX_VOCAB_SIZE {
            return invalid(format!(
                "target vocabulary size {target_size} exceeds the maximum {MAX_VOCAB_SIZE}"
            ));
        }
        let mut counts: HashMap<&[u8], u64> = HashMap::new();
        for doc in corpus {
            for piece in pre_tokenize(doc.as_ref().as_bytes()) {
                *counts.entry(piece).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return invalid("cannot train a tokenizer on an empty corpus");
        }
        let mut words: Vec<(Vec<TokenId>, u64)> = counts
            .into_iter()
            .map(|(w, c)| (w.iter().map(|&b| b as TokenId + BYTE_OFFSET as TokenId).collect(), c))
            .collect();
        words.sort();

        let mut vocab = Vocabulary::bytes_only();
        let mut merges = MergeTable::default();
        while vocab.len() < target_size {
            let mut pairs: HashMap<(TokenId, TokenId), u64> = HashMap::new();
            for (syms, c) in &words {
                for w in syms.windows(2) {
                    *pairs.entry((w[0], w[1])).or_insert(0) += c;
                }
            }
            let best = pairs.into_iter().max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    // lexicographically smaller pair wins the tie
                    let ka = (vocab.token(pa.0), vocab.token(pa.1));
                    let kb = (vocab.token(pb.0), vocab.token(pb.1));
                    kb.cmp(&ka)
                })
            });
            let Some(((left, right), _)) = best else {
                break;
            };
            let mut bytes = vocab.token(left).expect("known").to_vec();
            bytes.extend_from_slice(vocab.token(right).expect("known"));
            let merged = vocab.push_or_get(bytes);
            merges.rules.push((left, right));
            for (syms, _) in &mut words {
                apply_merge(syms, left, right, merged);
            }
        }
        Ok(Self::from_parts(vocab, merges))
    }

    fn from_parts(vocab: Vocabulary, merges: MergeTable) -> Self {
        let mut ranks = HashMap::new();
        for (rank, &(l, r)) in merges.rules.iter().enumerate() {
            let mut bytes = vocab.token(l).expect("known").to_vec();
            bytes.extend_from_slice(vocab.token(r).expect("known"));
            let id = vocab.id(&bytes).expect("merged token is in the vocabulary");
            ranks.entry((l, r)).or_insert((rank, id));
        }
        Self {
            vocab,
            merges,
            ranks,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::new();
        for piece in pre_tokenize(bytes) {
            let mut syms: Vec<TokenId> = piece
                .iter()
                .map(|&b| b as TokenId + BYTE_OFFSET as TokenId)
                .collect();
            loop {
                let best = syms
                    .windows(2)
                    .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(r, id)| (r, w[0], w[1], id)))
                    .min();
                let Some((_, l, r, id)) = best else {
                    break;
                };
                apply_merge(&mut syms, l, r, id);
            }
            out.extend(syms);
        }
        out
    }

    /// Decodes to raw bytes; `PAD`, `BOS` and `EOS` are dropped.
    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                UNK => out.extend_from_slice("\u{fffd}".as_bytes()),
                _ => out.extend_from_slice(self.vocab.token(id).ok_or_else(|| {
                    Error::Invalid(format!(
                        "token id {id} out of range for vocabulary of {}",
                        self.vocab.len()
                    ))
                })?),
            }
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    /// `left<SPACE>right` lines in priority order.
    pub fn merges_text(&self) -> String {
        let mut out = String::new();
        for &(l, r) in &self.merges.rules {
            let tok = |id| escape(self.vocab.token(id).expect("known"));
            let _ = writeln!(out, "{} {}", tok(l), tok(r));
        }
        out
    }

    /// Hex SHA-256 over the vocabulary and merges files.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.vocab.to_text().as_bytes());
        h.update(self.merges_text().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn save(&self, vocab_path: &Path, merges_path: &Path) -> Result<()> {
        std::fs::write(vocab_path, self.vocab.to_text())?;
        std::fs::write(merges_path, self.merges_text())?;
        Ok(())
    }

    pub fn load(vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let vocab_text = std::fs::read_to_string(vocab_path)?;
        let merges_text = std::fs::read_to_string(merges_path)?;
        Self::from_text(&vocab_text, &merges_text)
    }

    /// Rebuilds the tokenizer by replaying the merges, then checks the
    /// vocabulary listing against the result.
    pub fn from_text(vocab_text: &str, merges_text: &str) -> Result<Self> {
        let mut vocab = Vocabulary::bytes_only();
        let mut merges = MergeTable::default();
        for (n, line) in merges_text.lines().enumerate() {
            let parse_err = |msg: String| Error::Parse { line: n + 1, msg };
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| parse_err("expected `left right`".into()))?;
            let l = unescape(l).map_err(parse_err)?;
            let r = unescape(r).map_err(parse_err)?;
            let (Some(li), Some(ri)) = (vocab.id(&l), vocab.id(&r)) else {
                return Err(parse_err("merge refers to an unknown token".into()));
            };
            let mut bytes = l;
            bytes.extend_from_slice(&r);
            vocab.push_or_get(bytes);
            merges.rules.push((li, ri));
        }
        let tok = Self::from_parts(vocab, merges);
        let listed: Vec<&str> = vocab_text.lines().collect();
        if listed.len() != tok.vocab.len() {
            return Err(Error::Format(format!(
                "vocabulary lists {} tokens but merges produce {}",
                listed.len(),
                tok.vocab.len()
            )));
        }
        let expected = tok.vocab.to_text();
        for (n, (a, b)) in listed.iter().zip(expected.lines()).enumerate() {
            if a != &b {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("vocabulary entry `{a}` does not match merges (`{b}`)"),
                });
            }
        }
        Ok(tok)
    }
}

fn apply_merge(syms: &mut Vec<TokenId>, left: TokenId, right: TokenId, merged: TokenId) {
    if syms.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    *syms = out;
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\\' => s.push_str("\\\\"),
            0x21..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\x{b:02x}");
            }
        }
    }
    s
}

fn unescape(s: &str) -> std::result::Result<Vec<u8>, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            match bytes.get(i + 1) {
                Some(b'\\') => {
                    out.push(b'\\');
                    i += 2;
                }
                Some(b'x') if i + 4 <= bytes.len() => {
                    let hex = std::str::from_utf8(&bytes[i + 2..i + 4]).map_err(|e| e.to_string())?;
                    out.push(u8::from_str_radix(hex, 16).map_err(|e| e.to_string())?);
                    i += 4;
                }
                _ => return Err(format!("bad escape in `{s}`")),
            }
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err("empty token".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn token_strings(tok: &Tokenizer, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| String::from_utf8(tok.vocab().token(id).unwrap().to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let tok = Tokenizer::train(&["aaab aaab"], BASE_VOCAB_SIZE + 1).unwrap();
        let a = tok.vocab().id(b"a").unwrap();
        assert_eq!(tok.merges().rules(), &[(a, a)]);
        assert_eq!(token_strings(&tok, &tok.encode("aaab")), ["aa", "a", "b"]);
    }

    #[test]
    fn base_size_means_no_merges() {
        let tok = Tokenizer::train(&["hello world"], BASE_VOCAB_SIZE).unwrap();
        assert!(tok.merges().is_empty());
        assert_eq!(tok.vocab_size(), BASE_VOCAB_SIZE);
        assert_eq!(tok.encode("hi").len(), 2);
    }

    #[test]
    fn ties_break_lexicographically() {
        // ("a","b") and ("c","d") both occur twice
        let tok = Tokenizer::train(&["cd", "ab", "cd", "ab"], BASE_VOCAB_SIZE + 1).unwrap();
        let rule = tok.merges().rules()[0];
        assert_eq!(tok.vocab().token(rule.0).unwrap(), b"a");
        assert_eq!(tok.vocab().token(rule.1).unwrap(), b"b");
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = ["the museum reopened", "the history center", "a museum in the park"];
        let a = Tokenizer::train(&corpus, 300).unwrap();
        let b = Tokenizer::train(&corpus, 300).unwrap();
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn empty_corpus_and_tiny_target_are_rejected() {
        assert!(Tokenizer::train::<&str>(&[], 300).is_err());
        assert!(Tokenizer::train(&[""], 300).is_err());
        assert!(Tokenizer::train(&["abc"], BASE_VOCAB_SIZE - 1).is_err());
    }

    #[test]
    fn encode_and_decode_edge_cases() {
        let tok = Tokenizer::train(&["Ms. Pedersen visited the museum"], 300).unwrap();
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.decode(&[]).unwrap(), "");
        let ids = tok.encode("Ms. Pedersen");
        assert_eq!(tok.decode(&ids).unwrap(), "Ms. Pedersen");
        let mut framed = vec![BOS];
        framed.extend(&ids);
        framed.extend([EOS, PAD, PAD]);
        assert_eq!(tok.decode(&framed).unwrap(), "Ms. Pedersen");
        assert!(tok.decode(&[tok.vocab_size() as TokenId]).is_err());
    }

    #[test]
    fn encode_is_stable_at_word_boundaries() {
        let tok = Tokenizer::train(&["the museum reopened on monday the museum"], 320).unwrap();
        let (a, b) = ("the museum", " reopened today");
        let mut joined = tok.encode(a);
        joined.extend(tok.encode(b));
        assert_eq!(tok.encode(&format!("{a}{b}")), joined);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let tok = Tokenizer::train(&["a \\ b\tc\nd ééé x\\y"], 280).unwrap();
        let (v, m) = (dir.path().join("vocab.tsv"), dir.path().join("merges.txt"));
        tok.save(&v, &m).unwrap();
        let loaded = Tokenizer::load(&v, &m).unwrap();
        assert_eq!(loaded, tok);
        assert_eq!(loaded.fingerprint(), tok.fingerprint());
    }

    #[test]
    fn tampered_vocabulary_is_rejected() {
        let tok = Tokenizer::train(&["aaab aaab"], BASE_VOCAB_SIZE + 1).unwrap();
        let vocab = tok.vocab().to_text().replace("\taa", "\tzz");
        assert!(Tokenizer::from_text(&vocab, &tok.merges_text()).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary_bytes(
            corpus in prop::collection::vec("[a-c ]{0,12}", 1..4),
            input in prop::collection::vec(any::<u8>(), 0..64),
        ) {
            let corpus: Vec<String> = corpus.into_iter().map(|s| s + "x").collect();
            let tok = Tokenizer::train(&corpus, 300).unwrap();
            prop_assert_eq!(tok.decode_bytes(&tok.encode_bytes(&input)).unwrap(), input);
        }

        #[test]
        fn larger_target_extends_merge_prefix(
            corpus in prop::collection::vec("[a-d ]{1,16}", 1..5),
            small in 0usize..20,
            extra in 0usize..20,
        ) {
            let a = Tokenizer::train(&corpus, BASE_VOCAB_SIZE + small).unwrap();
            let b = Tokenizer::train(&corpus, BASE_VOCAB_SIZE + small + extra).unwrap();
            prop_assert!(b.merges().len() >= a.merges().len());
            prop_assert_eq!(&b.merges().rules()[..a.merges().len()], a.merges().rules());
        }
    }
}
