//! Byte-pair-encoding subword tokenizer.
//!
//! Merges are learned on a word-frequency table with an explicit end-of-word
//! marker `</w>`; encoding applies them in learned order and emits `@@`
//! continuation markers on non-final subwords. Unknown-token mapping is not
//! done here: it happens only at vocabulary lookup.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// End-of-word marker used during merge learning.
pub const END_OF_WORD: &str = "</w>";
/// Continuation marker carried by non-final subwords of an encoded word.
pub const CONTINUATION: &str = "@@";

/// Reserved vocabulary slots.
pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Ordered list of learned merges.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }
}

/// Learn up to `n_merges` merges from whitespace-tokenized sentences.
///
/// Each step merges the most frequent adjacent symbol pair; ties break
/// lexicographically on (left, right). Learning stops early once no pair
/// occurs at least twice.
pub fn learn_bpe<S: AsRef<str>>(corpus: &[S], n_merges: usize) -> MergeTable {
    // Word frequency table; BTreeMap keeps every scan order deterministic.
    let mut word_freq: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for sentence in corpus {
        for word in sentence.as_ref().split_whitespace() {
            let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
            symbols.push(END_OF_WORD.to_string());
            *word_freq.entry(symbols).or_insert(0) += 1;
        }
    }

    let mut merges = Vec::new();
    for _ in 0..n_merges {
        let mut pair_counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (symbols, freq) in &word_freq {
            for pair in symbols.windows(2) {
                *pair_counts
                    .entry((pair[0].as_str(), pair[1].as_str()))
                    .or_insert(0) += freq;
            }
        }
        // Highest count wins; BTreeMap order makes the lexicographically
        // smallest pair the survivor among equals.
        let best = pair_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(&(l, r), &count)| (l.to_string(), r.to_string(), count));
        let (left, right, count) = match best {
            Some(b) => b,
            None => break,
        };
        if count < 2 {
            break;
        }

        let mut next: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for (symbols, freq) in &word_freq {
            let merged = merge_symbols(symbols, &left, &right);
            *next.entry(merged).or_insert(0) += freq;
        }
        word_freq = next;
        merges.push((left, right));
    }
    MergeTable { merges }
}

/// Replace adjacent (left, right) by their concatenation, left to right.
fn merge_symbols(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Encode one whitespace-tokenized sentence into subword tokens.
///
/// Unknown characters pass through as singleton symbols. The end-of-word
/// marker is consumed; non-final subwords carry the `@@` marker.
pub fn encode<S: AsRef<str>>(sentence: S, merges: &MergeTable) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.as_ref().split_whitespace() {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        symbols.push(END_OF_WORD.to_string());
        for (left, right) in &merges.merges {
            if symbols.len() < 2 {
                break;
            }
            symbols = merge_symbols(&symbols, left, right);
        }
        // Strip the marker: either a bare trailing symbol or a suffix of the
        // last merged symbol.
        if symbols.last().map(String::as_str) == Some(END_OF_WORD) {
            symbols.pop();
        } else if let Some(last) = symbols.last_mut() {
            if let Some(stripped) = last.strip_suffix(END_OF_WORD) {
                *last = stripped.to_string();
            }
        }
        let n = symbols.len();
        for (i, s) in symbols.into_iter().enumerate() {
            if i + 1 < n {
                out.push(format!("{s}{CONTINUATION}"));
            } else {
                out.push(s);
            }
        }
    }
    out
}

/// Invert `encode`: join `@@`-marked subwords, separate words by spaces.
pub fn decode<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue = false;
    for tok in tokens {
        let tok = tok.as_ref();
        if !glue && !out.is_empty() {
            out.push(' ');
        }
        match tok.strip_suffix(CONTINUATION) {
            Some(stem) => {
                out.push_str(stem);
                glue = true;
            }
            None => {
                out.push_str(tok);
                glue = false;
            }
        }
    }
    out
}

/// Token-to-id table. Ids 0..3 are the specials PAD, BOS, EOS, UNK; learned
/// tokens follow in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>, // index = id
    by_token: BTreeMap<String, u32>,
}

impl Vocab {
    /// Build from encoded sentences: distinct tokens, sorted, after specials.
    pub fn build<S: AsRef<str>>(encoded_corpus: &[Vec<S>]) -> Vocab {
        let mut distinct: BTreeMap<&str, ()> = BTreeMap::new();
        for sentence in encoded_corpus {
            for tok in sentence {
                distinct.insert(tok.as_ref(), ());
            }
        }
        Vocab::from_sorted_tokens(distinct.keys().map(|s| s.to_string()).collect())
    }

    fn from_sorted_tokens(tokens: Vec<String>) -> Vocab {
        let mut all = vec![
            PAD_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        all.extend(tokens);
        let by_token = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokens: all,
            by_token,
        }
    }

    /// Total size including the four specials.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Size excluding the specials.
    pub fn size_without_specials(&self) -> usize {
        self.tokens.len() - NUM_SPECIALS as usize
    }

    /// Token to id; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.by_token.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id to token string.
    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::Validation(format!("token id {id} out of vocabulary")))
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens_of(&self, ids: &[u32]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| self.token(id).map(str::to_string))
            .collect()
    }
}

// ---- file formats ----------------------------------------------------------

const MERGE_HEADER_TAG: &str = "#bpe-v1";

/// Serialize a merge table: header line `#bpe-v1 <n>`, then one `left right`
/// pair per line.
pub fn merges_to_string(merges: &MergeTable) -> String {
    let mut out = format!("{MERGE_HEADER_TAG} {}\n", merges.len());
    for (l, r) in &merges.merges {
        let _ = writeln!(out, "{l} {r}");
    }
    out
}

pub fn merges_from_string(text: &str) -> Result<MergeTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Validation("empty merge file".to_string()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MERGE_HEADER_TAG) {
        return Err(Error::Validation(format!(
            "bad merge file header {header:?}, expected {MERGE_HEADER_TAG:?}"
        )));
    }
    let declared: usize = parts
        .next()
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Validation("merge header missing count".to_string()))?;
    let mut merges = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                merges.push((l.to_string(), r.to_string()));
            }
            _ => {
                return Err(Error::Validation(format!(
                    "merge file line {}: expected \"left right\", got {line:?}",
                    i + 2
                )))
            }
        }
    }
    if merges.len() != declared {
        return Err(Error::Validation(format!(
            "merge file declares {declared} merges but contains {}",
            merges.len()
        )));
    }
    Ok(MergeTable { merges })
}

pub fn save_merges(merges: &MergeTable, path: &Path) -> Result<()> {
    std::fs::write(path, merges_to_string(merges))?;
    Ok(())
}

pub fn load_merges(path: &Path) -> Result<MergeTable> {
    let text = std::fs::read_to_string(path)?;
    merges_from_string(&text)
}

/// Vocab file: one learned token per line; ids follow line order after the
/// four implicit specials.
pub fn vocab_to_string(vocab: &Vocab) -> String {
    let mut out = String::new();
    for tok in &vocab.tokens[NUM_SPECIALS as usize..] {
        let _ = writeln!(out, "{tok}");
    }
    out
}

pub fn vocab_from_string(text: &str) -> Result<Vocab> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tok = line.trim_end();
        if tok.is_empty() {
            return Err(Error::Validation(format!(
                "vocab file line {}: empty token",
                i + 1
            )));
        }
        tokens.push(tok.to_string());
    }
    Ok(Vocab::from_sorted_tokens(tokens))
}

pub fn save_vocab(vocab: &Vocab, path: &Path) -> Result<()> {
    std::fs::write(path, vocab_to_string(vocab))?;
    Ok(())
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    let text = std::fs::read_to_string(path)?;
    vocab_from_string(&text)
}
