//! BPE training and merge application.
//!
//! URLs are not pre-split on delimiters: each URL is a single symbol stream
//! and merges may span `.`, `/` and `=`.

use std::collections::{BTreeSet, HashMap};

use super::byte_level;
use super::vocab::{Special, VocabKind, Vocabulary, UNK_ID};
use crate::{Error, Result};

fn specials() -> Vec<String> {
    Special::ALL.iter().map(|s| s.token().to_string()).collect()
}

/// Base alphabet for a BPE kind: the 256 byte values, or the corpus's
/// characters in code-point order.
fn base_pieces(corpus: &[String], kind: VocabKind) -> Vec<String> {
    match kind {
        VocabKind::ByteBpe => (0..=255u8).map(|b| byte_level::byte_to_char(b).to_string()).collect(),
        _ => {
            let chars: BTreeSet<char> = corpus.iter().flat_map(|s| s.chars()).collect();
            chars.into_iter().map(String::from).collect()
        }
    }
}

/// Splits text into base-symbol ids. Characters outside a char-level
/// alphabet become `[UNK]`.
pub(crate) fn base_symbols(v: &Vocabulary, text: &str) -> Vec<u32> {
    match v.kind() {
        VocabKind::ByteBpe => text
            .bytes()
            .map(|b| {
                let mut buf = [0u8; 4];
                v.id(byte_level::byte_to_char(b).encode_utf8(&mut buf))
                    .expect("byte vocabularies hold all 256 bytes")
            })
            .collect(),
        _ => text
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                v.id(c.encode_utf8(&mut buf)).unwrap_or(UNK_ID)
            })
            .collect(),
    }
}

/// Applies learned merges: repeatedly merge every occurrence of the
/// lowest-ranked adjacent pair until no learned pair remains.
pub(crate) fn apply_merges(v: &Vocabulary, mut symbols: Vec<u32>) -> Vec<u32> {
    loop {
        let best = symbols
            .windows(2)
            .filter_map(|w| v.merge_of(w[0], w[1]).map(|(rank, out)| (rank, w[0], w[1], out)))
            .min();
        let Some((_, left, right, out)) = best else {
            return symbols;
        };
        let mut merged = Vec::with_capacity(symbols.len());
        let mut i = 0;
        while i < symbols.len() {
            if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                merged.push(out);
                i += 2;
            } else {
                merged.push(symbols[i]);
                i += 1;
            }
        }
        symbols = merged;
    }
}

type Pair = (u32, u32);

struct Trainer {
    words: Vec<(Vec<u32>, i64)>,
    counts: HashMap<Pair, i64>,
    locations: HashMap<Pair, BTreeSet<usize>>,
}

impl Trainer {
    fn add_word_pairs(&mut self, w: usize, sign: i64) {
        let (symbols, freq) = &self.words[w];
        for pair in symbols.windows(2).map(|p| (p[0], p[1])) {
            *self.counts.entry(pair).or_insert(0) += sign * freq;
            if sign > 0 {
                self.locations.entry(pair).or_default().insert(w);
            }
        }
    }

    fn merge(&mut self, pair: Pair, out: u32) {
        let Some(words) = self.locations.remove(&pair) else {
            return;
        };
        for w in words {
            self.add_word_pairs(w, -1);
            let symbols = &mut self.words[w].0;
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    merged.push(out);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = merged;
            self.add_word_pairs(w, 1);
        }
        self.counts.remove(&pair);
        self.counts.retain(|_, c| *c > 0);
    }
}

/// Learns a BPE vocabulary of at most `vocab_size` pieces.
///
/// Greedy: the most frequent adjacent pair is merged until the vocabulary is
/// full or no pair occurs at least twice. Equal counts go to the
/// lexicographically smallest `(left, right)` pair, compared on the pieces'
/// surface text, so training is deterministic.
pub fn train_bpe(corpus: &[String], vocab_size: usize, kind: VocabKind) -> Result<Vocabulary> {
    train_bpe_with(corpus, vocab_size, kind, false)
}

pub fn train_bpe_with(
    corpus: &[String],
    vocab_size: usize,
    kind: VocabKind,
    lowercase: bool,
) -> Result<Vocabulary> {
    if !kind.is_bpe() {
        return Err(Error::invalid("train_bpe needs a BPE kind"));
    }
    if corpus.is_empty() {
        return Err(Error::invalid("BPE training corpus is empty"));
    }
    let corpus: Vec<String> = if lowercase {
        corpus.iter().map(|s| s.to_lowercase()).collect()
    } else {
        corpus.to_vec()
    };
    let base = base_pieces(&corpus, kind);
    let floor = base.len() + Special::COUNT as usize;
    if vocab_size <= floor {
        return Err(Error::invalid(format!(
            "vocab_size {vocab_size} must exceed {} base symbols + {} specials",
            base.len(),
            Special::COUNT
        )));
    }

    let mut pieces = specials();
    pieces.extend(base);
    let mut vocab = Vocabulary::new(kind, pieces.clone(), Vec::new(), lowercase)?;

    // Surface text used for tie-breaking: raw bytes for byte-level pieces.
    let surface = |p: &str| -> Vec<u8> {
        match kind {
            VocabKind::ByteBpe => byte_level::decode_piece(p).unwrap_or_default(),
            _ => p.as_bytes().to_vec(),
        }
    };
    let mut surfaces: Vec<Vec<u8>> = pieces.iter().map(|p| surface(p)).collect();

    let mut freq: HashMap<&str, i64> = HashMap::new();
    for s in &corpus {
        *freq.entry(s.as_str()).or_insert(0) += 1;
    }
    let mut unique: Vec<(&str, i64)> = freq.into_iter().collect();
    unique.sort_unstable();

    let mut trainer = Trainer {
        words: unique.iter().map(|(s, n)| (base_symbols(&vocab, s), *n)).collect(),
        counts: HashMap::new(),
        locations: HashMap::new(),
    };
    for w in 0..trainer.words.len() {
        trainer.add_word_pairs(w, 1);
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    let mut ids: HashMap<String, u32> = pieces.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
    while pieces.len() < vocab_size {
        let best = trainer
            .counts
            .iter()
            .filter(|(&(l, r), &c)| c >= 2 && l != UNK_ID && r != UNK_ID)
            .max_by(|(a, ca), (b, cb)| {
                ca.cmp(cb).then_with(|| {
                    (&surfaces[b.0 as usize], &surfaces[b.1 as usize])
                        .cmp(&(&surfaces[a.0 as usize], &surfaces[a.1 as usize]))
                })
            })
            .map(|(&p, _)| p);
        let Some((l, r)) = best else { break };
        let (ls, rs) = (pieces[l as usize].clone(), pieces[r as usize].clone());
        let merged = format!("{ls}{rs}");
        let out = match ids.get(&merged) {
            Some(&id) => id,
            None => {
                let id = pieces.len() as u32;
                ids.insert(merged.clone(), id);
                surfaces.push(surface(&merged));
                pieces.push(merged);
                id
            }
        };
        merges.push((ls, rs));
        trainer.merge((l, r), out);
    }

    vocab = Vocabulary::new(kind, pieces, merges, lowercase)?;
    Ok(vocab)
}
