//! Subword tokenizers for URLs and fixed-length model inputs.

mod bpe;
pub mod byte_level;
mod vocab;
mod wordpiece;

pub use bpe::{train_bpe, train_bpe_with};
pub use vocab::{
    is_special, Special, VocabKind, Vocabulary, CLS_ID, MASK_ID, PAD_ID, SEP_ID, UNK_ID,
};
pub use wordpiece::{is_continuation, load_wordpiece_vocab, parse_wordpiece_vocab, CONTINUATION};

use crate::{Error, Result};

/// A fixed-length model input: `[CLS] content [SEP] [PAD]...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// Original ids at masked positions; `None` everywhere else.
    pub mlm_labels: Option<Vec<Option<u32>>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of attended positions (the length of the mask's prefix of ones).
    pub fn attended_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }

    /// Copy cut to `len` positions. Only padding may be dropped.
    pub fn truncated(&self, len: usize) -> TokenSequence {
        debug_assert!(len >= self.attended_len());
        TokenSequence {
            ids: self.ids[..len].to_vec(),
            attention_mask: self.attention_mask[..len].to_vec(),
            mlm_labels: self.mlm_labels.as_ref().map(|l| l[..len].to_vec()),
        }
    }
}

/// Content token ids for `url`, without specials, truncation or padding.
pub fn tokenize_ids(v: &Vocabulary, url: &str) -> Vec<u32> {
    let text = if v.lowercase() {
        std::borrow::Cow::Owned(url.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(url)
    };
    match v.kind() {
        VocabKind::ByteBpe | VocabKind::CharBpe => bpe::apply_merges(v, bpe::base_symbols(v, &text)),
        VocabKind::Wordpiece => {
            let mut out = Vec::new();
            for word in wordpiece::basic_split(&text) {
                wordpiece::encode_word(v, &word, &mut out);
            }
            out
        }
    }
}

/// Content pieces for `url` as strings; handy for inspection.
pub fn tokenize(v: &Vocabulary, url: &str) -> Vec<String> {
    tokenize_ids(v, url)
        .into_iter()
        .map(|id| v.piece(id).unwrap_or_default().to_string())
        .collect()
}

/// Encodes `url` into exactly `max_len` positions, keeping the head of the
/// content when it does not fit.
pub fn encode(v: &Vocabulary, url: &str, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(Error::invalid(format!("max_len {max_len} leaves no room for content")));
    }
    let content = tokenize_ids(v, url);
    let keep = content.len().min(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend_from_slice(&content[..keep]);
    ids.push(SEP_ID);
    let attended = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut attention_mask = vec![1u8; attended];
    attention_mask.resize(max_len, 0);
    Ok(TokenSequence {
        ids,
        attention_mask,
        mlm_labels: None,
    })
}

pub fn encode_batch<'a>(
    v: &Vocabulary,
    urls: impl IntoIterator<Item = &'a str>,
    max_len: usize,
) -> Result<Vec<TokenSequence>> {
    urls.into_iter().map(|u| encode(v, u, max_len)).collect()
}

/// Concatenates pieces back into text. Specials are dropped and `##`
/// continuation markers stripped; byte-level pieces are mapped back to bytes.
pub fn decode(v: &Vocabulary, ids: &[u32]) -> Result<String> {
    let mut bytes = Vec::new();
    for &id in ids {
        let piece = v
            .piece(id)
            .ok_or_else(|| Error::invalid(format!("token id {id} out of range 0..{}", v.len())))?;
        if is_special(id) {
            continue;
        }
        match v.kind() {
            VocabKind::ByteBpe => bytes.extend(
                byte_level::decode_piece(piece).expect("validated byte-level piece"),
            ),
            VocabKind::CharBpe => bytes.extend_from_slice(piece.as_bytes()),
            VocabKind::Wordpiece => {
                let text = piece.strip_prefix(CONTINUATION).filter(|s| !s.is_empty()).unwrap_or(piece);
                bytes.extend_from_slice(text.as_bytes());
            }
        }
    }
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}
