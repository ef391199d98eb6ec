use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::byte_level;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    ByteBpe,
    CharBpe,
    Wordpiece,
}

impl VocabKind {
    pub fn is_bpe(self) -> bool {
        !matches!(self, VocabKind::Wordpiece)
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "byte_bpe" | "byte-bpe" => Ok(VocabKind::ByteBpe),
            "char_bpe" | "char-bpe" => Ok(VocabKind::CharBpe),
            "wordpiece" => Ok(VocabKind::Wordpiece),
            other => Err(Error::invalid(format!("unknown tokenizer kind {other:?}"))),
        }
    }
}

/// Reserved special tokens. They always occupy ids `0..5` in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Special {
    Pad,
    Unk,
    Cls,
    Sep,
    Mask,
}

impl Special {
    pub const ALL: [Special; 5] = [Special::Pad, Special::Unk, Special::Cls, Special::Sep, Special::Mask];
    pub const COUNT: u32 = 5;

    pub const fn id(self) -> u32 {
        self as u32
    }

    pub const fn token(self) -> &'static str {
        match self {
            Special::Pad => "[PAD]",
            Special::Unk => "[UNK]",
            Special::Cls => "[CLS]",
            Special::Sep => "[SEP]",
            Special::Mask => "[MASK]",
        }
    }
}

pub const PAD_ID: u32 = Special::Pad.id();
pub const UNK_ID: u32 = Special::Unk.id();
pub const CLS_ID: u32 = Special::Cls.id();
pub const SEP_ID: u32 = Special::Sep.id();
pub const MASK_ID: u32 = Special::Mask.id();

pub fn is_special(id: u32) -> bool {
    id < Special::COUNT
}

/// Token table shared by all tokenizer kinds.
///
/// Immutable after construction; encoders borrow it.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    kind: VocabKind,
    lowercase: bool,
    pieces: Vec<String>,
    ids: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    /// (left id, right id) -> (rank, merged id)
    merge_ranks: HashMap<(u32, u32), (u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    kind: VocabKind,
    #[serde(default)]
    lowercase: Option<bool>,
    pieces: Vec<String>,
    #[serde(default)]
    merges: Vec<(String, String)>,
}

impl Vocabulary {
    /// Builds and validates a vocabulary. `pieces` must start with the five
    /// special tokens; merges must reference existing pieces.
    pub fn new(
        kind: VocabKind,
        pieces: Vec<String>,
        merges: Vec<(String, String)>,
        lowercase: bool,
    ) -> Result<Self> {
        if pieces.len() < Special::COUNT as usize {
            return Err(Error::Format("vocabulary is smaller than the special-token block".into()));
        }
        for s in Special::ALL {
            if pieces[s.id() as usize] != s.token() {
                return Err(Error::Format(format!(
                    "id {} must hold {}, found {:?}",
                    s.id(),
                    s.token(),
                    pieces[s.id() as usize]
                )));
            }
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if ids.insert(p.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate piece {p:?}")));
            }
        }
        if kind == VocabKind::ByteBpe {
            for p in &pieces[Special::COUNT as usize..] {
                if byte_level::decode_piece(p).is_none() {
                    return Err(Error::Format(format!("{p:?} is not a byte-level piece")));
                }
            }
        }
        if !kind.is_bpe() && !merges.is_empty() {
            return Err(Error::Format("wordpiece vocabularies carry no merges".into()));
        }
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let lookup = |p: &str| {
                ids.get(p)
                    .copied()
                    .filter(|&id| !is_special(id))
                    .ok_or_else(|| Error::Format(format!("merge ({l:?}, {r:?}) references unknown piece {p:?}")))
            };
            let (li, ri) = (lookup(l)?, lookup(r)?);
            let out = lookup(&format!("{l}{r}"))?;
            merge_ranks.entry((li, ri)).or_insert((rank as u32, out));
        }
        Ok(Self {
            kind,
            lowercase,
            pieces,
            ids,
            merges,
            merge_ranks,
        })
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn set_lowercase(&mut self, on: bool) {
        self.lowercase = on;
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.ids.get(piece).copied()
    }

    pub(crate) fn merge_of(&self, left: u32, right: u32) -> Option<(u32, u32)> {
        self.merge_ranks.get(&(left, right)).copied()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            kind: self.kind,
            lowercase: Some(self.lowercase),
            pieces: self.pieces.clone(),
            merges: self.merges.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("vocabulary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        let lowercase = file.lowercase.unwrap_or(file.kind == VocabKind::Wordpiece);
        Self::new(file.kind, file.pieces, file.merges, lowercase)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Loads a JSON manifest, or a plain one-piece-per-line wordpiece file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            super::wordpiece::parse_wordpiece_vocab(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specials() -> Vec<String> {
        Special::ALL.iter().map(|s| s.token().to_string()).collect()
    }

    #[test]
    fn special_layout_enforced() {
        let mut pieces = specials();
        pieces.swap(0, 1);
        assert!(Vocabulary::new(VocabKind::CharBpe, pieces, vec![], false).is_err());
    }

    #[test]
    fn merge_output_must_exist() {
        let mut pieces = specials();
        pieces.extend(["a".to_string(), "b".to_string()]);
        let merges = vec![("a".to_string(), "b".to_string())];
        assert!(Vocabulary::new(VocabKind::CharBpe, pieces.clone(), merges.clone(), false).is_err());
        pieces.push("ab".into());
        let v = Vocabulary::new(VocabKind::CharBpe, pieces, merges, false).unwrap();
        assert_eq!(v.merge_of(5, 6), Some((0, 7)));
    }

    #[test]
    fn json_round_trip() {
        let mut pieces = specials();
        pieces.extend(["a", "b", "ab"].map(String::from));
        let v = Vocabulary::new(VocabKind::CharBpe, pieces, vec![("a".into(), "b".into())], false).unwrap();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back.pieces(), v.pieces());
        assert_eq!(back.merges(), v.merges());
        assert_eq!(back.kind(), VocabKind::CharBpe);
        assert!(!back.lowercase());
    }

    #[test]
    fn kind_parse() {
        assert_eq!("byte_bpe".parse::<VocabKind>().unwrap(), VocabKind::ByteBpe);
        assert!("unigram".parse::<VocabKind>().is_err());
    }
}
