//! Wordpiece import and greedy longest-match-first encoding.

use super::vocab::{Special, VocabKind, Vocabulary, UNK_ID};
use crate::{Error, Result};

pub const CONTINUATION: &str = "##";

/// Words longer than this many chars map straight to `[UNK]`.
const MAX_WORD_CHARS: usize = 100;

/// Parses a one-piece-per-line vocabulary. All five special tokens must be
/// present; they are moved to ids `0..5` and the remaining pieces keep their
/// line order.
pub fn parse_wordpiece_vocab(text: &str) -> Result<Vocabulary> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    if lines.iter().all(|l| l.is_empty()) {
        return Err(Error::Format("wordpiece vocabulary file is empty".into()));
    }
    for s in Special::ALL {
        if !lines.contains(&s.token()) {
            return Err(Error::Format(format!("wordpiece vocabulary is missing {}", s.token())));
        }
    }
    let mut pieces: Vec<String> = Special::ALL.iter().map(|s| s.token().to_string()).collect();
    pieces.extend(
        lines
            .iter()
            .filter(|l| !l.is_empty() && !Special::ALL.iter().any(|s| s.token() == **l))
            .map(|l| l.to_string()),
    );
    // Specials listed twice would slip past the bijection check above.
    for s in Special::ALL {
        if lines.iter().filter(|l| **l == s.token()).count() > 1 {
            return Err(Error::Format(format!("duplicate piece {:?}", s.token())));
        }
    }
    Vocabulary::new(VocabKind::Wordpiece, pieces, Vec::new(), true)
}

pub fn load_wordpiece_vocab(path: impl AsRef<std::path::Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_wordpiece_vocab(&text)
}

pub fn is_continuation(piece: &str) -> bool {
    piece.starts_with(CONTINUATION) && piece.len() > CONTINUATION.len()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '\u{A1}' | '\u{A7}' | '\u{AB}' | '\u{B6}' | '\u{B7}' | '\u{BB}' | '\u{BF}')
        || ('\u{2010}'..='\u{2027}').contains(&c)
        || ('\u{2030}'..='\u{205E}').contains(&c)
        || ('\u{3001}'..='\u{3003}').contains(&c)
}

/// Whitespace and punctuation pre-split: every punctuation char is its own word.
pub(crate) fn basic_split(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() || c.is_control() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else if is_punctuation(c) {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            words.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Greedy longest-match-first segmentation of one word. A word that cannot be
/// covered completely becomes a single `[UNK]`.
pub(crate) fn encode_word(v: &Vocabulary, word: &str, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > MAX_WORD_CHARS {
        out.push(UNK_ID);
        return;
    }
    let mark = out.len();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = v.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                out.push(id);
                start = end;
            }
            None => {
                out.truncate(mark);
                out.push(UNK_ID);
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(lines: &[&str]) -> Result<Vocabulary> {
        parse_wordpiece_vocab(&lines.join("\n"))
    }

    #[test]
    fn continuation_marked() {
        let v = vocab(&["[PAD]", "[UNK]", "bank", "##of", "[CLS]", "[SEP]", "[MASK]"]).unwrap();
        assert_eq!(v.kind(), VocabKind::Wordpiece);
        assert_eq!(v.id("bank"), Some(5));
        assert_eq!(v.id("##of"), Some(6));
        assert!(is_continuation("##of"));
        assert!(!is_continuation("bank"));
        assert!(v.lowercase());
    }

    #[test]
    fn duplicate_rejected() {
        let e = vocab(&["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "bank", "bank"]).unwrap_err();
        assert!(matches!(e, Error::Format(_)));
        let e = vocab(&["[PAD]", "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]).unwrap_err();
        assert!(matches!(e, Error::Format(_)));
    }

    #[test]
    fn empty_and_missing_specials_rejected() {
        assert!(matches!(parse_wordpiece_vocab(""), Err(Error::Format(_))));
        assert!(matches!(vocab(&["[PAD]", "[UNK]", "bank", "##of"]), Err(Error::Format(_))));
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "ban", "bank", "##of", "##o", "##f"]).unwrap();
        let mut out = Vec::new();
        encode_word(&v, "bankof", &mut out);
        assert_eq!(out, [v.id("bank").unwrap(), v.id("##of").unwrap()]);
        out.clear();
        encode_word(&v, "bankx", &mut out);
        assert_eq!(out, [UNK_ID]);
    }

    #[test]
    fn punctuation_split() {
        assert_eq!(basic_split("a.b/c-d e"), ["a", ".", "b", "/", "c", "-", "d", "e"]);
    }
}
