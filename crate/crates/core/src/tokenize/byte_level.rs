//! Reversible byte <-> printable-char mapping used for byte-level BPE pieces.
//!
//! Printable Latin-1 bytes map to themselves; the remaining 68 byte values are
//! shifted to U+0100 and upward, the same table GPT-2 style byte-level
//! tokenizers use, so every piece is a valid, printable string.

use std::sync::OnceLock;

struct Tables {
    to_char: [char; 256],
    to_byte: std::collections::HashMap<char, u8>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let printable = |b: u32| (0x21..=0x7E).contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
        let mut to_char = ['\0'; 256];
        let mut shifted = 0u32;
        for b in 0..256u32 {
            to_char[b as usize] = if printable(b) {
                char::from_u32(b).unwrap()
            } else {
                shifted += 1;
                char::from_u32(255 + shifted).unwrap()
            };
        }
        let to_byte = to_char.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        Tables { to_char, to_byte }
    })
}

pub fn byte_to_char(b: u8) -> char {
    tables().to_char[b as usize]
}

pub fn char_to_byte(c: char) -> Option<u8> {
    tables().to_byte.get(&c).copied()
}

pub fn encode_bytes(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_to_char(b)).collect()
}

/// Maps a byte-level piece back to its raw bytes; `None` if a char is outside the table.
pub fn decode_piece(piece: &str) -> Option<Vec<u8>> {
    piece.chars().map(char_to_byte).collect()
}
