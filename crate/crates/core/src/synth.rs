//! Synthetic labelled URL corpus for the desk pipeline.
//!
//! Benign URLs use plain ASCII hosts built from brand names or word pairs.
//! Phish URLs impersonate a brand in one of two ways: a single Cyrillic
//! look-alike substituted into the brand label, or the brand label split into
//! hyphen-joined words. Paths and queries come from the same distribution for
//! both classes, so the host carries the whole signal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{compound_split, HomoglyphTable, WordDictionary};
use crate::corpus::{Dataset, Label, UrlRecord};
use crate::rng::{self, stream};
use crate::{Error, Result};

/// Brand labels that the bundled dictionary splits into two or more words.
pub const BRANDS: [&str; 16] = [
    "bankofamerica",
    "paypal",
    "wellsfargo",
    "appleid",
    "chasebank",
    "citybank",
    "mailbox",
    "dropbox",
    "netbanking",
    "myaccount",
    "cloudstorage",
    "securelogin",
    "homedepot",
    "bestbuy",
    "creditunion",
    "onlineshop",
];

const WORDS: [&str; 24] = [
    "news", "daily", "photo", "music", "garden", "travel", "recipe", "city", "sport", "green", "tech", "home", "kids",
    "book", "film", "art", "auto", "pet", "food", "world", "local", "open", "star", "river",
];

const SUBDOMAINS: [&str; 8] = ["www", "m", "login", "secure", "mail", "support", "accounts", "my"];
const TLDS: [&str; 6] = ["com", "net", "org", "co.uk", "io", "info"];
const PATH_SEGMENTS: [&str; 16] = [
    "index.html", "signin", "account", "verify", "update", "home", "images", "static", "user", "profile", "wp-admin",
    "cart", "checkout", "help", "en-us", "login.php",
];
const QUERY_KEYS: [&str; 10] = ["id", "session", "ref", "lang", "token", "page", "q", "utm_source", "redirect", "cmd"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub phish_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 2000,
            phish_fraction: 0.25,
        }
    }
}

/// Cyrillic part of the bundled homoglyph table; the generator plants only
/// these, leaving the Latin look-alikes unseen by a model trained on clean data.
pub fn cyrillic_table() -> HomoglyphTable {
    HomoglyphTable::builtin().filtered(|c| ('\u{0400}'..='\u{052F}').contains(&c))
}

fn pick<'a>(r: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[r.random_range(0..xs.len())]
}

fn tail(r: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    for _ in 0..r.random_range(0..4) {
        out.push('/');
        out.push_str(pick(r, &PATH_SEGMENTS));
    }
    let pairs = r.random_range(0..4);
    for i in 0..pairs {
        out.push(if i == 0 { '?' } else { '&' });
        out.push_str(pick(r, &QUERY_KEYS));
        out.push('=');
        out.push_str(&format!("{:x}", r.random_range(0..1u32 << 20)));
    }
    out
}

fn host(r: &mut ChaCha8Rng, label: &str) -> String {
    let sub = if r.random_bool(0.6) {
        format!("{}.", pick(r, &SUBDOMAINS))
    } else {
        String::new()
    };
    format!("{sub}{label}.{}", pick(r, &TLDS))
}

fn homoglyph_label(r: &mut ChaCha8Rng, brand: &str, table: &HomoglyphTable) -> String {
    let mut chars: Vec<char> = brand.chars().collect();
    let eligible: Vec<usize> = (0..chars.len()).filter(|&i| table.get(chars[i]).is_some()).collect();
    let pos = eligible[r.random_range(0..eligible.len())];
    let glyphs = table.get(chars[pos]).expect("eligible");
    chars[pos] = glyphs[r.random_range(0..glyphs.len())];
    chars.into_iter().collect()
}

/// Generates `cfg.size` records, exactly `round(size * phish_fraction)` of
/// them phish, in a seed-determined order.
pub fn synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    if cfg.size == 0 || !(0.0..=1.0).contains(&cfg.phish_fraction) {
        return Err(Error::invalid("synthetic corpus needs a positive size and a phish fraction in [0, 1]"));
    }
    let table = cyrillic_table();
    let dict = WordDictionary::builtin();
    let splits: Vec<String> = BRANDS
        .iter()
        .map(|b| compound_split(b, &dict).map(|s| s.parts.join("-")))
        .collect::<Result<_>>()?;
    let mut r = rng::rng_for(seed, &[stream::SYNTH]);
    let phish_total = (cfg.size as f64 * cfg.phish_fraction).round() as usize;
    let mut phish_left = phish_total;
    let mut records = Vec::with_capacity(cfg.size);
    for i in 0..cfg.size {
        // Sequential draw without replacement fixes the class counts exactly.
        let phish = r.random_range(0..cfg.size - i) < phish_left;
        let b = r.random_range(0..BRANDS.len());
        let label = if phish {
            phish_left -= 1;
            if r.random_bool(0.5) {
                homoglyph_label(&mut r, BRANDS[b], &table)
            } else {
                splits[b].clone()
            }
        } else if r.random_bool(0.5) {
            BRANDS[b].to_string()
        } else {
            format!("{}{}", pick(&mut r, &WORDS), pick(&mut r, &WORDS))
        };
        let scheme = if r.random_bool(0.7) { "https" } else { "http" };
        let url = format!("{scheme}://{}{}", host(&mut r, &label), tail(&mut r));
        records.push(UrlRecord::new(url, if phish { Label::Phish } else { Label::Benign })?);
    }
    Ok(Dataset::new(records))
}
