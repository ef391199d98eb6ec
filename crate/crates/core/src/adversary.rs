//! Homoglyph, compound-word and query-reordering perturbations, and the
//! coin-flip augmentation that mixes them into a dataset.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_url, Dataset, Label, Origin, UrlRecord};
use crate::rng::{self, derive, stream};
use crate::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../data/homoglyphs.json");
const DEFAULT_WORDS: &str = include_str!("../data/english-words.txt");

fn is_latin_or_cyrillic(c: char) -> bool {
    matches!(c as u32,
        0x00C0..=0x024F // Latin-1 letters, Latin Extended-A/B
        | 0x0250..=0x02AF // IPA extensions (Latin script)
        | 0x1E00..=0x1EFF // Latin Extended Additional
        | 0x0400..=0x052F // Cyrillic and Cyrillic Supplement
    )
}

/// Character to visually confusable Latin/Cyrillic characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomoglyphTable {
    map: BTreeMap<char, Vec<char>>,
}

impl HomoglyphTable {
    pub fn new(map: BTreeMap<char, Vec<char>>) -> Result<Self> {
        for (k, vs) in &map {
            if vs.is_empty() {
                return Err(Error::Format(format!("homoglyph entry {k:?} is empty")));
            }
            for v in vs {
                if v == k {
                    return Err(Error::Format(format!("{k:?} maps to itself")));
                }
                if !is_latin_or_cyrillic(*v) {
                    return Err(Error::Format(format!(
                        "{v:?} (U+{:04X}) for {k:?} is not a Latin or Cyrillic letter",
                        *v as u32
                    )));
                }
            }
        }
        Ok(Self { map })
    }

    /// Parses the JSON form: `{"a": ["а", "ɑ"], ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let single = |s: &str| -> Result<char> {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(Error::Format(format!("{s:?} is not a single character"))),
            }
        };
        let mut map = BTreeMap::new();
        for (k, vs) in raw {
            let key = single(&k)?;
            let vals = vs.iter().map(|v| single(v)).collect::<Result<Vec<_>>>()?;
            map.insert(key, vals);
        }
        Self::new(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The bundled table: lowercase ASCII letters to Cyrillic look-alikes and
    /// accented or hooked Latin letters.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled homoglyph table is valid")
    }

    /// Keeps only the replacements `keep` accepts; entries left empty are dropped.
    pub fn filtered(&self, keep: impl Fn(char) -> bool) -> Self {
        let map = self
            .map
            .iter()
            .filter_map(|(k, vs)| {
                let vs: Vec<char> = vs.iter().copied().filter(|&c| keep(c)).collect();
                (!vs.is_empty()).then_some((*k, vs))
            })
            .collect();
        Self { map }
    }

    pub fn get(&self, c: char) -> Option<&[char]> {
        self.map.get(&c).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Lowercase word list; lookups lowercase their input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordDictionary {
    words: HashSet<String>,
    longest: usize,
}

impl WordDictionary {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            if !w.chars().all(char::is_alphabetic) {
                return Err(Error::Format(format!("dictionary word {w:?} contains non-letters")));
            }
            set.insert(w.to_lowercase());
        }
        if set.is_empty() {
            return Err(Error::Format("dictionary is empty".into()));
        }
        let longest = set.iter().map(|w| w.chars().count()).max().unwrap_or(0);
        Ok(Self { words: set, longest })
    }

    /// One word per line.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled English list.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_WORDS).expect("bundled word list is valid")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitResult {
    pub splittable: bool,
    pub parts: Vec<String>,
}

/// Segments `domain` into dictionary words, preferring the fewest parts and,
/// among those, the longest first part (recursively).
pub fn compound_split(domain: &str, dict: &WordDictionary) -> Result<SplitResult> {
    if domain.is_empty() {
        return Err(Error::invalid("empty domain label"));
    }
    let chars: Vec<char> = domain.chars().collect();
    let lower: Vec<String> = chars.iter().map(|c| c.to_lowercase().collect()).collect();
    let n = chars.len();
    // best[i] = (parts, end of first part) for the suffix starting at i.
    let mut best: Vec<Option<(usize, usize)>> = vec![None; n + 1];
    best[n] = Some((0, n));
    for i in (0..n).rev() {
        let mut word = String::new();
        for j in i + 1..=(i + dict.longest).min(n) {
            word.push_str(&lower[j - 1]);
            let Some((rest, _)) = best[j] else { continue };
            if !dict.words.contains(&word) {
                continue;
            }
            let cand = rest + 1;
            // Scanning j upward, `<=` lets a longer first part win ties.
            if best[i].is_none_or(|(parts, _)| cand <= parts) {
                best[i] = Some((cand, j));
            }
        }
    }
    let Some(_) = best[0] else {
        return Ok(SplitResult {
            splittable: false,
            parts: Vec::new(),
        });
    };
    let mut parts = Vec::new();
    let mut i = 0;
    while i < n {
        let (_, j) = best[i].expect("reachable suffix");
        parts.push(chars[i..j].iter().collect());
        i = j;
    }
    Ok(SplitResult {
        splittable: true,
        parts,
    })
}

/// Replaces one host character with a confusable from `table`.
pub fn homoglyph_attack(url: &str, table: &HomoglyphTable, seed: u64) -> Result<UrlRecord> {
    let mut parts = parse_url(url)?;
    let chars: Vec<char> = parts.host.chars().collect();
    let eligible: Vec<usize> = (0..chars.len()).filter(|&i| table.get(chars[i]).is_some()).collect();
    if eligible.is_empty() {
        return Err(Error::NoHomoglyphAvailable(parts.host));
    }
    let mut r = rng::rng_for(seed, &[stream::ATTACK]);
    let pos = eligible[r.random_range(0..eligible.len())];
    let choices = table.get(chars[pos]).expect("eligible");
    let mut host = chars;
    host[pos] = choices[r.random_range(0..choices.len())];
    parts.host = host.into_iter().collect();
    let mut rec = UrlRecord::new(parts.to_url(), Label::Phish)?;
    rec.origin = Origin::Homoglyph;
    Ok(rec)
}

/// Hyphenates the registrable label at dictionary-word boundaries.
pub fn compound_attack(url: &str, dict: &WordDictionary) -> Result<UrlRecord> {
    let mut parts = parse_url(url)?;
    let range = parts.registrable_label();
    let label = &parts.host[range.clone()];
    if label.is_empty() {
        return Err(Error::NotSplittable(parts.host.clone()));
    }
    let split = compound_split(label, dict)?;
    if !split.splittable || split.parts.len() < 2 {
        return Err(Error::NotSplittable(label.to_string()));
    }
    parts.host = format!("{}{}{}", &parts.host[..range.start], split.parts.join("-"), &parts.host[range.end..]);
    let mut rec = UrlRecord::new(parts.to_url(), Label::Phish)?;
    rec.origin = Origin::Compound;
    Ok(rec)
}

/// Applies a uniformly random non-identity permutation to the query pairs.
pub fn reorder_params(url: &str, label: Label, seed: u64) -> Result<UrlRecord> {
    let mut parts = parse_url(url)?;
    let n = parts.pairs().len();
    if n < 2 {
        return Err(Error::NothingToPermute(url.to_string()));
    }
    let mut r = rng::rng_for(seed, &[stream::ATTACK]);
    let identity: Vec<usize> = (0..n).collect();
    let mut perm = identity.clone();
    while perm == identity {
        perm.shuffle(&mut r);
    }
    let old = parts.query.take().expect("query has pairs");
    parts.query = Some(perm.iter().map(|&i| old[i].clone()).collect());
    let mut rec = UrlRecord::new(parts.to_url(), label)?;
    rec.origin = Origin::Reorder;
    Ok(rec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    Homoglyph,
    Compound,
    Reorder,
}

impl Attack {
    pub const ALL: [Attack; 3] = [Attack::Homoglyph, Attack::Compound, Attack::Reorder];
}

/// Counts from one augmentation pass, indexed like [`Attack::ALL`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub input_records: usize,
    pub output_records: usize,
    pub selected: usize,
    pub chosen: [usize; 3],
    pub succeeded: [usize; 3],
}

/// For each record, with probability 1/2 picks one attack uniformly and, if it
/// applies, emits the original followed by the perturbed record; otherwise
/// emits the original alone. Each record's draws depend only on
/// `(seed, record index)`.
pub fn build_adversarial_dataset(
    ds: &Dataset,
    table: &HomoglyphTable,
    dict: &WordDictionary,
    seed: u64,
) -> Result<(Dataset, AugmentReport)> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    let mut out = Vec::with_capacity(ds.len() * 3 / 2);
    let mut report = AugmentReport {
        input_records: ds.len(),
        ..Default::default()
    };
    for (i, rec) in ds.records.iter().enumerate() {
        out.push(rec.clone());
        let mut r = rng::rng_for(seed, &[stream::AUGMENT, i as u64]);
        if r.random::<f64>() >= 0.5 {
            continue;
        }
        report.selected += 1;
        let k = r.random_range(0..3);
        report.chosen[k] += 1;
        let attack_seed = derive(seed, &[stream::ATTACK, i as u64]);
        let result = match Attack::ALL[k] {
            Attack::Homoglyph => homoglyph_attack(&rec.url, table, attack_seed),
            Attack::Compound => compound_attack(&rec.url, dict),
            Attack::Reorder => reorder_params(&rec.url, rec.label, attack_seed),
        };
        match result {
            Ok(p) => {
                report.succeeded[k] += 1;
                out.push(p);
            }
            Err(e) => log::debug!("record {i}: {:?} attack skipped: {e}", Attack::ALL[k]),
        }
    }
    report.output_records = out.len();
    let mut d = Dataset::new(out);
    d.split = ds.split;
    Ok((d, report))
}
