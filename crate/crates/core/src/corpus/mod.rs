//! Labelled URL datasets: ingest, serialization, benign downsampling and
//! leakage-free splitting.

mod url;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};
use crate::{Error, Result};

pub use url::{parse_url, registrable_label, QueryPair, UrlParts};

pub const MAX_URL_BYTES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign = 0,
    Phish = 1,
}

impl Label {
    pub fn as_index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Phish),
            _ => None,
        }
    }
}

/// Where a record came from: the source corpus or one of the perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Homoglyph,
    Compound,
    Reorder,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::Homoglyph => "homoglyph",
            Origin::Compound => "compound",
            Origin::Reorder => "reorder",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "original" => Origin::Original,
            "homoglyph" => Origin::Homoglyph,
            "compound" => Origin::Compound,
            "reorder" => Origin::Reorder,
            other => return Err(Error::invalid(format!("unknown origin {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UrlRecord {
    pub url: String,
    pub label: Label,
    pub origin: Origin,
}

impl UrlRecord {
    pub fn new(url: impl Into<String>, label: Label) -> Result<Self> {
        let url = url.into();
        validate_url_text(&url)?;
        Ok(Self {
            url,
            label,
            origin: Origin::Original,
        })
    }

    pub fn is_phish(&self) -> bool {
        self.label == Label::Phish
    }
}

fn validate_url_text(url: &str) -> Result<()> {
    if url.trim().is_empty() {
        return Err(Error::invalid("url is empty"));
    }
    if url.len() > MAX_URL_BYTES {
        return Err(Error::invalid(format!(
            "url is {} bytes, limit is {MAX_URL_BYTES}",
            url.len()
        )));
    }
    if url.contains(['\t', '\n']) {
        return Err(Error::invalid("url contains a tab or newline"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<UrlRecord>,
    pub split: Option<SplitTag>,
}

/// On-disk layouts. `Tsv` is `url<TAB>label`; `OriginTsv` adds a third
/// `origin` column and is used for augmented datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Tsv,
    OriginTsv,
}

impl Dataset {
    pub fn new(records: Vec<UrlRecord>) -> Self {
        Self {
            records,
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn phish_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_phish()).count()
    }

    pub fn benign_count(&self) -> usize {
        self.len() - self.phish_count()
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.url.as_str())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn with_split(mut self, tag: SplitTag) -> Self {
        self.split = Some(tag);
        self
    }

    pub fn parse(text: &str, format: DatasetFormat) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.split_terminator('\n').enumerate() {
            records.push(parse_line(line, i + 1, format)?);
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self::new(records))
    }

    pub fn to_tsv(&self, format: DatasetFormat) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.url);
            out.push('\t');
            out.push(if r.is_phish() { '1' } else { '0' });
            if format == DatasetFormat::OriginTsv {
                out.push('\t');
                out.push_str(r.origin.as_str());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv(format)).map_err(|e| Error::io(path, e))
    }
}

fn parse_line(line: &str, line_no: usize, format: DatasetFormat) -> Result<UrlRecord> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    let expected = match format {
        DatasetFormat::Tsv => 2,
        DatasetFormat::OriginTsv => 3,
    };
    if fields.len() != expected {
        return Err(err(format!(
            "expected {expected} tab-separated fields, found {}",
            fields.len()
        )));
    }
    let label = match fields[1] {
        "0" => Label::Benign,
        "1" => Label::Phish,
        other => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
    };
    let mut record = UrlRecord::new(fields[0], label).map_err(|e| err(e.to_string()))?;
    if format == DatasetFormat::OriginTsv {
        record.origin = fields[2].parse().map_err(|e: Error| err(e.to_string()))?;
        if matches!(record.origin, Origin::Homoglyph | Origin::Compound) && !record.is_phish() {
            return Err(err(format!("{} records must be labelled 1", record.origin)));
        }
    }
    Ok(record)
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::parse(&text, format)
}

/// Keeps every phish record and at most `ratio` benign records per phish
/// record, drawn uniformly without replacement. Record order is preserved.
pub fn downsample_benign(d: &Dataset, ratio: usize, seed: u64) -> Result<Dataset> {
    if ratio == 0 {
        return Err(Error::invalid("downsampling ratio must be positive"));
    }
    let phish = d.phish_count();
    if phish == 0 {
        return Err(Error::invalid("dataset has no phish records to anchor the ratio"));
    }
    let benign_idx: Vec<usize> = (0..d.len()).filter(|&i| !d.records[i].is_phish()).collect();
    let cap = ratio.saturating_mul(phish);
    if benign_idx.len() <= cap {
        return Ok(d.clone());
    }
    let mut rng = rng::rng_for(seed, &[stream::DOWNSAMPLE]);
    let mut keep = vec![false; d.len()];
    for k in index::sample(&mut rng, benign_idx.len(), cap) {
        keep[benign_idx[k]] = true;
    }
    let records = d
        .records
        .iter()
        .zip(&keep)
        .filter(|(r, &k)| r.is_phish() || k)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(Dataset {
        records,
        split: d.split,
    })
}

/// Train/valid/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Self {
        Self { train, valid, test }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.train, self.valid, self.test];
        if all.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::invalid(format!("split fractions must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must sum to 1: {all:?}")));
        }
        Ok(())
    }
}

/// Random split that keeps every distinct URL string inside one split, so no
/// URL leaks between train and test even when the input has duplicates.
pub fn split_dataset(
    d: &Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    fractions.validate()?;
    let n = d.len();

    let mut group_of: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in d.records.iter().enumerate() {
        let g = *group_of.entry(r.url.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng::rng_for(seed, &[stream::SPLIT]));

    let train_target = (n as f64 * fractions.train).round() as usize;
    let valid_target = train_target + (n as f64 * fractions.valid).round() as usize;
    let mut assign = vec![SplitTag::Test; n];
    let mut filled = 0usize;
    for g in order {
        let tag = if filled < train_target {
            SplitTag::Train
        } else if filled < valid_target {
            SplitTag::Valid
        } else {
            SplitTag::Test
        };
        for &i in &groups[g] {
            assign[i] = tag;
        }
        filled += groups[g].len();
    }

    let pick = |tag| Dataset {
        records: d
            .records
            .iter()
            .zip(&assign)
            .filter(|(_, &t)| t == tag)
            .map(|(r, _)| r.clone())
            .collect(),
        split: Some(tag),
    };
    Ok((pick(SplitTag::Train), pick(SplitTag::Valid), pick(SplitTag::Test)))
}
