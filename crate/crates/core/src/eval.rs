//! Scoring, ROC construction and the operating-point metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label};
use crate::encoder::{phish_scores, ModelParams};
use crate::tokenize::{encode, Vocabulary};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPrediction {
    pub url: String,
    pub label: Label,
    /// Probability of the phish class.
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Records scoring `>= threshold` are flagged. `None` for the origin point,
    /// which flags nothing.
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positive_count: usize,
    pub negative_count: usize,
}

/// Scores `ds` in eval mode, batch by batch, keeping record order.
pub fn score_dataset(
    p: &ModelParams<f32>,
    v: &Vocabulary,
    ds: &Dataset,
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<ScoredPrediction>> {
    if v.len() != p.config.vocab_size {
        return Err(Error::invalid(format!(
            "vocabulary has {} pieces but the model expects {}",
            v.len(),
            p.config.vocab_size
        )));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut out = Vec::with_capacity(ds.len());
    for chunk in ds.records.chunks(batch_size) {
        let seqs = chunk
            .iter()
            .map(|r| encode(v, &r.url, max_len))
            .collect::<Result<Vec<_>>>()?;
        let scores = phish_scores(p, &trim_batch(&seqs))?;
        for (r, s) in chunk.iter().zip(scores) {
            out.push(ScoredPrediction {
                url: r.url.clone(),
                label: r.label,
                score: s,
            });
        }
    }
    Ok(out)
}

/// Drops padding columns that no sequence in the batch attends to.
pub fn trim_batch(seqs: &[crate::tokenize::TokenSequence]) -> Vec<crate::tokenize::TokenSequence> {
    let len = seqs.iter().map(|s| s.attended_len()).max().unwrap_or(0).max(1);
    seqs.iter().map(|s| s.truncated(len.min(s.len()))).collect()
}

/// ROC curve over `(score, label)` pairs. Equal scores form one point.
pub fn roc_from_scores(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Phish).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(Error::invalid("no phish (positive) records"));
    }
    if neg == 0 {
        return Err(Error::invalid("no benign (negative) records"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Phish => tp += 1,
                Label::Benign => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
    }
    Ok(RocCurve {
        points,
        positive_count: pos,
        negative_count: neg,
    })
}

pub fn roc_curve(preds: &[ScoredPrediction]) -> Result<RocCurve> {
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    roc_from_scores(&scores, &labels)
}

/// Best TPR among operating points whose FPR does not exceed `target_fpr`.
pub fn tpr_at_fpr(curve: &RocCurve, target_fpr: f64) -> f64 {
    operating_point(curve, target_fpr).tpr
}

/// The point `tpr_at_fpr` reads from: highest TPR with FPR `<= target_fpr`,
/// earliest such point on ties (the strictest threshold).
pub fn operating_point(curve: &RocCurve, target_fpr: f64) -> RocPoint {
    let mut best = curve.points[0];
    for p in &curve.points {
        if p.fpr <= target_fpr && p.tpr > best.tpr {
            best = *p;
        }
    }
    best
}

/// Trapezoidal area under the curve.
pub fn auroc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// AUROC of raw scores, or `None` when only one class is present.
pub fn auroc_of(scores: &[f64], labels: &[Label]) -> Option<f64> {
    roc_from_scores(scores, labels).ok().map(|c| auroc(&c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Names of metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

/// Confusion counts and derived metrics when flagging `score >= threshold`.
pub fn threshold_metrics(preds: &[ScoredPrediction], threshold: f64) -> ThresholdMetrics {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for p in preds {
        match (p.score >= threshold, p.label) {
            (true, Label::Phish) => tp += 1,
            (true, Label::Benign) => fp += 1,
            (false, Label::Benign) => tn += 1,
            (false, Label::Phish) => fn_ += 1,
        }
    }
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: usize, den: usize| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio("accuracy", tp + tn, preds.len());
    let precision = ratio("precision", tp, tp + fp);
    let recall = ratio("recall", tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ThresholdMetrics {
        threshold,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    }
}

/// JSON report: headline numbers, metrics at 0.5 and at the FPR-matched
/// threshold, and the full curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub auroc: f64,
    pub target_fpr: f64,
    pub tpr_at_target_fpr: f64,
    pub at_default_threshold: ThresholdMetrics,
    pub at_target_fpr: ThresholdMetrics,
    pub roc: RocCurve,
}

pub fn evaluate(preds: &[ScoredPrediction], target_fpr: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::invalid(format!("target FPR {target_fpr} outside [0, 1]")));
    }
    let roc = roc_curve(preds)?;
    let op = operating_point(&roc, target_fpr);
    Ok(EvalReport {
        records: preds.len(),
        auroc: auroc(&roc),
        target_fpr,
        tpr_at_target_fpr: op.tpr,
        at_default_threshold: threshold_metrics(preds, 0.5),
        at_target_fpr: threshold_metrics(preds, op.threshold.unwrap_or(f64::INFINITY)),
        roc,
    })
}

pub fn predictions_to_tsv(preds: &[ScoredPrediction]) -> String {
    let mut out = String::new();
    for p in preds {
        let _ = writeln!(out, "{}\t{}\t{}", p.url, p.label.as_index(), p.score);
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<ScoredPrediction>> {
    let mut out = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let err = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let label = match f[1] {
            "0" => Label::Benign,
            "1" => Label::Phish,
            other => return Err(err(format!("label must be 0 or 1, found {other:?}"))),
        };
        let score: f64 = f[2].parse().map_err(|_| err(format!("bad score {:?}", f[2])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(err(format!("score {score} outside [0, 1]")));
        }
        out.push(ScoredPrediction {
            url: f[0].to_string(),
            label,
            score,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<ScoredPrediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text)
}

/// Step plot of the ROC curve with a log-scaled FPR axis from `min_fpr` to 1.
pub fn roc_svg(curve: &RocCurve, min_fpr: f64) -> String {
    let (w, h, m) = (480.0, 360.0, 48.0);
    let lo = min_fpr.clamp(1e-9, 0.5).log10();
    let x = |fpr: f64| m + (fpr.max(min_fpr).log10() - lo) / -lo * (w - 2.0 * m);
    let y = |tpr: f64| h - m - tpr * (h - 2.0 * m);
    let mut path = String::new();
    let mut prev: Option<(f64, f64)> = None;
    for p in &curve.points {
        let (px, py) = (x(p.fpr), y(p.tpr));
        match prev {
            None => {
                let _ = write!(path, "M{px:.2},{py:.2}");
            }
            Some((_, qy)) => {
                let _ = write!(path, " L{px:.2},{qy:.2} L{px:.2},{py:.2}");
            }
        }
        prev = Some((px, py));
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        svg,
        "<path d=\"M{m},{m} L{m},{b} L{r},{b}\" fill=\"none\" stroke=\"black\"/>",
        b = h - m,
        r = w - m
    );
    let mut e = lo.ceil() as i32;
    while e <= 0 {
        let gx = x(10f64.powi(e));
        let _ = writeln!(
            svg,
            "<line x1=\"{gx:.2}\" y1=\"{m}\" x2=\"{gx:.2}\" y2=\"{b}\" stroke=\"#ddd\"/>\n\
             <text x=\"{gx:.2}\" y=\"{t}\" font-size=\"11\" text-anchor=\"middle\">1e{e}</text>",
            b = h - m,
            t = h - m + 16.0
        );
        e += 1;
    }
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{tx}\" y=\"{ty:.2}\" font-size=\"11\" text-anchor=\"end\">{v}</text>",
            tx = m - 6.0,
            ty = y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{cx}\" y=\"{by}\" font-size=\"12\" text-anchor=\"middle\">false positive rate (log)</text>\n\
         <text x=\"14\" y=\"{cy}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy})\">true positive rate</text>",
        cx = w / 2.0,
        by = h - 10.0,
        cy = h / 2.0
    );
    let _ = writeln!(svg, "<path d=\"{path}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>");
    svg.push_str("</svg>\n");
    svg
}
