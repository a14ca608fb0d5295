//! Confusion matrix, macro-averaged precision/recall/F1 over all five
//! classes, and feature-vector export for external projection.

use std::io::{self, Write};

use thiserror::Error;

use crate::corpus::DdiLabel;
use crate::training::Prediction;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold and prediction lists differ in length: {golds} vs {predictions}")]
    LengthMismatch { golds: usize, predictions: usize },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Gold-by-predicted counts; rows are gold, columns predicted, both in
/// label order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; DdiLabel::COUNT]; DdiLabel::COUNT],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        ConfusionMatrix::default()
    }

    pub fn from_counts(counts: [[u64; DdiLabel::COUNT]; DdiLabel::COUNT]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn from_pairs(golds: &[DdiLabel], predictions: &[DdiLabel]) -> Result<Self, EvalError> {
        if golds.len() != predictions.len() {
            return Err(EvalError::LengthMismatch {
                golds: golds.len(),
                predictions: predictions.len(),
            });
        }
        let mut cm = ConfusionMatrix::new();
        for (&g, &p) in golds.iter().zip(predictions) {
            cm.add(g, p);
        }
        Ok(cm)
    }

    pub fn add(&mut self, gold: DdiLabel, predicted: DdiLabel) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn count(&self, gold: DdiLabel, predicted: DdiLabel) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn row_sum(&self, gold: DdiLabel) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn col_sum(&self, predicted: DdiLabel) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Tab-separated table with a header row and one row per gold class.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gold\\predicted");
        for label in DdiLabel::ALL {
            out.push('\t');
            out.push_str(label.as_str());
        }
        out.push('\n');
        for gold in DdiLabel::ALL {
            out.push_str(gold.as_str());
            for predicted in DdiLabel::ALL {
                out.push('\t');
                out.push_str(&self.count(gold, predicted).to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Per-class precision/recall plus the macro averages.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; DdiLabel::COUNT],
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
}

/// Macro metrics: per-class precision is the diagonal over the column sum,
/// recall the diagonal over the row sum, zero when the denominator is zero;
/// the macro averages are unweighted means over all five classes and
/// F1 = 2PR/(P+R) (zero when P+R is zero).
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut per_class = [ClassMetrics::default(); DdiLabel::COUNT];
    for label in DdiLabel::ALL {
        let diag = cm.count(label, label) as f64;
        let col = cm.col_sum(label) as f64;
        let row = cm.row_sum(label) as f64;
        per_class[label.index()] = ClassMetrics {
            precision: if col > 0.0 { diag / col } else { 0.0 },
            recall: if row > 0.0 { diag / row } else { 0.0 },
        };
    }
    let n = DdiLabel::COUNT as f64;
    let precision = per_class.iter().map(|c| c.precision).sum::<f64>() / n;
    let recall = per_class.iter().map(|c| c.recall).sum::<f64>() / n;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        per_class,
        precision,
        recall,
        f1,
    }
}

/// Micro-averaged detection+classification over the four positive classes,
/// provided for comparison with the shared-task convention. Not the
/// default reporting.
pub fn positive_micro(cm: &ConfusionMatrix) -> ClassMetricsF1 {
    let positives = &DdiLabel::ALL[1..];
    let tp: u64 = positives.iter().map(|&l| cm.count(l, l)).sum();
    let predicted: u64 = positives.iter().map(|&l| cm.col_sum(l)).sum();
    let gold: u64 = positives.iter().map(|&l| cm.row_sum(l)).sum();
    let precision = if predicted > 0 {
        tp as f64 / predicted as f64
    } else {
        0.0
    };
    let recall = if gold > 0 {
        tp as f64 / gold as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetricsF1 {
        precision,
        recall,
        f1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetricsF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Render the report as TSV: one row per class plus the macro row.
pub fn report_tsv(report: &MetricsReport) -> String {
    let mut out = String::from("class\tprecision\trecall\n");
    for label in DdiLabel::ALL {
        let c = report.per_class[label.index()];
        out.push_str(&format!("{}\t{:.4}\t{:.4}\n", label, c.precision, c.recall));
    }
    out.push_str(&format!(
        "macro\t{:.4}\t{:.4}\nf1\t{:.4}\n",
        report.precision, report.recall, report.f1
    ));
    out
}

/// Human-readable report table.
pub fn report_pretty(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>9} {:>9}\n",
        "class", "precision", "recall"
    ));
    for label in DdiLabel::ALL {
        let c = report.per_class[label.index()];
        out.push_str(&format!(
            "{:<12} {:>9.4} {:>9.4}\n",
            label.as_str(),
            c.precision,
            c.recall
        ));
    }
    out.push_str(&format!(
        "{:<12} {:>9.4} {:>9.4}\nmacro F1 = {:.4}\n",
        "macro", report.precision, report.recall, report.f1
    ));
    out
}

/// Which feature vector of a prediction to export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// The word-attention pooled vector.
    WordPooled,
    /// The sentence-attention blended vector.
    Blended,
}

/// TSV export of feature vectors for external 2-D projection. Values are
/// written with 17 significant digits so re-parsing reproduces the exact
/// doubles. Predictions rejected before encoding carry no features and are
/// skipped.
pub fn export_features<W: Write>(
    w: &mut W,
    predictions: &[Prediction],
    kind: FeatureKind,
) -> io::Result<()> {
    let dim = predictions
        .iter()
        .filter(|p| !p.truncated)
        .map(|p| feature_of(p, kind).len())
        .next()
        .unwrap_or(0);
    write!(w, "doc_id\tsent_id\tpair_id\tgold\tpredicted")?;
    for i in 0..dim {
        write!(w, "\tv{}", i + 1)?;
    }
    writeln!(w)?;
    for p in predictions {
        if p.truncated {
            continue;
        }
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            p.source.doc_id, p.source.sent_id, p.source.pair_id, p.gold, p.predicted
        )?;
        for v in feature_of(p, kind) {
            write!(w, "\t{:.16e}", v)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn feature_of(p: &Prediction, kind: FeatureKind) -> &[f64] {
    match kind {
        FeatureKind::WordPooled => &p.feature,
        FeatureKind::Blended => &p.blended,
    }
}
