//! Classification reports: confusion matrices, per-class precision/recall/F1,
//! overall accuracy, and text/JSON/CSV renderings.
//!
//! Zero-division convention: a precision or recall whose denominator is zero
//! is reported as 0 and the class entry carries a warning flag, so degenerate
//! predictors produce finite tables instead of NaNs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True-label occurrences of this class.
    pub support: u64,
    /// Set when precision or recall had a zero denominator.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

/// Count (true, predicted) pairs into an n×n matrix, rows = true.
pub fn confusion_matrix(
    true_labels: &[u16],
    predicted: &[u16],
    n_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if true_labels.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: true_labels.len(),
            right: predicted.len(),
        });
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in true_labels.iter().zip(predicted) {
        for label in [t, p] {
            if label as usize >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: label as usize,
                    n_classes,
                });
            }
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Derive the full report from a confusion matrix.
pub fn report_from_confusion(
    confusion: &[Vec<u64>],
    class_names: &[String],
) -> Result<ClassificationReport> {
    let n = confusion.len();
    if class_names.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: class_names.len(),
        });
    }
    for row in confusion {
        if row.len() != n {
            return Err(Error::BadDims {
                detail: format!("confusion matrix row has {} columns, expected {n}", row.len()),
            });
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::BadLength {
            detail: "confusion matrix counts no samples".into(),
        });
    }

    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted_c: u64 = confusion.iter().map(|row| row[c]).sum();
        let fp = predicted_c - tp;
        let fn_ = support - tp;

        let mut zero_division = false;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            zero_division = true;
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            zero_division = true;
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            label: class_names[c].clone(),
            precision,
            recall,
            f1,
            support,
            zero_division,
        });
    }

    let trace: u64 = (0..n).map(|c| confusion[c][c]).sum();
    let nf = n as f64;
    Ok(ClassificationReport {
        accuracy: trace as f64 / total as f64,
        macro_precision: per_class.iter().map(|c| c.precision).sum::<f64>() / nf,
        macro_recall: per_class.iter().map(|c| c.recall).sum::<f64>() / nf,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / nf,
        confusion: confusion.to_vec(),
        per_class,
    })
}

/// Report with explicit class names.
pub fn report_named(
    true_labels: &[u16],
    predicted: &[u16],
    class_names: &[String],
) -> Result<ClassificationReport> {
    let confusion = confusion_matrix(true_labels, predicted, class_names.len())?;
    report_from_confusion(&confusion, class_names)
}

/// Report with classes named by index.
pub fn report(
    true_labels: &[u16],
    predicted: &[u16],
    n_classes: usize,
) -> Result<ClassificationReport> {
    let names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
    report_named(true_labels, predicted, &names)
}

/// Serialize a report. Text uses two-decimal scores; JSON and CSV are
/// lossless (shortest round-trip float formatting).
pub fn render_report(r: &ClassificationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(r).expect("report serializes");
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => {
            let mut out = String::from("label,precision,recall,f1,support,accuracy\n");
            for c in &r.per_class {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    csv_field(&c.label),
                    c.precision,
                    c.recall,
                    c.f1,
                    c.support,
                    r.accuracy
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Text => {
            let label_w = r
                .per_class
                .iter()
                .map(|c| c.label.len())
                .chain(["macro avg".len()])
                .max()
                .unwrap_or(9);
            let mut out = String::new();
            out.push_str(&format!(
                "{:>label_w$}  precision  recall  f1-score  support\n\n",
                ""
            ));
            for c in &r.per_class {
                out.push_str(&format!(
                    "{:>label_w$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}{}\n",
                    c.label,
                    c.precision,
                    c.recall,
                    c.f1,
                    c.support,
                    if c.zero_division { "  (zero-division)" } else { "" },
                ));
            }
            let total: u64 = r.per_class.iter().map(|c| c.support).sum();
            out.push('\n');
            out.push_str(&format!(
                "{:>label_w$}  {:>9}  {:>6}  {:>8.2}  {:>7}\n",
                "accuracy", "", "", r.accuracy, total
            ));
            out.push_str(&format!(
                "{:>label_w$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}\n",
                "macro avg", r.macro_precision, r.macro_recall, r.macro_f1, total
            ));
            out.into_bytes()
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn parse_report_json(bytes: &[u8]) -> Result<ClassificationReport> {
    Ok(serde_json::from_slice(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let labels: Vec<u16> = (0..4).flat_map(|c| std::iter::repeat_n(c, 5)).collect();
        let r = report(&labels, &labels, 4).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in &r.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
            assert_eq!(c.support, 5);
            assert!(!c.zero_division);
        }
    }

    #[test]
    fn degenerate_single_class_predictor() {
        // Everything predicted as class 2 over 4 balanced classes: the
        // canonical cross-device failure signature.
        let truth: Vec<u16> = (0..4).flat_map(|c| std::iter::repeat_n(c, 10)).collect();
        let pred = vec![2u16; 40];
        let r = report(&truth, &pred, 4).unwrap();
        assert_eq!(r.accuracy, 0.25);
        assert_eq!(r.per_class[2].recall, 1.0);
        assert_eq!(r.per_class[2].precision, 0.25);
        for c in [0, 1, 3] {
            assert_eq!(r.per_class[c].precision, 0.0);
            assert_eq!(r.per_class[c].recall, 0.0);
            assert_eq!(r.per_class[c].f1, 0.0);
            assert!(r.per_class[c].zero_division);
        }
        assert!(!r.per_class[2].zero_division);
    }

    #[test]
    fn known_two_class_confusion() {
        let confusion = vec![vec![8u64, 2], vec![3, 7]];
        let r = report_from_confusion(&confusion, &names(2)).unwrap();
        assert_relative_eq!(r.per_class[0].precision, 8.0 / 11.0, epsilon = 1e-12);
        assert_relative_eq!(r.per_class[1].precision, 7.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(r.per_class[0].recall, 0.8, epsilon = 1e-12);
        assert_relative_eq!(r.per_class[1].recall, 0.7, epsilon = 1e-12);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!((r.per_class[0].support, r.per_class[1].support), (10, 10));
    }

    #[test]
    fn micro_consistency() {
        let truth = vec![0u16, 0, 1, 1, 2, 2, 2];
        let pred = vec![0u16, 1, 1, 1, 0, 2, 2];
        let r = report(&truth, &pred, 3).unwrap();
        let trace: u64 = (0..3).map(|c| r.confusion[c][c]).sum();
        let total: u64 = r.confusion.iter().flatten().sum();
        assert_eq!(trace, 5);
        assert_eq!(total, 7);
        assert_relative_eq!(r.accuracy, 5.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_and_label_range() {
        assert!(matches!(
            report(&[0, 1], &[0], 2),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
        assert!(matches!(
            report(&[0, 5], &[0, 1], 2),
            Err(Error::LabelOutOfRange { label: 5, n_classes: 2 })
        ));
        assert!(matches!(
            report(&[], &[], 2),
            Err(Error::BadLength { .. })
        ));
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let confusion = vec![vec![8u64, 2], vec![3, 7]];
        let r = report_from_confusion(&confusion, &names(2)).unwrap();
        for c in &r.per_class {
            let expect = 2.0 * c.precision * c.recall / (c.precision + c.recall);
            assert_relative_eq!(c.f1, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let truth = vec![0u16, 0, 1, 1, 2, 2, 2];
        let pred = vec![0u16, 1, 1, 1, 0, 2, 2];
        let r = report(&truth, &pred, 3).unwrap();
        let bytes = render_report(&r, ReportFormat::Json);
        let back = parse_report_json(&bytes).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_shape_and_repeated_accuracy() {
        let confusion = vec![vec![8u64, 2], vec![3, 7]];
        let r = report_from_confusion(&confusion, &names(2)).unwrap();
        let csv = String::from_utf8(render_report(&r, ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "label,precision,recall,f1,support,accuracy");
        for line in &lines[1..] {
            assert!(line.ends_with(",0.75"), "accuracy missing in {line}");
        }
        // Lossless: parse a float field back.
        let p0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(p0, 8.0 / 11.0);
    }

    #[test]
    fn text_uses_two_decimals() {
        let confusion = vec![vec![8u64, 2], vec![3, 7]];
        let r = report_from_confusion(&confusion, &names(2)).unwrap();
        let text = String::from_utf8(render_report(&r, ReportFormat::Text)).unwrap();
        assert!(text.contains("0.73"), "{text}");
        assert!(text.contains("0.78"), "{text}");
        assert!(text.contains("0.75"), "{text}");
        assert!(text.contains("accuracy"), "{text}");
    }

    proptest! {
        #[test]
        fn accuracy_is_permutation_invariant(
            labels in proptest::collection::vec(0u16..4, 1..100),
            preds_seed in 0u64..500,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(preds_seed);
            let preds: Vec<u16> = labels.iter().map(|_| rng.random_range(0..4)).collect();
            let perm = [2u16, 0, 3, 1];
            let labels_p: Vec<u16> = labels.iter().map(|&l| perm[l as usize]).collect();
            let preds_p: Vec<u16> = preds.iter().map(|&l| perm[l as usize]).collect();
            let r1 = report(&labels, &preds, 4).unwrap();
            let r2 = report(&labels_p, &preds_p, 4).unwrap();
            prop_assert_eq!(r1.accuracy, r2.accuracy);
        }

        #[test]
        fn self_report_is_perfect_for_supported_classes(
            labels in proptest::collection::vec(0u16..5, 1..60),
        ) {
            let r = report(&labels, &labels, 5).unwrap();
            prop_assert_eq!(r.accuracy, 1.0);
            for c in &r.per_class {
                if c.support > 0 {
                    prop_assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
                }
            }
        }

        #[test]
        fn scores_are_bounded_and_consistent(
            labels in proptest::collection::vec(0u16..3, 1..80),
            seed in 0u64..300,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let preds: Vec<u16> = labels.iter().map(|_| rng.random_range(0..3)).collect();
            let r = report(&labels, &preds, 3).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.accuracy));
            let total: u64 = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, labels.len());
            for c in &r.per_class {
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
