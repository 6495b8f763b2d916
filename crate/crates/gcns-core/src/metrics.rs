//! Evaluation quantities: confusion matrix, global average accuracy,
//! per-class accuracy, Cohen's Kappa, macro precision/recall/F1, one-vs-rest
//! ROC/AUC, and the Welch two-sample t-test used for model comparison.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows = true class, columns = predicted class.
    pub confusion: Vec<Vec<usize>>,
    pub gaa: f64,
    pub per_class_accuracy: Vec<f64>,
    pub kappa: f64,
    pub kappa_degenerate: bool,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Per class: (false-positive-rate, true-positive-rate) sweep.
    pub roc_points: Vec<Vec<(f64, f64)>>,
    /// Per-class AUC; None when the class is absent from the labels.
    pub auc: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
}

pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (i, (&p, &t)) in predictions.iter().zip(labels).enumerate() {
        if p >= n_classes || t >= n_classes {
            return Err(Error::LabelOutOfRange {
                sample: i,
                label: p.max(t),
                n_classes,
            });
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

pub fn gaa(confusion: &[Vec<usize>]) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let trace: usize = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    trace as f64 / total as f64
}

pub fn per_class_accuracy(confusion: &[Vec<usize>]) -> Vec<f64> {
    confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                row[i] as f64 / total as f64
            }
        })
        .collect()
}

/// Cohen's Kappa (p_o - p_e)/(1 - p_e). Perfect agreement with p_e = 1
/// returns 1; other zero-denominator cases return 0 with the degenerate flag.
pub fn kappa(confusion: &[Vec<usize>]) -> Result<(f64, bool)> {
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let n = confusion.len();
    let total_f = total as f64;
    let p_o: f64 = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| row[i] as f64)
        .sum::<f64>()
        / total_f;
    let mut p_e = 0.0;
    for c in 0..n {
        let row: usize = confusion[c].iter().sum();
        let col: usize = confusion.iter().map(|r| r[c]).sum();
        p_e += (row as f64) * (col as f64) / (total_f * total_f);
    }
    if (1.0 - p_e).abs() < 1e-15 {
        if (p_o - 1.0).abs() < 1e-15 {
            return Ok((1.0, false));
        }
        return Ok((0.0, true));
    }
    Ok(((p_o - p_e) / (1.0 - p_e), false))
}

/// Macro-averaged precision, recall and F1. Empty columns (class never
/// predicted) contribute precision 0; empty rows contribute recall 0; F1 is
/// 0 when both parts are 0.
pub fn macro_prf(confusion: &[Vec<usize>]) -> Result<(f64, f64, f64)> {
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let n = confusion.len();
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    for c in 0..n {
        let tp = confusion[c][c] as f64;
        let col: usize = confusion.iter().map(|r| r[c]).sum();
        let row: usize = confusion[c].iter().sum();
        let precision = if col > 0 { tp / col as f64 } else { 0.0 };
        let recall = if row > 0 { tp / row as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let nf = n as f64;
    Ok((p_sum / nf, r_sum / nf, f_sum / nf))
}

/// One-vs-rest ROC per class over score columns: thresholds sweep every
/// distinct score (ties processed as one step), AUC by the trapezoid rule.
/// Classes absent from the labels report `None` and are excluded from the
/// macro average.
pub fn roc_auc(
    scores: &Array2<f64>,
    labels: &[usize],
) -> Result<(Vec<Vec<(f64, f64)>>, Vec<Option<f64>>, Option<f64>)> {
    let (b, n_classes) = scores.dim();
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} score rows",
            labels.len(),
            b
        )));
    }
    let mut all_points = Vec::with_capacity(n_classes);
    let mut aucs = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let n_pos = labels.iter().filter(|&&l| l == c).count();
        let n_neg = b - n_pos;
        if n_pos == 0 || n_neg == 0 {
            all_points.push(vec![(0.0, 0.0), (1.0, 1.0)]);
            aucs.push(None);
            continue;
        }
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| {
            scores[[j, c]]
                .partial_cmp(&scores[[i, c]])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let mut points = vec![(0.0, 0.0)];
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut auc = 0.0;
        let mut i = 0;
        while i < b {
            // Consume the whole tie group as one threshold step.
            let threshold = scores[[order[i], c]];
            let (mut d_tp, mut d_fp) = (0usize, 0usize);
            while i < b && scores[[order[i], c]] == threshold {
                if labels[order[i]] == c {
                    d_tp += 1;
                } else {
                    d_fp += 1;
                }
                i += 1;
            }
            let (fpr0, tpr0) = *points.last().unwrap();
            tp += d_tp;
            fp += d_fp;
            let fpr1 = fp as f64 / n_neg as f64;
            let tpr1 = tp as f64 / n_pos as f64;
            auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
            points.push((fpr1, tpr1));
        }
        all_points.push(points);
        aucs.push(Some(auc));
    }
    let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok((all_points, aucs, macro_auc))
}

/// Assemble the full report from predictions, labels and score rows.
pub fn eval_report(
    scores: &Array2<f64>,
    labels: &[usize],
) -> Result<EvalReport> {
    let n_classes = scores.ncols();
    let predictions: Vec<usize> = scores
        .outer_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect();
    let confusion = confusion_matrix(&predictions, labels, n_classes)?;
    let (kappa_value, kappa_degenerate) = kappa(&confusion)?;
    let (macro_precision, macro_recall, macro_f1) = macro_prf(&confusion)?;
    let (roc_points, auc, macro_auc) = roc_auc(scores, labels)?;
    Ok(EvalReport {
        gaa: gaa(&confusion),
        per_class_accuracy: per_class_accuracy(&confusion),
        kappa: kappa_value,
        kappa_degenerate,
        macro_precision,
        macro_recall,
        macro_f1,
        roc_points,
        auc,
        macro_auc,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    pub degenerate: bool,
}

/// Welch's two-sample t-test (unequal variances), two-sided p-value via the
/// regularized incomplete beta function. Significance level 0.05.
pub fn t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<TTestResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InvalidArgument(
            "t-test needs at least 2 observations per sample".into(),
        ));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], m: f64| {
        s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() as f64 - 1.0)
    };
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let (va, vb) = (var(sample_a, ma), var(sample_b, mb));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // Both samples constant: equal means are indistinguishable (p = 1),
        // unequal means are trivially separated (p = 0).
        let equal = ma == mb;
        return Ok(TTestResult {
            t: 0.0,
            p: if equal { 1.0 } else { 0.0 },
            significant: !equal,
            degenerate: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let df = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = student_t_two_sided_p(t, df);
    Ok(TTestResult {
        t,
        p,
        significant: p < 0.05,
        degenerate: false,
    })
}

/// Two-sided p-value for Student's t with `df` degrees of freedom:
/// p = I_{df/(df+t^2)}(df/2, 1/2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x)
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction,
/// converged to 1e-10 (relative).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp()) * beta_cf(a, b, x) / a
    } else {
        1.0 - (ln_front.exp()) * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-10;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

/// Lanczos approximation, g = 7, n = 9.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
