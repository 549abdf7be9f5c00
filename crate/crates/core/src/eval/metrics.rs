//! Open-set confusion accounting, macro metrics, accuracy and openness.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::rpl::OpenPrediction;

/// Per-class counts plus unknown-rejection counts.
///
/// Accounting per test sample:
/// - known truth `i` predicted `i`: `TP_i`
/// - known truth `i` predicted known `j != i`: `FN_i` and `FP_j`
/// - known truth `i` rejected: `FN_i` and `FU`
/// - unknown truth rejected: `TU`
/// - unknown truth predicted `j`: `FP_j` only (tallied in `unknown_accepted`)
///
/// `TN_i` counts samples that are neither of class `i` nor predicted as `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpenSetConfusion {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
    pub tu: u64,
    pub fu: u64,
    pub unknown_accepted: u64,
    pub total: u64,
}

impl OpenSetConfusion {
    pub fn n_classes(&self) -> usize {
        self.tp.len()
    }
}

/// `predicted` and `truth` use `None` for unknown.
pub fn assemble_confusion_labels(
    predicted: &[Option<usize>],
    truth: &[Option<usize>],
    n_classes: usize,
) -> Result<OpenSetConfusion> {
    if predicted.len() != truth.len() {
        return Err(Error::argument(format!("{} predictions for {} truths", predicted.len(), truth.len())));
    }
    for l in predicted.iter().chain(truth).flatten() {
        if *l >= n_classes {
            return Err(Error::argument(format!("label {l} outside 0..{n_classes}")));
        }
    }
    let mut c = OpenSetConfusion {
        tp: vec![0; n_classes],
        fp: vec![0; n_classes],
        fn_: vec![0; n_classes],
        tn: vec![0; n_classes],
        total: predicted.len() as u64,
        ..OpenSetConfusion::default()
    };
    for (&p, &t) in predicted.iter().zip(truth) {
        match (t, p) {
            (Some(t), Some(p)) if t == p => c.tp[t] += 1,
            (Some(t), Some(p)) => {
                c.fn_[t] += 1;
                c.fp[p] += 1;
            }
            (Some(t), None) => {
                c.fn_[t] += 1;
                c.fu += 1;
            }
            (None, None) => c.tu += 1,
            (None, Some(p)) => {
                c.fp[p] += 1;
                c.unknown_accepted += 1;
            }
        }
        for i in 0..n_classes {
            if t != Some(i) && p != Some(i) {
                c.tn[i] += 1;
            }
        }
    }
    Ok(c)
}

pub fn assemble_confusion(
    predictions: &[OpenPrediction],
    truth: &[Option<usize>],
    n_classes: usize,
) -> Result<OpenSetConfusion> {
    let predicted: Vec<Option<usize>> = predictions.iter().map(|p| p.class).collect();
    assemble_confusion_labels(&predicted, truth, n_classes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class recall, precision and F1 averaged over the known classes.
/// Zero denominators give 0.
pub fn macro_metrics(conf: &OpenSetConfusion) -> MacroMetrics {
    let n = conf.n_classes();
    if n == 0 {
        return MacroMetrics { recall: 0.0, precision: 0.0, f1: 0.0 };
    }
    let (mut r, mut p, mut f) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let ri = ratio(conf.tp[i], conf.tp[i] + conf.fn_[i]);
        let pi = ratio(conf.tp[i], conf.tp[i] + conf.fp[i]);
        let fi = if pi + ri > 0.0 { 2.0 * pi * ri / (pi + ri) } else { 0.0 };
        r += ri;
        p += pi;
        f += fi;
    }
    let n = n as f64;
    MacroMetrics { recall: r / n, precision: p / n, f1: f / n }
}

/// `(sum_i (TP_i + TN_i) + TU) / (sum_i (TP_i + TN_i + FP_i + FN_i) + FU + TU)`.
pub fn openset_accuracy(conf: &OpenSetConfusion) -> Result<f64> {
    let mut num = conf.tu;
    let mut den = conf.fu + conf.tu;
    for i in 0..conf.n_classes() {
        num += conf.tp[i] + conf.tn[i];
        den += conf.tp[i] + conf.tn[i] + conf.fp[i] + conf.fn_[i];
    }
    if den == 0 {
        return Err(Error::argument("open-set accuracy of an empty confusion"));
    }
    Ok(num as f64 / den as f64)
}

/// Fraction of known-truth samples whose prediction equals the truth.
pub fn closed_set_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::argument(format!("{} predictions for {} truths", predicted.len(), truth.len())));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `1 - sqrt(2 |C_TR| / (|C_TR| + |C_TE|))`.
pub fn openness(n_train_classes: usize, n_test_classes: usize) -> Result<f64> {
    if n_train_classes < 2 || n_train_classes > n_test_classes {
        return Err(Error::argument(format!(
            "openness needs 2 <= |C_TR| <= |C_TE|, got {n_train_classes} and {n_test_classes}"
        )));
    }
    let (tr, te) = (n_train_classes as f64, n_test_classes as f64);
    Ok(1.0 - sqrt(2.0 * tr / (tr + te)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_closed_set() {
        let t = [Some(0), Some(1), Some(1), Some(2)];
        let c = assemble_confusion_labels(&t, &t, 3).unwrap();
        assert_eq!(c.tp, vec![1, 2, 1]);
        assert_eq!(c.fp.iter().chain(&c.fn_).sum::<u64>() + c.fu + c.tu, 0);
        let m = macro_metrics(&c);
        assert_eq!((m.recall, m.precision, m.f1), (1.0, 1.0, 1.0));
        assert_eq!(openset_accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn unknowns_rejected() {
        let t = [None, None, None];
        let c = assemble_confusion_labels(&t, &t, 2).unwrap();
        assert_eq!(c.tu, 3);
        assert_eq!(openset_accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn hand_tally_recall() {
        let c = OpenSetConfusion {
            tp: vec![8, 9],
            fn_: vec![2, 1],
            fp: vec![1, 2],
            tn: vec![0, 0],
            ..Default::default()
        };
        assert!((macro_metrics(&c).recall - 0.85).abs() < 1e-15);
    }

    #[test]
    fn degenerate_precision_is_zero() {
        let c = OpenSetConfusion { tp: vec![0], fp: vec![0], fn_: vec![3], tn: vec![0], ..Default::default() };
        assert_eq!(macro_metrics(&c).precision, 0.0);
        assert!(openset_accuracy(&OpenSetConfusion::default()).is_err());
    }

    #[test]
    fn openness_values() {
        assert_eq!(openness(5, 5).unwrap(), 0.0);
        assert!((openness(7, 10).unwrap() - 0.0925).abs() < 1e-4);
        assert!((openness(3, 10).unwrap() - 0.3206).abs() < 1e-4);
        assert!(openness(4, 3).is_err());
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(assemble_confusion_labels(&[None], &[], 1), Err(Error::Argument(_))));
    }
}
