//! Confusion matrices, one-vs-all precision/recall/F1 and ROC curves.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Counts indexed `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for {classes} classes",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for label in [truth, predicted] {
            if label >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    /// Elementwise sum of two partial matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "merging {} and {} classes",
                self.classes, other.classes
            )));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Rows divided by their support; rows with no samples are `None`.
    pub fn row_normalized(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.classes)
            .map(|t| {
                let row = self.row(t);
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row.iter().map(|&c| c as f64 / n as f64).collect())
            })
            .collect()
    }

    /// One-vs-all (tp, fp, fn, tn) for class `k`.
    pub fn one_vs_all(&self, k: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(k, k);
        let fp = (0..self.classes).map(|t| self.get(t, k)).sum::<u64>() - tp;
        let fn_ = self.row(k).iter().sum::<u64>() - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        (0..self.classes).for_each(|k| {
            let _ = write!(s, ",{k}");
        });
        s.push('\n');
        for t in 0..self.classes {
            let _ = write!(s, "{t}");
            self.row(t).iter().for_each(|c| {
                let _ = write!(s, ",{c}");
            });
            s.push('\n');
        }
        s
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-all accuracy `(tp + tn) / total`.
    pub accuracy: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassScores>,
    /// Multiclass accuracy: trace over total.
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro scores. Zero denominators score 0. The macro means
/// run over classes that occur in either the truth or the predictions.
pub fn prf1(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(cm.classes());
    let mut present = Vec::new();
    for k in 0..cm.classes() {
        let (tp, fp, fn_, tn) = cm.one_vs_all(k);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, total),
            support: tp + fn_,
        });
        if tp + fp + fn_ > 0 {
            present.push(k);
        }
    }
    let mean = |f: fn(&ClassScores) -> f64| {
        present.iter().map(|&k| f(&per_class[k])).sum::<f64>() / present.len() as f64
    };
    let trace: u64 = (0..cm.classes()).map(|k| cm.get(k, k)).sum();
    Ok(MetricsReport {
        accuracy: ratio(trace, total),
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        per_class,
    })
}

impl MetricsReport {
    /// Header plus one row per class and a final `macro` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,accuracy,precision,recall,f1,support\n");
        for (k, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                s,
                "{k},{:.6},{:.6},{:.6},{:.6},{}",
                c.accuracy, c.precision, c.recall, c.f1, c.support
            );
        }
        let support: u64 = self.per_class.iter().map(|c| c.support).sum();
        let _ = writeln!(
            s,
            "macro,{:.6},{:.6},{:.6},{:.6},{support}",
            self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1
        );
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// (fpr, tpr) from (0, 0) to (1, 1), thresholds descending.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x:.8},{y:.8}");
        }
        s
    }
}

/// ROC of `positive_class` against the rest, sweeping the threshold over
/// that class's score. Equal scores move together as one step.
pub fn roc_one_vs_all(
    scores: &[Vec<f64>],
    truth: &[usize],
    positive_class: usize,
) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch(truth.len(), scores.len()));
    }
    let mut pairs = Vec::with_capacity(scores.len());
    for (row, &t) in scores.iter().zip(truth) {
        let s = *row.get(positive_class).ok_or(Error::LabelOutOfRange {
            label: positive_class,
            classes: row.len(),
        })?;
        pairs.push((s, t == positive_class));
    }
    let pos = pairs.iter().filter(|p| p.1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateClass(positive_class));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp, mut auc) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < pairs.len() {
        let (prev_fpr, prev_tpr) = *points.last().unwrap();
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let p = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (p.0 - prev_fpr) * (p.1 + prev_tpr) / 2.0;
        points.push(p);
        i = j;
    }
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_tally() {
        let cm = confusion(&[0, 0, 1, 2], &[0, 1, 1, 0], 5).unwrap();
        assert_eq!(
            (cm.get(0, 0), cm.get(0, 1), cm.get(1, 1), cm.get(2, 0)),
            (1, 1, 1, 1)
        );
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn diagonal_scores_one() {
        let cm = confusion(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4], 5).unwrap();
        let r = prf1(&cm).unwrap();
        assert_eq!(
            (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn all_class_zero_column() {
        let cm = confusion(&[0, 1, 2, 3], &[0, 0, 0, 0], 5).unwrap();
        for t in 0..5 {
            for p in 1..5 {
                assert_eq!(cm.get(t, p), 0);
            }
        }
    }

    #[test]
    fn hand_evaluated_class_scores() {
        // Class 0: tp=3, fp=1, fn=2.
        let cm = confusion(&[0, 0, 0, 0, 0, 1, 1], &[0, 0, 0, 1, 1, 0, 1], 2).unwrap();
        let c = prf1(&cm).unwrap().per_class[0];
        assert!((c.precision - 0.75).abs() < 1e-12);
        assert!((c.recall - 0.6).abs() < 1e-12);
        assert!((c.f1 - 0.9 / 1.35).abs() < 1e-12);
    }

    #[test]
    fn binary_accuracy() {
        let cm = ConfusionMatrix::from_counts(2, vec![50, 10, 5, 35]).unwrap();
        let r = prf1(&cm).unwrap();
        assert!((r.accuracy - 0.85).abs() < 1e-12);
        assert!((r.per_class[0].accuracy - 0.85).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            confusion(&[0], &[], 5),
            Err(Error::LengthMismatch(1, 0))
        ));
        assert!(matches!(
            confusion(&[5], &[0], 5),
            Err(Error::LabelOutOfRange { label: 5, .. })
        ));
        assert!(matches!(
            prf1(&ConfusionMatrix::new(5)),
            Err(Error::EmptyMatrix)
        ));
        assert!(matches!(
            roc_one_vs_all(&[vec![0.5, 0.5]], &[0], 0),
            Err(Error::DegenerateClass(0))
        ));
    }

    #[test]
    fn merge_sums() {
        let mut a = confusion(&[0, 1], &[0, 0], 2).unwrap();
        a.merge(&confusion(&[1], &[1], 2).unwrap()).unwrap();
        assert_eq!(a, confusion(&[0, 1, 1], &[0, 0, 1], 2).unwrap());
    }

    fn two_class(s: &[f64]) -> Vec<Vec<f64>> {
        s.iter().map(|&p| vec![p, 1.0 - p]).collect()
    }

    #[test]
    fn roc_examples() {
        let sep = roc_one_vs_all(&two_class(&[0.9, 0.8, 0.2, 0.1]), &[0, 0, 1, 1], 0).unwrap();
        assert_eq!(sep.auc, 1.0);
        let flat = roc_one_vs_all(&two_class(&[0.4; 4]), &[0, 1, 0, 1], 0).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(flat.auc, 0.5);
        let mixed = roc_one_vs_all(&two_class(&[0.9, 0.8, 0.3, 0.2]), &[0, 1, 0, 1], 0).unwrap();
        assert!((mixed.auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn csv_layouts() {
        let cm = confusion(&[0, 1], &[1, 1], 2).unwrap();
        assert_eq!(cm.to_csv(), "true\\pred,0,1\n0,0,1\n1,0,1\n");
        let report = prf1(&cm).unwrap().to_csv();
        assert!(report.starts_with("class,accuracy,precision,recall,f1,support\n"));
        assert!(report.lines().last().unwrap().starts_with("macro,0.500000"));
    }
}
