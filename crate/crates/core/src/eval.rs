//! Classification metrics: accuracy, confusion matrix and one-vs-rest ROC
//! curves with micro and macro averages.
//!
//! Confusion matrices are always rows = true room, columns = predicted room.
//!
//! ROC curves sweep every distinct score from high to low; samples sharing a
//! score move the curve in one diagonal step. The area is the trapezoid rule
//! over that staircase, accumulated in integer units of `1 / (2 * P * N)`,
//! which makes it identical to the Mann-Whitney pair count with ties worth
//! one half.
//!
//! The macro average interpolates each class curve linearly on the FPR grid
//! `0.00, 0.01, ..., 1.00` and averages TPR pointwise. Where a curve has a
//! vertical step exactly at a grid abscissa the upper end of the step is used.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifierError, Proba};
use crate::fingerprint::{FingerprintDatabase, RoomId};
use crate::scalar::Scalar;

/// Number of intervals in the macro-average FPR grid.
pub const MACRO_GRID_STEPS: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truths} truths but {preds} predictions")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("label {0} is not among the evaluated classes")]
    UnknownLabel(RoomId),
    #[error("metric over an empty set")]
    EmptySet,
    #[error("class {0} needs at least one positive and one negative sample")]
    DegenerateClass(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<RoomId>,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.classes.len())
            .map(|j| self.counts.iter().map(|row| row[j]).sum())
            .collect()
    }

    pub fn get(&self, truth: RoomId, predicted: RoomId) -> Option<usize> {
        let i = self.classes.iter().position(|&c| c == truth)?;
        let j = self.classes.iter().position(|&c| c == predicted)?;
        Some(self.counts[i][j])
    }

    /// Aligned text table, true rooms down the side.
    pub fn render(&self) -> String {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(6);
        let mut out = format!("{:>10}", "true\\pred");
        for c in &self.classes {
            write!(out, " {:>width$}", format!("room{c}")).unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(out, "{:>10}", format!("room{c}")).unwrap();
            for n in row {
                write!(out, " {n:>width$}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(truths: &[RoomId], preds: &[RoomId], classes: &[RoomId]) -> Result<ConfusionMatrix, EvalError> {
    if truths.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            preds: preds.len(),
        });
    }
    let index: BTreeMap<RoomId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let lookup = |r: &RoomId| index.get(r).copied().ok_or(EvalError::UnknownLabel(*r));
    let mut counts = vec![vec![0; classes.len()]; classes.len()];
    for (t, p) in truths.iter().zip(preds) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

pub fn accuracy<S: Scalar>(cm: &ConfusionMatrix) -> Result<S, EvalError> {
    match cm.total() {
        0 => Err(EvalError::EmptySet),
        total => Ok(S::ratio(cm.trace() as u128, total as u128)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<S> {
    /// `(fpr, tpr)`, starting at `(0, 0)` and ending at `(1, 1)`.
    pub points: Vec<(S, S)>,
    pub auc: S,
}

/// ROC of a binary problem; `positives[i]` marks sample `i` as positive.
pub fn roc_binary<S: Scalar>(scores: &[S], positives: &[bool], label: &str) -> Result<RocCurve<S>, EvalError> {
    if scores.len() != positives.len() {
        return Err(EvalError::LengthMismatch {
            truths: positives.len(),
            preds: scores.len(),
        });
    }
    let p = positives.iter().filter(|&&b| b).count() as u128;
    let n = positives.len() as u128 - p;
    if p == 0 || n == 0 {
        return Err(EvalError::DegenerateClass(label.to_string()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut points = vec![(S::zero(), S::zero())];
    let (mut tp, mut fp) = (0u128, 0u128);
    // Twice the area, in units of 1 / (P * N).
    let mut twice_area = 0u128;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let (tp_before, fp_before) = (tp, fp);
        while i < order.len() && scores[order[i]] == score {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp_before) * (tp + tp_before);
        points.push((S::ratio(fp, n), S::ratio(tp, p)));
    }
    Ok(RocCurve {
        points,
        auc: S::ratio(twice_area, 2 * p * n),
    })
}

fn class_scores<S: Scalar>(scores: &[Proba<S>], class: RoomId) -> Vec<S> {
    scores
        .iter()
        .map(|proba| proba.get(&class).copied().unwrap_or_else(S::zero))
        .collect()
}

/// One-vs-rest ROC for `positive_class`.
pub fn roc_ovr<S: Scalar>(
    scores: &[Proba<S>],
    truths: &[RoomId],
    positive_class: RoomId,
) -> Result<RocCurve<S>, EvalError> {
    if scores.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            preds: scores.len(),
        });
    }
    let positives: Vec<bool> = truths.iter().map(|&t| t == positive_class).collect();
    roc_binary(
        &class_scores(scores, positive_class),
        &positives,
        &positive_class.to_string(),
    )
}

/// Micro average: every (sample, class) pair pooled into one binary problem.
pub fn roc_micro<S: Scalar>(
    scores: &[Proba<S>],
    truths: &[RoomId],
    classes: &[RoomId],
) -> Result<RocCurve<S>, EvalError> {
    if scores.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            truths: truths.len(),
            preds: scores.len(),
        });
    }
    let mut pooled = Vec::with_capacity(scores.len() * classes.len());
    let mut positives = Vec::with_capacity(pooled.capacity());
    for &class in classes {
        pooled.extend(class_scores(scores, class));
        positives.extend(truths.iter().map(|&t| t == class));
    }
    roc_binary(&pooled, &positives, "micro")
}

/// TPR of `curve` at `x` by linear interpolation between its points.
fn interpolate<S: Scalar>(curve: &RocCurve<S>, x: S) -> S {
    let pts = &curve.points;
    if let Some(top) = pts.iter().filter(|(fx, _)| *fx == x).map(|&(_, y)| y).reduce(S::max) {
        return top;
    }
    let after = pts.iter().position(|(fx, _)| *fx > x).unwrap_or(pts.len() - 1);
    let (x1, y1) = pts[after];
    let (x0, y0) = pts[after.saturating_sub(1)];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Macro average of per-class curves on the fixed FPR grid.
pub fn roc_macro<S: Scalar>(curves: &[RocCurve<S>]) -> Result<RocCurve<S>, EvalError> {
    if curves.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let k = S::of_usize(curves.len());
    let grid: Vec<(S, S)> = (0..=MACRO_GRID_STEPS)
        .map(|i| {
            let x = S::ratio(i as u128, MACRO_GRID_STEPS as u128);
            let sum = curves.iter().map(|c| interpolate(c, x)).fold(S::zero(), |a, b| a + b);
            (x, sum / k)
        })
        .collect();
    let twice_area = grid.windows(2).map(|w| w[0].1 + w[1].1).fold(S::zero(), |a, b| a + b);
    let auc = twice_area / S::of_usize(2 * MACRO_GRID_STEPS);

    let mut points = Vec::with_capacity(grid.len() + 1);
    if grid[0].1 != S::zero() {
        points.push((S::zero(), S::zero()));
    }
    points.extend(grid);
    Ok(RocCurve { points, auc })
}

/// Everything reported for one classifier on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub confusion: ConfusionMatrix,
    pub accuracy: S,
    pub per_class: BTreeMap<RoomId, RocCurve<S>>,
    pub micro: RocCurve<S>,
    pub macro_avg: RocCurve<S>,
}

/// JSON form of an [`Evaluation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub accuracy: f64,
    pub classes: Vec<RoomId>,
    pub confusion_orientation: String,
    pub confusion: Vec<Vec<usize>>,
    pub auc: BTreeMap<RoomId, f64>,
    pub micro_auc: f64,
    pub macro_auc: f64,
}

pub fn evaluate<S: Scalar, C: Classifier<S> + ?Sized>(
    model: &C,
    test: &FingerprintDatabase,
) -> Result<Evaluation<S>, EvalError> {
    let classes = model.classes().to_vec();
    let truths: Vec<RoomId> = test.samples().iter().map(|s| s.room).collect();
    let mut scores = Vec::with_capacity(test.len());
    let mut preds = Vec::with_capacity(test.len());
    for s in test.samples() {
        let proba = model.predict_proba(&s.rssi)?;
        preds.push(crate::classifier::argmax(&proba).expect("non-empty classes"));
        scores.push(proba);
    }
    let cm = confusion(&truths, &preds, &classes)?;
    let per_class = classes
        .iter()
        .map(|&c| Ok((c, roc_ovr(&scores, &truths, c)?)))
        .collect::<Result<BTreeMap<_, _>, EvalError>>()?;
    let curves: Vec<RocCurve<S>> = per_class.values().cloned().collect();
    Ok(Evaluation {
        accuracy: accuracy(&cm)?,
        confusion: cm,
        micro: roc_micro(&scores, &truths, &classes)?,
        macro_avg: roc_macro(&curves)?,
        per_class,
    })
}

impl<S: Scalar> Evaluation<S> {
    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            samples: self.confusion.total(),
            accuracy: self.accuracy.as_f64(),
            classes: self.confusion.classes.clone(),
            confusion_orientation: "rows=true,columns=predicted".into(),
            confusion: self.confusion.counts.clone(),
            auc: self.per_class.iter().map(|(&c, r)| (c, r.auc.as_f64())).collect(),
            micro_auc: self.micro.auc.as_f64(),
            macro_auc: self.macro_avg.auc.as_f64(),
        }
    }

    /// `class,fpr,tpr` rows for every class, then `micro` and `macro`.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("class,fpr,tpr\n");
        let mut emit = |label: &str, curve: &RocCurve<S>| {
            for (x, y) in &curve.points {
                writeln!(out, "{label},{},{}", x.as_f64(), y.as_f64()).unwrap();
            }
        };
        for (c, curve) in &self.per_class {
            emit(&c.to_string(), curve);
        }
        emit("micro", &self.micro);
        emit("macro", &self.macro_avg);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u32) -> RoomId {
        RoomId::new(n).unwrap()
    }

    fn rooms(ns: &[u32]) -> Vec<RoomId> {
        ns.iter().map(|&n| r(n)).collect()
    }

    #[test]
    fn nineteen_correct_room_one() {
        let truths = vec![r(1); 19];
        let cm = confusion(&truths, &truths, &rooms(&[1, 2, 3])).unwrap();
        assert_eq!(cm.counts[0], vec![19, 0, 0]);
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let truths = rooms(&[1, 2, 3, 3, 2, 1, 1]);
        let cm = confusion(&truths, &truths, &rooms(&[1, 2, 3])).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
        assert_eq!(accuracy::<f64>(&cm).unwrap(), 1.0);
    }

    #[test]
    fn hand_tally() {
        let cm = confusion(&rooms(&[1, 1, 2]), &rooms(&[1, 2, 2]), &rooms(&[1, 2])).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.get(r(1), r(2)), Some(1));
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&rooms(&[1]), &rooms(&[1, 2]), &rooms(&[1, 2])),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&rooms(&[1]), &rooms(&[4]), &rooms(&[1, 2])),
            Err(EvalError::UnknownLabel(x)) if x == r(4)
        ));
    }

    #[test]
    fn accuracy_cases() {
        // room 1: 19/19, room 2: two wrong out of n2, room 3: all right
        let (n2, n3) = (19, 19);
        let mut truths = vec![r(1); 19];
        truths.extend(vec![r(2); n2]);
        truths.extend(vec![r(3); n3]);
        let mut preds = truths.clone();
        preds[19] = r(1);
        preds[20] = r(3);
        let cm = confusion(&truths, &preds, &rooms(&[1, 2, 3])).unwrap();
        let expected = (19 + (n2 - 2) + n3) as f64 / (19 + n2 + n3) as f64;
        assert_eq!(accuracy::<f64>(&cm).unwrap(), expected);

        let cm = confusion(&rooms(&[1, 2]), &rooms(&[2, 1]), &rooms(&[1, 2])).unwrap();
        assert_eq!(accuracy::<f64>(&cm).unwrap(), 0.0);
        let empty = confusion(&[], &[], &rooms(&[1])).unwrap();
        assert!(matches!(accuracy::<f64>(&empty), Err(EvalError::EmptySet)));
    }

    #[test]
    fn render_has_one_line_per_class() {
        let cm = confusion(&rooms(&[1, 2]), &rooms(&[1, 1]), &rooms(&[1, 2])).unwrap();
        let text = cm.render();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("     room1"));
    }

    #[test]
    fn separable_scores() {
        let curve = roc_binary(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false], "x").unwrap();
        assert_eq!(curve.auc, 1.0);
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn constant_scores() {
        let curve = roc_binary(&[0.4; 5], &[true, false, true, false, false], "x").unwrap();
        assert_eq!(curve.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(curve.auc, 0.5);
    }

    #[test]
    fn rank_sum_example() {
        // pos {0.9, 0.4}, neg {0.6, 0.1}: concordant pairs 3 of 4
        let curve = roc_binary(&[0.9f64, 0.4, 0.6, 0.1], &[true, true, false, false], "x").unwrap();
        assert_eq!(curve.auc, 0.75);
    }

    #[test]
    fn degenerate_classes() {
        assert!(matches!(
            roc_binary(&[0.1, 0.2], &[true, true], "x"),
            Err(EvalError::DegenerateClass(_))
        ));
        let scores: Vec<Proba<f64>> = vec![[(r(1), 1.0)].into_iter().collect(); 2];
        assert!(roc_ovr(&scores, &rooms(&[1, 1]), r(2)).is_err());
    }

    fn diagonal() -> RocCurve<f64> {
        roc_binary(&[0.5; 4], &[true, true, false, false], "d").unwrap()
    }

    fn perfect() -> RocCurve<f64> {
        roc_binary(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], "p").unwrap()
    }

    #[test]
    fn macro_of_identical_curves() {
        let c: RocCurve<f64> = roc_binary(&[0.9, 0.7, 0.6, 0.3, 0.2], &[true, false, true, false, true], "c").unwrap();
        let m = roc_macro(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert!((m.auc - c.auc).abs() <= 0.01, "{} vs {}", m.auc, c.auc);
        let grid = &m.points[m.points.len() - (MACRO_GRID_STEPS + 1)..];
        for (x, y) in grid {
            assert!((interpolate(&c, *x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_of_perfect_and_chance() {
        let m = roc_macro(&[perfect(), diagonal()]).unwrap();
        assert!((m.auc - 0.75).abs() <= 0.01);
        assert_eq!(roc_macro(&[perfect(), perfect()]).unwrap().auc, 1.0);
        assert_eq!(m.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(m.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn micro_of_perfect_classifier() {
        let truths = rooms(&[1, 2, 3, 1, 2, 3]);
        let scores: Vec<Proba<f64>> = truths
            .iter()
            .map(|&t| {
                rooms(&[1, 2, 3])
                    .into_iter()
                    .map(|c| (c, if c == t { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        let micro = roc_micro(&scores, &truths, &rooms(&[1, 2, 3])).unwrap();
        assert_eq!(micro.auc, 1.0);
        let curves: Vec<_> = rooms(&[1, 2, 3])
            .into_iter()
            .map(|c| roc_ovr(&scores, &truths, c).unwrap())
            .collect();
        assert_eq!(roc_macro(&curves).unwrap().auc, 1.0);
    }

    #[test]
    fn single_precision_curves() {
        let curve = roc_binary(&[0.9f32, 0.4, 0.6, 0.1], &[true, true, false, false], "x").unwrap();
        assert_eq!(curve.auc, 0.75f32);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Mann-Whitney statistic by direct pair enumeration, ties worth 1/2.
        fn pair_count_auc(scores: &[f64], positives: &[bool]) -> f64 {
            let (mut wins, mut pairs) = (0.0, 0.0);
            for (i, &si) in scores.iter().enumerate() {
                for (j, &sj) in scores.iter().enumerate() {
                    if positives[i] && !positives[j] {
                        pairs += 1.0;
                        if si > sj {
                            wins += 1.0;
                        } else if si == sj {
                            wins += 0.5;
                        }
                    }
                }
            }
            wins / pairs
        }

        proptest! {
            #[test]
            fn auc_matches_pair_counting(
                data in prop::collection::vec((0u8..12, any::<bool>()), 2..50)
            ) {
                let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 11.0).collect();
                let positives: Vec<bool> = data.iter().map(|(_, p)| *p).collect();
                prop_assume!(positives.iter().any(|&p| p) && positives.iter().any(|&p| !p));
                let curve = roc_binary(&scores, &positives, "p").unwrap();
                prop_assert!((curve.auc - pair_count_auc(&scores, &positives)).abs() <= 1e-12);
                prop_assert_eq!(curve.points[0], (0.0, 0.0));
                prop_assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
                for w in curve.points.windows(2) {
                    prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
                }
            }

            #[test]
            fn confusion_margins_reconcile(
                pairs in prop::collection::vec((1u32..5, 1u32..5), 0..60)
            ) {
                let truths: Vec<RoomId> = pairs.iter().map(|p| r(p.0)).collect();
                let preds: Vec<RoomId> = pairs.iter().map(|p| r(p.1)).collect();
                let classes = rooms(&[1, 2, 3, 4]);
                let cm = confusion(&truths, &preds, &classes).unwrap();
                for (i, &c) in classes.iter().enumerate() {
                    prop_assert_eq!(cm.row_sums()[i], truths.iter().filter(|&&t| t == c).count());
                    prop_assert_eq!(cm.column_sums()[i], preds.iter().filter(|&&p| p == c).count());
                }
                if let Ok(acc) = accuracy::<f64>(&cm) {
                    prop_assert!((0.0..=1.0).contains(&acc));
                }
            }
        }
    }
}
