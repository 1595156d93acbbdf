use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, Proba};
use crate::fingerprint::{FingerprintDatabase, LabeledSample, RoomId, RssiVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub criterion: Criterion,
    /// `None` grows until the other stopping rules fire.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// A split must reduce impurity by strictly more than this.
    pub min_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_leaf: 1,
            min_gain: 1e-12,
        }
    }
}

/// Chosen split of a node. Readings `<= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<S> {
    pub feature: usize,
    pub threshold: S,
    pub gain: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode<S> {
    Internal {
        feature: usize,
        threshold: S,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
    Leaf {
        counts: BTreeMap<RoomId, usize>,
    },
}

impl<S: Scalar> TreeNode<S> {
    fn leaf_for<'a>(&'a self, rssi: &RssiVector) -> &'a BTreeMap<RoomId, usize> {
        let mut node = self;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if S::of_i32(rssi.get(*feature)) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    fn leaves(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.leaves() + right.leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }

    fn validate(&self, ap_count: usize, classes: &[RoomId]) -> Result<(), ClassifierError> {
        match self {
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= ap_count {
                    return Err(ClassifierError::InvalidModel(format!(
                        "split on feature {feature} but ap_count is {ap_count}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(ClassifierError::InvalidModel("non-finite threshold".into()));
                }
                left.validate(ap_count, classes)?;
                right.validate(ap_count, classes)
            }
            TreeNode::Leaf { counts } => {
                if counts.values().sum::<usize>() == 0 {
                    return Err(ClassifierError::InvalidModel("empty leaf".into()));
                }
                match counts.keys().find(|r| !classes.contains(r)) {
                    Some(r) => Err(ClassifierError::InvalidModel(format!("leaf mentions unknown room {r}"))),
                    None => Ok(()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel<S> {
    pub ap_count: usize,
    pub classes: Vec<RoomId>,
    pub root: TreeNode<S>,
}

impl<S: Scalar> DecisionTreeModel<S> {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    /// `(feature, threshold)` tested at the root, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, S)> {
        match &self.root {
            TreeNode::Internal { feature, threshold, .. } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.classes.is_empty() || !self.classes.windows(2).all(|w| w[0] < w[1]) {
            return Err(ClassifierError::InvalidModel(
                "classes must be non-empty and strictly ascending".into(),
            ));
        }
        self.root.validate(self.ap_count, &self.classes)
    }
}

impl<S: Scalar> Classifier<S> for DecisionTreeModel<S> {
    fn ap_count(&self) -> usize {
        self.ap_count
    }

    fn classes(&self) -> &[RoomId] {
        &self.classes
    }

    fn predict_proba(&self, rssi: &RssiVector) -> Result<Proba<S>, ClassifierError> {
        self.check_shape(rssi)?;
        let counts = self.root.leaf_for(rssi);
        let total = S::of_usize(counts.values().sum());
        let mut proba: Proba<S> = self.classes.iter().map(|&c| (c, S::zero())).collect();
        for (&room, &n) in counts {
            proba.insert(room, S::of_usize(n) / total);
        }
        Ok(proba)
    }
}

/// Gini impurity `1 - sum_k (n_k / n)^2`.
pub fn gini<S: Scalar>(counts: &BTreeMap<RoomId, usize>) -> Result<S, ClassifierError> {
    let n: u128 = counts.values().map(|&c| c as u128).sum();
    if n == 0 {
        return Err(ClassifierError::EmptySet);
    }
    let sum_sq: u128 = counts.values().map(|&c| (c as u128).pow(2)).sum();
    Ok(S::ratio(n * n - sum_sq, n * n))
}

/// Best split found among the candidate features of one node.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    /// Largest reading routed left.
    below: i32,
    /// Smallest reading routed right.
    above: i32,
    /// Split quality `sum_k l_k^2 / n_l + sum_k r_k^2 / n_r` kept as the
    /// exact fraction `score_num / score_den`.
    score_num: u128,
    score_den: u128,
    gain: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.score_num * other.score_den > other.score_num * self.score_den
    }

    fn threshold<S: Scalar>(&self) -> S {
        (S::of_i32(self.below) + S::of_i32(self.above)) / S::of_f64(2.0)
    }
}

/// Training data viewed through dense class indices.
struct Grower<'a> {
    data: &'a [LabeledSample],
    class_of: Vec<usize>,
    n_classes: usize,
    cfg: &'a TrainConfig,
}

impl<'a> Grower<'a> {
    fn new(data: &'a [LabeledSample], classes: &[RoomId], cfg: &'a TrainConfig) -> Self {
        let dense: BTreeMap<RoomId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            data,
            class_of: data.iter().map(|s| dense[&s.room]).collect(),
            n_classes: classes.len(),
            cfg,
        }
    }

    fn class_totals(&self, idx: &[usize]) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_classes];
        for &i in idx {
            totals[self.class_of[i]] += 1;
        }
        totals
    }

    /// Exhaustive midpoint search. Features are scanned in ascending index
    /// order and thresholds in ascending value order, replacing the incumbent
    /// only on a strictly better score, so ties keep the lowest
    /// `(feature, threshold)`.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<Candidate> {
        let n = idx.len();
        if n < 2 {
            return None;
        }
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let parent = self.class_totals(idx);
        let parent_sq: u128 = parent.iter().map(|&c| u128::from(c).pow(2)).sum();

        let mut features = features.to_vec();
        features.sort_unstable();
        features.dedup();

        let mut best: Option<Candidate> = None;
        let mut column: Vec<(i32, usize)> = Vec::with_capacity(n);
        for &feature in &features {
            column.clear();
            column.extend(idx.iter().map(|&i| (self.data[i].rssi.get(feature), self.class_of[i])));
            column.sort_unstable();

            let mut left = vec![0u64; self.n_classes];
            let mut right = parent.clone();
            let mut left_sq: u128 = 0;
            let mut right_sq: u128 = parent_sq;
            for pos in 0..n - 1 {
                let (value, class) = column[pos];
                left_sq += 2 * u128::from(left[class]) + 1;
                left[class] += 1;
                right_sq -= 2 * u128::from(right[class]) - 1;
                right[class] -= 1;

                let next = column[pos + 1].0;
                if next == value {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let candidate = Candidate {
                    feature,
                    below: value,
                    above: next,
                    score_num: n_right as u128 * left_sq + n_left as u128 * right_sq,
                    score_den: (n_left * n_right) as u128,
                    gain: 0.0,
                };
                if best.as_ref().is_none_or(|b| candidate.beats(b)) {
                    best = Some(candidate);
                }
            }
        }

        let mut best = best?;
        // gain = (score / n - parent_sq / n^2) = (score_num * n - parent_sq * score_den) / (score_den * n^2)
        let n = n as u128;
        let numerator = (best.score_num * n).saturating_sub(parent_sq * best.score_den);
        best.gain = numerator as f64 / (best.score_den * n * n) as f64;
        (best.gain > self.cfg.min_gain).then_some(best)
    }

    fn leaf<S>(&self, idx: &[usize]) -> TreeNode<S> {
        let mut counts = BTreeMap::new();
        for &i in idx {
            *counts.entry(self.data[i].room).or_insert(0) += 1;
        }
        TreeNode::Leaf { counts }
    }
}

/// Picks the candidate features for each node.
pub(crate) type FeaturePicker<'p> = dyn FnMut() -> Vec<usize> + 'p;

fn grow<S: Scalar>(grower: &Grower<'_>, idx: Vec<usize>, depth: usize, pick: &mut FeaturePicker<'_>) -> TreeNode<S> {
    let cfg = grower.cfg;
    let totals = grower.class_totals(&idx);
    let pure = totals.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_reached = cfg.max_depth.is_some_and(|d| depth >= d);
    let too_small = idx.len() < 2 * cfg.min_samples_leaf.max(1);
    if pure || depth_reached || too_small {
        return grower.leaf(&idx);
    }
    let features = pick();
    let Some(split) = grower.best_split(&idx, &features) else {
        return grower.leaf(&idx);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| grower.data[i].rssi.get(split.feature) <= split.below);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold(),
        left: Box::new(grow(grower, left, depth + 1, pick)),
        right: Box::new(grow(grower, right, depth + 1, pick)),
    }
}

/// Grows a tree over `data[idx]` (indices may repeat, as in a bootstrap).
pub(crate) fn fit_tree_on<S: Scalar>(
    data: &[LabeledSample],
    idx: Vec<usize>,
    ap_count: usize,
    classes: Vec<RoomId>,
    cfg: &TrainConfig,
    pick: &mut FeaturePicker<'_>,
) -> Result<DecisionTreeModel<S>, ClassifierError> {
    if idx.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let grower = Grower::new(data, &classes, cfg);
    let root = grow(&grower, idx, 0, pick);
    Ok(DecisionTreeModel {
        ap_count,
        classes,
        root,
    })
}

/// Greedy CART construction on Gini impurity. Deterministic.
pub fn fit_tree<S: Scalar>(
    train: &FingerprintDatabase,
    cfg: &TrainConfig,
) -> Result<DecisionTreeModel<S>, ClassifierError> {
    let ap_count = train.ap_count();
    let all: Vec<usize> = (0..ap_count).collect();
    fit_tree_on(
        train.samples(),
        (0..train.len()).collect(),
        ap_count,
        train.classes(),
        cfg,
        &mut || all.clone(),
    )
}

/// Best single split of `samples` over `candidate_features`, or `None` when
/// no split improves impurity by more than `cfg.min_gain`.
pub fn best_split<S: Scalar>(
    samples: &[LabeledSample],
    candidate_features: &[usize],
    cfg: &TrainConfig,
) -> Option<Split<S>> {
    let mut classes: Vec<RoomId> = samples.iter().map(|s| s.room).collect();
    classes.sort();
    classes.dedup();
    let grower = Grower::new(samples, &classes, cfg);
    let idx: Vec<usize> = (0..samples.len()).collect();
    grower.best_split(&idx, candidate_features).map(|c| Split {
        feature: c.feature,
        threshold: c.threshold(),
        gain: S::of_f64(c.gain),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::MacAddress;

    fn room(n: u32) -> RoomId {
        RoomId::new(n).unwrap()
    }

    fn counts(pairs: &[(u32, usize)]) -> BTreeMap<RoomId, usize> {
        pairs.iter().map(|&(r, n)| (room(r), n)).collect()
    }

    fn db(rows: &[(&[i32], u32)]) -> FingerprintDatabase {
        let width = rows.first().map_or(1, |r| r.0.len());
        let macs = (1..=width as u16).map(MacAddress::local).collect();
        let samples = rows
            .iter()
            .map(|(r, l)| LabeledSample::new(r.to_vec(), room(*l)))
            .collect();
        FingerprintDatabase::new(macs, samples).unwrap()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini::<f64>(&counts(&[(1, 10)])).unwrap(), 0.0);
        assert_eq!(gini::<f64>(&counts(&[(1, 2), (2, 2)])).unwrap(), 0.5);
        assert_eq!(gini::<f64>(&counts(&[(1, 1), (2, 1), (3, 2)])).unwrap(), 0.625);
        assert_eq!(gini::<f32>(&counts(&[(1, 1), (2, 1), (3, 2)])).unwrap(), 0.625f32);
        assert!(matches!(gini::<f64>(&counts(&[])), Err(ClassifierError::EmptySet)));
        assert!(matches!(
            gini::<f64>(&counts(&[(1, 0)])),
            Err(ClassifierError::EmptySet)
        ));
    }

    fn four_sample_set() -> FingerprintDatabase {
        db(&[(&[-40], 1), (&[-42], 1), (&[-70], 2), (&[-72], 2)])
    }

    #[test]
    fn four_sample_split() {
        let data = four_sample_set();
        let split = best_split::<f64>(data.samples(), &[0], &TrainConfig::default()).unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.threshold, -56.0);
        assert_eq!(split.gain, 0.5);
    }

    #[test]
    fn no_split_on_identical_vectors_or_single_label() {
        let cfg = TrainConfig::default();
        let same = db(&[(&[-40, -50], 1), (&[-40, -50], 2), (&[-40, -50], 1)]);
        assert!(best_split::<f64>(same.samples(), &[0, 1], &cfg).is_none());
        let one_label = db(&[(&[-40, -50], 3), (&[-60, -55], 3), (&[-41, -70], 3)]);
        assert!(best_split::<f64>(one_label.samples(), &[0, 1], &cfg).is_none());
    }

    #[test]
    fn ties_go_to_lowest_feature_then_threshold() {
        // Both features separate perfectly; feature 0 must win.
        let data = db(&[(&[-40, -80], 1), (&[-60, -50], 2)]);
        let split = best_split::<f64>(data.samples(), &[1, 0], &TrainConfig::default()).unwrap();
        assert_eq!((split.feature, split.threshold), (0, -50.0));
        // Same score at thresholds -55 and -45 (both isolate one sample): lowest wins.
        let data = db(&[(&[-60], 1), (&[-50], 2), (&[-40], 3)]);
        let split = best_split::<f64>(data.samples(), &[0], &TrainConfig::default()).unwrap();
        assert_eq!(split.threshold, -55.0);
    }

    #[test]
    fn single_class_fits_one_leaf() {
        let data = db(&[(&[-40, -50], 3), (&[-60, -55], 3)]);
        let model = fit_tree::<f64>(&data, &TrainConfig::default()).unwrap();
        assert_eq!(model.leaf_count(), 1);
        for probe in [[-30, -30], [-100, -100]] {
            assert_eq!(model.predict(&RssiVector::new(probe.to_vec())).unwrap(), room(3));
        }
    }

    #[test]
    fn four_sample_tree_has_depth_one() {
        let model = fit_tree::<f64>(&four_sample_set(), &TrainConfig::default()).unwrap();
        assert_eq!(model.depth(), 1);
        assert_eq!(model.root_split(), Some((0, -56.0)));
    }

    #[test]
    fn empty_training_set() {
        let data = FingerprintDatabase::new(vec![MacAddress::local(1)], vec![]).unwrap();
        assert!(matches!(
            fit_tree::<f64>(&data, &TrainConfig::default()),
            Err(ClassifierError::EmptyDataset)
        ));
    }

    #[test]
    fn leaf_probabilities_and_threshold_routing() {
        let model = DecisionTreeModel::<f64> {
            ap_count: 1,
            classes: vec![room(1), room(2)],
            root: TreeNode::Leaf {
                counts: counts(&[(1, 3), (2, 1)]),
            },
        };
        let v = RssiVector::new(vec![-50]);
        assert_eq!(model.predict(&v).unwrap(), room(1));
        let p = model.predict_proba(&v).unwrap();
        assert_eq!((p[&room(1)], p[&room(2)]), (0.75, 0.25));

        let split = DecisionTreeModel::<f64> {
            ap_count: 1,
            classes: vec![room(1), room(2)],
            root: TreeNode::Internal {
                feature: 0,
                threshold: -56.0,
                left: Box::new(TreeNode::Leaf {
                    counts: counts(&[(2, 1)]),
                }),
                right: Box::new(TreeNode::Leaf {
                    counts: counts(&[(1, 1)]),
                }),
            },
        };
        let float_split = DecisionTreeModel::<f64> {
            root: TreeNode::Internal {
                feature: 0,
                threshold: -50.0,
                left: Box::new(TreeNode::Leaf {
                    counts: counts(&[(2, 1)]),
                }),
                right: Box::new(TreeNode::Leaf {
                    counts: counts(&[(1, 1)]),
                }),
            },
            ..split.clone()
        };
        assert_eq!(float_split.predict(&RssiVector::new(vec![-50])).unwrap(), room(2));
        assert_eq!(split.predict(&RssiVector::new(vec![-57])).unwrap(), room(2));
        assert_eq!(split.predict(&RssiVector::new(vec![-55])).unwrap(), room(1));
    }

    #[test]
    fn wrong_vector_length() {
        let model = fit_tree::<f64>(&four_sample_set(), &TrainConfig::default()).unwrap();
        assert!(matches!(
            model.predict(&RssiVector::new(vec![-40, -40])),
            Err(ClassifierError::Shape { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn stopping_rules() {
        let data = db(&[
            (&[-40], 1),
            (&[-45], 2),
            (&[-50], 1),
            (&[-55], 2),
            (&[-60], 1),
            (&[-65], 2),
        ]);
        let stump = fit_tree::<f64>(
            &data,
            &TrainConfig {
                max_depth: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(stump.depth() <= 1);
        let full = fit_tree::<f64>(&data, &TrainConfig::default()).unwrap();
        assert_eq!(full.leaf_count(), 6);
        let coarse = fit_tree::<f64>(
            &data,
            &TrainConfig {
                min_samples_leaf: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(coarse.leaf_count() <= 2);
        let root = fit_tree::<f64>(
            &data,
            &TrainConfig {
                max_depth: Some(0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(root.leaf_count(), 1);
    }

    #[test]
    fn scalar_width_does_not_change_structure() {
        let data = db(&[
            (&[-40, -70], 1),
            (&[-45, -72], 1),
            (&[-70, -41], 2),
            (&[-66, -43], 2),
            (&[-55, -55], 3),
        ]);
        let wide = fit_tree::<f64>(&data, &TrainConfig::default()).unwrap();
        let narrow = fit_tree::<f32>(&data, &TrainConfig::default()).unwrap();
        assert_eq!(wide.depth(), narrow.depth());
        for s in data.samples() {
            assert_eq!(wide.predict(&s.rssi).unwrap(), narrow.predict(&s.rssi).unwrap());
        }
    }

    #[test]
    fn validate_catches_bad_features_and_labels() {
        let mut model = fit_tree::<f64>(&four_sample_set(), &TrainConfig::default()).unwrap();
        model.validate().unwrap();
        model.ap_count = 0;
        assert!(model.validate().is_err());
        let mut model = fit_tree::<f64>(&four_sample_set(), &TrainConfig::default()).unwrap();
        model.classes = vec![room(1)];
        assert!(model.validate().is_err());
    }
}
