use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on, DecisionTreeModel, TrainConfig};
use super::{Classifier, ClassifierError, Proba};
use crate::fingerprint::{FingerprintDatabase, RoomId, RssiVector};
use crate::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn per split; `None` means `ceil(sqrt(ap_count))`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    pub tree: TrainConfig,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 25,
            feature_subsample: None,
            bootstrap: true,
            tree: TrainConfig::default(),
        }
    }
}

impl ForestParams {
    pub fn features_per_split(&self, ap_count: usize) -> usize {
        self.feature_subsample
            .unwrap_or_else(|| (ap_count as f64).sqrt().ceil() as usize)
            .clamp(1, ap_count.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel<S> {
    pub ap_count: usize,
    pub classes: Vec<RoomId>,
    pub n_trees: usize,
    pub feature_subsample: usize,
    pub bootstrap: bool,
    pub seed: u64,
    pub trees: Vec<DecisionTreeModel<S>>,
}

/// Bagged CART trees. Tree `t` draws from the stream `(seed, "forest/t")`,
/// so the result does not depend on training order.
pub fn fit_forest<S: Scalar>(
    train: &FingerprintDatabase,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForestModel<S>, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if params.n_trees == 0 {
        return Err(ClassifierError::InvalidModel("a forest needs at least one tree".into()));
    }
    let ap_count = train.ap_count();
    let classes = train.classes();
    let per_split = params.features_per_split(ap_count);
    let n = train.len();

    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = RandomStream::indexed(seed, "forest", t as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n as u64) as usize).collect()
            } else {
                (0..n).collect()
            };
            let mut pick = || rng.choose_indices(ap_count, per_split);
            fit_tree_on(train.samples(), idx, ap_count, classes.clone(), &params.tree, &mut pick)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RandomForestModel {
        ap_count,
        classes,
        n_trees: params.n_trees,
        feature_subsample: per_split,
        bootstrap: params.bootstrap,
        seed,
        trees,
    })
}

impl<S: Scalar> RandomForestModel<S> {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.trees.is_empty() || self.trees.len() != self.n_trees {
            return Err(ClassifierError::InvalidModel(format!(
                "expected {} trees, found {}",
                self.n_trees,
                self.trees.len()
            )));
        }
        for tree in &self.trees {
            if tree.ap_count != self.ap_count || tree.classes != self.classes {
                return Err(ClassifierError::InvalidModel("tree disagrees with forest shape".into()));
            }
            tree.validate()?;
        }
        Ok(())
    }
}

impl<S: Scalar> Classifier<S> for RandomForestModel<S> {
    fn ap_count(&self) -> usize {
        self.ap_count
    }

    fn classes(&self) -> &[RoomId] {
        &self.classes
    }

    /// Mean of the per-tree leaf distributions.
    fn predict_proba(&self, rssi: &RssiVector) -> Result<Proba<S>, ClassifierError> {
        self.check_shape(rssi)?;
        let mut sum: Proba<S> = self.classes.iter().map(|&c| (c, S::zero())).collect();
        for tree in &self.trees {
            for (room, p) in tree.predict_proba(rssi)? {
                let slot = sum.get_mut(&room).expect("tree classes match forest");
                *slot = *slot + p;
            }
        }
        let n = S::of_usize(self.trees.len());
        Ok(sum.into_iter().map(|(room, p)| (room, p / n)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::fit_tree;
    use crate::radio::{collect_fingerprints, RadioEnvironment};

    fn survey(seed: u64) -> FingerprintDatabase {
        let env = RadioEnvironment::default_three_rooms(seed);
        collect_fingerprints(&env, 20, &mut env.stream("fingerprint"))
    }

    #[test]
    fn degenerate_forest_matches_single_tree() {
        let data = survey(3);
        let params = ForestParams {
            n_trees: 1,
            feature_subsample: Some(data.ap_count()),
            bootstrap: false,
            tree: TrainConfig::default(),
        };
        let forest = fit_forest::<f64>(&data, &params, 99).unwrap();
        let tree = fit_tree::<f64>(&data, &TrainConfig::default()).unwrap();
        assert_eq!(forest.trees[0], tree);
        let probe = survey(4);
        for s in probe.samples() {
            assert_eq!(
                forest.predict_proba(&s.rssi).unwrap(),
                tree.predict_proba(&s.rssi).unwrap()
            );
        }
    }

    #[test]
    fn seeded() {
        let data = survey(5);
        let a = fit_forest::<f64>(&data, &ForestParams::default(), 1).unwrap();
        let b = fit_forest::<f64>(&data, &ForestParams::default(), 1).unwrap();
        assert_eq!(a, b);
        let c = fit_forest::<f64>(&data, &ForestParams::default(), 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let data = survey(6);
        let forest = fit_forest::<f64>(&data, &ForestParams::default(), 8).unwrap();
        for s in survey(7).samples() {
            let p = forest.predict_proba(&s.rssi).unwrap();
            assert!(p.values().all(|v| (0.0..=1.0).contains(v)));
            assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_subsample_is_ceil_sqrt() {
        let p = ForestParams::default();
        assert_eq!(p.features_per_split(3), 2);
        assert_eq!(p.features_per_split(9), 3);
        assert_eq!(p.features_per_split(10), 4);
        assert_eq!(
            ForestParams {
                feature_subsample: Some(50),
                ..p
            }
            .features_per_split(3),
            3
        );
    }

    #[test]
    fn rejects_empty_inputs() {
        let empty = FingerprintDatabase::new(vec![crate::mac::MacAddress::local(1)], vec![]).unwrap();
        assert!(matches!(
            fit_forest::<f64>(&empty, &ForestParams::default(), 0),
            Err(ClassifierError::EmptyDataset)
        ));
        let zero = ForestParams {
            n_trees: 0,
            ..ForestParams::default()
        };
        assert!(fit_forest::<f64>(&survey(1), &zero, 0).is_err());
    }
}
