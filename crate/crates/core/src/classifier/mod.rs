//! Room classifiers over RSSI vectors: a CART decision tree (the model used
//! for localization) and two baselines, Gaussian naive Bayes and a random
//! forest of the same trees.
//!
//! All three expose [`Classifier`], which returns a probability per known
//! room; `predict` is the argmax of that map with ties going to the lowest
//! room id.

mod forest;
mod gnb;
mod model;
mod tree;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fingerprint::{RoomId, RssiVector};
use crate::scalar::Scalar;

pub use forest::{fit_forest, ForestParams, RandomForestModel};
pub use gnb::{fit_gnb, GaussianNBModel, VARIANCE_FLOOR};
pub use model::{Model, ModelKind, MODEL_FORMAT_VERSION};
pub use tree::{best_split, fit_tree, gini, Criterion, DecisionTreeModel, Split, TrainConfig, TreeNode};

/// Class probability per room.
pub type Proba<S> = BTreeMap<RoomId, S>;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("impurity of an empty set")]
    EmptySet,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("class {0} has no training samples")]
    EmptyClass(RoomId),
    #[error("expected an RSSI vector of length {expected}, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file {path}: {message}")]
    File { path: String, message: String },
}

pub trait Classifier<S: Scalar> {
    fn ap_count(&self) -> usize;

    /// Known rooms, ascending.
    fn classes(&self) -> &[RoomId];

    /// Probability for every known room; the values sum to 1.
    fn predict_proba(&self, rssi: &RssiVector) -> Result<Proba<S>, ClassifierError>;

    fn predict(&self, rssi: &RssiVector) -> Result<RoomId, ClassifierError> {
        let proba = self.predict_proba(rssi)?;
        Ok(argmax(&proba).expect("classifiers know at least one class"))
    }

    fn check_shape(&self, rssi: &RssiVector) -> Result<(), ClassifierError> {
        if rssi.len() == self.ap_count() {
            Ok(())
        } else {
            Err(ClassifierError::Shape {
                expected: self.ap_count(),
                found: rssi.len(),
            })
        }
    }
}

/// Most probable room; ties resolve to the lowest id.
pub fn argmax<S: Scalar>(proba: &Proba<S>) -> Option<RoomId> {
    let mut best: Option<(RoomId, S)> = None;
    for (&room, &p) in proba {
        match best {
            Some((_, q)) if p <= q => {}
            _ => best = Some((room, p)),
        }
    }
    best.map(|(room, _)| room)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_room_on_ties() {
        let r = |n| RoomId::new(n).unwrap();
        let proba: Proba<f64> = [(r(1), 0.25), (r(2), 0.375), (r(3), 0.375)].into_iter().collect();
        assert_eq!(argmax(&proba), Some(r(2)));
        let flat: Proba<f32> = [(r(4), 0.5), (r(2), 0.5)].into_iter().collect();
        assert_eq!(argmax(&flat), Some(r(2)));
        assert_eq!(argmax::<f64>(&Proba::new()), None);
    }
}
