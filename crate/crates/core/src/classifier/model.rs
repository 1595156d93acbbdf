//! Persisted model documents.
//!
//! ```json
//! { "version": 1, "kind": "tree", "ap_count": 3, "classes": [1, 2, 3], "root": { "node": "leaf", "counts": { "1": 4 } } }
//! ```
//!
//! `kind` is `tree`, `gnb` or `forest`; the remaining fields are those of
//! [`DecisionTreeModel`], [`GaussianNBModel`] or [`RandomForestModel`].
//! Tree nodes are nested objects tagged by `node` (`internal` carries
//! `feature`, `threshold`, `left`, `right`; `leaf` carries `counts`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, DecisionTreeModel, GaussianNBModel, Proba, RandomForestModel};
use crate::fingerprint::{RoomId, RssiVector};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tree,
    Gnb,
    Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model<S> {
    Tree(DecisionTreeModel<S>),
    Gnb(GaussianNBModel<S>),
    Forest(RandomForestModel<S>),
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<S> {
    version: u32,
    #[serde(flatten)]
    model: Model<S>,
}

impl<S: Scalar> Model<S> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Tree(_) => ModelKind::Tree,
            Model::Gnb(_) => ModelKind::Gnb,
            Model::Forest(_) => ModelKind::Forest,
        }
    }

    fn inner(&self) -> &dyn Classifier<S> {
        match self {
            Model::Tree(m) => m,
            Model::Gnb(m) => m,
            Model::Forest(m) => m,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            Model::Tree(m) => m.validate(),
            Model::Gnb(m) => m.validate(),
            Model::Forest(m) => m.validate(),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let mut de = serde_json::Deserializer::from_str(text);
        // Unpruned trees can nest deeper than serde_json's default limit.
        de.disable_recursion_limit();
        let doc = ModelDocument::<S>::deserialize(&mut de)
            .and_then(|doc| de.end().map(|_| doc))
            .map_err(|e| ClassifierError::InvalidModel(e.to_string()))?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::InvalidModel(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| ClassifierError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let path = path.as_ref();
        let file_err = |message: String| ClassifierError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| file_err(e.to_string()))
    }
}

impl<S: Scalar> Classifier<S> for Model<S> {
    fn ap_count(&self) -> usize {
        self.inner().ap_count()
    }

    fn classes(&self) -> &[RoomId] {
        self.inner().classes()
    }

    fn predict_proba(&self, rssi: &RssiVector) -> Result<Proba<S>, ClassifierError> {
        self.inner().predict_proba(rssi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{fit_forest, fit_gnb, fit_tree, ForestParams, TrainConfig};
    use crate::fingerprint::FingerprintDatabase;
    use crate::radio::{collect_fingerprints, RadioEnvironment};

    fn survey(seed: u64, per_room: usize) -> FingerprintDatabase {
        let env = RadioEnvironment::default_three_rooms(seed);
        collect_fingerprints(&env, per_room, &mut env.stream("fingerprint"))
    }

    fn all_models<S: Scalar>(data: &FingerprintDatabase) -> Vec<Model<S>> {
        vec![
            Model::Tree(fit_tree(data, &TrainConfig::default()).unwrap()),
            Model::Gnb(fit_gnb(data).unwrap()),
            Model::Forest(
                fit_forest(
                    data,
                    &ForestParams {
                        n_trees: 5,
                        ..Default::default()
                    },
                    3,
                )
                .unwrap(),
            ),
        ]
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let data = survey(1, 30);
        let probes = survey(2, 30);
        for model in all_models::<f64>(&data) {
            let json = model.to_json();
            assert!(json.contains("\"version\": 1"));
            let back = Model::<f64>::from_json(&json).unwrap();
            assert_eq!(back, model);
            for s in probes.samples() {
                assert_eq!(
                    back.predict_proba(&s.rssi).unwrap(),
                    model.predict_proba(&s.rssi).unwrap()
                );
            }
        }
    }

    #[test]
    fn single_precision_round_trip() {
        let data = survey(4, 20);
        for model in all_models::<f32>(&data) {
            assert_eq!(Model::<f32>::from_json(&model.to_json()).unwrap(), model);
        }
    }

    #[test]
    fn kind_discriminator() {
        let data = survey(1, 10);
        let kinds: Vec<&str> = all_models::<f64>(&data)
            .iter()
            .map(|m| match m.kind() {
                ModelKind::Tree => "tree",
                ModelKind::Gnb => "gnb",
                ModelKind::Forest => "forest",
            })
            .collect();
        for (model, kind) in all_models::<f64>(&data).iter().zip(kinds) {
            let value: serde_json::Value = serde_json::from_str(&model.to_json()).unwrap();
            assert_eq!(value["kind"], kind);
            assert_eq!(value["ap_count"], 3);
            assert_eq!(value["classes"], serde_json::json!([1, 2, 3]));
        }
    }

    #[test]
    fn rejects_bad_documents() {
        let good = Model::<f64>::Tree(fit_tree(&survey(1, 10), &TrainConfig::default()).unwrap()).to_json();
        let wrong_version = good.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(Model::<f64>::from_json(&wrong_version).is_err());
        let wrong_kind = good.replacen("\"kind\": \"tree\"", "\"kind\": \"svm\"", 1);
        assert!(Model::<f64>::from_json(&wrong_kind).is_err());
        let narrowed = good.replacen("\"ap_count\": 3", "\"ap_count\": 0", 1);
        assert!(Model::<f64>::from_json(&narrowed).is_err());
        assert!(Model::<f64>::from_json("{").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = Model::<f64>::Gnb(fit_gnb(&survey(3, 10)).unwrap());
        model.save(&path).unwrap();
        assert_eq!(Model::<f64>::load(&path).unwrap(), model);
        assert!(Model::<f64>::load(dir.path().join("missing.json")).is_err());
    }
}
