//! Room-level indoor localization from Wi-Fi RSSI fingerprints, driving a
//! relay bank over an authenticated connectionless link.
//!
//! The pipeline, module by module:
//!
//! * [`radio`] simulates RSSI from access points in a floorplan.
//! * [`fingerprint`] stores room-labelled RSSI vectors and splits them.
//! * [`classifier`] trains a CART tree (plus naive Bayes and random forest baselines).
//! * [`eval`] scores predictions: accuracy, confusion matrix, one-vs-rest ROC.
//! * [`link`] frames, authenticates and delivers control bytes in virtual time.
//! * [`control`] runs the sense, classify, signal, actuate loop.
//!
//! Numeric code in [`classifier`] and [`eval`] is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix it to `f64`.

pub mod classifier;
pub mod control;
pub mod eval;
pub mod fingerprint;
pub mod link;
pub mod mac;
pub mod radio;
pub mod rng;
pub mod scalar;

pub use fingerprint::{FingerprintDatabase, LabeledSample, RoomId, RssiVector, SplitSpec};
pub use mac::MacAddress;
pub use radio::{Point2D, RadioEnvironment};
pub use rng::RandomStream;
pub use scalar::Scalar;

pub type DecisionTree = classifier::DecisionTreeModel<f64>;
pub type GaussianNB = classifier::GaussianNBModel<f64>;
pub type RandomForest = classifier::RandomForestModel<f64>;
pub type Model = classifier::Model<f64>;
pub type Proba = classifier::Proba<f64>;
