use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, Proba};
use crate::fingerprint::{FingerprintDatabase, RoomId, RssiVector};
use crate::scalar::Scalar;

/// Lower bound on every per-class feature variance, dBm^2.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Gaussian naive Bayes: one independent normal per (room, access point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNBModel<S> {
    pub ap_count: usize,
    pub classes: Vec<RoomId>,
    pub priors: Vec<S>,
    /// `means[class][feature]`, dBm.
    pub means: Vec<Vec<S>>,
    /// `variances[class][feature]`, dBm^2, floored at [`VARIANCE_FLOOR`].
    pub variances: Vec<Vec<S>>,
}

pub fn fit_gnb<S: Scalar>(train: &FingerprintDatabase) -> Result<GaussianNBModel<S>, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let ap_count = train.ap_count();
    let classes = train.classes();
    let total = S::of_usize(train.len());
    let floor = S::of_f64(VARIANCE_FLOOR);

    let mut priors = Vec::with_capacity(classes.len());
    let mut means = Vec::with_capacity(classes.len());
    let mut variances = Vec::with_capacity(classes.len());
    for &class in &classes {
        let rows: Vec<&RssiVector> = train
            .samples()
            .iter()
            .filter(|s| s.room == class)
            .map(|s| &s.rssi)
            .collect();
        if rows.is_empty() {
            return Err(ClassifierError::EmptyClass(class));
        }
        let n = S::of_usize(rows.len());
        let mean: Vec<S> = (0..ap_count)
            .map(|f| rows.iter().map(|r| S::of_i32(r.get(f))).fold(S::zero(), |a, b| a + b) / n)
            .collect();
        let var: Vec<S> = (0..ap_count)
            .map(|f| {
                let ss = rows
                    .iter()
                    .map(|r| (S::of_i32(r.get(f)) - mean[f]).powi(2))
                    .fold(S::zero(), |a, b| a + b);
                (ss / n).max(floor)
            })
            .collect();
        priors.push(n / total);
        means.push(mean);
        variances.push(var);
    }
    Ok(GaussianNBModel {
        ap_count,
        classes,
        priors,
        means,
        variances,
    })
}

impl<S: Scalar> GaussianNBModel<S> {
    /// Unnormalized `ln P(class) + sum_f ln N(x_f; mean, var)` per class.
    pub fn joint_log_likelihood(&self, rssi: &RssiVector) -> Result<Vec<S>, ClassifierError> {
        self.check_shape(rssi)?;
        let two = S::of_f64(2.0);
        let ln_two_pi = S::of_f64(std::f64::consts::TAU.ln());
        Ok((0..self.classes.len())
            .map(|c| {
                let mut ll = self.priors[c].ln();
                for f in 0..self.ap_count {
                    let var = self.variances[c][f];
                    let d = S::of_i32(rssi.get(f)) - self.means[c][f];
                    ll = ll - (ln_two_pi + var.ln()) / two - d * d / (two * var);
                }
                ll
            })
            .collect())
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let k = self.classes.len();
        if k == 0 || !self.classes.windows(2).all(|w| w[0] < w[1]) {
            return Err(ClassifierError::InvalidModel(
                "classes must be non-empty and strictly ascending".into(),
            ));
        }
        let shaped = |rows: &Vec<Vec<S>>| rows.len() == k && rows.iter().all(|r| r.len() == self.ap_count);
        if self.priors.len() != k || !shaped(&self.means) || !shaped(&self.variances) {
            return Err(ClassifierError::InvalidModel(
                "parameter tables do not match classes x ap_count".into(),
            ));
        }
        if self
            .variances
            .iter()
            .flatten()
            .any(|v| v.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater))
        {
            return Err(ClassifierError::InvalidModel("variances must be positive".into()));
        }
        Ok(())
    }
}

impl<S: Scalar> Classifier<S> for GaussianNBModel<S> {
    fn ap_count(&self) -> usize {
        self.ap_count
    }

    fn classes(&self) -> &[RoomId] {
        &self.classes
    }

    fn predict_proba(&self, rssi: &RssiVector) -> Result<Proba<S>, ClassifierError> {
        let ll = self.joint_log_likelihood(rssi)?;
        let max = ll.iter().copied().fold(S::neg_infinity(), S::max);
        let weights: Vec<S> = ll.iter().map(|&l| (l - max).exp()).collect();
        let norm = weights.iter().copied().fold(S::zero(), |a, b| a + b);
        Ok(self.classes.iter().zip(weights).map(|(&c, w)| (c, w / norm)).collect())
    }
}
