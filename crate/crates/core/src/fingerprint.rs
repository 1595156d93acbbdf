//! The radio map: room-labelled RSSI vectors, their CSV form and the
//! train/test split.
//!
//! CSV layout (UTF-8, LF line endings, no quoting):
//!
//! ```text
//! 02:00:00:00:00:01,02:00:00:00:00:02,02:00:00:00:00:03,room
//! -30,-45,-54,1
//! ```
//!
//! The header names each access point by MAC in vector order, followed by
//! the literal `room`. Every row holds one integer dBm per AP and an integer
//! room id. An access point that was not heard is written as the floor value
//! (normally -100), never as an empty cell.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU32;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::mac::MacAddress;
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} readings, found {found}")]
    Shape { line: usize, expected: usize, found: usize },
    #[error("room {0} has too few samples to split")]
    EmptyClass(RoomId),
    #[error("sample {index} has {found} readings but the database has {expected} access points")]
    Width {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Room label, counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "u32")]
pub struct RoomId(NonZeroU32);

impl RoomId {
    pub fn new(value: u32) -> Option<Self> {
        NonZeroU32::new(value).map(RoomId)
    }

    pub fn get(self) -> u32 {
        self.0.get()
    }
}

impl TryFrom<u32> for RoomId {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        RoomId::new(value).ok_or_else(|| "room id must be >= 1".to_string())
    }
}

// Accepts numbers and numeric strings: JSON object keys (per-room counts and
// probabilities) arrive as strings once buffered by tagged enums.
impl<'de> Deserialize<'de> for RoomId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RoomIdVisitor;

        impl Visitor<'_> for RoomIdVisitor {
            type Value = RoomId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a room id >= 1")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<RoomId, E> {
                u32::try_from(v)
                    .ok()
                    .and_then(RoomId::new)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<RoomId, E> {
                u64::try_from(v)
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
                    .and_then(|v| self.visit_u64(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<RoomId, E> {
                v.parse::<u64>()
                    .map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
                    .and_then(|v| self.visit_u64(v))
            }
        }

        deserializer.deserialize_any(RoomIdVisitor)
    }
}

impl From<RoomId> for u32 {
    fn from(id: RoomId) -> u32 {
        id.get()
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Integer dBm readings in access-point order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RssiVector(Vec<i32>);

impl RssiVector {
    pub fn new(readings: Vec<i32>) -> Self {
        RssiVector(readings)
    }

    pub fn readings(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, feature: usize) -> i32 {
        self.0[feature]
    }
}

impl From<Vec<i32>> for RssiVector {
    fn from(readings: Vec<i32>) -> Self {
        RssiVector(readings)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub rssi: RssiVector,
    pub room: RoomId,
}

impl LabeledSample {
    pub fn new(readings: Vec<i32>, room: RoomId) -> Self {
        Self {
            rssi: RssiVector(readings),
            room,
        }
    }
}

/// Fixed-width radio map. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintDatabase {
    ap_macs: Vec<MacAddress>,
    samples: Vec<LabeledSample>,
}

impl FingerprintDatabase {
    pub fn new(ap_macs: Vec<MacAddress>, samples: Vec<LabeledSample>) -> Result<Self, DatasetError> {
        let expected = ap_macs.len();
        if let Some((index, s)) = samples.iter().enumerate().find(|(_, s)| s.rssi.len() != expected) {
            return Err(DatasetError::Width {
                index,
                expected,
                found: s.rssi.len(),
            });
        }
        Ok(Self { ap_macs, samples })
    }

    pub fn ap_macs(&self) -> &[MacAddress] {
        &self.ap_macs
    }

    pub fn ap_count(&self) -> usize {
        self.ap_macs.len()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct labels, ascending.
    pub fn classes(&self) -> Vec<RoomId> {
        self.class_counts().into_keys().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<RoomId, usize> {
        class_counts(self)
    }

    /// New database over the same APs holding the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ap_macs: self.ap_macs.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for mac in &self.ap_macs {
            out.push_str(&mac.to_string());
            out.push(',');
        }
        out.push_str("room\n");
        for sample in &self.samples {
            for r in sample.rssi.readings() {
                out.push_str(&r.to_string());
                out.push(',');
            }
            out.push_str(&sample.room.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or(DatasetError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut columns: Vec<&str> = header.split(',').collect();
        if columns.pop() != Some("room") {
            return Err(DatasetError::Parse {
                line: 1,
                message: "last header column must be `room`".into(),
            });
        }
        let ap_macs = columns
            .iter()
            .map(|c| {
                c.parse::<MacAddress>().map_err(|e| DatasetError::Parse {
                    line: 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let width = ap_macs.len();
        let mut samples = Vec::new();
        let mut rows = lines.peekable();
        while let Some((line, row)) = rows.next() {
            if row.is_empty() {
                // The terminating LF leaves one empty tail; anything else is a blank row.
                if rows.peek().is_none() {
                    break;
                }
                return Err(DatasetError::Parse {
                    line,
                    message: "blank row".into(),
                });
            }
            let cells: Vec<&str> = row.split(',').collect();
            if cells.len() != width + 1 {
                return Err(DatasetError::Shape {
                    line,
                    expected: width,
                    found: cells.len().saturating_sub(1),
                });
            }
            let readings = cells[..width]
                .iter()
                .map(|c| {
                    c.parse::<i32>().map_err(|_| DatasetError::Parse {
                        line,
                        message: format!("`{c}` is not an integer dBm value"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let room = cells[width]
                .parse::<u32>()
                .ok()
                .and_then(RoomId::new)
                .ok_or_else(|| DatasetError::Parse {
                    line,
                    message: format!("`{}` is not a room id", cells[width]),
                })?;
            samples.push(LabeledSample::new(readings, room));
        }
        Ok(Self { ap_macs, samples })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }
}

pub fn class_counts(db: &FingerprintDatabase) -> BTreeMap<RoomId, usize> {
    let mut counts = BTreeMap::new();
    for s in &db.samples {
        *counts.entry(s.room).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 42,
            stratified: true,
        }
    }
}

/// Guards `fraction * n` against landing a hair below an integer.
const ROUNDING_SLACK: f64 = 1e-9;

/// `fraction * n` rounded half up.
fn rounded_share(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5 + ROUNDING_SLACK).floor() as usize
}

/// Per-class train counts: each class gets `floor(f * n_c)`, and the
/// remaining seats up to `round(f * n)` go to the largest fractional parts
/// (ties to the lower room id).
fn apportion(fraction: f64, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = rounded_share(fraction, total);
    let mut alloc: Vec<usize> = sizes
        .iter()
        .map(|&n| (fraction * n as f64 + ROUNDING_SLACK).floor() as usize)
        .collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    let remainder = |i: usize| fraction * sizes[i] as f64 - alloc[i] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}

/// Seeded train/test partition. Both halves keep the original sample order.
pub fn split(
    db: &FingerprintDatabase,
    spec: &SplitSpec,
) -> Result<(FingerprintDatabase, FingerprintDatabase), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(spec.train_fraction));
    }
    let mut rng = RandomStream::new(spec.seed, "split");
    let mut in_train = vec![false; db.len()];

    if spec.stratified {
        let mut by_class: BTreeMap<RoomId, Vec<usize>> = BTreeMap::new();
        for (i, s) in db.samples.iter().enumerate() {
            by_class.entry(s.room).or_default().push(i);
        }
        if let Some((&room, _)) = by_class.iter().find(|(_, idx)| idx.len() < 2) {
            return Err(DatasetError::EmptyClass(room));
        }
        let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
        let shares = apportion(spec.train_fraction, &sizes);
        for (indices, take) in by_class.values_mut().zip(shares) {
            rng.shuffle(indices);
            for &i in &indices[..take] {
                in_train[i] = true;
            }
        }
    } else {
        let mut indices: Vec<usize> = (0..db.len()).collect();
        rng.shuffle(&mut indices);
        let take = rounded_share(spec.train_fraction, db.len()).min(db.len());
        for &i in &indices[..take] {
            in_train[i] = true;
        }
    }

    let (train, test): (Vec<usize>, Vec<usize>) = (0..db.len()).partition(|&i| in_train[i]);
    Ok((db.subset(&train), db.subset(&test)))
}
