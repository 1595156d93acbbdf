//! Simulated indoor radio: rooms, access points and log-distance path loss
//! with Gaussian shadowing.
//!
//! The received power from an access point at distance `d` is
//!
//! ```text
//! rssi = tx_power - pl0 - 10 * n * log10(max(d, 1 m) / 1 m) + X,   X ~ N(0, sigma^2)
//! ```
//!
//! rounded to an integer dBm and clamped to `[floor, ceiling]`.
//!
//! # Environment file
//!
//! ```json
//! {
//!   "rooms":  [{ "id": 1, "rect": { "min": { "x": 0.0, "y": 0.0 }, "max": { "x": 4.0, "y": 4.0 } } }],
//!   "aps":    [{ "mac": "02:00:00:00:00:01", "x": 2.0, "y": 2.0, "tx_power": 20.0 }],
//!   "params": { "pl0": 40.0, "exponent": 3.0, "shadow_sigma": 2.0, "floor": -100, "ceiling": -30 },
//!   "seed": 42
//! }
//! ```
//!
//! Access-point order in `aps` defines the fingerprint vector order. `params`
//! and `seed` may be omitted and take the defaults below.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{FingerprintDatabase, LabeledSample, RoomId, RssiVector};
use crate::mac::MacAddress;
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("cannot read environment file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed environment file {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Linear interpolation, `t = 0` at `self`, `t = 1` at `other`.
    pub fn lerp(&self, other: &Point2D, t: f64) -> Point2D {
        Point2D::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Axis-aligned rectangle, closed on its min edges and open on its max edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2D,
    pub max: Point2D,
}

impl Rect {
    pub fn contains(&self, p: &Point2D) -> bool {
        p.x >= self.min.x && p.x < self.max.x && p.y >= self.min.y && p.y < self.max.y
    }

    pub fn center(&self) -> Point2D {
        self.min.lerp(&self.max, 0.5)
    }

    fn overlaps(&self, other: &Rect) -> bool {
        self.min.x < other.max.x && other.min.x < self.max.x && self.min.y < other.max.y && other.min.y < self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub index: usize,
    pub mac: MacAddress,
    pub position: Point2D,
    /// dBm
    pub tx_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossParams {
    /// Path loss at 1 m, dB.
    pub pl0: f64,
    pub exponent: f64,
    /// Shadowing standard deviation, dB.
    pub shadow_sigma: f64,
    /// Lowest reportable reading, dBm. Also the value recorded for an unheard AP.
    pub floor: i32,
    /// Highest reportable reading, dBm.
    pub ceiling: i32,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            pl0: 40.0,
            exponent: 3.0,
            shadow_sigma: 2.0,
            floor: -100,
            ceiling: -30,
        }
    }
}

impl PathLossParams {
    fn validate(&self) -> Result<(), RadioError> {
        if !(self.pl0.is_finite() && self.exponent.is_finite() && self.shadow_sigma.is_finite()) {
            return Err(RadioError::Invalid("path-loss parameters must be finite".into()));
        }
        if self.exponent < 1.0 {
            return Err(RadioError::Invalid(format!("path-loss exponent {} < 1", self.exponent)));
        }
        if self.shadow_sigma < 0.0 {
            return Err(RadioError::Invalid("shadow_sigma must be >= 0".into()));
        }
        if self.floor >= self.ceiling {
            return Err(RadioError::Invalid(format!(
                "floor {} must be below ceiling {}",
                self.floor, self.ceiling
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioEnvironment {
    pub rooms: Vec<Room>,
    pub aps: Vec<AccessPoint>,
    pub params: PathLossParams,
    pub seed: u64,
}

/// On-disk shape of an access point; the index is its position in the list.
#[derive(Serialize, Deserialize)]
struct AccessPointEntry {
    mac: MacAddress,
    x: f64,
    y: f64,
    tx_power: f64,
}

#[derive(Serialize, Deserialize)]
struct EnvironmentFile {
    rooms: Vec<Room>,
    aps: Vec<AccessPointEntry>,
    #[serde(default)]
    params: PathLossParams,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl RadioEnvironment {
    /// Checks every structural invariant and assigns AP indices by order.
    pub fn new(
        rooms: Vec<Room>,
        aps: Vec<(MacAddress, Point2D, f64)>,
        params: PathLossParams,
        seed: u64,
    ) -> Result<Self, RadioError> {
        let aps = aps
            .into_iter()
            .enumerate()
            .map(|(index, (mac, position, tx_power))| AccessPoint {
                index,
                mac,
                position,
                tx_power,
            })
            .collect();
        let env = Self {
            rooms,
            aps,
            params,
            seed,
        };
        env.validate()?;
        Ok(env)
    }

    /// Three 4 m x 4 m rooms in a row, separated by 2 m hallways, each with
    /// one 20 dBm access point at its center.
    pub fn default_three_rooms(seed: u64) -> Self {
        let rooms = (0..3)
            .map(|i| {
                let x0 = 6.0 * i as f64;
                Room {
                    id: RoomId::new(i as u32 + 1).expect("nonzero"),
                    rect: Rect {
                        min: Point2D::new(x0, 0.0),
                        max: Point2D::new(x0 + 4.0, 4.0),
                    },
                }
            })
            .collect::<Vec<_>>();
        let aps = rooms
            .iter()
            .enumerate()
            .map(|(i, room)| (MacAddress::local(i as u16 + 1), room.rect.center(), 20.0))
            .collect();
        Self::new(rooms, aps, PathLossParams::default(), seed).expect("default environment is valid")
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if self.rooms.is_empty() {
            return Err(RadioError::Invalid("at least one room is required".into()));
        }
        if self.aps.is_empty() {
            return Err(RadioError::Invalid("at least one access point is required".into()));
        }
        self.params.validate()?;

        let mut ids = BTreeSet::new();
        for (i, room) in self.rooms.iter().enumerate() {
            let r = &room.rect;
            if !(r.min.is_finite() && r.max.is_finite()) || r.min.x >= r.max.x || r.min.y >= r.max.y {
                return Err(RadioError::Invalid(format!("room {} has an empty rectangle", room.id)));
            }
            if !ids.insert(room.id) {
                return Err(RadioError::Invalid(format!("duplicate room id {}", room.id)));
            }
            if let Some(other) = self.rooms[..i].iter().find(|o| o.rect.overlaps(r)) {
                return Err(RadioError::Invalid(format!(
                    "rooms {} and {} overlap",
                    other.id, room.id
                )));
            }
        }

        let mut macs = BTreeSet::new();
        for (i, ap) in self.aps.iter().enumerate() {
            if ap.index != i {
                return Err(RadioError::Invalid(format!(
                    "access point indices must be 0..N-1, found {} at position {i}",
                    ap.index
                )));
            }
            if !macs.insert(ap.mac) {
                return Err(RadioError::Invalid(format!("duplicate AP MAC {}", ap.mac)));
            }
            if !ap.position.is_finite() || !ap.tx_power.is_finite() {
                return Err(RadioError::Invalid(format!("AP {} has non-finite fields", ap.mac)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: EnvironmentFile = serde_json::from_str(text)?;
        Ok(Self::from_file(file))
    }

    fn from_file(file: EnvironmentFile) -> Self {
        Self {
            rooms: file.rooms,
            aps: file
                .aps
                .into_iter()
                .enumerate()
                .map(|(index, ap)| AccessPoint {
                    index,
                    mac: ap.mac,
                    position: Point2D::new(ap.x, ap.y),
                    tx_power: ap.tx_power,
                })
                .collect(),
            params: file.params,
            seed: file.seed,
        }
    }

    pub fn to_json(&self) -> String {
        let file = EnvironmentFile {
            rooms: self.rooms.clone(),
            aps: self
                .aps
                .iter()
                .map(|ap| AccessPointEntry {
                    mac: ap.mac,
                    x: ap.position.x,
                    y: ap.position.y,
                    tx_power: ap.tx_power,
                })
                .collect(),
            params: self.params,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).expect("environment serializes")
    }

    /// Reads and validates an environment file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RadioError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| RadioError::Io {
            path: shown.clone(),
            source,
        })?;
        let env = Self::from_json(&text).map_err(|source| RadioError::Json { path: shown, source })?;
        env.validate()?;
        Ok(env)
    }

    pub fn ap_macs(&self) -> Vec<MacAddress> {
        self.aps.iter().map(|ap| ap.mac).collect()
    }

    pub fn room_ids(&self) -> Vec<RoomId> {
        let mut ids: Vec<RoomId> = self.rooms.iter().map(|r| r.id).collect();
        ids.sort();
        ids
    }

    /// Stream for one purpose, derived from the environment seed.
    pub fn stream(&self, label: &str) -> RandomStream {
        RandomStream::new(self.seed, label)
    }

    /// Mean received power (no shadowing, no rounding or clamping), dBm.
    pub fn mean_rssi(&self, ap: &AccessPoint, p: &Point2D) -> f64 {
        let d = ap.position.distance(p).max(1.0);
        ap.tx_power - self.params.pl0 - 10.0 * self.params.exponent * d.log10()
    }
}

/// One integer-dBm reading from `ap` at `p`.
///
/// A shadowing variate is drawn on every call, including when
/// `shadow_sigma == 0`, so the stream position does not depend on the
/// parameters.
pub fn rssi_at(env: &RadioEnvironment, ap: &AccessPoint, p: &Point2D, rng: &mut RandomStream) -> i32 {
    let shadow = env.params.shadow_sigma * rng.normal();
    let value = (env.mean_rssi(ap, p) + shadow).round();
    let clamped = value.clamp(f64::from(env.params.floor), f64::from(env.params.ceiling));
    clamped as i32
}

/// One reading per access point, in AP index order.
pub fn sample_vector(env: &RadioEnvironment, p: &Point2D, rng: &mut RandomStream) -> RssiVector {
    RssiVector::new(env.aps.iter().map(|ap| rssi_at(env, ap, p, rng)).collect())
}

pub fn room_of(rooms: &[Room], p: &Point2D) -> Option<RoomId> {
    rooms.iter().find(|room| room.rect.contains(p)).map(|room| room.id)
}

/// Offline survey: `samples_per_room` uniformly placed readings per room,
/// room-major in floorplan order. Also returns the generation points.
pub fn collect_fingerprints_with_points(
    env: &RadioEnvironment,
    samples_per_room: usize,
    rng: &mut RandomStream,
) -> (FingerprintDatabase, Vec<Point2D>) {
    let mut samples = Vec::with_capacity(env.rooms.len() * samples_per_room);
    let mut points = Vec::with_capacity(samples.capacity());
    for room in &env.rooms {
        for _ in 0..samples_per_room {
            let p = Point2D::new(
                rng.uniform(room.rect.min.x, room.rect.max.x),
                rng.uniform(room.rect.min.y, room.rect.max.y),
            );
            let rssi = sample_vector(env, &p, rng);
            samples.push(LabeledSample { rssi, room: room.id });
            points.push(p);
        }
    }
    let db = FingerprintDatabase::new(env.ap_macs(), samples).expect("vectors match AP count");
    (db, points)
}

pub fn collect_fingerprints(
    env: &RadioEnvironment,
    samples_per_room: usize,
    rng: &mut RandomStream,
) -> FingerprintDatabase {
    collect_fingerprints_with_points(env, samples_per_room, rng).0
}
