//! The sense, classify, signal, actuate loop.
//!
//! A wearable samples RSSI at the user's position, maps it to a one-octet
//! room code and sends it to the control unit, which switches exactly that
//! room's light and fan on and every other room's off. Code 0 turns
//! everything off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{argmax, Classifier, ClassifierError, Model};
use crate::fingerprint::RoomId;
use crate::link::{ChannelConfig, Endpoint, LinkError, Network, PeerKey, Role, SimTime};
use crate::mac::MacAddress;
use crate::radio::{room_of, sample_vector, Point2D, RadioEnvironment, Room};
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("signal code {code} exceeds the room count {rooms}")]
    InvalidCode { code: u8, rooms: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

/// One-octet room code: 0 is away/unknown, `k` is room `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSignal(pub u8);

impl ControlSignal {
    pub const AWAY: ControlSignal = ControlSignal(0);

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn for_room(room: RoomId) -> Result<Self, ControlError> {
        u8::try_from(room.get())
            .map(ControlSignal)
            .map_err(|_| ControlError::Scenario(format!("room {room} has no one-octet code")))
    }

    pub fn room(self) -> Option<RoomId> {
        RoomId::new(u32::from(self.0))
    }
}

/// Relay states, indexed by room code minus one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorBank {
    pub lights: Vec<bool>,
    pub fans: Vec<bool>,
}

impl ActuatorBank {
    /// All off.
    pub fn new(rooms: usize) -> Self {
        Self {
            lights: vec![false; rooms],
            fans: vec![false; rooms],
        }
    }

    pub fn rooms(&self) -> usize {
        self.lights.len()
    }

    /// The bank `sig` selects. Depends only on the signal, not on `self`'s
    /// current state.
    pub fn apply_signal(&self, sig: ControlSignal) -> Result<ActuatorBank, ControlError> {
        let rooms = self.rooms();
        let code = usize::from(sig.code());
        if code > rooms {
            return Err(ControlError::InvalidCode {
                code: sig.code(),
                rooms,
            });
        }
        let mut next = ActuatorBank::new(rooms);
        if code > 0 {
            next.lights[code - 1] = true;
            next.fans[code - 1] = true;
        }
        Ok(next)
    }

    /// Code of the room whose pair is on, 0 when all are off.
    pub fn active_code(&self) -> u8 {
        self.lights
            .iter()
            .zip(&self.fans)
            .position(|(l, f)| *l && *f)
            .map_or(0, |i| i as u8 + 1)
    }

    pub fn active_room(&self) -> Option<RoomId> {
        ControlSignal(self.active_code()).room()
    }
}

/// Piecewise-linear path through the floorplan. The position holds at the
/// first waypoint before it and at the last after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Waypoint>", into = "Vec<Waypoint>")]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// seconds
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, ControlError> {
        if waypoints.is_empty() {
            return Err(ControlError::Trajectory("no waypoints".into()));
        }
        if waypoints
            .iter()
            .any(|w| !(w.t.is_finite() && w.x.is_finite() && w.y.is_finite()))
        {
            return Err(ControlError::Trajectory("non-finite waypoint".into()));
        }
        if waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(ControlError::Trajectory("times must be strictly increasing".into()));
        }
        Ok(Self { waypoints })
    }

    pub fn stationary(p: Point2D) -> Self {
        Self {
            waypoints: vec![Waypoint { t: 0.0, x: p.x, y: p.y }],
        }
    }

    /// 180 s through the default floorplan: 55 s at each room center with
    /// 10 s walks between them.
    pub fn default_walk() -> Self {
        let w = |t, x| Waypoint { t, x, y: 2.0 };
        Self::new(vec![
            w(0.0, 2.0),
            w(55.0, 2.0),
            w(65.0, 8.0),
            w(115.0, 8.0),
            w(125.0, 14.0),
            w(180.0, 14.0),
        ])
        .expect("valid waypoints")
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn position_at(&self, t: f64) -> Point2D {
        let wps = &self.waypoints;
        let point = |w: &Waypoint| Point2D::new(w.x, w.y);
        if t <= wps[0].t {
            return point(&wps[0]);
        }
        for pair in wps.windows(2) {
            if t <= pair[1].t {
                let f = (t - pair[0].t) / (pair[1].t - pair[0].t);
                return point(&pair[0]).lerp(&point(&pair[1]), f);
            }
        }
        point(&wps[wps.len() - 1])
    }
}

impl TryFrom<Vec<Waypoint>> for Trajectory {
    type Error = ControlError;

    fn try_from(waypoints: Vec<Waypoint>) -> Result<Self, ControlError> {
        Trajectory::new(waypoints)
    }
}

impl From<Trajectory> for Vec<Waypoint> {
    fn from(t: Trajectory) -> Self {
        t.waypoints
    }
}

/// What turns an RSSI sample into a room code.
#[derive(Debug, Clone)]
pub enum Localizer {
    /// A trained model. With `abstain` set, a top probability below it
    /// yields code 0.
    Model { model: Model<f64>, abstain: Option<f64> },
    /// Ground truth from the floorplan, ignoring the RSSI sample.
    Oracle,
}

impl Localizer {
    pub fn model(model: Model<f64>) -> Self {
        Localizer::Model { model, abstain: None }
    }
}

#[derive(Debug, Clone)]
pub struct WearableNode {
    pub position: Point2D,
    pub localizer: Localizer,
    pub endpoint: Endpoint,
    /// seconds
    pub sample_period: f64,
}

/// Senses at the node's position and picks the code to send. The RSSI
/// sample is drawn for every localizer so the stream stays aligned.
pub fn classify_and_signal(
    node: &WearableNode,
    env: &RadioEnvironment,
    rng: &mut RandomStream,
) -> Result<ControlSignal, ControlError> {
    let rssi = sample_vector(env, &node.position, rng);
    match &node.localizer {
        Localizer::Model { model, abstain } => {
            let proba = model.predict_proba(&rssi)?;
            let room = argmax(&proba).expect("models know at least one class");
            match abstain {
                Some(threshold) if proba[&room] < *threshold => Ok(ControlSignal::AWAY),
                _ => ControlSignal::for_room(room),
            }
        }
        Localizer::Oracle => match room_of(&env.rooms, &node.position) {
            Some(room) => ControlSignal::for_room(room),
            None => Ok(ControlSignal::AWAY),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliableConfig {
    pub retries: u32,
    /// seconds
    pub ack_timeout: f64,
}

impl Default for ReliableConfig {
    fn default() -> Self {
        Self {
            retries: 3,
            ack_timeout: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// seconds
    pub duration: f64,
    /// seconds
    pub sample_period: f64,
    pub trajectory: Trajectory,
    /// Acknowledged delivery with retransmission instead of fire-and-forget.
    pub reliable: Option<ReliableConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 180.0,
            sample_period: 1.0,
            trajectory: Trajectory::default_walk(),
            reliable: None,
        }
    }
}

pub const WEARABLE_MAC: MacAddress = MacAddress::local(0x0101);
pub const CONTROL_UNIT_MAC: MacAddress = MacAddress::local(0x0201);

/// One line of the scenario log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    /// seconds
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Room containing the user, `None` in a hallway or outside.
    pub truth: Option<RoomId>,
    /// Code the wearable computed, `None` if classification failed.
    pub code: Option<u8>,
    /// What happened to this tick's frame at the control unit.
    pub outcome: String,
    pub attempts: u32,
    pub lights: Vec<bool>,
    pub fans: Vec<bool>,
    pub actuator_room: Option<RoomId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub ticks: usize,
    /// Ticks before the first delivered frame.
    pub warmup_ticks: usize,
    /// Post-warmup ticks with the user inside a room.
    pub scored_ticks: usize,
    pub matched_ticks: usize,
    /// `matched_ticks / scored_ticks`, 0 when nothing was scored.
    pub tracking_accuracy: f64,
    /// Post-warmup ticks with the user outside every room.
    pub unscored_ticks: usize,
    pub frames_sent: usize,
    pub transmissions: usize,
    pub frames_delivered: usize,
    pub frames_lost: usize,
    /// Mean time from sensing to actuation over delivered frames, seconds.
    pub mean_actuation_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLog {
    pub ticks: Vec<TickRecord>,
    pub summary: ScenarioSummary,
    pub events_jsonl: String,
}

impl ScenarioLog {
    pub fn ticks_jsonl(&self) -> String {
        let mut out = String::new();
        for tick in &self.ticks {
            out.push_str(&serde_json::to_string(tick).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }
}

fn check_rooms(rooms: &[Room]) -> Result<(), ControlError> {
    for (i, room) in rooms.iter().enumerate() {
        if room.id.get() as usize != i + 1 || i >= usize::from(u8::MAX) {
            return Err(ControlError::Scenario(
                "room ids must be 1..=N in floorplan order, N < 256".into(),
            ));
        }
    }
    Ok(())
}

/// Runs the wearable and control unit over one channel in virtual time.
///
/// Tick `i` happens at `i * sample_period` for every tick before
/// `duration`: the wearable senses and sends, then the network runs until
/// the next tick and the record captures the actuators at that point.
/// Classification and link failures are recorded, not returned.
pub fn run_scenario(
    env: &RadioEnvironment,
    localizer: Localizer,
    scenario: &ScenarioConfig,
    channel: ChannelConfig,
    seed: u64,
) -> Result<ScenarioLog, ControlError> {
    check_rooms(&env.rooms)?;
    if !(scenario.sample_period > 0.0 && scenario.sample_period.is_finite()) {
        return Err(ControlError::Scenario("sample_period must be positive".into()));
    }
    if !(scenario.duration >= 0.0 && scenario.duration.is_finite()) {
        return Err(ControlError::Scenario("duration must be non-negative".into()));
    }
    if let Localizer::Model { model, .. } = &localizer {
        if model.ap_count() != env.aps.len() {
            return Err(ClassifierError::Shape {
                expected: model.ap_count(),
                found: env.aps.len(),
            }
            .into());
        }
    }

    let key = PeerKey::from_seed(seed);
    let mut network = Network::new(channel);
    network.add_endpoint(Endpoint::new(CONTROL_UNIT_MAC, Role::Responder, key.clone()));
    let mut node = WearableNode {
        position: scenario.trajectory.position_at(0.0),
        localizer,
        endpoint: Endpoint::new(WEARABLE_MAC, Role::Initiator, key),
        sample_period: scenario.sample_period,
    };
    network.add_endpoint(node.endpoint.clone());

    let mut sense = RandomStream::new(seed, "sense");
    let mut bank = ActuatorBank::new(env.rooms.len());
    let period = SimTime::from_secs_f64(scenario.sample_period);
    let mut ticks = Vec::new();
    let mut latencies = Vec::new();
    let mut transmissions = 0usize;
    let mut frames_sent = 0usize;

    let mut tick = 0usize;
    loop {
        let t_secs = tick as f64 * scenario.sample_period;
        if t_secs >= scenario.duration {
            break;
        }
        let now = SimTime(period.nanos() * tick as u64);
        network.advance(now);
        network.take_arrivals();

        node.position = scenario.trajectory.position_at(t_secs);
        let truth = room_of(&env.rooms, &node.position);
        let mut attempts = 0u32;
        let mut outcome = String::from("lost");
        let code = match classify_and_signal(&node, env, &mut sense) {
            Ok(sig) => {
                frames_sent += 1;
                let sent = match scenario.reliable {
                    Some(r) => network
                        .send_reliable(
                            WEARABLE_MAC,
                            CONTROL_UNIT_MAC,
                            &[sig.code()],
                            r.retries,
                            SimTime::from_secs_f64(r.ack_timeout),
                        )
                        .map(|ok| ok.attempts)
                        .or_else(|e| match e {
                            LinkError::Failed { attempts } => Ok(attempts),
                            other => Err(other),
                        }),
                    None => network.send(WEARABLE_MAC, CONTROL_UNIT_MAC, &[sig.code()]).map(|_| 1),
                };
                match sent {
                    Ok(n) => attempts = n,
                    Err(e) => outcome = e.outcome().to_string(),
                }
                Some(sig.code())
            }
            Err(_) => {
                outcome = "classifier_error".into();
                None
            }
        };
        transmissions += attempts as usize;

        network.advance(now + period);
        for arrival in network.take_arrivals() {
            if arrival.dst != CONTROL_UNIT_MAC {
                continue;
            }
            let result = match arrival.result {
                Ok(frame) => match frame.payload.as_slice() {
                    [code] => bank.apply_signal(ControlSignal(*code)).map_err(|_| "invalid_code"),
                    _ => Err("bad_payload"),
                },
                Err(e) => Err(e.outcome()),
            };
            match result {
                Ok(next) => {
                    bank = next;
                    latencies.push((arrival.at - now).as_secs_f64());
                    outcome = "accepted".into();
                }
                // A duplicate does not hide an earlier acceptance.
                Err(label) if outcome != "accepted" => outcome = label.into(),
                Err(_) => {}
            }
        }

        ticks.push(TickRecord {
            tick,
            t: t_secs,
            x: node.position.x,
            y: node.position.y,
            truth,
            code,
            outcome,
            attempts,
            lights: bank.lights.clone(),
            fans: bank.fans.clone(),
            actuator_room: bank.active_room(),
        });
        tick += 1;
    }

    let summary = summarize(&ticks, frames_sent, transmissions, &latencies);
    Ok(ScenarioLog {
        ticks,
        summary,
        events_jsonl: network.channel().log_jsonl(),
    })
}

fn summarize(ticks: &[TickRecord], frames_sent: usize, transmissions: usize, latencies: &[f64]) -> ScenarioSummary {
    let warmup_ticks = ticks
        .iter()
        .position(|t| t.outcome == "accepted")
        .unwrap_or(ticks.len());
    let post = &ticks[warmup_ticks..];
    let scored: Vec<&TickRecord> = post.iter().filter(|t| t.truth.is_some()).collect();
    let matched_ticks = scored.iter().filter(|t| t.actuator_room == t.truth).count();
    let frames_delivered = ticks.iter().filter(|t| t.outcome == "accepted").count();
    ScenarioSummary {
        ticks: ticks.len(),
        warmup_ticks,
        scored_ticks: scored.len(),
        matched_ticks,
        tracking_accuracy: if scored.is_empty() {
            0.0
        } else {
            matched_ticks as f64 / scored.len() as f64
        },
        unscored_ticks: post.len() - scored.len(),
        frames_sent,
        transmissions,
        frames_delivered,
        frames_lost: frames_sent - frames_delivered,
        mean_actuation_latency: if latencies.is_empty() {
            None
        } else {
            Some(latencies.iter().sum::<f64>() / latencies.len() as f64)
        },
    }
}
