//! Discrete-event radio channel in virtual time.
//!
//! A transmission occupies the air for `8 * size / bit_rate` seconds and
//! reaches each destination `latency` later; every destination independently
//! loses the frame with probability `loss_prob`. Time is kept in integer
//! nanoseconds and all randomness comes from the channel's seeded stream, so
//! a run is a pure function of the seed and the sequence of submissions.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::endpoint::Endpoint;
use super::frame::{peek_addresses, Frame};
use super::LinkError;
use crate::mac::MacAddress;
use crate::rng::RandomStream;

/// Virtual time in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round().max(0.0) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn nanos(self) -> u64 {
        self.0
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.as_secs_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// bits per second
    pub bit_rate: u64,
    pub loss_prob: f64,
    /// Propagation and processing delay, seconds.
    pub latency: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bit_rate: 1_000_000,
            loss_prob: 0.0,
            latency: 0.002,
            seed: 42,
        }
    }
}

/// Time on air for `octets` at `bit_rate`, rounded up to the nanosecond.
pub fn airtime(octets: usize, bit_rate: u64) -> SimTime {
    let bits = octets as u128 * 8;
    let ns = (bits * 1_000_000_000).div_ceil(u128::from(bit_rate));
    SimTime(ns as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledDelivery {
    pub dst: MacAddress,
    pub at: SimTime,
    pub lost: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReport {
    pub airtime: SimTime,
    pub deliveries: Vec<ScheduledDelivery>,
}

/// A frame reaching a destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub at: SimTime,
    pub src: MacAddress,
    pub dst: MacAddress,
    pub wire: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    at: SimTime,
    seq: u64,
    delivery: Delivery,
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One line of the link event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEvent {
    /// seconds
    pub t: f64,
    pub event: String,
    pub src: MacAddress,
    pub dst: MacAddress,
    pub size: usize,
    pub outcome: String,
}

#[derive(Debug, Clone)]
pub struct Channel {
    config: ChannelConfig,
    rng: RandomStream,
    members: BTreeSet<MacAddress>,
    queue: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    log: Vec<LinkEvent>,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Self {
        assert!(config.bit_rate > 0, "bit_rate must be positive");
        assert!((0.0..=1.0).contains(&config.loss_prob), "loss_prob must lie in [0, 1]");
        Self {
            rng: RandomStream::new(config.seed, "channel"),
            config,
            members: BTreeSet::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn register(&mut self, mac: MacAddress) {
        self.members.insert(mac);
    }

    pub fn airtime(&self, octets: usize) -> SimTime {
        airtime(octets, self.config.bit_rate)
    }

    /// Puts a frame on the air at `now`. Unicast frames go to their
    /// destination; broadcast frames go to every other registered endpoint.
    pub fn send(&mut self, wire: &[u8], now: SimTime) -> Result<DeliveryReport, LinkError> {
        let (src, dst) = peek_addresses(wire).ok_or(LinkError::Truncated)?;
        let targets: Vec<MacAddress> = if dst.is_broadcast() {
            self.members.iter().copied().filter(|m| *m != src).collect()
        } else if self.members.contains(&dst) {
            vec![dst]
        } else {
            return Err(LinkError::UnknownDestination(dst));
        };

        let air = self.airtime(wire.len());
        let at = now + SimTime::from_secs_f64(self.config.latency) + air;
        let mut deliveries = Vec::with_capacity(targets.len());
        for target in targets {
            // One draw per destination whatever loss_prob is, keeping streams aligned.
            let lost = self.rng.next_f64() < self.config.loss_prob;
            self.record(
                now,
                "tx",
                src,
                target,
                wire.len(),
                if lost { "lost" } else { "scheduled" },
            );
            if !lost {
                self.seq += 1;
                self.queue.push(Reverse(Pending {
                    at,
                    seq: self.seq,
                    delivery: Delivery {
                        at,
                        src,
                        dst: target,
                        wire: wire.to_vec(),
                    },
                }));
            }
            deliveries.push(ScheduledDelivery { dst: target, at, lost });
        }
        Ok(DeliveryReport {
            airtime: air,
            deliveries,
        })
    }

    pub fn next_delivery_at(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(p)| p.at)
    }

    /// Earliest pending delivery due at or before `until`.
    pub fn pop_due(&mut self, until: SimTime) -> Option<Delivery> {
        if self.next_delivery_at()? > until {
            return None;
        }
        self.queue.pop().map(|Reverse(p)| p.delivery)
    }

    pub fn record(&mut self, t: SimTime, event: &str, src: MacAddress, dst: MacAddress, size: usize, outcome: &str) {
        self.log.push(LinkEvent {
            t: t.as_secs_f64(),
            event: event.to_string(),
            src,
            dst,
            size,
            outcome: outcome.to_string(),
        });
    }

    pub fn log(&self) -> &[LinkEvent] {
        &self.log
    }

    /// The event log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.log {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

/// A delivery after the destination endpoint has processed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub at: SimTime,
    pub src: MacAddress,
    pub dst: MacAddress,
    pub result: Result<Frame, LinkError>,
}

impl Arrival {
    /// Authenticated empty-payload frame, i.e. an acknowledgment.
    pub fn is_ack(&self) -> bool {
        matches!(&self.result, Ok(f) if f.payload.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReliableDelivery {
    pub attempts: u32,
    /// When the acknowledgment arrived.
    pub acked_at: SimTime,
}

/// Endpoints attached to one channel, stepped by a single event loop.
#[derive(Debug, Clone)]
pub struct Network {
    channel: Channel,
    endpoints: BTreeMap<MacAddress, Endpoint>,
    now: SimTime,
    /// When set, receivers answer authenticated data frames with an empty
    /// unicast acknowledgment, including duplicates they reject as replays.
    pub acknowledge: bool,
    inbox: Vec<Arrival>,
}

impl Network {
    pub fn new(config: ChannelConfig) -> Self {
        Self {
            channel: Channel::new(config),
            endpoints: BTreeMap::new(),
            now: SimTime::ZERO,
            acknowledge: false,
            inbox: Vec::new(),
        }
    }

    pub fn add_endpoint(&mut self, endpoint: Endpoint) {
        self.channel.register(endpoint.mac);
        self.endpoints.insert(endpoint.mac, endpoint);
    }

    pub fn endpoint(&self, mac: &MacAddress) -> Option<&Endpoint> {
        self.endpoints.get(mac)
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Fire-and-forget: seals at `src` and transmits now.
    pub fn send(&mut self, src: MacAddress, dst: MacAddress, payload: &[u8]) -> Result<DeliveryReport, LinkError> {
        let endpoint = self.endpoints.get_mut(&src).ok_or(LinkError::UnknownDestination(src))?;
        let wire = endpoint.seal(dst, payload)?;
        self.channel.send(&wire, self.now)
    }

    /// Processes the next delivery due at or before `until`. Returns `None`
    /// and moves the clock to `until` once nothing else is due.
    pub fn step(&mut self, until: SimTime) -> Option<Arrival> {
        let Some(delivery) = self.channel.pop_due(until) else {
            self.now = self.now.max(until);
            return None;
        };
        self.now = delivery.at;
        let size = delivery.wire.len();
        let result = match self.endpoints.get_mut(&delivery.dst) {
            Some(endpoint) => endpoint.open(&delivery.wire),
            None => Err(LinkError::UnknownDestination(delivery.dst)),
        };
        let outcome = match &result {
            Ok(_) => "accepted",
            Err(e) => e.outcome(),
        };
        self.channel
            .record(delivery.at, "rx", delivery.src, delivery.dst, size, outcome);

        let authenticated_data = match &result {
            Ok(frame) => !frame.payload.is_empty() && !frame.dst.is_broadcast(),
            Err(LinkError::ReplayRejected { .. }) => true,
            Err(_) => false,
        };
        if self.acknowledge && authenticated_data {
            let _ = self.send(delivery.dst, delivery.src, &[]);
        }

        let arrival = Arrival {
            at: delivery.at,
            src: delivery.src,
            dst: delivery.dst,
            result,
        };
        self.inbox.push(arrival.clone());
        Some(arrival)
    }

    /// Processes everything due up to `until` and advances the clock there.
    pub fn advance(&mut self, until: SimTime) -> Vec<Arrival> {
        let mut arrivals = Vec::new();
        while let Some(a) = self.step(until) {
            arrivals.push(a);
        }
        arrivals
    }

    /// Drains every arrival processed so far.
    pub fn take_arrivals(&mut self) -> Vec<Arrival> {
        std::mem::take(&mut self.inbox)
    }

    /// Unicast with acknowledgment and up to `retries` retransmissions of
    /// the same sealed frame. Enables acknowledgments on the network.
    pub fn send_reliable(
        &mut self,
        src: MacAddress,
        dst: MacAddress,
        payload: &[u8],
        retries: u32,
        ack_timeout: SimTime,
    ) -> Result<ReliableDelivery, LinkError> {
        self.acknowledge = true;
        let endpoint = self.endpoints.get_mut(&src).ok_or(LinkError::UnknownDestination(src))?;
        let wire = endpoint.seal(dst, payload)?;
        for attempt in 1..=retries + 1 {
            self.channel.send(&wire, self.now)?;
            let deadline = self.now + ack_timeout;
            while let Some(arrival) = self.step(deadline) {
                if arrival.dst == src && arrival.src == dst && arrival.is_ack() {
                    return Ok(ReliableDelivery {
                        attempts: attempt,
                        acked_at: arrival.at,
                    });
                }
            }
        }
        Err(LinkError::Failed { attempts: retries + 1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{PeerKey, Role};

    const A: MacAddress = MacAddress::local(1);
    const B: MacAddress = MacAddress::local(2);
    const C: MacAddress = MacAddress::local(3);

    fn network(loss_prob: f64, seed: u64) -> Network {
        let key = PeerKey::from_seed(7);
        let mut net = Network::new(ChannelConfig {
            loss_prob,
            seed,
            ..ChannelConfig::default()
        });
        net.add_endpoint(Endpoint::new(A, Role::Initiator, key.clone()));
        net.add_endpoint(Endpoint::new(B, Role::Responder, key.clone()));
        net.add_endpoint(Endpoint::new(C, Role::Responder, key));
        net
    }

    #[test]
    fn airtime_at_one_megabit() {
        assert_eq!(airtime(39, 1_000_000), SimTime(312_000));
        assert_eq!(airtime(39, 1_000_000).as_secs_f64(), 312e-6);
        assert_eq!(airtime(1, 3), SimTime(2_666_666_667));
    }

    #[test]
    fn unicast_delivery_time() {
        let mut net = network(0.0, 1);
        let report = net.send(A, B, &[]).unwrap();
        assert_eq!(report.airtime, SimTime(312_000));
        assert_eq!(report.deliveries.len(), 1);
        assert_eq!(report.deliveries[0].at, SimTime(2_000_000 + 312_000));
        let arrivals = net.advance(SimTime::from_secs_f64(1.0));
        assert_eq!(arrivals.len(), 1);
        assert!(arrivals[0].result.is_ok());
        assert_eq!(net.now(), SimTime::from_secs_f64(1.0));
    }

    #[test]
    fn broadcast_reaches_everyone_else() {
        let mut net = network(0.0, 1);
        let report = net.send(A, MacAddress::BROADCAST, &[9]).unwrap();
        let dsts: Vec<_> = report.deliveries.iter().map(|d| d.dst).collect();
        assert_eq!(dsts, vec![B, C]);
        let arrivals = net.advance(SimTime::from_secs_f64(1.0));
        assert_eq!(arrivals.len(), 2);
        assert!(arrivals.iter().all(|a| a.result.as_ref().unwrap().payload == vec![9]));
    }

    #[test]
    fn unknown_destination() {
        let mut net = network(0.0, 1);
        assert!(matches!(
            net.send(A, MacAddress::local(99), &[1]),
            Err(LinkError::UnknownDestination(_))
        ));
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let mut net = network(1.0, 1);
        for _ in 0..20 {
            assert!(net.send(A, B, &[1]).unwrap().deliveries[0].lost);
        }
        assert!(net.advance(SimTime::from_secs_f64(10.0)).is_empty());
    }

    #[test]
    fn reliable_first_try_when_lossless() {
        let mut net = network(0.0, 1);
        let ok = net.send_reliable(A, B, &[2], 3, SimTime::from_secs_f64(0.05)).unwrap();
        assert_eq!(ok.attempts, 1);
        let accepted: Vec<_> = net
            .take_arrivals()
            .into_iter()
            .filter(|a| a.dst == B && a.result.is_ok())
            .collect();
        assert_eq!(accepted.len(), 1);
    }

    #[test]
    fn reliable_gives_up_after_all_attempts() {
        let mut net = network(1.0, 1);
        let err = net
            .send_reliable(A, B, &[2], 4, SimTime::from_secs_f64(0.05))
            .unwrap_err();
        assert_eq!(err, LinkError::Failed { attempts: 5 });
        let tx = net.channel().log().iter().filter(|e| e.event == "tx").count();
        assert_eq!(tx, 5);
    }

    #[test]
    fn retransmissions_are_accepted_once() {
        for seed in 0..50 {
            let mut net = network(0.5, seed);
            let _ = net.send_reliable(A, B, &[7], 10, SimTime::from_secs_f64(0.05));
            net.advance(net.now() + SimTime::from_secs_f64(1.0));
            let accepted = net
                .take_arrivals()
                .into_iter()
                .filter(|a| a.dst == B && matches!(&a.result, Ok(f) if !f.payload.is_empty()))
                .count();
            assert!(accepted <= 1, "seed {seed}: {accepted}");
        }
    }

    #[test]
    fn event_log_is_reproducible() {
        let run = |seed| {
            let mut net = network(0.3, seed);
            for i in 0..30u8 {
                let _ = net.send(A, B, &[i]);
                let t = net.now() + SimTime::from_secs_f64(0.01);
                net.advance(t);
            }
            net.channel().log_jsonl()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
        let first = run(4).lines().next().unwrap().to_string();
        let event: serde_json::Value = serde_json::from_str(&first).unwrap();
        for key in ["t", "event", "src", "dst", "size", "outcome"] {
            assert!(event.get(key).is_some(), "{key}");
        }
    }
}
