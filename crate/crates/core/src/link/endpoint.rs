use serde::{Deserialize, Serialize};

use super::frame::{decode_frame, encode_frame, Frame, PeerKey, ReplayWindow};
use super::LinkError;
use crate::mac::MacAddress;

/// Data-flow role. Initiators (sensors, switches) originate control frames;
/// responders (lights, relays) act on them. A device may do both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub mac: MacAddress,
    pub role: Role,
    key: PeerKey,
    send_counter: u64,
    replay: ReplayWindow,
}

impl Endpoint {
    pub fn new(mac: MacAddress, role: Role, key: PeerKey) -> Self {
        Self {
            mac,
            role,
            key,
            send_counter: 0,
            replay: ReplayWindow::default(),
        }
    }

    /// Counter of the last frame sealed; 0 before the first.
    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn replay_window(&self) -> &ReplayWindow {
        &self.replay
    }

    /// Seals `payload` for `dst` under the next counter value.
    pub fn seal(&mut self, dst: MacAddress, payload: &[u8]) -> Result<Vec<u8>, LinkError> {
        let counter = self.send_counter + 1;
        let wire = encode_frame(self.mac, dst, payload, &self.key, counter)?;
        self.send_counter = counter;
        Ok(wire)
    }

    /// Authenticates and decrypts, then applies the replay rule.
    pub fn open(&mut self, wire: &[u8]) -> Result<Frame, LinkError> {
        decode_frame(wire, &self.key, &mut self.replay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_increase_and_replays_are_dropped() {
        let key = PeerKey::from_seed(1);
        let mut tx = Endpoint::new(MacAddress::local(1), Role::Initiator, key.clone());
        let mut rx = Endpoint::new(MacAddress::local(2), Role::Responder, key);
        let first = tx.seal(rx.mac, &[1]).unwrap();
        let second = tx.seal(rx.mac, &[2]).unwrap();
        assert_eq!(tx.send_counter(), 2);
        assert_eq!(rx.open(&second).unwrap().payload, vec![2]);
        // delivered out of order: the older frame is now stale
        assert!(matches!(
            rx.open(&first),
            Err(LinkError::ReplayRejected { counter: 1, .. })
        ));
        assert_eq!(rx.replay_window().last_seen(&tx.mac), Some(2));
    }

    #[test]
    fn failed_seal_does_not_consume_a_counter() {
        let mut tx = Endpoint::new(MacAddress::local(1), Role::Initiator, PeerKey::from_seed(2));
        assert!(tx.seal(MacAddress::local(2), &[0; 300]).is_err());
        assert_eq!(tx.send_counter(), 0);
    }
}
