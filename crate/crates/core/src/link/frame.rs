//! Wire format of one authenticated frame.
//!
//! ```text
//! offset  size  field
//!      0     2  magic 0x45 0x4E ("EN")
//!      2     1  version = 0x01
//!      3     1  frame type: 0 unicast, 1 broadcast
//!      4     6  source MAC
//!     10     6  destination MAC (FF:FF:FF:FF:FF:FF for broadcast)
//!     16     6  send counter, 48-bit big-endian
//!     22     1  payload length L (<= 250)
//!     23     L  ciphertext
//!   23+L    16  tag
//! ```
//!
//! The frame is sealed with AES-128-CCM (16-octet tag). The 12-octet nonce
//! is four zero octets followed by the counter as a 64-bit big-endian
//! integer; only its low 48 bits travel on the wire. The 23-octet header is
//! the associated data, so every header bit is authenticated.
//!
//! Decoding authenticates before it interprets any header field. Altering
//! any bit of a sealed frame therefore fails with [`LinkError::AuthFailure`];
//! the structural errors are reserved for frames that authenticate but are
//! not well formed (a peer speaking another version, say).

use std::collections::BTreeMap;

use aes::Aes128;
use ccm::aead::generic_array::GenericArray;
use ccm::aead::{AeadInPlace, KeyInit};
use ccm::consts::{U12, U16};
use ccm::Ccm;

use super::LinkError;
use crate::mac::MacAddress;

type Aes128Ccm = Ccm<Aes128, U16, U12>;

pub const MAGIC: [u8; 2] = [0x45, 0x4e];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 23;
pub const TAG_LEN: usize = 16;
/// Wire size of a frame with an empty payload.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + TAG_LEN;
pub const MAX_PAYLOAD: usize = 250;
/// Largest counter representable in the 48-bit wire field.
pub const MAX_COUNTER: u64 = (1 << 48) - 1;

const FTYPE_AT: usize = 3;
const SRC_AT: usize = 4;
const DST_AT: usize = 10;
const COUNTER_AT: usize = 16;
const LENGTH_AT: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Unicast = 0,
    Broadcast = 1,
}

impl FrameType {
    pub fn for_destination(dst: &MacAddress) -> Self {
        if dst.is_broadcast() {
            FrameType::Broadcast
        } else {
            FrameType::Unicast
        }
    }
}

/// 128-bit pre-shared key.
#[derive(Clone, PartialEq, Eq)]
pub struct PeerKey([u8; 16]);

impl PeerKey {
    pub const fn new(bytes: [u8; 16]) -> Self {
        PeerKey(bytes)
    }

    /// Key expanded from a 64-bit seed, for simulations.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = crate::rng::RandomStream::new(seed, "peer-key");
        let mut bytes = [0u8; 16];
        bytes[..8].copy_from_slice(&rng.next_u64().to_be_bytes());
        bytes[8..].copy_from_slice(&rng.next_u64().to_be_bytes());
        PeerKey(bytes)
    }

    fn cipher(&self) -> Aes128Ccm {
        Aes128Ccm::new(GenericArray::from_slice(&self.0))
    }
}

impl std::fmt::Debug for PeerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PeerKey(..)")
    }
}

/// Authenticated contents of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub src: MacAddress,
    pub dst: MacAddress,
    pub counter: u64,
    pub payload: Vec<u8>,
}

/// Highest accepted counter per sender.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayWindow {
    last_seen: BTreeMap<MacAddress, u64>,
}

impl ReplayWindow {
    pub fn last_seen(&self, src: &MacAddress) -> Option<u64> {
        self.last_seen.get(src).copied()
    }

    /// Accepts `counter` from `src` only if it exceeds every earlier one.
    pub fn admit(&mut self, src: MacAddress, counter: u64) -> Result<(), LinkError> {
        let last = self.last_seen.entry(src).or_insert(0);
        if counter <= *last {
            return Err(LinkError::ReplayRejected { src, counter });
        }
        *last = counter;
        Ok(())
    }
}

pub fn nonce(counter: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

pub fn encode_frame(
    src: MacAddress,
    dst: MacAddress,
    payload: &[u8],
    key: &PeerKey,
    counter: u64,
) -> Result<Vec<u8>, LinkError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(LinkError::PayloadTooLarge(payload.len()));
    }
    if counter > MAX_COUNTER {
        return Err(LinkError::CounterExhausted);
    }
    if src.is_broadcast() {
        return Err(LinkError::InvalidAddress(src));
    }
    let mut wire = Vec::with_capacity(FRAME_OVERHEAD + payload.len());
    wire.extend_from_slice(&MAGIC);
    wire.push(VERSION);
    wire.push(FrameType::for_destination(&dst) as u8);
    wire.extend_from_slice(&src.octets());
    wire.extend_from_slice(&dst.octets());
    wire.extend_from_slice(&counter.to_be_bytes()[2..]);
    wire.push(payload.len() as u8);
    debug_assert_eq!(wire.len(), HEADER_LEN);

    wire.extend_from_slice(payload);
    let (header, body) = wire.split_at_mut(HEADER_LEN);
    let tag = key
        .cipher()
        .encrypt_in_place_detached(GenericArray::from_slice(&nonce(counter)), header, body)
        .expect("CCM accepts payloads up to 250 octets");
    wire.extend_from_slice(&tag);
    Ok(wire)
}

fn mac_at(wire: &[u8], at: usize) -> MacAddress {
    let mut o = [0u8; 6];
    o.copy_from_slice(&wire[at..at + 6]);
    MacAddress::new(o)
}

/// Source and destination as written in the header, without authentication.
/// Radios route on these before any key is involved.
pub fn peek_addresses(wire: &[u8]) -> Option<(MacAddress, MacAddress)> {
    (wire.len() >= HEADER_LEN).then(|| (mac_at(wire, SRC_AT), mac_at(wire, DST_AT)))
}

/// Authenticates, decrypts and parses a frame without replay bookkeeping.
pub fn open_frame(wire: &[u8], key: &PeerKey) -> Result<Frame, LinkError> {
    if wire.len() < FRAME_OVERHEAD {
        return Err(LinkError::Truncated);
    }
    let (header, rest) = wire.split_at(HEADER_LEN);
    let (ciphertext, tag) = rest.split_at(rest.len() - TAG_LEN);
    let mut counter_bytes = [0u8; 8];
    counter_bytes[2..].copy_from_slice(&header[COUNTER_AT..COUNTER_AT + 6]);
    let counter = u64::from_be_bytes(counter_bytes);

    let mut payload = ciphertext.to_vec();
    key.cipher()
        .decrypt_in_place_detached(
            GenericArray::from_slice(&nonce(counter)),
            header,
            &mut payload,
            GenericArray::from_slice(tag),
        )
        .map_err(|_| LinkError::AuthFailure)?;

    if header[..2] != MAGIC {
        return Err(LinkError::BadMagic);
    }
    if header[2] != VERSION {
        return Err(LinkError::BadVersion(header[2]));
    }
    if usize::from(header[LENGTH_AT]) != payload.len() || payload.len() > MAX_PAYLOAD {
        return Err(LinkError::Truncated);
    }
    let src = mac_at(header, SRC_AT);
    let dst = mac_at(header, DST_AT);
    let frame_type = match header[FTYPE_AT] {
        0 if !dst.is_broadcast() => FrameType::Unicast,
        1 if dst.is_broadcast() => FrameType::Broadcast,
        other => return Err(LinkError::BadFrameType(other)),
    };
    Ok(Frame {
        frame_type,
        src,
        dst,
        counter,
        payload,
    })
}

/// [`open_frame`] followed by the replay rule: the counter must exceed the
/// highest one already accepted from the same source.
pub fn decode_frame(wire: &[u8], key: &PeerKey, replay: &mut ReplayWindow) -> Result<Frame, LinkError> {
    let frame = open_frame(wire, key)?;
    replay.admit(frame.src, frame.counter)?;
    Ok(frame)
}
