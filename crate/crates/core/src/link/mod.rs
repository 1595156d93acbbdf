//! Connectionless authenticated link: frames, endpoints and a virtual-time
//! radio channel.

mod channel;
mod endpoint;
mod frame;

use thiserror::Error;

use crate::mac::MacAddress;

pub use channel::{
    airtime, Arrival, Channel, ChannelConfig, Delivery, DeliveryReport, LinkEvent, Network, ReliableDelivery,
    ScheduledDelivery, SimTime,
};
pub use endpoint::{Endpoint, Role};
pub use frame::{
    decode_frame, encode_frame, nonce, open_frame, peek_addresses, Frame, FrameType, PeerKey, ReplayWindow,
    FRAME_OVERHEAD, HEADER_LEN, MAGIC, MAX_COUNTER, MAX_PAYLOAD, TAG_LEN, VERSION,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("payload of {0} octets exceeds the 250-octet limit")]
    PayloadTooLarge(usize),
    #[error("send counter exhausted")]
    CounterExhausted,
    #[error("{0} cannot be a frame source")]
    InvalidAddress(MacAddress),
    #[error("frame truncated or length field inconsistent")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("frame type {0} does not match the destination")]
    BadFrameType(u8),
    #[error("authentication failed")]
    AuthFailure,
    #[error("replayed frame from {src} (counter {counter})")]
    ReplayRejected { src: MacAddress, counter: u64 },
    #[error("no endpoint {0} on the channel")]
    UnknownDestination(MacAddress),
    #[error("delivery failed after {attempts} attempts")]
    Failed { attempts: u32 },
}

impl LinkError {
    /// Short label used in event logs.
    pub fn outcome(&self) -> &'static str {
        match self {
            LinkError::PayloadTooLarge(_) => "payload_too_large",
            LinkError::CounterExhausted => "counter_exhausted",
            LinkError::InvalidAddress(_) => "invalid_address",
            LinkError::Truncated => "truncated",
            LinkError::BadMagic => "bad_magic",
            LinkError::BadVersion(_) => "bad_version",
            LinkError::BadFrameType(_) => "bad_frame_type",
            LinkError::AuthFailure => "auth_failure",
            LinkError::ReplayRejected { .. } => "replay_rejected",
            LinkError::UnknownDestination(_) => "unknown_destination",
            LinkError::Failed { .. } => "failed",
        }
    }
}
