//! Per-connection dialect state machines.
//!
//! A connection first runs [`D1State`] over the two OpenFlow Hellos. Once both
//! tags have verified, their concatenation becomes the [`SessionId`] that
//! salts the wrapper keys of [`D2State`], which then protects all remaining
//! traffic.

mod d1;
mod d2;

use std::fmt;

use thiserror::Error;

use crate::crypto::{CryptoError, D1Tag, Direction, FlowLabel};
use crate::openflow::{CodecError, MsgType};

pub use d1::{D1Phase, D1Reject, D1State, D1Verdict, KeyWindow, RetiredKey, DEFAULT_GRACE};
pub use d2::{D2Frame, D2State, FrameError, FRAME_LEN_PREFIX, FRAME_OVERHEAD, MAX_FRAME_PAYLOAD};

/// Which endpoint a proxy sits next to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    SwitchSide,
    ControllerSide,
}

impl Role {
    pub fn send_direction(self) -> Direction {
        match self {
            Role::SwitchSide => Direction::SwitchToController,
            Role::ControllerSide => Direction::ControllerToSwitch,
        }
    }

    /// The switch's Hello is always flow 1, the controller's flow 2,
    /// regardless of arrival order.
    pub fn flow_label(self) -> FlowLabel {
        match self {
            Role::SwitchSide => FlowLabel::Flow1,
            Role::ControllerSide => FlowLabel::Flow2,
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::SwitchSide => Role::ControllerSide,
            Role::ControllerSide => Role::SwitchSide,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::SwitchSide => "switch",
            Role::ControllerSide => "controller",
        })
    }
}

/// `switch_tag || controller_tag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionId([u8; 8]);

impl SessionId {
    pub fn from_tags(switch_tag: D1Tag, controller_tag: D1Tag) -> SessionId {
        let mut sid = [0u8; 8];
        sid[..4].copy_from_slice(&switch_tag.0);
        sid[4..].copy_from_slice(&controller_tag.0);
        SessionId(sid)
    }

    pub fn from_bytes(bytes: [u8; 8]) -> SessionId {
        SessionId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialectError {
    #[error("expected a HELLO, got {0:?}")]
    NotHello(MsgType),
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(D1Phase),
    #[error("outbound Hello already dialected")]
    AlreadySent,
    #[error("connection closed after a verification failure")]
    ConnectionClosed,
    #[error("bad wrapper tag (expected sequence number {expected_seq})")]
    BadTag { expected_seq: u64 },
    #[error("payload of {0} bytes exceeds the frame limit")]
    PayloadTooLarge(usize),
    #[error("sequence number space exhausted")]
    SequenceExhausted,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}
