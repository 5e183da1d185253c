//! Wrapper stage: every chunk after the Hello exchange travels as
//! `len(4, BE) || payload || tag(64)` with an implicit per-direction sequence
//! number mixed into the per-message key.

use crate::crypto::{derive_d2_keys, mac_d2, verify_tag, DialectKey, D2Tag, D2_TAG_LEN};

use super::d1::D1State;
use super::{DialectError, Role, SessionId};

pub const FRAME_LEN_PREFIX: usize = 4;

/// Bytes a frame adds on top of its payload.
pub const FRAME_OVERHEAD: usize = FRAME_LEN_PREFIX + D2_TAG_LEN;

/// Upper bound on accepted payload lengths; matches the proxy's read size.
pub const MAX_FRAME_PAYLOAD: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct D2Frame {
    pub payload: Vec<u8>,
    pub tag: D2Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    /// The length prefix exceeds [`MAX_FRAME_PAYLOAD`].
    Oversize(u32),
}

impl D2Frame {
    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.tag.0);
    }

    /// Decodes one frame from the front of `bytes`. `Ok(None)` means more
    /// bytes are needed; on success the number of consumed bytes is returned.
    pub fn decode(bytes: &[u8]) -> Result<Option<(D2Frame, usize)>, FrameError> {
        let Some(prefix) = bytes.get(..FRAME_LEN_PREFIX) else {
            return Ok(None);
        };
        let len = u32::from_be_bytes(prefix.try_into().expect("4 bytes"));
        if len as usize > MAX_FRAME_PAYLOAD {
            return Err(FrameError::Oversize(len));
        }
        let total = FRAME_OVERHEAD + len as usize;
        if bytes.len() < total {
            return Ok(None);
        }
        let payload = bytes[FRAME_LEN_PREFIX..FRAME_LEN_PREFIX + len as usize].to_vec();
        let tag = D2Tag(bytes[total - D2_TAG_LEN..total].try_into().expect("64 bytes"));
        Ok(Some((D2Frame { payload, tag }, total)))
    }
}

/// Per-connection wrapper state. Dead after the first verification failure.
#[derive(Debug)]
pub struct D2State {
    send_key: DialectKey,
    recv_key: DialectKey,
    send_seq: u64,
    recv_seq: u64,
    alive: bool,
}

impl D2State {
    /// Derives the wrapper keys from a completed Hello stage and erases the
    /// Hello-stage keys.
    pub fn start(mut d1: D1State, sid: &SessionId) -> Result<Self, DialectError> {
        let (sc, cs) = {
            let (d1_sc, d1_cs) = d1.final_keys()?;
            derive_d2_keys(d1_sc, d1_cs, sid.as_bytes())?
        };
        d1.erase_keys();
        Ok(match d1.role() {
            Role::SwitchSide => D2State::from_keys(sc, cs),
            Role::ControllerSide => D2State::from_keys(cs, sc),
        })
    }

    pub(crate) fn from_keys(send_key: DialectKey, recv_key: DialectKey) -> Self {
        D2State { send_key, recv_key, send_seq: 0, recv_seq: 0, alive: true }
    }

    pub fn send_seq(&self) -> u64 {
        self.send_seq
    }

    pub fn recv_seq(&self) -> u64 {
        self.recv_seq
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn send_key(&self) -> &DialectKey {
        &self.send_key
    }

    pub fn recv_key(&self) -> &DialectKey {
        &self.recv_key
    }

    pub fn wrap(&mut self, payload: &[u8]) -> Result<D2Frame, DialectError> {
        if !self.alive {
            return Err(DialectError::ConnectionClosed);
        }
        if payload.len() > MAX_FRAME_PAYLOAD {
            return Err(DialectError::PayloadTooLarge(payload.len()));
        }
        let tag = mac_d2(&self.send_key, self.send_seq, payload)?;
        self.send_seq = self.send_seq.checked_add(1).ok_or(DialectError::SequenceExhausted)?;
        Ok(D2Frame { payload: payload.to_vec(), tag })
    }

    /// Verifies `frame` as the next message from the peer. Any failure kills
    /// the state; a replayed or reordered frame fails because it was tagged
    /// under a different sequence number.
    pub fn unwrap(&mut self, frame: &D2Frame) -> Result<Vec<u8>, DialectError> {
        if !self.alive {
            return Err(DialectError::ConnectionClosed);
        }
        let expected = mac_d2(&self.recv_key, self.recv_seq, &frame.payload)?;
        if !verify_tag(&expected.0, &frame.tag.0) {
            self.kill();
            return Err(DialectError::BadTag { expected_seq: self.recv_seq });
        }
        match self.recv_seq.checked_add(1) {
            Some(next) => self.recv_seq = next,
            None => {
                self.kill();
                return Err(DialectError::SequenceExhausted);
            }
        }
        Ok(frame.payload.clone())
    }

    /// Marks the connection dead and erases both keys.
    pub fn kill(&mut self) {
        self.alive = false;
        self.send_key.erase();
        self.recv_key.erase();
    }
}
