//! OpenFlow message framing.
//!
//! Only the common 8-byte header is interpreted; bodies are carried opaquely,
//! so any protocol version and any message type passes through unchanged.

use std::fmt;

use thiserror::Error;

pub const OFP_HEADER_LEN: usize = 8;

/// OpenFlow 1.5 wire version.
pub const DEFAULT_VERSION: u8 = 0x06;

/// Largest body that still fits the 16-bit length field.
pub const MAX_BODY_LEN: usize = u16::MAX as usize - OFP_HEADER_LEN;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MsgType(pub u8);

impl MsgType {
    pub const HELLO: MsgType = MsgType(0);
    pub const ERROR: MsgType = MsgType(1);
    pub const ECHO_REQUEST: MsgType = MsgType(2);
    pub const ECHO_REPLY: MsgType = MsgType(3);
    pub const EXPERIMENTER: MsgType = MsgType(4);
    pub const FEATURES_REQUEST: MsgType = MsgType(5);
    pub const FEATURES_REPLY: MsgType = MsgType(6);

    pub fn name(self) -> Option<&'static str> {
        Some(match self {
            MsgType::HELLO => "HELLO",
            MsgType::ERROR => "ERROR",
            MsgType::ECHO_REQUEST => "ECHO_REQUEST",
            MsgType::ECHO_REPLY => "ECHO_REPLY",
            MsgType::EXPERIMENTER => "EXPERIMENTER",
            MsgType::FEATURES_REQUEST => "FEATURES_REQUEST",
            MsgType::FEATURES_REPLY => "FEATURES_REPLY",
            _ => return None,
        })
    }
}

impl fmt::Debug for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => f.write_str(name),
            None => write!(f, "MsgType({})", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenFlowHeader {
    pub version: u8,
    pub msg_type: MsgType,
    /// Total message length including this header.
    pub length: u16,
    pub xid: u32,
}

impl OpenFlowHeader {
    pub fn parse(bytes: &[u8; OFP_HEADER_LEN]) -> OpenFlowHeader {
        OpenFlowHeader {
            version: bytes[0],
            msg_type: MsgType(bytes[1]),
            length: u16::from_be_bytes([bytes[2], bytes[3]]),
            xid: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        }
    }

    pub fn to_bytes(&self) -> [u8; OFP_HEADER_LEN] {
        let mut out = [0u8; OFP_HEADER_LEN];
        out[0] = self.version;
        out[1] = self.msg_type.0;
        out[2..4].copy_from_slice(&self.length.to_be_bytes());
        out[4..8].copy_from_slice(&self.xid.to_be_bytes());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenFlowMessage {
    pub header: OpenFlowHeader,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// Not an error: the buffer holds only part of a message.
    #[error("need {needed} bytes, have {available}")]
    NeedMoreData { needed: usize, available: usize },
    #[error("malformed message: length field {0} is shorter than the header")]
    Malformed(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("body of {0} bytes does not fit the 16-bit length field")]
    Oversize(usize),
    #[error("length field {field} disagrees with the serialized size {actual}")]
    LengthMismatch { field: u16, actual: usize },
}

/// Parses one message from the front of `bytes`, returning it with the
/// unconsumed remainder.
pub fn parse_message(bytes: &[u8]) -> Result<(OpenFlowMessage, &[u8]), ParseError> {
    let header_bytes: &[u8; OFP_HEADER_LEN] = bytes
        .get(..OFP_HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(ParseError::NeedMoreData { needed: OFP_HEADER_LEN, available: bytes.len() })?;
    let header = OpenFlowHeader::parse(header_bytes);
    let total = usize::from(header.length);
    if total < OFP_HEADER_LEN {
        return Err(ParseError::Malformed(header.length));
    }
    if bytes.len() < total {
        return Err(ParseError::NeedMoreData { needed: total, available: bytes.len() });
    }
    let msg = OpenFlowMessage { header, body: bytes[OFP_HEADER_LEN..total].to_vec() };
    Ok((msg, &bytes[total..]))
}

/// Total length of the message at the front of `bytes`, once its header is
/// available.
pub fn peek_length(bytes: &[u8]) -> Option<usize> {
    bytes
        .get(2..4)
        .map(|l| usize::from(u16::from_be_bytes([l[0], l[1]])))
}

impl OpenFlowMessage {
    pub fn build(msg_type: MsgType, version: u8, xid: u32, body: Vec<u8>) -> Result<Self, CodecError> {
        if body.len() > MAX_BODY_LEN {
            return Err(CodecError::Oversize(body.len()));
        }
        let header = OpenFlowHeader { version, msg_type, length: (OFP_HEADER_LEN + body.len()) as u16, xid };
        Ok(OpenFlowMessage { header, body })
    }

    pub fn hello(version: u8, xid: u32) -> Self {
        Self::build(MsgType::HELLO, version, xid, Vec::new()).expect("empty body fits")
    }

    pub fn msg_type(&self) -> MsgType {
        self.header.msg_type
    }

    pub fn xid(&self) -> u32 {
        self.header.xid
    }

    pub fn serialized_len(&self) -> usize {
        OFP_HEADER_LEN + self.body.len()
    }

    pub fn serialize(&self) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        if usize::from(self.header.length) != self.serialized_len() {
            return Err(CodecError::LengthMismatch { field: self.header.length, actual: self.serialized_len() });
        }
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.body);
        Ok(())
    }

    /// Returns a copy with a different transaction ID; nothing else changes.
    pub fn with_xid(&self, xid: u32) -> Self {
        let mut msg = self.clone();
        msg.header.xid = xid;
        msg
    }
}

/// Overwrites bytes 4..8 of a serialized message.
pub fn set_xid_in_place(bytes: &mut [u8], xid: u32) {
    bytes[4..8].copy_from_slice(&xid.to_be_bytes());
}
