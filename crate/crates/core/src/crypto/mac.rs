//! Keyed BLAKE2b-512 tags for the Hello stage (truncated to 32 bits) and the
//! wrapper stage (full 512 bits, per-message keys).

use std::fmt;

use blake2::digest::{KeyInit, Mac};
use blake2::Blake2bMac512;
use subtle::ConstantTimeEq;

use super::keys::{hkdf64, DialectKey, Stage};
use super::CryptoError;

/// Authentication protocol version string bound into every Hello tag.
pub const PROTOCOL_VERSION: &[u8] = b"9798-4-5.2.1";

pub const D1_TAG_LEN: usize = 4;
pub const D2_TAG_LEN: usize = 64;

/// Flow position indicator. The switch's Hello is always the first flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowLabel {
    Flow1,
    Flow2,
}

impl FlowLabel {
    pub fn byte(self) -> u8 {
        match self {
            FlowLabel::Flow1 => 0x01,
            FlowLabel::Flow2 => 0x02,
        }
    }
}

/// 32-bit truncated tag, carried in the Hello xid field.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct D1Tag(pub [u8; D1_TAG_LEN]);

impl D1Tag {
    /// The tag as it appears in the (big-endian) xid field.
    pub fn as_xid(self) -> u32 {
        u32::from_be_bytes(self.0)
    }

    pub fn from_xid(xid: u32) -> D1Tag {
        D1Tag(xid.to_be_bytes())
    }
}

impl fmt::Debug for D1Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D1Tag({:08x})", self.as_xid())
    }
}

/// Full 512-bit wrapper tag.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct D2Tag(pub [u8; D2_TAG_LEN]);

impl fmt::Debug for D2Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D2Tag({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

fn keyed_blake2b(key: &[u8], parts: &[&[u8]]) -> [u8; 64] {
    let mut mac = <Blake2bMac512 as KeyInit>::new_from_slice(key)
        .expect("64-byte keys are within the BLAKE2b key limit");
    for part in parts {
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// Computes the Hello tag: the first four bytes of keyed BLAKE2b-512 over
/// `flow_label || "9798-4-5.2.1" || hello` with the hello's xid bytes (4..8)
/// taken as zero.
pub fn mac_d1(key: &DialectKey, flow: FlowLabel, hello: &[u8]) -> Result<D1Tag, CryptoError> {
    key.require_stage(Stage::D1)?;
    let (head, rest) = hello.split_at(hello.len().min(4));
    let tail = rest.get(4..).unwrap_or(&[]);
    let xid_zeros = [0u8; 4];
    let xid_part = &xid_zeros[..rest.len().min(4)];
    let out = keyed_blake2b(
        key.as_bytes(),
        &[&[flow.byte()], PROTOCOL_VERSION, head, xid_part, tail],
    );
    Ok(D1Tag([out[0], out[1], out[2], out[3]]))
}

/// Computes the wrapper tag for `payload` as message number `seq`.
///
/// The MAC key is HKDF(IKM = direction key, salt = seq as 8 big-endian bytes,
/// info = `D2-msg`), so every message is authenticated under its own key.
pub fn mac_d2(key: &DialectKey, seq: u64, payload: &[u8]) -> Result<D2Tag, CryptoError> {
    key.require_stage(Stage::D2)?;
    let mut msg_key = hkdf64(key.as_bytes(), &seq.to_be_bytes(), b"D2-msg");
    let out = keyed_blake2b(&msg_key, &[payload]);
    zeroize::Zeroize::zeroize(&mut msg_key);
    Ok(D2Tag(out))
}

/// Constant-time tag comparison. Tags of different lengths never match.
pub fn verify_tag(expected: &[u8], received: &[u8]) -> bool {
    expected.len() == received.len() && bool::from(expected.ct_eq(received))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keys::{derive_d1_key, derive_d2_keys, Direction, PreSharedKey, Timestamp};

    fn d1_key() -> DialectKey {
        derive_d1_key(&PreSharedKey::new([0x0b; 32]), Direction::SwitchToController, Timestamp(1_600_000_000))
    }

    fn d2_key() -> DialectKey {
        let psk = PreSharedKey::new([0x0b; 32]);
        let sc = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1));
        let cs = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(1));
        derive_d2_keys(&sc, &cs, &[7; 8]).unwrap().0
    }

    const HELLO: [u8; 8] = [0x06, 0, 0, 0x08, 0, 0, 0, 0];

    #[test]
    fn d1_tag_ignores_existing_xid() {
        let k = d1_key();
        let mut with_xid = HELLO;
        with_xid[4..].copy_from_slice(&[0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(mac_d1(&k, FlowLabel::Flow1, &HELLO).unwrap(), mac_d1(&k, FlowLabel::Flow1, &with_xid).unwrap());
    }

    #[test]
    fn d1_flow_labels_separate_tags() {
        let k = d1_key();
        assert_ne!(mac_d1(&k, FlowLabel::Flow1, &HELLO).unwrap(), mac_d1(&k, FlowLabel::Flow2, &HELLO).unwrap());
    }

    #[test]
    fn stage_is_checked() {
        assert!(mac_d1(&d2_key(), FlowLabel::Flow1, &HELLO).is_err());
        assert!(mac_d2(&d1_key(), 0, b"x").is_err());
    }

    #[test]
    fn d2_tag_depends_on_sequence() {
        let k = d2_key();
        assert_eq!(mac_d2(&k, 0, b"abc").unwrap(), mac_d2(&k, 0, b"abc").unwrap());
        assert_ne!(mac_d2(&k, 0, b"abc").unwrap(), mac_d2(&k, 1, b"abc").unwrap());
        // empty payloads are fine
        assert_eq!(mac_d2(&k, 0, b"").unwrap().0.len(), 64);
    }

    #[test]
    fn verify_tag_semantics() {
        let t = mac_d2(&d2_key(), 3, b"payload").unwrap().0;
        assert!(verify_tag(&t, &t));
        let mut flipped = t;
        flipped[63] ^= 0x01;
        assert!(!verify_tag(&t, &flipped));
        assert!(!verify_tag(&t[..4], &t));
        assert!(verify_tag(&[], &[]));
    }

    #[test]
    fn xid_conversions_use_network_order() {
        let t = D1Tag([0xde, 0xad, 0xbe, 0xef]);
        assert_eq!(t.as_xid(), 0xdeadbeef);
        assert_eq!(D1Tag::from_xid(0xdeadbeef), t);
    }
}
