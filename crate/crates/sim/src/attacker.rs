//! Man in the middle on the proxy-to-proxy leg.

use rand::rngs::StdRng;
use rand::Rng;

use ofdialect::crypto::D2Tag;
use ofdialect::dialect::{D2Frame, FRAME_LEN_PREFIX};
use ofdialect::tls::{parse_hello, Side, RECORD_HEADER_LEN, TLS1_0};

use crate::scenario::AttackerMode;

const NS_PER_SEC: u64 = 1_000_000_000;

/// Copy of a ClientHello record with its version lowered to TLS 1.0, or
/// `None` if `record` is not a ClientHello.
pub fn downgrade_client_hello(record: &[u8]) -> Option<Vec<u8>> {
    let info = parse_hello(record).ok()?;
    if info.side != Side::Client {
        return None;
    }
    let mut out = record.to_vec();
    // record header, handshake type, 24-bit length, then legacy_version
    let at = RECORD_HEADER_LEN + 4;
    out[at..at + 2].copy_from_slice(&TLS1_0.to_be_bytes());
    Some(out)
}

#[derive(Debug)]
pub struct Attacker {
    mode: AttackerMode,
    framed: bool,
    rng: StdRng,
    s2c_seen: u64,
    hold_until: u64,
    captured_hello: Option<Vec<u8>>,
    downgraded: bool,
    pub tampered: u64,
    /// Payload bytes the attacker altered, for checking what reaches the
    /// controller.
    pub altered_payloads: Vec<Vec<u8>>,
}

impl Attacker {
    /// `framed` tells the attacker the leg carries wrapper frames after the
    /// Hello. `captured_hello` is the old Hello used by
    /// [`AttackerMode::ReplayD1Hello`].
    pub fn new(mode: AttackerMode, framed: bool, rng: StdRng, captured_hello: Option<Vec<u8>>) -> Self {
        Attacker {
            mode,
            framed,
            rng,
            s2c_seen: 0,
            hold_until: 0,
            captured_hello,
            downgraded: false,
            tampered: 0,
            altered_payloads: Vec::new(),
        }
    }

    /// Handles one segment in transit. Returns the segments to forward with
    /// the earliest time each may leave.
    pub fn on_segment(&mut self, from_switch: bool, segment: Vec<u8>, now: u64) -> Vec<(u64, Vec<u8>)> {
        if !from_switch {
            return vec![(now, segment)];
        }
        let index = self.s2c_seen;
        self.s2c_seen += 1;
        let mut release = now.max(self.hold_until);
        let out = match (self.mode, index) {
            (AttackerMode::DelaySeconds(n), 0) => {
                self.hold_until = now + n * NS_PER_SEC;
                release = self.hold_until;
                self.tampered += 1;
                vec![segment]
            }
            (AttackerMode::ReplayD1Hello, 0) => match self.captured_hello.clone() {
                Some(old) => {
                    self.tampered += 1;
                    vec![old]
                }
                None => vec![segment],
            },
            (AttackerMode::ReplayD2Frame, 1) => {
                self.tampered += 1;
                vec![segment.clone(), segment]
            }
            (AttackerMode::FlipPayloadBit, 1) => {
                self.tampered += 1;
                vec![self.flip_bit(segment)]
            }
            (AttackerMode::VersionDowngradeKeepTag | AttackerMode::VersionDowngradeForgeTag, i)
                if i > 0 && !self.downgraded =>
            {
                vec![self.try_downgrade(segment)]
            }
            _ => vec![segment],
        };
        out.into_iter().map(|s| (release, s)).collect()
    }

    fn flip_bit(&mut self, mut segment: Vec<u8>) -> Vec<u8> {
        let (start, len) = if self.framed && segment.len() > FRAME_LEN_PREFIX + 64 {
            (FRAME_LEN_PREFIX, segment.len() - FRAME_LEN_PREFIX - 64)
        } else {
            (0, segment.len())
        };
        if len > 0 {
            let at = start + self.rng.gen_range(0..len);
            segment[at] ^= 1 << self.rng.gen_range(0..8);
            self.altered_payloads.push(segment[start..start + len].to_vec());
        }
        segment
    }

    fn try_downgrade(&mut self, segment: Vec<u8>) -> Vec<u8> {
        if !self.framed {
            return match downgrade_client_hello(&segment) {
                Some(altered) => {
                    self.downgraded = true;
                    self.tampered += 1;
                    self.altered_payloads.push(altered.clone());
                    altered
                }
                None => segment,
            };
        }
        let Ok(Some((frame, used))) = D2Frame::decode(&segment) else { return segment };
        if used != segment.len() {
            return segment;
        }
        let Some(payload) = downgrade_client_hello(&frame.payload) else { return segment };
        self.downgraded = true;
        self.tampered += 1;
        self.altered_payloads.push(payload.clone());
        let tag = match self.mode {
            AttackerMode::VersionDowngradeForgeTag => {
                let mut t = [0u8; 64];
                self.rng.fill(&mut t[..]);
                D2Tag(t)
            }
            _ => frame.tag,
        };
        D2Frame { payload, tag }.encode()
    }
}
