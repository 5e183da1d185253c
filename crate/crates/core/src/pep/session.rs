//! Per-connection proxy engine without I/O.
//!
//! The engine consumes byte chunks from the local device and from the peer
//! proxy and answers with [`Action`]s for the driver to carry out. The tokio
//! runner and the simulator drive the same engine.

use std::mem;

use crate::crypto::{PreSharedKey, Timestamp};
use crate::dialect::{
    D1Reject, D1State, D1Verdict, D2Frame, D2State, DialectError, Role, MAX_FRAME_PAYLOAD,
};
use crate::openflow::{parse_message, ParseError};
use crate::tls::{
    check_policy, looks_like_handshake, parse_hello, HelloInfo, Policy, Side, TlsParseError, ViolationKind,
};

use super::alert::{AlertEvent, AlertReason};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Bytes for the peer proxy.
    ToPeer(Vec<u8>),
    /// Verified bytes for the local device.
    ToLocal(Vec<u8>),
    /// Out-of-band alert message for the local device (controller side only).
    Notify(Vec<u8>),
    Alert(AlertEvent),
    /// Close both connections.
    Close,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub frames_sent: u64,
    pub frames_verified: u64,
    pub frames_rejected: u64,
    pub bytes_to_peer: u64,
    pub bytes_to_local: u64,
}

#[derive(Debug)]
enum Stage {
    Hello(Box<D1State>),
    Wrapped(D2State),
    Closed,
}

#[derive(Debug)]
pub struct PepSession {
    conn_id: u64,
    role: Role,
    policy: Policy,
    stage: Stage,
    own_hello_sent: bool,
    peer_hello_seen: bool,
    local_buf: Vec<u8>,
    pending_out: Vec<Vec<u8>>,
    peer_buf: Vec<u8>,
    first_switch_payload_seen: bool,
    alerted: bool,
    stats: SessionStats,
}

impl PepSession {
    pub fn new(conn_id: u64, role: Role, psk: &PreSharedKey, policy: Policy, grace: u64, now: Timestamp) -> Self {
        PepSession {
            conn_id,
            role,
            policy,
            stage: Stage::Hello(Box::new(D1State::with_grace(role, psk, now, grace))),
            own_hello_sent: false,
            peer_hello_seen: false,
            local_buf: Vec::new(),
            pending_out: Vec::new(),
            peer_buf: Vec::new(),
            first_switch_payload_seen: false,
            alerted: false,
            stats: SessionStats::default(),
        }
    }

    pub fn connection_id(&self) -> u64 {
        self.conn_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.stage, Stage::Closed)
    }

    /// Whether the Hello exchange finished and traffic is being wrapped.
    pub fn is_wrapped(&self) -> bool {
        matches!(self.stage, Stage::Wrapped(_))
    }

    /// Bytes read from the local device.
    pub fn on_local(&mut self, chunk: &[u8], now: Timestamp) -> Vec<Action> {
        let mut out = Vec::new();
        if self.is_closed() {
            return out;
        }
        if !self.own_hello_sent {
            self.local_buf.extend_from_slice(chunk);
            self.try_send_hello(now, &mut out);
            return out;
        }
        match self.stage {
            Stage::Wrapped(_) => self.send_wrapped(chunk, now, &mut out),
            _ => self.pending_out.push(chunk.to_vec()),
        }
        out
    }

    /// Bytes read from the peer proxy.
    pub fn on_peer(&mut self, bytes: &[u8], now: Timestamp) -> Vec<Action> {
        let mut out = Vec::new();
        if self.is_closed() {
            return out;
        }
        self.peer_buf.extend_from_slice(bytes);
        self.process_peer(now, &mut out);
        out
    }

    fn try_send_hello(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        let (hello, used) = match parse_message(&self.local_buf) {
            Ok((msg, rest)) => (msg, self.local_buf.len() - rest.len()),
            Err(ParseError::NeedMoreData { .. }) => return,
            Err(ParseError::Malformed(len)) => {
                log::warn!("conn={} local device sent malformed header (length {len})", self.conn_id);
                self.close(out);
                return;
            }
        };
        let Stage::Hello(d1) = &mut self.stage else { return };
        match d1.dialect_outbound(&hello, now) {
            Ok(tagged) => {
                let bytes = tagged.serialize().expect("parsed message re-serializes");
                self.stats.bytes_to_peer += bytes.len() as u64;
                out.push(Action::ToPeer(bytes));
                self.own_hello_sent = true;
                let rest = self.local_buf.split_off(used);
                self.local_buf = Vec::new();
                if !rest.is_empty() {
                    self.pending_out.push(rest);
                }
                self.maybe_start_wrapper(now, out);
            }
            Err(e) => {
                log::warn!("conn={} cannot dialect first local message: {e}", self.conn_id);
                self.close(out);
            }
        }
    }

    fn process_peer(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        if !self.peer_hello_seen {
            let (hello, used) = match parse_message(&self.peer_buf) {
                Ok((msg, rest)) => (msg, self.peer_buf.len() - rest.len()),
                Err(ParseError::NeedMoreData { .. }) => return,
                Err(ParseError::Malformed(len)) => {
                    self.fail(AlertReason::D1BadTag, format!("malformed Hello header (length {len})"), now, out);
                    return;
                }
            };
            let Stage::Hello(d1) = &mut self.stage else { return };
            let verdict = d1.verify_inbound(&hello, now);
            match verdict {
                Ok(D1Verdict::Accept) => {
                    self.peer_hello_seen = true;
                    let bytes = self.peer_buf[..used].to_vec();
                    self.peer_buf.drain(..used);
                    self.stats.bytes_to_local += bytes.len() as u64;
                    out.push(Action::ToLocal(bytes));
                    self.maybe_start_wrapper(now, out);
                }
                Ok(D1Verdict::Reject(D1Reject::Stale)) => {
                    let detail = format!("Hello tag {:08x} outside the key window", hello.xid());
                    self.fail(AlertReason::D1Stale, detail, now, out);
                    return;
                }
                Ok(D1Verdict::Reject(D1Reject::BadTag)) => {
                    let detail = format!("Hello tag {:08x} does not verify ({:?})", hello.xid(), hello.msg_type());
                    self.fail(AlertReason::D1BadTag, detail, now, out);
                    return;
                }
                Err(e) => {
                    self.fail(AlertReason::D1BadTag, e.to_string(), now, out);
                    return;
                }
            }
        }
        self.drain_frames(now, out);
    }

    fn maybe_start_wrapper(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        if !(self.own_hello_sent && self.peer_hello_seen) {
            return;
        }
        let Stage::Hello(d1) = mem::replace(&mut self.stage, Stage::Closed) else { return };
        let started = d1.complete().and_then(|sid| {
            log::debug!("conn={} hello exchange complete, sid={sid}", self.conn_id);
            D2State::start(*d1, &sid)
        });
        match started {
            Ok(d2) => self.stage = Stage::Wrapped(d2),
            Err(e) => {
                self.fail(AlertReason::D1BadTag, e.to_string(), now, out);
                return;
            }
        }
        for chunk in mem::take(&mut self.pending_out) {
            self.send_wrapped(&chunk, now, out);
            if self.is_closed() {
                return;
            }
        }
        self.drain_frames(now, out);
    }

    fn send_wrapped(&mut self, chunk: &[u8], now: Timestamp, out: &mut Vec<Action>) {
        for piece in chunk.chunks(MAX_FRAME_PAYLOAD) {
            if let Err((reason, detail)) = self.policy_check(piece, Direction::Outbound) {
                self.fail(reason, detail, now, out);
                return;
            }
            let Stage::Wrapped(d2) = &mut self.stage else { return };
            match d2.wrap(piece) {
                Ok(frame) => {
                    let bytes = frame.encode();
                    self.stats.frames_sent += 1;
                    self.stats.bytes_to_peer += bytes.len() as u64;
                    out.push(Action::ToPeer(bytes));
                }
                Err(e) => {
                    log::warn!("conn={} wrap failed: {e}", self.conn_id);
                    self.close(out);
                    return;
                }
            }
        }
    }

    fn drain_frames(&mut self, now: Timestamp, out: &mut Vec<Action>) {
        loop {
            let Stage::Wrapped(d2) = &mut self.stage else { return };
            let (frame, used) = match D2Frame::decode(&self.peer_buf) {
                Ok(Some(decoded)) => decoded,
                Ok(None) => return,
                Err(e) => {
                    self.stats.frames_rejected += 1;
                    self.fail(AlertReason::D2BadTag, format!("{e:?}"), now, out);
                    return;
                }
            };
            self.peer_buf.drain(..used);
            let payload = match d2.unwrap(&frame) {
                Ok(p) => p,
                Err(DialectError::BadTag { expected_seq }) => {
                    self.stats.frames_rejected += 1;
                    self.fail(AlertReason::D2BadTag, format!("wrong D2 MAC at sequence {expected_seq}"), now, out);
                    return;
                }
                Err(e) => {
                    self.stats.frames_rejected += 1;
                    self.fail(AlertReason::D2BadTag, e.to_string(), now, out);
                    return;
                }
            };
            self.stats.frames_verified += 1;
            if let Err((reason, detail)) = self.policy_check(&payload, Direction::Inbound) {
                self.fail(reason, detail, now, out);
                return;
            }
            self.stats.bytes_to_local += payload.len() as u64;
            out.push(Action::ToLocal(payload));
        }
    }

    fn policy_check(&mut self, payload: &[u8], dir: Direction) -> Result<(), (AlertReason, String)> {
        let from_switch = matches!(
            (self.role, dir),
            (Role::SwitchSide, Direction::Outbound) | (Role::ControllerSide, Direction::Inbound)
        );
        let hello = if looks_like_handshake(payload) { parse_hello(payload) } else { Err(TlsParseError::NotHandshake(0)) };
        if from_switch && !self.first_switch_payload_seen && !payload.is_empty() {
            self.first_switch_payload_seen = true;
            let is_client_hello = matches!(&hello, Ok(HelloInfo { side: Side::Client, .. }));
            if self.policy.require_tls && !is_client_hello {
                return Err((AlertReason::PolicyVersion, "first switch payload is not a TLS ClientHello".into()));
            }
        }
        match hello {
            Ok(info) => check_policy(&info, &self.policy).map_err(|v| {
                let reason = match v.kind {
                    ViolationKind::VersionDisallowed => AlertReason::PolicyVersion,
                    ViolationKind::SuiteDisallowed => AlertReason::PolicySuite,
                };
                (reason, v.detail)
            }),
            Err(_) => Ok(()),
        }
    }

    fn fail(&mut self, reason: AlertReason, detail: String, now: Timestamp, out: &mut Vec<Action>) {
        if !self.alerted {
            self.alerted = true;
            let event = AlertEvent { connection_id: self.conn_id, reason, detail, timestamp: now };
            if self.role == Role::ControllerSide {
                out.push(Action::Notify(event.to_notification()));
            }
            out.push(Action::Alert(event));
        }
        self.close(out);
    }

    fn close(&mut self, out: &mut Vec<Action>) {
        match mem::replace(&mut self.stage, Stage::Closed) {
            Stage::Wrapped(mut d2) => d2.kill(),
            Stage::Hello(mut d1) => d1.erase_keys(),
            Stage::Closed => return,
        }
        self.local_buf.clear();
        self.pending_out.clear();
        self.peer_buf.clear();
        out.push(Action::Close);
    }
}

#[derive(Debug, Clone, Copy)]
enum Direction {
    Outbound,
    Inbound,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::openflow::{MsgType, OpenFlowMessage};
    use crate::tls::{encode_client_hello, TLS1_0, TLS1_2};

    const T: Timestamp = Timestamp(1_700_000_000);

    fn pair(policy: Policy) -> (PepSession, PepSession) {
        let psk = PreSharedKey::new([5; 32]);
        (
            PepSession::new(1, Role::SwitchSide, &psk, policy.clone(), 1, T),
            PepSession::new(2, Role::ControllerSide, &psk, policy, 1, T),
        )
    }

    fn peer_bytes(actions: &[Action]) -> Vec<u8> {
        actions.iter().filter_map(|a| if let Action::ToPeer(b) = a { Some(b.clone()) } else { None }).flatten().collect()
    }

    fn local_bytes(actions: &[Action]) -> Vec<u8> {
        actions.iter().filter_map(|a| if let Action::ToLocal(b) = a { Some(b.clone()) } else { None }).flatten().collect()
    }

    fn hello(xid: u32) -> Vec<u8> {
        OpenFlowMessage::hello(6, xid).serialize().unwrap()
    }

    fn handshake(sw: &mut PepSession, ctl: &mut PepSession) {
        let a = sw.on_local(&hello(11), T);
        let b = ctl.on_local(&hello(22), T);
        let delivered_ctl = ctl.on_peer(&peer_bytes(&a), T);
        let delivered_sw = sw.on_peer(&peer_bytes(&b), T);
        assert_eq!(local_bytes(&delivered_ctl).len(), 8);
        assert_eq!(local_bytes(&delivered_sw).len(), 8);
        assert!(sw.is_wrapped() && ctl.is_wrapped());
    }

    #[test]
    fn clean_exchange_passes_bytes_through() {
        let (mut sw, mut ctl) = pair(Policy::default());
        handshake(&mut sw, &mut ctl);
        let fr = OpenFlowMessage::build(MsgType::FEATURES_REQUEST, 6, 3, vec![]).unwrap().serialize().unwrap();
        let wire = peer_bytes(&ctl.on_local(&fr, T));
        assert_eq!(wire.len(), fr.len() + 68);
        assert_eq!(local_bytes(&sw.on_peer(&wire, T)), fr);
    }

    #[test]
    fn hello_split_across_reads() {
        let (mut sw, mut ctl) = pair(Policy::default());
        let h = hello(1);
        assert!(sw.on_local(&h[..3], T).is_empty());
        let a = sw.on_local(&h[3..], T);
        let mut got = Vec::new();
        for b in peer_bytes(&a) {
            got.extend(local_bytes(&ctl.on_peer(&[b], T)));
        }
        assert_eq!(got.len(), 8);
    }

    #[test]
    fn traffic_before_completion_is_queued() {
        let (mut sw, mut ctl) = pair(Policy::default());
        let mut early = hello(1);
        early.extend_from_slice(b"early bytes");
        let a = sw.on_local(&early, T);
        assert_eq!(peer_bytes(&a).len(), 8);
        let b = ctl.on_local(&hello(2), T);
        let c = ctl.on_peer(&peer_bytes(&a), T);
        assert_eq!(local_bytes(&c).len(), 8);
        let d = sw.on_peer(&peer_bytes(&b), T);
        let e = ctl.on_peer(&peer_bytes(&d), T);
        assert_eq!(local_bytes(&e), b"early bytes");
    }

    #[test]
    fn bad_frame_alerts_once_and_closes() {
        let (mut sw, mut ctl) = pair(Policy::default());
        handshake(&mut sw, &mut ctl);
        let mut wire = peer_bytes(&sw.on_local(b"payload", T));
        wire[5] ^= 1;
        let second = peer_bytes(&sw.on_local(b"more", T));
        let acts = ctl.on_peer(&wire, T);
        assert!(local_bytes(&acts).is_empty());
        let alerts: Vec<_> = acts.iter().filter(|a| matches!(a, Action::Alert(_))).collect();
        assert_eq!(alerts.len(), 1);
        assert!(matches!(alerts[0], Action::Alert(AlertEvent { reason: AlertReason::D2BadTag, .. })));
        assert!(acts.iter().any(|a| matches!(a, Action::Notify(_))));
        assert_eq!(acts.last(), Some(&Action::Close));
        assert!(ctl.on_peer(&second, T).is_empty());
        assert!(ctl.on_local(b"x", T).is_empty());
    }

    #[test]
    fn switch_side_does_not_notify() {
        let (mut sw, _) = pair(Policy::default());
        sw.on_local(&hello(1), T);
        let acts = sw.on_peer(&hello(0x1234), T);
        assert!(acts.iter().any(|a| matches!(a, Action::Alert(AlertEvent { reason: AlertReason::D1BadTag, .. }))));
        assert!(!acts.iter().any(|a| matches!(a, Action::Notify(_))));
    }

    #[test]
    fn downgraded_client_hello_violates_policy_at_sender() {
        let policy = Policy { allowed_versions: [TLS1_2].into_iter().collect(), ..Policy::default() };
        let (mut sw, mut ctl) = pair(policy);
        handshake(&mut sw, &mut ctl);
        let ch = encode_client_hello(TLS1_0, &[1; 32], &[0xc02f], None);
        let acts = sw.on_local(&ch, T);
        assert!(peer_bytes(&acts).is_empty());
        assert!(acts.iter().any(|a| matches!(a, Action::Alert(AlertEvent { reason: AlertReason::PolicyVersion, .. }))));
    }

    #[test]
    fn require_tls_rejects_plain_openflow() {
        let policy = Policy { require_tls: true, ..Policy::default() };
        let (mut sw, mut ctl) = pair(policy);
        handshake(&mut sw, &mut ctl);
        let fr = OpenFlowMessage::build(MsgType::FEATURES_REPLY, 6, 3, vec![0; 24]).unwrap().serialize().unwrap();
        let acts = sw.on_local(&fr, T);
        assert!(acts.iter().any(|a| matches!(a, Action::Alert(AlertEvent { reason: AlertReason::PolicyVersion, .. }))));
    }

    #[test]
    fn stale_hello_reports_stale() {
        let (mut sw, mut ctl) = pair(Policy::default());
        let a = sw.on_local(&hello(1), T);
        let acts = ctl.on_peer(&peer_bytes(&a), Timestamp(T.0 + 2));
        assert!(acts.iter().any(|a| matches!(a, Action::Alert(AlertEvent { reason: AlertReason::D1Stale, .. }))));
    }

    #[test]
    fn large_chunks_are_split_into_frames() {
        let (mut sw, mut ctl) = pair(Policy::default());
        handshake(&mut sw, &mut ctl);
        let big = vec![0xab; MAX_FRAME_PAYLOAD + 10];
        let wire = peer_bytes(&sw.on_local(&big, T));
        assert_eq!(wire.len(), big.len() + 2 * 68);
        assert_eq!(local_bytes(&ctl.on_peer(&wire, T)), big);
        assert_eq!(sw.stats().frames_sent, 2);
        assert_eq!(ctl.stats().frames_verified, 2);
    }
}
