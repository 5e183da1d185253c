//! Hello-stage authentication.
//!
//! Each proxy tags its outbound Hello by overwriting the xid with a truncated
//! MAC and verifies the peer's Hello against the keys of the current and the
//! previous second(s). Keys that fall out of that window are erased.

use std::collections::VecDeque;

use crate::crypto::{
    derive_d1_key, mac_d1, ratchet_d1, verify_tag, D1Tag, DialectKey, Direction, PreSharedKey, Timestamp,
};
use crate::openflow::{MsgType, OpenFlowMessage};

use super::{DialectError, Role, SessionId};

/// Default number of past seconds still accepted.
pub const DEFAULT_GRACE: u64 = 1;

/// Audit record for a key that left the acceptance window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetiredKey {
    pub direction: Direction,
    pub epoch: u64,
    /// Whether every key byte read back as zero after erasure.
    pub zeroed: bool,
}

/// Epoch-indexed keys for one direction: the current second plus `grace`
/// previous seconds, oldest first.
#[derive(Debug)]
pub struct KeyWindow {
    direction: Direction,
    anchor: u64,
    grace: u64,
    keys: VecDeque<DialectKey>,
    /// Fresh derivation for `anchor + 1`, the key a peer that anchored one
    /// second after us tags with.
    late_peer: Option<DialectKey>,
    retired: Vec<RetiredKey>,
}

impl KeyWindow {
    /// Keys from the anchor onward follow the ratchet chain. Seconds before
    /// the anchor are covered by fresh derivations anchored at those seconds,
    /// which is what a peer whose clock crossed the boundary just before ours
    /// holds. A peer that crossed it just after ours is covered by a fresh key
    /// for `anchor + 1`.
    pub fn new(psk: &PreSharedKey, direction: Direction, anchor: Timestamp, grace: u64) -> Self {
        let anchor = anchor.epoch_second();
        let first = anchor.saturating_sub(grace);
        let keys = (first..=anchor)
            .map(|epoch| derive_d1_key(psk, direction, Timestamp(epoch)))
            .collect();
        let late_peer = anchor.checked_add(1).map(|e| derive_d1_key(psk, direction, Timestamp(e)));
        KeyWindow { direction, anchor, grace, keys, late_peer, retired: Vec::new() }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn current_epoch(&self) -> u64 {
        self.current().epoch_index().expect("D1 key")
    }

    fn current(&self) -> &DialectKey {
        self.keys.back().expect("window is never empty")
    }

    /// Ratchets forward to `epoch`, erasing keys older than `epoch - grace`.
    /// Never moves backwards.
    pub fn advance_to(&mut self, epoch: u64) {
        while self.current_epoch() < epoch {
            let next = ratchet_d1(self.current()).expect("epoch below u64::MAX");
            self.keys.push_back(next);
            while self.keys.front().and_then(DialectKey::epoch_index).unwrap_or(u64::MAX)
                < self.current_epoch().saturating_sub(self.grace)
            {
                let mut old = self.keys.pop_front().expect("checked non-empty");
                let zeroed = old.erase();
                self.retired.push(RetiredKey {
                    direction: self.direction,
                    epoch: old.epoch_index().expect("D1 key"),
                    zeroed,
                });
            }
        }
        let floor = self.current_epoch().saturating_sub(self.grace);
        if self.late_peer.as_ref().and_then(DialectKey::epoch_index).is_some_and(|e| e < floor) {
            self.retire_late_peer();
        }
    }

    fn retire_late_peer(&mut self) {
        if let Some(mut key) = self.late_peer.take() {
            let zeroed = key.erase();
            self.retired.push(RetiredKey {
                direction: self.direction,
                epoch: key.epoch_index().expect("D1 key"),
                zeroed,
            });
        }
    }

    /// Keys currently accepted: the ratchet chain newest first, then the
    /// late-peer key while it is inside the window.
    pub fn live_keys(&self) -> impl Iterator<Item = &DialectKey> {
        self.keys.iter().rev().chain(self.late_peer.iter())
    }

    pub fn key_for_epoch(&self, epoch: u64) -> Option<&DialectKey> {
        self.keys.iter().find(|k| k.epoch_index() == Some(epoch))
    }

    pub fn retired(&self) -> &[RetiredKey] {
        &self.retired
    }

    /// Whether a Hello sent at the anchor second can no longer verify.
    fn anchor_expired(&self, epoch: u64) -> bool {
        epoch > self.anchor.saturating_add(self.grace)
    }

    fn erase_all(&mut self) {
        for key in self.keys.iter_mut() {
            let zeroed = key.erase();
            self.retired.push(RetiredKey {
                direction: self.direction,
                epoch: key.epoch_index().expect("D1 key"),
                zeroed,
            });
        }
        self.retire_late_peer();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D1Phase {
    AwaitingHellos,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D1Reject {
    /// No key in the window reproduces the received xid.
    BadTag,
    /// The window has moved past the anchor second; the keys a timely Hello
    /// would have used are gone.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D1Verdict {
    Accept,
    Reject(D1Reject),
}

/// Per-connection Hello-stage state.
#[derive(Debug)]
pub struct D1State {
    role: Role,
    anchor: Timestamp,
    send: KeyWindow,
    recv: KeyWindow,
    sent_tag: Option<D1Tag>,
    received_tag: Option<D1Tag>,
    sent_key: Option<DialectKey>,
    accepted_key: Option<DialectKey>,
    phase: D1Phase,
}

impl D1State {
    pub fn start(role: Role, psk: &PreSharedKey, clock_now: Timestamp) -> Self {
        Self::with_grace(role, psk, clock_now, DEFAULT_GRACE)
    }

    pub fn with_grace(role: Role, psk: &PreSharedKey, clock_now: Timestamp, grace: u64) -> Self {
        let send_dir = role.send_direction();
        D1State {
            role,
            anchor: clock_now,
            send: KeyWindow::new(psk, send_dir, clock_now, grace),
            recv: KeyWindow::new(psk, send_dir.reverse(), clock_now, grace),
            sent_tag: None,
            received_tag: None,
            sent_key: None,
            accepted_key: None,
            phase: D1Phase::AwaitingHellos,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn anchor(&self) -> Timestamp {
        self.anchor
    }

    pub fn phase(&self) -> D1Phase {
        self.phase
    }

    pub fn sent_tag(&self) -> Option<D1Tag> {
        self.sent_tag
    }

    pub fn received_tag(&self) -> Option<D1Tag> {
        self.received_tag
    }

    pub fn send_window(&self) -> &KeyWindow {
        &self.send
    }

    pub fn recv_window(&self) -> &KeyWindow {
        &self.recv
    }

    /// Erasure audit across both directions.
    pub fn retired_keys(&self) -> Vec<RetiredKey> {
        self.send.retired().iter().chain(self.recv.retired()).copied().collect()
    }

    /// Replaces the xid of the local endpoint's Hello with this side's tag.
    pub fn dialect_outbound(
        &mut self,
        hello: &OpenFlowMessage,
        clock_now: Timestamp,
    ) -> Result<OpenFlowMessage, DialectError> {
        if hello.msg_type() != MsgType::HELLO {
            return Err(DialectError::NotHello(hello.msg_type()));
        }
        if self.phase != D1Phase::AwaitingHellos {
            return Err(DialectError::WrongPhase(self.phase));
        }
        if self.sent_tag.is_some() {
            return Err(DialectError::AlreadySent);
        }
        self.send.advance_to(clock_now.epoch_second());
        let key = self.send.current().clone();
        let image = hello.with_xid(0).serialize()?;
        let tag = mac_d1(&key, self.role.flow_label(), &image)?;
        self.sent_tag = Some(tag);
        self.sent_key = Some(key);
        self.update_phase();
        Ok(hello.with_xid(tag.as_xid()))
    }

    /// Checks the peer's Hello against every key in the receive window.
    pub fn verify_inbound(
        &mut self,
        hello: &OpenFlowMessage,
        clock_now: Timestamp,
    ) -> Result<D1Verdict, DialectError> {
        if self.phase != D1Phase::AwaitingHellos || self.received_tag.is_some() {
            return Err(DialectError::WrongPhase(self.phase));
        }
        let epoch = clock_now.epoch_second();
        self.recv.advance_to(epoch);
        if hello.msg_type() != MsgType::HELLO {
            self.fail();
            return Ok(D1Verdict::Reject(D1Reject::BadTag));
        }
        let image = hello.with_xid(0).serialize()?;
        let received = D1Tag::from_xid(hello.xid());
        let peer_flow = self.role.peer().flow_label();
        let mut matched = None;
        for key in self.recv.live_keys() {
            let expected = mac_d1(key, peer_flow, &image)?;
            // all window keys are tried so timing does not reveal which epoch matched
            if verify_tag(&expected.0, &received.0) && matched.is_none() {
                matched = Some(key.clone());
            }
        }
        match matched {
            Some(key) => {
                self.received_tag = Some(received);
                self.accepted_key = Some(key);
                self.update_phase();
                Ok(D1Verdict::Accept)
            }
            None => {
                let reason = if self.recv.anchor_expired(epoch) { D1Reject::Stale } else { D1Reject::BadTag };
                self.fail();
                Ok(D1Verdict::Reject(reason))
            }
        }
    }

    /// Session identifier `switch_tag || controller_tag`, identical on both
    /// proxies.
    pub fn complete(&self) -> Result<SessionId, DialectError> {
        if self.phase != D1Phase::Complete {
            return Err(DialectError::WrongPhase(self.phase));
        }
        let sent = self.sent_tag.expect("complete implies sent");
        let received = self.received_tag.expect("complete implies received");
        Ok(match self.role {
            Role::SwitchSide => SessionId::from_tags(sent, received),
            Role::ControllerSide => SessionId::from_tags(received, sent),
        })
    }

    /// The keys that produced and verified the two Hello tags, as
    /// `(switch_to_controller, controller_to_switch)`.
    pub(super) fn final_keys(&self) -> Result<(&DialectKey, &DialectKey), DialectError> {
        match (&self.sent_key, &self.accepted_key, self.phase) {
            (Some(sent), Some(accepted), D1Phase::Complete) => Ok(match self.role {
                Role::SwitchSide => (sent, accepted),
                Role::ControllerSide => (accepted, sent),
            }),
            _ => Err(DialectError::WrongPhase(self.phase)),
        }
    }

    fn update_phase(&mut self) {
        if self.sent_tag.is_some() && self.received_tag.is_some() {
            self.phase = D1Phase::Complete;
        }
    }

    fn fail(&mut self) {
        self.phase = D1Phase::Failed;
        self.erase_keys();
    }

    /// Erases every Hello-stage key this state still holds.
    pub fn erase_keys(&mut self) {
        self.send.erase_all();
        self.recv.erase_all();
        for key in [self.sent_key.as_mut(), self.accepted_key.as_mut()].into_iter().flatten() {
            key.erase();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: u64 = 1_600_000_000;

    fn psk() -> PreSharedKey {
        PreSharedKey::new([0x0b; 32])
    }

    #[test]
    fn window_starts_with_anchor_and_grace() {
        let w = KeyWindow::new(&psk(), Direction::SwitchToController, Timestamp(T0), 1);
        let epochs: Vec<_> = w.live_keys().map(|k| k.epoch_index().unwrap()).collect();
        assert_eq!(epochs, vec![T0, T0 - 1, T0 + 1]);
        assert_eq!(w.key_for_epoch(T0).unwrap(), &derive_d1_key(&psk(), Direction::SwitchToController, Timestamp(T0)));
    }

    #[test]
    fn window_ratchets_and_erases() {
        let mut w = KeyWindow::new(&psk(), Direction::SwitchToController, Timestamp(T0), 1);
        let anchor_key = w.key_for_epoch(T0).unwrap().clone();
        w.advance_to(T0 + 1);
        assert_eq!(w.key_for_epoch(T0 + 1).unwrap(), &ratchet_d1(&anchor_key).unwrap());
        assert!(w.key_for_epoch(T0 - 1).is_none());
        w.advance_to(T0 + 2);
        assert!(w.key_for_epoch(T0).is_none());
        let retired: Vec<_> = w.retired().iter().map(|r| (r.epoch, r.zeroed)).collect();
        assert_eq!(retired, vec![(T0 - 1, true), (T0, true)]);
        // going backwards is a no-op
        w.advance_to(T0);
        assert_eq!(w.current_epoch(), T0 + 2);
        w.advance_to(T0 + 3);
        assert_eq!(w.live_keys().count(), 2);
        assert!(w.retired().iter().any(|r| r.epoch == T0 + 1 && r.zeroed));
    }

    #[test]
    fn large_jumps_keep_only_the_window() {
        let mut w = KeyWindow::new(&psk(), Direction::ControllerToSwitch, Timestamp(T0), 1);
        w.advance_to(T0 + 50);
        assert_eq!(w.live_keys().count(), 2);
        assert_eq!(w.retired().len(), 51);
        assert!(w.retired().iter().all(|r| r.zeroed));
    }

    #[test]
    fn outbound_rejects_non_hello_and_double_send() {
        let mut s = D1State::start(Role::SwitchSide, &psk(), Timestamp(T0));
        let fr = OpenFlowMessage::build(MsgType::FEATURES_REQUEST, 6, 0, vec![]).unwrap();
        assert!(matches!(s.dialect_outbound(&fr, Timestamp(T0)), Err(DialectError::NotHello(_))));
        s.dialect_outbound(&OpenFlowMessage::hello(6, 9), Timestamp(T0)).unwrap();
        assert!(matches!(
            s.dialect_outbound(&OpenFlowMessage::hello(6, 9), Timestamp(T0)),
            Err(DialectError::AlreadySent)
        ));
    }

    #[test]
    fn complete_requires_both_tags() {
        let mut s = D1State::start(Role::SwitchSide, &psk(), Timestamp(T0));
        assert!(s.complete().is_err());
        s.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
        assert_eq!(s.phase(), D1Phase::AwaitingHellos);
        assert!(s.complete().is_err());
    }

    #[test]
    fn failed_state_erases_keys() {
        let mut s = D1State::start(Role::ControllerSide, &psk(), Timestamp(T0));
        let forged = OpenFlowMessage::hello(6, 0x1234_5678);
        assert_eq!(s.verify_inbound(&forged, Timestamp(T0)).unwrap(), D1Verdict::Reject(D1Reject::BadTag));
        assert_eq!(s.phase(), D1Phase::Failed);
        assert!(s.retired_keys().iter().all(|r| r.zeroed));
        assert!(s.send_window().live_keys().all(DialectKey::is_erased));
        assert!(s.verify_inbound(&forged, Timestamp(T0)).is_err());
    }

    #[test]
    fn non_hello_inbound_is_rejected() {
        let mut s = D1State::start(Role::ControllerSide, &psk(), Timestamp(T0));
        let echo = OpenFlowMessage::build(MsgType::ECHO_REQUEST, 6, 0, vec![]).unwrap();
        assert_eq!(s.verify_inbound(&echo, Timestamp(T0)).unwrap(), D1Verdict::Reject(D1Reject::BadTag));
    }
}
