use ofdialect::crypto::{derive_d1_key, mac_d1, Direction, FlowLabel, PreSharedKey, Timestamp};
use ofdialect::dialect::{
    D1Phase, D1Reject, D1State, D1Verdict, D2Frame, D2State, DialectError, Role, SessionId,
};
use ofdialect::openflow::OpenFlowMessage;
use proptest::prelude::*;

const T0: u64 = 1_600_000_000;

fn kat_psk() -> PreSharedKey {
    PreSharedKey::new([0x0b; 32])
}

/// Runs the Hello exchange at `t` and returns both completed states.
fn hello_exchange(psk: &PreSharedKey, t: u64, sw_xid: u32, ctl_xid: u32) -> (D1State, D1State) {
    let mut sw = D1State::start(Role::SwitchSide, psk, Timestamp(t));
    let mut ctl = D1State::start(Role::ControllerSide, psk, Timestamp(t));
    let sw_hello = sw.dialect_outbound(&OpenFlowMessage::hello(6, sw_xid), Timestamp(t)).unwrap();
    let ctl_hello = ctl.dialect_outbound(&OpenFlowMessage::hello(6, ctl_xid), Timestamp(t)).unwrap();
    assert_eq!(ctl.verify_inbound(&sw_hello, Timestamp(t)).unwrap(), D1Verdict::Accept);
    assert_eq!(sw.verify_inbound(&ctl_hello, Timestamp(t)).unwrap(), D1Verdict::Accept);
    (sw, ctl)
}

fn d2_pair(psk: &PreSharedKey, t: u64) -> (D2State, D2State) {
    let (sw, ctl) = hello_exchange(psk, t, 1, 2);
    let sid_sw = sw.complete().unwrap();
    let sid_ctl = ctl.complete().unwrap();
    assert_eq!(sid_sw, sid_ctl);
    (D2State::start(sw, &sid_sw).unwrap(), D2State::start(ctl, &sid_ctl).unwrap())
}

#[test]
fn proxies_started_in_the_same_second_share_keys() {
    let sw = D1State::start(Role::SwitchSide, &kat_psk(), Timestamp(T0));
    let ctl = D1State::start(Role::ControllerSide, &kat_psk(), Timestamp(T0));
    let sw_send = sw.send_window().key_for_epoch(T0).unwrap();
    let ctl_recv = ctl.recv_window().key_for_epoch(T0).unwrap();
    assert_eq!(sw_send, ctl_recv);
    assert_eq!(sw.recv_window().key_for_epoch(T0), ctl.send_window().key_for_epoch(T0));
    assert_ne!(sw_send.as_bytes(), sw.recv_window().key_for_epoch(T0).unwrap().as_bytes());
    assert_eq!(sw_send.direction(), Direction::SwitchToController);
}

#[test]
fn switch_hello_carries_flow1_kat_tag() {
    let mut sw = D1State::start(Role::SwitchSide, &kat_psk(), Timestamp(T0));
    let input = OpenFlowMessage::hello(6, 0x5eed_1234);
    let out = sw.dialect_outbound(&input, Timestamp(T0)).unwrap();
    // frozen from the Python keyed-BLAKE2b reference
    assert_eq!(out.xid(), 0x44d0_381d);
    let (a, b) = (input.serialize().unwrap(), out.serialize().unwrap());
    assert_eq!(a.len(), b.len());
    assert_eq!(a[..4], b[..4]);
    assert_eq!(a[8..], b[8..]);
}

#[test]
fn controller_hello_uses_flow2() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
    let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
    let hello = OpenFlowMessage::hello(6, 0);
    let sw_out = sw.dialect_outbound(&hello, Timestamp(T0)).unwrap();
    let ctl_out = ctl.dialect_outbound(&hello, Timestamp(T0)).unwrap();
    assert_ne!(sw_out.xid(), ctl_out.xid());
    let key = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(T0));
    let want = mac_d1(&key, FlowLabel::Flow2, &hello.serialize().unwrap()).unwrap();
    assert_eq!(ctl_out.xid(), want.as_xid());
}

#[test]
fn same_second_and_next_second_verify() {
    for delay in [0, 1] {
        let psk = kat_psk();
        let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
        let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
        let hello = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
        assert_eq!(ctl.verify_inbound(&hello, Timestamp(T0 + delay)).unwrap(), D1Verdict::Accept);
    }
}

#[test]
fn two_seconds_late_is_stale_and_keys_are_zeroed() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
    let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
    let hello = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
    assert_eq!(ctl.verify_inbound(&hello, Timestamp(T0 + 2)).unwrap(), D1Verdict::Reject(D1Reject::Stale));
    assert_eq!(ctl.phase(), D1Phase::Failed);
    let retired = ctl.retired_keys();
    let anchor_recv = retired
        .iter()
        .find(|r| r.direction == Direction::SwitchToController && r.epoch == T0)
        .expect("anchor key retired");
    assert!(anchor_recv.zeroed);
    assert!(retired.iter().all(|r| r.zeroed));
    assert!(ctl.recv_window().key_for_epoch(T0).is_none());
}

#[test]
fn peer_anchored_one_second_earlier_still_verifies() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0 - 1));
    let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
    let hello = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0 - 1)).unwrap();
    assert_eq!(ctl.verify_inbound(&hello, Timestamp(T0)).unwrap(), D1Verdict::Accept);
}

#[test]
fn altered_hello_is_bad_tag() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
    let hello = OpenFlowMessage::build(ofdialect::openflow::MsgType::HELLO, 6, 0, vec![0, 1, 0, 8, 0, 0, 0, 0x40]).unwrap();
    let tagged = sw.dialect_outbound(&hello, Timestamp(T0)).unwrap();
    let bytes = tagged.serialize().unwrap();
    for i in (0..bytes.len()).filter(|i| !(4..8).contains(i) && !(2..4).contains(i)) {
        let mut b = bytes.clone();
        b[i] ^= 0x01;
        let (msg, _) = ofdialect::openflow::parse_message(&b).unwrap();
        let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
        assert_eq!(ctl.verify_inbound(&msg, Timestamp(T0)).unwrap(), D1Verdict::Reject(D1Reject::BadTag), "byte {i}");
    }
}

#[test]
fn both_sides_derive_the_same_sid() {
    let (sw, ctl) = hello_exchange(&kat_psk(), T0, 7, 8);
    let sid = sw.complete().unwrap();
    assert_eq!(sid, ctl.complete().unwrap());
    let expected = SessionId::from_tags(sw.sent_tag().unwrap(), ctl.sent_tag().unwrap());
    assert_eq!(sid, expected);
}

#[test]
fn tampered_hello_yields_no_sid() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
    let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(T0));
    let hello = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
    ctl.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
    let tampered = hello.with_xid(hello.xid() ^ 1);
    assert!(matches!(ctl.verify_inbound(&tampered, Timestamp(T0)).unwrap(), D1Verdict::Reject(_)));
    assert!(ctl.complete().is_err());
    assert!(matches!(D2State::start(ctl, &SessionId::from_bytes([0; 8])), Err(DialectError::WrongPhase(_))));
}

#[test]
fn d2_keys_match_across_proxies() {
    let (sw, ctl) = d2_pair(&kat_psk(), T0);
    assert_eq!(sw.send_key(), ctl.recv_key());
    assert_eq!(sw.recv_key(), ctl.send_key());
    assert_eq!((sw.send_seq(), sw.recv_seq()), (0, 0));
    assert_eq!((ctl.send_seq(), ctl.recv_seq()), (0, 0));
}

#[test]
fn sid_changes_wrapper_keys() {
    let psk = kat_psk();
    let (sw_a, _) = hello_exchange(&psk, T0, 1, 2);
    let (sw_b, _) = hello_exchange(&psk, T0, 1, 2);
    let sid = sw_a.complete().unwrap();
    let mut other = *sid.as_bytes();
    other[7] ^= 0x80;
    let a = D2State::start(sw_a, &sid).unwrap();
    let b = D2State::start(sw_b, &SessionId::from_bytes(other)).unwrap();
    assert_ne!(a.send_key().as_bytes(), b.send_key().as_bytes());
    assert_ne!(a.recv_key().as_bytes(), b.recv_key().as_bytes());
}

#[test]
fn d2_start_erases_hello_keys() {
    let (sw, _) = hello_exchange(&kat_psk(), T0, 1, 2);
    let sid = sw.complete().unwrap();
    // start consumes the hello state; dropping it zeroizes the remaining key bytes
    let d2 = D2State::start(sw, &sid).unwrap();
    assert!(d2.is_alive());
}

#[test]
fn mismatched_sids_fail_the_first_frame_both_ways() {
    let psk = kat_psk();
    let (sw, ctl) = hello_exchange(&psk, T0, 3, 4);
    let sid = sw.complete().unwrap();
    let mut forced = *sid.as_bytes();
    forced[0] ^= 1;
    let mut sw = D2State::start(sw, &sid).unwrap();
    let mut ctl = D2State::start(ctl, &SessionId::from_bytes(forced)).unwrap();
    let f = sw.wrap(b"client hello").unwrap();
    assert!(matches!(ctl.unwrap(&f), Err(DialectError::BadTag { expected_seq: 0 })));
    let g = ctl.wrap(b"x");
    assert_eq!(g, Err(DialectError::ConnectionClosed));
    let (sw2, ctl2) = hello_exchange(&psk, T0, 3, 4);
    let mut sw2 = D2State::start(sw2, &sid).unwrap();
    let mut ctl2 = D2State::start(ctl2, &SessionId::from_bytes(forced)).unwrap();
    let g = ctl2.wrap(b"server hello").unwrap();
    assert!(matches!(sw2.unwrap(&g), Err(DialectError::BadTag { .. })));
}

#[test]
fn own_frames_and_tags_are_not_accepted_back() {
    let psk = kat_psk();
    let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(T0));
    let own = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(T0)).unwrap();
    assert_eq!(sw.verify_inbound(&own, Timestamp(T0)).unwrap(), D1Verdict::Reject(D1Reject::BadTag));

    let (mut sw, _ctl) = d2_pair(&psk, T0);
    let frame = sw.wrap(b"flow mod").unwrap();
    assert!(matches!(sw.unwrap(&frame), Err(DialectError::BadTag { .. })));
}

#[test]
fn ten_thousand_frames_in_order() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(4);
    let (mut sw, mut ctl) = d2_pair(&kat_psk(), T0);
    for _ in 0..10_000 {
        let len = rng.gen_range(0..256);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let wire = sw.wrap(&payload).unwrap().encode();
        let (frame, used) = D2Frame::decode(&wire).unwrap().unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(ctl.unwrap(&frame).unwrap(), payload);
    }
    assert_eq!(ctl.recv_seq(), 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swapping_adjacent_frames_is_fatal(
        payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 2..20),
        swap in any::<prop::sample::Index>(),
    ) {
        let (mut sw, mut ctl) = d2_pair(&kat_psk(), T0);
        let mut frames: Vec<_> = payloads.iter().map(|p| sw.wrap(p).unwrap()).collect();
        let i = swap.index(frames.len() - 1);
        // identical neighbours would make the swap invisible
        prop_assume!(payloads[i] != payloads[i + 1]);
        frames.swap(i, i + 1);
        for (n, f) in frames.iter().enumerate() {
            let r = ctl.unwrap(f);
            if n < i {
                prop_assert_eq!(r.unwrap(), payloads[n].clone());
            } else if n == i {
                let is_bad = matches!(r, Err(DialectError::BadTag { .. }));
                prop_assert!(is_bad);
            } else {
                prop_assert_eq!(r, Err(DialectError::ConnectionClosed));
            }
        }
    }

    #[test]
    fn nothing_is_delivered_after_a_failure(
        payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..32), 2..10),
        bad in any::<prop::sample::Index>(),
        bit in 0usize..8,
    ) {
        let (mut sw, mut ctl) = d2_pair(&kat_psk(), T0);
        let bad = bad.index(payloads.len());
        for (n, p) in payloads.iter().enumerate() {
            let mut f = sw.wrap(p).unwrap();
            if n == bad {
                f.payload[0] ^= 1 << bit;
            }
            let r = ctl.unwrap(&f);
            prop_assert_eq!(r.is_ok(), n < bad);
        }
        prop_assert!(!ctl.is_alive());
    }

    #[test]
    fn reflection_is_always_rejected(psk in any::<[u8; 32]>(), t in 1u64..1 << 40, xid in any::<u32>(), payload in proptest::collection::vec(any::<u8>(), 0..64)) {
        let psk = PreSharedKey::new(psk);
        for role in [Role::SwitchSide, Role::ControllerSide] {
            let mut s = D1State::start(role, &psk, Timestamp(t));
            let own = s.dialect_outbound(&OpenFlowMessage::hello(6, xid), Timestamp(t)).unwrap();
            prop_assert_eq!(s.verify_inbound(&own, Timestamp(t)).unwrap(), D1Verdict::Reject(D1Reject::BadTag));
        }
        let (mut sw, mut ctl) = d2_pair(&psk, t);
        let f = sw.wrap(&payload).unwrap();
        prop_assert!(sw.unwrap(&f).is_err());
        let g = ctl.wrap(&payload).unwrap();
        prop_assert!(ctl.unwrap(&g).is_err());
    }
}

#[test]
fn anchors_one_second_apart_interoperate_both_ways() {
    let psk = kat_psk();
    for (sw_anchor, ctl_anchor) in [(T0, T0 + 1), (T0 + 1, T0)] {
        let mut sw = D1State::start(Role::SwitchSide, &psk, Timestamp(sw_anchor));
        let mut ctl = D1State::start(Role::ControllerSide, &psk, Timestamp(ctl_anchor));
        let now = T0 + 1;
        let a = sw.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(sw_anchor)).unwrap();
        let b = ctl.dialect_outbound(&OpenFlowMessage::hello(6, 0), Timestamp(ctl_anchor)).unwrap();
        assert_eq!(ctl.verify_inbound(&a, Timestamp(now)).unwrap(), D1Verdict::Accept);
        assert_eq!(sw.verify_inbound(&b, Timestamp(now)).unwrap(), D1Verdict::Accept);
        let sid = sw.complete().unwrap();
        assert_eq!(sid, ctl.complete().unwrap());
        let mut sw = D2State::start(sw, &sid).unwrap();
        let mut ctl = D2State::start(ctl, &sid).unwrap();
        let f = sw.wrap(b"features").unwrap();
        assert_eq!(ctl.unwrap(&f).unwrap(), b"features");
    }
}
