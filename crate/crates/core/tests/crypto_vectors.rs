//! Known-answer tests against vectors produced by `tests/data/gen_vectors.py`
//! (Python stdlib `hmac` + `hashlib.blake2b`), plus key-schedule properties.

use ofdialect::crypto::{
    derive_d1_key, derive_d2_keys, mac_d1, mac_d2, ratchet_d1, Direction, FlowLabel, PreSharedKey, Timestamp,
};
use proptest::prelude::*;
use serde_json::Value;

fn vectors() -> Value {
    serde_json::from_str(include_str!("data/vectors.json")).unwrap()
}

fn hex_field(v: &Value, name: &str) -> Vec<u8> {
    hex::decode(v[name].as_str().unwrap()).unwrap()
}

fn direction(v: &Value) -> Direction {
    match v["direction"].as_str().unwrap() {
        "sc" => Direction::SwitchToController,
        "cs" => Direction::ControllerToSwitch,
        other => panic!("unknown direction {other}"),
    }
}

#[test]
fn d1_key_vectors() {
    let v = vectors();
    let cases = v["d1_keys"].as_array().unwrap();
    assert!(cases.len() >= 10);
    for case in cases {
        let psk = PreSharedKey::from_slice(&hex_field(case, "psk")).unwrap();
        let key = derive_d1_key(&psk, direction(case), Timestamp(case["anchor"].as_u64().unwrap()));
        assert_eq!(key.as_bytes().to_vec(), hex_field(case, "key"), "case {case}");
    }
}

#[test]
fn ratchet_vectors() {
    let v = vectors();
    let psk = PreSharedKey::new([0x0b; 32]);
    let mut key = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000));
    for case in v["ratchet"].as_array().unwrap() {
        assert_eq!(key.as_bytes().to_vec(), hex_field(case, "key"));
        key = ratchet_d1(&key).unwrap();
        assert_eq!(key.epoch_index(), case["new_epoch"].as_u64());
        assert_eq!(key.as_bytes().to_vec(), hex_field(case, "next"));
    }
}

#[test]
fn d2_key_vectors() {
    let v = vectors();
    let psk = PreSharedKey::new([0x0b; 32]);
    let sc = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000));
    let cs = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(1_600_000_000));
    for case in v["d2_keys"].as_array().unwrap() {
        assert_eq!(sc.as_bytes().to_vec(), hex_field(case, "d1_sc"));
        assert_eq!(cs.as_bytes().to_vec(), hex_field(case, "d1_cs"));
        let sid: [u8; 8] = hex_field(case, "sid").try_into().unwrap();
        let (d2_sc, d2_cs) = derive_d2_keys(&sc, &cs, &sid).unwrap();
        assert_eq!(d2_sc.as_bytes().to_vec(), hex_field(case, "d2_sc"));
        assert_eq!(d2_cs.as_bytes().to_vec(), hex_field(case, "d2_cs"));
    }
}

#[test]
fn mac_d1_vectors() {
    let v = vectors();
    let psk = PreSharedKey::new([0x0b; 32]);
    let keys = [
        derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000)),
        derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(1_600_000_000)),
    ];
    for case in v["mac_d1"].as_array().unwrap() {
        let want_key = hex_field(case, "key");
        let key = keys.iter().find(|k| k.as_bytes().to_vec() == want_key).expect("vector key is a KAT key");
        let flow = match case["flow"].as_u64().unwrap() {
            1 => FlowLabel::Flow1,
            _ => FlowLabel::Flow2,
        };
        let tag = mac_d1(key, flow, &hex_field(case, "hello")).unwrap();
        assert_eq!(tag.0.to_vec(), hex_field(case, "tag"), "case {case}");
    }
}

#[test]
fn mac_d1_flow1_kat() {
    // KAT key (psk 32 x 0x0b, switch->controller, anchor 1600000000), Flow1, bare Hello
    let psk = PreSharedKey::new([0x0b; 32]);
    let key = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000));
    let tag = mac_d1(&key, FlowLabel::Flow1, &[0x06, 0, 0, 0x08, 0, 0, 0, 0]).unwrap();
    assert_eq!(tag.0, [0x44, 0xd0, 0x38, 0x1d]);
}

#[test]
fn mac_d2_vectors() {
    let v = vectors();
    let psk = PreSharedKey::new([0x0b; 32]);
    let sc = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000));
    let cs = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(1_600_000_000));
    let (d2, _) = derive_d2_keys(&sc, &cs, &[0xaa, 0xaa, 0xaa, 0xaa, 0xbb, 0xbb, 0xbb, 0xbb]).unwrap();
    for case in v["mac_d2"].as_array().unwrap() {
        assert_eq!(d2.as_bytes().to_vec(), hex_field(case, "key"));
        let tag = mac_d2(&d2, case["seq"].as_u64().unwrap(), &hex_field(case, "payload")).unwrap();
        assert_eq!(tag.0.to_vec(), hex_field(case, "tag"));
    }
}

#[test]
fn vector_count_covers_every_primitive() {
    let v = vectors();
    let total: usize = ["d1_keys", "ratchet", "d2_keys", "mac_d1", "mac_d2"]
        .iter()
        .map(|k| v[k].as_array().unwrap().len())
        .sum();
    assert!(total >= 20, "only {total} vectors");
}

#[test]
fn d1_tag_avalanche() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(99);
    let mut changed = 0;
    const SAMPLES: usize = 1000;
    for _ in 0..SAMPLES {
        let mut psk = [0u8; 32];
        rng.fill(&mut psk);
        let key = derive_d1_key(&PreSharedKey::new(psk), Direction::SwitchToController, Timestamp(rng.gen()));
        let body_len = rng.gen_range(0..32);
        let mut hello = vec![0x06, 0x00, 0x00, (8 + body_len) as u8, 0, 0, 0, 0];
        hello.extend((0..body_len).map(|_| rng.gen::<u8>()));
        // every bit outside the xid field is part of the authenticated image
        let positions: Vec<usize> = (0..hello.len()).filter(|i| !(4..8).contains(i)).collect();
        let byte = positions[rng.gen_range(0..positions.len())];
        let bit = rng.gen_range(0..8);
        let mut flipped = hello.clone();
        flipped[byte] ^= 1 << bit;
        let flow = if rng.gen() { FlowLabel::Flow1 } else { FlowLabel::Flow2 };
        if mac_d1(&key, flow, &hello).unwrap() != mac_d1(&key, flow, &flipped).unwrap() {
            changed += 1;
        }
    }
    assert!(changed * 100 >= SAMPLES * 99, "{changed}/{SAMPLES}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn directions_never_share_keys(psk in any::<[u8; 32]>(), t in any::<u64>()) {
        let psk = PreSharedKey::new(psk);
        let sc = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(t));
        let cs = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(t));
        prop_assert_ne!(sc.as_bytes(), cs.as_bytes());
    }

    #[test]
    fn consecutive_anchors_never_share_keys(psk in any::<[u8; 32]>(), t in 0u64..u64::MAX, sc in any::<bool>()) {
        let psk = PreSharedKey::new(psk);
        let dir = if sc { Direction::SwitchToController } else { Direction::ControllerToSwitch };
        let a = derive_d1_key(&psk, dir, Timestamp(t));
        let b = derive_d1_key(&psk, dir, Timestamp(t + 1));
        prop_assert_ne!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn ratchet_grouping_is_irrelevant(psk in any::<[u8; 32]>(), t in 0u64..1 << 40, a in 0usize..5, b in 0usize..5) {
        let start = derive_d1_key(&PreSharedKey::new(psk), Direction::SwitchToController, Timestamp(t));
        let step = |k: ofdialect::crypto::DialectKey, n: usize| (0..n).fold(k, |k, _| ratchet_d1(&k).unwrap());
        let grouped = step(step(start.clone(), a), b);
        let flat = step(start, a + b);
        prop_assert_eq!(grouped, flat);
    }

    #[test]
    fn every_sid_bit_matters(bit in 0usize..64) {
        let psk = PreSharedKey::new([0x0b; 32]);
        let sc = derive_d1_key(&psk, Direction::SwitchToController, Timestamp(1_600_000_000));
        let cs = derive_d1_key(&psk, Direction::ControllerToSwitch, Timestamp(1_600_000_000));
        let sid = [0xaa, 0xaa, 0xaa, 0xaa, 0xbb, 0xbb, 0xbb, 0xbb];
        let mut flipped = sid;
        flipped[bit / 8] ^= 1 << (bit % 8);
        let (a_sc, a_cs) = derive_d2_keys(&sc, &cs, &sid).unwrap();
        let (b_sc, b_cs) = derive_d2_keys(&sc, &cs, &flipped).unwrap();
        prop_assert_ne!(a_sc.as_bytes(), b_sc.as_bytes());
        prop_assert_ne!(a_cs.as_bytes(), b_cs.as_bytes());
    }
}
