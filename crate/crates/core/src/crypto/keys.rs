//! Uni-directional key schedule.
//!
//! Every key is bound to one [`Direction`]. Hello-stage keys additionally carry
//! the epoch second they are valid for and are ratcheted forward once per
//! second; wrapper-stage keys are derived once per session from the final
//! Hello-stage keys and the session identifier.

use std::fmt;

use blake2::Blake2b512;
use hkdf::SimpleHkdf;
use zeroize::Zeroize;

use super::CryptoError;

/// Length of every derived key, in bytes.
pub const KEY_LEN: usize = 64;

/// Length of a pre-shared key, in bytes.
pub const PSK_LEN: usize = 32;

const SWITCH_ID: &[u8] = b"switch";
const CONTROLLER_ID: &[u8] = b"controller";

/// HKDF (RFC 5869) instantiated with BLAKE2b-512, 64 bytes of output.
pub(crate) fn hkdf64(ikm: &[u8], salt: &[u8], info: &[u8]) -> [u8; KEY_LEN] {
    let hk = SimpleHkdf::<Blake2b512>::new(Some(salt), ikm);
    let mut okm = [0u8; KEY_LEN];
    hk.expand(info, &mut okm)
        .expect("64 bytes is within the HKDF-BLAKE2b output limit");
    okm
}

/// The 32-byte secret provisioned out of band for one switch/controller pair.
#[derive(Clone, PartialEq, Eq)]
pub struct PreSharedKey([u8; PSK_LEN]);

impl PreSharedKey {
    pub fn new(bytes: [u8; PSK_LEN]) -> Self {
        PreSharedKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; PSK_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::PskLength(bytes.len()))?;
        Ok(PreSharedKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8; PSK_LEN] {
        &self.0
    }
}

impl Drop for PreSharedKey {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl fmt::Debug for PreSharedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PreSharedKey(..)")
    }
}

/// Which way a message (and therefore a key) travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    SwitchToController,
    ControllerToSwitch,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::SwitchToController => Direction::ControllerToSwitch,
            Direction::ControllerToSwitch => Direction::SwitchToController,
        }
    }

    fn sender_id(self) -> &'static [u8] {
        match self {
            Direction::SwitchToController => SWITCH_ID,
            Direction::ControllerToSwitch => CONTROLLER_ID,
        }
    }

    fn receiver_id(self) -> &'static [u8] {
        self.reverse().sender_id()
    }

    /// `<prefix>|<sender>|<receiver>`, the HKDF info string for this direction.
    fn label(self, prefix: &[u8]) -> Vec<u8> {
        let mut info = Vec::with_capacity(prefix.len() + 20);
        info.extend_from_slice(prefix);
        info.push(b'|');
        info.extend_from_slice(self.sender_id());
        info.push(b'|');
        info.extend_from_slice(self.receiver_id());
        info
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::SwitchToController => f.write_str("switch->controller"),
            Direction::ControllerToSwitch => f.write_str("controller->switch"),
        }
    }
}

/// Whole UTC seconds, truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_secs_f64(secs: f64) -> Timestamp {
        Timestamp(secs.max(0.0).floor() as u64)
    }

    pub fn epoch_second(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    D1,
    D2,
}

/// Key material for one direction at one stage.
///
/// Hello-stage keys always have an epoch index; wrapper-stage keys never do.
/// The bytes are overwritten with zeros on drop and on [`DialectKey::erase`].
#[derive(Clone)]
pub struct DialectKey {
    stage: Stage,
    direction: Direction,
    epoch: Option<u64>,
    bytes: [u8; KEY_LEN],
}

impl DialectKey {
    pub(crate) fn new_d1(direction: Direction, epoch: u64, bytes: [u8; KEY_LEN]) -> Self {
        DialectKey { stage: Stage::D1, direction, epoch: Some(epoch), bytes }
    }

    pub(crate) fn new_d2(direction: Direction, bytes: [u8; KEY_LEN]) -> Self {
        DialectKey { stage: Stage::D2, direction, epoch: None, bytes }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// The epoch second a Hello-stage key is valid for; `None` for wrapper keys.
    pub fn epoch_index(&self) -> Option<u64> {
        self.epoch
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub(crate) fn require_stage(&self, stage: Stage) -> Result<(), CryptoError> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(CryptoError::StageMismatch { expected: stage, found: self.stage })
        }
    }

    /// Overwrites the key bytes with zeros. Returns `true` when every byte
    /// reads back as zero afterwards.
    pub fn erase(&mut self) -> bool {
        self.bytes.zeroize();
        self.is_erased()
    }

    pub fn is_erased(&self) -> bool {
        self.bytes.iter().all(|b| *b == 0)
    }
}

impl Drop for DialectKey {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl PartialEq for DialectKey {
    fn eq(&self, other: &Self) -> bool {
        use subtle::ConstantTimeEq;
        self.stage == other.stage
            && self.direction == other.direction
            && self.epoch == other.epoch
            && bool::from(self.bytes.ct_eq(&other.bytes))
    }
}

impl Eq for DialectKey {}

impl fmt::Debug for DialectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DialectKey")
            .field("stage", &self.stage)
            .field("direction", &self.direction)
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

/// Derives the Hello-stage key for `direction` anchored at `anchor`.
///
/// IKM is the PSK, the salt is the anchor second as 8 big-endian bytes and the
/// info string names sender then receiver, e.g. `D1|switch|controller`.
pub fn derive_d1_key(psk: &PreSharedKey, direction: Direction, anchor: Timestamp) -> DialectKey {
    let bytes = hkdf64(
        psk.as_bytes(),
        &anchor.epoch_second().to_be_bytes(),
        &direction.label(b"D1"),
    );
    DialectKey::new_d1(direction, anchor.epoch_second(), bytes)
}

/// Derives the key for the next epoch second from the current one.
pub fn ratchet_d1(key: &DialectKey) -> Result<DialectKey, CryptoError> {
    key.require_stage(Stage::D1)?;
    let next_epoch = key
        .epoch
        .expect("D1 keys carry an epoch")
        .checked_add(1)
        .ok_or(CryptoError::EpochOverflow)?;
    let bytes = hkdf64(&key.bytes, &next_epoch.to_be_bytes(), b"D1-ratchet");
    Ok(DialectKey::new_d1(key.direction, next_epoch, bytes))
}

/// Derives the per-direction wrapper keys from the final Hello-stage keys,
/// salted with the session identifier.
///
/// Returns `(switch_to_controller, controller_to_switch)`.
pub fn derive_d2_keys(
    d1_key_sc: &DialectKey,
    d1_key_cs: &DialectKey,
    sid: &[u8; 8],
) -> Result<(DialectKey, DialectKey), CryptoError> {
    d1_key_sc.require_stage(Stage::D1)?;
    d1_key_cs.require_stage(Stage::D1)?;
    if d1_key_sc.direction != Direction::SwitchToController
        || d1_key_cs.direction != Direction::ControllerToSwitch
    {
        return Err(CryptoError::DirectionMismatch);
    }
    let derive = |key: &DialectKey| {
        let bytes = hkdf64(&key.bytes, sid, &key.direction.label(b"D2"));
        DialectKey::new_d2(key.direction, bytes)
    };
    Ok((derive(d1_key_sc), derive(d1_key_cs)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kat_psk() -> PreSharedKey {
        PreSharedKey::new([0x0b; PSK_LEN])
    }

    #[test]
    fn derivation_is_deterministic() {
        let a = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(1_600_000_000));
        let b = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(1_600_000_000));
        assert_eq!(a, b);
        assert_eq!(a.epoch_index(), Some(1_600_000_000));
        assert_eq!(a.stage(), Stage::D1);
    }

    #[test]
    fn info_labels_order_sender_first() {
        assert_eq!(Direction::SwitchToController.label(b"D1"), b"D1|switch|controller");
        assert_eq!(Direction::ControllerToSwitch.label(b"D2"), b"D2|controller|switch");
    }

    #[test]
    fn ratchet_advances_epoch_and_changes_bytes() {
        let k = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(1_600_000_000));
        let n = ratchet_d1(&k).unwrap();
        assert_eq!(n.epoch_index(), Some(1_600_000_001));
        assert_ne!(n.as_bytes(), k.as_bytes());
        assert_eq!(ratchet_d1(&n).unwrap(), ratchet_d1(&ratchet_d1(&k).unwrap()).unwrap());
    }

    #[test]
    fn ratchet_rejects_wrapper_keys() {
        let sc = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(5));
        let cs = derive_d1_key(&kat_psk(), Direction::ControllerToSwitch, Timestamp(5));
        let (d2, _) = derive_d2_keys(&sc, &cs, &[0; 8]).unwrap();
        assert_eq!(d2.epoch_index(), None);
        assert!(matches!(ratchet_d1(&d2), Err(CryptoError::StageMismatch { .. })));
    }

    #[test]
    fn ratchet_overflow_is_an_error() {
        let k = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(u64::MAX));
        assert!(matches!(ratchet_d1(&k), Err(CryptoError::EpochOverflow)));
    }

    #[test]
    fn d2_derivation_checks_directions() {
        let sc = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(5));
        let cs = derive_d1_key(&kat_psk(), Direction::ControllerToSwitch, Timestamp(5));
        assert!(matches!(derive_d2_keys(&cs, &sc, &[0; 8]), Err(CryptoError::DirectionMismatch)));
        assert!(matches!(derive_d2_keys(&sc, &sc, &[0; 8]), Err(CryptoError::DirectionMismatch)));
        let (a, b) = derive_d2_keys(&sc, &cs, &[1; 8]).unwrap();
        assert_eq!(a.direction(), Direction::SwitchToController);
        assert_eq!(b.direction(), Direction::ControllerToSwitch);
        assert_eq!(a.stage(), Stage::D2);
    }

    #[test]
    fn erase_zeroes_bytes() {
        let mut k = derive_d1_key(&kat_psk(), Direction::ControllerToSwitch, Timestamp(9));
        assert!(!k.is_erased());
        assert!(k.erase());
        assert!(k.is_erased());
    }

    #[test]
    fn psk_length_is_enforced() {
        assert!(PreSharedKey::from_slice(&[0u8; 31]).is_err());
        assert!(PreSharedKey::from_slice(&[0u8; 33]).is_err());
        assert!(PreSharedKey::from_slice(&[0u8; 32]).is_ok());
    }

    #[test]
    fn debug_output_hides_key_material() {
        let k = derive_d1_key(&kat_psk(), Direction::SwitchToController, Timestamp(1));
        let s = format!("{k:?}");
        assert!(!s.contains("bytes"));
        assert_eq!(format!("{:?}", kat_psk()), "PreSharedKey(..)");
    }
}
