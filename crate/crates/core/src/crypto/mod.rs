//! Key derivation, ratcheting and message authentication.

mod analysis;
mod keys;
mod mac;
mod psk;

use thiserror::Error;

pub use analysis::collision_time_estimate;
pub use keys::{
    derive_d1_key, derive_d2_keys, ratchet_d1, DialectKey, Direction, PreSharedKey, Stage, Timestamp, KEY_LEN,
    PSK_LEN,
};
pub use mac::{mac_d1, mac_d2, verify_tag, D1Tag, D2Tag, FlowLabel, D1_TAG_LEN, D2_TAG_LEN, PROTOCOL_VERSION};
pub use psk::{psk_file_name, read_psk_file, write_psk_file, PskFileError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CryptoError {
    #[error("expected a {expected:?} key, got a {found:?} key")]
    StageMismatch { expected: Stage, found: Stage },
    #[error("wrapper keys must be derived from one switch->controller and one controller->switch key")]
    DirectionMismatch,
    #[error("epoch index overflow")]
    EpochOverflow,
    #[error("pre-shared key must be 32 bytes, got {0}")]
    PskLength(usize),
    #[error("domain error: {0}")]
    Domain(String),
}
