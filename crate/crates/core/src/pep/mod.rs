//! Policy enforcement proxy.
//!
//! One proxy sits next to each endpoint. It tags the local Hello, verifies
//! the peer's, wraps everything after that and checks TLS hello plaintext
//! against a [`Policy`]. Any failure raises one alert and closes both sides.

mod alert;
mod proxy;
mod session;

use std::path::PathBuf;

use thiserror::Error;

use crate::crypto::{read_psk_file, PreSharedKey, PskFileError};
use crate::dialect::{Role, DEFAULT_GRACE};
use crate::tls::{Policy, PolicyError};

pub use alert::{
    emit_alert, parse_notification, AlertEvent, AlertReason, AlertSink, LogSink, MemorySink, ALERT_EXPERIMENTER_ID,
};
pub use proxy::{pump, run_proxy, serve, Clock, ProxyContext, ProxyError, SystemClock};
pub use session::{Action, PepSession, SessionStats};

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub role: Role,
    pub listen_endpoint: String,
    /// Dialed by the switch side. The controller side only accepts.
    pub peer_proxy_endpoint: String,
    /// Dialed by the controller side. The switch side accepts its switch on
    /// `listen_endpoint`.
    pub local_device_endpoint: String,
    pub psk_path: PathBuf,
    pub policy: Policy,
    pub d1_window_grace: u64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("endpoints must be distinct ({0} appears twice)")]
    DuplicateEndpoint(String),
    #[error(transparent)]
    Psk(#[from] PskFileError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl ProxyConfig {
    pub fn new(role: Role, listen: &str, peer: &str, device: &str, psk_path: PathBuf, policy: Policy) -> Self {
        ProxyConfig {
            role,
            listen_endpoint: listen.to_string(),
            peer_proxy_endpoint: peer.to_string(),
            local_device_endpoint: device.to_string(),
            psk_path,
            policy,
            d1_window_grace: DEFAULT_GRACE,
        }
    }

    /// Checks the invariants and loads the PSK.
    pub fn validate(&self) -> Result<PreSharedKey, ConfigError> {
        let eps = [&self.listen_endpoint, &self.peer_proxy_endpoint, &self.local_device_endpoint];
        for (i, a) in eps.iter().enumerate() {
            if eps[i + 1..].contains(a) {
                return Err(ConfigError::DuplicateEndpoint(a.to_string()));
            }
        }
        self.policy.validate()?;
        Ok(read_psk_file(&self.psk_path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::write_psk_file;

    #[test]
    fn config_checks_endpoints_and_psk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psk-s1.key");
        let mut cfg = ProxyConfig::new(Role::SwitchSide, "127.0.0.1:1", "127.0.0.1:2", "127.0.0.1:3", path.clone(), Policy::default());
        assert!(matches!(cfg.validate(), Err(ConfigError::Psk(_))));
        write_psk_file(&path, &PreSharedKey::new([1; 32])).unwrap();
        assert!(cfg.validate().is_ok());
        cfg.peer_proxy_endpoint = cfg.listen_endpoint.clone();
        assert!(matches!(cfg.validate(), Err(ConfigError::DuplicateEndpoint(_))));
    }
}
