use std::fmt;

use ofdialect::crypto::PreSharedKey;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ofdialect::dialect::DEFAULT_GRACE;
use ofdialect::tls::Policy;

use crate::metrics::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerMode {
    None,
    /// Rewrites the ClientHello version to TLS 1.0 and leaves the wrapper
    /// tag alone.
    VersionDowngradeKeepTag,
    /// Same rewrite, with a random tag in place of the original.
    VersionDowngradeForgeTag,
    /// Sends the first switch-to-controller frame after the Hello twice.
    ReplayD2Frame,
    /// Substitutes the switch's Hello with one captured at least two
    /// seconds earlier.
    ReplayD1Hello,
    /// Holds back the switch's Hello (and everything behind it) for `n`
    /// seconds.
    DelaySeconds(u64),
    /// Flips one bit in the first switch-to-controller payload after the
    /// Hello.
    FlipPayloadBit,
}

impl fmt::Display for AttackerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackerMode::DelaySeconds(n) => write!(f, "DelaySeconds({n})"),
            other => write!(f, "{other:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub tls_enabled: bool,
    pub dialect_enabled: bool,
    pub attacker: AttackerMode,
    pub repetitions: u32,
    pub echo_interval_s: f64,
    pub psk: Option<PreSharedKey>,
    pub policy: Policy,
    pub grace: u64,
    /// Upper bound on random extra OpenFlow messages per session.
    pub max_extra_messages: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (valid: {names})", names = SCENARIO_NAMES.join(", "))]
    Unknown(String),
    #[error("scenario `{0}` enables the dialect but has no PSK")]
    MissingPsk(String),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("echo interval must be positive and finite")]
    EchoInterval,
    #[error("attacker mode {0} needs the simulated transport")]
    AttackerOverTcp(AttackerMode),
}

pub const DEFAULT_REPETITIONS: u32 = 30;
pub const DEFAULT_ECHO_INTERVAL_S: f64 = 5.0;

pub const SCENARIO_NAMES: [&str; 10] = [
    "baseline",
    "tls",
    "tls-dialect",
    "dialect-no-tls",
    "downgrade-keep-tag",
    "downgrade-forge-tag",
    "replay-d2",
    "replay-d1",
    "stale-d1",
    "flip-bit",
];

impl Scenario {
    pub fn new(name: &str, tls_enabled: bool, dialect_enabled: bool, attacker: AttackerMode) -> Self {
        Scenario {
            name: name.to_string(),
            tls_enabled,
            dialect_enabled,
            attacker,
            repetitions: DEFAULT_REPETITIONS,
            echo_interval_s: DEFAULT_ECHO_INTERVAL_S,
            psk: None,
            policy: Policy::default(),
            grace: DEFAULT_GRACE,
            max_extra_messages: 6,
        }
    }

    /// One of the fixed experiment configurations. The PSK is left unset.
    pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
        use AttackerMode::*;
        let (tls, dialect, attacker) = match name {
            "baseline" => (false, false, None),
            "tls" => (true, false, None),
            "tls-dialect" => (true, true, None),
            "dialect-no-tls" => (false, true, None),
            "downgrade-keep-tag" => (true, true, VersionDowngradeKeepTag),
            "downgrade-forge-tag" => (true, true, VersionDowngradeForgeTag),
            "replay-d2" => (true, true, ReplayD2Frame),
            "replay-d1" => (true, true, ReplayD1Hello),
            "stale-d1" => (true, true, DelaySeconds(2)),
            "flip-bit" => (true, true, FlipPayloadBit),
            other => return Err(ScenarioError::Unknown(other.to_string())),
        };
        Ok(Scenario::new(name, tls, dialect, attacker))
    }

    /// Sets a PSK derived from `seed`, for reproducible runs.
    pub fn with_seeded_psk(self, seed: u64) -> Self {
        let mut bytes = [0u8; 32];
        StdRng::seed_from_u64(seed).fill(&mut bytes);
        self.with_psk(PreSharedKey::new(bytes))
    }

    pub fn with_psk(mut self, psk: PreSharedKey) -> Self {
        self.psk = Some(psk);
        self
    }

    pub fn with_repetitions(mut self, n: u32) -> Self {
        self.repetitions = n;
        self
    }

    pub fn without_dialect(mut self) -> Self {
        self.dialect_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.repetitions == 0 {
            return Err(ScenarioError::NoRepetitions);
        }
        if !(self.echo_interval_s.is_finite() && self.echo_interval_s > 0.0) {
            return Err(ScenarioError::EchoInterval);
        }
        if self.dialect_enabled && self.psk.is_none() {
            return Err(ScenarioError::MissingPsk(self.name.clone()));
        }
        Ok(())
    }

    /// The outcome every run should end with, or `None` when the
    /// configuration makes no prediction (bit flips and replays against an
    /// undefended channel).
    pub fn expected_outcome(&self) -> Option<Outcome> {
        use AttackerMode::*;
        match (self.attacker, self.dialect_enabled) {
            (None, _) => Some(Outcome::Completed),
            (DelaySeconds(n), true) if n <= self.grace => Some(Outcome::Completed),
            (DelaySeconds(_), false) => Some(Outcome::Completed),
            (_, true) => Some(Outcome::TornDown),
            (VersionDowngradeKeepTag | VersionDowngradeForgeTag | ReplayD1Hello, false) => Some(Outcome::Completed),
            (ReplayD2Frame | FlipPayloadBit, false) => Option::None,
        }
    }
}
