//! Deterministic simulation of a switch/controller session through a pair
//! of dialecting proxies.
//!
//! [`run_scenario`] plays the fixed experiment configurations on a virtual
//! clock: mock devices exchange Hello, an optional TLS stub handshake,
//! Features Request/Reply and an Echo, while an [`Attacker`] sits on the leg
//! between the proxies. [`run_overhead_suite`] compares setup latency and
//! byte counts across the four TLS/dialect combinations.

mod attacker;
mod bench;
mod devices;
mod engine;
mod metrics;
mod scenario;
mod tls_stub;

pub use attacker::{downgrade_client_hello, Attacker};
pub use bench::{run_overhead_suite, ConfigSummary, OverheadReport, REFERENCE_FIGURES};
pub use devices::{ControllerDevice, DeviceConfig, DeviceOut, SwitchDevice, FLOW_MOD, PACKET_IN};
pub use engine::{run_scenario, run_session, LinkModel, BASE_EPOCH, LOCAL_LINK, NS_PER_SEC, UNTRUSTED_LINK};
pub use metrics::{mask_hello_xid, render_table, to_csv, DeviceStreams, Outcome, RunMetrics, CSV_HEADER};
pub use scenario::{
    AttackerMode, Scenario, ScenarioError, DEFAULT_ECHO_INTERVAL_S, DEFAULT_REPETITIONS, SCENARIO_NAMES,
};
pub use tls_stub::{
    tls_stub_handshake, ClientStub, Envelope, ServerStub, StubConfig, StubError, StubSession, STUB_SUITES,
    STUB_VERSIONS,
};
