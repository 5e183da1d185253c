//! Protocol dialecting for the OpenFlow control channel.
//!
//! Two layers protect a switch/controller session without touching either
//! endpoint:
//!
//! * the Hello exchange carries a 32-bit keyed BLAKE2b tag in its transaction
//!   ID, computed under keys that are ratcheted every second and erased once
//!   they leave a short acceptance window;
//! * everything after the Hellos is framed with a 512-bit tag computed under a
//!   per-message key, with implicit per-direction sequence numbers.
//!
//! A pair of policy-enforcement proxies ([`pep`]) applies both layers on the
//! untrusted leg between them and checks TLS handshake plaintext against an
//! operator policy.

pub mod crypto;
pub mod dialect;
pub mod openflow;
pub mod pep;
pub mod tls;
