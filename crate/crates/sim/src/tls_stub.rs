//! Minimal TLS stand-in.
//!
//! The handshake exchanges real ClientHello/ServerHello/Finished records so
//! proxies can inspect them; after that, application data travels in
//! `application_data` records whose bodies are XORed with a seeded keystream.
//! Nothing here is secure.

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use ofdialect::tls::{
    encode_client_hello, encode_finished, encode_server_hello, parse_hello, record_len, Side, CONTENT_ALERT,
    CONTENT_APPLICATION_DATA, CONTENT_HANDSHAKE, HANDSHAKE_FINISHED, RECORD_HEADER_LEN, TLS1_0, TLS1_1, TLS1_2,
    TLS1_3,
};

/// Versions the stub endpoints are willing to speak.
pub const STUB_VERSIONS: [u16; 3] = [TLS1_0, TLS1_1, TLS1_2];

pub const STUB_SUITES: [u16; 3] = [0xc02f, 0xc030, 0x009c];

const MAX_RECORD_BODY: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubConfig {
    /// Versions offered (client) or accepted (server).
    pub versions: Vec<u16>,
    pub suites: Vec<u16>,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig { versions: STUB_VERSIONS.to_vec(), suites: STUB_SUITES.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StubError {
    #[error("no mutually acceptable protocol version")]
    Version,
    #[error("no mutually acceptable cipher suite")]
    Suite,
    #[error("peer sent an alert")]
    PeerAlert,
    #[error("unexpected record: {0}")]
    Unexpected(String),
}

/// The record a server sends when it refuses the offered version.
pub fn protocol_version_alert() -> Vec<u8> {
    vec![CONTENT_ALERT, 0x03, 0x03, 0x00, 0x02, 2, 70]
}

/// Splits the first complete record off `buf`.
pub fn take_record(buf: &mut Vec<u8>) -> Option<Vec<u8>> {
    let len = record_len(buf)?;
    if buf.len() < len {
        return None;
    }
    let rest = buf.split_off(len);
    Some(std::mem::replace(buf, rest))
}

fn is_finished(record: &[u8]) -> bool {
    record.len() > RECORD_HEADER_LEN && record[0] == CONTENT_HANDSHAKE && record[RECORD_HEADER_LEN] == HANDSHAKE_FINISHED
}

fn check_alert(record: &[u8]) -> Result<(), StubError> {
    if record.first() == Some(&CONTENT_ALERT) {
        return Err(StubError::PeerAlert);
    }
    Ok(())
}

#[derive(Debug)]
pub struct ClientStub {
    config: StubConfig,
    random: [u8; 32],
    server_random: Option<[u8; 32]>,
    version: Option<u16>,
}

impl ClientStub {
    pub fn new(config: StubConfig, rng: &mut impl RngCore) -> Self {
        let mut random = [0u8; 32];
        rng.fill_bytes(&mut random);
        ClientStub { config, random, server_random: None, version: None }
    }

    /// Offers the highest configured version; TLS 1.3 goes into the
    /// supported_versions extension.
    pub fn client_hello(&self) -> Vec<u8> {
        let max = self.config.versions.iter().copied().max().unwrap_or(TLS1_2);
        if max >= TLS1_3 {
            let mut list = self.config.versions.clone();
            list.sort_unstable_by(|a, b| b.cmp(a));
            encode_client_hello(TLS1_2, &self.random, &self.config.suites, Some(&list))
        } else {
            encode_client_hello(max, &self.random, &self.config.suites, None)
        }
    }

    /// Accepts any configured version the server picks.
    pub fn on_server_hello(&mut self, record: &[u8]) -> Result<u16, StubError> {
        check_alert(record)?;
        let info = parse_hello(record).map_err(|e| StubError::Unexpected(e.to_string()))?;
        if info.side != Side::Server {
            return Err(StubError::Unexpected("ClientHello from server".into()));
        }
        let version = info.effective_versions()[0];
        if !self.config.versions.contains(&version) {
            return Err(StubError::Version);
        }
        if !self.config.suites.contains(&info.ciphersuites[0]) {
            return Err(StubError::Suite);
        }
        let mut random = [0u8; 32];
        random.copy_from_slice(&record[RECORD_HEADER_LEN + 6..RECORD_HEADER_LEN + 38]);
        self.server_random = Some(random);
        self.version = Some(version);
        Ok(version)
    }

    pub fn on_server_finished(&self, record: &[u8]) -> Result<(), StubError> {
        check_alert(record)?;
        if !is_finished(record) {
            return Err(StubError::Unexpected("expected Finished".into()));
        }
        Ok(())
    }

    pub fn finished(&self) -> Vec<u8> {
        encode_finished(&[0x11; 12])
    }

    pub fn version(&self) -> Option<u16> {
        self.version
    }

    pub fn envelope(&self) -> Option<Envelope> {
        Some(Envelope::new(&self.random, &self.server_random?, true))
    }
}

#[derive(Debug)]
pub struct ServerStub {
    config: StubConfig,
    random: [u8; 32],
    client_random: Option<[u8; 32]>,
    version: Option<u16>,
}

impl ServerStub {
    pub fn new(config: StubConfig, rng: &mut impl RngCore) -> Self {
        let mut random = [0u8; 32];
        rng.fill_bytes(&mut random);
        ServerStub { config, random, client_random: None, version: None }
    }

    /// Picks the highest offered version it accepts and returns the
    /// ServerHello and Finished records.
    pub fn on_client_hello(&mut self, record: &[u8]) -> Result<(Vec<u8>, Vec<u8>), StubError> {
        if self.client_random.is_some() {
            return Err(StubError::Unexpected("second ClientHello".into()));
        }
        let info = parse_hello(record).map_err(|e| StubError::Unexpected(e.to_string()))?;
        if info.side != Side::Client {
            return Err(StubError::Unexpected("ServerHello from client".into()));
        }
        let version = info
            .effective_versions()
            .into_iter()
            .filter(|v| self.config.versions.contains(v))
            .max()
            .ok_or(StubError::Version)?;
        let suite = info
            .ciphersuites
            .iter()
            .copied()
            .find(|s| self.config.suites.contains(s))
            .ok_or(StubError::Suite)?;
        let mut random = [0u8; 32];
        random.copy_from_slice(&record[RECORD_HEADER_LEN + 6..RECORD_HEADER_LEN + 38]);
        self.client_random = Some(random);
        self.version = Some(version);
        let selected = info.has_supported_versions_ext.then_some(version);
        let legacy = if selected.is_some() { TLS1_2 } else { version };
        Ok((encode_server_hello(legacy, &self.random, suite, selected), encode_finished(&[0x22; 12])))
    }

    pub fn on_client_finished(&self, record: &[u8]) -> Result<(), StubError> {
        check_alert(record)?;
        if !is_finished(record) {
            return Err(StubError::Unexpected("expected Finished".into()));
        }
        Ok(())
    }

    pub fn version(&self) -> Option<u16> {
        self.version
    }

    pub fn envelope(&self) -> Option<Envelope> {
        Some(Envelope::new(&self.client_random?, &self.random, false))
    }
}

/// Post-handshake record layer: XOR with a per-direction keystream.
pub struct Envelope {
    tx: StdRng,
    rx: StdRng,
    pending: Vec<u8>,
}

impl std::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Envelope").field("pending", &self.pending.len()).finish_non_exhaustive()
    }
}

impl Envelope {
    fn new(client_random: &[u8; 32], server_random: &[u8; 32], is_client: bool) -> Self {
        let stream = |dir: u8| {
            let mut seed = [0u8; 32];
            for (i, s) in seed.iter_mut().enumerate() {
                *s = client_random[i] ^ server_random[i];
            }
            seed[0] ^= dir;
            StdRng::from_seed(seed)
        };
        let (c2s, s2c) = (stream(1), stream(2));
        let (tx, rx) = if is_client { (c2s, s2c) } else { (s2c, c2s) };
        Envelope { tx, rx, pending: Vec::new() }
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(plaintext.len() + RECORD_HEADER_LEN);
        for chunk in plaintext.chunks(MAX_RECORD_BODY) {
            out.extend_from_slice(&[CONTENT_APPLICATION_DATA, 0x03, 0x03]);
            out.extend_from_slice(&(chunk.len() as u16).to_be_bytes());
            let start = out.len();
            out.extend_from_slice(chunk);
            let mut ks = vec![0u8; chunk.len()];
            self.tx.fill_bytes(&mut ks);
            for (b, k) in out[start..].iter_mut().zip(ks) {
                *b ^= k;
            }
        }
        out
    }

    /// Feeds received bytes and returns whatever plaintext complete records
    /// yield.
    pub fn open(&mut self, bytes: &[u8]) -> Result<Vec<u8>, StubError> {
        self.pending.extend_from_slice(bytes);
        let mut out = Vec::new();
        while let Some(record) = take_record(&mut self.pending) {
            check_alert(&record)?;
            if record[0] != CONTENT_APPLICATION_DATA {
                return Err(StubError::Unexpected(format!("content type {} after handshake", record[0])));
            }
            let mut body = record[RECORD_HEADER_LEN..].to_vec();
            let mut ks = vec![0u8; body.len()];
            self.rx.fill_bytes(&mut ks);
            for (b, k) in body.iter_mut().zip(ks) {
                *b ^= k;
            }
            out.extend_from_slice(&body);
        }
        Ok(out)
    }
}

/// An established stub session on one side.
#[derive(Debug)]
pub struct StubSession {
    pub version: u16,
    pub envelope: Envelope,
}

/// Runs a complete stub handshake in memory.
pub fn tls_stub_handshake(
    initiator: StubConfig,
    responder: StubConfig,
    rng: &mut impl RngCore,
) -> Result<(StubSession, StubSession), StubError> {
    let mut client = ClientStub::new(initiator, rng);
    let mut server = ServerStub::new(responder, rng);
    let (sh, fin) = server.on_client_hello(&client.client_hello())?;
    let version = client.on_server_hello(&sh)?;
    client.on_server_finished(&fin)?;
    server.on_client_finished(&client.finished())?;
    Ok((
        StubSession { version, envelope: client.envelope().expect("handshake done") },
        StubSession { version, envelope: server.envelope().expect("handshake done") },
    ))
}
