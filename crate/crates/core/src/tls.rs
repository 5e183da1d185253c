//! Read-only inspection of TLS ClientHello/ServerHello plaintext and the
//! version/ciphersuite policy the proxies enforce on it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const CONTENT_CHANGE_CIPHER_SPEC: u8 = 20;
pub const CONTENT_ALERT: u8 = 21;
pub const CONTENT_HANDSHAKE: u8 = 22;
pub const CONTENT_APPLICATION_DATA: u8 = 23;

pub const HANDSHAKE_CLIENT_HELLO: u8 = 1;
pub const HANDSHAKE_SERVER_HELLO: u8 = 2;
pub const HANDSHAKE_FINISHED: u8 = 20;

pub const EXT_SUPPORTED_VERSIONS: u16 = 0x002b;

pub const RECORD_HEADER_LEN: usize = 5;

pub const TLS1_0: u16 = 0x0301;
pub const TLS1_1: u16 = 0x0302;
pub const TLS1_2: u16 = 0x0303;
pub const TLS1_3: u16 = 0x0304;

pub fn version_name(v: u16) -> String {
    match v {
        0x0300 => "SSL3.0".into(),
        TLS1_0 => "TLS1.0".into(),
        TLS1_1 => "TLS1.1".into(),
        TLS1_2 => "TLS1.2".into(),
        TLS1_3 => "TLS1.3".into(),
        other => format!("0x{other:04x}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloInfo {
    pub side: Side,
    pub legacy_version: u16,
    /// Offered suites (client) or the single selected suite (server).
    pub ciphersuites: Vec<u16>,
    pub has_supported_versions_ext: bool,
    pub supported_versions: Option<Vec<u16>>,
}

impl HelloInfo {
    /// Versions the hello actually negotiates: the supported_versions
    /// extension when present, otherwise the legacy version field.
    pub fn effective_versions(&self) -> Vec<u16> {
        match &self.supported_versions {
            Some(list) => list.clone(),
            None => vec![self.legacy_version],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TlsParseError {
    #[error("record truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("content type {0} is not a handshake record")]
    NotHandshake(u8),
    #[error("handshake type {0} is not a ClientHello or ServerHello")]
    NotHello(u8),
    #[error("malformed hello: {0}")]
    Malformed(&'static str),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], TlsParseError> {
        if self.remaining() < n {
            return Err(TlsParseError::Malformed(what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, TlsParseError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, TlsParseError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u24(&mut self, what: &'static str) -> Result<usize, TlsParseError> {
        let b = self.take(3, what)?;
        Ok((usize::from(b[0]) << 16) | (usize::from(b[1]) << 8) | usize::from(b[2]))
    }
}

fn u16_list(bytes: &[u8], what: &'static str) -> Result<Vec<u16>, TlsParseError> {
    if !bytes.len().is_multiple_of(2) {
        return Err(TlsParseError::Malformed(what));
    }
    Ok(bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
}

/// Total length of the TLS record at the front of `bytes`, if its header is
/// available.
pub fn record_len(bytes: &[u8]) -> Option<usize> {
    bytes
        .get(3..5)
        .map(|l| RECORD_HEADER_LEN + usize::from(u16::from_be_bytes([l[0], l[1]])))
}

/// Cheap test for "starts like a TLS handshake record".
pub fn looks_like_handshake(bytes: &[u8]) -> bool {
    bytes.len() >= RECORD_HEADER_LEN && bytes[0] == CONTENT_HANDSHAKE && bytes[1] == 0x03
}

/// Parses the hello carried by the handshake record at the start of
/// `record_bytes`. Nothing past the record's declared length is read.
pub fn parse_hello(record_bytes: &[u8]) -> Result<HelloInfo, TlsParseError> {
    if record_bytes.len() < RECORD_HEADER_LEN {
        return Err(TlsParseError::Truncated { needed: RECORD_HEADER_LEN, available: record_bytes.len() });
    }
    if record_bytes[0] != CONTENT_HANDSHAKE {
        return Err(TlsParseError::NotHandshake(record_bytes[0]));
    }
    let total = record_len(record_bytes).expect("header checked above");
    if record_bytes.len() < total {
        return Err(TlsParseError::Truncated { needed: total, available: record_bytes.len() });
    }
    let mut rec = Reader::new(&record_bytes[RECORD_HEADER_LEN..total]);

    let hs_type = rec.u8("handshake type")?;
    let side = match hs_type {
        HANDSHAKE_CLIENT_HELLO => Side::Client,
        HANDSHAKE_SERVER_HELLO => Side::Server,
        other => return Err(TlsParseError::NotHello(other)),
    };
    let hs_len = rec.u24("handshake length")?;
    let mut r = Reader::new(rec.take(hs_len, "handshake body exceeds record")?);

    let legacy_version = r.u16("legacy version")?;
    r.take(32, "random")?;
    let sid_len = usize::from(r.u8("session id length")?);
    if sid_len > 32 {
        return Err(TlsParseError::Malformed("session id longer than 32 bytes"));
    }
    r.take(sid_len, "session id")?;

    let ciphersuites = match side {
        Side::Client => {
            let n = usize::from(r.u16("cipher suites length")?);
            let suites = u16_list(r.take(n, "cipher suites")?, "odd cipher suites length")?;
            if suites.is_empty() {
                return Err(TlsParseError::Malformed("empty cipher suite list"));
            }
            let n = usize::from(r.u8("compression methods length")?);
            r.take(n, "compression methods")?;
            suites
        }
        Side::Server => {
            let suite = r.u16("cipher suite")?;
            r.u8("compression method")?;
            vec![suite]
        }
    };

    let mut supported_versions = None;
    if r.remaining() > 0 {
        let n = usize::from(r.u16("extensions length")?);
        let mut exts = Reader::new(r.take(n, "extensions")?);
        while exts.remaining() > 0 {
            let ext_type = exts.u16("extension type")?;
            let len = usize::from(exts.u16("extension length")?);
            let data = exts.take(len, "extension data")?;
            if ext_type != EXT_SUPPORTED_VERSIONS {
                continue;
            }
            let versions = match side {
                Side::Client => {
                    let (&list_len, list) = data
                        .split_first()
                        .ok_or(TlsParseError::Malformed("empty supported_versions"))?;
                    if usize::from(list_len) != list.len() {
                        return Err(TlsParseError::Malformed("supported_versions length mismatch"));
                    }
                    u16_list(list, "odd supported_versions length")?
                }
                Side::Server => {
                    if data.len() != 2 {
                        return Err(TlsParseError::Malformed("server supported_versions must hold one version"));
                    }
                    u16_list(data, "server supported_versions")?
                }
            };
            supported_versions = Some(versions);
        }
    }

    Ok(HelloInfo {
        side,
        legacy_version,
        ciphersuites,
        has_supported_versions_ext: supported_versions.is_some(),
        supported_versions,
    })
}

/// Version and ciphersuite policy applied to hello plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub allowed_versions: BTreeSet<u16>,
    pub allowed_suites: BTreeSet<u16>,
    /// Reject sessions whose first payload after the Hello exchange is not a
    /// TLS ClientHello.
    pub require_tls: bool,
}

/// TLS 1.3 suites plus the TLS 1.2 ECDHE AEAD suites.
pub const DEFAULT_SUITES: [u16; 9] = [0x1301, 0x1302, 0x1303, 0xc02b, 0xc02c, 0xc02f, 0xc030, 0xcca8, 0xcca9];

impl Default for Policy {
    fn default() -> Self {
        Policy {
            allowed_versions: [TLS1_2, TLS1_3].into_iter().collect(),
            allowed_suites: DEFAULT_SUITES.into_iter().collect(),
            require_tls: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("require_tls is set but no version is allowed")]
    NoVersions,
}

fn parse_code(value: &str) -> Option<u16> {
    let digits = value.strip_prefix("0x").or_else(|| value.strip_prefix("0X"))?;
    u16::from_str_radix(digits, 16).ok()
}

impl FromStr for Policy {
    type Err = PolicyError;

    /// One `key = value` directive per line; `#` starts a comment.
    /// Keys: `require_tls` (true/false), `allow_version` and `allow_suite`
    /// (hex `0xNNNN`, repeatable).
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut policy = Policy {
            allowed_versions: BTreeSet::new(),
            allowed_suites: BTreeSet::new(),
            require_tls: false,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| PolicyError::Syntax { line, msg };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "require_tls" => {
                    policy.require_tls = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(err(format!("require_tls must be true or false, got `{value}`"))),
                    }
                }
                "allow_version" => {
                    let v = parse_code(value).ok_or_else(|| err(format!("bad version code `{value}`")))?;
                    policy.allowed_versions.insert(v);
                }
                "allow_suite" => {
                    let v = parse_code(value).ok_or_else(|| err(format!("bad suite code `{value}`")))?;
                    policy.allowed_suites.insert(v);
                }
                _ => return Err(err(format!("unknown directive `{key}`"))),
            }
        }
        policy.validate()?;
        Ok(policy)
    }
}

impl Policy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.require_tls && self.allowed_versions.is_empty() {
            return Err(PolicyError::NoVersions);
        }
        Ok(())
    }

    /// Renders the policy in the file format accepted by `from_str`.
    pub fn to_file_text(&self) -> String {
        let mut out = format!("require_tls = {}\n", self.require_tls);
        for v in &self.allowed_versions {
            out.push_str(&format!("allow_version = 0x{v:04x}\n"));
        }
        for s in &self.allowed_suites {
            out.push_str(&format!("allow_suite = 0x{s:04x}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    VersionDisallowed,
    SuiteDisallowed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

/// Checks one hello against `policy`.
///
/// The version check passes when any effective version is allowed; the suite
/// check passes when the offered suites intersect the allowed set.
pub fn check_policy(info: &HelloInfo, policy: &Policy) -> Result<(), Violation> {
    let versions = info.effective_versions();
    if !versions.iter().any(|v| policy.allowed_versions.contains(v)) {
        let offered: Vec<String> = versions.iter().map(|v| version_name(*v)).collect();
        return Err(Violation {
            kind: ViolationKind::VersionDisallowed,
            detail: format!("{:?} hello offers {}", info.side, offered.join(",")),
        });
    }
    if !info.ciphersuites.iter().any(|s| policy.allowed_suites.contains(s)) {
        let offered: Vec<String> = info.ciphersuites.iter().map(|s| format!("0x{s:04x}")).collect();
        return Err(Violation {
            kind: ViolationKind::SuiteDisallowed,
            detail: format!("{:?} hello offers no allowed suite ({})", info.side, offered.join(",")),
        });
    }
    Ok(())
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn wrap_handshake(hs_type: u8, body: &[u8]) -> Vec<u8> {
    let mut hs = Vec::with_capacity(4 + body.len());
    hs.push(hs_type);
    hs.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    hs.extend_from_slice(body);
    let mut rec = Vec::with_capacity(RECORD_HEADER_LEN + hs.len());
    rec.extend_from_slice(&[CONTENT_HANDSHAKE, 0x03, 0x01]);
    push_u16(&mut rec, hs.len() as u16);
    rec.extend_from_slice(&hs);
    rec
}

fn supported_versions_ext(side: Side, versions: &[u16]) -> Vec<u8> {
    let mut data = Vec::new();
    if side == Side::Client {
        data.push((versions.len() * 2) as u8);
    }
    for v in versions {
        push_u16(&mut data, *v);
    }
    let mut ext = Vec::new();
    push_u16(&mut ext, EXT_SUPPORTED_VERSIONS);
    push_u16(&mut ext, data.len() as u16);
    ext.extend_from_slice(&data);
    ext
}

/// Encodes a minimal ClientHello record. `supported_versions` adds the
/// extension when `Some`.
pub fn encode_client_hello(
    legacy_version: u16,
    random: &[u8; 32],
    suites: &[u16],
    supported_versions: Option<&[u16]>,
) -> Vec<u8> {
    let mut body = Vec::new();
    push_u16(&mut body, legacy_version);
    body.extend_from_slice(random);
    body.push(0);
    push_u16(&mut body, (suites.len() * 2) as u16);
    for s in suites {
        push_u16(&mut body, *s);
    }
    body.extend_from_slice(&[1, 0]);
    if let Some(versions) = supported_versions {
        let ext = supported_versions_ext(Side::Client, versions);
        push_u16(&mut body, ext.len() as u16);
        body.extend_from_slice(&ext);
    }
    wrap_handshake(HANDSHAKE_CLIENT_HELLO, &body)
}

pub fn encode_server_hello(
    legacy_version: u16,
    random: &[u8; 32],
    suite: u16,
    selected_version: Option<u16>,
) -> Vec<u8> {
    let mut body = Vec::new();
    push_u16(&mut body, legacy_version);
    body.extend_from_slice(random);
    body.push(0);
    push_u16(&mut body, suite);
    body.push(0);
    if let Some(v) = selected_version {
        let ext = supported_versions_ext(Side::Server, &[v]);
        push_u16(&mut body, ext.len() as u16);
        body.extend_from_slice(&ext);
    }
    wrap_handshake(HANDSHAKE_SERVER_HELLO, &body)
}

/// A Finished handshake record carrying `verify_data`.
pub fn encode_finished(verify_data: &[u8]) -> Vec<u8> {
    wrap_handshake(HANDSHAKE_FINISHED, verify_data)
}
