//! Mock OpenFlow endpoints.
//!
//! Both devices are driven by the caller: bytes in, [`DeviceOut`] out. Every
//! reply depends only on what was received, and the switch's unsolicited
//! traffic is scheduled relative to its own Features Reply, so the byte
//! streams do not depend on link timing.

use rand::rngs::StdRng;
use rand::Rng;

use ofdialect::openflow::{parse_message, MsgType, OpenFlowMessage, ParseError, DEFAULT_VERSION};
use ofdialect::pep::parse_notification;
use ofdialect::pep::AlertReason;

use crate::tls_stub::{protocol_version_alert, take_record, ClientStub, Envelope, ServerStub, StubConfig};

pub const PACKET_IN: MsgType = MsgType(10);
pub const FLOW_MOD: MsgType = MsgType(14);

const ECHO_TIMER: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceOut {
    Send(Vec<u8>),
    Timer { after_ns: u64, id: u32 },
    Close,
}

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub tls: Option<StubConfig>,
    pub echo_interval_ns: u64,
}

/// Receive buffers shared by both devices: raw socket bytes and, once the
/// stub session is up, decrypted plaintext.
#[derive(Debug, Default)]
struct Inbox {
    raw: Vec<u8>,
    plain: Vec<u8>,
    envelope: Option<Envelope>,
}

enum Next {
    Msg(OpenFlowMessage),
    Wait,
    Bad(String),
}

impl Inbox {
    /// Next OpenFlow message, read through the envelope when there is one.
    fn next_message(&mut self) -> Next {
        if let Some(env) = self.envelope.as_mut() {
            match env.open(&self.raw) {
                Ok(p) => self.plain.extend_from_slice(&p),
                Err(e) => return Next::Bad(e.to_string()),
            }
            self.raw.clear();
        } else if !self.raw.is_empty() {
            // plaintext phase: messages are read straight from the socket
            let raw = std::mem::take(&mut self.raw);
            self.plain.extend_from_slice(&raw);
        }
        match parse_message(&self.plain) {
            Ok((msg, rest)) => {
                let used = self.plain.len() - rest.len();
                self.plain.drain(..used);
                Next::Msg(msg)
            }
            Err(ParseError::NeedMoreData { .. }) => Next::Wait,
            Err(ParseError::Malformed(l)) => Next::Bad(format!("malformed OpenFlow length {l}")),
        }
    }

    /// Handshake records arrive unenveloped right after the Hello.
    fn next_record(&mut self) -> Option<Vec<u8>> {
        if !self.plain.is_empty() {
            let mut joined = std::mem::take(&mut self.plain);
            joined.extend_from_slice(&self.raw);
            self.raw = joined;
        }
        take_record(&mut self.raw)
    }
}

fn serialize(t: MsgType, xid: u32, body: Vec<u8>) -> Vec<u8> {
    OpenFlowMessage::build(t, DEFAULT_VERSION, xid, body).and_then(|m| m.serialize()).expect("small message")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SwState {
    Idle,
    AwaitHello,
    AwaitServerHello,
    AwaitServerFinished,
    AwaitFeatures,
    Running,
    Closed,
}

#[derive(Debug)]
pub struct SwitchDevice {
    config: DeviceConfig,
    state: SwState,
    inbox: Inbox,
    hello_xid: u32,
    stub: Option<ClientStub>,
    /// (offset after Features Reply, message)
    extra: Vec<(u64, Vec<u8>)>,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
    pub hello_sent_at: Option<u64>,
    pub features_reply_at: Option<u64>,
    pub echo_request_at: Option<u64>,
    pub echo_reply_at: Option<u64>,
    pub negotiated_tls: Option<u16>,
    pub flow_mods: usize,
    pub error: Option<String>,
}

impl SwitchDevice {
    pub fn new(config: DeviceConfig, max_extra: usize, rng: &mut StdRng) -> Self {
        let hello_xid = rng.gen();
        let stub = config.tls.clone().map(|c| ClientStub::new(c, rng));
        let n = rng.gen_range(0..=max_extra);
        let interval = config.echo_interval_ns.max(1);
        let extra = (0..n)
            .map(|_| {
                let len = rng.gen_range(0..=128);
                let body: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                (rng.gen_range(0..interval), serialize(PACKET_IN, rng.gen(), body))
            })
            .collect();
        SwitchDevice {
            config,
            state: SwState::Idle,
            inbox: Inbox::default(),
            hello_xid,
            stub,
            extra,
            sent: Vec::new(),
            received: Vec::new(),
            hello_sent_at: None,
            features_reply_at: None,
            echo_request_at: None,
            echo_reply_at: None,
            negotiated_tls: None,
            flow_mods: 0,
            error: None,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.state != SwState::Idle
    }

    pub fn completed(&self) -> bool {
        self.echo_reply_at.is_some()
    }

    fn send(&mut self, bytes: Vec<u8>, out: &mut Vec<DeviceOut>) {
        self.sent.extend_from_slice(&bytes);
        out.push(DeviceOut::Send(bytes));
    }

    fn send_msg(&mut self, plain: Vec<u8>, out: &mut Vec<DeviceOut>) {
        let bytes = match self.inbox.envelope.as_mut() {
            Some(env) => env.seal(&plain),
            None => plain,
        };
        self.send(bytes, out);
    }

    fn fail(&mut self, why: String, out: &mut Vec<DeviceOut>) {
        self.error.get_or_insert(why);
        self.state = SwState::Closed;
        out.push(DeviceOut::Close);
    }

    pub fn on_connect(&mut self, now: u64) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if self.state == SwState::Idle {
            self.state = SwState::AwaitHello;
            self.hello_sent_at = Some(now);
            let hello = serialize(MsgType::HELLO, self.hello_xid, Vec::new());
            self.send(hello, &mut out);
        }
        out
    }

    pub fn on_bytes(&mut self, bytes: &[u8], now: u64) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if self.state == SwState::Closed {
            return out;
        }
        self.received.extend_from_slice(bytes);
        self.inbox.raw.extend_from_slice(bytes);
        while self.step(now, &mut out) {}
        out
    }

    fn step(&mut self, now: u64, out: &mut Vec<DeviceOut>) -> bool {
        match self.state {
            SwState::Idle | SwState::Closed => false,
            SwState::AwaitHello => match self.inbox.next_message() {
                Next::Msg(m) if m.msg_type() == MsgType::HELLO => {
                    if let Some(stub) = &self.stub {
                        let ch = stub.client_hello();
                        self.send(ch, out);
                        self.state = SwState::AwaitServerHello;
                    } else {
                        self.state = SwState::AwaitFeatures;
                    }
                    true
                }
                Next::Msg(m) => {
                    self.fail(format!("expected HELLO, got {:?}", m.msg_type()), out);
                    false
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
            SwState::AwaitServerHello => {
                let Some(record) = self.inbox.next_record() else { return false };
                let stub = self.stub.as_mut().expect("tls state");
                match stub.on_server_hello(&record) {
                    Ok(v) => {
                        self.negotiated_tls = Some(v);
                        self.state = SwState::AwaitServerFinished;
                        true
                    }
                    Err(e) => {
                        self.fail(e.to_string(), out);
                        false
                    }
                }
            }
            SwState::AwaitServerFinished => {
                let Some(record) = self.inbox.next_record() else { return false };
                let stub = self.stub.as_ref().expect("tls state");
                if let Err(e) = stub.on_server_finished(&record) {
                    self.fail(e.to_string(), out);
                    return false;
                }
                let fin = stub.finished();
                self.inbox.envelope = stub.envelope();
                self.send(fin, out);
                self.state = SwState::AwaitFeatures;
                true
            }
            SwState::AwaitFeatures => match self.inbox.next_message() {
                Next::Msg(m) if m.msg_type() == MsgType::FEATURES_REQUEST => {
                    let mut body = vec![0u8; 24];
                    body[..8].copy_from_slice(&self.hello_xid.to_be_bytes().repeat(2));
                    self.send_msg(serialize(MsgType::FEATURES_REPLY, m.xid(), body), out);
                    self.features_reply_at = Some(now);
                    for (i, (offset, _)) in self.extra.iter().enumerate() {
                        out.push(DeviceOut::Timer { after_ns: *offset, id: i as u32 + 1 });
                    }
                    out.push(DeviceOut::Timer { after_ns: self.config.echo_interval_ns, id: ECHO_TIMER });
                    self.state = SwState::Running;
                    true
                }
                Next::Msg(m) => {
                    self.fail(format!("expected FEATURES_REQUEST, got {:?}", m.msg_type()), out);
                    false
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
            SwState::Running => match self.inbox.next_message() {
                Next::Msg(m) => {
                    match m.msg_type() {
                        MsgType::ECHO_REPLY if self.echo_reply_at.is_none() => self.echo_reply_at = Some(now),
                        FLOW_MOD => self.flow_mods += 1,
                        _ => {}
                    }
                    true
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
        }
    }

    pub fn on_timer(&mut self, id: u32, now: u64) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if self.state != SwState::Running {
            return out;
        }
        if id == ECHO_TIMER {
            self.echo_request_at = Some(now);
            self.send_msg(serialize(MsgType::ECHO_REQUEST, 0x0ec0, b"liveliness".to_vec()), &mut out);
        } else if let Some((_, msg)) = self.extra.get(id as usize - 1) {
            let msg = msg.clone();
            self.send_msg(msg, &mut out);
        }
        out
    }

    pub fn on_close(&mut self) {
        self.state = SwState::Closed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CtlState {
    Idle,
    AwaitHello,
    AwaitClientHello,
    AwaitClientFinished,
    AwaitFeaturesReply,
    Running,
    Closed,
}

#[derive(Debug)]
pub struct ControllerDevice {
    state: CtlState,
    inbox: Inbox,
    hello_xid: u32,
    stub: Option<ServerStub>,
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
    pub notices: Vec<AlertReason>,
    pub negotiated_tls: Option<u16>,
    pub packet_ins: usize,
    pub error: Option<String>,
}

impl ControllerDevice {
    pub fn new(tls: Option<StubConfig>, rng: &mut StdRng) -> Self {
        let hello_xid = rng.gen();
        let stub = tls.map(|c| ServerStub::new(c, rng));
        ControllerDevice {
            state: CtlState::Idle,
            inbox: Inbox::default(),
            hello_xid,
            stub,
            sent: Vec::new(),
            received: Vec::new(),
            notices: Vec::new(),
            negotiated_tls: None,
            packet_ins: 0,
            error: None,
        }
    }

    pub fn is_connected(&self) -> bool {
        self.state != CtlState::Idle
    }

    fn send(&mut self, bytes: Vec<u8>, out: &mut Vec<DeviceOut>) {
        self.sent.extend_from_slice(&bytes);
        out.push(DeviceOut::Send(bytes));
    }

    fn send_msg(&mut self, plain: Vec<u8>, out: &mut Vec<DeviceOut>) {
        let bytes = match self.inbox.envelope.as_mut() {
            Some(env) => env.seal(&plain),
            None => plain,
        };
        self.send(bytes, out);
    }

    fn fail(&mut self, why: String, out: &mut Vec<DeviceOut>) {
        self.error.get_or_insert(why);
        self.state = CtlState::Closed;
        out.push(DeviceOut::Close);
    }

    pub fn on_connect(&mut self, _now: u64) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if self.state == CtlState::Idle {
            self.state = CtlState::AwaitHello;
            let hello = serialize(MsgType::HELLO, self.hello_xid, Vec::new());
            self.send(hello, &mut out);
        }
        out
    }

    /// Out-of-band alert from the local proxy. The controller gives up on
    /// the session.
    pub fn on_notice(&mut self, bytes: &[u8]) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if let Some((reason, _)) = parse_notification(bytes) {
            self.notices.push(reason);
        }
        if self.state != CtlState::Closed {
            self.fail("proxy alert".into(), &mut out);
        }
        out
    }

    pub fn on_bytes(&mut self, bytes: &[u8], now: u64) -> Vec<DeviceOut> {
        let mut out = Vec::new();
        if self.state == CtlState::Closed {
            return out;
        }
        self.received.extend_from_slice(bytes);
        self.inbox.raw.extend_from_slice(bytes);
        while self.step(now, &mut out) {}
        out
    }

    fn features_request(&mut self, out: &mut Vec<DeviceOut>) {
        self.send_msg(serialize(MsgType::FEATURES_REQUEST, self.hello_xid ^ 0x5a5a_5a5a, Vec::new()), out);
        self.state = CtlState::AwaitFeaturesReply;
    }

    fn step(&mut self, _now: u64, out: &mut Vec<DeviceOut>) -> bool {
        match self.state {
            CtlState::Idle | CtlState::Closed => false,
            CtlState::AwaitHello => match self.inbox.next_message() {
                Next::Msg(m) if m.msg_type() == MsgType::HELLO => {
                    if self.stub.is_some() {
                        self.state = CtlState::AwaitClientHello;
                    } else {
                        self.features_request(out);
                    }
                    true
                }
                Next::Msg(m) => {
                    self.fail(format!("expected HELLO, got {:?}", m.msg_type()), out);
                    false
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
            CtlState::AwaitClientHello => {
                let Some(record) = self.inbox.next_record() else { return false };
                let stub = self.stub.as_mut().expect("tls state");
                match stub.on_client_hello(&record) {
                    Ok((sh, fin)) => {
                        self.negotiated_tls = stub.version();
                        self.send(sh, out);
                        self.send(fin, out);
                        self.state = CtlState::AwaitClientFinished;
                        true
                    }
                    Err(e) => {
                        self.send(protocol_version_alert(), out);
                        self.fail(e.to_string(), out);
                        false
                    }
                }
            }
            CtlState::AwaitClientFinished => {
                let Some(record) = self.inbox.next_record() else { return false };
                let stub = self.stub.as_ref().expect("tls state");
                if let Err(e) = stub.on_client_finished(&record) {
                    self.fail(e.to_string(), out);
                    return false;
                }
                self.inbox.envelope = stub.envelope();
                self.features_request(out);
                true
            }
            CtlState::AwaitFeaturesReply => match self.inbox.next_message() {
                Next::Msg(m) if m.msg_type() == MsgType::FEATURES_REPLY => {
                    self.state = CtlState::Running;
                    true
                }
                Next::Msg(m) => {
                    self.fail(format!("expected FEATURES_REPLY, got {:?}", m.msg_type()), out);
                    false
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
            CtlState::Running => match self.inbox.next_message() {
                Next::Msg(m) => {
                    match m.msg_type() {
                        MsgType::ECHO_REQUEST => {
                            self.send_msg(serialize(MsgType::ECHO_REPLY, m.xid(), m.body.clone()), out);
                        }
                        PACKET_IN => {
                            self.packet_ins += 1;
                            let mut body = m.xid().to_be_bytes().to_vec();
                            body.extend(m.body.iter().take(16));
                            self.send_msg(serialize(FLOW_MOD, m.xid(), body), out);
                        }
                        _ => {}
                    }
                    true
                }
                Next::Bad(e) => {
                    self.fail(e, out);
                    false
                }
                Next::Wait => false,
            },
        }
    }

    pub fn on_close(&mut self) {
        self.state = CtlState::Closed;
    }
}
