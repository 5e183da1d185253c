//! Alert events, the log line format and the local notification message.

use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use crate::crypto::Timestamp;
use crate::openflow::{parse_message, MsgType, OpenFlowMessage, DEFAULT_VERSION, MAX_BODY_LEN};

/// Experimenter id carried by local alert notifications.
pub const ALERT_EXPERIMENTER_ID: u32 = 0x00FF_D1D2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlertReason {
    D1BadTag,
    D1Stale,
    D2BadTag,
    PolicyVersion,
    PolicySuite,
}

impl AlertReason {
    pub const ALL: [AlertReason; 5] = [
        AlertReason::D1BadTag,
        AlertReason::D1Stale,
        AlertReason::D2BadTag,
        AlertReason::PolicyVersion,
        AlertReason::PolicySuite,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AlertReason::D1BadTag => "D1BadTag",
            AlertReason::D1Stale => "D1Stale",
            AlertReason::D2BadTag => "D2BadTag",
            AlertReason::PolicyVersion => "PolicyVersion",
            AlertReason::PolicySuite => "PolicySuite",
        }
    }

    /// `exp_type` value in the notification message.
    pub fn wire_code(self) -> u32 {
        match self {
            AlertReason::D1BadTag => 1,
            AlertReason::D1Stale => 2,
            AlertReason::D2BadTag => 3,
            AlertReason::PolicyVersion => 4,
            AlertReason::PolicySuite => 5,
        }
    }

    pub fn from_wire_code(code: u32) -> Option<AlertReason> {
        AlertReason::ALL.into_iter().find(|r| r.wire_code() == code)
    }
}

impl fmt::Display for AlertReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertEvent {
    pub connection_id: u64,
    pub reason: AlertReason,
    pub detail: String,
    pub timestamp: Timestamp,
}

impl AlertEvent {
    /// `ts=<epoch> conn=<id> event=alert reason=<code> detail="<text>"`
    pub fn log_line(&self) -> String {
        let detail: String = self
            .detail
            .chars()
            .flat_map(|c| match c {
                '"' => vec!['\\', '"'],
                '\\' => vec!['\\', '\\'],
                '\n' | '\r' => vec![' '],
                c => vec![c],
            })
            .collect();
        format!(
            "ts={} conn={} event=alert reason={} detail=\"{}\"",
            self.timestamp.0, self.connection_id, self.reason, detail
        )
    }

    /// Experimenter message for the local controller:
    /// `experimenter(4) || exp_type(4) || detail`. The xid carries the low 32
    /// bits of the connection id.
    pub fn to_notification(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(8 + self.detail.len());
        body.extend_from_slice(&ALERT_EXPERIMENTER_ID.to_be_bytes());
        body.extend_from_slice(&self.reason.wire_code().to_be_bytes());
        let detail = self.detail.as_bytes();
        body.extend_from_slice(&detail[..detail.len().min(MAX_BODY_LEN - 8)]);
        OpenFlowMessage::build(MsgType::EXPERIMENTER, DEFAULT_VERSION, self.connection_id as u32, body)
            .and_then(|m| m.serialize())
            .expect("body bounded above")
    }
}

/// Reason and detail of a notification produced by
/// [`AlertEvent::to_notification`].
pub fn parse_notification(bytes: &[u8]) -> Option<(AlertReason, String)> {
    let (msg, _) = parse_message(bytes).ok()?;
    if msg.msg_type() != MsgType::EXPERIMENTER || msg.body.len() < 8 {
        return None;
    }
    let exp = u32::from_be_bytes(msg.body[..4].try_into().ok()?);
    if exp != ALERT_EXPERIMENTER_ID {
        return None;
    }
    let reason = AlertReason::from_wire_code(u32::from_be_bytes(msg.body[4..8].try_into().ok()?))?;
    Some((reason, String::from_utf8_lossy(&msg.body[8..]).into_owned()))
}

/// Append-only destination for alert events. Shared between connections.
pub trait AlertSink: Send + Sync {
    fn emit(&self, event: &AlertEvent);
}

/// Writes one log line per event. A failed write is reported on stderr and
/// otherwise ignored.
pub struct LogSink<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> LogSink<W> {
    pub fn new(out: W) -> Self {
        LogSink { out: Mutex::new(out) }
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

impl<W: Write + Send> AlertSink for LogSink<W> {
    fn emit(&self, event: &AlertEvent) {
        let line = event.log_line();
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            eprintln!("alert lost ({e}): {line}");
        }
    }
}

/// Keeps events in memory; used by the simulator and tests.
#[derive(Default)]
pub struct MemorySink {
    events: Mutex<Vec<AlertEvent>>,
}

impl MemorySink {
    pub fn events(&self) -> Vec<AlertEvent> {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl AlertSink for MemorySink {
    fn emit(&self, event: &AlertEvent) {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).push(event.clone());
    }
}

pub fn emit_alert(sink: &dyn AlertSink, event: &AlertEvent) {
    log::warn!("{}", event.log_line());
    sink.emit(event);
}
