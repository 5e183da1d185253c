use std::fmt::{self, Write as _};

use ofdialect::pep::{AlertEvent, AlertReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    TornDown,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Completed => "Completed",
            Outcome::TornDown => "TornDown",
        })
    }
}

/// Raw bytes written and read at each device socket.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceStreams {
    pub switch_sent: Vec<u8>,
    pub switch_received: Vec<u8>,
    pub controller_sent: Vec<u8>,
    pub controller_received: Vec<u8>,
}

impl DeviceStreams {
    /// Whether each device received a prefix of what its peer sent. The xid
    /// of the leading Hello is ignored since the proxies replace it.
    pub fn intact(&self) -> bool {
        is_masked_prefix(&self.controller_received, &self.switch_sent)
            && is_masked_prefix(&self.switch_received, &self.controller_sent)
    }

    /// Like [`intact`](Self::intact) but requires complete delivery.
    pub fn complete(&self) -> bool {
        self.intact()
            && self.controller_received.len() == self.switch_sent.len()
            && self.switch_received.len() == self.controller_sent.len()
    }
}

/// Copy of `stream` with the first Hello's xid (bytes 4..8) zeroed.
pub fn mask_hello_xid(stream: &[u8]) -> Vec<u8> {
    let mut out = stream.to_vec();
    for b in out.iter_mut().take(8).skip(4) {
        *b = 0;
    }
    out
}

fn is_masked_prefix(received: &[u8], sent: &[u8]) -> bool {
    received.len() <= sent.len() && mask_hello_xid(received) == mask_hello_xid(&sent[..received.len()])
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub scenario: String,
    pub rep: u32,
    pub outcome: Outcome,
    /// Virtual seconds from the switch's first Hello write to its first Echo
    /// Request write.
    pub setup_latency_s: Option<f64>,
    /// Wall-clock seconds spent inside the proxies' dialect engines.
    pub compute_wall_s: f64,
    /// Bytes the switch-side proxy put on the untrusted leg.
    pub bytes_sw_leg: u64,
    /// Bytes the controller-side proxy put on the untrusted leg.
    pub bytes_ctl_leg: u64,
    pub frames_sent: u64,
    pub frames_verified: u64,
    pub frames_rejected: u64,
    pub alerts: Vec<AlertEvent>,
    /// Alert notifications the controller device received.
    pub controller_notices: Vec<AlertReason>,
    pub negotiated_tls: Option<u16>,
    /// Virtual seconds from the Features Reply to the first Echo Request.
    pub echo_gap_s: Option<f64>,
    /// Frames or segments the attacker injected or modified.
    pub tampered_segments: u64,
    pub streams: DeviceStreams,
}

impl RunMetrics {
    pub fn alert_reasons(&self) -> Vec<AlertReason> {
        self.alerts.iter().map(|a| a.reason).collect()
    }

    pub fn delivered_intact(&self) -> bool {
        self.streams.intact()
    }

    /// One results-file record; every column is deterministic for a seed.
    pub fn csv_record(&self) -> String {
        let reasons: Vec<&str> = self.alerts.iter().map(|a| a.reason.code()).collect();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.scenario,
            self.rep,
            self.outcome,
            self.setup_latency_s.map(|l| format!("{l:.6}")).unwrap_or_default(),
            self.bytes_sw_leg,
            self.bytes_ctl_leg,
            self.frames_rejected,
            reasons.join(";"),
        )
    }
}

pub const CSV_HEADER: &str = "scenario,rep,outcome,setup_latency_s,bytes_sw_leg,bytes_ctl_leg,frames_rejected,alert_reasons";

pub fn to_csv(runs: &[RunMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in runs {
        out.push_str(&r.csv_record());
        out.push('\n');
    }
    out
}

pub fn render_table(runs: &[RunMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>4}  {:<9}  {:>10}  {:>8}  {:>8}  {:>6}  {:>5}  alerts",
        "scenario", "rep", "outcome", "latency_s", "sw_leg", "ctl_leg", "frames", "rej"
    );
    for r in runs {
        let reasons: Vec<&str> = r.alerts.iter().map(|a| a.reason.code()).collect();
        let _ = writeln!(
            out,
            "{:<20} {:>4}  {:<9}  {:>10}  {:>8}  {:>8}  {:>6}  {:>5}  {}",
            r.scenario,
            r.rep,
            r.outcome.to_string(),
            r.setup_latency_s.map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into()),
            r.bytes_sw_leg,
            r.bytes_ctl_leg,
            r.frames_sent,
            r.frames_rejected,
            if reasons.is_empty() { "-".to_string() } else { reasons.join(";") },
        );
    }
    out
}
