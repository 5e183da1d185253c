//! Setup-latency and byte-overhead comparison across the four TLS/dialect
//! combinations.

use std::fmt::{self, Write as _};

use ofdialect::crypto::PreSharedKey;

use crate::engine::run_scenario;
use crate::metrics::{Outcome, RunMetrics};
use crate::scenario::{AttackerMode, Scenario};

/// Published testbed figures: baseline, TLS and TLS+dialect setup latency
/// in seconds, and the dialect-over-TLS overhead. Printed for context only.
pub const REFERENCE_FIGURES: (f64, f64, f64, f64) = (5.00, 9.33, 11.37, 0.22);

#[derive(Debug, Clone)]
pub struct ConfigSummary {
    pub tls: bool,
    pub dialect: bool,
    pub runs: usize,
    pub completed: usize,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub mean_bytes_sw_leg: f64,
    pub mean_bytes_ctl_leg: f64,
    pub mean_frames: f64,
    pub mean_compute_s: f64,
}

impl ConfigSummary {
    fn label(&self) -> &'static str {
        match (self.tls, self.dialect) {
            (false, false) => "baseline",
            (true, false) => "tls",
            (false, true) => "dialect",
            (true, true) => "tls+dialect",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OverheadReport {
    pub configs: Vec<ConfigSummary>,
}

impl OverheadReport {
    pub fn get(&self, tls: bool, dialect: bool) -> &ConfigSummary {
        self.configs.iter().find(|c| c.tls == tls && c.dialect == dialect).expect("all four configs")
    }

    /// Relative setup-latency increase of TLS+dialect over TLS alone.
    pub fn dialect_over_tls(&self) -> f64 {
        self.get(true, true).mean_latency_s / self.get(true, false).mean_latency_s - 1.0
    }

    /// Relative setup-latency increase of the dialect over plain OpenFlow.
    pub fn dialect_over_baseline(&self) -> f64 {
        self.get(false, true).mean_latency_s / self.get(false, false).mean_latency_s - 1.0
    }
}

impl fmt::Display for OverheadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>4} {:>9} {:>12} {:>12} {:>10} {:>10} {:>7} {:>12}",
            "config", "runs", "completed", "mean_lat_s", "median_lat_s", "sw_leg_B", "ctl_leg_B", "frames", "compute_us"
        );
        for c in &self.configs {
            let _ = writeln!(
                out,
                "{:<12} {:>4} {:>9} {:>12.6} {:>12.6} {:>10.1} {:>10.1} {:>7.1} {:>12.1}",
                c.label(),
                c.runs,
                c.completed,
                c.mean_latency_s,
                c.median_latency_s,
                c.mean_bytes_sw_leg,
                c.mean_bytes_ctl_leg,
                c.mean_frames,
                c.mean_compute_s * 1e6,
            );
        }
        let tls = self.get(true, false);
        let both = self.get(true, true);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "dialect over TLS: {:+.2}% setup latency, {:+.1} B on switch leg, {:+.1} B on controller leg",
            self.dialect_over_tls() * 100.0,
            both.mean_bytes_sw_leg - tls.mean_bytes_sw_leg,
            both.mean_bytes_ctl_leg - tls.mean_bytes_ctl_leg,
        );
        let _ = writeln!(out, "dialect over baseline: {:+.2}% setup latency", self.dialect_over_baseline() * 100.0);
        let (b, t, d, r) = REFERENCE_FIGURES;
        let _ = writeln!(
            out,
            "reference testbed (emulated network, not a reproduction target): baseline {b:.2} s, TLS {t:.2} s, TLS+dialect {d:.2} s, dialect over TLS {:.0}%",
            r * 100.0
        );
        f.write_str(&out)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn summarize(tls: bool, dialect: bool, runs: &[RunMetrics]) -> ConfigSummary {
    let n = runs.len() as f64;
    let lat: Vec<f64> = runs.iter().filter_map(|r| r.setup_latency_s).collect();
    let mean = |f: &dyn Fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    ConfigSummary {
        tls,
        dialect,
        runs: runs.len(),
        completed: runs.iter().filter(|r| r.outcome == Outcome::Completed).count(),
        mean_latency_s: lat.iter().sum::<f64>() / lat.len() as f64,
        median_latency_s: median(lat),
        mean_bytes_sw_leg: mean(&|r| r.bytes_sw_leg as f64),
        mean_bytes_ctl_leg: mean(&|r| r.bytes_ctl_leg as f64),
        mean_frames: mean(&|r| r.frames_sent as f64),
        mean_compute_s: mean(&|r| r.compute_wall_s),
    }
}

/// Runs `repetitions` attack-free sessions of each configuration. Each
/// configuration uses the same seeds so the device traffic is shared.
pub fn run_overhead_suite(repetitions: u32, seed: u64) -> OverheadReport {
    let psk = PreSharedKey::new([0x5a; 32]);
    let mut configs = Vec::new();
    for (tls, dialect) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut s = Scenario::new("bench", tls, dialect, AttackerMode::None).with_repetitions(repetitions.max(1));
        if dialect {
            s = s.with_psk(psk.clone());
        }
        let runs = run_scenario(&s, seed).expect("bench scenarios are valid");
        configs.push(summarize(tls, dialect, &runs));
    }
    OverheadReport { configs }
}
