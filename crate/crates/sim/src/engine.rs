//! Discrete-event session runner.
//!
//! Four nodes on a line: switch, switch-side proxy, controller-side proxy,
//! controller. Every link is a FIFO pipe with a fixed latency and bandwidth;
//! the attacker sits on the middle link. Time is virtual nanoseconds and
//! events at the same instant run in scheduling order, so a run is a pure
//! function of the scenario, the seed and the repetition index.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ofdialect::crypto::{PreSharedKey, Timestamp};
use ofdialect::dialect::{D1State, Role};
use ofdialect::openflow::OpenFlowMessage;
use ofdialect::pep::{Action, AlertEvent, PepSession, SessionStats};

use crate::attacker::Attacker;
use crate::devices::{ControllerDevice, DeviceConfig, DeviceOut, SwitchDevice};
use crate::metrics::{DeviceStreams, Outcome, RunMetrics};
use crate::scenario::{AttackerMode, Scenario, ScenarioError};
use crate::tls_stub::StubConfig;

pub const NS_PER_SEC: u64 = 1_000_000_000;

/// Unix second the first repetition starts in.
pub const BASE_EPOCH: u64 = 1_700_000_000;

/// Virtual time after which a session is abandoned.
const DEADLINE_NS: u64 = 120 * NS_PER_SEC;

#[derive(Debug, Clone, Copy)]
pub struct LinkModel {
    pub latency_ns: u64,
    pub bytes_per_sec: u64,
}

impl LinkModel {
    fn tx_ns(&self, len: usize) -> u64 {
        (len as u64 * NS_PER_SEC).div_ceil(self.bytes_per_sec)
    }
}

/// Device-to-proxy loopback legs.
pub const LOCAL_LINK: LinkModel = LinkModel { latency_ns: 20_000, bytes_per_sec: 125_000_000 };
/// The untrusted proxy-to-proxy leg.
pub const UNTRUSTED_LINK: LinkModel = LinkModel { latency_ns: 500_000, bytes_per_sec: 1_250_000 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    Switch,
    SwProxy,
    CtlProxy,
    Controller,
}

#[derive(Debug)]
enum Event {
    Connect { to: Node },
    Data { to: Node, from: Node, bytes: Vec<u8> },
    Notice { bytes: Vec<u8> },
    Fin { to: Node },
    Timer { id: u32 },
}

struct Proxy {
    role: Role,
    engine: Option<PepSession>,
    open: bool,
    connected: bool,
}

struct World<'a> {
    scenario: &'a Scenario,
    now: u64,
    base_ns: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    busy: HashMap<(Node, Node), u64>,
    switch: SwitchDevice,
    controller: ControllerDevice,
    sw_proxy: Proxy,
    ctl_proxy: Proxy,
    attacker: Attacker,
    alerts: Vec<AlertEvent>,
    bytes_sw_leg: u64,
    bytes_ctl_leg: u64,
    compute: f64,
}

fn session_rng(seed: u64, rep: u32) -> StdRng {
    StdRng::seed_from_u64(seed ^ (u64::from(rep) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl<'a> World<'a> {
    fn timestamp(&self) -> Timestamp {
        Timestamp((self.base_ns + self.now) / NS_PER_SEC)
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), ev);
    }

    fn link(from: Node, to: Node) -> LinkModel {
        match (from, to) {
            (Node::SwProxy, Node::CtlProxy) | (Node::CtlProxy, Node::SwProxy) => UNTRUSTED_LINK,
            _ => LOCAL_LINK,
        }
    }

    /// Queues `bytes` on the pipe `from -> to`, leaving no earlier than
    /// `earliest`.
    fn transmit(&mut self, from: Node, to: Node, bytes: Vec<u8>, earliest: u64) {
        let model = Self::link(from, to);
        let busy = self.busy.entry((from, to)).or_insert(0);
        let depart = earliest.max(*busy);
        *busy = depart + model.tx_ns(bytes.len());
        let arrive = *busy + model.latency_ns;
        self.schedule(arrive, Event::Data { to, from, bytes });
    }

    fn send(&mut self, from: Node, to: Node, bytes: Vec<u8>) {
        let untrusted = matches!((from, to), (Node::SwProxy, Node::CtlProxy) | (Node::CtlProxy, Node::SwProxy));
        if !untrusted {
            self.transmit(from, to, bytes, self.now);
            return;
        }
        if from == Node::SwProxy {
            self.bytes_sw_leg += bytes.len() as u64;
        } else {
            self.bytes_ctl_leg += bytes.len() as u64;
        }
        for (release, seg) in self.attacker.on_segment(from == Node::SwProxy, bytes, self.now) {
            self.transmit(from, to, seg, release);
        }
    }

    fn send_fin(&mut self, from: Node, to: Node) {
        let model = Self::link(from, to);
        let busy = self.busy.get(&(from, to)).copied().unwrap_or(0).max(self.now);
        self.schedule(busy + model.latency_ns, Event::Fin { to });
    }

    fn proxy_mut(&mut self, node: Node) -> &mut Proxy {
        match node {
            Node::SwProxy => &mut self.sw_proxy,
            _ => &mut self.ctl_proxy,
        }
    }

    fn neighbours(node: Node) -> (Node, Node) {
        match node {
            Node::SwProxy => (Node::Switch, Node::CtlProxy),
            _ => (Node::Controller, Node::SwProxy),
        }
    }

    fn connect_proxy(&mut self, node: Node) {
        let ts = self.timestamp();
        let scenario = self.scenario;
        let p = self.proxy_mut(node);
        if p.connected {
            return;
        }
        p.connected = true;
        if scenario.dialect_enabled {
            let psk = scenario.psk.as_ref().expect("validated");
            let id = if node == Node::SwProxy { 1 } else { 2 };
            p.engine = Some(PepSession::new(id, p.role, psk, scenario.policy.clone(), scenario.grace, ts));
        }
        let next = match node {
            Node::SwProxy => Node::CtlProxy,
            _ => Node::Controller,
        };
        let model = Self::link(node, next);
        self.schedule(self.now + model.latency_ns, Event::Connect { to: next });
    }

    fn device_outs(&mut self, node: Node, outs: Vec<DeviceOut>) {
        let proxy = if node == Node::Switch { Node::SwProxy } else { Node::CtlProxy };
        for o in outs {
            match o {
                DeviceOut::Send(b) => self.send(node, proxy, b),
                DeviceOut::Timer { after_ns, id } => self.schedule(self.now + after_ns, Event::Timer { id }),
                DeviceOut::Close => self.send_fin(node, proxy),
            }
        }
    }

    fn proxy_input(&mut self, node: Node, from: Node, bytes: Vec<u8>) {
        self.connect_proxy(node);
        let (local, peer) = Self::neighbours(node);
        let ts = self.timestamp();
        let p = self.proxy_mut(node);
        if !p.open {
            return;
        }
        let Some(engine) = p.engine.as_mut() else {
            let to = if from == local { peer } else { local };
            self.send(node, to, bytes);
            return;
        };
        let started = Instant::now();
        let actions = if from == local { engine.on_local(&bytes, ts) } else { engine.on_peer(&bytes, ts) };
        self.compute += started.elapsed().as_secs_f64();
        for action in actions {
            match action {
                Action::ToPeer(b) => self.send(node, peer, b),
                Action::ToLocal(b) => self.send(node, local, b),
                Action::Notify(b) => {
                    let model = Self::link(node, local);
                    let busy = self.busy.get(&(node, local)).copied().unwrap_or(0).max(self.now);
                    self.schedule(busy + model.latency_ns, Event::Notice { bytes: b });
                }
                Action::Alert(e) => self.alerts.push(e),
                Action::Close => self.close_proxy(node),
            }
        }
    }

    fn close_proxy(&mut self, node: Node) {
        let (local, peer) = Self::neighbours(node);
        let p = self.proxy_mut(node);
        if !p.open {
            return;
        }
        p.open = false;
        self.send_fin(node, local);
        self.send_fin(node, peer);
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Connect { to: Node::Controller } => {
                let outs = self.controller.on_connect(self.now);
                self.device_outs(Node::Controller, outs);
            }
            Event::Connect { to } => self.connect_proxy(to),
            Event::Data { to: Node::Switch, bytes, .. } => {
                let outs = self.switch.on_bytes(&bytes, self.now);
                self.device_outs(Node::Switch, outs);
            }
            Event::Data { to: Node::Controller, bytes, .. } => {
                if !self.controller.is_connected() {
                    let outs = self.controller.on_connect(self.now);
                    self.device_outs(Node::Controller, outs);
                }
                let outs = self.controller.on_bytes(&bytes, self.now);
                self.device_outs(Node::Controller, outs);
            }
            Event::Data { to, from, bytes } => self.proxy_input(to, from, bytes),
            Event::Notice { bytes } => {
                let outs = self.controller.on_notice(&bytes);
                self.device_outs(Node::Controller, outs);
            }
            Event::Fin { to: Node::Switch, .. } => self.switch.on_close(),
            Event::Fin { to: Node::Controller, .. } => self.controller.on_close(),
            Event::Fin { to, .. } => self.close_proxy(to),
            Event::Timer { id } => {
                let outs = self.switch.on_timer(id, self.now);
                self.device_outs(Node::Switch, outs);
            }
        }
    }
}

/// A Hello tagged by a switch-side proxy that anchored `seconds_before`
/// seconds before `now`.
fn captured_hello(psk: Option<&PreSharedKey>, now: Timestamp, seconds_before: u64, xid: u32) -> Vec<u8> {
    let hello = OpenFlowMessage::hello(ofdialect::openflow::DEFAULT_VERSION, xid);
    let msg = match psk {
        Some(psk) => {
            let then = Timestamp(now.0 - seconds_before);
            let mut old = D1State::start(Role::SwitchSide, psk, then);
            old.dialect_outbound(&hello, then).expect("fresh state")
        }
        None => hello,
    };
    msg.serialize().expect("hello")
}

/// Runs repetition `rep` of `scenario`.
pub fn run_session(scenario: &Scenario, seed: u64, rep: u32) -> Result<RunMetrics, ScenarioError> {
    scenario.validate()?;
    let mut rng = session_rng(seed, rep);
    // draw everything up front in a fixed order so that toggling the dialect
    // leaves the device traffic unchanged
    let start_frac: u64 = rng.gen_range(0..NS_PER_SEC);
    let mut dev_rng = StdRng::seed_from_u64(rng.gen());
    let attack_rng = StdRng::seed_from_u64(rng.gen());
    let replay_xid: u32 = rng.gen();

    let base_ns = (BASE_EPOCH + u64::from(rep) * 1000) * NS_PER_SEC + start_frac;
    let tls = scenario.tls_enabled.then(StubConfig::default);
    let echo_interval_ns = (scenario.echo_interval_s * NS_PER_SEC as f64).round() as u64;
    let dev_cfg = DeviceConfig { tls: tls.clone(), echo_interval_ns };
    let switch = SwitchDevice::new(dev_cfg, scenario.max_extra_messages, &mut dev_rng);
    let controller = ControllerDevice::new(tls, &mut dev_rng);

    let captured = (scenario.attacker == AttackerMode::ReplayD1Hello).then(|| {
        let psk = if scenario.dialect_enabled { scenario.psk.as_ref() } else { None };
        captured_hello(psk, Timestamp(base_ns / NS_PER_SEC), 3, replay_xid)
    });
    let attacker = Attacker::new(scenario.attacker, scenario.dialect_enabled, attack_rng, captured);

    let mut world = World {
        scenario,
        now: 0,
        base_ns,
        seq: 0,
        queue: BTreeMap::new(),
        busy: HashMap::new(),
        switch,
        controller,
        sw_proxy: Proxy { role: Role::SwitchSide, engine: None, open: true, connected: false },
        ctl_proxy: Proxy { role: Role::ControllerSide, engine: None, open: true, connected: false },
        attacker,
        alerts: Vec::new(),
        bytes_sw_leg: 0,
        bytes_ctl_leg: 0,
        compute: 0.0,
    };

    world.schedule(LOCAL_LINK.latency_ns, Event::Connect { to: Node::SwProxy });
    let outs = world.switch.on_connect(0);
    world.device_outs(Node::Switch, outs);

    while let Some(((at, _), ev)) = world.queue.pop_first() {
        if at > DEADLINE_NS {
            break;
        }
        world.now = at;
        world.dispatch(ev);
    }

    let stats = |p: &Proxy| p.engine.as_ref().map(PepSession::stats).unwrap_or_default();
    let (a, b): (SessionStats, SessionStats) = (stats(&world.sw_proxy), stats(&world.ctl_proxy));
    let sw = &world.switch;
    let secs = |ns: u64| ns as f64 / NS_PER_SEC as f64;
    let setup_latency_s = sw.hello_sent_at.zip(sw.echo_request_at).map(|(h, e)| secs(e - h));
    let echo_gap_s = sw.features_reply_at.zip(sw.echo_request_at).map(|(f, e)| secs(e - f));
    Ok(RunMetrics {
        scenario: scenario.name.clone(),
        rep,
        outcome: if sw.completed() { Outcome::Completed } else { Outcome::TornDown },
        setup_latency_s,
        compute_wall_s: world.compute,
        bytes_sw_leg: world.bytes_sw_leg,
        bytes_ctl_leg: world.bytes_ctl_leg,
        frames_sent: a.frames_sent + b.frames_sent,
        frames_verified: a.frames_verified + b.frames_verified,
        frames_rejected: a.frames_rejected + b.frames_rejected,
        alerts: world.alerts,
        controller_notices: world.controller.notices.clone(),
        negotiated_tls: world.controller.negotiated_tls.or(sw.negotiated_tls),
        echo_gap_s,
        tampered_segments: world.attacker.tampered,
        streams: DeviceStreams {
            switch_sent: sw.sent.clone(),
            switch_received: sw.received.clone(),
            controller_sent: world.controller.sent.clone(),
            controller_received: world.controller.received.clone(),
        },
    })
}

/// Runs every repetition of `scenario`.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<Vec<RunMetrics>, ScenarioError> {
    scenario.validate()?;
    (0..scenario.repetitions).map(|rep| run_session(scenario, seed, rep)).collect()
}
