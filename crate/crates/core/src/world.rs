//! One simulated network: nodes, positions, medium and the event loop.
//! Protocol handlers live in [`crate::aodv`], [`crate::sdaodv`] and
//! [`crate::adversary`] as further `impl World` blocks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

use rand::Rng;
use thiserror::Error;

use crate::adversary::{assign_malicious, AttackError, AttackKind, Assignment};
use crate::aodv::{PendingDiscovery, RoutingTable, SeenRreqCache};
use crate::config::{MobilityModel, PlacementKind, Protocol, ScenarioConfig};
use crate::field::{advance_mobility, place_uniform, FieldError, NodePosition, Point};
use crate::medium::{transmission_time, Frame, LinkDst, Medium};
use crate::packet::{DataPacket, Packet, SeqNum};
use crate::sdaodv::{Defense, Detection};
use crate::sim::{derive_rng, RngStream, Scheduler, SimTime, StreamLabel};
use crate::telemetry::{MetricsReport, Telemetry};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Honest,
    Malicious(AttackKind),
}

impl Role {
    pub fn is_honest(self) -> bool {
        self == Role::Honest
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub role: Role,
    pub seq: SeqNum,
    pub bcast_id: u32,
    pub routes: RoutingTable,
    pub seen: SeenRreqCache,
    pub buffer: BTreeMap<NodeId, VecDeque<DataPacket>>,
    pub discovery: BTreeMap<NodeId, PendingDiscovery>,
    pub precursors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    /// Present on honest nodes in SD-AODV runs.
    pub defense: Option<Defense>,
    pub tunnel_partner: Option<NodeId>,
}

impl Node {
    fn new(id: NodeId) -> Node {
        Node {
            id,
            role: Role::Honest,
            seq: 0,
            bcast_id: 0,
            routes: RoutingTable::default(),
            seen: SeenRreqCache::default(),
            buffer: BTreeMap::new(),
            discovery: BTreeMap::new(),
            precursors: BTreeMap::new(),
            defense: None,
            tunnel_partner: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CbrFlow {
    pub id: u32,
    pub src: NodeId,
    pub dest: NodeId,
    pub packet_size: u32,
    pub interval: SimTime,
    pub start: SimTime,
    pub stop: SimTime,
}

impl CbrFlow {
    /// One send at `start` and every `interval` after it, up to `stop`.
    pub fn send_count(&self) -> u32 {
        if self.stop <= self.start || self.interval == SimTime::ZERO {
            return 0;
        }
        ((self.stop - self.start).as_micros() / self.interval.as_micros()) as u32 + 1
    }

    pub fn send_time(&self, seq: u32) -> SimTime {
        self.start + SimTime::from_micros(self.interval.as_micros() * seq as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RreqAction {
    Forward,
    Reply,
    /// Re-broadcast after an intermediate reply failed verification.
    ReRelay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    DiscoveryStarted { node: NodeId, dest: NodeId, bcast_id: u32 },
    RreqAction { node: NodeId, src: NodeId, bcast_id: u32, action: RreqAction },
    RreqDuplicate { node: NodeId, src: NodeId, bcast_id: u32 },
    RouteInstalled { node: NodeId, dest: NodeId, seq: SeqNum, next_hop: NodeId },
    /// One per route error counted in telemetry.
    RouteError { node: NodeId, dests: Vec<NodeId> },
    Flagged { node: NodeId, suspect: NodeId, detection: Detection, at: SimTime },
    DigestRestored { node: NodeId, src: NodeId, bcast_id: u32 },
    NextHopRestored { node: NodeId, dest: NodeId },
    ReplyVerified { node: NodeId, originator: NodeId },
    ReplyRejected { node: NodeId, originator: NodeId },
    RreqRewritten { node: NodeId, src: NodeId, bcast_id: u32, to: NodeId },
    LoopedBack { node: NodeId, to: NodeId },
    Forged { node: NodeId, src: NodeId, dest: NodeId },
}

#[derive(Clone, Debug)]
pub enum Event {
    TxStart { frame: Frame },
    Deliver { to: NodeId, frame: Frame, tapped: bool },
    LinkFailure { node: NodeId, target: NodeId, packet: Rc<Packet> },
    Tunnel { to: NodeId, from: NodeId, packet: Packet },
    MobilityTick,
    CbrSend { flow: u32, seq: u32 },
    DiscoveryTimeout { node: NodeId, dest: NodeId },
    ProbeTimeout { node: NodeId, probe_id: u32 },
}

#[derive(Debug, Error, PartialEq)]
pub enum SetupError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("cannot pick {flows} distinct flows among {nodes} nodes")]
    Traffic { flows: usize, nodes: usize },
}

pub struct World {
    pub cfg: ScenarioConfig,
    pub sched: Scheduler<Event>,
    pub nodes: Vec<Node>,
    pub medium: Medium,
    pub telemetry: Telemetry,
    pub(crate) rng_adversary: RngStream,
    pub(crate) next_probe_id: u32,
    positions: Vec<NodePosition>,
    pts: Vec<Point>,
    flows: Vec<CbrFlow>,
    assignment: Assignment,
    rng_mobility: RngStream,
    rng_medium: RngStream,
    trace: Option<Vec<(SimTime, TraceEvent)>>,
    mobility_log: Option<Vec<(SimTime, NodeId, Point)>>,
    end: SimTime,
}

impl World {
    pub fn new(cfg: ScenarioConfig) -> Result<World, SetupError> {
        let k = cfg.node_count;
        let positions = match cfg.placement.kind {
            PlacementKind::Uniform => {
                place_uniform(k, &cfg.terrain, &mut derive_rng(cfg.seed, StreamLabel::Placement))?
            }
            PlacementKind::Explicit => cfg
                .placement
                .positions
                .iter()
                .enumerate()
                .map(|(i, &[x, y])| {
                    let pos = Point::new(x, y);
                    NodePosition { node_id: NodeId(i as u32), pos, waypoint: pos, speed: 0.0 }
                })
                .collect(),
        };
        if positions.is_empty() {
            return Err(FieldError::NoNodes.into());
        }
        let flows = pick_flows(&cfg, &mut derive_rng(cfg.seed, StreamLabel::Traffic))?;
        let endpoints: BTreeSet<NodeId> = flows.iter().flat_map(|f| [f.src, f.dest]).collect();
        let assignment = match &cfg.attack {
            Some(profile) => assign_malicious(
                k,
                profile,
                &endpoints,
                &mut derive_rng(cfg.seed, StreamLabel::AdversaryAssignment),
            )?,
            None => Assignment::default(),
        };

        let mut nodes: Vec<Node> = (0..k as u32).map(|i| Node::new(NodeId(i))).collect();
        let mut medium = Medium::new(cfg.medium.clone(), k);
        if let Some(profile) = &cfg.attack {
            for &m in &assignment.members {
                nodes[m.index()].role = Role::Malicious(profile.kind);
                if profile.kind == AttackKind::Wormhole {
                    medium.promiscuous_tap(m, true);
                }
            }
            for &(m, partner) in &assignment.partners {
                nodes[m.index()].tunnel_partner = Some(partner);
            }
        }
        if cfg.protocol == Protocol::Sdaodv {
            for n in nodes.iter_mut().filter(|n| n.role.is_honest()) {
                n.defense = Some(Defense::default());
            }
        }

        let end = SimTime::from_secs_f64(cfg.sim_duration);
        let mut sched = Scheduler::new();
        if cfg.mobility.model == MobilityModel::Waypoint {
            sched.schedule_in(SimTime::from_secs_f64(cfg.mobility.tick), Event::MobilityTick);
        }
        for f in &flows {
            if f.send_count() > 0 {
                sched.schedule(f.start, Event::CbrSend { flow: f.id, seq: 0 }).expect("start is not in the past");
            }
        }

        Ok(World {
            pts: positions.iter().map(|p| p.pos).collect(),
            positions,
            sched,
            nodes,
            medium,
            telemetry: Telemetry::new(k),
            rng_adversary: derive_rng(cfg.seed, StreamLabel::Adversary),
            rng_mobility: derive_rng(cfg.seed, StreamLabel::Mobility),
            rng_medium: derive_rng(cfg.seed, StreamLabel::Medium),
            next_probe_id: 0,
            flows,
            assignment,
            trace: None,
            mobility_log: None,
            end,
            cfg,
        })
    }

    /// Keep every [`TraceEvent`] for inspection after the run.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn enable_mobility_log(&mut self) {
        self.mobility_log.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[(SimTime, TraceEvent)] {
        self.trace.as_deref().unwrap_or_default()
    }

    pub fn mobility_log(&self) -> &[(SimTime, NodeId, Point)] {
        self.mobility_log.as_deref().unwrap_or_default()
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn end(&self) -> SimTime {
        self.end
    }

    pub fn positions(&self) -> &[Point] {
        &self.pts
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn malicious(&self) -> &[NodeId] {
        &self.assignment.members
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub(crate) fn record(&mut self, ev: TraceEvent) {
        let now = self.now();
        if let Some(t) = self.trace.as_mut() {
            t.push((now, ev));
        }
    }

    /// Runs to the configured end time and returns the metrics.
    pub fn run(&mut self) -> MetricsReport {
        self.run_until(self.end);
        self.report()
    }

    pub fn run_until(&mut self, t: SimTime) {
        let t = t.min(self.end);
        while let Some((_, _, ev)) = self.sched.pop_due(t) {
            self.dispatch(ev);
        }
        self.sched.advance_to(t);
    }

    pub fn report(&self) -> MetricsReport {
        self.telemetry.report(self.now())
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::TxStart { frame } => self.on_tx_start(frame),
            Event::Deliver { to, frame, tapped } => self.on_deliver(to, frame, tapped),
            Event::LinkFailure { node, target, packet } => self.on_link_failure(node, target, &packet),
            Event::Tunnel { to, from, packet } => self.tunnel_arrival(to, from, packet),
            Event::MobilityTick => self.on_mobility_tick(),
            Event::CbrSend { flow, seq } => self.on_cbr_send(flow, seq),
            Event::DiscoveryTimeout { node, dest } => self.on_discovery_timeout(node, dest),
            Event::ProbeTimeout { node, probe_id } => self.on_probe_timeout(node, probe_id),
        }
    }

    pub(crate) fn unicast(&mut self, node: NodeId, to: NodeId, packet: Packet) {
        self.send_frame(Frame::new(node, LinkDst::Unicast(to), packet));
    }

    pub(crate) fn broadcast(&mut self, node: NodeId, packet: Packet) {
        self.send_frame(Frame::new(node, LinkDst::Broadcast, packet));
    }

    /// Queues a frame on the sender's interface; it goes on air once the
    /// interface is free.
    fn send_frame(&mut self, frame: Frame) {
        let (start, _) = self.medium.reserve(frame.src, self.now(), frame.size_bytes, &self.pts);
        self.sched.schedule(start, Event::TxStart { frame }).expect("interface start is never in the past");
    }

    fn on_tx_start(&mut self, frame: Frame) {
        self.telemetry.on_tx(frame.src, frame.payload.kind(), frame.size_bytes);
        let plan = self.medium.plan(&frame, &self.pts, &mut self.rng_medium);
        let airtime = transmission_time(frame.size_bytes, self.medium.config());
        for r in plan.receptions {
            self.sched.schedule_in(airtime, Event::Deliver { to: r.node, frame: frame.clone(), tapped: r.tapped });
        }
        if plan.link_failure {
            if let LinkDst::Unicast(target) = frame.link_dst {
                self.sched.schedule_in(
                    airtime,
                    Event::LinkFailure { node: frame.src, target, packet: frame.payload.clone() },
                );
            }
        }
    }

    fn on_deliver(&mut self, to: NodeId, frame: Frame, tapped: bool) {
        self.medium.record_delivery(tapped);
        self.telemetry.on_rx(to, frame.payload.kind(), frame.size_bytes, tapped);
        match self.nodes[to.index()].role {
            Role::Honest if !tapped => self.honest_receive(to, &frame.payload, frame.src),
            Role::Honest => {}
            Role::Malicious(kind) => self.adversary_receive(to, kind, &frame.payload, frame.src, tapped),
        }
    }

    /// Protocol dispatch for a frame addressed to `node`.
    pub(crate) fn honest_receive(&mut self, node: NodeId, packet: &Packet, from: NodeId) {
        // Control traffic from a flagged neighbour is ignored; data is still
        // accounted for so no packet vanishes silently.
        if self.is_suspect(node, from) && !matches!(packet, Packet::Data(_)) {
            return;
        }
        match packet {
            Packet::Rreq(r) => {
                self.handle_rreq(node, r.clone(), from);
            }
            Packet::Rrep(r) => {
                self.handle_rrep(node, r.clone(), from);
            }
            Packet::Rerr(r) => {
                self.handle_rerr(node, r.clone(), from);
            }
            Packet::Data(d) => {
                self.handle_data(node, d.clone(), from);
            }
            Packet::Confirm(c) => self.handle_confirm(node, *c, from),
            Packet::ConfirmReply(r) => self.handle_confirm_reply(node, *r),
        }
    }

    fn on_mobility_tick(&mut self) {
        let dt = self.cfg.mobility.tick;
        let speeds = self.cfg.mobility.speeds();
        let now = self.now();
        for i in 0..self.positions.len() {
            let next = advance_mobility(self.positions[i], dt, &self.cfg.terrain, speeds, &mut self.rng_mobility);
            self.positions[i] = next;
            self.pts[i] = next.pos;
            if let Some(log) = self.mobility_log.as_mut() {
                log.push((now, next.node_id, next.pos));
            }
        }
        self.sched.schedule_in(SimTime::from_secs_f64(dt), Event::MobilityTick);
    }

    fn on_cbr_send(&mut self, flow: u32, seq: u32) {
        let f = self.flows[flow as usize];
        let pkt = DataPacket {
            flow,
            seq,
            src: f.src,
            dest: f.dest,
            hops_left: self.cfg.aodv.data_hop_limit,
            payload_len: f.packet_size,
            sent_at: self.now(),
            trace: vec![f.src],
        };
        self.telemetry.generate(&pkt);
        self.send_data(f.src, pkt);
        if seq + 1 < f.send_count() {
            let at = f.send_time(seq + 1);
            self.sched.schedule(at, Event::CbrSend { flow, seq: seq + 1 }).expect("future send");
        }
    }
}

/// CBR flows: explicit pairs, or distinct ordered pairs drawn uniformly.
fn pick_flows(cfg: &ScenarioConfig, rng: &mut RngStream) -> Result<Vec<CbrFlow>, SetupError> {
    let t = &cfg.traffic;
    let k = cfg.node_count;
    let pairs: Vec<(NodeId, NodeId)> = if !t.pairs.is_empty() {
        t.pairs.iter().map(|&[s, d]| (NodeId(s), NodeId(d))).collect()
    } else {
        if t.flows > k * k.saturating_sub(1) {
            return Err(SetupError::Traffic { flows: t.flows, nodes: k });
        }
        let mut chosen = Vec::with_capacity(t.flows);
        while chosen.len() < t.flows {
            let s = rng.random_range(0..k as u32);
            let d = rng.random_range(0..k as u32 - 1);
            let d = if d >= s { d + 1 } else { d };
            let pair = (NodeId(s), NodeId(d));
            if !chosen.contains(&pair) {
                chosen.push(pair);
            }
        }
        chosen
    };
    let interval = SimTime::from_secs_f64(t.interval());
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(i, (src, dest))| CbrFlow {
            id: i as u32,
            src,
            dest,
            packet_size: t.packet_size,
            interval,
            start: SimTime::from_secs_f64(t.start),
            stop: SimTime::from_secs_f64(t.stop),
        })
        .collect())
}
