//! Per-packet ledger, per-node counters, the four run metrics and the STAT
//! report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{DataPacket, PacketKind};
use crate::sim::SimTime;
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropReason {
    NoRoute,
    BufferOverflow,
    Blackhole,
    TtlExhausted,
    LinkDrop,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::NoRoute,
        DropReason::BufferOverflow,
        DropReason::Blackhole,
        DropReason::TtlExhausted,
        DropReason::LinkDrop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no-route",
            DropReason::BufferOverflow => "buffer-overflow",
            DropReason::Blackhole => "blackhole",
            DropReason::TtlExhausted => "ttl-exhausted",
            DropReason::LinkDrop => "link-drop",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub flow: u32,
    pub seq: u32,
    pub sent_at: SimTime,
    pub delivered_at: Option<SimTime>,
    pub drop_reason: Option<DropReason>,
    /// Nodes the packet visited, source first, recorded when it terminated.
    pub hops: Vec<NodeId>,
}

impl LedgerEntry {
    pub fn is_terminal(&self) -> bool {
        self.delivered_at.is_some() || self.drop_reason.is_some()
    }
}

/// Frame and byte counts per packet kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KindCounters {
    pub frames: [u64; 6],
    pub bytes: [u64; 6],
}

impl KindCounters {
    fn add(&mut self, kind: PacketKind, bytes: u32) {
        let i = kind as usize;
        self.frames[i] += 1;
        self.bytes[i] += bytes as u64;
    }

    pub fn total_frames(&self) -> u64 {
        self.frames.iter().sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeCounters {
    pub sent: KindCounters,
    pub received: KindCounters,
    /// Requests pushed through a wormhole tunnel.
    pub tunnelled: u64,
    /// Unicasts overheard through a promiscuous tap.
    pub tapped_frames: u64,
    pub data_originated: u64,
    pub data_delivered: u64,
    pub data_forwarded: u64,
    pub data_dropped: u64,
    pub route_errors: u64,
    pub flags_raised: u64,
}

impl NodeCounters {
    /// `(key, value)` pairs in the order they are written to the STAT file.
    pub fn fields(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for kind in PacketKind::ALL {
            let i = kind as usize;
            out.push((format!("frames_sent_{}", kind.as_str()), self.sent.frames[i]));
            out.push((format!("bytes_sent_{}", kind.as_str()), self.sent.bytes[i]));
            out.push((format!("frames_received_{}", kind.as_str()), self.received.frames[i]));
            out.push((format!("bytes_received_{}", kind.as_str()), self.received.bytes[i]));
        }
        for (k, v) in [
            ("frames_sent", self.sent.total_frames()),
            ("bytes_sent", self.sent.total_bytes()),
            ("frames_received", self.received.total_frames()),
            ("bytes_received", self.received.total_bytes()),
            ("tapped_frames", self.tapped_frames),
            ("tunnelled", self.tunnelled),
            ("data_originated", self.data_originated),
            ("data_delivered", self.data_delivered),
            ("data_forwarded", self.data_forwarded),
            ("data_dropped", self.data_dropped),
            ("route_errors", self.route_errors),
            ("flags_raised", self.flags_raised),
        ] {
            out.push((k.to_string(), v));
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct Telemetry {
    nodes: Vec<NodeCounters>,
    ledger: BTreeMap<(u32, u32), LedgerEntry>,
}

impl Telemetry {
    pub fn new(node_count: usize) -> Self {
        Telemetry { nodes: vec![NodeCounters::default(); node_count], ledger: BTreeMap::new() }
    }

    pub fn node(&self, node: NodeId) -> &NodeCounters {
        &self.nodes[node.index()]
    }

    pub fn node_mut(&mut self, node: NodeId) -> &mut NodeCounters {
        &mut self.nodes[node.index()]
    }

    pub fn nodes(&self) -> &[NodeCounters] {
        &self.nodes
    }

    pub fn ledger(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.ledger.values()
    }

    pub fn entry(&self, flow: u32, seq: u32) -> Option<&LedgerEntry> {
        self.ledger.get(&(flow, seq))
    }

    pub fn on_tx(&mut self, node: NodeId, kind: PacketKind, bytes: u32) {
        self.nodes[node.index()].sent.add(kind, bytes);
    }

    pub fn on_rx(&mut self, node: NodeId, kind: PacketKind, bytes: u32, tapped: bool) {
        let n = &mut self.nodes[node.index()];
        if tapped {
            n.tapped_frames += 1;
        } else {
            n.received.add(kind, bytes);
        }
    }

    pub fn generate(&mut self, pkt: &DataPacket) {
        self.nodes[pkt.src.index()].data_originated += 1;
        self.ledger.insert(
            (pkt.flow, pkt.seq),
            LedgerEntry {
                flow: pkt.flow,
                seq: pkt.seq,
                sent_at: pkt.sent_at,
                delivered_at: None,
                drop_reason: None,
                hops: Vec::new(),
            },
        );
    }

    /// Returns false if the packet had already terminated.
    pub fn deliver(&mut self, pkt: &DataPacket, now: SimTime) -> bool {
        match self.ledger.get_mut(&(pkt.flow, pkt.seq)) {
            Some(e) if !e.is_terminal() => {
                e.delivered_at = Some(now);
                e.hops = pkt.trace.clone();
                true
            }
            _ => false,
        }
    }

    pub fn drop_packet(&mut self, pkt: &DataPacket, reason: DropReason) -> bool {
        match self.ledger.get_mut(&(pkt.flow, pkt.seq)) {
            Some(e) if !e.is_terminal() => {
                e.drop_reason = Some(reason);
                e.hops = pkt.trace.clone();
                if let Some(last) = pkt.trace.last() {
                    self.nodes[last.index()].data_dropped += 1;
                }
                true
            }
            _ => false,
        }
    }

    pub fn report(&self, sim_time: SimTime) -> MetricsReport {
        let mut r = MetricsReport {
            node_count: self.nodes.len() as u64,
            sim_time_us: sim_time.as_micros(),
            ..MetricsReport::default()
        };
        for e in self.ledger.values() {
            r.generated += 1;
            if let Some(at) = e.delivered_at {
                r.delivered += 1;
                r.delay_sum_us += at.saturating_sub(e.sent_at).as_micros();
            } else if let Some(reason) = e.drop_reason {
                r.dropped += 1;
                *r.drops.entry(reason).or_default() += 1;
            }
        }
        r.in_flight = r.generated - r.delivered - r.dropped;
        for n in &self.nodes {
            r.route_errors += n.route_errors;
            r.rx_bytes_total += n.received.total_bytes();
            r.flags_raised += n.flags_raised;
            for i in 0..6 {
                r.frames_sent[i] += n.sent.frames[i];
                r.frames_received[i] += n.received.frames[i];
            }
        }
        r
    }
}

/// Run totals. Everything is an integer so the STAT file reproduces it
/// exactly; the four metrics are derived on demand.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MetricsReport {
    pub node_count: u64,
    pub sim_time_us: u64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub delay_sum_us: u64,
    pub route_errors: u64,
    pub rx_bytes_total: u64,
    pub flags_raised: u64,
    pub drops: BTreeMap<DropReason, u64>,
    pub frames_sent: [u64; 6],
    pub frames_received: [u64; 6],
}

impl MetricsReport {
    /// Delivered over generated; `None` when nothing was generated.
    pub fn pdf(&self) -> Option<f64> {
        (self.generated > 0).then(|| self.delivered as f64 / self.generated as f64)
    }

    /// Mean delay of delivered packets in seconds; `None` without deliveries.
    pub fn avg_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum_us as f64 / 1e6 / self.delivered as f64)
    }

    /// Mean over nodes of bits received per simulated second.
    pub fn throughput(&self) -> f64 {
        if self.sim_time_us == 0 || self.node_count == 0 {
            return 0.0;
        }
        let bits = self.rx_bytes_total as f64 * 8.0;
        bits / self.node_count as f64 / (self.sim_time_us as f64 / 1e6)
    }

    fn integer_fields(&self) -> Vec<(String, u64)> {
        let mut out = vec![
            ("node_count".to_string(), self.node_count),
            ("sim_time_us".into(), self.sim_time_us),
            ("generated".into(), self.generated),
            ("delivered".into(), self.delivered),
            ("dropped".into(), self.dropped),
            ("in_flight".into(), self.in_flight),
            ("delay_sum_us".into(), self.delay_sum_us),
            ("route_errors".into(), self.route_errors),
            ("rx_bytes_total".into(), self.rx_bytes_total),
            ("flags_raised".into(), self.flags_raised),
        ];
        for reason in DropReason::ALL {
            out.push((format!("dropped_{}", reason.as_str()), self.drops.get(&reason).copied().unwrap_or(0)));
        }
        for kind in PacketKind::ALL {
            out.push((format!("frames_sent_{}", kind.as_str()), self.frames_sent[kind as usize]));
            out.push((format!("frames_received_{}", kind.as_str()), self.frames_received[kind as usize]));
        }
        out
    }
}

/// Fixed nine-decimal rendering; `NA` for an undefined metric.
pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.9}"),
        None => "NA".to_string(),
    }
}

pub const THROUGHPUT_DEFINITION: &str =
    "throughput = mean over all nodes of bits received (all packet types, addressed frames only) / sim seconds";

/// Renders the STAT report. `config` holds `(dotted key, value)` pairs that
/// are echoed verbatim in the header.
pub fn render_stat(report: &MetricsReport, config: &[(String, String)], nodes: &[NodeCounters]) -> String {
    let mut s = String::new();
    s.push_str("# sdaodv-sim statistics\n");
    let _ = writeln!(s, "# {THROUGHPUT_DEFINITION}");
    s.push_str("# avg_delay = mean (delivered_at - sent_at) over delivered data packets, seconds\n");
    s.push_str("# pdf = delivered / generated data packets; NA when undefined\n");
    for (k, v) in config {
        let _ = writeln!(s, "config {k} {v}");
    }
    for (i, n) in nodes.iter().enumerate() {
        for (k, v) in n.fields() {
            let _ = writeln!(s, "node {i} {k} {v}");
        }
    }
    let _ = writeln!(s, "GLOBAL pdf {}", fmt_metric(report.pdf()));
    let _ = writeln!(s, "GLOBAL avg_delay {}", fmt_metric(report.avg_delay()));
    let _ = writeln!(s, "GLOBAL throughput {}", fmt_metric(Some(report.throughput())));
    let _ = writeln!(s, "GLOBAL route_errors {}", report.route_errors);
    for (k, v) in report.integer_fields() {
        if k != "route_errors" {
            let _ = writeln!(s, "GLOBAL {k} {v}");
        }
    }
    s
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing GLOBAL {0}")]
    Missing(String),
}

/// What a STAT file says, read back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedStat {
    pub config: BTreeMap<String, String>,
    pub nodes: BTreeMap<u32, BTreeMap<String, u64>>,
    pub report: MetricsReport,
    pub pdf: Option<f64>,
    pub avg_delay: Option<f64>,
    pub throughput: f64,
}

pub fn parse_stat(text: &str) -> Result<ParsedStat, StatParseError> {
    let mut out = ParsedStat::default();
    let mut global: BTreeMap<String, String> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |reason: &str| StatParseError::Malformed { line: i + 1, reason: reason.to_string() };
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ' ');
        let tag = parts.next().unwrap_or_default();
        match tag {
            "config" => {
                let k = parts.next().ok_or_else(|| bad("missing key"))?;
                let v = parts.next().unwrap_or_default();
                out.config.insert(k.to_string(), v.to_string());
            }
            "node" => {
                let id: u32 = parts.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad node id"))?;
                let rest = parts.next().ok_or_else(|| bad("missing counter"))?;
                let (k, v) = rest.split_once(' ').ok_or_else(|| bad("missing value"))?;
                let v: u64 = v.parse().map_err(|_| bad("bad counter value"))?;
                out.nodes.entry(id).or_default().insert(k.to_string(), v);
            }
            "GLOBAL" => {
                let k = parts.next().ok_or_else(|| bad("missing key"))?;
                let v = parts.next().ok_or_else(|| bad("missing value"))?;
                global.insert(k.to_string(), v.to_string());
            }
            _ => return Err(bad("unknown record")),
        }
    }
    let int = |k: &str| -> Result<u64, StatParseError> {
        global
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| StatParseError::Missing(k.to_string()))
    };
    let metric = |k: &str| -> Result<Option<f64>, StatParseError> {
        match global.get(k).map(String::as_str) {
            Some("NA") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| StatParseError::Missing(k.to_string())),
            None => Err(StatParseError::Missing(k.to_string())),
        }
    };
    let r = &mut out.report;
    r.node_count = int("node_count")?;
    r.sim_time_us = int("sim_time_us")?;
    r.generated = int("generated")?;
    r.delivered = int("delivered")?;
    r.dropped = int("dropped")?;
    r.in_flight = int("in_flight")?;
    r.delay_sum_us = int("delay_sum_us")?;
    r.route_errors = int("route_errors")?;
    r.rx_bytes_total = int("rx_bytes_total")?;
    r.flags_raised = int("flags_raised")?;
    for reason in DropReason::ALL {
        let v = int(&format!("dropped_{}", reason.as_str()))?;
        if v > 0 {
            r.drops.insert(reason, v);
        }
    }
    for kind in PacketKind::ALL {
        r.frames_sent[kind as usize] = int(&format!("frames_sent_{}", kind.as_str()))?;
        r.frames_received[kind as usize] = int(&format!("frames_received_{}", kind.as_str()))?;
    }
    out.pdf = metric("pdf")?;
    out.avg_delay = metric("avg_delay")?;
    out.throughput = metric("throughput")?.unwrap_or(0.0);
    Ok(out)
}
