#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdaodv_core::adversary::{AttackKind, AttackProfile};
use sdaodv_core::config::MobilityModel;
use sdaodv_core::packet::RreqPacket;
use sdaodv_core::sdaodv::{compute_digest, verify_rreq_digest, Detection, DigestCheck};
use sdaodv_core::telemetry::{parse_stat, render_stat};
use sdaodv_core::world::{RreqAction, TraceEvent};
use sdaodv_core::{NodeId, Protocol, ScenarioConfig, World};

// A B C D E F G H. E tunnels to G. Links: A-B A-E B-D C-D D-F F-G F-H G-H,
// so the only honest way from A to H is A-B-D-F-H.
pub const DETOUR_LAYOUT: [[f64; 2]; 8] = [
    [100.0, 500.0],
    [300.0, 500.0],
    [500.0, 300.0],
    [500.0, 500.0],
    [100.0, 700.0],
    [700.0, 500.0],
    [800.0, 700.0],
    [900.0, 500.0],
];

// B sends to H. The short way is B-A-C-H with C byzantine; A-D-E-F-H is the
// honest detour.
pub const LOOP_LAYOUT: [[f64; 2]; 8] = [
    [300.0, 500.0],
    [100.0, 500.0],
    [500.0, 500.0],
    [300.0, 700.0],
    [500.0, 760.0],
    [700.0, 700.0],
    [900.0, 500.0],
    [700.0, 500.0],
];

pub const WORMHOLE: &str = "[attack]\nkind = \"wormhole\"\nnodes = [4, 6]\ntunnel_pairs = [[4, 6]]";
pub const BYZANTINE: &str = "[attack]\nkind = \"byzantine\"\nnodes = [2]";
pub const BLACKHOLE: &str = "[attack]\nkind = \"blackhole\"\nnodes = [4]";

/// Static 20 s scenario with one flow between fixed endpoints.
pub fn scenario(positions: &[[f64; 2]], flow: [u32; 2], protocol: Protocol, attack: &str) -> ScenarioConfig {
    let pos: Vec<String> = positions.iter().map(|p| format!("[{:.1}, {:.1}]", p[0], p[1])).collect();
    let text = format!(
        r#"
node_count = {n}
sim_duration = 20.0
protocol = "{proto}"
[placement]
kind = "explicit"
positions = [{pos}]
[mobility]
model = "static"
[traffic]
flows = 1
start = 1.0
stop = 19.0
pairs = [[{s}, {d}]]
{attack}
"#,
        n = positions.len(),
        proto = protocol.as_str(),
        pos = pos.join(", "),
        s = flow[0],
        d = flow[1],
    );
    ScenarioConfig::from_toml_str(&text).unwrap()
}

pub fn run_traced(cfg: ScenarioConfig) -> World {
    let mut w = World::new(cfg).unwrap();
    w.enable_trace();
    w.run();
    w
}

pub fn flow_pdf(w: &World) -> f64 {
    let total = w.telemetry.ledger().count();
    let delivered = w.telemetry.ledger().filter(|e| e.delivered_at.is_some()).count();
    delivered as f64 / total as f64
}

pub fn flags(w: &World) -> Vec<(NodeId, NodeId, Detection)> {
    w.trace()
        .iter()
        .filter_map(|(_, e)| match e {
            TraceEvent::Flagged { node, suspect, detection, .. } => Some((*node, *suspect, *detection)),
            _ => None,
        })
        .collect()
}

pub fn has_repeat(hops: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    hops.iter().any(|h| !seen.insert(*h))
}

pub fn unit_disk_links(positions: &[[f64; 2]], range: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let (dx, dy) = (positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]);
            if dx * dx + dy * dy <= range * range {
                out.push((i, j));
            }
        }
    }
    out
}

/// Small randomized scenario: any protocol, maybe an attack, mobile or not.
pub fn random_config(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig {
        seed,
        node_count: rng.random_range(12..=40),
        sim_duration: rng.random_range(10..=30) as f64,
        ..ScenarioConfig::default()
    };
    cfg.protocol = if rng.random_bool(0.5) { Protocol::Sdaodv } else { Protocol::Aodv };
    if rng.random_bool(0.3) {
        cfg.mobility.model = MobilityModel::Static;
    }
    let side = rng.random_range(500..=1200) as f64;
    cfg.terrain.width = side;
    cfg.terrain.height = side;
    cfg.traffic.flows = rng.random_range(1..=3);
    cfg.traffic.rate = rng.random_range(2..=8) as f64;
    cfg.traffic.start = 1.0;
    cfg.traffic.stop = cfg.sim_duration - 1.0;
    let attack = rng.random_range(0..4);
    if attack < 3 {
        cfg.attack = Some(AttackProfile {
            kind: AttackKind::ALL[attack],
            malicious_fraction: rng.random_range(1..=6) as f64 * 5.0,
            ..AttackProfile::default()
        });
    }
    cfg
}

/// Protocol invariants every finished run must satisfy.
pub fn check_invariants(cfg: &ScenarioConfig, w: &World) -> Result<(), String> {
    let honest: BTreeSet<NodeId> =
        (0..cfg.node_count as u32).map(NodeId).filter(|n| !w.malicious().contains(n)).collect();

    // Duplicate suppression: an honest node acts on each flood at most once.
    let mut acted: BTreeMap<(NodeId, NodeId, u32), u32> = BTreeMap::new();
    for (_, e) in w.trace() {
        if let TraceEvent::RreqAction { node, src, bcast_id, action } = e {
            if *action != RreqAction::ReRelay && honest.contains(node) {
                *acted.entry((*node, *src, *bcast_id)).or_default() += 1;
            }
        }
    }
    if let Some((k, n)) = acted.iter().find(|(_, n)| **n > 1) {
        return Err(format!("rreq {k:?} acted on {n} times"));
    }

    // Sequence numbers installed per (node, dest) never go backwards.
    let mut last: BTreeMap<(NodeId, NodeId), u32> = BTreeMap::new();
    for (t, e) in w.trace() {
        if let TraceEvent::RouteInstalled { node, dest, seq, .. } = e {
            let prev = last.insert((*node, *dest), *seq);
            if prev.is_some_and(|p| p > *seq) {
                return Err(format!("seq for {dest} at {node} fell from {prev:?} to {seq} at {t}"));
            }
        }
    }

    // No digest alarms without a wormhole.
    let wormhole = cfg.attack.as_ref().is_some_and(|a| a.kind == AttackKind::Wormhole);
    if !wormhole {
        let false_alarm = w.trace().iter().any(|(_, e)| {
            matches!(e, TraceEvent::Flagged { detection: Detection::DigestMismatch, .. } | TraceEvent::DigestRestored { .. })
        });
        if false_alarm {
            return Err("digest mismatch without a wormhole".into());
        }
    }

    // Ledger conservation.
    let r = w.report();
    if r.generated != r.delivered + r.dropped + r.in_flight {
        return Err(format!("{} generated != {} + {} + {}", r.generated, r.delivered, r.dropped, r.in_flight));
    }
    if r.drops.values().sum::<u64>() != r.dropped {
        return Err("drop reasons do not sum to dropped".into());
    }
    if w.telemetry.ledger().count() as u64 != r.generated {
        return Err("ledger size differs from generated".into());
    }
    if w.telemetry.ledger().any(|e| e.delivered_at.is_some() && e.drop_reason.is_some()) {
        return Err("packet both delivered and dropped".into());
    }
    for f in w.flows() {
        let sent = w.telemetry.ledger().filter(|e| e.flow == f.id).count() as u32;
        if sent > f.send_count() {
            return Err(format!("flow {} generated {sent} > {}", f.id, f.send_count()));
        }
    }
    let nodes = w.telemetry.nodes();
    if nodes.iter().map(|n| n.data_originated).sum::<u64>() != r.generated
        || nodes.iter().map(|n| n.data_delivered).sum::<u64>() != r.delivered
    {
        return Err("per-node data counters disagree with the ledger".into());
    }

    // Route errors counted once per RouteError event.
    let traced = w.trace().iter().filter(|(_, e)| matches!(e, TraceEvent::RouteError { .. })).count() as u64;
    if traced != r.route_errors {
        return Err(format!("route_errors {} but {traced} RouteError events", r.route_errors));
    }

    // STAT round trip.
    let echo = cfg.echo();
    let stat = render_stat(&r, &echo, nodes);
    let parsed = parse_stat(&stat).map_err(|e| e.to_string())?;
    if parsed.report != r {
        return Err("STAT report did not round-trip".into());
    }
    if parsed.config != echo.into_iter().collect::<BTreeMap<_, _>>() {
        return Err("STAT config echo did not round-trip".into());
    }
    if parsed.pdf.zip(r.pdf()).is_some_and(|(a, b)| (a - b).abs() > 5e-10) {
        return Err("STAT pdf line off".into());
    }
    Ok(())
}

/// Random untampered RREQ as an honest originator would build it.
pub fn clean_rreq(rng: &mut impl Rng) -> RreqPacket {
    let dest = NodeId(rng.random());
    RreqPacket {
        src_id: NodeId(rng.random()),
        dest_id: dest,
        src_seq: rng.random(),
        dest_seq: rng.random(),
        bcast_id: rng.random(),
        ttl: rng.random(),
        hop_count: rng.random(),
        digest_addr: Some(compute_digest(dest)),
        exclude: Vec::new(),
    }
}

/// Number of clean RREQs out of `n` that verification would flag.
pub fn digest_false_positives(seed: u64, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|_| {
            let rreq = clean_rreq(&mut rng);
            let cached = rng.random_bool(0.5).then(|| NodeId(rng.random()));
            verify_rreq_digest(&rreq, cached) != DigestCheck::Clean
        })
        .count()
}
