//! Malicious node behaviour: wormhole (destination rewrite plus tunnel),
//! byzantine (data looped back upstream) and blackhole (forged fresh reply,
//! then silent drop).

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{DataPacket, Packet, RreqPacket, RrepPacket};
use crate::telemetry::DropReason;
use crate::world::{Event, TraceEvent, World};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Wormhole,
    Byzantine,
    Blackhole,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Wormhole, AttackKind::Byzantine, AttackKind::Blackhole];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Wormhole => "wormhole",
            AttackKind::Byzantine => "byzantine",
            AttackKind::Blackhole => "blackhole",
        }
    }

    pub fn parse(s: &str) -> Option<AttackKind> {
        AttackKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoy {
    /// Rewrite to the tunnel partner's id.
    Partner,
    /// Rewrite to a random honest id, drawn per packet.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackProfile {
    pub kind: AttackKind,
    /// Percentage of the node population.
    pub malicious_fraction: f64,
    pub tunnel_enabled: bool,
    pub seq_inflation: u32,
    pub decoy: Decoy,
    /// Explicit malicious ids; overrides `malicious_fraction` when non-empty.
    pub nodes: Vec<u32>,
    /// Explicit wormhole pairs; overrides the automatic pairing.
    pub tunnel_pairs: Vec<[u32; 2]>,
}

impl Default for AttackProfile {
    fn default() -> Self {
        AttackProfile {
            kind: AttackKind::Wormhole,
            malicious_fraction: 10.0,
            tunnel_enabled: true,
            seq_inflation: 100,
            decoy: Decoy::Partner,
            nodes: Vec::new(),
            tunnel_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("malicious_fraction {0} must lie strictly between 0 and 100")]
    Fraction(f64),
    #[error("{count} malicious nodes out of {k} leaves no honest endpoints")]
    TooMany { count: usize, k: usize },
    #[error("only {available} nodes are not traffic endpoints, {count} malicious requested")]
    NotEnoughCandidates { count: usize, available: usize },
    #[error("node {0} cannot be both malicious and a traffic endpoint")]
    EndpointConflict(u32),
    #[error("node {0} is out of range")]
    UnknownNode(u32),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    /// In sampling order.
    pub members: Vec<NodeId>,
    /// `(member, partner)` for every wormhole member.
    pub partners: Vec<(NodeId, NodeId)>,
}

/// `round(fraction * k / 100)` with halves rounded up, at least one.
pub fn malicious_count(k: usize, fraction: f64) -> usize {
    let exact = fraction * k as f64 / 100.0;
    ((exact + 0.5 + 1e-9).floor() as usize).max(1)
}

/// Samples the malicious set uniformly without replacement from nodes that are
/// not traffic endpoints, and pairs wormhole members into tunnels.
pub fn assign_malicious(
    k: usize,
    profile: &AttackProfile,
    endpoints: &BTreeSet<NodeId>,
    rng: &mut crate::sim::RngStream,
) -> Result<Assignment, AttackError> {
    let members: Vec<NodeId> = if profile.nodes.is_empty() {
        if !(profile.malicious_fraction > 0.0 && profile.malicious_fraction < 100.0) {
            return Err(AttackError::Fraction(profile.malicious_fraction));
        }
        let count = malicious_count(k, profile.malicious_fraction);
        if count + 2 >= k {
            return Err(AttackError::TooMany { count, k });
        }
        let candidates: Vec<NodeId> =
            (0..k as u32).map(NodeId).filter(|n| !endpoints.contains(n)).collect();
        if candidates.len() < count {
            return Err(AttackError::NotEnoughCandidates { count, available: candidates.len() });
        }
        let mut picked = candidates.choose_multiple(rng, count).copied().collect::<Vec<_>>();
        picked.shuffle(rng);
        picked
    } else {
        let mut seen = BTreeSet::new();
        for &n in &profile.nodes {
            if n as usize >= k {
                return Err(AttackError::UnknownNode(n));
            }
            if endpoints.contains(&NodeId(n)) {
                return Err(AttackError::EndpointConflict(n));
            }
            seen.insert(n);
        }
        if seen.len() + 2 >= k {
            return Err(AttackError::TooMany { count: seen.len(), k });
        }
        profile.nodes.iter().map(|&n| NodeId(n)).collect()
    };

    let mut partners = Vec::new();
    if profile.kind == AttackKind::Wormhole {
        if !profile.tunnel_pairs.is_empty() {
            for &[a, b] in &profile.tunnel_pairs {
                for n in [a, b] {
                    if !members.contains(&NodeId(n)) {
                        return Err(AttackError::UnknownNode(n));
                    }
                }
                partners.push((NodeId(a), NodeId(b)));
                partners.push((NodeId(b), NodeId(a)));
            }
        } else {
            for pair in members.chunks(2) {
                match *pair {
                    [a, b] => {
                        partners.push((a, b));
                        partners.push((b, a));
                    }
                    // A lone member tunnels to the first member.
                    [a] if members.len() > 1 => partners.push((a, members[0])),
                    _ => {}
                }
            }
        }
    }
    Ok(Assignment { members, partners })
}

/// Id a blackhole claims as its next hop; no real node carries it.
pub fn fabricated_id(node: NodeId) -> NodeId {
    NodeId(u32::MAX - node.0)
}

impl World {
    /// Entry point for every frame addressed to (or overheard by) an attacker.
    pub(crate) fn adversary_receive(
        &mut self,
        node: NodeId,
        kind: AttackKind,
        packet: &Packet,
        from: NodeId,
        tapped: bool,
    ) {
        // Overheard frames are only counted (in telemetry) by the tap.
        if tapped {
            return;
        }
        match (kind, packet) {
            (AttackKind::Wormhole, Packet::Rreq(r)) => self.wormhole_rreq(node, r.clone(), from),
            (AttackKind::Byzantine, Packet::Data(d)) if d.dest != node => {
                self.byzantine_loop(node, d.clone(), from)
            }
            (AttackKind::Blackhole, Packet::Rreq(r)) => self.blackhole_rreq(node, r, from),
            (AttackKind::Blackhole, Packet::Data(d)) if d.dest != node => {
                let mut d = d.clone();
                d.trace.push(node);
                self.telemetry.drop_packet(&d, DropReason::Blackhole);
            }
            (AttackKind::Blackhole, Packet::Confirm(_) | Packet::ConfirmReply(_)) => {}
            _ => self.honest_receive(node, packet, from),
        }
    }

    fn wormhole_rreq(&mut self, node: NodeId, rreq: RreqPacket, from: NodeId) {
        if !self.accept_rreq(node, &rreq, from) {
            return;
        }
        if rreq.ttl == 0 {
            return;
        }
        let partner = self.nodes[node.index()].tunnel_partner;
        let profile = self.cfg.attack.clone().unwrap_or_default();
        let decoy = match profile.decoy {
            Decoy::Partner => partner,
            Decoy::Random => {
                let honest: Vec<NodeId> = self
                    .nodes
                    .iter()
                    .filter(|n| n.role.is_honest() && n.id != rreq.dest_id)
                    .map(|n| n.id)
                    .collect();
                honest.choose(&mut self.rng_adversary).copied()
            }
        };
        let mut bad = rreq;
        if let Some(decoy) = decoy {
            self.record(TraceEvent::RreqRewritten { node, src: bad.src_id, bcast_id: bad.bcast_id, to: decoy });
            bad.dest_id = decoy;
        }
        bad.ttl -= 1;
        bad.hop_count = bad.hop_count.saturating_add(1);
        if profile.tunnel_enabled {
            if let Some(p) = partner {
                self.telemetry.node_mut(node).tunnelled += 1;
                self.sched.schedule_in(
                    crate::sim::SimTime::ZERO,
                    Event::Tunnel { to: p, from: node, packet: Packet::Rreq(bad.clone()) },
                );
            }
        }
        self.broadcast(node, Packet::Rreq(bad));
    }

    /// Far end of a wormhole: replay the tunnelled request verbatim.
    pub(crate) fn tunnel_arrival(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        if let Packet::Rreq(rreq) = packet {
            if !self.accept_rreq(node, &rreq, from) {
                return;
            }
            self.broadcast(node, Packet::Rreq(rreq));
        }
    }

    /// Bounce transit data back where it came from, after pointing the
    /// upstream hop's route at the hop before it so the packet keeps circling.
    fn byzantine_loop(&mut self, node: NodeId, mut pkt: DataPacket, from: NodeId) {
        pkt.trace.push(node);
        let upstream_prev = match pkt.trace.len() {
            0..=2 => node,
            n => pkt.trace[n - 3],
        };
        let now = self.now();
        if let Some(e) = self.nodes[from.index()].routes.get_mut(pkt.dest) {
            if e.is_live(now) {
                e.next_hop = upstream_prev;
                e.learned_from = node;
            }
        }
        self.record(TraceEvent::LoopedBack { node, to: from });
        if pkt.hops_left == 0 {
            self.telemetry.drop_packet(&pkt, DropReason::TtlExhausted);
            return;
        }
        pkt.hops_left -= 1;
        self.unicast(node, from, Packet::Data(pkt));
    }

    fn blackhole_rreq(&mut self, node: NodeId, rreq: &RreqPacket, from: NodeId) {
        if !self.accept_rreq(node, rreq, from) {
            return;
        }
        let inflation = self.cfg.attack.as_ref().map_or(100, |a| a.seq_inflation);
        let rrep = RrepPacket {
            src_id: rreq.src_id,
            dest_id: rreq.dest_id,
            dest_seq: rreq.dest_seq.saturating_add(inflation),
            hop_count: 1,
            originator: node,
            lifetime_ms: (self.cfg.aodv.route_lifetime * 1000.0) as u32,
            claimed_next_hop: fabricated_id(node),
        };
        self.record(TraceEvent::Forged { node, src: rreq.src_id, dest: rreq.dest_id });
        self.unicast(node, from, Packet::Rrep(rrep));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{derive_rng, StreamLabel};

    fn profile(kind: AttackKind, fraction: f64) -> AttackProfile {
        AttackProfile { kind, malicious_fraction: fraction, ..AttackProfile::default() }
    }

    #[test]
    fn counts_round_half_up() {
        // Enumerate the rounding rule against integer arithmetic: round(f*k/100)
        // with halves up equals floor((2*f*k + 100) / 200).
        for k in 1..=120usize {
            for f in (5..=30).step_by(5) {
                let oracle = ((2 * f * k + 100) / 200).max(1);
                assert_eq!(malicious_count(k, f as f64), oracle, "k={k} f={f}");
            }
        }
        assert_eq!(malicious_count(50, 10.0), 5);
        assert_eq!(malicious_count(100, 5.0), 5);
        assert_eq!(malicious_count(50, 15.0), 8);
    }

    #[test]
    fn assignment_deterministic_and_avoids_endpoints() {
        let endpoints: BTreeSet<NodeId> = [0, 1, 2, 3].into_iter().map(NodeId).collect();
        let p = profile(AttackKind::Blackhole, 20.0);
        let a = assign_malicious(50, &p, &endpoints, &mut derive_rng(4, StreamLabel::AdversaryAssignment)).unwrap();
        let b = assign_malicious(50, &p, &endpoints, &mut derive_rng(4, StreamLabel::AdversaryAssignment)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.members.len(), 10);
        assert!(a.members.iter().all(|m| !endpoints.contains(m)));
        let unique: BTreeSet<_> = a.members.iter().collect();
        assert_eq!(unique.len(), 10);
    }

    #[test]
    fn too_many_rejected() {
        let rng = || derive_rng(1, StreamLabel::AdversaryAssignment);
        let p = profile(AttackKind::Byzantine, 60.0);
        let err = assign_malicious(5, &p, &BTreeSet::new(), &mut rng());
        assert_eq!(err, Err(AttackError::TooMany { count: 3, k: 5 }));
        let p = profile(AttackKind::Byzantine, 40.0);
        assert!(assign_malicious(5, &p, &BTreeSet::new(), &mut rng()).is_ok());
    }

    #[test]
    fn wormhole_members_all_paired() {
        let p = profile(AttackKind::Wormhole, 10.0);
        let a = assign_malicious(50, &p, &BTreeSet::new(), &mut derive_rng(9, StreamLabel::AdversaryAssignment)).unwrap();
        assert_eq!(a.members.len(), 5);
        assert_eq!(a.partners.len(), 5);
        for &(m, partner) in &a.partners {
            assert_ne!(m, partner);
            assert!(a.members.contains(&partner));
        }
    }

    #[test]
    fn explicit_nodes_override() {
        let p = AttackProfile { nodes: vec![4], tunnel_pairs: vec![], ..profile(AttackKind::Blackhole, 10.0) };
        let a = assign_malicious(8, &p, &BTreeSet::new(), &mut derive_rng(1, StreamLabel::AdversaryAssignment)).unwrap();
        assert_eq!(a.members, vec![NodeId(4)]);
        let endpoints: BTreeSet<NodeId> = [NodeId(4)].into();
        assert_eq!(
            assign_malicious(8, &p, &endpoints, &mut derive_rng(1, StreamLabel::AdversaryAssignment)),
            Err(AttackError::EndpointConflict(4))
        );
    }
}
