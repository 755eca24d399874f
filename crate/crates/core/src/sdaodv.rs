//! SD-AODV defences layered over [`crate::aodv`]:
//!
//! 1. every RREQ carries a SHA-1 digest of its destination address; relays
//!    recompute it and restore (or drop) rewritten requests,
//! 2. the next hop handed to the link layer is shadowed per destination and
//!    compared against the routing table whenever transit data arrives,
//! 3. replies originated by intermediate nodes are cross-checked with a
//!    ROUTE-CONFIRM probe to the replier's claimed next hop.
//!
//! Detected neighbours go into a per-node [`SuspectList`] and are shunned.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::aodv::RouteEntry;
use crate::packet::{
    Packet, ProbeVerdict, RouteConfirm, RouteConfirmReply, RreqPacket, RrepPacket,
};
use crate::sim::{EventHandle, SimTime};
use crate::world::{Event, TraceEvent, World};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdaodvConfig {
    /// Seconds to wait for a ROUTE-CONFIRM answer.
    pub probe_timeout: f64,
    /// Cap on suspects listed in an originated RREQ.
    pub max_exclude: usize,
}

impl Default for SdaodvConfig {
    fn default() -> Self {
        SdaodvConfig { probe_timeout: 0.1, max_exclude: 8 }
    }
}

/// 160-bit digest of a destination address.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DigestAddr([u8; 20]);

impl DigestAddr {
    pub fn from_bytes(bytes: [u8; 20]) -> Self {
        DigestAddr(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for DigestAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DigestAddr({})", self.to_hex())
    }
}

/// SHA-1 over the 32-bit big-endian encoding of the id.
pub fn compute_digest(dest_id: NodeId) -> DigestAddr {
    let mut h = Sha1::new();
    h.update(dest_id.0.to_be_bytes());
    DigestAddr(h.finalize().into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DigestCheck {
    Clean,
    /// Rewritten; `original` came from the relay's seen-RREQ cache.
    TamperedRestored { original: NodeId },
    TamperedDropped,
}

/// Recomputes the destination digest. `cached_original` is the destination
/// recorded from the first clean copy of the same `(src_id, bcast_id)`.
pub fn verify_rreq_digest(rreq: &RreqPacket, cached_original: Option<NodeId>) -> DigestCheck {
    let Some(carried) = rreq.digest_addr else {
        return DigestCheck::Clean;
    };
    if compute_digest(rreq.dest_id) == carried {
        return DigestCheck::Clean;
    }
    match cached_original {
        Some(original) if compute_digest(original) == carried => {
            DigestCheck::TamperedRestored { original }
        }
        _ => DigestCheck::TamperedDropped,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadowRecord {
    pub next_hop: NodeId,
    pub recorded_at: SimTime,
    /// Route generation at the time of the write.
    pub generation: u64,
}

/// Next hop last handed to the link layer, per destination.
#[derive(Clone, Debug, Default)]
pub struct NextHopShadow {
    records: BTreeMap<NodeId, ShadowRecord>,
}

impl NextHopShadow {
    pub fn record(&mut self, dest: NodeId, next_hop: NodeId, now: SimTime, generation: u64) {
        self.records.insert(dest, ShadowRecord { next_hop, recorded_at: now, generation });
    }

    pub fn get(&self, dest: NodeId) -> Option<&ShadowRecord> {
        self.records.get(&dest)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detection {
    DigestMismatch,
    NextHopAltered,
    ReplyUnconfirmed,
}

impl Detection {
    pub fn as_str(self) -> &'static str {
        match self {
            Detection::DigestMismatch => "digest-mismatch",
            Detection::NextHopAltered => "next-hop-altered",
            Detection::ReplyUnconfirmed => "reply-unconfirmed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Suspicion {
    pub detection: Detection,
    pub at: SimTime,
}

/// Neighbours this node has caught misbehaving. Entries are never removed.
#[derive(Clone, Debug, Default)]
pub struct SuspectList {
    flagged: BTreeMap<NodeId, Suspicion>,
}

impl SuspectList {
    /// Returns true if `node` was not already flagged.
    pub fn flag(&mut self, node: NodeId, detection: Detection, at: SimTime) -> bool {
        if self.flagged.contains_key(&node) {
            return false;
        }
        self.flagged.insert(node, Suspicion { detection, at });
        true
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.flagged.contains_key(&node)
    }

    pub fn get(&self, node: NodeId) -> Option<&Suspicion> {
        self.flagged.get(&node)
    }

    pub fn len(&self) -> usize {
        self.flagged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Suspicion)> {
        self.flagged.iter().map(|(k, v)| (*k, v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NextHopCheck {
    Ok,
    Restored { injector: NodeId },
}

/// Compares the table's next hop with the shadow. A mismatch with no accepted
/// route update since the shadow write is an alteration: the shadowed value is
/// written back and whoever last wrote the entry is reported.
pub fn verify_next_hop(entry: &mut RouteEntry, shadow: Option<&ShadowRecord>) -> NextHopCheck {
    let Some(s) = shadow else {
        return NextHopCheck::Ok;
    };
    if entry.next_hop == s.next_hop || entry.generation != s.generation {
        return NextHopCheck::Ok;
    }
    let injector = entry.learned_from;
    entry.next_hop = s.next_hop;
    entry.learned_from = s.next_hop;
    NextHopCheck::Restored { injector }
}

#[derive(Clone, Debug)]
pub struct PendingProbe {
    pub rrep: RrepPacket,
    pub prev_hop: NodeId,
    pub timer: EventHandle,
}

/// Per-node SD-AODV state. Only honest nodes in SD-AODV runs carry one.
#[derive(Clone, Debug, Default)]
pub struct Defense {
    pub shadow: NextHopShadow,
    pub suspects: SuspectList,
    pub probes: BTreeMap<u32, PendingProbe>,
}

impl World {
    pub fn is_suspect(&self, node: NodeId, other: NodeId) -> bool {
        self.nodes[node.index()]
            .defense
            .as_ref()
            .is_some_and(|d| d.suspects.contains(other))
    }

    pub(crate) fn flag(&mut self, node: NodeId, suspect: NodeId, detection: Detection) {
        let now = self.now();
        let Some(defense) = self.nodes[node.index()].defense.as_mut() else {
            return;
        };
        if suspect == node || !defense.suspects.flag(suspect, detection, now) {
            return;
        }
        self.telemetry.node_mut(node).flags_raised += 1;
        self.record(TraceEvent::Flagged { node, suspect, detection, at: now });
    }

    /// Suspects to list in an RREQ this node originates.
    pub(crate) fn exclusion_list(&self, node: NodeId) -> Vec<NodeId> {
        match &self.nodes[node.index()].defense {
            Some(d) => d.suspects.iter().map(|(n, _)| n).take(self.cfg.sdaodv.max_exclude).collect(),
            None => Vec::new(),
        }
    }

    pub(crate) fn record_next_hop(&mut self, node: NodeId, dest: NodeId, next_hop: NodeId) {
        let now = self.now();
        let n = &mut self.nodes[node.index()];
        let generation = n.routes.get(dest).map_or(0, |e| e.generation);
        if let Some(d) = n.defense.as_mut() {
            d.shadow.record(dest, next_hop, now, generation);
        }
    }

    /// Scheme 2 check run by a relay holding transit data for `dest` that
    /// arrived from `prev_hop`. Returns true when the current route must be
    /// abandoned because its next hop is now a suspect.
    pub(crate) fn check_next_hop(&mut self, node: NodeId, dest: NodeId, prev_hop: NodeId) -> bool {
        let n = &mut self.nodes[node.index()];
        let (Some(defense), Some(entry)) = (n.defense.as_ref(), n.routes.get_mut(dest)) else {
            return false;
        };
        let shadow = defense.shadow.get(dest).copied();
        let outcome = verify_next_hop(entry, shadow.as_ref());
        let generation = entry.generation;
        if let NextHopCheck::Restored { injector } = outcome {
            self.record(TraceEvent::NextHopRestored { node, dest });
            self.flag(node, injector, Detection::NextHopAltered);
        }
        // Data handed back by the very hop it was sent to, with no route change since.
        if let Some(s) = shadow {
            if s.next_hop == prev_hop && s.generation == generation {
                self.flag(node, prev_hop, Detection::NextHopAltered);
            }
        }
        let n = &self.nodes[node.index()];
        match n.routes.get(dest) {
            Some(e) if e.valid => self.is_suspect(node, e.next_hop),
            _ => false,
        }
    }

    /// Scheme 3: hold an intermediate node's RREP until its claimed next hop
    /// vouches for a route to the destination.
    pub(crate) fn start_probe(&mut self, node: NodeId, rrep: RrepPacket, prev_hop: NodeId) {
        let probe_id = self.next_probe_id;
        self.next_probe_id += 1;
        let timeout = SimTime::from_secs_f64(self.cfg.sdaodv.probe_timeout);
        let timer = self.sched.schedule_in(timeout, Event::ProbeTimeout { node, probe_id });
        let confirm = RouteConfirm {
            probe_id,
            asker: node,
            dest: rrep.dest_id,
            target: rrep.claimed_next_hop,
        };
        if let Some(d) = self.nodes[node.index()].defense.as_mut() {
            d.probes.insert(probe_id, PendingProbe { rrep, prev_hop, timer });
        }
        self.unicast(node, prev_hop, Packet::Confirm(confirm));
    }

    pub(crate) fn handle_confirm(&mut self, node: NodeId, c: RouteConfirm, from: NodeId) {
        if node == c.target {
            let n = &self.nodes[node.index()];
            let verdict = if node == c.dest || n.routes.get(c.dest).is_some() {
                ProbeVerdict::Confirm
            } else {
                ProbeVerdict::Deny
            };
            let reply =
                RouteConfirmReply { probe_id: c.probe_id, asker: c.asker, dest: c.dest, verdict };
            self.unicast(node, from, Packet::ConfirmReply(reply));
        } else if from == c.asker {
            self.unicast(node, c.target, Packet::Confirm(c));
        }
    }

    pub(crate) fn handle_confirm_reply(&mut self, node: NodeId, r: RouteConfirmReply) {
        if r.asker != node {
            self.unicast(node, r.asker, Packet::ConfirmReply(r));
            return;
        }
        let Some(probe) = self.take_probe(node, r.probe_id) else {
            return;
        };
        match r.verdict {
            ProbeVerdict::Confirm => {
                self.record(TraceEvent::ReplyVerified { node, originator: probe.rrep.originator });
                self.process_rrep(node, probe.rrep, probe.prev_hop);
            }
            ProbeVerdict::Deny => self.reject_rrep(node, probe),
            ProbeVerdict::Unreachable => {}
        }
    }

    pub(crate) fn on_probe_timeout(&mut self, node: NodeId, probe_id: u32) {
        if let Some(probe) = self.take_probe(node, probe_id) {
            self.reject_rrep(node, probe);
        }
    }

    /// The asker lost the link to the replier before the probe left.
    pub(crate) fn abandon_probe(&mut self, node: NodeId, probe_id: u32) {
        self.take_probe(node, probe_id);
    }

    fn take_probe(&mut self, node: NodeId, probe_id: u32) -> Option<PendingProbe> {
        let probe = self.nodes[node.index()].defense.as_mut()?.probes.remove(&probe_id)?;
        self.sched.cancel(probe.timer);
        Some(probe)
    }

    fn reject_rrep(&mut self, node: NodeId, probe: PendingProbe) {
        let originator = probe.rrep.originator;
        self.flag(node, originator, Detection::ReplyUnconfirmed);
        self.record(TraceEvent::ReplyRejected { node, originator });
        if node == probe.rrep.src_id {
            return;
        }
        let cached = self.nodes[node.index()]
            .seen
            .latest_for(probe.rrep.src_id, probe.rrep.dest_id, self.now())
            .and_then(|e| e.forwarded.clone());
        if let Some(mut rreq) = cached {
            if !rreq.exclude.contains(&originator) {
                rreq.exclude.push(originator);
            }
            self.record(TraceEvent::RreqAction {
                node,
                src: rreq.src_id,
                bcast_id: rreq.bcast_id,
                action: crate::world::RreqAction::ReRelay,
            });
            self.broadcast(node, Packet::Rreq(rreq));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn rreq_for(dest: u32) -> RreqPacket {
        RreqPacket {
            src_id: NodeId(0),
            dest_id: NodeId(dest),
            src_seq: 1,
            dest_seq: 0,
            bcast_id: 1,
            ttl: 35,
            hop_count: 0,
            digest_addr: Some(compute_digest(NodeId(dest))),
            exclude: vec![],
        }
    }

    #[test]
    fn digest_deterministic() {
        assert_eq!(compute_digest(NodeId(12)), compute_digest(NodeId(12)));
    }

    #[test]
    fn digest_matches_reference_sha1() {
        // sha1(00 00 00 07), computed with Python's hashlib.
        assert_eq!(compute_digest(NodeId(7)).to_hex(), "41a53770303a0776a1378239e2ee0fd825705c74");
    }

    #[test]
    fn digest_injective_on_small_ids() {
        let all: HashSet<[u8; 20]> = (0..10_000).map(|i| *compute_digest(NodeId(i)).as_bytes()).collect();
        assert_eq!(all.len(), 10_000);
    }

    #[test]
    fn clean_rreq_passes() {
        assert_eq!(verify_rreq_digest(&rreq_for(9), None), DigestCheck::Clean);
    }

    #[test]
    fn rewritten_rreq_restored_from_cache() {
        let mut r = rreq_for(7);
        r.dest_id = NodeId(6);
        assert_eq!(
            verify_rreq_digest(&r, Some(NodeId(7))),
            DigestCheck::TamperedRestored { original: NodeId(7) }
        );
        assert_eq!(verify_rreq_digest(&r, None), DigestCheck::TamperedDropped);
        // A cache entry that does not match the digest cannot restore.
        assert_eq!(verify_rreq_digest(&r, Some(NodeId(5))), DigestCheck::TamperedDropped);
    }

    fn entry(next_hop: u32, generation: u64) -> RouteEntry {
        RouteEntry {
            dest: NodeId(9),
            dest_seq: 4,
            next_hop: NodeId(next_hop),
            hop_count: 3,
            expires_at: SimTime::from_secs_f64(10.0),
            valid: true,
            generation,
            learned_from: NodeId(next_hop),
        }
    }

    #[test]
    fn shadow_latest_wins() {
        let mut s = NextHopShadow::default();
        s.record(NodeId(9), NodeId(3), SimTime::ZERO, 1);
        s.record(NodeId(9), NodeId(5), SimTime::from_micros(5), 2);
        assert_eq!(s.get(NodeId(9)).unwrap().next_hop, NodeId(5));
    }

    #[test]
    fn next_hop_agreement_is_ok() {
        let shadow = ShadowRecord { next_hop: NodeId(3), recorded_at: SimTime::ZERO, generation: 1 };
        let mut e = entry(3, 1);
        assert_eq!(verify_next_hop(&mut e, Some(&shadow)), NextHopCheck::Ok);
    }

    #[test]
    fn altered_next_hop_restored() {
        let shadow = ShadowRecord { next_hop: NodeId(3), recorded_at: SimTime::ZERO, generation: 1 };
        let mut e = entry(3, 1);
        e.next_hop = NodeId(1);
        e.learned_from = NodeId(3);
        assert_eq!(
            verify_next_hop(&mut e, Some(&shadow)),
            NextHopCheck::Restored { injector: NodeId(3) }
        );
        assert_eq!(e.next_hop, NodeId(3));
    }

    #[test]
    fn legitimate_update_is_not_an_alteration() {
        let shadow = ShadowRecord { next_hop: NodeId(3), recorded_at: SimTime::ZERO, generation: 1 };
        let mut e = entry(5, 2);
        assert_eq!(verify_next_hop(&mut e, Some(&shadow)), NextHopCheck::Ok);
        assert_eq!(e.next_hop, NodeId(5));
    }

    #[test]
    fn suspects_are_monotone() {
        let mut s = SuspectList::default();
        assert!(!s.contains(NodeId(4)));
        assert!(s.flag(NodeId(4), Detection::DigestMismatch, SimTime::ZERO));
        assert!(!s.flag(NodeId(4), Detection::ReplyUnconfirmed, SimTime::from_micros(9)));
        assert_eq!(s.get(NodeId(4)).unwrap().detection, Detection::DigestMismatch);
        assert_eq!(s.len(), 1);
    }
}
