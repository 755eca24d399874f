//! Baseline AODV: RREQ flooding with `(src, bcast_id)` duplicate suppression,
//! reverse-path set-up, RREP unicast back to the requester, destination
//! sequence-number freshness, route lifetimes and RERR on broken routes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::packet::{DataPacket, Packet, RerrPacket, RreqPacket, RrepPacket, SeqNum};
use crate::sdaodv::{compute_digest, verify_rreq_digest, Detection, DigestCheck};
use crate::sim::{EventHandle, SimTime};
use crate::telemetry::DropReason;
use crate::world::{Event, RreqAction, TraceEvent, World};
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AodvConfig {
    /// Seconds a route stays valid after install or last use.
    pub route_lifetime: f64,
    /// Seconds a seen `(src, bcast_id)` pair is remembered.
    pub seen_cache_expiry: f64,
    pub initial_ttl: u8,
    /// Seconds to wait for an RREP before retrying.
    pub discovery_timeout: f64,
    pub discovery_retries: u32,
    /// Packets buffered per destination while a discovery is pending.
    pub buffer_capacity: usize,
    /// Hop budget stamped on every DATA packet.
    pub data_hop_limit: u8,
}

impl Default for AodvConfig {
    fn default() -> Self {
        AodvConfig {
            route_lifetime: 3.0,
            seen_cache_expiry: 5.0,
            initial_ttl: 35,
            discovery_timeout: 1.0,
            discovery_retries: 2,
            buffer_capacity: 64,
            data_hop_limit: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub dest_seq: SeqNum,
    pub next_hop: NodeId,
    pub hop_count: u8,
    pub expires_at: SimTime,
    pub valid: bool,
    /// Bumped on every accepted update.
    pub generation: u64,
    /// Neighbour whose message last wrote `next_hop`.
    pub learned_from: NodeId,
}

impl RouteEntry {
    pub fn is_live(&self, now: SimTime) -> bool {
        self.valid && now < self.expires_at
    }
}

/// Per-destination routes. Entries are invalidated, never removed, so the
/// last known sequence number survives.
#[derive(Clone, Debug, Default)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, RouteEntry>,
    generation: u64,
}

impl RoutingTable {
    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RouteEntry> {
        self.entries.get_mut(&dest)
    }

    pub fn live(&self, dest: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries.get(&dest).filter(|e| e.is_live(now))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    /// Freshness rule: accept a strictly newer sequence number, an equal one
    /// with fewer hops, or anything for an unknown destination. A lapsed entry
    /// accepts an equal-or-newer number so stored numbers never go backwards.
    pub fn update(
        &mut self,
        dest: NodeId,
        seq: SeqNum,
        next_hop: NodeId,
        hops: u8,
        now: SimTime,
        lifetime: SimTime,
    ) -> bool {
        let accept = match self.entries.get(&dest) {
            None => true,
            Some(e) if e.is_live(now) => seq > e.dest_seq || (seq == e.dest_seq && hops < e.hop_count),
            Some(e) => seq >= e.dest_seq,
        };
        if accept {
            self.generation += 1;
            self.entries.insert(
                dest,
                RouteEntry {
                    dest,
                    dest_seq: seq,
                    next_hop,
                    hop_count: hops,
                    expires_at: now + lifetime,
                    valid: true,
                    generation: self.generation,
                    learned_from: next_hop,
                },
            );
        }
        accept
    }

    pub fn refresh(&mut self, dest: NodeId, now: SimTime, lifetime: SimTime) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.is_live(now) {
                e.expires_at = e.expires_at.max(now + lifetime);
            }
        }
    }

    /// Invalidates live routes through `neighbor`; returns `(dest, seq)` pairs.
    /// Marks the route broken and bumps its sequence number so that only a
    /// fresher route can replace it.
    pub fn break_route(&mut self, dest: NodeId) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.valid {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
            }
        }
    }

    pub fn invalidate_via(&mut self, neighbor: NodeId, now: SimTime) -> Vec<(NodeId, SeqNum)> {
        let mut out = Vec::new();
        for e in self.entries.values_mut() {
            if e.next_hop == neighbor && e.is_live(now) {
                e.valid = false;
                e.dest_seq = e.dest_seq.wrapping_add(1);
                out.push((e.dest, e.dest_seq));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SeenEntry {
    pub prev_hop: NodeId,
    /// Destination as first seen in a clean copy.
    pub dest_id: NodeId,
    pub expires_at: SimTime,
    /// The copy this node re-broadcast, if it did.
    pub forwarded: Option<RreqPacket>,
}

#[derive(Clone, Debug, Default)]
pub struct SeenRreqCache {
    entries: BTreeMap<(NodeId, u32), SeenEntry>,
}

impl SeenRreqCache {
    pub fn get(&self, src: NodeId, bcast_id: u32, now: SimTime) -> Option<&SeenEntry> {
        self.entries.get(&(src, bcast_id)).filter(|e| now < e.expires_at)
    }

    pub fn contains(&self, src: NodeId, bcast_id: u32, now: SimTime) -> bool {
        self.get(src, bcast_id, now).is_some()
    }

    pub fn insert(&mut self, src: NodeId, bcast_id: u32, entry: SeenEntry, now: SimTime) {
        if self.entries.len() >= 512 {
            self.entries.retain(|_, e| now < e.expires_at);
        }
        self.entries.insert((src, bcast_id), entry);
    }

    fn get_mut(&mut self, src: NodeId, bcast_id: u32) -> Option<&mut SeenEntry> {
        self.entries.get_mut(&(src, bcast_id))
    }

    /// Newest live entry for a `(src, dest)` discovery.
    pub fn latest_for(&self, src: NodeId, dest: NodeId, now: SimTime) -> Option<&SeenEntry> {
        self.entries
            .range((src, 0)..=(src, u32::MAX))
            .rev()
            .map(|(_, e)| e)
            .find(|e| e.dest_id == dest && now < e.expires_at)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PendingDiscovery {
    pub attempt: u32,
    pub timer: EventHandle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RreqOutcome {
    Forwarded,
    Replied,
    Discarded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RrepOutcome {
    Forwarded,
    DeliveredBuffered,
    Held,
    Discarded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataOutcome {
    Delivered,
    Forwarded,
    Rebuffered,
    RouteError,
    Dropped,
}

impl World {
    fn route_lifetime(&self) -> SimTime {
        SimTime::from_secs_f64(self.cfg.aodv.route_lifetime)
    }

    /// A live route whose next hop is not a suspect.
    pub fn usable_route(&self, node: NodeId, dest: NodeId) -> Option<NodeId> {
        let e = self.nodes[node.index()].routes.live(dest, self.now())?;
        (!self.is_suspect(node, e.next_hop)).then_some(e.next_hop)
    }

    pub fn update_route(&mut self, node: NodeId, dest: NodeId, seq: SeqNum, next_hop: NodeId, hops: u8) -> bool {
        if dest == node {
            return false;
        }
        let now = self.now();
        let lifetime = self.route_lifetime();
        let updated = self.nodes[node.index()].routes.update(dest, seq, next_hop, hops, now, lifetime);
        if updated {
            self.record(TraceEvent::RouteInstalled { node, dest, seq, next_hop });
        }
        updated
    }

    /// Floods an RREQ for `dest` unless one is already outstanding.
    pub fn originate_route_discovery(&mut self, node: NodeId, dest: NodeId) -> bool {
        if self.nodes[node.index()].discovery.contains_key(&dest) {
            return false;
        }
        self.send_rreq(node, dest, 1);
        true
    }

    fn send_rreq(&mut self, node: NodeId, dest: NodeId, attempt: u32) {
        let now = self.now();
        let secure = self.nodes[node.index()].defense.is_some();
        let exclude = self.exclusion_list(node);
        let expiry = SimTime::from_secs_f64(self.cfg.aodv.seen_cache_expiry);
        let timeout = SimTime::from_secs_f64(self.cfg.aodv.discovery_timeout);
        let initial_ttl = self.cfg.aodv.initial_ttl;
        let timer = self.sched.schedule_in(timeout, Event::DiscoveryTimeout { node, dest });
        let n = &mut self.nodes[node.index()];
        n.seq += 1;
        n.bcast_id += 1;
        let rreq = RreqPacket {
            src_id: node,
            dest_id: dest,
            src_seq: n.seq,
            dest_seq: n.routes.get(dest).map_or(0, |e| e.dest_seq),
            bcast_id: n.bcast_id,
            ttl: initial_ttl,
            hop_count: 0,
            digest_addr: secure.then(|| compute_digest(dest)),
            exclude,
        };
        n.seen.insert(
            node,
            rreq.bcast_id,
            SeenEntry { prev_hop: node, dest_id: dest, expires_at: now + expiry, forwarded: Some(rreq.clone()) },
            now,
        );
        n.discovery.insert(dest, PendingDiscovery { attempt, timer });
        self.record(TraceEvent::DiscoveryStarted { node, dest, bcast_id: rreq.bcast_id });
        self.broadcast(node, Packet::Rreq(rreq));
    }

    pub(crate) fn on_discovery_timeout(&mut self, node: NodeId, dest: NodeId) {
        let Some(pending) = self.nodes[node.index()].discovery.remove(&dest) else {
            return;
        };
        if self.usable_route(node, dest).is_some() {
            self.flush_buffer(node, dest);
        } else if pending.attempt <= self.cfg.aodv.discovery_retries {
            self.send_rreq(node, dest, pending.attempt + 1);
        } else {
            let dropped = self.nodes[node.index()].buffer.remove(&dest).unwrap_or_default();
            for pkt in dropped {
                self.telemetry.drop_packet(&pkt, DropReason::NoRoute);
            }
        }
    }

    /// Honest RREQ processing, including the SD-AODV digest and exclusion checks.
    pub fn handle_rreq(&mut self, node: NodeId, mut rreq: RreqPacket, prev_hop: NodeId) -> RreqOutcome {
        let now = self.now();
        if self.nodes[node.index()].defense.is_some() {
            if rreq.exclude.contains(&prev_hop) {
                return RreqOutcome::Discarded;
            }
            let cached = self.nodes[node.index()].seen.get(rreq.src_id, rreq.bcast_id, now).map(|e| e.dest_id);
            match verify_rreq_digest(&rreq, cached) {
                DigestCheck::Clean => {}
                DigestCheck::TamperedRestored { original } => {
                    self.flag(node, prev_hop, Detection::DigestMismatch);
                    self.record(TraceEvent::DigestRestored { node, src: rreq.src_id, bcast_id: rreq.bcast_id });
                    rreq.dest_id = original;
                }
                DigestCheck::TamperedDropped => {
                    self.flag(node, prev_hop, Detection::DigestMismatch);
                    self.telemetry.node_mut(node).route_errors += 1;
                    self.record(TraceEvent::RouteError { node, dests: vec![rreq.dest_id] });
                    return RreqOutcome::Discarded;
                }
            }
        }
        if !self.accept_rreq(node, &rreq, prev_hop) {
            return RreqOutcome::Discarded;
        }
        if rreq.dest_id == node {
            self.reply_as_destination(node, &rreq);
            return RreqOutcome::Replied;
        }
        let intermediate = self.usable_route(node, rreq.dest_id).and_then(|next| {
            let e = self.nodes[node.index()].routes.get(rreq.dest_id)?;
            (e.dest_seq >= rreq.dest_seq).then_some((next, e.dest_seq, e.hop_count))
        });
        if let Some((next, seq, hops)) = intermediate {
            let rrep = RrepPacket {
                src_id: rreq.src_id,
                dest_id: rreq.dest_id,
                dest_seq: seq,
                hop_count: hops,
                originator: node,
                lifetime_ms: (self.cfg.aodv.route_lifetime * 1000.0) as u32,
                claimed_next_hop: next,
            };
            self.record(TraceEvent::RreqAction { node, src: rreq.src_id, bcast_id: rreq.bcast_id, action: RreqAction::Reply });
            self.send_rrep_toward(node, rrep, prev_hop);
            return RreqOutcome::Replied;
        }
        if rreq.ttl == 0 {
            return RreqOutcome::Discarded;
        }
        self.relay_rreq(node, rreq);
        RreqOutcome::Forwarded
    }

    /// Duplicate check, seen-cache insert and reverse route. False for duplicates.
    pub(crate) fn accept_rreq(&mut self, node: NodeId, rreq: &RreqPacket, prev_hop: NodeId) -> bool {
        let now = self.now();
        let expiry = SimTime::from_secs_f64(self.cfg.aodv.seen_cache_expiry);
        let n = &mut self.nodes[node.index()];
        if rreq.src_id == node || n.seen.contains(rreq.src_id, rreq.bcast_id, now) {
            self.record(TraceEvent::RreqDuplicate { node, src: rreq.src_id, bcast_id: rreq.bcast_id });
            return false;
        }
        n.seen.insert(
            rreq.src_id,
            rreq.bcast_id,
            SeenEntry { prev_hop, dest_id: rreq.dest_id, expires_at: now + expiry, forwarded: None },
            now,
        );
        self.update_route(node, rreq.src_id, rreq.src_seq, prev_hop, rreq.hop_count.saturating_add(1));
        true
    }

    pub(crate) fn relay_rreq(&mut self, node: NodeId, rreq: RreqPacket) {
        let mut fwd = rreq;
        fwd.ttl -= 1;
        fwd.hop_count = fwd.hop_count.saturating_add(1);
        if let Some(e) = self.nodes[node.index()].seen.get_mut(fwd.src_id, fwd.bcast_id) {
            e.forwarded = Some(fwd.clone());
        }
        self.record(TraceEvent::RreqAction { node, src: fwd.src_id, bcast_id: fwd.bcast_id, action: RreqAction::Forward });
        self.broadcast(node, Packet::Rreq(fwd));
    }

    pub(crate) fn reply_as_destination(&mut self, node: NodeId, rreq: &RreqPacket) {
        let n = &mut self.nodes[node.index()];
        n.seq = (n.seq + 1).max(rreq.dest_seq);
        let rrep = RrepPacket {
            src_id: rreq.src_id,
            dest_id: node,
            dest_seq: n.seq,
            hop_count: 0,
            originator: node,
            lifetime_ms: (self.cfg.aodv.route_lifetime * 1000.0) as u32,
            claimed_next_hop: node,
        };
        self.record(TraceEvent::RreqAction { node, src: rreq.src_id, bcast_id: rreq.bcast_id, action: RreqAction::Reply });
        let prev_hop = self.nodes[node.index()].seen.get(rreq.src_id, rreq.bcast_id, self.now()).map_or(rreq.src_id, |e| e.prev_hop);
        self.send_rrep_toward(node, rrep, prev_hop);
    }

    /// Unicasts an RREP along the reverse route to its requester.
    fn send_rrep_toward(&mut self, node: NodeId, rrep: RrepPacket, fallback: NodeId) {
        let next = self.usable_route(node, rrep.src_id).unwrap_or(fallback);
        self.unicast(node, next, Packet::Rrep(rrep));
    }

    pub fn handle_rrep(&mut self, node: NodeId, rrep: RrepPacket, prev_hop: NodeId) -> RrepOutcome {
        let probing = self.nodes[node.index()].defense.is_some()
            && rrep.originator != rrep.dest_id
            && prev_hop == rrep.originator;
        if probing {
            if node != rrep.src_id && self.usable_route(node, rrep.src_id).is_none() {
                return RrepOutcome::Discarded;
            }
            self.start_probe(node, rrep, prev_hop);
            return RrepOutcome::Held;
        }
        self.process_rrep(node, rrep, prev_hop)
    }

    pub(crate) fn process_rrep(&mut self, node: NodeId, rrep: RrepPacket, prev_hop: NodeId) -> RrepOutcome {
        let hops = rrep.hop_count.saturating_add(1);
        self.update_route(node, rrep.dest_id, rrep.dest_seq, prev_hop, hops);
        if node == rrep.src_id {
            if self.usable_route(node, rrep.dest_id).is_some() {
                if let Some(p) = self.nodes[node.index()].discovery.remove(&rrep.dest_id) {
                    self.sched.cancel(p.timer);
                }
                self.flush_buffer(node, rrep.dest_id);
            }
            return RrepOutcome::DeliveredBuffered;
        }
        let Some(next) = self.usable_route(node, rrep.src_id) else {
            return RrepOutcome::Discarded;
        };
        self.nodes[node.index()].precursors.entry(rrep.dest_id).or_default().insert(next);
        let fwd = RrepPacket { hop_count: hops, ..rrep };
        self.unicast(node, next, Packet::Rrep(fwd));
        RrepOutcome::Forwarded
    }

    fn flush_buffer(&mut self, node: NodeId, dest: NodeId) {
        let queued = self.nodes[node.index()].buffer.remove(&dest).unwrap_or_default();
        for pkt in queued {
            match self.usable_route(node, dest) {
                Some(next) => self.forward_data(node, pkt, next),
                None => self.buffer_data(node, pkt),
            }
        }
    }

    fn buffer_data(&mut self, node: NodeId, pkt: DataPacket) {
        let cap = self.cfg.aodv.buffer_capacity;
        let queue = self.nodes[node.index()].buffer.entry(pkt.dest).or_default();
        queue.push_back(pkt);
        if queue.len() > cap {
            let oldest = queue.pop_front().expect("non-empty");
            self.telemetry.drop_packet(&oldest, DropReason::BufferOverflow);
        }
    }

    /// Source-side send: forward on a usable route or buffer and discover.
    pub fn send_data(&mut self, node: NodeId, pkt: DataPacket) -> DataOutcome {
        match self.usable_route(node, pkt.dest) {
            Some(next) => {
                self.forward_data(node, pkt, next);
                DataOutcome::Forwarded
            }
            None => {
                let dest = pkt.dest;
                if self.nodes[node.index()].routes.live(dest, self.now()).is_some() {
                    // Live but through a suspect.
                    self.nodes[node.index()].routes.break_route(dest);
                }
                self.buffer_data(node, pkt);
                self.originate_route_discovery(node, dest);
                DataOutcome::Rebuffered
            }
        }
    }

    pub(crate) fn forward_data(&mut self, node: NodeId, mut pkt: DataPacket, next: NodeId) {
        if pkt.hops_left == 0 {
            self.telemetry.drop_packet(&pkt, DropReason::TtlExhausted);
            return;
        }
        pkt.hops_left -= 1;
        let now = self.now();
        let lifetime = self.route_lifetime();
        self.nodes[node.index()].routes.refresh(pkt.dest, now, lifetime);
        self.record_next_hop(node, pkt.dest, next);
        if pkt.src != node {
            self.telemetry.node_mut(node).data_forwarded += 1;
        }
        self.unicast(node, next, Packet::Data(pkt));
    }

    /// Honest DATA processing at a receiver.
    pub fn handle_data(&mut self, node: NodeId, mut pkt: DataPacket, prev_hop: NodeId) -> DataOutcome {
        pkt.trace.push(node);
        if pkt.dest == node {
            self.telemetry.deliver(&pkt, self.now());
            self.telemetry.node_mut(node).data_delivered += 1;
            return DataOutcome::Delivered;
        }
        let dest = pkt.dest;
        self.nodes[node.index()].precursors.entry(dest).or_default().insert(prev_hop);
        if self.nodes[node.index()].defense.is_some() && self.check_next_hop(node, dest, prev_hop) {
            self.nodes[node.index()].routes.break_route(dest);
            self.buffer_data(node, pkt);
            self.originate_route_discovery(node, dest);
            return DataOutcome::Rebuffered;
        }
        if let Some(next) = self.usable_route(node, dest) {
            self.forward_data(node, pkt, next);
            return DataOutcome::Forwarded;
        }
        // A flagged next hop leaves the node itself to find a way around.
        let flagged_route = self.nodes[node.index()]
            .routes
            .live(dest, self.now())
            .is_some_and(|e| self.is_suspect(node, e.next_hop));
        if flagged_route {
            self.nodes[node.index()].routes.break_route(dest);
            self.buffer_data(node, pkt);
            self.originate_route_discovery(node, dest);
            return DataOutcome::Rebuffered;
        }
        let seq = self.nodes[node.index()].routes.get(dest).map_or(0, |e| e.dest_seq);
        self.telemetry.drop_packet(&pkt, DropReason::NoRoute);
        self.raise_route_error(node, prev_hop, vec![(dest, seq)]);
        DataOutcome::RouteError
    }

    fn raise_route_error(&mut self, node: NodeId, to: NodeId, unreachable: Vec<(NodeId, SeqNum)>) {
        self.telemetry.node_mut(node).route_errors += 1;
        let dests = unreachable.iter().map(|&(d, _)| d).collect();
        self.record(TraceEvent::RouteError { node, dests });
        if to != node {
            self.unicast(node, to, Packet::Rerr(RerrPacket { unreachable }));
        }
    }

    pub fn handle_rerr(&mut self, node: NodeId, rerr: RerrPacket, from: NodeId) -> Vec<NodeId> {
        let now = self.now();
        let n = &mut self.nodes[node.index()];
        let mut invalidated = Vec::new();
        for &(dest, seq) in &rerr.unreachable {
            if let Some(e) = n.routes.get_mut(dest) {
                if e.next_hop == from && e.is_live(now) {
                    e.valid = false;
                    e.dest_seq = e.dest_seq.max(seq);
                    invalidated.push((dest, e.dest_seq));
                }
            }
        }
        if invalidated.is_empty() {
            return Vec::new();
        }
        let mut targets = BTreeSet::new();
        for (dest, _) in &invalidated {
            if let Some(p) = n.precursors.remove(dest) {
                targets.extend(p);
            }
        }
        targets.remove(&from);
        targets.remove(&node);
        for t in targets {
            self.unicast(node, t, Packet::Rerr(RerrPacket { unreachable: invalidated.clone() }));
        }
        invalidated.into_iter().map(|(d, _)| d).collect()
    }

    /// A unicast from `node` found its link target out of range.
    pub(crate) fn on_link_failure(&mut self, node: NodeId, target: NodeId, packet: &Packet) {
        match packet {
            Packet::Data(pkt) => {
                let now = self.now();
                let mut broken = self.nodes[node.index()].routes.invalidate_via(target, now);
                if !broken.iter().any(|(d, _)| *d == pkt.dest) {
                    let seq = self.nodes[node.index()].routes.get(pkt.dest).map_or(0, |e| e.dest_seq);
                    broken.push((pkt.dest, seq));
                }
                if pkt.src == node {
                    let mut pkt = pkt.clone();
                    pkt.hops_left = pkt.hops_left.saturating_add(1);
                    let dest = pkt.dest;
                    self.buffer_data(node, pkt);
                    self.originate_route_discovery(node, dest);
                } else {
                    let upstream = pkt.trace.len().checked_sub(2).map(|i| pkt.trace[i]).unwrap_or(pkt.src);
                    self.telemetry.drop_packet(pkt, DropReason::LinkDrop);
                    self.raise_route_error(node, upstream, broken);
                }
            }
            Packet::Confirm(c) if c.asker == node => self.abandon_probe(node, c.probe_id),
            Packet::Confirm(c) => {
                let reply = crate::packet::RouteConfirmReply {
                    probe_id: c.probe_id,
                    asker: c.asker,
                    dest: c.dest,
                    verdict: crate::packet::ProbeVerdict::Unreachable,
                };
                self.unicast(node, c.asker, Packet::ConfirmReply(reply));
            }
            _ => {}
        }
    }
}
