//! Shared wireless medium: airtime, per-node interface queues, unit-disk
//! delivery with an optional Bernoulli loss, and promiscuous taps.
//!
//! This is a stand-in for IEEE 802.11 without backoff or collisions. Each node
//! serialises its own transmissions; with carrier sense on, a node also waits
//! until every transmission it can hear has finished. Every in-range receiver
//! gets the frame one airtime after transmission start.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::Point;
use crate::packet::Packet;
use crate::sim::{RngStream, SimTime};
use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionMode {
    Ideal,
    SlottedLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumConfig {
    /// Bits per second.
    pub bandwidth: f64,
    /// Radio range in metres.
    pub range: f64,
    /// Fixed per-hop MAC overhead in seconds.
    pub mac_overhead: f64,
    pub collision_mode: CollisionMode,
    pub loss_probability: f64,
    /// Defer to transmissions from nodes in range.
    pub carrier_sense: bool,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            bandwidth: 2_000_000.0,
            range: 250.0,
            mac_overhead: 0.0005,
            collision_mode: CollisionMode::Ideal,
            loss_probability: 0.0,
            carrier_sense: true,
        }
    }
}

/// `size_bytes * 8 / bandwidth + mac_overhead`, rounded to whole microseconds.
pub fn transmission_time(size_bytes: u32, cfg: &MediumConfig) -> SimTime {
    let secs = size_bytes as f64 * 8.0 / cfg.bandwidth + cfg.mac_overhead;
    SimTime::from_secs_f64(secs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkDst {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub src: NodeId,
    pub link_dst: LinkDst,
    pub payload: Rc<Packet>,
    pub size_bytes: u32,
}

impl Frame {
    pub fn new(src: NodeId, link_dst: LinkDst, payload: Packet) -> Self {
        let size_bytes = payload.air_size();
        Frame { src, link_dst, payload: Rc::new(payload), size_bytes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reception {
    pub node: NodeId,
    /// Overheard copy of a unicast addressed to someone else.
    pub tapped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TxPlan {
    pub receptions: Vec<Reception>,
    /// Intended receivers: the neighbour set for a broadcast, one for a unicast.
    pub intended: u64,
    /// Intended receptions removed by the loss model.
    pub lost: u64,
    /// Unicast target out of range (or nonexistent) at transmission start.
    pub link_failure: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MediumCounters {
    pub frames_transmitted: u64,
    pub intended: u64,
    pub delivered: u64,
    pub lost: u64,
    pub out_of_range: u64,
    pub tapped: u64,
}

/// Per-run medium state.
#[derive(Debug)]
pub struct Medium {
    cfg: MediumConfig,
    busy_until: Vec<SimTime>,
    /// Latest end of any booked transmission audible at each node.
    channel_busy: Vec<SimTime>,
    taps: Vec<bool>,
    pub counters: MediumCounters,
}

impl Medium {
    pub fn new(cfg: MediumConfig, nodes: usize) -> Self {
        Medium {
            cfg,
            busy_until: vec![SimTime::ZERO; nodes],
            channel_busy: vec![SimTime::ZERO; nodes],
            taps: vec![false; nodes],
            counters: MediumCounters::default(),
        }
    }

    pub fn config(&self) -> &MediumConfig {
        &self.cfg
    }

    pub fn promiscuous_tap(&mut self, node: NodeId, enable: bool) {
        self.taps[node.index()] = enable;
    }

    pub fn is_tapped(&self, node: NodeId) -> bool {
        self.taps[node.index()]
    }

    /// Books the sender's interface (and, with carrier sense, the channel
    /// around it, using positions at booking time). Returns `(start, end)` of
    /// the frame's airtime.
    pub fn reserve(
        &mut self,
        sender: NodeId,
        now: SimTime,
        size_bytes: u32,
        positions: &[Point],
    ) -> (SimTime, SimTime) {
        let s = sender.index();
        let mut start = now.max(self.busy_until[s]);
        if self.cfg.carrier_sense {
            start = start.max(self.channel_busy[s]);
        }
        let end = start + transmission_time(size_bytes, &self.cfg);
        self.busy_until[s] = end;
        if self.cfg.carrier_sense {
            let me = positions[s];
            for (j, p) in positions.iter().enumerate() {
                if j == s || me.distance(*p) <= self.cfg.range {
                    self.channel_busy[j] = self.channel_busy[j].max(end);
                }
            }
        }
        (start, end)
    }

    /// Who hears `frame` given positions at transmission start.
    pub fn plan(&mut self, frame: &Frame, positions: &[Point], rng: &mut RngStream) -> TxPlan {
        let sender_pos = positions[frame.src.index()];
        let range = self.cfg.range;
        let lossy = self.cfg.collision_mode == CollisionMode::SlottedLoss;
        let mut plan = TxPlan::default();
        for (j, &p) in positions.iter().enumerate() {
            let node = NodeId(j as u32);
            if node == frame.src || sender_pos.distance(p) > range {
                continue;
            }
            let addressed = match frame.link_dst {
                LinkDst::Broadcast => true,
                LinkDst::Unicast(dst) => dst == node,
            };
            if addressed {
                plan.intended += 1;
                if lossy && rng.random_bool(self.cfg.loss_probability.clamp(0.0, 1.0)) {
                    plan.lost += 1;
                    continue;
                }
                plan.receptions.push(Reception { node, tapped: false });
            } else if self.taps[j] {
                plan.receptions.push(Reception { node, tapped: true });
            }
        }
        if let LinkDst::Unicast(_) = frame.link_dst {
            if plan.intended == 0 {
                plan.intended = 1;
                plan.link_failure = true;
            }
        }
        self.counters.frames_transmitted += 1;
        self.counters.intended += plan.intended;
        self.counters.lost += plan.lost;
        if plan.link_failure {
            self.counters.out_of_range += 1;
        }
        plan
    }

    pub fn record_delivery(&mut self, tapped: bool) {
        if tapped {
            self.counters.tapped += 1;
        } else {
            self.counters.delivered += 1;
        }
    }
}
