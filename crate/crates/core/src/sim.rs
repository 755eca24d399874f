//! Discrete-event engine: fixed-point virtual clock, a cancellable priority
//! queue ordered by `(fire_time, insertion counter)`, and labelled RNG streams.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in whole microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs <= 0.0 || !secs.is_finite() {
            return SimTime(0);
        }
        SimTime((secs * 1e6).round() as u64)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Identifies a scheduled event. Handles are never reused within a queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq_no(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled at {at} but the clock already reads {now}")]
    InPast { at: SimTime, now: SimTime },
}

/// Priority queue of events with a monotone clock.
///
/// Ties on `fire_time` resolve by insertion order. Payloads live beside the
/// heap so cancellation is a map removal; stale heap keys are skipped on pop.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, E>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Events popped so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<EventHandle, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((at, seq)));
        self.pending.insert(seq, event);
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current instant; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, event).expect("future event")
    }

    /// Returns true iff the event had not yet fired.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing the clock to it.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<(SimTime, EventHandle, E)> {
        while let Some(Reverse((at, seq))) = self.heap.peek().copied() {
            if at > t_end {
                return None;
            }
            self.heap.pop();
            if let Some(ev) = self.pending.remove(&seq) {
                debug_assert!(at >= self.now);
                self.now = at;
                self.executed += 1;
                return Some((at, EventHandle(seq), ev));
            }
        }
        None
    }

    /// Moves the clock forward without executing anything. Never moves it back.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Executes every event due by `t_end` in order, then sets the clock to `t_end`.
    /// Returns how many events ran.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimTime, E),
    {
        let mut count = 0;
        while let Some((at, _, ev)) = self.pop_due(t_end) {
            handler(self, at, ev);
            count += 1;
        }
        self.advance_to(t_end);
        count
    }
}

/// Purpose tag of an RNG stream; the discriminant is the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Placement = 0,
    Mobility = 1,
    Traffic = 2,
    AdversaryAssignment = 3,
    Medium = 4,
    Adversary = 5,
}

impl StreamLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Placement => "placement",
            StreamLabel::Mobility => "mobility",
            StreamLabel::Traffic => "traffic",
            StreamLabel::AdversaryAssignment => "adversary-assignment",
            StreamLabel::Medium => "medium",
            StreamLabel::Adversary => "adversary",
        }
    }
}

/// Algorithm identity written into STAT headers.
pub const RNG_ALGORITHM: &str = "chacha8(rand_chacha 0.9) seed_from_u64(root_seed) stream=label-index";

pub type RngStream = ChaCha8Rng;

/// Deterministic stream for `(root_seed, label)`. Streams with different
/// labels share a key but use disjoint ChaCha nonces.
pub fn derive_rng(root_seed: u64, label: StreamLabel) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(label as u64);
    rng
}
