//! Deterministic packet-level engine: a FIFO CHOKe+RED queue and the event
//! loop that drains it at link rate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

/// Flow 0 is the UDP aggregate; 1..=N are TCP flows.
pub type FlowId = u32;

pub const UDP_FLOW: FlowId = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub flow: FlowId,
    pub seq: u64,
    /// Bytes; constant 1000 in the default scenarios.
    pub size: u32,
    pub enqueue_time: f64,
}

/// RED dropping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedParams {
    pub min_th: u32,
    pub max_th: u32,
    pub max_p: f64,
    pub wq: f64,
    #[serde(default)]
    pub gentle: bool,
}

impl Default for RedParams {
    fn default() -> Self {
        // Thresholds 20/1000; classic values for the rest.
        Self {
            min_th: 20,
            max_th: 1000,
            max_p: 0.1,
            wq: 0.002,
            gentle: false,
        }
    }
}

impl RedParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_th > 0 && self.min_th < self.max_th) {
            return Err(format!(
                "require 0 < min_th < max_th, got {}/{}",
                self.min_th, self.max_th
            ));
        }
        if !(self.max_p > 0.0 && self.max_p <= 1.0) {
            return Err(format!("max_p must lie in (0, 1], got {}", self.max_p));
        }
        if !(self.wq > 0.0 && self.wq < 1.0) {
            return Err(format!("wq must lie in (0, 1), got {}", self.wq));
        }
        Ok(())
    }
}

/// Drop probability for the current queue-length average: zero below min_th,
/// linear ramp to max_p at max_th, then 1 (or a second ramp to 1 at
/// 2*max_th in gentle mode).
pub fn red_drop_probability(avg_q: f64, red: &RedParams) -> f64 {
    let min_th = f64::from(red.min_th);
    let max_th = f64::from(red.max_th);
    if avg_q < min_th {
        0.0
    } else if avg_q < max_th {
        red.max_p * (avg_q - min_th) / (max_th - min_th)
    } else if red.gentle && avg_q < 2.0 * max_th {
        red.max_p + (1.0 - red.max_p) * (avg_q - max_th) / max_th
    } else {
        1.0
    }
}

/// Relative order of the CHOKe match test and the RED test on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropOrder {
    /// Match test first (the scheme as described).
    #[default]
    ChokeThenRed,
    /// RED test first (the ordering the analytic models assume).
    RedThenChoke,
}

/// What happened to an arriving packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    /// Matched a buffered packet of the same flow; both were dropped.
    ChokeMatched { victim_seq: u64 },
    RedDropped,
    OverflowDropped,
}

/// Per-flow event counters. All identities over these are exact integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub arrivals: u64,
    pub admitted: u64,
    pub red_dropped: u64,
    /// Arriving packets dropped because they matched a buffered one.
    pub choke_self_dropped: u64,
    /// Buffered packets removed as the matched victim.
    pub choke_victim_dropped: u64,
    pub overflow_dropped: u64,
    pub transmitted: u64,
}

/// FIFO buffer with CHOKe matching and RED dropping.
///
/// Victim removal tombstones the slot so mid-queue drops stay O(1); the
/// buffer is compacted lazily once tombstones outnumber live packets.
#[derive(Debug, Clone)]
pub struct ChokeQueue {
    slots: VecDeque<Option<Packet>>,
    live: usize,
    live_udp: usize,
    tombstones: usize,
    capacity: usize,
    pub red: RedParams,
    pub drop_order: DropOrder,
    avg_q: f64,
    counters: Vec<FlowCounters>,
    rng: ChaCha8Rng,
}

impl ChokeQueue {
    pub fn new(
        capacity: usize,
        red: RedParams,
        drop_order: DropOrder,
        n_flows: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            slots: VecDeque::with_capacity(capacity + 1),
            live: 0,
            live_udp: 0,
            tombstones: 0,
            capacity,
            red,
            drop_order,
            avg_q: 0.0,
            counters: vec![FlowCounters::default(); n_flows],
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn udp_len(&self) -> usize {
        self.live_udp
    }

    pub fn avg_q(&self) -> f64 {
        self.avg_q
    }

    pub fn counters(&self) -> &[FlowCounters] {
        &self.counters
    }

    /// Uniform random draw among the live packets.
    fn draw_victim_index(&mut self) -> usize {
        debug_assert!(self.live > 0);
        loop {
            let idx = self.rng.gen_range(0..self.slots.len());
            if self.slots[idx].is_some() {
                return idx;
            }
        }
    }

    fn remove_victim(&mut self, idx: usize) -> Packet {
        let victim = self.slots[idx].take().expect("victim slot is live");
        self.live -= 1;
        self.tombstones += 1;
        if victim.flow == UDP_FLOW {
            self.live_udp -= 1;
        }
        if self.tombstones > self.live.max(16) {
            self.slots.retain(Option::is_some);
            self.tombstones = 0;
        }
        victim
    }

    /// CHOKe match trial for an arriving packet. Returns the victim when the
    /// draw hits the same flow. The arriving packet itself is not a
    /// candidate; the draw is over buffered packets only.
    fn choke_trial(&mut self, flow: FlowId) -> Option<Packet> {
        if self.live == 0 {
            return None;
        }
        let idx = self.draw_victim_index();
        let hit = self.slots[idx].as_ref().map(|p| p.flow) == Some(flow);
        hit.then(|| self.remove_victim(idx))
    }

    fn red_trial(&mut self) -> bool {
        let p = red_drop_probability(self.avg_q, &self.red);
        p > 0.0 && self.rng.gen::<f64>() < p
    }

    /// Offer an arriving packet to the queue.
    pub fn enqueue(&mut self, p: Packet) -> Admission {
        let flow = p.flow;
        self.counters[flow as usize].arrivals += 1;
        // Standard RED: queue average updated on every arrival.
        self.avg_q = (1.0 - self.red.wq) * self.avg_q + self.red.wq * self.live as f64;

        let outcome = match self.drop_order {
            DropOrder::ChokeThenRed => {
                if let Some(victim) = self.choke_trial(flow) {
                    Admission::ChokeMatched {
                        victim_seq: victim.seq,
                    }
                } else if self.red_trial() {
                    Admission::RedDropped
                } else if self.live >= self.capacity {
                    Admission::OverflowDropped
                } else {
                    Admission::Admitted
                }
            }
            DropOrder::RedThenChoke => {
                if self.red_trial() {
                    Admission::RedDropped
                } else if let Some(victim) = self.choke_trial(flow) {
                    Admission::ChokeMatched {
                        victim_seq: victim.seq,
                    }
                } else if self.live >= self.capacity {
                    Admission::OverflowDropped
                } else {
                    Admission::Admitted
                }
            }
        };

        let c = &mut self.counters[flow as usize];
        match outcome {
            Admission::Admitted => {
                c.admitted += 1;
                if flow == UDP_FLOW {
                    self.live_udp += 1;
                }
                self.live += 1;
                self.slots.push_back(Some(p));
            }
            Admission::ChokeMatched { .. } => {
                c.choke_self_dropped += 1;
                // Victim is the same flow by definition of a match.
                c.choke_victim_dropped += 1;
            }
            Admission::RedDropped => c.red_dropped += 1,
            Admission::OverflowDropped => c.overflow_dropped += 1,
        }
        outcome
    }

    /// Append a packet bypassing admission, for building known queue states.
    #[cfg(test)]
    pub(crate) fn push_raw(&mut self, p: Packet) {
        self.slots.push_back(Some(p));
        self.live += 1;
        if p.flow == UDP_FLOW {
            self.live_udp += 1;
        }
    }

    /// Remove the newest live packet, for test bookkeeping.
    #[cfg(test)]
    pub(crate) fn pop_tail(&mut self) -> Option<Packet> {
        while let Some(slot) = self.slots.pop_back() {
            match slot {
                Some(p) => {
                    self.live -= 1;
                    if p.flow == UDP_FLOW {
                        self.live_udp -= 1;
                    }
                    return Some(p);
                }
                None => self.tombstones -= 1,
            }
        }
        None
    }

    /// Remove and return the head-of-line packet.
    pub fn dequeue(&mut self) -> Option<Packet> {
        while let Some(slot) = self.slots.pop_front() {
            match slot {
                Some(p) => {
                    self.live -= 1;
                    if p.flow == UDP_FLOW {
                        self.live_udp -= 1;
                    }
                    self.counters[p.flow as usize].transmitted += 1;
                    return Some(p);
                }
                None => self.tombstones -= 1,
            }
        }
        None
    }

    /// Instantaneous totals plus the tail-to-head UDP occupancy map.
    pub fn snapshot(&self) -> QueueSnapshot {
        let b = self.live;
        let b0 = self.live_udp;
        // Slots run head (front) to tail (back); report tail to head.
        let udp_by_slot = self
            .slots
            .iter()
            .rev()
            .filter_map(|s| s.as_ref().map(|p| p.flow == UDP_FLOW))
            .collect();
        QueueSnapshot {
            b,
            b0,
            h0: if b > 0 { b0 as f64 / b as f64 } else { 0.0 },
            udp_by_slot,
        }
    }
}

/// Instantaneous queue state.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSnapshot {
    pub b: usize,
    pub b0: usize,
    pub h0: f64,
    /// One entry per buffered packet, index 0 = tail, true = UDP.
    pub udp_by_slot: Vec<bool>,
}

/// Ordered pending-event set with deterministic same-time ordering.
#[derive(Debug)]
pub struct EventLoop<E> {
    clock: f64,
    next_id: u64,
    heap: BinaryHeap<Scheduled<E>>,
}

#[derive(Debug)]
struct Scheduled<E> {
    time: f64,
    id: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.id == other.id
    }
}
impl<E> Eq for Scheduled<E> {}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (time, insertion id).
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.id.cmp(&self.id))
    }
}
impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> EventLoop<E> {
    pub fn new() -> Self {
        Self {
            clock: 0.0,
            next_id: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn schedule(&mut self, time: f64, event: E) {
        debug_assert!(time >= self.clock, "cannot schedule into the past");
        let id = self.next_id;
        self.next_id += 1;
        self.heap.push(Scheduled { time, id, event });
    }

    /// Pop the next event, advancing the clock to its firing time.
    pub fn next(&mut self) -> Option<(f64, E)> {
        let s = self.heap.pop()?;
        self.clock = s.time;
        Some((s.time, s.event))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|s| s.time)
    }
}

impl<E> Default for EventLoop<E> {
    fn default() -> Self {
        Self::new()
    }
}
