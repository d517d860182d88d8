//! Packet sources: a piecewise constant-rate UDP schedule and a window-based
//! ACK-clocked TCP abstraction (slow start + AIMD, one halving per window).

use serde::{Deserialize, Serialize};

/// One constant-rate segment of the UDP schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UdpSegment {
    /// Segment start, seconds.
    pub start: f64,
    /// Arrival rate as a multiple of link capacity.
    pub rate: f64,
}

/// Piecewise-constant UDP arrival schedule with strictly periodic gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UdpSchedule {
    pub segments: Vec<UdpSegment>,
}

impl UdpSchedule {
    pub fn constant(rate: f64) -> Self {
        Self {
            segments: vec![UdpSegment { start: 0.0, rate }],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for w in self.segments.windows(2) {
            if w[1].start <= w[0].start {
                return Err("segment start times must be strictly increasing".into());
            }
        }
        if self.segments.iter().any(|s| s.rate < 0.0 || !s.rate.is_finite()) {
            return Err("segment rates must be finite and nonnegative".into());
        }
        Ok(())
    }

    fn segment_index_at(&self, t: f64) -> Option<usize> {
        // Last segment whose start is <= t.
        self.segments
            .iter()
            .rposition(|s| s.start <= t)
    }

    /// Rate (as a multiple of C) in force at time `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.segment_index_at(t)
            .map_or(0.0, |i| self.segments[i].rate)
    }

    /// First arrival time strictly after `now`, given link capacity in
    /// packets/second, or `None` when no further arrivals exist.
    ///
    /// Within a segment of rate x, arrivals sit at start + k/(x*C); the
    /// phase resets at every segment boundary, so a segment of duration d
    /// carries round(x*C*d) arrivals.
    pub fn next_arrival(&self, now: f64, capacity: f64) -> Option<f64> {
        let mut idx = match self.segment_index_at(now) {
            Some(i) => i,
            None => {
                // Before the schedule begins.
                let first = self.segments.first()?;
                if first.rate > 0.0 && first.start > now {
                    return Some(first.start);
                }
                0
            }
        };
        loop {
            let seg = self.segments.get(idx)?;
            let end = self
                .segments
                .get(idx + 1)
                .map_or(f64::INFINITY, |s| s.start);
            if seg.rate > 0.0 {
                let gap = 1.0 / (seg.rate * capacity);
                let candidate = if now < seg.start {
                    seg.start
                } else {
                    let mut k = ((now - seg.start) / gap).floor() as u64 + 1;
                    // Float rounding can land the candidate on `now` itself;
                    // the next arrival must be strictly later.
                    while seg.start + k as f64 * gap <= now {
                        k += 1;
                    }
                    seg.start + k as f64 * gap
                };
                if candidate < end {
                    return Some(candidate);
                }
            }
            idx += 1;
            self.segments.get(idx)?;
        }
    }
}

/// TCP congestion phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpPhase {
    SlowStart,
    CongestionAvoidance,
    Recovery,
}

/// Window-based sender state for one TCP flow.
#[derive(Debug, Clone)]
pub struct TcpFlowState {
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Base two-way latency, seconds (without queueing).
    pub rtt_base: f64,
    pub in_flight: u32,
    pub phase: TcpPhase,
    pub next_seq: u64,
    /// Sequence high-water mark at the loss that opened the current
    /// recovery episode; acks beyond it close the episode.
    recovery_end: u64,
}

impl TcpFlowState {
    pub fn new(rtt_base: f64, initial_ssthresh: f64) -> Self {
        Self {
            cwnd: 1.0,
            ssthresh: initial_ssthresh,
            rtt_base,
            in_flight: 0,
            phase: TcpPhase::SlowStart,
            next_seq: 0,
            recovery_end: 0,
        }
    }

    /// Whether the window admits another packet in flight.
    pub fn can_send(&self) -> bool {
        f64::from(self.in_flight) < self.cwnd.ceil()
    }

    /// Register a packet handed to the network; returns its sequence number.
    pub fn on_send(&mut self) -> u64 {
        debug_assert!(self.can_send());
        self.in_flight += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    /// Process a delivery acknowledgment for `seq`.
    pub fn on_ack(&mut self, seq: u64) {
        self.in_flight = self.in_flight.saturating_sub(1);
        if self.phase == TcpPhase::Recovery {
            if seq >= self.recovery_end {
                self.phase = if self.cwnd < self.ssthresh {
                    TcpPhase::SlowStart
                } else {
                    TcpPhase::CongestionAvoidance
                };
            } else {
                return; // no growth while recovering
            }
        }
        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0; // slow start: doubles per RTT
            if self.cwnd >= self.ssthresh {
                self.phase = TcpPhase::CongestionAvoidance;
            }
        } else {
            self.cwnd += 1.0 / self.cwnd; // additive increase per RTT
        }
    }

    /// Process a loss signal for `seq`. At most one multiplicative decrease
    /// per window of data.
    pub fn on_loss(&mut self, seq: u64) {
        self.in_flight = self.in_flight.saturating_sub(1);
        if self.phase == TcpPhase::Recovery && seq < self.recovery_end {
            return;
        }
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = self.ssthresh;
        self.phase = TcpPhase::Recovery;
        self.recovery_end = self.next_seq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate_gap() {
        let sched = UdpSchedule::constant(1.0);
        let t1 = sched.next_arrival(0.0, 2500.0).unwrap();
        assert!((t1 - 0.0004).abs() < 1e-12);
        let t2 = sched.next_arrival(t1, 2500.0).unwrap();
        assert!((t2 - 0.0008).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_segment_has_no_arrivals() {
        let sched = UdpSchedule {
            segments: vec![
                UdpSegment { start: 0.0, rate: 1.0 },
                UdpSegment { start: 0.25, rate: 0.0 },
                UdpSegment { start: 0.5, rate: 1.0 },
            ],
        };
        let mut t = 0.2499;
        let next = sched.next_arrival(t, 2500.0).unwrap();
        assert_eq!(next, 0.5, "silent segment skipped to next start");
        // Count arrivals inside the silent window.
        let mut n = 0;
        t = 0.25;
        while let Some(next) = sched.next_arrival(t, 2500.0) {
            if next >= 0.5 {
                break;
            }
            n += 1;
            t = next;
        }
        assert_eq!(n, 0);
    }

    #[test]
    fn flap_segment_counts() {
        // 1C / 10C flapping every 250 ms: 625 vs 6250 packets per segment.
        let sched = UdpSchedule {
            segments: vec![
                UdpSegment { start: 0.0, rate: 1.0 },
                UdpSegment { start: 0.25, rate: 10.0 },
                UdpSegment { start: 0.5, rate: 1.0 },
            ],
        };
        let mut counts = [0u32; 2];
        let mut t = -1.0;
        while let Some(next) = sched.next_arrival(t, 2500.0) {
            if next >= 0.5 {
                break;
            }
            counts[if next < 0.25 { 0 } else { 1 }] += 1;
            t = next;
        }
        assert_eq!(counts, [625, 6250]);
    }

    #[test]
    fn slow_start_doubles_per_ack() {
        let mut f = TcpFlowState::new(0.002, 64.0);
        let seq = f.on_send();
        assert_eq!(f.in_flight, 1);
        f.on_ack(seq);
        assert_eq!(f.cwnd, 2.0);
        assert_eq!(f.in_flight, 0);
    }

    #[test]
    fn loss_halves_window_once_per_episode() {
        let mut f = TcpFlowState::new(0.002, 64.0);
        f.cwnd = 10.0;
        f.ssthresh = 64.0;
        let seqs: Vec<u64> = (0..10).map(|_| f.on_send()).collect();
        f.on_loss(seqs[0]);
        assert_eq!(f.cwnd, 5.0);
        assert_eq!(f.ssthresh, 5.0);
        assert_eq!(f.phase, TcpPhase::Recovery);
        // A second loss from the same window must not halve again.
        f.on_loss(seqs[1]);
        assert_eq!(f.cwnd, 5.0);
    }

    #[test]
    fn in_flight_never_exceeds_window() {
        let mut f = TcpFlowState::new(0.002, 8.0);
        for _ in 0..100 {
            while f.can_send() {
                f.on_send();
            }
            assert!(f64::from(f.in_flight) <= f.cwnd.ceil());
            let seq = f.next_seq - 1;
            f.on_ack(seq);
        }
    }
}
