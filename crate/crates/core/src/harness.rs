//! Scenario execution and model-vs-simulation comparison.
//!
//! A [`Scenario`] describes one experiment (link, queue, TCP population, UDP
//! schedule, measurement windows, replication count). [`run_replications`]
//! executes it deterministically and aggregates windowed traces across
//! replications; [`transient_comparison`] and [`spatial_comparison`] hold the
//! simulated traces against the analytic models.

use crate::analytic::{
    self, AnalyticError, DerivedCoefficients, SteadyInput, SteadyStatePoint,
};
use crate::simcore::{
    Admission, ChokeQueue, DropOrder, EventLoop, FlowCounters, Packet, RedParams, UDP_FLOW,
};
use crate::traffic::{TcpFlowState, UdpSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("change time {0} does not coincide with a UDP segment boundary inside the run")]
    ChangeTime(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_ssthresh() -> f64 {
    64.0
}
fn default_rtt_base() -> f64 {
    0.002
}
fn default_start_spread() -> f64 {
    2.0
}
fn default_packet_size() -> u32 {
    1000
}
fn default_window() -> f64 {
    0.01
}
fn default_replications() -> u32 {
    1
}

/// Complete experiment description. JSON scenario files mirror this struct;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of TCP flows.
    pub n: u32,
    /// Link capacity, packets/second.
    pub c: f64,
    /// Buffer capacity, packets.
    pub capacity: u32,
    #[serde(default)]
    pub red: RedParams,
    #[serde(default)]
    pub drop_order: DropOrder,
    pub udp: UdpSchedule,
    /// Simulated duration, seconds.
    pub duration: f64,
    /// Warm-up discarded from steady metrics, seconds.
    pub warmup: f64,
    /// Measurement window, seconds.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Initial slow-start threshold, packets.
    #[serde(default = "default_ssthresh")]
    pub tcp_ssthresh: f64,
    /// Base two-way latency before queueing, seconds. Per-flow values are
    /// jittered uniformly in [0.9, 1.1] of this to desynchronize flows.
    #[serde(default = "default_rtt_base")]
    pub tcp_rtt_base: f64,
    /// TCP flows start uniformly on [0, spread] seconds.
    #[serde(default = "default_start_spread")]
    pub tcp_start_spread: f64,
    /// Packet size, bytes.
    #[serde(default = "default_packet_size")]
    pub packet_size: u32,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::InvalidScenario(m));
        if !(self.duration > self.warmup) {
            return fail(format!(
                "duration {} must exceed warmup {}",
                self.duration, self.warmup
            ));
        }
        if !(self.window > 0.0) {
            return fail(format!("window must be positive, got {}", self.window));
        }
        if self.replications < 1 {
            return fail("replications must be at least 1".into());
        }
        if !(self.c > 0.0) {
            return fail(format!("capacity c must be positive, got {}", self.c));
        }
        if self.capacity == 0 {
            return fail("buffer capacity must be positive".into());
        }
        self.red.validate().map_err(HarnessError::InvalidScenario)?;
        self.udp.validate().map_err(HarnessError::InvalidScenario)?;
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        let sc: Scenario = serde_json::from_str(s)
            .map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    fn n_windows(&self) -> usize {
        (self.duration / self.window).round().max(1.0) as usize
    }
}

/// Per-window measurements from one replication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WindowRow {
    /// Window end time, seconds.
    pub t: f64,
    /// UDP link utilization in the window.
    pub mu0: f64,
    /// Aggregate TCP utilization in the window.
    pub mu_tcp: f64,
    /// Backlog at the window end, packets.
    pub b: u32,
    /// UDP backlog at the window end, packets.
    pub b0: u32,
    /// b0/b (0 when the queue is empty).
    pub h0: f64,
    pub arrivals: u64,
    pub udp_arrivals: u64,
    pub red_drops: u64,
    /// Sum and count of TCP sojourn times completed in the window.
    pub tcp_sojourn_sum: f64,
    pub tcp_sojourn_count: u64,
}

/// Windowed time series plus final counters for one replication.
#[derive(Debug, Clone)]
pub struct Trace {
    pub window: f64,
    pub rows: Vec<WindowRow>,
    pub counters: Vec<FlowCounters>,
    /// (time, b, b0) captured at each UDP segment boundary.
    pub boundary_snapshots: Vec<(f64, u32, u32)>,
    /// Relative-position UDP occupancy accumulated at the spatial sample
    /// times: (udp hits, total packets) per bin, tail first.
    pub spatial_bins: Vec<(u64, u64)>,
}

/// Central-difference derivative estimates per window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRow {
    pub t: f64,
    pub db_dt: f64,
    pub db0_dt: f64,
    pub db1_dt: f64,
}

pub const SPATIAL_BINS: usize = 20;

impl Trace {
    /// db/dt, db0/dt and db1/dt by central differences over the window grid.
    pub fn derivatives(&self) -> Vec<DerivativeRow> {
        derivative_series(self.window, &self.rows, |r| {
            (f64::from(r.b), f64::from(r.b0))
        })
    }
}

fn derivative_series<R>(
    window: f64,
    rows: &[R],
    get: impl Fn(&R) -> (f64, f64),
) -> Vec<DerivativeRow> {
    let mut out = Vec::with_capacity(rows.len().saturating_sub(2));
    for i in 1..rows.len().saturating_sub(1) {
        let (b_prev, b0_prev) = get(&rows[i - 1]);
        let (b_next, b0_next) = get(&rows[i + 1]);
        let db_dt = (b_next - b_prev) / (2.0 * window);
        let db0_dt = (b0_next - b0_prev) / (2.0 * window);
        out.push(DerivativeRow {
            t: (i as f64 + 1.0) * window,
            db_dt,
            db0_dt,
            db1_dt: db_dt - db0_dt,
        });
    }
    out
}

enum Ev {
    UdpArrival,
    TcpStart { flow: usize },
    TcpPacket { flow: usize, seq: u64 },
    Ack { flow: usize, seq: u64 },
    Loss { flow: usize, seq: u64 },
    Departure,
    Sample { window: usize },
    Boundary,
    Spatial,
}

struct Sim<'a> {
    sc: &'a Scenario,
    queue: ChokeQueue,
    flows: Vec<TcpFlowState>,
    events: EventLoop<Ev>,
    in_service: Option<Packet>,
    udp_seq: u64,
    rows: Vec<WindowRow>,
    boundary_snapshots: Vec<(f64, u32, u32)>,
    spatial_bins: Vec<(u64, u64)>,
    service_time: f64,
    log: Option<&'a mut dyn Write>,
}

impl<'a> Sim<'a> {
    fn new(
        sc: &'a Scenario,
        seed: u64,
        spatial_times: &[f64],
        log: Option<&'a mut dyn Write>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flows: Vec<TcpFlowState> = (0..sc.n)
            .map(|_| {
                let jitter = rng.gen_range(0.9..1.1);
                TcpFlowState::new(sc.tcp_rtt_base * jitter, sc.tcp_ssthresh)
            })
            .collect();
        let starts: Vec<f64> = (0..sc.n)
            .map(|_| rng.gen_range(0.0..sc.tcp_start_spread.max(f64::MIN_POSITIVE)))
            .collect();
        let queue = ChokeQueue::new(
            sc.capacity as usize,
            sc.red,
            sc.drop_order,
            sc.n as usize + 1,
            rng,
        );

        let mut events = EventLoop::new();
        for (i, &t) in starts.iter().enumerate() {
            if t <= sc.duration {
                events.schedule(t, Ev::TcpStart { flow: i });
            }
        }
        if let Some(t) = sc.udp.next_arrival(-1.0, sc.c) {
            if t <= sc.duration {
                events.schedule(t.max(0.0), Ev::UdpArrival);
            }
        }
        let n_windows = sc.n_windows();
        let mut rows = vec![WindowRow::default(); n_windows];
        for (i, row) in rows.iter_mut().enumerate() {
            row.t = (i as f64 + 1.0) * sc.window;
        }
        for i in 0..n_windows {
            events.schedule((i as f64 + 1.0) * sc.window, Ev::Sample { window: i });
        }
        for seg in sc.udp.segments.iter() {
            if seg.start > 0.0 && seg.start <= sc.duration {
                events.schedule(seg.start, Ev::Boundary);
            }
        }
        for &t in spatial_times {
            if t <= sc.duration {
                events.schedule(t, Ev::Spatial);
            }
        }

        Self {
            sc,
            queue,
            flows,
            events,
            in_service: None,
            udp_seq: 0,
            rows,
            boundary_snapshots: Vec::new(),
            spatial_bins: vec![(0, 0); SPATIAL_BINS],
            service_time: 1.0 / sc.c,
            log,
        }
    }

    fn log_line(&mut self, now: f64, what: &str, flow: usize, outcome: &str) {
        if let Some(w) = self.log.as_mut() {
            let _ = writeln!(w, "t={now:.9} ev={what} flow={flow} outcome={outcome}");
        }
    }

    fn window_of(&self, t: f64) -> usize {
        ((t / self.sc.window) as usize).min(self.rows.len() - 1)
    }

    fn maybe_start_service(&mut self, now: f64) {
        if self.in_service.is_none() {
            if let Some(p) = self.queue.dequeue() {
                self.in_service = Some(p);
                self.events.schedule(now + self.service_time, Ev::Departure);
            }
        }
    }

    fn handle_admission(&mut self, outcome: Admission, flow: usize, seq: u64, now: f64) {
        let w = self.window_of(now);
        self.rows[w].arrivals += 1;
        if flow == 0 {
            self.rows[w].udp_arrivals += 1;
        }
        if self.log.is_some() {
            let label = match outcome {
                Admission::Admitted => "admitted",
                Admission::RedDropped => "red_dropped",
                Admission::OverflowDropped => "overflow_dropped",
                Admission::ChokeMatched { .. } => "choke_matched",
            };
            self.log_line(now, "arrival", flow, label);
        }
        match outcome {
            Admission::Admitted => self.maybe_start_service(now),
            Admission::RedDropped => {
                self.rows[w].red_drops += 1;
                self.signal_loss(flow, seq, now);
            }
            Admission::OverflowDropped => self.signal_loss(flow, seq, now),
            Admission::ChokeMatched { victim_seq } => {
                // Both casualties belong to the same flow.
                self.signal_loss(flow, seq, now);
                self.signal_loss(flow, victim_seq, now);
            }
        }
    }

    /// Let a TCP source learn about a lost packet one base RTT later.
    fn signal_loss(&mut self, flow: usize, seq: u64, now: f64) {
        if flow == 0 {
            return;
        }
        let rtt = self.flows[flow - 1].rtt_base;
        self.events.schedule(now + rtt, Ev::Loss { flow, seq });
    }

    /// Send as much as the flow's window allows; packets reach the queue one
    /// forward latency later.
    fn pump_flow(&mut self, flow: usize, now: f64) {
        let f = &mut self.flows[flow - 1];
        let fwd = f.rtt_base / 2.0;
        while f.can_send() {
            let seq = f.on_send();
            self.events.schedule(now + fwd, Ev::TcpPacket { flow, seq });
        }
    }

    fn record_spatial(&mut self) {
        let snap = self.queue.snapshot();
        if snap.b == 0 {
            return;
        }
        for (pos, &is_udp) in snap.udp_by_slot.iter().enumerate() {
            let bin = pos * SPATIAL_BINS / snap.b;
            let bin = bin.min(SPATIAL_BINS - 1);
            self.spatial_bins[bin].1 += 1;
            if is_udp {
                self.spatial_bins[bin].0 += 1;
            }
        }
    }

    fn run(mut self) -> Trace {
        let duration = self.sc.duration;
        while let Some((now, ev)) = self.events.next() {
            if now > duration {
                break;
            }
            match ev {
                Ev::UdpArrival => {
                    let p = Packet {
                        flow: UDP_FLOW,
                        seq: self.udp_seq,
                        size: self.sc.packet_size,
                        enqueue_time: now,
                    };
                    self.udp_seq += 1;
                    let outcome = self.queue.enqueue(p);
                    self.handle_admission(outcome, 0, p.seq, now);
                    if let Some(t) = self.sc.udp.next_arrival(now, self.sc.c) {
                        if t <= duration {
                            self.events.schedule(t, Ev::UdpArrival);
                        }
                    }
                }
                Ev::TcpStart { flow } => self.pump_flow(flow + 1, now),
                Ev::TcpPacket { flow, seq } => {
                    let p = Packet {
                        flow: flow as u32,
                        seq,
                        size: self.sc.packet_size,
                        enqueue_time: now,
                    };
                    let outcome = self.queue.enqueue(p);
                    self.handle_admission(outcome, flow, seq, now);
                }
                Ev::Ack { flow, seq } => {
                    self.flows[flow - 1].on_ack(seq);
                    self.pump_flow(flow, now);
                }
                Ev::Loss { flow, seq } => {
                    self.flows[flow - 1].on_loss(seq);
                    self.pump_flow(flow, now);
                }
                Ev::Departure => {
                    let p = self.in_service.take().expect("departure without service");
                    if self.log.is_some() {
                        let outcome = format!("transmitted seq={}", p.seq);
                        self.log_line(now, "departure", p.flow as usize, &outcome);
                    }
                    let w = self.window_of(now);
                    if p.flow == UDP_FLOW {
                        self.rows[w].mu0 += 1.0; // packet counts; scaled later
                    } else {
                        self.rows[w].mu_tcp += 1.0;
                        self.rows[w].tcp_sojourn_sum += now - p.enqueue_time;
                        self.rows[w].tcp_sojourn_count += 1;
                        let rtt = self.flows[p.flow as usize - 1].rtt_base;
                        self.events.schedule(
                            now + rtt / 2.0,
                            Ev::Ack {
                                flow: p.flow as usize,
                                seq: p.seq,
                            },
                        );
                    }
                    self.maybe_start_service(now);
                }
                Ev::Sample { window } => {
                    let row = &mut self.rows[window];
                    row.b = self.queue.len() as u32;
                    row.b0 = self.queue.udp_len() as u32;
                    row.h0 = if row.b > 0 {
                        f64::from(row.b0) / f64::from(row.b)
                    } else {
                        0.0
                    };
                }
                Ev::Boundary => {
                    self.boundary_snapshots.push((
                        now,
                        self.queue.len() as u32,
                        self.queue.udp_len() as u32,
                    ));
                }
                Ev::Spatial => self.record_spatial(),
            }
        }
        // Packet counts -> utilizations.
        let scale = 1.0 / (self.sc.c * self.sc.window);
        for row in &mut self.rows {
            row.mu0 *= scale;
            row.mu_tcp *= scale;
        }
        let counters = self.queue.counters().to_vec();
        Trace {
            window: self.sc.window,
            rows: self.rows,
            counters,
            boundary_snapshots: self.boundary_snapshots,
            spatial_bins: self.spatial_bins,
        }
    }
}

/// Execute one replication with the given seed.
pub fn run_once(sc: &Scenario, seed: u64, spatial_times: &[f64]) -> Trace {
    Sim::new(sc, seed, spatial_times, None).run()
}

/// Execute one replication while emitting a line-delimited event log
/// (time, event, flow, outcome) to the given writer.
pub fn run_once_logged(
    sc: &Scenario,
    seed: u64,
    spatial_times: &[f64],
    log: &mut dyn Write,
) -> Trace {
    Sim::new(sc, seed, spatial_times, Some(log)).run()
}

/// How many packets of each flow are still inside the simulator at cutoff
/// (buffered plus in service). Exposed for the conservation identity.
pub fn residual_in_system(sc: &Scenario, trace: &Trace) -> Vec<u64> {
    let mut residual = vec![0u64; sc.n as usize + 1];
    for (flow, c) in trace.counters.iter().enumerate() {
        residual[flow] = c.admitted - c.transmitted - c.choke_victim_dropped;
    }
    residual
}

/// Windowed mean and standard error across replications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AggRow {
    pub t: f64,
    pub mu0_mean: f64,
    pub mu0_stderr: f64,
    pub mu_tcp_mean: f64,
    pub b_mean: f64,
    pub b0_mean: f64,
    pub h0_mean: f64,
    pub udp_arrivals_mean: f64,
    pub arrivals_mean: f64,
    pub red_drops_mean: f64,
    pub tcp_sojourn_mean: f64,
}

/// Aggregated trace over all replications of a scenario.
#[derive(Debug, Clone)]
pub struct AggregatedTrace {
    pub window: f64,
    pub warmup: f64,
    pub rows: Vec<AggRow>,
    /// Counter totals summed over replications.
    pub counters: Vec<FlowCounters>,
    /// Mean (b, b0) per UDP segment boundary, aligned with the per-rep
    /// boundary snapshot order.
    pub boundary_means: Vec<(f64, f64, f64)>,
    pub spatial_bins: Vec<(u64, u64)>,
    pub replications: u32,
}

impl AggregatedTrace {
    /// Mean UDP utilization over all windows after warmup.
    pub fn steady_mu0(&self) -> f64 {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.t > self.warmup).collect();
        rows.iter().map(|r| r.mu0_mean).sum::<f64>() / rows.len().max(1) as f64
    }

    pub fn derivatives(&self) -> Vec<DerivativeRow> {
        derivative_series(self.window, &self.rows, |r| (r.b_mean, r.b0_mean))
    }

    /// Write the aggregate as CSV, one row per window.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,mu0,mu0_stderr,mu_tcp,b,b0,h0,udp_arrivals,arrivals,red_drops,tcp_sojourn"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.mu0_mean,
                r.mu0_stderr,
                r.mu_tcp_mean,
                r.b_mean,
                r.b0_mean,
                r.h0_mean,
                r.udp_arrivals_mean,
                r.arrivals_mean,
                r.red_drops_mean,
                r.tcp_sojourn_mean
            )?;
        }
        Ok(())
    }
}

/// Run all replications (seeds base_seed, base_seed+1, ...) and aggregate on
/// the common window grid. Deterministic for a given base seed.
pub fn run_replications(sc: &Scenario) -> Result<AggregatedTrace, HarnessError> {
    run_replications_sampled(sc, &[])
}

/// Same as [`run_replications`] with extra spatial snapshot times.
pub fn run_replications_sampled(
    sc: &Scenario,
    spatial_times: &[f64],
) -> Result<AggregatedTrace, HarnessError> {
    sc.validate()?;
    let traces: Vec<Trace> = (0..sc.replications)
        .into_par_iter()
        .map(|rep| run_once(sc, sc.base_seed + u64::from(rep), spatial_times))
        .collect();
    Ok(aggregate(sc, &traces))
}

fn aggregate(sc: &Scenario, traces: &[Trace]) -> AggregatedTrace {
    let n = traces.len() as f64;
    let n_windows = traces[0].rows.len();
    let mut rows = vec![AggRow::default(); n_windows];
    for (i, row) in rows.iter_mut().enumerate() {
        row.t = traces[0].rows[i].t;
        let mut mu0_sq = 0.0;
        for tr in traces {
            let r = &tr.rows[i];
            row.mu0_mean += r.mu0;
            mu0_sq += r.mu0 * r.mu0;
            row.mu_tcp_mean += r.mu_tcp;
            row.b_mean += f64::from(r.b);
            row.b0_mean += f64::from(r.b0);
            row.h0_mean += r.h0;
            row.udp_arrivals_mean += r.udp_arrivals as f64;
            row.arrivals_mean += r.arrivals as f64;
            row.red_drops_mean += r.red_drops as f64;
            if r.tcp_sojourn_count > 0 {
                row.tcp_sojourn_mean += r.tcp_sojourn_sum / r.tcp_sojourn_count as f64;
            }
        }
        row.mu0_mean /= n;
        row.mu_tcp_mean /= n;
        row.b_mean /= n;
        row.b0_mean /= n;
        row.h0_mean /= n;
        row.udp_arrivals_mean /= n;
        row.arrivals_mean /= n;
        row.red_drops_mean /= n;
        row.tcp_sojourn_mean /= n;
        if n > 1.0 {
            let var = (mu0_sq / n - row.mu0_mean * row.mu0_mean).max(0.0);
            row.mu0_stderr = (var / (n - 1.0)).sqrt();
        }
    }

    let mut counters = vec![FlowCounters::default(); sc.n as usize + 1];
    for tr in traces {
        for (agg, c) in counters.iter_mut().zip(&tr.counters) {
            agg.arrivals += c.arrivals;
            agg.admitted += c.admitted;
            agg.red_dropped += c.red_dropped;
            agg.choke_self_dropped += c.choke_self_dropped;
            agg.choke_victim_dropped += c.choke_victim_dropped;
            agg.overflow_dropped += c.overflow_dropped;
            agg.transmitted += c.transmitted;
        }
    }

    let n_boundaries = traces[0].boundary_snapshots.len();
    let mut boundary_means = vec![(0.0, 0.0, 0.0); n_boundaries];
    for tr in traces {
        for (i, &(t, b, b0)) in tr.boundary_snapshots.iter().enumerate() {
            boundary_means[i].0 = t;
            boundary_means[i].1 += f64::from(b) / n;
            boundary_means[i].2 += f64::from(b0) / n;
        }
    }

    let mut spatial_bins = vec![(0u64, 0u64); SPATIAL_BINS];
    for tr in traces {
        for (agg, &(udp, total)) in spatial_bins.iter_mut().zip(&tr.spatial_bins) {
            agg.0 += udp;
            agg.1 += total;
        }
    }

    AggregatedTrace {
        window: sc.window,
        warmup: sc.warmup,
        rows,
        counters,
        boundary_means,
        spatial_bins,
        replications: sc.replications,
    }
}

/// Per-window residual of the rate-conservation balance
/// db0/dt = x0(t)(1 - r)(1 - 2 h0(t)) - mu0(t) C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub t: f64,
    pub db0_dt: f64,
    pub residual: f64,
    /// Absolute UDP arrival rate at this window, packets/second.
    pub x0: f64,
    /// Window classified as steady (post-warmup, |db0/dt| small).
    pub steady: bool,
}

pub fn rate_conservation_residual(trace: &AggregatedTrace, sc: &Scenario) -> Vec<ResidualRow> {
    let derivs = trace.derivatives();
    derivs
        .iter()
        .map(|d| {
            let i = (d.t / trace.window).round() as usize - 1;
            let row = &trace.rows[i];
            let x0 = sc.udp.rate_at(d.t - 0.5 * trace.window) * sc.c;
            let r_hat = if row.arrivals_mean > 0.0 {
                row.red_drops_mean / row.arrivals_mean
            } else {
                0.0
            };
            let predicted = x0 * (1.0 - r_hat) * (1.0 - 2.0 * row.h0_mean) - row.mu0_mean * sc.c;
            ResidualRow {
                t: d.t,
                db0_dt: d.db0_dt,
                residual: d.db0_dt - predicted,
                x0,
                steady: d.t > sc.warmup && d.db0_dt.abs() < 0.1 * x0.max(0.05 * sc.c),
            }
        })
        .collect()
}

/// Model-vs-simulation transient comparison around one rate change.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub change_time: f64,
    /// Rate before and after the change, multiples of C.
    pub x0_norm: f64,
    pub x02_norm: f64,
    pub alpha: f64,
    /// Backlog fed to the model: mean simulated backlog at the change.
    pub b_snapshot: u32,
    pub steady: SteadyStatePoint,
    pub tau_b: f64,
    /// (dT, model mu0, simulated mean mu0, simulated stderr) per window.
    pub curve: Vec<(f64, f64, f64, f64)>,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// Extreme utilization: analytic prediction vs simulated peak or dip.
    pub model_extreme: f64,
    pub sim_extreme: f64,
}

impl ComparisonReport {
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dT,model_mu0,sim_mu0,sim_stderr")?;
        for (dt, model, sim, se) in &self.curve {
            writeln!(w, "{dt},{model},{sim},{se}")?;
        }
        Ok(())
    }
}

/// Run the scenario and compare the transient model against the simulated
/// utilization over [change_time, change_time + tau_b].
pub fn transient_comparison(
    sc: &Scenario,
    change_time: f64,
) -> Result<ComparisonReport, HarnessError> {
    let agg = run_replications(sc)?;
    compare_transient(sc, &agg, change_time)
}

/// Comparison against an already-computed aggregate.
pub fn compare_transient(
    sc: &Scenario,
    agg: &AggregatedTrace,
    change_time: f64,
) -> Result<ComparisonReport, HarnessError> {
    let seg_idx = sc
        .udp
        .segments
        .iter()
        .position(|s| (s.start - change_time).abs() < 1e-9)
        .filter(|&i| i > 0 && change_time < sc.duration)
        .ok_or(HarnessError::ChangeTime(change_time))?;
    let x0_norm = sc.udp.segments[seg_idx - 1].rate;
    let x02_norm = sc.udp.segments[seg_idx].rate;
    let alpha = if x0_norm > 0.0 { x02_norm / x0_norm } else { 0.0 };

    let b_snapshot = agg
        .boundary_means
        .iter()
        .find(|&&(t, _, _)| (t - change_time).abs() < 1e-9)
        .map(|&(_, b, _)| b.round() as u32)
        .ok_or(HarnessError::ChangeTime(change_time))?;

    let steady = analytic::solve_steady_state(
        SteadyInput::new(x0_norm, 0.0)?,
        analytic::DEFAULT_TOL,
    )?;
    let coeff = analytic::derive_coefficients(steady, b_snapshot.max(2), sc.c)?;
    let x02 = x02_norm * sc.c;

    let mut curve = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut sum_err = 0.0;
    for row in &agg.rows {
        let dt = row.t - change_time;
        if dt < 0.0 || dt > coeff.tau_b {
            continue;
        }
        let model = coeff.transient_utilization(x02, dt)?;
        let err = (model - row.mu0_mean).abs();
        max_err = max_err.max(err);
        sum_err += err;
        curve.push((dt, model, row.mu0_mean, row.mu0_stderr));
    }
    if curve.is_empty() {
        return Err(HarnessError::ChangeTime(change_time));
    }

    let model_extreme = coeff.extreme_utilization(alpha)?;
    let sim_extreme = if alpha < 1.0 {
        curve.iter().map(|c| c.2).fold(f64::MIN, f64::max)
    } else {
        curve.iter().map(|c| c.2).fold(f64::MAX, f64::min)
    };
    let mean_abs_error = sum_err / curve.len() as f64;
    Ok(ComparisonReport {
        change_time,
        x0_norm,
        x02_norm,
        alpha,
        b_snapshot,
        steady,
        tau_b: coeff.tau_b,
        curve,
        max_abs_error: max_err,
        mean_abs_error,
        model_extreme,
        sim_extreme,
    })
}

/// Binned positional UDP distribution vs the analytic spatial profile.
#[derive(Debug, Clone, Serialize)]
pub struct SpatialReport {
    pub x0_norm: f64,
    /// Mean simulated backlog at the sample times.
    pub b_mean: f64,
    /// Per bin, tail first: (relative position, simulated rho0, model rho0).
    pub bins: Vec<(f64, f64, f64)>,
    /// Mean absolute difference over populated bins.
    pub l1_distance: f64,
}

impl SpatialReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "position,sim_rho0,model_rho0")?;
        for (pos, sim, model) in &self.bins {
            writeln!(w, "{pos},{sim},{model}")?;
        }
        Ok(())
    }
}

/// Invert the position formula: rho0 at queue slot y, by bisection on the
/// monotone closed-form y(rho0).
fn rho0_at_y(coeff: &DerivedCoefficients, y: f64) -> Result<f64, AnalyticError> {
    let mut lo = coeff.steady.mu0; // y(lo) = b (head)
    let mut hi = coeff.rho0_tail; // y(hi) = 0 (tail)
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if coeff.y_of_rho0(mid)? > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Compare the time-averaged positional histogram against the analytic
/// rho0(y) profile for a steady scenario.
pub fn spatial_comparison(
    sc: &Scenario,
    sample_times: &[f64],
) -> Result<SpatialReport, HarnessError> {
    let agg = run_replications_sampled(sc, sample_times)?;
    let x0_norm = sc.udp.rate_at(sample_times.first().copied().unwrap_or(0.0));
    let total_pkts: u64 = agg.spatial_bins.iter().map(|b| b.1).sum();
    let samples = (sample_times.len() as u64 * u64::from(sc.replications)).max(1);
    let b_mean = total_pkts as f64 / samples as f64;

    let steady = analytic::solve_steady_state(
        SteadyInput::new(x0_norm, 0.0)?,
        analytic::DEFAULT_TOL,
    )?;
    let b_model = (b_mean.round() as u32).max(2);
    let coeff = analytic::derive_coefficients(steady, b_model, sc.c)?;

    let mut bins = Vec::with_capacity(SPATIAL_BINS);
    let mut l1 = 0.0;
    let mut populated = 0usize;
    for (i, &(udp, total)) in agg.spatial_bins.iter().enumerate() {
        let pos = (i as f64 + 0.5) / SPATIAL_BINS as f64;
        let sim = if total > 0 {
            udp as f64 / total as f64
        } else {
            0.0
        };
        let model = if x0_norm > 0.0 {
            rho0_at_y(&coeff, pos * f64::from(b_model))?
        } else {
            0.0
        };
        if total > 0 {
            l1 += (sim - model).abs();
            populated += 1;
        }
        bins.push((pos, sim, model));
    }
    Ok(SpatialReport {
        x0_norm,
        b_mean,
        bins,
        l1_distance: l1 / populated.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::UdpSegment;

    fn base_scenario() -> Scenario {
        Scenario {
            n: 100,
            c: 2500.0,
            capacity: 1000,
            red: RedParams::default(),
            drop_order: DropOrder::ChokeThenRed,
            udp: UdpSchedule::constant(0.5),
            duration: 10.0,
            warmup: 5.0,
            window: 0.01,
            replications: 1,
            base_seed: 7,
            tcp_ssthresh: 64.0,
            tcp_rtt_base: 0.002,
            tcp_start_spread: 2.0,
            packet_size: 1000,
        }
    }

    #[test]
    fn scenario_json_round_trip_and_unknown_key_rejection() {
        let sc = base_scenario();
        let json = serde_json::to_string(&sc).unwrap();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(sc, back);
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["bogus_key"] = 1.into();
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn single_replication_aggregate_equals_trace() {
        let mut sc = base_scenario();
        sc.duration = 3.0;
        sc.warmup = 1.0;
        let trace = run_once(&sc, sc.base_seed, &[]);
        let agg = run_replications(&sc).unwrap();
        for (r, a) in trace.rows.iter().zip(&agg.rows) {
            assert_eq!(r.mu0, a.mu0_mean);
            assert_eq!(f64::from(r.b), a.b_mean);
            assert_eq!(a.mu0_stderr, 0.0);
        }
    }

    #[test]
    fn seeds_change_traces_and_means_lie_between() {
        let mut sc = base_scenario();
        sc.duration = 3.0;
        sc.warmup = 1.0;
        let t1 = run_once(&sc, 1, &[]);
        let t2 = run_once(&sc, 2, &[]);
        assert_ne!(
            t1.rows.iter().map(|r| r.mu0).collect::<Vec<_>>(),
            t2.rows.iter().map(|r| r.mu0).collect::<Vec<_>>()
        );
        sc.replications = 2;
        sc.base_seed = 1;
        let agg = run_replications(&sc).unwrap();
        for ((r1, r2), a) in t1.rows.iter().zip(&t2.rows).zip(&agg.rows) {
            let lo = r1.mu0.min(r2.mu0);
            let hi = r1.mu0.max(r2.mu0);
            assert!(a.mu0_mean >= lo - 1e-12 && a.mu0_mean <= hi + 1e-12);
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let mut sc = base_scenario();
        sc.duration = 3.0;
        sc.warmup = 1.0;
        let t1 = run_once(&sc, 42, &[]);
        let t2 = run_once(&sc, 42, &[]);
        assert_eq!(t1.counters, t2.counters);
        assert_eq!(t1.rows, t2.rows);
    }

    #[test]
    fn conservation_identities() {
        let mut sc = base_scenario();
        sc.duration = 5.0;
        sc.warmup = 1.0;
        let trace = run_once(&sc, 11, &[]);
        for c in &trace.counters {
            assert_eq!(
                c.arrivals,
                c.admitted
                    + c.red_dropped
                    + c.choke_self_dropped
                    + c.overflow_dropped,
                "arrival accounting"
            );
            assert!(c.admitted >= c.transmitted + c.choke_victim_dropped);
        }
    }

    #[test]
    fn udp_off_residual_is_zero() {
        let mut sc = base_scenario();
        sc.udp = UdpSchedule::constant(0.0);
        sc.duration = 4.0;
        sc.warmup = 2.0;
        sc.replications = 2;
        let agg = run_replications(&sc).unwrap();
        let residuals = rate_conservation_residual(&agg, &sc);
        for r in residuals.iter().filter(|r| r.steady) {
            assert_eq!(r.x0, 0.0);
            assert!(r.residual.abs() < 1e-9, "residual {}", r.residual);
        }
        // All-zero UDP histogram.
        let report = spatial_comparison(&sc, &[3.0, 3.5]).unwrap();
        assert!(report.bins.iter().all(|b| b.1 == 0.0 && b.2 == 0.0));
    }

    #[test]
    fn spatial_profile_matches_positional_histogram() {
        let mut sc = base_scenario();
        sc.udp = UdpSchedule::constant(2.0);
        sc.duration = 15.0;
        sc.warmup = 8.0;
        sc.replications = 5;
        let times: Vec<f64> = (0..70).map(|i| 8.0 + 0.1 * i as f64).collect();
        let report = spatial_comparison(&sc, &times).unwrap();
        // Model occupancy decays tail to head and stays between the
        // steady utilization and the tail value.
        for w in report.bins.windows(2) {
            assert!(w[1].2 <= w[0].2);
        }
        assert!(report.bins[0].2 < 0.62 && report.bins[0].2 > 0.5);
        assert!(
            report.l1_distance < 0.08,
            "l1 distance {}",
            report.l1_distance
        );
    }

    #[test]
    fn flat_transient_curve_when_rate_unchanged() {
        let mut sc = base_scenario();
        sc.udp = UdpSchedule {
            segments: vec![
                UdpSegment { start: 0.0, rate: 2.0 },
                UdpSegment { start: 6.0, rate: 2.0 },
            ],
        };
        sc.duration = 8.0;
        sc.warmup = 4.0;
        sc.window = 0.001;
        let report = transient_comparison(&sc, 6.0).unwrap();
        assert_eq!(report.alpha, 1.0);
        let first = report.curve[0].1;
        for &(_, model, _, _) in &report.curve {
            assert!((model - first).abs() < 1e-12);
        }
        assert!((report.model_extreme - report.steady.mu0).abs() < 1e-12);
    }

    #[test]
    fn change_time_must_hit_boundary() {
        let sc = base_scenario();
        assert!(matches!(
            transient_comparison(&sc, 99.0),
            Err(HarnessError::ChangeTime(_))
        ));
    }
}
