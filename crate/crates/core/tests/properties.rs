//! Randomized property tests for the analytic models and traffic sources.

use chokesim::analytic::{self, derive_coefficients, solve_steady_state, SteadyInput};
use chokesim::traffic::{TcpFlowState, UdpSchedule, UdpSegment};
use proptest::prelude::*;

fn solve(x0: f64) -> analytic::SteadyStatePoint {
    solve_steady_state(SteadyInput::new(x0, 0.0).unwrap(), analytic::DEFAULT_TOL).unwrap()
}

proptest! {
    /// Transient utilization never exceeds the stopped-source ceiling.
    #[test]
    fn transient_bounded_by_tail_occupancy(
        x0 in 0.01f64..50.0,
        alpha in 0.0f64..20.0,
        dt_frac in 0.0f64..=1.0,
    ) {
        let coeff = derive_coefficients(solve(x0), 1000, 2500.0).unwrap();
        let mu = coeff
            .transient_utilization(alpha * coeff.x0(), dt_frac * coeff.tau_b)
            .unwrap();
        prop_assert!(mu <= coeff.rho0_tail + 1e-12);
        prop_assert!(mu >= 0.0);
    }

    /// The transient moves monotonically from mu0 toward the extreme.
    #[test]
    fn transient_monotone_in_dt(
        x0 in 0.05f64..20.0,
        alpha in 0.0f64..10.0,
        f1 in 0.0f64..=1.0,
        f2 in 0.0f64..=1.0,
    ) {
        let coeff = derive_coefficients(solve(x0), 1000, 2500.0).unwrap();
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let x02 = alpha * coeff.x0();
        let early = coeff.transient_utilization(x02, lo * coeff.tau_b).unwrap();
        let late = coeff.transient_utilization(x02, hi * coeff.tau_b).unwrap();
        if alpha < 1.0 {
            prop_assert!(late >= early - 1e-12);
        } else {
            prop_assert!(late <= early + 1e-12);
        }
    }

    /// Equilibrium residual vanishes at the solved point, and the buffer
    /// share grows with the arrival rate.
    #[test]
    fn steady_solution_consistent_and_monotone(
        x0 in 0.01f64..200.0,
        bump in 1.05f64..3.0,
    ) {
        let a = solve(x0);
        prop_assert!(a.consistency_residual().abs() < 1e-8);
        prop_assert!(a.mu0 < 0.2690);
        // h0 < 1/2 mathematically, but rounds to exactly 0.5 in f64 for
        // very large rates.
        prop_assert!(a.h0 <= 0.5);
        let b = solve(x0 * bump);
        prop_assert!(b.h0 >= a.h0 - 1e-12);
    }

    /// UDP arrival times are strictly increasing and the per-interval count
    /// matches the schedule's rate integral to one packet per boundary.
    #[test]
    fn udp_counts_match_rate_integral(
        r1 in 0.0f64..4.0,
        r2 in 0.0f64..4.0,
        split in 0.2f64..0.8,
    ) {
        let c = 2500.0;
        let horizon = 1.0;
        let sched = UdpSchedule {
            segments: vec![
                UdpSegment { start: 0.0, rate: r1 },
                UdpSegment { start: split, rate: r2 },
            ],
        };
        let mut t = -1.0;
        let mut count = 0u64;
        while let Some(next) = sched.next_arrival(t, c) {
            if next > horizon {
                break;
            }
            prop_assert!(next > t);
            t = next;
            count += 1;
        }
        let integral = r1 * c * split + r2 * c * (horizon - split);
        prop_assert!((count as f64 - integral).abs() <= 3.0,
            "count {} vs integral {}", count, integral);
    }

    /// The congestion window never admits more than ceil(cwnd) packets and
    /// stays at or above one packet.
    #[test]
    fn tcp_window_invariants(ops in proptest::collection::vec(0u8..3, 1..200)) {
        let mut f = TcpFlowState::new(0.002, 64.0);
        let mut outstanding: Vec<u64> = Vec::new();
        for op in ops {
            match op {
                0 => {
                    if f.can_send() {
                        outstanding.push(f.on_send());
                        // Injection is window-limited. (After a loss halves
                        // cwnd, packets already in flight may exceed the new
                        // window until acks drain, so the bound only holds
                        // at send time.)
                        prop_assert!(f.in_flight as f64 <= f.cwnd.ceil());
                    }
                }
                1 => {
                    if !outstanding.is_empty() {
                        f.on_ack(outstanding.remove(0));
                    }
                }
                _ => {
                    if !outstanding.is_empty() {
                        f.on_loss(outstanding.remove(0));
                    }
                }
            }
            prop_assert!(f.cwnd >= 1.0);
        }
    }
}
