//! Closed-form steady-state, spatial and transient models of a CHOKe queue.
//!
//! Everything in this module is a pure function of its inputs. The entry
//! points are [`solve_steady_state`] (the nonlinear equilibrium),
//! [`derive_coefficients`] (per-equilibrium constants for a given backlog),
//! [`build_profile`] (the spatial distribution through the queue) and the
//! transient predictors on [`DerivedCoefficients`].

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Iteration cap for the equilibrium bisection.
const MAX_ITER: usize = 200;

/// Default residual tolerance for the equilibrium solver.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("equilibrium solver failed to converge, residual {residual:e}")]
    SolverFailure { residual: f64 },
    #[error("backlog must be at least 2 packets, got {0}")]
    InvalidBacklog(u32),
    #[error("{name} = {value} outside domain [{lo}, {hi}]")]
    Domain {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("rho0 = 1 is a singularity of the position formula")]
    Singularity,
    #[error("degenerate equilibrium: mu0 = 0, rate ratio undefined")]
    DegenerateEquilibrium,
}

/// Normalized UDP arrival rate and ambient drop probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyInput {
    /// UDP arrival rate as a multiple of link capacity, x0/C.
    pub x0_norm: f64,
    /// Ambient (RED) drop probability common to all flows.
    pub r: f64,
}

impl SteadyInput {
    pub fn new(x0_norm: f64, r: f64) -> Result<Self, AnalyticError> {
        if !x0_norm.is_finite() || x0_norm < 0.0 {
            return Err(AnalyticError::InvalidInput(format!(
                "x0_norm must be finite and nonnegative, got {x0_norm}"
            )));
        }
        if !(0.0..1.0).contains(&r) {
            return Err(AnalyticError::InvalidInput(format!(
                "r must lie in [0, 1), got {r}"
            )));
        }
        Ok(Self { x0_norm, r })
    }
}

/// Solved equilibrium of the overall-loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStatePoint {
    pub x0_norm: f64,
    pub r: f64,
    /// UDP link utilization.
    pub mu0: f64,
    /// UDP buffer share b0/b (also the CHOKe matching probability).
    pub h0: f64,
}

impl SteadyStatePoint {
    /// Absolute residual of the rate-balance equation,
    /// |x0/C * (1-r) * (1-2 h0) - mu0|.
    pub fn consistency_residual(&self) -> f64 {
        (self.x0_norm * (1.0 - self.r) * (1.0 - 2.0 * self.h0) - self.mu0).abs()
    }
}

/// Utilization as a function of the ratio g = (1-h0)/(1-2h0).
fn mu0_of_g(ln_g: f64) -> f64 {
    if ln_g <= 0.0 {
        return 0.0;
    }
    let g = ln_g.exp();
    ln_g / (g + ln_g)
}

/// Normalized input rate x0(1-r)/C that an equilibrium with ratio g supports:
/// mu0(g) * (2g - 1).
fn input_rate_of_g(ln_g: f64) -> f64 {
    if ln_g <= 0.0 {
        return 0.0;
    }
    let g = ln_g.exp();
    mu0_of_g(ln_g) * (2.0 * g - 1.0)
}

/// Solve the coupled equilibrium equations for (mu0, h0).
///
/// The solver bisects in t = ln[(1-h0)/(1-2h0)], where the supported input
/// rate is strictly increasing. Working in log space keeps the solution
/// representable for very large x0, where h0 approaches 1/2 and 1-2h0
/// underflows long before h0 itself loses precision.
pub fn solve_steady_state(
    input: SteadyInput,
    tol: f64,
) -> Result<SteadyStatePoint, AnalyticError> {
    if !(tol > 0.0) {
        return Err(AnalyticError::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let target = input.x0_norm * (1.0 - input.r);
    if target == 0.0 {
        return Ok(SteadyStatePoint {
            x0_norm: input.x0_norm,
            r: input.r,
            mu0: 0.0,
            h0: 0.0,
        });
    }

    // input_rate_of_g(t) >= t for t >= 0, so t = target brackets from above.
    let mut lo = 0.0_f64;
    let mut hi = (target + 1.0).min(700.0);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if input_rate_of_g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    let ln_g = 0.5 * (lo + hi);
    let g = ln_g.exp();
    let point = SteadyStatePoint {
        x0_norm: input.x0_norm,
        r: input.r,
        mu0: mu0_of_g(ln_g),
        h0: (g - 1.0) / (2.0 * g - 1.0),
    };
    // Scale-relative residual check: the balance equation in the bisection
    // variable is exact to rounding, but report failure if it is not.
    let residual = (input_rate_of_g(ln_g) - target).abs() / target.max(1.0);
    if residual > tol {
        return Err(AnalyticError::SolverFailure { residual });
    }
    Ok(point)
}

/// Per-equilibrium constants for a concrete backlog and link rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoefficients {
    pub steady: SteadyStatePoint,
    /// Backlog size in packets at the reference instant.
    pub b: u32,
    /// Link capacity in packets per second.
    pub capacity: f64,
    /// ln(1 - 1/b), the per-trial log survival factor. Always negative.
    pub beta: f64,
    /// (1-mu0) C / (x0 (1-r) (1-h0)); infinite when x0 = 0.
    pub a: f64,
    /// x0 (1-r) beta / ((1-mu0) C), the spatial decay constant per slot.
    pub k: f64,
    /// Full queueing delay b (1-h0) / (C (1-mu0)), seconds.
    pub tau_b: f64,
    /// rho0 at the queue tail, 1/(1+a).
    pub rho0_tail: f64,
    /// Packet velocity at the queue tail, packets/second.
    pub v_tail: f64,
}

pub fn derive_coefficients(
    ss: SteadyStatePoint,
    b: u32,
    capacity: f64,
) -> Result<DerivedCoefficients, AnalyticError> {
    if b < 2 {
        return Err(AnalyticError::InvalidBacklog(b));
    }
    if !(capacity > 0.0) {
        return Err(AnalyticError::InvalidInput(format!(
            "capacity must be positive, got {capacity}"
        )));
    }
    let beta = (1.0 - 1.0 / f64::from(b)).ln();
    let survive = (1.0 - ss.r) * (1.0 - ss.h0);
    let a = if ss.x0_norm > 0.0 {
        (1.0 - ss.mu0) / (ss.x0_norm * survive)
    } else {
        f64::INFINITY
    };
    let x0 = ss.x0_norm * capacity;
    Ok(DerivedCoefficients {
        steady: ss,
        b,
        capacity,
        beta,
        a,
        k: x0 * (1.0 - ss.r) * beta / ((1.0 - ss.mu0) * capacity),
        tau_b: f64::from(b) * (1.0 - ss.h0) / (capacity * (1.0 - ss.mu0)),
        rho0_tail: 1.0 / (1.0 + a),
        v_tail: x0 * survive + (1.0 - ss.mu0) * capacity,
    })
}

impl DerivedCoefficients {
    /// Absolute UDP arrival rate in packets/second.
    pub fn x0(&self) -> f64 {
        self.steady.x0_norm * self.capacity
    }

    /// Probability of a UDP packet after queueing delay `tau`.
    pub fn rho0_of_tau(&self, tau: f64) -> Result<f64, AnalyticError> {
        check_range("tau", tau, 0.0, self.tau_b)?;
        let e = (self.x0() * (1.0 - self.steady.r) * self.beta * tau).exp();
        Ok(e / (self.a + e))
    }

    /// Queue position where the UDP probability has decayed to `rho0`.
    pub fn y_of_rho0(&self, rho0: f64) -> Result<f64, AnalyticError> {
        if rho0 >= 1.0 {
            return Err(AnalyticError::Singularity);
        }
        if self.steady.x0_norm == 0.0 {
            return Err(AnalyticError::Domain {
                name: "rho0",
                value: rho0,
                lo: 0.0,
                hi: 0.0,
            });
        }
        check_range("rho0", rho0, self.steady.mu0, self.rho0_tail)?;
        let log_term = (self.a * rho0 / (1.0 - rho0)).ln();
        let linear_term =
            (rho0 - self.rho0_tail) / ((1.0 - rho0) * (1.0 - self.rho0_tail));
        Ok((log_term + linear_term) / self.k)
    }

    /// Queueing delay at which the UDP probability equals `rho0`.
    pub fn tau_of_rho0(&self, rho0: f64) -> f64 {
        (self.a * rho0 / (1.0 - rho0)).ln()
            / (self.x0() * (1.0 - self.steady.r) * self.beta)
    }

    /// UDP link utilization `dt` seconds after the arrival rate changes from
    /// x0 to `x02` (ambient drops ignored in the transient regime).
    ///
    /// The base factor e^{-x0 beta tau(b)} is evaluated through its
    /// equilibrium identity (1-mu0)/(a mu0), so that dt = 0 reproduces mu0
    /// and dt = tau_b reproduces [`Self::extreme_utilization`] exactly.
    pub fn transient_utilization(&self, x02: f64, dt: f64) -> Result<f64, AnalyticError> {
        if x02 < 0.0 {
            return Err(AnalyticError::InvalidInput(format!(
                "x02 must be nonnegative, got {x02}"
            )));
        }
        check_range("dt", dt, 0.0, self.tau_b)?;
        let mu0 = self.steady.mu0;
        if mu0 == 0.0 {
            return Ok(0.0);
        }
        let alpha = x02 / self.x0();
        let g = (1.0 - mu0) / (self.a * mu0);
        Ok(1.0 / (1.0 + self.a * g.powf(1.0 + (alpha - 1.0) * dt / self.tau_b)))
    }

    /// Extreme (minimum for alpha > 1, maximum for alpha < 1) UDP utilization
    /// reached a full queueing delay after the rate changes by factor `alpha`.
    pub fn extreme_utilization(&self, alpha: f64) -> Result<f64, AnalyticError> {
        if !(alpha >= 0.0) {
            return Err(AnalyticError::InvalidInput(format!(
                "alpha must be nonnegative, got {alpha}"
            )));
        }
        if alpha == 0.0 {
            return Ok(1.0 / (1.0 + self.a));
        }
        let mu0 = self.steady.mu0;
        if mu0 == 0.0 {
            return Err(AnalyticError::DegenerateEquilibrium);
        }
        let g = (1.0 - mu0) / (self.a * mu0);
        Ok(1.0 / (1.0 + self.a * g.powf(alpha)))
    }
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), AnalyticError> {
    // Allow rounding slop at the endpoints.
    let eps = 1e-9 * hi.abs().max(1.0);
    if !value.is_finite() || value < lo - eps || value > hi + eps {
        return Err(AnalyticError::Domain {
            name,
            value,
            lo,
            hi,
        });
    }
    Ok(())
}

/// One sampled point of the spatial distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialSample {
    /// Queue position in packet slots, tail = 0.
    pub y: f64,
    /// Probability of a UDP packet at this slot.
    pub rho0: f64,
    /// Packet velocity, packets/second.
    pub v: f64,
    /// Queueing delay to reach this slot, seconds.
    pub tau: f64,
}

/// Sampled spatial curve of (y, rho0, v, tau) through the queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialProfile {
    pub steady: SteadyStatePoint,
    pub coeff: DerivedCoefficients,
    pub samples: Vec<SpatialSample>,
    /// Inflection point (y*, rho0* = 1/3), present when x0 > C/2.
    pub critical: Option<(f64, f64)>,
    /// |y(mu0) - b| / b, the closure gap of the model's own approximations.
    pub closure_gap: f64,
}

/// Sample the spatial distribution on a uniform rho0 grid between mu0 and
/// rho0(0). The grid is parametric in rho0 because y(rho0) is closed-form
/// while rho0(y) is not; the samples come out sorted by increasing y.
pub fn build_profile(
    ss: &SteadyStatePoint,
    b: u32,
    capacity: f64,
    n_samples: usize,
) -> Result<SpatialProfile, AnalyticError> {
    if n_samples < 3 {
        return Err(AnalyticError::InvalidInput(format!(
            "need at least 3 samples, got {n_samples}"
        )));
    }
    let coeff = derive_coefficients(*ss, b, capacity)?;

    if ss.x0_norm == 0.0 {
        // No UDP traffic: flat profile, plain non-leaky queue.
        let samples = (0..n_samples)
            .map(|i| {
                let y = f64::from(b) * i as f64 / (n_samples - 1) as f64;
                SpatialSample {
                    y,
                    rho0: 0.0,
                    v: capacity,
                    tau: y / capacity,
                }
            })
            .collect();
        return Ok(SpatialProfile {
            steady: *ss,
            coeff,
            samples,
            critical: None,
            closure_gap: 0.0,
        });
    }

    let lo = ss.mu0;
    let hi = coeff.rho0_tail;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        // Descending rho0 grid gives ascending y.
        let rho0 = hi - (hi - lo) * i as f64 / (n_samples - 1) as f64;
        let y = coeff.y_of_rho0(rho0)?;
        samples.push(SpatialSample {
            y,
            rho0,
            v: (1.0 - ss.mu0) * capacity / (1.0 - rho0),
            tau: coeff.tau_of_rho0(rho0),
        });
    }
    // tau(rho0_tail) is ln(1)/(x0 beta); pin the tail exactly.
    samples[0].tau = 0.0;
    samples[0].y = 0.0;

    let critical = if ss.x0_norm > 0.5 {
        let rho_star = 1.0 / 3.0;
        let y_star = (coeff.a / 2.0).ln() / coeff.k
            + (1.0 - 3.0 * coeff.rho0_tail)
                / (2.0 * (1.0 - coeff.rho0_tail))
                / coeff.k;
        Some((y_star, rho_star))
    } else {
        None
    };
    let closure_gap = (samples[n_samples - 1].y - f64::from(b)).abs() / f64::from(b);
    Ok(SpatialProfile {
        steady: *ss,
        coeff,
        samples,
        critical,
        closure_gap,
    })
}

/// Analytic first and second derivatives of the spatial curves at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDerivatives {
    pub y: f64,
    pub rho0_d1: f64,
    pub rho0_d2: f64,
    pub v_d1: f64,
    pub v_d2: f64,
    pub tau_d1: f64,
    pub tau_d2: f64,
}

/// Evaluate the closed-form derivative expressions at every profile sample.
pub fn profile_derivatives(profile: &SpatialProfile) -> Vec<SampleDerivatives> {
    let ss = &profile.steady;
    let c = ss.x0_norm * profile.coeff.capacity * (1.0 - ss.r) * profile.coeff.beta;
    profile
        .samples
        .iter()
        .map(|s| {
            let rho = s.rho0;
            let v = s.v;
            SampleDerivatives {
                y: s.y,
                rho0_d1: c * (rho - rho * rho) / v,
                rho0_d2: c * c * rho * (1.0 - rho) * (1.0 - 3.0 * rho) / (v * v),
                v_d1: c * rho,
                v_d2: c * c * rho * (1.0 - rho) / v,
                tau_d1: 1.0 / v,
                tau_d2: -c * rho / (v * v),
            }
        })
        .collect()
}

impl SpatialProfile {
    /// Write the profile as CSV with header `y,rho0,v,tau`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "y,rho0,v,tau")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.y, s.rho0, s.v, s.tau)?;
        }
        Ok(())
    }
}

/// Write a transient utilization curve as CSV with header `dT,mu0`.
pub fn write_transient_csv<W: Write>(
    coeff: &DerivedCoefficients,
    x02: f64,
    n_points: usize,
    mut w: W,
) -> Result<(), AnalyticError> {
    let mut out = String::from("dT,mu0\n");
    for i in 0..n_points {
        let dt = coeff.tau_b * i as f64 / (n_points - 1).max(1) as f64;
        let mu0 = coeff.transient_utilization(x02, dt)?;
        out.push_str(&format!("{dt},{mu0}\n"));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| AnalyticError::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(x0_norm: f64) -> SteadyStatePoint {
        solve_steady_state(SteadyInput::new(x0_norm, 0.0).unwrap(), DEFAULT_TOL).unwrap()
    }

    #[test]
    fn steady_state_matches_reference_points() {
        let p = solve(2.0);
        assert!((p.mu0 - 0.250).abs() < 1e-3, "mu0 = {}", p.mu0);
        assert!((p.h0 - 0.4375).abs() < 1e-3, "h0 = {}", p.h0);
        let p3 = solve(3.0);
        assert!((p3.mu0 - 0.21).abs() < 5e-3, "mu0 = {}", p3.mu0);
    }

    #[test]
    fn steady_state_zero_rate_is_empty() {
        let p = solve(0.0);
        assert_eq!((p.mu0, p.h0), (0.0, 0.0));
    }

    #[test]
    fn steady_residual_vanishes_at_solution() {
        for x in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let p = solve(x);
            assert!(p.consistency_residual() < 1e-8 * x.max(1.0));
        }
        // Exact algebra at a hand-checkable rational point.
        let p = SteadyStatePoint {
            x0_norm: 2.0,
            r: 0.0,
            mu0: 0.25,
            h0: 0.4375,
        };
        assert_eq!(p.consistency_residual(), 0.0);
        let perturbed = SteadyStatePoint { h0: 0.4475, ..p };
        assert!(perturbed.consistency_residual() > 0.0);
    }

    #[test]
    fn loss_ratio_bounds_hold() {
        for x in [0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 10.0, 100.0] {
            let p = solve(x);
            let ratio = (1.0 - p.mu0) / (1.0 - p.h0);
            assert!((1.0..=2.0).contains(&ratio), "x={x} ratio={ratio}");
        }
    }

    #[test]
    fn coefficients_at_two_c() {
        let ss = SteadyStatePoint {
            x0_norm: 2.0,
            r: 0.0,
            mu0: 0.25,
            h0: 0.4375,
        };
        let c = derive_coefficients(ss, 1000, 2500.0).unwrap();
        assert!((c.a - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.rho0_tail - 0.60).abs() < 1e-12);
        assert!(c.beta < 0.0);
    }

    #[test]
    fn full_delay_matches_littles_law() {
        let ss = solve(3.0);
        let c = derive_coefficients(ss, 1000, 2500.0).unwrap();
        let expect = 1000.0 * (1.0 - ss.h0) / (2500.0 * (1.0 - ss.mu0));
        assert_eq!(c.tau_b, expect);
        assert!((c.tau_b - 0.2709).abs() < 1e-3, "tau_b = {}", c.tau_b);
    }

    #[test]
    fn backlog_below_two_rejected() {
        let ss = solve(1.0);
        assert!(matches!(
            derive_coefficients(ss, 1, 2500.0),
            Err(AnalyticError::InvalidBacklog(1))
        ));
    }

    #[test]
    fn rho0_of_tau_boundaries() {
        let c = derive_coefficients(solve(2.0), 1000, 2500.0).unwrap();
        assert_eq!(c.rho0_of_tau(0.0).unwrap(), c.rho0_tail);
        // Head boundary closes up to the model's own approximation error.
        let head = c.rho0_of_tau(c.tau_b).unwrap();
        assert!((head - c.steady.mu0).abs() < 1e-2, "head = {head}");
        assert!(c.rho0_of_tau(-0.1).is_err());
        assert!(c.rho0_of_tau(c.tau_b * 1.5).is_err());
    }

    #[test]
    fn rho0_of_tau_vanishes_without_udp() {
        let c = derive_coefficients(solve(0.0), 1000, 2500.0).unwrap();
        assert_eq!(c.rho0_of_tau(0.05).unwrap(), 0.0);
    }

    #[test]
    fn y_of_rho0_boundaries() {
        let c = derive_coefficients(solve(2.0), 1000, 2500.0).unwrap();
        assert!(c.y_of_rho0(c.rho0_tail).unwrap().abs() < 1e-9);
        let y_head = c.y_of_rho0(c.steady.mu0).unwrap();
        assert!((y_head - 1000.0).abs() < 10.0, "y(mu0) = {y_head}");
        assert!(c.y_of_rho0(0.99).is_err());
        assert!(matches!(c.y_of_rho0(1.0), Err(AnalyticError::Singularity)));
    }

    #[test]
    fn profile_boundary_velocities() {
        let ss = solve(2.0);
        let p = build_profile(&ss, 1000, 2500.0, 400).unwrap();
        let first = p.samples.first().unwrap();
        let last = p.samples.last().unwrap();
        let v0_expect =
            ss.x0_norm * 2500.0 * (1.0 - ss.h0) + (1.0 - ss.mu0) * 2500.0;
        assert!((first.v - v0_expect).abs() < 1e-6 * v0_expect);
        assert_eq!(first.tau, 0.0);
        assert!((last.v - 2500.0).abs() < 25.0);
        assert!(p.closure_gap < 0.01, "closure gap {}", p.closure_gap);
    }

    #[test]
    fn profile_monotone_and_critical_point() {
        let p = build_profile(&solve(2.0), 1000, 2500.0, 400).unwrap();
        for w in p.samples.windows(2) {
            assert!(w[1].y > w[0].y);
            assert!(w[1].rho0 < w[0].rho0);
            assert!(w[1].v <= w[0].v);
            assert!(w[1].tau > w[0].tau);
        }
        let (y_star, rho_star) = p.critical.unwrap();
        assert_eq!(rho_star, 1.0 / 3.0);
        // The critical point must agree with the position formula.
        let y_from_formula = p.coeff.y_of_rho0(1.0 / 3.0).unwrap();
        assert!((y_star - y_from_formula).abs() < 1e-6 * 1000.0);
        assert!(build_profile(&solve(0.25), 1000, 2500.0, 100)
            .unwrap()
            .critical
            .is_none());
    }

    #[test]
    fn asymptotic_delay_is_half_queue() {
        let c = derive_coefficients(solve(1000.0), 1000, 2500.0).unwrap();
        let half = 1000.0 / (2.0 * 2500.0);
        assert!((c.tau_b - half).abs() < 0.02 * half, "tau_b = {}", c.tau_b);
    }

    #[test]
    fn derivative_signs() {
        let p = build_profile(&solve(2.0), 1000, 2500.0, 400).unwrap();
        let d = profile_derivatives(&p);
        let mut sign_changes = 0;
        for w in d.windows(2) {
            assert!(w[0].v_d1 < 0.0);
            assert!(w[0].tau_d2 > 0.0);
            if w[0].rho0_d2.signum() != w[1].rho0_d2.signum() {
                sign_changes += 1;
            }
        }
        assert_eq!(sign_changes, 1);
    }

    #[test]
    fn transient_boundary_identities() {
        let c = derive_coefficients(solve(2.0), 1000, 2500.0).unwrap();
        let x0 = c.x0();
        let mu0 = c.steady.mu0;
        for x02 in [0.0, 0.5 * x0, x0, 4.0 * x0] {
            assert!((c.transient_utilization(x02, 0.0).unwrap() - mu0).abs() < 1e-9);
        }
        for dt in [0.0, 0.3 * c.tau_b, c.tau_b] {
            assert!((c.transient_utilization(x0, dt).unwrap() - mu0).abs() < 1e-9);
        }
        let stopped = c.transient_utilization(0.0, c.tau_b).unwrap();
        assert!((stopped - c.rho0_tail).abs() < 1e-12);
    }

    #[test]
    fn transient_matches_extreme_at_full_delay() {
        for x0_norm in [0.25, 1.0, 3.0] {
            let c = derive_coefficients(solve(x0_norm), 1000, 2500.0).unwrap();
            for alpha in [0.0, 0.1, 0.5, 1.0, 2.0, 10.0] {
                let t = c
                    .transient_utilization(alpha * c.x0(), c.tau_b)
                    .unwrap();
                let e = c.extreme_utilization(alpha).unwrap();
                assert!((t - e).abs() < 1e-12, "x0={x0_norm} alpha={alpha}");
            }
        }
    }

    #[test]
    fn extreme_reference_values() {
        let c2 = derive_coefficients(solve(2.0), 1000, 2500.0).unwrap();
        assert!((c2.extreme_utilization(0.1).unwrap() - 0.565).abs() < 2e-3);
        assert!((c2.extreme_utilization(1.0).unwrap() - c2.steady.mu0).abs() < 1e-15);
        let c3 = derive_coefficients(solve(3.0), 1000, 2500.0).unwrap();
        assert!((c3.extreme_utilization(1.0 / 12.0).unwrap() - 0.632).abs() < 1e-3);
        let c025 = derive_coefficients(solve(0.25), 1000, 2500.0).unwrap();
        assert!((c025.extreme_utilization(12.0).unwrap() - 0.013).abs() < 1e-3);
    }

    #[test]
    fn degenerate_equilibrium_paths() {
        let c = derive_coefficients(solve(0.0), 1000, 2500.0).unwrap();
        assert_eq!(c.extreme_utilization(0.0).unwrap(), 0.0);
        assert!(matches!(
            c.extreme_utilization(2.0),
            Err(AnalyticError::DegenerateEquilibrium)
        ));
        assert_eq!(c.transient_utilization(100.0, 0.1).unwrap(), 0.0);
    }
}
