//! Steady-state multiserver queue formulas.
//!
//! Each station–charger pair is an M/M/s queue: Poisson charging demand at
//! rate `lambda`, `s` identical chargers with exponential service at rate
//! `mu`, utilization `rho = lambda / (s * mu)`. The two quantities the
//! planning model needs are the Erlang-C probability that all chargers are
//! busy and the expected time in system (queueing plus charging),
//!
//! ```text
//! W(rho, s) = P(rho, s) / (mu * s * (1 - rho)) + 1 / mu.
//! ```
//!
//! For the cutting-plane machinery the nonlinearity is isolated in the
//! transform `W^nu(rho) = P(rho, s) / (1 - rho)`, which is strictly
//! increasing and strictly convex on (0, 1) for every fixed `s`, so its
//! tangent lines minorize it globally. [`cut_at`] produces such a
//! supporting line and is the building block of every cut in the solver.
//!
//! Rates and times here are unit-agnostic: pass `mu` per minute and times
//! come back in minutes. All functions are pure and safe to call from any
//! number of worker threads.

use thiserror::Error;

/// Number of grid points used to certify that a cut minorizes the curve.
const CUT_VALIDATION_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueingError {
    #[error("utilization must lie in [0, 1) for a stable queue, got {0}")]
    UtilizationOutOfRange(f64),
    #[error("server count must be at least 1, got {0}")]
    NoServers(usize),
    #[error("service rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("squared coefficient of variation must be nonnegative, got {0}")]
    NegativeScv(f64),
    #[error("cut anchor must lie strictly inside (0, 1), got {0}")]
    AnchorOutOfRange(f64),
}

/// A full evaluation of one station–charger queue.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEval {
    /// Utilization `lambda / (s * mu)`, in [0, 1).
    pub rho: f64,
    /// Number of chargers.
    pub servers: usize,
    /// Service rate per charger (charges per unit time).
    pub mu: f64,
    /// Probability that all chargers are busy.
    pub p_wait: f64,
    /// Expected time in system (queueing plus charging).
    pub w_total: f64,
    /// Squared coefficient of variation of the service time (1 = exponential).
    pub scv_service: f64,
    /// Squared coefficient of variation of interarrival times (1 = Poisson).
    pub scv_arrival: f64,
}

impl QueueEval {
    /// Evaluate a pure M/M/s queue.
    pub fn mms(rho: f64, servers: usize, mu: f64) -> Result<Self, QueueingError> {
        let p_wait = erlang_c_probability(rho, servers)?;
        let w_total = expected_time_in_system(rho, servers, mu)?;
        Ok(QueueEval {
            rho,
            servers,
            mu,
            p_wait,
            w_total,
            scv_service: 1.0,
            scv_arrival: 1.0,
        })
    }

    /// Evaluate with general service and interarrival variability
    /// (Allen–Cunneen scaling of the queueing term).
    pub fn general(
        rho: f64,
        servers: usize,
        mu: f64,
        scv_arrival: f64,
        scv_service: f64,
    ) -> Result<Self, QueueingError> {
        let p_wait = erlang_c_probability(rho, servers)?;
        let w_total = gigs_time_in_system(rho, servers, mu, scv_arrival, scv_service)?;
        Ok(QueueEval {
            rho,
            servers,
            mu,
            p_wait,
            w_total,
            scv_service,
            scv_arrival,
        })
    }
}

/// A supporting line `A + B * rho` of the convex transform `W^nu` at a
/// chosen anchor utilization. Valid as a global under-estimator of the
/// curve, which is what makes it usable as a cutting plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutCoefficients {
    /// Utilization where the line touches the curve.
    pub rho_anchor: f64,
    /// Server count the transform was evaluated for.
    pub servers: usize,
    /// Intercept A.
    pub intercept_a: f64,
    /// Slope B.
    pub slope_b: f64,
}

impl CutCoefficients {
    /// Value of the supporting line at `rho`.
    pub fn value_at(&self, rho: f64) -> f64 {
        self.intercept_a + self.slope_b * rho
    }
}

fn check_domain(rho: f64, servers: usize) -> Result<(), QueueingError> {
    if servers < 1 {
        return Err(QueueingError::NoServers(servers));
    }
    if !(0.0..1.0).contains(&rho) || !rho.is_finite() {
        return Err(QueueingError::UtilizationOutOfRange(rho));
    }
    Ok(())
}

/// Erlang-C: probability that all `servers` chargers are busy so an
/// arriving vehicle must queue.
///
/// Evaluated through the Erlang-B recurrence
/// `B(0) = 1, B(m) = a*B(m-1) / (m + a*B(m-1))` with offered load
/// `a = rho * s`, then `C = s*B / (s - a + a*B)`. The recurrence never
/// forms factorials or large powers, so it stays finite and accurate for
/// large server counts where the textbook series overflows.
pub fn erlang_c_probability(rho: f64, servers: usize) -> Result<f64, QueueingError> {
    check_domain(rho, servers)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    let s = servers as f64;
    let offered = rho * s;
    let mut b = 1.0;
    for m in 1..=servers {
        b = offered * b / (m as f64 + offered * b);
    }
    let c = s * b / (s - offered + offered * b);
    // Guard against rounding just outside [0, 1] at extreme utilizations.
    Ok(c.clamp(0.0, 1.0))
}

/// Expected time in system for an M/M/s queue:
/// `P / (mu * s * (1 - rho)) + 1/mu`.
pub fn expected_time_in_system(rho: f64, servers: usize, mu: f64) -> Result<f64, QueueingError> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(QueueingError::NonPositiveRate(mu));
    }
    let p = erlang_c_probability(rho, servers)?;
    Ok(p / (mu * servers as f64 * (1.0 - rho)) + 1.0 / mu)
}

/// The convex transform `W^nu(rho) = P(rho, s) / (1 - rho)`.
///
/// Strictly increasing and strictly convex on (0, 1) for each fixed `s`;
/// the expected time in system is `W^nu / (mu * s) + 1/mu`.
pub fn w_nu(rho: f64, servers: usize) -> Result<f64, QueueingError> {
    let p = erlang_c_probability(rho, servers)?;
    Ok(p / (1.0 - rho))
}

/// Supporting line of `W^nu(., servers)` at `rho_anchor`.
///
/// The slope comes from a central finite difference; the intercept is then
/// lowered by the worst violation measured on a dense validation grid, so
/// the returned line is certified to minorize the curve on (0, 1).
pub fn cut_at(rho_anchor: f64, servers: usize) -> Result<CutCoefficients, QueueingError> {
    if !(rho_anchor > 0.0 && rho_anchor < 1.0) {
        return Err(QueueingError::AnchorOutOfRange(rho_anchor));
    }
    check_domain(rho_anchor, servers)?;

    let h = (1e-6 * rho_anchor).max(1e-7);
    let lo = (rho_anchor - h).max(1e-12);
    let hi = (rho_anchor + h).min(1.0 - 1e-12);
    let slope = (w_nu(hi, servers)? - w_nu(lo, servers)?) / (hi - lo);
    let mut intercept = w_nu(rho_anchor, servers)? - slope * rho_anchor;

    // Certify minorization: push the intercept down by the largest observed
    // overshoot. For an exact tangent of a convex function the overshoot is
    // zero; finite-difference slope error makes it a hair positive near the
    // anchor.
    let mut worst = 0.0f64;
    for g in 1..=CUT_VALIDATION_GRID {
        let rho = g as f64 / (CUT_VALIDATION_GRID as f64 + 1.0);
        let violation = intercept + slope * rho - w_nu(rho, servers)?;
        worst = worst.max(violation);
    }
    intercept -= worst;

    Ok(CutCoefficients {
        rho_anchor,
        servers,
        intercept_a: intercept,
        slope_b: slope,
    })
}

/// M/G/s expected time in system under the Martin/Allen–Cunneen
/// approximation: the M/M/s queueing term scaled by `(1 + c_s^2) / 2`.
/// With `scv_service = 1` this is exactly the M/M/s value.
pub fn mgs_time_in_system(
    rho: f64,
    servers: usize,
    mu: f64,
    scv_service: f64,
) -> Result<f64, QueueingError> {
    if scv_service < 0.0 || !scv_service.is_finite() {
        return Err(QueueingError::NegativeScv(scv_service));
    }
    let w_mms = expected_time_in_system(rho, servers, mu)?;
    let queue_term = w_mms - 1.0 / mu;
    Ok((1.0 + scv_service) / 2.0 * queue_term + 1.0 / mu)
}

/// GI/G/s expected time in system under the Allen–Cunneen approximation:
/// the approximate queueing term `rho / (mu * (1 - rho))` scaled by
/// `(c_a^2 + c_s^2) / 2`.
///
/// Used for the under-dispersion comparison: with `scv_arrival < 1` the
/// estimate is below the Poisson-arrivals value, i.e. assuming Poisson
/// demand is conservative.
pub fn gigs_time_in_system(
    rho: f64,
    servers: usize,
    mu: f64,
    scv_arrival: f64,
    scv_service: f64,
) -> Result<f64, QueueingError> {
    check_domain(rho, servers)?;
    if mu <= 0.0 || !mu.is_finite() {
        return Err(QueueingError::NonPositiveRate(mu));
    }
    if scv_service < 0.0 || !scv_service.is_finite() {
        return Err(QueueingError::NegativeScv(scv_service));
    }
    if scv_arrival < 0.0 || !scv_arrival.is_finite() {
        return Err(QueueingError::NegativeScv(scv_arrival));
    }
    let queue_term = rho / (mu * (1.0 - rho));
    Ok((scv_arrival + scv_service) / 2.0 * queue_term + 1.0 / mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    #[test]
    fn erlang_c_single_server_collapses_to_rho() {
        assert_close(erlang_c_probability(0.5, 1).unwrap(), 0.5, 1e-12);
        assert_close(erlang_c_probability(0.25, 1).unwrap(), 0.25, 1e-12);
    }

    #[test]
    fn erlang_c_two_servers_half_load() {
        // Direct evaluation of the finite series at rho=0.5, s=2:
        // a = 1, T1 = a^2/((1-rho)*2!) = 1, T2 = 1 + a = 2, P = 1/(1+2)... = 1/3.
        assert_close(erlang_c_probability(0.5, 2).unwrap(), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn erlang_c_empty_system_never_queues() {
        assert_close(erlang_c_probability(0.0, 3).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn erlang_c_matches_direct_series_small_s() {
        // Independent evaluation via the textbook series with factorials,
        // tractable for small server counts.
        fn direct(rho: f64, s: usize) -> f64 {
            let a = rho * s as f64;
            let mut fact = 1.0;
            let mut t2 = 0.0;
            for r in 0..s {
                if r > 0 {
                    fact *= r as f64;
                }
                t2 += a.powi(r as i32) / fact;
            }
            let s_fact = fact * s as f64;
            let t1 = a.powi(s as i32) / ((1.0 - rho) * s_fact);
            t1 / (t1 + t2)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = rng.gen_range(1..=10usize);
            let rho = rng.gen_range(0.01..0.99);
            let got = erlang_c_probability(rho, s).unwrap();
            assert_close(got, direct(rho, s), 1e-10);
        }
    }

    #[test]
    fn erlang_c_stable_at_large_server_counts() {
        let p = erlang_c_probability(0.99, 64).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p), "p = {p}");
    }

    #[test]
    fn erlang_c_rejects_bad_domain() {
        assert!(erlang_c_probability(1.0, 2).is_err());
        assert!(erlang_c_probability(-0.1, 2).is_err());
        assert!(erlang_c_probability(0.5, 0).is_err());
    }

    #[test]
    fn time_in_system_closed_forms() {
        // M/M/1 closed form 1/(mu*(1-rho)).
        assert_close(expected_time_in_system(0.5, 1, 1.0).unwrap(), 2.0, 1e-12);
        // P(0.5, 2) = 1/3 plugged into the definition.
        assert_close(
            expected_time_in_system(0.5, 2, 1.0).unwrap(),
            4.0 / 3.0,
            1e-12,
        );
        // Pure service time when the system is empty.
        assert_close(expected_time_in_system(0.0, 5, 2.0).unwrap(), 0.5, 1e-12);
    }

    #[test]
    fn w_nu_known_values() {
        assert_close(w_nu(0.5, 1).unwrap(), 1.0, 1e-12);
        assert_close(w_nu(0.25, 1).unwrap(), 1.0 / 3.0, 1e-12);
        assert_close(w_nu(0.5, 2).unwrap(), 2.0 / 3.0, 1e-12);
    }

    #[test]
    fn w_nu_monotone_on_grid() {
        for s in [1usize, 2, 3, 5, 8, 13, 21, 32] {
            let mut prev = w_nu(1e-6, s).unwrap();
            for g in 1..=120 {
                let rho = 0.999 * g as f64 / 120.0;
                let cur = w_nu(rho, s).unwrap();
                assert!(cur > prev, "W^nu not increasing at rho={rho}, s={s}");
                prev = cur;
            }
        }
    }

    #[test]
    fn w_nu_convex_second_differences() {
        for s in 1..=32usize {
            let n = 100;
            for g in 1..n - 1 {
                let h = 0.999 / n as f64;
                let r = g as f64 * h;
                let f0 = w_nu(r - h, s).unwrap();
                let f1 = w_nu(r, s).unwrap();
                let f2 = w_nu(r + h, s).unwrap();
                assert!(
                    f0 - 2.0 * f1 + f2 >= -1e-9,
                    "convexity violated at rho={r}, s={s}"
                );
            }
        }
    }

    #[test]
    fn cut_single_server_closed_form() {
        // For s=1, W^nu = rho/(1-rho), derivative 1/(1-rho)^2.
        let cut = cut_at(0.5, 1).unwrap();
        assert_close(cut.slope_b, 4.0, 1e-5);
        assert_close(cut.intercept_a, -1.0, 1e-5);

        let cut = cut_at(0.25, 1).unwrap();
        assert_close(cut.slope_b, 16.0 / 9.0, 1e-5);
        assert_close(cut.intercept_a, -1.0 / 9.0, 1e-5);
    }

    #[test]
    fn cut_touches_curve_at_anchor() {
        for (anchor, s) in [(0.5, 2usize), (0.1, 1), (0.9, 4), (0.7, 16)] {
            let cut = cut_at(anchor, s).unwrap();
            let touch = cut.value_at(anchor);
            let curve = w_nu(anchor, s).unwrap();
            assert_close(touch, curve, 1e-6 * (1.0 + curve));
        }
    }

    #[test]
    fn cuts_minorize_curve_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let s = rng.gen_range(1..=32usize);
            let anchor = rng.gen_range(0.001..0.999);
            let rho = rng.gen_range(0.0..0.999);
            let cut = cut_at(anchor, s).unwrap();
            let line = cut.value_at(rho);
            let curve = w_nu(rho, s).unwrap();
            assert!(
                line <= curve + 1e-7,
                "cut at (anchor={anchor}, s={s}) overshoots at rho={rho}: {line} > {curve}"
            );
        }
    }

    #[test]
    fn mgs_reduces_to_mms_at_unit_scv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = rng.gen_range(1..=16usize);
            let rho = rng.gen_range(0.0..0.99);
            let mu = rng.gen_range(0.1..10.0);
            let mms = expected_time_in_system(rho, s, mu).unwrap();
            let mgs = mgs_time_in_system(rho, s, mu, 1.0).unwrap();
            assert_close(mgs, mms, 1e-12 * (1.0 + mms.abs()));
        }
    }

    #[test]
    fn mgs_known_values() {
        assert_close(mgs_time_in_system(0.5, 2, 1.0, 1.0).unwrap(), 4.0 / 3.0, 1e-12);
        assert_close(mgs_time_in_system(0.5, 2, 1.0, 0.0).unwrap(), 7.0 / 6.0, 1e-12);
        assert_close(mgs_time_in_system(0.5, 1, 1.0, 3.0).unwrap(), 3.0, 1e-12);
    }

    #[test]
    fn gigs_known_values() {
        assert_close(gigs_time_in_system(0.5, 1, 1.0, 1.0, 1.0).unwrap(), 2.0, 1e-12);
        assert_close(gigs_time_in_system(0.5, 1, 1.0, 0.5, 1.0).unwrap(), 1.75, 1e-12);
        assert_close(gigs_time_in_system(0.5, 1, 1.0, 0.0, 1.0).unwrap(), 1.5, 1e-12);
    }

    #[test]
    fn gigs_under_dispersion_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let s = rng.gen_range(1..=8usize);
            let rho = rng.gen_range(0.01..0.99);
            let mu = rng.gen_range(0.1..5.0);
            let ca2 = rng.gen_range(0.0..1.0);
            let under = gigs_time_in_system(rho, s, mu, ca2, 1.0).unwrap();
            let poisson = gigs_time_in_system(rho, s, mu, 1.0, 1.0).unwrap();
            assert!(under <= poisson + 1e-12);
        }
    }

    #[test]
    fn queue_eval_invariants() {
        let q = QueueEval::mms(0.6, 3, 2.0).unwrap();
        assert!(q.p_wait >= 0.0 && q.p_wait <= 1.0);
        assert!(q.w_total >= 1.0 / q.mu);
        let g = QueueEval::general(0.6, 3, 2.0, 1.0, 1.0).unwrap();
        assert!(g.w_total >= 1.0 / g.mu);
    }
}
