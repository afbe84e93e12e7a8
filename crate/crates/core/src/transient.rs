//! Transient behaviour of a single M/M/1 queue.
//!
//! With `ρ = λ/μ`, `γ(y) = 1 + ρ − 2√ρ cos y` and
//! `a_k(y) = sin(ky) − √ρ sin((k+1)y)`:
//!
//! ```text
//! p_ij(t)  = (2/π) ρ^((j−i)/2) ∫_0^π e^(−μtγ)/γ · a_i a_j dy  + (1−ρ)ρ^j  [ρ < 1, else 0]
//! EL_i(t)  = (2/π) ρ^((1−i)/2) ∫_0^π e^(−μtγ)/γ² · a_i sin y dy + ρ/(1−ρ)  [ρ < 1 only]
//! ```
//!
//! Both integrals are evaluated with [`crate::quadrature`]. The `ρ^(−i/2)`
//! prefactors amplify cancellation in the integral, so these routes are meant
//! for moderate initial counts (a few dozen at most).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poisson;
use crate::quadrature::{self, integrate_finite, QuadConfig};

/// Arrival and service rates of one M/M/1 queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    lambda: f64,
    mu: f64,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "arrival rate must be finite and >= 0, got {lambda}"
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "service rate must be finite and > 0, got {mu}"
            )));
        }
        Ok(QueueParams { lambda, mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn is_stable(&self) -> bool {
        self.lambda < self.mu
    }

    fn require_arrivals(&self) -> Result<()> {
        if self.lambda == 0.0 {
            return Err(Error::Domain(
                "the transient integral needs λ > 0; use the simulator or the pure-death ETT"
                    .into(),
            ));
        }
        Ok(())
    }

    fn require_stable(&self, what: &str) -> Result<()> {
        if !self.is_stable() {
            return Err(Error::Domain(format!(
                "{what} requires ρ < 1, got ρ = {}",
                self.rho()
            )));
        }
        Ok(())
    }
}

/// Erlang(n, μ): time to complete `n` exponential services.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangStage {
    n: u32,
    mu: f64,
    #[serde(skip)]
    log_norm: f64,
}

impl ErlangStage {
    pub fn new(n: u32, mu: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter(
                "Erlang stage count must be >= 1".into(),
            ));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Erlang rate must be finite and > 0, got {mu}"
            )));
        }
        let log_norm = f64::from(n) * mu.ln() - poisson::ln_factorial(u64::from(n - 1));
        Ok(ErlangStage { n, mu, log_norm })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mean(&self) -> f64 {
        f64::from(self.n) / self.mu
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t == 0.0 {
            if self.n == 1 {
                self.mu
            } else {
                0.0
            }
        } else {
            (self.log_norm + f64::from(self.n - 1) * t.ln() - self.mu * t).exp()
        }
    }

    /// `P(T_n > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        poisson::lower_cdf(self.mu * t, u64::from(self.n - 1))
    }
}

/// `μⁿ tⁿ⁻¹ e^(−μt) / (n−1)!`
pub fn erlang_pdf(stage: &ErlangStage, t: f64) -> f64 {
    stage.pdf(t)
}

/// Start count `i`, optional target count `j`, and elapsed time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientQuery {
    pub i: u32,
    pub j: Option<u32>,
    pub t: f64,
}

impl TransientQuery {
    pub fn prob(i: u32, j: u32, t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(TransientQuery { i, j: Some(j), t })
    }

    pub fn length(i: u32, t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(TransientQuery { i, j: None, t })
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// A computed value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// `1 + ρ − 2√ρ cos y`, written as `(1−√ρ)² + 4√ρ sin²(y/2)` so that it keeps
/// full relative accuracy near `y = 0` when `ρ ≈ 1`.
pub fn gamma_kernel(y: f64, rho: f64) -> f64 {
    let s = rho.sqrt();
    let h = (0.5 * y).sin();
    (1.0 - s) * (1.0 - s) + 4.0 * s * h * h
}

/// `sin(ky) − √ρ sin((k+1)y)`
pub fn a_kernel(k: u32, y: f64, rho: f64) -> f64 {
    let k = f64::from(k);
    (k * y).sin() - rho.sqrt() * ((k + 1.0) * y).sin()
}

// (2/π) ρ^{(j−i)/2}
fn prob_scale(i: u32, j: u32, rho: f64) -> f64 {
    2.0 / PI * (0.5 * (f64::from(j) - f64::from(i)) * rho.ln()).exp()
}

/// Base panel count for integrands oscillating like `a_i a_j`.
fn oscillation_panels(i: u32, j: u32) -> usize {
    64usize.max(8 * (i as usize + j as usize + 2))
}

// Coarser mesh for whole rows. Each target is checked against its own error
// estimate and redone adaptively if the mesh was too coarse for it.
fn shared_mesh_panels(i: u32, j: u32) -> usize {
    64usize.max(2 * (i as usize + j as usize + 2))
}

/// Accepts `raw` if it is inside `[lo, hi]` up to the rounding band, and
/// clamps it there. Anything further out means the quadrature is not trustworthy.
fn clamp_checked(raw: f64, err: f64, lo: f64, hi: f64, evaluations: usize) -> Result<f64> {
    let band = 1e-6 * (1.0 + err);
    if raw < lo - band || raw > hi + band || !raw.is_finite() {
        return Err(Error::NonConvergence {
            value: raw,
            error_estimate: err,
            evaluations,
        });
    }
    Ok(raw.clamp(lo, hi))
}

/// `p_ij(t)`: probability of `j` customers at time `t` starting from `i`.
pub fn transient_prob(
    query: &TransientQuery,
    params: &QueueParams,
    quad: &QuadConfig,
) -> Result<Estimate> {
    let (raw, evaluations) = prob_integral(query, params, quad)?;
    let value = clamp_checked(raw.value, raw.error_estimate, 0.0, 1.0, evaluations)?;
    Ok(Estimate { value, ..raw })
}

/// [`transient_prob`] before the final clamp into `[0, 1]`.
pub fn transient_prob_unclamped(
    query: &TransientQuery,
    params: &QueueParams,
    quad: &QuadConfig,
) -> Result<Estimate> {
    prob_integral(query, params, quad).map(|(e, _)| e)
}

fn prob_integral(
    query: &TransientQuery,
    params: &QueueParams,
    quad: &QuadConfig,
) -> Result<(Estimate, usize)> {
    let j = query
        .j
        .ok_or_else(|| Error::InvalidParameter("transient_prob needs a target count j".into()))?;
    check_time(query.t)?;
    params.require_arrivals()?;
    let (i, t) = (query.i, query.t);
    let rho = params.rho();
    let mu_t = params.mu() * t;

    let integrand = |y: f64| {
        let g = gamma_kernel(y, rho);
        (-mu_t * g).exp() / g * a_kernel(i, y, rho) * a_kernel(j, y, rho)
    };
    let scale = prob_scale(i, j, rho);
    let res = integrate_finite(
        integrand,
        0.0,
        PI,
        &quad
            .for_scaled(scale)
            .with_min_panels(oscillation_panels(i, j)),
    )?;

    let steady = if rho < 1.0 {
        (1.0 - rho) * rho.powi(j as i32)
    } else {
        0.0
    };
    let estimate = Estimate {
        value: scale * res.value + steady,
        error_estimate: scale * res.error_estimate,
    };
    Ok((estimate, res.evaluations))
}

/// `EL_i(t)`: expected number in system at time `t` starting from `i`.
/// Only defined here for `0 < ρ < 1`.
pub fn expected_length(
    i: u32,
    t: f64,
    params: &QueueParams,
    quad: &QuadConfig,
) -> Result<Estimate> {
    check_time(t)?;
    params.require_stable("the transient expected length")?;
    params.require_arrivals()?;
    let rho = params.rho();
    let mu_t = params.mu() * t;

    let integrand = |y: f64| {
        let g = gamma_kernel(y, rho);
        (-mu_t * g).exp() / (g * g) * a_kernel(i, y, rho) * y.sin()
    };
    let scale = prob_scale(i, 1, rho);
    let res = integrate_finite(
        integrand,
        0.0,
        PI,
        &quad
            .for_scaled(scale)
            .with_min_panels(oscillation_panels(i, 1)),
    )?;

    let raw = scale * res.value + rho / (1.0 - rho);
    let err = scale * res.error_estimate;
    let value = clamp_checked(raw, err, 0.0, f64::INFINITY, res.evaluations)?;
    Ok(Estimate {
        value,
        error_estimate: err,
    })
}

/// Truncation point for sums over target states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StateCap {
    /// [`state_cap`] evaluated at the query's `(i, t)`.
    #[default]
    Auto,
    Fixed(u32),
}

impl StateCap {
    pub fn resolve(&self, i: u32, t: f64, params: &QueueParams) -> u32 {
        match *self {
            StateCap::Auto => state_cap(i, t, params),
            StateCap::Fixed(n) => n,
        }
    }
}

/// `max(i, E[L]) + 10√max(i,1) + λt + 10√(λt+1)`, rounded up. `E[L]` is
/// dropped when the queue is unstable.
pub fn state_cap(i: u32, t: f64, params: &QueueParams) -> u32 {
    let i = f64::from(i);
    let center = if params.is_stable() {
        i.max(params.lambda() / (params.mu() - params.lambda()))
    } else {
        i
    };
    let lt = params.lambda() * t;
    let cap = center + 10.0 * i.max(1.0).sqrt() + lt + 10.0 * (lt + 1.0).sqrt();
    cap.ceil().min(f64::from(u32::MAX)) as u32
}

/// Bounds on what a state cap `cap` drops, from `L_i(t) <= i + A(t)` with
/// `A(t) ~ Poisson(λt)`: returns `(P(L > cap), E[L · 1{L > cap}])`.
pub(crate) fn truncation_tail(i: u32, t: f64, lambda: f64, cap: u32) -> (f64, f64) {
    let lt = lambda * t;
    if cap < i {
        return (1.0, f64::from(i) + lt);
    }
    let m = u64::from(cap - i);
    let mass = poisson::upper_tail(lt, m);
    (
        mass,
        f64::from(i) * mass + poisson::upper_partial_mean(lt, m),
    )
}

/// `p_i0(t), …, p_iN(t)` with `N` from `cap`, computed in parallel.
pub fn transient_row(
    i: u32,
    t: f64,
    params: &QueueParams,
    cap: StateCap,
    quad: &QuadConfig,
) -> Result<Vec<Estimate>> {
    check_time(t)?;
    params.require_arrivals()?;
    quad.validate()?;
    let n_max = cap.resolve(i, t, params);
    let dim = n_max as usize + 1;
    let rho = params.rho();
    let sqrt_rho = rho.sqrt();
    let mu_t = params.mu() * t;

    // All targets share one mesh. sin(ky) comes from repeated rotation, so a
    // node costs one exp and O(N) multiplies instead of N kernel calls.
    let mut sines = vec![0.0; dim + 1];
    let (values, errors) = quadrature::gk15_fixed_vector(
        |y, out: &mut [f64]| {
            let g = gamma_kernel(y, rho);
            let (s1, c1) = y.sin_cos();
            let (mut s, mut c) = (0.0, 1.0);
            for slot in sines.iter_mut() {
                *slot = s;
                (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            }
            let weight = (-mu_t * g).exp() / g * a_kernel(i, y, rho);
            for (j, o) in out.iter_mut().enumerate() {
                *o = weight * (sines[j] - sqrt_rho * sines[j + 1]);
            }
        },
        0.0,
        PI,
        quad.min_panels.max(shared_mesh_panels(i, n_max)),
        dim,
    );

    (0..=n_max)
        .map(|j| {
            let query = TransientQuery { i, j: Some(j), t };
            let scale = prob_scale(i, j, rho);
            let (v, e) = (values[j as usize], errors[j as usize]);
            if !e.is_finite() || e > quad.for_scaled(scale).target(v) {
                return transient_prob(&query, params, quad);
            }
            let steady = if rho < 1.0 {
                (1.0 - rho) * rho.powi(j as i32)
            } else {
                0.0
            };
            let err = scale * e;
            let value = clamp_checked(scale * v + steady, err, 0.0, 1.0, 0)?;
            Ok(Estimate {
                value,
                error_estimate: err,
            })
        })
        .collect()
}

/// `Σ_{n=0}^{N} n · p_in(t)`. Unlike [`expected_length`] this also covers
/// `ρ >= 1`. Fails if the tail dropped beyond `N` cannot be bounded by
/// `quad.truncation_tail_mass`.
pub fn expected_length_by_sum(
    i: u32,
    t: f64,
    params: &QueueParams,
    cap: StateCap,
    quad: &QuadConfig,
) -> Result<Estimate> {
    check_time(t)?;
    let n_max = cap.resolve(i, t, params);
    let (_, tail_moment) = truncation_tail(i, t, params.lambda(), n_max);
    if tail_moment > quad.truncation_tail_mass {
        return Err(Error::TruncationInsufficient {
            cap: n_max,
            tail_bound: tail_moment,
            tolerance: quad.truncation_tail_mass,
        });
    }
    if t == 0.0 {
        return Ok(Estimate {
            value: f64::from(i),
            error_estimate: 0.0,
        });
    }
    let row = transient_row(i, t, params, StateCap::Fixed(n_max), quad)?;
    let (value, err) = row
        .iter()
        .enumerate()
        .fold((0.0, tail_moment), |(v, e), (n, p)| {
            (v + n as f64 * p.value, e + n as f64 * p.error_estimate)
        });
    Ok(Estimate {
        value,
        error_estimate: err,
    })
}

/// `λ/(μ−λ)`, the long-run mean number in system.
pub fn steady_state_length(params: &QueueParams) -> Result<f64> {
    params.require_stable("the steady-state length")?;
    Ok(params.lambda() / (params.mu() - params.lambda()))
}

/// `d EL_i / dt` at `t = 0`, which is `λ − μ` for every `i >= 1`.
/// For `i = 0` the slope is `λ` instead.
pub fn initial_slope(params: &QueueParams) -> f64 {
    params.lambda() - params.mu()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn p34() -> QueueParams {
        QueueParams::new(3.0, 4.0).unwrap()
    }

    fn quad() -> QuadConfig {
        QuadConfig::default()
    }

    fn prob(i: u32, j: u32, t: f64, params: &QueueParams) -> f64 {
        transient_prob(&TransientQuery::prob(i, j, t).unwrap(), params, &quad())
            .unwrap()
            .value
    }

    #[test]
    fn gamma_values() {
        assert!(gamma_kernel(0.0, 1.0).abs() < 1e-300);
        assert!((gamma_kernel(FRAC_PI_2, 0.75) - 1.75).abs() < 1e-15);
        // 1.75 + 2·√0.75
        assert!((gamma_kernel(PI, 0.75) - 3.482_050_807_568_877).abs() < 1e-14);
    }

    #[test]
    fn a_values() {
        assert!(a_kernel(0, PI, 0.75).abs() < 1e-15);
        for k in [0, 1, 5, 40] {
            assert_eq!(a_kernel(k, 0.0, 0.3), 0.0);
        }
        assert!((a_kernel(1, FRAC_PI_2, 0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn erlang_values() {
        let e = ErlangStage::new(1, 4.0).unwrap();
        assert_eq!(erlang_pdf(&e, 0.0), 4.0);
        let e = ErlangStage::new(4, 4.0).unwrap();
        // 256/6 · e^-4
        assert!((erlang_pdf(&e, 1.0) - 0.781_467_259_252_658_3).abs() < 1e-14);
        let e = ErlangStage::new(2, 1.0).unwrap();
        assert_eq!(erlang_pdf(&e, 0.0), 0.0);
        assert!(ErlangStage::new(0, 1.0).is_err());
        assert!(ErlangStage::new(1, 0.0).is_err());
    }

    #[test]
    fn erlang_survival() {
        let e = ErlangStage::new(1, 2.0).unwrap();
        assert!((e.survival(0.7) - (-1.4f64).exp()).abs() < 1e-15);
        let e = ErlangStage::new(3, 1.0).unwrap();
        let x: f64 = 2.5;
        let direct = (-x).exp() * (1.0 + x + x * x / 2.0);
        assert!((e.survival(x) - direct).abs() < 1e-15);
    }

    #[test]
    fn initial_condition() {
        let p = p34();
        assert!((prob(5, 5, 0.0, &p) - 1.0).abs() < 1e-6);
        assert!(prob(5, 4, 0.0, &p).abs() < 1e-6);
    }

    #[test]
    fn large_time_limit() {
        assert!((prob(3, 0, 50.0, &p34()) - 0.25).abs() < 1e-4);
    }

    #[test]
    fn critical_load_is_evaluable() {
        let p = QueueParams::new(4.0, 4.0).unwrap();
        assert!((prob(2, 2, 0.0, &p) - 1.0).abs() < 1e-6);
        let total: f64 = transient_row(2, 1.0, &p, StateCap::Auto, &quad())
            .unwrap()
            .iter()
            .map(|e| e.value)
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn rejects_zero_arrivals() {
        let p = QueueParams::new(0.0, 1.0).unwrap();
        let q = TransientQuery::prob(3, 1, 1.0).unwrap();
        assert!(matches!(
            transient_prob(&q, &p, &quad()),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            expected_length(3, 1.0, &p, &quad()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn missing_target_rejected() {
        let q = TransientQuery::length(3, 1.0).unwrap();
        assert!(matches!(
            transient_prob(&q, &p34(), &quad()),
            Err(Error::InvalidParameter(_))
        ));
        assert!(TransientQuery::prob(1, 1, -1.0).is_err());
        assert!(TransientQuery::prob(1, 1, f64::NAN).is_err());
    }

    #[test]
    fn expected_length_examples() {
        let p = p34();
        let el = |i, t| expected_length(i, t, &p, &quad()).unwrap().value;
        assert!((el(7, 0.0) - 7.0).abs() < 1e-6);
        assert!((el(0, 100.0) - 3.0).abs() < 1e-3);
        assert!((el(7, 1.0) - 6.0).abs() < 0.3);
        assert!((el(3, 2.0) - 2.6).abs() < 0.2);
    }

    #[test]
    fn expected_length_needs_stability() {
        for (l, m) in [(4.0, 4.0), (5.0, 4.0)] {
            let p = QueueParams::new(l, m).unwrap();
            assert!(matches!(
                expected_length(1, 1.0, &p, &quad()),
                Err(Error::Domain(_))
            ));
            assert!(matches!(steady_state_length(&p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn sum_route_matches_integral() {
        let p = p34();
        let by_sum = expected_length_by_sum(7, 1.0, &p, StateCap::Auto, &quad()).unwrap();
        let direct = expected_length(7, 1.0, &p, &quad()).unwrap();
        assert!((by_sum.value - direct.value).abs() < 1e-4);
        let zero = expected_length_by_sum(0, 0.0, &p, StateCap::Auto, &quad()).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn small_cap_is_rejected() {
        let r = expected_length_by_sum(7, 1.0, &p34(), StateCap::Fixed(8), &quad());
        assert!(
            matches!(r, Err(Error::TruncationInsufficient { cap: 8, .. })),
            "{r:?}"
        );
    }

    #[test]
    fn steady_state_values() {
        assert_eq!(steady_state_length(&p34()).unwrap(), 3.0);
        assert_eq!(
            steady_state_length(&QueueParams::new(9.0, 10.0).unwrap()).unwrap(),
            9.0
        );
        assert_eq!(
            steady_state_length(&QueueParams::new(0.0, 1.0).unwrap()).unwrap(),
            0.0
        );
    }

    #[test]
    fn slope_values() {
        assert_eq!(initial_slope(&p34()), -1.0);
        assert_eq!(initial_slope(&QueueParams::new(9.0, 10.0).unwrap()), -1.0);
        assert_eq!(initial_slope(&QueueParams::new(2.5, 2.5).unwrap()), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(QueueParams::new(-1.0, 1.0).is_err());
        assert!(QueueParams::new(1.0, 0.0).is_err());
        assert!(QueueParams::new(f64::NAN, 1.0).is_err());
        assert_eq!(QueueParams::new(3.0, 4.0).unwrap().rho(), 0.75);
    }

    #[test]
    fn cap_formula() {
        // max(7, 3) + 10√7 + 3 + 10√4 = 7 + 26.457… + 3 + 20
        assert_eq!(state_cap(7, 1.0, &p34()), 57);
        let (mass, moment) = truncation_tail(7, 1.0, 3.0, 57);
        assert!(mass < 1e-20 && moment < 1e-18);
    }
}
