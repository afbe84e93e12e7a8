//! Expected total time (ETT) for the special customer, per visiting order.
//!
//! `ETT_ab` always means the queue holding `a` customers is joined first:
//!
//! ```text
//! ETT_ab = (a+2)/μ + (1/μ) ∫_0^∞ f_{a+1}(t) EL_b(t) dt
//!        = (a+1)/μ + ∫_0^∞ f_{a+1}(t) Σ_n p_bn(t) (n+1)/μ dt
//! ```
//!
//! The first line is [`ett`], the second [`ett_sum_form`]. They are computed
//! through different transient formulas and serve as checks on each other.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poisson;
use crate::quadrature::{integrate_erlang_weighted, GrowthEnvelope, QuadConfig};
use crate::transient::{
    expected_length, steady_state_length, transient_row, truncation_tail, ErlangStage, Estimate,
    QueueParams, StateCap,
};

/// Two queues with identical rates; `a` in the queue visited first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: QueueParams,
    pub a: u32,
    pub b: u32,
}

impl Scenario {
    pub fn new(params: QueueParams, a: u32, b: u32) -> Self {
        Scenario { params, a, b }
    }

    pub fn reversed(&self) -> Self {
        Scenario {
            params: self.params,
            a: self.b,
            b: self.a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recommendation {
    ShorterFirst,
    LongerFirst,
    Tie,
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::ShorterFirst => "shorter-first",
            Recommendation::LongerFirst => "longer-first",
            Recommendation::Tie => "tie",
        })
    }
}

/// Position of the two initial lengths relative to the steady-state mean `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    /// `min < E < max`
    Case1,
    /// both below `E`
    Case2,
    /// both above `E`
    Case3,
    /// one of them equals `E`
    Boundary,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseLabel::Case1 => "Case1",
            CaseLabel::Case2 => "Case2",
            CaseLabel::Case3 => "Case3",
            CaseLabel::Boundary => "Boundary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EttReport {
    pub a: u32,
    pub b: u32,
    pub ett_ab: f64,
    pub ett_ba: f64,
    pub recommended_order: Recommendation,
    pub case_label: CaseLabel,
    /// Sum of the two orders' error estimates.
    pub error_estimate: f64,
}

impl EttReport {
    /// `ett_ab − ett_ba`
    pub fn gap(&self) -> f64 {
        self.ett_ab - self.ett_ba
    }
}

/// Exact ETT with queue `a` first, through the closed transient mean.
///
/// Needs `ρ < 1`. With `λ = 0` the answer comes from [`ett_pure_death`].
pub fn ett(scenario: &Scenario, quad: &QuadConfig) -> Result<Estimate> {
    let params = &scenario.params;
    if params.lambda() == 0.0 {
        return Ok(Estimate {
            value: ett_pure_death(scenario.a, scenario.b, params.mu()),
            error_estimate: 0.0,
        });
    }
    steady_state_length(params)?;
    let mu = params.mu();
    let stage = ErlangStage::new(scenario.a + 1, mu)?;
    // EL_b(t) <= b + λt
    let envelope = GrowthEnvelope::new(f64::from(scenario.b) / mu, params.lambda() / mu)?;

    let inner_err = std::cell::Cell::new(0.0f64);
    let res = integrate_erlang_weighted(
        |t| {
            let el = expected_length(scenario.b, t, params, quad)?;
            inner_err.set(inner_err.get().max(el.error_estimate));
            Ok(el.value / mu)
        },
        &stage,
        &envelope,
        quad,
    )?;
    Ok(Estimate {
        value: f64::from(scenario.a + 2) / mu + res.value,
        error_estimate: res.error_estimate + inner_err.get() / mu,
    })
}

/// ETT for `λ = 0`: queue 2 only drains, so the special customer finishes at
/// `max(T_{a+1}, S_b) + Exp(μ)`. Counting how many of the `b` services finish
/// before the `(a+1)`-th service in queue 1 (a fair race between two rate-μ
/// streams) gives
/// `(a+2)/μ + Σ_{k<b} (b−k)/μ · C(a+k, k) 2^−(a+1+k)`.
pub fn ett_pure_death(a: u32, b: u32, mu: f64) -> f64 {
    let a64 = u64::from(a);
    let ln2 = std::f64::consts::LN_2;
    let lf_a = poisson::ln_factorial(a64);
    let residual: f64 = (0..u64::from(b))
        .map(|k| {
            let ln_binom = poisson::ln_factorial(a64 + k) - lf_a - poisson::ln_factorial(k);
            let weight = (ln_binom - (a64 + 1 + k) as f64 * ln2).exp();
            (u64::from(b) - k) as f64 * weight
        })
        .sum();
    (f64::from(a) + 2.0 + residual) / mu
}

/// ETT with queue `a` first, through the sum over `p_bn(t)`, exactly as in the
/// first step of the derivation. Valid for any `λ > 0`, including `ρ >= 1`.
pub fn ett_sum_form(scenario: &Scenario, quad: &QuadConfig, cap: StateCap) -> Result<Estimate> {
    let params = &scenario.params;
    let mu = params.mu();
    let b = scenario.b;
    let stage = ErlangStage::new(scenario.a + 1, mu)?;
    // Σ p_bn (n+1)/μ = (EL_b + 1)/μ <= (b + 1 + λt)/μ
    let envelope = GrowthEnvelope::new(f64::from(b + 1) / mu, params.lambda() / mu)?;

    let inner_err = std::cell::Cell::new(0.0f64);
    let res = integrate_erlang_weighted(
        |t| {
            let n_max = cap.resolve(b, t, params);
            let (tail_mass, tail_moment) = truncation_tail(b, t, params.lambda(), n_max);
            let tail = tail_mass + tail_moment;
            if tail > quad.truncation_tail_mass {
                return Err(Error::TruncationInsufficient {
                    cap: n_max,
                    tail_bound: tail,
                    tolerance: quad.truncation_tail_mass,
                });
            }
            let row = transient_row(b, t, params, StateCap::Fixed(n_max), quad)?;
            let (sum, err) = row.iter().enumerate().fold((0.0, tail), |(s, e), (n, p)| {
                let w = (n + 1) as f64;
                (s + p.value * w, e + p.error_estimate * w)
            });
            inner_err.set(inner_err.get().max(err));
            Ok(sum / mu)
        },
        &stage,
        &envelope,
        quad,
    )?;
    Ok(Estimate {
        value: f64::from(scenario.a + 1) / mu + res.value,
        error_estimate: res.error_estimate + inner_err.get() / mu,
    })
}

/// Case taxonomy of the initial lengths against `E = λ/(μ−λ)`.
pub fn classify_case(params: &QueueParams, a: u32, b: u32) -> Result<CaseLabel> {
    let mean = steady_state_length(params)?;
    let lo = f64::from(a.min(b));
    let hi = f64::from(a.max(b));
    Ok(if lo == mean || hi == mean {
        CaseLabel::Boundary
    } else if hi < mean {
        CaseLabel::Case2
    } else if lo > mean {
        CaseLabel::Case3
    } else {
        CaseLabel::Case1
    })
}

/// ETT for both orders and the better one. Differences within twice the
/// combined error estimate are reported as a tie.
pub fn compare_orders(
    params: &QueueParams,
    a: u32,
    b: u32,
    quad: &QuadConfig,
) -> Result<EttReport> {
    let case_label = classify_case(params, a, b)?;
    let forward = ett(&Scenario::new(*params, a, b), quad)?;
    let backward = if a == b {
        forward
    } else {
        ett(&Scenario::new(*params, b, a), quad)?
    };
    let error_estimate = forward.error_estimate + backward.error_estimate;
    let gap = forward.value - backward.value;
    let recommended_order = if a == b || gap.abs() <= 2.0 * error_estimate {
        Recommendation::Tie
    } else if (gap < 0.0) == (a < b) {
        Recommendation::ShorterFirst
    } else {
        Recommendation::LongerFirst
    };
    Ok(EttReport {
        a,
        b,
        ett_ab: forward.value,
        ett_ba: backward.value,
        recommended_order,
        case_label,
        error_estimate,
    })
}

fn require_draining(params: &QueueParams) -> Result<()> {
    if params.mu() <= params.lambda() {
        return Err(Error::Domain(format!(
            "fluid approximation assumes μ > λ, got λ = {}, μ = {}",
            params.lambda(),
            params.mu()
        )));
    }
    Ok(())
}

/// Straight-line fluid estimate: the second queue drains at `μ − λ` while the
/// customer is in the first. The drained length is floored at zero.
pub fn fluid_linear(params: &QueueParams, a: u32, b: u32) -> Result<f64> {
    require_draining(params)?;
    let mu = params.mu();
    let first = f64::from(a + 1) / mu;
    let remaining = (f64::from(b) - (mu - params.lambda()) * first).max(0.0);
    Ok(first + (remaining + 1.0) / mu)
}

/// Fluid estimate that reads the second queue's length off the exact
/// `EL_b` curve at the mean first-stage time `(a+1)/μ`.
pub fn fluid_curve(params: &QueueParams, a: u32, b: u32, quad: &QuadConfig) -> Result<f64> {
    require_draining(params)?;
    let mu = params.mu();
    let first = f64::from(a + 1) / mu;
    let el = expected_length(b, first, params, quad)?;
    Ok(first + (el.value + 1.0) / mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: u32,
    pub b: u32,
    pub ett_ab: f64,
    pub ett_ba: f64,
    pub winner: Recommendation,
    pub case: CaseLabel,
}

impl From<EttReport> for SweepRow {
    fn from(r: EttReport) -> Self {
        SweepRow {
            a: r.a,
            b: r.b,
            ett_ab: r.ett_ab,
            ett_ba: r.ett_ba,
            winner: r.recommended_order,
            case: r.case_label,
        }
    }
}

/// Evaluates the grid concurrently and hands rows to `sink` in `(a, b)` order.
/// Rows before the first failing cell are delivered before the error returns.
pub fn sweep_each<F>(
    params: &QueueParams,
    a_values: &[u32],
    b_values: &[u32],
    quad: &QuadConfig,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(SweepRow) -> Result<()>,
{
    let cells: Vec<(u32, u32)> = a_values
        .iter()
        .flat_map(|&a| b_values.iter().map(move |&b| (a, b)))
        .collect();
    // Chunks keep every thread busy while still delivering rows early.
    let chunk = 4 * rayon::current_num_threads().max(1);
    for cells in cells.chunks(chunk) {
        let results: Vec<Result<SweepRow>> = cells
            .par_iter()
            .map(|&(a, b)| compare_orders(params, a, b, quad).map(SweepRow::from))
            .collect();
        for row in results {
            sink(row?)?;
        }
    }
    Ok(())
}

pub fn sweep(
    params: &QueueParams,
    a_values: &[u32],
    b_values: &[u32],
    quad: &QuadConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(a_values.len() * b_values.len());
    sweep_each(params, a_values, b_values, quad, |row| {
        rows.push(row);
        Ok(())
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(l: f64, m: f64) -> QueueParams {
        QueueParams::new(l, m).unwrap()
    }

    fn quad() -> QuadConfig {
        QuadConfig::default()
    }

    fn ett_value(l: f64, m: f64, a: u32, b: u32) -> f64 {
        ett(&Scenario::new(p(l, m), a, b), &quad()).unwrap().value
    }

    #[test]
    fn reference_values() {
        assert!((ett_value(3.0, 4.0, 3, 7) - 2.760_732_021).abs() < 1e-6);
        assert!((ett_value(3.0, 4.0, 7, 3) - 2.856_035_058).abs() < 1e-6);
        assert!((ett_value(3.0, 4.0, 12, 10) - 5.2599).abs() < 5e-5);
        assert!((ett_value(9.0, 10.0, 8, 9) - 1.8181).abs() < 5e-5);
    }

    #[test]
    fn unstable_rejected() {
        let r = ett(&Scenario::new(p(4.0, 4.0), 1, 1), &quad());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn pure_death_closed_form() {
        assert_eq!(ett_pure_death(0, 0, 4.0), 0.5);
        // a = 0, b = 1: max(Exp, Exp) has mean 3/(2μ), plus one service
        assert!((ett_pure_death(0, 1, 2.0) - (1.5 + 1.0) / 2.0).abs() < 1e-15);
        let e = ett(&Scenario::new(p(0.0, 4.0), 0, 0), &quad()).unwrap();
        assert_eq!(e.value, 0.5);
    }

    #[test]
    fn sum_form_small_instances() {
        let s = Scenario::new(p(3.0, 4.0), 0, 0);
        let direct = ett(&s, &quad()).unwrap().value;
        let summed = ett_sum_form(&s, &quad(), StateCap::Auto).unwrap().value;
        assert!((direct - summed).abs() < 1e-4);
        let s = Scenario::new(p(1e-3, 4.0), 0, 0);
        let summed = ett_sum_form(&s, &quad(), StateCap::Auto).unwrap().value;
        assert!((summed - 0.5).abs() < 1e-3, "{summed}");
    }

    #[test]
    fn comparisons() {
        let q = quad();
        let r = compare_orders(&p(3.0, 4.0), 3, 7, &q).unwrap();
        assert_eq!(r.recommended_order, Recommendation::ShorterFirst);
        let r = compare_orders(&p(3.0, 4.0), 10, 12, &q).unwrap();
        assert_eq!(r.recommended_order, Recommendation::LongerFirst);
        let r = compare_orders(&p(3.0, 4.0), 5, 5, &q).unwrap();
        assert_eq!(r.recommended_order, Recommendation::Tie);
        assert_eq!(r.ett_ab, r.ett_ba);
        // argument order does not change the recommendation
        let r = compare_orders(&p(3.0, 4.0), 12, 10, &q).unwrap();
        assert_eq!(r.recommended_order, Recommendation::LongerFirst);
    }

    #[test]
    fn case_labels() {
        assert_eq!(classify_case(&p(3.0, 4.0), 5, 9).unwrap(), CaseLabel::Case3);
        assert_eq!(
            classify_case(&p(9.0, 10.0), 8, 9).unwrap(),
            CaseLabel::Boundary
        );
        assert_eq!(classify_case(&p(3.0, 4.0), 1, 2).unwrap(), CaseLabel::Case2);
        assert_eq!(classify_case(&p(3.0, 4.0), 2, 7).unwrap(), CaseLabel::Case1);
        assert_eq!(classify_case(&p(3.0, 4.0), 7, 2).unwrap(), CaseLabel::Case1);
        assert!(classify_case(&p(4.0, 4.0), 1, 2).is_err());
    }

    #[test]
    fn fluid_arithmetic() {
        let q = p(3.0, 4.0);
        assert_eq!(fluid_linear(&q, 500, 1000).unwrap(), 344.1875);
        assert_eq!(fluid_linear(&q, 1000, 500).unwrap(), 312.9375);
        assert_eq!(fluid_linear(&q, 3, 7).unwrap(), 2.75);
        // b drains to zero before the customer arrives
        assert_eq!(fluid_linear(&q, 7, 0).unwrap(), 2.0 + 0.25);
        assert!(fluid_linear(&p(4.0, 4.0), 1, 1).is_err());
    }

    #[test]
    fn fluid_curve_values() {
        let q = p(3.0, 4.0);
        assert!((fluid_curve(&q, 3, 7, &quad()).unwrap() - 2.75).abs() < 0.07);
        assert!((fluid_curve(&q, 7, 3, &quad()).unwrap() - 2.9).abs() < 0.07);
        let direct = 0.25 + (expected_length(0, 0.25, &q, &quad()).unwrap().value + 1.0) / 4.0;
        assert_eq!(fluid_curve(&q, 0, 0, &quad()).unwrap(), direct);
    }

    #[test]
    fn sweep_rows_ordered() {
        let rows = sweep(&p(3.0, 4.0), &[12, 10], &[10, 12], &quad()).unwrap();
        let cells: Vec<_> = rows.iter().map(|r| (r.a, r.b)).collect();
        assert_eq!(cells, vec![(12, 10), (12, 12), (10, 10), (10, 12)]);
        for r in &rows {
            if r.a == r.b {
                assert_eq!(r.winner, Recommendation::Tie);
            }
        }
    }

    #[test]
    fn sweep_flushes_rows_before_failure() {
        let mut seen = Vec::new();
        let r = sweep_each(&p(3.0, 4.0), &[1, 2], &[1], &quad(), |row| {
            if row.a == 2 {
                return Err(Error::Domain("stop".into()));
            }
            seen.push(row);
            Ok(())
        });
        assert!(r.is_err());
        assert_eq!(seen.len(), 1);
    }
}
