//! Seeded Monte Carlo oracle.
//!
//! Replications are grouped into fixed batches of [`BATCH_SIZE`]. Batch `k`
//! draws from a ChaCha8 generator keyed by `(seed, stream_id)` on ChaCha
//! stream `k`. Batch statistics are merged by a fixed pairwise tree, so
//! results are bit-identical however rayon schedules the batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ett::Scenario;
use crate::transient::QueueParams;

pub const BATCH_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: u64,
    pub seed: u64,
    pub stream_id: u64,
}

impl SimConfig {
    pub fn new(replications: u64, seed: u64) -> Self {
        SimConfig {
            replications,
            seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        SimConfig { stream_id, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        Ok(())
    }

    fn batch_rng(&self, batch: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(batch);
        rng
    }

    fn batches(&self) -> u64 {
        self.replications.div_ceil(BATCH_SIZE)
    }

    fn batch_len(&self, batch: u64) -> u64 {
        (self.replications - batch * BATCH_SIZE).min(BATCH_SIZE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(replications)`.
    pub std_error: f64,
    pub replications: u64,
    pub seed: u64,
}

impl SimEstimate {
    /// Whether `value` lies within `mean ± k·std_error`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.std_error
    }
}

/// How [`simulate_ett_with`] produces one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    /// Erlang first stage, birth–death path of the second queue up to the
    /// handover, Erlang second stage.
    #[default]
    TwoStage,
    /// Both queues simulated event by event, arrivals to the first included.
    FullEvent,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn from_samples(xs: impl Iterator<Item = f64>) -> Self {
        let mut m = Moments {
            count: 0,
            mean: 0.0,
            m2: 0.0,
        };
        for x in xs {
            m.count += 1;
            let delta = x - m.mean;
            m.mean += delta / m.count as f64;
            m.m2 += delta * (x - m.mean);
        }
        m
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        let mean = a.mean + delta * b.count as f64 / count as f64;
        let m2 = a.m2 + b.m2 + delta * delta * (a.count as f64 * b.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }
}

fn tree_merge(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::from_samples(std::iter::empty()),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            Moments::merge(tree_merge(l), tree_merge(r))
        }
    }
}

/// Runs `sampler` once per replication and returns the mean with its
/// standard error.
pub fn monte_carlo<F>(cfg: &SimConfig, sampler: F) -> Result<SimEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    cfg.validate()?;
    let parts: Vec<Moments> = (0..cfg.batches())
        .into_par_iter()
        .map(|k| {
            let mut rng = cfg.batch_rng(k);
            Moments::from_samples((0..cfg.batch_len(k)).map(|_| sampler(&mut rng)))
        })
        .collect();
    let total = tree_merge(&parts);
    let n = total.count as f64;
    let variance = if total.count > 1 {
        total.m2 / (n - 1.0)
    } else {
        0.0
    };
    Ok(SimEstimate {
        mean: total.mean,
        std_error: (variance / n).sqrt(),
        replications: cfg.replications,
        seed: cfg.seed,
    })
}

/// Every replication's sample, in replication order.
pub fn replication_samples<F>(cfg: &SimConfig, sampler: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    cfg.validate()?;
    let batches: Vec<Vec<f64>> = (0..cfg.batches())
        .into_par_iter()
        .map(|k| {
            let mut rng = cfg.batch_rng(k);
            (0..cfg.batch_len(k)).map(|_| sampler(&mut rng)).collect()
        })
        .collect();
    Ok(batches.concat())
}

fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Time to complete `n` services at rate `mu`.
pub fn sample_erlang<R: Rng + ?Sized>(n: u64, mu: f64, rng: &mut R) -> f64 {
    if n == 0 {
        return 0.0;
    }
    Gamma::new(n as f64, 1.0 / mu)
        .expect("shape and scale are positive")
        .sample(rng)
}

/// One exact draw of `L_b(horizon)` for the birth–death chain with birth rate
/// `λ` and death rate `μ` while nonempty.
pub fn sample_queue_length<R: Rng + ?Sized>(
    b: u64,
    horizon: f64,
    params: &QueueParams,
    rng: &mut R,
) -> u64 {
    let (lambda, mu) = (params.lambda(), params.mu());
    let mut n = b;
    let mut t = 0.0;
    loop {
        let rate = lambda + if n > 0 { mu } else { 0.0 };
        if rate == 0.0 {
            return n;
        }
        t += exponential(rate, rng);
        if t > horizon {
            return n;
        }
        if rng.random::<f64>() * rate < lambda {
            n += 1;
        } else {
            n -= 1;
        }
    }
}

/// Total time of one replication, queue `a` first.
pub fn sample_total_time<R: Rng + ?Sized>(
    scenario: &Scenario,
    method: SimMethod,
    rng: &mut R,
) -> f64 {
    match method {
        SimMethod::TwoStage => two_stage(scenario, rng),
        SimMethod::FullEvent => full_event(scenario, rng),
    }
}

fn two_stage<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> f64 {
    let mu = s.params.mu();
    let first = sample_erlang(u64::from(s.a) + 1, mu, rng);
    let waiting = sample_queue_length(u64::from(s.b), first, &s.params, rng);
    first + sample_erlang(waiting + 1, mu, rng)
}

fn full_event<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> f64 {
    let (lambda, mu) = (s.params.lambda(), s.params.mu());
    // customers ahead of the special one, special included
    let mut ahead = u64::from(s.a) + 1;
    let mut other = u64::from(s.b);
    let mut t = 0.0;

    while ahead > 0 {
        let serve_other = if other > 0 { mu } else { 0.0 };
        let rate = lambda + mu + lambda + serve_other;
        t += exponential(rate, rng);
        let u = rng.random::<f64>() * rate;
        if u < lambda {
            // arrival to the first queue, behind the special customer
        } else if u < lambda + mu {
            ahead -= 1;
        } else if u < 2.0 * lambda + mu {
            other += 1;
        } else {
            other -= 1;
        }
    }

    // later arrivals to the second queue queue up behind the special customer
    let mut ahead = other + 1;
    while ahead > 0 {
        t += exponential(mu, rng);
        ahead -= 1;
    }
    t
}

/// Monte Carlo estimate of `ETT_ab` with the two-stage decomposition.
pub fn simulate_ett(scenario: &Scenario, cfg: &SimConfig) -> Result<SimEstimate> {
    simulate_ett_with(scenario, cfg, SimMethod::TwoStage)
}

pub fn simulate_ett_with(
    scenario: &Scenario,
    cfg: &SimConfig,
    method: SimMethod,
) -> Result<SimEstimate> {
    monte_carlo(cfg, |rng| sample_total_time(scenario, method, rng))
}

/// Fraction of replications with `L_i(t) = j`.
pub fn simulate_pij(
    i: u64,
    j: u64,
    t: f64,
    params: &QueueParams,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    check_horizon(t)?;
    monte_carlo(cfg, |rng| {
        if sample_queue_length(i, t, params, rng) == j {
            1.0
        } else {
            0.0
        }
    })
}

/// Mean of `L_i(t)`.
pub fn simulate_length(
    i: u64,
    t: f64,
    params: &QueueParams,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    check_horizon(t)?;
    monte_carlo(cfg, |rng| sample_queue_length(i, t, params, rng) as f64)
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}
