//! Brute-force oracles on a truncated state space. They share no code with the
//! library's integral formulas.

#![allow(dead_code)]

/// Row `i` of `P(t) = exp(Qt)` for the M/M/1 generator on states `0..=cap`,
/// by uniformization. Births are switched off at `cap`.
pub fn uniformized_row(lambda: f64, mu: f64, i: usize, t: f64, cap: usize) -> Vec<f64> {
    let rate = lambda + mu;
    let step = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (n, &p) in v.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let up = if n < cap { lambda / rate } else { 0.0 };
            let down = if n > 0 { mu / rate } else { 0.0 };
            out[n] += p * (1.0 - up - down);
            if n < cap {
                out[n + 1] += p * up;
            }
            if n > 0 {
                out[n - 1] += p * down;
            }
        }
        out
    };

    let x = rate * t;
    let mut v = vec![0.0; cap + 1];
    v[i] = 1.0;
    let mut row = vec![0.0; cap + 1];
    let mut acc = 0.0;
    let mut log_weight = -x;
    let mut k = 0usize;
    loop {
        let weight = log_weight.exp();
        for (r, p) in row.iter_mut().zip(&v) {
            *r += weight * p;
        }
        acc += weight;
        if (k as f64) > x && (1.0 - acc < 1e-15 || (k as f64) > x + 40.0 * x.sqrt() + 50.0) {
            break;
        }
        k += 1;
        log_weight += x.ln() - (k as f64).ln();
        v = step(&v);
    }
    row
}

pub fn uniformized_mean(lambda: f64, mu: f64, i: usize, t: f64, cap: usize) -> f64 {
    uniformized_row(lambda, mu, i, t, cap)
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum()
}

/// `E[TT_ab]` through the resolvent: for `T ~ Erlang(a+1, μ)` independent of
/// the queue, the law of `L_b(T)` is `e_b (μ(μI − Q)^{-1})^{a+1}`. Each factor
/// is one tridiagonal solve.
pub fn resolvent_ett(lambda: f64, mu: f64, a: usize, b: usize, cap: usize) -> f64 {
    let n = cap + 1;
    // row vector x solves x (μI − Q) = μ v, i.e. (μI − Q)^T x^T = μ v^T
    // (μI − Q)^T has diagonal μ + λ1{n<cap} + μ1{n>0},
    // sub-diagonal entry (n, n−1) = −λ, super-diagonal (n, n+1) = −μ.
    let diag: Vec<f64> = (0..n)
        .map(|s| mu + if s < cap { lambda } else { 0.0 } + if s > 0 { mu } else { 0.0 })
        .collect();
    let lower = -lambda;
    let upper = -mu;

    let solve = |rhs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper / diag[0];
        d[0] = rhs[0] / diag[0];
        for s in 1..n {
            let m = diag[s] - lower * c[s - 1];
            c[s] = upper / m;
            d[s] = (rhs[s] - lower * d[s - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for s in (0..n - 1).rev() {
            x[s] = d[s] - c[s] * x[s + 1];
        }
        x
    };

    let mut v = vec![0.0; n];
    v[b] = 1.0;
    for _ in 0..=a {
        let rhs: Vec<f64> = v.iter().map(|x| mu * x).collect();
        v = solve(&rhs);
    }
    let mean: f64 = v.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
    (a as f64 + 2.0) / mu + mean / mu
}

/// The eight published scenarios `(λ, μ, a, b, printed ETT)`.
pub const PUBLISHED: [(f64, f64, u32, u32, f64); 8] = [
    (3.0, 4.0, 3, 7, 2.7607),
    (3.0, 4.0, 7, 3, 2.8560),
    (3.0, 4.0, 10, 12, 5.3301),
    (3.0, 4.0, 12, 10, 5.2599),
    (3.0, 4.0, 5, 9, 3.6354),
    (3.0, 4.0, 9, 5, 3.6254),
    (9.0, 10.0, 8, 9, 1.8181),
    (9.0, 10.0, 9, 8, 1.8177),
];
