//! Adaptive 15-point Gauss–Kronrod quadrature.
//!
//! Every node of the Kronrod rule lies strictly inside its panel, so integrands
//! are never evaluated at `lo` or `hi`. That is what makes the `rho = 1`
//! transient integrals (removable singularity at `y = 0`) usable without a
//! special case.
//!
//! The interval is first cut into `min_panels` equal panels. The panel with the
//! largest error estimate is then bisected until the summed estimate meets
//! `max(abs_tol, rel_tol * |value|)`, or a panel reaches `max_refinements`
//! bisections.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poisson;
use crate::transient::ErlangStage;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const EVALS_PER_PANEL: usize = 15;
const MAX_PANELS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections applied to any single base panel.
    pub max_refinements: u32,
    pub min_panels: usize,
    /// Bound on the neglected contribution past the Erlang cutoff.
    pub truncation_tail_mass: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_refinements: 40,
            min_panels: 16,
            truncation_tail_mass: 1e-12,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.rel_tol)
            || !positive(self.abs_tol)
            || !positive(self.truncation_tail_mass)
        {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive and finite: {self:?}"
            )));
        }
        if self.max_refinements < 1 || self.min_panels < 1 {
            return Err(Error::InvalidParameter(format!(
                "max_refinements and min_panels must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Same tolerances, every one scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        QuadConfig {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            truncation_tail_mass: self.truncation_tail_mass / factor,
            ..*self
        }
    }

    pub(crate) fn with_min_panels(&self, panels: usize) -> Self {
        QuadConfig {
            min_panels: self.min_panels.max(panels),
            ..*self
        }
    }

    /// Loosens the absolute tolerance for an integral that is multiplied by
    /// `scale < 1` afterwards. Larger scales keep `abs_tol` as is, since the
    /// tighter target would sit below the rounding floor.
    pub(crate) fn for_scaled(&self, scale: f64) -> Self {
        QuadConfig {
            abs_tol: (self.abs_tol / scale.min(1.0)).min(1e300),
            ..*self
        }
    }

    pub(crate) fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    fn into_checked(self) -> Result<QuadResult> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                value: self.value,
                error_estimate: self.error_estimate,
                evaluations: self.evaluations,
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

/// One Gauss–Kronrod 7/15 panel, with the QUADPACK error rescaling.
fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let f_center = f(center);

    let mut kronrod = f_center * WGK[7];
    let mut gauss = f_center * WG[3];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let abs_half = half.abs();
    let value = kronrod * half;
    res_abs *= abs_half;
    res_asc *= abs_half;

    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, cfg: &QuadConfig) -> QuadResult {
    if lo == hi {
        return QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        };
    }

    let n = cfg.min_panels.max(1);
    let width = (hi - lo) / n as f64;
    let mut heap = BinaryHeap::with_capacity(2 * n);
    let mut total = 0.0;
    let mut total_err = 0.0;
    for k in 0..n {
        let a = lo + k as f64 * width;
        let b = if k + 1 == n {
            hi
        } else {
            lo + (k + 1) as f64 * width
        };
        let (value, error) = gk15(f, a, b);
        total += value;
        total_err += error;
        heap.push(Panel {
            lo: a,
            hi: b,
            value,
            error,
            depth: 0,
        });
    }
    let mut evaluations = n * EVALS_PER_PANEL;

    while total_err > cfg.target(total) {
        let worst = match heap.peek() {
            Some(p) if p.depth < cfg.max_refinements && heap.len() < MAX_PANELS => {
                heap.pop().unwrap()
            }
            _ => break,
        };
        let mid = 0.5 * (worst.lo + worst.hi);
        let (lv, le) = gk15(f, worst.lo, mid);
        let (rv, re) = gk15(f, mid, worst.hi);
        evaluations += 2 * EVALS_PER_PANEL;
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        for (a, b, value, error) in [(worst.lo, mid, lv, le), (mid, worst.hi, rv, re)] {
            heap.push(Panel {
                lo: a,
                hi: b,
                value,
                error,
                depth: worst.depth + 1,
            });
        }
    }

    // Re-sum left to right so the result does not carry the running-sum drift.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    let value: f64 = panels.iter().map(|p| p.value).sum();
    let error_estimate: f64 = panels.iter().map(|p| p.error).sum();
    QuadResult {
        value,
        error_estimate,
        evaluations,
        converged: error_estimate <= cfg.target(value),
    }
}

/// Integrates `f` over `[lo, hi]`.
///
/// On nonconvergence the error carries the best value and its estimate.
pub fn integrate_finite<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult> {
    cfg.validate()?;
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must be finite with lo <= hi, got [{lo}, {hi}]"
        )));
    }
    adaptive(&f, lo, hi, cfg).into_checked()
}

/// Composite 15-point Kronrod rule on `panels` equal panels for a vector
/// integrand. `f(x, out)` fills `out` (length `dim`). Returns per-component
/// values and error estimates; nothing is refined.
pub(crate) fn gk15_fixed_vector<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    lo: f64,
    hi: f64,
    panels: usize,
    dim: usize,
) -> (Vec<f64>, Vec<f64>) {
    let panels = panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    // node-major samples: fv[k * dim + c], k = 0..15 with the centre last
    let mut fv = vec![0.0; 15 * dim];
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut res_abs = vec![0.0; dim];

    for p in 0..panels {
        let a = lo + p as f64 * width;
        let b = if p + 1 == panels { hi } else { a + width };
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for j in 0..7 {
            let dx = half * XGK[j];
            f(center - dx, &mut fv[(2 * j) * dim..(2 * j + 1) * dim]);
            f(center + dx, &mut fv[(2 * j + 1) * dim..(2 * j + 2) * dim]);
        }
        f(center, &mut fv[14 * dim..15 * dim]);

        for c in 0..dim {
            let fc = fv[14 * dim + c];
            let mut k = fc * WGK[7];
            let mut g = fc * WG[3];
            let mut ra = k.abs();
            for j in 0..7 {
                let (f1, f2) = (fv[2 * j * dim + c], fv[(2 * j + 1) * dim + c]);
                k += WGK[j] * (f1 + f2);
                ra += WGK[j] * (f1.abs() + f2.abs());
                if j % 2 == 1 {
                    g += WG[j / 2] * (f1 + f2);
                }
            }
            kronrod[c] = k;
            gauss[c] = g;
            res_abs[c] = ra;
        }

        for c in 0..dim {
            let mean = 0.5 * kronrod[c];
            let mut res_asc = WGK[7] * (fv[14 * dim + c] - mean).abs();
            for j in 0..7 {
                res_asc += WGK[j]
                    * ((fv[2 * j * dim + c] - mean).abs()
                        + (fv[(2 * j + 1) * dim + c] - mean).abs());
            }
            let res_asc = res_asc * half;
            let ra = res_abs[c] * half;
            let mut err = ((kronrod[c] - gauss[c]) * half).abs();
            if res_asc != 0.0 && err != 0.0 {
                err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
            }
            if ra > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
                err = err.max(50.0 * f64::EPSILON * ra);
            }
            values[c] += kronrod[c] * half;
            errors[c] += err;
        }
    }
    (values, errors)
}

/// `|g(t)| <= constant + slope * t` for all `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub constant: f64,
    pub slope: f64,
}

impl GrowthEnvelope {
    pub fn new(constant: f64, slope: f64) -> Result<Self> {
        if !(constant >= 0.0 && slope >= 0.0 && constant.is_finite() && slope.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "growth envelope coefficients must be finite and nonnegative, got ({constant}, {slope})"
            )));
        }
        Ok(GrowthEnvelope { constant, slope })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.constant + self.slope * t
    }
}

/// Upper bound on `∫_cutoff^∞ f_n(t) (c0 + c1 t) dt`, using
/// `∫_T^∞ t f_n(t) dt = (n/μ) P(T_{n+1} > T)`.
pub fn erlang_tail_bound(stage: &ErlangStage, envelope: &GrowthEnvelope, cutoff: f64) -> f64 {
    let n = u64::from(stage.n());
    let mu = stage.mu();
    let x = mu * cutoff;
    // P(T_n > T) = P(Poisson(μT) <= n - 1)
    let survival_n = poisson::lower_cdf(x, n - 1);
    let survival_n1 = poisson::lower_cdf(x, n);
    envelope.constant * survival_n + envelope.slope * (n as f64 / mu) * survival_n1
}

/// Smallest point on the grid `(n + 10√n)/μ + k·√n/μ` whose tail bound is at
/// most `tail_mass`.
pub fn erlang_cutoff(
    stage: &ErlangStage,
    envelope: &GrowthEnvelope,
    tail_mass: f64,
) -> Result<f64> {
    let n = f64::from(stage.n());
    let mu = stage.mu();
    let step = n.sqrt() / mu;
    let mut cutoff = (n + 10.0 * n.sqrt()) / mu;
    for _ in 0..100_000 {
        if erlang_tail_bound(stage, envelope, cutoff) <= tail_mass {
            return Ok(cutoff);
        }
        cutoff += step;
    }
    Err(Error::InvalidParameter(format!(
        "no Erlang cutoff meets tail mass {tail_mass:e} for envelope {envelope:?}"
    )))
}

/// Computes `∫_0^∞ f_n(t) g(t) dt` where `f_n` is the Erlang(n, μ) density.
///
/// The range is cut at [`erlang_cutoff`]; the tail bound is added to the
/// reported error estimate. `g` is checked against `envelope` at every node it
/// is evaluated on, and the first error `g` returns aborts the integral.
pub fn integrate_erlang_weighted<G>(
    g: G,
    stage: &ErlangStage,
    envelope: &GrowthEnvelope,
    cfg: &QuadConfig,
) -> Result<QuadResult>
where
    G: Fn(f64) -> Result<f64>,
{
    cfg.validate()?;
    let cutoff = erlang_cutoff(stage, envelope, cfg.truncation_tail_mass)?;
    integrate_erlang_weighted_to(g, stage, envelope, cutoff, cfg)
}

/// [`integrate_erlang_weighted`] with an explicit cutoff.
pub fn integrate_erlang_weighted_to<G>(
    g: G,
    stage: &ErlangStage,
    envelope: &GrowthEnvelope,
    cutoff: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult>
where
    G: Fn(f64) -> Result<f64>,
{
    cfg.validate()?;
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let failed = Cell::new(false);
    let integrand = |t: f64| {
        if failed.get() {
            return 0.0;
        }
        match g(t) {
            Ok(v) => {
                let bound = envelope.at(t);
                if !v.is_finite() || v.abs() > bound * (1.0 + 1e-9) + 1e-12 {
                    *failure.borrow_mut() = Some(Error::GrowthEnvelope { t, value: v, bound });
                    failed.set(true);
                    return 0.0;
                }
                stage.pdf(t) * v
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                failed.set(true);
                0.0
            }
        }
    };
    let mut res = adaptive(&integrand, 0.0, cutoff, cfg);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    res.error_estimate += erlang_tail_bound(stage, envelope, cutoff);
    res.converged = res.error_estimate <= cfg.target(res.value) + cfg.truncation_tail_mass;
    res.into_checked()
}
