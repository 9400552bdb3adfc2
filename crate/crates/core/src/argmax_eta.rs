//! Pathwise argmax machinery and the laws of the reward-indexed extremum.
//!
//! For a path observed up to its killing time, the argmax extractor returns
//! the process value at the earliest grid time maximizing `g(x + X)`. For
//! monotone rewards this collapses to the running max (or min) of the path,
//! whose killed law is exponential on the corresponding side. For the
//! two-sided reward `e^{a y} + e^{-b y} - 2` over driftless unit-volatility
//! motion, the choice between the killed sup and the killed inf is routed by
//! the threshold `c(x)`: the unique root of `sinh(b u)/sinh(a u) = e^{(a+b)x}`,
//! which compares `g(x + sup)` against `g(x - sup)`. The resulting law has the
//! piecewise MGF (writing `s = sqrt(2q)`, valid for `|u| < s`):
//!
//! ```text
//! x >= ln(b/a)/(a+b):  s/(s-u)
//! x <  ln(b/a)/(a+b):  s/(s-u) e^{-c(s-u)} - s/(s+u) e^{-c(s+u)} + s/(s+u)
//! ```
//!
//! with `c = c(x)`; the sup branch is assigned at the threshold itself, and
//! `c -> 0` there makes the two branches agree.
//!
//! Rewards without a closed-form law fall back to an empirical law built from
//! simulated draws, carrying jackknife standard errors so downstream sign
//! decisions can be flagged as statistically uncertain.

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::atransform::laws::{ExpLaw, NegExpLaw};
use crate::atransform::{NuLaw, TransformError};
use crate::levy_models::{GridPath, LevyModel, ModelError};
use crate::reward::RewardExpr;

/// Process value and time of the earliest grid argmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgmaxResult {
    /// `X` at the earliest grid index maximizing `g(x + X)`.
    pub value: f64,
    /// The grid time at which it is attained.
    pub time: f64,
}

/// Earliest grid argmax of `g(x + X)` over grid times `<= killed_at`.
/// Ties are broken by the smallest time.
pub fn argmaxproc_of_path(path: &GridPath, g: &RewardExpr, x: f64) -> ArgmaxResult {
    let times = path.times();
    let values = path.values();
    let mut best_val = values[0];
    let mut best_time = times[0];
    let mut best_g = g.eval(x + values[0]);
    for i in 1..times.len() {
        if times[i] > path.killed_at() {
            break;
        }
        let gi = g.eval(x + values[i]);
        if gi > best_g {
            best_g = gi;
            best_val = values[i];
            best_time = times[i];
        }
    }
    ArgmaxResult {
        value: best_val,
        time: best_time,
    }
}

/// One draw of the reward-indexed extremum at start point `x`: simulates a
/// path to its killing time and extracts the argmax value. Deterministic per
/// seed.
pub fn sample_eta(
    model: &LevyModel,
    g: &RewardExpr,
    x: f64,
    step: f64,
    seed: u64,
) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = model.sample_path_killed(step, &mut rng)?;
    Ok(argmaxproc_of_path(&path, g, x).value)
}

/// Allocation-free variant of [`sample_eta`] drawing from an existing stream;
/// consumes exactly the same draws as the grid-path route.
pub fn sample_eta_with<R: Rng + ?Sized>(
    model: &LevyModel,
    g: &RewardExpr,
    x: f64,
    step: f64,
    rng: &mut R,
) -> f64 {
    let killed_at = model.killing_from_rng(rng);
    let n = (killed_at / step).floor() as usize;
    let drift = model.mu() * step;
    let vol = model.sigma() * step.sqrt();
    let mut pos = 0.0;
    let mut best_val = 0.0;
    let mut best_g = g.eval(x);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        pos += drift + vol * z;
        let gi = g.eval(x + pos);
        if gi > best_g {
            best_g = gi;
            best_val = pos;
        }
    }
    let dt = killed_at - n as f64 * step;
    if dt > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        pos += model.mu() * dt + model.sigma() * dt.sqrt() * z;
        let gi = g.eval(x + pos);
        if gi > best_g {
            best_val = pos;
        }
    }
    best_val
}

/// Stable `sinh(b u)/sinh(a u)` for `u > 0`, written to avoid overflow.
fn sinh_ratio(a: f64, b: f64, u: f64) -> f64 {
    ((b - a) * u).exp() * (1.0 - (-2.0 * b * u).exp()) / (1.0 - (-2.0 * a * u).exp())
}

/// Threshold `c(x)`: the unique `u >= 0` with `sinh(b u)/sinh(a u) = e^{(a+b)x}`,
/// for `a > b > 0`. Returns 0 for `x` at or above `ln(b/a)/(a+b)`, where no
/// routing is needed. Bracket expansion plus bisection to 1e-12 on `u`.
pub fn two_sided_threshold(a: f64, b: f64, x: f64) -> Result<f64, TransformError> {
    if !(a.is_finite() && b.is_finite() && a > b && b > 0.0) {
        return Err(TransformError::InvalidLaw(format!(
            "two-sided threshold requires a > b > 0, got a={a}, b={b}"
        )));
    }
    let boundary = (b / a).ln() / (a + b);
    if x >= boundary {
        return Ok(0.0);
    }
    let target = ((a + b) * x).exp();
    // The ratio decreases from b/a at 0+ to 0, so the root is bracketed once
    // the upper end falls below the target.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while sinh_ratio(a, b, hi) > target {
        lo = hi;
        hi *= 2.0;
        assert!(hi.is_finite(), "threshold bracket expansion diverged");
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if sinh_ratio(a, b, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Piecewise MGF of the two-sided extremum law at start point `x` for the
/// reward rates `(a, b)` and killing rate `q`; requires `sqrt(2q) > a > b > 0`
/// and `|u| < sqrt(2q)`.
pub fn eta_mgf_two_sided(a: f64, b: f64, q: f64, x: f64, u: f64) -> Result<f64, TransformError> {
    let law = TwoSidedLaw::new(a, b, q, x)?;
    law.mgf(u)
}

/// Closed-form two-sided extremum law (driftless unit-volatility setting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedLaw {
    a: f64,
    b: f64,
    q: f64,
    x: f64,
    rate: f64,
    threshold: f64,
    c: f64,
}

impl TwoSidedLaw {
    pub fn new(a: f64, b: f64, q: f64, x: f64) -> Result<Self, TransformError> {
        if !(q.is_finite() && q > 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "killing rate must be positive, got {q}"
            )));
        }
        let rate = (2.0 * q).sqrt();
        if !(a.is_finite() && b.is_finite() && rate > a && a > b && b > 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "two-sided law requires sqrt(2q) > a > b > 0, got sqrt(2q)={rate}, a={a}, b={b}"
            )));
        }
        if !x.is_finite() {
            return Err(TransformError::InvalidLaw(format!(
                "start point must be finite, got {x}"
            )));
        }
        let threshold = (b / a).ln() / (a + b);
        let c = two_sided_threshold(a, b, x)?;
        Ok(Self {
            a,
            b,
            q,
            x,
            rate,
            threshold,
            c,
        })
    }

    /// Routing threshold `c(x)` (zero on the sup branch).
    pub fn c(&self) -> f64 {
        self.c
    }

    /// The point `ln(b/a)/(a+b)` separating the branches.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_sup_branch(&self) -> bool {
        self.x >= self.threshold
    }
}

impl NuLaw for TwoSidedLaw {
    fn validity(&self) -> (f64, f64) {
        (-self.rate, self.rate)
    }

    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        self.check_domain(u)?;
        let s = self.rate;
        let c = self.c;
        // With c = 0 the second and third terms cancel, leaving s/(s-u).
        Ok(s / (s - u) * (-c * (s - u)).exp() - s / (s + u) * (-c * (s + u)).exp()
            + s / (s + u))
    }

    fn mgf_derivs(&self, at: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        self.check_domain(at)?;
        let s = self.rate;
        let c = self.c;
        let amp = s * (-c * s).exp();
        let mut out = Vec::with_capacity(k + 1);
        for m in 0..=k {
            // Leibniz on amp*e^{cu}/(s-u), -amp*e^{-cu}/(s+u), s/(s+u).
            let mut d = 0.0;
            let mut binom = 1.0;
            let mut fact_j = 1.0;
            for j in 0..=m {
                if j > 0 {
                    fact_j *= j as f64;
                    binom = binom * (m - j + 1) as f64 / j as f64;
                }
                let pow = (m - j) as i32;
                d += binom * c.powi(pow) * (c * at).exp() * amp * fact_j
                    / (s - at).powi(j as i32 + 1);
                d -= binom * (-c).powi(pow) * (-c * at).exp() * amp * fact_j
                    / (s + at).powi(j as i32 + 1)
                    * if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let mut fact_m = 1.0;
            for i in 1..=m {
                fact_m *= i as f64;
            }
            d += sign * s * fact_m / (s + at).powi(m as i32 + 1);
            out.push(d);
        }
        Ok(out)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let s = self.rate;
        let u: f64 = rng.random();
        let sup = -(1.0 - u).ln() / s;
        if sup >= self.c {
            // Sup branch of the routing comparison.
            return sup;
        }
        // Otherwise the inf branch conditioned on staying above -c; drawn by
        // inversion of the truncated exponential on (0, c).
        let v: f64 = rng.random();
        let t = -(1.0 - v * (1.0 - (-self.c * s).exp())).ln() / s;
        -t
    }

    fn tag(&self) -> String {
        format!(
            "two_sided(a={},b={},q={},x={})",
            self.a, self.b, self.q, self.x
        )
    }
}

/// Empirical law backed by simulated draws: sample MGF/moments, bootstrap
/// sampler, jackknife standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    samples: Vec<f64>,
}

/// Minimum sample count accepted for an empirical law.
pub const EMPIRICAL_MIN_SAMPLES: usize = 1000;

/// Builds an empirical law from raw draws.
pub fn empirical_law(samples: Vec<f64>) -> Result<EmpiricalLaw, TransformError> {
    EmpiricalLaw::new(samples)
}

impl EmpiricalLaw {
    pub fn new(samples: Vec<f64>) -> Result<Self, TransformError> {
        if samples.len() < EMPIRICAL_MIN_SAMPLES {
            return Err(TransformError::UndersizedSample {
                got: samples.len(),
                required: EMPIRICAL_MIN_SAMPLES,
            });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(TransformError::InvalidLaw(
                "empirical samples must be finite".to_string(),
            ));
        }
        Ok(Self { samples })
    }

    // Jackknife replicates are derived from an already-validated law and may
    // fall below the public minimum.
    pub(crate) fn new_unchecked(samples: Vec<f64>) -> Self {
        Self { samples }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Sample MGF with its jackknife standard error. For a sample mean the
    /// delete-1 jackknife collapses to the usual `sd/sqrt(n)`.
    pub fn mgf_with_se(&self, u: f64) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let vals: Vec<f64> = self.samples.iter().map(|x| (u * x).exp()).collect();
        let mean = crate::mc::pairwise_sum(&vals) / n;
        let devs: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = crate::mc::pairwise_sum(&devs) / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

impl NuLaw for EmpiricalLaw {
    fn validity(&self) -> (f64, f64) {
        // A finite sample has finite exponential moments everywhere.
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        Ok(self.mgf_with_se(u).0)
    }

    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        let n = self.samples.len() as f64;
        let mut out = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let vals: Vec<f64> = self
                .samples
                .iter()
                .map(|x| x.powi(j as i32) * (a * x).exp())
                .collect();
            out.push(crate::mc::pairwise_sum(&vals) / n);
        }
        Ok(out)
    }

    fn moment(&self, k: usize) -> f64 {
        let n = self.samples.len() as f64;
        let vals: Vec<f64> = self.samples.iter().map(|x| x.powi(k as i32)).collect();
        crate::mc::pairwise_sum(&vals) / n
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let idx = rng.random_range(0..self.samples.len());
        self.samples[idx]
    }

    fn tag(&self) -> String {
        format!("empirical(n={})", self.samples.len())
    }
}

/// Law of the reward-indexed extremum, by kind.
#[derive(Debug, Clone)]
pub enum EtaLaw {
    /// Killed supremum: exponential with rate `beta_plus`.
    Sup(ExpLaw),
    /// Killed infimum: negative exponential with rate `beta_minus`.
    Inf(NegExpLaw),
    /// Two-sided routed law at a fixed start point.
    TwoSided(TwoSidedLaw),
    /// Simulation-backed law.
    Empirical(EmpiricalLaw),
}

impl EtaLaw {
    pub fn kind(&self) -> &'static str {
        match self {
            EtaLaw::Sup(_) => "sup_closed_form",
            EtaLaw::Inf(_) => "inf_closed_form",
            EtaLaw::TwoSided(_) => "two_sided_closed_form",
            EtaLaw::Empirical(_) => "empirical",
        }
    }

    fn inner(&self) -> &dyn NuLaw {
        match self {
            EtaLaw::Sup(l) => l,
            EtaLaw::Inf(l) => l,
            EtaLaw::TwoSided(l) => l,
            EtaLaw::Empirical(l) => l,
        }
    }
}

impl NuLaw for EtaLaw {
    fn validity(&self) -> (f64, f64) {
        self.inner().validity()
    }
    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        self.inner().mgf(u)
    }
    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        self.inner().mgf_derivs(a, k)
    }
    fn moment(&self, k: usize) -> f64 {
        self.inner().moment(k)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().sample(rng)
    }
    fn tag(&self) -> String {
        self.inner().tag()
    }
}
