//! Stopping region, boundaries, co-monotonicity check, and value evaluators.
//!
//! The stopping set is `S = {x : image(x) >= 0}`, where `image(x)` is the
//! transform of the reward's analytic part with respect to the extremum law
//! at start point `x`, evaluated at `x` itself. The region is found by a sign
//! scan over the grid followed by sign-driven bisection on each bracket
//! (sign-driven so that positively scaled rewards refine identically).
//!
//! For positive-part rewards the transform is applied to the analytic part;
//! the scanned region is then intersected with the closure of `{g > 0}` and
//! degenerate touch points where `g = 0` are dropped, recovering the
//! one-sided region at the positive root of the image. The solver asserts
//! `g >= 0` on the final region.
//!
//! Values come in four flavours:
//! * [`value_one_sided`] — closed-form integral of the clipped image against
//!   the exponential extremum density (monotone modes only, exact);
//! * [`value_exit_formula`] — discounted first-exit identity using the two
//!   `psi(u) = q` exponentials (exact for this model class);
//! * [`value_mc`] — simulate to the first grid entry of the region,
//!   accumulate `e^{-q tau} g(x + X_tau)`;
//! * [`value_definition_mc`] — per path, evaluate the clipped image of the
//!   law indexed by the entry position at the argmax position.
//! The first two agree analytically; the last two are the statistical
//! cross-checks of the same quantity.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::argmax_eta::{sample_eta_with, EmpiricalLaw, EtaLaw, TwoSidedLaw};
use crate::atransform::laws::{ExpLaw, NegExpLaw};
use crate::atransform::{transform, NuLaw, TransformError, TransformImage};
use crate::levy_models::{LevyModel, ModelError};
use crate::mc;
use crate::reward::{RewardError, RewardExpr};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid scan grid: {0}")]
    InvalidGrid(String),
    #[error("root tolerance must be positive, got {0}")]
    InvalidTol(f64),
    #[error("two_sided mode requires a driftless unit-volatility model (mu = 0, sigma = 1)")]
    TwoSidedModelMismatch,
    #[error("positive-part rewards are nondecreasing; eta mode must be monotone_sup or empirical")]
    PositivePartModeMismatch,
    #[error("{op} requires a monotone eta mode")]
    MonotoneModeRequired { op: &'static str },
    #[error("{op} requires the two_sided eta mode")]
    TwoSidedModeRequired { op: &'static str },
    #[error("closed-form eta law required at boundary points; empirical mode is not supported")]
    ClosedFormLawRequired,
    #[error("reward is negative on the computed stopping region at x = {x} (g = {value})")]
    NegativeRewardOnRegion { x: f64, value: f64 },
    #[error("empirical mode requires at least 1000 samples per evaluation, got {0}")]
    EmpiricalSamples(usize),
}

/// How the extremum law is selected per start point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    /// Nondecreasing reward: killed supremum, independent of x.
    MonotoneSup,
    /// Nonincreasing reward: killed infimum, independent of x.
    MonotoneInf,
    /// Two-sided reward rates `(a, b)`: sup/inf routed by the threshold c(x).
    TwoSided { a: f64, b: f64 },
    /// Simulation-backed law rebuilt at each start point.
    Empirical { samples: usize, step: f64 },
}

/// Scan grid for the region search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// A fully specified stopping problem.
#[derive(Debug, Clone)]
pub struct StoppingProblem {
    model: LevyModel,
    reward: RewardExpr,
    eta_mode: EtaMode,
    grid: ScanGrid,
    tol: f64,
    seed: u64,
}

/// Closed interval, possibly unbounded on either side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Refined root with the image residual achieved there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    pub x: f64,
    pub residual: f64,
}

/// One grid cell where the slope signs of reward and image disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComonotoneViolation {
    pub cell_lo: f64,
    pub cell_hi: f64,
    pub g_slope: f64,
    pub image_slope: f64,
}

/// Slope-sign comparison over the cells of one region interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ComonotoneIntervalReport {
    pub interval: Interval,
    pub cells_checked: usize,
    pub violations: Vec<ComonotoneViolation>,
}

impl ComonotoneIntervalReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComonotoneReport {
    pub per_interval: Vec<ComonotoneIntervalReport>,
}

impl ComonotoneReport {
    pub fn pass(&self) -> bool {
        self.per_interval.iter().all(|r| r.pass())
    }
}

/// Solved stopping problem: region, boundaries, reports.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingSolution {
    pub region: Vec<Interval>,
    pub boundaries: Vec<Boundary>,
    pub comonotone: ComonotoneReport,
    /// Grid nodes whose image sign is within 3 jackknife SE of zero
    /// (empirical mode only).
    pub uncertain_nodes: Vec<f64>,
}

impl StoppingSolution {
    pub fn contains(&self, x: f64) -> bool {
        self.region.iter().any(|iv| iv.contains(x))
    }

    /// The continuation component around `x` (caller ensures `x` is not in
    /// the region): largest open interval between region pieces.
    pub fn continuation_component(&self, x: f64) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for iv in &self.region {
            if iv.hi <= x {
                lo = lo.max(iv.hi);
            } else if iv.lo >= x {
                hi = hi.min(iv.lo);
            }
        }
        (lo, hi)
    }
}

/// Monte Carlo evaluation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub step: f64,
    pub seed: u64,
    /// Simulation horizon for discounted payoffs; default caps where the
    /// discount factor falls below 1e-8.
    pub horizon_cap: Option<f64>,
}

impl McConfig {
    pub fn new(paths: usize, step: f64, seed: u64) -> Self {
        Self {
            paths,
            step,
            seed,
            horizon_cap: None,
        }
    }

    fn cap(&self, q: f64) -> f64 {
        self.horizon_cap.unwrap_or((1e8f64).ln() / q)
    }
}

/// Monte Carlo estimate with tail accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McValue {
    pub estimate: f64,
    pub stderr: f64,
    /// Fraction of paths that hit the horizon cap before stopping.
    pub capped_fraction: f64,
    /// Deterministic bound on the truncated tail contribution.
    pub tail_bound: f64,
}

impl StoppingProblem {
    pub fn new(
        model: LevyModel,
        reward: RewardExpr,
        eta_mode: EtaMode,
        grid: ScanGrid,
        tol: f64,
        seed: u64,
    ) -> Result<Self, SolverError> {
        if !(grid.lo.is_finite() && grid.hi.is_finite() && grid.lo < grid.hi) {
            return Err(SolverError::InvalidGrid(format!(
                "need lo < hi, got [{}, {}]",
                grid.lo, grid.hi
            )));
        }
        if !(grid.step.is_finite() && grid.step > 0.0) {
            return Err(SolverError::InvalidGrid(format!(
                "need positive step, got {}",
                grid.step
            )));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(SolverError::InvalidTol(tol));
        }
        let rates = model.extrema_rates();
        match eta_mode {
            EtaMode::MonotoneSup => {
                for t in reward.terms() {
                    if t.rate >= rates.beta_plus {
                        return Err(TransformError::OutOfDomain {
                            u: t.rate,
                            lo: f64::NEG_INFINITY,
                            hi: rates.beta_plus,
                        }
                        .into());
                    }
                }
            }
            EtaMode::MonotoneInf => {
                for t in reward.terms() {
                    if t.rate <= -rates.beta_minus {
                        return Err(TransformError::OutOfDomain {
                            u: t.rate,
                            lo: -rates.beta_minus,
                            hi: f64::INFINITY,
                        }
                        .into());
                    }
                }
            }
            EtaMode::TwoSided { a, b } => {
                if model.mu() != 0.0 || model.sigma() != 1.0 {
                    return Err(SolverError::TwoSidedModelMismatch);
                }
                // Validates sqrt(2q) > a > b > 0 and term rates.
                let probe = TwoSidedLaw::new(a, b, model.q(), 0.0)?;
                for t in reward.terms() {
                    probe.check_domain(t.rate)?;
                }
            }
            EtaMode::Empirical { samples, .. } => {
                if samples < crate::argmax_eta::EMPIRICAL_MIN_SAMPLES {
                    return Err(SolverError::EmpiricalSamples(samples));
                }
            }
        }
        if reward.is_positive_part()
            && !matches!(eta_mode, EtaMode::MonotoneSup | EtaMode::Empirical { .. })
        {
            return Err(SolverError::PositivePartModeMismatch);
        }
        Ok(Self {
            model,
            reward,
            eta_mode,
            grid,
            tol,
            seed,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn reward(&self) -> &RewardExpr {
        &self.reward
    }

    pub fn eta_mode(&self) -> EtaMode {
        self.eta_mode
    }

    pub fn grid(&self) -> ScanGrid {
        self.grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Extremum law at start point `x`.
    pub fn eta_law(&self, x: f64) -> Result<EtaLaw, SolverError> {
        let rates = self.model.extrema_rates();
        Ok(match self.eta_mode {
            EtaMode::MonotoneSup => EtaLaw::Sup(ExpLaw::new(rates.beta_plus)?),
            EtaMode::MonotoneInf => EtaLaw::Inf(NegExpLaw::new(rates.beta_minus)?),
            EtaMode::TwoSided { a, b } => {
                EtaLaw::TwoSided(TwoSidedLaw::new(a, b, self.model.q(), x)?)
            }
            EtaMode::Empirical { samples, step } => {
                EtaLaw::Empirical(self.empirical_law_at(x, samples, step, None)?)
            }
        })
    }

    fn empirical_law_at(
        &self,
        x: f64,
        samples: usize,
        step: f64,
        drop_block: Option<(usize, usize)>,
    ) -> Result<EmpiricalLaw, SolverError> {
        let per_x_seed = self.seed ^ x.to_bits().wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let model = self.model;
        let reward = self.reward.clone();
        let mut draws = mc::sample_many(samples, per_x_seed, mc::SALT_EMPIRICAL, move |rng| {
            sample_eta_with(&model, &reward, x, step, rng)
        });
        if let Some((block, blocks)) = drop_block {
            let len = draws.len();
            let lo = block * len / blocks;
            let hi = (block + 1) * len / blocks;
            draws.drain(lo..hi);
            return Ok(EmpiricalLaw::new_unchecked(draws));
        }
        Ok(EmpiricalLaw::new(draws)?)
    }

    /// Transform image of the analytic part with the law frozen at `x`.
    pub fn image_fn_at(&self, x: f64) -> Result<TransformImage, SolverError> {
        let law = self.eta_law(x)?;
        Ok(transform(&self.reward.analytic_part(), &law)?)
    }

    /// The scalar `image(x)`: the frozen-law image evaluated at `x` itself.
    pub fn image_at(&self, x: f64) -> Result<f64, SolverError> {
        Ok(self.image_fn_at(x)?.eval(x))
    }

    /// `image(x)` with a jackknife standard error (zero in closed-form modes).
    /// In empirical mode the SE comes from a delete-block jackknife over the
    /// sampled law.
    pub fn image_at_with_se(&self, x: f64) -> Result<(f64, f64), SolverError> {
        let value = self.image_at(x)?;
        let EtaMode::Empirical { samples, step } = self.eta_mode else {
            return Ok((value, 0.0));
        };
        const BLOCKS: usize = 10;
        let mut reps = Vec::with_capacity(BLOCKS);
        for b in 0..BLOCKS {
            let law = self.empirical_law_at(x, samples, step, Some((b, BLOCKS)))?;
            let img = transform(&self.reward.analytic_part(), &law)?;
            reps.push(img.eval(x));
        }
        let mean = reps.iter().sum::<f64>() / BLOCKS as f64;
        let var = reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() * (BLOCKS as f64 - 1.0)
            / BLOCKS as f64;
        Ok((value, var.sqrt()))
    }

    /// Scans the grid, refines sign changes, and assembles the solution.
    pub fn solve(&self) -> Result<StoppingSolution, SolverError> {
        let nodes = self.scan_nodes();
        let mut vals = Vec::with_capacity(nodes.len());
        let mut uncertain_nodes = Vec::new();
        for &x in &nodes {
            let (v, se) = self.image_at_with_se(x)?;
            if se > 0.0 && v.abs() <= 3.0 * se {
                uncertain_nodes.push(x);
            }
            vals.push(v);
        }

        let in_region: Vec<bool> = vals.iter().map(|v| *v >= 0.0).collect();
        let mut boundaries = Vec::new();
        let mut intervals = Vec::new();
        let mut run_start = if in_region[0] {
            Some(f64::NEG_INFINITY)
        } else {
            None
        };
        for i in 0..nodes.len() - 1 {
            if in_region[i] == in_region[i + 1] {
                continue;
            }
            let b = self.refine_root(nodes[i], nodes[i + 1], in_region[i])?;
            boundaries.push(b);
            if in_region[i] {
                let start = run_start.take().expect("open run when leaving region");
                intervals.push(Interval {
                    lo: start,
                    hi: b.x,
                });
            } else {
                run_start = Some(b.x);
            }
        }
        if let Some(start) = run_start {
            intervals.push(Interval {
                lo: start,
                hi: f64::INFINITY,
            });
        }

        if self.reward.is_positive_part() {
            intervals = self.clip_positive_part(intervals);
            boundaries = intervals
                .iter()
                .flat_map(|iv| [iv.lo, iv.hi])
                .filter(|e| e.is_finite())
                .map(|x| {
                    Ok(Boundary {
                        x,
                        residual: self.image_at(x)?.abs(),
                    })
                })
                .collect::<Result<Vec<_>, SolverError>>()?;
        }

        self.assert_reward_nonnegative(&intervals)?;
        let comonotone = check_comonotone_on(self, &intervals, &nodes)?;
        Ok(StoppingSolution {
            region: intervals,
            boundaries,
            comonotone,
            uncertain_nodes,
        })
    }

    fn scan_nodes(&self) -> Vec<f64> {
        let span = self.grid.hi - self.grid.lo;
        let n = ((span / self.grid.step).round() as usize).max(1);
        (0..=n)
            .map(|i| self.grid.lo + span * i as f64 / n as f64)
            .collect()
    }

    /// Sign-driven bisection: refines until the bracket width reaches `tol`.
    /// No residual-based early exit, so positively scaled rewards refine
    /// through identical iterates.
    fn refine_root(&self, mut lo: f64, mut hi: f64, lo_in_region: bool) -> Result<Boundary, SolverError> {
        let mut iter = 0;
        while hi - lo > self.tol && iter < 200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.image_at(mid)?;
            if (v >= 0.0) == lo_in_region {
                lo = mid;
            } else {
                hi = mid;
            }
            iter += 1;
        }
        let x = 0.5 * (lo + hi);
        Ok(Boundary {
            x,
            residual: self.image_at(x)?.abs(),
        })
    }

    /// Intersects the scanned region with the closure of `{g > 0}` and drops
    /// touch points where `g = 0`, so even-power positive-part rewards do not
    /// pick up the spurious plateau left of zero.
    fn clip_positive_part(&self, intervals: Vec<Interval>) -> Vec<Interval> {
        let mut out = Vec::new();
        for iv in intervals {
            let lo = iv.lo.max(0.0);
            let hi = iv.hi;
            if hi < lo {
                continue;
            }
            if hi == lo && self.reward.eval(lo) == 0.0 {
                continue;
            }
            out.push(Interval { lo, hi });
        }
        out
    }

    fn assert_reward_nonnegative(&self, intervals: &[Interval]) -> Result<(), SolverError> {
        if !self.reward.is_positive_part() {
            return Ok(());
        }
        for iv in intervals {
            let lo = if iv.lo.is_finite() { iv.lo } else { self.grid.lo };
            let hi = if iv.hi.is_finite() { iv.hi } else { self.grid.hi };
            for t in 0..=4 {
                let x = lo + (hi - lo) * t as f64 / 4.0;
                let g = self.reward.eval(x);
                if g < -1e-12 {
                    return Err(SolverError::NegativeRewardOnRegion { x, value: g });
                }
            }
        }
        Ok(())
    }
}

/// Slope-sign comparison of reward and image over the region cells, with the
/// law frozen at the left node of each cell. Report-only: violations are
/// listed, never raised as errors.
pub fn check_comonotone(
    problem: &StoppingProblem,
    solution: &StoppingSolution,
) -> Result<ComonotoneReport, SolverError> {
    let nodes = problem.scan_nodes();
    check_comonotone_on(problem, &solution.region, &nodes)
}

fn check_comonotone_on(
    problem: &StoppingProblem,
    region: &[Interval],
    nodes: &[f64],
) -> Result<ComonotoneReport, SolverError> {
    // In x-independent modes the frozen image is the same for every cell.
    let fixed_image = match problem.eta_mode {
        EtaMode::MonotoneSup | EtaMode::MonotoneInf => Some(problem.image_fn_at(0.0)?),
        _ => None,
    };
    let mut per_interval = Vec::new();
    for iv in region {
        let mut cells_checked = 0;
        let mut violations = Vec::new();
        for w in nodes.windows(2) {
            let (x1, x2) = (w[0], w[1]);
            if x1 < iv.lo || x2 > iv.hi {
                continue;
            }
            cells_checked += 1;
            let img = match &fixed_image {
                Some(img) => img.clone(),
                None => problem.image_fn_at(x1)?,
            };
            let dg = problem.reward().eval(x2) - problem.reward().eval(x1);
            let di = img.eval(x2) - img.eval(x1);
            let g_zero =
                dg.abs() <= 1e-9 * (1.0 + problem.reward().eval(x1).abs() + problem.reward().eval(x2).abs());
            let i_zero = di.abs() <= 1e-9 * (1.0 + img.eval(x1).abs() + img.eval(x2).abs());
            if !g_zero && !i_zero && dg * di < 0.0 {
                violations.push(ComonotoneViolation {
                    cell_lo: x1,
                    cell_hi: x2,
                    g_slope: dg / (x2 - x1),
                    image_slope: di / (x2 - x1),
                });
            }
        }
        per_interval.push(ComonotoneIntervalReport {
            interval: *iv,
            cells_checked,
            violations,
        });
    }
    Ok(ComonotoneReport { per_interval })
}

/// Antiderivative-based `int_A^B z^j e^{k z} dz` for `k != 0`; endpoints may
/// be infinite on the side where the exponential decays.
fn poly_exp_integral(j: usize, k: f64, a: f64, b: f64) -> f64 {
    debug_assert!(k != 0.0);
    // Antiderivative: e^{k z} * sum_{i=0}^{j} (-1)^{j-i} (j!/i!) z^i / k^{j-i+1}.
    let anti = |z: f64| -> f64 {
        if z.is_infinite() {
            return 0.0; // only reached on the decaying side
        }
        let mut total = 0.0;
        let mut fact_ratio = 1.0; // j!/i! for i = j - step
        for step in 0..=j {
            let i = j - step;
            let term = fact_ratio * z.powi(i as i32) / k.powi(step as i32 + 1);
            total += if step % 2 == 0 { term } else { -term };
            fact_ratio *= i as f64;
        }
        total * (k * z).exp()
    };
    anti(b) - anti(a)
}

/// Closed-form value for monotone modes: integrates the image over the part
/// of the region reachable by `x + eta`, against the exponential extremum
/// density. Exact for exponential-polynomial images.
pub fn value_one_sided(
    problem: &StoppingProblem,
    solution: &StoppingSolution,
    x: f64,
) -> Result<f64, SolverError> {
    let sup = match problem.eta_mode {
        EtaMode::MonotoneSup => true,
        EtaMode::MonotoneInf => false,
        _ => {
            return Err(SolverError::MonotoneModeRequired {
                op: "value_one_sided",
            })
        }
    };
    let rates = problem.model().extrema_rates();
    let beta = if sup { rates.beta_plus } else { rates.beta_minus };
    let image = problem.image_fn_at(x)?;
    let mut total = 0.0;
    for iv in &solution.region {
        let (a, b) = if sup {
            (iv.lo.max(x), iv.hi)
        } else {
            (iv.lo, iv.hi.min(x))
        };
        if a >= b {
            continue;
        }
        for term in image.terms() {
            for (j, coef) in term.poly.iter().enumerate() {
                if *coef == 0.0 {
                    continue;
                }
                let (k, weight) = if sup {
                    (term.rate - beta, beta * (beta * x).exp())
                } else {
                    (term.rate + beta, beta * (-beta * x).exp())
                };
                total += weight * coef * poly_exp_integral(j, k, a, b);
            }
        }
    }
    Ok(total)
}

/// Discounted first-exit identity: on the region `V = g`; on a continuation
/// component `(l, r)` the value is the unique combination of `e^{beta_plus z}`
/// and `e^{-beta_minus z}` matching `g` at the finite ends (single
/// exponential when one end is infinite; zero when the region is empty).
pub fn value_exit_formula(
    problem: &StoppingProblem,
    solution: &StoppingSolution,
    x: f64,
) -> Result<f64, SolverError> {
    if solution.contains(x) {
        return Ok(problem.reward().eval(x));
    }
    let (l, r) = solution.continuation_component(x);
    let rates = problem.model().extrema_rates();
    let m1 = rates.beta_plus;
    let m2 = rates.beta_minus;
    let g = |z: f64| problem.reward().eval(z);
    Ok(match (l.is_finite(), r.is_finite()) {
        (false, false) => 0.0,
        (false, true) => g(r) * (m1 * (x - r)).exp(),
        (true, false) => g(l) * (-m2 * (x - l)).exp(),
        (true, true) => {
            // Basis bounded on [l, r]: phi1(z) = e^{m1 (z - r)}, phi2(z) = e^{-m2 (z - l)}.
            let phi1 = |z: f64| (m1 * (z - r)).exp();
            let phi2 = |z: f64| (-m2 * (z - l)).exp();
            let det = phi1(l) * phi2(r) - phi1(r) * phi2(l);
            let ca = (g(l) * phi2(r) - g(r) * phi2(l)) / det;
            let cb = (g(r) * phi1(l) - g(l) * phi1(r)) / det;
            ca * phi1(x) + cb * phi2(x)
        }
    })
}

fn region_contains(region: &[Interval], x: f64) -> bool {
    region.iter().any(|iv| iv.contains(x))
}

fn max_abs_reward_at_edges(problem: &StoppingProblem, region: &[Interval]) -> f64 {
    region
        .iter()
        .flat_map(|iv| [iv.lo, iv.hi])
        .filter(|e| e.is_finite())
        .map(|e| problem.reward().eval(e).abs())
        .fold(0.0, f64::max)
}

/// Discounted payoff of the entry rule for an arbitrary region (used both for
/// the solved region and for perturbed strategies).
pub fn region_value_mc(
    problem: &StoppingProblem,
    region: &[Interval],
    x: f64,
    cfg: &McConfig,
) -> Result<McValue, SolverError> {
    if !(cfg.step > 0.0) {
        return Err(ModelError::InvalidStep(cfg.step).into());
    }
    let model = *problem.model();
    let reward = problem.reward().clone();
    let cap = cfg.cap(model.q());
    let capped = AtomicU64::new(0);
    let region_owned: Vec<Interval> = region.to_vec();
    let est = mc::estimate(cfg.paths, cfg.seed, mc::SALT_VALUE_MC, |rng| {
        if region_contains(&region_owned, x) {
            return reward.eval(x);
        }
        let drift = model.mu() * cfg.step;
        let vol = model.sigma() * cfg.step.sqrt();
        let mut pos = x;
        let mut t = 0.0;
        loop {
            let z: f64 = StandardNormal.sample(rng);
            pos += drift + vol * z;
            t += cfg.step;
            if region_contains(&region_owned, pos) {
                return (-model.q() * t).exp() * reward.eval(pos);
            }
            if t >= cap {
                capped.fetch_add(1, Ordering::Relaxed);
                return 0.0;
            }
        }
    });
    let capped_fraction = capped.load(Ordering::Relaxed) as f64 / cfg.paths as f64;
    let tail_bound = (-model.q() * cap).exp() * max_abs_reward_at_edges(problem, region);
    Ok(McValue {
        estimate: est.mean,
        stderr: est.stderr,
        capped_fraction,
        tail_bound,
    })
}

/// Discounted reward at the first grid entry of the solved region.
pub fn value_mc(
    problem: &StoppingProblem,
    solution: &StoppingSolution,
    x: f64,
    cfg: &McConfig,
) -> Result<McValue, SolverError> {
    region_value_mc(problem, &solution.region, x, cfg)
}

/// Direct Monte Carlo of the defining value expression: per path, the clipped
/// image of the law indexed by the region entry position, evaluated at the
/// position achieving the reward argmax before killing. Entry and argmax are
/// tracked on the same path.
pub fn value_definition_mc(
    problem: &StoppingProblem,
    solution: &StoppingSolution,
    x: f64,
    cfg: &McConfig,
) -> Result<McValue, SolverError> {
    if !(cfg.step > 0.0) {
        return Err(ModelError::InvalidStep(cfg.step).into());
    }
    let model = *problem.model();
    let reward = problem.reward().clone();
    let analytic = reward.analytic_part();
    let region: Vec<Interval> = solution.region.clone();

    match problem.eta_mode {
        EtaMode::MonotoneSup | EtaMode::MonotoneInf => {
            // The law does not depend on the entry position; only the argmax
            // is needed.
            let image = problem.image_fn_at(x)?;
            let est = mc::estimate(cfg.paths, cfg.seed, mc::SALT_VALUE_DEF, |rng| {
                let eta = sample_eta_with(&model, &reward, x, cfg.step, rng);
                image.eval(x + eta).max(0.0)
            });
            Ok(McValue {
                estimate: est.mean,
                stderr: est.stderr,
                capped_fraction: 0.0,
                tail_bound: 0.0,
            })
        }
        EtaMode::TwoSided { a, b } => {
            let q = model.q();
            // Entry is a bounded-interval exit, a.s. finite; the cap is a
            // safety net only.
            let cap = 40.0 * cfg.cap(q);
            let capped = AtomicU64::new(0);
            let est = mc::estimate(cfg.paths, cfg.seed, mc::SALT_VALUE_DEF, |rng| {
                let killed_at = model.killing_from_rng(rng);
                let drift = model.mu() * cfg.step;
                let vol = model.sigma() * cfg.step.sqrt();
                let mut pos = x;
                let mut t = 0.0;
                let mut best_g = reward.eval(pos);
                let mut best_pos = pos;
                let mut entry: Option<f64> = if region_contains(&region, pos) {
                    Some(pos)
                } else {
                    None
                };
                while (t < killed_at || entry.is_none()) && t < cap {
                    let z: f64 = StandardNormal.sample(rng);
                    // Partial step to land exactly on the killing time for the
                    // argmax phase.
                    if t < killed_at && t + cfg.step > killed_at {
                        let dt = killed_at - t;
                        pos += model.mu() * dt + model.sigma() * dt.sqrt() * z;
                        t = killed_at;
                    } else {
                        pos += drift + vol * z;
                        t += cfg.step;
                    }
                    if t <= killed_at {
                        let gp = reward.eval(pos);
                        if gp > best_g {
                            best_g = gp;
                            best_pos = pos;
                        }
                    }
                    if entry.is_none() && region_contains(&region, pos) {
                        entry = Some(pos);
                    }
                }
                let w = entry.unwrap_or_else(|| {
                    capped.fetch_add(1, Ordering::Relaxed);
                    // Nearest finite region edge to the last position.
                    region
                        .iter()
                        .flat_map(|iv| [iv.lo, iv.hi])
                        .filter(|e| e.is_finite())
                        .min_by(|p, r| {
                            (p - pos).abs().partial_cmp(&(r - pos).abs()).unwrap()
                        })
                        .unwrap_or(pos)
                });
                let law = TwoSidedLaw::new(a, b, q, w).expect("validated at construction");
                let image = transform(&analytic, &law).expect("rates validated at construction");
                image.eval(best_pos).max(0.0)
            });
            let capped_fraction = capped.load(Ordering::Relaxed) as f64 / cfg.paths as f64;
            Ok(McValue {
                estimate: est.mean,
                stderr: est.stderr,
                capped_fraction,
                tail_bound: 0.0,
            })
        }
        EtaMode::Empirical { .. } => Err(SolverError::ClosedFormLawRequired),
    }
}
