//! Driving process: Brownian motion with drift, killed at an independent
//! exponential time.
//!
//! The model is parametrised by drift `mu`, volatility `sigma > 0` and a
//! discount/killing rate `q > 0`. Its Laplace exponent is
//! `psi(u) = sigma^2 u^2 / 2 + mu u`, and the running supremum/infimum over
//! `[0, e_q]` (with `e_q ~ Exp(q)` independent of the path) are exponentially
//! distributed on each side: `sup ~ Exp(beta_plus)` and `-inf ~ Exp(beta_minus)`,
//! where `beta_plus` and `-beta_minus` are the positive and negative roots of
//! `psi(u) = q`. For the standard driftless case both rates equal `sqrt(2q)`.
//!
//! Samplers are seed-parameterised and stateless; grid paths use exact
//! Gaussian increments, so the only discretization effect is that extrema over
//! the grid understate the true path extrema by `O(sqrt(step))` (expected
//! deficit ≈ 0.5826·sigma·sqrt(step); see [`crate::verify::GRID_EXTREMUM_DEFICIT`]).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("q must be positive and finite, got {0}")]
    InvalidQ(f64),
    #[error("mu must be finite, got {0}")]
    InvalidMu(f64),
    #[error("step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be at least one step, got horizon {horizon}, step {step}")]
    InvalidHorizon { horizon: f64, step: f64 },
    #[error("MGF of the {side:?} extremum is undefined at u = {u} (requires {constraint})")]
    MgfOutOfDomain {
        side: ExtremumSide,
        u: f64,
        constraint: String,
    },
}

/// Which killed extremum of the path is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumSide {
    Sup,
    Inf,
}

/// Exponential decay rates of the killed extrema laws.
///
/// `sup_{t \le e_q} X_t ~ Exp(beta_plus)` and `inf_{t \le e_q} X_t` is a
/// negative exponential with rate `beta_minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaRates {
    pub beta_plus: f64,
    pub beta_minus: f64,
}

/// Brownian motion with drift plus a discount/killing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyModel {
    mu: f64,
    sigma: f64,
    q: f64,
}

impl LevyModel {
    pub fn new(mu: f64, sigma: f64, q: f64) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::InvalidMu(mu));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(ModelError::InvalidQ(q));
        }
        Ok(Self { mu, sigma, q })
    }

    /// Standard Brownian motion (`mu = 0`, `sigma = 1`) with killing rate `q`.
    pub fn standard(q: f64) -> Result<Self, ModelError> {
        Self::new(0.0, 1.0, q)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Laplace exponent `psi(u) = sigma^2 u^2 / 2 + mu u`, so that
    /// `E e^{u X_t} = e^{t psi(u)}`.
    pub fn laplace_exponent(&self, u: f64) -> f64 {
        0.5 * self.sigma * self.sigma * u * u + self.mu * u
    }

    /// Roots of `psi(u) = q`: `beta_plus` is the positive root and
    /// `-beta_minus` the negative one. Both exist for any `sigma > 0, q > 0`.
    pub fn extrema_rates(&self) -> ExtremaRates {
        let s2 = self.sigma * self.sigma;
        let disc = (self.mu * self.mu + 2.0 * self.q * s2).sqrt();
        ExtremaRates {
            beta_plus: (-self.mu + disc) / s2,
            beta_minus: (self.mu + disc) / s2,
        }
    }

    /// MGF of the killed supremum (`beta/(beta - u)`, `u < beta_plus`) or
    /// infimum (`beta/(beta + u)`, `u > -beta_minus`).
    pub fn mgf_extremum(&self, side: ExtremumSide, u: f64) -> Result<f64, ModelError> {
        let rates = self.extrema_rates();
        match side {
            ExtremumSide::Sup => {
                if u < rates.beta_plus {
                    Ok(rates.beta_plus / (rates.beta_plus - u))
                } else {
                    Err(ModelError::MgfOutOfDomain {
                        side,
                        u,
                        constraint: format!("u < beta_plus = {}", rates.beta_plus),
                    })
                }
            }
            ExtremumSide::Inf => {
                if u > -rates.beta_minus {
                    Ok(rates.beta_minus / (rates.beta_minus + u))
                } else {
                    Err(ModelError::MgfOutOfDomain {
                        side,
                        u,
                        constraint: format!("u > -beta_minus = {}", -rates.beta_minus),
                    })
                }
            }
        }
    }

    /// One exponential killing time with mean `1/q`, deterministic per seed.
    pub fn sample_killing(&self, seed: u64) -> f64 {
        let mut rng = crate::mc::chunk_rng(seed, crate::mc::SALT_PATH, 0);
        self.killing_from_rng(&mut rng)
    }

    /// Killing time drawn from an existing stream (inverse-CDF, one uniform).
    pub fn killing_from_rng<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // 1 - u is in (0, 1], so the log is finite.
        -(1.0 - u).ln() / self.q
    }

    /// Euler–Maruyama grid path on `[0, horizon]` with exact Gaussian
    /// increments. The killing time is drawn first, independently of the
    /// increments, so the grid layout never perturbs it.
    pub fn sample_path(&self, horizon: f64, step: f64, seed: u64) -> Result<GridPath, ModelError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(ModelError::InvalidStep(step));
        }
        if !(horizon.is_finite() && horizon >= step) {
            return Err(ModelError::InvalidHorizon { horizon, step });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let killed_at = self.killing_from_rng(&mut rng);
        let n = (horizon / step).round() as usize;
        let mut times = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        times.push(0.0);
        values.push(0.0);
        let drift = self.mu * step;
        let vol = self.sigma * step.sqrt();
        let mut x = 0.0;
        for i in 1..=n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += drift + vol * z;
            times.push(i as f64 * step);
            values.push(x);
        }
        Ok(GridPath {
            times,
            values,
            killed_at,
        })
    }

    /// Grid path run exactly to its killing time: uniform steps up to the
    /// last full step below `e_q`, then one partial step landing on `e_q`.
    pub fn sample_path_killed<R: Rng + ?Sized>(
        &self,
        step: f64,
        rng: &mut R,
    ) -> Result<GridPath, ModelError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(ModelError::InvalidStep(step));
        }
        let killed_at = self.killing_from_rng(rng);
        let n = (killed_at / step).floor() as usize;
        let mut times = Vec::with_capacity(n + 2);
        let mut values = Vec::with_capacity(n + 2);
        times.push(0.0);
        values.push(0.0);
        let drift = self.mu * step;
        let vol = self.sigma * step.sqrt();
        let mut x = 0.0;
        for i in 1..=n {
            let z: f64 = StandardNormal.sample(rng);
            x += drift + vol * z;
            times.push(i as f64 * step);
            values.push(x);
        }
        let last = n as f64 * step;
        if killed_at > last {
            let dt = killed_at - last;
            let z: f64 = StandardNormal.sample(rng);
            x += self.mu * dt + self.sigma * dt.sqrt() * z;
            times.push(killed_at);
            values.push(x);
        }
        Ok(GridPath {
            times,
            values,
            killed_at,
        })
    }
}

/// A sampled path on a time grid together with its killing time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    times: Vec<f64>,
    values: Vec<f64>,
    killed_at: f64,
}

impl GridPath {
    /// Builds a path from raw arrays; used by tests and adapters.
    pub fn from_parts(times: Vec<f64>, values: Vec<f64>, killed_at: f64) -> Self {
        assert_eq!(times.len(), values.len());
        assert!(!times.is_empty() && times[0] == 0.0, "times must start at 0");
        assert!(
            times.windows(2).all(|w| w[0] < w[1]),
            "times must be strictly increasing"
        );
        assert!(values[0] == 0.0, "paths start at 0");
        assert!(killed_at > 0.0, "killing time must be positive");
        Self {
            times,
            values,
            killed_at,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn killed_at(&self) -> f64 {
        self.killed_at
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn laplace_exponent_values() {
        let std = LevyModel::standard(0.02).unwrap();
        assert_eq!(std.laplace_exponent(0.0), 0.0);
        assert_relative_eq!(std.laplace_exponent(0.2), 0.02, max_relative = 1e-15);
        let m = LevyModel::new(1.0, 2.0, 0.02).unwrap();
        assert_relative_eq!(m.laplace_exponent(1.0), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn extrema_rates_standard() {
        let m = LevyModel::standard(0.02).unwrap();
        let r = m.extrema_rates();
        assert_relative_eq!(r.beta_plus, 0.2, max_relative = 1e-14);
        assert_relative_eq!(r.beta_minus, 0.2, max_relative = 1e-14);
        let m = LevyModel::standard(0.5).unwrap();
        assert_relative_eq!(m.extrema_rates().beta_plus, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn extrema_rates_drifted_solve_psi_eq_q() {
        let m = LevyModel::new(-0.1, 1.0, 0.02).unwrap();
        let r = m.extrema_rates();
        // Quadratic-formula roots; each must satisfy psi(u) = q.
        assert_relative_eq!(r.beta_plus, 0.1 + 0.05f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.beta_minus, -0.1 + 0.05f64.sqrt(), max_relative = 1e-14);
        assert!((m.laplace_exponent(r.beta_plus) - 0.02).abs() < 1e-12);
        assert!((m.laplace_exponent(-r.beta_minus) - 0.02).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn extrema_rates_are_roots(
            mu in -2.0f64..2.0,
            sigma in 0.1f64..3.0,
            q in 0.001f64..2.0,
        ) {
            let m = LevyModel::new(mu, sigma, q).unwrap();
            let r = m.extrema_rates();
            prop_assert!(r.beta_plus > 0.0 && r.beta_minus > 0.0);
            prop_assert!((m.laplace_exponent(r.beta_plus) - q).abs() < 1e-12 * q.max(1.0));
            prop_assert!((m.laplace_exponent(-r.beta_minus) - q).abs() < 1e-12 * q.max(1.0));
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(LevyModel::new(0.0, 0.0, 0.02).is_err());
        assert!(LevyModel::new(0.0, -1.0, 0.02).is_err());
        assert!(LevyModel::new(0.0, 1.0, 0.0).is_err());
        assert!(LevyModel::new(f64::NAN, 1.0, 0.02).is_err());
    }

    #[test]
    fn mgf_extremum_values_and_domain() {
        let m = LevyModel::standard(0.02).unwrap();
        assert_relative_eq!(m.mgf_extremum(ExtremumSide::Sup, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            m.mgf_extremum(ExtremumSide::Sup, 0.1).unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            m.mgf_extremum(ExtremumSide::Inf, -0.05).unwrap(),
            4.0 / 3.0,
            max_relative = 1e-14
        );
        assert!(m.mgf_extremum(ExtremumSide::Sup, 0.2).is_err());
        assert!(m.mgf_extremum(ExtremumSide::Inf, -0.2).is_err());
    }

    #[test]
    fn killing_mean_and_variance() {
        let m = LevyModel::standard(0.02).unwrap();
        let e = mc::estimate(1_000_000, 17, 101, |rng| m.killing_from_rng(rng));
        // Mean 1/q = 50 within 3 sigma / sqrt(n) = 0.15.
        assert!((e.mean - 50.0).abs() < 0.15, "mean {}", e.mean);

        let m1 = LevyModel::new(0.0, 1.0, 1.0).unwrap();
        let xs = mc::sample_many(1_000_000, 18, 102, |rng| m1.killing_from_rng(rng));
        let mean = mc::pairwise_sum(&xs) / xs.len() as f64;
        let devs: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = mc::pairwise_sum(&devs) / (xs.len() as f64 - 1.0);
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn killing_deterministic_per_seed() {
        let m = LevyModel::standard(0.02).unwrap();
        assert_eq!(m.sample_killing(5).to_bits(), m.sample_killing(5).to_bits());
        assert_ne!(m.sample_killing(5).to_bits(), m.sample_killing(6).to_bits());
    }

    #[test]
    fn path_grid_layout() {
        let m = LevyModel::standard(0.02).unwrap();
        let p = m.sample_path(1.0, 0.5, 1).unwrap();
        assert_eq!(p.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(p.values()[0], 0.0);
        assert!(p.killed_at() > 0.0);
        assert!(m.sample_path(1.0, 0.0, 1).is_err());
        assert!(m.sample_path(0.1, 0.5, 1).is_err());
    }

    #[test]
    fn path_reproducible() {
        let m = LevyModel::new(0.3, 1.7, 0.1).unwrap();
        let a = m.sample_path(2.0, 0.01, 99).unwrap();
        let b = m.sample_path(2.0, 0.01, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn increment_and_terminal_moments() {
        let m = LevyModel::new(0.5, 1.0, 0.02).unwrap();
        // First increment over 1e5 paths at step 0.1: mean mu*0.1 within 3*sigma*sqrt(0.1/n).
        let e = mc::estimate(100_000, 3, 103, |rng| {
            let drift = m.mu() * 0.1;
            let vol = m.sigma() * 0.1f64.sqrt();
            let z: f64 = StandardNormal.sample(rng);
            drift + vol * z
        });
        assert!((e.mean - 0.05).abs() < 3.0 * 1.0 * (0.1f64 / 1.0e5).sqrt());

        // E[X_1^2] = 1 for standard BM within 3*sqrt(Var(X^2)/n) ~ 0.0134.
        let std = LevyModel::standard(0.02).unwrap();
        let e2 = mc::estimate(100_000, 4, 104, |rng| {
            let p = std.sample_path_killed_for_test(1.0, rng);
            p * p
        });
        assert!((e2.mean - 1.0).abs() < 0.015, "E[X_1^2] = {}", e2.mean);
    }

    impl LevyModel {
        // Terminal value of a horizon-1 path, drawn exactly; test helper.
        fn sample_path_killed_for_test<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
            let z: f64 = StandardNormal.sample(rng);
            self.mu * t + self.sigma * t.sqrt() * z
        }
    }

    #[test]
    fn killed_path_ends_at_killing_time() {
        let m = LevyModel::standard(0.02).unwrap();
        let mut rng = mc::chunk_rng(7, mc::SALT_PATH, 0);
        let p = m.sample_path_killed(0.25, &mut rng).unwrap();
        let last = *p.times().last().unwrap();
        assert_relative_eq!(last, p.killed_at(), max_relative = 1e-12);
        assert!(p.times().windows(2).all(|w| w[0] < w[1]));
    }
}
