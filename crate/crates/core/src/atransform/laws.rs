//! Closed-form laws usable as the random variable behind the transform.

use rand::Rng;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{NuLaw, TransformError};
use crate::levy_models::LevyModel;

/// Exponential law with rate `beta`: density `beta e^{-beta y}` on `[0, inf)`.
/// This is the killed-supremum law of a model with `beta = beta_plus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpLaw {
    rate: f64,
}

impl ExpLaw {
    pub fn new(rate: f64) -> Result<Self, TransformError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl NuLaw for ExpLaw {
    fn validity(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, self.rate)
    }

    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        self.check_domain(u)?;
        Ok(self.rate / (self.rate - u))
    }

    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        self.check_domain(a)?;
        // d^j/du^j beta/(beta-u) = beta * j! / (beta-u)^{j+1}
        let mut out = Vec::with_capacity(k + 1);
        let mut fact = 1.0;
        for j in 0..=k {
            if j > 0 {
                fact *= j as f64;
            }
            out.push(self.rate * fact / (self.rate - a).powi(j as i32 + 1));
        }
        Ok(out)
    }

    fn moment(&self, k: usize) -> f64 {
        let mut m = 1.0;
        for j in 1..=k {
            m *= j as f64 / self.rate;
        }
        m
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        -(1.0 - u).ln() / self.rate
    }

    fn tag(&self) -> String {
        format!("exp({})", self.rate)
    }
}

/// Negative exponential law: `nu = -E` with `E ~ Exp(beta)`, supported on
/// `(-inf, 0]`. This is the killed-infimum law with `beta = beta_minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegExpLaw {
    rate: f64,
}

impl NegExpLaw {
    pub fn new(rate: f64) -> Result<Self, TransformError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl NuLaw for NegExpLaw {
    fn validity(&self) -> (f64, f64) {
        (-self.rate, f64::INFINITY)
    }

    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        self.check_domain(u)?;
        Ok(self.rate / (self.rate + u))
    }

    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        self.check_domain(a)?;
        let mut out = Vec::with_capacity(k + 1);
        let mut fact = 1.0;
        let mut sign = 1.0;
        for j in 0..=k {
            if j > 0 {
                fact *= j as f64;
                sign = -sign;
            }
            out.push(sign * self.rate * fact / (self.rate + a).powi(j as i32 + 1));
        }
        Ok(out)
    }

    fn moment(&self, k: usize) -> f64 {
        let mut m = 1.0;
        for j in 1..=k {
            m *= -(j as f64) / self.rate;
        }
        m
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        (1.0 - u).ln() / self.rate
    }

    fn tag(&self) -> String {
        format!("negexp({})", self.rate)
    }
}

/// The point mass at zero. Its transform is the identity, which makes it the
/// exactness oracle for the image algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DegenerateLaw;

impl NuLaw for DegenerateLaw {
    fn validity(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn mgf(&self, _u: f64) -> Result<f64, TransformError> {
        Ok(1.0)
    }

    fn mgf_derivs(&self, _a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        let mut out = vec![0.0; k + 1];
        out[0] = 1.0;
        Ok(out)
    }

    fn moment(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            0.0
        }
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        0.0
    }

    fn tag(&self) -> String {
        "degenerate".to_string()
    }
}

/// Marginal law of the process at a fixed time: `X_t ~ N(mu t, sigma^2 t)`,
/// with MGF `e^{t psi(u)}`. At `t = 0` this degenerates to the point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianMarginal {
    mean: f64,
    var: f64,
}

impl BrownianMarginal {
    pub fn new(mean: f64, var: f64) -> Result<Self, TransformError> {
        if !(mean.is_finite() && var.is_finite() && var >= 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "normal marginal needs finite mean and var >= 0, got ({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }

    pub fn from_model(model: &LevyModel, t: f64) -> Result<Self, TransformError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(TransformError::InvalidLaw(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        Self::new(model.mu() * t, model.sigma() * model.sigma() * t)
    }
}

impl NuLaw for BrownianMarginal {
    fn validity(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn mgf(&self, u: f64) -> Result<f64, TransformError> {
        Ok((self.mean * u + 0.5 * self.var * u * u).exp())
    }

    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError> {
        // M = e^f with quadratic f, so M^{(n+1)} = f' M^{(n)} + n f'' M^{(n-1)}.
        let mut out = Vec::with_capacity(k + 1);
        out.push(self.mgf(a)?);
        if k >= 1 {
            let fp = self.mean + self.var * a;
            out.push(fp * out[0]);
            for n in 1..k {
                let next = fp * out[n] + n as f64 * self.var * out[n - 1];
                out.push(next);
            }
        }
        Ok(out)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        if self.var == 0.0 {
            return self.mean;
        }
        let z: f64 = StandardNormal.sample(&mut *rng);
        self.mean + self.var.sqrt() * z
    }

    fn tag(&self) -> String {
        format!("bm(mean={},var={})", self.mean, self.var)
    }
}
