//! The transform engine.
//!
//! Given a random variable `nu` with MGF `M(u) = E e^{u nu}` finite on an open
//! interval around zero, the transform maps a reward `g` to the function
//!
//! ```text
//! Q_g(y) = integral of L^{-1}{g}(u) * e^{u y} / M(u) du
//! ```
//!
//! i.e. it reweights the spectral form of `g` by the exponential tilt
//! `e^{u y} / M(u)`. For exponential polynomials this is closed-form:
//!
//! * `y^n`            maps to the degree-`n` monic polynomial with generating
//!   function `e^{u y} / M(u)` (Appell polynomial of `nu`);
//! * `e^{r y}`        maps to `e^{r y} / M(r)` (Esscher tilt at `r`);
//! * `y^n e^{r y}`    maps to `e^{r y} * sum_j C(n,j) y^j * D^{n-j}(1/M)(r)`,
//!   the n-th `u`-derivative of `e^{u y}/M(u)` at `u = r`.
//!
//! The derivatives of `1/M` come from a Taylor-reciprocal convolution of the
//! law's exact MGF derivatives, so images are exact up to rounding. Negative
//! fractional powers `y^nu` (`nu < 0`) have no polynomial image and are
//! handled by adaptive quadrature of the tilted spectral integral
//! `int_0^inf u^{-nu-1}/Gamma(-nu) * e^{-u y}/M(-u) du`.
//!
//! Every evaluation outside a law's MGF validity interval is an error, never
//! an extrapolation.

pub mod laws;
mod quadrature;

use rand::RngCore;
use thiserror::Error;

use crate::reward::RewardExpr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("u = {u} is outside the MGF validity interval ({lo}, {hi})")]
    OutOfDomain { u: f64, lo: f64, hi: f64 },
    #[error("MGF vanishes at u = {u}; law is singular there")]
    SingularMgf { u: f64 },
    #[error("transform requires the analytic part; positive_part is set")]
    PositivePart,
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("fractional-power image requires a negative exponent, got {0}")]
    InvalidExponent(f64),
    #[error("fractional-power image diverges at y = {0}; requires y > 0")]
    InvalidPoint(f64),
    #[error("law must have an MGF on the whole negative axis for the fractional-power image")]
    NegativeAxisUnsupported,
    #[error("empirical law requires at least {required} samples, got {got}")]
    UndersizedSample { got: usize, required: usize },
    #[error("quadrature did not reach tolerance {tol}; achieved {achieved}")]
    QuadratureTolerance { tol: f64, achieved: f64 },
}

/// A random-variable model: MGF with an explicit validity interval, exact MGF
/// derivatives, moments, and a sampler. Implementations must satisfy
/// `mgf(0) = 1` and keep the validity interval open around zero.
pub trait NuLaw: Sync {
    /// Open interval on which the MGF is finite.
    fn validity(&self) -> (f64, f64);

    /// `E e^{u nu}`; errors outside the validity interval.
    fn mgf(&self, u: f64) -> Result<f64, TransformError>;

    /// Derivatives `d^j/du^j E e^{u nu}` at `a` for `j = 0..=k`.
    fn mgf_derivs(&self, a: f64, k: usize) -> Result<Vec<f64>, TransformError>;

    /// `E nu^k`; defaults to the k-th MGF derivative at zero.
    fn moment(&self, k: usize) -> f64 {
        self.mgf_derivs(0.0, k).expect("0 is in the validity interval")[k]
    }

    /// One draw of `nu`.
    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// Identifier recorded on images produced from this law.
    fn tag(&self) -> String;

    /// Error unless `u` lies strictly inside the validity interval.
    fn check_domain(&self, u: f64) -> Result<(), TransformError> {
        let (lo, hi) = self.validity();
        if u > lo && u < hi {
            Ok(())
        } else {
            Err(TransformError::OutOfDomain { u, lo, hi })
        }
    }
}

/// Binomial coefficient as f64 (exact for the small orders used here).
fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Derivatives `d^j/du^j (1/M)(a)` for `j = 0..=k`, by the Taylor-reciprocal
/// convolution recursion `R^{(n)} = -(1/M) * sum_{j=1}^{n} C(n,j) M^{(j)} R^{(n-j)}`.
pub fn reciprocal_mgf_derivs(
    law: &dyn NuLaw,
    a: f64,
    k: usize,
) -> Result<Vec<f64>, TransformError> {
    law.check_domain(a)?;
    let m = law.mgf_derivs(a, k)?;
    if m[0].abs() < 1e-300 || !m[0].is_finite() {
        return Err(TransformError::SingularMgf { u: a });
    }
    let inv = 1.0 / m[0];
    let mut r = Vec::with_capacity(k + 1);
    r.push(inv);
    for n in 1..=k {
        let mut acc = 0.0;
        for j in 1..=n {
            acc += binomial(n, j) * m[j] * r[n - j];
        }
        r.push(-inv * acc);
    }
    Ok(r)
}

/// Coefficients (degree ascending) of the degree-`n` monic polynomial with
/// generating function `e^{u y} / M(u)`; the image of the monomial `y^n`.
pub fn appell_poly(law: &dyn NuLaw, n: u32) -> Result<Vec<f64>, TransformError> {
    let n = n as usize;
    let b = reciprocal_mgf_derivs(law, 0.0, n)?;
    Ok((0..=n).map(|k| binomial(n, k) * b[n - k]).collect())
}

/// One exponential-polynomial piece of an image: `e^{rate * y} * poly(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTerm {
    pub rate: f64,
    /// Coefficients, degree ascending.
    pub poly: Vec<f64>,
}

impl ImageTerm {
    fn eval(&self, y: f64) -> f64 {
        let mut p = 0.0;
        for c in self.poly.iter().rev() {
            p = p * y + c;
        }
        if self.rate != 0.0 {
            p *= (self.rate * y).exp();
        }
        p
    }
}

/// Image of a reward under the transform: an exponential polynomial whose
/// coefficients depend on the law it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformImage {
    terms: Vec<ImageTerm>,
    law_tag: String,
}

impl TransformImage {
    pub fn terms(&self) -> &[ImageTerm] {
        &self.terms
    }

    pub fn law_tag(&self) -> &str {
        &self.law_tag
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(y)).sum()
    }

    /// The image scaled by a constant (images are linear in the reward).
    pub fn scale(&self, c: f64) -> TransformImage {
        TransformImage {
            terms: self
                .terms
                .iter()
                .map(|t| ImageTerm {
                    rate: t.rate,
                    poly: t.poly.iter().map(|p| c * p).collect(),
                })
                .collect(),
            law_tag: self.law_tag.clone(),
        }
    }
}

/// Closed-form image of an exponential polynomial with respect to `law`.
///
/// Per term `c * y^n * e^{r y}` the image is
/// `c * e^{r y} * sum_{j<=n} C(n,j) * y^j * D^{n-j}(1/M)(r)`; the whole image
/// is the sum over terms. Every rate must lie strictly inside the law's MGF
/// validity interval.
pub fn transform(expr: &RewardExpr, law: &dyn NuLaw) -> Result<TransformImage, TransformError> {
    if expr.is_positive_part() {
        return Err(TransformError::PositivePart);
    }
    let mut terms: Vec<ImageTerm> = Vec::new();
    for t in expr.terms() {
        let n = t.power as usize;
        let recip = reciprocal_mgf_derivs(law, t.rate, n)?;
        let poly: Vec<f64> = (0..=n)
            .map(|j| t.coef * binomial(n, j) * recip[n - j])
            .collect();
        match terms.iter_mut().find(|existing| existing.rate == t.rate) {
            Some(existing) => {
                if existing.poly.len() < poly.len() {
                    existing.poly.resize(poly.len(), 0.0);
                }
                for (dst, src) in existing.poly.iter_mut().zip(poly.iter()) {
                    *dst += src;
                }
            }
            None => terms.push(ImageTerm { rate: t.rate, poly }),
        }
    }
    terms.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap());
    Ok(TransformImage {
        terms,
        law_tag: law.tag(),
    })
}

/// Image of the negative fractional power `y^exponent` (`exponent < 0`) at
/// `y > 0`, by adaptive quadrature of
/// `int_0^inf u^{-exponent-1}/Gamma(-exponent) * e^{-u y} / M(-u) du`
/// to absolute tolerance `tol`. The integrand's scale splits at `u = 1/y`;
/// the tail is mapped to a finite interval by `t = e^{-(u - 1/y) y}`.
pub fn transform_power(
    law: &dyn NuLaw,
    exponent: f64,
    y: f64,
    tol: f64,
) -> Result<f64, TransformError> {
    if !(exponent.is_finite() && exponent < 0.0) {
        return Err(TransformError::InvalidExponent(exponent));
    }
    if !(y.is_finite() && y > 0.0) {
        return Err(TransformError::InvalidPoint(y));
    }
    if law.validity().0 > f64::NEG_INFINITY {
        return Err(TransformError::NegativeAxisUnsupported);
    }
    let tol = if tol > 0.0 { tol } else { 1e-9 };
    let gamma = statrs::function::gamma::gamma(-exponent);
    let power = -exponent - 1.0;
    let integrand = move |u: f64| -> f64 {
        let m = law.mgf(-u).expect("negative axis admitted");
        u.powf(power) * (-u * y).exp() / (gamma * m)
    };

    let split = 1.0 / y;
    let head = quadrature::integrate(integrand, 0.0, split, 0.5 * tol, 4000);
    // Tail after t = e^{-(u - split) y}: u(t) = split - ln(t)/y, and the
    // factor e^{-u y} becomes e^{-split*y} * t, cancelling the Jacobian 1/(y t).
    let tail_scale = (-split * y).exp() / y;
    let tail = quadrature::integrate(
        move |t: f64| {
            let u = split - t.ln() / y;
            let m = law.mgf(-u).expect("negative axis admitted");
            tail_scale * u.powf(power) / (gamma * m)
        },
        0.0,
        1.0,
        0.5 * tol,
        4000,
    );
    match (head, tail) {
        (Ok(h), Ok(t)) => Ok(h.value + t.value),
        (h, t) => {
            let (hv, he) = match h {
                Ok(o) | Err(o) => (o.value, o.error),
            };
            let (tv, te) = match t {
                Ok(o) | Err(o) => (o.value, o.error),
            };
            let _ = hv + tv;
            Err(TransformError::QuadratureTolerance {
                tol,
                achieved: he + te,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::laws::{DegenerateLaw, ExpLaw, NegExpLaw};
    use super::*;
    use crate::reward::{RewardExpr, RewardTerm};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn expr(terms: &[(f64, u32, f64)]) -> RewardExpr {
        RewardExpr::new(
            terms
                .iter()
                .map(|&(c, n, r)| RewardTerm::new(c, n, r))
                .collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn reciprocal_derivs_exponential_law() {
        let law = ExpLaw::new(0.2).unwrap();
        // 1/M(u) = 1 - u/beta: derivatives [1, -1/beta, 0] at 0.
        let r = reciprocal_mgf_derivs(&law, 0.0, 2).unwrap();
        assert_relative_eq!(r[0], 1.0);
        assert_relative_eq!(r[1], -5.0, max_relative = 1e-14);
        assert!(r[2].abs() < 1e-12);

        let r = reciprocal_mgf_derivs(&law, 0.1, 1).unwrap();
        assert_relative_eq!(r[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(r[1], -5.0, max_relative = 1e-14);

        assert!(reciprocal_mgf_derivs(&law, 0.25, 1).is_err());
    }

    #[test]
    fn reciprocal_derivs_start_at_one_for_any_law() {
        for law in [
            &ExpLaw::new(0.7).unwrap() as &dyn NuLaw,
            &NegExpLaw::new(1.3).unwrap(),
            &DegenerateLaw,
        ] {
            assert_relative_eq!(reciprocal_mgf_derivs(law, 0.0, 0).unwrap()[0], 1.0);
        }
    }

    #[test]
    fn appell_polynomials_for_exponential_law() {
        let law = ExpLaw::new(0.2).unwrap();
        assert_eq!(appell_poly(&law, 0).unwrap(), vec![1.0]);
        let q1 = appell_poly(&law, 1).unwrap();
        assert_relative_eq!(q1[0], -5.0, max_relative = 1e-14);
        assert_relative_eq!(q1[1], 1.0);
        let q2 = appell_poly(&law, 2).unwrap();
        assert!(q2[0].abs() < 1e-12);
        assert_relative_eq!(q2[1], -10.0, max_relative = 1e-14);
        assert_relative_eq!(q2[2], 1.0);
    }

    #[test]
    fn appell_polynomials_are_monic() {
        for n in 0..8u32 {
            let law = NegExpLaw::new(0.4).unwrap();
            let q = appell_poly(&law, n).unwrap();
            assert_eq!(q.len(), n as usize + 1);
            assert_relative_eq!(q[n as usize], 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn appell_averaging_by_quadrature() {
        // E Q_n(y + nu) = y^n, checked against the exponential density.
        let law = ExpLaw::new(0.2).unwrap();
        for n in 1..=4u32 {
            let q = appell_poly(&law, n).unwrap();
            let img = TransformImage {
                terms: vec![ImageTerm {
                    rate: 0.0,
                    poly: q,
                }],
                law_tag: law.tag(),
            };
            for y in [-3.0, 0.0, 2.5] {
                let integral = quadrature::integrate(
                    |v| img.eval(y + v) * 0.2 * (-0.2 * v).exp(),
                    0.0,
                    400.0,
                    1e-10,
                    4000,
                )
                .unwrap();
                assert!(
                    (integral.value - y.powi(n as i32)).abs() < 1e-8 * (1.0 + y.abs().powi(n as i32)),
                    "n={n} y={y} got {}",
                    integral.value
                );
            }
        }
    }

    #[test]
    fn transform_examples() {
        let law = ExpLaw::new(0.2).unwrap();

        // e^{0.1 y} tilts to 0.5 e^{0.1 y}.
        let img = transform(&expr(&[(1.0, 0, 0.1)]), &law).unwrap();
        assert_eq!(img.terms().len(), 1);
        assert_relative_eq!(img.terms()[0].poly[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(img.eval(0.0), 0.5, max_relative = 1e-14);

        // Constants are fixed points.
        let one = transform(&expr(&[(1.0, 0, 0.0)]), &law).unwrap();
        for y in [-10.0, 0.0, 7.0] {
            assert_relative_eq!(one.eval(y), 1.0, max_relative = 1e-14);
        }

        // y e^{r y} maps to e^{r y} (y / M(r) + (1/M)'(r)).
        let r = 0.05;
        let img = transform(&expr(&[(1.0, 1, r)]), &law).unwrap();
        let recip = reciprocal_mgf_derivs(&law, r, 1).unwrap();
        assert_relative_eq!(img.terms()[0].poly[1], recip[0], max_relative = 1e-14);
        assert_relative_eq!(img.terms()[0].poly[0], recip[1], max_relative = 1e-14);

        // Image of y^2 vanishes at the root 2/beta = 10.
        let img = transform(&expr(&[(1.0, 2, 0.0)]), &law).unwrap();
        assert!(img.eval(10.0).abs() < 1e-12);

        // Rates at or above beta are outside the MGF domain.
        assert!(matches!(
            transform(&expr(&[(1.0, 0, 0.2)]), &law),
            Err(TransformError::OutOfDomain { .. })
        ));
        assert!(transform(&RewardExpr::positive_power(1), &law).is_err());
    }

    #[test]
    fn transform_merges_equal_rates() {
        let law = ExpLaw::new(0.2).unwrap();
        let img = transform(&expr(&[(1.0, 2, 0.0), (3.0, 0, 0.0)]), &law).unwrap();
        assert_eq!(img.terms().len(), 1);
        // Q_2 + 3 Q_0 = y^2 - 10y + 3.
        assert_relative_eq!(img.eval(0.0), 3.0, max_relative = 1e-13);
        assert_relative_eq!(img.eval(10.0), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_law_is_identity() {
        let g = expr(&[(0.7, 2, 0.1), (-1.0, 0, -0.05)]);
        let img = transform(&g, &DegenerateLaw).unwrap();
        for y in [-4.0, 0.0, 3.3] {
            assert_relative_eq!(img.eval(y), g.eval(y), max_relative = 1e-13);
        }
    }

    proptest! {
        // Linearity is term-by-term: transform(c1 f + c2 g) = c1 T(f) + c2 T(g).
        #[test]
        fn transform_is_linear(
            c1 in -2.0f64..2.0,
            c2 in -2.0f64..2.0,
            r1 in -0.15f64..0.15,
            r2 in -0.15f64..0.15,
            n1 in 0u32..4,
            n2 in 0u32..4,
        ) {
            prop_assume!(c1.abs() > 1e-3 && c2.abs() > 1e-3);
            let law = ExpLaw::new(0.2).unwrap();
            let f = expr(&[(1.1, n1, r1)]);
            let g = expr(&[(-0.6, n2, r2)]);
            let combo = RewardExpr::new(
                vec![
                    RewardTerm::new(c1 * 1.1, n1, r1),
                    RewardTerm::new(c2 * -0.6, n2, r2),
                ],
                false,
            );
            if let Ok(combo) = combo {
                let lhs = transform(&combo, &law).unwrap();
                let tf = transform(&f, &law).unwrap().scale(c1);
                let tg = transform(&g, &law).unwrap().scale(c2);
                for y in [-8.0f64, -1.0, 0.0, 2.0, 9.0] {
                    let rhs = tf.eval(y) + tg.eval(y);
                    let scale = lhs.eval(y).abs().max(rhs.abs()).max(1e-9);
                    prop_assert!(((lhs.eval(y) - rhs) / scale).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn differential_property_via_finite_differences() {
        let law = NegExpLaw::new(0.25).unwrap();
        let g = expr(&[(0.8, 2, 0.05), (1.0, 0, -0.1), (-0.4, 1, 0.0)]);
        let img = transform(&g, &law).unwrap();
        let dimg = transform(&g.derivative().unwrap(), &law).unwrap();
        let mut y: f64 = -50.0;
        while y <= 20.0 {
            let h = 1e-5 * (1.0 + y.abs());
            let fd = (img.eval(y + h) - img.eval(y - h)) / (2.0 * h);
            let exact = dimg.eval(y);
            let scale = exact.abs().max(1e-8);
            assert!(((fd - exact) / scale).abs() < 1e-6, "y={y}");
            y += 1.7;
        }
    }

    #[test]
    fn fractional_power_degenerate_recovers_power() {
        let v = transform_power(&DegenerateLaw, -1.0, 2.0, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-9, "got {v}");
        let v = transform_power(&DegenerateLaw, -0.5, 4.0, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn fractional_power_exponential_law_closed_form() {
        // 1/M(-u) = 1 + u/beta, so with exponent -1 the image is 1/y + 1/(beta y^2).
        let law = ExpLaw::new(0.2).unwrap();
        let v = transform_power(&law, -1.0, 5.0, 1e-10).unwrap();
        assert!((v - 0.4).abs() < 1e-8, "got {v}");
        for y in [0.5f64, 2.0, 12.0] {
            let expect = 1.0 / y + 1.0 / (0.2 * y * y);
            let v = transform_power(&law, -1.0, y, 1e-10).unwrap();
            assert!((v - expect).abs() < 1e-8 * expect.max(1.0), "y={y} got {v}");
        }
    }

    #[test]
    fn fractional_power_rejects_bad_inputs() {
        let law = ExpLaw::new(0.2).unwrap();
        assert!(matches!(
            transform_power(&law, -1.0, 0.0, 1e-9),
            Err(TransformError::InvalidPoint(_))
        ));
        assert!(matches!(
            transform_power(&law, -1.0, -2.0, 1e-9),
            Err(TransformError::InvalidPoint(_))
        ));
        assert!(matches!(
            transform_power(&law, 0.5, 2.0, 1e-9),
            Err(TransformError::InvalidExponent(_))
        ));
        // Laws without a full negative-axis MGF are rejected.
        let neg = NegExpLaw::new(0.2).unwrap();
        assert!(matches!(
            transform_power(&neg, -1.0, 2.0, 1e-9),
            Err(TransformError::NegativeAxisUnsupported)
        ));
    }
}
