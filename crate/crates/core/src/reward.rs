//! Reward functions as exponential polynomials.
//!
//! A reward is a finite sum of terms `c * y^n * e^{r y}` plus an optional
//! positive-part wrapper marking rewards of the form `(x^+)^n` (the wrapper
//! zeroes the function for `y <= 0` and is consumed by the solver's region
//! logic, not by the transform). The spectral form records, term by term, the
//! inverse bilateral Laplace structure: `c * y^n * e^{r y}` corresponds to a
//! weighted n-th delta derivative at the point `r`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("reward must have at least one term with a nonzero coefficient")]
    Empty,
    #[error("reward coefficients and rates must be finite")]
    NonFinite,
    #[error("operation requires an analytic reward; positive_part is set")]
    PositivePart,
}

/// One `c * y^n * e^{r y}` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerm {
    pub coef: f64,
    pub power: u32,
    pub rate: f64,
}

impl RewardTerm {
    pub fn new(coef: f64, power: u32, rate: f64) -> Self {
        Self { coef, power, rate }
    }

    fn eval(&self, y: f64) -> f64 {
        let mut v = self.coef;
        if self.power > 0 {
            v *= y.powi(self.power as i32);
        }
        if self.rate != 0.0 {
            v *= (self.rate * y).exp();
        }
        v
    }
}

/// Exponential polynomial, optionally wrapped in a positive part.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardExpr {
    terms: Vec<RewardTerm>,
    positive_part: bool,
}

impl RewardExpr {
    /// Builds and normalizes: zero-coefficient terms are dropped and terms
    /// with equal `(power, rate)` are merged; the term list is kept sorted.
    pub fn new(terms: Vec<RewardTerm>, positive_part: bool) -> Result<Self, RewardError> {
        if terms
            .iter()
            .any(|t| !(t.coef.is_finite() && t.rate.is_finite()))
        {
            return Err(RewardError::NonFinite);
        }
        let mut merged: Vec<RewardTerm> = Vec::new();
        for t in terms {
            match merged
                .iter_mut()
                .find(|m| m.power == t.power && m.rate == t.rate)
            {
                Some(m) => m.coef += t.coef,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        merged.sort_by(|a, b| {
            a.rate
                .partial_cmp(&b.rate)
                .unwrap()
                .then(a.power.cmp(&b.power))
        });
        if merged.is_empty() {
            return Err(RewardError::Empty);
        }
        Ok(Self {
            terms: merged,
            positive_part,
        })
    }

    /// The constant reward `c`.
    pub fn constant(c: f64) -> Result<Self, RewardError> {
        Self::new(vec![RewardTerm::new(c, 0, 0.0)], false)
    }

    /// The reward `(x^+)^n`.
    pub fn positive_power(n: u32) -> Self {
        Self::new(vec![RewardTerm::new(1.0, n, 0.0)], true).expect("nonzero term")
    }

    pub fn terms(&self) -> &[RewardTerm] {
        &self.terms
    }

    pub fn is_positive_part(&self) -> bool {
        self.positive_part
    }

    /// Same terms with the positive-part flag cleared.
    pub fn analytic_part(&self) -> RewardExpr {
        RewardExpr {
            terms: self.terms.clone(),
            positive_part: false,
        }
    }

    /// The reward scaled by `c` (must be nonzero to stay a valid reward).
    pub fn scale(&self, c: f64) -> Result<RewardExpr, RewardError> {
        let terms = self
            .terms
            .iter()
            .map(|t| RewardTerm::new(c * t.coef, t.power, t.rate))
            .collect();
        RewardExpr::new(terms, self.positive_part)
    }

    pub fn eval(&self, y: f64) -> f64 {
        if self.positive_part && y <= 0.0 {
            return 0.0;
        }
        self.terms.iter().map(|t| t.eval(y)).sum()
    }

    /// Term-wise derivative. Positive-part rewards are rejected: the kink at
    /// zero is outside the exponential-polynomial algebra.
    pub fn derivative(&self) -> Result<RewardExpr, RewardError> {
        if self.positive_part {
            return Err(RewardError::PositivePart);
        }
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.power > 0 {
                terms.push(RewardTerm::new(
                    t.coef * t.power as f64,
                    t.power - 1,
                    t.rate,
                ));
            }
            if t.rate != 0.0 {
                terms.push(RewardTerm::new(t.coef * t.rate, t.power, t.rate));
            }
        }
        if terms.is_empty() {
            // Derivative of a constant: keep the canonical zero... a reward
            // must be nonempty, so represent d/dy(const) as the zero constant
            // is not possible; callers differentiate non-constant rewards.
            return Err(RewardError::Empty);
        }
        RewardExpr::new(terms, false)
    }

    /// Spectral form: one delta-derivative atom per term.
    pub fn spectral(&self) -> Result<SpectralForm, RewardError> {
        if self.positive_part {
            return Err(RewardError::PositivePart);
        }
        Ok(SpectralForm {
            atoms: self
                .terms
                .iter()
                .map(|t| SpectralAtom {
                    order: t.power,
                    point: t.rate,
                    weight: t.coef,
                })
                .collect(),
        })
    }

    /// Largest exponent rate across terms.
    pub fn max_rate(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.rate)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest exponent rate across terms.
    pub fn min_rate(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.rate)
            .fold(f64::INFINITY, f64::min)
    }
}

impl std::fmt::Display for RewardExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut body = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let coef = t.coef;
            if i == 0 {
                if coef < 0.0 {
                    body.push('-');
                }
            } else if coef < 0.0 {
                body.push_str(" - ");
            } else {
                body.push_str(" + ");
            }
            let mag = coef.abs();
            let has_factor = t.power > 0 || t.rate != 0.0;
            if mag != 1.0 || !has_factor {
                body.push_str(&format!("{mag}"));
                if has_factor {
                    body.push('*');
                }
            }
            if t.power == 1 {
                body.push('y');
            } else if t.power > 1 {
                body.push_str(&format!("y^{}", t.power));
            }
            if t.rate != 0.0 {
                if t.power > 0 {
                    body.push('*');
                }
                body.push_str(&format!("e^{{{}y}}", t.rate));
            }
        }
        if self.positive_part {
            write!(f, "positive_part({body})")
        } else {
            write!(f, "{body}")
        }
    }
}

/// `weight * (-1)^order * delta^(order)(u - point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralAtom {
    pub order: u32,
    pub point: f64,
    pub weight: f64,
}

impl SpectralAtom {
    /// Applies the atom to the kernel `e^{u y}`, recovering the term it came
    /// from: `weight * y^order * e^{point * y}`.
    pub fn apply_to_exponential(&self, y: f64) -> f64 {
        self.weight * y.powi(self.order as i32) * (self.point * y).exp()
    }
}

/// Inverse bilateral Laplace structure of an exponential polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralForm {
    atoms: Vec<SpectralAtom>,
}

impl SpectralForm {
    pub fn atoms(&self) -> &[SpectralAtom] {
        &self.atoms
    }
}

/// The two-sided reward `e^{a y} + e^{-b y} - 2` used throughout the
/// two-boundary examples and tests.
pub fn two_sided_reward(a: f64, b: f64) -> Result<RewardExpr, RewardError> {
    RewardExpr::new(
        vec![
            RewardTerm::new(1.0, 0, a),
            RewardTerm::new(1.0, 0, -b),
            RewardTerm::new(-2.0, 0, 0.0),
        ],
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let g = two_sided_reward(0.1, 0.05).unwrap();
        assert_eq!(g.eval(0.0), 0.0);

        let sq = RewardExpr::new(vec![RewardTerm::new(1.0, 2, 0.0)], false).unwrap();
        assert_eq!(sq.eval(3.0), 9.0);

        let pp = RewardExpr::positive_power(1);
        assert_eq!(pp.eval(-2.0), 0.0);
        assert_eq!(pp.eval(2.0), 2.0);
    }

    #[test]
    fn normalization_merges_and_drops() {
        let g = RewardExpr::new(
            vec![
                RewardTerm::new(1.0, 1, 0.5),
                RewardTerm::new(2.0, 1, 0.5),
                RewardTerm::new(0.0, 3, 0.1),
            ],
            false,
        )
        .unwrap();
        assert_eq!(g.terms().len(), 1);
        assert_eq!(g.terms()[0].coef, 3.0);
        assert!(RewardExpr::new(vec![RewardTerm::new(0.0, 0, 0.0)], false).is_err());
    }

    #[test]
    fn derivative_examples() {
        let sq = RewardExpr::new(vec![RewardTerm::new(1.0, 2, 0.0)], false).unwrap();
        let d = sq.derivative().unwrap();
        assert_eq!(d.terms(), &[RewardTerm::new(2.0, 1, 0.0)]);

        let e = RewardExpr::new(vec![RewardTerm::new(1.0, 0, 0.1)], false).unwrap();
        let de = e.derivative().unwrap();
        assert_eq!(de.terms(), &[RewardTerm::new(0.1, 0, 0.1)]);

        // d/dy (y e^{2y}) = e^{2y} + 2 y e^{2y}
        let ye = RewardExpr::new(vec![RewardTerm::new(1.0, 1, 2.0)], false).unwrap();
        let dye = ye.derivative().unwrap();
        assert_eq!(
            dye.terms(),
            &[RewardTerm::new(1.0, 0, 2.0), RewardTerm::new(2.0, 1, 2.0)]
        );

        assert_eq!(
            RewardExpr::positive_power(1).derivative(),
            Err(RewardError::PositivePart)
        );
    }

    #[test]
    fn derivative_matches_finite_differences_on_grid() {
        let g = RewardExpr::new(
            vec![
                RewardTerm::new(0.7, 2, 0.1),
                RewardTerm::new(-1.3, 1, -0.05),
                RewardTerm::new(2.0, 0, 0.0),
            ],
            false,
        )
        .unwrap();
        let dg = g.derivative().unwrap();
        let mut y: f64 = -50.0;
        while y <= 20.0 {
            let h = 1e-5 * (1.0 + y.abs());
            let fd = (g.eval(y + h) - g.eval(y - h)) / (2.0 * h);
            let exact = dg.eval(y);
            let scale = exact.abs().max(1e-8);
            assert!(
                ((fd - exact) / scale).abs() < 1e-6,
                "y={y} fd={fd} exact={exact}"
            );
            y += 1.4;
        }
    }

    #[test]
    fn spectral_examples() {
        let cubic = RewardExpr::new(vec![RewardTerm::new(1.0, 3, 0.0)], false).unwrap();
        let s = cubic.spectral().unwrap();
        assert_eq!(
            s.atoms(),
            &[SpectralAtom {
                order: 3,
                point: 0.0,
                weight: 1.0
            }]
        );

        let e = RewardExpr::new(vec![RewardTerm::new(1.0, 0, 0.1)], false).unwrap();
        assert_eq!(
            e.spectral().unwrap().atoms(),
            &[SpectralAtom {
                order: 0,
                point: 0.1,
                weight: 1.0
            }]
        );

        let mix = RewardExpr::new(
            vec![RewardTerm::new(2.0, 1, -1.0), RewardTerm::new(3.0, 0, 0.0)],
            false,
        )
        .unwrap();
        let atoms = mix.spectral().unwrap();
        assert_eq!(atoms.atoms().len(), 2);
        assert!(atoms
            .atoms()
            .iter()
            .any(|a| a.order == 1 && a.point == -1.0 && a.weight == 2.0));
        assert!(atoms
            .atoms()
            .iter()
            .any(|a| a.order == 0 && a.point == 0.0 && a.weight == 3.0));

        assert!(RewardExpr::positive_power(2).spectral().is_err());
    }

    #[test]
    fn spectral_atoms_round_trip_terms() {
        let g = RewardExpr::new(
            vec![RewardTerm::new(2.0, 1, -1.0), RewardTerm::new(3.0, 0, 0.2)],
            false,
        )
        .unwrap();
        let s = g.spectral().unwrap();
        for y in [-3.0, 0.0, 1.7] {
            let via_atoms: f64 = s.atoms().iter().map(|a| a.apply_to_exponential(y)).sum();
            assert_relative_eq!(via_atoms, g.eval(y), max_relative = 1e-14);
        }
    }

    proptest! {
        // Spectral map is linear: atoms of c1*f + c2*g are the merged scaled atoms.
        #[test]
        fn spectral_is_linear(
            c1 in -3.0f64..3.0,
            c2 in -3.0f64..3.0,
            r1 in -0.15f64..0.15,
            r2 in -0.15f64..0.15,
            n1 in 0u32..3,
            n2 in 0u32..3,
        ) {
            prop_assume!(c1 != 0.0 && c2 != 0.0);
            let f = RewardExpr::new(vec![RewardTerm::new(1.5, n1, r1)], false).unwrap();
            let g = RewardExpr::new(vec![RewardTerm::new(-0.5, n2, r2)], false).unwrap();
            let mut combo_terms: Vec<RewardTerm> = f
                .terms()
                .iter()
                .map(|t| RewardTerm::new(c1 * t.coef, t.power, t.rate))
                .collect();
            combo_terms.extend(
                g.terms()
                    .iter()
                    .map(|t| RewardTerm::new(c2 * t.coef, t.power, t.rate)),
            );
            if let Ok(combo) = RewardExpr::new(combo_terms, false) {
                let atoms = combo.spectral().unwrap();
                for a in atoms.atoms() {
                    let from_f = f
                        .terms()
                        .iter()
                        .filter(|t| t.power == a.order && t.rate == a.point)
                        .map(|t| c1 * t.coef)
                        .sum::<f64>();
                    let from_g = g
                        .terms()
                        .iter()
                        .filter(|t| t.power == a.order && t.rate == a.point)
                        .map(|t| c2 * t.coef)
                        .sum::<f64>();
                    prop_assert!((a.weight - (from_f + from_g)).abs() <= 1e-12 * a.weight.abs().max(1.0));
                }
            }
        }
    }
}
