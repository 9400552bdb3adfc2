//! Optimal stopping for discounted Brownian reward problems.
//!
//! The library solves `sup_tau E[e^{-q tau} g(x + X_tau)]` for Brownian
//! motion with drift and exponential-polynomial rewards `g` by transforming
//! `g` against the law of the reward-indexed path extremum and reading the
//! stopping set off the sign of the transformed function:
//!
//! * [`levy_models`] — the driving process, its Laplace exponent, exact
//!   killed-extrema laws, and seeded samplers;
//! * [`reward`] — exponential-polynomial rewards and their spectral form;
//! * [`atransform`] — the transform engine: Appell polynomials, exponential
//!   tilts, derivative images, and the quadrature route for fractional powers;
//! * [`argmax_eta`] — pathwise argmax extraction and the closed-form laws it
//!   follows (sup, inf, and the threshold-routed two-sided law);
//! * [`solver`] — stopping region, boundaries, co-monotonicity report, and
//!   value-function evaluators (closed-form and Monte Carlo);
//! * [`verify`] — named statistical checks with explicit pass bands;
//! * [`mc`] — deterministic, thread-count-independent Monte Carlo driver.

pub mod argmax_eta;
pub mod atransform;
pub mod levy_models;
pub mod mc;
pub mod reward;
pub mod solver;
pub mod verify;
