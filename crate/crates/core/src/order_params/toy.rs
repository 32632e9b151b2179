//! Second-moment exponent of the product-measure toy model.
//!
//! For a product measure with mean `m` per site, the overlap increment of two
//! independent replicas is `eta = (s - m)(s' - m)` with `s, s'` independent
//! `+-1` spins of mean `m`. The exponent is
//!
//! ```text
//! sup_x ( beta^2 x^2 / 2 - J(x) ),   J(x) = sup_lambda ( lambda x - log E e^{lambda eta} ).
//! ```
//!
//! `J` is convex, so the inner problem is a concave maximization solved by
//! golden-section search on `lambda in [-50, 50]`. The outer objective is a
//! convex parabola minus a convex function and is typically bimodal (a local
//! maximum at `x = 0` and another at the top of the support), so it is
//! scanned on a grid before golden-section refinement.

use crate::error::{Error, Result};

const LAMBDA_BOUND: f64 = 50.0;
const GOLDEN_TOL: f64 = 1e-11;
const GOLDEN_MAX_ITERS: usize = 400;
const X_GRID: usize = 4001;

/// Law of `eta` for a given site mean `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModel {
    m: f64,
    values: [f64; 3],
    probs: [f64; 3],
}

impl ToyModel {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > -1.0 && m < 1.0) {
            return Err(Error::Domain {
                value: m,
                domain: "(-1, 1)".into(),
            });
        }
        let up = (1.0 + m) / 2.0;
        let down = (1.0 - m) / 2.0;
        Ok(Self {
            m,
            // Both spins +1, both -1, and the two mixed outcomes merged.
            values: [(1.0 - m) * (1.0 - m), (1.0 + m) * (1.0 + m), -(1.0 - m * m)],
            probs: [up * up, down * down, 2.0 * up * down],
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Smallest and largest value of `eta`.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `E eta`, which is zero for every `m`.
    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// `log E e^{lambda eta}` by log-sum-exp.
    pub fn log_mgf(&self, lambda: f64) -> f64 {
        let exps = [
            lambda * self.values[0],
            lambda * self.values[1],
            lambda * self.values[2],
        ];
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exps
            .iter()
            .zip(&self.probs)
            .map(|(e, p)| p * (e - top).exp())
            .sum();
        top + sum.ln()
    }

    /// Rate function `J(x)` with `lambda` restricted to `[-50, 50]`.
    pub fn rate(&self, x: f64) -> Result<f64> {
        let (_, value) = golden_max(
            |lambda| lambda * x - self.log_mgf(lambda),
            -LAMBDA_BOUND,
            LAMBDA_BOUND,
            "rate-function Legendre transform",
        )?;
        // J >= 0 with J(E eta) = 0; lambda = 0 is always a candidate.
        Ok(value.max(0.0))
    }

    /// `sup_x (beta^2 x^2 / 2 - J(x))` over the support of `eta`.
    pub fn exponent(&self, beta: f64) -> Result<f64> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        let (lo, hi) = self.support();
        let objective = |x: f64| -> Result<f64> { Ok(0.5 * beta * beta * x * x - self.rate(x)?) };

        let step = (hi - lo) / (X_GRID - 1) as f64;
        let mut best_i = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..X_GRID {
            let v = objective(lo + step * i as f64)?;
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let a = lo + step * best_i.saturating_sub(1) as f64;
        let b = (lo + step * (best_i + 1) as f64).min(hi);
        let mut err = None;
        let (_, refined) = golden_max(
            |x| match objective(x) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            a,
            b,
            "toy exponent outer search",
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        // x = E eta = 0 gives exactly 0.
        Ok(best.max(refined).max(0.0))
    }
}

/// Convenience wrapper: `ToyModel::new(m)?.exponent(beta)`.
pub fn toy_exponent(beta: f64, m: f64) -> Result<f64> {
    ToyModel::new(m)?.exponent(beta)
}

/// Golden-section maximization on `[a, b]`; returns `(argmax, max)`.
fn golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    what: &'static str,
) -> Result<(f64, f64)> {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_MAX_ITERS {
        if !(fc.is_finite() && fd.is_finite()) {
            return Err(Error::NoConvergence {
                what,
                last: c,
                residual: f64::NAN,
            });
        }
        if (b - a).abs() <= GOLDEN_TOL * (1.0 + a.abs().max(b.abs())) {
            let x = 0.5 * (a + b);
            let fx = f(x);
            let (x, fx) = [(x, fx), (c, fc), (d, fd)]
                .into_iter()
                .fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc });
            return Ok((x, fx));
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Err(Error::NoConvergence {
        what,
        last: 0.5 * (a + b),
        residual: b - a,
    })
}
