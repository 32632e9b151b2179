//! Gauss-Hermite quadrature for expectations of functions of a standard
//! Gaussian variable.
//!
//! Nodes are the roots of the physicists' Hermite polynomial `H_n`, i.e. the
//! eigenvalues of its Jacobi matrix, located by Sturm-sequence bisection and
//! polished by Newton steps on the orthonormal three-term recurrence. The
//! rule is then rescaled to the unit-variance weight, so that
//!
//! ```text
//! E f(Z) ~= sum_i w_i f(x_i),   sum_i w_i = 1.
//! ```

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// A Gauss-Hermite rule normalized to the standard Gaussian measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-node rule. Exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one node".into(),
            ));
        }
        let bound = (2.0 * n as f64 + 1.0).sqrt();
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for idx in n / 2..n {
            // Roots are symmetric; locate the non-negative half and mirror.
            let mut z = if n % 2 == 1 && idx == n / 2 {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0, bound);
                while hi - lo > 4.0 * f64::EPSILON * hi {
                    let mid = 0.5 * (lo + hi);
                    if sturm_count(n, mid) > idx {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            // Newton polish; the bracket is already at rounding level.
            let (mut p, mut dp) = hermite_orthonormal(n, z);
            for _ in 0..2 {
                if dp == 0.0 || z == 0.0 {
                    break;
                }
                z -= p / dp;
                (p, dp) = hermite_orthonormal(n, z);
            }
            if !(dp.is_finite() && dp != 0.0) {
                return Err(Error::NoConvergence {
                    what: "Hermite root finding",
                    last: z,
                    residual: p,
                });
            }
            let w = 2.0 / (dp * dp) / PI.sqrt();
            nodes[idx] = z * SQRT_2;
            nodes[n - 1 - idx] = -z * SQRT_2;
            weights[idx] = w;
            weights[n - 1 - idx] = w;
        }
        Ok(Self { nodes, weights })
    }

    /// Shared rule for `n` nodes, computed once per process.
    pub fn cached(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(n)?);
        cache
            .lock()
            .expect("quadrature cache poisoned")
            .insert(n, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in increasing order, on the standard-normal scale.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(Z)`, failing on the first node where `f` is not finite.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { node: i, x });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// `E f(Z)` without the finiteness check, for integrands known to be bounded.
    pub(crate) fn expect_unchecked<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Hermite approximation of `E f(Z)`, `Z ~ N(0, 1)`.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, nodes: usize) -> Result<f64> {
    GaussHermite::cached(nodes)?.expect(f)
}

/// Number of eigenvalues below `x` of the Hermite Jacobi matrix (zero
/// diagonal, off-diagonal `sqrt(k/2)`), i.e. the number of roots of `H_n`
/// below `x`.
fn sturm_count(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    for k in 1..=n {
        if k > 1 {
            let b2 = (k - 1) as f64 / 2.0;
            q = -x - b2 / q;
        }
        if q == 0.0 {
            q = -f64::MIN_POSITIVE;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Orthonormal Hermite polynomial of degree `n` at `z` and its derivative,
/// normalized against the weight `exp(-z^2)`.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}
