//! N-independent scalars: the overlap `q`, the sequences `gamma_k` and
//! `rho_k`, the AT value and the replica-symmetric free energy.
//!
//! Throughout, `Th(x) = tanh(h + beta x)` and `Z, Z', Z''` are independent
//! standard Gaussians evaluated by Gauss-Hermite quadrature.

mod quadrature;
mod toy;

pub use quadrature::{gauss_expect, GaussHermite};
pub use toy::{toy_exponent, ToyModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of Gauss-Hermite nodes.
pub const DEFAULT_QUAD_NODES: usize = 61;
/// Default fixed-point tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Smallest admissible node count for [`ModelParams`].
pub const MIN_QUAD_NODES: usize = 21;

const DAMPING: f64 = 0.5;
const MAX_FIXED_POINT_ITERS: usize = 500;
const RS_GRID_POINTS: usize = 1001;
const RS_GRID_SLACK: f64 = 1e-9;

/// Thermodynamic control knobs plus numerical settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub h: f64,
    pub quad_nodes: usize,
    pub tol: f64,
}

impl ModelParams {
    /// Parameters with the default quadrature and tolerance.
    ///
    /// `beta = 0` is accepted as the degenerate no-disorder limit.
    pub fn new(beta: f64, h: f64) -> Result<Self> {
        Self::with_numerics(beta, h, DEFAULT_QUAD_NODES, DEFAULT_TOL)
    }

    pub fn with_numerics(beta: f64, h: f64, quad_nodes: usize, tol: f64) -> Result<Self> {
        let p = Self {
            beta,
            h,
            quad_nodes,
            tol,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        if !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("h must be finite, got {}", self.h)));
        }
        if self.quad_nodes < MIN_QUAD_NODES {
            return Err(Error::InvalidParameter(format!(
                "quad_nodes must be >= {MIN_QUAD_NODES}, got {}",
                self.quad_nodes
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }

    /// Same parameters with a different node count.
    pub fn with_quad_nodes(self, quad_nodes: usize) -> Self {
        Self { quad_nodes, ..self }
    }

    /// `Th(x) = tanh(h + beta x)`.
    #[inline]
    pub fn th(&self, x: f64) -> f64 {
        (self.h + self.beta * x).tanh()
    }

    fn rule(&self) -> Result<std::sync::Arc<GaussHermite>> {
        GaussHermite::cached(self.quad_nodes)
    }
}

/// Scalar limits of the recursive construction.
///
/// Besides `rho_k` and `Gamma_k^2` the complements `q - rho_k` and
/// `q - Gamma_k^2` are stored: both decay geometrically with ratio close to
/// the AT value and drop below double-precision resolution of `q` within a
/// dozen stages, so they are computed directly rather than by subtraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParams {
    pub q: f64,
    /// `gamma_1 .. gamma_K`.
    pub gamma: Vec<f64>,
    /// `rho_1 .. rho_K`.
    pub rho: Vec<f64>,
    /// `Gamma_k^2 = sum_{j <= k} gamma_j^2`, `k = 1 .. K`.
    pub gamma_sq_partial: Vec<f64>,
    /// `q - rho_k`, `k = 1 .. K`.
    pub rho_gap: Vec<f64>,
    /// `q - Gamma_k^2`, `k = 1 .. K`.
    pub remaining: Vec<f64>,
    /// `beta^2 E cosh^-4(h + beta sqrt(q) Z)`.
    pub at_value: f64,
}

impl OrderParams {
    /// Number of stages the sequences were built for.
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// `gamma_k` for 1-based `k`.
    pub fn gamma_at(&self, k: usize) -> f64 {
        self.gamma[k - 1]
    }

    /// `rho_k` for 1-based `k`.
    pub fn rho_at(&self, k: usize) -> f64 {
        self.rho[k - 1]
    }

    /// `Gamma_k^2` with `Gamma_0^2 = 0`.
    pub fn gamma_sq(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.gamma_sq_partial[k - 1]
        }
    }

    /// `q - Gamma_k^2` with the `k = 0` value `q`.
    pub fn remaining_at(&self, k: usize) -> f64 {
        if k == 0 {
            self.q
        } else {
            self.remaining[k - 1]
        }
    }

    /// True iff the AT condition holds (non-strict).
    pub fn at_holds(&self) -> bool {
        self.at_value <= 1.0
    }
}

/// Right-hand side of the fixed-point equation, `E tanh^2(h + beta sqrt(q) Z)`.
fn fixed_point_map(params: &ModelParams, rule: &GaussHermite, q: f64) -> f64 {
    let s = q.max(0.0).sqrt();
    rule.expect_unchecked(|x| {
        let t = params.th(s * x);
        t * t
    })
}

/// Solves `q = E tanh^2(h + beta sqrt(q) Z)` for `h != 0`.
///
/// Damped fixed-point iteration from `tanh^2(h)` with bisection on the
/// residual as fallback.
pub fn solve_q(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.h == 0.0 {
        return Err(Error::Domain {
            value: 0.0,
            domain: "h != 0 (the h = 0 equation has a trivial root)".into(),
        });
    }
    let rule = params.rule()?;
    let start = params.h.tanh().powi(2);
    if params.beta == 0.0 {
        return Ok(start);
    }
    let residual = |q: f64| fixed_point_map(params, &rule, q) - q;

    let mut q = start;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let next = (1.0 - DAMPING) * q + DAMPING * fixed_point_map(params, &rule, q);
        let moved = (next - q).abs();
        q = next;
        if moved < 0.1 * params.tol && residual(q).abs() < params.tol {
            return Ok(q);
        }
    }

    // r(0) = tanh^2(h) > 0 and r(1) = E tanh^2 - 1 < 0.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    let q = 0.5 * (lo + hi);
    let r = residual(q);
    if r.abs() < params.tol {
        Ok(q)
    } else {
        Err(Error::NoConvergence {
            what: "overlap fixed point",
            last: q,
            residual: r,
        })
    }
}

/// `gamma_1 = E tanh(h + beta sqrt(q) Z)`.
fn gamma_one(params: &ModelParams, rule: &GaussHermite, q: f64) -> f64 {
    let s = q.sqrt();
    rule.expect_unchecked(|x| params.th(s * x))
}

/// `psi(t) = E Th(sqrt(t) Z + sqrt(q-t) Z') Th(sqrt(t) Z + sqrt(q-t) Z'')`,
/// computed as `E_Z [ (E_Z' Th(sqrt(t) Z + sqrt(q-t) Z'))^2 ]`.
pub fn psi(t: f64, q: f64, params: &ModelParams) -> Result<f64> {
    if !(0.0..=q).contains(&t) {
        return Err(Error::Domain {
            value: t,
            domain: format!("[0, q] with q = {q}"),
        });
    }
    let rule = params.rule()?;
    let (a, b) = (t.sqrt(), (q - t).sqrt());
    let value = rule.expect_unchecked(|z| {
        let inner = rule.expect_unchecked(|zp| params.th(a * z + b * zp));
        inner * inner
    });
    Ok(value)
}

/// `q - psi(q - gap)` for `gap` in `[0, q]`.
///
/// Equals `E_Z Var_Z'[Th(sqrt(q-gap) Z + sqrt(gap) Z')]`. The conditional
/// variance is evaluated as `1/2 sum_{j,l} w_j w_l (v_j - v_l)^2` with the
/// differences rewritten through `tanh a - tanh b = tanh(a-b)(1 - tanh a tanh b)`,
/// so the result keeps full relative precision as `gap -> 0`.
pub fn psi_complement(gap: f64, q: f64, params: &ModelParams) -> Result<f64> {
    if !(0.0..=q).contains(&gap) {
        return Err(Error::Domain {
            value: gap,
            domain: format!("[0, q] with q = {q}"),
        });
    }
    let rule = params.rule()?;
    let nodes = rule.nodes();
    let weights = rule.weights();
    let n = nodes.len();
    let (a, b) = ((q - gap).sqrt(), gap.sqrt());

    let mut tanh_diff = vec![0.0; n * n];
    for j in 0..n {
        for l in 0..j {
            tanh_diff[j * n + l] = (params.beta * b * (nodes[j] - nodes[l])).tanh();
        }
    }
    let mut v = vec![0.0; n];
    let mut total = 0.0;
    for (&z, &wz) in nodes.iter().zip(weights) {
        for (vj, &x) in v.iter_mut().zip(nodes) {
            *vj = params.th(a * z + b * x);
        }
        let mut var = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for l in 0..j {
                let d = tanh_diff[j * n + l] * (1.0 - v[j] * v[l]);
                row += weights[l] * d * d;
            }
            var += weights[j] * row;
        }
        total += wz * var;
    }
    Ok(total)
}

/// AT value `beta^2 E cosh^-4(h + beta sqrt(q) Z)`; compare against 1.
pub fn at_value(params: &ModelParams, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain {
            value: q,
            domain: "[0, 1]".into(),
        });
    }
    if params.beta == 0.0 {
        return Ok(0.0);
    }
    let s = q.sqrt();
    let mean = GaussHermite::cached(params.quad_nodes)?.expect(|x| {
        let c = (params.h + params.beta * s * x).cosh();
        1.0 / (c * c * c * c)
    })?;
    Ok(params.beta * params.beta * mean)
}

/// Builds `q`, `gamma_1..K`, `rho_1..K` and the partial sums.
///
/// `rho_1 = sqrt(q) gamma_1`, `rho_k = psi(rho_{k-1})` and
/// `gamma_k = (rho_k - Gamma_{k-1}^2) / sqrt(q - Gamma_{k-1}^2)`.
/// With `D_k = q - Gamma_k^2` and `d_k = q - rho_k` the update is carried out
/// as `gamma_k = (D_{k-1} - d_k) / sqrt(D_{k-1})`,
/// `D_k = d_k (2 - d_k / D_{k-1})`.
///
/// At `beta = 0` every `Th` is constant: `gamma_1 = sqrt(q)`, `rho_k = q` and
/// `gamma_k = 0` for `k >= 2`.
pub fn build_sequences(params: &ModelParams, stages: usize) -> Result<OrderParams> {
    if stages == 0 {
        return Err(Error::InvalidParameter("need at least one stage".into()));
    }
    let q = solve_q(params)?;
    let at = at_value(params, q)?;
    if params.beta == 0.0 {
        let sq = q.sqrt();
        let mut gamma = vec![0.0; stages];
        gamma[0] = sq;
        return Ok(OrderParams {
            q,
            gamma,
            rho: vec![q; stages],
            gamma_sq_partial: vec![q; stages],
            rho_gap: vec![0.0; stages],
            remaining: vec![0.0; stages],
            at_value: at,
        });
    }
    let rule = params.rule()?;
    let g1 = gamma_one(params, &rule, q);
    let rho1 = q.sqrt() * g1;

    let mut gamma = vec![g1];
    let mut rho = vec![rho1];
    let mut rho_gap = vec![q - rho1];
    let mut remaining = vec![q - g1 * g1];
    let mut gamma_sq_partial = vec![g1 * g1];

    for k in 2..=stages {
        let prev_remaining = remaining[k - 2];
        if !(prev_remaining > 0.0) {
            return Err(Error::SequenceBreakdown {
                k,
                remaining: prev_remaining,
            });
        }
        let prev_gap = rho_gap[k - 2].clamp(0.0, q);
        let gap = psi_complement(prev_gap, q, params)?;
        let gk = (prev_remaining - gap) / prev_remaining.sqrt();
        let next_remaining = gap * (2.0 - gap / prev_remaining);
        gamma.push(gk);
        rho.push(q - gap);
        rho_gap.push(gap);
        gamma_sq_partial.push(gamma_sq_partial[k - 2] + gk * gk);
        remaining.push(next_remaining);
    }
    Ok(OrderParams {
        q,
        gamma,
        rho,
        gamma_sq_partial,
        rho_gap,
        remaining,
        at_value: at,
    })
}

/// The replica-symmetric bracket
/// `E log cosh(h + beta sqrt(q) Z) + beta^2 (1-q)^2 / 4`.
pub fn rs_bracket(params: &ModelParams, q: f64) -> Result<f64> {
    let s = q.max(0.0).sqrt();
    let first = GaussHermite::cached(params.quad_nodes)?
        .expect(|x| log_cosh(params.h + params.beta * s * x))?;
    Ok(first + params.beta * params.beta * (1.0 - q) * (1.0 - q) / 4.0)
}

/// Replica-symmetric free energy `inf_{q >= 0}` of [`rs_bracket`].
///
/// For `h != 0` the bracket is evaluated at [`solve_q`]; for `h = 0` the
/// candidates are `q = 0` and, when `beta > 1`, the positive root. Either way
/// a 1001-point scan over `[0, 1]` must not undercut the result by more than
/// `1e-9`.
pub fn rs_free_energy(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let value = if params.h != 0.0 {
        rs_bracket(params, solve_q(params)?)?
    } else {
        let mut best = rs_bracket(params, 0.0)?;
        if params.beta > 1.0 {
            let q_pos = positive_root_zero_field(params)?;
            best = best.min(rs_bracket(params, q_pos)?);
        }
        best
    };
    for i in 0..RS_GRID_POINTS {
        let q = i as f64 / (RS_GRID_POINTS - 1) as f64;
        let grid = rs_bracket(params, q)?;
        if grid < value - RS_GRID_SLACK {
            return Err(Error::RsGridCheck {
                stationary: value,
                grid,
                q_grid: q,
            });
        }
    }
    Ok(value)
}

/// Positive solution of `q = E tanh^2(beta sqrt(q) Z)` for `beta > 1`,
/// reached by plain iteration from `q = 1` (monotone decreasing).
fn positive_root_zero_field(params: &ModelParams) -> Result<f64> {
    let rule = params.rule()?;
    let mut q = 1.0;
    for _ in 0..100_000 {
        let next = fixed_point_map(params, &rule, q);
        if (next - q).abs() < 0.1 * params.tol {
            return Ok(next);
        }
        q = next;
    }
    Err(Error::NoConvergence {
        what: "zero-field overlap",
        last: q,
        residual: fixed_point_map(params, &rule, q) - q,
    })
}

/// Overflow-free `log cosh x`.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}
