//! Exact small-`N` thermodynamics by enumeration of `{-1, +1}^N`.
//!
//! The Hamiltonian keeps the diagonal of `g`:
//!
//! ```text
//! H(sigma) = (beta / sqrt 2) sum_{i,j} g_ij sigma_i sigma_j + h sum_i sigma_i,
//! Z_N = 2^-N sum_sigma exp H(sigma).
//! ```
//!
//! Conditional moments refer to a recursion state at stage `k + 1`, which
//! carries `phi^(1..k)`, `xi^(1..k)`, `eta^(1..k)`, `zeta^(1..k)` and
//! `h^(k+1)`. Writing `a_r = <phi^(r), sigma>` and
//! `<rho^(s) sigma, sigma> = <xi^(s), sigma> a_s + a_s <eta^(s), sigma> - <phi^(s), xi^(s)> a_s^2`,
//!
//! ```text
//! E_k Z_N = 2^-N sum_sigma exp[ h sum sigma + (beta N / sqrt 2) sum_s <rho^(s) sigma, sigma>
//!                                + (beta^2 N / 4) (1 - sum_r a_r^2)^2 ].
//! ```

mod enumerate;

pub use enumerate::LogSumExp;

use std::f64::consts::{LN_2, SQRT_2};

use rayon::prelude::*;

use crate::cavity_recursion::RecursionState;
use crate::error::{Error, Result};
use crate::order_params::{log_cosh, ModelParams, OrderParams};
use crate::vectorspace::{inner, symmetrize, Disorder, Matrix};

/// Largest `N` for single-configuration enumeration.
pub const MAX_ENUM_N: usize = 24;
/// Largest `N` for pair enumeration in the second moment.
pub const MAX_PAIR_N: usize = 13;

fn check_enum(n: usize, max: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("enumeration needs N >= 1".into()));
    }
    if n > max {
        return Err(Error::EnumerationLimit { n, max });
    }
    Ok(())
}

/// A configuration in `{-1, +1}^N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidParameter("empty spin configuration".into()));
        }
        if let Some(s) = spins.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::InvalidParameter(format!("spin value {s} is not +-1")));
        }
        Ok(Self { spins })
    }

    /// All spins up.
    pub fn all_up(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    /// Bit `i` of `bits` set means `sigma_i = -1`.
    pub fn from_bits(bits: u64, n: usize) -> Result<Self> {
        if n == 0 || n > 64 {
            return Err(Error::InvalidParameter(format!("bit-packed size must be 1..=64, got {n}")));
        }
        Ok(Self {
            spins: (0..n).map(|i| if (bits >> i) & 1 == 1 { -1 } else { 1 }).collect(),
        })
    }

    /// Signs of a real vector, zero mapped to `+1`.
    pub fn sign_of(x: &[f64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| s as f64).collect()
    }
}

/// The product measure `p(sigma) = prod_i exp(h_i sigma_i) / (2 cosh h_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMeasure {
    pub h_field: Vec<f64>,
    pub m_mean: Vec<f64>,
    /// `sum_i log cosh h_i + N log 2`, so `log p(sigma) = <h, sigma> N - log_norm`.
    pub log_norm: f64,
}

impl TiltedMeasure {
    pub fn new(h_field: Vec<f64>) -> Result<Self> {
        if h_field.is_empty() || h_field.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("field must be non-empty and finite".into()));
        }
        let m_mean = h_field.iter().map(|x| x.tanh()).collect();
        let log_norm =
            h_field.iter().map(|&x| log_cosh(x)).sum::<f64>() + h_field.len() as f64 * LN_2;
        Ok(Self {
            h_field,
            m_mean,
            log_norm,
        })
    }

    /// The measure with field `h^(k+1)` of a state at stage `k + 1`; at
    /// stage 1 the field is the constant `h`.
    pub fn from_state(state: &RecursionState) -> Result<Self> {
        if state.k() == 1 {
            Self::new(vec![state.params().h; state.n()])
        } else {
            Self::new(state.h_fields()[state.k() - 1].clone())
        }
    }

    pub fn n(&self) -> usize {
        self.h_field.len()
    }

    pub fn log_prob(&self, sigma: &SpinConfig) -> Result<f64> {
        if sigma.len() != self.n() {
            return Err(Error::LengthMismatch {
                left: sigma.len(),
                right: self.n(),
            });
        }
        let field: f64 = self
            .h_field
            .iter()
            .zip(sigma.spins())
            .map(|(h, &s)| h * s as f64)
            .sum();
        Ok(field - self.log_norm)
    }

    /// `log sum_sigma p(sigma)` by enumeration; zero up to rounding.
    pub fn log_total_mass(&self) -> Result<f64> {
        check_enum(self.n(), MAX_ENUM_N)?;
        let h = &self.h_field;
        let norm = self.log_norm;
        Ok(enumerate::log_sum_exp(self.n(), &[h], |c| c.dots[0] - norm))
    }
}

/// `H(sigma)` with the diagonal of `g` included.
pub fn hamiltonian(sigma: &SpinConfig, d: &Disorder, params: &ModelParams) -> Result<f64> {
    let n = d.n();
    if sigma.len() != n {
        return Err(Error::LengthMismatch {
            left: sigma.len(),
            right: n,
        });
    }
    let s = sigma.to_f64();
    let gs = d.g().mul_vec(&s)?;
    let quad: f64 = gs.iter().zip(&s).map(|(a, b)| a * b).sum();
    let field: f64 = s.iter().sum();
    Ok(params.beta / SQRT_2 * quad + params.h * field)
}

/// Rows of `g + g^T`: `sigma^T g sigma = (1/2) sum_i sigma_i (A sigma)_i`.
fn symmetric_rows(g: &Matrix) -> Vec<Vec<f64>> {
    let n = g.rows();
    (0..n)
        .map(|i| (0..n).map(|j| g.get(i, j) + g.get(j, i)).collect())
        .collect()
}

fn quenched_energy<'a>(
    params: &'a ModelParams,
) -> impl Fn(&enumerate::Config<'_>) -> f64 + Sync + 'a {
    let c = params.beta / SQRT_2;
    move |cfg| {
        let quad: f64 = cfg.spins.iter().zip(cfg.dots).map(|(s, l)| s * l).sum();
        c * 0.5 * quad + params.h * cfg.magnetization
    }
}

/// `log Z_N` by exact enumeration (`N <= 24`).
pub fn log_partition_exact(d: &Disorder, params: &ModelParams) -> Result<f64> {
    let n = d.n();
    check_enum(n, MAX_ENUM_N)?;
    let rows = symmetric_rows(d.g());
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let lse = enumerate::log_sum_exp(n, &refs, quenched_energy(params));
    Ok(lse - n as f64 * LN_2)
}

/// Gibbs means `<sigma_i>` by exact enumeration (`N <= 24`).
pub fn gibbs_magnetizations(d: &Disorder, params: &ModelParams) -> Result<Vec<f64>> {
    let n = d.n();
    check_enum(n, MAX_ENUM_N)?;
    let rows = symmetric_rows(d.g());
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(enumerate::weighted_means(n, &refs, quenched_energy(params)))
}

/// Functionals of the conditional moments, laid out as
/// `[phi^(1..k), xi^(1..k), eta^(1..k)]`.
struct Conditioning<'a> {
    k: usize,
    vectors: Vec<&'a [f64]>,
    phi_xi: Vec<f64>,
}

impl<'a> Conditioning<'a> {
    fn new(state: &'a RecursionState) -> Result<Self> {
        let k = state.k() - 1;
        let mut vectors: Vec<&[f64]> = Vec::with_capacity(3 * k);
        vectors.extend(state.phi()[..k].iter().map(Vec::as_slice));
        vectors.extend(state.xi()[..k].iter().map(Vec::as_slice));
        vectors.extend(state.eta()[..k].iter().map(Vec::as_slice));
        let phi_xi = (0..k)
            .map(|s| inner(&state.phi()[s], &state.xi()[s]))
            .collect::<Result<_>>()?;
        Ok(Self { k, vectors, phi_xi })
    }

    /// `(sum_s <rho^(s) sigma, sigma>, sum_r a_r^2)` from the tracked dots.
    #[inline]
    fn rho_and_overlap(&self, dots: &[f64], inv_n: f64) -> (f64, f64) {
        let k = self.k;
        let (mut rho, mut s) = (0.0, 0.0);
        for r in 0..k {
            let a = dots[r] * inv_n;
            let x = dots[k + r] * inv_n;
            let y = dots[2 * k + r] * inv_n;
            rho += x * a + a * y - self.phi_xi[r] * a * a;
            s += a * a;
        }
        (rho, s)
    }

    /// Single-replica exponent of the direct enumerand.
    #[inline]
    fn exponent(&self, params: &ModelParams, n: f64, dots: &[f64], magnetization: f64) -> f64 {
        let (rho, s) = self.rho_and_overlap(dots, 1.0 / n);
        let beta = params.beta;
        params.h * magnetization
            + beta * n / SQRT_2 * rho
            + beta * beta * n / 4.0 * (1.0 - s) * (1.0 - s)
    }
}

/// `(1/N) log E_k Z_N` for a state at stage `k + 1`, by enumeration of the
/// direct enumerand. At stage 1 (`k = 0`) this is the unconditional anneal
/// `log cosh h + beta^2 / 4`.
pub fn conditional_first_moment(state: &RecursionState) -> Result<f64> {
    let n = state.n();
    check_enum(n, MAX_ENUM_N)?;
    let cond = Conditioning::new(state)?;
    let params = state.params();
    let nf = n as f64;
    let lse = enumerate::log_sum_exp(n, &cond.vectors, |c| {
        cond.exponent(params, nf, c.dots, c.magnetization)
    });
    Ok((lse - nf * LN_2) / nf)
}

/// The same quantity through the factorization
/// `E_k Z_N = exp[sum_i log cosh h_i^(k+1)] sum_sigma p^(k)(sigma) exp[N beta F_{N,k}(sigma)]`.
pub fn conditional_first_moment_factored(state: &RecursionState) -> Result<f64> {
    let n = state.n();
    check_enum(n, MAX_ENUM_N)?;
    let cond = Conditioning::new(state)?;
    let k = cond.k;
    let tilted = TiltedMeasure::from_state(state)?;
    let params = state.params();
    let order = state.order();
    let beta = params.beta;
    let zeta_coef: Vec<f64> = (1..=k)
        .map(|s| {
            if s < k {
                order.gamma_at(s)
            } else {
                order.remaining_at(k - 1).sqrt()
            }
        })
        .collect();

    // Layout: [phi, xi, eta, zeta^(1..k), h^(k+1)].
    let mut vectors = cond.vectors.clone();
    vectors.extend(state.zeta()[..k].iter().map(Vec::as_slice));
    vectors.push(&tilted.h_field);
    let nf = n as f64;
    let inv_n = 1.0 / nf;
    let lse = enumerate::log_sum_exp(n, &vectors, |c| {
        let (rho, s) = cond.rho_and_overlap(c.dots, inv_n);
        let zeta_term: f64 = zeta_coef
            .iter()
            .enumerate()
            .map(|(i, g)| g * c.dots[3 * k + i] * inv_n)
            .sum();
        let f = rho / SQRT_2 - zeta_term + beta / 4.0 * (1.0 - s) * (1.0 - s);
        let log_p = c.dots[4 * k] - tilted.log_norm;
        log_p + nf * beta * f
    });
    let log_cosh_sum = tilted.log_norm - nf * LN_2;
    Ok((log_cosh_sum + lse) / nf)
}

/// `F_{N,k}(sigma)` evaluated with the retained matrices `rho^(s)`:
///
/// ```text
/// sum_s 2^{-1/2} <rho^(s) sigma, sigma> - sum_{s<k} gamma_s <zeta^(s), sigma>
///   - sqrt(q - Gamma_{k-1}^2) <zeta^(k), sigma> + (beta/4) (1 - sum_r <phi^(r), sigma>^2)^2
/// ```
pub fn f_nk(sigma: &SpinConfig, state: &RecursionState) -> Result<f64> {
    let k = state.k() - 1;
    let rhos = state.transients().ok_or(Error::MissingTransients)?;
    if rhos.len() < k {
        return Err(Error::MissingTransients);
    }
    if sigma.len() != state.n() {
        return Err(Error::LengthMismatch {
            left: sigma.len(),
            right: state.n(),
        });
    }
    let s = sigma.to_f64();
    let order = state.order();
    let mut f = 0.0;
    for rho in &rhos[..k] {
        f += rho.quadratic_form(&s)? / SQRT_2;
    }
    for j in 1..=k {
        let coef = if j < k {
            order.gamma_at(j)
        } else {
            order.remaining_at(k - 1).sqrt()
        };
        f -= coef * inner(&state.zeta()[j - 1], &s)?;
    }
    let mut overlap = 0.0;
    for p in &state.phi()[..k] {
        let a = inner(p, &s)?;
        overlap += a * a;
    }
    Ok(f + state.params().beta / 4.0 * (1.0 - overlap) * (1.0 - overlap))
}

/// `(1/N) log E_k Z_N^2` by exact pair enumeration (`N <= 13`):
///
/// ```text
/// 2^-2N sum_{sigma,tau} exp[ e(sigma) + e(tau) + (beta^2 N / 2) c(sigma,tau)^2 ],
/// c = <sigma, tau> - sum_r <sigma, phi^(r)> <tau, phi^(r)>,
/// ```
///
/// with `e` the single-replica exponent of [`conditional_first_moment`].
/// The covariance of `<g^(k+1) sigma, sigma>` and `<g^(k+1) tau, tau>` is
/// `c^2 / N`, which gives the cross term its factor 2 relative to the
/// single-replica squares.
pub fn conditional_second_moment(state: &RecursionState) -> Result<f64> {
    let n = state.n();
    check_enum(n, MAX_PAIR_N)?;
    let cond = Conditioning::new(state)?;
    let k = cond.k;
    let params = state.params();
    let nf = n as f64;
    let inv_n = 1.0 / nf;
    let total = 1usize << n;

    // Per-configuration exponent and overlaps a_r, indexed by the bit code.
    let mut single = vec![0.0; total];
    let mut overlaps = vec![0.0; total * k.max(1)];
    let mut spins = vec![0.0; n];
    let mut dots = vec![0.0; cond.vectors.len()];
    for code in 0..total {
        for (i, s) in spins.iter_mut().enumerate() {
            *s = if (code >> i) & 1 == 1 { -1.0 } else { 1.0 };
        }
        for (d, v) in dots.iter_mut().zip(&cond.vectors) {
            *d = v.iter().zip(&spins).map(|(a, s)| a * s).sum();
        }
        let mag: f64 = spins.iter().sum();
        single[code] = cond.exponent(params, nf, &dots, mag);
        for r in 0..k {
            overlaps[code * k + r] = dots[r] * inv_n;
        }
    }

    let cross = params.beta * params.beta * nf / 2.0;
    let chunks = 64.min(total);
    let per = total / chunks;
    let parts: Vec<LogSumExp> = (0..chunks)
        .into_par_iter()
        .map(|b| {
            let mut acc = LogSumExp::new();
            for sc in b * per..(b + 1) * per {
                let a_s = &overlaps[sc * k..sc * k + k];
                for tc in 0..total {
                    let a_t = &overlaps[tc * k..tc * k + k];
                    let flips = ((sc ^ tc) as u64).count_ones() as f64;
                    let proj: f64 = a_s.iter().zip(a_t).map(|(x, y)| x * y).sum();
                    let c = 1.0 - 2.0 * flips * inv_n - proj;
                    acc.push(single[sc] + single[tc] + cross * c * c);
                }
            }
            acc
        })
        .collect();
    let mut lse = LogSumExp::new();
    for p in &parts {
        lse.merge(p);
    }
    Ok((lse.value() - 2.0 * nf * LN_2) / nf)
}

/// `chi(x) = log cosh(h + x) - log cosh(h) - x tanh(h)`, which satisfies
/// `chi(x) <= x^2 / 2`.
pub fn chi_gap(x: f64, h_i: f64) -> f64 {
    log_cosh(h_i + x) - log_cosh(h_i) - x * h_i.tanh()
}

/// The plain TAP iteration `m^(t+1) = tanh(h + beta gbar m^(t) - beta^2 (1-q) m^(t-1))`
/// with `gbar = (g + g^T)/sqrt 2`, `m^(0) = 0` and `m^(1) = sqrt(q) 1`.
/// Returns `m^(1), ..., m^(1+iters)`.
pub fn tap_trajectory(
    d: &Disorder,
    order: &OrderParams,
    params: &ModelParams,
    iters: usize,
) -> Result<Vec<Vec<f64>>> {
    if iters == 0 {
        return Err(Error::InvalidParameter("tap iteration needs iters >= 1".into()));
    }
    let n = d.n();
    let gbar = symmetrize(d.g())?;
    let onsager = params.beta * params.beta * (1.0 - order.q);
    let mut prev = vec![0.0; n];
    let mut cur = vec![order.q.sqrt(); n];
    let mut out = vec![cur.clone()];
    for _ in 0..iters {
        let gm = gbar.mul_vec(&cur)?;
        let next: Vec<f64> = gm
            .iter()
            .zip(&prev)
            .map(|(x, p)| (params.h + params.beta * x - onsager * p).tanh())
            .collect();
        prev = std::mem::replace(&mut cur, next);
        out.push(cur.clone());
    }
    Ok(out)
}

/// Last iterate of [`tap_trajectory`].
pub fn tap_iterate(
    d: &Disorder,
    order: &OrderParams,
    params: &ModelParams,
    iters: usize,
) -> Result<Vec<f64>> {
    Ok(tap_trajectory(d, order, params, iters)?
        .pop()
        .expect("trajectory is non-empty"))
}
