//! Gray-code enumeration of `{-1, +1}^N` with streaming log-sum-exp.
//!
//! The `2^N` Gray-code sequence is cut into a fixed number of contiguous
//! blocks. Each block recomputes its state from scratch at its first
//! configuration, then flips one spin per step (site `trailing_zeros(t)`),
//! updating a set of linear functionals `v . sigma` in `O(#functionals)`.
//! Blocks run on the rayon pool and their partial results are merged in
//! block order, so the outcome does not depend on the thread count.

use rayon::prelude::*;

/// Streaming `log sum_i exp(x_i)` with a running maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.sum == 0.0 {
            return;
        }
        if other.max > self.max {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        } else {
            self.sum += other.sum * (other.max - self.max).exp();
        }
    }

    /// `-inf` when nothing was pushed.
    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Configuration with Gray index `t`: bit `i` of `t ^ (t >> 1)` set means
/// `sigma_i = -1`.
pub(crate) fn gray_spins(t: u64, n: usize, out: &mut [f64]) {
    let g = t ^ (t >> 1);
    for (i, s) in out.iter_mut().enumerate().take(n) {
        *s = if (g >> i) & 1 == 1 { -1.0 } else { 1.0 };
    }
}

fn block_count(n: usize) -> u64 {
    if n >= 10 {
        64
    } else {
        1
    }
}

/// Current configuration seen by a visitor.
pub(crate) struct Config<'a> {
    pub spins: &'a [f64],
    /// `v_m . sigma` for every functional `m` (unnormalized).
    pub dots: &'a [f64],
    /// `sum_i sigma_i`.
    pub magnetization: f64,
}

/// Visits all `2^n` configurations, tracking `v . sigma` for every vector in
/// `functionals`. Returns one accumulator per block, in block order.
pub(crate) fn walk<A, I, V>(n: usize, functionals: &[&[f64]], init: I, visit: V) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &Config<'_>) + Sync,
{
    let total = 1u64 << n;
    let blocks = block_count(n);
    let per_block = total / blocks;
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (start, end) = (b * per_block, (b + 1) * per_block);
            let mut acc = init();
            let mut spins = vec![0.0; n];
            gray_spins(start, n, &mut spins);
            let mut dots: Vec<f64> = functionals
                .iter()
                .map(|v| v.iter().zip(&spins).map(|(a, s)| a * s).sum())
                .collect();
            let mut magnetization: f64 = spins.iter().sum();
            visit(
                &mut acc,
                &Config {
                    spins: &spins,
                    dots: &dots,
                    magnetization,
                },
            );
            for t in start + 1..end {
                let i = t.trailing_zeros() as usize;
                let old = spins[i];
                spins[i] = -old;
                magnetization -= 2.0 * old;
                for (d, v) in dots.iter_mut().zip(functionals) {
                    *d -= 2.0 * old * v[i];
                }
                visit(
                    &mut acc,
                    &Config {
                        spins: &spins,
                        dots: &dots,
                        magnetization,
                    },
                );
            }
            acc
        })
        .collect()
}

/// Log-sum-exp of `energy` over all configurations.
pub(crate) fn log_sum_exp<E>(n: usize, functionals: &[&[f64]], energy: E) -> f64
where
    E: Fn(&Config<'_>) -> f64 + Sync,
{
    let parts = walk(n, functionals, LogSumExp::new, |acc, c| acc.push(energy(c)));
    let mut total = LogSumExp::new();
    for p in &parts {
        total.merge(p);
    }
    total.value()
}

/// Weighted spin means `sum w(sigma) sigma_i / sum w(sigma)` with
/// `log w = energy`.
pub(crate) fn weighted_means<E>(n: usize, functionals: &[&[f64]], energy: E) -> Vec<f64>
where
    E: Fn(&Config<'_>) -> f64 + Sync,
{
    struct Acc {
        max: f64,
        mass: f64,
        first: Vec<f64>,
    }
    let parts = walk(
        n,
        functionals,
        || Acc {
            max: f64::NEG_INFINITY,
            mass: 0.0,
            first: vec![0.0; n],
        },
        |acc, c| {
            let x = energy(c);
            if x > acc.max {
                let r = (acc.max - x).exp();
                acc.mass *= r;
                acc.first.iter_mut().for_each(|f| *f *= r);
                acc.max = x;
            }
            let w = (x - acc.max).exp();
            acc.mass += w;
            for (f, s) in acc.first.iter_mut().zip(c.spins) {
                *f += w * s;
            }
        },
    );
    let top = parts.iter().map(|p| p.max).fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut first = vec![0.0; n];
    for p in &parts {
        let r = (p.max - top).exp();
        mass += p.mass * r;
        for (f, pf) in first.iter_mut().zip(&p.first) {
            *f += pf * r;
        }
    }
    first.iter().map(|f| f / mass).collect()
}
