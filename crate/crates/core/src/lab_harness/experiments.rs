//! The ten presets.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::stats::{linear_fit, mean, stderr, variance};
use super::{ExperimentConfig, ExperimentKind, ExperimentReport, ReportRow};
use crate::cavity_recursion::stats::ids;
use crate::cavity_recursion::{state_stats, zeta1_covariance, StatRecord};
use crate::cavity_recursion::RecursionState;
use crate::error::{Error, Result};
use crate::order_params::{build_sequences, rs_free_energy, OrderParams, ToyModel};
use crate::sk_model::{
    conditional_first_moment, conditional_first_moment_factored, conditional_second_moment,
    gibbs_magnetizations, log_partition_exact, tap_iterate, MAX_ENUM_N, MAX_PAIR_N,
};
use crate::vectorspace::{norm, sample_disorder};
use crate::ModelParams;

/// Scalars echoed into the report metadata.
#[derive(Debug, Default)]
pub(super) struct Scalars {
    pub q: Option<f64>,
    pub at_value: Option<f64>,
}

impl From<&OrderParams> for Scalars {
    fn from(o: &OrderParams) -> Self {
        Self {
            q: Some(o.q),
            at_value: Some(o.at_value),
        }
    }
}

type Output = (Vec<ReportRow>, Scalars);

pub(super) fn dispatch(c: &ExperimentConfig) -> Result<Output> {
    match c.experiment {
        ExperimentKind::Sequences => sequences(c),
        ExperimentKind::RecursionStats => recursion_stats(c),
        ExperimentKind::ZetaCov => zeta_cov(c),
        ExperimentKind::FreeEnergy => free_energy(c),
        ExperimentKind::FirstMoment => first_moment(c),
        ExperimentKind::SecondMoment => second_moment(c),
        ExperimentKind::MomentRatio => moment_ratio_rows(c),
        ExperimentKind::Concentration => concentration_rows(c),
        ExperimentKind::TapCompare => tap_compare(c),
        ExperimentKind::ToyModel => toy_model(c),
    }
}

pub(super) fn finish(c: &ExperimentConfig, start: std::time::Instant, out: Output) -> Result<ExperimentReport> {
    let (rows, scalars) = out;
    let report = ExperimentReport {
        metadata: super::ReportMetadata {
            config: c.clone(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            q: scalars.q,
            at_value: scalars.at_value,
        },
        rows,
    };
    if let Some(path) = &c.out_path {
        report.save(path, c.format)?;
    }
    Ok(report)
}

/// Variance of `(1/N) log Z_N` across replicas per `N`, the fitted log-log
/// decay slope (gated at `<= -0.8`) and a tail count.
pub fn concentration_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut c = config.clone();
    c.experiment = ExperimentKind::Concentration;
    c.validate()?;
    let start = std::time::Instant::now();
    finish(&c, start, concentration_rows(&c)?)
}

/// Per-replica deficit `(1/N)[log E_k Z^2 - 2 log E_k Z]` and its trends in
/// `N` and `k`.
pub fn moment_ratio_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut c = config.clone();
    c.experiment = ExperimentKind::MomentRatio;
    c.validate()?;
    let start = std::time::Instant::now();
    finish(&c, start, moment_ratio_rows(&c)?)
}

/// Runs `f` once per replica seed, in parallel, collected in seed order.
fn replicas<T, F>(c: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let seeds: Vec<u64> = c.seeds().collect();
    seeds.into_par_iter().map(f).collect()
}

fn sorted_ns(c: &ExperimentConfig) -> Vec<usize> {
    let mut ns = c.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn sorted_ks(c: &ExperimentConfig) -> Vec<usize> {
    let mut ks = c.ks();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn require_enum(n: usize, max: usize) -> Result<()> {
    if n > max {
        return Err(Error::EnumerationLimit { n, max });
    }
    Ok(())
}

/// Stage-`k + 1` state, the conditioning level of the moment presets.
fn conditioned_state(
    n: usize,
    seed: u64,
    k: usize,
    order: &OrderParams,
    params: &ModelParams,
) -> Result<RecursionState> {
    RecursionState::run_owned(sample_disorder(n, seed)?, order, params, k + 1, false)
}

fn require_conditioning(ns: &[usize], ks: &[usize]) -> Result<()> {
    let n = ns[0];
    if let Some(&k) = ks.iter().find(|&&k| k + 1 >= n) {
        return Err(Error::StageTooLarge { k: k + 1, n });
    }
    Ok(())
}

/// Row for a one-sided check: `excess >= 0` is the amount by which the
/// check is missed, gated at zero.
fn excess_row(observable: String, n: Option<usize>, k: Option<usize>, excess: f64) -> ReportRow {
    ReportRow::new(observable, n, k, excess.max(0.0), 0.0, Some(0.0), 0.0, 0.0)
}

fn count_row(observable: &str, n: Option<usize>, k: Option<usize>, count: usize) -> ReportRow {
    ReportRow::new(observable, n, k, count as f64, 0.0, Some(0.0), 0.0, 0.0)
}

fn sequences(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let big_k = c.k.max(1);
    let o = build_sequences(&params, big_k)?;
    let mut rows = vec![
        ReportRow::info("q", None, None, o.q),
        ReportRow::info("at_value", None, None, o.at_value),
        ReportRow::info("at_margin", None, None, 1.0 - o.at_value),
    ];
    for k in 1..=big_k {
        rows.push(ReportRow::info("gamma", None, Some(k), o.gamma_at(k)));
        rows.push(ReportRow::info("rho", None, Some(k), o.rho_at(k)));
        rows.push(ReportRow::info("gamma_sq", None, Some(k), o.gamma_sq(k)));
        rows.push(ReportRow::info("rho_gap", None, Some(k), o.rho_gap[k - 1]));
    }
    if params.beta == 0.0 {
        // rho_k = q for every k: nothing to gate.
        return Ok((rows, (&o).into()));
    }
    // Orderings are read off the complements q - rho_k, which keep full
    // relative precision where rho_k itself has rounded to q.
    let increasing = (2..=big_k)
        .filter(|&k| !(o.rho_gap[k - 1] < o.rho_gap[k - 2]))
        .count();
    let sandwich = (1..=big_k)
        .filter(|&k| {
            let below_q = o.rho_gap[k - 1] > 0.0;
            let above_partial = o.remaining_at(k - 1) - o.rho_gap[k - 1] > 0.0;
            !(below_q && above_partial)
        })
        .count();
    rows.push(count_row("rho_increasing_violations", None, Some(big_k), increasing));
    rows.push(count_row("sandwich_violations", None, Some(big_k), sandwich));
    let last_gap = o.rho_gap[big_k - 1];
    rows.push(ReportRow::new(
        "rho_gap_final",
        None,
        Some(big_k),
        last_gap,
        0.0,
        Some(0.0),
        c.abs_tol.unwrap_or(1e-4),
        0.0,
    ));
    if big_k >= 3 && o.rho_gap.iter().all(|&g| g > 0.0) {
        let x: Vec<f64> = (1..=big_k).map(|k| k as f64).collect();
        let y: Vec<f64> = o.rho_gap.iter().map(|g| g.ln()).collect();
        let (slope, _, r2) = linear_fit(&x, &y);
        rows.push(ReportRow::info("gap_decay_ratio", None, Some(big_k), slope.exp()));
        rows.push(ReportRow::info("gap_fit_r2", None, Some(big_k), r2));
        rows.push(excess_row("gap_fit_r2_shortfall".into(), None, Some(big_k), 0.99 - r2));
    }
    Ok((rows, (&o).into()))
}

fn default_recursion_tol(n: usize) -> f64 {
    if n >= 1000 {
        0.02
    } else {
        0.02 * (1000.0 / n as f64).sqrt()
    }
}

/// Aggregates observation `id` over records: (mean, stderr, target).
fn aggregate(records: &[StatRecord], id: &str) -> Option<(f64, f64, Option<f64>)> {
    let obs: Vec<_> = records.iter().filter_map(|r| r.get(id)).collect();
    if obs.len() != records.len() || obs.is_empty() {
        return None;
    }
    let values: Vec<f64> = obs.iter().map(|o| o.value).collect();
    Some((mean(&values), stderr(&values), obs[0].target))
}

fn stat_records(c: &ExperimentConfig, n: usize, order: &OrderParams, params: &ModelParams) -> Result<Vec<StatRecord>> {
    replicas(c, |seed| {
        let state = RecursionState::run_owned(sample_disorder(n, seed)?, order, params, c.k, false)?;
        state_stats(&state)
    })
}

/// Mean over replicas of the average `|<m^(k), phi^(j)> - gamma_j|`, `j < k`.
fn m_phi_mad(records: &[StatRecord], k: usize) -> f64 {
    let per_replica: Vec<f64> = records
        .iter()
        .map(|r| {
            let devs: Vec<f64> = (1..k)
                .filter_map(|j| r.get(&ids::m_phi(k, j)))
                .map(|o| (o.value - o.target.unwrap_or(0.0)).abs())
                .collect();
            mean(&devs)
        })
        .collect();
    mean(&per_replica)
}

fn recursion_stats(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let order = build_sequences(&params, c.k.max(1))?;
    let mut rows = Vec::new();
    let mut mads = Vec::new();
    for n in sorted_ns(c) {
        let records = stat_records(c, n, &order, &params)?;
        let tol = c.abs_tol.unwrap_or_else(|| default_recursion_tol(n));
        let names: Vec<String> = records[0]
            .observations
            .iter()
            .map(|o| o.observable.clone())
            .collect();
        for id in &names {
            if let Some((m, se, target)) = aggregate(&records, id) {
                rows.push(ReportRow::new(id.clone(), Some(n), Some(c.k), m, se, target, tol, c.z_gate));
            }
        }
        // N Var <phi^(s), xi^(s)> against 1.
        for s in 1..c.k {
            let xs: Vec<f64> = records
                .iter()
                .filter_map(|r| r.get(&ids::phi_xi(s)))
                .map(|o| o.value)
                .collect();
            if xs.len() >= 2 {
                let nv = n as f64 * variance(&xs);
                // Standard error under the target: Var(s^2) = 2 sigma^4 / (R - 1).
                let se = (2.0 / (xs.len() - 1) as f64).sqrt();
                rows.push(ReportRow::new(
                    format!("phi_xi_nvar({s})"),
                    Some(n),
                    Some(c.k),
                    nv,
                    se,
                    Some(1.0),
                    0.25,
                    c.z_gate,
                ));
            }
        }
        if c.k >= 2 {
            let mad = m_phi_mad(&records, c.k);
            rows.push(ReportRow::info("m_phi_mad", Some(n), Some(c.k), mad));
            mads.push((n, mad));
        }
    }
    // sqrt(N) scaling: the deviation ratio may exceed sqrt(N1/N2) by 20%.
    for w in mads.windows(2) {
        let ((n1, a), (n2, b)) = (w[0], w[1]);
        let ratio = b / a;
        let bar = 1.2 * (n1 as f64 / n2 as f64).sqrt();
        rows.push(ReportRow::info(format!("m_phi_mad_ratio({n1},{n2})"), None, Some(c.k), ratio));
        rows.push(excess_row(format!("m_phi_mad_ratio_excess({n1},{n2})"), None, Some(c.k), ratio - bar));
    }
    Ok((rows, (&order).into()))
}

/// `zeta^(1) = (g 1 + g^T 1) / sqrt 2` straight from the disorder.
fn zeta_one(n: usize, seed: u64) -> Result<Vec<f64>> {
    let d = sample_disorder(n, seed)?;
    let ones = vec![1.0; n];
    let xi = d.g().mul_vec(&ones)?;
    let eta = d.g().tmul_vec(&ones)?;
    Ok(xi
        .iter()
        .zip(&eta)
        .map(|(a, b)| (a + b) / std::f64::consts::SQRT_2)
        .collect())
}

fn zeta_cov(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let order = build_sequences(&params, c.k.max(1))?;
    let mut rows = Vec::new();
    for n in sorted_ns(c) {
        if c.k >= 2 {
            let records = stat_records(c, n, &order, &params)?;
            let tol = c.abs_tol.unwrap_or(0.05);
            for s in 1..c.k {
                if let Some((m, se, _)) = aggregate(&records, &ids::zeta_sq(s)) {
                    rows.push(ReportRow::new(ids::zeta_sq(s), Some(n), Some(c.k), m, se, Some(1.0), tol, c.z_gate));
                }
                for t in s + 1..c.k {
                    if let Some((m, se, _)) = aggregate(&records, &ids::zeta_zeta(s, t)) {
                        rows.push(ReportRow::new(ids::zeta_zeta(s, t), Some(n), Some(c.k), m, se, Some(0.0), 0.0, c.z_gate));
                    }
                }
            }
        }
        let vectors = replicas(c, |seed| zeta_one(n, seed))?;
        let cov = zeta1_covariance(&vectors)?;
        rows.push(ReportRow::new(
            "zeta1_cov_diag_rel_dev",
            Some(n),
            Some(1),
            cov.max_diag_rel_dev,
            0.0,
            Some(0.0),
            cov.diag_bar,
            0.0,
        ));
        rows.push(ReportRow::new(
            "zeta1_cov_offdiag_abs_dev",
            Some(n),
            Some(1),
            cov.max_offdiag_abs_dev,
            0.0,
            Some(0.0),
            cov.offdiag_bar,
            0.0,
        ));
        rows.push(count_row("zeta1_cov_asymmetric", Some(n), Some(1), usize::from(!cov.symmetric)));
    }
    Ok((rows, (&order).into()))
}

fn default_free_energy_tol(n: usize) -> f64 {
    0.01 * (16.0 / n as f64).max(1.0)
}

/// One row per consecutive pair: `|dev(later)| - |dev(earlier)|` must not be
/// positive.
fn decreasing_rows(label: &str, points: &[(usize, f64)], n: Option<usize>, k: Option<usize>, by_n: bool) -> Vec<ReportRow> {
    points
        .windows(2)
        .map(|w| {
            let ((a, da), (b, db)) = (w[0], w[1]);
            let (rn, rk) = if by_n { (None, k) } else { (n, None) };
            excess_row(format!("{label}({a},{b})"), rn, rk, db - da)
        })
        .collect()
}

fn free_energy(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let rs = rs_free_energy(&params)?;
    let ns = sorted_ns(c);
    ns.iter().try_for_each(|&n| require_enum(n, MAX_ENUM_N))?;
    let k = c.k;
    require_conditioning(&ns, &[k])?;
    let order = build_sequences(&params, k + 1)?;
    let mut rows = vec![ReportRow::info("rs_free_energy", None, None, rs)];
    let mut devs = Vec::new();
    for &n in &ns {
        let pairs: Vec<(f64, f64)> = replicas(c, |seed| {
            let state = conditioned_state(n, seed, k, &order, &params)?;
            let d = sample_disorder(n, seed)?;
            let quenched = log_partition_exact(&d, &params)? / n as f64;
            Ok((quenched, conditional_first_moment(&state)?))
        })?;
        let quenched: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let annealed: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (m, se) = (mean(&quenched), stderr(&quenched));
        let tol = c.abs_tol.unwrap_or_else(|| default_free_energy_tol(n));
        rows.push(ReportRow::new("quenched_free_energy", Some(n), Some(k), m, se, Some(rs), tol, c.z_gate));
        rows.push(ReportRow::new("conditional_annealed", Some(n), Some(k), mean(&annealed), stderr(&annealed), None, 0.0, 0.0));
        let gaps: Vec<f64> = pairs.iter().map(|(q, a)| a - q).collect();
        // Jensen bounds the replica average only: single instances fluctuate
        // at order N^-1/2 around a mean gap of order N^-1.
        let above = pairs.iter().filter(|(q, a)| q > a).count();
        rows.push(ReportRow::info("quenched_above_annealed_count", Some(n), Some(k), above as f64));
        let (gm, gse) = (mean(&gaps), stderr(&gaps));
        rows.push(ReportRow::new("annealed_minus_quenched", Some(n), Some(k), gm, gse, None, 0.0, 0.0));
        rows.push(excess_row("jensen_excess".into(), Some(n), Some(k), -gm - c.z_gate * gse));
        devs.push((n, (m - rs).abs()));
    }
    rows.extend(decreasing_rows("quenched_dev_increase", &devs, None, Some(k), true));
    Ok((rows, (&order).into()))
}

fn first_moment(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let rs = rs_free_energy(&params)?;
    let ns = sorted_ns(c);
    let ks = sorted_ks(c);
    ns.iter().try_for_each(|&n| require_enum(n, MAX_ENUM_N))?;
    require_conditioning(&ns, &ks)?;
    let order = build_sequences(&params, ks.last().copied().unwrap_or(0) + 1)?;
    let tol = c.abs_tol.unwrap_or(0.02);
    let mut rows = vec![ReportRow::info("rs_free_energy", None, None, rs)];
    for &n in &ns {
        let mut by_k = Vec::new();
        for &k in &ks {
            let pairs: Vec<(f64, f64)> = replicas(c, |seed| {
                let state = conditioned_state(n, seed, k, &order, &params)?;
                Ok((conditional_first_moment(&state)?, conditional_first_moment_factored(&state)?))
            })?;
            let rel = pairs
                .iter()
                .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            rows.push(ReportRow::new("factored_rel_diff", Some(n), Some(k), rel, 0.0, Some(0.0), 1e-10, 0.0));
            let abs_dev: Vec<f64> = pairs.iter().map(|(a, _)| (a - rs).abs()).collect();
            let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            rows.push(ReportRow::new("first_moment", Some(n), Some(k), mean(&values), stderr(&values), None, 0.0, 0.0));
            let (m, se) = (mean(&abs_dev), stderr(&abs_dev));
            rows.push(ReportRow::new("first_moment_abs_dev", Some(n), Some(k), m, se, Some(0.0), tol, c.z_gate));
            by_k.push((k, m));
        }
        rows.extend(decreasing_rows("first_moment_dev_increase", &by_k, Some(n), None, false));
    }
    Ok((rows, (&order).into()))
}

/// Per-replica `(first, second)` normalized log moments at `(n, k)`.
fn moment_pairs(c: &ExperimentConfig, n: usize, k: usize, order: &OrderParams, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
    replicas(c, |seed| {
        let state = conditioned_state(n, seed, k, order, params)?;
        Ok((conditional_first_moment(&state)?, conditional_second_moment(&state)?))
    })
}

fn pair_setup(c: &ExperimentConfig) -> Result<(ModelParams, Vec<usize>, Vec<usize>, OrderParams)> {
    let params = c.model_params()?;
    let ns = sorted_ns(c);
    let ks = sorted_ks(c);
    ns.iter().try_for_each(|&n| require_enum(n, MAX_PAIR_N))?;
    require_conditioning(&ns, &ks)?;
    let order = build_sequences(&params, ks.last().copied().unwrap_or(0) + 1)?;
    Ok((params, ns, ks, order))
}

/// Slack for exact inequalities between log moments evaluated in floating
/// point.
const INEQ_SLACK: f64 = 1e-12;

fn second_moment(c: &ExperimentConfig) -> Result<Output> {
    let (params, ns, ks, order) = pair_setup(c)?;
    let rs = rs_free_energy(&params)?;
    let mut rows = vec![ReportRow::info("rs_free_energy", None, None, rs)];
    for &n in &ns {
        for &k in &ks {
            let pairs = moment_pairs(c, n, k, &order, &params)?;
            let second: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            rows.push(ReportRow::new("second_moment", Some(n), Some(k), mean(&second), stderr(&second), None, 0.0, 0.0));
            let excess: Vec<f64> = second.iter().map(|s| s - 2.0 * rs).collect();
            rows.push(ReportRow::new("second_minus_2rs", Some(n), Some(k), mean(&excess), stderr(&excess), None, 0.0, 0.0));
            let violations = pairs
                .iter()
                .filter(|(f, s)| *s < 2.0 * f - INEQ_SLACK * (1.0 + f.abs()))
                .count();
            rows.push(count_row("cauchy_schwarz_violations", Some(n), Some(k), violations));
        }
    }
    Ok((rows, (&order).into()))
}

fn moment_ratio_rows(c: &ExperimentConfig) -> Result<Output> {
    let (params, ns, ks, order) = pair_setup(c)?;
    let mut rows = Vec::new();
    let mut table: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for &n in &ns {
        for &k in &ks {
            let pairs = moment_pairs(c, n, k, &order, &params)?;
            let deficit: Vec<f64> = pairs.iter().map(|(f, s)| s - 2.0 * f).collect();
            let negative = pairs
                .iter()
                .zip(&deficit)
                .filter(|((f, _), d)| **d < -INEQ_SLACK * (1.0 + f.abs()))
                .count();
            let (m, se) = (mean(&deficit), stderr(&deficit));
            rows.push(ReportRow::new("deficit", Some(n), Some(k), m, se, None, 0.0, 0.0));
            rows.push(count_row("deficit_negative", Some(n), Some(k), negative));
            table.insert((n, k), (m, se));
        }
    }
    // Decreasing in N (strict ordering of the replica means).
    for &k in &ks {
        let pts: Vec<(usize, f64)> = ns.iter().map(|&n| (n, table[&(n, k)].0)).collect();
        rows.extend(decreasing_rows("deficit_increase_in_n", &pts, None, Some(k), true));
    }
    // Non-increasing in k within two combined standard errors.
    for &n in &ns {
        for w in ks.windows(2) {
            let (a, sa) = table[&(n, w[0])];
            let (b, sb) = table[&(n, w[1])];
            let allowance = 2.0 * (sa * sa + sb * sb).sqrt();
            rows.push(excess_row(
                format!("deficit_increase_in_k({},{})", w[0], w[1]),
                Some(n),
                None,
                b - a - allowance,
            ));
        }
    }
    Ok((rows, (&order).into()))
}

fn concentration_rows(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let ns = sorted_ns(c);
    ns.iter().try_for_each(|&n| require_enum(n, MAX_ENUM_N))?;
    let mut rows = Vec::new();
    let mut fit = Vec::new();
    for &n in &ns {
        let f: Vec<f64> = replicas(c, |seed| {
            Ok(log_partition_exact(&sample_disorder(n, seed)?, &params)? / n as f64)
        })?;
        let var = variance(&f);
        let r = f.len();
        let var_se = if r > 1 { var * (2.0 / (r - 1) as f64).sqrt() } else { 0.0 };
        let target = (params.beta == 0.0).then_some(0.0);
        rows.push(ReportRow::new("quenched_mean", Some(n), None, mean(&f), stderr(&f), None, 0.0, 0.0));
        rows.push(ReportRow::new("quenched_variance", Some(n), None, var, var_se, target, 0.0, 0.0));
        // Tail count: |dev| >= 3 * stderr * sqrt(R) = 3 sample standard deviations.
        let m = mean(&f);
        let bar = 3.0 * var.sqrt();
        let tail = if var > 0.0 {
            f.iter().filter(|x| (*x - m).abs() >= bar).count() as f64 / r as f64
        } else {
            0.0
        };
        rows.push(ReportRow::info("tail_fraction", Some(n), None, tail));
        rows.push(excess_row("tail_fraction_excess".into(), Some(n), None, tail - 0.01));
        if var > 0.0 {
            fit.push(((n as f64).ln(), var.ln()));
        }
    }
    if fit.len() >= 2 && fit.len() == ns.len() {
        let x: Vec<f64> = fit.iter().map(|p| p.0).collect();
        let y: Vec<f64> = fit.iter().map(|p| p.1).collect();
        let (slope, _, r2) = linear_fit(&x, &y);
        rows.push(ReportRow::info("log_variance_slope", None, None, slope));
        rows.push(ReportRow::info("log_variance_fit_r2", None, None, r2));
        rows.push(excess_row("log_variance_slope_excess".into(), None, None, slope + 0.8));
    }
    Ok((rows, Scalars::default()))
}

fn tap_compare(c: &ExperimentConfig) -> Result<Output> {
    let params = c.model_params()?;
    let order = build_sequences(&params, 1)?;
    let ns = sorted_ns(c);
    ns.iter().try_for_each(|&n| require_enum(n, MAX_ENUM_N))?;
    let iters = c.k.max(1);
    let tol = c.abs_tol.unwrap_or(0.15);
    let mut rows = Vec::new();
    for &n in &ns {
        let dist: Vec<f64> = replicas(c, |seed| {
            let d = sample_disorder(n, seed)?;
            let gibbs = gibbs_magnetizations(&d, &params)?;
            let tap = tap_iterate(&d, &order, &params, iters)?;
            let diff: Vec<f64> = tap.iter().zip(&gibbs).map(|(a, b)| a - b).collect();
            norm(&diff)
        })?;
        rows.push(ReportRow::new("tap_gibbs_distance", Some(n), Some(iters), mean(&dist), stderr(&dist), Some(0.0), tol, c.z_gate));
    }
    Ok((rows, (&order).into()))
}

fn toy_model(c: &ExperimentConfig) -> Result<Output> {
    let m = c.m.unwrap_or(0.5);
    let toy = ToyModel::new(m)?;
    let value = toy.exponent(c.beta)?;
    let (lo, hi) = toy.support();
    let mut rows = vec![
        ReportRow::info("support_min", None, None, lo),
        ReportRow::info("support_max", None, None, hi),
        ReportRow::new("rate_at_mean", None, None, toy.rate(toy.mean())?, 0.0, Some(0.0), 1e-8, 0.0),
    ];
    // Below the quadratic-domination threshold the exponent is zero.
    let zero_regime = c.beta <= 0.5 / (1.0 - m * m);
    let target = zero_regime.then_some(0.0);
    rows.push(ReportRow::new("toy_exponent", None, None, value, 0.0, target, c.abs_tol.unwrap_or(1e-8), 0.0));
    Ok((rows, Scalars::default()))
}
