//! Per-replica observables of a recursion state paired with their
//! large-`N` targets, and the empirical covariance of `zeta^(1)`.

use std::f64::consts::SQRT_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::RecursionState;
use crate::error::{Error, Result};
use crate::order_params::{gauss_expect, log_cosh};
use crate::vectorspace::{inner, norm};

/// One measured quantity. `target` is `None` for purely informational values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub observable: String,
    pub value: f64,
    pub target: Option<f64>,
}

/// All observations of one replica at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub observations: Vec<Observation>,
}

impl StatRecord {
    pub fn get(&self, observable: &str) -> Option<&Observation> {
        self.observations.iter().find(|o| o.observable == observable)
    }
}

/// Observable ids, shared with the harness.
pub(crate) mod ids {
    pub fn m_m(i: usize, j: usize) -> String {
        format!("m_m({i},{j})")
    }
    pub fn m_phi(k: usize, j: usize) -> String {
        format!("m_phi({k},{j})")
    }
    pub fn phi_xi(s: usize) -> String {
        format!("phi_xi({s})")
    }
    pub fn zeta_sq(s: usize) -> String {
        format!("zeta_sq({s})")
    }
    pub fn zeta_zeta(s: usize, t: usize) -> String {
        format!("zeta_zeta({s},{t})")
    }
    pub fn zeta_m(m: usize, n: usize) -> String {
        format!("zeta_m({m},{n})")
    }
    pub const GM_SQ: &str = "gm_sq";
    pub const GM_RESID: &str = "gm_resid";
    pub const LOG_COSH_MEAN: &str = "log_cosh_mean";
}

/// Measures, at the current stage `k`:
///
/// * `m_m(i,j)`, `i <= j <= k`: `<m^(i), m^(j)>`, target `q` on the diagonal and `rho_i` otherwise;
/// * `m_phi(k,j)`, `j <= k`: `<m^(k), phi^(j)>`, target `gamma_j` for `j < k` and
///   `sqrt(q - Gamma_{k-1}^2)` for `j = k`;
/// * `phi_xi(s)`: `<phi^(s), xi^(s)>`, target 0;
/// * `zeta_sq(s)`: `||zeta^(s)||^2`, target 1;
/// * `zeta_zeta(s,t)`, `s < t`: target 0;
/// * `zeta_m(m,n)`, `m < n <= k`: `<zeta^(m), m^(n)>`, target `beta gamma_m (1-q)` for
///   `m <= n - 2` and `beta (1-q) sqrt(q - Gamma_{n-2}^2)` for `m = n - 1`;
/// * `gm_sq`: `||g^(k) m^(k)||^2` and `gm_resid`:
///   `||m^(k)||^2 - sum_{j<k} <m^(k), phi^(j)>^2`, both with target `q - Gamma_{k-1}^2`;
/// * `log_cosh_mean` (`k >= 2`): `(1/N) sum_i log cosh h_i^(k)`, target
///   `E log cosh(h + beta sqrt(q) Z)`.
pub fn state_stats(state: &RecursionState) -> Result<StatRecord> {
    let k = state.k();
    let order = state.order();
    let params = state.params();
    let (q, beta) = (order.q, params.beta);
    let m = state.m();
    let phi = state.phi();
    let mut obs = Vec::new();
    let mut push = |observable: String, value: f64, target: Option<f64>| {
        obs.push(Observation {
            observable,
            value,
            target,
        })
    };

    for i in 1..=k {
        for j in i..=k {
            let target = if i == j { q } else { order.rho_at(i) };
            push(ids::m_m(i, j), inner(&m[i - 1], &m[j - 1])?, Some(target));
        }
    }
    let mk = &m[k - 1];
    let mut projected = 0.0;
    for j in 1..=k {
        let v = inner(mk, &phi[j - 1])?;
        let target = if j < k {
            projected += v * v;
            order.gamma_at(j)
        } else {
            order.remaining_at(k - 1).sqrt()
        };
        push(ids::m_phi(k, j), v, Some(target));
    }
    for s in 1..k {
        push(ids::phi_xi(s), inner(&phi[s - 1], &state.xi()[s - 1])?, Some(0.0));
    }
    let zeta = state.zeta();
    for s in 1..k {
        push(ids::zeta_sq(s), inner(&zeta[s - 1], &zeta[s - 1])?, Some(1.0));
        for t in s + 1..k {
            push(ids::zeta_zeta(s, t), inner(&zeta[s - 1], &zeta[t - 1])?, Some(0.0));
        }
    }
    for n in 2..=k {
        for mm in 1..n {
            let target = if mm + 2 <= n {
                beta * order.gamma_at(mm) * (1.0 - q)
            } else {
                beta * (1.0 - q) * order.remaining_at(n - 2).sqrt()
            };
            push(ids::zeta_m(mm, n), inner(&zeta[mm - 1], &m[n - 1])?, Some(target));
        }
    }
    let remaining = order.remaining_at(k - 1);
    let gm = norm(&state.g().mul_vec(mk)?)?;
    push(ids::GM_SQ.into(), gm * gm, Some(remaining));
    push(
        ids::GM_RESID.into(),
        inner(mk, mk)? - projected,
        Some(remaining),
    );
    if k >= 2 {
        let hk = &state.h_fields()[k - 1];
        let value = hk.iter().map(|&x| log_cosh(x)).sum::<f64>() / hk.len() as f64;
        let sq = q.sqrt();
        let target = gauss_expect(|z| log_cosh(params.h + beta * sq * z), params.quad_nodes)?;
        push(ids::LOG_COSH_MEAN.into(), value, Some(target));
    }
    Ok(StatRecord {
        seed: state.seed(),
        n: state.n(),
        k,
        observations: obs,
    })
}

/// Writes records as CSV with columns `seed,N,k,observable,value,target`
/// (empty `target` for informational rows).
pub fn write_stat_csv<W: Write>(records: &[StatRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "N", "k", "observable", "value", "target"])?;
    for r in records {
        for o in &r.observations {
            w.write_record([
                r.seed.to_string(),
                r.n.to_string(),
                r.k.to_string(),
                o.observable.clone(),
                format!("{:e}", o.value),
                o.target.map(|t| format!("{t:e}")).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One entry of the empirical `zeta^(1)` covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    pub target: f64,
}

/// Empirical covariance of `zeta^(1)` on a leading index block against
/// `delta_ij + 1/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovReport {
    pub replicas: usize,
    pub n: usize,
    pub entries: Vec<CovEntry>,
    /// `max_i |C_ii / (1 + 1/N) - 1|`.
    pub max_diag_rel_dev: f64,
    /// `max_{i != j} |C_ij - 1/N|`.
    pub max_offdiag_abs_dev: f64,
    /// `4 sqrt(2 / R)`.
    pub diag_bar: f64,
    /// `4 / sqrt(R)`.
    pub offdiag_bar: f64,
    pub symmetric: bool,
    pub pass: bool,
}

/// Minimum replica count for the covariance check.
pub const MIN_COV_REPLICAS: usize = 50;
/// Number of leading indices examined.
pub const COV_INDICES: usize = 16;

/// `zeta^(1) = (g 1 + g^T 1) / sqrt 2` of a stage-1 or later state.
fn zeta_one(state: &RecursionState) -> Result<Vec<f64>> {
    if let Some(z) = state.zeta().first() {
        return Ok(z.clone());
    }
    let ones = &state.phi()[0];
    let xi = state.g().mul_vec(ones)?;
    let eta = state.g().tmul_vec(ones)?;
    Ok(xi.iter().zip(&eta).map(|(a, b)| (a + b) / SQRT_2).collect())
}

/// [`zeta1_covariance`] on the `zeta^(1)` vectors of a set of replicas.
pub fn zeta1_covariance_check(replicas: &[RecursionState]) -> Result<CovReport> {
    let vectors = replicas.iter().map(zeta_one).collect::<Result<Vec<_>>>()?;
    zeta1_covariance(&vectors)
}

/// Covariance of `zeta^(1)` from one vector per replica. The mean is known
/// to be zero, so `C_ij = (1/R) sum_r zeta_i zeta_j`.
pub fn zeta1_covariance(vectors: &[Vec<f64>]) -> Result<CovReport> {
    let r = vectors.len();
    if r < MIN_COV_REPLICAS {
        return Err(Error::InsufficientReplicas {
            needed: MIN_COV_REPLICAS,
            got: r,
        });
    }
    let n = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != n) {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: n,
        });
    }
    let d = n.min(COV_INDICES);
    let mut cov = vec![0.0; d * d];
    for v in vectors {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += v[i] * v[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= r as f64);

    let inv_n = 1.0 / n as f64;
    let mut entries = Vec::with_capacity(d * d);
    let (mut diag_dev, mut off_dev) = (0.0_f64, 0.0_f64);
    let mut symmetric = true;
    for i in 0..d {
        for j in 0..d {
            let value = cov[i * d + j];
            let target = if i == j { 1.0 + inv_n } else { inv_n };
            if i == j {
                diag_dev = diag_dev.max((value / target - 1.0).abs());
            } else {
                off_dev = off_dev.max((value - target).abs());
                symmetric &= value == cov[j * d + i];
            }
            entries.push(CovEntry {
                i,
                j,
                value,
                target,
            });
        }
    }
    let diag_bar = 4.0 * (2.0 / r as f64).sqrt();
    let offdiag_bar = 4.0 / (r as f64).sqrt();
    Ok(CovReport {
        replicas: r,
        n,
        entries,
        max_diag_rel_dev: diag_dev,
        max_offdiag_abs_dev: off_dev,
        diag_bar,
        offdiag_bar,
        symmetric,
        pass: symmetric && diag_dev <= diag_bar && off_dev <= offdiag_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_params::{build_sequences, ModelParams};
    use crate::vectorspace::sample_disorder;

    #[test]
    fn stage_one_trivia() {
        let p = ModelParams::new(0.2, 0.5).unwrap();
        let o = build_sequences(&p, 3).unwrap();
        let d = sample_disorder(10, 1).unwrap();
        let s = RecursionState::init(&d, &o, &p).unwrap();
        let rec = state_stats(&s).unwrap();
        let v = rec.get("m_phi(1,1)").unwrap();
        assert!((v.value - o.q.sqrt()).abs() < 1e-15);
        assert_eq!(v.target, Some(o.q.sqrt()));
    }

    #[test]
    fn stage_k_has_all_observables() {
        let p = ModelParams::new(0.2, 0.5).unwrap();
        let o = build_sequences(&p, 4).unwrap();
        let d = sample_disorder(50, 2).unwrap();
        let s = RecursionState::run(&d, &o, &p, 4, false).unwrap();
        let rec = state_stats(&s).unwrap();
        for id in [
            "m_m(1,4)", "m_phi(4,3)", "phi_xi(3)", "zeta_sq(3)", "zeta_zeta(1,3)",
            "zeta_m(2,4)", "zeta_m(3,4)", "gm_sq", "gm_resid", "log_cosh_mean",
        ] {
            assert!(rec.get(id).is_some(), "{id}");
        }
        assert!(rec.get("zeta_sq(4)").is_none());
        // g^(k) m^(k) = <m^(k), phi^(k)> xi^(k) up to rounding.
        let gm = rec.get("gm_sq").unwrap().value;
        let mk = &s.m()[3];
        let c = inner(mk, &s.phi()[3]).unwrap();
        let xi4 = s.g().mul_vec(&s.phi()[3]).unwrap();
        assert!((gm - c * c * inner(&xi4, &xi4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rec = StatRecord {
            seed: 3,
            n: 10,
            k: 2,
            observations: vec![
                Observation {
                    observable: "m_m(1,2)".into(),
                    value: 0.5,
                    target: Some(0.25),
                },
                Observation {
                    observable: "info".into(),
                    value: 1.0,
                    target: None,
                },
            ],
        };
        let mut buf = Vec::new();
        write_stat_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "seed,N,k,observable,value,target");
        assert_eq!(lines[1], "3,10,2,\"m_m(1,2)\",5e-1,2.5e-1");
        assert_eq!(lines[2], "3,10,2,info,1e0,");
    }

    #[test]
    fn covariance_needs_replicas() {
        let v = vec![vec![0.0; 4]; 10];
        assert!(matches!(
            zeta1_covariance(&v),
            Err(Error::InsufficientReplicas { needed: 50, got: 10 })
        ));
    }
}
