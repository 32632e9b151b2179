//! The recursion against a from-scratch loop implementation, plus checks of
//! the large-`N` laws of its observables.

use proptest::prelude::*;

use sklab::cavity_recursion::{state_stats, RecursionState};
use sklab::order_params::{build_sequences, OrderParams};
use sklab::vectorspace::sample_disorder;
use sklab::{Error, ModelParams};

fn ip(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64
}

/// Stage vectors from plain loops: classical Gram-Schmidt, the matrix
/// update written entrywise.
struct Naive {
    g: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    zeta: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
}

fn naive(g0: Vec<Vec<f64>>, o: &OrderParams, p: &ModelParams, stages: usize) -> Naive {
    let n = g0.len();
    let mut st = Naive {
        g: g0,
        phi: vec![vec![1.0; n]],
        zeta: Vec::new(),
        m: vec![vec![o.q.sqrt(); n]],
    };
    for k in 1..stages {
        let phi = st.phi[k - 1].clone();
        let xi: Vec<f64> = (0..n).map(|i| (0..n).map(|j| st.g[i][j] * phi[j]).sum()).collect();
        let eta: Vec<f64> = (0..n).map(|i| (0..n).map(|j| st.g[j][i] * phi[j]).sum()).collect();
        st.zeta.push((0..n).map(|i| (xi[i] + eta[i]) / 2f64.sqrt()).collect());

        let mut field = vec![p.h; n];
        for s in 1..=k {
            let coef = if s < k {
                o.gamma[s - 1]
            } else {
                (o.q - (0..k - 1).map(|j| o.gamma[j].powi(2)).sum::<f64>()).sqrt()
            };
            for i in 0..n {
                field[i] += p.beta * coef * st.zeta[s - 1][i];
            }
        }
        let m: Vec<f64> = field.iter().map(|x| x.tanh()).collect();
        let coefs: Vec<f64> = st.phi.iter().map(|ph| ip(&m, ph)).collect();
        let mut v = m.clone();
        for (c, ph) in coefs.iter().zip(&st.phi) {
            for i in 0..n {
                v[i] -= c * ph[i];
            }
        }
        let len = ip(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= len);

        let c = ip(&phi, &xi);
        for i in 0..n {
            for j in 0..n {
                st.g[i][j] -= (xi[i] * phi[j] + phi[i] * eta[j] - c * phi[i] * phi[j]) / n as f64;
            }
        }
        st.m.push(m);
        st.phi.push(v);
    }
    st
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst deviation between library and oracle. Classical Gram-Schmidt loses
/// accuracy like `eps / (q - Gamma_{s-1}^2)` at stage `s`, so vectors derived
/// from `phi^(s)` are compared after multiplying by that gap.
fn compare(n: usize, seed: u64, stages: usize, p: &ModelParams) -> f64 {
    let o = build_sequences(p, stages).unwrap();
    let d = sample_disorder(n, seed).unwrap();
    let g0: Vec<Vec<f64>> = (0..n).map(|i| d.g().row(i).to_vec()).collect();
    let lib = RecursionState::run(&d, &o, p, stages, false).unwrap();
    let oracle = naive(g0, &o, p, stages);
    let gap = |s: usize| o.remaining_at(s.saturating_sub(2)).min(1.0);
    let mut worst = 0.0_f64;
    for s in 1..=stages {
        worst = worst.max(gap(s) * max_diff(&lib.phi()[s - 1], &oracle.phi[s - 1]));
        worst = worst.max(gap(s) * max_diff(&lib.m()[s - 1], &oracle.m[s - 1]));
    }
    for s in 1..stages {
        worst = worst.max(gap(s) * max_diff(&lib.zeta()[s - 1], &oracle.zeta[s - 1]));
    }
    for i in 0..n {
        worst = worst.max(gap(stages - 1) * max_diff(lib.g().row(i), &oracle.g[i]));
    }
    worst
}

#[test]
fn matches_loop_implementation() {
    let p = ModelParams::new(0.3, 0.5).unwrap();
    for (n, seed, stages) in [(12, 1, 4), (40, 2, 6), (150, 3, 8)] {
        let worst = compare(n, seed, stages, &p);
        assert!(worst < 1e-13, "N={n}: max deviation {worst:e}");
    }
}

#[test]
fn stage_two_field_is_the_first_cavity_field() {
    // h^(2) = h + beta sqrt(q) zeta^(1) with zeta^(1) = (g + g^T) 1 / sqrt 2.
    let p = ModelParams::new(0.4, 0.2).unwrap();
    let o = build_sequences(&p, 2).unwrap();
    let n = 30;
    let d = sample_disorder(n, 8).unwrap();
    let s = RecursionState::run(&d, &o, &p, 2, false).unwrap();
    for i in 0..n {
        let row: f64 = (0..n).map(|j| d.g().get(i, j)).sum();
        let col: f64 = (0..n).map(|j| d.g().get(j, i)).sum();
        let field = p.h + p.beta * o.q.sqrt() * (row + col) / 2f64.sqrt();
        assert!((s.h_fields()[1][i] - field).abs() < 1e-12);
    }
}

#[test]
fn first_phi_xi_has_variance_one_over_n() {
    // <1, g 1> = (1/N) sum_ij g_ij is N(0, 1/N) under the disorder law.
    let (n, r) = (40, 800);
    let p = ModelParams::new(0.3, 0.5).unwrap();
    let o = build_sequences(&p, 2).unwrap();
    let xs: Vec<f64> = (0..r)
        .map(|seed| {
            let s = RecursionState::run(&sample_disorder(n, seed).unwrap(), &o, &p, 2, false).unwrap();
            ip(&s.phi()[0], &s.xi()[0])
        })
        .collect();
    let nvar = n as f64 * xs.iter().map(|x| x * x).sum::<f64>() / r as f64;
    // Chi-square with r degrees of freedom: sd of nvar is sqrt(2/r) = 0.05.
    assert!((nvar - 1.0).abs() < 0.2, "N var = {nvar}");
}

#[test]
fn observables_concentrate_on_targets_at_large_n() {
    let p = ModelParams::new(0.3, 0.5).unwrap();
    let (n, k, r) = (2000, 4, 10);
    let o = build_sequences(&p, k).unwrap();
    let records: Vec<_> = (0..r)
        .map(|seed| {
            let s = RecursionState::run(&sample_disorder(n, 40 + seed).unwrap(), &o, &p, k, false).unwrap();
            state_stats(&s).unwrap()
        })
        .collect();
    for obs in &records[0].observations {
        let Some(target) = obs.target else { continue };
        let xs: Vec<f64> = records.iter().map(|rec| rec.get(&obs.observable).unwrap().value).collect();
        let mean = xs.iter().sum::<f64>() / r as f64;
        let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r * (r - 1)) as f64).sqrt();
        let bar = (3.0 * se).max(0.02);
        assert!((mean - target).abs() < bar, "{}: {mean} vs {target} (se {se})", obs.observable);
    }
}

#[test]
fn m_phi_first_components_are_gammas_computed_independently() {
    // gamma_1 = sqrt(q); <m^(k), phi^(1)> is the sample mean of m^(k).
    let p = ModelParams::new(0.3, 0.5).unwrap();
    let o = build_sequences(&p, 3).unwrap();
    let s = RecursionState::run(&sample_disorder(3000, 5).unwrap(), &o, &p, 3, false).unwrap();
    let mean = s.m()[2].iter().sum::<f64>() / 3000.0;
    assert!((mean - o.q.sqrt()).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn invariants_hold_for_random_instances(
        n in 6usize..40,
        seed in 0u64..10_000,
        beta in 0.05f64..1.0,
        h in 0.05f64..1.5,
        stages in 2usize..6,
    ) {
        let p = ModelParams::new(beta, h).unwrap();
        let o = build_sequences(&p, stages).unwrap();
        let d = sample_disorder(n, seed).unwrap();
        let s = match RecursionState::run(&d, &o, &p, stages, true) {
            Ok(s) => s,
            // phi^(k) has length about sqrt(q - Gamma_{k-1}^2), which underflows
            // the degeneracy threshold at very small beta.
            Err(Error::Degenerate { k, .. }) => {
                prop_assert!(o.remaining_at(k - 1).sqrt() < 1e-6);
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let r = s.check_invariants().unwrap();
        prop_assert!(r.max_phi_overlap < 1e-10);
        prop_assert!(r.max_annihilation < 1e-10);
        // The recursion only subtracts the retained rank-3 pieces.
        let back = s.telescoped_g(&d).unwrap();
        prop_assert!(back.max_abs_diff(s.g()) < 1e-12);
    }

    #[test]
    fn loop_oracle_agrees_for_random_instances(
        n in 6usize..25,
        seed in 0u64..10_000,
        beta in 0.05f64..0.9,
        h in 0.1f64..1.0,
        stages in 2usize..5,
    ) {
        let p = ModelParams::new(beta, h).unwrap();
        prop_assert!(compare(n, seed, stages, &p) < 1e-13);
    }
}
