//! Independent oracles for the scalar layer: Monte Carlo, trapezoid-rule
//! integration, bisection and brute-force Legendre transforms.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sklab::order_params::{
    at_value, build_sequences, psi, rs_bracket, rs_free_energy, solve_q, toy_exponent, ModelParams,
};

/// `E f(Z)` by the trapezoid rule on `[-12, 12]` with a fine step.
fn trapezoid(f: impl Fn(f64) -> f64) -> f64 {
    let steps = 48_000;
    let (a, b) = (-12.0, 12.0);
    let dx = (b - a) / steps as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = 0.0;
    for i in 0..=steps {
        let x = a + i as f64 * dx;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        sum += w * f(x) * (-0.5 * x * x).exp();
    }
    sum * dx * norm
}

/// Fixed point of `q = E tanh^2(h + beta sqrt(q) Z)` by bisection on the
/// trapezoid-rule residual.
fn q_by_bisection(beta: f64, h: f64) -> f64 {
    let residual = |q: f64| trapezoid(|z| (h + beta * q.sqrt() * z).tanh().powi(2)) - q;
    let (mut lo, mut hi) = (0.0, 1.0);
    assert!(residual(lo) > 0.0 && residual(hi) < 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn q_matches_bisection_oracle() {
    // Past beta ~ 1 the poles of tanh approach the real axis and 61 nodes
    // are no longer enough for 1e-9; 122 nodes are.
    for &(beta, h, nodes) in &[(0.3, 0.5, 61), (0.5, 0.5, 201), (0.2, 0.3, 61), (0.8, 1.0, 61), (1.5, 0.4, 122)] {
        let p = ModelParams::new(beta, h).unwrap().with_quad_nodes(nodes);
        let q = solve_q(&p).unwrap();
        let oracle = q_by_bisection(beta, h);
        assert!((q - oracle).abs() < 1e-9, "beta={beta} h={h}: {q} vs {oracle}");
    }
}

#[test]
fn q_fixed_point_holds_under_monte_carlo() {
    let p = ModelParams::new(0.3, 0.5).unwrap();
    let q = solve_q(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = 10_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let t = (0.5 + 0.3 * q.sqrt() * z).tanh().powi(2);
        s1 += t;
        s2 += t * t;
    }
    let mean = s1 / samples as f64;
    let se = ((s2 / samples as f64 - mean * mean) / samples as f64).sqrt();
    assert!((mean - q).abs() < 5.0 * se, "MC {mean} +- {se} vs {q}");
}

#[test]
fn doubling_quadrature_nodes_changes_little() {
    for &(beta, h) in &[(0.3, 0.5), (0.5, 0.5), (1.0, 0.5), (0.8, 1.0)] {
        let coarse = ModelParams::new(beta, h).unwrap();
        let fine = coarse.with_quad_nodes(122);
        let (q1, q2) = (solve_q(&coarse).unwrap(), solve_q(&fine).unwrap());
        assert!((q1 - q2).abs() < 1e-9);
        assert!((rs_free_energy(&coarse).unwrap() - rs_free_energy(&fine).unwrap()).abs() < 1e-9);
        assert!((at_value(&coarse, q1).unwrap() - at_value(&fine, q2).unwrap()).abs() < 1e-9);
        let o1 = build_sequences(&coarse, 6).unwrap();
        let o2 = build_sequences(&fine, 6).unwrap();
        for k in 1..=6 {
            assert!((o1.rho_at(k) - o2.rho_at(k)).abs() < 1e-9);
            assert!((o1.gamma_at(k) - o2.gamma_at(k)).abs() < 1e-9);
        }
    }
}

#[test]
fn at_value_matches_trapezoid() {
    let p = ModelParams::new(0.9, 0.4).unwrap();
    let q = solve_q(&p).unwrap();
    let oracle = 0.81 * trapezoid(|z| (0.4 + 0.9 * q.sqrt() * z).cosh().powi(-4));
    assert_abs_diff_eq!(at_value(&p, q).unwrap(), oracle, epsilon = 1e-10);
}

#[test]
fn rs_bracket_is_stationary_at_q() {
    // d/dq bracket = beta^2/2 [E tanh^2 - q], zero at the fixed point.
    for &(beta, h) in &[(0.3, 0.5), (0.7, 0.2)] {
        let p = ModelParams::new(beta, h).unwrap();
        let q = solve_q(&p).unwrap();
        let eps = 1e-5;
        let d = (rs_bracket(&p, q + eps).unwrap() - rs_bracket(&p, q - eps).unwrap()) / (2.0 * eps);
        assert!(d.abs() < 1e-8, "derivative {d}");
        let oracle = trapezoid(|z| sklab::order_params::log_cosh(h + beta * q.sqrt() * z))
            + beta * beta * (1.0 - q).powi(2) / 4.0;
        assert_abs_diff_eq!(rs_free_energy(&p).unwrap(), oracle, epsilon = 1e-10);
    }
}

#[test]
fn psi_matches_nested_trapezoid() {
    // psi(t) = E[ E_Z'[Th(sqrt t Z + sqrt(q-t) Z')] E_Z''[Th(sqrt t Z + sqrt(q-t) Z'')] ].
    let p = ModelParams::new(0.6, 0.5).unwrap();
    let q = solve_q(&p).unwrap();
    let t = 0.4 * q;
    let inner = |z: f64| {
        let steps = 2000;
        let (a, b) = (-9.0, 9.0);
        let dx = (b - a) / steps as f64;
        let mut s = 0.0;
        for i in 0..=steps {
            let y = a + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            s += w * (0.5 + 0.6 * (t.sqrt() * z + (q - t).sqrt() * y)).tanh() * (-0.5 * y * y).exp();
        }
        s * dx / (2.0 * std::f64::consts::PI).sqrt()
    };
    let steps = 2000;
    let (a, b) = (-9.0, 9.0);
    let dx = (b - a) / steps as f64;
    let mut outer = 0.0;
    for i in 0..=steps {
        let z = a + i as f64 * dx;
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        outer += w * inner(z).powi(2) * (-0.5 * z * z).exp();
    }
    outer *= dx / (2.0 * std::f64::consts::PI).sqrt();
    assert_abs_diff_eq!(psi(t, q, &p).unwrap(), outer, epsilon = 1e-9);
}

#[test]
fn sequence_partial_sums_close_to_q() {
    let p = ModelParams::new(0.3, 0.5).unwrap();
    let o = build_sequences(&p, 12).unwrap();
    for k in 1..=12 {
        let direct: f64 = o.gamma[..k].iter().map(|g| g * g).sum();
        assert!((direct - o.gamma_sq(k)).abs() < 1e-15);
        assert!((o.gamma_sq(k) + o.remaining_at(k) - o.q).abs() < 1e-15);
        // rho_k = Gamma_{k-1}^2 + gamma_k sqrt(q - Gamma_{k-1}^2).
        let rebuilt = o.gamma_sq(k - 1) + o.gamma_at(k) * o.remaining_at(k - 1).sqrt();
        assert!((rebuilt - o.rho_at(k)).abs() < 1e-14);
    }
    // The gaps contract at a rate close to the AT value.
    let ratio = o.rho_gap[8] / o.rho_gap[7];
    assert!((ratio - o.at_value).abs() < 1e-3 * o.at_value.max(1e-3) + 1e-3);
}

/// Law of `(s - m)(s' - m)` for independent spins of mean `m`, built from
/// the four spin pairs.
fn eta_law(m: f64) -> Vec<(f64, f64)> {
    let mut law = Vec::new();
    for s in [-1.0, 1.0] {
        for t in [-1.0, 1.0] {
            let p = (1.0 + m * s) / 2.0 * (1.0 + m * t) / 2.0;
            law.push(((s - m) * (t - m), p));
        }
    }
    law
}

/// `J(x)` by bisection on the tilted mean, which is increasing in lambda.
fn rate_by_bisection(law: &[(f64, f64)], x: f64) -> f64 {
    let log_mgf = |l: f64| {
        let top = law.iter().map(|(v, _)| l * v).fold(f64::NEG_INFINITY, f64::max);
        top + law.iter().map(|(v, p)| p * (l * v - top).exp()).sum::<f64>().ln()
    };
    let tilted_mean = |l: f64| {
        let top = law.iter().map(|(v, _)| l * v).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = law.iter().map(|(v, p)| p * (l * v - top).exp()).collect();
        law.iter().zip(&w).map(|((v, _), w)| v * w).sum::<f64>() / w.iter().sum::<f64>()
    };
    let (mut lo, mut hi) = (-300.0, 300.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tilted_mean(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    l * x - log_mgf(l)
}

/// `sup_x [beta^2 x^2 / 2 - J(x)]` on a grid of x strictly inside the support.
fn toy_brute_force(beta: f64, m: f64) -> f64 {
    let law = eta_law(m);
    let lo = law.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = law.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut best = 0.0_f64;
    for i in 1..4000 {
        let x = lo + (hi - lo) * i as f64 / 4000.0;
        best = best.max(beta * beta * x * x / 2.0 - rate_by_bisection(&law, x));
    }
    best
}

#[test]
fn toy_exponent_matches_brute_force() {
    for &(beta, m) in &[(1.3, 0.5), (1.0, 0.3), (0.1, 0.5), (2.0, 0.0)] {
        let value = toy_exponent(beta, m).unwrap();
        let oracle = toy_brute_force(beta, m);
        // The grid only undershoots the supremum.
        assert!(value >= oracle - 1e-9, "beta={beta} m={m}: {value} < {oracle}");
        assert!(value - oracle < 1e-3, "beta={beta} m={m}: {value} vs {oracle}");
    }
}

#[test]
fn toy_zero_below_threshold_for_moderate_m() {
    for m in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
        let threshold = 0.5 / (1.0 - m * m);
        for frac in [0.25, 0.5, 0.9, 1.0] {
            let v = toy_exponent(frac * threshold, m).unwrap();
            assert!(v.abs() < 1e-8, "m={m} beta={}: {v}", frac * threshold);
        }
    }
}

#[test]
fn toy_threshold_bound_fails_for_large_m() {
    // For m close to 1 the quadratic overtakes the rate function near the top
    // of the support before beta reaches 0.5 / (1 - m^2).
    let m = 0.9;
    let beta = 0.95 * 0.5 / (1.0 - m * m);
    assert!(toy_exponent(beta, m).unwrap() > 1e-3);
    assert!(toy_brute_force(beta, m) > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sequences_increase_and_stay_sandwiched(beta in 0.05f64..0.6, h in 0.2f64..1.2) {
        let p = ModelParams::new(beta, h).unwrap();
        let o = build_sequences(&p, 9).unwrap();
        prop_assume!(o.at_value < 1.0);
        for k in 1..=9 {
            // Gamma_{k-1}^2 < rho_k < q, read off the exact complements.
            prop_assert!(o.rho_gap[k - 1] > 0.0);
            prop_assert!(o.remaining_at(k - 1) - o.rho_gap[k - 1] > 0.0);
            prop_assert!(o.gamma_at(k) > 0.0);
            if k >= 2 {
                prop_assert!(o.rho_gap[k - 1] < o.rho_gap[k - 2]);
            }
        }
    }

    #[test]
    fn q_is_a_fixed_point_in_unit_interval(beta in 0.0f64..2.0, h in 0.05f64..2.0) {
        let p = ModelParams::new(beta, h).unwrap();
        let q = solve_q(&p).unwrap();
        prop_assert!(q > 0.0 && q < 1.0);
        let rhs = psi(q, q, &p).unwrap();
        prop_assert!((rhs - q).abs() < 1e-10);
    }

    #[test]
    fn rs_is_below_bracket_grid(beta in 0.0f64..1.5, h in -1.0f64..1.0) {
        let p = ModelParams::new(beta, h).unwrap();
        let rs = rs_free_energy(&p).unwrap();
        for i in 0..=50 {
            let q = i as f64 / 50.0;
            prop_assert!(rs_bracket(&p, q).unwrap() >= rs - 1e-9);
        }
    }

    #[test]
    fn toy_exponent_non_negative_and_monotone(m in 0.0f64..0.95, b in 0.0f64..2.0) {
        let a = toy_exponent(b, m).unwrap();
        let c = toy_exponent(b + 0.2, m).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!(c >= a - 1e-9);
    }
}
