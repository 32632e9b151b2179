//! Stage-by-stage modification of the disorder matrix.
//!
//! Starting from `g^(1) = g`, `phi^(1) = 1` and `m^(1) = sqrt(q) 1`, one step
//! takes stage `k` to `k + 1`:
//!
//! ```text
//! xi^(k)   = g^(k) phi^(k),   eta^(k) = g^(k)^T phi^(k),   zeta^(k) = (xi + eta) / sqrt 2
//! h^(k+1)  = h 1 + beta sum_{s<k} gamma_s zeta^(s) + beta sqrt(q - Gamma_{k-1}^2) zeta^(k)
//! m^(k+1)  = tanh(h^(k+1))
//! phi^(k+1) = Gram-Schmidt of m^(k+1) against phi^(1..k)
//! rho^(k)  = xi (x) phi + phi (x) eta - <phi, xi> phi (x) phi
//! g^(k+1)  = g^(k) - rho^(k)
//! ```
//!
//! After the step, `g^(k+1)` annihilates `phi^(1..k)` from both sides.

pub(crate) mod stats;

pub use stats::{
    state_stats, write_stat_csv, zeta1_covariance, zeta1_covariance_check, CovEntry, CovReport,
    Observation, StatRecord,
};

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::order_params::{ModelParams, OrderParams};
use crate::vectorspace::{dot, inner, norm, Disorder, Matrix};

/// Gram-Schmidt denominators below this are treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
/// Orthogonality drift above this triggers one re-orthogonalization pass. Kept
/// well below [`ALGEBRA_TOL`]: a surviving overlap feeds straight into the
/// annihilation residual of the next stage.
pub const REORTH_THRESHOLD: f64 = 1e-13;
/// Tolerance of the orthonormality and annihilation checks.
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Tolerance of `<phi, xi> = <eta, phi>` and of unit norms.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Everything indexed by the stage `k`.
#[derive(Debug, Clone)]
pub struct RecursionState {
    k: usize,
    seed: u64,
    g: Matrix,
    phi: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    zeta: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    h_fields: Vec<Vec<f64>>,
    transients: Option<Vec<Matrix>>,
    order: OrderParams,
    params: ModelParams,
    reorth_count: usize,
}

/// Result of [`RecursionState::check_invariants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    /// `max_{i != j} |<phi^(i), phi^(j)>|`.
    pub max_phi_overlap: f64,
    /// `max_i | ||phi^(i)|| - 1 |`.
    pub max_norm_defect: f64,
    /// `max_{s<k} ||g^(k) phi^(s)|| + ||g^(k)^T phi^(s)||`.
    pub max_annihilation: f64,
    /// `max_s |<phi^(s), xi^(s)> - <eta^(s), phi^(s)>|`.
    pub max_phi_xi_asymmetry: f64,
}

impl RecursionState {
    /// Stage-1 state. The disorder matrix is copied.
    pub fn init(disorder: &Disorder, order: &OrderParams, params: &ModelParams) -> Result<Self> {
        Self::from_disorder(disorder.clone(), order, params)
    }

    /// Stage-1 state taking ownership of the disorder (no copy).
    pub fn from_disorder(
        disorder: Disorder,
        order: &OrderParams,
        params: &ModelParams,
    ) -> Result<Self> {
        params.validate()?;
        let n = disorder.n();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("recursion needs N >= 2, got {n}")));
        }
        let seed = disorder.seed();
        let sq = order.q.sqrt();
        Ok(Self {
            k: 1,
            seed,
            g: disorder.into_matrix(),
            phi: vec![vec![1.0; n]],
            xi: Vec::new(),
            eta: Vec::new(),
            zeta: Vec::new(),
            m: vec![vec![sq; n]],
            // Never enters a formula; kept for completeness.
            h_fields: vec![vec![sq.atanh(); n]],
            transients: None,
            order: order.clone(),
            params: *params,
            reorth_count: 0,
        })
    }

    /// Retain every `rho^(k)` from now on (`O(N^2)` memory per stage).
    pub fn retain_transients(&mut self) {
        if self.transients.is_none() {
            self.transients = Some(Vec::new());
        }
    }

    /// Drives [`Self::step`] until stage `stages`, optionally checking all
    /// invariants after every step.
    pub fn run(
        disorder: &Disorder,
        order: &OrderParams,
        params: &ModelParams,
        stages: usize,
        verify: bool,
    ) -> Result<Self> {
        Self::run_owned(disorder.clone(), order, params, stages, verify)
    }

    /// As [`Self::run`] but consuming the disorder. With `verify` the
    /// transients are retained as well.
    pub fn run_owned(
        disorder: Disorder,
        order: &OrderParams,
        params: &ModelParams,
        stages: usize,
        verify: bool,
    ) -> Result<Self> {
        if stages == 0 {
            return Err(Error::InvalidParameter("stage count must be >= 1".into()));
        }
        let n = disorder.n();
        if stages >= n {
            return Err(Error::StageTooLarge { k: stages, n });
        }
        let mut state = Self::from_disorder(disorder, order, params)?;
        if verify {
            state.retain_transients();
            state.verify()?;
        }
        while state.k < stages {
            state.step()?;
            if verify {
                state.verify()?;
            }
        }
        Ok(state)
    }

    /// Advances from stage `k` to `k + 1` in place.
    pub fn step(&mut self) -> Result<()> {
        let k = self.k;
        let n = self.n();
        if k >= n {
            return Err(Error::StageTooLarge { k, n });
        }
        if self.order.len() + 1 < k {
            return Err(Error::InvalidParameter(format!(
                "order parameters cover {} stages, step from k = {k} needs {}",
                self.order.len(),
                k - 1
            )));
        }
        let remaining = self.order.remaining_at(k - 1);
        if !(remaining > 0.0) {
            return Err(Error::SequenceBreakdown { k, remaining });
        }

        let phi_k = &self.phi[k - 1];
        let xi = self.g.mul_vec(phi_k)?;
        let eta = self.g.tmul_vec(phi_k)?;
        let zeta: Vec<f64> = xi.iter().zip(&eta).map(|(a, b)| (a + b) / SQRT_2).collect();
        self.xi.push(xi);
        self.eta.push(eta);
        self.zeta.push(zeta);

        let h_next = self.field_from_zetas(k + 1);
        let m_next: Vec<f64> = h_next.iter().map(|x| x.tanh()).collect();
        let phi_next = self.gram_schmidt(&m_next, k + 1)?;

        let xi = &self.xi[k - 1];
        let eta = &self.eta[k - 1];
        let phi_k = &self.phi[k - 1];
        let c = inner(phi_k, xi)?;
        // The last term enters rho with a minus sign.
        let minus_c_phi: Vec<f64> = phi_k.iter().map(|p| -c * p).collect();
        let terms: [(&[f64], &[f64]); 3] = [(xi, phi_k), (phi_k, eta), (&minus_c_phi, phi_k)];
        if let Some(store) = self.transients.as_mut() {
            let mut rho = Matrix::zeros(n, n);
            rho.sub_outer_products(&terms);
            rho.scale(-1.0);
            self.g.sub_assign(&rho)?;
            store.push(rho);
        } else {
            self.g.sub_outer_products(&terms);
        }

        self.h_fields.push(h_next);
        self.m.push(m_next);
        self.phi.push(phi_next);
        self.k = k + 1;
        Ok(())
    }

    /// `h^(j) = h 1 + beta sum_{s<j-1} gamma_s zeta^(s) + beta sqrt(q - Gamma_{j-2}^2) zeta^(j-1)`
    /// from the stored `zeta^(1..j-1)` alone.
    fn field_from_zetas(&self, j: usize) -> Vec<f64> {
        let (beta, h) = (self.params.beta, self.params.h);
        let last = j - 1;
        let mut field = vec![h; self.n()];
        for s in 1..last {
            let coef = beta * self.order.gamma_at(s);
            for (f, z) in field.iter_mut().zip(&self.zeta[s - 1]) {
                *f += coef * z;
            }
        }
        let coef = beta * self.order.remaining_at(last - 1).sqrt();
        for (f, z) in field.iter_mut().zip(&self.zeta[last - 1]) {
            *f += coef * z;
        }
        field
    }

    /// Recomputes `m^(j)`, `j >= 2`, from `zeta^(1..j-1)` with the same
    /// arithmetic as [`Self::step`].
    pub fn recompute_m(&self, j: usize) -> Result<Vec<f64>> {
        if j < 2 || j > self.k {
            return Err(Error::InvalidParameter(format!(
                "m^({j}) is not reconstructible at stage {}",
                self.k
            )));
        }
        Ok(self.field_from_zetas(j).iter().map(|x| x.tanh()).collect())
    }

    /// Modified Gram-Schmidt of `m` against `phi^(1..k)`, normalized in the
    /// `<.,.>` norm, with at most one re-orthogonalization pass.
    fn gram_schmidt(&mut self, m: &[f64], stage: usize) -> Result<Vec<f64>> {
        let mut v = m.to_vec();
        project_out(&mut v, &self.phi);
        let denominator = norm(&v)?;
        if !(denominator >= DEGENERACY_THRESHOLD) {
            return Err(Error::Degenerate {
                k: stage,
                denominator,
            });
        }
        v.iter_mut().for_each(|x| *x /= denominator);
        let drift = self.phi.iter().map(|p| inner(&v, p).map(f64::abs)).try_fold(
            0.0_f64,
            |acc, x| x.map(|x| acc.max(x)),
        )?;
        if drift > REORTH_THRESHOLD {
            self.reorth_count += 1;
            log::debug!("re-orthogonalizing phi^({stage}), drift {drift:e}");
            project_out(&mut v, &self.phi);
            let renorm = norm(&v)?;
            v.iter_mut().for_each(|x| *x /= renorm);
        }
        Ok(v)
    }

    /// Checks orthonormality, annihilation, the `<phi, xi>` symmetry, the
    /// stored `zeta` definition and the range of every `m^(j)`.
    pub fn check_invariants(&self) -> Result<InvariantReport> {
        let k = self.k;
        let mut report = InvariantReport {
            max_phi_overlap: 0.0,
            max_norm_defect: 0.0,
            max_annihilation: 0.0,
            max_phi_xi_asymmetry: 0.0,
        };
        for (i, p) in self.phi.iter().enumerate() {
            report.max_norm_defect = report.max_norm_defect.max((norm(p)? - 1.0).abs());
            for q in &self.phi[..i] {
                report.max_phi_overlap = report.max_phi_overlap.max(inner(p, q)?.abs());
            }
        }
        for p in &self.phi[..k - 1] {
            let a = norm(&self.g.mul_vec(p)?)? + norm(&self.g.tmul_vec(p)?)?;
            report.max_annihilation = report.max_annihilation.max(a);
        }
        for s in 0..self.xi.len() {
            let d = inner(&self.phi[s], &self.xi[s])? - inner(&self.eta[s], &self.phi[s])?;
            report.max_phi_xi_asymmetry = report.max_phi_xi_asymmetry.max(d.abs());
            let exact = self.xi[s]
                .iter()
                .zip(&self.eta[s])
                .zip(&self.zeta[s])
                .all(|((a, b), z)| (a + b) / SQRT_2 == *z);
            if !exact {
                return Err(Error::InvariantViolated {
                    k,
                    detail: format!("zeta^({}) differs from (xi + eta)/sqrt 2", s + 1),
                });
            }
        }
        if let Some((j, _)) = self
            .m
            .iter()
            .enumerate()
            .find(|(_, m)| m.iter().any(|x| !(x.abs() < 1.0)))
        {
            return Err(Error::InvariantViolated {
                k,
                detail: format!("m^({}) has an entry outside (-1, 1)", j + 1),
            });
        }
        Ok(report)
    }

    /// [`Self::check_invariants`] plus the tolerance gates.
    pub fn verify(&self) -> Result<InvariantReport> {
        let r = self.check_invariants()?;
        let fail = |detail: String| Err(Error::InvariantViolated { k: self.k, detail });
        if r.max_phi_overlap > ALGEBRA_TOL {
            return fail(format!("phi overlap {:e}", r.max_phi_overlap));
        }
        if r.max_norm_defect > IDENTITY_TOL {
            return fail(format!("phi norm defect {:e}", r.max_norm_defect));
        }
        if r.max_annihilation > ALGEBRA_TOL {
            return fail(format!("g^(k) phi^(s) = {:e}", r.max_annihilation));
        }
        if r.max_phi_xi_asymmetry > IDENTITY_TOL {
            return fail(format!("<phi, xi> asymmetry {:e}", r.max_phi_xi_asymmetry));
        }
        Ok(r)
    }

    /// `g - sum_s rho^(s)` from the retained transients.
    pub fn telescoped_g(&self, original: &Disorder) -> Result<Matrix> {
        let store = self.transients.as_ref().ok_or(Error::MissingTransients)?;
        let mut g = original.g().clone();
        for rho in store {
            g.sub_assign(rho)?;
        }
        Ok(g)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.g.rows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Current `g^(k)`.
    pub fn g(&self) -> &Matrix {
        &self.g
    }

    /// `phi^(1..k)`.
    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    /// `xi^(1..k-1)`.
    pub fn xi(&self) -> &[Vec<f64>] {
        &self.xi
    }

    /// `eta^(1..k-1)`.
    pub fn eta(&self) -> &[Vec<f64>] {
        &self.eta
    }

    /// `zeta^(1..k-1)`.
    pub fn zeta(&self) -> &[Vec<f64>] {
        &self.zeta
    }

    /// `m^(1..k)`.
    pub fn m(&self) -> &[Vec<f64>] {
        &self.m
    }

    /// `h^(1..k)`; `h^(1)` is the constant `atanh(sqrt q)`.
    pub fn h_fields(&self) -> &[Vec<f64>] {
        &self.h_fields
    }

    /// `rho^(1..k-1)` if retained.
    pub fn transients(&self) -> Option<&[Matrix]> {
        self.transients.as_deref()
    }

    pub fn order(&self) -> &OrderParams {
        &self.order
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Number of re-orthogonalization passes so far.
    pub fn reorth_count(&self) -> usize {
        self.reorth_count
    }

    /// Replaces the stored vectors with caller-supplied ones. Meant for
    /// synthetic checks of downstream formulas; no invariant is enforced.
    #[doc(hidden)]
    pub fn overwrite_for_testing(
        &mut self,
        zeta: Option<Vec<Vec<f64>>>,
        transients: Option<Vec<Matrix>>,
    ) {
        if let Some(z) = zeta {
            self.zeta = z;
        }
        if let Some(t) = transients {
            self.transients = Some(t);
        }
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    let n = v.len() as f64;
    for p in basis {
        let c = dot(v, p) / n;
        v.iter_mut().zip(p).for_each(|(x, pi)| *x -= c * pi);
    }
}
