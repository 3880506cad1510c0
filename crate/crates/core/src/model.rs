//! The probability model: first-capture recursions, cell probabilities for
//! encounter histories, the multinomial likelihood over latent counts, and
//! the prior stack.
//!
//! The model conditions on capture at least once. Writing a for the first
//! and b for the last capture occasion of history omega, its cell
//! probability is
//!
//! pi_omega = xi(a) rho_{omega_a}
//!           prod_{t=a+1}^{b} [ phi_{t-1} (p_t rho_{omega_t})^{I(omega_t!=0)}
//!                              (1-p_t)^{I(omega_t=0)} ] chi(b)
//!
//! with xi the first-capture distribution built from the kappa recursion and
//! chi(b) the probability of never being seen after b.

use crate::error::{Error, Result};
use crate::histories::{EncounterHistory, ObservedData};
use crate::scalar::{logit, Real};

/// Hyperparameters of the parameter-level normal distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper<F> {
    pub mu_phi: F,
    pub sigma_phi: F,
    pub mu_p: F,
    pub sigma_p: F,
    pub mu_gamma: F,
    pub sigma_gamma: F,
}

/// Full parameter state: survival, capture, recruitment, event probabilities,
/// and their hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta<F> {
    /// Survival probabilities, length T-1.
    pub phi: Vec<F>,
    /// Capture probabilities, length T.
    pub p: Vec<F>,
    /// Per-capita recruitment rates, length T-1.
    pub gamma: Vec<F>,
    /// Event probabilities (rho_L, rho_R, rho_S, rho_B) on the simplex.
    pub rho: [F; 4],
    pub hyper: Hyper<F>,
}

impl<F: Real> Theta<F> {
    /// Transformed-scale accessors used by priors and proposals.
    pub fn logit_phi(&self, t: usize) -> F {
        logit(self.phi[t])
    }

    pub fn logit_p(&self, t: usize) -> F {
        logit(self.p[t])
    }

    pub fn log_gamma(&self, t: usize) -> F {
        self.gamma[t].ln()
    }

    /// Validate shapes and domains for `t` occasions. Probabilities must lie
    /// strictly inside (0,1): the kappa recursion divides by p_t, and the
    /// transformed scale cannot represent the boundary anyway.
    pub fn validate(&self, t: usize, layer: EventLayer) -> Result<()> {
        let dims_ok = self.phi.len() == t.saturating_sub(1)
            && self.p.len() == t
            && self.gamma.len() == t.saturating_sub(1);
        if !dims_ok {
            return Err(Error::InvalidParameter(format!(
                "parameter lengths ({}, {}, {}) do not match T={}",
                self.phi.len(),
                self.p.len(),
                self.gamma.len(),
                t
            )));
        }
        let open_unit = |v: &[F]| v.iter().all(|&x| x > F::zero() && x < F::one());
        if !open_unit(&self.phi) || !open_unit(&self.p) {
            return Err(Error::InvalidParameter(
                "phi and p must lie in the open interval (0,1)".into(),
            ));
        }
        if !self.gamma.iter().all(|&g| g > F::zero() && g.is_finite()) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if layer == EventLayer::TwoSided {
            let sum: F = self.rho.iter().copied().sum();
            let tol = F::of(1e-12);
            if (sum - F::one()).abs() > tol || self.rho.iter().any(|&r| r < F::zero()) {
                return Err(Error::InvalidParameter(
                    "rho must be a probability 4-vector summing to 1".into(),
                ));
            }
        }
        let sigmas = [
            self.hyper.sigma_phi,
            self.hyper.sigma_p,
            self.hyper.sigma_gamma,
        ];
        if !sigmas.iter().all(|&s| s > F::zero()) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Event layer of the fitted model. `TwoSided` is the full five-event model;
/// `Binary` treats every capture as a single event with probability one,
/// which is how one-sided datasets are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventLayer {
    TwoSided,
    Binary,
}

/// Hyperprior configuration and the support bound for N.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig<F> {
    /// Normal prior on mu_phi: (mean, variance).
    pub mu_phi_prior: (F, F),
    /// Normal prior on mu_p: (mean, variance).
    pub mu_p_prior: (F, F),
    /// Normal prior on mu_gamma: (mean, variance).
    pub mu_gamma_prior: (F, F),
    /// Half-t prior on each sigma: degrees of freedom and scale.
    pub sigma_df: F,
    pub sigma_scale: F,
    /// N is uniform on {0, ..., u_max}; u_max is the observed-history total.
    pub u_max: u64,
}

impl<F: Real> PriorConfig<F> {
    /// Defaults with `u_max` bound to the observed-history total.
    pub fn for_data(data: &ObservedData) -> PriorConfig<F> {
        PriorConfig::with_u_max(data.total())
    }

    pub fn with_u_max(u_max: u64) -> PriorConfig<F> {
        PriorConfig {
            mu_phi_prior: (F::zero(), F::of(2.0)),
            mu_p_prior: (F::zero(), F::of(2.0)),
            mu_gamma_prior: (F::zero(), F::of(0.25)),
            sigma_df: F::of(3.0),
            sigma_scale: F::of(0.9),
            u_max,
        }
    }
}

/// First-capture mass recursion. kappa_1 = p_1 and
/// kappa_{t+1} = p_{t+1} ( kappa_t (1-p_t) phi_t / p_t
///                         + gamma_t prod_{k=1}^{t-1} (phi_k + gamma_k) ).
pub fn kappa<F: Real>(theta: &Theta<F>) -> Vec<F> {
    let t = theta.p.len();
    let mut k = Vec::with_capacity(t);
    k.push(theta.p[0]);
    let mut entry_mass = F::one();
    for i in 1..t {
        let carried = k[i - 1] * (F::one() - theta.p[i - 1]) * theta.phi[i - 1]
            / theta.p[i - 1];
        let recruited = theta.gamma[i - 1] * entry_mass;
        k.push(theta.p[i] * (carried + recruited));
        entry_mass = entry_mass * (theta.phi[i - 1] + theta.gamma[i - 1]);
    }
    k
}

/// First-capture distribution xi(a) = kappa_a / sum_t kappa_t.
pub fn xi<F: Real>(theta: &Theta<F>) -> Vec<F> {
    let k = kappa(theta);
    let total: F = k.iter().copied().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Probability of never being captured after occasion b:
/// chi(T) = 1, chi(t) = (1 - phi_t) + phi_t (1 - p_{t+1}) chi(t+1).
pub fn chi<F: Real>(theta: &Theta<F>) -> Vec<F> {
    let t = theta.p.len();
    let mut c = vec![F::one(); t];
    for i in (0..t.saturating_sub(1)).rev() {
        c[i] = (F::one() - theta.phi[i])
            + theta.phi[i] * (F::one() - theta.p[i + 1]) * c[i + 1];
    }
    c
}

/// Log-scale tables sufficient to evaluate any history's cell probability in
/// O(T). In the `Binary` layer the event factor is identically one and the
/// rho entries are zero logs.
#[derive(Debug, Clone)]
pub struct CellTables<F> {
    pub log_xi: Vec<F>,
    pub log_chi: Vec<F>,
    pub log_phi: Vec<F>,
    pub log_p: Vec<F>,
    pub log_1mp: Vec<F>,
    pub log_rho: [F; 4],
}

impl<F: Real> CellTables<F> {
    pub fn new(theta: &Theta<F>, layer: EventLayer) -> CellTables<F> {
        let t = theta.p.len();
        let mut tables = CellTables {
            log_xi: vec![F::zero(); t],
            log_chi: vec![F::zero(); t],
            log_phi: vec![F::zero(); t.saturating_sub(1)],
            log_p: vec![F::zero(); t],
            log_1mp: vec![F::zero(); t],
            log_rho: [F::zero(); 4],
        };
        tables.rebuild(theta, layer);
        tables
    }

    /// Recompute all tables in place, allocation-free.
    pub fn rebuild(&mut self, theta: &Theta<F>, layer: EventLayer) {
        let k = kappa(theta);
        let total: F = k.iter().copied().sum();
        let log_total = total.ln();
        for (dst, v) in self.log_xi.iter_mut().zip(&k) {
            *dst = v.ln() - log_total;
        }
        let c = chi(theta);
        for (dst, v) in self.log_chi.iter_mut().zip(&c) {
            *dst = v.ln();
        }
        for (dst, v) in self.log_phi.iter_mut().zip(&theta.phi) {
            *dst = v.ln();
        }
        for i in 0..theta.p.len() {
            self.log_p[i] = theta.p[i].ln();
            self.log_1mp[i] = (-theta.p[i]).ln_1p();
        }
        self.log_rho = match layer {
            EventLayer::TwoSided => [
                theta.rho[0].ln(),
                theta.rho[1].ln(),
                theta.rho[2].ln(),
                theta.rho[3].ln(),
            ],
            EventLayer::Binary => [F::zero(); 4],
        };
    }

    /// Log cell probability of a nonzero history.
    pub fn log_pi(&self, h: &EncounterHistory) -> F {
        let events = h.events();
        let a = h.first_capture().expect("nonzero history");
        let b = h.last_capture().expect("nonzero history");
        let mut v = self.log_xi[a] + self.log_chi[b];
        v = v + self.log_rho[events[a].rho_index().unwrap()];
        for t in a + 1..=b {
            v = v + self.log_phi[t - 1];
            match events[t].rho_index() {
                Some(e) => v = v + self.log_p[t] + self.log_rho[e],
                None => v = v + self.log_1mp[t],
            }
        }
        v
    }
}

/// Cell probability of a nonzero history, returned on the linear and log
/// scales.
pub fn cell_prob<F: Real>(
    omega: &EncounterHistory,
    theta: &Theta<F>,
    layer: EventLayer,
) -> (F, F) {
    let tables = CellTables::new(theta, layer);
    let log = tables.log_pi(omega);
    (log.exp(), log)
}

/// Log multinomial density log[N!/(prod x_k!) prod pi_k^{x_k}].
///
/// The cells are the compatible true histories; their probabilities do not
/// sum to one because incompatible mass is excluded by the observed-count
/// constraint rather than renormalization, so the density is evaluated with
/// the cells exactly as given. A zero-probability cell with positive count
/// yields negative infinity.
pub fn log_multinomial<F: Real>(x: &[u64], pi: &[F], n: u64) -> F {
    debug_assert_eq!(x.len(), pi.len());
    debug_assert_eq!(x.iter().sum::<u64>(), n);
    let mut v = F::of(n as f64 + 1.0).ln_gamma();
    for (&xk, &pk) in x.iter().zip(pi) {
        if xk == 0 {
            continue;
        }
        if pk <= F::zero() {
            return F::neg_infinity();
        }
        v = v - F::of(xk as f64 + 1.0).ln_gamma() + F::of(xk as f64) * pk.ln();
    }
    v
}

/// Log density of N(x; mean, variance).
pub fn log_normal<F: Real>(x: F, mean: F, var: F) -> F {
    let two = F::of(2.0);
    let d = x - mean;
    -(two * F::of(std::f64::consts::PI) * var).ln() / two - d * d / (two * var)
}

/// Log density of the half-t distribution with `df` degrees of freedom and
/// scale `s`, evaluated at `x` > 0: twice the scaled Student-t density.
pub fn log_half_t<F: Real>(x: F, df: F, scale: F) -> F {
    let half = F::of(0.5);
    let one = F::one();
    let z = x / scale;
    F::of(2.0).ln() + ((df + one) * half).ln_gamma()
        - (df * half).ln_gamma()
        - half * (df * F::of(std::f64::consts::PI)).ln()
        - scale.ln()
        - (df + one) * half * (one + z * z / df).ln()
}

/// Log prior density of the parameter stack at `theta` with `n` distinct
/// captured individuals. Parameter-level terms are the normal densities of
/// the transformed parameters; sampling also happens on that scale, so no
/// Jacobian enters here. The Binary layer has no event probabilities and
/// skips the Dirichlet term.
pub fn log_prior<F: Real>(
    theta: &Theta<F>,
    cfg: &PriorConfig<F>,
    n: u64,
    layer: EventLayer,
) -> F {
    if n > cfg.u_max {
        return F::neg_infinity();
    }
    let h = &theta.hyper;
    let mut v = -F::of(cfg.u_max as f64 + 1.0).ln();
    for t in 0..theta.phi.len() {
        v = v + log_normal(theta.logit_phi(t), h.mu_phi, h.sigma_phi * h.sigma_phi);
        v = v + log_normal(theta.log_gamma(t), h.mu_gamma, h.sigma_gamma * h.sigma_gamma);
    }
    for t in 0..theta.p.len() {
        v = v + log_normal(theta.logit_p(t), h.mu_p, h.sigma_p * h.sigma_p);
    }
    if layer == EventLayer::TwoSided {
        // Dirichlet(1,1,1,1) is flat with normalizing constant Gamma(4) = 6
        v = v + F::of(6.0).ln();
    }
    v = v + log_normal(h.mu_phi, cfg.mu_phi_prior.0, cfg.mu_phi_prior.1);
    v = v + log_normal(h.mu_p, cfg.mu_p_prior.0, cfg.mu_p_prior.1);
    v = v + log_normal(h.mu_gamma, cfg.mu_gamma_prior.0, cfg.mu_gamma_prior.1);
    for sigma in [h.sigma_phi, h.sigma_p, h.sigma_gamma] {
        v = v + log_half_t(sigma, cfg.sigma_df, cfg.sigma_scale);
    }
    v
}

/// Population growth rates lambda_t = phi_t + gamma_t.
pub fn growth_rate<F: Real>(theta: &Theta<F>) -> Vec<F> {
    theta
        .phi
        .iter()
        .zip(&theta.gamma)
        .map(|(&f, &g)| f + g)
        .collect()
}

/// Latent true-history counts aligned to a [`LatentStructure`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentCounts {
    pub x: Vec<u64>,
    /// Number of distinct captured individuals, always sum(x).
    pub n: u64,
}

impl LatentCounts {
    /// Check the observed-count constraints: each parent's count equals its
    /// own true-history count plus the counts of all its children, each
    /// simultaneous history's count is fixed, and every child count respects
    /// its min(f_left, f_right) bound.
    pub fn validate(
        &self,
        data: &ObservedData,
        structure: &crate::histories::LatentStructure,
    ) -> Result<()> {
        if self.x.len() != structure.k_prime() {
            return Err(Error::InvalidParameter(format!(
                "latent vector length {} != K' = {}",
                self.x.len(),
                structure.k_prime()
            )));
        }
        if self.x.iter().sum::<u64>() != self.n {
            return Err(Error::InvalidParameter("N != sum(x)".into()));
        }
        let f = data.counts();
        let mut sums: Vec<u64> = self.x[..structure.n_observed()].to_vec();
        for k in structure.child_range() {
            let bound = f[structure.left_parent(k)].min(f[structure.right_parent(k)]);
            if self.x[k] > bound {
                return Err(Error::InvalidParameter(format!(
                    "child count x_{} = {} exceeds bound {}",
                    k + 1,
                    self.x[k],
                    bound
                )));
            }
            sums[structure.left_parent(k)] += self.x[k];
            sums[structure.right_parent(k)] += self.x[k];
        }
        for (j, (&s, &fj)) in sums.iter().zip(f).enumerate() {
            if s != fj {
                return Err(Error::InvalidParameter(format!(
                    "constraint violated at observed history {}: {} != {}",
                    j + 1,
                    s,
                    fj
                )));
            }
        }
        Ok(())
    }
}

/// A dataset bound to its latent structure, event layer, and prior.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub data: ObservedData,
    pub structure: crate::histories::LatentStructure,
    pub layer: EventLayer,
    pub prior: PriorConfig<F>,
    child_bounds: Vec<u64>,
}

impl<F: Real> Model<F> {
    pub fn new(data: ObservedData, layer: EventLayer) -> Result<Model<F>> {
        let structure = crate::histories::LatentStructure::build(&data)?;
        let prior = PriorConfig::for_data(&data);
        let child_bounds = structure
            .child_range()
            .map(|k| {
                data.counts()[structure.left_parent(k)]
                    .min(data.counts()[structure.right_parent(k)])
            })
            .collect();
        Ok(Model {
            data,
            structure,
            layer,
            prior,
            child_bounds,
        })
    }

    pub fn t(&self) -> usize {
        self.data.t()
    }

    /// Proposal bound min(f_left, f_right) for child `k` (absolute index).
    pub fn child_bound(&self, k: usize) -> u64 {
        self.child_bounds[k - self.structure.n_observed()]
    }
}
