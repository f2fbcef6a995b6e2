//! Birth, death, and median-matching swap moves over the subhazard
//! structure, plus the hyperparameter updates for `(omega, sigma_beta)`.
//!
//! Births draw the new component from the prior conditional on the current
//! hyperparameters, so the jump ratio collapses to a likelihood ratio times
//! the Poisson count ratio. Swaps re-type one subhazard, either through the
//! deterministic median-preserving transform (with its Jacobian) or through
//! an independent prior redraw kept for comparison runs.

use rand::rngs::StdRng;
use rand::RngExt;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    hazard_column, log_component_prior, log_normal_density, log_poisson_ratio, log_poisson_weight,
    Component, Dataset, LikCache, ModelState, PriorConfig,
};
use crate::survdist::{sigmoid, DistKind};

/// Turns a posterior ratio into a jump rate: any `b` with `b(a) = a b(1/a)`
/// and `b <= 1` keeps thinning valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BalancingFunction {
    #[default]
    Metropolis,
    Barker,
}

impl BalancingFunction {
    /// Evaluate `b(exp(log_a))` stably.
    pub fn eval_log(self, log_a: f64) -> f64 {
        match self {
            BalancingFunction::Metropolis => log_a.min(0.0).exp(),
            BalancingFunction::Barker => sigmoid(log_a),
        }
    }
}

/// Intensities of the superposed jump processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpRates {
    /// Thinning cap for the birth-death clock.
    pub birth_death: f64,
    /// Thinning cap for the swap clock.
    pub swap: f64,
    /// Rate of hyperparameter update events.
    pub hyper: f64,
    /// Multiplicative constant on the birth-death balancing function;
    /// defaults to `birth_death` (acceptance probability `b(a)`).
    pub bd_scale: Option<f64>,
    /// Same for swaps; defaults to `swap`.
    pub swap_scale: Option<f64>,
}

impl Default for JumpRates {
    fn default() -> Self {
        Self {
            birth_death: 10.0 / 3.0,
            swap: 10.0 / 3.0,
            hyper: 10.0 / 3.0,
            bd_scale: None,
            swap_scale: None,
        }
    }
}

impl JumpRates {
    /// Split a combined jump rate evenly across the three event types.
    pub fn combined(rate: f64) -> Self {
        Self {
            birth_death: rate / 3.0,
            swap: rate / 3.0,
            hyper: rate / 3.0,
            bd_scale: None,
            swap_scale: None,
        }
    }

    pub fn bd_scale(&self) -> f64 {
        self.bd_scale.unwrap_or(self.birth_death)
    }

    pub fn swap_scale(&self) -> f64 {
        self.swap_scale.unwrap_or(self.swap)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("birth_death", self.birth_death),
            ("swap", self.swap),
            ("hyper", self.hyper),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "jump rate {name} must be >= 0, got {v}"
                )));
            }
        }
        if self.bd_scale() > self.birth_death {
            return Err(Error::Config("bd_scale must not exceed birth_death".into()));
        }
        if self.swap_scale() > self.swap {
            return Err(Error::Config("swap_scale must not exceed swap".into()));
        }
        Ok(())
    }
}

/// Swap proposal flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwapStyle {
    /// Deterministic median-preserving transform.
    #[default]
    MedianMatch,
    /// Redraw the re-typed component's parameters from the prior.
    Independent,
}

/// Full unnormalised log posterior including every discrete prior factor;
/// reference evaluations and ratio cross-checks.
pub fn log_target(state: &ModelState, data: &Dataset, prior: &PriorConfig) -> Result<f64> {
    let mut lt = crate::model::log_likelihood(state, data)?;
    let sigma_beta = state.sigma_beta();
    for k in 0..state.k() {
        lt += log_component_prior(&state.component(k), prior, state.omega, sigma_beta);
    }
    lt += log_poisson_weight(prior.xi, state.k());
    Ok(lt)
}

/// Metropolis-Hastings-Green ratio between two explicit states. Proposal
/// densities (and any Jacobian, folded into them) enter through the log-q
/// terms: `a = pi(cand) q_rev / (pi(state) q_fwd)`.
pub fn mhg_ratio(
    state: &ModelState,
    candidate: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    log_q_fwd: f64,
    log_q_rev: f64,
) -> Result<f64> {
    let log_a = log_target(candidate, data, prior)? - log_target(state, data, prior)? + log_q_rev
        - log_q_fwd;
    if log_a.is_nan() {
        return Err(Error::Numerical {
            index: usize::MAX,
            message: "non-finite jump ratio".into(),
        });
    }
    Ok(log_a.clamp(-700.0, 700.0).exp())
}

/// Draw a new component from the prior conditional on `(omega, sigma_beta)`.
/// Returns the component and its log proposal density.
pub fn propose_birth(
    state: &ModelState,
    prior: &PriorConfig,
    rng: &mut StdRng,
) -> Result<(Component, f64)> {
    if state.k() >= prior.k_max {
        return Err(Error::Capacity { k_max: prior.k_max });
    }
    let p = state.p();
    let dist = DistKind::ALL[rng.random_range(0..DistKind::ALL.len())];
    let alpha = Normal::new(0.0, prior.sigma_alpha).unwrap().sample(rng);
    let beta0 = Normal::new(0.0, prior.sigma_beta0).unwrap().sample(rng);
    let sigma_beta = state.sigma_beta();
    let slab = Normal::new(0.0, sigma_beta).unwrap();
    let mut beta = Vec::with_capacity(p);
    let mut gamma = Vec::with_capacity(p);
    let mut v_beta = Vec::with_capacity(p);
    let sign = |rng: &mut StdRng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    for _ in 0..p {
        if rng.random_bool(state.omega) {
            gamma.push(true);
            beta.push(slab.sample(rng));
            v_beta.push(sign(rng));
        } else {
            gamma.push(false);
            beta.push(0.0);
            v_beta.push(0.0);
        }
    }
    let comp = Component {
        dist,
        alpha,
        beta0,
        beta,
        gamma,
        v_alpha: sign(rng),
        v_beta0: sign(rng),
        v_beta,
    };
    let log_q = log_component_prior(&comp, prior, state.omega, sigma_beta);
    Ok((comp, log_q))
}

/// Log jump ratio for appending `comp`: the prior proposal cancels against
/// the new component's prior, leaving the likelihood and count ratios.
pub fn log_birth_ratio(
    cache: &LikCache,
    data: &Dataset,
    prior: &PriorConfig,
    state_k: usize,
    comp: &Component,
) -> f64 {
    let col = hazard_column(
        comp.dist,
        comp.alpha,
        comp.beta0,
        &comp.beta,
        &comp.gamma,
        data,
    );
    cache.loglik_with_added(data, &col) - cache.loglik() + log_poisson_ratio(prior, state_k)
}

/// Log jump ratio for removing subhazard `idx` from a `state_k`-hazard model.
pub fn log_death_ratio(
    cache: &LikCache,
    data: &Dataset,
    prior: &PriorConfig,
    state_k: usize,
    idx: usize,
) -> f64 {
    debug_assert!(state_k >= 2);
    cache.loglik_with_removed(data, idx) - cache.loglik() - log_poisson_ratio(prior, state_k - 1)
}

/// Median-preserving re-typing of one subhazard in natural parameters.
/// Returns `(new kind, shape, new location, sign-flipped coefficients,
/// log|Jacobian|)` in the sampled log-location coordinates.
pub fn median_match(
    kind_from: DistKind,
    nu: f64,
    mu: f64,
    beta: &[f64],
) -> (DistKind, f64, f64, Vec<f64>, f64) {
    let ln2 = std::f64::consts::LN_2;
    let (kind_to, mu_new, log_jac) = match kind_from {
        // Med_LL = mu; solve Med_W(nu, mu') = mu.
        DistKind::LogLogistic => (DistKind::Weibull, mu.powf(-nu) * ln2, nu.ln()),
        // Inverse map.
        DistKind::Weibull => (DistKind::LogLogistic, (ln2 / mu).powf(1.0 / nu), -nu.ln()),
    };
    let flipped = beta.iter().map(|b| -b).collect();
    (kind_to, nu, mu_new, flipped, log_jac)
}

/// Median-matching swap of a full component in sampled coordinates. The
/// location transform is affine in `beta0`; included coefficients and their
/// velocities flip sign so the trajectory maps through the bijection.
pub fn swap_component_median(comp: &Component) -> (Component, f64) {
    let nu = comp.alpha.exp();
    let ln_ln2 = std::f64::consts::LN_2.ln();
    let (dist, beta0, log_jac) = match comp.dist {
        DistKind::LogLogistic => (DistKind::Weibull, -nu * comp.beta0 + ln_ln2, comp.alpha),
        DistKind::Weibull => (
            DistKind::LogLogistic,
            (ln_ln2 - comp.beta0) / nu,
            -comp.alpha,
        ),
    };
    let cand = Component {
        dist,
        alpha: comp.alpha,
        beta0,
        beta: comp.beta.iter().map(|b| -b).collect(),
        gamma: comp.gamma.clone(),
        v_alpha: comp.v_alpha,
        v_beta0: comp.v_beta0,
        v_beta: comp.v_beta.iter().map(|v| -v).collect(),
    };
    (cand, log_jac)
}

/// Build the swap candidate for subhazard `k` and the log correction to add
/// to the likelihood ratio (prior differences, Jacobian, proposal terms).
pub fn swap_candidate(
    state: &ModelState,
    k: usize,
    style: SwapStyle,
    prior: &PriorConfig,
    rng: &mut StdRng,
) -> (Component, f64) {
    let comp = state.component(k);
    match style {
        SwapStyle::MedianMatch => {
            let (cand, log_jac) = swap_component_median(&comp);
            let prior_diff = log_normal_density(cand.beta0, prior.sigma_beta0)
                - log_normal_density(comp.beta0, prior.sigma_beta0);
            (cand, prior_diff + log_jac)
        }
        SwapStyle::Independent => {
            // Redraw continuous parameters from the prior with the inclusion
            // pattern kept; priors cancel against the proposal density.
            let sigma_beta = state.sigma_beta();
            let slab = Normal::new(0.0, sigma_beta).unwrap();
            let sign = |rng: &mut StdRng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut beta = comp.beta.clone();
            let mut v_beta = comp.v_beta.clone();
            for j in 0..beta.len() {
                if comp.gamma[j] {
                    beta[j] = slab.sample(rng);
                    v_beta[j] = sign(rng);
                }
            }
            let cand = Component {
                dist: comp.dist.other(),
                alpha: Normal::new(0.0, prior.sigma_alpha).unwrap().sample(rng),
                beta0: Normal::new(0.0, prior.sigma_beta0).unwrap().sample(rng),
                beta,
                gamma: comp.gamma.clone(),
                v_alpha: sign(rng),
                v_beta0: sign(rng),
                v_beta,
            };
            (cand, 0.0)
        }
    }
}

/// Log jump ratio for replacing subhazard `k` with `cand`.
pub fn log_swap_ratio(
    cache: &LikCache,
    data: &Dataset,
    k: usize,
    cand: &Component,
    log_correction: f64,
) -> f64 {
    let col = hazard_column(
        cand.dist,
        cand.alpha,
        cand.beta0,
        &cand.beta,
        &cand.gamma,
        data,
    );
    cache.loglik_with_replaced(data, k, &col) - cache.loglik() + log_correction
}

/// What a jump event decided to do. The caller applies it to the live state.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpDecision {
    Birth(Component),
    Death(usize),
    Swap { hazard: usize, component: Component },
}

/// Which half of the birth-death coin was attempted, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdAttempt {
    Birth,
    Death,
}

/// Handle one firing of the birth-death clock on a state already advanced to
/// the event time. Birth or death is attempted with equal probability and
/// accepted through the thinned balancing rate.
pub fn birth_death_event(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    rates: &JumpRates,
    balancing: BalancingFunction,
    rng: &mut StdRng,
) -> Result<(Option<JumpDecision>, BdAttempt)> {
    let thin = rates.bd_scale() / rates.birth_death;
    let cache = LikCache::build(state, data, 0.0)?;
    if rng.random_bool(0.5) {
        // Birth. At capacity the rate is identically zero.
        if state.k() >= prior.k_max {
            return Ok((None, BdAttempt::Birth));
        }
        let (comp, _log_q) = propose_birth(state, prior, rng)?;
        let log_a = log_birth_ratio(&cache, data, prior, state.k(), &comp);
        let accept = thin * balancing.eval_log(log_a);
        if rng.random::<f64>() < accept {
            return Ok((Some(JumpDecision::Birth(comp)), BdAttempt::Birth));
        }
        Ok((None, BdAttempt::Birth))
    } else {
        // Death. The zero-truncated prior forbids an empty model.
        if state.k() <= 1 {
            return Ok((None, BdAttempt::Death));
        }
        let idx = rng.random_range(0..state.k());
        let log_a = log_death_ratio(&cache, data, prior, state.k(), idx);
        let accept = thin * balancing.eval_log(log_a);
        if rng.random::<f64>() < accept {
            return Ok((Some(JumpDecision::Death(idx)), BdAttempt::Death));
        }
        Ok((None, BdAttempt::Death))
    }
}

/// Handle one firing of the swap clock on a state advanced to the event time.
pub fn swap_event(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    rates: &JumpRates,
    balancing: BalancingFunction,
    style: SwapStyle,
    rng: &mut StdRng,
) -> Result<Option<JumpDecision>> {
    let thin = rates.swap_scale() / rates.swap;
    let cache = LikCache::build(state, data, 0.0)?;
    let k = rng.random_range(0..state.k());
    let (cand, log_correction) = swap_candidate(state, k, style, prior, rng);
    let log_a = log_swap_ratio(&cache, data, k, &cand, log_correction);
    let accept = thin * balancing.eval_log(log_a);
    if rng.random::<f64>() < accept {
        Ok(Some(JumpDecision::Swap {
            hazard: k,
            component: cand,
        }))
    } else {
        Ok(None)
    }
}

/// Apply a decision to the live state.
pub fn apply_decision(state: &mut ModelState, decision: &JumpDecision) {
    match decision {
        JumpDecision::Birth(c) => state.push_component(c.clone()),
        JumpDecision::Death(idx) => {
            state.remove_component(*idx);
        }
        JumpDecision::Swap { hazard, component } => {
            state.replace_component(*hazard, component.clone())
        }
    }
}

/// Closed-form Beta full conditional for the inclusion weight.
pub fn gibbs_omega(state: &mut ModelState, prior: &PriorConfig, rng: &mut StdRng) {
    debug_assert!(prior.fixed_omega.is_none());
    let included = state.n_included() as f64;
    let total = (state.k() * state.p()) as f64;
    let dist = Beta::new(prior.beta_a + included, prior.beta_b + total - included).unwrap();
    state.omega = dist.sample(rng);
}

/// Adaptive random-walk Metropolis state for the `(z1, ln z2)` update:
/// scale and covariance follow a Robbins-Monro scheme with decay `n^-0.6`
/// towards 0.234 acceptance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveRwm {
    pub log_scale: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub n: u64,
    pub accepted: u64,
    pub attempts: u64,
}

impl Default for AdaptiveRwm {
    fn default() -> Self {
        Self::new()
    }
}

const RWM_TARGET_ACCEPT: f64 = 0.234;

impl AdaptiveRwm {
    pub fn new() -> Self {
        Self {
            // 2.38^2 / d with d = 2.
            log_scale: (2.38f64 * 2.38 / 2.0).ln(),
            mean: [0.0, 0.0],
            cov: [[1.0, 0.0], [0.0, 1.0]],
            n: 0,
            accepted: 0,
            attempts: 0,
        }
    }

    fn propose(&self, x: [f64; 2], rng: &mut StdRng) -> [f64; 2] {
        // Cholesky of the adapted covariance with a small jitter.
        let a = self.cov[0][0] + 1e-9;
        let b = self.cov[0][1];
        let c = self.cov[1][1] + 1e-9;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).max(1e-12).sqrt();
        let s = (0.5 * self.log_scale).exp();
        let norm = Normal::new(0.0, 1.0).unwrap();
        let z1: f64 = norm.sample(rng);
        let z2: f64 = norm.sample(rng);
        [x[0] + s * l11 * z1, x[1] + s * (l21 * z1 + l22 * z2)]
    }

    fn adapt(&mut self, x: [f64; 2], accept_prob: f64) {
        self.n += 1;
        let gamma = (self.n as f64).powf(-0.6);
        self.log_scale += gamma * (accept_prob - RWM_TARGET_ACCEPT);
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        self.mean[0] += gamma * d[0];
        self.mean[1] += gamma * d[1];
        for i in 0..2 {
            for j in 0..2 {
                self.cov[i][j] += gamma * (d[i] * d[j] - self.cov[i][j]);
            }
        }
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepted as f64 / self.attempts as f64)
    }
}

/// Log conditional density of `(z1, u2 = ln z2)` given the included
/// coefficients: standard normal on `z1`, inverse-gamma(1/2, 1/2) on `z2`
/// (with the log-space Jacobian), and the slab terms at scale `|z1| e^{u2/2}`.
fn log_z_target(z1: f64, u2: f64, betas: &[f64]) -> f64 {
    if z1 == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut lt = -0.5 * z1 * z1 - 0.5 * u2 - 0.5 * (-u2.min(700.0)).exp();
    let sigma = z1.abs() * (0.5 * u2).exp();
    for &b in betas {
        lt += log_normal_density(b, sigma);
    }
    lt
}

/// One adaptive joint update of `(z1, z2)` at trajectory offset `s` from the
/// state's anchor. Returns whether the proposal was accepted.
pub fn rwm_sigma(
    state: &mut ModelState,
    prior: &PriorConfig,
    s: f64,
    rwm: &mut AdaptiveRwm,
    rng: &mut StdRng,
) -> bool {
    debug_assert!(prior.fixed_sigma_beta.is_none());
    let mut betas = Vec::new();
    for k in 0..state.k() {
        for j in 0..state.p() {
            if state.gamma[k][j] {
                betas.push(state.beta[k][j] + state.v_beta[k][j] * s);
            }
        }
    }
    let x = [state.z1, state.z2.ln()];
    let cand = rwm.propose(x, rng);
    let log_ratio = log_z_target(cand[0], cand[1], &betas) - log_z_target(x[0], x[1], &betas);
    let accept_prob = if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    };
    rwm.attempts += 1;
    let accept = rng.random::<f64>() < accept_prob;
    let x_next = if accept {
        rwm.accepted += 1;
        state.z1 = cand[0];
        state.z2 = cand[1].exp();
        cand
    } else {
        x
    };
    rwm.adapt(x_next, accept_prob);
    accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn test_state(p: usize) -> ModelState {
        ModelState {
            dists: vec![DistKind::Weibull],
            alpha: vec![0.1],
            beta0: vec![-0.2],
            beta: vec![vec![0.0; p]],
            gamma: vec![vec![false; p]],
            v_alpha: vec![1.0],
            v_beta0: vec![-1.0],
            v_beta: vec![vec![0.0; p]],
            omega: 0.4,
            z1: 0.9,
            z2: 1.2,
            clock: 0.0,
        }
    }

    fn small_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = StdRng::seed_from_u64(seed);
        let times = (0..n).map(|_| rng.random_range(0.2..4.0)).collect();
        let events = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let covs = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Dataset::new_prestandardized(
            times,
            events,
            covs,
            (1..=p).map(|j| format!("x{j}")).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn balancing_identity(log_a in -20.0f64..20.0) {
            for b in [BalancingFunction::Metropolis, BalancingFunction::Barker] {
                let a = log_a.exp();
                let lhs = b.eval_log(log_a);
                let rhs = a * b.eval_log(-log_a);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
                prop_assert!(lhs <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn birth_then_death_restores_state() {
        let mut rng = StdRng::seed_from_u64(1);
        let prior = PriorConfig::default();
        let mut s = test_state(2);
        let before = s.clone();
        let (comp, _) = propose_birth(&s, &prior, &mut rng).unwrap();
        s.push_component(comp);
        s.remove_component(1);
        assert_eq!(s, before);
    }

    #[test]
    fn birth_at_capacity_errors() {
        let mut rng = StdRng::seed_from_u64(2);
        let prior = PriorConfig {
            k_max: 1,
            ..PriorConfig::default()
        };
        let s = test_state(0);
        assert!(matches!(
            propose_birth(&s, &prior, &mut rng),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn birth_alpha_marginal_goodness_of_fit() {
        // Chi-square on decile bins of the alpha draws against N(0, sigma_alpha).
        use statrs::distribution::{ChiSquared, ContinuousCDF, Normal as StatNormal};
        let mut rng = StdRng::seed_from_u64(3);
        let prior = PriorConfig::default();
        let s = test_state(1);
        let n = 10_000;
        let norm = StatNormal::new(0.0, prior.sigma_alpha).unwrap();
        let edges: Vec<f64> = (1..10).map(|q| norm.inverse_cdf(q as f64 / 10.0)).collect();
        let mut counts = [0usize; 10];
        for _ in 0..n {
            let (comp, _) = propose_birth(&s, &prior, &mut rng).unwrap();
            let bin = edges.iter().filter(|&&e| comp.alpha > e).count();
            counts[bin] += 1;
        }
        let expected = n as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn mhg_identity_move_is_one() {
        let data = small_data(6, 1, 4);
        let prior = PriorConfig::default();
        let s = test_state(1);
        let a = mhg_ratio(&s, &s, &data, &prior, 0.3, 0.3).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mhg_ratio_reverses() {
        let mut rng = StdRng::seed_from_u64(5);
        let data = small_data(6, 1, 6);
        let prior = PriorConfig::default();
        let s = test_state(1);
        let (comp, log_q) = propose_birth(&s, &prior, &mut rng).unwrap();
        let mut cand = s.clone();
        cand.push_component(comp);
        let a_fwd = mhg_ratio(&s, &cand, &data, &prior, log_q, 0.0).unwrap();
        let a_rev = mhg_ratio(&cand, &s, &data, &prior, 0.0, log_q).unwrap();
        assert!((a_fwd * a_rev - 1.0).abs() < 1e-10, "{a_fwd} * {a_rev}");
    }

    #[test]
    fn fast_birth_ratio_matches_full_mhg() {
        let mut rng = StdRng::seed_from_u64(7);
        let data = small_data(8, 2, 8);
        let prior = PriorConfig::default();
        let mut s = test_state(2);
        s.gamma[0][0] = true;
        s.beta[0][0] = 0.3;
        s.v_beta[0][0] = 1.0;
        let cache = LikCache::build(&s, &data, 0.0).unwrap();
        for _ in 0..10 {
            let (comp, log_q) = propose_birth(&s, &prior, &mut rng).unwrap();
            let fast = log_birth_ratio(&cache, &data, &prior, s.k(), &comp);
            let mut cand = s.clone();
            cand.push_component(comp);
            let full = mhg_ratio(&s, &cand, &data, &prior, log_q, 0.0).unwrap();
            assert!(
                (fast.exp() - full).abs() <= 1e-8 * full.max(1.0),
                "{} vs {full}",
                fast.exp()
            );
        }
    }

    #[test]
    fn fast_death_ratio_matches_full_mhg() {
        let mut rng = StdRng::seed_from_u64(9);
        let data = small_data(8, 1, 10);
        let prior = PriorConfig::default();
        let mut s = test_state(1);
        let (comp, _) = propose_birth(&s, &prior, &mut rng).unwrap();
        s.push_component(comp);
        let cache = LikCache::build(&s, &data, 0.0).unwrap();
        for idx in 0..2 {
            let fast = log_death_ratio(&cache, &data, &prior, s.k(), idx);
            let mut cand = s.clone();
            let removed = cand.remove_component(idx);
            let log_q_rev = log_component_prior(&removed, &prior, s.omega, s.sigma_beta());
            let full = mhg_ratio(&s, &cand, &data, &prior, 0.0, log_q_rev).unwrap();
            assert!(
                (fast.exp() - full).abs() <= 1e-8 * full.max(1.0),
                "{} vs {full}",
                fast.exp()
            );
        }
    }

    #[test]
    fn median_match_examples() {
        // Log-logistic (nu=1, mu=2) maps to Weibull mu' = ln2 / 2 and the
        // Weibull median equals the log-logistic one.
        let (kind, nu, mu_new, _, log_jac) = median_match(DistKind::LogLogistic, 1.0, 2.0, &[]);
        assert_eq!(kind, DistKind::Weibull);
        assert!((mu_new - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
        assert!((crate::survdist::median(kind, nu, mu_new).unwrap() - 2.0).abs() < 1e-12);
        assert!((log_jac - 0.0).abs() < 1e-12, "log nu = 0 at nu = 1");
        // mu = 1 maps to ln 2 for any shape.
        let (_, _, mu_new, _, _) = median_match(DistKind::LogLogistic, 3.7, 1.0, &[]);
        assert!((mu_new - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn median_match_round_trip() {
        let beta = [0.4, -0.2];
        let (k1, nu1, mu1, b1, j1) = median_match(DistKind::LogLogistic, 1.7, 2.6, &beta);
        let (k2, nu2, mu2, b2, j2) = median_match(k1, nu1, mu1, &b1);
        assert_eq!(k2, DistKind::LogLogistic);
        assert!((nu2 - 1.7).abs() < 1e-12);
        assert!((mu2 - 2.6).abs() < 1e-12);
        assert!((b2[0] - 0.4).abs() < 1e-12 && (b2[1] + 0.2).abs() < 1e-12);
        assert!((j1 + j2).abs() < 1e-12, "Jacobians cancel");
    }

    #[test]
    fn swap_component_involution() {
        let comp = Component {
            dist: DistKind::Weibull,
            alpha: 0.6,
            beta0: -0.9,
            beta: vec![0.5, 0.0],
            gamma: vec![true, false],
            v_alpha: 1.0,
            v_beta0: -1.0,
            v_beta: vec![-1.0, 0.0],
        };
        let (mid, j1) = swap_component_median(&comp);
        assert_eq!(mid.dist, DistKind::LogLogistic);
        let (back, j2) = swap_component_median(&mid);
        assert!((back.alpha - comp.alpha).abs() < 1e-12);
        assert!((back.beta0 - comp.beta0).abs() < 1e-12);
        assert!((back.beta[0] - comp.beta[0]).abs() < 1e-12);
        assert_eq!(back.v_beta, comp.v_beta);
        assert!((j1 + j2).abs() < 1e-12);
        // Median preservation in sampled coordinates.
        let med_from =
            crate::survdist::median(comp.dist, comp.alpha.exp(), comp.beta0.exp()).unwrap();
        let med_to = crate::survdist::median(mid.dist, mid.alpha.exp(), mid.beta0.exp()).unwrap();
        assert!((med_from - med_to).abs() < 1e-12);
    }

    #[test]
    fn swap_changes_kind_multiset_by_one() {
        let mut rng = StdRng::seed_from_u64(11);
        let data = small_data(6, 0, 12);
        let prior = PriorConfig::default();
        let mut s = test_state(0);
        let (comp, _) = propose_birth(&s, &prior, &mut rng).unwrap();
        s.push_component(comp);
        let before: Vec<DistKind> = s.dists.clone();
        let rates = JumpRates::default();
        for _ in 0..200 {
            if let Some(JumpDecision::Swap { hazard, component }) = swap_event(
                &s,
                &data,
                &prior,
                &rates,
                BalancingFunction::Metropolis,
                SwapStyle::MedianMatch,
                &mut rng,
            )
            .unwrap()
            {
                let mut after = before.clone();
                after[hazard] = component.dist;
                let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
                assert_eq!(changed, 1);
                return;
            }
        }
        panic!("no swap accepted in 200 attempts");
    }

    /// Three-state jump chain driven by the balancing-function rates matches
    /// its exactly enumerable stationary law.
    #[test]
    fn three_state_occupancy_matches_enumeration() {
        let weights = [1.0, 2.0, 5.0];
        let total_w: f64 = weights.iter().sum();
        for balancing in [BalancingFunction::Metropolis, BalancingFunction::Barker] {
            let mut rng = StdRng::seed_from_u64(13);
            let clock_rate = 3.0;
            let mut state = 0usize;
            let mut occupancy = [0.0f64; 3];
            let mut t: f64 = 0.0;
            let total_time = 200_000.0;
            while t < total_time {
                let dt = rand_distr::Exp::new(clock_rate).unwrap().sample(&mut rng);
                let t_next = (t + dt).min(total_time);
                occupancy[state] += t_next - t;
                t = t_next;
                if t >= total_time {
                    break;
                }
                // Uniform candidate among the other two states; acceptance
                // through the balancing function keeps detailed balance.
                let others: Vec<usize> = (0..3).filter(|&j| j != state).collect();
                let cand = others[rng.random_range(0..2)];
                let log_a = (weights[cand] / weights[state]).ln();
                if rng.random::<f64>() < balancing.eval_log(log_a) {
                    state = cand;
                }
            }
            let mut tv = 0.0;
            for i in 0..3 {
                tv += (occupancy[i] / total_time - weights[i] / total_w).abs();
            }
            tv *= 0.5;
            assert!(tv < 0.01, "{balancing:?}: TV = {tv}");
        }
    }

    #[test]
    fn death_at_k1_is_no_change() {
        let mut rng = StdRng::seed_from_u64(15);
        let data = small_data(5, 0, 16);
        let prior = PriorConfig::default();
        let s = test_state(0);
        let rates = JumpRates::default();
        let mut saw_death_attempt = false;
        for _ in 0..100 {
            let (decision, attempt) = birth_death_event(
                &s,
                &data,
                &prior,
                &rates,
                BalancingFunction::Metropolis,
                &mut rng,
            )
            .unwrap();
            if attempt == BdAttempt::Death {
                saw_death_attempt = true;
                assert!(decision.is_none());
            }
        }
        assert!(saw_death_attempt);
    }

    #[test]
    fn gibbs_omega_counting() {
        let prior = PriorConfig::default();
        // K = 1, p = 13, nothing included: Beta(4, 17) with mean 4/21.
        let mut s = test_state(13);
        let mut rng = StdRng::seed_from_u64(17);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            gibbs_omega(&mut s, &prior, &mut rng);
            acc += s.omega;
        }
        let mean = acc / n as f64;
        assert!((mean - 4.0 / 21.0).abs() < 0.01 * (4.0 / 21.0), "{mean}");

        // Everything included: Beta(17, 4) with mean 17/21.
        for j in 0..13 {
            s.gamma[0][j] = true;
            s.beta[0][j] = 0.1;
            s.v_beta[0][j] = 1.0;
        }
        let mut acc = 0.0;
        for _ in 0..n {
            gibbs_omega(&mut s, &prior, &mut rng);
            acc += s.omega;
        }
        let mean = acc / n as f64;
        assert!((mean - 17.0 / 21.0).abs() < 0.01 * (17.0 / 21.0), "{mean}");
    }

    #[test]
    fn rwm_sigma_prior_marginal_is_half_cauchy() {
        // No included coefficients: the chain targets the reparameterised
        // prior, so |z1| sqrt(z2) follows a standard half-Cauchy.
        let prior = PriorConfig::default();
        let mut s = test_state(0);
        let mut rwm = AdaptiveRwm::new();
        let mut rng = StdRng::seed_from_u64(19);
        let n = 100_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            rwm_sigma(&mut s, &prior, 0.0, &mut rwm, &mut rng);
            draws.push(s.sigma_beta());
            assert!(s.z2 > 0.0);
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let cdf = 2.0 / std::f64::consts::PI * x.atan();
            ks = ks
                .max((cdf - i as f64 / n as f64).abs())
                .max((cdf - (i + 1) as f64 / n as f64).abs());
        }
        assert!(ks < 0.02, "K-S distance {ks}");
        let rate = rwm.acceptance_rate().unwrap();
        assert!((rate - 0.234).abs() < 0.05, "acceptance {rate}");
    }

    #[test]
    fn swap_ratio_against_full_target() {
        // The fast swap path (likelihood delta + prior diff + Jacobian) must
        // agree with brute-force target evaluation plus the Jacobian.
        let data = small_data(7, 1, 20);
        let prior = PriorConfig::default();
        let mut s = test_state(1);
        s.gamma[0][0] = true;
        s.beta[0][0] = 0.35;
        s.v_beta[0][0] = 1.0;
        let cache = LikCache::build(&s, &data, 0.0).unwrap();
        let mut rng = StdRng::seed_from_u64(21);
        let (cand, log_corr) = swap_candidate(&s, 0, SwapStyle::MedianMatch, &prior, &mut rng);
        let fast = log_swap_ratio(&cache, &data, 0, &cand, log_corr);

        let mut cand_state = s.clone();
        cand_state.replace_component(0, cand.clone());
        let (_, log_jac) = swap_component_median(&s.component(0));
        let brute = log_target(&cand_state, &data, &prior).unwrap()
            - log_target(&s, &data, &prior).unwrap()
            + log_jac;
        assert!((fast - brute).abs() < 1e-9, "{fast} vs {brute}");
    }
}
