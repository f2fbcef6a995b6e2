//! Model state, priors, and the posterior potential.

mod dataset;
mod likelihood;

pub use dataset::{standardize_with, ColumnStats, Dataset, RawData};
pub use likelihood::{
    flip_rate, grad_potential, grad_potential_all, hazard_column, log_likelihood, potential,
    LikCache,
};

use rand::rngs::StdRng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survdist::DistKind;

/// Upper bound on `k_max` so per-observation scratch can live on the stack.
pub const K_MAX_SUPPORTED: usize = 16;

/// Fixed hyperparameters of the prior hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Prior sd of each `alpha_k = ln(nu_k)`.
    pub sigma_alpha: f64,
    /// Prior sd of each intercept `beta_{k,0}`.
    pub sigma_beta0: f64,
    /// Beta prior shape parameters for the inclusion weight `omega`.
    pub beta_a: f64,
    pub beta_b: f64,
    /// Mean of the zero-truncated Poisson prior on the subhazard count.
    pub xi: f64,
    /// Maximum number of subhazards.
    pub k_max: usize,
    /// Fix `omega` instead of giving it the Beta hyperprior.
    pub fixed_omega: Option<f64>,
    /// Fix `sigma_beta` instead of giving it the half-Cauchy hyperprior.
    pub fixed_sigma_beta: Option<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_alpha: 2.0,
            sigma_beta0: 5.0,
            beta_a: 4.0,
            beta_b: 4.0,
            xi: 2.0,
            k_max: 4,
            fixed_omega: None,
            fixed_sigma_beta: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_beta0", self.sigma_beta0),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("xi", self.xi),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if self.k_max < 1 || self.k_max > K_MAX_SUPPORTED {
            return Err(Error::Config(format!(
                "k_max must be in 1..={K_MAX_SUPPORTED}, got {}",
                self.k_max
            )));
        }
        if let Some(w) = self.fixed_omega {
            if !(w.is_finite() && w > 0.0 && w < 1.0) {
                return Err(Error::Config(format!(
                    "fixed_omega must lie in (0, 1), got {w}"
                )));
            }
        }
        if let Some(s) = self.fixed_sigma_beta {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!(
                    "fixed_sigma_beta must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// One subhazard with its sampled coordinates, inclusion flags, and
/// velocities. Used as the unit of exchange for birth/death/swap moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub dist: DistKind,
    pub alpha: f64,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<bool>,
    pub v_alpha: f64,
    pub v_beta0: f64,
    pub v_beta: Vec<f64>,
}

/// Coordinate role inside one subhazard block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordRole {
    Shape,
    Intercept,
    Covariate(usize),
}

/// Flat coordinate index for `(hazard, role)` with `p` covariates: each
/// subhazard owns a block `[alpha, beta0, beta_1, .., beta_p]`.
pub fn coord_index(p: usize, hazard: usize, role: CoordRole) -> usize {
    let base = hazard * (2 + p);
    match role {
        CoordRole::Shape => base,
        CoordRole::Intercept => base + 1,
        CoordRole::Covariate(j) => {
            debug_assert!(j < p);
            base + 2 + j
        }
    }
}

/// Inverse of [`coord_index`].
pub fn coord_role(p: usize, idx: usize) -> (usize, CoordRole) {
    let w = 2 + p;
    let hazard = idx / w;
    match idx % w {
        0 => (hazard, CoordRole::Shape),
        1 => (hazard, CoordRole::Intercept),
        r => (hazard, CoordRole::Covariate(r - 2)),
    }
}

/// Full sampler state.
///
/// Positions are the values at sampler time `clock`; between events every
/// coordinate moves linearly with its velocity. Velocities are exactly 0 for
/// coordinates stuck at `beta = 0` (excluded covariates) and in `{-1, +1}`
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub dists: Vec<DistKind>,
    pub alpha: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<bool>>,
    pub v_alpha: Vec<f64>,
    pub v_beta0: Vec<f64>,
    pub v_beta: Vec<Vec<f64>>,
    pub omega: f64,
    pub z1: f64,
    pub z2: f64,
    pub clock: f64,
}

impl ModelState {
    pub fn k(&self) -> usize {
        self.dists.len()
    }

    pub fn p(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.k() * (2 + self.p())
    }

    /// `sigma_beta = |z1| sqrt(z2)`, the half-Cauchy slab scale.
    pub fn sigma_beta(&self) -> f64 {
        self.z1.abs() * self.z2.sqrt()
    }

    pub fn n_included(&self) -> usize {
        self.gamma
            .iter()
            .map(|g| g.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn n_stuck(&self) -> usize {
        self.k() * self.p() - self.n_included()
    }

    /// Advance all positions by `dt` along the current velocities.
    pub fn advance(&mut self, dt: f64) {
        for k in 0..self.k() {
            self.alpha[k] += self.v_alpha[k] * dt;
            self.beta0[k] += self.v_beta0[k] * dt;
            for j in 0..self.p() {
                if self.gamma[k][j] {
                    self.beta[k][j] += self.v_beta[k][j] * dt;
                }
            }
        }
    }

    /// Clone advanced to absolute sampler time `t >= clock`.
    pub fn snapshot_at(&self, t: f64) -> ModelState {
        let mut s = self.clone();
        s.advance(t - self.clock);
        s.clock = t;
        s
    }

    pub fn coord(&self, idx: usize) -> f64 {
        let (k, role) = coord_role(self.p(), idx);
        match role {
            CoordRole::Shape => self.alpha[k],
            CoordRole::Intercept => self.beta0[k],
            CoordRole::Covariate(j) => self.beta[k][j],
        }
    }

    pub fn velocity(&self, idx: usize) -> f64 {
        let (k, role) = coord_role(self.p(), idx);
        match role {
            CoordRole::Shape => self.v_alpha[k],
            CoordRole::Intercept => self.v_beta0[k],
            CoordRole::Covariate(j) => self.v_beta[k][j],
        }
    }

    pub fn flip_velocity(&mut self, idx: usize) {
        let (k, role) = coord_role(self.p(), idx);
        match role {
            CoordRole::Shape => self.v_alpha[k] = -self.v_alpha[k],
            CoordRole::Intercept => self.v_beta0[k] = -self.v_beta0[k],
            CoordRole::Covariate(j) => self.v_beta[k][j] = -self.v_beta[k][j],
        }
    }

    pub fn component(&self, k: usize) -> Component {
        Component {
            dist: self.dists[k],
            alpha: self.alpha[k],
            beta0: self.beta0[k],
            beta: self.beta[k].clone(),
            gamma: self.gamma[k].clone(),
            v_alpha: self.v_alpha[k],
            v_beta0: self.v_beta0[k],
            v_beta: self.v_beta[k].clone(),
        }
    }

    pub fn push_component(&mut self, c: Component) {
        self.dists.push(c.dist);
        self.alpha.push(c.alpha);
        self.beta0.push(c.beta0);
        self.beta.push(c.beta);
        self.gamma.push(c.gamma);
        self.v_alpha.push(c.v_alpha);
        self.v_beta0.push(c.v_beta0);
        self.v_beta.push(c.v_beta);
    }

    pub fn remove_component(&mut self, k: usize) -> Component {
        Component {
            dist: self.dists.remove(k),
            alpha: self.alpha.remove(k),
            beta0: self.beta0.remove(k),
            beta: self.beta.remove(k),
            gamma: self.gamma.remove(k),
            v_alpha: self.v_alpha.remove(k),
            v_beta0: self.v_beta0.remove(k),
            v_beta: self.v_beta.remove(k),
        }
    }

    pub fn replace_component(&mut self, k: usize, c: Component) {
        self.dists[k] = c.dist;
        self.alpha[k] = c.alpha;
        self.beta0[k] = c.beta0;
        self.beta[k] = c.beta;
        self.gamma[k] = c.gamma;
        self.v_alpha[k] = c.v_alpha;
        self.v_beta0[k] = c.v_beta0;
        self.v_beta[k] = c.v_beta;
    }

    /// Verify the structural invariants. Test and debug aid.
    pub fn check_invariants(&self, k_max: usize) -> Result<()> {
        let k = self.k();
        if k < 1 || k > k_max {
            return Err(Error::Config(format!("K = {k} outside 1..={k_max}")));
        }
        let p = self.p();
        let lens_ok = self.alpha.len() == k
            && self.beta0.len() == k
            && self.beta.len() == k
            && self.gamma.len() == k
            && self.v_alpha.len() == k
            && self.v_beta0.len() == k
            && self.v_beta.len() == k
            && self.beta.iter().all(|b| b.len() == p)
            && self.gamma.iter().all(|g| g.len() == p)
            && self.v_beta.iter().all(|v| v.len() == p);
        if !lens_ok {
            return Err(Error::Config("ragged state vectors".into()));
        }
        for kk in 0..k {
            for &v in [self.v_alpha[kk], self.v_beta0[kk]].iter() {
                if v != 1.0 && v != -1.0 {
                    return Err(Error::Config(format!(
                        "shape/intercept velocity {v} not unit"
                    )));
                }
            }
            for j in 0..p {
                let (g, b, v) = (self.gamma[kk][j], self.beta[kk][j], self.v_beta[kk][j]);
                if g {
                    if v != 1.0 && v != -1.0 {
                        return Err(Error::Config(format!(
                            "included beta velocity {v} not unit"
                        )));
                    }
                } else if b != 0.0 || v != 0.0 {
                    return Err(Error::Config(format!(
                        "excluded coordinate ({kk},{j}) must sit at 0 with zero velocity, got beta={b}, v={v}"
                    )));
                }
            }
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::Config(format!(
                "omega = {} outside (0,1)",
                self.omega
            )));
        }
        if !(self.z2 > 0.0) || !(self.sigma_beta() > 0.0) {
            return Err(Error::Config("sigma_beta must be positive".into()));
        }
        Ok(())
    }
}

/// Log-link linear predictor `mu_k(x) = exp(beta0 + sum_included x_j beta_j)`,
/// with the exponent clamped like every other hazard evaluation.
pub fn linear_predictor(state: &ModelState, k: usize, x: &[f64]) -> f64 {
    let mut lp = state.beta0[k];
    for j in 0..state.p() {
        if state.gamma[k][j] {
            lp += x[j] * state.beta[k][j];
        }
    }
    lp.clamp(-crate::survdist::EXP_CLAMP, crate::survdist::EXP_CLAMP)
        .exp()
}

/// Log density of `N(x; 0, sigma)`.
pub(crate) fn log_normal_density(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Log of the (unnormalised) zero-truncated Poisson mass `xi^k / k!`.
pub(crate) fn log_poisson_weight(xi: f64, k: usize) -> f64 {
    let mut acc = k as f64 * xi.ln();
    for i in 2..=k {
        acc -= (i as f64).ln();
    }
    acc
}

/// `ln[pi0(K+1) / pi0(K)] = ln(xi / (K+1))` for the truncated Poisson prior.
pub fn log_poisson_ratio(prior: &PriorConfig, k: usize) -> f64 {
    (prior.xi / (k as f64 + 1.0)).ln()
}

/// Log prior density of one component's parameters and structure, conditional
/// on the current hyperparameters: uniform distribution choice, Gaussian
/// shape and intercept, and Bernoulli-plus-slab covariate terms.
pub fn log_component_prior(c: &Component, prior: &PriorConfig, omega: f64, sigma_beta: f64) -> f64 {
    let mut lp = -(DistKind::ALL.len() as f64).ln();
    lp += log_normal_density(c.alpha, prior.sigma_alpha);
    lp += log_normal_density(c.beta0, prior.sigma_beta0);
    for j in 0..c.beta.len() {
        if c.gamma[j] {
            lp += omega.ln() + log_normal_density(c.beta[j], sigma_beta);
        } else {
            lp += (1.0 - omega).ln();
        }
    }
    lp
}

/// Full log prior contribution of appending `new_component`, assembled for
/// the birth side of the jump ratio: the Poisson count ratio plus the
/// component prior (which already carries the uniform `1/|H|` factor).
pub fn log_prior_ratio_birth(
    state: &ModelState,
    new_component: &Component,
    prior: &PriorConfig,
) -> Result<f64> {
    if state.k() >= prior.k_max {
        return Err(Error::Capacity { k_max: prior.k_max });
    }
    Ok(log_poisson_ratio(prior, state.k())
        + log_component_prior(new_component, prior, state.omega, state.sigma_beta()))
}

/// Sample an initial state: one subhazard of a uniformly chosen kind with a
/// crude moment estimate for its intercept, nothing included, hyperparameters
/// drawn from (or pinned by) the prior.
pub fn init_state(prior: &PriorConfig, data: &Dataset, rng: &mut StdRng) -> ModelState {
    use rand::RngExt;

    let dist = DistKind::ALL[rng.random_range(0..DistKind::ALL.len())];
    let beta0 = match dist {
        DistKind::Weibull => {
            // Exponential-rate estimate: events per unit time at risk.
            let events: f64 = data.events().iter().filter(|&&c| c).count() as f64;
            let exposure: f64 = data.times().iter().sum();
            if exposure > 0.0 {
                (events.max(0.5) / exposure).ln()
            } else {
                0.0
            }
        }
        DistKind::LogLogistic => {
            let mut obs: Vec<f64> = data
                .times()
                .iter()
                .zip(data.events())
                .filter(|(_, &c)| c)
                .map(|(&y, _)| y)
                .collect();
            if obs.is_empty() {
                obs = data.times().to_vec();
            }
            if obs.is_empty() {
                0.0
            } else {
                obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                obs[obs.len() / 2].ln()
            }
        }
    };
    let p = data.p();
    let omega = match prior.fixed_omega {
        Some(w) => w,
        None => Beta::new(prior.beta_a, prior.beta_b).unwrap().sample(rng),
    };
    let (z1, z2) = match prior.fixed_sigma_beta {
        Some(s) => (s, 1.0),
        None => (1.0, 1.0),
    };
    let sign = |rng: &mut StdRng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    ModelState {
        dists: vec![dist],
        alpha: vec![0.0],
        beta0: vec![beta0],
        beta: vec![vec![0.0; p]],
        gamma: vec![vec![false; p]],
        v_alpha: vec![sign(rng)],
        v_beta0: vec![sign(rng)],
        v_beta: vec![vec![0.0; p]],
        omega,
        z1,
        z2,
        clock: 0.0,
    }
}
