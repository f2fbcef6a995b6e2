//! Reference samplers and simulators for validation: a discrete-time
//! reversible-jump MCMC targeting the identical posterior, and generators
//! for synthetic survival data.
//!
//! The within-model random-walk core here is deliberately independent of the
//! trajectory machinery; the jump ratios reuse the same code as the event
//! engine so a ratio bug fails both samplers identically rather than hiding.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::jumps::{
    self, log_birth_ratio, log_death_ratio, log_swap_ratio, swap_candidate, AdaptiveRwm, SwapStyle,
};
use crate::model::{
    init_state, log_likelihood, log_normal_density, Dataset, LikCache, ModelState, PriorConfig,
    RawData,
};
use crate::postprocess::submodel_label;
use crate::survdist::DistKind;

/// Fixed per-coordinate proposal scale of the within-model walk.
const RWM_SCALE: f64 = 0.2;

/// Output of a reference run: exact per-iteration submodel occupancy plus a
/// thinned chain of states for parameter summaries.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub occupancy: BTreeMap<String, u64>,
    pub iterations: u64,
    pub thinned: Vec<ModelState>,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
    pub birth_attempts: u64,
    pub birth_accepts: u64,
}

impl OracleRun {
    pub fn submodel_probability(&self, label: &str) -> f64 {
        self.occupancy.get(label).copied().unwrap_or(0) as f64 / self.iterations as f64
    }
}

/// Discrete-time reversible-jump sampler over the full posterior. Each
/// iteration runs one sweep: a joint random-walk update of the continuous
/// coordinates, an add-delete update of one inclusion flag, a birth-death
/// attempt, a swap attempt, and the hyperparameter updates.
pub fn reference_rjmcmc(
    prior: &PriorConfig,
    data: &Dataset,
    iterations: u64,
    swap_style: SwapStyle,
    thin: u64,
    seed: u64,
) -> Result<OracleRun> {
    prior.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut state = init_state(prior, data, &mut rng);
    let mut cur_ll = log_likelihood(&state, data)?;
    let mut rwm = AdaptiveRwm::new();
    let mut run = OracleRun {
        occupancy: BTreeMap::new(),
        iterations,
        thinned: Vec::new(),
        swap_attempts: 0,
        swap_accepts: 0,
        birth_attempts: 0,
        birth_accepts: 0,
    };
    let norm = Normal::new(0.0, RWM_SCALE).unwrap();

    for it in 0..iterations {
        // Within-model random walk on all unconstrained coordinates.
        {
            let mut cand = state.clone();
            for k in 0..cand.k() {
                cand.alpha[k] += norm.sample(&mut rng);
                cand.beta0[k] += norm.sample(&mut rng);
                for j in 0..cand.p() {
                    if cand.gamma[k][j] {
                        cand.beta[k][j] += norm.sample(&mut rng);
                    }
                }
            }
            if let Ok(cand_ll) = log_likelihood(&cand, data) {
                let log_a = cand_ll - cur_ll + log_prior_continuous(&cand, prior)
                    - log_prior_continuous(&state, prior);
                if rng.random::<f64>() < log_a.min(0.0).exp() {
                    state = cand;
                    cur_ll = cand_ll;
                }
            }
        }

        // Add-delete move on a random inclusion flag, proposing from the slab.
        if state.p() > 0 {
            let k = rng.random_range(0..state.k());
            let j = rng.random_range(0..state.p());
            let sigma_beta = state.sigma_beta();
            let omega = state.omega;
            let mut cand = state.clone();
            let log_a = if state.gamma[k][j] {
                // Delete: reverse move draws the removed value from the slab.
                cand.gamma[k][j] = false;
                let b = cand.beta[k][j];
                cand.beta[k][j] = 0.0;
                cand.v_beta[k][j] = 0.0;
                match log_likelihood(&cand, data) {
                    Ok(ll) => {
                        let la = ll - cur_ll + (1.0 - omega).ln()
                            - omega.ln()
                            - log_normal_density(b, sigma_beta)
                            + log_normal_density(b, sigma_beta);
                        Some((la, ll))
                    }
                    Err(_) => None,
                }
            } else {
                cand.gamma[k][j] = true;
                let b = Normal::new(0.0, sigma_beta).unwrap().sample(&mut rng);
                cand.beta[k][j] = b;
                cand.v_beta[k][j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                match log_likelihood(&cand, data) {
                    Ok(ll) => {
                        let la = ll - cur_ll + omega.ln() - (1.0 - omega).ln()
                            + log_normal_density(b, sigma_beta)
                            - log_normal_density(b, sigma_beta);
                        Some((la, ll))
                    }
                    Err(_) => None,
                }
            };
            if let Some((la, ll)) = log_a {
                if rng.random::<f64>() < la.min(0.0).exp() {
                    state = cand;
                    cur_ll = ll;
                }
            }
        }

        // Birth-death attempt with the shared jump ratios.
        {
            let cache = LikCache::build(&state, data, 0.0)?;
            if rng.random_bool(0.5) {
                run.birth_attempts += 1;
                if state.k() < prior.k_max {
                    let (comp, _) = jumps::propose_birth(&state, prior, &mut rng)?;
                    let log_a = log_birth_ratio(&cache, data, prior, state.k(), &comp);
                    if rng.random::<f64>() < log_a.min(0.0).exp() {
                        state.push_component(comp);
                        cur_ll = log_likelihood(&state, data)?;
                        run.birth_accepts += 1;
                    }
                }
            } else if state.k() > 1 {
                let idx = rng.random_range(0..state.k());
                let log_a = log_death_ratio(&cache, data, prior, state.k(), idx);
                if rng.random::<f64>() < log_a.min(0.0).exp() {
                    state.remove_component(idx);
                    cur_ll = log_likelihood(&state, data)?;
                }
            }
        }

        // Swap attempt.
        {
            run.swap_attempts += 1;
            let cache = LikCache::build(&state, data, 0.0)?;
            let k = rng.random_range(0..state.k());
            let (cand, log_corr) = swap_candidate(&state, k, swap_style, prior, &mut rng);
            let log_a = log_swap_ratio(&cache, data, k, &cand, log_corr);
            if rng.random::<f64>() < log_a.min(0.0).exp() {
                state.replace_component(k, cand);
                cur_ll = log_likelihood(&state, data)?;
                run.swap_accepts += 1;
            }
        }

        // Hyperparameters.
        if prior.fixed_omega.is_none() {
            jumps::gibbs_omega(&mut state, prior, &mut rng);
        }
        if prior.fixed_sigma_beta.is_none() {
            jumps::rwm_sigma(&mut state, prior, 0.0, &mut rwm, &mut rng);
        }

        *run.occupancy
            .entry(submodel_label(&state.dists))
            .or_default() += 1;
        if thin > 0 && it % thin == 0 {
            run.thinned.push(state.clone());
        }
    }
    Ok(run)
}

/// Log of the continuous prior factors (shapes, intercepts, included slabs).
fn log_prior_continuous(state: &ModelState, prior: &PriorConfig) -> f64 {
    let sigma_beta = state.sigma_beta();
    let mut lp = 0.0;
    for k in 0..state.k() {
        lp += log_normal_density(state.alpha[k], prior.sigma_alpha);
        lp += log_normal_density(state.beta0[k], prior.sigma_beta0);
        for j in 0..state.p() {
            if state.gamma[k][j] {
                lp += log_normal_density(state.beta[k][j], sigma_beta);
            }
        }
    }
    lp
}

/// Log-normal / exponential competing-risks generator with exponential
/// censoring and one balanced binary covariate.
pub fn simulate_supplement_data(n: usize, seed: u64) -> Result<RawData> {
    if n == 0 {
        return Err(Error::Config("simulated dataset needs n >= 1".into()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let lognormal = LogNormal::new(0.0, 0.5).unwrap();
    let exp1 = Exp::new(1.0).unwrap();
    let censor = Exp::new(0.5).unwrap();
    let mut raw = RawData {
        times: Vec::with_capacity(n),
        events: Vec::with_capacity(n),
        covariates: Vec::with_capacity(n),
        names: vec!["x1".into()],
    };
    for _ in 0..n {
        let y1: f64 = lognormal.sample(&mut rng);
        let y2: f64 = exp1.sample(&mut rng);
        let y = y1.min(y2);
        let yc: f64 = censor.sample(&mut rng);
        raw.times.push(y.min(yc).max(1e-12));
        raw.events.push(y <= yc);
        raw.covariates
            .push(vec![if rng.random_bool(0.5) { 1.0 } else { 0.0 }]);
    }
    Ok(raw)
}

/// Event probability of the generator above, by direct Monte Carlo.
pub fn supplement_event_probability(n: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let lognormal = LogNormal::new(0.0, 0.5).unwrap();
    let exp1 = Exp::new(1.0).unwrap();
    let censor = Exp::new(0.5).unwrap();
    let mut events = 0usize;
    for _ in 0..n {
        let y1: f64 = lognormal.sample(&mut rng);
        let y = y1.min(exp1.sample(&mut rng));
        if y <= censor.sample(&mut rng) {
            events += 1;
        }
    }
    events as f64 / n as f64
}

/// Simulate from an explicit polyhazard model: the event time is the minimum
/// over per-subhazard draws, with optional exponential censoring
/// (`censor_rate = 0` disables it). No covariates.
pub fn simulate_polyhazard(
    components: &[(DistKind, f64, f64)],
    censor_rate: f64,
    n: usize,
    seed: u64,
) -> Result<RawData> {
    if n == 0 {
        return Err(Error::Config("simulated dataset needs n >= 1".into()));
    }
    if components.is_empty() {
        return Err(Error::Config("need at least one subhazard".into()));
    }
    for &(_, nu, mu) in components {
        if !(nu > 0.0 && mu > 0.0) {
            return Err(Error::Domain(format!(
                "invalid subhazard parameters nu={nu}, mu={mu}"
            )));
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut raw = RawData {
        times: Vec::with_capacity(n),
        events: Vec::with_capacity(n),
        covariates: vec![vec![]; n],
        names: vec![],
    };
    for _ in 0..n {
        let mut y = f64::INFINITY;
        for &(kind, nu, mu) in components {
            y = y.min(draw_subhazard(kind, nu, mu, &mut rng));
        }
        let (t, event) = if censor_rate > 0.0 {
            let c = Exp::new(censor_rate).unwrap().sample(&mut rng);
            (y.min(c), y <= c)
        } else {
            (y, true)
        };
        raw.times.push(t.max(1e-12));
        raw.events.push(event);
    }
    Ok(raw)
}

/// Inverse-CDF draw via the exponential representation `H(Y) ~ Exp(1)`.
fn draw_subhazard(kind: DistKind, nu: f64, mu: f64, rng: &mut StdRng) -> f64 {
    let e: f64 = Exp::new(1.0).unwrap().sample(rng);
    match kind {
        // H = mu y^nu
        DistKind::Weibull => (e / mu).powf(1.0 / nu),
        // H = ln(1 + (y/mu)^nu)
        DistKind::LogLogistic => mu * (e.exp_m1()).powf(1.0 / nu),
    }
}

/// Analytic survival function of a simulated polyhazard model.
pub fn analytic_survival(components: &[(DistKind, f64, f64)], y: f64) -> f64 {
    let ch: f64 = components
        .iter()
        .map(|&(kind, nu, mu)| crate::survdist::cumulative_hazard(kind, nu, mu, y).unwrap())
        .sum();
    (-ch).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;

    #[test]
    fn prior_only_occupancy_matches_truncated_poisson() {
        // Short sanity version of the acceptance check.
        let prior = PriorConfig {
            k_max: 10,
            fixed_omega: Some(0.5),
            fixed_sigma_beta: Some(1.0),
            ..PriorConfig::default()
        };
        let data = Dataset::empty(0);
        let run = reference_rjmcmc(&prior, &data, 200_000, SwapStyle::MedianMatch, 0, 42).unwrap();
        // P(K = k) under zero-truncated Poisson(2).
        let xi: f64 = 2.0;
        let norm: f64 = (1..=10).map(|k| pois_weight(xi, k)).sum();
        let mut tv = 0.0;
        for k in 1..=10usize {
            let want = pois_weight(xi, k) / norm;
            let got: f64 = run
                .occupancy
                .iter()
                .filter(|(label, _)| label.split('-').count() == k)
                .map(|(_, &c)| c as f64 / run.iterations as f64)
                .sum();
            tv += (want - got).abs();
        }
        assert!(tv / 2.0 < 0.02, "TV = {}", tv / 2.0);
    }

    fn pois_weight(xi: f64, k: usize) -> f64 {
        let mut w = xi.powi(k as i32);
        for i in 2..=k {
            w /= i as f64;
        }
        w
    }

    #[test]
    fn supplement_generator_shapes_and_determinism() {
        let a = simulate_supplement_data(100, 9).unwrap();
        let b = simulate_supplement_data(100, 9).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.events, b.events);
        assert!(a.times.iter().all(|&t| t > 0.0));
        assert!(a.covariates.iter().all(|r| r[0] == 0.0 || r[0] == 1.0));
        assert!(simulate_supplement_data(0, 1).is_err());
    }

    #[test]
    fn supplement_event_rate_matches_generative_model() {
        let n = 10_000;
        let reference = supplement_event_probability(200_000, 1);
        let raw = simulate_supplement_data(n, 2).unwrap();
        let got = raw.events.iter().filter(|&&e| e).count() as f64 / n as f64;
        let se = (reference * (1.0 - reference) / n as f64).sqrt();
        assert!(
            (got - reference).abs() < 3.0 * se + 0.01,
            "{got} vs {reference}"
        );
    }

    #[test]
    fn polyhazard_simulator_unit_exponential() {
        let raw = simulate_polyhazard(&[(DistKind::Weibull, 1.0, 1.0)], 0.0, 20_000, 3).unwrap();
        let mean: f64 = raw.times.iter().sum::<f64>() / raw.times.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        assert!(raw.events.iter().all(|&e| e));
    }

    #[test]
    fn polyhazard_simulator_min_of_exponentials() {
        let comps = [(DistKind::Weibull, 1.0, 1.0), (DistKind::Weibull, 1.0, 1.0)];
        let raw = simulate_polyhazard(&comps, 0.0, 20_000, 4).unwrap();
        let mean: f64 = raw.times.iter().sum::<f64>() / raw.times.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn empirical_survival_brackets_analytic() {
        // With no censoring the empirical survival is the Kaplan-Meier
        // estimate; the DKW band bounds its deviation from the truth.
        let comps = [
            (DistKind::Weibull, 1.6, 0.7),
            (DistKind::LogLogistic, 2.0, 1.5),
        ];
        let n = 10_000;
        let raw = simulate_polyhazard(&comps, 0.0, n, 5).unwrap();
        let band = (((2.0f64 / 0.01).ln()) / (2.0 * n as f64)).sqrt();
        for q in [0.25, 0.5, 1.0, 1.5, 2.5] {
            let emp = raw.times.iter().filter(|&&t| t > q).count() as f64 / n as f64;
            let truth = analytic_survival(&comps, q);
            assert!(
                (emp - truth).abs() < band + 0.005,
                "S({q}): {emp} vs {truth}"
            );
        }
    }

    #[test]
    fn loglogistic_simulation_median_is_scale() {
        let raw =
            simulate_polyhazard(&[(DistKind::LogLogistic, 2.0, 3.0)], 0.0, 20_000, 6).unwrap();
        let mut t = raw.times.clone();
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = t[t.len() / 2];
        assert!((med - 3.0).abs() < 0.1, "{med}");
    }
}
