//! Log-likelihood, posterior potential, analytic gradients, and the
//! per-observation hazard cache used by jump moves.

use super::{log_normal_density, Dataset, ModelState, PriorConfig};
use crate::error::{Error, Result};
use crate::survdist::{eval_full, DistKind, HazardEval};

/// Stack scratch bound; matches `K_MAX_SUPPORTED`.
const STACK_K: usize = super::K_MAX_SUPPORTED;

#[inline]
fn alpha_at(state: &ModelState, k: usize, s: f64) -> f64 {
    state.alpha[k] + state.v_alpha[k] * s
}

/// Log-location of subhazard `k` for covariate row `x`, advanced by `s`.
#[inline]
fn log_mu_at(state: &ModelState, k: usize, x: &[f64], s: f64) -> f64 {
    let mut lp = state.beta0[k] + state.v_beta0[k] * s;
    for j in 0..state.p() {
        if state.gamma[k][j] {
            lp += x[j] * (state.beta[k][j] + state.v_beta[k][j] * s);
        }
    }
    lp
}

/// Sum of censored/uncensored log contributions of every observation.
pub fn log_likelihood(state: &ModelState, data: &Dataset) -> Result<f64> {
    log_likelihood_at(state, data, 0.0)
}

/// Log-likelihood with every coordinate advanced by trajectory offset `s`.
pub fn log_likelihood_at(state: &ModelState, data: &Dataset, s: f64) -> Result<f64> {
    let k = state.k();
    let mut ll = 0.0;
    for i in 0..data.n() {
        let (y, ly) = (data.times()[i], data.log_times()[i]);
        let x = data.row(i);
        let mut hsum = 0.0;
        let mut chsum = 0.0;
        for kk in 0..k {
            let e = eval_full(
                state.dists[kk],
                alpha_at(state, kk, s),
                log_mu_at(state, kk, x, s),
                y,
                ly,
            );
            hsum += e.hazard;
            chsum += e.cum_hazard;
        }
        if data.events()[i] {
            if !(hsum > 0.0) {
                return Err(Error::Numerical {
                    index: i,
                    message: format!("total hazard {hsum} is not positive at an event time"),
                });
            }
            ll += hsum.ln();
        }
        ll -= chsum;
        if !ll.is_finite() {
            return Err(Error::Numerical {
                index: i,
                message: "log-likelihood became non-finite".into(),
            });
        }
    }
    Ok(ll)
}

/// Negative log of the continuous posterior factors: likelihood plus the
/// Gaussian priors on shapes, intercepts, and included coefficients. The
/// discrete prior factors (inclusion weights, distribution choices, the
/// subhazard count) are handled by the jump and sticky processes instead.
pub fn potential(state: &ModelState, data: &Dataset, prior: &PriorConfig) -> Result<f64> {
    potential_at(state, data, prior, 0.0)
}

pub fn potential_at(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    s: f64,
) -> Result<f64> {
    let mut u = -log_likelihood_at(state, data, s)?;
    let sigma_beta = state.sigma_beta();
    for k in 0..state.k() {
        u -= log_normal_density(alpha_at(state, k, s), prior.sigma_alpha);
        u -= log_normal_density(state.beta0[k] + state.v_beta0[k] * s, prior.sigma_beta0);
        for j in 0..state.p() {
            if state.gamma[k][j] {
                let b = state.beta[k][j] + state.v_beta[k][j] * s;
                u -= log_normal_density(b, sigma_beta);
            }
        }
    }
    Ok(u)
}

/// Full gradient of the potential at trajectory offset `s`, written into
/// `out` in the flat coordinate layout. Entries for stuck coordinates are
/// left at zero; their velocities are zero so they never influence rates.
pub fn grad_potential_all(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    s: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let k = state.k();
    let p = state.p();
    let w = 2 + p;
    debug_assert!(k <= STACK_K);
    out.clear();
    out.resize(k * w, 0.0);

    let mut evals = [HazardEval {
        hazard: 0.0,
        cum_hazard: 0.0,
        dlh_alpha: 0.0,
        dlh_logmu: 0.0,
        dch_alpha: 0.0,
        dch_logmu: 0.0,
    }; STACK_K];

    for i in 0..data.n() {
        let (y, ly) = (data.times()[i], data.log_times()[i]);
        let x = data.row(i);
        let mut hsum = 0.0;
        for kk in 0..k {
            let e = eval_full(
                state.dists[kk],
                alpha_at(state, kk, s),
                log_mu_at(state, kk, x, s),
                y,
                ly,
            );
            hsum += e.hazard;
            evals[kk] = e;
        }
        let event = data.events()[i];
        if event && !(hsum > 0.0) {
            return Err(Error::Numerical {
                index: i,
                message: format!("total hazard {hsum} is not positive at an event time"),
            });
        }
        for kk in 0..k {
            let e = &evals[kk];
            let weight = if event { e.hazard / hsum } else { 0.0 };
            let g_alpha = e.dch_alpha - weight * e.dlh_alpha;
            let g_mu = e.dch_logmu - weight * e.dlh_logmu;
            let base = kk * w;
            out[base] += g_alpha;
            out[base + 1] += g_mu;
            for j in 0..p {
                if state.gamma[kk][j] {
                    out[base + 2 + j] += g_mu * x[j];
                }
            }
        }
    }

    let sigma_beta = state.sigma_beta();
    let va = prior.sigma_alpha * prior.sigma_alpha;
    let vb0 = prior.sigma_beta0 * prior.sigma_beta0;
    let vb = sigma_beta * sigma_beta;
    for kk in 0..k {
        let base = kk * w;
        out[base] += alpha_at(state, kk, s) / va;
        out[base + 1] += (state.beta0[kk] + state.v_beta0[kk] * s) / vb0;
        for j in 0..p {
            if state.gamma[kk][j] {
                out[base + 2 + j] += (state.beta[kk][j] + state.v_beta[kk][j] * s) / vb;
            }
        }
    }
    for g in out.iter() {
        if !g.is_finite() {
            return Err(Error::Numerical {
                index: usize::MAX,
                message: "non-finite gradient".into(),
            });
        }
    }
    Ok(())
}

/// Gradient restricted to the requested active coordinates.
///
/// Panics if a stuck coordinate is requested; the sticky process owns those.
pub fn grad_potential(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    coords: &[usize],
) -> Result<Vec<f64>> {
    for &c in coords {
        assert!(
            state.velocity(c) != 0.0,
            "gradient requested for stuck coordinate {c}"
        );
    }
    let mut all = Vec::new();
    grad_potential_all(state, data, prior, 0.0, &mut all)?;
    Ok(coords.iter().map(|&c| all[c]).collect())
}

/// Per-coordinate flip rates `max(0, v_i dU_i)` at offset `s` and their sum.
/// `per_coord` is reused scratch in the flat layout.
pub fn flip_rate(
    state: &ModelState,
    data: &Dataset,
    prior: &PriorConfig,
    s: f64,
    per_coord: &mut Vec<f64>,
) -> Result<f64> {
    grad_potential_all(state, data, prior, s, per_coord)?;
    let p = state.p();
    let mut total = 0.0;
    for idx in 0..per_coord.len() {
        let v = state.velocity_flat(p, idx);
        let rate = (v * per_coord[idx]).max(0.0);
        per_coord[idx] = rate;
        total += rate;
    }
    Ok(total)
}

impl ModelState {
    /// `velocity` without re-deriving `p`; hot path for [`flip_rate`].
    #[inline]
    fn velocity_flat(&self, p: usize, idx: usize) -> f64 {
        let w = 2 + p;
        let (k, r) = (idx / w, idx % w);
        match r {
            0 => self.v_alpha[k],
            1 => self.v_beta0[k],
            j => self.v_beta[k][j - 2],
        }
    }
}

/// Per-observation hazard column of a single (already advanced) component.
#[derive(Debug, Clone)]
pub struct HazCol {
    pub h: Vec<f64>,
    pub ch: Vec<f64>,
}

/// Evaluate one component over the whole dataset.
pub fn hazard_column(
    dist: DistKind,
    alpha: f64,
    beta0: f64,
    beta: &[f64],
    gamma: &[bool],
    data: &Dataset,
) -> HazCol {
    let n = data.n();
    let mut h = Vec::with_capacity(n);
    let mut ch = Vec::with_capacity(n);
    for i in 0..n {
        let x = data.row(i);
        let mut lp = beta0;
        for j in 0..beta.len() {
            if gamma[j] {
                lp += x[j] * beta[j];
            }
        }
        let e = eval_full(dist, alpha, lp, data.times()[i], data.log_times()[i]);
        h.push(e.hazard);
        ch.push(e.cum_hazard);
    }
    HazCol { h, ch }
}

/// Cached per-observation, per-subhazard contributions at a fixed instant.
/// Jump moves touch one subhazard, so candidate likelihoods only need the
/// changed column.
#[derive(Debug, Clone)]
pub struct LikCache {
    k: usize,
    h: Vec<f64>,
    ch: Vec<f64>,
    hsum: Vec<f64>,
    ch_total: f64,
    loglik: f64,
}

impl LikCache {
    pub fn build(state: &ModelState, data: &Dataset, s: f64) -> Result<Self> {
        let k = state.k();
        let n = data.n();
        let mut h = vec![0.0; n * k];
        let mut ch = vec![0.0; n * k];
        let mut hsum = vec![0.0; n];
        let mut ch_total = 0.0;
        let mut loglik = 0.0;
        for i in 0..n {
            let (y, ly) = (data.times()[i], data.log_times()[i]);
            let x = data.row(i);
            for kk in 0..k {
                let e = eval_full(
                    state.dists[kk],
                    alpha_at(state, kk, s),
                    log_mu_at(state, kk, x, s),
                    y,
                    ly,
                );
                h[i * k + kk] = e.hazard;
                ch[i * k + kk] = e.cum_hazard;
                hsum[i] += e.hazard;
                ch_total += e.cum_hazard;
            }
            if data.events()[i] {
                if !(hsum[i] > 0.0) {
                    return Err(Error::Numerical {
                        index: i,
                        message: "total hazard not positive at an event time".into(),
                    });
                }
                loglik += hsum[i].ln();
            }
        }
        loglik -= ch_total;
        Ok(Self {
            k,
            h,
            ch,
            hsum,
            ch_total,
            loglik,
        })
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn loglik_with_added(&self, data: &Dataset, col: &HazCol) -> f64 {
        let mut ll = 0.0;
        for i in 0..data.n() {
            if data.events()[i] {
                ll += (self.hsum[i] + col.h[i]).max(f64::MIN_POSITIVE).ln();
            }
            ll -= col.ch[i];
        }
        ll - self.ch_total
    }

    pub fn loglik_with_removed(&self, data: &Dataset, k: usize) -> f64 {
        let mut ll = 0.0;
        let mut ch_removed = 0.0;
        for i in 0..data.n() {
            if data.events()[i] {
                ll += (self.hsum[i] - self.h[i * self.k + k])
                    .max(f64::MIN_POSITIVE)
                    .ln();
            }
            ch_removed += self.ch[i * self.k + k];
        }
        ll - (self.ch_total - ch_removed)
    }

    pub fn loglik_with_replaced(&self, data: &Dataset, k: usize, col: &HazCol) -> f64 {
        let mut ll = 0.0;
        let mut ch_old = 0.0;
        for i in 0..data.n() {
            if data.events()[i] {
                let hs = self.hsum[i] - self.h[i * self.k + k] + col.h[i];
                ll += hs.max(f64::MIN_POSITIVE).ln();
            }
            ch_old += self.ch[i * self.k + k];
            ll -= col.ch[i];
        }
        ll - (self.ch_total - ch_old)
    }
}
