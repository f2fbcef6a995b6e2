//! Turns raw sampler output into reported quantities: the shape-ordering
//! relabelling, submodel probabilities, mean survival, and hazard curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, SampleSkeleton};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::survdist::{self, DistKind};

/// Relabel subhazards for identifiability: Weibull blocks before
/// log-logistic, and ascending shape within a distribution kind. All
/// per-hazard fields travel together, so likelihood values are untouched.
pub fn apply_ordering(state: &mut ModelState) {
    let k = state.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        (state.dists[a], state.alpha[a])
            .partial_cmp(&(state.dists[b], state.alpha[b]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    let comps: Vec<_> = order.iter().map(|&i| state.component(i)).collect();
    for (i, c) in comps.into_iter().enumerate() {
        state.replace_component(i, c);
    }
}

/// Canonical submodel label: sorted kinds joined with dashes ("W-W-L").
pub fn submodel_label(dists: &[DistKind]) -> String {
    let mut sorted = dists.to_vec();
    sorted.sort();
    sorted
        .iter()
        .map(|d| d.label())
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelProb {
    pub label: String,
    /// Fraction of sampler time spent in the submodel (primary estimator).
    pub occupancy: f64,
    /// Fraction of snapshots in the submodel (secondary estimator).
    pub snapshot_fraction: f64,
}

/// Time-occupancy (and snapshot-count) probabilities per `(K, kinds)`
/// submodel, from the structural events of the skeleton.
pub fn submodel_probabilities(skeleton: &SampleSkeleton) -> Vec<SubmodelProb> {
    let mut occupancy: BTreeMap<String, f64> = BTreeMap::new();
    let mut dists = skeleton.initial.dists.clone();
    let mut t_prev = 0.0;
    for event in &skeleton.events {
        let change = matches!(
            event.kind,
            EventKind::Birth { .. } | EventKind::Death { .. } | EventKind::Swap { .. }
        );
        if change {
            *occupancy.entry(submodel_label(&dists)).or_default() += event.clock - t_prev;
            t_prev = event.clock;
            match &event.kind {
                EventKind::Birth { component } => dists.push(component.dist),
                EventKind::Death { hazard } => {
                    dists.remove(*hazard);
                }
                EventKind::Swap { hazard, component } => dists[*hazard] = component.dist,
                _ => unreachable!(),
            }
        }
    }
    *occupancy.entry(submodel_label(&dists)).or_default() += skeleton.total_time - t_prev;

    let mut snapshots: BTreeMap<String, usize> = BTreeMap::new();
    for s in &skeleton.samples {
        *snapshots.entry(submodel_label(&s.dists)).or_default() += 1;
    }
    let n_snap = skeleton.samples.len().max(1) as f64;

    let mut out: Vec<SubmodelProb> = occupancy
        .iter()
        .map(|(label, &t)| SubmodelProb {
            label: label.clone(),
            occupancy: t / skeleton.total_time,
            snapshot_fraction: snapshots.get(label).copied().unwrap_or(0) as f64 / n_snap,
        })
        .collect();
    out.sort_by(|a, b| b.occupancy.partial_cmp(&a.occupancy).unwrap());
    out
}

/// Pool submodel probabilities across chains (equal time weights).
pub fn pooled_submodel_probabilities(skeletons: &[&SampleSkeleton]) -> Vec<SubmodelProb> {
    let mut occ: BTreeMap<String, f64> = BTreeMap::new();
    let mut snap: BTreeMap<String, f64> = BTreeMap::new();
    for s in skeletons {
        for p in submodel_probabilities(s) {
            *occ.entry(p.label.clone()).or_default() += p.occupancy;
            *snap.entry(p.label).or_default() += p.snapshot_fraction;
        }
    }
    let n = skeletons.len().max(1) as f64;
    let mut out: Vec<SubmodelProb> = occ
        .iter()
        .map(|(label, &o)| SubmodelProb {
            label: label.clone(),
            occupancy: o / n,
            snapshot_fraction: snap.get(label).copied().unwrap_or(0.0) / n,
        })
        .collect();
    out.sort_by(|a, b| b.occupancy.partial_cmp(&a.occupancy).unwrap());
    out
}

/// Total hazard of a sampled model at time `y` for standardized profile `x`.
pub fn total_hazard(state: &ModelState, x: &[f64], y: f64) -> f64 {
    let mut h = 0.0;
    for k in 0..state.k() {
        let nu = state.alpha[k].exp();
        let mu = crate::model::linear_predictor(state, k, x);
        h += survdist::hazard(state.dists[k], nu, mu, y).unwrap_or(f64::NAN);
    }
    h
}

/// Total cumulative hazard at `y` for standardized profile `x`.
pub fn total_cum_hazard(state: &ModelState, x: &[f64], y: f64) -> f64 {
    let mut ch = 0.0;
    for k in 0..state.k() {
        let nu = state.alpha[k].exp();
        let mu = crate::model::linear_predictor(state, k, x);
        ch += survdist::cumulative_hazard(state.dists[k], nu, mu, y).unwrap_or(f64::NAN);
    }
    ch
}

/// Model survival function `exp(-sum_k H_k)`.
pub fn survival_at(state: &ModelState, x: &[f64], y: f64) -> f64 {
    (-total_cum_hazard(state, x, y)).exp()
}

/// Absolute tolerance of the mean-survival quadrature.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Residual survival above this at the horizon flags a truncated integral.
pub const TRUNCATION_WARN: f64 = 1e-4;

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    adaptive_simpson(&f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Posterior summary of scalar draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, q)
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

pub fn summarize(values: &[f64]) -> SummaryStats {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    SummaryStats {
        mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
        q025: quantile_sorted(&v, 0.025),
        q25: quantile_sorted(&v, 0.25),
        q75: quantile_sorted(&v, 0.75),
        q975: quantile_sorted(&v, 0.975),
    }
}

/// Posterior mean survival for one covariate profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSurvival {
    pub stats: SummaryStats,
    /// Fraction of samples whose integral was cut off at the horizon with
    /// non-negligible residual survival.
    pub truncated_fraction: f64,
    #[serde(skip)]
    pub per_sample: Vec<f64>,
}

/// Mean survival `E[Y] = integral of S` per posterior sample, by adaptive
/// quadrature on `[0, horizon]`. Samples with `S(horizon)` still above the
/// warning level (heavy-tailed all-log-logistic draws) are horizon-truncated
/// and flagged rather than extrapolated.
pub fn mean_survival(samples: &[ModelState], x: &[f64], horizon: f64) -> Result<MeanSurvival> {
    if samples.is_empty() {
        return Err(Error::Schema("no samples to summarize".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Config(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut truncated = 0usize;
    for s in samples {
        let f = |y: f64| if y <= 0.0 { 1.0 } else { survival_at(s, x, y) };
        let integral = integrate(f, 0.0, horizon, QUADRATURE_TOL);
        if survival_at(s, x, horizon) > TRUNCATION_WARN {
            truncated += 1;
        }
        per_sample.push(integral);
    }
    Ok(MeanSurvival {
        stats: summarize(&per_sample),
        truncated_fraction: truncated as f64 / samples.len() as f64,
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub y: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Pointwise posterior mean and central 95% band of the total hazard.
pub fn hazard_curve(samples: &[ModelState], x: &[f64], grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if samples.is_empty() {
        return Err(Error::Schema("no samples to summarize".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(samples.len());
    for &y in grid {
        values.clear();
        for s in samples {
            values.push(total_hazard(s, x, y));
        }
        let stats = summarize(&values);
        out.push(CurvePoint {
            y,
            mean: stats.mean,
            lo: stats.q025,
            hi: stats.q975,
        });
    }
    Ok(out)
}

/// Pointwise posterior summary of `h(y | x1) / h(y | x0)`.
pub fn hazard_ratio_curve(
    samples: &[ModelState],
    x1: &[f64],
    x0: &[f64],
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    if samples.is_empty() {
        return Err(Error::Schema("no samples to summarize".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(samples.len());
    for &y in grid {
        values.clear();
        for s in samples {
            let denom = total_hazard(s, x0, y);
            values.push(total_hazard(s, x1, y) / denom);
        }
        let stats = summarize(&values);
        out.push(CurvePoint {
            y,
            mean: stats.mean,
            lo: stats.q025,
            hi: stats.q975,
        });
    }
    Ok(out)
}
