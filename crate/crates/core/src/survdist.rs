//! Candidate subhazard distributions.
//!
//! The sampler works on unconstrained coordinates: `alpha = ln(shape)` and the
//! linear-predictor coefficients that form `ln(location)`. Everything here is
//! therefore evaluated from `(alpha, log_mu)` internally, with thin public
//! wrappers taking the natural `(nu, mu)` scale.
//!
//! Parameterisations:
//! - Weibull, rate form: `h(y) = mu * nu * y^(nu-1)`, `H(y) = mu * y^nu`.
//! - Log-logistic, scale form: `h(y) = (nu/mu)(y/mu)^(nu-1) / (1 + (y/mu)^nu)`,
//!   `H(y) = ln(1 + (y/mu)^nu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent clamp: `exp` arguments are limited to this magnitude so large
/// `y^nu` terms saturate instead of overflowing to infinity.
pub const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistKind {
    #[serde(rename = "W")]
    Weibull,
    #[serde(rename = "L")]
    LogLogistic,
}

impl DistKind {
    /// The candidate set; births draw uniformly from it.
    pub const ALL: [DistKind; 2] = [DistKind::Weibull, DistKind::LogLogistic];

    pub fn label(self) -> &'static str {
        match self {
            DistKind::Weibull => "W",
            DistKind::LogLogistic => "L",
        }
    }

    /// The swap partner of this distribution.
    pub fn other(self) -> DistKind {
        match self {
            DistKind::Weibull => DistKind::LogLogistic,
            DistKind::LogLogistic => DistKind::Weibull,
        }
    }
}

impl std::fmt::Display for DistKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Validated `(shape, location)` pair for a single subhazard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubhazardParams {
    pub shape: f64,
    pub location: f64,
}

impl SubhazardParams {
    pub fn new(shape: f64, location: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && location.is_finite() && location > 0.0) {
            return Err(Error::Domain(format!(
                "subhazard parameters must be finite and positive, got shape={shape}, location={location}"
            )));
        }
        Ok(Self { shape, location })
    }
}

fn check_inputs(nu: f64, mu: f64, y: f64) -> Result<()> {
    if !(nu.is_finite() && nu > 0.0 && mu.is_finite() && mu > 0.0 && y.is_finite() && y > 0.0) {
        return Err(Error::Domain(format!(
            "hazard evaluation needs finite positive inputs, got nu={nu}, mu={mu}, y={y}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp_exp(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// Numerically stable `1 / (1 + exp(-z))`.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z.min(EXP_CLAMP)).exp())
    } else {
        let e = clamp_exp(z);
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(z))`.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z.min(EXP_CLAMP)).exp().ln_1p()
    } else {
        clamp_exp(z).ln_1p()
    }
}

/// Hazard, cumulative hazard, and their partial derivatives with respect to
/// the unconstrained coordinates `alpha = ln(nu)` and `ln(mu)`, evaluated in
/// one pass so the likelihood inner loop shares the transcendentals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardEval {
    pub hazard: f64,
    pub cum_hazard: f64,
    /// d ln h / d alpha
    pub dlh_alpha: f64,
    /// d ln h / d ln mu
    pub dlh_logmu: f64,
    /// d H / d alpha
    pub dch_alpha: f64,
    /// d H / d ln mu
    pub dch_logmu: f64,
}

/// Evaluate everything at `(alpha, log_mu)`, with `log_y = ln(y)` supplied by
/// the caller (it is loop-invariant per observation).
pub(crate) fn eval_full(kind: DistKind, alpha: f64, log_mu: f64, y: f64, log_y: f64) -> HazardEval {
    let nu = clamp_exp(alpha);
    match kind {
        DistKind::Weibull => {
            let cum = clamp_exp(log_mu + nu * log_y);
            let hazard = clamp_exp(log_mu + alpha + (nu - 1.0) * log_y);
            HazardEval {
                hazard,
                cum_hazard: cum,
                dlh_alpha: 1.0 + nu * log_y,
                dlh_logmu: 1.0,
                dch_alpha: cum * nu * log_y,
                dch_logmu: cum,
            }
        }
        DistKind::LogLogistic => {
            let z = nu * (log_y - log_mu);
            let s = sigmoid(z);
            // h = (nu / y) * (y/mu)^nu / (1 + (y/mu)^nu)
            let hazard = nu / y * s;
            HazardEval {
                hazard,
                cum_hazard: softplus(z),
                dlh_alpha: 1.0 + z * (1.0 - s),
                dlh_logmu: -nu * (1.0 - s),
                dch_alpha: z * s,
                dch_logmu: -nu * s,
            }
        }
    }
}

/// Instantaneous hazard `h(y)`.
pub fn hazard(kind: DistKind, nu: f64, mu: f64, y: f64) -> Result<f64> {
    check_inputs(nu, mu, y)?;
    Ok(eval_full(kind, nu.ln(), mu.ln(), y, y.ln()).hazard)
}

/// Cumulative hazard `H(y) = -ln S(y)`.
pub fn cumulative_hazard(kind: DistKind, nu: f64, mu: f64, y: f64) -> Result<f64> {
    check_inputs(nu, mu, y)?;
    Ok(eval_full(kind, nu.ln(), mu.ln(), y, y.ln()).cum_hazard)
}

/// Survivor function `S(y) = exp(-H(y))`.
pub fn survival(kind: DistKind, nu: f64, mu: f64, y: f64) -> Result<f64> {
    Ok((-cumulative_hazard(kind, nu, mu, y)?).exp())
}

/// All four log-coordinate partial derivatives at `(nu, mu, y)`.
pub fn log_derivatives(kind: DistKind, nu: f64, mu: f64, y: f64) -> Result<HazardEval> {
    check_inputs(nu, mu, y)?;
    Ok(eval_full(kind, nu.ln(), mu.ln(), y, y.ln()))
}

/// Distribution median.
///
/// Log-logistic: `mu`. Weibull (rate form): `(ln 2 / mu)^(1/nu)`.
pub fn median(kind: DistKind, nu: f64, mu: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0 && mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!(
            "median needs finite positive parameters, got nu={nu}, mu={mu}"
        )));
    }
    Ok(match kind {
        DistKind::Weibull => (std::f64::consts::LN_2 / mu).powf(1.0 / nu),
        DistKind::LogLogistic => mu,
    })
}
