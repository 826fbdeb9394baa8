//! Closed-form survival mathematics for the Exponential, Rayleigh, and
//! Weibull families, discrete survival composition, and a Kaplan-Meier
//! diagnostic estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VedsaError};

/// Clamp applied to t before direct hazard evaluation, guarding the
/// Weibull kappa < 1 singularity at the origin.
pub const HAZARD_T_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistFamily {
    Exponential,
    Rayleigh,
    Weibull,
}

impl DistFamily {
    /// Number of free parameters of the family.
    pub fn param_count(&self) -> usize {
        match self {
            DistFamily::Exponential | DistFamily::Rayleigh => 1,
            DistFamily::Weibull => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistFamily::Exponential => "exponential",
            DistFamily::Rayleigh => "rayleigh",
            DistFamily::Weibull => "weibull",
        }
    }
}

impl std::str::FromStr for DistFamily {
    type Err = VedsaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(DistFamily::Exponential),
            "rayleigh" => Ok(DistFamily::Rayleigh),
            "weibull" => Ok(DistFamily::Weibull),
            other => Err(VedsaError::Config(format!("unknown distribution family: {other}"))),
        }
    }
}

/// Parameter set of one parametric family.
///
/// Exponential: rate `lambda`. Rayleigh: `alpha`. Weibull: shape `kappa`
/// and scale `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistParams {
    Exponential { lambda: f64 },
    Rayleigh { alpha: f64 },
    Weibull { kappa: f64, lambda: f64 },
}

impl DistParams {
    pub fn family(&self) -> DistFamily {
        match self {
            DistParams::Exponential { .. } => DistFamily::Exponential,
            DistParams::Rayleigh { .. } => DistFamily::Rayleigh,
            DistParams::Weibull { .. } => DistFamily::Weibull,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistParams::Exponential { lambda } => lambda > 0.0 && lambda.is_finite(),
            DistParams::Rayleigh { alpha } => alpha > 0.0 && alpha.is_finite(),
            DistParams::Weibull { kappa, lambda } => {
                kappa > 0.0 && kappa.is_finite() && lambda > 0.0 && lambda.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(VedsaError::Domain(format!("invalid distribution parameters: {self:?}")))
        }
    }

    /// Builds params from a raw positive vector in the head's output order:
    /// Exponential [lambda], Rayleigh [alpha], Weibull [kappa, lambda].
    pub fn from_slice(family: DistFamily, raw: &[f64]) -> Result<Self> {
        let p = match family {
            DistFamily::Exponential => DistParams::Exponential { lambda: raw[0] },
            DistFamily::Rayleigh => DistParams::Rayleigh { alpha: raw[0] },
            DistFamily::Weibull => DistParams::Weibull { kappa: raw[0], lambda: raw[1] },
        };
        p.validate()?;
        Ok(p)
    }
}

/// Instantaneous hazard h(t).
pub fn hazard(params: &DistParams, t: f64) -> f64 {
    let t = t.max(HAZARD_T_CLAMP);
    match *params {
        DistParams::Exponential { lambda } => lambda,
        DistParams::Rayleigh { alpha } => alpha * t,
        DistParams::Weibull { kappa, lambda } => (kappa / lambda) * (t / lambda).powf(kappa - 1.0),
    }
}

/// Cumulative hazard Λ(t) = -ln S(t).
pub fn cumulative_hazard(params: &DistParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    match *params {
        DistParams::Exponential { lambda } => lambda * t,
        DistParams::Rayleigh { alpha } => 0.5 * alpha * t * t,
        DistParams::Weibull { kappa, lambda } => (t / lambda).powf(kappa),
    }
}

/// Integrated hazard over [t0, t1], the per-bin discrete hazard increment.
pub fn integrated_hazard(params: &DistParams, t0: f64, t1: f64) -> f64 {
    cumulative_hazard(params, t1) - cumulative_hazard(params, t0)
}

pub fn survival(params: &DistParams, t: f64) -> f64 {
    (-cumulative_hazard(params, t)).exp()
}

pub fn cdf(params: &DistParams, t: f64) -> f64 {
    1.0 - survival(params, t)
}

pub fn pdf(params: &DistParams, t: f64) -> f64 {
    hazard(params, t) * survival(params, t)
}

/// Composes discrete survival S(t) = exp(-Σ_{k<=t} h_k) from per-bin
/// hazard increments. Returns the full curve S(1..t).
pub fn discrete_survival(hazard_increments: &[f64]) -> Result<Vec<f64>> {
    let mut curve = Vec::with_capacity(hazard_increments.len());
    let mut acc = 0.0;
    for &h in hazard_increments {
        if h < 0.0 || !h.is_finite() {
            return Err(VedsaError::Domain(format!("hazard increment must be >= 0, got {h}")));
        }
        acc += h;
        curve.push((-acc).exp());
    }
    Ok(curve)
}

/// One step of a Kaplan-Meier survival curve: S(t) for t >= time until the
/// next step.
#[derive(Debug, Clone, PartialEq)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
}

/// Product-limit estimate over (time, censored) observations. Diagnostic
/// only; never in the prediction path.
pub fn kaplan_meier(times: &[f64], censored: &[bool]) -> Result<Vec<KmStep>> {
    if times.is_empty() {
        return Err(VedsaError::Domain("kaplan_meier needs at least one observation".into()));
    }
    if times.len() != censored.len() {
        return Err(VedsaError::Structure("times and censored flags must align".into()));
    }
    if times.iter().any(|&t| t < 0.0 || !t.is_finite()) {
        return Err(VedsaError::Domain("observation times must be nonnegative".into()));
    }
    let mut obs: Vec<(f64, bool)> = times.iter().copied().zip(censored.iter().copied()).collect();
    obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut steps = Vec::new();
    let mut log_s = 0.0;
    let n = obs.len();
    let mut i = 0;
    while i < n {
        let t = obs[i].0;
        let at_risk = (n - i) as f64;
        let mut deaths = 0.0;
        let mut j = i;
        while j < n && obs[j].0 == t {
            if !obs[j].1 {
                deaths += 1.0;
            }
            j += 1;
        }
        if deaths > 0.0 {
            let frac = 1.0 - deaths / at_risk;
            if frac > 0.0 {
                log_s += frac.ln();
                steps.push(KmStep { time: t, survival: log_s.exp() });
            } else {
                log_s = f64::NEG_INFINITY;
                steps.push(KmStep { time: t, survival: 0.0 });
            }
        }
        i = j;
    }
    Ok(steps)
}

/// Evaluates a Kaplan-Meier step curve at time t.
pub fn km_survival_at(steps: &[KmStep], t: f64) -> f64 {
    let mut s = 1.0;
    for step in steps {
        if step.time <= t {
            s = step.survival;
        } else {
            break;
        }
    }
    s
}
