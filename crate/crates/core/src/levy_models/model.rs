use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bessel::{ln_bessel_k, BesselError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    Invalid(String),
    #[error("characteristic exponent has no analytic continuation to {0}")]
    NotContinuable(Complex64),
    #[error(transparent)]
    Bessel(#[from] BesselError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(alias = "SymmetricStable", alias = "stable")]
    SymmetricStable,
    #[serde(alias = "GeneralizedHyperbolic", alias = "gh")]
    GeneralizedHyperbolic,
    #[serde(alias = "StablePlusDiffusion")]
    StablePlusDiffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub eta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhParams {
    pub kappa: f64,
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
}

/// A Lévy model given through its characteristic exponent
/// `psi(u) = i mu u - a^2 u^2 / 2 + theta(u)`.
///
/// The generalized hyperbolic family also accepts a diffusion part so that the
/// diffusion-removal experiments can run on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct ModelSpec {
    pub family: Family,
    pub mu: f64,
    pub a: f64,
    pub stable: Option<StableParams>,
    pub gh: Option<GhParams>,
}

/// Flat JSON form: `{"family", "mu", "a", "eta", "alpha", "kappa", "beta", "delta", "lambda"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawModel {
    family: Family,
    #[serde(default)]
    mu: f64,
    #[serde(default)]
    a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

impl TryFrom<RawModel> for ModelSpec {
    type Error = ModelError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| ModelError::Invalid(format!("{:?} requires `{name}`", raw.family)))
        };
        let spec = match raw.family {
            Family::SymmetricStable | Family::StablePlusDiffusion => {
                if raw.kappa.is_some() || raw.delta.is_some() || raw.lambda.is_some() || raw.beta.is_some() {
                    return Err(ModelError::Invalid("stable families take no GH parameters".into()));
                }
                ModelSpec {
                    family: raw.family,
                    mu: raw.mu,
                    a: raw.a,
                    stable: Some(StableParams { eta: need(raw.eta, "eta")?, alpha: need(raw.alpha, "alpha")? }),
                    gh: None,
                }
            }
            Family::GeneralizedHyperbolic => {
                if raw.eta.is_some() || raw.alpha.is_some() {
                    return Err(ModelError::Invalid("GH family takes no stable parameters".into()));
                }
                ModelSpec {
                    family: raw.family,
                    mu: raw.mu,
                    a: raw.a,
                    stable: None,
                    gh: Some(GhParams {
                        kappa: need(raw.kappa, "kappa")?,
                        beta: raw.beta.unwrap_or(0.0),
                        delta: need(raw.delta, "delta")?,
                        lambda: need(raw.lambda, "lambda")?,
                    }),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ModelSpec> for RawModel {
    fn from(m: ModelSpec) -> Self {
        RawModel {
            family: m.family,
            mu: m.mu,
            a: m.a,
            eta: m.stable.map(|s| s.eta),
            alpha: m.stable.map(|s| s.alpha),
            kappa: m.gh.map(|g| g.kappa),
            beta: m.gh.map(|g| g.beta),
            delta: m.gh.map(|g| g.delta),
            lambda: m.gh.map(|g| g.lambda),
        }
    }
}

impl ModelSpec {
    pub fn stable(eta: f64, alpha: f64) -> Self {
        ModelSpec {
            family: Family::SymmetricStable,
            mu: 0.0,
            a: 0.0,
            stable: Some(StableParams { eta, alpha }),
            gh: None,
        }
    }

    pub fn stable_plus_diffusion(eta: f64, alpha: f64, a: f64) -> Self {
        ModelSpec { family: Family::StablePlusDiffusion, a, ..Self::stable(eta, alpha) }
    }

    pub fn gh(kappa: f64, beta: f64, delta: f64, lambda: f64) -> Self {
        ModelSpec {
            family: Family::GeneralizedHyperbolic,
            mu: 0.0,
            a: 0.0,
            stable: None,
            gh: Some(GhParams { kappa, beta, delta, lambda }),
        }
    }

    pub fn with_drift(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_diffusion(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Invalid(msg.to_string()));
        if !self.mu.is_finite() {
            return bad("mu must be finite");
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return bad("diffusion volatility a must be finite and >= 0");
        }
        match self.family {
            Family::SymmetricStable | Family::StablePlusDiffusion => {
                let Some(s) = self.stable else { return bad("missing stable parameters") };
                if self.gh.is_some() {
                    return bad("stable family carries GH parameters");
                }
                if !(s.alpha > 0.0 && s.alpha <= 2.0) {
                    return bad("stable index alpha must lie in (0, 2]");
                }
                if !(s.eta > 0.0) || !s.eta.is_finite() {
                    return bad("stable scale eta must be > 0");
                }
                if self.family == Family::SymmetricStable && self.a != 0.0 {
                    return bad("symmetric stable family has no diffusion part");
                }
            }
            Family::GeneralizedHyperbolic => {
                let Some(g) = self.gh else { return bad("missing GH parameters") };
                if self.stable.is_some() {
                    return bad("GH family carries stable parameters");
                }
                if !(g.kappa > 0.0 && g.delta > 0.0) {
                    return bad("GH requires kappa > 0 and delta > 0");
                }
                if !(g.beta.abs() < g.kappa) {
                    return bad("GH requires |beta| < kappa");
                }
                if !g.lambda.is_finite() {
                    return bad("GH lambda must be finite");
                }
            }
        }
        Ok(())
    }

    /// Jump part `theta(z)` of the exponent, continued to complex `z` where possible.
    fn jump_exponent(&self, z: Complex64) -> Result<Complex64, ModelError> {
        if let Some(s) = self.stable {
            if z.im == 0.0 {
                return Ok(Complex64::new(-s.eta * z.re.abs().powf(s.alpha), 0.0));
            }
            if s.alpha == 2.0 {
                return Ok(-s.eta * z * z);
            }
            return Err(ModelError::NotContinuable(z));
        }
        let g = self.gh.expect("validated model has jump parameters");
        let i = Complex64::i();
        let w0 = Complex64::new(g.kappa * g.kappa - g.beta * g.beta, 0.0);
        let bz = Complex64::new(g.beta, 0.0) + i * z;
        let w = Complex64::new(g.kappa * g.kappa, 0.0) - bz * bz;
        if !(w.re > 0.0) && w.im == 0.0 {
            return Err(ModelError::NotContinuable(z));
        }
        let lk = ln_bessel_k(g.lambda, g.delta * w.sqrt())?;
        let lk0 = ln_bessel_k(g.lambda, g.delta * w0.sqrt())?;
        Ok(0.5 * g.lambda * (w0.ln() - w.ln()) + lk - lk0)
    }

    /// `psi(u)` for real `u`.
    pub fn char_exponent(&self, u: f64) -> Result<Complex64, ModelError> {
        self.char_exponent_complex(Complex64::new(u, 0.0))
    }

    /// `psi(z)` continued into the complex plane (needed at `z = v - i` for pricing).
    pub fn char_exponent_complex(&self, z: Complex64) -> Result<Complex64, ModelError> {
        let i = Complex64::i();
        let drift = i * self.mu * z;
        let diffusion = -0.5 * self.a * self.a * z * z;
        Ok(drift + diffusion + self.jump_exponent(z)?)
    }

    /// `phi_t(u) = exp(t psi(u))`.
    pub fn cf_at(&self, t: f64, u: f64) -> Result<Complex64, ModelError> {
        Ok((t * self.char_exponent(u)?).exp())
    }

    pub fn cf_at_complex(&self, t: f64, z: Complex64) -> Result<Complex64, ModelError> {
        Ok((t * self.char_exponent_complex(z)?).exp())
    }

    /// Open interval `(lo, hi)` of real `c` with `E[exp(c X_t)] < inf`.
    pub fn moment_strip(&self) -> (f64, f64) {
        match (self.stable, self.gh) {
            (Some(s), _) if s.alpha < 2.0 => (0.0, 0.0),
            (Some(_), _) => (f64::NEG_INFINITY, f64::INFINITY),
            (None, Some(g)) => (-g.kappa - g.beta, g.kappa - g.beta),
            (None, None) => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Returns the model with drift adjusted so that `psi(-i) = 0`,
    /// i.e. `E[exp(Y_t)] = 1`.
    pub fn risk_neutralize(&self) -> Result<ModelSpec, ModelError> {
        self.validate()?;
        let z = Complex64::new(0.0, -1.0);
        let (lo, hi) = self.moment_strip();
        if !(lo < 1.0 && 1.0 < hi) {
            return Err(ModelError::NotContinuable(z));
        }
        let rest = -0.5 * self.a * self.a * z * z + self.jump_exponent(z)?;
        // i mu (-i) = mu
        Ok(ModelSpec { mu: -rest.re, ..*self })
    }

    /// Mean of `X_t` from a central difference of the exponent; `None` when infinite.
    pub fn mean(&self, t: f64) -> Option<f64> {
        if let Some(s) = self.stable {
            return if s.alpha > 1.0 { Some(self.mu * t) } else { None };
        }
        let h = 1e-5;
        let d = (self.char_exponent(h).ok()? - self.char_exponent(-h).ok()?) / (2.0 * h);
        Some(t * d.im)
    }

    /// Blumenthal-Getoor index of the jump part.
    pub fn true_fractional_order(&self) -> f64 {
        match self.family {
            Family::SymmetricStable | Family::StablePlusDiffusion => self.stable.expect("stable parameters").alpha,
            Family::GeneralizedHyperbolic => 1.0,
        }
    }

    /// `(eta, alpha)` of the leading behaviour `Re theta(u) ~ -eta |u|^alpha`.
    pub fn leading_scale(&self) -> (f64, f64) {
        match (self.stable, self.gh) {
            (Some(s), _) => (s.eta, s.alpha),
            (None, Some(g)) => (g.delta, 1.0),
            (None, None) => unreachable!("validated model"),
        }
    }

    /// `tau(u) = -theta(u) / (eta |u|^alpha)` from the exact exponent.
    pub fn tau(&self, u: f64) -> Result<Complex64, ModelError> {
        let (eta, alpha) = self.leading_scale();
        Ok(-self.jump_exponent(Complex64::new(u, 0.0))? / (eta * u.abs().powf(alpha)))
    }
}
