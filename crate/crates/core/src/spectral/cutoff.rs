use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::levy_models::RleClassSpec;

/// Which cut-off rule applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    P,
    Q,
    Diffusion,
}

/// `U = [(2 c)^{-1} log(eps^{-1} log^{-beta}(1/eps))]^{1/p}` where
/// `(c, p, beta)` is `(eta_plus, alpha_bar, 1 + varkappa/alpha_bar)` under P,
/// `(eta_plus, alpha_bar, (varkappa + 4)/alpha_bar - 1)` under Q and
/// `(a_bar, 2, 1 + varkappa/2)` with a diffusion part.
pub fn theoretical_cutoff(eps: f64, class: &RleClassSpec, regime: Regime) -> Result<f64, SpectralError> {
    class.validate()?;
    let (c, p, beta) = match regime {
        Regime::P => (class.eta_plus, class.alpha_bar, 1.0 + class.varkappa / class.alpha_bar),
        Regime::Q => (class.eta_plus, class.alpha_bar, (class.varkappa + 4.0) / class.alpha_bar - 1.0),
        Regime::Diffusion => (class.a_bar, 2.0, 1.0 + class.varkappa / 2.0),
    };
    if !(eps > 0.0 && eps < 1.0) || !(c > 0.0) {
        return Err(SpectralError::EpsTooLarge { eps });
    }
    let l = (1.0 / eps).ln();
    if l <= 1.0 {
        return Err(SpectralError::EpsTooLarge { eps });
    }
    let inner = l - beta * l.ln();
    if !(inner > 0.0) {
        return Err(SpectralError::EpsTooLarge { eps });
    }
    Ok((inner / (2.0 * c)).powf(1.0 / p))
}
