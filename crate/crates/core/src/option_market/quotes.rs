use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pricing::{FourierPricer, PricingError};
use crate::levy_models::ModelSpec;
use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuoteError {
    #[error("invalid market configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error("malformed quote CSV: {0}")]
    Csv(String),
}

/// How the quote noise scale depends on the clean price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseForm {
    /// `sigma(y) = (sigma_bar O(y))^2`
    #[default]
    Squared,
    /// `sigma(y) = sigma_bar O(y)`
    Proportional,
}

fn default_spot() -> f64 {
    1.0
}
fn default_rate() -> f64 {
    0.06
}
fn default_maturity() -> f64 {
    0.25
}
fn default_design_variance() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    #[serde(default = "default_spot")]
    pub spot: f64,
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_maturity")]
    pub maturity: f64,
    pub n_quotes: usize,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default = "default_design_variance")]
    pub design_variance: f64,
    #[serde(default)]
    pub noise_form: NoiseForm,
    #[serde(default)]
    pub seed: u64,
}

impl MarketConfig {
    pub fn new(n_quotes: usize, noise_scale: f64, seed: u64) -> Self {
        MarketConfig {
            spot: default_spot(),
            rate: default_rate(),
            maturity: default_maturity(),
            n_quotes,
            noise_scale,
            design_variance: default_design_variance(),
            noise_form: NoiseForm::Squared,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), QuoteError> {
        if !(self.spot > 0.0 && self.maturity > 0.0) {
            return Err(QuoteError::Invalid("spot and maturity must be positive".into()));
        }
        if self.n_quotes < 2 {
            return Err(QuoteError::Invalid("need at least two quotes".into()));
        }
        if !(self.noise_scale >= 0.0 && self.design_variance > 0.0) {
            return Err(QuoteError::Invalid("noise scale must be >= 0 and design variance > 0".into()));
        }
        Ok(())
    }
}

/// Quotes on a sorted moneyness design. After [`exp_weight`] the price columns
/// hold `e^{-y} O(y)` and `e^{-y} sigma(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuoteSet {
    pub y: Vec<f64>,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub sigma: Vec<f64>,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub weighted: bool,
}

/// Spacings `y_j - y_{j-1}`; the first quote borrows the second spacing.
pub fn spacings(y: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = std::iter::once(f64::NAN).chain(y.windows(2).map(|w| w[1] - w[0])).collect();
    if d.len() > 1 {
        d[0] = d[1];
    } else if !d.is_empty() {
        d[0] = 0.0;
    }
    d
}

/// Random design, clean prices and additive Gaussian noise.
pub fn synthesize_quotes(config: &MarketConfig, pricer: &FourierPricer) -> Result<OptionQuoteSet, QuoteError> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let sd = config.design_variance.sqrt();
    let mut y: Vec<f64> = (0..config.n_quotes).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    y.sort_by(|a, b| a.total_cmp(b));
    if y.windows(2).any(|w| w[0] == w[1]) {
        return Err(QuoteError::Invalid("duplicate design points".into()));
    }
    let clean: Vec<f64> = pricer.prices(&y).into_iter().map(|o| o.max(0.0)).collect();
    let sigma: Vec<f64> = clean
        .iter()
        .map(|o| match config.noise_form {
            NoiseForm::Squared => (config.noise_scale * o).powi(2),
            NoiseForm::Proportional => config.noise_scale * o,
        })
        .collect();
    let noisy = clean
        .iter()
        .zip(&sigma)
        .map(|(o, s)| {
            let xi: f64 = rng.sample(StandardNormal);
            if *s == 0.0 {
                *o
            } else {
                o + s * xi
            }
        })
        .collect();
    let deltas = spacings(&y);
    Ok(OptionQuoteSet { y, clean, noisy, sigma, deltas, seed: config.seed, weighted: false })
}

/// Convenience wrapper that builds the pricer from the model.
pub fn synthesize_quotes_for(config: &MarketConfig, model_q: &ModelSpec) -> Result<OptionQuoteSet, QuoteError> {
    let pricer = FourierPricer::new(model_q, config.maturity)?;
    synthesize_quotes(config, &pricer)
}

fn scale_rows(q: &OptionQuoteSet, sign: f64) -> OptionQuoteSet {
    let f: Vec<f64> = q.y.iter().map(|y| (sign * y).exp()).collect();
    let mul = |v: &[f64]| v.iter().zip(&f).map(|(a, b)| a * b).collect();
    OptionQuoteSet {
        clean: mul(&q.clean),
        noisy: mul(&q.noisy),
        sigma: mul(&q.sigma),
        weighted: sign < 0.0,
        ..q.clone()
    }
}

/// Multiplies prices and noise scales by `e^{-y}`.
pub fn exp_weight(q: &OptionQuoteSet) -> OptionQuoteSet {
    scale_rows(q, -1.0)
}

/// Inverse of [`exp_weight`].
pub fn exp_unweight(q: &OptionQuoteSet) -> OptionQuoteSet {
    scale_rows(q, 1.0)
}

/// `||delta||^2 + sum_j delta_j^2 sigma~(y_j)^2` for an exponentially weighted set.
pub fn noise_level(q: &OptionQuoteSet) -> f64 {
    let grid: f64 = q.deltas.iter().map(|d| d * d).sum();
    let noise: f64 = q.deltas.iter().zip(&q.sigma).map(|(d, s)| d * d * s * s).sum();
    grid + noise
}

impl OptionQuoteSet {
    pub fn to_csv(&self) -> Result<String, QuoteError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| QuoteError::Csv(e.to_string());
        w.write_record(["y", "clean", "noisy", "sigma", "delta"]).map_err(err)?;
        for j in 0..self.y.len() {
            w.write_record(
                [self.y[j], self.clean[j], self.noisy[j], self.sigma[j], self.deltas[j]].map(|v| format!("{v:e}")),
            )
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| QuoteError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| QuoteError::Csv(e.to_string()))
    }

    /// Reads the layout written by [`to_csv`](Self::to_csv). The rows are
    /// taken to be unweighted prices.
    pub fn from_csv(text: &str, seed: u64) -> Result<Self, QuoteError> {
        #[derive(Deserialize)]
        struct Row {
            y: f64,
            clean: f64,
            noisy: f64,
            sigma: f64,
            delta: f64,
        }
        let mut q = OptionQuoteSet {
            y: Vec::new(),
            clean: Vec::new(),
            noisy: Vec::new(),
            sigma: Vec::new(),
            deltas: Vec::new(),
            seed,
            weighted: false,
        };
        for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<Row>() {
            let r = row.map_err(|e| QuoteError::Csv(e.to_string()))?;
            q.y.push(r.y);
            q.clean.push(r.clean);
            q.noisy.push(r.noisy);
            q.sigma.push(r.sigma);
            q.deltas.push(r.delta);
        }
        if q.y.len() < 2 || q.y.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(QuoteError::Invalid("need at least two quotes with strictly increasing y".into()));
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gh_q() -> ModelSpec {
        ModelSpec::gh(2.0, -1.0, 1.0, 1.0).risk_neutralize().unwrap()
    }

    #[test]
    fn noiseless_quotes_are_clean() {
        let q = synthesize_quotes_for(&MarketConfig::new(200, 0.0, 3), &gh_q()).unwrap();
        assert_eq!(q.noisy, q.clean);
        assert!(q.y.windows(2).all(|w| w[0] < w[1]));
        assert!(q.clean.iter().zip(&q.y).all(|(o, y)| *o >= 0.0 && *o <= 1f64.max(y.exp())));
    }

    #[test]
    fn csv_round_trip() {
        let q = synthesize_quotes_for(&MarketConfig::new(50, 1.0, 2), &gh_q()).unwrap();
        let back = OptionQuoteSet::from_csv(&q.to_csv().unwrap(), q.seed).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let c = MarketConfig::new(300, 10.0, 8);
        let a = synthesize_quotes_for(&c, &gh_q()).unwrap();
        let b = synthesize_quotes_for(&c, &gh_q()).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }

    #[test]
    fn standardized_noise_is_standard() {
        let n = 1000;
        let q = synthesize_quotes_for(&MarketConfig::new(n, 10.0, 21), &gh_q()).unwrap();
        let z: Vec<f64> = (0..n).map(|j| (q.noisy[j] - q.clean[j]) / q.sigma[j]).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let nf = n as f64;
        assert!(mean.abs() < 4.0 / nf.sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
    }

    #[test]
    fn exponential_weighting() {
        let q = OptionQuoteSet {
            y: vec![0.0, 1.0],
            clean: vec![0.3, 1f64.exp()],
            noisy: vec![0.31, 1f64.exp()],
            sigma: vec![0.1, 0.2],
            deltas: vec![1.0, 1.0],
            seed: 0,
            weighted: false,
        };
        let w = exp_weight(&q);
        assert_eq!(w.clean[0], 0.3);
        assert!((w.clean[1] - 1.0).abs() < 1e-15);
        let back = exp_unweight(&w);
        for (a, b) in back.noisy.iter().zip(&q.noisy) {
            assert!((a - b).abs() <= 1e-14 * b.abs());
        }
    }

    #[test]
    fn noise_level_is_positive_and_reproducible() {
        let c = MarketConfig::new(100, 1.0, 4);
        let e1 = noise_level(&exp_weight(&synthesize_quotes_for(&c, &gh_q()).unwrap()));
        let e2 = noise_level(&exp_weight(&synthesize_quotes_for(&c, &gh_q()).unwrap()));
        assert!(e1 > 0.0);
        assert_eq!(e1, e2);
    }
}
