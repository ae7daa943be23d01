use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::adaptive::{default_ladder, CutoffLadder, EstimatorSettings, NullDesign, DEFAULT_MARGIN};
use crate::calibration::QRoute;
use crate::ecf::Measure;
use crate::levy_models::{ModelSpec, RleClassSpec};
use crate::option_market::MarketConfig;
use crate::spectral::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Write simulated increments or quotes without estimating anything.
    Simulate,
    EstimateP,
    CalibrateQ,
    McStudy,
    CalibrateCv,
}

fn default_r() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.5
}
fn default_cv_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_replications() -> usize {
    500
}
fn default_trials() -> usize {
    1
}
fn default_null_model() -> ModelSpec {
    ModelSpec::stable(1.0, 1.0)
}

/// One JSON document describing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Usually supplied on the command line instead.
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Which pipeline `simulate`, `mc-study` and `calibrate-cv` use; the other
    /// modes imply it.
    #[serde(default)]
    pub measure: Option<Measure>,
    pub model: ModelSpec,
    /// Option-market design for the pricing-measure modes.
    #[serde(default)]
    pub market: Option<MarketConfig>,
    #[serde(default = "default_ladder")]
    pub ladder: CutoffLadder,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// MC standard errors a calibrated loss must stay below the bound by.
    #[serde(default = "default_cv_margin")]
    pub cv_margin: f64,
    /// Null replications `M` per critical-value calibration.
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_null_model")]
    pub null_model: ModelSpec,
    /// Defaults to the design of each study group.
    #[serde(default)]
    pub null_design: Option<NullDesign>,
    /// Precomputed critical values (as written by `calibrate-cv`).
    #[serde(default)]
    pub critical_values: Option<PathBuf>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub sigma_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Cut-off rule for the fixed-cut-off estimate recorded next to the
    /// adaptive one.
    #[serde(default)]
    pub regime: Option<Regime>,
    /// Class bounds for the cut-off rule, describing the law of one
    /// observation (one increment, or the log-price at maturity).
    #[serde(default)]
    pub class: Option<RleClassSpec>,
    #[serde(default)]
    pub q_route: QRoute,
    /// Increments (`estimate-p`) or quotes (`calibrate-q`) read from CSV
    /// instead of simulated.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Feed the model cf itself to the estimator, with noise level `1/n`.
    #[serde(default)]
    pub exact_cf: bool,
    /// With `xi` set, also run the plain estimator on the same data.
    #[serde(default)]
    pub compare_plain: bool,
    #[serde(default)]
    pub record_runtime: bool,
    #[serde(default)]
    pub write_traces: bool,
}

/// One cell of a study: a sample size under P, a noise scale under Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub index: usize,
    pub n: usize,
    pub sigma_bar: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn mode(&self) -> Result<Mode, HarnessError> {
        self.mode.ok_or_else(|| HarnessError::Config("no mode given".into()))
    }

    pub fn measure(&self) -> Result<Measure, HarnessError> {
        Ok(match self.mode()? {
            Mode::EstimateP => Measure::P,
            Mode::CalibrateQ => Measure::Q,
            _ => self.measure.unwrap_or(Measure::P),
        })
    }

    pub fn regime(&self) -> Result<Regime, HarnessError> {
        if let Some(r) = self.regime {
            return Ok(r);
        }
        if self.estimator.xi.is_some() {
            return Ok(Regime::Diffusion);
        }
        Ok(match self.measure()? {
            Measure::P => Regime::P,
            Measure::Q => Regime::Q,
        })
    }

    pub fn market(&self) -> Result<&MarketConfig, HarnessError> {
        self.market.as_ref().ok_or_else(|| HarnessError::Config("pricing-measure modes need `market`".into()))
    }

    pub fn dt(&self) -> Result<f64, HarnessError> {
        match self.dt {
            Some(dt) if dt > 0.0 && dt.is_finite() => Ok(dt),
            Some(dt) => Err(HarnessError::Config(format!("dt must be positive, got {dt}"))),
            None => Err(HarnessError::Config("P-measure modes need `dt`".into())),
        }
    }

    /// Time scale of one observation: `dt` under P, the maturity under Q.
    pub fn scale(&self) -> Result<f64, HarnessError> {
        match self.measure()? {
            Measure::P => self.dt(),
            Measure::Q => Ok(self.market()?.maturity),
        }
    }

    /// The model with its drift set so that discounted prices are martingales.
    pub fn pricing_model(&self) -> Result<ModelSpec, HarnessError> {
        Ok(self.model.risk_neutralize()?)
    }

    pub fn groups(&self) -> Result<Vec<Group>, HarnessError> {
        let mode = self.mode()?;
        let groups: Vec<Group> = match self.measure()? {
            Measure::P => {
                let ns = match (&self.n_grid, self.n) {
                    (Some(g), _) if mode == Mode::McStudy => g.clone(),
                    (_, Some(n)) => vec![n],
                    _ if self.data.is_some() && mode == Mode::EstimateP => vec![0],
                    _ => return Err(HarnessError::Config("need `n` (or `n_grid` for mc-study)".into())),
                };
                ns.into_iter().enumerate().map(|(index, n)| Group { index, n, sigma_bar: None }).collect()
            }
            Measure::Q => {
                let m = self.market()?;
                let sigmas = match &self.sigma_grid {
                    Some(g) if mode == Mode::McStudy => g.clone(),
                    _ => vec![m.noise_scale],
                };
                sigmas
                    .into_iter()
                    .enumerate()
                    .map(|(index, s)| Group { index, n: m.n_quotes, sigma_bar: Some(s) })
                    .collect()
            }
        };
        if groups.is_empty() {
            return Err(HarnessError::Config("empty study grid".into()));
        }
        Ok(groups)
    }

    /// Class bounds for the cut-off rule. Without an explicit `class` they are
    /// read off the model: `alpha_bar = 2`, `varkappa = 1`, both scale bounds
    /// equal to the leading jump scale and `a_bar = a^2 / 2`, all multiplied
    /// by the observation time scale.
    pub fn class(&self) -> Result<RleClassSpec, HarnessError> {
        if let Some(c) = self.class {
            c.validate()?;
            return Ok(c);
        }
        let s = self.scale()?;
        let (eta, _) = self.model.leading_scale();
        Ok(RleClassSpec {
            alpha_bar: 2.0,
            eta_minus: eta * s,
            eta_plus: eta * s,
            varkappa: 1.0,
            a_bar: 0.5 * self.model.a * self.model.a * s,
        })
    }

    /// Null design for one group unless fixed in the config.
    pub fn null_design_for(&self, group: &Group) -> Result<NullDesign, HarnessError> {
        if let Some(d) = self.null_design {
            return Ok(d);
        }
        Ok(match self.measure()? {
            Measure::P => NullDesign { n: group.n, dt: self.dt()? },
            Measure::Q => {
                let m = self.market()?;
                NullDesign { n: m.n_quotes, dt: m.maturity }
            }
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mode = self.mode()?;
        let measure = self.measure()?;
        self.model.validate()?;
        self.null_model.validate()?;
        self.estimator.validate()?;
        if !(self.r > 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(HarnessError::Config(format!(
                "need r > 0 and gamma in (0, 1], got {} and {}",
                self.r, self.gamma
            )));
        }
        if !(self.cv_margin >= 0.0 && self.cv_margin.is_finite()) {
            return Err(HarnessError::Config(format!(
                "cv_margin must be finite and nonnegative, got {}",
                self.cv_margin
            )));
        }
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        match measure {
            Measure::P => {
                self.dt()?;
            }
            Measure::Q => {
                let m = self.market()?;
                m.validate()?;
                if self.exact_cf {
                    return Err(HarnessError::Config("`exact_cf` applies to P-measure runs only".into()));
                }
                if let Some(g) = &self.sigma_grid {
                    if g.iter().any(|s| !(*s >= 0.0)) {
                        return Err(HarnessError::Config("sigma_grid entries must be nonnegative".into()));
                    }
                }
            }
        }
        if self.data.is_some() {
            if !matches!(mode, Mode::EstimateP | Mode::CalibrateQ) {
                return Err(HarnessError::Config("`data` is only read by estimate-p and calibrate-q".into()));
            }
            if self.trials != 1 {
                return Err(HarnessError::Config("a data file supports exactly one trial".into()));
            }
        }
        let groups = self.groups()?;
        let reading = self.data.is_some();
        if !reading && groups.iter().any(|g| g.n == 0) {
            return Err(HarnessError::Config("sample sizes must be at least 1".into()));
        }
        if mode == Mode::CalibrateCv && self.critical_values.is_some() {
            return Err(HarnessError::Config("calibrate-cv computes critical values; drop `critical_values`".into()));
        }
        self.class()?;
        Ok(())
    }
}
