use std::path::Path;
use std::time::Instant;

use super::config::{ExperimentConfig, Group};
use super::record::TrialRecord;
use super::HarnessError;
use crate::adaptive::{
    aggregate_or_fallback, estimate_ladder, estimate_rung, rung_grid, triangle_kernel, AdaptiveError, AggregationTrace,
    CriticalValues, EstimatorSettings,
};
use crate::calibration::{cf_from_fit, direct_cf_q, fit_weighted_quotes, quote_noise_level, QRoute};
use crate::ecf::{empirical_cf, CfEstimate, FreqGrid, Measure};
use crate::levy_models::{IncrementSample, IncrementSampler};
use crate::option_market::{exp_weight, synthesize_quotes, FourierPricer, OptionQuoteSet};
use crate::spectral::theoretical_cutoff;

/// Where a trial's observations come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Sampler(IncrementSampler),
    Sample(IncrementSample),
    /// The model cf itself.
    Exact,
    Pricer(FourierPricer),
    Quotes(OptionQuoteSet),
}

impl DataSource {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        Ok(match config.measure()? {
            Measure::P => match &config.data {
                Some(path) => DataSource::Sample(read_increments(path, config.dt()?)?),
                None if config.exact_cf => DataSource::Exact,
                None => DataSource::Sampler(IncrementSampler::new(&config.model, config.dt()?)?),
            },
            Measure::Q => match &config.data {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                    DataSource::Quotes(OptionQuoteSet::from_csv(&text, config.seed)?)
                }
                None => DataSource::Pricer(FourierPricer::new(&config.pricing_model()?, config.market()?.maturity)?),
            },
        })
    }
}

/// Increments from a CSV file with a column `x`.
pub fn read_increments(path: &Path, dt: f64) -> Result<IncrementSample, HarnessError> {
    #[derive(serde::Deserialize)]
    struct Row {
        x: f64,
    }
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let values = csv::Reader::from_reader(text.as_bytes())
        .deserialize::<Row>()
        .map(|r| r.map(|r| r.x))
        .collect::<Result<Vec<f64>, _>>()?;
    if values.is_empty() {
        return Err(HarnessError::Config(format!("{} holds no increments", path.display())));
    }
    Ok(IncrementSample { dt, values, seed: 0 })
}

pub fn increments_csv(sample: &IncrementSample) -> String {
    let mut s = String::with_capacity(24 * (sample.values.len() + 1));
    s.push_str("x\n");
    for x in &sample.values {
        s.push_str(&format!("{x:e}\n"));
    }
    s
}

/// Everything a trial shares with the other trials of its group.
#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub config: &'a ExperimentConfig,
    pub data: &'a DataSource,
    pub cv: &'a CriticalValues,
    /// Critical values of the plain estimator, needed only when `xi` is set
    /// and `compare_plain` asks for it.
    pub cv_plain: Option<&'a CriticalValues>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub trace: AggregationTrace,
}

/// Increments, empirical cf, rung estimates, aggregation, plus the estimate
/// at the theoretical cut-off.
pub fn pipeline_p(ctx: &TrialContext, group: &Group, trial: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let start = Instant::now();
    let cfg = ctx.config;
    let dt = cfg.dt()?;
    let sample = match ctx.data {
        DataSource::Sampler(s) => Some(s.draw(dt, group.n, seed)?),
        DataSource::Sample(s) => Some(s.clone()),
        DataSource::Exact => None,
        _ => return Err(HarnessError::Config("the P pipeline needs increments or the exact cf".into())),
    };
    let n = sample.as_ref().map_or(group.n, |s| s.values.len());
    let eps = 1.0 / n as f64;
    let cf_for = |g: FreqGrid| -> Result<Option<CfEstimate>, AdaptiveError> {
        Ok(Some(match &sample {
            Some(s) => empirical_cf(s, g),
            None => CfEstimate::from_model(&cfg.model, dt, g, eps, Measure::P)?,
        }))
    };
    let shared = Shared { ctx, measure: Measure::P, n, eps, sigma_bar: None, trial, seed, start };
    finish(&shared, cf_for)
}

/// Quotes, weighted spline fit (or the direct sum), cf per rung, then the
/// same estimation steps as under P with the quote noise level.
pub fn pipeline_q(ctx: &TrialContext, group: &Group, trial: usize, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let start = Instant::now();
    let cfg = ctx.config;
    let quotes = match ctx.data {
        DataSource::Pricer(p) => {
            let mut market = cfg.market()?.clone();
            if let Some(s) = group.sigma_bar {
                market.noise_scale = s;
            }
            market.seed = seed;
            synthesize_quotes(&market, p)?
        }
        DataSource::Quotes(q) => q.clone(),
        _ => return Err(HarnessError::Config("the Q pipeline needs a pricer or quotes".into())),
    };
    let eps = quote_noise_level(&quotes);
    let sigma_bar = group.sigma_bar.or_else(|| cfg.market.as_ref().map(|m| m.noise_scale));
    let shared = Shared { ctx, measure: Measure::Q, n: quotes.y.len(), eps, sigma_bar, trial, seed, start };
    // A rung whose transform cannot be turned into a cf is left out rather
    // than failing the trial.
    let usable = |r: Result<CfEstimate, _>, g: FreqGrid| match r {
        Ok(cf) => Some(cf),
        Err(e) => {
            log::debug!("no cf estimate on grid {g:?}: {e}");
            None
        }
    };
    match cfg.q_route {
        QRoute::Spline => {
            let fit = fit_weighted_quotes(&quotes)?;
            finish(&shared, |g| Ok(usable(cf_from_fit(&fit, g, eps), g)))
        }
        QRoute::Direct => {
            let weighted = exp_weight(&quotes);
            finish(&shared, |g| Ok(usable(direct_cf_q(&weighted, g).map_err(Into::into), g)))
        }
    }
}

struct Shared<'a> {
    ctx: &'a TrialContext<'a>,
    measure: Measure,
    n: usize,
    eps: f64,
    sigma_bar: Option<f64>,
    trial: usize,
    seed: u64,
    start: Instant,
}

fn finish<F>(sh: &Shared, cf_for: F) -> Result<TrialOutcome, HarnessError>
where
    F: Fn(FreqGrid) -> Result<Option<CfEstimate>, AdaptiveError>,
{
    let cfg = sh.ctx.config;
    let settings = &cfg.estimator;
    let rungs = estimate_ladder(&cfg.ladder, settings, &cf_for)?;
    let (trace, fallback) = aggregate_or_fallback(&cfg.ladder, &rungs, sh.ctx.cv, triangle_kernel)?;
    let used: Vec<_> = trace.rows.iter().filter(|r| r.admissible).collect();
    let sigma2 = used.last().map_or(f64::NAN, |r| r.sigma2);

    let regime = cfg.regime()?;
    let cutoff_fixed = theoretical_cutoff(sh.eps, &cfg.class()?, regime).ok();
    let alpha_fixed = match cutoff_fixed {
        Some(u) => fixed_estimate(u, settings, &cf_for)?,
        None => None,
    };

    let alpha_plain = match (settings.xi, sh.ctx.cv_plain) {
        (Some(_), Some(cv)) if cfg.compare_plain => {
            let plain = EstimatorSettings { xi: None, ..settings.clone() };
            let rungs = estimate_ladder(&cfg.ladder, &plain, &cf_for)?;
            Some(aggregate_or_fallback(&cfg.ladder, &rungs, cv, triangle_kernel)?.0.final_estimate())
        }
        _ => None,
    };

    let record = TrialRecord {
        trial: sh.trial,
        seed: sh.seed,
        n: sh.n,
        family: cfg.model.family,
        true_alpha: cfg.model.true_fractional_order(),
        alpha_hat: trace.final_estimate(),
        alpha_fixed,
        sigma2,
        regime,
        runtime_ms: cfg.record_runtime.then(|| sh.start.elapsed().as_secs_f64() * 1e3),
        measure: sh.measure,
        sigma_bar: sh.sigma_bar,
        xi: settings.xi,
        eps: sh.eps,
        cutoff_fixed,
        alpha_plain,
        rungs_used: used.len(),
        fallback,
    };
    Ok(TrialOutcome { record, trace })
}

fn fixed_estimate<F>(cutoff: f64, settings: &EstimatorSettings, cf_for: &F) -> Result<Option<f64>, HarnessError>
where
    F: Fn(FreqGrid) -> Result<Option<CfEstimate>, AdaptiveError>,
{
    let grid = rung_grid(cutoff, settings)?;
    Ok(cf_for(grid)?
        .and_then(|cf| estimate_rung(&cf, cutoff, settings).ok())
        .map(|r| r.alpha)
        .filter(|a| a.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::CutoffLadder;
    use crate::harness::config::Mode;
    use crate::levy_models::ModelSpec;

    fn exact_config(alpha: f64) -> ExperimentConfig {
        let mut c: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "mode": "estimate-p",
            "model": {"family": "stable", "eta": 1.0, "alpha": alpha},
            "n": 100000,
            "dt": 1.0,
            "exact_cf": true
        }))
        .unwrap();
        c.ladder = CutoffLadder::geometric(4.0, 1.25, 6).unwrap();
        c
    }

    #[test]
    fn exact_cf_shortcut_recovers_alpha() {
        for alpha in [0.7, 1.2, 1.8] {
            let cfg = exact_config(alpha);
            cfg.validate().unwrap();
            let data = DataSource::prepare(&cfg).unwrap();
            assert!(matches!(data, DataSource::Exact));
            let cv = CriticalValues::new(vec![1.0; 5]).unwrap();
            let ctx = TrialContext { config: &cfg, data: &data, cv: &cv, cv_plain: None };
            let g = cfg.groups().unwrap()[0];
            let out = pipeline_p(&ctx, &g, 0, 1).unwrap();
            assert!((out.record.alpha_hat - alpha).abs() < 1e-6, "{:?}", out.record);
            // at alpha = 1.8 the rule's cut-off lies where |phi|^2 is clipped
            if alpha < 1.5 {
                assert!((out.record.alpha_fixed.unwrap() - alpha).abs() < 1e-6);
            }
            assert!(!out.record.fallback);
            assert_eq!(out.trace.rows.len(), 6);
        }
    }

    #[test]
    fn wrong_source_is_a_config_error() {
        let cfg = exact_config(1.0);
        let cv = CriticalValues::new(vec![1.0; 5]).unwrap();
        let data = DataSource::Quotes(OptionQuoteSet {
            y: vec![0.0, 1.0],
            clean: vec![0.1, 0.1],
            noisy: vec![0.1, 0.1],
            sigma: vec![0.0, 0.0],
            deltas: vec![1.0, 1.0],
            seed: 0,
            weighted: false,
        });
        let ctx = TrialContext { config: &cfg, data: &data, cv: &cv, cv_plain: None };
        let g = Group { index: 0, n: 10, sigma_bar: None };
        assert!(matches!(pipeline_p(&ctx, &g, 0, 0), Err(HarnessError::Config(_))));
    }

    #[test]
    fn increments_file_round_trip() {
        let s = crate::levy_models::sample_increments(&ModelSpec::stable(1.0, 1.5), 0.5, 20, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inc.csv");
        std::fs::write(&path, increments_csv(&s)).unwrap();
        let back = read_increments(&path, 0.5).unwrap();
        assert_eq!(back.values, s.values);
        let mut cfg = exact_config(1.5);
        cfg.mode = Some(Mode::EstimateP);
        cfg.exact_cf = false;
        cfg.data = Some(path);
        assert!(matches!(DataSource::prepare(&cfg).unwrap(), DataSource::Sample(_)));
    }
}
