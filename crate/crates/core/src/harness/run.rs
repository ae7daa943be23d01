use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Group, Mode};
use super::pipeline::{increments_csv, pipeline_p, pipeline_q, DataSource, TrialContext};
use super::record::{trials_csv, TrialRecord};
use super::HarnessError;
use crate::adaptive::{calibrate_critical_values, CriticalValues, EstimatorSettings, NullDesign};
use crate::ecf::Measure;
use crate::levy_models::IncrementSampler;
use crate::option_market::{synthesize_quotes, FourierPricer};
use crate::rng::derive_seed;

const CV_STREAM: u64 = 0x6376;
const CV_PLAIN_STREAM: u64 = 0x6376_706c;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub out_dir: PathBuf,
    /// Files written, relative to `out_dir`.
    pub files: Vec<String>,
    pub records: Vec<TrialRecord>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    levyspec_version: &'static str,
    mode: Mode,
    measure: Measure,
    config: &'a ExperimentConfig,
    threads: usize,
    groups: Vec<GroupManifest>,
    outputs: &'a [String],
    trials_written: usize,
    wall_time_ms: f64,
}

#[derive(Serialize)]
struct GroupManifest {
    #[serde(flatten)]
    group: Group,
    null_design: Option<NullDesign>,
    critical_values: Option<CriticalValues>,
    critical_values_plain: Option<CriticalValues>,
}

#[derive(Serialize)]
struct ErrorReport {
    kind: &'static str,
    message: String,
    group: Option<usize>,
    trial: Option<usize>,
}

/// Runs one configured experiment, writing its artifacts into `out`.
/// Any failure also leaves `errors.json` there.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    remove_if_present(&out.join("errors.json"))?;
    let result = execute(config, out);
    if let Err(e) = &result {
        write_error_report(out, e);
    }
    result
}

/// Writes `errors.json` for an error raised outside [`run`], e.g. while
/// loading the config. Failures to write are only logged.
pub fn write_error_report(out: &Path, err: &HarnessError) {
    let (group, trial) = match err {
        HarnessError::Trial { group, trial, .. } => (Some(*group), Some(*trial)),
        _ => (None, None),
    };
    let report = ErrorReport { kind: err.kind(), message: err.to_string(), group, trial };
    let written = std::fs::create_dir_all(out)
        .map_err(|e| e.to_string())
        .and_then(|_| serde_json::to_string_pretty(&report).map_err(|e| e.to_string()))
        .and_then(|text| std::fs::write(out.join("errors.json"), text + "\n").map_err(|e| e.to_string()));
    if let Err(e) = written {
        log::error!("could not write errors.json: {e}");
    }
}

fn execute(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let mode = config.mode()?;
    let mut files = Vec::new();
    let (groups, records) = match mode {
        Mode::Simulate => (simulate(config, out, &mut files)?, Vec::new()),
        Mode::CalibrateCv => (calibrate_cv(config, out, &mut files)?, Vec::new()),
        Mode::EstimateP | Mode::CalibrateQ | Mode::McStudy => trials(config, out, &mut files)?,
    };
    files.push("manifest.json".into());
    let manifest = Manifest {
        levyspec_version: env!("CARGO_PKG_VERSION"),
        mode,
        measure: config.measure()?,
        config,
        threads: rayon::current_num_threads(),
        groups,
        outputs: &files,
        trials_written: records.len(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    write(out, "manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunSummary { mode, out_dir: out.to_path_buf(), files, records })
}

fn write(out: &Path, name: &str, contents: String) -> Result<(), HarnessError> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(path, e))
}

fn remove_if_present(path: &Path) -> Result<(), HarnessError> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(HarnessError::io(path, e)),
        _ => Ok(()),
    }
}

/// Critical values for the configured estimator and, when the
/// diffusion-robust variant is compared with the plain one, for the plain
/// estimator too. Loaded from `critical_values` when given, otherwise
/// calibrated on the null design of the group.
pub fn critical_values_for(
    config: &ExperimentConfig,
    design: NullDesign,
) -> Result<(CriticalValues, Option<CriticalValues>), HarnessError> {
    let calibrate = |settings: &EstimatorSettings, stream: u64| {
        log::info!("calibrating critical values on {design:?} with M = {}", config.replications);
        calibrate_critical_values(
            &config.null_model,
            design,
            &config.ladder,
            settings,
            config.r,
            config.gamma,
            config.cv_margin,
            config.replications,
            derive_seed(config.seed, stream, design.n as u64),
        )
    };
    let main = match &config.critical_values {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let cv: CriticalValues = serde_json::from_str(&text)?;
            if cv.values.len() + 1 != config.ladder.len() {
                return Err(HarnessError::Config(format!(
                    "{} holds {} critical values for a ladder of {} rungs",
                    path.display(),
                    cv.values.len(),
                    config.ladder.len()
                )));
            }
            cv
        }
        None => calibrate(&config.estimator, CV_STREAM)?,
    };
    let plain = match config.estimator.xi {
        Some(_) if config.compare_plain => {
            let settings = EstimatorSettings { xi: None, ..config.estimator.clone() };
            Some(calibrate(&settings, CV_PLAIN_STREAM)?)
        }
        _ => None,
    };
    Ok((main, plain))
}

type CvCache = Vec<(NullDesign, CriticalValues, Option<CriticalValues>)>;

fn cached_critical_values(
    config: &ExperimentConfig,
    design: NullDesign,
    cache: &mut CvCache,
) -> Result<(CriticalValues, Option<CriticalValues>), HarnessError> {
    if let Some((_, cv, plain)) = cache.iter().find(|(d, _, _)| *d == design) {
        return Ok((cv.clone(), plain.clone()));
    }
    let (cv, plain) = critical_values_for(config, design)?;
    cache.push((design, cv.clone(), plain.clone()));
    Ok((cv, plain))
}

fn trials(
    config: &ExperimentConfig,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<(Vec<GroupManifest>, Vec<TrialRecord>), HarnessError> {
    let measure = config.measure()?;
    let mode = config.mode()?;
    for stale in ["trials.csv", "trials.csv.partial", "trace.csv"] {
        remove_if_present(&out.join(stale))?;
    }
    let groups = config.groups()?;
    let single = mode != Mode::McStudy && config.trials == 1;
    let data = if config.trials > 0 { Some(DataSource::prepare(config)?) } else { None };
    let mut cache = CvCache::new();
    let mut manifests = Vec::new();
    let mut records: Vec<TrialRecord> = Vec::new();
    let mut traces = Vec::new();

    let fail = |records: &[TrialRecord], err: HarnessError| -> HarnessError {
        match trials_csv(records) {
            Ok(text) => {
                if let Err(e) = write(out, "trials.csv.partial", text) {
                    log::error!("could not write partial results: {e}");
                }
            }
            Err(e) => log::error!("could not serialize partial results: {e}"),
        }
        err
    };

    for group in &groups {
        let Some(data) = &data else {
            manifests.push(GroupManifest {
                group: *group,
                null_design: None,
                critical_values: None,
                critical_values_plain: None,
            });
            continue;
        };
        let design = config.null_design_for(group)?;
        let (cv, plain) = cached_critical_values(config, design, &mut cache).map_err(|e| fail(&records, e))?;
        let ctx = TrialContext { config, data, cv: &cv, cv_plain: plain.as_ref() };
        let outcomes: Vec<_> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(config.seed, group.index as u64, t as u64);
                let res = match measure {
                    Measure::P => pipeline_p(&ctx, group, t, seed),
                    Measure::Q => pipeline_q(&ctx, group, t, seed),
                };
                res.map_err(|e| HarnessError::Trial { group: group.index, trial: t, source: Box::new(e) })
            })
            .collect();
        let mut first_error = None;
        for (t, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(o) => {
                    if single {
                        traces.push(("trace.csv".to_string(), o.trace.to_csv()?));
                    } else if config.write_traces {
                        traces.push((format!("traces/g{}_t{t:04}.csv", group.index), o.trace.to_csv()?));
                    }
                    records.push(o.record);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(fail(&records, e));
        }
        manifests.push(GroupManifest {
            group: *group,
            null_design: Some(design),
            critical_values: Some(cv),
            critical_values_plain: plain,
        });
    }

    write(out, "trials.csv", trials_csv(&records)?)?;
    files.push("trials.csv".into());
    for (name, text) in traces {
        write(out, &name, text)?;
        files.push(name);
    }
    Ok((manifests, records))
}

fn simulate(
    config: &ExperimentConfig,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Vec<GroupManifest>, HarnessError> {
    let group = config.groups()?[0];
    let name =
        |stem: &str, t: usize| if config.trials == 1 { format!("{stem}.csv") } else { format!("{stem}_{t:04}.csv") };
    match config.measure()? {
        Measure::P => {
            let dt = config.dt()?;
            let sampler = IncrementSampler::new(&config.model, dt)?;
            for t in 0..config.trials {
                let sample = sampler.draw(dt, group.n, derive_seed(config.seed, 0, t as u64))?;
                let file = name("increments", t);
                write(out, &file, increments_csv(&sample))?;
                files.push(file);
            }
        }
        Measure::Q => {
            let market = config.market()?;
            let pricer = FourierPricer::new(&config.pricing_model()?, market.maturity)?;
            for t in 0..config.trials {
                let mut m = market.clone();
                m.seed = derive_seed(config.seed, 0, t as u64);
                let file = name("quotes", t);
                write(out, &file, synthesize_quotes(&m, &pricer)?.to_csv()?)?;
                files.push(file);
            }
        }
    }
    Ok(vec![GroupManifest { group, null_design: None, critical_values: None, critical_values_plain: None }])
}

fn calibrate_cv(
    config: &ExperimentConfig,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Vec<GroupManifest>, HarnessError> {
    let group = config.groups()?[0];
    let design = config.null_design_for(&group)?;
    let (cv, plain) = critical_values_for(config, design)?;
    write(out, "critical_values.json", serde_json::to_string_pretty(&cv)? + "\n")?;
    files.push("critical_values.json".into());
    if let Some(p) = &plain {
        write(out, "critical_values_plain.json", serde_json::to_string_pretty(p)? + "\n")?;
        files.push("critical_values_plain.json".into());
    }
    Ok(vec![GroupManifest {
        group,
        null_design: Some(design),
        critical_values: Some(cv),
        critical_values_plain: plain,
    }])
}
