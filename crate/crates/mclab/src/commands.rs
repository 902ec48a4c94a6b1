use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mclab_core::experiment::{
    aggregate, build_schedule, observations, to_csv, ExperimentConfig, Response, SessionStore, TrialRecord,
};
use mclab_core::inference::{
    fit_psychometric, inv_log_speed, log_speed, psi, recover_prior_likelihood, simulate_observer, AStar, ObserverModel,
    PsychometricFit, Recovery,
};
use mclab_core::model::{MCParams, SpeedProfile};
use mclab_core::synth::io::{write_png_dir, write_raw, Format};
use mclab_core::synth::{analytic_spectrum, band_relative_l2, GridSpec, PeriodogramAccumulator, SynthState};
use mclab_core::validation::{self, Faults, Level, ValidationReport};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, write_json};

/// Input of `synth` and `spectrum`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    pub params: MCParams,
    pub grid: GridSpec,
}

pub struct SynthSummary {
    pub sigma_i: f64,
    pub n_frames: usize,
    pub seconds: f64,
}

/// Streams `n_frames` through the recursion and writes them to `out`.
pub fn synth(config: &StimulusConfig, out: &Path, format: Format, n_frames: usize, seed: u64) -> Result<SynthSummary> {
    if n_frames == 0 {
        bail!("--n-frames must be at least 1");
    }
    let start = Instant::now();
    let mut state = SynthState::new(&config.params, &config.grid, seed)?;
    let stack = state.render(n_frames)?;
    let seconds = start.elapsed().as_secs_f64();
    match format {
        Format::Png => write_png_dir(&stack, out)?,
        Format::Mcraw => {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_raw(&stack, out)?
        }
    }
    Ok(SynthSummary {
        sigma_i: stack.sigma_i,
        n_frames,
        seconds,
    })
}

#[derive(Debug, Serialize)]
pub struct SpectrumReport {
    pub grid: GridSpec,
    pub n_frames: usize,
    pub seeds: usize,
    /// Relative L2 between the ensemble periodogram and the analytic
    /// spectrum on the band above 1% of the peak.
    pub band_relative_l2: f64,
    /// Spectra summed over temporal frequency, `[ky][kx]` in FFT order.
    pub analytic_spatial: Vec<Vec<f64>>,
    pub empirical_spatial: Vec<Vec<f64>>,
}

fn spatial_marginal(spec: &[f64], grid: &GridSpec, nt: usize) -> Vec<Vec<f64>> {
    let plane = grid.n_pixels();
    let mut out = vec![vec![0.0; grid.nx]; grid.ny];
    for t in 0..nt {
        for (i, v) in spec[t * plane..(t + 1) * plane].iter().enumerate() {
            out[i / grid.nx][i % grid.nx] += v;
        }
    }
    out
}

pub fn spectrum(config: &StimulusConfig, n_frames: usize, seeds: usize, seed: u64) -> Result<SpectrumReport> {
    if seeds == 0 || n_frames == 0 {
        bail!("--seeds and --n-frames must be at least 1");
    }
    let g = config.grid;
    let analytic = analytic_spectrum(&config.params, &g, n_frames, SpeedProfile::SpdeExact);
    let mut acc = PeriodogramAccumulator::new(&g, n_frames);
    for k in 0..seeds as u64 {
        acc.add(&SynthState::new(&config.params, &g, seed.wrapping_add(k))?.render(n_frames)?)?;
    }
    let empirical = acc.finish()?;
    Ok(SpectrumReport {
        grid: g,
        n_frames,
        seeds,
        band_relative_l2: band_relative_l2(&empirical, &analytic, 0.01),
        analytic_spatial: spatial_marginal(&analytic, &g, n_frames),
        empirical_spatial: spatial_marginal(&empirical, &g, n_frames),
    })
}

pub fn validate(level: Level, only: &[String], faults: Faults) -> Result<ValidationReport> {
    for id in only {
        if !validation::CRITERIA.contains(&id.as_str()) {
            bail!("unknown criterion {id}; known: {}", validation::CRITERIA.join(", "));
        }
    }
    if only.is_empty() {
        return Ok(validation::run(level, faults));
    }
    let criteria: Vec<_> = only.iter().map(|id| validation::run_criterion(id, level, faults)).collect();
    Ok(ValidationReport {
        level,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

/// Input of `simulate`: the protocol and the simulated observer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: ExperimentConfig,
    pub observer: ObserverModel,
    pub sessions: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            observer: validation::reference_observer(),
            sessions: 4,
        }
    }
}

fn mix(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer: decorrelates consecutive session indices
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs complete simulated sessions and writes one JSONL file each.
pub fn simulate(config: &SimulateConfig, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for k in 0..config.sessions as u64 {
        let schedule_seed = mix(seed, 2 * k);
        let id = format!("sim-{seed}-{k:03}");
        let mut store = SessionStore::new(id.clone(), config.experiment.clone(), schedule_seed, None)?;
        let specs: Vec<_> = build_schedule(&config.experiment, schedule_seed)?.iter().map(|t| t.spec()).collect();
        let choices = simulate_observer(&specs, &config.observer, mix(seed, 2 * k + 1))?;
        for (i, choice) in choices.into_iter().enumerate() {
            store.record(
                i,
                Response {
                    response: choice,
                    response_time_ms: 0.0,
                    timing_flagged: false,
                    presentation_ms: None,
                },
            )?;
        }
        let path = out_dir.join(format!("{id}.jsonl"));
        store.persist(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AStarArg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for AStarArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Self::Value(v)),
            _ => Err(format!("expected AUTO or a number, got {s:?}")),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GroupReport {
    pub u_star: f64,
    pub t_star: f64,
    pub z_star: f64,
    pub sessions: Vec<String>,
    pub n_trials: usize,
    pub cells_csv: String,
    pub curves_csv: String,
    pub fits: Vec<PsychometricFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<Recovery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub groups: Vec<GroupReport>,
}

struct Group {
    config: ExperimentConfig,
    sessions: Vec<String>,
    trials: Vec<TrialRecord>,
}

/// Fitted curves on a dense log-speed grid, for external plotting.
fn curves_csv(config: &ExperimentConfig, fits: &[PsychometricFit]) -> Result<String> {
    let lo = log_speed(config.u_star + config.delta_u.iter().copied().fold(f64::INFINITY, f64::min))?;
    let hi = log_speed(config.u_star + config.delta_u.iter().copied().fold(f64::NEG_INFINITY, f64::max))?;
    let reference = log_speed(config.u_star)?;
    let mut out = String::from("z,x,u,p\n");
    for f in fits {
        for i in 0..=100 {
            let ls = lo + (hi - lo) * i as f64 / 100.0;
            let x = ls - reference;
            let p = psi((x - f.mu) / f.lam);
            out.push_str(&format!("{},{},{},{}\n", f.condition.z, x, inv_log_speed(ls), p));
        }
    }
    Ok(out)
}

/// Aggregates sessions by reference condition `(u★, t★, z★)`, fits each
/// frequency curve and inverts them for the observer model.
pub fn fit(pattern: &str, a_star: AStarArg, out_dir: &Path) -> Result<FitReport> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob {pattern:?}"))?
        .collect::<std::result::Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        bail!("no session files match {pattern:?}");
    }
    let mut groups: BTreeMap<(u64, u64, u64), Group> = BTreeMap::new();
    for p in &paths {
        let store = SessionStore::load(p).with_context(|| format!("loading {}", p.display()))?;
        let c = store.config();
        let key = (c.u_star.to_bits(), c.t_star.to_bits(), c.z_star.to_bits());
        let g = groups.entry(key).or_insert_with(|| Group {
            config: c.clone(),
            sessions: Vec::new(),
            trials: Vec::new(),
        });
        g.sessions.push(store.session_id().to_string());
        g.trials.extend_from_slice(store.trials());
    }
    fs::create_dir_all(out_dir)?;
    let a_star = match a_star {
        AStarArg::Auto => AStar::Auto,
        AStarArg::Value(v) => AStar::Value(v),
    };
    let mut reports = Vec::new();
    for (k, g) in groups.into_values().enumerate() {
        let cells = aggregate(&g.trials);
        let cells_name = format!("cells_{k}.csv");
        fs::write(out_dir.join(&cells_name), to_csv(&cells))?;
        let mut fits = Vec::new();
        let mut error = None;
        for (cond, obs) in observations(&g.config, &cells)? {
            match fit_psychometric(cond, &obs) {
                Ok(f) => fits.push(f),
                Err(e) => error = Some(format!("z = {}: {e}", cond.z)),
            }
        }
        let recovery = match recover_prior_likelihood(&fits, a_star) {
            Ok(r) => Some(r),
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
                None
            }
        };
        let curves_name = format!("curves_{k}.csv");
        fs::write(out_dir.join(&curves_name), curves_csv(&g.config, &fits)?)?;
        reports.push(GroupReport {
            u_star: g.config.u_star,
            t_star: g.config.t_star,
            z_star: g.config.z_star,
            sessions: g.sessions,
            n_trials: g.trials.len(),
            cells_csv: cells_name,
            curves_csv: curves_name,
            fits,
            recovery,
            error,
        });
    }
    let report = FitReport { groups: reports };
    write_json(&out_dir.join("fit.json"), &report)?;
    Ok(report)
}

pub fn load_stimulus_config(path: &Path) -> Result<StimulusConfig> {
    let cfg: StimulusConfig = read_json(path)?;
    cfg.grid.validate()?;
    Ok(cfg)
}
