//! Seeded validation of the statistical claims behind merging and Pass@k,
//! plus a synthetic-trajectory generator that exercises the whole pipeline
//! with controllable noise.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, stream id)`,
//! so trials and checkpoints can be computed in parallel while reproducing
//! the single-threaded result bit for bit. The stream layout is part of the
//! golden-test contract: stream 0 carries the per-checkpoint parameter noise,
//! and checkpoint index t owns streams `1 + 4t .. 4 + 4t` (raw sampled, raw
//! greedy, merged sampled, merged greedy).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval_log::{Mode, OutcomeRecord};
use crate::passk::{
    exact_expectation, exact_variance, passk_problem, variance_delta, LatentSuccessModel,
};
use crate::stability::{kendall_tau_paper, TrajectorySeries};

/// Deviation bound for the unbiasedness validator.
pub const UNBIASEDNESS_TOLERANCE: f64 = 1e-12;

/// Independent ChaCha8 stream for one logical random source.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---------------------------------------------------------------------------
// Parameter-noise reduction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamNoiseConfig {
    pub dim: usize,
    /// Per-coordinate noise variance.
    pub sigma2: f64,
    /// Window size N.
    pub window: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ParamNoiseConfig {
    fn default() -> Self {
        ParamNoiseConfig {
            dim: 1000,
            sigma2: 1.0,
            window: 5,
            trials: 200,
            seed: 0,
        }
    }
}

impl ParamNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.trials == 0 {
            return Err(Error::Domain(
                "dim, window, and trials must all be at least 1".into(),
            ));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Domain(format!(
                "sigma2 must be a positive number, got {}",
                self.sigma2
            )));
        }
        if self.dim * self.trials < 2 {
            return Err(Error::Domain(
                "dim * trials must be at least 2 to estimate a variance".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReductionReport {
    pub config: ParamNoiseConfig,
    pub empirical_var: f64,
    pub predicted_var: f64,
    /// Signed (empirical - predicted) / predicted.
    pub relative_error: f64,
}

/// Sum and sum of squares of one trial's window-averaged coordinates.
fn noise_trial_partial(config: &ParamNoiseConfig, trial: u64) -> (f64, f64) {
    let sd = config.sigma2.sqrt();
    let mut rng = stream_rng(config.seed, trial);
    let mut acc = vec![0.0f64; config.dim];
    for _ in 0..config.window {
        for slot in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *slot += sd * z;
        }
    }
    let inv = config.window as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for v in acc {
        let avg = v / inv;
        sum += avg;
        sumsq += avg * avg;
    }
    (sum, sumsq)
}

/// Draws `trials` windows of N i.i.d. Gaussian vectors, averages each window,
/// and pools the per-coordinate empirical variance over all dim x trials
/// averaged coordinates. The prediction is sigma2 / N.
pub fn validate_noise_reduction(config: &ParamNoiseConfig) -> Result<NoiseReductionReport> {
    config.validate()?;
    let partials: Vec<(f64, f64)> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| noise_trial_partial(config, t))
        .collect();
    // Combine in trial order so the parallel path matches the sequential one.
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (s, q) in partials {
        sum += s;
        sumsq += q;
    }
    let count = (config.trials * config.dim) as f64;
    let mean = sum / count;
    let empirical_var = (sumsq - count * mean * mean) / (count - 1.0);
    let predicted_var = config.sigma2 / config.window as f64;
    Ok(NoiseReductionReport {
        config: *config,
        empirical_var,
        predicted_var,
        relative_error: (empirical_var - predicted_var) / predicted_var,
    })
}

// ---------------------------------------------------------------------------
// Estimator validation grids
// ---------------------------------------------------------------------------

/// Cross product of the given parameters; combinations with k > n are
/// omitted since the estimator is undefined there.
pub fn model_grid(ps: &[f64], ns: &[u64], ks: &[u64]) -> Result<Vec<LatentSuccessModel>> {
    let mut grid = Vec::new();
    for &p in ps {
        for &n in ns {
            for &k in ks {
                if k <= n {
                    grid.push(LatentSuccessModel::new(p, n, k)?);
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessRow {
    pub p: f64,
    pub n: u64,
    pub k: u64,
    pub expectation: f64,
    pub target: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessReport {
    pub rows: Vec<UnbiasednessRow>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the enumerated expectation of the estimator against the latent
/// `1 - (1-p)^k` on every grid point.
pub fn validate_passk_unbiased(grid: &[LatentSuccessModel]) -> Result<UnbiasednessReport> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut max_deviation = 0.0f64;
    for model in grid {
        let expectation = exact_expectation(model)?;
        let target = model.latent_passk();
        let deviation = (expectation - target).abs();
        max_deviation = max_deviation.max(deviation);
        rows.push(UnbiasednessRow {
            p: model.p(),
            n: model.n(),
            k: model.k(),
            expectation,
            target,
            deviation,
        });
    }
    Ok(UnbiasednessReport {
        rows,
        max_deviation,
        tolerance: UNBIASEDNESS_TOLERANCE,
        pass: max_deviation <= UNBIASEDNESS_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaAccuracyRow {
    pub n: u64,
    pub p: f64,
    pub k: u64,
    pub exact_variance: f64,
    pub delta_variance: f64,
    pub relative_error: f64,
    pub flagged: bool,
}

/// Tabulates exact (enumerated) variance against the Delta approximation,
/// flagging rows whose relative error exceeds `tolerance`.
pub fn delta_accuracy_report(
    grid: &[LatentSuccessModel],
    tolerance: f64,
) -> Result<Vec<DeltaAccuracyRow>> {
    if !(tolerance >= 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for model in grid {
        let exact = exact_variance(model)?;
        let delta = variance_delta(model.n(), model.p(), model.k())?;
        let relative_error = if exact == 0.0 {
            if delta == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (exact - delta).abs() / exact
        };
        rows.push(DeltaAccuracyRow {
            n: model.n(),
            p: model.p(),
            k: model.k(),
            exact_variance: exact,
            delta_variance: delta,
            relative_error,
            flagged: relative_error > tolerance,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Synthetic runs
// ---------------------------------------------------------------------------

pub const PROTOCOL_RAW_GREEDY: &str = "raw-greedy";
pub const PROTOCOL_RAW_PASSK: &str = "raw-passk";
pub const PROTOCOL_MERGED_GREEDY: &str = "merged-greedy";
pub const PROTOCOL_MERGED_PASSK: &str = "merged-passk";

pub const BENCH_RAW: &str = "synthetic-raw";
pub const BENCH_RAW_GREEDY: &str = "synthetic-raw-greedy";
pub const BENCH_MERGED: &str = "synthetic-merged";
pub const BENCH_MERGED_GREEDY: &str = "synthetic-merged-greedy";

/// Saturating capability curve `f(t) = a * (1 - exp(-t / tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapabilityCurve {
    pub asymptote: f64,
    pub time_constant: f64,
}

impl Default for CapabilityCurve {
    fn default() -> Self {
        CapabilityCurve {
            asymptote: 0.15,
            time_constant: 15.0,
        }
    }
}

impl CapabilityCurve {
    pub fn at(&self, step: u64) -> f64 {
        self.asymptote * (1.0 - (-(step as f64) / self.time_constant).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticRunConfig {
    pub steps: u64,
    pub capability_curve: CapabilityCurve,
    /// Standard deviation of the per-checkpoint perturbation applied to the
    /// latent success probability.
    pub param_noise_sd: f64,
    /// Problems per benchmark (M).
    pub problems: u64,
    /// Samples per problem (n).
    pub samples_per_problem: u64,
    /// Window size for the score-level merging analog.
    pub merge_window: usize,
    pub seed: u64,
}

impl Default for SyntheticRunConfig {
    fn default() -> Self {
        SyntheticRunConfig {
            steps: 54,
            capability_curve: CapabilityCurve::default(),
            param_noise_sd: 0.05,
            problems: 200,
            samples_per_problem: 16,
            merge_window: 5,
            seed: 0,
        }
    }
}

impl SyntheticRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Domain("steps must be at least 2".into()));
        }
        if self.problems == 0 || self.samples_per_problem == 0 || self.merge_window == 0 {
            return Err(Error::Domain(
                "problems, samples_per_problem, and merge_window must be at least 1".into(),
            ));
        }
        let curve = &self.capability_curve;
        if !(curve.asymptote > 0.0 && curve.asymptote <= 1.0) {
            return Err(Error::Domain(format!(
                "capability asymptote must lie in (0, 1], got {}",
                curve.asymptote
            )));
        }
        if !(curve.time_constant > 0.0) {
            return Err(Error::Domain(format!(
                "capability time constant must be positive, got {}",
                curve.time_constant
            )));
        }
        if !(self.param_noise_sd >= 0.0) || !self.param_noise_sd.is_finite() {
            return Err(Error::Domain(format!(
                "param_noise_sd must be a non-negative number, got {}",
                self.param_noise_sd
            )));
        }
        Ok(())
    }
}

/// Latent state of one synthetic checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCheckpoint {
    pub step: u64,
    /// Noise-free capability f(t).
    pub latent: f64,
    /// clamp(f(t) + eta_t, 0, 1).
    pub p_raw: f64,
    /// clamp(f(t) + window-mean of eta, 0, 1).
    pub p_merged: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct CheckpointSamples {
    raw_sampled: Vec<Vec<bool>>,
    raw_greedy: Vec<bool>,
    merged_sampled: Vec<Vec<bool>>,
    merged_greedy: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSeries {
    pub protocol: String,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub checkpoints: Vec<SimCheckpoint>,
    pub series: Vec<ProtocolSeries>,
    samples: Vec<CheckpointSamples>,
    samples_per_problem: u64,
}

impl SimulatedRun {
    pub fn series_for(&self, protocol: &str) -> Option<&ProtocolSeries> {
        self.series.iter().find(|s| s.protocol == protocol)
    }

    /// Paper-variant Kendall tau of one protocol's score trajectory.
    pub fn protocol_tau(&self, protocol: &str) -> Result<f64> {
        let series = self
            .series_for(protocol)
            .ok_or_else(|| Error::Domain(format!("unknown protocol {protocol:?}")))?;
        Ok(kendall_tau_paper(&TrajectorySeries::new(
            series.points.clone(),
        )?))
    }

    /// Full eval log: two sampled and two greedy benchmarks per checkpoint.
    pub fn to_records(&self) -> Vec<OutcomeRecord> {
        let mut records = Vec::new();
        for (ckpt, samples) in self.checkpoints.iter().zip(&self.samples) {
            let id = checkpoint_id(ckpt.step);
            let mut push_sampled = |benchmark: &str, outcomes: &[Vec<bool>]| {
                for (j, outs) in outcomes.iter().enumerate() {
                    records.push(OutcomeRecord {
                        checkpoint_id: id.clone(),
                        step: ckpt.step,
                        benchmark: benchmark.to_string(),
                        problem_id: problem_id(j),
                        mode: Mode::Sampled,
                        outcomes: outs.clone(),
                    });
                }
            };
            push_sampled(BENCH_RAW, &samples.raw_sampled);
            push_sampled(BENCH_MERGED, &samples.merged_sampled);
            let mut push_greedy = |benchmark: &str, outcomes: &[bool]| {
                for (j, &out) in outcomes.iter().enumerate() {
                    records.push(OutcomeRecord {
                        checkpoint_id: id.clone(),
                        step: ckpt.step,
                        benchmark: benchmark.to_string(),
                        problem_id: problem_id(j),
                        mode: Mode::Greedy,
                        outcomes: vec![out],
                    });
                }
            };
            push_greedy(BENCH_RAW_GREEDY, &samples.raw_greedy);
            push_greedy(BENCH_MERGED_GREEDY, &samples.merged_greedy);
        }
        records
    }

    pub fn to_jsonl(&self) -> String {
        crate::eval_log::to_jsonl(&self.to_records())
    }
}

fn checkpoint_id(step: u64) -> String {
    format!("ckpt-{step:05}")
}

fn problem_id(index: usize) -> String {
    format!("p{index:06}")
}

fn sample_checkpoint(
    config: &SyntheticRunConfig,
    index: u64,
    p_raw: f64,
    p_merged: f64,
) -> CheckpointSamples {
    let m = config.problems as usize;
    let n = config.samples_per_problem as usize;
    let base = 1 + 4 * index;
    let draw = |stream: u64, p: f64, per_problem: usize| -> Vec<Vec<bool>> {
        let mut rng = stream_rng(config.seed, stream);
        (0..m)
            .map(|_| (0..per_problem).map(|_| rng.random::<f64>() < p).collect())
            .collect()
    };
    CheckpointSamples {
        raw_sampled: draw(base, p_raw, n),
        raw_greedy: draw(base + 1, p_raw, 1)
            .into_iter()
            .map(|v| v[0])
            .collect(),
        merged_sampled: draw(base + 2, p_merged, n),
        merged_greedy: draw(base + 3, p_merged, 1)
            .into_iter()
            .map(|v| v[0])
            .collect(),
    }
}

fn greedy_score(outcomes: &[bool]) -> f64 {
    outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64
}

/// Mean per-problem Pass@k at k = n; summation runs in problem order, which
/// matches the problem-id-sorted order used by benchmark aggregation.
fn passk_score(sampled: &[Vec<bool>], k: u64) -> f64 {
    let sum: f64 = sampled
        .iter()
        .map(|outs| {
            let s = outs.iter().filter(|&&b| b).count() as u64;
            passk_problem(outs.len() as u64, s, k).expect("valid sample counts")
        })
        .sum();
    sum / sampled.len() as f64
}

/// Generates a synthetic trajectory: a rising latent capability, a raw
/// variant perturbed by fresh noise at every checkpoint, and a merged variant
/// whose noise is replaced by its trailing window mean. Each variant is then
/// measured by a single-sample (greedy-style) protocol and a multi-sample
/// Pass@k protocol. Deterministic given (config, seed).
pub fn simulate_run(config: &SyntheticRunConfig) -> Result<SimulatedRun> {
    config.validate()?;
    let steps = config.steps as usize;

    let mut noise_rng = stream_rng(config.seed, 0);
    let eta: Vec<f64> = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            config.param_noise_sd * z
        })
        .collect();

    let window = config.merge_window;
    let checkpoints: Vec<SimCheckpoint> = (0..steps)
        .map(|i| {
            let step = (i + 1) as u64;
            let latent = config.capability_curve.at(step);
            let lo = i + 1 - window.min(i + 1);
            let tail = &eta[lo..=i];
            let eta_bar = tail.iter().sum::<f64>() / tail.len() as f64;
            SimCheckpoint {
                step,
                latent,
                p_raw: (latent + eta[i]).clamp(0.0, 1.0),
                p_merged: (latent + eta_bar).clamp(0.0, 1.0),
            }
        })
        .collect();

    let samples: Vec<CheckpointSamples> = checkpoints
        .par_iter()
        .enumerate()
        .map(|(i, ckpt)| sample_checkpoint(config, i as u64, ckpt.p_raw, ckpt.p_merged))
        .collect();

    let k = config.samples_per_problem;
    let mut series = vec![
        ProtocolSeries {
            protocol: PROTOCOL_RAW_GREEDY.to_string(),
            points: Vec::with_capacity(steps),
        },
        ProtocolSeries {
            protocol: PROTOCOL_RAW_PASSK.to_string(),
            points: Vec::with_capacity(steps),
        },
        ProtocolSeries {
            protocol: PROTOCOL_MERGED_GREEDY.to_string(),
            points: Vec::with_capacity(steps),
        },
        ProtocolSeries {
            protocol: PROTOCOL_MERGED_PASSK.to_string(),
            points: Vec::with_capacity(steps),
        },
    ];
    for (ckpt, s) in checkpoints.iter().zip(&samples) {
        series[0].points.push((ckpt.step, greedy_score(&s.raw_greedy)));
        series[1]
            .points
            .push((ckpt.step, passk_score(&s.raw_sampled, k)));
        series[2]
            .points
            .push((ckpt.step, greedy_score(&s.merged_greedy)));
        series[3]
            .points
            .push((ckpt.step, passk_score(&s.merged_sampled, k)));
    }

    Ok(SimulatedRun {
        checkpoints,
        series,
        samples,
        samples_per_problem: config.samples_per_problem,
    })
}
