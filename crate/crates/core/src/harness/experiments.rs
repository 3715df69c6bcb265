use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{bmsd, default_band, local_lrt, lrt_statistic, naive_smoothness, smsd};
use crate::error::Result;
use crate::graph::DisconnectionHypothesis;
use crate::greedy::{identify, GreedyConfig};
use crate::signal::{sample_covariance, ModelParams, SignalBatch};

use super::metrics::{fscore, fscore_jackknife_se, roc_curve, trial_counts, RocPoint};
use super::{DetectorKind, ExperimentConfig, Scenario};

/// Per-trial identification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Scores of one detector on the null and the disconnected data, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorScores {
    pub label: String,
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
}

/// ROC results at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RocTable {
    pub sigma_w2: f64,
    pub samples: usize,
    pub trials: usize,
    pub scores: Vec<DetectorScores>,
    pub curves: Vec<(String, Vec<RocPoint>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FscoreRow {
    pub method: String,
    pub filter: String,
    pub samples: usize,
    pub sigma_w2: f64,
    pub fscore: f64,
    pub se: f64,
    pub trials: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub method: String,
    pub n: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub trials: usize,
}

fn sweep_points(cfg: &ExperimentConfig) -> Vec<(f64, usize)> {
    cfg.sigma_w2
        .iter()
        .flat_map(|&sw| cfg.samples.iter().map(move |&m| (sw, m)))
        .collect()
}

fn detector_labels(kinds: &[DetectorKind], betas: &[usize]) -> Vec<(DetectorKind, Option<usize>, String)> {
    kinds
        .iter()
        .flat_map(|&k| match k {
            DetectorKind::LocalLrt => betas
                .iter()
                .map(|&b| (k, Some(b), format!("local-lrt-b{b}")))
                .collect::<Vec<_>>(),
            _ => vec![(k, None, k.name().to_string())],
        })
        .collect()
}

fn score_batch(
    detectors: &[(DetectorKind, Option<usize>, String)],
    sc: &Scenario,
    hyp: &DisconnectionHypothesis,
    params: &ModelParams,
    batch: &SignalBatch,
) -> Result<Vec<f64>> {
    let s = sample_covariance(batch);
    let band = default_band(sc.l0.n());
    let mut global = None;
    let mut out = Vec::with_capacity(detectors.len());
    for (kind, beta, _) in detectors {
        let mut lrt = || -> Result<_> {
            if global.is_none() {
                global = Some(lrt_statistic(&s, &sc.l0, &sc.l1, params)?);
            }
            Ok(global.expect("set above"))
        };
        let score = match kind {
            DetectorKind::Lrt => lrt()?.penalized,
            DetectorKind::LocalLrt => {
                let penalty = lrt()?.penalty;
                local_lrt(&s, &sc.l0, &sc.graph, hyp, beta.unwrap_or(1), params)? - penalty
            }
            DetectorKind::Naive => naive_smoothness(batch, &sc.l0)?,
            DetectorKind::Smsd => smsd(batch, &sc.l0, &sc.l1, band)?,
            DetectorKind::Bmsd => bmsd(batch, &sc.l0, band)?,
        };
        out.push(score);
    }
    Ok(out)
}

/// Binary-detection study: each trial draws a topology and a true
/// disconnection set, scores every detector on data from both hypotheses, and
/// sweeps the threshold.
pub fn run_roc(cfg: &ExperimentConfig) -> Result<Vec<RocTable>> {
    cfg.validate()?;
    let detectors = detector_labels(&cfg.detector_kinds()?, &cfg.betas);
    let points = sweep_points(cfg);
    let m_max = *cfg.samples.iter().max().expect("validated nonempty");

    // per_trial[t][point] = (h0 scores, h1 scores)
    let per_trial: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let sc = Scenario::new(cfg, trial)?;
            let hyp = DisconnectionHypothesis::from_keys(&sc.l0, &sc.truth)?;
            let mut rows = Vec::with_capacity(points.len());
            for &sw in &cfg.sigma_w2 {
                let params = cfg.model_params(sw)?;
                let full0 = sc.h0_data(params, m_max)?;
                let full1 = sc.h1_data(params, m_max)?;
                for &m in &cfg.samples {
                    let s0 = score_batch(&detectors, &sc, &hyp, &params, &full0.truncated(m)?)?;
                    let s1 = score_batch(&detectors, &sc, &hyp, &params, &full1.truncated(m)?)?;
                    rows.push((s0, s1));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let grid = cfg.threshold_grid.as_deref();
    Ok(points
        .iter()
        .enumerate()
        .map(|(p, &(sigma_w2, samples))| {
            let scores: Vec<DetectorScores> = detectors
                .iter()
                .enumerate()
                .map(|(d, (_, _, label))| DetectorScores {
                    label: label.clone(),
                    h0: per_trial.iter().map(|t| t[p].0[d]).collect(),
                    h1: per_trial.iter().map(|t| t[p].1[d]).collect(),
                })
                .collect();
            let curves = scores
                .iter()
                .map(|ds| (ds.label.clone(), roc_curve(&ds.h0, &ds.h1, grid)))
                .collect();
            RocTable {
                sigma_w2,
                samples,
                trials: cfg.trials,
                scores,
                curves,
            }
        })
        .collect())
}

/// Identification methods compared in the F-score and runtime studies: the
/// full greedy search and the local variant for every configured beta.
pub fn identification_methods(cfg: &ExperimentConfig) -> Vec<(String, GreedyConfig)> {
    std::iter::once(("greedy".to_string(), GreedyConfig::full(cfg.r_max)))
        .chain(
            cfg.betas
                .iter()
                .map(|&b| (format!("greedy-b{b}"), GreedyConfig::local(b, cfg.r_max))),
        )
        .collect()
}

/// Identification study over the `sigma_w2 x samples` sweep.
pub fn run_fscore(cfg: &ExperimentConfig) -> Result<Vec<FscoreRow>> {
    cfg.validate()?;
    let methods = identification_methods(cfg);
    let points = sweep_points(cfg);
    let m_max = *cfg.samples.iter().max().expect("validated nonempty");

    // per_trial[t][point][method]
    let per_trial: Vec<Vec<Vec<TrialCounts>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let sc = Scenario::new(cfg, trial)?;
            let mut rows = Vec::with_capacity(points.len());
            for &sw in &cfg.sigma_w2 {
                let params = cfg.model_params(sw)?;
                let full = sc.h1_data(params, m_max)?;
                for &m in &cfg.samples {
                    let s = sample_covariance(&full.truncated(m)?);
                    let counts = methods
                        .iter()
                        .map(|(_, gc)| {
                            let out = identify(&s, &sc.l0, &sc.graph, &params, gc)?;
                            Ok(trial_counts(&sc.truth, &out.edges))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(counts);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (p, &(sigma_w2, samples)) in points.iter().enumerate() {
        for (k, (name, _)) in methods.iter().enumerate() {
            let counts: Vec<TrialCounts> = per_trial.iter().map(|t| t[p][k]).collect();
            rows.push(FscoreRow {
                method: name.clone(),
                filter: cfg.filter.name().to_string(),
                samples,
                sigma_w2,
                fscore: fscore(&counts),
                se: fscore_jackknife_se(&counts),
                trials: cfg.trials,
                tp: counts.iter().map(|c| c.tp).sum(),
                fp: counts.iter().map(|c| c.fp).sum(),
                fn_: counts.iter().map(|c| c.fn_).sum(),
            });
        }
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Wall-clock study over `vertex_sweep` at the first sweep point. Trials run
/// one after another; only the identification call is timed.
pub fn run_runtime(cfg: &ExperimentConfig) -> Result<Vec<RuntimeRow>> {
    cfg.validate()?;
    let methods = identification_methods(cfg);
    let params = cfg.model_params(cfg.sigma_w2[0])?;
    let m = cfg.samples[0];
    let mut rows = Vec::new();
    for &n in &cfg.vertex_sweep {
        let mut times = vec![Vec::with_capacity(cfg.trials); methods.len()];
        for trial in 0..cfg.trials {
            let sc = Scenario::with_size(cfg, trial, Some(n))?;
            let s = sample_covariance(&sc.h1_data(params, m)?);
            for (k, (_, gc)) in methods.iter().enumerate() {
                let start = Instant::now();
                identify(&s, &sc.l0, &sc.graph, &params, gc)?;
                times[k].push(start.elapsed().as_secs_f64());
            }
        }
        for ((name, _), t) in methods.iter().zip(&times) {
            let (mean_seconds, std_seconds) = mean_std(t);
            rows.push(RuntimeRow {
                method: name.clone(),
                n,
                mean_seconds,
                std_seconds,
                trials: cfg.trials,
            });
        }
    }
    Ok(rows)
}
