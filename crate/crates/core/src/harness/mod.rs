//! Monte-Carlo experiment engine: configuration, per-trial scenarios, ROC,
//! F-score and runtime studies, and their CSV/JSON outputs.

mod experiments;
mod metrics;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    apply_hypothesis, laplacian, load_graph, watts_strogatz, EdgeKey, LaplacianView, WattsStrogatz, WeightedGraph,
};
use crate::rng::{derive_seed, stream_rng};
use crate::signal::{generate, ModelParams, SignalBatch, SignalModel};
use crate::spectral::GraphFilter;

pub use experiments::{
    identification_methods, run_fscore, run_roc, run_runtime, DetectorScores, FscoreRow, RocTable, RuntimeRow,
    TrialCounts,
};
pub use metrics::{fscore, fscore_jackknife_se, pd_at_pfa, roc_curve, trial_counts, RocPoint};
pub use output::{config_hash, write_fscore_csv, write_roc_csv, write_runtime_csv, RunManifest};

/// Where each trial's topology comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    WattsStrogatz(WattsStrogatz),
    File { path: PathBuf },
}

/// Detectors available to the ROC study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Lrt,
    LocalLrt,
    Naive,
    Smsd,
    Bmsd,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Lrt,
        DetectorKind::LocalLrt,
        DetectorKind::Naive,
        DetectorKind::Smsd,
        DetectorKind::Bmsd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Lrt => "lrt",
            DetectorKind::LocalLrt => "local-lrt",
            DetectorKind::Naive => "naive",
            DetectorKind::Smsd => "smsd",
            DetectorKind::Bmsd => "bmsd",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            Error::Unsupported(format!(
                "unknown detector '{s}' (expected lrt, local-lrt, naive, smsd or bmsd)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub filter: GraphFilter,
    pub sigma_x2: f64,
    pub sigma_w2: Vec<f64>,
    pub samples: Vec<usize>,
    /// Number of truly disconnected edges per trial.
    pub disconnections: usize,
    pub trials: usize,
    pub seed: u64,
    pub detectors: Vec<String>,
    pub betas: Vec<usize>,
    pub r_max: Option<usize>,
    pub threshold_grid: Option<Vec<f64>>,
    /// Graph sizes for the runtime study.
    pub vertex_sweep: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Desk-scale setting: 20 vertices, 500 trials.
    pub fn desk() -> Self {
        ExperimentConfig {
            graph: GraphSpec::WattsStrogatz(WattsStrogatz::default()),
            filter: GraphFilter::Gmrf,
            sigma_x2: 1.0,
            sigma_w2: vec![2.0],
            samples: vec![100],
            disconnections: 3,
            trials: 500,
            seed: 0,
            detectors: DetectorKind::ALL.iter().map(|d| d.name().to_string()).collect(),
            betas: vec![1],
            r_max: None,
            threshold_grid: None,
            vertex_sweep: vec![20, 50, 100],
        }
    }

    /// Full-scale setting: 50 vertices, 1000 trials, five disconnections.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            graph: GraphSpec::WattsStrogatz(WattsStrogatz {
                n: 50,
                ..WattsStrogatz::default()
            }),
            disconnections: 5,
            trials: 1000,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full_scale()),
            other => Err(Error::Unsupported(format!(
                "unknown preset '{other}' (expected desk or full)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn detector_kinds(&self) -> Result<Vec<DetectorKind>> {
        self.detectors.iter().map(|d| d.parse()).collect()
    }

    pub fn model_params(&self, sigma_w2: f64) -> Result<ModelParams> {
        ModelParams::new(self.filter, self.sigma_x2, sigma_w2)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.sigma_w2.is_empty() || self.samples.is_empty() {
            return invalid("sigma_w2 and samples sweeps must be nonempty".into());
        }
        if self.samples.contains(&0) {
            return invalid("sample counts must be positive".into());
        }
        if self.r_max == Some(0) {
            return invalid("r_max must be at least 1".into());
        }
        if self.disconnections == 0 {
            return invalid("disconnections must be at least 1".into());
        }
        if let Some(grid) = &self.threshold_grid {
            if grid.is_empty() || grid.iter().any(|t| t.is_nan()) {
                return invalid("threshold grid must be nonempty and free of NaN".into());
            }
        }
        for &sw in &self.sigma_w2 {
            self.model_params(sw)?;
        }
        self.detector_kinds()?;
        if let GraphSpec::WattsStrogatz(ws) = &self.graph {
            if ws.n <= 2 * ws.k_per_side {
                return invalid(format!("graph needs n > 2 k_per_side (n = {})", ws.n));
            }
        }
        Ok(())
    }

    fn graph_for(&self, trial: usize, n_override: Option<usize>) -> Result<WeightedGraph> {
        match (&self.graph, n_override) {
            (GraphSpec::WattsStrogatz(ws), n) => {
                let params = WattsStrogatz {
                    n: n.unwrap_or(ws.n),
                    ..*ws
                };
                watts_strogatz(&params, derive_seed(self.seed, &[trial as u64, 0]))
            }
            (GraphSpec::File { path }, None) => load_graph(path),
            (GraphSpec::File { .. }, Some(_)) => Err(Error::InvalidParameter(
                "a vertex sweep needs a generated graph, not a graph file".into(),
            )),
        }
    }
}

const MAX_TRUTH_ATTEMPTS: usize = 10_000;

/// Uniformly drawn size-`r` edge subset whose removal keeps `g` connected.
pub fn draw_disconnection(g: &WeightedGraph, r: usize, seed: u64) -> Result<Vec<EdgeKey>> {
    if r > g.edges().len() {
        return Err(Error::InvalidParameter(format!(
            "cannot remove {r} of {} edges",
            g.edges().len()
        )));
    }
    let mut rng = stream_rng(seed, 0);
    for _ in 0..MAX_TRUTH_ATTEMPTS {
        let mut keys: Vec<EdgeKey> = g.edges().choose_multiple(&mut rng, r).map(|e| e.key()).collect();
        keys.sort_unstable();
        if g.without_edges(&keys)?.is_connected() {
            return Ok(keys);
        }
    }
    Err(Error::RetriesExhausted(MAX_TRUTH_ATTEMPTS))
}

/// One Monte-Carlo trial: topology, true disconnection set and both models.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub trial: usize,
    pub graph: WeightedGraph,
    pub l0: LaplacianView,
    pub truth: Vec<EdgeKey>,
    pub l1: LaplacianView,
    seed: u64,
}

impl Scenario {
    pub fn new(cfg: &ExperimentConfig, trial: usize) -> Result<Self> {
        Self::with_size(cfg, trial, None)
    }

    pub fn with_size(cfg: &ExperimentConfig, trial: usize, n: Option<usize>) -> Result<Self> {
        let graph = cfg.graph_for(trial, n)?;
        let l0 = laplacian(&graph)?;
        let truth = draw_disconnection(&graph, cfg.disconnections, derive_seed(cfg.seed, &[trial as u64, 1]))?;
        let (l1, _) = apply_hypothesis(&l0, &truth)?;
        Ok(Scenario {
            trial,
            graph,
            l0,
            truth,
            l1,
            seed: cfg.seed,
        })
    }

    /// Measurements under the disconnected topology. The same seed is used
    /// for every noise level and sample count, so sweeps share random numbers
    /// and smaller batches are prefixes of larger ones.
    pub fn h1_data(&self, params: ModelParams, m: usize) -> Result<SignalBatch> {
        let model = SignalModel::new(self.l1.clone(), params)?;
        generate(&model, m, derive_seed(self.seed, &[self.trial as u64, 2]))
    }

    /// Measurements under the original topology.
    pub fn h0_data(&self, params: ModelParams, m: usize) -> Result<SignalBatch> {
        let model = SignalModel::new(self.l0.clone(), params)?;
        generate(&model, m, derive_seed(self.seed, &[self.trial as u64, 3]))
    }
}
