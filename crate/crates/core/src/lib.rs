//! Detection and identification of edge disconnections in a known graph from
//! the outputs of a smooth graph filter.

pub mod detect;
pub mod error;
pub mod graph;
pub mod greedy;
pub mod harness;
pub mod rng;
pub mod signal;
pub mod spectral;

pub use detect::{
    bmsd, default_band, enumerate_hypotheses, frequency_energies, gmrf_lrt_edge_sum, gmrf_lrt_local_trace,
    gmrf_lrt_noiseless, gmrf_penalty_global, gmrf_penalty_local, hypothesis_count, local_lrt, local_vertex_set,
    lrt_spectral, lrt_statistic, ml_decision, naive_smoothness, penalized_score, smsd, DetectorConfig, DetectorRecord,
    FrequencyEnergies, LrtStatistic, MlDecision, DEFAULT_HYPOTHESIS_CAP,
};
pub use error::{Error, Result};
pub use graph::{
    apply_disconnection, apply_hypothesis, build_graph, edge_key, edge_neighborhood, laplacian, load_graph,
    neighborhood, path_edge_set, save_graph, single_edge_perturbation, watts_strogatz, DisconnectionHypothesis, Edge,
    EdgeKey, GraphFile, LaplacianView, WattsStrogatz, WeightedGraph,
};
pub use greedy::{
    greedy_identify, greedy_identify_local, identify, phi1, phi2, update_search_set, CandidateScore, GreedyConfig,
    GreedyMode, GreedyOutcome, GreedyState, IterationRecord,
};
pub use harness::{run_fscore, run_roc, run_runtime, ExperimentConfig, GraphSpec, Scenario};
pub use signal::{
    generate, log_likelihood, model_covariance, sample_covariance, ModelParams, SampleCovariance, SignalBatch,
    SignalModel,
};
pub use spectral::{GraphFilter, DEFAULT_ALPHA, DEFAULT_TAU};
