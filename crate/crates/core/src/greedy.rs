//! Greedy identification of disconnected edges: the full search and the
//! variant that scores candidates on beta-neighborhoods and shrinks the
//! search set between iterations.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{model_terms, ModelTerms};
use crate::error::{Error, Result};
use crate::graph::{edge_neighborhood, path_edge_set, Edge, EdgeKey, LaplacianView, WeightedGraph};
use crate::signal::{ModelParams, SampleCovariance};
use crate::spectral::PsdSpectrum;

/// Trace term and log pseudo-determinant of `sigma_x^2 [h^2(L)]_S + sigma_w^2 I`.
///
/// When `S` covers every vertex this is the global covariance and the
/// eigenbasis of `L` is used directly.
pub(crate) fn local_terms(
    s: &SampleCovariance,
    l: &LaplacianView,
    set: &[usize],
    params: &ModelParams,
) -> Result<ModelTerms> {
    if set.len() == l.n() {
        return Ok(model_terms(&s.matrix, l, params));
    }
    restricted_terms(s, l, set, params)
}

/// The restricted computation without the full-set shortcut.
pub(crate) fn restricted_terms(
    s: &SampleCovariance,
    l: &LaplacianView,
    set: &[usize],
    params: &ModelParams,
) -> Result<ModelTerms> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty vertex set".into()));
    }
    let n = l.n();
    if let Some(&v) = set.iter().find(|&&v| v >= n) {
        return Err(Error::VertexOutOfRange { vertex: v, n });
    }
    let u_s = l.eigenvectors().select_rows(set);
    let h2 = DVector::from_iterator(n, l.eigenvalues().iter().map(|&lam| params.filter.transfer_sq(lam)));
    let scaled = DMatrix::from_fn(set.len(), n, |r, c| u_s[(r, c)] * h2[c]);
    let mut cov = (scaled * u_s.transpose()) * params.sigma_x2;
    for d in 0..set.len() {
        cov[(d, d)] += params.sigma_w2;
    }
    // Enforce exact symmetry lost to rounding in the product above.
    let cov = (&cov + cov.transpose()) * 0.5;
    let spectrum = PsdSpectrum::new(&cov)?;
    let sy = s.matrix.select_rows(set).select_columns(set);
    let trace = spectrum
        .pseudo_inverse()
        .iter()
        .zip(sy.iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(ModelTerms {
        trace,
        log_pdet: spectrum.log_pseudo_det(),
    })
}

fn perturbed(l: &LaplacianView, e: &DMatrix<f64>) -> Result<LaplacianView> {
    if e.nrows() != l.n() || e.ncols() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            actual: e.nrows(),
        });
    }
    LaplacianView::from_matrix(l.matrix() - e)
}

/// `Tr(A_0^+ [S_y]_S) - Tr(A_E^+ [S_y]_S)` with
/// `A = sigma_x^2 [h^2(.)]_S + sigma_w^2 I` for `L` and `L - E`.
pub fn phi1(
    s: &SampleCovariance,
    l: &LaplacianView,
    e: &DMatrix<f64>,
    set: &[usize],
    params: &ModelParams,
) -> Result<f64> {
    let le = perturbed(l, e)?;
    Ok(local_terms(s, l, set, params)?.trace - local_terms(s, &le, set, params)?.trace)
}

/// `log |A_E|_+ - log |A_0|_+` on the restriction to `S`.
pub fn phi2(l: &LaplacianView, e: &DMatrix<f64>, set: &[usize], params: &ModelParams) -> Result<f64> {
    let le = perturbed(l, e)?;
    let empty = SampleCovariance {
        matrix: DMatrix::zeros(l.n(), l.n()),
        m_count: 1,
    };
    Ok(local_terms(&empty, &le, set, params)?.log_pdet - local_terms(&empty, l, set, params)?.log_pdet)
}

fn marginal_score(base: ModelTerms, alt: ModelTerms) -> f64 {
    (base.trace - alt.trace) - (alt.log_pdet - base.log_pdet)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreedyMode {
    Full,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub r_max: Option<usize>,
    pub beta: usize,
    pub mode: GreedyMode,
    /// Skip candidates whose removal splits a component. `None` skips them
    /// only under the noiseless GMRF model.
    pub skip_bridges: Option<bool>,
}

impl GreedyConfig {
    pub fn full(r_max: Option<usize>) -> Self {
        GreedyConfig {
            r_max,
            beta: 0,
            mode: GreedyMode::Full,
            skip_bridges: None,
        }
    }

    pub fn local(beta: usize, r_max: Option<usize>) -> Self {
        GreedyConfig {
            r_max,
            beta,
            mode: GreedyMode::Local,
            skip_bridges: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_max == Some(0) {
            return Err(Error::InvalidParameter("r_max must be at least 1".into()));
        }
        Ok(())
    }

    fn skips_bridges(&self, params: &ModelParams) -> bool {
        self.skip_bridges.unwrap_or_else(|| params.is_noiseless_gmrf())
    }
}

#[derive(Debug, Clone)]
pub struct GreedyState {
    pub found_edges: Vec<Edge>,
    pub current_laplacian: LaplacianView,
    pub search_edges: Vec<EdgeKey>,
    pub iteration: usize,
}

impl GreedyState {
    pub fn initial(l0: &LaplacianView, g: &WeightedGraph) -> Self {
        GreedyState {
            found_edges: Vec::new(),
            current_laplacian: l0.clone(),
            search_edges: g.edge_keys(),
            iteration: 0,
        }
    }

    pub fn found_keys(&self) -> Vec<EdgeKey> {
        self.found_edges.iter().map(Edge::key).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub edge: EdgeKey,
    pub score: f64,
}

/// One iteration of the search, exported as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub search_size: usize,
    pub scores: Vec<CandidateScore>,
    pub skipped: Vec<EdgeKey>,
    pub best: Option<CandidateScore>,
    pub accepted: bool,
    pub found_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyOutcome {
    pub edges: Vec<EdgeKey>,
    pub trace: Vec<IterationRecord>,
}

impl GreedyOutcome {
    pub fn trace_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

enum Candidate {
    Scored(CandidateScore),
    Skipped(EdgeKey),
}

fn score_candidate(
    s: &SampleCovariance,
    g: &WeightedGraph,
    state: &GreedyState,
    base: Option<ModelTerms>,
    key: EdgeKey,
    params: &ModelParams,
    cfg: &GreedyConfig,
) -> Result<Candidate> {
    let current = &state.current_laplacian;
    let weight = g.weight(key.0, key.1).ok_or(Error::NotAnEdge(key.0, key.1))?;
    let edge = Edge {
        i: key.0,
        j: key.1,
        weight,
    };
    let mut e = DMatrix::zeros(current.n(), current.n());
    crate::graph::add_single_edge(&mut e, edge.i, edge.j, edge.weight);
    let candidate = LaplacianView::from_matrix(current.matrix() - e)?;
    if cfg.skips_bridges(params) && candidate.zero_eig_count() > current.zero_eig_count() {
        return Ok(Candidate::Skipped(key));
    }
    let score = match (cfg.mode, base) {
        (GreedyMode::Full, Some(base)) => marginal_score(base, model_terms(&s.matrix, &candidate, params)),
        _ => {
            let set = edge_neighborhood(g, key, cfg.beta);
            marginal_score(
                local_terms(s, current, &set, params)?,
                local_terms(s, &candidate, &set, params)?,
            )
        }
    };
    Ok(Candidate::Scored(CandidateScore { edge: key, score }))
}

/// Next search set `(E_+ ∪ E_beta) \ C`, where `E_+` holds the candidates
/// with a strictly positive score and `E_beta` holds every original edge
/// incident to a vertex reached by a shortest-path edge set `P(u, beta)` or
/// `P(v, beta)` of some `(u, v)` in `E_+`. Neighborhoods use the original
/// graph `g`.
pub fn update_search_set(
    state: &GreedyState,
    scores: &[CandidateScore],
    g: &WeightedGraph,
    beta: usize,
) -> Vec<EdgeKey> {
    let positive: Vec<EdgeKey> = scores.iter().filter(|c| c.score > 0.0).map(|c| c.edge).collect();
    let mut covered = BTreeSet::new();
    for &(u, v) in &positive {
        for (a, b) in path_edge_set(g, u, beta).into_iter().chain(path_edge_set(g, v, beta)) {
            covered.insert(a);
            covered.insert(b);
        }
    }
    let found: BTreeSet<EdgeKey> = state.found_edges.iter().map(Edge::key).collect();
    let next: BTreeSet<EdgeKey> = positive
        .into_iter()
        .chain(
            g.edges()
                .iter()
                .filter(|e| covered.contains(&e.i) || covered.contains(&e.j))
                .map(Edge::key),
        )
        .filter(|k| !found.contains(k))
        .collect();
    next.into_iter().collect()
}

/// Runs either greedy variant according to `cfg.mode`.
pub fn identify(
    s: &SampleCovariance,
    l0: &LaplacianView,
    g: &WeightedGraph,
    params: &ModelParams,
    cfg: &GreedyConfig,
) -> Result<GreedyOutcome> {
    cfg.validate()?;
    params.validate()?;
    let n = g.n_vertices();
    if l0.n() != n || s.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if l0.n() != n { l0.n() } else { s.n() },
        });
    }
    let mut state = GreedyState::initial(l0, g);
    let mut trace = Vec::new();
    loop {
        if cfg.r_max.is_some_and(|r| state.found_edges.len() >= r) || state.search_edges.is_empty() {
            break;
        }
        let base = match cfg.mode {
            GreedyMode::Full => Some(model_terms(&s.matrix, &state.current_laplacian, params)),
            GreedyMode::Local => None,
        };
        let results: Vec<Candidate> = state
            .search_edges
            .par_iter()
            .map(|&key| score_candidate(s, g, &state, base, key, params, cfg))
            .collect::<Result<_>>()?;
        let mut scores = Vec::new();
        let mut skipped = Vec::new();
        for c in results {
            match c {
                Candidate::Scored(sc) => scores.push(sc),
                Candidate::Skipped(k) => skipped.push(k),
            }
        }
        // Search edges are sorted, so a strict comparison keeps the
        // lexicographically smallest edge on ties.
        let mut best: Option<CandidateScore> = None;
        for sc in &scores {
            if best.is_none_or(|b| sc.score > b.score) {
                best = Some(*sc);
            }
        }
        let accepted = best.is_some_and(|b| b.score > 0.0);
        state.iteration += 1;
        let mut record = IterationRecord {
            iteration: state.iteration,
            search_size: state.search_edges.len(),
            scores,
            skipped,
            best,
            accepted,
            found_size: state.found_edges.len(),
        };
        if !accepted {
            trace.push(record);
            break;
        }
        let chosen = best.expect("accepted implies a best candidate").edge;
        let weight = g
            .weight(chosen.0, chosen.1)
            .ok_or(Error::NotAnEdge(chosen.0, chosen.1))?;
        state.current_laplacian = state.current_laplacian.remove_edge(chosen.0, chosen.1)?;
        state.found_edges.push(Edge {
            i: chosen.0,
            j: chosen.1,
            weight,
        });
        state.search_edges = match cfg.mode {
            GreedyMode::Full => state.search_edges.iter().copied().filter(|&k| k != chosen).collect(),
            GreedyMode::Local => update_search_set(&state, &record.scores, g, cfg.beta),
        };
        record.found_size = state.found_edges.len();
        trace.push(record);
    }
    Ok(GreedyOutcome {
        edges: state.found_keys(),
        trace,
    })
}

/// Full greedy search over all remaining edges.
pub fn greedy_identify(
    s: &SampleCovariance,
    l0: &LaplacianView,
    g: &WeightedGraph,
    params: &ModelParams,
    r_max: Option<usize>,
) -> Result<GreedyOutcome> {
    identify(s, l0, g, params, &GreedyConfig::full(r_max))
}

/// Greedy search with beta-neighborhood scores and search-set updates.
pub fn greedy_identify_local(
    s: &SampleCovariance,
    l0: &LaplacianView,
    g: &WeightedGraph,
    params: &ModelParams,
    beta: usize,
    r_max: Option<usize>,
) -> Result<GreedyOutcome> {
    identify(s, l0, g, params, &GreedyConfig::local(beta, r_max))
}
