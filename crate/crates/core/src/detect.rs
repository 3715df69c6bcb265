//! Likelihood-ratio statistics, the ML decision rule over candidate
//! disconnection sets, and the baseline detectors.
//!
//! Conventions: `value` is `l(y|L_k) = Tr(Sigma(L_0)^+ S_y) - Tr(Sigma(L_k)^+ S_y)`,
//! `penalty` is `rho(L_k) = log |Sigma(L_k)|_+ - log |Sigma(L_0)|_+`, and a
//! binary test declares a disconnection when `value > gamma + penalty`.
//! All determinants stay in log space.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    apply_disconnection, edge_neighborhood, DisconnectionHypothesis, Edge, EdgeKey, LaplacianView, WeightedGraph,
};
use crate::greedy::phi1;
use crate::signal::{projected_diagonal, ModelParams, SampleCovariance, SignalBatch};
use crate::spectral::{pseudo_inverse, GraphFilter};

/// `l(y|L_k)`, `rho(L_k)` and `l - rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtStatistic {
    pub value: f64,
    pub penalty: f64,
    pub penalized: f64,
}

impl LrtStatistic {
    pub fn new(value: f64, penalty: f64) -> Self {
        LrtStatistic {
            value,
            penalty,
            penalized: value - penalty,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Binary decision at threshold `gamma' = gamma + rho`.
    pub fn decide(&self, gamma: f64) -> bool {
        self.value > gamma + self.penalty
    }
}

/// Threshold and locality settings for a binary detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub beta: Option<usize>,
    pub band_b: usize,
}

impl DetectorConfig {
    pub fn for_graph_size(n: usize) -> Self {
        DetectorConfig {
            threshold: 0.0,
            beta: None,
            band_b: default_band(n),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.band_b == 0 || self.band_b > n {
            return Err(Error::InvalidParameter(format!(
                "band B = {} must lie in 1..={n}",
                self.band_b
            )));
        }
        Ok(())
    }
}

/// `B = ceil(N / 4)`.
pub fn default_band(n: usize) -> usize {
    n.div_ceil(4).max(1)
}

/// Trace term and log pseudo-determinant of one candidate covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ModelTerms {
    pub trace: f64,
    pub log_pdet: f64,
}

pub(crate) fn model_terms(s: &DMatrix<f64>, l: &LaplacianView, params: &ModelParams) -> ModelTerms {
    let spectrum = params.covariance_spectrum(l);
    ModelTerms {
        trace: spectrum.trace_precision(&projected_diagonal(l, s)),
        log_pdet: spectrum.log_pseudo_det,
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Binary LRT statistic of `L_k` against `L_0`.
pub fn lrt_statistic(
    s: &SampleCovariance,
    l0: &LaplacianView,
    lk: &LaplacianView,
    params: &ModelParams,
) -> Result<LrtStatistic> {
    check_dims(l0.n(), s.n())?;
    check_dims(l0.n(), lk.n())?;
    let null = model_terms(&s.matrix, l0, params);
    let alt = model_terms(&s.matrix, lk, params);
    Ok(LrtStatistic::new(null.trace - alt.trace, alt.log_pdet - null.log_pdet))
}

/// Penalized statistic of removing `keys` from `l0`.
pub fn penalized_score(
    s: &SampleCovariance,
    l0: &LaplacianView,
    keys: &[EdgeKey],
    params: &ModelParams,
) -> Result<LrtStatistic> {
    let hyp = DisconnectionHypothesis::from_keys(l0, keys)?;
    let lk = apply_disconnection(l0, &hyp)?;
    lrt_statistic(s, l0, &lk, params)
}

/// Mean squared GFT coefficients `psi_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEnergies {
    pub psi: DVector<f64>,
}

pub fn frequency_energies(batch: &SignalBatch, l: &LaplacianView) -> Result<FrequencyEnergies> {
    check_dims(l.n(), batch.n())?;
    let coeffs = l.eigenvectors().tr_mul(batch.samples());
    let m = batch.m_count() as f64;
    let psi = DVector::from_iterator(l.n(), coeffs.row_iter().map(|row| row.norm_squared() / m));
    Ok(FrequencyEnergies { psi })
}

/// The LRT written over graph-frequency energy levels; requires noise.
pub fn lrt_spectral(batch: &SignalBatch, l0: &LaplacianView, lk: &LaplacianView, params: &ModelParams) -> Result<f64> {
    let (sx, sw) = (params.sigma_x2, params.sigma_w2);
    if sw <= 0.0 {
        return Err(Error::Unsupported(
            "the spectral form needs sigma_w2 > 0; use the direct statistic".into(),
        ));
    }
    check_dims(l0.n(), lk.n())?;
    let weighted = |l: &LaplacianView| -> Result<f64> {
        let psi = frequency_energies(batch, l)?.psi;
        Ok(l.eigenvalues()
            .iter()
            .zip(psi.iter())
            .map(|(&lambda, &p)| {
                let h2 = params.filter.transfer_sq(lambda);
                h2 / (sw + sx * h2) * p
            })
            .sum())
    };
    Ok(sx / sw * (weighted(lk)? - weighted(l0)?))
}

fn require_noiseless_gmrf(params: &ModelParams) -> Result<()> {
    if !params.is_noiseless_gmrf() {
        return Err(Error::Unsupported(format!(
            "the Dirichlet-energy form needs the GMRF filter with sigma_w2 = 0 (got {}, sigma_w2 = {})",
            params.filter, params.sigma_w2
        )));
    }
    if params.sigma_x2 <= 0.0 {
        return Err(Error::InvalidParameter("sigma_x2 must be positive".into()));
    }
    Ok(())
}

/// Noiseless-GMRF LRT as an average Dirichlet-energy difference,
/// `(1/(sigma_x^2 M)) sum_m [Q_{L0}(y[m]) - Q_{Lk}(y[m])]`.
pub fn gmrf_lrt_noiseless(
    batch: &SignalBatch,
    l0: &LaplacianView,
    hyp: &DisconnectionHypothesis,
    params: &ModelParams,
) -> Result<f64> {
    require_noiseless_gmrf(params)?;
    check_dims(l0.n(), batch.n())?;
    let lk = l0.matrix() - hyp.perturbation(l0.n());
    let y = batch.samples();
    let energy = |l: &DMatrix<f64>| -> f64 {
        let ly = l * y;
        y.iter().zip(ly.iter()).map(|(a, b)| a * b).sum()
    };
    Ok((energy(l0.matrix()) - energy(&lk)) / (params.sigma_x2 * batch.m_count() as f64))
}

/// Edge-sum form: `(1/(sigma_x^2 M)) sum_{(i,j) in C} w_ij sum_m (y_i - y_j)^2`.
pub fn gmrf_lrt_edge_sum(batch: &SignalBatch, hyp: &DisconnectionHypothesis, sigma_x2: f64) -> f64 {
    let y = batch.samples();
    let total: f64 = hyp
        .removed_edges
        .iter()
        .map(|e| e.weight * (y.row(e.i) - y.row(e.j)).norm_squared())
        .sum();
    total / (sigma_x2 * batch.m_count() as f64)
}

/// Trace form restricted to the affected vertices: `(1/sigma_x^2) Tr(E_S [S_y]_S)`.
pub fn gmrf_lrt_local_trace(s: &SampleCovariance, hyp: &DisconnectionHypothesis, sigma_x2: f64) -> f64 {
    let set = &hyp.affected_vertices;
    let e = hyp.perturbation(s.n()).select_rows(set).select_columns(set);
    let sy = s.matrix.select_rows(set).select_columns(set);
    e.iter().zip(sy.transpose().iter()).map(|(a, b)| a * b).sum::<f64>() / sigma_x2
}

/// Noiseless-GMRF penalty from the global covariance pseudo-determinants.
pub fn gmrf_penalty_global(l0: &LaplacianView, lk: &LaplacianView, sigma_x2: f64) -> Result<f64> {
    let params = ModelParams::new(GraphFilter::Gmrf, sigma_x2, 0.0)?;
    Ok(params.covariance_spectrum(lk).log_pseudo_det - params.covariance_spectrum(l0).log_pseudo_det)
}

/// Noiseless-GMRF penalty computed only from the covariance restricted to the
/// affected vertices `S`:
/// `log |[L_k^+]_S + 11^T/N| - log |[L_0^+]_S + 11^T/N|`.
/// Both graphs must be connected.
pub fn gmrf_penalty_local(l0: &LaplacianView, hyp: &DisconnectionHypothesis) -> Result<f64> {
    if hyp.is_null() {
        return Ok(0.0);
    }
    let lk = apply_disconnection(l0, hyp)?;
    if !l0.is_connected() || !lk.is_connected() {
        return Err(Error::Unsupported(
            "the local penalty identity holds for connected graphs only".into(),
        ));
    }
    let n = l0.n() as f64;
    let set = &hyp.affected_vertices;
    let log_det = |l: &LaplacianView| -> Result<f64> {
        let block = pseudo_inverse(l.matrix())?.select_rows(set).select_columns(set)
            + DMatrix::from_element(set.len(), set.len(), 1.0 / n);
        let chol = block
            .cholesky()
            .ok_or_else(|| Error::Eigen("restricted covariance block is not positive definite".into()))?;
        Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
    };
    Ok(log_det(&lk)? - log_det(l0)?)
}

/// Vertices `∪_{(i,j) in C} N((i,j), beta)`.
pub fn local_vertex_set(g: &WeightedGraph, hyp: &DisconnectionHypothesis, beta: usize) -> Vec<usize> {
    hyp.removed_edges
        .iter()
        .flat_map(|e| edge_neighborhood(g, e.key(), beta))
        .sorted()
        .dedup()
        .collect()
}

/// Local LRT: the trace statistic restricted to the beta-neighborhood of the
/// removed edges. Compare against `gamma + rho`.
pub fn local_lrt(
    s: &SampleCovariance,
    l0: &LaplacianView,
    g: &WeightedGraph,
    hyp: &DisconnectionHypothesis,
    beta: usize,
    params: &ModelParams,
) -> Result<f64> {
    if hyp.is_null() {
        return Ok(0.0);
    }
    let set = local_vertex_set(g, hyp, beta);
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty local vertex set".into()));
    }
    phi1(s, l0, &hyp.perturbation(l0.n()), &set, params)
}

/// Outcome of the ML rule: chosen index plus every hypothesis' statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MlDecision {
    pub index: usize,
    pub scores: Vec<LrtStatistic>,
    /// Indices of hypotheses that disconnect the graph under the singular
    /// noiseless-GMRF model; they are scored with pseudo forms regardless.
    pub flagged: Vec<usize>,
}

/// `argmax_k l(y|L_k) - rho(L_k)`; hypothesis 0 must be the null and scores
/// exactly 0. Ties go to the smallest index.
pub fn ml_decision(
    s: &SampleCovariance,
    hypotheses: &[DisconnectionHypothesis],
    l0: &LaplacianView,
    params: &ModelParams,
) -> Result<MlDecision> {
    match hypotheses.first() {
        Some(h) if h.is_null() => {}
        _ => {
            return Err(Error::InvalidParameter(
                "hypothesis 0 must be the null hypothesis".into(),
            ))
        }
    }
    check_dims(l0.n(), s.n())?;
    let null = model_terms(&s.matrix, l0, params);
    let mut scores = vec![LrtStatistic::zero()];
    let mut flagged = Vec::new();
    let (mut best, mut best_score) = (0, 0.0);
    for (k, hyp) in hypotheses.iter().enumerate().skip(1) {
        let lk = apply_disconnection(l0, hyp)?;
        if params.is_noiseless_gmrf() && !lk.is_connected() {
            flagged.push(k);
        }
        let alt = model_terms(&s.matrix, &lk, params);
        let stat = LrtStatistic::new(null.trace - alt.trace, alt.log_pdet - null.log_pdet);
        if stat.penalized > best_score {
            best = k;
            best_score = stat.penalized;
        }
        scores.push(stat);
    }
    Ok(MlDecision {
        index: best,
        scores,
        flagged,
    })
}

/// `K = sum_{r=1}^{r_max} C(|E|, r)`, saturating at `u128::MAX`.
pub fn hypothesis_count(n_edges: usize, r_max: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for r in 1..=r_max.min(n_edges) {
        binom = match binom.checked_mul((n_edges - r + 1) as u128) {
            Some(v) => v / r as u128,
            None => return u128::MAX,
        };
        total = match total.checked_add(binom) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    total
}

pub const DEFAULT_HYPOTHESIS_CAP: u128 = 200_000;

/// Null hypothesis followed by every subset of size `1..=r_max`, ordered by
/// size and then lexicographically.
pub fn enumerate_hypotheses(e0: &[Edge], r_max: usize, cap: u128) -> Result<Vec<DisconnectionHypothesis>> {
    if r_max == 0 || r_max > e0.len() {
        return Err(Error::InvalidParameter(format!(
            "r_max = {r_max} must lie in 1..={}",
            e0.len()
        )));
    }
    let count = hypothesis_count(e0.len(), r_max);
    if count > cap {
        return Err(Error::TooManyHypotheses { count, cap });
    }
    let mut edges = e0.to_vec();
    edges.sort_by_key(Edge::key);
    let mut out = Vec::with_capacity(count as usize + 1);
    out.push(DisconnectionHypothesis::null());
    for r in 1..=r_max {
        for subset in edges.iter().copied().combinations(r) {
            out.push(DisconnectionHypothesis::from_edges(subset));
        }
    }
    Ok(out)
}

/// Average Dirichlet energy with respect to `L_0`.
pub fn naive_smoothness(batch: &SignalBatch, l0: &LaplacianView) -> Result<f64> {
    check_dims(l0.n(), batch.n())?;
    let y = batch.samples();
    let ly = l0.matrix() * y;
    Ok(y.iter().zip(ly.iter()).map(|(a, b)| a * b).sum::<f64>() / batch.m_count() as f64)
}

fn high_band_energy(batch: &SignalBatch, l: &LaplacianView, band_b: usize) -> Result<f64> {
    if band_b == 0 || band_b > l.n() {
        return Err(Error::InvalidParameter(format!(
            "band B = {band_b} must lie in 1..={}",
            l.n()
        )));
    }
    Ok(frequency_energies(batch, l)?.psi.iter().skip(band_b).sum())
}

/// Simple matched-subspace detector: high-band energy under `L_0` minus that under `L_k`.
pub fn smsd(batch: &SignalBatch, l0: &LaplacianView, lk: &LaplacianView, band_b: usize) -> Result<f64> {
    Ok(high_band_energy(batch, l0, band_b)? - high_band_energy(batch, lk, band_b)?)
}

/// Blind matched-subspace detector: high-band energy under `L_0` only.
pub fn bmsd(batch: &SignalBatch, l0: &LaplacianView, band_b: usize) -> Result<f64> {
    high_band_energy(batch, l0, band_b)
}

/// Serializable detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRecord {
    pub hypothesis: Vec<EdgeKey>,
    pub value: f64,
    pub penalty: f64,
    pub penalized: f64,
}

impl DetectorRecord {
    pub fn new(hyp: &DisconnectionHypothesis, stat: LrtStatistic) -> Self {
        DetectorRecord {
            hypothesis: hyp.keys(),
            value: stat.value,
            penalty: stat.penalty,
            penalized: stat.penalized,
        }
    }
}
