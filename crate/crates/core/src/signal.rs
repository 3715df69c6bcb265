//! Graph-filter output measurements `y[m] = h(L) x[m] + w[m]` and their
//! Gaussian likelihood.

use std::f64::consts::PI;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{rank_tolerance, LaplacianView};
use crate::rng::stream_rng;
use crate::spectral::GraphFilter;

/// Filter and variances shared by both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub filter: GraphFilter,
    pub sigma_x2: f64,
    pub sigma_w2: f64,
}

impl ModelParams {
    pub fn new(filter: GraphFilter, sigma_x2: f64, sigma_w2: f64) -> Result<Self> {
        let p = ModelParams {
            filter,
            sigma_x2,
            sigma_w2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if !(self.sigma_x2 >= 0.0 && self.sigma_x2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_x2 = {}", self.sigma_x2)));
        }
        if !(self.sigma_w2 >= 0.0 && self.sigma_w2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_w2 = {}", self.sigma_w2)));
        }
        Ok(())
    }

    /// True for the singular-covariance case (GMRF filter without noise).
    pub fn is_noiseless_gmrf(&self) -> bool {
        self.filter == GraphFilter::Gmrf && self.sigma_w2 == 0.0
    }

    /// Eigenvalues of `Sigma(L)` in the eigenbasis of `L`.
    pub fn covariance_spectrum(&self, l: &LaplacianView) -> CovarianceSpectrum {
        let mut values: DVector<f64> = l
            .eigenvalues()
            .map(|lambda| self.sigma_x2 * self.filter.transfer_sq(lambda) + self.sigma_w2);
        let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
        let tol = rank_tolerance(values.len(), max);
        for v in values.iter_mut() {
            if *v <= tol {
                *v = 0.0;
            }
        }
        let precision = values.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
        let log_pseudo_det = values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).sum();
        CovarianceSpectrum {
            values,
            precision,
            log_pseudo_det,
        }
    }
}

/// `Sigma(L) = U diag(values) U^T` with its pseudo-inverse weights.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum {
    pub values: DVector<f64>,
    pub precision: DVector<f64>,
    pub log_pseudo_det: f64,
}

impl CovarianceSpectrum {
    /// `Tr(Sigma^+ S)` given the diagonal of `U^T S U`.
    pub fn trace_precision(&self, projected_diag: &DVector<f64>) -> f64 {
        self.precision.dot(projected_diag)
    }
}

/// Diagonal of `U^T S U`, the per-mode energy of a second-moment matrix.
pub fn projected_diagonal(l: &LaplacianView, s: &DMatrix<f64>) -> DVector<f64> {
    let u = l.eigenvectors();
    let su = s * u;
    DVector::from_iterator(u.ncols(), (0..u.ncols()).map(|c| u.column(c).dot(&su.column(c))))
}

#[derive(Debug, Clone)]
pub struct SignalModel {
    pub laplacian: LaplacianView,
    pub params: ModelParams,
}

impl SignalModel {
    pub fn new(laplacian: LaplacianView, params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(SignalModel { laplacian, params })
    }
}

/// `M` measurement vectors stored as the columns of an `N x M` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBatch {
    samples: DMatrix<f64>,
}

impl SignalBatch {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.ncols() == 0 || samples.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "a signal batch needs at least one sample".into(),
            ));
        }
        Ok(SignalBatch { samples })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter(
                "a signal batch needs at least one sample".into(),
            ));
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn m_count(&self) -> usize {
        self.samples.ncols()
    }

    /// First `m` samples.
    pub fn truncated(&self, m: usize) -> Result<SignalBatch> {
        if m == 0 || m > self.m_count() {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {m} of {} samples",
                self.m_count()
            )));
        }
        Self::new(self.samples.columns(0, m).into_owned())
    }

    /// Writes the batch as CSV with one row per vertex and one column per sample.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(&self.samples, File::create(path)?)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_matrix_csv(File::open(path)?)?)
    }
}

/// Writes a matrix as headerless CSV, one row per matrix row.
pub fn write_matrix_csv(m: &DMatrix<f64>, writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(reader: impl std::io::Read) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("not a number: `{field}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format("ragged matrix rows".into()));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
}

/// Draws `m` i.i.d. samples. Sample `t` uses ChaCha stream `t` of `seed`, so a
/// batch of `m` samples is a prefix of any larger batch with the same seed.
pub fn generate(model: &SignalModel, m: usize, seed: u64) -> Result<SignalBatch> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    model.params.validate()?;
    let l = &model.laplacian;
    let n = l.n();
    let sx = model.params.sigma_x2.sqrt();
    let sw = model.params.sigma_w2.sqrt();
    let gains: DVector<f64> = l.eigenvalues().map(|lambda| model.params.filter.transfer(lambda));
    let u = l.eigenvectors();

    let columns: Vec<DVector<f64>> = (0..m)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let x = DVector::from_fn(n, |_, _| sx * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let w = DVector::from_fn(n, |_, _| sw * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let coeffs = u.tr_mul(&x).component_mul(&gains);
            u * coeffs + w
        })
        .collect();
    SignalBatch::from_columns(&columns)
}

/// `Sigma(L) = sigma_x^2 h^2(L) + sigma_w^2 I`.
pub fn model_covariance(model: &SignalModel) -> DMatrix<f64> {
    let p = model.params;
    model
        .laplacian
        .spectral_matrix(|lambda| p.sigma_x2 * p.filter.transfer_sq(lambda))
        + DMatrix::identity(model.laplacian.n(), model.laplacian.n()) * p.sigma_w2
}

/// `S_y = (1/M) sum y y^T`; the model is zero-mean so no centering.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub matrix: DMatrix<f64>,
    pub m_count: usize,
}

impl SampleCovariance {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn sample_covariance(batch: &SignalBatch) -> SampleCovariance {
    let y = batch.samples();
    let matrix = (y * y.transpose()) / batch.m_count() as f64;
    SampleCovariance {
        matrix,
        m_count: batch.m_count(),
    }
}

/// Gaussian log-likelihood of the stacked samples with pseudo-determinant and
/// pseudo-inverse; the `2 pi` term keeps the full dimension `N`.
pub fn log_likelihood(s: &SampleCovariance, model: &SignalModel) -> Result<f64> {
    let n = model.laplacian.n();
    if s.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.n(),
        });
    }
    let spectrum = model.params.covariance_spectrum(&model.laplacian);
    let quad = spectrum.trace_precision(&projected_diagonal(&model.laplacian, &s.matrix));
    let m = s.m_count as f64;
    Ok(-0.5 * m * n as f64 * (2.0 * PI).ln() - 0.5 * m * spectrum.log_pseudo_det - 0.5 * m * quad)
}
