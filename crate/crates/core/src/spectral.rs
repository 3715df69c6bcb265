//! Graph Fourier transform, smooth graph filters, and pseudo-inverse /
//! pseudo-determinant of symmetric PSD matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{rank_tolerance, sorted_symmetric_eigen, LaplacianView};

/// Transfer-function family `h(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphFilter {
    /// `1/sqrt(lambda)`, zero on the null space: a GMRF with Laplacian precision.
    Gmrf,
    /// `1 / (1 + alpha lambda)`.
    Tikhonov { alpha: f64 },
    /// `exp(-tau lambda)`.
    Heat { tau: f64 },
}

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 0.2;

impl GraphFilter {
    pub fn tikhonov(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(GraphFilter::Tikhonov { alpha })
        } else {
            Err(Error::InvalidParameter(format!(
                "Tikhonov alpha must be positive, got {alpha}"
            )))
        }
    }

    pub fn heat(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(GraphFilter::Heat { tau })
        } else {
            Err(Error::InvalidParameter(format!("heat tau must be positive, got {tau}")))
        }
    }

    /// Parses `gmrf`, `tikhonov` or `heat`, attaching the matching parameter.
    pub fn from_name(name: &str, alpha: f64, tau: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gmrf" => Ok(GraphFilter::Gmrf),
            "tikhonov" => Self::tikhonov(alpha),
            "heat" => Self::heat(tau),
            other => Err(Error::Unsupported(format!("unknown filter `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphFilter::Gmrf => "gmrf",
            GraphFilter::Tikhonov { .. } => "tikhonov",
            GraphFilter::Heat { .. } => "heat",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphFilter::Gmrf => Ok(()),
            GraphFilter::Tikhonov { alpha } => Self::tikhonov(alpha).map(|_| ()),
            GraphFilter::Heat { tau } => Self::heat(tau).map(|_| ()),
        }
    }

    /// `h(lambda)` for `lambda >= 0`.
    pub fn transfer(&self, lambda: f64) -> f64 {
        match *self {
            GraphFilter::Gmrf => {
                if lambda == 0.0 {
                    0.0
                } else {
                    1.0 / lambda.sqrt()
                }
            }
            GraphFilter::Tikhonov { alpha } => 1.0 / (1.0 + alpha * lambda),
            GraphFilter::Heat { tau } => (-tau * lambda).exp(),
        }
    }

    /// `h^2(lambda)`, computed without the square root for the GMRF case.
    pub fn transfer_sq(&self, lambda: f64) -> f64 {
        match *self {
            GraphFilter::Gmrf => {
                if lambda == 0.0 {
                    0.0
                } else {
                    1.0 / lambda
                }
            }
            GraphFilter::Tikhonov { alpha } => {
                let h = 1.0 / (1.0 + alpha * lambda);
                h * h
            }
            GraphFilter::Heat { tau } => (-2.0 * tau * lambda).exp(),
        }
    }
}

impl fmt::Display for GraphFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFilter::Gmrf => write!(f, "gmrf"),
            GraphFilter::Tikhonov { alpha } => write!(f, "tikhonov(alpha={alpha})"),
            GraphFilter::Heat { tau } => write!(f, "heat(tau={tau})"),
        }
    }
}

impl FromStr for GraphFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GraphFilter::from_name(s, DEFAULT_ALPHA, DEFAULT_TAU)
    }
}

/// GFT coefficients `U^T a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub DVector<f64>);

impl Spectrum {
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.0
    }
}

fn check_len(l: &LaplacianView, len: usize) -> Result<()> {
    if l.n() != len {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            actual: len,
        });
    }
    Ok(())
}

pub fn gft(l: &LaplacianView, a: &DVector<f64>) -> Result<Spectrum> {
    check_len(l, a.len())?;
    Ok(Spectrum(l.eigenvectors().tr_mul(a)))
}

pub fn igft(l: &LaplacianView, s: &Spectrum) -> Result<DVector<f64>> {
    check_len(l, s.0.len())?;
    Ok(l.eigenvectors() * &s.0)
}

/// Dirichlet energy `a^T L a`.
pub fn dirichlet_energy(l: &LaplacianView, a: &DVector<f64>) -> Result<f64> {
    check_len(l, a.len())?;
    Ok(a.dot(&(l.matrix() * a)))
}

/// `h(L) = U diag(h(lambda_n)) U^T`.
pub fn filter_matrix(l: &LaplacianView, f: &GraphFilter) -> DMatrix<f64> {
    l.spectral_matrix(|lambda| f.transfer(lambda))
}

/// `h^2(L)`, the input-independent part of the model covariance.
pub fn filter_sq_matrix(l: &LaplacianView, f: &GraphFilter) -> DMatrix<f64> {
    l.spectral_matrix(|lambda| f.transfer_sq(lambda))
}

/// Ratio of expected Dirichlet energies of filter output and white input,
/// `sum(lambda h^2(lambda)) / sum(lambda)`.
pub fn smoothness_ratio(l: &LaplacianView, f: &GraphFilter) -> Result<f64> {
    let ev = l.eigenvalues();
    let trace: f64 = ev.sum();
    if trace <= 0.0 {
        return Err(Error::InvalidParameter(
            "smoothness ratio is undefined for a Laplacian with zero trace".into(),
        ));
    }
    let filtered: f64 = ev.iter().map(|&lambda| lambda * f.transfer_sq(lambda)).sum();
    Ok(filtered / trace)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).norm();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Eigenvalues of a symmetric PSD matrix with sub-tolerance values zeroed.
pub struct PsdSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl PsdSpectrum {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        check_symmetric(a)?;
        let (mut values, vectors) = sorted_symmetric_eigen(a)?;
        let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = rank_tolerance(a.nrows(), max_abs);
        for v in values.iter_mut() {
            if *v <= tol {
                *v = 0.0;
            }
        }
        Ok(PsdSpectrum { values, vectors })
    }

    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let u = &self.vectors;
        let scaled = DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| {
            let v = self.values[c];
            if v > 0.0 {
                u[(r, c)] / v
            } else {
                0.0
            }
        });
        scaled * u.transpose()
    }

    /// Sum of logs of the nonzero eigenvalues (0 for the zero matrix).
    pub fn log_pseudo_det(&self) -> f64 {
        self.values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).sum()
    }

    pub fn rank(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(PsdSpectrum::new(a)?.pseudo_inverse())
}

/// Product of the nonzero eigenvalues.
pub fn pseudo_det(a: &DMatrix<f64>) -> Result<f64> {
    Ok(log_pseudo_det(a)?.exp())
}

pub fn log_pseudo_det(a: &DMatrix<f64>) -> Result<f64> {
    Ok(PsdSpectrum::new(a)?.log_pseudo_det())
}
