//! PCA and minimum noise fraction bases.
//!
//! PCA takes the leading eigenvectors of the centred signal covariance Σ. MNF
//! solves the generalized problem `Σ w = λ Σ_N w`: with `Σ_N = L Lᵀ` the
//! whitened matrix `L⁻¹ Σ L⁻ᵀ` is symmetric, its eigenvectors `U` map back as
//! `W = L⁻ᵀ U`, and the columns of `W` are orthonormal in the noise metric
//! (`Wᵀ Σ_N W = I`). Each `λ` is the ratio of total to noise variance along its
//! direction, so components come out ordered by signal-to-noise ratio.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::cube::{Cube, SpectralCube};
use crate::error::{Error, Result};
use crate::linalg;
use crate::noise::CovarianceEstimate;

/// Default MNF noise ridge, relative to the mean noise variance.
pub const DEFAULT_NOISE_RIDGE: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    Pca,
    Mnf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Mnf => "mnf",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "pca" => Some(Method::Pca),
            "mnf" => Some(Method::Mnf),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tag recorded with every basis: the largest-magnitude entry of each
/// component is positive, ties resolved toward the lowest band index.
pub const SIGN_CONVENTION: &str = "max_abs_positive";

/// Fitted linear projection `scores = Wᵀ (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBasis {
    pub method: Method,
    pub mean: DVector<f64>,
    /// `d x k`; column `j` is the `j`-th direction.
    pub components: DMatrix<f64>,
    /// Descending, length `k`.
    pub eigenvalues: DVector<f64>,
    /// Relative ridge added to the noise covariance (MNF only, zero for PCA).
    pub noise_ridge: f64,
    /// Regularized noise covariance the MNF columns are orthonormal under.
    pub noise_metric: Option<DMatrix<f64>>,
}

impl LinearBasis {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn is_full_spectrum(&self) -> bool {
        self.k() == self.dim()
    }

    /// Keeps the leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<LinearBasis> {
        check_k(k, self.k())?;
        Ok(LinearBasis {
            method: self.method,
            mean: self.mean.clone(),
            components: self.components.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, k).into_owned(),
            noise_ridge: self.noise_ridge,
            noise_metric: self.noise_metric.clone(),
        })
    }

    /// Checks orthonormality (Euclidean for PCA, noise metric for MNF),
    /// eigenvalue ordering and the sign convention.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let d = self.dim();
        if self.mean.len() != d {
            return Err(Error::DimensionMismatch {
                what: "basis mean length",
                expected: d,
                found: self.mean.len(),
            });
        }
        if self.eigenvalues.len() != self.k() {
            return Err(Error::DimensionMismatch {
                what: "basis eigenvalue count",
                expected: self.k(),
                found: self.eigenvalues.len(),
            });
        }
        if self
            .eigenvalues
            .as_slice()
            .windows(2)
            .any(|w| w[0] < w[1])
        {
            return Err(Error::invalid("eigenvalues", "not sorted descending"));
        }
        let gram = match (self.method, &self.noise_metric) {
            (Method::Pca, _) => self.components.tr_mul(&self.components),
            (Method::Mnf, Some(metric)) => self.components.tr_mul(&(metric * &self.components)),
            (Method::Mnf, None) => {
                return Err(Error::invalid("basis", "MNF basis lacks its noise metric"))
            }
        };
        let dev = (gram - DMatrix::<f64>::identity(self.k(), self.k())).amax();
        if !(dev <= tol) {
            return Err(Error::invalid(
                "components",
                alloc::format!("not orthonormal (max deviation {dev:e})"),
            ));
        }
        let mut signed = self.components.clone();
        linalg::apply_sign_convention(&mut signed);
        if signed != self.components {
            return Err(Error::invalid("components", "sign convention violated"));
        }
        Ok(())
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::invalid(
            "k",
            alloc::format!("must be in 1..={d}, got {k}"),
        ));
    }
    Ok(())
}

fn check_symmetric(cov: &CovarianceEstimate) -> Result<()> {
    let asym = linalg::relative_asymmetry(&cov.matrix);
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    Ok(())
}

fn mean_of(cov: &CovarianceEstimate) -> DVector<f64> {
    cov.mean
        .clone()
        .unwrap_or_else(|| DVector::zeros(cov.dim()))
}

/// Leading `k` eigenvectors of the centred signal covariance.
pub fn fit_pca(signal_cov: &CovarianceEstimate, k: usize) -> Result<LinearBasis> {
    check_k(k, signal_cov.dim())?;
    check_symmetric(signal_cov)?;
    let (values, vectors) = linalg::sym_eigen_desc(&signal_cov.matrix);
    let mut components = vectors.columns(0, k).into_owned();
    linalg::apply_sign_convention(&mut components);
    Ok(LinearBasis {
        method: Method::Pca,
        mean: mean_of(signal_cov),
        components,
        eigenvalues: values.rows(0, k).into_owned(),
        noise_ridge: 0.0,
        noise_metric: None,
    })
}

/// Leading `k` minimum-noise-fraction directions.
///
/// `ridge` adds `ridge * tr(Σ_N)/d` to the noise diagonal before factoring.
pub fn fit_mnf(
    signal_cov: &CovarianceEstimate,
    noise_cov: &CovarianceEstimate,
    k: usize,
    ridge: f64,
) -> Result<LinearBasis> {
    let d = signal_cov.dim();
    if noise_cov.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "noise covariance dim",
            expected: d,
            found: noise_cov.dim(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge", "must be finite and non-negative"));
    }
    check_k(k, d)?;
    check_symmetric(signal_cov)?;
    check_symmetric(noise_cov)?;

    let mut metric = noise_cov.matrix.clone();
    let shift = ridge * linalg::trace(&metric) / d as f64;
    for i in 0..d {
        metric[(i, i)] += shift;
    }
    let max_diag = metric.diagonal().amax();
    let l = linalg::cholesky(&metric, max_diag * 1e-15)?;

    // C = L⁻¹ Σ L⁻ᵀ
    let mut half = signal_cov.matrix.clone();
    linalg::solve_lower_in_place(&l, &mut half);
    let mut whitened = half.transpose();
    linalg::solve_lower_in_place(&l, &mut whitened);
    linalg::symmetrize(&mut whitened);

    let (values, vectors) = linalg::sym_eigen_desc(&whitened);
    let mut components = vectors.columns(0, k).into_owned();
    linalg::solve_upper_transposed_in_place(&l, &mut components);
    linalg::apply_sign_convention(&mut components);
    Ok(LinearBasis {
        method: Method::Mnf,
        mean: mean_of(signal_cov),
        components,
        eigenvalues: values.rows(0, k).into_owned(),
        noise_ridge: ridge,
        noise_metric: Some(metric),
    })
}

/// Projected scores on the pixel grid of the source cube.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCube {
    data: Cube,
    method: Method,
}

impl ScoreCube {
    pub fn new(data: Cube, method: Method) -> Self {
        ScoreCube { data, method }
    }

    pub fn data(&self) -> &Cube {
        &self.data
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn components(&self) -> usize {
        self.data.depth()
    }

    /// Leading `k` score bands; equals projecting with the truncated basis.
    pub fn truncate(&self, k: usize) -> Result<ScoreCube> {
        check_k(k, self.components())?;
        if k == self.components() {
            return Ok(self.clone());
        }
        let depth = self.components();
        let mut values = Vec::with_capacity(self.data.pixel_count() * k);
        for px in self.data.values().chunks_exact(depth) {
            values.extend_from_slice(&px[..k]);
        }
        Ok(ScoreCube {
            data: Cube::from_parts_unchecked(self.data.rows(), self.data.cols(), k, values),
            method: self.method,
        })
    }
}

/// `scores = Wᵀ (x - mean)` at every pixel.
pub fn project(cube: &SpectralCube, basis: &LinearBasis) -> Result<ScoreCube> {
    if cube.bands() != basis.dim() {
        return Err(Error::DimensionMismatch {
            what: "cube bands vs basis dimension",
            expected: basis.dim(),
            found: cube.bands(),
        });
    }
    let mut centered = cube.data().as_band_major().into_owned();
    for mut col in centered.column_iter_mut() {
        col -= &basis.mean;
    }
    let scores = basis.components.tr_mul(&centered);
    let data = Cube::new(
        cube.rows(),
        cube.cols(),
        basis.k(),
        scores.as_slice().to_vec(),
    )?;
    Ok(ScoreCube {
        data,
        method: basis.method,
    })
}

/// Cumulative normalized eigenvalues, `cumsum(λ) / Σλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCurve {
    pub values: Vec<f64>,
    /// Normalized over the retained `k < d` values only.
    pub partial: bool,
}

pub fn eigenvalue_curve(basis: &LinearBasis) -> EigenCurve {
    EigenCurve {
        values: cumulative_normalized(basis.eigenvalues.iter().copied()),
        partial: !basis.is_full_spectrum(),
    }
}

fn cumulative_normalized(xs: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let total: f64 = xs.clone().sum();
    let n = xs.clone().count();
    if !(total > 0.0) {
        return (1..=n).map(|i| i as f64 / n as f64).collect();
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = xs
        .map(|x| {
            acc += x;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Per-component signal fraction `1 - 1/λ`, clamped to `[0, 1]`.
pub fn signal_fraction(basis: &LinearBasis) -> Result<Vec<f64>> {
    if basis.method != Method::Mnf {
        return Err(Error::WrongMethod {
            expected: "mnf",
            found: basis.method.as_str(),
        });
    }
    // λ <= 0 only shows up for rank-deficient signal; its limit is 0
    Ok(basis
        .eigenvalues
        .iter()
        .map(|&l| if l > 0.0 { (1.0 - 1.0 / l).clamp(0.0, 1.0) } else { 0.0 })
        .collect())
}

/// Cumulative share of whitened signal variance `max(λ - 1, 0)` carried by the
/// leading components; the signal-fraction reading of the MNF eigenvalue curve.
pub fn cumulative_signal_curve(basis: &LinearBasis) -> Result<EigenCurve> {
    signal_fraction(basis)?;
    Ok(EigenCurve {
        values: cumulative_normalized(basis.eigenvalues.iter().map(|&l| (l - 1.0).max(0.0))),
        partial: !basis.is_full_spectrum(),
    })
}
