//! Multi-output linear least squares with an unpenalized intercept.
//!
//! Minimizes `‖X B + 1 aᵀ - Y‖²_F + ridge ‖B‖²_F`. Columns are centred, which
//! removes the intercept from the normal equations, and the Gram matrix is
//! scaled to unit diagonal before factoring so the rank test does not depend on
//! the units of individual features.

use alloc::string::String;

use nalgebra::{DMatrix, DVector};

use crate::decomposition::Method;
use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::linalg;

/// Smallest accepted Cholesky pivot of the unit-diagonal Gram matrix.
const RANK_TOL: f64 = 1e-12;

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub method: Option<Method>,
    pub components: Option<usize>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
    pub data_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalModel {
    /// Length `o`.
    pub intercept: DVector<f64>,
    /// `p x o`.
    pub weights: DMatrix<f64>,
    pub ridge: f64,
    pub meta: TrainingMeta,
}

impl RetrievalModel {
    pub fn features(&self) -> usize {
        self.weights.nrows()
    }

    pub fn levels(&self) -> usize {
        self.weights.ncols()
    }

    pub fn new(intercept: DVector<f64>, weights: DMatrix<f64>, ridge: f64) -> Result<Self> {
        if intercept.len() != weights.ncols() {
            return Err(Error::DimensionMismatch {
                what: "intercept length",
                expected: weights.ncols(),
                found: intercept.len(),
            });
        }
        crate::cube::check_finite(intercept.as_slice())?;
        crate::cube::check_finite(weights.as_slice())?;
        Ok(RetrievalModel {
            intercept,
            weights,
            ridge,
            meta: TrainingMeta::default(),
        })
    }
}

pub fn fit_linear(design: &DesignMatrix, targets: &DMatrix<f64>, ridge: f64) -> Result<RetrievalModel> {
    let mut model = fit_linear_matrix(&design.matrix, targets, ridge)?;
    model.meta.components = Some(design.components);
    model.meta.window = Some(design.window);
    Ok(model)
}

pub fn fit_linear_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<RetrievalModel> {
    let (n, p) = x.shape();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "target rows",
            expected: n,
            found: y.nrows(),
        });
    }
    if n == 0 || p == 0 || y.ncols() == 0 {
        return Err(Error::invalid("design", "empty design or targets"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge", "must be finite and non-negative"));
    }
    let x_mean = column_means(x);
    let y_mean = column_means(y);
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let mut yc = y.clone();
    for (j, mut col) in yc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-y_mean[j]);
    }

    let mut gram = xc.tr_mul(&xc);
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    let rhs = xc.tr_mul(&yc);

    let scale = DVector::from_iterator(p, (0..p).map(|i| libm::sqrt(gram[(i, i)])));
    if let Some(column) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::RankDeficient { column });
    }
    let mut scaled = gram.clone();
    for j in 0..p {
        for i in 0..p {
            scaled[(i, j)] /= scale[i] * scale[j];
        }
    }
    let l = linalg::cholesky(&scaled, RANK_TOL).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, .. } => Error::RankDeficient { column: pivot },
        other => other,
    })?;
    let solve = |b: &DMatrix<f64>| {
        let mut z = b.clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row /= scale[i];
        }
        linalg::solve_lower_in_place(&l, &mut z);
        linalg::solve_upper_transposed_in_place(&l, &mut z);
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row /= scale[i];
        }
        z
    };
    let mut weights = solve(&rhs);
    // one step of iterative refinement on the normal equations
    let correction = solve(&(&rhs - &gram * &weights));
    weights += correction;

    let intercept = &y_mean - weights.tr_mul(&x_mean);
    RetrievalModel::new(intercept, weights, ridge)
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub fn predict(model: &RetrievalModel, design: &DesignMatrix) -> Result<DMatrix<f64>> {
    predict_matrix(model, &design.matrix)
}

/// `X B + 1 aᵀ`.
pub fn predict_matrix(model: &RetrievalModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.features() {
        return Err(Error::DimensionMismatch {
            what: "design columns",
            expected: model.features(),
            found: x.ncols(),
        });
    }
    let mut out = x * &model.weights;
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(model.intercept[j]);
    }
    Ok(out)
}
