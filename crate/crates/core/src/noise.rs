//! Per-pixel noise estimation by 3x3 paraboloid residuals, and the second-moment
//! matrices that feed the decompositions.
//!
//! The residual of a least-squares fit of `1, x, y, x², y², xy` over a 3x3
//! window, evaluated at the window centre, is a fixed linear combination of the
//! nine samples:
//!
//! ```text
//!         1  -2   1
//!  1/9 * -2   4  -2
//!         1  -2   1
//! ```
//!
//! Quadratic surfaces pass through it untouched, so what is left is the part of
//! each band that is not locally smooth. For i.i.d. noise of variance σ² the
//! residual variance is `(36/81) σ² = (4/9) σ²`; [`ResidualGain::UnitWhiteNoise`]
//! rescales by 3/2 to undo that.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cube::{Cube, SpectralCube};
use crate::error::{Error, Result};

pub const PARABOLOID_KERNEL: [[f64; 3]; 3] = [
    [1.0 / 9.0, -2.0 / 9.0, 1.0 / 9.0],
    [-2.0 / 9.0, 4.0 / 9.0, -2.0 / 9.0],
    [1.0 / 9.0, -2.0 / 9.0, 1.0 / 9.0],
];

/// Scaling applied to filter residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ResidualGain {
    /// Plain kernel output; white noise comes out with variance 4/9 σ².
    #[default]
    Raw,
    /// Residuals multiplied by 3/2 so white noise keeps its variance.
    UnitWhiteNoise,
}

impl ResidualGain {
    pub fn factor(self) -> f64 {
        match self {
            ResidualGain::Raw => 1.0,
            ResidualGain::UnitWhiteNoise => 1.5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResidualGain::Raw => "raw",
            ResidualGain::UnitWhiteNoise => "unit_white_noise",
        }
    }
}

/// Residual estimate of the noise at every pixel and band.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCube {
    data: Cube,
    interior_mask: Vec<bool>,
    gain: ResidualGain,
}

impl NoiseCube {
    /// Rebuilds a noise cube from stored residuals; the interior mask follows
    /// from the geometry.
    pub fn from_residuals(data: Cube, gain: ResidualGain) -> Result<Self> {
        if data.rows() < 3 || data.cols() < 3 {
            return Err(Error::invalid("noise cube", "needs at least 3x3 pixels"));
        }
        let interior_mask = interior_mask(data.rows(), data.cols());
        Ok(NoiseCube {
            data,
            interior_mask,
            gain,
        })
    }

    pub fn data(&self) -> &Cube {
        &self.data
    }

    /// `true` where the whole 3x3 window lies inside the grid.
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior_mask
    }

    pub fn interior_count(&self) -> usize {
        self.interior_mask.iter().filter(|&&m| m).count()
    }

    pub fn gain(&self) -> ResidualGain {
        self.gain
    }
}

fn interior_mask(rows: usize, cols: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            mask.push(r > 0 && c > 0 && r + 1 < rows && c + 1 < cols);
        }
    }
    mask
}

/// Reflects an out-of-range index back into `0..n` without repeating the edge.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // single reflection suffices whenever the reach is at most n - 1
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    debug_assert!((0..n).contains(&i));
    i as usize
}

/// Raw-gain residual filter.
pub fn paraboloid_residual_filter(cube: &SpectralCube) -> Result<NoiseCube> {
    paraboloid_residual_filter_with(cube, ResidualGain::Raw)
}

pub fn paraboloid_residual_filter_with(
    cube: &SpectralCube,
    gain: ResidualGain,
) -> Result<NoiseCube> {
    let src = cube.data();
    let (rows, cols, d) = (src.rows(), src.cols(), src.depth());
    if rows < 3 || cols < 3 {
        return Err(Error::invalid(
            "cube",
            alloc::format!("residual filter needs at least 3x3 pixels, got {rows}x{cols}"),
        ));
    }
    let g = gain.factor();
    let mut out = alloc::vec![0.0; rows * cols * d];
    for r in 0..rows {
        for c in 0..cols {
            let dst = &mut out[(r * cols + c) * d..(r * cols + c + 1) * d];
            for (dr, krow) in PARABOLOID_KERNEL.iter().enumerate() {
                let rr = mirror(r as isize + dr as isize - 1, rows);
                for (dc, &w) in krow.iter().enumerate() {
                    let cc = mirror(c as isize + dc as isize - 1, cols);
                    let wg = w * g;
                    for (o, &x) in dst.iter_mut().zip(src.pixel(rr, cc)) {
                        *o += wg * x;
                    }
                }
            }
        }
    }
    Ok(NoiseCube {
        data: Cube::from_parts_unchecked(rows, cols, d, out),
        interior_mask: interior_mask(rows, cols),
        gain,
    })
}

/// Whether a covariance had enough samples to be full rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceStatus {
    Ok,
    /// Fewer samples than dimensions; consumers must regularize.
    Underdetermined,
}

/// Symmetric second-moment matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub samples: usize,
    /// Mean removed before accumulation; `mean` holds it when true.
    pub centered: bool,
    pub mean: Option<DVector<f64>>,
    pub gain: ResidualGain,
    pub status: CovarianceStatus,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Interior-pixel residual second moments, `(1/m) Σ r rᵀ`, without centering.
pub fn noise_covariance(noise: &NoiseCube) -> Result<CovarianceEstimate> {
    noise_covariance_many(&[noise])
}

/// Pools interior residuals from several cubes of the same band count.
pub fn noise_covariance_many(noise: &[&NoiseCube]) -> Result<CovarianceEstimate> {
    let first = noise
        .first()
        .ok_or_else(|| Error::invalid("noise", "no cubes given"))?;
    let d = first.data.depth();
    let gain = first.gain;
    for n in noise {
        if n.data.depth() != d {
            return Err(Error::DimensionMismatch {
                what: "noise cube bands",
                expected: d,
                found: n.data.depth(),
            });
        }
        if n.gain != gain {
            return Err(Error::invalid("noise", "cubes filtered with different gains"));
        }
    }
    let m: usize = noise.iter().map(|n| n.interior_count()).sum();
    if m == 0 {
        return Err(Error::invalid("noise", "no interior pixels"));
    }
    let mut samples = DMatrix::<f64>::zeros(m, d);
    let mut row = 0;
    for n in noise {
        for (px, &inside) in n.data.values().chunks_exact(d).zip(&n.interior_mask) {
            if inside {
                for (b, &v) in px.iter().enumerate() {
                    samples[(row, b)] = v;
                }
                row += 1;
            }
        }
    }
    let mut matrix = samples.tr_mul(&samples);
    matrix /= m as f64;
    crate::linalg::symmetrize(&mut matrix);
    Ok(CovarianceEstimate {
        matrix,
        samples: m,
        centered: false,
        mean: None,
        gain,
        status: if m < d {
            CovarianceStatus::Underdetermined
        } else {
            CovarianceStatus::Ok
        },
    })
}

/// Mean-centred covariance over all pixels, population divisor.
pub fn signal_covariance(cube: &SpectralCube) -> Result<CovarianceEstimate> {
    signal_covariance_many(&[cube])
}

pub fn signal_covariance_many(cubes: &[&SpectralCube]) -> Result<CovarianceEstimate> {
    let first = cubes
        .first()
        .ok_or_else(|| Error::invalid("cubes", "no cubes given"))?;
    let d = first.bands();
    for c in cubes {
        if c.bands() != d {
            return Err(Error::DimensionMismatch {
                what: "cube bands",
                expected: d,
                found: c.bands(),
            });
        }
    }
    let n: usize = cubes.iter().map(|c| c.data().pixel_count()).sum();
    if n < 2 {
        return Err(Error::invalid("cube", "signal covariance needs at least 2 pixels"));
    }
    let mut mean = DVector::<f64>::zeros(d);
    for c in cubes {
        for px in c.data().values().chunks_exact(d) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
    }
    mean /= n as f64;
    let mut samples = DMatrix::<f64>::zeros(n, d);
    let mut row = 0;
    for c in cubes {
        for px in c.data().values().chunks_exact(d) {
            for (b, &v) in px.iter().enumerate() {
                samples[(row, b)] = v - mean[b];
            }
            row += 1;
        }
    }
    let mut matrix = samples.tr_mul(&samples);
    matrix /= n as f64;
    crate::linalg::symmetrize(&mut matrix);
    Ok(CovarianceEstimate {
        matrix,
        samples: n,
        centered: true,
        mean: Some(mean),
        gain: ResidualGain::Raw,
        status: if n < d {
            CovarianceStatus::Underdetermined
        } else {
            CovarianceStatus::Ok
        },
    })
}
