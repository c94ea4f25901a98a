//! Gridded cubes in band-interleaved-by-pixel order.
//!
//! A cube holds `rows * cols` pixels scanned row-major; each pixel owns `depth`
//! contiguous values. Viewed as a column-major `depth x (rows*cols)` matrix the
//! storage is already the transposed sample matrix, which the covariance and
//! projection kernels exploit directly.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

/// What a cube on disk or in memory represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CubeRole {
    Spectral,
    Profile,
    Noise,
    Scores,
}

impl CubeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CubeRole::Spectral => "spectral",
            CubeRole::Profile => "profile",
            CubeRole::Noise => "noise",
            CubeRole::Scores => "scores",
        }
    }
}

impl fmt::Display for CubeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense rows x cols x depth grid of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    rows: usize,
    cols: usize,
    depth: usize,
    values: Vec<f64>,
}

impl Cube {
    pub fn new(rows: usize, cols: usize, depth: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols, depth)?;
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(depth))
            .ok_or_else(|| Error::invalid("dims", "rows*cols*depth overflows"))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "cube payload length",
                expected,
                found: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Cube {
            rows,
            cols,
            depth,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize, depth: usize) -> Result<Self> {
        check_dims(rows, cols, depth)?;
        Ok(Cube {
            rows,
            cols,
            depth,
            values: alloc::vec![0.0; rows * cols * depth],
        })
    }

    /// Builds a cube from a generator `f(row, col, band)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        depth: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(rows, cols, depth)?;
        let mut values = Vec::with_capacity(rows * cols * depth);
        for r in 0..rows {
            for c in 0..cols {
                for b in 0..depth {
                    values.push(f(r, c, b));
                }
            }
        }
        Cube::new(rows, cols, depth, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.depth;
        &self.values[start..start + self.depth]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.values[(row * self.cols + col) * self.depth + band]
    }

    /// Storage viewed as a column-major `depth x pixels` matrix.
    pub fn as_band_major(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.values, self.depth, self.pixel_count())
    }

    /// One band as a row-major `rows x cols` plane.
    pub fn band_plane(&self, band: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(band)
            .step_by(self.depth)
            .copied()
            .collect()
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        depth: usize,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), rows * cols * depth);
        Cube {
            rows,
            cols,
            depth,
            values,
        }
    }

    pub fn same_grid(&self, other: &Cube) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

fn check_dims(rows: usize, cols: usize, depth: usize) -> Result<()> {
    for (field, v) in [("rows", rows), ("cols", cols), ("depth", depth)] {
        if v == 0 {
            return Err(Error::invalid(field, "must be positive"));
        }
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    let mut count = 0;
    let mut first = None;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            count += 1;
            first.get_or_insert(i);
        }
    }
    match first {
        None => Ok(()),
        Some(first_index) => Err(Error::NonFinite { count, first_index }),
    }
}

/// Radiance or brightness-temperature cube; `bands` is the cube depth.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    data: Cube,
    band_ids: Option<Vec<usize>>,
}

impl SpectralCube {
    pub fn new(data: Cube, band_ids: Option<Vec<usize>>) -> Result<Self> {
        if let Some(ids) = &band_ids {
            if ids.len() != data.depth() {
                return Err(Error::DimensionMismatch {
                    what: "band_ids length",
                    expected: data.depth(),
                    found: ids.len(),
                });
            }
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("band_ids", "must be strictly increasing"));
            }
        }
        Ok(SpectralCube { data, band_ids })
    }

    pub fn from_cube(data: Cube) -> Self {
        SpectralCube {
            data,
            band_ids: None,
        }
    }

    pub fn data(&self) -> &Cube {
        &self.data
    }

    pub fn into_data(self) -> Cube {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.rows
    }

    pub fn cols(&self) -> usize {
        self.data.cols
    }

    pub fn bands(&self) -> usize {
        self.data.depth
    }

    pub fn band_ids(&self) -> Option<&[usize]> {
        self.band_ids.as_deref()
    }
}

/// Target profiles on a pressure axis; `levels` is the cube depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCube {
    data: Cube,
    pressure_axis: Vec<f64>,
}

impl ProfileCube {
    pub fn new(data: Cube, pressure_axis: Vec<f64>) -> Result<Self> {
        if pressure_axis.len() != data.depth() {
            return Err(Error::DimensionMismatch {
                what: "pressure_axis length",
                expected: data.depth(),
                found: pressure_axis.len(),
            });
        }
        check_finite(&pressure_axis)?;
        if !strictly_monotone(&pressure_axis) {
            return Err(Error::invalid("pressure_axis", "must be strictly monotone"));
        }
        Ok(ProfileCube {
            data,
            pressure_axis,
        })
    }

    pub fn data(&self) -> &Cube {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.rows
    }

    pub fn cols(&self) -> usize {
        self.data.cols
    }

    pub fn levels(&self) -> usize {
        self.data.depth
    }

    pub fn pressure_axis(&self) -> &[f64] {
        &self.pressure_axis
    }
}

pub(crate) fn strictly_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1]) || xs.windows(2).all(|w| w[0] > w[1])
}

/// Keeps the bands flagged `true`, recording their original indices.
pub fn apply_band_mask(cube: &SpectralCube, keep: &[bool]) -> Result<SpectralCube> {
    let bands = cube.bands();
    if keep.len() != bands {
        return Err(Error::DimensionMismatch {
            what: "band mask length",
            expected: bands,
            found: keep.len(),
        });
    }
    let kept: Vec<usize> = (0..bands).filter(|&b| keep[b]).collect();
    if kept.is_empty() {
        return Err(Error::invalid("band mask", "at least one band must be kept"));
    }
    let mut values = Vec::with_capacity(cube.data.pixel_count() * kept.len());
    for px in cube.data.values.chunks_exact(bands) {
        values.extend(kept.iter().map(|&b| px[b]));
    }
    let band_ids = match cube.band_ids() {
        Some(orig) => kept.iter().map(|&b| orig[b]).collect(),
        None => kept,
    };
    let depth = band_ids.len();
    Ok(SpectralCube {
        data: Cube::from_parts_unchecked(cube.rows(), cube.cols(), depth, values),
        band_ids: Some(band_ids),
    })
}

/// Row-scan order of the pixels, needed to fold a sample matrix back onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    pub rows: usize,
    pub cols: usize,
}

/// Flattens a cube into an `n x d` sample matrix (row i = pixel i in scan order).
pub fn cube_to_matrix(cube: &Cube) -> (DMatrix<f64>, PixelGrid) {
    let m = cube.as_band_major().transpose();
    (
        m,
        PixelGrid {
            rows: cube.rows,
            cols: cube.cols,
        },
    )
}

pub fn matrix_to_cube(matrix: &DMatrix<f64>, grid: PixelGrid) -> Result<Cube> {
    let n = grid.rows * grid.cols;
    if matrix.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "sample matrix rows",
            expected: n,
            found: matrix.nrows(),
        });
    }
    let values = matrix.transpose().as_slice().to_vec();
    Cube::new(grid.rows, grid.cols, matrix.ncols(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        let e = Cube::new(2, 2, 3, vec![0.0; 11]).unwrap_err();
        assert!(matches!(
            e,
            Error::DimensionMismatch {
                expected: 12,
                found: 11,
                ..
            }
        ));
        let mut v = vec![1.0; 4];
        v[1] = f64::NAN;
        v[3] = f64::INFINITY;
        assert_eq!(
            Cube::new(1, 2, 2, v).unwrap_err(),
            Error::NonFinite {
                count: 2,
                first_index: 1
            }
        );
    }

    #[test]
    fn band_mask_selects_and_records_ids() {
        let c = SpectralCube::from_cube(Cube::new(1, 1, 3, vec![10.0, 20.0, 30.0]).unwrap());
        let m = apply_band_mask(&c, &[true, false, true]).unwrap();
        assert_eq!(m.data().values(), &[10.0, 30.0]);
        assert_eq!(m.band_ids(), Some(&[0, 2][..]));

        let all = apply_band_mask(&c, &[true; 3]).unwrap();
        assert_eq!(all.data(), c.data());
        assert_eq!(all.band_ids(), Some(&[0, 1, 2][..]));

        // a second mask composes onto the original indices
        let again = apply_band_mask(&m, &[false, true]).unwrap();
        assert_eq!(again.band_ids(), Some(&[2][..]));
    }

    #[test]
    fn band_mask_errors() {
        let c = SpectralCube::from_cube(Cube::zeros(1, 1, 3).unwrap());
        assert!(apply_band_mask(&c, &[true]).is_err());
        assert!(apply_band_mask(&c, &[false; 3]).is_err());
    }

    #[test]
    fn full_instrument_mask_keeps_retained_band_count() {
        // 8461 channels, 4699 retained
        let keep: Vec<bool> = (0..8461).map(|b| b < 4699).collect();
        let c = SpectralCube::from_cube(Cube::zeros(1, 1, 8461).unwrap());
        assert_eq!(apply_band_mask(&c, &keep).unwrap().bands(), 4699);
    }

    #[test]
    fn matrix_rows_follow_scan_order() {
        let c = Cube::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (m, grid) = cube_to_matrix(&c);
        assert_eq!((m.nrows(), m.ncols()), (2, 2));
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(m[(1, 1)], 4.0);
        assert_eq!(matrix_to_cube(&m, grid).unwrap(), c);
    }

    #[test]
    fn pressure_axis_must_be_monotone() {
        let d = Cube::zeros(1, 1, 3).unwrap();
        assert!(ProfileCube::new(d.clone(), vec![1000.0, 500.0, 100.0]).is_ok());
        assert!(ProfileCube::new(d.clone(), vec![10.0, 50.0, 100.0]).is_ok());
        assert!(ProfileCube::new(d.clone(), vec![1000.0, 500.0, 600.0]).is_err());
        assert!(ProfileCube::new(d, vec![1000.0, 500.0]).is_err());
    }

    #[test]
    fn band_ids_validated() {
        let d = Cube::zeros(1, 1, 2).unwrap();
        assert!(SpectralCube::new(d.clone(), Some(vec![3, 1])).is_err());
        assert!(SpectralCube::new(d, Some(vec![1, 3])).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cube_strategy() -> impl Strategy<Value = Cube> {
            (1usize..5, 1usize..5, 1usize..6).prop_flat_map(|(r, c, d)| {
                proptest::collection::vec(-1e6f64..1e6, r * c * d)
                    .prop_map(move |v| Cube::new(r, c, d, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn matrix_round_trip_is_bitwise(c in cube_strategy()) {
                let (m, g) = cube_to_matrix(&c);
                let back = matrix_to_cube(&m, g).unwrap();
                prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                                c.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            }

            #[test]
            fn mask_commutes_with_flatten(c in cube_strategy(), seed in any::<u64>()) {
                let keep: Vec<bool> = (0..c.depth()).map(|b| (seed >> (b % 64)) & 1 == 1 || b == 0).collect();
                let s = SpectralCube::from_cube(c.clone());
                let masked = apply_band_mask(&s, &keep).unwrap();
                let (mm, _) = cube_to_matrix(masked.data());
                let (full, _) = cube_to_matrix(&c);
                let cols: Vec<usize> = (0..c.depth()).filter(|&b| keep[b]).collect();
                let selected = full.select_columns(cols.iter());
                prop_assert_eq!(mm, selected);
            }
        }
    }
}
