//! Spatial neighborhood stacking of score cubes into regression design matrices.
//!
//! Column layout is offset-major: offsets are scanned row-major from `(-r, -r)`
//! to `(r, r)` with `r = (w - 1) / 2`, and the `k` components of each offset are
//! contiguous. Column `o * k + j` therefore holds component `j` at offset `o`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::decomposition::ScoreCube;
use crate::error::{Error, Result};

/// Name of the only column ordering produced, recorded in model metadata.
pub const OFFSET_ORDERING: &str = "offset_major_row_scan";

/// How neighbors outside the grid are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Reflection about the edge pixel, which is not repeated.
    #[default]
    Mirror,
    /// Clamp to the nearest edge pixel.
    Replicate,
}

impl Padding {
    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        match self {
            Padding::Mirror => crate::noise::mirror(i, n),
            Padding::Replicate => i.clamp(0, n as isize - 1) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// `n_samples x (k * w²)`.
    pub matrix: DMatrix<f64>,
    pub window: usize,
    pub components: usize,
    pub ordering: &'static str,
    /// `(row, col)` of the centre pixel of every sample.
    pub coords: Vec<(usize, usize)>,
}

impl DesignMatrix {
    pub fn samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn features(&self) -> usize {
        self.matrix.ncols()
    }

    /// Concatenates samples from several matrices with identical layout.
    pub fn stack(parts: &[DesignMatrix]) -> Result<DesignMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("design matrices", "nothing to stack"))?;
        let p = first.features();
        for part in parts {
            if part.window != first.window || part.components != first.components {
                return Err(Error::invalid("design matrices", "layouts differ"));
            }
        }
        let n: usize = parts.iter().map(|d| d.samples()).sum();
        let mut matrix = DMatrix::<f64>::zeros(n, p);
        let mut coords = Vec::with_capacity(n);
        let mut row = 0;
        for part in parts {
            matrix
                .view_mut((row, 0), (part.samples(), p))
                .copy_from(&part.matrix);
            coords.extend_from_slice(&part.coords);
            row += part.samples();
        }
        Ok(DesignMatrix {
            matrix,
            window: first.window,
            components: first.components,
            ordering: OFFSET_ORDERING,
            coords,
        })
    }
}

pub fn extract_neighborhood(scores: &ScoreCube, w: usize) -> Result<DesignMatrix> {
    extract_neighborhood_with(scores, w, Padding::Mirror)
}

pub fn extract_neighborhood_with(
    scores: &ScoreCube,
    w: usize,
    padding: Padding,
) -> Result<DesignMatrix> {
    let cube = scores.data();
    let (rows, cols, k) = (cube.rows(), cube.cols(), cube.depth());
    if w.is_multiple_of(2) {
        return Err(Error::invalid("window", alloc::format!("must be odd, got {w}")));
    }
    if w > rows.min(cols) {
        return Err(Error::invalid(
            "window",
            alloc::format!("{w} exceeds the {rows}x{cols} grid"),
        ));
    }
    let r = (w / 2) as isize;
    let n = rows * cols;
    let p = k * w * w;
    let mut matrix = DMatrix::<f64>::zeros(n, p);
    let values = cube.values();
    let mut offset = 0;
    for dr in -r..=r {
        for dc in -r..=r {
            for row in 0..rows {
                let rr = padding.index(row as isize + dr, rows);
                for col in 0..cols {
                    let cc = padding.index(col as isize + dc, cols);
                    let src = (rr * cols + cc) * k;
                    let sample = row * cols + col;
                    for j in 0..k {
                        matrix[(sample, offset * k + j)] = values[src + j];
                    }
                }
            }
            offset += 1;
        }
    }
    let coords = (0..rows)
        .flat_map(|row| (0..cols).map(move |col| (row, col)))
        .collect();
    Ok(DesignMatrix {
        matrix,
        window: w,
        components: k,
        ordering: OFFSET_ORDERING,
        coords,
    })
}
