//! Deterministic synthetic scenes: smooth latent fields mixed into spectra with
//! spatially white per-band noise, and profiles that are linear in the latents.
//!
//! Random draws come from ChaCha8 streams with a fixed assignment, so adding
//! fields to the config never perturbs an existing stream:
//!
//! | stream | seed          | draws                  |
//! |--------|---------------|------------------------|
//! | 0      | `seed`        | latent white noise     |
//! | 1      | `mixing_seed` | spectral mixing matrix |
//! | 2      | `seed`        | additive band noise    |
//! | 3      | `mixing_seed` | profile loadings       |

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cube::{Cube, ProfileCube, SpectralCube};
use crate::error::{Error, Result};

const LATENT_STREAM: u64 = 0;
const MIXING_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const LOADING_STREAM: u64 = 3;

/// Length scale (pixels) used when `correlated_noise` is set.
const CORRELATED_NOISE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub levels: usize,
    pub latent_count: usize,
    /// Squared-exponential smoothing length of the latents, in pixels.
    pub length_scale: f64,
    pub mixing_seed: u64,
    /// Per-band noise standard deviation; `None` selects [`default_noise_std`].
    pub noise_std: Option<Vec<f64>>,
    pub correlated_noise: bool,
    pub nonlinearity: f64,
    pub seed: u64,
    /// Number of scenes written by the `synth` command; the last is the test scene.
    pub orbits: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            rows: 128,
            cols: 32,
            bands: 64,
            levels: 16,
            latent_count: 16,
            length_scale: 4.0,
            mixing_seed: 7,
            noise_std: None,
            correlated_noise: false,
            nonlinearity: 0.1,
            seed: 1,
            orbits: 4,
        }
    }
}

/// Quiet bands everywhere except a strongly noisy block in the upper part of
/// the spectrum, loosely like a detector band edge.
pub fn default_noise_std(bands: usize) -> Vec<f64> {
    (0..bands)
        .map(|b| {
            let t = if bands > 1 {
                b as f64 / (bands - 1) as f64
            } else {
                0.0
            };
            let z = (t - 0.8) / 0.06;
            0.3 + 4.0 * libm::exp(-z * z)
        })
        .collect()
}

impl SceneConfig {
    pub fn noise_profile(&self) -> Vec<f64> {
        self.noise_std
            .clone()
            .unwrap_or_else(|| default_noise_std(self.bands))
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("rows", self.rows),
            ("cols", self.cols),
            ("bands", self.bands),
            ("levels", self.levels),
            ("latent_count", self.latent_count),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        let cap = self.bands.min(self.rows * self.cols);
        if self.latent_count > cap {
            return Err(Error::invalid(
                "latent_count",
                alloc::format!("{} exceeds min(bands, rows*cols) = {cap}", self.latent_count),
            ));
        }
        if !(self.length_scale >= 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid("length_scale", "must be finite and non-negative"));
        }
        if !(self.nonlinearity >= 0.0 && self.nonlinearity.is_finite()) {
            return Err(Error::invalid("nonlinearity", "must be finite and non-negative"));
        }
        if let Some(std) = &self.noise_std {
            if std.len() != self.bands {
                return Err(Error::invalid(
                    "noise_std",
                    alloc::format!("has {} entries, expected bands = {}", std.len(), self.bands),
                ));
            }
            if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::invalid("noise_std", "entries must be finite and non-negative"));
            }
        }
        if self.orbits == 0 {
            return Err(Error::invalid("orbits", "must be positive"));
        }
        Ok(())
    }

    /// Config for scene `index` of a multi-scene set: same mixing, fresh fields.
    pub fn orbit(&self, index: usize) -> SceneConfig {
        SceneConfig {
            seed: derive_seed(self.seed, index as u64),
            ..self.clone()
        }
    }
}

/// SplitMix64 finalizer over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spectral: SpectralCube,
    pub profile: ProfileCube,
    /// `rows x cols x latent_count` unit-variance smooth fields.
    pub latents: Cube,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Normalized squared-exponential taps with unit sum of squares, so that
/// smoothing unit white noise along one axis keeps unit variance.
fn se_taps(length_scale: f64) -> Vec<f64> {
    if length_scale <= 0.0 {
        return vec![1.0];
    }
    let radius = libm::ceil(3.0 * length_scale) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|t| {
            let t = t as f64 / length_scale;
            libm::exp(-0.5 * t * t)
        })
        .collect();
    let norm = libm::sqrt(taps.iter().map(|t| t * t).sum::<f64>());
    for t in &mut taps {
        *t /= norm;
    }
    taps
}

/// Smooth stationary field: white noise on a padded grid, separable
/// convolution, then cropped so the border sees no edge effects.
fn smooth_field(rows: usize, cols: usize, taps: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pad = taps.len() / 2;
    let (pr, pc) = (rows + 2 * pad, cols + 2 * pad);
    let white: Vec<f64> = (0..pr * pc).map(|_| StandardNormal.sample(rng)).collect();
    // along columns, keeping all padded rows
    let mut horiz = vec![0.0; pr * cols];
    for r in 0..pr {
        for c in 0..cols {
            let base = r * pc + c;
            horiz[r * cols + c] = taps.iter().enumerate().map(|(t, w)| w * white[base + t]).sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = taps
                .iter()
                .enumerate()
                .map(|(t, w)| w * horiz[(r + t) * cols + c])
                .sum();
        }
    }
    out
}

/// Log-spaced pressure levels from 1000 hPa up to 10 hPa.
pub fn pressure_levels(levels: usize) -> Vec<f64> {
    if levels == 1 {
        return vec![1000.0];
    }
    (0..levels)
        .map(|j| 1000.0 * libm::pow(0.01, j as f64 / (levels - 1) as f64))
        .collect()
}

pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let (rows, cols, d, o, q) = (
        config.rows,
        config.cols,
        config.bands,
        config.levels,
        config.latent_count,
    );
    let n = rows * cols;

    let mut rng = stream(config.seed, LATENT_STREAM);
    let taps = se_taps(config.length_scale);
    let fields: Vec<Vec<f64>> = (0..q).map(|_| smooth_field(rows, cols, &taps, &mut rng)).collect();
    // n x q, row = pixel
    let latents = DMatrix::from_fn(n, q, |p, j| fields[j][p]);

    let mut rng = stream(config.mixing_seed, MIXING_STREAM);
    let inv_sqrt_q = 1.0 / libm::sqrt(q as f64);
    let mut mixing = DMatrix::<f64>::zeros(q, d);
    for v in mixing.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
        *v *= inv_sqrt_q;
    }

    let mut rng = stream(config.mixing_seed, LOADING_STREAM);
    let mut loading = DMatrix::<f64>::zeros(q, o);
    for v in loading.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }

    let signal = &latents * &mixing;
    let profiles = &latents * &loading;

    let noise_std = config.noise_profile();
    let mut rng = stream(config.seed, NOISE_STREAM);
    let noise_taps = if config.correlated_noise {
        se_taps(CORRELATED_NOISE_SCALE)
    } else {
        vec![1.0]
    };
    let noise_fields: Vec<Vec<f64>> = (0..d)
        .map(|_| smooth_field(rows, cols, &noise_taps, &mut rng))
        .collect();

    let mut spectra = Vec::with_capacity(n * d);
    for p in 0..n {
        for b in 0..d {
            let s = signal[(p, b)];
            spectra.push(s + config.nonlinearity * libm::tanh(s) + noise_std[b] * noise_fields[b][p]);
        }
    }
    let mut profile_values = Vec::with_capacity(n * o);
    for p in 0..n {
        profile_values.extend(profiles.row(p).iter());
    }
    let mut latent_values = Vec::with_capacity(n * q);
    for p in 0..n {
        latent_values.extend(latents.row(p).iter());
    }

    Ok(Scene {
        spectral: SpectralCube::from_cube(Cube::new(rows, cols, d, spectra)?),
        profile: ProfileCube::new(Cube::new(rows, cols, o, profile_values)?, pressure_levels(o))?,
        latents: Cube::new(rows, cols, q, latent_values)?,
    })
}

/// `config.orbits` scenes sharing mixing and loadings.
pub fn generate_orbits(config: &SceneConfig) -> Result<Vec<Scene>> {
    config.validate()?;
    (0..config.orbits).map(|i| generate_scene(&config.orbit(i))).collect()
}
