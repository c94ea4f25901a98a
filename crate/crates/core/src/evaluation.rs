//! Retrieval scoring, the method x k x window sweep, and a Gaussian
//! total-correlation diagnostic.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::cube::{cube_to_matrix, ProfileCube, SpectralCube};
use crate::decomposition::{self, LinearBasis, Method, ScoreCube};
use crate::error::{Error, Result};
use crate::features::{extract_neighborhood, DesignMatrix};
use crate::linalg;
use crate::noise::{self, ResidualGain};
use crate::retrieval::{self, RetrievalModel};

/// Default shrinkage of the joint correlation matrix toward identity.
pub const DEFAULT_SHRINKAGE: f64 = 1e-6;

/// Per-level RMSE: `sqrt(mean_i (y_ij - ŷ_ij)²)` for every column `j`.
pub fn rmse_profile(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<Vec<f64>> {
    if truth.shape() != pred.shape() {
        return Err(Error::DimensionMismatch {
            what: "prediction shape",
            expected: truth.nrows() * truth.ncols(),
            found: pred.nrows() * pred.ncols(),
        });
    }
    let n = truth.nrows();
    if n == 0 {
        return Err(Error::invalid("targets", "need at least one sample"));
    }
    Ok(truth
        .column_iter()
        .zip(pred.column_iter())
        .map(|(t, p)| {
            let sse: f64 = t.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            libm::sqrt(sse / n as f64)
        })
        .collect())
}

pub fn mean_rmse(per_level: &[f64]) -> Result<f64> {
    if per_level.is_empty() {
        return Err(Error::invalid("per-level rmse", "empty"));
    }
    Ok(per_level.iter().sum::<f64>() / per_level.len() as f64)
}

/// Gaussian total correlation of the joint `[scores, targets]` sample, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalCorrelation {
    /// `T([X_p, Y])`.
    pub joint: f64,
    /// `T(X_p)`, the redundancy among the inputs alone.
    pub inputs: f64,
    /// `T([X_p, Y]) - T(X_p)`.
    pub joint_minus_inputs: f64,
}

/// `T = -½ log det R` for the sample correlation matrix `R`, shrunk as
/// `(1 - s) R + s I`. Exact for jointly Gaussian variables; a proxy otherwise.
pub fn gaussian_total_correlation(
    scores: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    shrinkage: f64,
) -> Result<TotalCorrelation> {
    let n = scores.nrows();
    if targets.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "target rows",
            expected: n,
            found: targets.nrows(),
        });
    }
    let (k, o) = (scores.ncols(), targets.ncols());
    if n <= k + o {
        return Err(Error::invalid(
            "samples",
            alloc::format!("need more than k + o = {} samples, got {n}", k + o),
        ));
    }
    if !(0.0..1.0).contains(&shrinkage) {
        return Err(Error::invalid("shrinkage", "must lie in [0, 1)"));
    }
    let mut joint = DMatrix::<f64>::zeros(n, k + o);
    joint.columns_mut(0, k).copy_from(scores);
    joint.columns_mut(k, o).copy_from(targets);
    let corr = correlation(&joint, shrinkage)?;
    let t_joint = -0.5 * log_det_spd(&corr, shrinkage)?;
    let t_inputs = if k > 0 {
        -0.5 * log_det_spd(&corr.view((0, 0), (k, k)).into_owned(), shrinkage)?
    } else {
        0.0
    };
    Ok(TotalCorrelation {
        joint: t_joint,
        inputs: t_inputs,
        joint_minus_inputs: t_joint - t_inputs,
    })
}

fn correlation(x: &DMatrix<f64>, shrinkage: f64) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = libm::sqrt(col.norm_squared() / n);
        if !(sd > 0.0) {
            return Err(Error::SingularCorrelation { shrinkage });
        }
        col /= sd;
    }
    let mut r = z.tr_mul(&z) / n;
    linalg::symmetrize(&mut r);
    let p = r.nrows();
    r *= 1.0 - shrinkage;
    for i in 0..p {
        r[(i, i)] += shrinkage;
    }
    Ok(r)
}

fn log_det_spd(a: &DMatrix<f64>, shrinkage: f64) -> Result<f64> {
    let l = linalg::cholesky(a, 0.0).map_err(|_| Error::SingularCorrelation { shrinkage })?;
    Ok(2.0 * l.diagonal().iter().map(|v| libm::log(*v)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Paired spectral and profile cubes of one scene.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub spectral: &'a SpectralCube,
    pub profile: &'a ProfileCube,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub windows: Vec<usize>,
    /// Regression ridge.
    pub ridge: f64,
    /// Relative MNF noise ridge.
    pub noise_ridge: f64,
    pub gain: ResidualGain,
    /// Also emit rows scored on the training scenes.
    pub include_train: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            methods: alloc::vec![Method::Pca, Method::Mnf],
            ks: alloc::vec![5, 10, 20],
            windows: alloc::vec![1, 3],
            ridge: 0.0,
            noise_ridge: decomposition::DEFAULT_NOISE_RIDGE,
            gain: ResidualGain::Raw,
            include_train: false,
        }
    }
}

/// Bases fitted once per method at the largest requested `k`, with every
/// scene already projected.
#[derive(Debug, Clone)]
pub struct PreparedMethod {
    pub basis: LinearBasis,
    pub train_scores: Vec<ScoreCube>,
    pub test_scores: Vec<ScoreCube>,
}

#[derive(Debug, Clone)]
pub struct PreparedSweep {
    pub methods: Vec<(Method, PreparedMethod)>,
    pub train_targets: DMatrix<f64>,
    pub test_targets: DMatrix<f64>,
    pub pressure_axis: Vec<f64>,
}

fn stack_targets(samples: &[Sample<'_>]) -> Result<DMatrix<f64>> {
    let o = samples[0].profile.levels();
    let n: usize = samples.iter().map(|s| s.profile.data().pixel_count()).sum();
    let mut out = DMatrix::<f64>::zeros(n, o);
    let mut row = 0;
    for s in samples {
        if s.profile.levels() != o {
            return Err(Error::DimensionMismatch {
                what: "profile levels",
                expected: o,
                found: s.profile.levels(),
            });
        }
        if !s.profile.data().same_grid(s.spectral.data()) {
            return Err(Error::invalid("profile", "grid differs from its spectral cube"));
        }
        let (m, _) = cube_to_matrix(s.profile.data());
        out.view_mut((row, 0), (m.nrows(), o)).copy_from(&m);
        row += m.nrows();
    }
    Ok(out)
}

/// Fits one basis from the training scenes only.
pub fn fit_basis(
    method: Method,
    train: &[&SpectralCube],
    k: usize,
    noise_ridge: f64,
    gain: ResidualGain,
) -> Result<LinearBasis> {
    let signal = noise::signal_covariance_many(train)?;
    match method {
        Method::Pca => decomposition::fit_pca(&signal, k),
        Method::Mnf => {
            let residuals = train
                .iter()
                .map(|c| noise::paraboloid_residual_filter_with(c, gain))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&noise::NoiseCube> = residuals.iter().collect();
            let noise_cov = noise::noise_covariance_many(&refs)?;
            decomposition::fit_mnf(&signal, &noise_cov, k, noise_ridge)
        }
    }
}

pub fn prepare_sweep(
    train: &[Sample<'_>],
    test: &[Sample<'_>],
    settings: &SweepSettings,
) -> Result<PreparedSweep> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("scenes", "need at least one train and one test scene"));
    }
    let d = train[0].spectral.bands();
    let max_k = settings.ks.iter().copied().max().unwrap_or(0);
    if max_k == 0 || max_k > d {
        return Err(Error::invalid(
            "k grid",
            alloc::format!("max k must be in 1..={d}, got {max_k}"),
        ));
    }
    let train_targets = stack_targets(train)?;
    let test_targets = stack_targets(test)?;
    if train_targets.ncols() != test_targets.ncols() {
        return Err(Error::DimensionMismatch {
            what: "test profile levels",
            expected: train_targets.ncols(),
            found: test_targets.ncols(),
        });
    }
    let spectra: Vec<&SpectralCube> = train.iter().map(|s| s.spectral).collect();
    let mut methods = Vec::new();
    for &method in &settings.methods {
        let basis = fit_basis(method, &spectra, max_k, settings.noise_ridge, settings.gain)?;
        let project_all = |set: &[Sample<'_>]| -> Result<Vec<ScoreCube>> {
            set.iter().map(|s| decomposition::project(s.spectral, &basis)).collect()
        };
        let train_scores = project_all(train)?;
        let test_scores = project_all(test)?;
        methods.push((
            method,
            PreparedMethod {
                basis,
                train_scores,
                test_scores,
            },
        ));
    }
    Ok(PreparedSweep {
        methods,
        train_targets,
        test_targets,
        pressure_axis: train[0].profile.pressure_axis().to_vec(),
    })
}

/// Per-level RMSE of one fitted cell on both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    pub model: RetrievalModel,
}

pub fn design_for(scores: &[ScoreCube], k: usize, w: usize) -> Result<DesignMatrix> {
    let parts = scores
        .iter()
        .map(|s| extract_neighborhood(&s.truncate(k)?, w))
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::stack(&parts)
}

impl PreparedSweep {
    pub fn method(&self, method: Method) -> Option<&PreparedMethod> {
        self.methods.iter().find(|(m, _)| *m == method).map(|(_, p)| p)
    }

    pub fn run_cell(&self, method: Method, k: usize, w: usize, ridge: f64) -> Result<CellScores> {
        let prepared = self
            .method(method)
            .ok_or_else(|| Error::invalid("method", "not prepared"))?;
        let train_x = design_for(&prepared.train_scores, k, w)?;
        let test_x = design_for(&prepared.test_scores, k, w)?;
        let mut model = retrieval::fit_linear(&train_x, &self.train_targets, ridge)?;
        model.meta.method = Some(method);
        let train = rmse_profile(&self.train_targets, &retrieval::predict(&model, &train_x)?)?;
        let test = rmse_profile(&self.test_targets, &retrieval::predict(&model, &test_x)?)?;
        Ok(CellScores { train, test, model })
    }
}

/// Identifies one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub method: Method,
    pub k: usize,
    pub w: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub key: CellKey,
    pub split: Split,
    pub mean_rmse: f64,
    pub per_level: Vec<f64>,
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub key: CellKey,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
    pub pressure_axis: Vec<f64>,
}

impl SweepResult {
    /// Orders rows by `(method, k, w, seed, split)` so output never depends on
    /// execution order.
    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.key, r.split));
        self.failures.sort_by_key(|f| f.key);
    }

    pub fn get(&self, key: CellKey, split: Split) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.key == key && r.split == split)
    }
}

pub fn cell_keys(settings: &SweepSettings, seed: u64) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for &method in &settings.methods {
        for &k in &settings.ks {
            for &w in &settings.windows {
                keys.push(CellKey { method, k, w, seed });
            }
        }
    }
    keys
}

/// Converts a cell outcome into result rows (test, then train when requested).
pub fn rows_for_cell(key: CellKey, scores: &CellScores, include_train: bool, wall_ms: Option<u64>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(2);
    rows.push(SweepRow {
        key,
        split: Split::Test,
        mean_rmse: mean_rmse(&scores.test)?,
        per_level: scores.test.clone(),
        wall_ms,
    });
    if include_train {
        rows.push(SweepRow {
            key,
            split: Split::Train,
            mean_rmse: mean_rmse(&scores.train)?,
            per_level: scores.train.clone(),
            wall_ms,
        });
    }
    Ok(rows)
}

/// Sequential sweep over one train/test set. Bases are fitted on the
/// training scenes only and applied to both.
pub fn run_sweep(
    train: &[Sample<'_>],
    test: &[Sample<'_>],
    settings: &SweepSettings,
    seed: u64,
) -> Result<SweepResult> {
    let prepared = prepare_sweep(train, test, settings)?;
    let mut result = SweepResult {
        pressure_axis: prepared.pressure_axis.clone(),
        ..SweepResult::default()
    };
    for key in cell_keys(settings, seed) {
        match prepared.run_cell(key.method, key.k, key.w, settings.ridge) {
            Ok(scores) => result
                .rows
                .extend(rows_for_cell(key, &scores, settings.include_train, None)?),
            Err(error) => result.failures.push(CellFailure { key, error }),
        }
    }
    result.sort();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rmse_examples() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rmse_profile(&y, &y).unwrap(), vec![0.0, 0.0]);
        let shifted = y.add_scalar(-2.5);
        for v in rmse_profile(&y, &shifted).unwrap() {
            assert!((v - 2.5).abs() < 1e-15);
        }
        let one = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let err = DMatrix::from_row_slice(1, 2, &[3.0, -4.0]);
        assert_eq!(rmse_profile(&one, &err).unwrap(), vec![3.0, 4.0]);
        assert!(rmse_profile(&one, &y).is_err());
    }

    #[test]
    fn mean_rmse_examples() {
        assert_eq!(mean_rmse(&[3.0, 4.0]).unwrap(), 3.5);
        assert_eq!(mean_rmse(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(mean_rmse(&[2.25; 7]).unwrap(), 2.25);
        assert!(mean_rmse(&[]).is_err());
    }

    #[test]
    fn rmse_matches_transposed_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y = DMatrix::from_fn(40, 5, |_, _| StandardNormal.sample(&mut rng));
        let p = DMatrix::from_fn(40, 5, |_, _| StandardNormal.sample(&mut rng));
        let direct = rmse_profile(&y, &p).unwrap();
        // row-wise accumulation over the transposed error matrix
        let e = (&y - &p).transpose();
        let mut acc = vec![0.0; 5];
        for s in 0..40 {
            for (j, a) in acc.iter_mut().enumerate() {
                *a += e[(j, s)] * e[(j, s)];
            }
        }
        for (d, a) in direct.iter().zip(acc) {
            assert!((d - libm::sqrt(a / 40.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn total_correlation_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let rho: f64 = 0.8;
        let mut x = DMatrix::<f64>::zeros(n, 1);
        let mut y = DMatrix::<f64>::zeros(n, 1);
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = a;
            y[(i, 0)] = rho * a + libm::sqrt(1.0 - rho * rho) * b;
        }
        let t = gaussian_total_correlation(&x, &y, DEFAULT_SHRINKAGE).unwrap();
        let expect = -0.5 * libm::log(1.0 - rho * rho);
        assert!((expect - 0.5108).abs() < 1e-4);
        assert!((t.joint - expect).abs() < 0.01, "{}", t.joint);
        assert!(t.inputs.abs() < 1e-12);
    }

    #[test]
    fn independent_variables_have_small_total_correlation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(10_000, 2, |_, _| StandardNormal.sample(&mut rng));
        let y = DMatrix::from_fn(10_000, 2, |_, _| StandardNormal.sample(&mut rng));
        let t = gaussian_total_correlation(&x, &y, DEFAULT_SHRINKAGE).unwrap();
        assert!(t.joint >= 0.0 && t.joint <= 0.01);
    }

    #[test]
    fn singular_correlation_reported() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64);
        let y = x.clone();
        assert!(matches!(
            gaussian_total_correlation(&x, &y, 0.0),
            Err(Error::SingularCorrelation { .. })
        ));
        let c = DMatrix::from_element(20, 1, 1.0);
        assert!(gaussian_total_correlation(&x, &c, 0.1).is_err());
        // shrinkage makes a duplicated column finite
        assert!(gaussian_total_correlation(&x, &y, 1e-3).unwrap().joint.is_finite());
    }

    #[test]
    fn sweep_cells_all_present_once() {
        use crate::synth::{generate_orbits, SceneConfig};
        let cfg = SceneConfig {
            rows: 24,
            cols: 16,
            bands: 12,
            levels: 3,
            latent_count: 4,
            orbits: 3,
            ..SceneConfig::default()
        };
        let scenes = generate_orbits(&cfg).unwrap();
        let samples: Vec<Sample<'_>> = scenes
            .iter()
            .map(|s| Sample { spectral: &s.spectral, profile: &s.profile })
            .collect();
        let settings = SweepSettings {
            ks: vec![2, 4],
            windows: vec![1, 3],
            include_train: true,
            ..SweepSettings::default()
        };
        let r = run_sweep(&samples[..2], &samples[2..], &settings, 9).unwrap();
        assert!(r.failures.is_empty());
        assert_eq!(r.rows.len(), 2 * 2 * 2 * 2);
        let mut keys: Vec<_> = r.rows.iter().map(|row| (row.key, row.split)).collect();
        keys.dedup();
        assert_eq!(keys.len(), 16);
    }

    #[test]
    fn sweep_rejects_k_beyond_bands() {
        use crate::synth::{generate_orbits, SceneConfig};
        let cfg = SceneConfig { rows: 8, cols: 8, bands: 4, levels: 2, latent_count: 2, orbits: 2, ..SceneConfig::default() };
        let scenes = generate_orbits(&cfg).unwrap();
        let s: Vec<Sample<'_>> = scenes.iter().map(|s| Sample { spectral: &s.spectral, profile: &s.profile }).collect();
        let settings = SweepSettings { ks: vec![5], ..SweepSettings::default() };
        assert!(run_sweep(&s[..1], &s[1..], &settings, 0).is_err());
    }
}
