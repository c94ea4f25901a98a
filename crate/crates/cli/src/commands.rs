//! Subcommand implementations. Each returns `Ok(())` or an error carrying its
//! exit code; `main` only parses flags and maps the result.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mnfret_core::decomposition::{self, cumulative_signal_curve, eigenvalue_curve, signal_fraction};
use mnfret_core::evaluation::{fit_basis, rmse_profile};
use mnfret_core::features::DesignMatrix;
use mnfret_core::synth::{generate_orbits, SceneConfig};
use mnfret_core::{
    cube_to_matrix, extract_neighborhood, matrix_to_cube, project, Cube, LinearBasis, Method, PixelGrid,
    ProfileCube, ResidualGain, SpectralCube,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::format::{self, AnyCube};
use crate::manifest::RunManifest;
use crate::pgm;
use crate::sweep::{self, SweepConfig};

/// Environment fallback for `sweep --jobs`.
pub const JOBS_ENV: &str = "MNF_RETRIEVE_JOBS";

#[derive(Debug, Parser)]
#[command(name = "mnfret", version, about = "Noise-aware PCA/MNF decomposition and linear profile retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic spectral/profile cube pairs (orbit0, orbit1, ...).
    Synth(SynthArgs),
    /// Fit a PCA or MNF basis on training cubes and write its eigenvalue curve.
    Fit(FitArgs),
    /// Fit a retrieval model (with --targets) or predict profiles (with --model).
    Retrieve(RetrieveArgs),
    /// Run a method x k x w x seed sweep and write the result tables.
    Sweep(SweepArgs),
    /// Export component score maps as 16-bit PGM images.
    ExportComponents(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene config JSON; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override `mixing_seed`.
    #[arg(long)]
    pub mixing_seed: Option<u64>,
    /// Override `orbits`.
    #[arg(long)]
    pub orbits: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Pca,
    Mnf,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Pca => Method::Pca,
            MethodArg::Mnf => Method::Mnf,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Training spectral cube; repeat for several scenes.
    #[arg(long = "train", required = true)]
    pub train: Vec<PathBuf>,
    /// Components to keep.
    #[arg(long)]
    pub k: usize,
    /// MNF noise ridge, relative to the mean noise variance.
    #[arg(long, default_value_t = decomposition::DEFAULT_NOISE_RIDGE)]
    pub ridge: f64,
    /// Scale noise residuals by 3/2 so white noise keeps unit gain.
    #[arg(long)]
    pub unit_gain: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Basis written by `fit`.
    #[arg(long)]
    pub basis: PathBuf,
    /// Model written by an earlier `retrieve`; switches to prediction.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Spectral cube; repeat for several scenes.
    #[arg(long = "cube", required = true)]
    pub cubes: Vec<PathBuf>,
    /// Profile cube paired with each --cube, in order.
    #[arg(long = "targets")]
    pub targets: Vec<PathBuf>,
    /// Odd neighborhood width. Defaults to 1, or to the model's width.
    #[arg(long)]
    pub w: Option<usize>,
    /// Leading components to use. Defaults to all, or to the model's k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Regression ridge.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep config JSON; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; falls back to MNF_RETRIEVE_JOBS, then to all cores.
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    /// Keep finished cells from an earlier run in --out and compute only the rest.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Basis written by `fit`.
    #[arg(long)]
    pub basis: PathBuf,
    /// Spectral cube to project.
    #[arg(long)]
    pub cube: PathBuf,
    /// Component indices, e.g. `0-49` or `0,3,7-9` (0-based, ranges inclusive).
    #[arg(long)]
    pub indices: String,
    /// Export only rows `start:end` (end exclusive), e.g. half an orbit.
    #[arg(long)]
    pub rows: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Retrieve(a) => cmd_retrieve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::ExportComponents(a) => cmd_export_components(&a),
    }
}

/// Parses a JSON config, naming the offending field on error.
pub fn read_config<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::Config {
            path: path.to_path_buf(),
            reason: format!("field `{field}`: {}", e.into_inner()),
        }
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn push_pair(out: &mut Vec<PathBuf>, pair: (PathBuf, PathBuf)) {
    out.push(pair.0);
    out.push(pair.1);
}

fn add_cube_inputs(manifest: &mut RunManifest, path: &Path) -> CliResult<()> {
    let (json, bin) = format::artifact_paths(path);
    manifest.add_input(&json)?;
    manifest.add_input(&bin)
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut config: SceneConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => SceneConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.mixing_seed {
        config.mixing_seed = s;
    }
    if let Some(o) = args.orbits {
        config.orbits = o;
    }
    config.validate().map_err(|e| CliError::Config {
        path: args.config.clone().unwrap_or_else(|| PathBuf::from("<defaults>")),
        reason: e.to_string(),
    })?;
    let scenes = generate_orbits(&config)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("synth", to_value(&config), Some(config.seed));
    if let Some(p) = &args.config {
        manifest.add_input(p)?;
    }
    let mut outputs = Vec::new();
    for (i, scene) in scenes.into_iter().enumerate() {
        push_pair(
            &mut outputs,
            format::save_cube(&AnyCube::Spectral(scene.spectral), &args.out.join(format!("orbit{i}_spectral")))?,
        );
        push_pair(
            &mut outputs,
            format::save_cube(&AnyCube::Profile(scene.profile), &args.out.join(format!("orbit{i}_profile")))?,
        );
    }
    manifest.finish(&args.out, &outputs)?;
    Ok(())
}

fn load_spectral_all(paths: &[PathBuf]) -> CliResult<Vec<SpectralCube>> {
    paths.iter().map(|p| format::load_spectral(p)).collect()
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let method = Method::from(args.method);
    if !(args.ridge >= 0.0 && args.ridge.is_finite()) {
        return Err(CliError::usage("--ridge must be finite and non-negative"));
    }
    let train = load_spectral_all(&args.train)?;
    let d = train[0].bands();
    if args.k == 0 || args.k > d {
        return Err(CliError::usage(format!("--k must be in 1..={d}, got {}", args.k)));
    }
    let gain = if args.unit_gain {
        ResidualGain::UnitWhiteNoise
    } else {
        ResidualGain::Raw
    };
    let refs: Vec<&SpectralCube> = train.iter().collect();
    // the full spectrum feeds the eigenvalue curve; the saved basis keeps k
    let full = fit_basis(method, &refs, d, args.ridge, gain)?;
    let basis = full.truncate(args.k)?;

    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    push_pair(&mut outputs, format::save_basis(&basis, &args.out.join("basis"))?);
    outputs.push(write_eigen_csv(&full, &args.out.join("eigenvalues.csv"))?);

    #[derive(Serialize)]
    struct FitConfig {
        method: Method,
        k: usize,
        ridge: f64,
        gain: ResidualGain,
        train: Vec<PathBuf>,
    }
    let mut manifest = RunManifest::new(
        "fit",
        to_value(&FitConfig {
            method,
            k: args.k,
            ridge: args.ridge,
            gain,
            train: args.train.clone(),
        }),
        None,
    );
    for p in &args.train {
        add_cube_inputs(&mut manifest, p)?;
    }
    manifest.finish(&args.out, &outputs)?;
    Ok(())
}

/// `index,eigenvalue,cumulative_normalized` plus, for MNF,
/// `signal_fraction,cumulative_signal`.
fn write_eigen_csv(basis: &LinearBasis, path: &Path) -> CliResult<PathBuf> {
    let curve = eigenvalue_curve(basis);
    let mut text = String::from("index,eigenvalue,cumulative_normalized");
    let mnf = basis.method == Method::Mnf;
    let (fraction, signal_curve) = if mnf {
        text.push_str(",signal_fraction,cumulative_signal");
        (signal_fraction(basis)?, cumulative_signal_curve(basis)?.values)
    } else {
        (Vec::new(), Vec::new())
    };
    text.push('\n');
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        text.push_str(&format!("{i},{l},{}", curve.values[i]));
        if mnf {
            text.push_str(&format!(",{},{}", fraction[i], signal_curve[i]));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn design_for_cubes(cubes: &[SpectralCube], basis: &LinearBasis, w: usize) -> CliResult<DesignMatrix> {
    let parts = cubes
        .iter()
        .map(|c| Ok(extract_neighborhood(&project(c, basis)?, w)?))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(DesignMatrix::stack(&parts)?)
}

fn stack_profiles(profiles: &[ProfileCube]) -> DMatrixF {
    let o = profiles[0].levels();
    let n: usize = profiles.iter().map(|p| p.data().pixel_count()).sum();
    let mut out = DMatrixF::zeros(n, o);
    let mut row = 0;
    for p in profiles {
        let (m, _) = cube_to_matrix(p.data());
        out.view_mut((row, 0), (m.nrows(), o)).copy_from(&m);
        row += m.nrows();
    }
    out
}

type DMatrixF = mnfret_core::nalgebra::DMatrix<f64>;

fn write_rmse_csv(path: &Path, per_level: &[f64], axis: &[f64]) -> CliResult<PathBuf> {
    let mut text = String::from("level,pressure,rmse\n");
    for (i, r) in per_level.iter().enumerate() {
        let p = axis.get(i).map(f64::to_string).unwrap_or_default();
        text.push_str(&format!("{i},{p},{r}\n"));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn cmd_retrieve(args: &RetrieveArgs) -> CliResult<()> {
    if let Some(w) = args.w {
        if w % 2 == 0 {
            return Err(CliError::usage(format!("--w must be odd, got {w}")));
        }
    }
    if !(args.ridge >= 0.0 && args.ridge.is_finite()) {
        return Err(CliError::usage("--ridge must be finite and non-negative"));
    }
    if !args.targets.is_empty() && args.targets.len() != args.cubes.len() {
        return Err(CliError::usage(format!(
            "{} --targets given for {} --cube",
            args.targets.len(),
            args.cubes.len()
        )));
    }
    let full_basis = format::load_basis(&args.basis)?;
    let cubes = load_spectral_all(&args.cubes)?;
    for (c, p) in cubes.iter().zip(&args.cubes) {
        if c.bands() != full_basis.dim() {
            return Err(CliError::usage(format!(
                "{} has {} bands, the basis expects {}",
                p.display(),
                c.bands(),
                full_basis.dim()
            )));
        }
    }
    let targets = args
        .targets
        .iter()
        .map(|p| format::load_profile(p))
        .collect::<CliResult<Vec<_>>>()?;
    for ((c, t), p) in cubes.iter().zip(&targets).zip(&args.targets) {
        if !c.data().same_grid(t.data()) || t.levels() != targets[0].levels() {
            return Err(CliError::usage(format!(
                "{} does not match its spectral cube grid or the other targets",
                p.display()
            )));
        }
    }
    create_dir(&args.out)?;
    let mut outputs = Vec::new();

    #[derive(Serialize)]
    struct RetrieveConfig<'a> {
        mode: &'a str,
        basis: &'a Path,
        model: Option<&'a Path>,
        cubes: &'a [PathBuf],
        targets: &'a [PathBuf],
        k: usize,
        w: usize,
        ridge: f64,
    }

    let (mode, k, w, ridge) = match &args.model {
        None => {
            if targets.is_empty() {
                return Err(CliError::usage("fitting a model needs --targets (or pass --model to predict)"));
            }
            let k = args.k.unwrap_or(full_basis.k());
            let w = args.w.unwrap_or(1);
            let basis = truncate_basis(&full_basis, k)?;
            let x = design_for_cubes(&cubes, &basis, w)?;
            let y = stack_profiles(&targets);
            let mut model = mnfret_core::fit_linear(&x, &y, args.ridge)?;
            model.meta.method = Some(basis.method);
            model.meta.data_hash = Some(crate::manifest::sha256_file(&format::artifact_paths(&args.basis).1)?);
            let axis = targets[0].pressure_axis();
            push_pair(&mut outputs, format::save_model(&model, Some(axis), &args.out.join("model"))?);
            let pred = mnfret_core::predict(&model, &x)?;
            let per_level = rmse_profile(&y, &pred)?;
            outputs.push(write_rmse_csv(&args.out.join("rmse.csv"), &per_level, axis)?);
            ("fit", k, w, args.ridge)
        }
        Some(model_path) => {
            let (model, header) = format::load_model(model_path)?;
            let k = header.k.unwrap_or(full_basis.k());
            let w = header.w.unwrap_or(1);
            if args.k.is_some_and(|a| a != k) || args.w.is_some_and(|a| a != w) {
                return Err(CliError::usage(format!("the model was trained with k = {k}, w = {w}")));
            }
            if header.method.is_some_and(|m| m != full_basis.method) {
                return Err(CliError::usage("the model was trained on a different decomposition method"));
            }
            let basis = truncate_basis(&full_basis, k)?;
            if model.features() != k * w * w {
                return Err(CliError::usage(format!(
                    "model expects {} features, k = {k} and w = {w} give {}",
                    model.features(),
                    k * w * w
                )));
            }
            let axis = header
                .pressure_axis
                .clone()
                .unwrap_or_else(|| (0..model.levels()).map(|i| i as f64).collect());
            let mut preds = Vec::new();
            for (cube, path) in cubes.iter().zip(&args.cubes) {
                let x = design_for_cubes(std::slice::from_ref(cube), &basis, w)?;
                let pred = mnfret_core::predict(&model, &x)?;
                let grid = PixelGrid {
                    rows: cube.rows(),
                    cols: cube.cols(),
                };
                let profile = ProfileCube::new(matrix_to_cube(&pred, grid)?, axis.clone())?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "cube".into());
                push_pair(
                    &mut outputs,
                    format::save_cube(&AnyCube::Profile(profile), &args.out.join(format!("{stem}_pred")))?,
                );
                preds.push(pred);
            }
            if !targets.is_empty() {
                let y = stack_profiles(&targets);
                let mut pred = DMatrixF::zeros(y.nrows(), y.ncols());
                let mut row = 0;
                for p in &preds {
                    if p.ncols() != y.ncols() {
                        return Err(CliError::usage("targets and model disagree on the number of levels"));
                    }
                    pred.view_mut((row, 0), p.shape()).copy_from(p);
                    row += p.nrows();
                }
                let per_level = rmse_profile(&y, &pred)?;
                outputs.push(write_rmse_csv(&args.out.join("rmse.csv"), &per_level, &axis)?);
            }
            ("predict", k, w, model.ridge)
        }
    };

    let mut manifest = RunManifest::new(
        "retrieve",
        to_value(&RetrieveConfig {
            mode,
            basis: &args.basis,
            model: args.model.as_deref(),
            cubes: &args.cubes,
            targets: &args.targets,
            k,
            w,
            ridge,
        }),
        None,
    );
    add_cube_inputs(&mut manifest, &args.basis)?;
    if let Some(m) = &args.model {
        add_cube_inputs(&mut manifest, m)?;
    }
    for p in args.cubes.iter().chain(&args.targets) {
        add_cube_inputs(&mut manifest, p)?;
    }
    manifest.finish(&args.out, &outputs)?;
    Ok(())
}

fn truncate_basis(basis: &LinearBasis, k: usize) -> CliResult<LinearBasis> {
    if k == 0 || k > basis.k() {
        return Err(CliError::usage(format!("k must be in 1..={}, got {k}", basis.k())));
    }
    Ok(basis.truncate(k)?)
}

/// Resolves `--jobs`, then the environment (already folded in by clap), then
/// the machine's core count.
pub fn resolve_jobs(flag: Option<usize>) -> CliResult<usize> {
    match flag {
        Some(0) => Err(CliError::usage("--jobs must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let config: SweepConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => SweepConfig::default(),
    };
    config.validate().map_err(|e| match e {
        CliError::Usage(reason) => CliError::Config {
            path: args.config.clone().unwrap_or_else(|| PathBuf::from("<defaults>")),
            reason,
        },
        other => other,
    })?;
    let jobs = resolve_jobs(args.jobs)?;
    create_dir(&args.out)?;

    let existing = if args.resume {
        let manifest_path = args.out.join(crate::manifest::MANIFEST_NAME);
        if manifest_path.exists() {
            let previous = RunManifest::load(&manifest_path)?;
            if previous.subcommand != "sweep" || previous.config != to_value(&config) {
                return Err(CliError::usage(format!(
                    "--resume: {} was written with a different sweep config",
                    args.out.display()
                )));
            }
        }
        Some(sweep::read_existing(&args.out)?)
    } else {
        None
    };

    let tables = sweep::execute(&config, jobs, existing.as_ref())?;
    let outputs = sweep::write_tables(&tables, &config, &args.out)?;
    let mut manifest = RunManifest::new("sweep", to_value(&config), config.seeds.first().copied());
    if let Some(p) = &args.config {
        manifest.add_input(p)?;
    }
    for p in config.input_paths() {
        manifest.add_input(&p)?;
    }
    manifest.finish(&args.out, &outputs)?;
    if tables.failures.is_empty() {
        Ok(())
    } else {
        let total = config.seeds.len() * config.methods.len() * config.k.len() * config.w.len();
        Err(CliError::PartialSweep {
            failed: tables.failures.len(),
            total,
        })
    }
}

/// `0-49`, `3`, `0,2,5-7`; ranges are inclusive.
pub fn parse_indices(text: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::usage(format!("bad component index `{part}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("--indices selects no components"));
    }
    Ok(out)
}

/// `start:end`, end exclusive.
pub fn parse_row_range(text: &str, rows: usize) -> CliResult<Range<usize>> {
    let bad = || CliError::usage(format!("bad row range `{text}`, expected start:end within 0..{rows}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: usize = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
    let b: usize = if b.is_empty() { rows } else { b.parse().map_err(|_| bad())? };
    if a >= b || b > rows {
        return Err(bad());
    }
    Ok(a..b)
}

pub fn cmd_export_components(args: &ExportArgs) -> CliResult<()> {
    let indices = parse_indices(&args.indices)?;
    let basis = format::load_basis(&args.basis)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= basis.k()) {
        return Err(CliError::usage(format!(
            "component {bad} out of range, the basis has k = {}",
            basis.k()
        )));
    }
    let cube = format::load_spectral(&args.cube)?;
    if cube.bands() != basis.dim() {
        return Err(CliError::usage(format!(
            "cube has {} bands, the basis expects {}",
            cube.bands(),
            basis.dim()
        )));
    }
    let rows = match &args.rows {
        Some(r) => parse_row_range(r, cube.rows())?,
        None => 0..cube.rows(),
    };
    let scores = project(&cube, &basis)?;
    let data: &Cube = scores.data();
    let cols = data.cols();
    create_dir(&args.out)?;
    let mut outputs = Vec::new();
    let mut scaling = Vec::new();
    for &idx in &indices {
        let plane: Vec<f64> = rows
            .clone()
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| data.get(r, c, idx))
            .collect();
        let (bytes, s) = pgm::encode(idx, rows.len(), cols, &plane);
        let path = args.out.join(format!("component_{idx:03}.pgm"));
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        outputs.push(path);
        scaling.push(s);
    }
    let scaling_path = args.out.join("scaling.json");
    let mut text = serde_json::to_string_pretty(&scaling).expect("scaling serializes");
    text.push('\n');
    fs::write(&scaling_path, text).map_err(|e| CliError::io(&scaling_path, e))?;
    outputs.push(scaling_path);

    #[derive(Serialize)]
    struct ExportConfig<'a> {
        basis: &'a Path,
        cube: &'a Path,
        indices: &'a [usize],
        rows: [usize; 2],
    }
    let mut manifest = RunManifest::new(
        "export-components",
        to_value(&ExportConfig {
            basis: &args.basis,
            cube: &args.cube,
            indices: &indices,
            rows: [rows.start, rows.end],
        }),
        None,
    );
    add_cube_inputs(&mut manifest, &args.basis)?;
    add_cube_inputs(&mut manifest, &args.cube)?;
    manifest.finish(&args.out, &outputs)?;
    Ok(())
}
