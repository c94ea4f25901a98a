//! Parallel method x k x w x seed sweeps and their CSV tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mnfret_core::evaluation::{
    self, cell_keys, prepare_sweep, rows_for_cell, CellKey, PreparedSweep, Sample, Split, SweepRow,
    SweepSettings,
};
use mnfret_core::nalgebra::DMatrix;
use mnfret_core::synth::{generate_orbits, SceneConfig};
use mnfret_core::{cube_to_matrix, Method, ProfileCube, ResidualGain, SpectralCube};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const LEVELS_CSV: &str = "levels.csv";
pub const LEVELS_TRAIN_CSV: &str = "levels_train.csv";
pub const INFORMATION_CSV: &str = "information.csv";
pub const FAILURES_CSV: &str = "failures.csv";

const SWEEP_HEADER: [&str; 7] = ["method", "k", "w", "seed", "split", "mean_rmse", "wall_ms"];
const LEVELS_HEADER: [&str; 7] = ["method", "k", "w", "seed", "level", "pressure", "rmse"];
const INFORMATION_HEADER: [&str; 6] = [
    "method",
    "k",
    "seed",
    "total_correlation",
    "input_total_correlation",
    "joint_minus_inputs",
];

fn default_methods() -> Vec<Method> {
    vec![Method::Pca, Method::Mnf]
}
fn default_k() -> Vec<usize> {
    vec![5, 10, 20]
}
fn default_w() -> Vec<usize> {
    vec![1, 3]
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_noise_ridge() -> f64 {
    mnfret_core::decomposition::DEFAULT_NOISE_RIDGE
}
fn default_shrinkage() -> f64 {
    evaluation::DEFAULT_SHRINKAGE
}

/// Spectral and profile cube paths of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePaths {
    pub spectral: PathBuf,
    pub profile: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSet {
    pub train: Vec<ScenePaths>,
    pub test: Vec<ScenePaths>,
}

/// Sweep configuration file. Scenes come either from `data` (cubes on disk)
/// or from `scene`, a synthetic config regenerated per seed with
/// `seed = mixing_seed = s`; the last orbit is the test scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_w")]
    pub w: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default = "default_noise_ridge")]
    pub noise_ridge: f64,
    #[serde(default)]
    pub gain: ResidualGain,
    /// Also score every cell on the training scenes.
    #[serde(default)]
    pub include_train: bool,
    /// Fill `wall_ms`. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
    /// `k` values at which to emit the total-correlation table.
    #[serde(default)]
    pub information_k: Vec<usize>,
    #[serde(default = "default_shrinkage")]
    pub shrinkage: f64,
    #[serde(default)]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub data: Option<DataSet>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl SweepConfig {
    pub fn settings(&self) -> SweepSettings {
        SweepSettings {
            methods: self.methods.clone(),
            ks: self.k.clone(),
            windows: self.w.clone(),
            ridge: self.ridge,
            noise_ridge: self.noise_ridge,
            gain: self.gain,
            include_train: self.include_train,
        }
    }

    fn scene_config(&self) -> SceneConfig {
        self.scene.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, reason: &str| CliError::usage(format!("sweep config `{field}`: {reason}"));
        let distinct = |xs: &[usize]| xs.iter().collect::<BTreeSet<_>>().len() == xs.len();
        if self.methods.is_empty() {
            return Err(bad("methods", "must not be empty"));
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return Err(bad("methods", "contains duplicates"));
        }
        if self.k.is_empty() || self.k.contains(&0) || !distinct(&self.k) {
            return Err(bad("k", "needs distinct positive values"));
        }
        if self.w.is_empty() || self.w.iter().any(|w| w % 2 == 0) || !distinct(&self.w) {
            return Err(bad("w", "needs distinct odd values"));
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(bad("seeds", "needs distinct values"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(bad("ridge", "must be finite and non-negative"));
        }
        if !(self.noise_ridge >= 0.0 && self.noise_ridge.is_finite()) {
            return Err(bad("noise_ridge", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return Err(bad("shrinkage", "must lie in [0, 1)"));
        }
        if self.information_k.contains(&0) || !distinct(&self.information_k) {
            return Err(bad("information_k", "needs distinct positive values"));
        }
        match (&self.scene, &self.data) {
            (Some(_), Some(_)) => return Err(bad("data", "give either `scene` or `data`, not both")),
            (_, Some(data)) => {
                if data.train.is_empty() || data.test.is_empty() {
                    return Err(bad("data", "needs at least one train and one test scene"));
                }
            }
            (_, None) => {
                let scene = self.scene_config();
                scene.validate().map_err(|e| bad("scene", &e.to_string()))?;
                if scene.orbits < 2 {
                    return Err(bad("scene.orbits", "need at least 2 (train and test)"));
                }
                let max_k = self.k.iter().chain(&self.information_k).max().copied().unwrap_or(0);
                if max_k > scene.bands {
                    return Err(bad("k", &format!("{max_k} exceeds scene.bands = {}", scene.bands)));
                }
            }
        }
        Ok(())
    }

    /// Every input file named by the config.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(data) = &self.data {
            for s in data.train.iter().chain(&data.test) {
                for p in [&s.spectral, &s.profile] {
                    let (json, bin) = format::artifact_paths(p);
                    out.push(json);
                    out.push(bin);
                }
            }
        }
        out
    }
}

/// One row of the total-correlation table.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationRow {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub joint: f64,
    pub inputs: f64,
    pub joint_minus_inputs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub method: Method,
    pub k: usize,
    pub w: Option<usize>,
    pub seed: u64,
    pub error: String,
}

/// Everything a sweep writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTables {
    pub rows: Vec<SweepRow>,
    pub information: Vec<InformationRow>,
    pub failures: Vec<Failure>,
    pub pressure_axis: Vec<f64>,
}

impl SweepTables {
    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.key, r.split));
        self.information.sort_by_key(|r| (r.method, r.k, r.seed));
        self.failures.sort_by_key(|f| (f.method, f.k, f.w, f.seed));
    }
}

struct LoadedData {
    train: Vec<(SpectralCube, ProfileCube)>,
    test: Vec<(SpectralCube, ProfileCube)>,
}

fn load_data(data: &DataSet) -> CliResult<LoadedData> {
    let load = |set: &[ScenePaths]| -> CliResult<Vec<(SpectralCube, ProfileCube)>> {
        set.iter()
            .map(|s| Ok((format::load_spectral(&s.spectral)?, format::load_profile(&s.profile)?)))
            .collect()
    };
    Ok(LoadedData {
        train: load(&data.train)?,
        test: load(&data.test)?,
    })
}

fn prepare_pairs(
    train: &[(SpectralCube, ProfileCube)],
    test: &[(SpectralCube, ProfileCube)],
    settings: &SweepSettings,
) -> mnfret_core::Result<PreparedSweep> {
    fn as_samples(set: &[(SpectralCube, ProfileCube)]) -> Vec<Sample<'_>> {
        set.iter()
            .map(|(spectral, profile)| Sample { spectral, profile })
            .collect()
    }
    prepare_sweep(&as_samples(train), &as_samples(test), settings)
}

fn prepare_seed(
    config: &SweepConfig,
    settings: &SweepSettings,
    data: Option<&LoadedData>,
    seed: u64,
) -> mnfret_core::Result<PreparedSweep> {
    match data {
        Some(d) => prepare_pairs(&d.train, &d.test, settings),
        None => {
            let scene = SceneConfig {
                seed,
                mixing_seed: seed,
                ..config.scene_config()
            };
            let mut pairs: Vec<_> = generate_orbits(&scene)?
                .into_iter()
                .map(|s| (s.spectral, s.profile))
                .collect();
            let test = pairs.split_off(pairs.len() - 1);
            prepare_pairs(&pairs, &test, settings)
        }
    }
}

/// Total correlation of the stacked test scores (first `k` components) with
/// the test targets.
pub fn information_for(
    prepared: &PreparedSweep,
    method: Method,
    k: usize,
    shrinkage: f64,
) -> mnfret_core::Result<evaluation::TotalCorrelation> {
    let pm = prepared
        .method(method)
        .ok_or_else(|| mnfret_core::Error::InvalidArgument {
            field: "method",
            reason: "not prepared".into(),
        })?;
    let n = prepared.test_targets.nrows();
    let mut scores = DMatrix::<f64>::zeros(n, k);
    let mut row = 0;
    for s in &pm.test_scores {
        let (m, _) = cube_to_matrix(s.truncate(k)?.data());
        scores.view_mut((row, 0), (m.nrows(), k)).copy_from(&m);
        row += m.nrows();
    }
    evaluation::gaussian_total_correlation(&scores, &prepared.test_targets, shrinkage)
}

/// `(method, k, seed)` of one total-correlation entry.
type InfoKey = (Method, usize, u64);

/// What a resumed sweep already has.
#[derive(Debug, Clone, Default)]
pub struct Existing {
    pub tables: SweepTables,
}

impl Existing {
    fn has_cell(&self, key: CellKey, include_train: bool) -> bool {
        let has = |split| self.tables.rows.iter().any(|r| r.key == key && r.split == split);
        has(Split::Test) && (!include_train || has(Split::Train))
    }

    fn has_information(&self, method: Method, k: usize, seed: u64) -> bool {
        self.tables
            .information
            .iter()
            .any(|r| r.method == method && r.k == k && r.seed == seed)
    }
}

/// Runs every cell not already present in `existing` on a pool of `jobs`
/// threads. Output order is fixed by sorting, never by scheduling.
pub fn execute(config: &SweepConfig, jobs: usize, existing: Option<&Existing>) -> CliResult<SweepTables> {
    config.validate()?;
    let settings = config.settings();
    let data = config.data.as_ref().map(load_data).transpose()?;
    if let Some(d) = &data {
        let bands = d.train[0].0.bands();
        let max_k = config.k.iter().chain(&config.information_k).max().copied().unwrap_or(0);
        if max_k > bands {
            return Err(CliError::usage(format!(
                "sweep config `k`: {max_k} exceeds the {bands} bands of the training cubes"
            )));
        }
    }
    let empty = Existing::default();
    let existing = existing.unwrap_or(&empty);

    let mut tables = SweepTables::default();
    // carry over finished work that still belongs to this grid
    let all_keys: BTreeSet<CellKey> = config.seeds.iter().flat_map(|&s| cell_keys(&settings, s)).collect();
    let wanted_split = |s: Split| s == Split::Test || config.include_train;
    tables.rows.extend(
        existing
            .tables
            .rows
            .iter()
            .filter(|r| all_keys.contains(&r.key) && wanted_split(r.split) && existing.has_cell(r.key, config.include_train))
            .cloned(),
    );
    tables.information.extend(
        existing
            .tables
            .information
            .iter()
            .filter(|r| config.methods.contains(&r.method) && config.information_k.contains(&r.k) && config.seeds.contains(&r.seed))
            .cloned(),
    );
    tables.pressure_axis = existing.tables.pressure_axis.clone();

    let todo_cells: Vec<CellKey> = all_keys
        .iter()
        .copied()
        .filter(|&k| !existing.has_cell(k, config.include_train))
        .collect();
    let todo_info: Vec<InfoKey> = config
        .seeds
        .iter()
        .flat_map(|&s| {
            config
                .methods
                .iter()
                .flat_map(move |&m| config.information_k.iter().map(move |&k| (m, k, s)))
        })
        .filter(|&(m, k, s)| !existing.has_information(m, k, s))
        .collect();
    let seeds: BTreeSet<u64> = todo_cells
        .iter()
        .map(|k| k.seed)
        .chain(todo_info.iter().map(|t| t.2))
        .collect();
    if seeds.is_empty() {
        tables.sort();
        return Ok(tables);
    }

    let info_settings = if config.information_k.is_empty() {
        settings.clone()
    } else {
        let mut s = settings.clone();
        s.ks.extend(&config.information_k);
        s
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {jobs} worker threads: {e}")))?;

    pool.install(|| {
        let prepared: BTreeMap<u64, mnfret_core::Result<PreparedSweep>> = seeds
            .par_iter()
            .map(|&seed| (seed, prepare_seed(config, &info_settings, data.as_ref(), seed)))
            .collect();

        let outcomes: Vec<(CellKey, Result<Vec<SweepRow>, String>)> = todo_cells
            .par_iter()
            .map(|&key| {
                let run = || -> mnfret_core::Result<Vec<SweepRow>> {
                    let prep = prepared[&key.seed].as_ref().map_err(Clone::clone)?;
                    let start = Instant::now();
                    let scores = prep.run_cell(key.method, key.k, key.w, config.ridge)?;
                    let wall = config
                        .record_wall_time
                        .then(|| start.elapsed().as_millis() as u64);
                    rows_for_cell(key, &scores, config.include_train, wall)
                };
                (key, run().map_err(|e| e.to_string()))
            })
            .collect();

        let info: Vec<(InfoKey, Result<evaluation::TotalCorrelation, String>)> = todo_info
            .par_iter()
            .map(|&(m, k, s)| {
                let r = prepared[&s]
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|p| information_for(p, m, k, config.shrinkage));
                ((m, k, s), r.map_err(|e| e.to_string()))
            })
            .collect();

        if let Some(p) = prepared.values().find_map(|p| p.as_ref().ok()) {
            tables.pressure_axis = p.pressure_axis.clone();
        }
        for (key, outcome) in outcomes {
            match outcome {
                Ok(rows) => tables.rows.extend(rows),
                Err(error) => tables.failures.push(Failure {
                    method: key.method,
                    k: key.k,
                    w: Some(key.w),
                    seed: key.seed,
                    error,
                }),
            }
        }
        for ((method, k, seed), outcome) in info {
            match outcome {
                Ok(t) => tables.information.push(InformationRow {
                    method,
                    k,
                    seed,
                    joint: t.joint,
                    inputs: t.inputs,
                    joint_minus_inputs: t.joint_minus_inputs,
                }),
                Err(error) => tables.failures.push(Failure {
                    method,
                    k,
                    w: None,
                    seed,
                    error,
                }),
            }
        }
    });
    tables.sort();
    Ok(tables)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<PathBuf> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn key_fields(key: &CellKey) -> [String; 4] {
    [
        key.method.as_str().to_string(),
        key.k.to_string(),
        key.w.to_string(),
        key.seed.to_string(),
    ]
}

fn level_rows<'a>(rows: impl Iterator<Item = &'a SweepRow> + 'a, axis: &'a [f64]) -> impl Iterator<Item = Vec<String>> + 'a {
    rows.flat_map(move |r| {
        r.per_level.iter().enumerate().map(move |(level, rmse)| {
            let mut v = key_fields(&r.key).to_vec();
            v.push(level.to_string());
            v.push(axis.get(level).map(f64::to_string).unwrap_or_default());
            v.push(rmse.to_string());
            v
        })
    })
}

/// Writes all tables into `out_dir`, returning the files written. A stale
/// failures table from an earlier run is removed when nothing failed.
pub fn write_tables(tables: &SweepTables, config: &SweepConfig, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_table(
        &out_dir.join(SWEEP_CSV),
        &SWEEP_HEADER,
        tables.rows.iter().map(|r| {
            let mut v = key_fields(&r.key).to_vec();
            v.push(r.split.as_str().into());
            v.push(r.mean_rmse.to_string());
            v.push(r.wall_ms.map(|m| m.to_string()).unwrap_or_default());
            v
        }),
    )?);
    let axis = &tables.pressure_axis;
    written.push(write_table(
        &out_dir.join(LEVELS_CSV),
        &LEVELS_HEADER,
        level_rows(tables.rows.iter().filter(|r| r.split == Split::Test), axis),
    )?);
    if config.include_train {
        written.push(write_table(
            &out_dir.join(LEVELS_TRAIN_CSV),
            &LEVELS_HEADER,
            level_rows(tables.rows.iter().filter(|r| r.split == Split::Train), axis),
        )?);
    }
    if !config.information_k.is_empty() {
        written.push(write_table(
            &out_dir.join(INFORMATION_CSV),
            &INFORMATION_HEADER,
            tables.information.iter().map(|r| {
                vec![
                    r.method.as_str().into(),
                    r.k.to_string(),
                    r.seed.to_string(),
                    r.joint.to_string(),
                    r.inputs.to_string(),
                    r.joint_minus_inputs.to_string(),
                ]
            }),
        )?);
    }
    let failures = out_dir.join(FAILURES_CSV);
    if tables.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures).map_err(|e| CliError::io(&failures, e))?;
        }
    } else {
        written.push(write_table(
            &failures,
            &["method", "k", "w", "seed", "error"],
            tables.failures.iter().map(|f| {
                vec![
                    f.method.as_str().into(),
                    f.k.to_string(),
                    f.w.map(|w| w.to_string()).unwrap_or_default(),
                    f.seed.to_string(),
                    f.error.clone(),
                ]
            }),
        )?);
    }
    Ok(written)
}

fn read_table(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.records().map(|rec| rec.map_err(|e| csv_err(path, e))).collect()
}

fn parse<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> CliResult<T> {
    let field = rec.get(i).unwrap_or("");
    field.parse().map_err(|_| CliError::Format {
        path: path.to_path_buf(),
        reason: format!("cannot parse `{field}` in column {i}"),
    })
}

fn parse_key(path: &Path, rec: &csv::StringRecord) -> CliResult<CellKey> {
    let method = Method::parse(rec.get(0).unwrap_or("")).ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        reason: format!("unknown method in {rec:?}"),
    })?;
    Ok(CellKey {
        method,
        k: parse(path, rec, 1)?,
        w: parse(path, rec, 2)?,
        seed: parse(path, rec, 3)?,
    })
}

/// Reads the tables of an earlier run in `out_dir`; missing files mean
/// nothing was finished.
pub fn read_existing(out_dir: &Path) -> CliResult<Existing> {
    let mut tables = SweepTables::default();
    let sweep = out_dir.join(SWEEP_CSV);
    if !sweep.exists() {
        return Ok(Existing::default());
    }
    let mut per_level: BTreeMap<(CellKey, Split), BTreeMap<usize, f64>> = BTreeMap::new();
    let mut axis: BTreeMap<usize, f64> = BTreeMap::new();
    for (file, split) in [(LEVELS_CSV, Split::Test), (LEVELS_TRAIN_CSV, Split::Train)] {
        let path = out_dir.join(file);
        if !path.exists() {
            continue;
        }
        for rec in read_table(&path)? {
            let key = parse_key(&path, &rec)?;
            let level: usize = parse(&path, &rec, 4)?;
            if !rec.get(5).unwrap_or("").is_empty() {
                axis.insert(level, parse(&path, &rec, 5)?);
            }
            per_level.entry((key, split)).or_default().insert(level, parse(&path, &rec, 6)?);
        }
    }
    for rec in read_table(&sweep)? {
        let key = parse_key(&sweep, &rec)?;
        let split = match rec.get(4) {
            Some("test") => Split::Test,
            Some("train") => Split::Train,
            other => {
                return Err(CliError::Format {
                    path: sweep,
                    reason: format!("unknown split {other:?}"),
                })
            }
        };
        let wall_ms = match rec.get(6).unwrap_or("") {
            "" => None,
            _ => Some(parse(&sweep, &rec, 6)?),
        };
        // a row without its per-level breakdown is treated as unfinished
        let Some(levels) = per_level.remove(&(key, split)) else {
            continue;
        };
        tables.rows.push(SweepRow {
            key,
            split,
            mean_rmse: parse(&sweep, &rec, 5)?,
            per_level: levels.into_values().collect(),
            wall_ms,
        });
    }
    let info = out_dir.join(INFORMATION_CSV);
    if info.exists() {
        for rec in read_table(&info)? {
            tables.information.push(InformationRow {
                method: Method::parse(rec.get(0).unwrap_or("")).ok_or_else(|| CliError::Format {
                    path: info.clone(),
                    reason: format!("unknown method in {rec:?}"),
                })?,
                k: parse(&info, &rec, 1)?,
                seed: parse(&info, &rec, 2)?,
                joint: parse(&info, &rec, 3)?,
                inputs: parse(&info, &rec, 4)?,
                joint_minus_inputs: parse(&info, &rec, 5)?,
            });
        }
    }
    tables.pressure_axis = axis.into_values().collect();
    Ok(Existing { tables })
}
