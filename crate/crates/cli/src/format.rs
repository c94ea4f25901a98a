//! On-disk formats: a UTF-8 JSON sidecar plus a raw little-endian `f64`
//! payload, `<name>.json` next to `<name>.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use mnfret_core::decomposition::SIGN_CONVENTION;
use mnfret_core::nalgebra::{DMatrix, DVector};
use mnfret_core::retrieval::TrainingMeta;
use mnfret_core::{Cube, CubeRole, LinearBasis, Method, NoiseCube, ProfileCube, ResidualGain, RetrievalModel, SpectralCube};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DTYPE: &str = "f64";
pub const BYTE_ORDER: &str = "little";
pub const LAYOUT: &str = "bip";

/// `<stem>.json` and `<stem>.bin` for a path given with either extension or none.
pub fn artifact_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut bin = stem.into_os_string();
    bin.push(".bin");
    (PathBuf::from(json), PathBuf::from(bin))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        reason: format!("{} (at `{}`)", e.inner(), e.path()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("header serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_f64s(path: &Path, expected: usize) -> CliResult<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            reason: format!(
                "payload holds {} bytes ({} values), header declares {expected} values",
                bytes.len(),
                bytes.len() as f64 / 8.0
            ),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn encode_f64s<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> Vec<u8> {
    let mut out = Vec::new();
    for part in parts {
        for v in part {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn check_tag(path: &Path, field: &str, got: &str, want: &str) -> CliResult<()> {
    if got != want {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            reason: format!("unsupported {field} `{got}`, expected `{want}`"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
    pub dtype: String,
    pub order: String,
    pub layout: String,
    pub role: CubeRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_axis: Option<Vec<f64>>,
}

impl CubeHeader {
    fn for_cube(cube: &Cube, role: CubeRole) -> Self {
        CubeHeader {
            rows: cube.rows(),
            cols: cube.cols(),
            depth: cube.depth(),
            dtype: DTYPE.into(),
            order: BYTE_ORDER.into(),
            layout: LAYOUT.into(),
            role,
            band_ids: None,
            pressure_axis: None,
        }
    }
}

/// Any cube read from disk, keyed by its header role.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyCube {
    Spectral(SpectralCube),
    Profile(ProfileCube),
    Noise(NoiseCube),
    Scores(Cube),
}

impl AnyCube {
    pub fn role(&self) -> CubeRole {
        match self {
            AnyCube::Spectral(_) => CubeRole::Spectral,
            AnyCube::Profile(_) => CubeRole::Profile,
            AnyCube::Noise(_) => CubeRole::Noise,
            AnyCube::Scores(_) => CubeRole::Scores,
        }
    }

    pub fn data(&self) -> &Cube {
        match self {
            AnyCube::Spectral(c) => c.data(),
            AnyCube::Profile(c) => c.data(),
            AnyCube::Noise(c) => c.data(),
            AnyCube::Scores(c) => c,
        }
    }
}

pub fn load_cube(path: &Path) -> CliResult<AnyCube> {
    let (json, bin) = artifact_paths(path);
    let header: CubeHeader = read_json(&json)?;
    check_tag(&json, "dtype", &header.dtype, DTYPE)?;
    check_tag(&json, "order", &header.order, BYTE_ORDER)?;
    check_tag(&json, "layout", &header.layout, LAYOUT)?;
    let bad = |e: mnfret_core::Error| CliError::Format {
        path: json.clone(),
        reason: e.to_string(),
    };
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(header.depth))
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Format {
            path: json.clone(),
            reason: "dims must be positive".into(),
        })?;
    let values = read_f64s(&bin, expected)?;
    let cube = Cube::new(header.rows, header.cols, header.depth, values).map_err(|e| CliError::Format {
        path: bin.clone(),
        reason: e.to_string(),
    })?;
    Ok(match header.role {
        CubeRole::Spectral => AnyCube::Spectral(SpectralCube::new(cube, header.band_ids).map_err(bad)?),
        CubeRole::Profile => {
            let axis = header.pressure_axis.ok_or_else(|| CliError::Format {
                path: json.clone(),
                reason: "profile cube needs a pressure_axis".into(),
            })?;
            AnyCube::Profile(ProfileCube::new(cube, axis).map_err(bad)?)
        }
        CubeRole::Noise => AnyCube::Noise(NoiseCube::from_residuals(cube, ResidualGain::Raw).map_err(bad)?),
        CubeRole::Scores => AnyCube::Scores(cube),
    })
}

pub fn load_spectral(path: &Path) -> CliResult<SpectralCube> {
    match load_cube(path)? {
        AnyCube::Spectral(c) => Ok(c),
        other => Err(wrong_role(path, CubeRole::Spectral, other.role())),
    }
}

pub fn load_profile(path: &Path) -> CliResult<ProfileCube> {
    match load_cube(path)? {
        AnyCube::Profile(c) => Ok(c),
        other => Err(wrong_role(path, CubeRole::Profile, other.role())),
    }
}

fn wrong_role(path: &Path, want: CubeRole, got: CubeRole) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        reason: format!("expected a {want} cube, found role {got}"),
    }
}

/// Writes header and payload; returns the two paths written.
pub fn save_cube(cube: &AnyCube, path: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let mut header = CubeHeader::for_cube(cube.data(), cube.role());
    match cube {
        AnyCube::Spectral(c) => header.band_ids = c.band_ids().map(<[usize]>::to_vec),
        AnyCube::Profile(c) => header.pressure_axis = Some(c.pressure_axis().to_vec()),
        _ => {}
    }
    let (json, bin) = artifact_paths(path);
    write_bytes(&bin, &encode_f64s([cube.data().values()]))?;
    write_json(&json, &header)?;
    Ok((json, bin))
}

/// Sidecar of a serialized [`LinearBasis`]. The payload is the mean, then the
/// `d x k` components column-major, then (MNF only) the `d x d` regularized
/// noise covariance column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisHeader {
    pub method: Method,
    pub k: usize,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub ridge: f64,
    pub sign: String,
    pub dtype: String,
    pub order: String,
    pub payload: Vec<String>,
}

pub fn save_basis(basis: &LinearBasis, path: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let mut payload = vec!["mean".to_string(), "components".to_string()];
    let mut parts: Vec<&[f64]> = vec![basis.mean.as_slice(), basis.components.as_slice()];
    if let Some(metric) = &basis.noise_metric {
        payload.push("noise_metric".into());
        parts.push(metric.as_slice());
    }
    let header = BasisHeader {
        method: basis.method,
        k: basis.k(),
        d: basis.dim(),
        eigenvalues: basis.eigenvalues.as_slice().to_vec(),
        ridge: basis.noise_ridge,
        sign: SIGN_CONVENTION.into(),
        dtype: DTYPE.into(),
        order: BYTE_ORDER.into(),
        payload,
    };
    let (json, bin) = artifact_paths(path);
    write_bytes(&bin, &encode_f64s(parts))?;
    write_json(&json, &header)?;
    Ok((json, bin))
}

/// Orthonormality tolerance checked on load.
pub fn basis_tolerance(method: Method) -> f64 {
    match method {
        Method::Pca => 1e-10,
        Method::Mnf => 1e-8,
    }
}

pub fn load_basis(path: &Path) -> CliResult<LinearBasis> {
    let (json, bin) = artifact_paths(path);
    let h: BasisHeader = read_json(&json)?;
    check_tag(&json, "dtype", &h.dtype, DTYPE)?;
    check_tag(&json, "order", &h.order, BYTE_ORDER)?;
    check_tag(&json, "sign", &h.sign, SIGN_CONVENTION)?;
    let with_metric = h.method == Method::Mnf;
    let mut expected_payload = vec!["mean", "components"];
    if with_metric {
        expected_payload.push("noise_metric");
    }
    if h.payload != expected_payload {
        return Err(CliError::Format {
            path: json,
            reason: format!("payload layout {:?}, expected {expected_payload:?}", h.payload),
        });
    }
    if h.k == 0 || h.k > h.d || h.eigenvalues.len() != h.k {
        return Err(CliError::Format {
            path: json,
            reason: "inconsistent k, d and eigenvalue count".into(),
        });
    }
    let n = h.d + h.d * h.k + if with_metric { h.d * h.d } else { 0 };
    let values = read_f64s(&bin, n)?;
    let (mean, rest) = values.split_at(h.d);
    let (components, metric) = rest.split_at(h.d * h.k);
    let basis = LinearBasis {
        method: h.method,
        mean: DVector::from_column_slice(mean),
        components: DMatrix::from_column_slice(h.d, h.k, components),
        eigenvalues: DVector::from_vec(h.eigenvalues),
        noise_ridge: h.ridge,
        noise_metric: with_metric.then(|| DMatrix::from_column_slice(h.d, h.d, metric)),
    };
    basis
        .validate(basis_tolerance(h.method))
        .map_err(|e| CliError::Format {
            path: json,
            reason: format!("basis failed validation: {e}"),
        })?;
    Ok(basis)
}

/// Sidecar of a serialized [`RetrievalModel`]; the payload is the intercept
/// then the `p x o` weights column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub p: usize,
    pub o: usize,
    pub ridge: f64,
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub w: Option<usize>,
    pub seed: Option<u64>,
    pub data_hash: Option<String>,
    pub ordering: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_axis: Option<Vec<f64>>,
    pub dtype: String,
    pub order: String,
}

pub fn save_model(model: &RetrievalModel, pressure_axis: Option<&[f64]>, path: &Path) -> CliResult<(PathBuf, PathBuf)> {
    let header = ModelHeader {
        p: model.features(),
        o: model.levels(),
        ridge: model.ridge,
        method: model.meta.method,
        k: model.meta.components,
        w: model.meta.window,
        seed: model.meta.seed,
        data_hash: model.meta.data_hash.clone(),
        ordering: mnfret_core::features::OFFSET_ORDERING.into(),
        pressure_axis: pressure_axis.map(<[f64]>::to_vec),
        dtype: DTYPE.into(),
        order: BYTE_ORDER.into(),
    };
    let (json, bin) = artifact_paths(path);
    write_bytes(&bin, &encode_f64s([model.intercept.as_slice(), model.weights.as_slice()]))?;
    write_json(&json, &header)?;
    Ok((json, bin))
}

pub fn load_model(path: &Path) -> CliResult<(RetrievalModel, ModelHeader)> {
    let (json, bin) = artifact_paths(path);
    let h: ModelHeader = read_json(&json)?;
    check_tag(&json, "dtype", &h.dtype, DTYPE)?;
    check_tag(&json, "order", &h.order, BYTE_ORDER)?;
    check_tag(&json, "ordering", &h.ordering, mnfret_core::features::OFFSET_ORDERING)?;
    let values = read_f64s(&bin, h.o + h.p * h.o)?;
    let (intercept, weights) = values.split_at(h.o);
    let mut model = RetrievalModel::new(
        DVector::from_column_slice(intercept),
        DMatrix::from_column_slice(h.p, h.o, weights),
        h.ridge,
    )
    .map_err(|e| CliError::Format {
        path: bin,
        reason: e.to_string(),
    })?;
    model.meta = TrainingMeta {
        method: h.method,
        components: h.k,
        window: h.w,
        seed: h.seed,
        data_hash: h.data_hash.clone(),
    };
    Ok((model, h))
}
