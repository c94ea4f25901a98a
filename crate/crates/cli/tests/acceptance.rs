//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p mnfret-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mnfret_cli::sweep::{self, SweepConfig};
use mnfret_core::decomposition::fit_mnf;
use mnfret_core::evaluation::{fit_basis, prepare_sweep, CellKey, Sample, Split, SweepSettings};
use mnfret_core::nalgebra::{DMatrix, DVector};
use mnfret_core::noise::{
    noise_covariance, paraboloid_residual_filter_with, CovarianceEstimate, CovarianceStatus, ResidualGain,
};
use mnfret_core::synth::{generate_orbits, SceneConfig};
use mnfret_core::{fit_pca, project, Cube, Method, SpectralCube};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn randn_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| randn(rng))
}

fn cov(matrix: DMatrix<f64>) -> CovarianceEstimate {
    CovarianceEstimate {
        matrix,
        samples: 1000,
        centered: true,
        mean: None,
        gain: ResidualGain::Raw,
        status: CovarianceStatus::Ok,
    }
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = randn_matrix(d, d, rng);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

/// Cyclic Jacobi eigensolver for symmetric matrices, eigenvalues descending.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= 1e-300 || off.sqrt() <= 1e-17 * m.norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

fn quadratic_cube(rows: usize, cols: usize, bands: usize, rng: &mut ChaCha8Rng) -> Cube {
    let coef: Vec<[f64; 6]> = (0..bands)
        .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
        .collect();
    Cube::from_fn(rows, cols, bands, |r, c, b| {
        let (x, y) = (r as f64, c as f64);
        let k = &coef[b];
        k[0] + k[1] * x + k[2] * y + k[3] * x * x + k[4] * x * y + k[5] * y * y
    })
    .unwrap()
}

fn max_interior_residual(cube: &Cube) -> f64 {
    let s = SpectralCube::from_cube(cube.clone());
    let n = paraboloid_residual_filter_with(&s, ResidualGain::Raw).unwrap();
    let (rows, cols) = (cube.rows(), cube.cols());
    let mut worst: f64 = 0.0;
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            for v in n.data().pixel(r, c) {
                worst = worst.max(v.abs());
            }
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cube = quadratic_cube(24, 24, 50, &mut rng);
    let worst = max_interior_residual(&cube);
    outcome(worst <= 1e-12, format!("max interior residual {worst:.2e} over 50 quadratic bands"))
}

/// Residual at the centre of a least-squares quadratic fit to each 3x3
/// window, with the same mirrored border as the filter.
fn ls_oracle(cube: &Cube) -> Vec<f64> {
    let a = DMatrix::from_fn(9, 6, |i, j| {
        let x = (i / 3) as f64 - 1.0;
        let y = (i % 3) as f64 - 1.0;
        [1.0, x, y, x * x, x * y, y * y][j]
    });
    let pinv = a.clone().pseudo_inverse(1e-14).unwrap();
    let mirror = |i: isize, n: usize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * (n - 1) - i as usize
        } else {
            i as usize
        }
    };
    let (rows, cols, bands) = (cube.rows(), cube.cols(), cube.depth());
    let mut out = vec![0.0; rows * cols * bands];
    for r in 0..rows {
        for c in 0..cols {
            for b in 0..bands {
                let window = DVector::from_fn(9, |i, _| {
                    let rr = mirror(r as isize + (i / 3) as isize - 1, rows);
                    let cc = mirror(c as isize + (i % 3) as isize - 1, cols);
                    cube.get(rr, cc, b)
                });
                let fit = &pinv * &window;
                out[(r * cols + c) * bands + b] = cube.get(r, c, b) - fit[0];
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let values: Vec<f64> = (0..16 * 16 * 4).map(|_| randn(&mut rng) * 10.0).collect();
        let cube = Cube::new(16, 16, 4, values).unwrap();
        let got = paraboloid_residual_filter_with(&SpectralCube::from_cube(cube.clone()), ResidualGain::Raw).unwrap();
        let want = ls_oracle(&cube);
        for (g, w) in got.data().values().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |filter - LS oracle| {worst:.2e} over 100 cubes"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let values: Vec<f64> = (0..256 * 256).map(|_| randn(&mut rng)).collect();
    let cube = SpectralCube::from_cube(Cube::new(256, 256, 1, values).unwrap());
    let var = |gain| {
        let n = paraboloid_residual_filter_with(&cube, gain).unwrap();
        noise_covariance(&n).unwrap().matrix[(0, 0)]
    };
    let raw = var(ResidualGain::Raw);
    let unit = var(ResidualGain::UnitWhiteNoise);
    let raw_err = (raw / (4.0 / 9.0) - 1.0).abs();
    let unit_err = (unit - 1.0).abs();
    outcome(
        raw_err <= 0.05 && unit_err <= 0.05,
        format!("raw variance {raw:.4} (4/9 = 0.4444), unit-gain variance {unit:.4}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_val: f64 = 0.0;
    let mut worst_vec: f64 = 0.0;
    for trial in 0..200 {
        let d = 1 + trial % 8;
        let s = random_spd(d, &mut rng);
        let n = random_spd(d, &mut rng);
        let basis = fit_mnf(&cov(s.clone()), &cov(n.clone()), d, 0.0).unwrap();

        // brute force: symmetric inverse square root of the noise, then a
        // plain eigenproblem
        let (mu, v) = jacobi_eigen(&n);
        let inv_sqrt = &v * DMatrix::from_diagonal(&DVector::from_iterator(d, mu.iter().map(|m| 1.0 / m.sqrt()))) * v.transpose();
        let m = &inv_sqrt * &s * &inv_sqrt;
        let (lambda, u) = jacobi_eigen(&((&m + m.transpose()) * 0.5));
        let w = &inv_sqrt * u;
        for j in 0..d {
            let scale = lambda[0].abs().max(1.0);
            worst_val = worst_val.max((basis.eigenvalues[j] - lambda[j]).abs() / scale);
            let a = basis.components.column(j);
            let b = w.column(j);
            let err = (a - b).amax().min((a + b).amax()) / b.amax();
            worst_vec = worst_vec.max(err);
        }
    }
    outcome(
        worst_val <= 1e-10 && worst_vec <= 1e-10,
        format!("200 trials, d <= 8: max eigenvalue error {worst_val:.2e}, max vector error {worst_vec:.2e}"),
    )
}

/// `sin` of the largest principal angle between two column spaces.
fn largest_angle_sin(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let qp = p.clone().qr().q();
    let qq = q.clone().qr().q();
    let resid = &qq - &qp * (qp.transpose() * &qq);
    resid.singular_values().max()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let d = 3 + trial % 10;
        let k = 1 + trial % (d - 1);
        // distinct, well-separated spectrum
        let q = randn_matrix(d, d, &mut rng).qr().q();
        let spectrum = DVector::from_iterator(d, (0..d).map(|i| 10.0 * 0.7f64.powi(i as i32)));
        let s = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let pca = fit_pca(&cov(s.clone()), k).unwrap();
        let mnf = fit_mnf(&cov(s), &cov(DMatrix::identity(d, d) * 0.3), k, 0.0).unwrap();
        worst = worst.max(largest_angle_sin(&pca.components, &mnf.components));
    }
    outcome(worst <= 1e-8, format!("50 trials: largest principal angle sin {worst:.2e}"))
}

fn transformed(cube: &SpectralCube, t: &DMatrix<f64>) -> SpectralCube {
    let x = cube.data().as_band_major();
    let y = t * x;
    SpectralCube::from_cube(Cube::new(cube.rows(), cube.cols(), cube.bands(), y.as_slice().to_vec()).unwrap())
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for trial in 0..20u64 {
        let config = SceneConfig {
            rows: 32,
            cols: 32,
            bands: 10,
            levels: 4,
            latent_count: 10,
            seed: 100 + trial,
            orbits: 1,
            ..SceneConfig::default()
        };
        let scene = generate_orbits(&config).unwrap().remove(0);
        let d = config.bands;
        let t = DMatrix::identity(d, d) + randn_matrix(d, d, &mut rng) * (0.3 / (d as f64).sqrt());
        let moved = transformed(&scene.spectral, &t);
        let fit = |c: &SpectralCube| {
            let b = fit_basis(Method::Mnf, &[c], d, 0.0, ResidualGain::Raw).unwrap();
            (project(c, &b).unwrap(), b.eigenvalues)
        };
        let (a, lambda) = fit(&scene.spectral);
        let (b, _) = fit(&moved);
        for j in 0..d {
            // components whose eigenvalue is not well separated are not unique
            let gap = |i: usize| (lambda[j] - lambda[i]).abs() / lambda[j].abs().max(1.0);
            let separated = (j == 0 || gap(j - 1) > 1e-3) && (j + 1 == d || gap(j + 1) > 1e-3);
            if !separated {
                continue;
            }
            compared += 1;
            let col = |s: &mnfret_core::ScoreCube| -> Vec<f64> {
                let v = s.data().values();
                (0..s.data().pixel_count()).map(|p| v[p * d + j]).collect()
            };
            let (ca, cb) = (col(&a), col(&b));
            let scale = ca.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let same = ca.iter().zip(&cb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            let flipped = ca.iter().zip(&cb).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()));
            worst = worst.max(same.min(flipped) / scale);
        }
    }
    outcome(
        worst <= 1e-6 && compared > 0,
        format!("20 trials, {compared} separated components: max score difference {worst:.2e} (relative)"),
    )
}

fn split_samples(scenes: &[mnfret_core::synth::Scene]) -> (Vec<Sample<'_>>, Vec<Sample<'_>>) {
    let samples: Vec<Sample<'_>> = scenes
        .iter()
        .map(|s| Sample {
            spectral: &s.spectral,
            profile: &s.profile,
        })
        .collect();
    let (train, test) = samples.split_at(samples.len() - 1);
    (train.to_vec(), test.to_vec())
}

fn criterion_7() -> Outcome {
    let base = SceneConfig::default();
    let noiseless = SceneConfig {
        latent_count: 5,
        noise_std: Some(vec![0.0; base.bands]),
        nonlinearity: 0.0,
        ..base.clone()
    };
    let scenes = generate_orbits(&noiseless).unwrap();
    let (train, test) = split_samples(&scenes);
    let settings = SweepSettings {
        methods: vec![Method::Pca, Method::Mnf],
        ks: vec![5],
        windows: vec![1, 3],
        ..SweepSettings::default()
    };
    let prepared = prepare_sweep(&train, &test, &settings).unwrap();
    let mut worst_rmse: f64 = 0.0;
    for &m in &settings.methods {
        for &w in &settings.windows {
            let cell = prepared.run_cell(m, 5, w, 0.0).unwrap();
            worst_rmse = worst_rmse.max(mnfret_core::mean_rmse(&cell.test).unwrap());
        }
    }

    // orthogonality of the training residual to the centred design, on the
    // default noisy scene where the residual is not just roundoff
    let scenes = generate_orbits(&base).unwrap();
    let (train, test) = split_samples(&scenes);
    let prepared = prepare_sweep(&train, &test, &SweepSettings {
        methods: vec![Method::Mnf],
        ks: vec![20],
        ..SweepSettings::default()
    })
    .unwrap();
    let pm = prepared.method(Method::Mnf).unwrap();
    let x = mnfret_core::evaluation::design_for(&pm.train_scores, 20, 3).unwrap();
    let model = mnfret_core::fit_linear(&x, &prepared.train_targets, 0.0).unwrap();
    let r = &prepared.train_targets - mnfret_core::predict(&model, &x).unwrap();
    let mut xc = x.matrix.clone();
    for mut c in xc.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
    let ortho = (xc.transpose() * &r).norm() / (xc.norm() * r.norm());

    outcome(
        worst_rmse <= 1e-6 && ortho <= 1e-6,
        format!("noiseless q=5 k=5 test mean RMSE {worst_rmse:.2e}; relative |Xᵀr| {ortho:.2e}"),
    )
}

struct Sweep10 {
    tables: sweep::SweepTables,
    elapsed: Duration,
}

fn run_ten_seed_sweep() -> Sweep10 {
    let config = SweepConfig {
        seeds: (1..=10).collect(),
        information_k: vec![2, 5, 10],
        ..SweepConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let tables = sweep::execute(&config, jobs, None).unwrap();
    Sweep10 {
        tables,
        elapsed: start.elapsed(),
    }
}

fn test_rmse(t: &sweep::SweepTables, method: Method, k: usize, w: usize, seed: u64) -> f64 {
    t.rows
        .iter()
        .find(|r| r.key == CellKey { method, k, w, seed } && r.split == Split::Test)
        .map(|r| r.mean_rmse)
        .unwrap_or(f64::NAN)
}

fn criterion_8(s: &Sweep10) -> Outcome {
    let t = &s.tables;
    let mut detail = Vec::new();
    let mut pass = t.failures.is_empty();
    for k in [5, 10, 20] {
        for w in [1, 3] {
            let wins = (1..=10)
                .filter(|&seed| test_rmse(t, Method::Mnf, k, w, seed) <= test_rmse(t, Method::Pca, k, w, seed))
                .count();
            pass &= wins >= 9;
            detail.push(format!("k={k},w={w}: {wins}/10"));
        }
    }
    for m in [Method::Pca, Method::Mnf] {
        let wins = (1..=10)
            .filter(|&seed| test_rmse(t, m, 20, 3, seed) <= test_rmse(t, m, 20, 1, seed))
            .count();
        pass &= wins >= 9;
        detail.push(format!("{} w3<=w1 at k=20: {wins}/10", m.as_str()));
    }
    pass &= s.elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!("MNF<=PCA {}; sweep {:.1}s", detail.join(", "), s.elapsed.as_secs_f64()),
    )
}

fn criterion_9(s: &Sweep10) -> Outcome {
    let t = &s.tables;
    let tc = |m: Method, k: usize, seed: u64| {
        t.information
            .iter()
            .find(|r| r.method == m && r.k == k && r.seed == seed)
            .map(|r| r.joint)
            .unwrap_or(f64::NAN)
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [2, 5, 10] {
        let wins = (1..=10).filter(|&seed| tc(Method::Mnf, k, seed) >= tc(Method::Pca, k, seed)).count();
        pass &= wins >= 8;
        detail.push(format!("k={k}: {wins}/10"));
    }
    outcome(pass, format!("T(MNF) >= T(PCA) {}", detail.join(", ")))
}

fn criterion_10() -> Outcome {
    let config = SweepConfig {
        k: vec![1, 2, 3, 5, 8, 13, 20, 32, 48],
        seeds: vec![1],
        include_train: true,
        ..SweepConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let t = sweep::execute(&config, jobs, None).unwrap();
    let mut worst_increase = f64::NEG_INFINITY;
    for &seed in &config.seeds {
        for &m in &config.methods {
            for &w in &config.w {
                let series: Vec<f64> = config
                    .k
                    .iter()
                    .map(|&k| {
                        t.rows
                            .iter()
                            .find(|r| r.key == CellKey { method: m, k, w, seed } && r.split == Split::Train)
                            .map(|r| r.mean_rmse)
                            .unwrap_or(f64::NAN)
                    })
                    .collect();
                for pair in series.windows(2) {
                    worst_increase = worst_increase.max(pair[1] - pair[0]);
                }
            }
        }
    }
    outcome(
        t.failures.is_empty() && worst_increase <= 1e-10,
        format!("largest step-to-step change in training RMSE along k {worst_increase:.2e}"),
    )
}

fn run_cli_sweep(config: &Path, out: &Path, jobs: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mnfret"))
        .args(["sweep", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", &jobs.to_string()])
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{
  "methods": ["pca", "mnf"],
  "k": [2, 5, 8],
  "w": [1, 3],
  "seeds": [1, 2, 3, 4],
  "include_train": true,
  "information_k": [2, 5],
  "scene": {"rows": 48, "cols": 24, "bands": 16, "levels": 6, "latent_count": 8}
}"#,
    )
    .unwrap();
    let runs = [(1, "a"), (4, "b"), (4, "c")];
    for (jobs, name) in runs {
        if !run_cli_sweep(&config, &dir.path().join(name), jobs) {
            return outcome(false, format!("sweep with --jobs {jobs} failed"));
        }
    }
    let files = ["sweep.csv", "levels.csv", "levels_train.csv", "information.csv"];
    for f in files {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        for other in ["b", "c"] {
            if std::fs::read(dir.path().join(other).join(f)).unwrap() != a {
                return outcome(false, format!("{f} differs between runs"));
            }
        }
    }
    outcome(true, format!("{} CSVs byte-identical across --jobs 1, 4, 4", files.len()))
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
        }
        o.detail.push_str(&format!(" [{:.2}s, limit {}s]", elapsed.as_secs_f64(), limit.as_secs()));
    } else {
        o.detail.push_str(&format!(" [{:.2}s]", elapsed.as_secs_f64()));
    }
    o
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let secs = |s| Some(Duration::from_secs(s));
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "paraboloid filter exact on quadratics", timed(secs(1), criterion_1)));
    results.push((2, "filter equals least-squares oracle", timed(secs(10), criterion_2)));
    results.push((3, "white-noise gain", timed(secs(5), criterion_3)));
    results.push((4, "MNF matches brute-force generalized solve", timed(secs(10), criterion_4)));
    results.push((5, "MNF reduces to PCA under identity noise", timed(None, criterion_5)));
    results.push((6, "MNF invariant to band transforms", timed(None, criterion_6)));
    results.push((7, "regression exact on noiseless scene", timed(None, criterion_7)));
    let sweep = run_ten_seed_sweep();
    results.push((8, "MNF <= PCA and w=3 <= w=1 over 10 seeds", criterion_8(&sweep)));
    results.push((9, "total correlation MNF >= PCA", criterion_9(&sweep)));
    results.push((10, "training RMSE non-increasing in k", timed(None, criterion_10)));
    results.push((11, "sweep CSVs independent of --jobs", timed(None, criterion_11)));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {n:>2}: {name}: {}", o.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
