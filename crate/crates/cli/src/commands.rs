use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mrbm::constraints::{lonlat_to_unit, load_polygon_csv, parse_lonlat_rows, ConstraintSet};
use mrbm::datasets::{load_dataset, load_geo_points, read_points_csv, save_dataset, synth_bimodal, synth_spd_ellipsoids, write_points_csv, Dataset};
use mrbm::diagnostics::{
    convergence_time, fit_power_law, histogram, histogram_tv, mmd, rbm_density_1d, ConvergenceConfig, ScalingResult, TvReference,
};
use mrbm::diffusion::{reverse_generate, tune_beta1, uniform_sample, BetaSchedule, TimeGrid, TuneConfig};
use mrbm::geometry::{Manifold, Point};
use mrbm::rng;
use mrbm::samplers::{ChainBatch, Sampler};
use mrbm::scorenet::{load_checkpoint, save_checkpoint, train_from, write_loss_csv, MlpParams, RescaledScore};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{self, resolve};
use crate::CliError;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(mrbm::Error::from)?;
    writeln!(w).map_err(mrbm::Error::from)?;
    Ok(())
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Metropolis and reflected chains on `[0, 1]` against the image-charges
/// density, one row per histogram cell per time slice.
pub fn density1d(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Density1d = config::load(config)?;
    if cfg.times.is_empty() || cfg.gammas.is_empty() || cfg.chains == 0 || cfg.bins == 0 {
        return Err(CliError::Config("times, gammas, chains and bins must be nonempty".into()));
    }
    if !(cfg.x0 > 0.0 && cfg.x0 < 1.0) || cfg.times.iter().chain(&cfg.gammas).any(|v| !(*v > 0.0)) {
        return Err(CliError::Config("x0 must lie in (0, 1); times and gammas must be positive".into()));
    }
    let m = Manifold::euclidean(1);
    let c = ConstraintSet::hypercube(1, 0.0, 1.0);
    let mut times = cfg.times.clone();
    times.sort_by(f64::total_cmp);
    let gamma_min = cfg.gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w = create(&out.join("density1d.csv"))?;
    writeln!(w, "sampler,gamma,t,x,empirical,oracle,tv").map_err(mrbm::Error::from)?;
    let mut summary = Vec::new();
    let mut met = true;
    for &sampler in &cfg.samplers {
        for &gamma in &cfg.gammas {
            let name = format!("density1d/{}/{gamma:e}", sampler.name());
            let mut batch = ChainBatch::replicate(&m, &c, &Point(vec![cfg.x0]), cfg.chains, cfg.seed, &name)?;
            let mut done = 0usize;
            for &t in &times {
                let target = (t / gamma).round() as usize;
                if target > done {
                    batch.advance(sampler, &vec![gamma; target - done])?;
                    done = target;
                }
                let xs = batch.coordinate(0);
                let oracle = |x: f64| rbm_density_1d(x, t, cfg.x0, 1e-14).unwrap_or(f64::NAN);
                let tv = histogram_tv(&xs, TvReference::Density(&oracle), 0.0, 1.0, cfg.bins)?;
                let emp = histogram(&xs, 0.0, 1.0, cfg.bins);
                let width = 1.0 / cfg.bins as f64;
                for (i, p) in emp.iter().enumerate() {
                    let x = (i as f64 + 0.5) * width;
                    writeln!(w, "{},{gamma:e},{t},{x},{},{},{tv}", sampler.name(), p / width, oracle(x))
                        .map_err(mrbm::Error::from)?;
                }
                if gamma == gamma_min && tv >= cfg.tv_target {
                    met = false;
                }
                summary.push(Slice {
                    sampler,
                    gamma,
                    t,
                    tv,
                });
            }
        }
    }
    w.flush().map_err(mrbm::Error::from)?;
    write_json(&out.join("density1d.json"), &summary)?;
    if met {
        Ok(())
    } else {
        Err(CliError::Miss(format!("a TV at gamma = {gamma_min:e} is not below {}", cfg.tv_target)))
    }
}

#[derive(Serialize)]
struct Slice {
    sampler: Sampler,
    gamma: f64,
    t: f64,
    tv: f64,
}

#[derive(Serialize)]
struct ScalingSummary {
    results: Vec<ScalingResult>,
    exponents: Vec<(Sampler, f64)>,
}

/// Convergence-time scaling on hypercubes `[−1, 1]^d`.
///
/// `scaling.csv` holds the deterministic step counts; wall-clock times,
/// which the exponents are fitted to, go to `scaling_wall.csv` and
/// `scaling.json`.
pub fn scaling(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Scaling = config::load(config)?;
    if cfg.dims.len() < 3 {
        return Err(CliError::Config(format!(
            "a power-law fit needs at least 3 dimensions, got {}",
            cfg.dims.len()
        )));
    }
    if cfg.dims.iter().any(|d| *d == 0) || !(cfg.gamma > 0.0) {
        return Err(CliError::Config("dims and gamma must be positive".into()));
    }
    let mut conv = ConvergenceConfig::default();
    if let Some(s) = &cfg.convergence {
        conv.chains = s.chains.unwrap_or(conv.chains);
        conv.checkpoint_every = s.checkpoint_every.unwrap_or(conv.checkpoint_every);
        conv.bins = s.bins.unwrap_or(conv.bins);
        conv.max_steps = s.max_steps.unwrap_or(conv.max_steps);
    }
    let mut results = Vec::new();
    for &sampler in &cfg.samplers {
        let mut times = Vec::new();
        for &d in &cfg.dims {
            let m = Manifold::euclidean(d);
            let c = ConstraintSet::hypercube(d, -1.0, 1.0);
            let x0 = Point(vec![cfg.x0; d]);
            times.push(convergence_time(&m, &c, sampler, &x0, cfg.tv_threshold, cfg.gamma, cfg.seed, &conv)?);
        }
        let dims: Vec<f64> = cfg.dims.iter().map(|&d| d as f64).collect();
        let walls: Vec<f64> = times.iter().map(|t| t.wall_seconds.max(1e-9)).collect();
        let fit = fit_power_law(&dims, &walls)?;
        results.push(ScalingResult {
            sampler,
            dims: cfg.dims.clone(),
            times,
            fit: Some(fit),
        });
    }
    let mut steps = create(&out.join("scaling.csv"))?;
    let mut wall = create(&out.join("scaling_wall.csv"))?;
    writeln!(steps, "sampler,d,steps").map_err(mrbm::Error::from)?;
    writeln!(wall, "sampler,d,wall_seconds").map_err(mrbm::Error::from)?;
    for r in &results {
        for (d, t) in r.dims.iter().zip(&r.times) {
            writeln!(steps, "{},{d},{}", r.sampler.name(), t.steps).map_err(mrbm::Error::from)?;
            writeln!(wall, "{},{d},{}", r.sampler.name(), t.wall_seconds).map_err(mrbm::Error::from)?;
        }
    }
    steps.flush().map_err(mrbm::Error::from)?;
    wall.flush().map_err(mrbm::Error::from)?;
    let exponents: Vec<(Sampler, f64)> = results.iter().map(|r| (r.sampler, r.fit.map_or(f64::NAN, |f| f.exponent))).collect();
    write_json(&out.join("scaling.json"), &ScalingSummary { results, exponents: exponents.clone() })?;
    if let Some(t) = &cfg.targets {
        let get = |s: Sampler| exponents.iter().find(|(x, _)| *x == s).map(|(_, e)| *e);
        let (me, re) = (get(Sampler::Metropolis), get(Sampler::Reflected));
        let mut misses = Vec::new();
        if let (Some(max), Some(e)) = (t.metropolis_max, me) {
            if e > max {
                misses.push(format!("metropolis exponent {e:.3} > {max}"));
            }
        }
        if let (Some(min), Some(e)) = (t.reflected_min, re) {
            if e < min {
                misses.push(format!("reflected exponent {e:.3} < {min}"));
            }
        }
        if let (Some(gap), Some(a), Some(b)) = (t.gap_min, me, re) {
            if b - a < gap {
                misses.push(format!("exponent gap {:.3} < {gap}", b - a));
            }
        }
        if !misses.is_empty() {
            return Err(CliError::Miss(misses.join("; ")));
        }
    }
    Ok(())
}

/// Everything `mrbm sample` needs from a training run.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    manifold: Manifold,
    constraint: ConstraintSet,
    grid: TimeGrid,
    eps: f64,
    checkpoint: PathBuf,
    dataset: PathBuf,
}

fn build_dataset(spec: &config::DatasetSpec, base: &Path) -> Result<Dataset, CliError> {
    Ok(match spec {
        config::DatasetSpec::Bimodal {
            manifold,
            constraint,
            n,
            seed,
        } => synth_bimodal(manifold, constraint, *n, *seed)?,
        config::DatasetSpec::SpdEllipsoids { n, bound, seed } => synth_spd_ellipsoids(*n, *bound, *seed)?,
        config::DatasetSpec::Geo { points, polygon } => {
            let (ds, report) = load_geo_points(&resolve(base, points), &resolve(base, polygon))?;
            eprintln!("loaded {} of {} points ({} dropped)", ds.len(), report.rows, report.dropped);
            if let Some(w) = report.warning {
                eprintln!("warning: {w}");
            }
            ds
        }
        config::DatasetSpec::Manifest { path } => load_dataset(&resolve(base, path))?,
    })
}

/// Trains a score network; writes the dataset, checkpoint, loss curve and
/// a run manifest for `mrbm sample`.
pub fn train(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Train = config::load(config)?;
    cfg.train.validate()?;
    let base = base_dir(config);
    let ds = build_dataset(&cfg.dataset, &base)?;
    let (m, c) = (&ds.manifold, &ds.constraint);
    let data = ds.train_points();
    if data.is_empty() {
        return Err(CliError::Config("the training split is empty".into()));
    }
    let beta1 = match cfg.grid.beta1 {
        Some(b) => b,
        None => {
            let tune = TuneConfig {
                beta0: cfg.grid.beta0,
                seed: rng::derive_seed(cfg.train.seed, "tune"),
                ..TuneConfig::default()
            };
            let b = tune_beta1(m, c, &data, cfg.grid.tune_tv, &tune)?;
            eprintln!("tuned beta1 = {b}");
            b
        }
    };
    let grid = TimeGrid::new(BetaSchedule::new(cfg.grid.beta0, beta1)?, cfg.grid.steps)?;
    let dataset = save_dataset(&ds, out, "dataset")?;
    let init = MlpParams::init(m.storage_dim(), cfg.train.width, rng::derive_seed(cfg.train.seed, "init"))?;
    let every = (cfg.train.steps / 20).max(1);
    let result = train_from(m, c, &data, &grid, &cfg.train, init, &mut |r| {
        if r.step % every == 0 {
            eprintln!("step {} loss {:.5} lr {:.3e}", r.step, r.loss, r.lr);
        }
    })?;
    write_loss_csv(create(&out.join("loss.csv"))?, &result.losses)?;
    let checkpoint = PathBuf::from("model.ckpt");
    save_checkpoint(&out.join(&checkpoint), &result.params, Some(&cfg.train))?;
    write_json(
        &out.join("run.json"),
        &RunManifest {
            manifold: m.clone(),
            constraint: c.clone(),
            grid,
            eps: cfg.train.eps,
            checkpoint,
            dataset: dataset.file_name().map(PathBuf::from).unwrap_or_default(),
        },
    )?;
    Ok(())
}

/// Reverse generation from a trained run (or uniform draws).
pub fn sample(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Sample = config::load(config)?;
    let run_dir = resolve(&base_dir(config), &cfg.run);
    let run: RunManifest = config::load(&run_dir.join("run.json"))?;
    let (m, c) = (&run.manifold, &run.constraint);
    let points = if cfg.uniform {
        uniform_sample(m, c, cfg.n, cfg.seed)?
    } else {
        let (params, _) = load_checkpoint(&run_dir.join(&run.checkpoint))
            .map_err(|e| CliError::Config(format!("cannot load checkpoint: {e}")))?;
        let score = RescaledScore {
            model: &params,
            manifold: m,
            constraint: c,
            eps: run.eps,
        };
        reverse_generate(m, c, &score, &run.grid, cfg.n, cfg.seed)?
    };
    write_points_csv(create(&out.join("samples.csv"))?, &points, m.storage_dim())?;
    Ok(())
}

#[derive(Serialize)]
struct MmdReport {
    mmd: f64,
    mmd2_raw: f64,
    mmd2_se: f64,
    ci_low: f64,
    ci_high: f64,
    bootstrap: usize,
}

fn read_points(path: &Path) -> Result<Vec<Point>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let dim = text.lines().next().map_or(0, |h| h.split(',').count());
    Ok(read_points_csv(text.as_bytes(), dim)?)
}

/// MMD between two point files with a percentile bootstrap interval.
pub fn mmd_cmd(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Mmd = config::load(config)?;
    let base = base_dir(config);
    let kernel = match (&cfg.kernel, &cfg.dataset) {
        (Some(k), None) => k.clone(),
        (None, Some(p)) => load_dataset(&resolve(&base, p))?
            .matched_kernel()
            .ok_or_else(|| CliError::Config("the dataset has no matched kernel; give one explicitly".into()))?,
        _ => return Err(CliError::Config("give exactly one of 'kernel' and 'dataset'".into())),
    };
    let a = read_points(&resolve(&base, &cfg.a))?;
    let b = read_points(&resolve(&base, &cfg.b))?;
    if a.first().map(Point::len) != b.first().map(Point::len) {
        return Err(CliError::Config("the two point files have different dimensions".into()));
    }
    let est = mmd(&a, &b, &kernel)?;
    let mut boots: Vec<f64> = (0..cfg.bootstrap)
        .map(|i| {
            let mut r = rng::stream(cfg.seed, "mmd/bootstrap", i as u64);
            let ra: Vec<Point> = (0..a.len()).map(|_| a[r.random_range(0..a.len())].clone()).collect();
            let rb: Vec<Point> = (0..b.len()).map(|_| b[r.random_range(0..b.len())].clone()).collect();
            mmd(&ra, &rb, &kernel).map(|v| v.mmd)
        })
        .collect::<Result<_, _>>()?;
    boots.sort_by(f64::total_cmp);
    let q = |p: f64| {
        if boots.is_empty() {
            f64::NAN
        } else {
            boots[((p * (boots.len() - 1) as f64).round() as usize).min(boots.len() - 1)]
        }
    };
    write_json(
        &out.join("mmd.json"),
        &MmdReport {
            mmd: est.mmd,
            mmd2_raw: est.mmd2_raw,
            mmd2_se: est.mmd2_se,
            ci_low: q(0.025),
            ci_high: q(0.975),
            bootstrap: cfg.bootstrap,
        },
    )
}

/// Membership of every `lon_deg,lat_deg` row in a polygon.
pub fn polycheck(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: config::Polycheck = config::load(config)?;
    let base = base_dir(config);
    let poly = load_polygon_csv(resolve(&base, &cfg.polygon))?;
    let path = resolve(&base, &cfg.points);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_lonlat_rows(&text)?;
    let mut w = create(&out.join("membership.csv"))?;
    writeln!(w, "lon_deg,lat_deg,inside").map_err(mrbm::Error::from)?;
    for (lon, lat, _) in rows {
        let label = match poly.contains(&lonlat_to_unit(lon, lat)) {
            Ok(true) => "true",
            Ok(false) => "false",
            Err(mrbm::Error::BoundaryAmbiguous) => "ambiguous",
            Err(e) => return Err(e.into()),
        };
        writeln!(w, "{lon},{lat},{label}").map_err(mrbm::Error::from)?;
    }
    w.flush().map_err(mrbm::Error::from)?;
    Ok(())
}
