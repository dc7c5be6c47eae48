//! Generation, geodesic caching, training, evaluation and ablation runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mae_core::datasets::{load_csv, swiss_roll, toroidal_helix};
use mae_core::metrics::{evaluate_with_latent, kl_key};
use mae_core::model::data_scale;
use mae_core::trainer::{ablation_configs, fit, precompute_distances, EpochRecord, Variant};
use mae_core::{DistanceMatrix, MetricsReport, MlpModel, PointCloud, ShapeSpec, TrainReport};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{create_dir, points_hash, read_to_string, sha256_hex, write_atomic, write_atomic_with};

/// Directory for cached geodesic matrices; overrides the run directory.
pub const CACHE_ENV: &str = "MAE_CACHE_DIR";

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.csv";
pub const MODEL_FILE: &str = "model.maecp";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EMBEDDING_FILE: &str = "embedding.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Everything needed to reproduce and evaluate one training run. Relative
/// paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub seed: u64,
    /// Verbatim copy of the input document.
    pub config_snapshot: PathBuf,
    pub config_sha256: String,
    /// The document after command-line overrides.
    pub effective_config: RunConfig,
    pub dataset: PathBuf,
    pub dataset_sha256: String,
    pub intrinsic_dims: usize,
    pub distance_cache: PathBuf,
    pub checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub report: PathBuf,
    pub metrics: PathBuf,
    pub embedding: PathBuf,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Generates or reads the configured dataset. Points are returned as
/// produced, not centered.
pub fn load_dataset(config: &DatasetConfig, base_dir: &Path) -> Result<PointCloud> {
    let cloud = match config {
        DatasetConfig::SwissRoll { n_points, seed, holes } => swiss_roll(*n_points, &holes.holes(), *seed)?,
        DatasetConfig::ToroidalHelix {
            n_points,
            seed,
            major_radius,
            minor_radius,
            windings,
        } => toroidal_helix(*n_points, *major_radius, *minor_radius, *windings, *seed)?,
        DatasetConfig::Csv { path, intrinsic_dims } => {
            let path = base_dir.join(path);
            load_csv(&path, *intrinsic_dims > 0, *intrinsic_dims)?
        }
    };
    Ok(cloud)
}

/// Writes a dataset as CSV, one point per row with intrinsic columns last.
pub fn write_dataset(cloud: &PointCloud, path: &Path) -> Result<()> {
    write_atomic_with(path, |buf| cloud.write_csv(buf).map_err(|e| CliError::io(path, e)))
}

/// Cache directory from the environment, falling back to `default`.
pub fn cache_dir(default: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => default.to_path_buf(),
    }
}

/// File name of the cached geodesics for a point set and `k`.
pub fn cache_file_name(points: ArrayView2<f64>, k: usize) -> String {
    let key = sha256_hex(format!("{}:{k}", points_hash(points)).as_bytes());
    format!("geodesic-{}-k{k}.maedm", &key[..16])
}

/// Geodesic distances, read from `dir` when a matching cache file exists
/// and computed then stored otherwise.
pub fn cached_distances(points: ArrayView2<f64>, k: usize, dir: &Path) -> Result<(DistanceMatrix, PathBuf)> {
    let path = dir.join(cache_file_name(points, k));
    if path.exists() {
        if let Ok(d) = DistanceMatrix::load(&path) {
            if d.n() == points.nrows() {
                return Ok((d, path));
            }
        }
    }
    let d = precompute_distances(points, k)?;
    create_dir(dir)?;
    write_distances(&d, &path)?;
    Ok((d, path))
}

pub fn write_distances(d: &DistanceMatrix, path: &Path) -> Result<()> {
    write_atomic_with(path, |buf| d.write_to(buf).map_err(|e| CliError::io(path, e)))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_model(model: &MlpModel, path: &Path) -> Result<()> {
    write_atomic_with(path, |buf| Ok(model.write_checkpoint(buf)?))
}

/// Where a training run puts its files, and what it reports while running.
pub struct RunOptions<'a> {
    pub out_dir: PathBuf,
    /// Used for `csv` datasets with relative paths.
    pub base_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

impl RunOptions<'_> {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            base_dir: PathBuf::from("."),
            cache_dir: None,
            on_epoch: None,
        }
    }
}

/// Outcome of [`train_run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
    pub metrics: MetricsReport,
    pub report: TrainReport,
}

/// Trains from a configuration and writes the run directory: config
/// snapshot, dataset, checkpoints, report, metrics, embedding and manifest.
///
/// `source` is the document text the configuration came from, before any
/// overrides were applied to `config`.
pub fn train_run(source: &str, config: &RunConfig, opts: RunOptions<'_>) -> Result<RunOutcome> {
    config.validate()?;
    let RunOptions {
        out_dir,
        base_dir,
        cache_dir: cache,
        mut on_epoch,
    } = opts;
    let ckpt_dir = out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    write_atomic(&out_dir.join(CONFIG_FILE), source.as_bytes())?;

    let mut cloud = load_dataset(&config.dataset, &base_dir)?;
    cloud.center();
    write_dataset(&cloud, &out_dir.join(DATASET_FILE))?;
    let intrinsic_dims = cloud.intrinsic.as_ref().map_or(0, |m| m.ncols());

    let cache = cache.unwrap_or_else(|| out_dir.clone());
    let train = config.train_config();
    let (distances, cache_path) = cached_distances(cloud.points.view(), train.k_neighbors, &cache)?;

    let spec = ShapeSpec::symmetric(
        cloud.dim(),
        config.model.latent_dim,
        &config.model.hidden,
        config.model.activation,
    );
    let mut model = MlpModel::init(&spec, train.seed)?.with_scale(data_scale(cloud.points.view()))?;
    let mut checkpoints = Vec::new();
    let report = fit(&mut model, cloud.points.view(), &distances, &train, |record, model| {
        if let Some(cb) = on_epoch.as_mut() {
            cb(record);
        }
        let epoch = record.epoch + 1;
        if train.checkpoint_every > 0 && epoch % train.checkpoint_every == 0 {
            let rel = PathBuf::from("checkpoints").join(format!("epoch_{epoch:05}.maecp"));
            write_model(model, &out_dir.join(&rel)).map_err(|e| match e {
                CliError::Core(e) => e,
                other => mae_core::Error::Io(std::io::Error::other(other.to_string())),
            })?;
            checkpoints.push(rel);
        }
        Ok(())
    })?;
    write_model(&model, &out_dir.join(MODEL_FILE))?;
    write_json(&report, &out_dir.join(REPORT_FILE))?;

    let manifest = RunManifest {
        name: config.name.clone(),
        seed: train.seed,
        config_snapshot: CONFIG_FILE.into(),
        config_sha256: sha256_hex(source.as_bytes()),
        effective_config: config.clone(),
        dataset: DATASET_FILE.into(),
        dataset_sha256: points_hash(cloud.points.view()),
        intrinsic_dims,
        distance_cache: relative_to(&cache_path, &out_dir),
        checkpoint: MODEL_FILE.into(),
        checkpoints,
        report: REPORT_FILE.into(),
        metrics: METRICS_FILE.into(),
        embedding: EMBEDDING_FILE.into(),
    };
    let metrics = evaluate_in(&manifest, &out_dir, Some(&distances))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_json(&manifest, &manifest_path)?;
    Ok(RunOutcome {
        manifest_path,
        manifest,
        metrics,
        report,
    })
}

fn relative_to(path: &Path, dir: &Path) -> PathBuf {
    path.strip_prefix(dir)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf())
}

/// Recomputes metrics for a finished run and rewrites `metrics.json` and
/// `embedding.csv`.
pub fn evaluate_run(manifest_path: &Path) -> Result<MetricsReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    evaluate_in(&manifest, dir, None)
}

fn evaluate_in(manifest: &RunManifest, dir: &Path, distances: Option<&DistanceMatrix>) -> Result<MetricsReport> {
    let missing = |what: &str, path: &Path| CliError::Manifest {
        path: path.to_path_buf(),
        reason: format!("missing {what}"),
    };
    let checkpoint = dir.join(&manifest.checkpoint);
    if !checkpoint.is_file() {
        return Err(missing("checkpoint", &checkpoint));
    }
    let model = MlpModel::load(&checkpoint)?;
    let dataset = dir.join(&manifest.dataset);
    if !dataset.is_file() {
        return Err(missing("dataset", &dataset));
    }
    let cloud = load_csv(&dataset, manifest.intrinsic_dims > 0, manifest.intrinsic_dims)?;
    if points_hash(cloud.points.view()) != manifest.dataset_sha256 {
        return Err(CliError::Manifest {
            path: dataset,
            reason: "dataset contents do not match the recorded hash".into(),
        });
    }

    let loaded;
    let distances = match distances {
        Some(d) => d,
        None => {
            let k = manifest.effective_config.train.k_neighbors;
            let cache = dir.join(&manifest.distance_cache);
            loaded = match DistanceMatrix::load(&cache) {
                Ok(d) if d.n() == cloud.len() => d,
                _ => precompute_distances(cloud.points.view(), k)?,
            };
            &loaded
        }
    };

    let eval = &manifest.effective_config.eval;
    let (metrics, latent) = evaluate_with_latent(&model, cloud.points.view(), distances, eval.k_eval, &eval.sigmas)?;
    write_json(&metrics, &dir.join(&manifest.metrics))?;
    write_atomic(
        &dir.join(&manifest.embedding),
        embedding_csv(latent.view(), cloud.intrinsic.as_ref().map(|m| m.view())).as_bytes(),
    )?;
    Ok(metrics)
}

/// Latent coordinates followed by intrinsic coordinates, one row per point,
/// under a `#` header line naming the columns.
pub fn embedding_csv(latent: ArrayView2<f64>, intrinsic: Option<ArrayView2<f64>>) -> String {
    let mut out = String::from("#");
    let mut names: Vec<String> = (0..latent.ncols()).map(|j| format!("latent_{j}")).collect();
    if let Some(m) = intrinsic {
        names.extend((0..m.ncols()).map(|j| format!("intrinsic_{j}")));
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..latent.nrows() {
        let extra = intrinsic.map(|m| m.row(i).to_vec()).unwrap_or_default();
        let cells: Vec<String> = latent.row(i).iter().chain(&extra).map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One line of the ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub manifest_path: PathBuf,
    pub metrics: MetricsReport,
}

/// Runs the four ablation variants of `config` into subdirectories of
/// `opts.out_dir` and writes `ablation.csv` there.
pub fn ablate_run(source: &str, config: &RunConfig, opts: RunOptions<'_>) -> Result<Vec<AblationRow>> {
    config.validate()?;
    let RunOptions {
        out_dir,
        base_dir,
        cache_dir: cache,
        mut on_epoch,
    } = opts;
    // every variant trains on the same points, so share one cache
    let cache = cache.unwrap_or_else(|| out_dir.clone());
    let mut rows = Vec::new();
    for (variant, train) in ablation_configs(&config.train_config()) {
        let mut variant_config = config.clone();
        variant_config.loss = train.weights;
        variant_config.name = format!("{}-{}", config.name, variant.name());
        let mut forward = |r: &EpochRecord| {
            if let Some(cb) = on_epoch.as_mut() {
                cb(r);
            }
        };
        let outcome = train_run(
            source,
            &variant_config,
            RunOptions {
                out_dir: out_dir.join(variant.name()),
                base_dir: base_dir.clone(),
                cache_dir: Some(cache.clone()),
                on_epoch: Some(&mut forward),
            },
        )?;
        rows.push(AblationRow {
            variant,
            manifest_path: outcome.manifest_path,
            metrics: outcome.metrics,
        });
    }
    write_atomic(&out_dir.join(ABLATION_FILE), ablation_csv(&rows).as_bytes())?;
    Ok(rows)
}

/// `variant,recon,knn,kl_<sigma>...` with one row per variant.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("variant,recon,knn");
    if let Some(first) = rows.first() {
        for (sigma, _) in &first.metrics.kl {
            out.push(',');
            out.push_str(&kl_key(*sigma));
        }
    }
    out.push('\n');
    for row in rows {
        let m = &row.metrics;
        write!(out, "{},{},{}", row.variant.name(), m.recon_mse, m.knn_recall).unwrap();
        for (_, v) in &m.kl {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}
