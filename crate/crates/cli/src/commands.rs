use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pgdl_core::baseline::cg_sense;
use pgdl_core::eval::{aggregate, metrics_csv, psnr, ssim, write_pgm, AggregateReport, SliceMetrics};
use pgdl_core::model::{unrolled_forward, ModelParams};
use pgdl_core::physics::{apply_e, apply_eh, Complex64, ComplexImage, KSpace};
use pgdl_core::sampling::{MaskFamily, SamplingMask};
use pgdl_core::train::{
    family_seed, load_checkpoint, save_checkpoint, train_supervised, training_masks, Checkpoint, Scheme, TrainEvent,
    TrainSlice,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{create_dir, generate_dataset, read_json, Dataset, Split};
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "log.csv";
const LOG_HEADER: &str = "step,epoch,slice,mask,loss,grad_norm,wall_time";

/// Resolves relative artifact paths (datasets, runs, reconstructions)
/// against `PGDL_OUTPUT_ROOT` when it is set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os("PGDL_OUTPUT_ROOT") {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn cmd_generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let out = output_path(out);
    create_dir(&out)?;
    let manifest = generate_dataset(cfg, &out)?;
    Ok(Dataset { dir: out, manifest })
}

/// Training manifest: what was trained on, with which masks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainManifest {
    pub dataset: PathBuf,
    pub config: ExperimentConfig,
    pub k: usize,
    pub scheme: String,
    /// Per training slice: Ω and its subsets (first epoch when resampling).
    pub mask_families: Vec<MaskFamily>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Keeps the header and the first `steps` records of an existing log.
fn truncate_log(path: &Path, steps: u64) -> Result<()> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| CliError::io(path, e))?;
    let kept: Vec<&str> = lines.iter().take(1 + steps as usize).map(String::as_str).collect();
    if kept.len() != 1 + steps as usize {
        return Err(CliError::Data(format!("{} has fewer than {steps} records", path.display())));
    }
    write_text(path, &(kept.join("\n") + "\n"))
}

/// Trains on the dataset's training split with `k` subsets per slice and
/// writes `manifest.json`, `log.csv` and a checkpoint after every epoch.
pub fn cmd_train(cfg: &ExperimentConfig, dataset: &Path, out: &Path, k: Option<usize>, resume: bool) -> Result<Checkpoint> {
    let ds = Dataset::open(&output_path(dataset))?;
    ds.check_config(cfg)?;
    let out = output_path(out);
    create_dir(&out)?;
    let k = k.unwrap_or(cfg.sampling.k);
    let tcfg = cfg.train_config_with_k(k);
    tcfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let slices: Vec<TrainSlice> = ds.train_slices()?;
    let scheme = if k == 1 { Scheme::Conventional } else { Scheme::MultiMask };

    let omegas: Vec<&SamplingMask> = slices.iter().map(TrainSlice::omega).collect();
    let families = training_masks(&omegas, &tcfg, scheme, 1)?
        .into_iter()
        .enumerate()
        .map(|(i, children)| MaskFamily {
            parent: omegas[i].clone(),
            children,
            rho: if scheme == Scheme::Conventional { 1.0 } else { tcfg.rho },
            seed: family_seed(&tcfg, i, 1),
        })
        .collect();
    let manifest = TrainManifest {
        dataset: ds.dir.clone(),
        config: cfg.clone(),
        k,
        scheme: format!("{scheme:?}").to_lowercase(),
        mask_families: families,
    };
    write_text(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;

    let (h, w, c) = ds.dims();
    let metadata = serde_json::json!({
        "dataset": ds.dir,
        "height": h,
        "width": w,
        "coils": c,
        "k": k,
        "experiment": cfg,
    });
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let log_path = out.join(LOG_FILE);
    let start = if resume {
        let ck = load_checkpoint(&ckpt_path)?;
        // Only the epoch budget may change on resume.
        let mut saved = ck.config.clone();
        saved.epochs = tcfg.epochs;
        if saved != tcfg {
            return Err(CliError::Config("checkpoint was written with a different training config".into()));
        }
        truncate_log(&log_path, ck.state.step)?;
        Some(ck.state)
    } else {
        write_text(&log_path, &format!("{LOG_HEADER}\n"))?;
        None
    };
    let mut log = OpenOptions::new().append(true).open(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut observer = |event: TrainEvent<'_>| -> pgdl_core::Result<()> {
        match event {
            TrainEvent::Step(r) => writeln!(
                log,
                "{},{},{},{},{:.17e},{:.17e},{:.3}",
                r.step, r.epoch, r.slice, r.mask, r.loss, r.grad_norm, r.elapsed
            )
            .map_err(|e| pgdl_core::Error::Io { path: log_path.clone(), source: e }),
            TrainEvent::EpochEnd(state) => save_checkpoint(
                &ckpt_path,
                &Checkpoint { config: tcfg.clone(), state: state.clone(), metadata: metadata.clone() },
            ),
        }
    };
    let state = train_supervised(&slices, &tcfg, start, &mut observer)?;
    let ck = Checkpoint { config: tcfg.clone(), state, metadata: metadata.clone() };
    save_checkpoint(&ckpt_path, &ck)?;
    Ok(ck)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Unrolled,
    CgSense,
    ZeroFilled,
    /// The stored ground truth, for checking the evaluation itself.
    Reference,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CliError::Config(format!("unknown method `{s}` (unrolled, cg-sense, zero-filled, reference)")))
    }
}

/// Describes a reconstruction directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconManifest {
    pub label: String,
    /// Effective config with defaults resolved.
    pub config: ExperimentConfig,
    pub method: Method,
    pub dataset: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub slices: Vec<usize>,
}

fn push_planes(out: &mut Vec<u8>, data: &[Complex64]) {
    for v in data.iter().map(|v| v.re).chain(data.iter().map(|v| v.im)) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn image_bytes(image: &ComplexImage, kspace: &KSpace) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * (image.data().len() + kspace.data().len()));
    push_planes(&mut out, image.data());
    for c in 0..kspace.coils() {
        push_planes(&mut out, kspace.coil(c));
    }
    out
}

/// Reconstructs every test slice. Writes `<id>.bin` (image planes then
/// full k-space planes, little-endian f64), `<id>.pgm` and `recon.json`.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    dataset: &Path,
    method: Method,
    checkpoint: Option<&Path>,
    out: &Path,
    label: Option<&str>,
) -> Result<ReconManifest> {
    let ds = Dataset::open(&output_path(dataset))?;
    let (h, w, c) = ds.dims();
    let params: Option<ModelParams> = match method {
        Method::Unrolled => {
            let path = checkpoint.ok_or_else(|| CliError::Config("the unrolled method needs --checkpoint".into()))?;
            let path = &output_path(path);
            let ck = load_checkpoint(path)?;
            let dims = |key: &str| ck.metadata.get(key).and_then(|v| v.as_u64()).map(|v| v as usize);
            if (dims("height"), dims("width"), dims("coils")) != (Some(h), Some(w), Some(c)) {
                return Err(CliError::Data(format!(
                    "checkpoint {} was trained on {:?}×{:?} with {:?} coils, dataset is {h}×{w} with {c}",
                    path.display(),
                    dims("height"),
                    dims("width"),
                    dims("coils")
                )));
            }
            Some(ck.state.params)
        }
        _ => None,
    };
    let out = output_path(out);
    create_dir(&out)?;
    let full = SamplingMask::full(w);
    let mut ids = Vec::new();
    for entry in ds.entries(Split::Test) {
        let s = ds.load(entry)?;
        let coils = Arc::new(s.data.coils.clone());
        let omega = &entry.omega;
        let image = match method {
            Method::Unrolled => unrolled_forward(&s.y, omega, &coils, params.as_ref().expect("loaded above"))?.image,
            Method::CgSense => cg_sense(&s.y, omega, &coils, cfg.eval.cg_sense_lambda, cfg.eval.cg_sense_iters)?.image,
            Method::ZeroFilled => apply_eh(&s.y, &coils, omega)?,
            Method::Reference => s.data.ground_truth.clone(),
        };
        let kspace = apply_e(&image, &coils, &full)?;
        let bin = out.join(format!("{:04}.bin", entry.id));
        write_text_bytes(&bin, &image_bytes(&image, &kspace))?;
        write_pgm(&out.join(format!("{:04}.pgm", entry.id)), &image)?;
        ids.push(entry.id);
    }
    let default_label = match method {
        Method::Unrolled => "unrolled",
        Method::CgSense => "CG-SENSE",
        Method::ZeroFilled => "zero-filled",
        Method::Reference => "reference",
    };
    let manifest = ReconManifest {
        label: label.unwrap_or(default_label).to_string(),
        config: cfg.clone(),
        method,
        dataset: ds.dir.clone(),
        checkpoint: if method == Method::Unrolled { checkpoint.map(output_path) } else { None },
        height: h,
        width: w,
        coils: c,
        slices: ids,
    };
    write_text(&out.join("recon.json"), &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;
    Ok(manifest)
}

fn write_text_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_recon_image(path: &Path, h: usize, w: usize) -> Result<ComplexImage> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let plane = h * w;
    if bytes.len() < 16 * plane {
        return Err(CliError::Data(format!("{} is truncated", path.display())));
    }
    let vals: Vec<f64> = bytes[..16 * plane].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    let data = (0..plane).map(|i| Complex64::new(vals[i], vals[plane + i])).collect();
    Ok(ComplexImage::new(h, w, data)?)
}

/// Outputs of an evaluation run.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metrics: Vec<SliceMetrics>,
    pub report: AggregateReport,
}

/// Scores reconstruction directories against the dataset's ground truth and
/// writes `metrics.csv`, `report.csv` and `report.txt` to `out`.
pub fn cmd_evaluate(dataset: &Path, recon_dirs: &[PathBuf], out: &Path) -> Result<Evaluation> {
    if recon_dirs.is_empty() {
        return Err(CliError::Config("no reconstruction directories given".into()));
    }
    let ds = Dataset::open(&output_path(dataset))?;
    let (h, w, _) = ds.dims();
    let tests = ds.load_split(Split::Test)?;
    if tests.is_empty() {
        return Err(CliError::Data("dataset has no test slices".into()));
    }
    let mut metrics = Vec::new();
    for dir in recon_dirs {
        let dir = output_path(dir);
        let rm: ReconManifest = read_json(&dir.join("recon.json"))?;
        if (rm.height, rm.width) != (h, w) {
            return Err(CliError::Data(format!("{} holds {}×{} images, dataset is {h}×{w}", dir.display(), rm.height, rm.width)));
        }
        let missing: Vec<usize> =
            tests.iter().map(|t| t.entry.id).filter(|id| !dir.join(format!("{id:04}.bin")).exists()).collect();
        if !missing.is_empty() {
            return Err(CliError::Data(format!("{} is missing test slices {missing:?}", dir.display())));
        }
        for t in &tests {
            let rec = read_recon_image(&dir.join(format!("{:04}.bin", t.entry.id)), h, w)?;
            let truth = &t.data.ground_truth;
            metrics.push(SliceMetrics { slice: t.entry.id, method: rm.label.clone(), ssim: ssim(truth, &rec)?, psnr: psnr(truth, &rec)? });
        }
    }
    let report = aggregate(&metrics)?;
    let out = output_path(out);
    create_dir(&out)?;
    write_text(&out.join("metrics.csv"), &metrics_csv(&metrics))?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    write_text(&out.join("report.txt"), &report.to_table())?;
    Ok(Evaluation { metrics, report })
}

/// Generates data, trains one model per `k`, reconstructs the test split
/// with every model and CG-SENSE, and evaluates them together.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, ks: Option<&[usize]>) -> Result<Evaluation> {
    let out = output_path(out);
    let ks = ks.unwrap_or(&cfg.eval.compare_k).to_vec();
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Config("compare needs mask counts ≥ 1".into()));
    }
    let data_dir = out.join("data");
    cmd_generate_data(cfg, &data_dir)?;
    let mut recon_dirs = Vec::new();
    let cg_dir = out.join("recon").join("cg-sense");
    cmd_reconstruct(cfg, &data_dir, Method::CgSense, None, &cg_dir, None)?;
    recon_dirs.push(cg_dir);
    for &k in &ks {
        let run = out.join(format!("train_k{k}"));
        cmd_train(cfg, &data_dir, &run, Some(k), false)?;
        let dir = out.join("recon").join(format!("k{k}"));
        let label = format!("K={k}");
        cmd_reconstruct(cfg, &data_dir, Method::Unrolled, Some(&run.join(CHECKPOINT_FILE)), &dir, Some(&label))?;
        recon_dirs.push(dir);
    }
    cmd_evaluate(&data_dir, &recon_dirs, &out.join("eval"))
}
