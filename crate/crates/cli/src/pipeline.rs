use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chartforge::align::{apply_affine, fit_affine, AffineTransform};
use chartforge::baseline::{classical_mds, select_subsample, MAX_MDS_POINTS};
use chartforge::dataset::{
    build_sequences, flatten, generate_synthetic_csi, load_dataset, save_dataset, split, write_atomic, ChannelSpec,
    CsiDataset, Noise, Sequences, SynthSpec, Trajectory,
};
use chartforge::metrics::{error_vectors, MetricsReport};
use chartforge::model::{embed, load_checkpoint, save_checkpoint, Checkpoint, ModelParams};
use chartforge::train::{train, TrainConfig, TrainHistory};
use chartforge::{Error, Matrix};
use serde::Serialize;

use crate::args::{BaselineArgs, DataFlags, EvalArgs, SynthArgs, TrainArgs, TrajKind};
use crate::manifest::{DataRecord, DataSettings, RunManifest};
use crate::svg::render_error_vectors;
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const LOG_FILE: &str = "train.log";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Windows fed to `embed` at a time.
const EMBED_CHUNK: usize = 512;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    write_atomic(path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn positions_csv(p: &Matrix) -> String {
    let mut s = String::from("x,y\n");
    for r in p.iter_rows() {
        s.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    s
}

// ---------------------------------------------------------------- synth

pub fn synth_spec(args: &SynthArgs) -> Result<SynthSpec, CliError> {
    let trajectory = match args.traj {
        TrajKind::Circle => Trajectory::Circle {
            center: [0.0, 0.0],
            radius: args.radius,
        },
        TrajKind::Lissajous => Trajectory::Lissajous {
            center: [0.0, 0.0],
            amplitude: args.amplitude,
            frequency: args.frequency,
            phase: std::f64::consts::FRAC_PI_2,
        },
        TrajKind::Polyline => Trajectory::PiecewiseLinear {
            waypoints: args
                .waypoints
                .clone()
                .ok_or_else(|| CliError::Usage("--traj polyline requires --waypoints".into()))?
                .0,
        },
    };
    let mut channel = ChannelSpec::ring_scene(args.anchors, args.anchor_radius, args.scatterers, args.extent, args.seed);
    channel.wavelength = args.wavelength;
    channel.bandwidth_hz = args.bandwidth;
    channel.n_subcarriers = args.subcarriers;
    channel.n_taps = args.taps;
    channel.noise = match (args.noise_rel, args.noise_std) {
        (Some(r), _) => Noise::RelativeToMeanMagnitude(r),
        (None, Some(s)) => Noise::Std(s),
        (None, None) => Noise::Std(0.0),
    };
    let mut spec = SynthSpec::new(trajectory, channel, args.n, args.seed);
    spec.speed = args.speed;
    spec.sampling_interval = args.interval;
    Ok(spec)
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<CsiDataset, CliError> {
    let spec = synth_spec(args)?;
    let data = generate_synthetic_csi(&spec).map_err(|e| match e {
        Error::Config(m) => CliError::Usage(m),
        e => e.into(),
    })?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_dataset(&data, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let pos_path = args.positions_csv.clone().unwrap_or_else(|| sibling(&args.out, ".positions.csv"));
    write_file(&pos_path, positions_csv(data.positions()))?;
    let manifest_path = sibling(&args.out, ".manifest.json");
    let mut manifest = RunManifest::new("synth");
    manifest.synth = Some(spec);
    manifest.data = Some(DataRecord::describe(&args.out, &data));
    manifest.artifacts = [&args.out, &pos_path, &manifest_path].iter().map(|p| p.display().to_string()).collect();
    write_file(&manifest_path, manifest.to_json())?;

    let s = data.shape();
    writeln!(
        out,
        "wrote {}: N={} links={} subcarriers={} taps={} (F={})",
        args.out.display(),
        s.samples,
        s.links,
        s.subcarriers,
        s.taps,
        s.features()
    )?;
    Ok(data)
}

// ---------------------------------------------------------------- data

/// Dataset windowed and split per `settings`.
pub struct Prepared {
    pub data: CsiDataset,
    pub seqs: Sequences,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn prepare(path: &Path, settings: &DataSettings) -> Result<Prepared, CliError> {
    if !(settings.ratio > 0.0 && settings.ratio < 1.0) {
        return Err(CliError::Usage(format!("--ratio must lie in (0, 1), got {}", settings.ratio)));
    }
    if settings.seq_len == 0 {
        return Err(CliError::Usage("--seq-len must be positive".into()));
    }
    let data = load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if data.len() < settings.seq_len {
        return Err(anyhow!(
            "dataset {} has {} samples but --seq-len {} needs at least {}",
            path.display(),
            data.len(),
            settings.seq_len,
            settings.seq_len
        )
        .into());
    }
    let (flat, _) = flatten(&data, settings.standardize);
    let seqs = build_sequences(flat, data.positions(), settings.seq_len)?;
    let (train, val) = split(seqs.samples(), settings.ratio, settings.seed)?;
    Ok(Prepared { data, seqs, train, val })
}

fn positions_at(seqs: &Sequences, ends: &[usize]) -> Matrix {
    Matrix::from_fn(ends.len(), 2, |i, c| seqs.positions().get(ends[i], c))
}

/// Raw 2-D embeddings of the windows ending at `ends`.
pub fn embed_samples(seqs: &Sequences, ends: &[usize], params: &ModelParams) -> anyhow::Result<Matrix> {
    let mut rows = Vec::with_capacity(ends.len() * 2);
    for chunk in ends.chunks(EMBED_CHUNK) {
        let batch = seqs.batch(chunk)?;
        rows.extend_from_slice(embed(&batch.inputs, params)?.as_slice());
    }
    Ok(Matrix::from_vec(ends.len(), 2, rows)?)
}

// ---------------------------------------------------------------- train

pub struct TrainOutput {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub out_dir: PathBuf,
}

fn resolve_train(args: &TrainArgs) -> Result<(PathBuf, DataSettings, TrainConfig), CliError> {
    if let Some(m) = &args.manifest {
        let manifest = RunManifest::load(m)?;
        let (Some(settings), Some(config)) = (manifest.settings, manifest.train) else {
            return Err(CliError::Usage(format!("{} is not a training manifest", m.display())));
        };
        let data = match (&args.data, manifest.data) {
            (Some(d), _) => d.clone(),
            (None, Some(rec)) => PathBuf::from(rec.path),
            (None, None) => return Err(CliError::Usage("manifest names no dataset; pass --data".into())),
        };
        return Ok((data, settings, config));
    }
    let data = args.data.clone().ok_or_else(|| CliError::Usage("--data is required without --manifest".into()))?;
    let settings = data_settings(&args.data_flags, args.seed);
    let config = TrainConfig {
        lr0: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        alpha: args.alpha,
        lr_factor: args.lr_factor,
        patience: args.patience,
        min_lr: args.min_lr,
        seed: args.seed,
        units: args.units,
        latent: args.latent,
        ..TrainConfig::default()
    };
    Ok((data, settings, config))
}

fn data_settings(flags: &DataFlags, seed: u64) -> DataSettings {
    DataSettings {
        seq_len: flags.seq_len,
        ratio: flags.ratio,
        standardize: flags.standardize,
        seed,
    }
}

fn log_line(r: &chartforge::train::EpochRecord) -> String {
    format!(
        "epoch={} recon={:.6e} topo={:.6e} total={:.6e} val_total={:.6e} lr={:.3e} time={:.2}s",
        r.epoch + 1,
        r.train.recon,
        r.train.topo,
        r.train.total,
        r.val.total,
        r.lr,
        r.wall_time_s
    )
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutput, CliError> {
    let (data_path, settings, config) = resolve_train(args)?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let prep = prepare(&data_path, &settings)?;
    ensure_dir(&args.out_dir)?;

    let mut log = String::new();
    let mut io_err = None;
    let outcome = train(&prep.seqs, &prep.train, &prep.val, &config, |r| {
        let line = log_line(r);
        if let Err(e) = writeln!(out, "{line}") {
            io_err.get_or_insert(e);
        }
        log.push_str(&line);
        log.push('\n');
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }

    let dir = &args.out_dir;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    save_checkpoint(
        &Checkpoint {
            params: outcome.params.clone(),
            seed: config.seed,
        },
        &ckpt_path,
    )
    .with_context(|| format!("writing {}", ckpt_path.display()))?;
    write_file(&dir.join(HISTORY_FILE), outcome.history.to_csv())?;
    write_file(&dir.join(LOG_FILE), log)?;

    let mut manifest = RunManifest::new("train");
    manifest.data = Some(DataRecord::describe(&data_path, &prep.data));
    manifest.settings = Some(settings);
    manifest.train = Some(config);
    manifest.artifacts = [CHECKPOINT_FILE, HISTORY_FILE, LOG_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| dir.join(f).display().to_string())
        .collect();
    write_file(&dir.join(MANIFEST_FILE), manifest.to_json())?;

    if let Some(best) = outcome.history.best_epoch() {
        writeln!(out, "best epoch {} with validation loss {:.6e}", best.epoch + 1, best.val.total)?;
    }
    Ok(TrainOutput {
        params: outcome.params,
        history: outcome.history,
        out_dir: args.out_dir.clone(),
    })
}

// ---------------------------------------------------------------- evaluation

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub transform: AffineTransform,
    pub train: MetricsReport,
    pub val: MetricsReport,
}

/// Fits the alignment on the training charts, applies it to both splits and
/// writes every evaluation artifact with file names prefixed by `prefix`.
#[allow(clippy::too_many_arguments)]
fn score_and_write(
    prefix: &str,
    title: &str,
    p_train: &Matrix,
    e_train: &Matrix,
    p_val: &Matrix,
    e_val: &Matrix,
    k: Option<usize>,
    kl: bool,
    dir: &Path,
) -> Result<(EvalReport, Vec<PathBuf>), CliError> {
    let t = fit_affine(p_train, e_train)?;
    let train_chart = apply_affine(e_train, &t)?;
    let val_chart = apply_affine(e_val, &t)?;
    let report = EvalReport {
        transform: t,
        train: MetricsReport::compute(p_train, &train_chart, k, kl)?,
        val: MetricsReport::compute(p_val, &val_chart, k, kl)?,
    };

    ensure_dir(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, body: String| -> anyhow::Result<()> {
        let path = dir.join(name);
        write_file(&path, body)?;
        files.push(path);
        Ok(())
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    json.push('\n');
    emit(format!("{prefix}metrics.json"), json)?;
    emit(format!("{prefix}metrics_train.csv"), report.train.to_csv())?;
    emit(format!("{prefix}metrics_val.csv"), report.val.to_csv())?;
    emit(format!("{prefix}transform.csv"), t.to_csv())?;
    for (split, p, chart) in [("train", p_train, &train_chart), ("val", p_val, &val_chart)] {
        let ev = error_vectors(p, chart)?;
        emit(format!("{prefix}errors_{split}.csv"), ev.to_csv())?;
        if split == "val" {
            emit(format!("{prefix}chart_val.svg"), render_error_vectors(&ev, title))?;
        }
    }
    Ok((report, files))
}

fn print_report(out: &mut dyn Write, label: &str, r: &EvalReport) -> std::io::Result<()> {
    for (split, m) in [("train", &r.train), ("val", &r.val)] {
        writeln!(
            out,
            "{label} {split}: CT={:.4} TW={:.4} KS={:.4} MAE={:.4} m (k={}, N={})",
            m.ct, m.tw, m.ks, m.mae_m, m.k_neighbors, m.n_points
        )?;
    }
    Ok(())
}

/// The aligned chart of `params` must be checked against the same window
/// length and feature width it was trained on.
fn check_compat(params: &ModelParams, seqs: &Sequences) -> Result<(), CliError> {
    let d = params.dims;
    if d.features != seqs.features() || d.seq_len != seqs.seq_len() {
        return Err(Error::Contract(format!(
            "checkpoint expects windows of {} × {} but the dataset gives {} × {}",
            d.seq_len,
            d.features,
            seqs.seq_len(),
            seqs.features()
        ))
        .into());
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    let manifest = RunManifest::load(&args.run.join(MANIFEST_FILE))?;
    let settings = manifest
        .settings
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{} holds no training run", args.run.display())))?;
    let data_path = match (&args.data, &manifest.data) {
        (Some(d), _) => d.clone(),
        (None, Some(rec)) => PathBuf::from(&rec.path),
        (None, None) => return Err(CliError::Usage("run manifest names no dataset; pass --data".into())),
    };
    let ckpt_path = args.run.join(CHECKPOINT_FILE);
    let ckpt = load_checkpoint(&ckpt_path).with_context(|| format!("reading {}", ckpt_path.display()))?;
    let prep = prepare(&data_path, &settings)?;
    check_compat(&ckpt.params, &prep.seqs)?;

    let e_train = embed_samples(&prep.seqs, &prep.train, &ckpt.params)?;
    let e_val = embed_samples(&prep.seqs, &prep.val, &ckpt.params)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| args.run.clone());
    let (report, files) = score_and_write(
        "",
        "LSTM autoencoder chart (validation)",
        &positions_at(&prep.seqs, &prep.train),
        &e_train,
        &positions_at(&prep.seqs, &prep.val),
        &e_val,
        args.k,
        args.kl,
        &dir,
    )?;
    write_eval_manifest(&dir, "eval_manifest.json", "eval", &data_path, &prep, settings, files)?;
    print_report(out, "chart", &report)?;
    Ok(report)
}

fn write_eval_manifest(
    dir: &Path,
    name: &str,
    command: &str,
    data_path: &Path,
    prep: &Prepared,
    settings: DataSettings,
    files: Vec<PathBuf>,
) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut manifest = RunManifest::new(command);
    manifest.data = Some(DataRecord::describe(data_path, &prep.data));
    manifest.settings = Some(settings);
    manifest.artifacts = files.iter().chain([&path]).map(|p| p.display().to_string()).collect();
    write_file(&path, manifest.to_json())
}

// ---------------------------------------------------------------- baseline

pub fn cmd_baseline(args: &BaselineArgs, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    let settings = match &args.run {
        Some(run) => RunManifest::load(&run.join(MANIFEST_FILE))?
            .settings
            .ok_or_else(|| CliError::Usage(format!("{} holds no training run", run.display())))?,
        None => data_settings(&args.data_flags, args.seed),
    };
    if args.limit < 6 || args.limit > MAX_MDS_POINTS {
        return Err(CliError::Usage(format!("--limit must lie in [6, {MAX_MDS_POINTS}], got {}", args.limit)));
    }
    let prep = prepare(&args.data, &settings)?;
    let (tr, va) = select_subsample(&prep.train, &prep.val, args.limit, settings.seed);
    let ends: Vec<usize> = tr.iter().chain(&va).copied().collect();
    let flat = prep.seqs.flat();
    let features = Matrix::from_fn(ends.len(), flat.cols(), |i, f| flat.get(ends[i], f));
    let chart = classical_mds(&features, settings.seed)?;
    let e_train = Matrix::from_fn(tr.len(), 2, |i, c| chart.get(i, c));
    let e_val = Matrix::from_fn(va.len(), 2, |i, c| chart.get(tr.len() + i, c));
    let (report, files) = score_and_write(
        "baseline_",
        "Classical MDS baseline (validation)",
        &positions_at(&prep.seqs, &tr),
        &e_train,
        &positions_at(&prep.seqs, &va),
        &e_val,
        args.k,
        args.kl,
        &args.out_dir,
    )?;
    write_eval_manifest(&args.out_dir, "baseline_manifest.json", "baseline", &args.data, &prep, settings, files)?;
    print_report(out, "baseline", &report)?;
    Ok(report)
}
