use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, ValueEnum};
use serde::Serialize;

use impnet::autonet::{
    load_checkpoint, sample_losses, save_checkpoint, split_for_seed, ArchMode, Architecture,
    AutoencoderModel, CheckpointPolicy, TrainConfig, LOSS_EPS,
};
use impnet::farmlink::{
    declared_latent_len, decode_frame, encode_frame, frame_len, reconstruct, run_pipeline,
    LatentFrame, PipelineOptions, SimSchedule, Transport, WireOp, HEADER_LEN,
};
use impnet::gridnet::{assemble_in_model, det_sweep, Topology, TurbineBlock};
use impnet::latentmap::{embed_groups, write_embedding_csv, TsneConfig};
use impnet::spectra::{
    amplitude_phase, gen_dataset as generate, read_dataset, write_dataset, Dataset,
    DqAdmittanceCurve, Element, FrequencyGrid, OpRanges, VscParams,
};
use impnet::tensorize::{denormalize, flatten, normalize, unflatten, FlatSample};

use crate::invalid;
use crate::manifest::RunManifest;

const REDUCED_POINTS: usize = 500;
const PAPER_POINTS: usize = 2500;
const REDUCED_EPOCHS: usize = 200;
const PAPER_EPOCHS: usize = 500;

pub fn out_dir(out: &Option<PathBuf>, root: &Path, name: &str) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| root.join(name));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<AutoencoderModel> {
    let (model, _) =
        load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(model)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn check_fit(model: &AutoencoderModel, grid: &FrequencyGrid) -> Result<()> {
    if model.input_dim() != 8 * grid.len() {
        return Err(invalid!(
            "model expects {} frequency points, dataset has {}",
            model.input_dim() / 8,
            grid.len()
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Monolithic,
    Grouped,
}

impl From<Arch> for ArchMode {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Monolithic => ArchMode::Monolithic,
            Arch::Grouped => ArchMode::Grouped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportArg {
    Tcp,
    InProcess,
}

impl From<TransportArg> for Transport {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Tcp => Transport::Tcp,
            TransportArg::InProcess => Transport::InProcess,
        }
    }
}

/// 90/10 unless overridden; one given count implies the other.
fn resolve_split(n: usize, train: Option<usize>, test: Option<usize>) -> Result<(usize, usize)> {
    let (tr, te) = match (train, test) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, n.saturating_sub(a)),
        (None, Some(b)) => (n.saturating_sub(b), b),
        (None, None) => {
            let a = (n * 9).div_ceil(10).min(n);
            (a, n - a)
        }
    };
    if tr == 0 || tr + te > n {
        return Err(invalid!("split {tr}+{te} does not fit a dataset of {n}"));
    }
    Ok((tr, te))
}

#[derive(Debug, Args, Serialize)]
pub struct GenDatasetArgs {
    /// Number of curves.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Seed for the operating-point draw.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Frequency points [default: 500, or 2500 with --paper-shape].
    #[arg(long)]
    pub points: Option<usize>,
    /// First frequency in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub f_start: f64,
    /// Frequency spacing in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub f_step: f64,
    /// Use the full-size 2500-point grid.
    #[arg(long)]
    pub paper_shape: bool,
    /// Output directory [default: <out-root>/gen-dataset].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gen_dataset(mut a: GenDatasetArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("gen-dataset");
    let points = a.points.unwrap_or(if a.paper_shape {
        PAPER_POINTS
    } else {
        REDUCED_POINTS
    });
    a.points = Some(points);
    let dir = out_dir(&a.out, root, "gen-dataset")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;
    m.seed("dataset", a.seed);

    let grid = FrequencyGrid::new(a.f_start, a.f_step, points)?;
    let ds = generate(
        a.samples,
        a.seed,
        &VscParams::default(),
        &OpRanges::default(),
        &grid,
    )?;
    let path = dir.join("dataset.imps");
    write_dataset(&ds, &path)?;
    m.output(&path);

    let mut ops = String::from("sample_index,p_active,power_factor,u_pcc\n");
    for (i, (op, _)) in ds.samples.iter().enumerate() {
        let _ = writeln!(ops, "{i},{},{},{}", op.p_active, op.power_factor, op.u_pcc);
    }
    let ops_path = dir.join("operating_points.csv");
    write_text(&ops_path, &ops)?;
    m.output(&ops_path);

    let bytes = std::fs::metadata(&path)?.len();
    m.result("bytes", bytes);
    println!(
        "wrote {} curves x {} points ({} bytes) to {}",
        ds.len(),
        points,
        bytes,
        path.display()
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// IMPS dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Arch::Monolithic)]
    pub arch: Arch,
    /// Training epochs [default: 200, or 500 with --paper-shape].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    /// Seed for the split, initialization and batch order.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Training samples [default: 90% of the dataset].
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Test samples [default: the rest].
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Encoder hidden widths, comma separated [default: 512,128 or 2048,512].
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Latent width [default: 32, or 64 with --paper-shape].
    #[arg(long)]
    pub latent: Option<usize>,
    /// Full-size 20000 -> 2048 -> 512 -> 64 model for 500 epochs.
    #[arg(long)]
    pub paper_shape: bool,
    /// Newest epoch checkpoints to keep; 0 keeps all.
    #[arg(long, default_value_t = 5)]
    pub keep_checkpoints: usize,
    /// Output directory [default: <out-root>/train].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn train(mut a: TrainArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("train");
    let ds = load_dataset(&a.dataset)?;
    m.input(&a.dataset);
    let t = ds.grid.len();
    if a.paper_shape && t != PAPER_POINTS {
        return Err(invalid!(
            "--paper-shape needs a {PAPER_POINTS}-point dataset, got {t}"
        ));
    }
    let (hidden, latent, epochs) = if a.paper_shape {
        (vec![2048, 512], 64, PAPER_EPOCHS)
    } else {
        (vec![512, 128], 32, REDUCED_EPOCHS)
    };
    a.hidden.get_or_insert(hidden);
    a.latent.get_or_insert(latent);
    a.epochs.get_or_insert(epochs);
    let (tr, te) = resolve_split(ds.len(), a.train_count, a.test_count)?;
    (a.train_count, a.test_count) = (Some(tr), Some(te));
    let dir = out_dir(&a.out, root, "train")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;
    m.seed("train", a.seed);

    let arch = Architecture::new(
        a.arch.into(),
        8 * t,
        a.hidden.clone().unwrap_or_default(),
        a.latent.unwrap_or(latent),
    )?;
    let ck_dir = dir.join("checkpoints");
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs.unwrap_or(epochs),
        seed: a.seed,
        checkpoint: CheckpointPolicy {
            dir: Some(ck_dir.clone()),
            keep_last: (a.keep_checkpoints > 0).then_some(a.keep_checkpoints),
            with_adam_state: true,
        },
        ..TrainConfig::default()
    };
    log::info!(
        "training {} {:?} on {tr}/{te} samples, {} parameters",
        arch.mode,
        arch.chain(),
        arch.parameter_count()
    );
    let out = impnet::autonet::train(&ds, (tr, te), arch, &cfg)?;

    let model_path = dir.join("model.aeck");
    save_checkpoint(&out.model, Some(&out.adam), &model_path)?;
    let mut hist = Vec::new();
    out.history.write_csv(&mut hist)?;
    let hist_path = dir.join("history.csv");
    std::fs::write(&hist_path, hist)?;
    let mut split = String::from("sample_index,split\n");
    for (name, ids) in [("train", &out.split.train), ("test", &out.split.test)] {
        for i in ids {
            let _ = writeln!(split, "{i},{name}");
        }
    }
    let split_path = dir.join("split.csv");
    write_text(&split_path, &split)?;
    for p in [&model_path, &hist_path, &split_path, &ck_dir] {
        m.output(p);
    }

    let last = out.history.last().expect("at least one epoch");
    m.result("final_train_loss", last.train_loss);
    m.result("final_test_loss", last.test_loss);
    m.result("compression_ratio", out.model.arch.compression_ratio());
    println!(
        "epoch {}: train loss {:.5}, test loss {}; model at {}",
        last.epoch,
        last.train_loss,
        last.test_loss.map_or("-".into(), |v| format!("{v:.5}")),
        model_path.display()
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// AECK checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// IMPS dataset the model was trained on.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitKind::Test)]
    pub split: SplitKind,
    /// Training seed, used to recover the split.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Dataset index exported to recon.csv [default: first of the split].
    #[arg(long)]
    pub sample: Option<usize>,
    /// Output directory [default: <out-root>/eval].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize)]
struct ElementError {
    element: &'static str,
    amp_rel_mean: f64,
    amp_rel_max: f64,
    phase_deg_mean: f64,
    phase_deg_max: f64,
}

fn wrap_deg(d: f64) -> f64 {
    let r = (d + 180.0).rem_euclid(360.0) - 180.0;
    r.abs()
}

pub fn eval(mut a: EvalArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("eval");
    let model = load_model(&a.checkpoint)?;
    let ds = load_dataset(&a.dataset)?;
    m.input(&a.checkpoint);
    m.input(&a.dataset);
    check_fit(&model, &ds.grid)?;

    let (tr, te) = resolve_split(ds.len(), a.train_count, a.test_count)?;
    (a.train_count, a.test_count) = (Some(tr), Some(te));
    let split = split_for_seed(ds.len(), (tr, te), a.seed)?;
    let ids: Vec<usize> = match a.split {
        SplitKind::Train => split.train,
        SplitKind::Test => split.test,
        SplitKind::All => (0..ds.len()).collect(),
    };
    if ids.is_empty() {
        return Err(invalid!("the {:?} split is empty", a.split));
    }
    let sample = a.sample.unwrap_or(ids[0]);
    if sample >= ds.len() {
        return Err(invalid!("--sample {sample} is outside the dataset"));
    }
    a.sample = Some(sample);
    let dir = out_dir(&a.out, root, "eval")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;
    m.seed("split", a.seed);

    let curve_of = |i: usize| &ds.samples[i].1;
    let xs: Vec<FlatSample> = ids
        .iter()
        .map(|&i| normalize(&flatten(curve_of(i)), &model.norm))
        .collect();
    let losses = sample_losses(&model, &xs, LOSS_EPS, 16)?;
    let recon = |x: &FlatSample| -> Result<DqAdmittanceCurve> {
        let xn = model.reconstruct_batch(&[x.as_slice()])?;
        Ok(unflatten(
            &denormalize(&FlatSample(xn), &model.norm),
            &ds.grid,
        )?)
    };

    let mut table: Vec<ElementError> = Element::ALL
        .iter()
        .map(|e| ElementError {
            element: e.label(),
            ..ElementError::default()
        })
        .collect();
    for x in &xs {
        let (orig, hat) = (
            unflatten(&denormalize(x, &model.norm), &ds.grid)?,
            recon(x)?,
        );
        for e in Element::ALL {
            let (p, q) = (amplitude_phase(&orig, e), amplitude_phase(&hat, e));
            let n = p.len() as f64;
            let amp: Vec<f64> = p
                .iter()
                .zip(&q)
                .map(|(u, v)| (v.1 - u.1).abs() / u.1.max(f64::MIN_POSITIVE))
                .collect();
            let ph: Vec<f64> = p.iter().zip(&q).map(|(u, v)| wrap_deg(v.2 - u.2)).collect();
            let row = &mut table[e.index()];
            row.amp_rel_mean += amp.iter().sum::<f64>() / n / xs.len() as f64;
            row.amp_rel_max = amp.iter().fold(row.amp_rel_max, |m, &v| m.max(v));
            row.phase_deg_mean += ph.iter().sum::<f64>() / n / xs.len() as f64;
            row.phase_deg_max = ph.iter().fold(row.phase_deg_max, |m, &v| m.max(v));
        }
    }

    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let (lo, hi) = losses
        .iter()
        .fold((f64::INFINITY, 0f64), |(l, h), &v| (l.min(v), h.max(v)));
    println!(
        "{:?} split: {} samples, loss mean {mean:.5} (min {lo:.5}, max {hi:.5})",
        a.split,
        ids.len()
    );
    println!(
        "{:<8}{:>14}{:>14}{:>16}{:>16}",
        "element", "amp_err_mean", "amp_err_max", "phase_mean_deg", "phase_max_deg"
    );
    let mut csv = String::from("element,amp_rel_mean,amp_rel_max,phase_deg_mean,phase_deg_max\n");
    for r in &table {
        println!(
            "{:<8}{:>14.5}{:>14.5}{:>16.4}{:>16.4}",
            r.element, r.amp_rel_mean, r.amp_rel_max, r.phase_deg_mean, r.phase_deg_max
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.element, r.amp_rel_mean, r.amp_rel_max, r.phase_deg_mean, r.phase_deg_max
        );
    }
    let err_path = dir.join("element_errors.csv");
    write_text(&err_path, &csv)?;

    let mut lc = String::from("sample_index,loss\n");
    for (i, l) in ids.iter().zip(&losses) {
        let _ = writeln!(lc, "{i},{l}");
    }
    let loss_path = dir.join("losses.csv");
    write_text(&loss_path, &lc)?;

    let orig = curve_of(sample);
    let hat = recon(&normalize(&flatten(orig), &model.norm))?;
    let mut rc = String::from("f,element,amp,amp_recon,phase_deg,phase_recon_deg\n");
    for e in Element::ALL {
        for (p, q) in amplitude_phase(orig, e)
            .iter()
            .zip(amplitude_phase(&hat, e))
        {
            let _ = writeln!(rc, "{},{},{},{},{},{}", p.0, e.label(), p.1, q.1, p.2, q.2);
        }
    }
    let recon_path = dir.join("recon.csv");
    write_text(&recon_path, &rc)?;
    for p in [&err_path, &loss_path, &recon_path] {
        m.output(p);
    }

    m.result("loss_mean", mean);
    m.result("loss_min", lo);
    m.result("loss_max", hi);
    m.result("elements", &table);
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Turbine id stamped on the frames.
    #[arg(long, default_value_t = 0)]
    pub turbine_id: u16,
    /// Frame timestamps are sample_index * period.
    #[arg(long, default_value_t = 1000)]
    pub period_ms: u64,
    /// Output directory [default: <out-root>/encode].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn latent_header(width: usize, lead: &str) -> String {
    let mut s = String::from(lead);
    for i in 0..width {
        let _ = write!(s, ",h{i}");
    }
    s.push('\n');
    s
}

pub fn encode(mut a: EncodeArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("encode");
    let model = load_model(&a.checkpoint)?;
    let ds = load_dataset(&a.dataset)?;
    m.input(&a.checkpoint);
    m.input(&a.dataset);
    check_fit(&model, &ds.grid)?;
    let dir = out_dir(&a.out, root, "encode")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;

    let mut csv = latent_header(
        model.latent_dim(),
        "sample_index,p_active,power_factor,u_pcc",
    );
    let mut frames = Vec::new();
    for (i, (op, curve)) in ds.samples.iter().enumerate() {
        let h = model.encode(&flatten(curve), false)?;
        let latent: Vec<f32> = h.0.iter().map(|&v| v as f32).collect();
        let w = WireOp::from(op);
        let _ = write!(csv, "{i},{},{},{}", w.p_active, w.power_factor, w.u_pcc);
        for v in &latent {
            let _ = write!(csv, ",{v:e}");
        }
        csv.push('\n');
        frames.extend(encode_frame(&LatentFrame {
            turbine_id: a.turbine_id,
            timestamp_ms: i as u64 * a.period_ms,
            op: w,
            latent,
        })?);
    }
    let csv_path = dir.join("latents.csv");
    let frames_path = dir.join("frames.ienc");
    write_text(&csv_path, &csv)?;
    std::fs::write(&frames_path, &frames)?;
    m.output(&csv_path);
    m.output(&frames_path);

    let raw = ds.grid.len() * 8 * 8;
    let per_frame = frame_len(model.latent_dim());
    m.result("frame_bytes", per_frame);
    m.result("raw_curve_bytes", raw);
    println!(
        "encoded {} curves: {} -> {} bytes per curve ({:.1}x)",
        ds.len(),
        raw,
        per_frame,
        raw as f64 / per_frame as f64
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["latents", "frames"])))]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with h0..hN columns, as written by encode or simulate.
    #[arg(long)]
    pub latents: Option<PathBuf>,
    /// Concatenated IENC frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// First frequency in Hz of the model's grid.
    #[arg(long, default_value_t = 1.0)]
    pub f_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub f_step: f64,
    /// Output directory [default: <out-root>/decode].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_latent_csv(path: &Path) -> Result<Vec<Vec<f32>>> {
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let cols: Vec<usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            h.len() > 1 && h.starts_with('h') && h[1..].bytes().all(|b| b.is_ascii_digit())
        })
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(invalid!("{} has no h0.. latent columns", path.display()));
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = cols
            .iter()
            .map(|&c| rec.get(c).unwrap_or("").trim().parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .map_err(|e| invalid!("{} row {}: {e}", path.display(), n + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_frames(path: &Path) -> Result<Vec<Vec<f32>>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let rest = &bytes[at..];
        let n = declared_latent_len(rest)
            .filter(|_| rest.len() >= HEADER_LEN)
            .ok_or_else(|| invalid!("{}: bad frame header at byte {at}", path.display()))?;
        let len = frame_len(n);
        if rest.len() < len {
            return Err(invalid!("{}: truncated frame at byte {at}", path.display()));
        }
        let frame = decode_frame(&rest[..len])
            .map_err(|e| invalid!("{}: frame at byte {at}: {e}", path.display()))?;
        rows.push(frame.latent);
        at += len;
    }
    Ok(rows)
}

pub fn decode(mut a: DecodeArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("decode");
    let model = load_model(&a.checkpoint)?;
    m.input(&a.checkpoint);
    let rows = match (&a.latents, &a.frames) {
        (Some(p), _) => {
            m.input(p);
            read_latent_csv(p)?
        }
        (None, Some(p)) => {
            m.input(p);
            read_frames(p)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let dir = out_dir(&a.out, root, "decode")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;

    let grid = FrequencyGrid::new(a.f_start, a.f_step, model.input_dim() / 8)?;
    let mut out = String::from("row,f,element,real,imag\n");
    for (r, latent) in rows.iter().enumerate() {
        let (_, curve) = reconstruct(&model, latent, &grid).with_context(|| format!("row {r}"))?;
        for (t, v) in curve.values().iter().enumerate() {
            for e in Element::ALL {
                let z = v[e.index()];
                let _ = writeln!(out, "{r},{},{},{},{}", grid.freq(t), e.label(), z.re, z.im);
            }
        }
    }
    let path = dir.join("decoded.csv");
    write_text(&path, &out)?;
    m.output(&path);
    m.result("rows", rows.len());
    println!(
        "decoded {} latent vectors to {}",
        rows.len(),
        path.display()
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct TsneArgs {
    /// Grouped-mode checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: <out-root>/tsne].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn tsne(mut a: TsneArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("tsne");
    let model = load_model(&a.checkpoint)?;
    let ds = load_dataset(&a.dataset)?;
    m.input(&a.checkpoint);
    m.input(&a.dataset);
    check_fit(&model, &ds.grid)?;
    if model.arch.mode != ArchMode::Grouped {
        log::warn!("monolithic latents have no per-element groups; the split is positional only");
    }
    let dir = out_dir(&a.out, root, "tsne")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;
    m.seed("tsne", a.seed);

    let latents = ds
        .curves()
        .map(|c| model.encode(&flatten(c), false))
        .collect::<impnet::Result<Vec<_>>>()?;
    let cfg = TsneConfig {
        perplexity: a.perplexity,
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..TsneConfig::default()
    };
    let emb = embed_groups(&latents, &cfg)?;
    let joint = dir.join("tsne_joint.csv");
    write_embedding_csv(&emb.joint, &joint)?;
    m.output(&joint);
    for (e, pts) in &emb.per_element {
        let p = dir.join(format!("tsne_{}.csv", e.label()));
        write_embedding_csv(pts, &p)?;
        m.output(&p);
    }
    m.result("joint_silhouette", emb.joint_silhouette);
    println!(
        "embedded {} groups; silhouette by element {:.4}",
        emb.joint.len(),
        emb.joint_silhouette
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct AssembleArgs {
    /// Topology file; turbines sit on nodes 0..k-1.
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset indices of the turbine curves [default: 0..turbines].
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    pub turbines: usize,
    /// Assemble from this model's reconstructions instead of the originals.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory [default: <out-root>/assemble].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn assemble(mut a: AssembleArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("assemble");
    let topo =
        Topology::load(&a.topology).with_context(|| format!("loading {}", a.topology.display()))?;
    let ds = load_dataset(&a.dataset)?;
    m.input(&a.topology);
    m.input(&a.dataset);
    let samples = a
        .samples
        .clone()
        .unwrap_or_else(|| (0..a.turbines).collect());
    if let Some(&bad) = samples.iter().find(|&&i| i >= ds.len()) {
        return Err(invalid!(
            "sample {bad} is outside the dataset of {}",
            ds.len()
        ));
    }
    a.turbines = samples.len();
    a.samples = Some(samples.clone());
    let model = match &a.checkpoint {
        Some(p) => {
            m.input(p);
            let model = load_model(p)?;
            check_fit(&model, &ds.grid)?;
            Some(model)
        }
        None => None,
    };
    let dir = out_dir(&a.out, root, "assemble")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;

    let mut turbines = Vec::with_capacity(samples.len());
    for (node, &i) in samples.iter().enumerate() {
        let orig = &ds.samples[i].1;
        let curve = match &model {
            Some(model) => {
                let xn = model
                    .reconstruct_batch(&[normalize(&flatten(orig), &model.norm).as_slice()])?;
                unflatten(&denormalize(&FlatSample(xn), &model.norm), &ds.grid)?
            }
            None => orig.clone(),
        };
        turbines.push(TurbineBlock {
            node_index: node,
            curve,
        });
    }
    let im = assemble_in_model(&topo, &turbines, &ds.grid)?;
    im.write_csv(&dir)?;
    for n in ["y_node.csv", "y_wt.csv", "y_net.csv"] {
        m.output(dir.join(n));
    }
    let sweep = det_sweep(&im);
    let mut csv = String::from("f,det_abs,sigma_min\n");
    for d in &sweep {
        let _ = writeln!(csv, "{},{:e},{:e}", d.f, d.det_abs, d.sigma_min);
    }
    let det_path = dir.join("det.csv");
    write_text(&det_path, &csv)?;
    m.output(&det_path);

    let worst = sweep
        .iter()
        .min_by(|x, y| x.sigma_min.total_cmp(&y.sigma_min))
        .expect("non-empty grid");
    m.result("matrix_dim", 2 * im.node_count);
    m.result("min_sigma", worst.sigma_min);
    m.result("min_sigma_f", worst.f);
    println!(
        "{0}x{0} nodal model over {1} points; smallest singular value {2:.4e} at {3} Hz",
        2 * im.node_count,
        ds.grid.len(),
        worst.sigma_min,
        worst.f
    );
    m.finish(&dir)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Topology with at least four nodes; turbines sit on nodes 0..3.
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub ticks: usize,
    #[arg(long, default_value_t = 1000)]
    pub period_ms: u64,
    #[arg(long, value_enum, default_value_t = TransportArg::Tcp)]
    pub transport: TransportArg,
    /// Send frames in real-time tick slots.
    #[arg(long)]
    pub pace: bool,
    /// Straggler wait per tick [default: three periods].
    #[arg(long)]
    pub wait_ms: Option<u64>,
    /// Skip the comparison against locally synthesized curves.
    #[arg(long)]
    pub no_reference: bool,
    /// Do not write per-tick nodal matrices.
    #[arg(long)]
    pub no_in_models: bool,
    /// Output directory [default: <out-root>/simulate].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(mut a: SimulateArgs, root: &Path) -> Result<()> {
    let mut m = RunManifest::begin("simulate");
    m.input(&a.checkpoint);
    m.input(&a.topology);
    if a.period_ms == 0 {
        return Err(invalid!("--period-ms must be positive"));
    }
    let wait = a.wait_ms.unwrap_or(3 * a.period_ms);
    a.wait_ms = Some(wait);
    let dir = out_dir(&a.out, root, "simulate")?;
    a.out = Some(dir.clone());
    m.flags(&a)?;

    let schedule = SimSchedule::four_turbine(a.ticks, a.period_ms);
    let opts = PipelineOptions {
        wait: Some(Duration::from_millis(wait)),
        pace: a.pace,
        with_reference: !a.no_reference,
        keep_in_models: !a.no_in_models,
        ..PipelineOptions::default()
    };
    let report = run_pipeline(
        &schedule,
        &a.checkpoint,
        &a.topology,
        a.transport.into(),
        &opts,
    )?;
    report.write_csv(&dir)?;
    for n in ["latents.csv", "errors.csv", "ticks.csv"] {
        m.output(dir.join(n));
    }
    if !a.no_in_models {
        m.output(dir.join("in_model"));
    }
    for e in &report.errors {
        log::warn!("{e}");
    }

    let errs = report.mean_rel_errors();
    let worst = errs
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    m.result("ticks", a.ticks);
    m.result("completed", report.completed_ticks());
    m.result("frames_accepted", report.ingest.accepted);
    m.result("worst_tick_rel_error", worst);
    m.result("errors", &report.errors);
    println!(
        "{}: {}/{} ticks complete, {} frames accepted{}",
        report.transport,
        report.completed_ticks(),
        a.ticks,
        report.ingest.accepted,
        worst.map_or(String::new(), |w| format!(", worst tick error {w:.5}"))
    );
    m.finish(&dir)?;
    Ok(())
}
