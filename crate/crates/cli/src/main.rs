//! Command-line driver for the quantization pipeline: dataset synthesis,
//! baseline training, bit-width allocation, calibrated quantization, and
//! evaluation. Every artifact embeds the seed and a hash of the resolved
//! settings so result files are traceable to exact configurations.

use anyhow::{bail, Context, Result};
use attnround_core::calib::{quantize_model, HyperParams, QuantizeOptions};
use attnround_core::coding::{assign_bits, CodingConfig, Prefactor};
use attnround_core::graph::{
    evaluate, evaluate_per_class, train_baseline, ModelGraph, TrainConfig,
};
use attnround_core::io::{
    load_idx, load_model, save_idx, save_model, synth_dataset, synth_ring_dataset, take_calibration,
    DatasetHandle,
};
use attnround_core::quant::Rounder;
use attnround_core::Rng;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "attnround", version, about = "Post-training quantization experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic image-classification dataset in IDX format
    SynthData(SynthArgs),
    /// Train the floating-point baseline CNN
    Train(TrainArgs),
    /// Compute per-layer coding lengths and allocate bit widths
    AssignBits(AssignArgs),
    /// Quantize a trained model with a chosen rounder
    Quantize(QuantizeArgs),
    /// Evaluate a model, optionally against a floating-point baseline
    Eval(EvalArgs),
    /// Rounder comparison table and temperature sweep
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// output directory for the four IDX files
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6000)]
    train_count: usize,
    #[arg(long, default_value_t = 1000)]
    test_count: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// "rings" = concentric ring pair, class in their brightness balance
    /// (benchmark set); "blobs" = one spot per class position (linearly
    /// separable smoke set)
    #[arg(long, default_value = "rings")]
    style: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data_images: PathBuf,
    #[arg(long)]
    data_labels: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    /// directory receiving the model and metrics.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AssignArgs {
    /// directory holding a saved model
    #[arg(long)]
    model: PathBuf,
    /// candidate bit widths, ascending, e.g. 3,4,5
    #[arg(long, value_delimiter = ',')]
    bit_list: Vec<u32>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// "full" = (m+n)/2 multiplier, "half" = 1/2
    #[arg(long, default_value = "full")]
    prefactor: String,
    /// output JSON file
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("width").required(true).args(["wbits", "bit_list"]))]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// calibration images (IDX)
    #[arg(long)]
    data_images: PathBuf,
    #[arg(long)]
    data_labels: PathBuf,
    #[arg(long, default_value = "attention")]
    rounder: Rounder,
    /// uniform weight bit width
    #[arg(long)]
    wbits: Option<u32>,
    /// allocate per-layer widths from this candidate list, e.g. 3,4,5
    #[arg(long, value_delimiter = ',')]
    bit_list: Option<Vec<u32>>,
    /// activation bit width; omit to keep activations in floating point
    #[arg(long)]
    abits: Option<u32>,
    /// rounding temperature in grid steps
    #[arg(long, default_value_t = 0.5)]
    tau: f32,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 4e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1024)]
    calib_size: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value = "full")]
    prefactor: String,
    #[arg(long)]
    seed: Option<u64>,
    /// directory receiving the quantized model and report.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_images: PathBuf,
    #[arg(long)]
    data_labels: PathBuf,
    /// floating-point model to report an accuracy delta against
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// directory receiving metrics.json and per_class.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    /// calibration images (IDX)
    #[arg(long)]
    data_images: PathBuf,
    #[arg(long)]
    data_labels: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    #[arg(long, default_value_t = 4)]
    wbits: u32,
    #[arg(long)]
    abits: Option<u32>,
    #[arg(long, default_value_t = 0.5)]
    tau: f32,
    /// iterations for the rounder-comparison rows
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// iterations for the temperature-sweep rows
    #[arg(long, default_value_t = 500)]
    tau_iters: usize,
    #[arg(long, default_value_t = 4e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1024)]
    calib_size: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// directory receiving rounders.csv and tau_sweep.csv
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::SynthData(a) => cmd_synth(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::AssignBits(a) => cmd_assign_bits(a),
        Cmd::Quantize(a) => cmd_quantize(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Compare(a) => cmd_compare(a),
    }
}

/// Seed resolution order: flag, then QUANT_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("QUANT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("QUANT_SEED must be an unsigned integer, got '{v}'")),
        Err(_) => Ok(0),
    }
}

fn settings_hash<T: Serialize>(settings: &T) -> String {
    let json = serde_json::to_string(settings).expect("settings serialize");
    hex::encode(&Sha256::digest(json.as_bytes())[..6])
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn load_dataset(images: &Path, labels: &Path) -> Result<DatasetHandle> {
    load_idx(images, labels)
        .with_context(|| format!("loading dataset {} / {}", images.display(), labels.display()))
}

fn parse_prefactor(s: &str) -> Result<Prefactor> {
    s.parse::<Prefactor>()
        .map_err(|e| anyhow::anyhow!("{e}"))
        .context("--prefactor must be 'full' or 'half'")
}

// ── synth-data ────────────────────────────────────────────────────────

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    if a.classes == 0 || a.classes > 10 {
        bail!("--classes must be in 1..=10");
    }
    fs::create_dir_all(&a.out)?;
    let mut rng = Rng::from_seed(seed);
    let gen = match a.style.as_str() {
        "rings" => synth_ring_dataset,
        "blobs" => synth_dataset,
        other => bail!("--style must be 'rings' or 'blobs', got '{other}'"),
    };
    let train = gen(&mut rng, a.train_count, a.classes);
    let test = gen(&mut rng, a.test_count, a.classes);
    save_idx(&train, &a.out.join("train-images.idx"), &a.out.join("train-labels.idx"))?;
    save_idx(&test, &a.out.join("test-images.idx"), &a.out.join("test-labels.idx"))?;
    println!(
        "wrote {} train / {} test images over {} classes to {}",
        train.len(),
        test.len(),
        a.classes,
        a.out.display()
    );
    Ok(())
}

// ── train ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct TrainSettings {
    command: &'static str,
    data_images: String,
    data_labels: String,
    test_images: String,
    test_labels: String,
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
}

#[derive(Serialize)]
struct TrainMetrics {
    accuracy: f64,
    epochs: usize,
    seed: u64,
    config_hash: String,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let hash = settings_hash(&TrainSettings {
        command: "train",
        data_images: path_str(&a.data_images),
        data_labels: path_str(&a.data_labels),
        test_images: path_str(&a.test_images),
        test_labels: path_str(&a.test_labels),
        epochs: a.epochs,
        lr: a.lr,
        batch: a.batch,
        seed,
    });
    let train = load_dataset(&a.data_images, &a.data_labels)?;
    let test = load_dataset(&a.test_images, &a.test_labels)?;
    let mut rng = Rng::from_seed(seed);
    let model = ModelGraph::small_cnn(&mut rng)?;
    let cfg = TrainConfig { epochs: a.epochs, lr: a.lr as f32, batch: a.batch, ..TrainConfig::default() };
    let (trained, accuracy) = train_baseline(&model, &train, &test, &cfg, &mut rng)?;
    fs::create_dir_all(&a.out)?;
    save_model(&trained, &a.out)?;
    write_json(
        &a.out.join("metrics.json"),
        &TrainMetrics { accuracy, epochs: a.epochs, seed, config_hash: hash },
    )?;
    println!("accuracy {accuracy:.4}");
    Ok(())
}

// ── assign-bits ───────────────────────────────────────────────────────

#[derive(Serialize)]
struct AssignSettings {
    command: &'static str,
    model: String,
    bit_list: Vec<u32>,
    epsilon: f64,
    prefactor: String,
    seed: u64,
}

#[derive(Serialize)]
struct AssignOutput {
    #[serde(flatten)]
    assignment: attnround_core::coding::BitAssignment,
    seed: u64,
    config_hash: String,
}

fn cmd_assign_bits(a: AssignArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    if a.bit_list.is_empty() {
        bail!("--bit-list must list at least one width");
    }
    let prefactor = parse_prefactor(&a.prefactor)?;
    let hash = settings_hash(&AssignSettings {
        command: "assign-bits",
        model: path_str(&a.model),
        bit_list: a.bit_list.clone(),
        epsilon: a.epsilon,
        prefactor: a.prefactor.clone(),
        seed,
    });
    let model = load_model(&a.model)?;
    // allocate on the weights that will actually be quantized
    let model = model.fuse_bn()?;
    let cfg = CodingConfig { epsilon: a.epsilon, prefactor, ..CodingConfig::default() };
    let assignment = assign_bits(&model, &a.bit_list, &cfg)?;
    if let Some(dir) = a.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_json(&a.out, &AssignOutput { assignment, seed, config_hash: hash })?;
    println!("wrote {}", a.out.display());
    Ok(())
}

// ── quantize ──────────────────────────────────────────────────────────

#[derive(Serialize)]
struct QuantizeSettings {
    command: &'static str,
    model: String,
    data_images: String,
    data_labels: String,
    rounder: String,
    wbits: Option<u32>,
    bit_list: Option<Vec<u32>>,
    abits: Option<u32>,
    tau: f32,
    iters: usize,
    lr: f64,
    batch: usize,
    calib_size: usize,
    epsilon: f64,
    prefactor: String,
    seed: u64,
}

fn cmd_quantize(a: QuantizeArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let hash = settings_hash(&QuantizeSettings {
        command: "quantize",
        model: path_str(&a.model),
        data_images: path_str(&a.data_images),
        data_labels: path_str(&a.data_labels),
        rounder: a.rounder.name().to_string(),
        wbits: a.wbits,
        bit_list: a.bit_list.clone(),
        abits: a.abits,
        tau: a.tau,
        iters: a.iters,
        lr: a.lr,
        batch: a.batch,
        calib_size: a.calib_size,
        epsilon: a.epsilon,
        prefactor: a.prefactor.clone(),
        seed,
    });
    let model = load_model(&a.model)?;
    let model = model.fuse_bn()?;
    let data = load_dataset(&a.data_images, &a.data_labels)?;

    let bits = match (&a.wbits, &a.bit_list) {
        (Some(w), None) => uniform_bits(&model, *w),
        (None, Some(list)) => {
            let cfg = CodingConfig {
                epsilon: a.epsilon,
                prefactor: parse_prefactor(&a.prefactor)?,
                ..CodingConfig::default()
            };
            assign_bits(&model, list, &cfg)?.bits
        }
        _ => bail!("provide exactly one of --wbits and --bit-list"),
    };

    let hyper = HyperParams {
        lr: a.lr,
        iters: a.iters,
        batch: a.batch,
        calib_size: a.calib_size,
        tau: a.tau,
        seed,
        ..HyperParams::default()
    };
    let mut calib_rng = Rng::from_seed(seed);
    let calib = take_calibration(&data, a.calib_size.min(data.len()), &mut calib_rng)?;
    let opts = QuantizeOptions { rounder: a.rounder, act_bits: a.abits };
    let (quantized, records) = quantize_model(&model, &calib.images, &bits, &hyper, &opts)?;

    fs::create_dir_all(&a.out)?;
    save_model(&quantized, &a.out)?;
    let mut csv = String::from("layer,bits_w,bits_a,scale,init_loss,final_loss,seconds,config_hash\n");
    for rec in &records {
        let spec = &quantized.weight_quant[&rec.layer];
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            rec.layer,
            spec.bits,
            a.abits.unwrap_or(32),
            spec.scale,
            rec.initial_loss,
            rec.final_loss,
            rec.seconds,
            hash
        )?;
    }
    write_text(&a.out.join("report.csv"), &csv)?;
    println!(
        "quantized {} layers with {} rounding into {}",
        records.len(),
        a.rounder.name(),
        a.out.display()
    );
    Ok(())
}

fn uniform_bits(model: &ModelGraph, w: u32) -> BTreeMap<String, u32> {
    model
        .weight_layers()
        .into_iter()
        .map(|i| (model.layers[i].name.clone(), w))
        .collect()
}

// ── eval ──────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct EvalSettings {
    command: &'static str,
    model: String,
    data_images: String,
    data_labels: String,
    baseline: Option<String>,
    seed: u64,
}

#[derive(Serialize)]
struct EvalMetrics {
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    seed: u64,
    config_hash: String,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let hash = settings_hash(&EvalSettings {
        command: "eval",
        model: path_str(&a.model),
        data_images: path_str(&a.data_images),
        data_labels: path_str(&a.data_labels),
        baseline: a.baseline.as_deref().map(path_str),
        seed,
    });
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data_images, &a.data_labels)?;
    let accuracy = evaluate(&model, &data)?;
    let per_class = evaluate_per_class(&model, &data)?;
    let baseline_accuracy = match &a.baseline {
        Some(dir) => Some(evaluate(&load_model(dir)?, &data)?),
        None => None,
    };
    let delta = baseline_accuracy.map(|b| accuracy - b);

    fs::create_dir_all(&a.out)?;
    let mut csv = String::from("class,correct,total,accuracy,config_hash\n");
    for c in &per_class {
        let acc = c.correct as f64 / c.total.max(1) as f64;
        writeln!(csv, "{},{},{},{},{}", c.class, c.correct, c.total, acc, hash)?;
    }
    write_text(&a.out.join("per_class.csv"), &csv)?;
    write_json(
        &a.out.join("metrics.json"),
        &EvalMetrics { accuracy, baseline_accuracy, delta, seed, config_hash: hash },
    )?;
    match (baseline_accuracy, delta) {
        (Some(b), Some(d)) => {
            println!("accuracy {accuracy:.4} (baseline {b:.4}, delta {d:+.4})")
        }
        _ => println!("accuracy {accuracy:.4}"),
    }
    Ok(())
}

// ── compare ───────────────────────────────────────────────────────────

#[derive(Serialize)]
struct CompareSettings {
    command: &'static str,
    model: String,
    data_images: String,
    data_labels: String,
    test_images: String,
    test_labels: String,
    wbits: u32,
    abits: Option<u32>,
    tau: f32,
    iters: usize,
    tau_iters: usize,
    lr: f64,
    batch: usize,
    calib_size: usize,
    seed: u64,
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let hash = settings_hash(&CompareSettings {
        command: "compare",
        model: path_str(&a.model),
        data_images: path_str(&a.data_images),
        data_labels: path_str(&a.data_labels),
        test_images: path_str(&a.test_images),
        test_labels: path_str(&a.test_labels),
        wbits: a.wbits,
        abits: a.abits,
        tau: a.tau,
        iters: a.iters,
        tau_iters: a.tau_iters,
        lr: a.lr,
        batch: a.batch,
        calib_size: a.calib_size,
        seed,
    });
    let model = load_model(&a.model)?.fuse_bn()?;
    let data = load_dataset(&a.data_images, &a.data_labels)?;
    let test = load_dataset(&a.test_images, &a.test_labels)?;
    let mut calib_rng = Rng::from_seed(seed);
    let calib = take_calibration(&data, a.calib_size.min(data.len()), &mut calib_rng)?;
    let bits = uniform_bits(&model, a.wbits);
    let base_hyper = HyperParams {
        lr: a.lr,
        batch: a.batch,
        calib_size: a.calib_size,
        seed,
        ..HyperParams::default()
    };

    let run = |rounder: Rounder, tau: f32, iters: usize| -> Result<(f64, f64)> {
        let t0 = Instant::now();
        let hyper = HyperParams { tau, iters, ..base_hyper.clone() };
        let opts = QuantizeOptions { rounder, act_bits: a.abits };
        let (q, _) = quantize_model(&model, &calib.images, &bits, &hyper, &opts)?;
        let acc = evaluate(&q, &test)?;
        Ok((acc, t0.elapsed().as_secs_f64()))
    };

    fs::create_dir_all(&a.out)?;
    let mut rounders_csv = String::from("rounder,bits_w,bits_a,accuracy,seconds,config_hash\n");
    for r in Rounder::ALL {
        let (acc, secs) = run(r, a.tau, a.iters)
            .with_context(|| format!("comparison run for rounder '{}'", r.name()))?;
        writeln!(
            rounders_csv,
            "{},{},{},{},{},{}",
            r.name(),
            a.wbits,
            a.abits.unwrap_or(32),
            acc,
            secs,
            hash
        )?;
        println!("{:<12} {acc:.4}", r.name());
    }
    write_text(&a.out.join("rounders.csv"), &rounders_csv)?;

    let mut tau_csv = String::from("tau,accuracy,seconds,config_hash\n");
    for t in 1..=10 {
        let tau = t as f32 / 10.0;
        let (acc, secs) = run(Rounder::Attention, tau, a.tau_iters)
            .with_context(|| format!("temperature sweep at tau {tau}"))?;
        writeln!(tau_csv, "{tau},{acc},{secs},{hash}")?;
        println!("tau {tau:<4} {acc:.4}");
    }
    write_text(&a.out.join("tau_sweep.csv"), &tau_csv)?;
    Ok(())
}
