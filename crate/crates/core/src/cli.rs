//! Command-line front end. [`dispatch`] parses arguments, runs one
//! subcommand and maps the outcome to an exit code: 0 on success, 2 for
//! usage errors, 1 for everything else.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analyzer::{compute_cost, memory_footprint, sensitivity_csv, standard_sensitivity_table, Phase, PrecisionOverride};
use crate::engine::{forward, Mode};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, parse_multiplier, save_checkpoint, NetworkDescriptor};
use crate::quant::{to_codes, QuantSpec};
use crate::trainer::{
    evaluate_checkpoint, load_dataset_dir, metrics_csv, run_grid, synthesize, train, write_dataset_dir, GridConfig,
    SynthSpec, TrainConfig,
};

pub const THREADS_ENV: &str = "WRPN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wrpn", version, about = "Wide reduced-precision networks: training, integer inference and cost analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from a JSON config; prints the metrics CSV.
    Train(TrainArgs),
    /// Top-1 accuracy of a checkpoint on an IDX dataset directory.
    Eval(EvalArgs),
    /// Export a checkpoint as integer weight codes (JSON).
    Quantize(QuantizeArgs),
    /// Static cost, footprint and sensitivity reports.
    Analyze(AnalyzeArgs),
    /// Write a copy of a descriptor with its filter counts multiplied.
    Widen(WidenArgs),
    /// Train every cell of a precision/widening grid.
    Grid(GridArgs),
    /// Write a deterministic synthetic 10-class IDX dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint destination.
    #[arg(long, default_value = "wrpn.ckpt")]
    pub out: PathBuf,
    /// Metrics CSV destination; the CSV goes to standard output otherwise.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Float,
    Fakequant,
    Integer,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Float => Mode::Float,
            ModeArg::Fakequant => Mode::FakeQuant,
            ModeArg::Integer => Mode::IntegerPath,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding MNIST-named IDX files.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "fakequant")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Weight bits for every compute layer.
    #[arg(long)]
    pub kw: u32,
    /// Activation bits for every compute layer's input.
    #[arg(long)]
    pub ka: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Report {
    Cost,
    Footprint,
    Sensitivity,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhaseArg {
    Training,
    Inference,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub report: Report,
    /// Descriptor file or shipped descriptor name (not used by `sensitivity`).
    #[arg(long, required_if_eq_any([("report", "cost"), ("report", "footprint")]))]
    pub net: Option<PathBuf>,
    /// Widening multiplier, e.g. `2` or `3/2`.
    #[arg(long)]
    pub widen: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub batch: u64,
    #[arg(long, value_enum, default_value = "inference")]
    pub phase: PhaseArg,
    /// Uniform weight bits replacing the descriptor's.
    #[arg(long)]
    pub kw: Option<u32>,
    /// Uniform activation bits replacing the descriptor's.
    #[arg(long)]
    pub ka: Option<u32>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WidenArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Multiplier, e.g. `2` or `3/2`.
    #[arg(long)]
    pub m: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Per-cell CSV destination; standard output otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mean-accuracy table (rows `widening, k_W`, columns `k_A`).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator spec; overrides the flags below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
}

/// Configures the global worker pool from `WRPN_THREADS`, if set.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    // A pool built earlier in this process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn load_net(path: &Path, widen: Option<&str>) -> Result<NetworkDescriptor> {
    let net = NetworkDescriptor::load(path)?;
    let net = match widen {
        Some(m) => net.widen(parse_multiplier(m)?)?,
        None => net,
    };
    net.validate()?;
    Ok(net)
}

fn run_train(a: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut config = TrainConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let outcome = train(&config, a.metrics.as_deref())?;
    save_checkpoint(&a.out, &outcome.checkpoint)?;
    if a.metrics.is_none() {
        emit(None, &metrics_csv(&outcome.metrics), stdout)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    network: String,
    mode: &'static str,
    split: &'static str,
    samples: usize,
    accuracy: f64,
}

fn run_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset_dir(&a.data)?;
    let (split, name) = match a.split {
        SplitArg::Train => (&data.train, "train"),
        SplitArg::Test => (&data.test, "test"),
    };
    let mode: Mode = a.mode.into();
    let accuracy = evaluate_checkpoint(&ckpt, split, mode)?;
    let report = EvalReport {
        network: ckpt.descriptor.name.clone(),
        mode: match mode {
            Mode::Float => "float",
            Mode::FakeQuant => "fakequant",
            Mode::IntegerPath => "integer",
        },
        split: name,
        samples: split.len(),
        accuracy,
    };
    emit(None, &to_json(&report), stdout)
}

#[derive(Serialize)]
struct IntegerLayer {
    layer: usize,
    kind: &'static str,
    shape: Vec<usize>,
    weight_bits: u32,
    activation_bits: u32,
    scale: f64,
    codes: Vec<i64>,
}

#[derive(Serialize)]
struct IntegerModel {
    format: &'static str,
    version: u32,
    descriptor: NetworkDescriptor,
    /// SHA-256 of the descriptor, hex.
    descriptor_hash: String,
    layers: Vec<IntegerLayer>,
}

fn run_quantize(a: &QuantizeArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let net = ckpt.descriptor.with_uniform_precision(a.kw, a.ka)?;
    for k in [a.kw, a.ka] {
        if k > 16 {
            return Err(Error::Config(format!("integer codes need k <= 16, got {k}")));
        }
    }
    let mut layers = Vec::new();
    for p in &ckpt.master.tensors {
        let layer = &net.layers[p.layer];
        let spec = QuantSpec::weight(a.kw)?;
        let q = to_codes(&p.value, spec)?;
        layers.push(IntegerLayer {
            layer: p.layer,
            kind: layer.kind_name(),
            shape: q.shape.clone(),
            weight_bits: a.kw,
            activation_bits: net.input_operand_bits(p.layer),
            scale: q.scale().expect("k <= 16"),
            codes: q.codes().expect("k <= 16").to_vec(),
        });
    }
    // Fails early if the exported model cannot run on the integer path.
    let probe = crate::tensor::Tensor::zeros(&[1, net.input_shape[0], net.input_shape[1], net.input_shape[2]]);
    forward(&net, &ckpt.master, &probe, Mode::IntegerPath)?;
    let hash: String = net.hash().iter().map(|b| format!("{b:02x}")).collect();
    let model = IntegerModel {
        format: "wrpn-integer-model",
        version: 1,
        descriptor: net,
        descriptor_hash: hash,
        layers,
    };
    emit(Some(&a.out), &to_json(&model), &mut std::io::sink())
}

fn run_analyze(a: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<()> {
    let text = match a.report {
        Report::Sensitivity => {
            let rows = standard_sensitivity_table()?;
            match a.format {
                Format::Csv => sensitivity_csv(&rows),
                Format::Json => to_json(&rows),
            }
        }
        Report::Cost => {
            let net = load_net(a.net.as_deref().expect("required by clap"), a.widen.as_deref())?;
            let net = match (a.kw, a.ka) {
                (None, None) => net,
                (kw, ka) => {
                    let mut n = net;
                    for i in n.compute_layer_indices() {
                        n.set_layer_precision(i, kw, ka)?;
                    }
                    n
                }
            };
            let report = compute_cost(&net)?;
            match a.format {
                Format::Csv => report.to_csv(),
                Format::Json => to_json(&report),
            }
        }
        Report::Footprint => {
            let net = load_net(a.net.as_deref().expect("required by clap"), a.widen.as_deref())?;
            let phase = match a.phase {
                PhaseArg::Training => Phase::Training,
                PhaseArg::Inference => Phase::Inference,
            };
            let over = PrecisionOverride {
                weight_bits: a.kw,
                activation_bits: a.ka,
            };
            let report = memory_footprint(&net, a.batch, phase, over)?;
            match a.format {
                Format::Csv => report.to_csv(),
                Format::Json => to_json(&report),
            }
        }
    };
    emit(a.out.as_deref(), &text, stdout)
}

fn run_widen(a: &WidenArgs) -> Result<()> {
    let net = NetworkDescriptor::load(&a.net)?;
    let wide = net.widen(parse_multiplier(&a.m)?)?;
    wide.save(&a.out)
}

fn run_grid_cmd(a: &GridArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let grid = GridConfig::load(&a.config)?;
    let report = run_grid(&grid, &mut |cell| {
        let status = match &cell.outcome {
            Ok(m) => format!("test_acc {:.4}", m.test_acc),
            Err(e) => format!("failed: {e}"),
        };
        let _ = writeln!(
            stderr,
            "cell kw={} ka={} widening={} seed={}: {status}",
            cell.weight_bits, cell.activation_bits, cell.widening, cell.seed
        );
    })?;
    emit(a.out.as_deref(), &report.to_csv(), stdout)?;
    if let Some(path) = &a.table {
        emit(Some(path), &report.table_csv(), stdout)?;
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        None => SynthSpec::new(a.seed, a.train, a.test),
    };
    write_dataset_dir(&a.out, &synthesize(&spec)?)
}

fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Train(a) => run_train(a, stdout),
        Command::Eval(a) => run_eval(a, stdout),
        Command::Quantize(a) => run_quantize(a),
        Command::Analyze(a) => run_analyze(a, stdout),
        Command::Widen(a) => run_widen(a),
        Command::Grid(a) => run_grid_cmd(a, stdout, stderr),
        Command::Synth(a) => run_synth(a),
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                2
            } else {
                // --help and --version
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    match run(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}
