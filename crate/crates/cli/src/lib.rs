//! `speckle` command-line entry points.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use speckle_core::checkpoint::{self, CheckpointMeta};
use speckle_core::dataset::{DatasetIndex, Split};
use speckle_core::energy::{classify_category, duty_cycle_trace, simulate_with, CutTrace, PumpPolicy};
use speckle_core::imaging::{read_image, AugmentSpec, ChannelMode};
use speckle_core::json::to_stable_string;
use speckle_core::metrics::{class_report, confusion_matrix, roc_auc, ClassReport, ConfusionMatrix};
use speckle_core::nn::Head;
use speckle_core::synth::{generate_dataset, SynthDatasetSpec};
use speckle_core::train::{evaluate, fit, prepare_input, Preprocessing, TrainConfig};
use speckle_core::zoo::{build_with, ArchitectureId, BuildOptions};
use speckle_core::{Error, Result};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const THREADS_ENV: &str = "SPECKLE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "speckle", version, about = "Speckle material classification, smoke detection and pump energy simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic speckle dataset tree.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        wavelength: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network described by a run configuration.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split and write a metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Classify one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Simulate the exhaust-pump controller over a cut trace.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        purge: f64,
        #[arg(long)]
        report: PathBuf,
        /// Per-sample power CSV; defaults to the report path with a `.power.csv` suffix.
        #[arg(long)]
        power_csv: Option<PathBuf>,
        /// Run the pump at full power throughout.
        #[arg(long)]
        always_on: bool,
    },
    /// Write a single-material duty-cycle trace.
    Trace {
        #[arg(long)]
        material: String,
        #[arg(long)]
        duty: f64,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 750.0)]
        pump_watts: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// JSON run configuration for `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: ArchitectureId,
    #[serde(default)]
    pub head_width: Option<usize>,
    pub channel: ChannelMode,
    #[serde(default)]
    pub augment: Option<AugmentSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Seed for weight initialization; defaults to `train.seed`.
    #[serde(default)]
    pub init_seed: Option<u64>,
    #[serde(default)]
    pub wavelength_nm: Option<f64>,
    /// Used when `--data` is not given.
    #[serde(default)]
    pub dataset_root: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth {
            classes,
            per_class,
            size,
            wavelength,
            seed,
            out,
        } => {
            let spec = SynthDatasetSpec::with_classes(classes, per_class, size, wavelength, seed);
            let index = generate_dataset(&spec, &out)?;
            println!(
                "wrote {} images in {} classes to {} (train {}, val {}, test {})",
                index.len(),
                index.classes.len(),
                out.display(),
                index.train.len(),
                index.val.len(),
                index.test.len()
            );
            Ok(())
        }
        Command::Train { data, config, out } => train(data, &config, &out),
        Command::Eval {
            model,
            data,
            report,
            split,
        } => eval(&model, &data, &report, split.into()),
        Command::Predict { model, image } => predict(&model, &image),
        Command::Simulate {
            trace,
            purge,
            report,
            power_csv,
            always_on,
        } => {
            let text = fs::read_to_string(&trace).map_err(|e| Error::Io {
                path: trace.clone(),
                source: e,
            })?;
            let parsed = CutTrace::parse_csv(&text)?;
            let policy = if always_on {
                PumpPolicy::AlwaysOn
            } else {
                PumpPolicy::Adaptive { purge_s: purge }
            };
            let sim = simulate_with(&parsed, policy)?;
            write(&report, to_stable_string(&sim.report)?)?;
            let power = power_csv.unwrap_or_else(|| report.with_extension("power.csv"));
            write(&power, sim.power_csv(&parsed))?;
            println!(
                "savings {:.2}% (baseline {} W*s, adaptive {} W*s)",
                sim.report.savings_percent, sim.report.e_baseline_ws, sim.report.e_adaptive_ws
            );
            Ok(())
        }
        Command::Trace {
            material,
            duty,
            samples,
            dt,
            pump_watts,
            out,
        } => {
            if !(0.0..=1.0).contains(&duty) || samples == 0 || !(dt > 0.0) {
                return Err(Failure::Usage("need 0 <= duty <= 1, samples >= 1 and dt > 0".into()));
            }
            write(&out, duty_cycle_trace(&material, duty, samples, dt, pump_watts).to_csv())?;
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Data(Error::InvalidConfig(format!("{}: {e}", path.display()))))
}

fn train(data: Option<PathBuf>, config: &Path, out: &Path) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    let root = data
        .or_else(|| cfg.dataset_root.clone())
        .ok_or_else(|| Failure::Usage("no dataset: pass --data or set dataset_root".into()))?;
    if let Some(n) = threads_from_env()? {
        cfg.train.threads = Some(n);
    }
    let index = DatasetIndex::scan(&root)?;
    let train_set = index.load(Split::Train)?;
    let val_set = index.load(Split::Val)?;
    let mut net = build_with(
        cfg.architecture,
        BuildOptions {
            in_channels: cfg.channel.output_channels(),
            head_width: cfg.head_width,
        },
    )?;
    net.init_he_uniform(cfg.init_seed.unwrap_or(cfg.train.seed));
    let prep = Preprocessing {
        channel: cfg.channel,
        augment: cfg.augment.clone(),
    };
    let history = fit(&mut net, &train_set, &val_set, &cfg.train, &prep)?;
    let wavelength = cfg.wavelength_nm.or(match cfg.channel {
        ChannelMode::ByWavelength(nm) => Some(nm),
        _ => None,
    });
    let meta = CheckpointMeta {
        class_names: index.classes.clone(),
        channel_mode: cfg.channel,
        wavelength_nm: wavelength,
        architecture: Some(cfg.architecture),
    };
    checkpoint::save(&net, &meta, out)?;
    write(&out.with_extension("history.csv"), history.to_csv())?;
    let best = history.best().expect("at least one epoch");
    println!(
        "best epoch {} of {}: val_loss {} val_acc {}{}",
        history.best_epoch,
        history.records.len(),
        best.val_loss,
        best.val_accuracy,
        if history.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    split: Split,
    classes: Vec<String>,
    loss: f64,
    accuracy: f64,
    confusion_matrix: ConfusionMatrix,
    class_report: ClassReport,
    roc_auc: Option<f64>,
}

fn eval(model: &Path, data: &Path, report: &Path, split: Split) -> CliResult<()> {
    let (net, meta) = checkpoint::load(model)?;
    let index = DatasetIndex::scan(data)?;
    if index.classes != meta.class_names {
        return Err(Error::ShapeMismatch(format!(
            "dataset classes {:?} differ from the model's {:?}",
            index.classes, meta.class_names
        ))
        .into());
    }
    let set = index.load(split)?;
    let result = evaluate(&net, &set, meta.channel_mode)?;
    let predicted: Vec<usize> = result.predictions.iter().map(|p| p.predicted).collect();
    let cm = confusion_matrix(&set.labels, &predicted, index.classes.len())?;
    let auc = match net.head()? {
        Head::Binary if set.labels.contains(&0) && set.labels.contains(&1) => {
            let scores: Vec<f64> = result.predictions.iter().map(|p| p.output[0] as f64).collect();
            Some(roc_auc(&scores, &set.labels)?.auc)
        }
        _ => None,
    };
    let out = EvalReport {
        split,
        classes: index.classes.clone(),
        loss: result.loss,
        accuracy: result.accuracy,
        class_report: class_report(&cm, &index.classes)?,
        confusion_matrix: cm,
        roc_auc: auc,
    };
    write(report, to_stable_string(&out)?)?;
    println!("{} images, accuracy {}", set.len(), result.accuracy);
    Ok(())
}

fn predict(model: &Path, image: &Path) -> CliResult<()> {
    let (net, meta) = checkpoint::load(model)?;
    let img = read_image(image)?;
    let input = prepare_input(&img, net.input_shape(), meta.channel_mode)?;
    let output = net.forward(&input)?.into_data();
    let (class, prob) = match net.head()? {
        Head::Binary => {
            let p = output[0];
            if p > 0.5 {
                (1, p)
            } else {
                (0, 1.0 - p)
            }
        }
        Head::Multiclass(_) => {
            let best = speckle_core::Tensor::from_vec(output.clone()).argmax();
            (best, output[best])
        }
    };
    let name = meta
        .class_names
        .get(class)
        .cloned()
        .unwrap_or_else(|| class.to_string());
    let category = classify_category(&name);
    println!(
        "class={name} probability={prob:.6} category={category:?} pump_tier={}",
        category.tier()
    );
    Ok(())
}
