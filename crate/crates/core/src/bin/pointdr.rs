use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pointdr::augment::{strong_view, weak_view};
use pointdr::checkpoint;
use pointdr::config::TrainConfig;
use pointdr::eval::{corrupted_suite, evaluate, read_dataset, write_dataset};
use pointdr::io::{read_labeled_scan, read_scan, write_labels, write_provenance, write_scan};
use pointdr::labels::LabelMap;
use pointdr::metrics::EvalReport;
use pointdr::toy::{generate_toy, Split, ToyBenchmark};
use pointdr::trainer::Trainer;
use pointdr::weather::{corrupt, WeatherConfig};
use pointdr::{PointCloud, Weather};

#[derive(Parser)]
#[command(name = "pointdr", version, about = "Domain-randomized LiDAR segmentation training")]
struct Cli {
    /// Label map (`raw_id train_id name` lines); defaults to SemanticKITTI.
    #[arg(long, global = true)]
    label_map: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Weak,
    Strong,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a weak or strong augmented view of one scan.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        view: View,
        #[arg(long)]
        out: PathBuf,
        /// Optional labels; the augmented labels go next to `--out`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Augmentation settings as a training config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Corrupts one labeled scan with a weather preset; writes `<prefix>.bin`
    /// and `<prefix>.label`.
    Simulate {
        #[arg(long)]
        mode: Weather,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Trains on a dataset directory or on the procedural toy benchmark.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// A dataset directory, or `toy`.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV; defaults to `<out>.loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Write the checkpoint without the memory bank.
        #[arg(long)]
        no_bank: bool,
    },
    /// Evaluates a checkpoint and writes a per-class / per-weather CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// A dataset directory, or `toy` for clean plus corrupted toy
        /// validation scenes.
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        /// Toy benchmark seed used with `--data toy`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Writes toy benchmark scenes as a dataset directory.
    GenToy {
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write every weather-corrupted copy, tagged.
        #[arg(long)]
        corrupt: bool,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::from_file(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn toy_eval_set(seed: u64) -> Result<Vec<PointCloud>> {
    let val = generate_toy(Split::Val, &ToyBenchmark::default(), seed)?;
    let mut all = val.clone();
    all.extend(corrupted_suite(&val, seed)?);
    Ok(all)
}

fn run(cli: Cli) -> Result<()> {
    let map = match &cli.label_map {
        Some(p) => LabelMap::from_file(p)?,
        None => LabelMap::semantic_kitti(),
    };
    match cli.command {
        Command::Augment {
            input,
            seed,
            view,
            out,
            labels,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let cloud = match &labels {
                Some(l) => read_labeled_scan(&input, l, &map)?,
                None => read_scan(&input)?,
            };
            let result = match view {
                View::Weak => weak_view(&cloud, &cfg.augment, seed)?,
                View::Strong => {
                    let v = strong_view(&cloud, &cfg.augment, seed)?;
                    write_provenance(&v.origins, with_suffix(&out, ".prov"))?;
                    v.cloud
                }
            };
            write_scan(&result, &out)?;
            if let Some(l) = result.labels() {
                write_labels(l, out.with_extension("label"), &map)?;
            }
            eprintln!("{} -> {} points", cloud.len(), result.len());
        }
        Command::Simulate {
            mode,
            input,
            labels,
            seed,
            out_prefix,
        } => {
            if mode == Weather::Clear {
                bail!("`clear` is not a corruption mode");
            }
            let cloud = read_labeled_scan(&input, &labels, &map)?;
            let out = corrupt(&cloud, &WeatherConfig::preset(mode), seed)?;
            write_scan(&out, with_suffix(&out_prefix, ".bin"))?;
            write_labels(out.labels().unwrap_or_default(), with_suffix(&out_prefix, ".label"), &map)?;
            eprintln!("{mode}: {} -> {} points", cloud.len(), out.len());
        }
        Command::Train {
            config,
            data,
            out,
            loss_csv,
            no_bank,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scans = if data == "toy" {
                generate_toy(Split::Train, &ToyBenchmark::default(), cfg.seed)?
            } else {
                read_dataset(&data, &map).with_context(|| format!("reading dataset {data}"))?
            };
            eprintln!("training on {} scans", scans.len());
            let mut trainer = Trainer::new(cfg)?;
            let curve = trainer.train(&scans, |e| {
                eprintln!(
                    "epoch {:>3}  ce {:.4}  ct {:.4}  total {:.4}  lr {:.4}",
                    e.epoch, e.ce, e.ct, e.total, e.lr
                )
            })?;
            checkpoint::save(&out, &trainer.model, (!no_bank).then_some(&trainer.bank))?;
            let csv_path = loss_csv.unwrap_or_else(|| with_suffix(&out, ".loss.csv"));
            std::fs::write(&csv_path, curve.to_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
        }
        Command::Eval { ckpt, data, out, seed } => {
            let ck = checkpoint::load(&ckpt)?;
            let scans = if data == "toy" {
                toy_eval_set(seed)?
            } else {
                read_dataset(&data, &map).with_context(|| format!("reading dataset {data}"))?
            };
            let report = evaluate(&ck.model, &scans)?;
            std::fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", EvalReport::render_table(&[(&ckpt.display().to_string(), &report)]));
        }
        Command::GenToy {
            split,
            seed,
            out,
            corrupt: with_corrupted,
        } => {
            let mut scans = generate_toy(split, &ToyBenchmark::default(), seed)?;
            if with_corrupted {
                let extra = corrupted_suite(&scans, seed)?;
                scans.extend(extra);
            }
            write_dataset(&out, &scans, &map)?;
            eprintln!("wrote {} scans to {}", scans.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
