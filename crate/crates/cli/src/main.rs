//! `atm`: command-line driver for training, audits, ablations and A-distance.

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use atm::analysis::{a_distance, ablation_grid, export_features, target_accuracy};
use atm::datasets::{apply_shift, gen_two_moons, write_csv, ShiftKind, ShiftSpec};
use atm::divergence::{lemma_audit_with, AuditFamily};
use atm::trainer::{self, MetricsLog};
use atm::DomainTag;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "atm", version, about = "Adversarial tight match domain adaptation")]
struct Cli {
    /// Print the default experiment config and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on the configured source/target pair.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample random distribution pairs and report how often the MDD lemmas hold.
    Audit {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        alphabet: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Family::Dirichlet)]
        family: Family,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train every MDD term mask under every configured seed.
    Ablate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Proxy A-distance on raw inputs and on learned features.
    Adist {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a two-moons sample, optionally shifted, as CSV.
    Gendata {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        shift: Option<Shift>,
        /// Degrees for rotation, offset norm otherwise.
        #[arg(long, default_value_t = 0.0)]
        magnitude: f64,
        #[arg(long, default_value_t = 0.0)]
        shift_noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default experiment config.
    PrintConfig,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Dirichlet,
    PointMass,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Shift {
    Rotation,
    Translation,
    ClassConditionalShift,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if cli.print_config {
        return print_config();
    }
    match cli.command {
        None => bail!("no subcommand given; see --help"),
        Some(Command::PrintConfig) => print_config(),
        Some(Command::Train { config, out }) => cmd_train(&config, out),
        Some(Command::Audit {
            trials,
            alphabet,
            seed,
            family,
            out,
        }) => cmd_audit(trials, alphabet, seed, family, &out),
        Some(Command::Ablate { config, out }) => cmd_ablate(&config, out),
        Some(Command::Adist { config, out }) => cmd_adist(&config, out),
        Some(Command::Gendata {
            n,
            noise,
            seed,
            shift,
            magnitude,
            shift_noise,
            out,
        }) => cmd_gendata(n, noise, seed, shift, magnitude, shift_noise, &out),
    }
}

/// Prints to stdout; a closed pipe (`atm print-config | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_config() -> Result<()> {
    emit(&ExperimentConfig::default().to_json()?)
}

struct Setup {
    config: ExperimentConfig,
    source: atm::SampleSet,
    target: atm::SampleSet,
    out: PathBuf,
}

fn setup(config_path: &Path, out: Option<PathBuf>) -> Result<Setup> {
    let config = ExperimentConfig::load(config_path)?;
    config.train.validate().context("invalid train section")?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let (source, target) = config.load_data(base)?;
    let out = out.unwrap_or_else(|| config.analysis.out_dir.clone());
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    Ok(Setup {
        config,
        source,
        target,
        out,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct Summary<'a> {
    epochs_run: usize,
    source_acc: Option<f64>,
    target_acc: Option<f64>,
    pseudo_acc: Option<f64>,
    mdd_value: Option<f64>,
    wall_time_secs: f64,
    config: &'a ExperimentConfig,
}

fn cmd_train(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let s = setup(config_path, out)?;
    let started = Instant::now();
    let (model, log) = trainer::run(&s.source, &s.target, &s.config.model, &s.config.train)?;
    let wall = started.elapsed().as_secs_f64();
    log.write_csv(&s.out.join("metrics.csv"))?;
    model.save_json(&s.out.join("model.json"))?;
    let last = log.last();
    let summary = Summary {
        epochs_run: log.rows.len(),
        source_acc: trainer::accuracy(&model, &s.source)?,
        target_acc: trainer::accuracy(&model, &s.target)?,
        pseudo_acc: last.and_then(|r| r.pseudo_acc),
        mdd_value: last.map(|r| r.mdd_value),
        wall_time_secs: wall,
        config: &s.config,
    };
    write(
        &s.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    match summary.target_acc {
        Some(acc) => println!(
            "trained {} epochs, target accuracy {acc:.4}",
            summary.epochs_run
        ),
        None => println!("trained {} epochs", summary.epochs_run),
    }
    Ok(())
}

fn cmd_audit(trials: usize, alphabet: usize, seed: u64, family: Family, out: &Path) -> Result<()> {
    let family = match family {
        Family::Dirichlet => AuditFamily::Dirichlet,
        Family::PointMass => AuditFamily::PointMass,
    };
    let report = lemma_audit_with(trials, alphabet, seed, family)?;
    let json = report.to_json()?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    write(&out.join("audit.json"), &json)?;
    emit(&json)
}

fn cmd_ablate(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let s = setup(config_path, out)?;
    let report = ablation_grid(
        &s.source,
        &s.target,
        &s.config.model,
        &s.config.train,
        &s.config.analysis.seeds,
    )?;
    report.write_csv(&s.out.join("ablation.csv"))?;
    for cell in &report.cells {
        match cell.mean_acc() {
            Some(acc) => println!("{} {:?} mean target accuracy {acc:.4}", cell.id, cell.mask),
            None => println!("{} {:?} all runs failed", cell.id, cell.mask),
        }
        for (seed, why) in cell.failures() {
            eprintln!("warning: {} seed {seed} failed: {why}", cell.id);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AdistReport {
    pre: atm::analysis::ADistance,
    post: atm::analysis::ADistance,
    target_acc: Option<f64>,
}

fn cmd_adist(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let s = setup(config_path, out)?;
    let adist = &s.config.analysis.adist;
    let pre = a_distance(s.source.features(), s.target.features(), adist)?;
    let (model, _): (_, MetricsLog) =
        trainer::run(&s.source, &s.target, &s.config.model, &s.config.train)?;
    let table = export_features(&model, &s.source, &s.target)?;
    let post = a_distance(table.source.features(), table.target.features(), adist)?;
    table.write_csv(&s.out.join("features.csv"))?;
    let report = AdistReport {
        pre,
        post,
        target_acc: target_accuracy(&model, &s.target).ok(),
    };
    write(
        &s.out.join("adist.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    println!("A-distance before adaptation {:.4}, after {:.4}", pre.value, post.value);
    Ok(())
}

fn cmd_gendata(
    n: usize,
    noise: f64,
    seed: u64,
    shift: Option<Shift>,
    magnitude: f64,
    shift_noise: f64,
    out: &Path,
) -> Result<()> {
    let mut set = gen_two_moons(n, noise, seed)?;
    if let Some(kind) = shift {
        let kind = match kind {
            Shift::Rotation => ShiftKind::Rotation,
            Shift::Translation => ShiftKind::Translation,
            Shift::ClassConditionalShift => ShiftKind::ClassConditionalShift,
        };
        let spec = ShiftSpec {
            kind,
            magnitude,
            noise: shift_noise,
            direction: None,
        };
        set = apply_shift(&set, &spec, seed)?.with_domain(DomainTag::Target);
    }
    write_csv(&set, out)?;
    Ok(())
}
