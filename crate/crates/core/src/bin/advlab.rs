use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use advlab::bench::{
    emit_report, prepare_trial, read_json_report, run_experiment, sweep, synth_dataset, write_sweep_csv, write_synth,
    ExperimentConfig, ReportFormat, ReportRow, Split,
};
use advlab::gradnet::{self, Target};
use advlab::imagekit::{netpbm, roi_mask, Kernel, RoiOptions};

type CliResult = Result<(), Box<dyn Error>>;

/// Adversarial attack and defence bench for binary image classifiers.
#[derive(Parser)]
#[command(name = "advlab", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic blob dataset (PGM images, RoI masks, manifest.json).
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Trains the configured network on trial 0 and saves it.
    Train,
    /// Extracts the region of interest of one image and writes its mask.
    Roi {
        image: PathBuf,
        #[arg(long, default_value_t = 5)]
        kernel: usize,
    },
    /// Runs every configured attack and writes attacks.csv and attacks.json.
    Attack,
    /// Runs every configured attack against every configured defence.
    Defend,
    /// Runs the config's [sweep] section and writes sweep.csv.
    Sweep,
    /// Converts a JSON report to CSV.
    Report {
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Box<dyn Error>> {
    let path = cli.config.as_ref().ok_or("this command needs --config <file>")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_rows(rows: &[ReportRow], out: &Path, stem: &str) -> CliResult {
    let csv = out.join(format!("{stem}.csv"));
    emit_report(rows, ReportFormat::Csv, &csv)?;
    emit_report(rows, ReportFormat::Json, &out.join(format!("{stem}.json")))?;
    for r in rows.iter().filter(|r| r.trial.is_none()) {
        println!(
            "{:<18} {:<14} acc {:.3} -> {:.3}  auc {:.3} -> {:.3}  l2 {:.2}%  {:.2} ms",
            r.attack,
            r.defence,
            r.clean_accuracy,
            r.accuracy_under_attack,
            r.clean_roc_auc,
            r.roc_auc,
            r.mean_perturbation,
            r.mean_seconds * 1e3
        );
    }
    println!("wrote {}", csv.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth { n, size } => {
            let seed = cli.seed.unwrap_or(0);
            let set = synth_dataset(*n, *size, seed)?;
            let manifest = write_synth(&set, &cli.out, Split::default(), seed)?;
            println!("wrote {} images to {}", manifest.entries.len(), cli.out.display());
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let trial = prepare_trial(&cfg, 0)?;
            let path = cli.out.join(format!("{}.json", cfg.network.id()));
            gradnet::save(&trial.net, &path)?;
            let correct = trial
                .test
                .iter()
                .filter(|s| matches!(s.target, Target::Class(c) if trial.net.predict(&s.image).ok() == Some(c)))
                .count();
            println!("test accuracy {:.3}", correct as f64 / trial.test.len() as f64);
            println!("wrote {}", path.display());
        }
        Command::Roi { image, kernel } => {
            let img = netpbm::load(image).map_err(|e| format!("{}: {e}", image.display()))?;
            let roi = roi_mask(&img, &RoiOptions::with_kernel(Kernel::square(*kernel)?))?;
            let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            let path = cli.out.join(format!("{stem}_roi.pgm"));
            netpbm::save_mask(roi.mask(), &path)?;
            println!("roi area {} px, wrote {}", roi.area(), path.display());
        }
        Command::Attack => {
            let cfg = ExperimentConfig {
                defences: Vec::new(),
                ..load_config(cli)?
            };
            write_rows(&run_experiment(&cfg)?, &cli.out, "attacks")?;
        }
        Command::Defend => {
            let cfg = load_config(cli)?;
            if cfg.defences.is_empty() {
                return Err("config has no [[defences]] entries".into());
            }
            write_rows(&run_experiment(&cfg)?, &cli.out, "defences")?;
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let sw = cfg.sweep.clone().ok_or("config has no [sweep] section")?;
            let points = sweep(&cfg, sw.axis, &sw.values, &sw.attacks)?;
            let path = cli.out.join("sweep.csv");
            write_sweep_csv(&points, &path)?;
            for p in &points {
                println!("{:<12} {} = {:<8} auc {:.3} acc {:.3}", p.attack, p.axis, p.value, p.roc_auc, p.accuracy);
            }
            println!("wrote {}", path.display());
        }
        Command::Report { input, format } => {
            let rows = read_json_report(input)?;
            let ext = match format {
                ReportFormat::Csv => "csv",
                ReportFormat::Json => "json",
            };
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
            let path = cli.out.join(format!("{stem}.{ext}"));
            emit_report(&rows, *format, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("advlab: error: {e}");
            ExitCode::FAILURE
        }
    }
}
