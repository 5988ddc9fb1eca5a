use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgda_core::augment::{
    build_augmented_dataset, AugmentMetadata, AugmentOptions, GaussianKernelPeaks, PeakSourceContext,
    PeakSourceRegistry,
};
use sgda_core::classifier::{evaluate, ClassifierConfig, ClassifierRegistry};
use sgda_core::dataset::LabeledDataset;
use sgda_core::experiments::{render_table, rows_from_csv, run_experiment, summarize, write_run, ExperimentConfig, ExperimentId};
use sgda_core::motor_model::{FaultClass, MotorParameters};
use sgda_core::signal_io::{DatasetManifest, DEFAULT_HOP, DEFAULT_WINDOW_LEN};
use sgda_core::sim_oracle::{corpus_specs, write_corpus, SimSpec};
use sgda_core::spectrum::recording_spectra;
use sgda_core::vae::VaeConfig;
use sgda_core::{Result, SgdaError};

#[derive(Parser)]
#[command(name = "sgda", version, about = "Signature-guided spectral augmentation for motor fault diagnosis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated stator-current recordings and a manifest.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "healthy")]
        fault: FaultClass,
        #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
        db: f64,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        /// Motor parameter file (TOML); defaults to the reference motor.
        #[arg(long)]
        motor: Option<PathBuf>,
    },
    /// Turn healthy recordings into a labeled spectrum dataset with injected faults.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "vae")]
        generator: String,
        #[arg(long, value_delimiter = ',', default_value = "inter_turn_short")]
        faults: Vec<FaultClass>,
        #[arg(long, default_value_t = 300)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        max_order: u32,
        #[arg(long, default_value_t = 100)]
        vae_epochs: usize,
        #[arg(long)]
        motor: Option<PathBuf>,
        /// Write the recordings' spectra with their own labels, no injection.
        #[arg(long)]
        passthrough: bool,
    },
    /// Fit a classifier on a dataset CSV and save a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "resnet")]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        /// ResNet block widths, e.g. 8,16,32,64.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<usize>>,
    },
    /// Score a checkpoint on a dataset CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one experiment protocol and write its report directory.
    Experiment {
        id: ExperimentId,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print a report CSV as a table.
    Report { csv: PathBuf },
}

fn motor(path: Option<&Path>) -> Result<MotorParameters> {
    path.map_or_else(|| Ok(MotorParameters::default()), MotorParameters::load)
}

fn simulate(out: &Path, fault: FaultClass, db: f64, count: usize, seed_base: u64, motor_path: Option<&Path>) -> Result<()> {
    let params = motor(motor_path)?;
    let specs: Vec<SimSpec> = corpus_specs(fault, db, count, seed_base)
        .into_iter()
        .map(|s| SimSpec { params: params.clone(), ..s })
        .collect();
    let manifest = write_corpus(out, &specs)?;
    println!("wrote {} recordings, manifest {}", specs.len(), manifest.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn augment(
    manifest: &Path,
    out: &Path,
    generator: &str,
    faults: &[FaultClass],
    per_class: usize,
    seed: u64,
    max_order: u32,
    vae_epochs: usize,
    motor_path: Option<&Path>,
    passthrough: bool,
) -> Result<()> {
    let m = DatasetManifest::load(manifest)?;
    let mut windows = Vec::new();
    for rec in m.load_recordings()? {
        windows.extend(recording_spectra(&rec, DEFAULT_WINDOW_LEN, DEFAULT_HOP)?);
    }
    if passthrough {
        let data = LabeledDataset::new(windows);
        data.write_csv(out)?;
        println!("wrote {} windows to {}", data.len(), out.display());
        return Ok(());
    }
    let params = match motor_path {
        Some(p) => MotorParameters::load(p)?,
        None => m.motors()?.into_iter().next().map_or_else(MotorParameters::default, |(_, p)| p),
    };
    let healthy: Vec<_> = windows
        .into_iter()
        .filter(|w| w.label == Some(FaultClass::Healthy))
        .collect();
    if healthy.is_empty() {
        return Err(SgdaError::EmptyDataset("manifest has no healthy recordings".into()));
    }
    let ctx = PeakSourceContext {
        healthy: &healthy,
        params: &params,
        seed,
        gaussian: GaussianKernelPeaks::default(),
        vae: VaeConfig {
            epochs: vae_epochs,
            seed,
            ..VaeConfig::default()
        },
    };
    let source = PeakSourceRegistry::default().build(generator, &ctx)?;
    let options = AugmentOptions {
        max_order,
        ..AugmentOptions::default()
    };
    let aug = build_augmented_dataset(&healthy, &params, faults, source.as_ref(), per_class, seed, &options)?;
    aug.dataset.write_csv(out)?;
    let meta = AugmentMetadata {
        seed,
        generator: source.name().to_string(),
        generator_params: source.describe(),
        per_class,
        faults: faults.to_vec(),
        options,
    };
    let sidecar = PathBuf::from(format!("{}.json", out.display()));
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta).map_err(|e| SgdaError::InvalidArgument(e.to_string()))?)?;
    println!(
        "wrote {} windows ({} injected) to {}, metadata {}",
        aug.dataset.len(),
        aug.injections.len(),
        out.display(),
        sidecar.display()
    );
    Ok(())
}

fn train(data: &Path, model: &str, out: &Path, seed: u64, epochs: Option<usize>, channels: Option<Vec<usize>>) -> Result<()> {
    let data = LabeledDataset::read_csv(data)?;
    let mut cfg = ClassifierConfig::default().with_seed(seed);
    if let Some(e) = epochs {
        cfg.resnet.epochs = e;
        cfg.mlp.epochs = e;
        cfg.svm.epochs = e;
    }
    if let Some(c) = channels {
        cfg.resnet.block_channels = c;
    }
    let mut clf = ClassifierRegistry::default().build(model, &cfg, data.classes())?;
    let hist = clf.fit(&data)?;
    clf.save(out)?;
    println!(
        "trained {model} on {} windows, final train accuracy {:.4}, saved {}",
        data.len(),
        hist.train_accuracy.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn eval(model: &Path, data: &Path, json: bool) -> Result<()> {
    let clf = ClassifierRegistry::default().load(model)?;
    let report = evaluate(clf.as_ref(), &LabeledDataset::read_csv(data)?)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| SgdaError::InvalidArgument(e.to_string()))?);
    } else {
        println!("accuracy {:.4}  macro-F1 {:.4}  n={}", report.accuracy, report.macro_f1, report.n_test);
        for (class, f1) in &report.per_class_f1 {
            println!("  {class:<20} F1 {f1:.4}");
        }
    }
    Ok(())
}

fn experiment(id: ExperimentId, config: Option<&Path>, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_for(id),
    };
    if cfg.experiment != id {
        return Err(SgdaError::Config(format!("config is for {}, not {id}", cfg.experiment)));
    }
    if let Some(d) = output_dir {
        cfg.output_dir = d;
    }
    let outcome = run_experiment(&cfg)?;
    let dir = write_run(&outcome)?;
    print!("{}", render_table(&summarize(&outcome)?));
    println!("results in {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate { out, fault, db, count, seed_base, motor } => {
            simulate(&out, fault, db, count, seed_base, motor.as_deref())
        }
        Command::Augment {
            manifest,
            out,
            generator,
            faults,
            per_class,
            seed,
            max_order,
            vae_epochs,
            motor,
            passthrough,
        } => augment(
            &manifest,
            &out,
            &generator,
            &faults,
            per_class,
            seed,
            max_order,
            vae_epochs,
            motor.as_deref(),
            passthrough,
        ),
        Command::Train { data, model, out, seed, epochs, channels } => train(&data, &model, &out, seed, epochs, channels),
        Command::Eval { model, data, json } => eval(&model, &data, json),
        Command::Experiment { id, config, output_dir } => experiment(id, config.as_deref(), output_dir),
        Command::Report { csv } => rows_from_csv(&csv).map(|rows| print!("{}", render_table(&rows))),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
