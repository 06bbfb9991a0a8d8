//! `kneeaug` command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kneeaug::augment::{apply_condition, AugmentationCondition, ConditionName, RoiSpec};
use kneeaug::imagecore::{load_image, save_image, save_rgb_png};
use kneeaug::nn::{argmax, load_checkpoint, predict_proba};
use kneeaug::pipeline::{
    self, load_manifest, load_manifest_with, preprocess_all, split_patients, write_manifest,
    ManifestOptions, RunConfig, Sample, SplitFractions,
};
use kneeaug::seed::{derive_seed, fnv1a};

#[derive(Parser)]
#[command(
    name = "kneeaug",
    version,
    about = "Knee radiograph augmentation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset and its manifest.
    Phantom {
        #[arg(long, default_value_t = 60)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mirror right knees, invert negatives and equalize every image.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one base augmentation condition to every image of a manifest.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        condition: ConditionName,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        roi_fraction: f64,
    },
    /// Patient-aware split into train/val/test manifests.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        seed: u64,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', default_value = "0.7,0.15,0.15")]
        fractions: Vec<f64>,
    },
    /// Train one condition, evaluate on the test split and write the report.
    Train(RunArgs),
    /// Re-evaluate a finished run directory from its provenance and checkpoint.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Grad-CAM overlay for a single image.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Target class; defaults to the predicted class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every listed condition with shared seeds and write a summary.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated condition names, or `all`.
        #[arg(long, default_value = "all")]
        conditions: String,
    },
    /// Rebuild summary.csv from the run directories under a sweep directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    condition: Option<ConditionName>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    augment_seed: Option<u64>,
    #[arg(long)]
    order_seed: Option<u64>,
    /// Any other config field, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
        set(
            "manifest",
            self.manifest.as_ref().map(|p| p.display().to_string()),
        )?;
        set(
            "output_dir",
            self.out.as_ref().map(|p| p.display().to_string()),
        )?;
        set("condition", self.condition.map(|c| c.to_string()))?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("init_seed", self.init_seed.map(|v| v.to_string()))?;
        set("split_seed", self.split_seed.map(|v| v.to_string()))?;
        set("augment_seed", self.augment_seed.map(|v| v.to_string()))?;
        set("order_seed", self.order_seed.map(|v| v.to_string()))?;
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| kneeaug::Error::Config(format!("`{o}` is not KEY=VALUE")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_conditions(list: &str) -> anyhow::Result<Vec<ConditionName>> {
    if list.trim() == "all" {
        return Ok(ConditionName::ALL.to_vec());
    }
    Ok(list.split(',').map(str::parse).collect::<Result<_, _>>()?)
}

fn augment_manifest(
    manifest: &Path,
    condition: ConditionName,
    out: &Path,
    seed: u64,
    roi: RoiSpec,
) -> anyhow::Result<()> {
    let samples = load_manifest(manifest)?;
    let image_dir = out.join("images");
    std::fs::create_dir_all(&image_dir)
        .with_context(|| format!("creating {}", image_dir.display()))?;
    let mut rows = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let cond = AugmentationCondition {
            name: condition,
            roi,
            seed: derive_seed(seed, &[fnv1a(s.knee_key().as_bytes())]),
        };
        for (j, img) in apply_condition(&load_image(&s.image_path)?, &cond)?
            .iter()
            .enumerate()
        {
            let path = image_dir.join(format!("{i:05}_{j}.pgm"));
            save_image(img, &path)?;
            rows.push(Sample {
                image_path: path,
                ..s.clone()
            });
        }
    }
    let path = out.join("manifest.csv");
    write_manifest(&path, &rows)?;
    // Sanity check: the written manifest loads with repeated knees allowed.
    load_manifest_with(
        &path,
        ManifestOptions {
            allow_repeated_knees: true,
        },
    )?;
    println!("{} images written to {}", rows.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Phantom {
            per_class,
            seed,
            out,
        } => {
            let manifest = pipeline::generate_phantom_dataset(per_class, seed, &out)?;
            println!("{}", manifest.display());
        }
        Command::Preprocess { manifest, out } => {
            let samples = preprocess_all(&load_manifest(&manifest)?, &out)?;
            let path = out.join("manifest.csv");
            write_manifest(&path, &samples)?;
            println!("{}", path.display());
        }
        Command::Augment {
            manifest,
            condition,
            out,
            seed,
            roi_fraction,
        } => {
            augment_manifest(
                &manifest,
                condition,
                &out,
                seed,
                RoiSpec::new(roi_fraction)?,
            )?;
        }
        Command::Split {
            manifest,
            out,
            seed,
            fractions,
        } => {
            let [train, val, test] = fractions[..] else {
                return Err(
                    kneeaug::Error::InvalidParameter("expected three fractions".into()).into(),
                );
            };
            let split = split_patients(
                &load_manifest(&manifest)?,
                SplitFractions::new(train, val, test)?,
                seed,
            )?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, part) in [
                ("train", &split.train),
                ("val", &split.val),
                ("test", &split.test),
            ] {
                write_manifest(&out.join(format!("{name}.csv")), part)?;
                println!("{name}: {} samples", part.len());
            }
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let outcome = pipeline::run_experiment(&cfg)?;
            println!("{}", pipeline::experiment::SUMMARY_HEADER);
            println!("{}", outcome.row.to_csv_line());
        }
        Command::Eval { run_dir } => {
            let ev = pipeline::evaluate_run(&run_dir)?;
            print!("{}", ev.metrics.to_csv());
        }
        Command::Gradcam {
            checkpoint,
            image,
            class,
            out,
        } => {
            let state = load_checkpoint(&checkpoint)?;
            let img = load_image(&image)?;
            let class = match class {
                Some(c) => c,
                None => argmax(&predict_proba(&state.net, &[&img], 1)?[0]),
            };
            let cam = kneeaug::compute_gradcam(&state.net, &img, class)?;
            save_rgb_png(&kneeaug::render_overlay(&cam, &img)?, &out)?;
            println!("class {class} confidence {:.6}", cam.confidence);
        }
        Command::Sweep { run, conditions } => {
            let cfg = run.resolve()?;
            let report = pipeline::run_sweep(&cfg, &parse_conditions(&conditions)?)?;
            print!("{}", pipeline::summary_csv(&report.rows));
            if let Some((c, e)) = report.failures.into_iter().next() {
                return Err(anyhow::Error::from(e).context(format!("condition {c} failed")));
            }
        }
        Command::Report { dir } => {
            print!("{}", pipeline::summary_csv(&pipeline::report(&dir)?));
        }
    }
    Ok(())
}

/// 2 for invalid input, 3 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<kneeaug::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 3,
    }
}

/// Error chain without repeating causes already embedded in a message.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
