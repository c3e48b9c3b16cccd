//! The `vtapred` command line.
//!
//! Every subcommand resolves its configuration the same way: defaults, then
//! the `--config` file, then `--set KEY=VALUE` overrides, then the dedicated
//! flags.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::config::{Config, KEYS};
use crate::dataset::{apply_boundaries, load_dataset, Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::report::write_predictions_csv;
use crate::eval::{prepare_rows, prepare_samples, run_ablation, EvalReport};
use crate::features::{extract, write_feature_csv};
use crate::model;
use crate::optim::write_loss_csv;
use crate::synthetic::{tachogram_dataset, write_dataset, TachogramSpec};

#[derive(Debug, Parser)]
#[command(name = "vtapred", version, about = "Ventricular tachyarrhythmia prediction from RR tachograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset and print a summary.
    Ingest(DataArgs),
    /// Write the feature matrix as CSV.
    Features(FeaturesArgs),
    /// Train one model on all records; write a checkpoint and loss history.
    Train(TrainArgs),
    /// Run the cross-validated four-configuration ablation.
    Ablate(AblateArgs),
    /// Re-render a report from a per-seed CSV.
    Report(ReportArgs),
    /// Write a seeded synthetic dataset in the on-disk format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory of `<record_id>.txt` tachograms.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Metadata CSV.
    #[arg(long)]
    pub metadata: PathBuf,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub horizon_ms: Option<f64>,
    /// Leave control tachograms untruncated.
    #[arg(long)]
    pub no_truncate_controls: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train the VTA head only (both auxiliary weights set to 0).
    #[arg(long)]
    pub single_task: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Zero the auxiliary weights in the multi-task row too.
    #[arg(long)]
    pub single_task: bool,
    /// Keep all records of a patient in the same fold.
    #[arg(long)]
    pub patient_grouped: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Per-seed CSV written by `ablate`.
    #[arg(long)]
    pub per_seed: PathBuf,
    /// Directory for report.csv and report.txt; prints the table if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory; tachograms go to `<out>/rr`, metadata to `<out>/metadata.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub vta: usize,
    #[arg(long, default_value_t = 30)]
    pub control: usize,
    /// Intervals per record.
    #[arg(long, default_value_t = 1024)]
    pub beats: usize,
}

impl DataArgs {
    pub fn resolve_config(&self) -> Result<Config> {
        let mut config = Config::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for o in &self.overrides {
            config.apply_assignment(o)?;
        }
        if let Some(h) = self.horizon_ms {
            config.boundary.horizon_ms = h;
        }
        if self.no_truncate_controls {
            config.boundary.truncate_controls = false;
        }
        Ok(config)
    }
}

/// A loaded dataset with boundaries applied.
struct Loaded {
    dataset: Dataset,
    /// Checksum of the dataset as read, before truncation.
    checksum: String,
    excluded: Vec<String>,
}

fn load(args: &DataArgs, config: &Config) -> Result<Loaded> {
    let mut dataset = load_dataset(&args.data_dir, &args.metadata)?;
    let checksum = dataset.checksum();
    let excluded = apply_boundaries(&mut dataset, &config.boundary);
    info!(
        "loaded {} records ({} VTA, {} control), {} excluded by the boundary",
        dataset.records.len(),
        dataset.count(Label::Vta),
        dataset.count(Label::Control),
        excluded.len()
    );
    Ok(Loaded {
        dataset,
        checksum,
        excluded,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: String,
    pub dataset_checksum: String,
    pub records: usize,
    pub excluded: Vec<String>,
    pub seeds: Vec<u64>,
    pub config: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    fn new(command: &'static str, config: &Config, checksum: String, records: usize, excluded: Vec<String>, seeds: Vec<u64>) -> Self {
        let config = KEYS
            .iter()
            .map(|k| (k.to_string(), serde_json::Value::String(config.get(k).unwrap_or_default())))
            .collect();
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            timestamp: timestamp(),
            dataset_checksum: checksum,
            records,
            excluded,
            seeds,
            config,
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Eval(format!("manifest: {e}")))?;
        text.push('\n');
        write_text(path, &text)
    }
}

fn timestamp() -> String {
    use time::format_description::well_known::Rfc3339;
    use time::OffsetDateTime;
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| OffsetDateTime::from_unix_timestamp(s).ok());
    fixed
        .unwrap_or_else(OffsetDateTime::now_utc)
        .format(&Rfc3339)
        .unwrap_or_default()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Features(args) => cmd_features(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::Report(args) => cmd_report(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

pub fn cmd_ingest(args: &DataArgs) -> Result<()> {
    let config = args.resolve_config()?;
    config.validate()?;
    let loaded = load(args, &config)?;
    let ds = &loaded.dataset;
    println!(
        "records: {} (VTA {}, Control {})",
        ds.records.len(),
        ds.count(Label::Vta),
        ds.count(Label::Control)
    );
    println!("patients: {}", ds.patients.len());
    println!("excluded: {}", loaded.excluded.len());
    for id in &loaded.excluded {
        println!("  {id}");
    }
    println!("checksum: {}", loaded.checksum);
    Ok(())
}

pub fn cmd_features(args: &FeaturesArgs) -> Result<()> {
    let config = args.data.resolve_config()?;
    config.validate()?;
    let loaded = load(&args.data, &config)?;
    let mut rows = Vec::with_capacity(loaded.dataset.records.len());
    for record in &loaded.dataset.records {
        match extract(record, &config.features) {
            Ok(fv) => rows.push((fv, record.label)),
            Err(e @ Error::TooShort { .. }) => log::warn!("skipping record {}: {e}", record.record_id),
            Err(e) => return Err(e),
        }
    }
    write_feature_csv(create(&args.out)?, &config.features, &rows)?;
    info!("wrote {} feature rows to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = args.data.resolve_config()?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if args.single_task {
        config.set_single_task();
    }
    config.validate()?;
    let loaded = load(&args.data, &config)?;
    let (samples, skipped) = prepare_samples(&loaded.dataset, &config.features)?;
    info!("training on {} records for {} epochs", samples.len(), config.train.epochs);
    let (model, outcome) = model::fit(&samples, &config)?;
    model.save(&args.out)?;

    let loss_path = args.loss_out.clone().unwrap_or_else(|| suffixed(&args.out, ".loss.csv"));
    write_loss_csv(create(&loss_path)?, &outcome.history)?;
    let mut excluded = loaded.excluded;
    excluded.extend(skipped);
    RunManifest::new(
        "train",
        &config,
        loaded.checksum,
        samples.len(),
        excluded,
        vec![config.train.seed],
    )
    .write(&suffixed(&args.out, ".manifest.json"))?;
    if let Some(last) = outcome.history.last() {
        info!("final training loss {:.6}", last.total);
    }
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let mut config = args.data.resolve_config()?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    if args.single_task {
        config.set_single_task();
    }
    if args.patient_grouped {
        config.patient_grouped = true;
    }
    config.validate()?;
    let loaded = load(&args.data, &config)?;
    let (tables, skipped) = prepare_rows(&loaded.dataset, &config.features)?;
    let setup = config.ablation_setup();
    let records = tables.first().map_or(0, |(_, s)| s.len());
    info!(
        "ablation over {records} records: {} configurations x {} seeds x {} folds",
        tables.len(),
        setup.seeds.len(),
        config.folds
    );

    let report = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("--jobs {jobs}: {e}")))?
            .install(|| run_ablation(&tables, &setup))?,
        None => run_ablation(&tables, &setup)?,
    };

    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.write_csv(create(&out.join("report.csv"))?)?;
    write_text(&out.join("report.txt"), &report.render_table())?;
    report.write_per_seed_csv(create(&out.join("per_seed.csv"))?)?;
    let pred_dir = out.join("predictions");
    for run in &report.runs {
        let path = pred_dir.join(format!("{}_seed{}.csv", run.row.slug(), run.seed));
        write_predictions_csv(create(&path)?, &run.predictions)?;
    }
    let mut excluded = loaded.excluded;
    excluded.extend(skipped);
    RunManifest::new("ablate", &config, loaded.checksum, records, excluded, setup.seeds)
        .write(&out.join("manifest.json"))?;
    print!("{}", report.render_table());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let file = File::open(&args.per_seed).map_err(|e| Error::io(&args.per_seed, e))?;
    let report = EvalReport::read_per_seed_csv(file)?;
    match &args.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            report.write_csv(create(&out.join("report.csv"))?)?;
            write_text(&out.join("report.txt"), &report.render_table())?;
        }
        None => print!("{}", report.render_table()),
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = TachogramSpec {
        vta: args.vta,
        control: args.control,
        beats: args.beats,
        ..Default::default()
    };
    let dataset = tachogram_dataset(&spec, args.seed);
    write_dataset(&dataset, &args.out.join("rr"), &args.out.join("metadata.csv"))?;
    info!("wrote {} records to {}", dataset.records.len(), args.out.display());
    Ok(())
}
