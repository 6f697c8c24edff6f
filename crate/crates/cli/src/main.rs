//! `protoeval` command-line front end.
//!
//! Exit codes: 0 success, 1 validation (bad manifest, bad data, a suite that
//! cannot run), 2 usage, 3 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use protoeval::interchange::{load_bundle, load_unvalidated, write_bundle, PerturbedMode};
use protoeval::pipeline::{
    combine_runs, hsv_context_split, radar_groups, render_svg, run_suites, stratified_splits,
    write_perturbations, HsvSplitConfig, MetricReport, ReportFormat, RunGrouping, SuiteConfig,
    SuiteKind,
};
use protoeval::synthetic::{attach_perturbed_records, planted_bundle, FixtureSpec};
use protoeval::{Error, Result};

/// Environment variable supplying the worker count when the config leaves it unset.
const PARALLELISM_ENV: &str = "PROTOEVAL_PARALLELISM";

#[derive(Debug, Parser)]
#[command(
    name = "protoeval",
    version,
    about = "Interpretability metrics for part-based prototype networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a bundle manifest and every file it references.
    Validate { manifest: PathBuf },
    /// Write the perturbed images the adapter must run through the model.
    Perturb {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one metric suite (or `all`) and write a report.
    Metrics {
        /// Suite name or `all`.
        suite: String,
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// json or csv.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Convert, combine or plot metric reports.
    Report {
        /// Report files (JSON); each one is a model unless `--combine` is given.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// json, csv or svg.
        #[arg(long)]
        format: String,
        /// Output file (json, csv) or directory (svg: one figure per suite).
        #[arg(long)]
        out: PathBuf,
        /// Merge the inputs as runs of one model, labelled as folds or seeds.
        #[arg(long, value_enum)]
        combine: Option<Grouping>,
        /// Series labels, one per report (defaults to file stems).
        #[arg(long = "label")]
        labels: Vec<String>,
    },
    /// Compute dataset splits.
    Split {
        #[command(subcommand)]
        kind: SplitKind,
    },
    /// Write the planted demonstration bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Perturbed-side artifacts: synthetic, regenerate or bundle.
        #[arg(long, value_enum, default_value = "synthetic")]
        mode: Mode,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Subcommand)]
enum SplitKind {
    /// Stratified hold-out and cross-validation folds.
    Stratified {
        #[command(flatten)]
        input: LabelInput,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Context split from the colour statistics of image borders.
    Hsv {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file with split parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct LabelInput {
    /// JSON array of class labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Bundle manifest; the first label of every sample is used.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON suite configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = PARALLELISM_ENV)]
    parallelism: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grouping {
    Folds,
    Seeds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Synthetic,
    Regenerate,
    Bundle,
}

impl ConfigArgs {
    /// The file's settings; the flag or environment fills in parallelism only
    /// when the file does not set it.
    fn load(&self) -> Result<SuiteConfig> {
        let mut config = match &self.config {
            Some(path) => SuiteConfig::read(path)?,
            None => SuiteConfig::default(),
        };
        if config.parallelism.is_none() {
            config.parallelism = self.parallelism;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn validate(manifest: &Path) -> Result<()> {
    let bundle = load_unvalidated(manifest)?;
    let violations = bundle.violations();
    if violations.is_empty() {
        println!(
            "ok: {} ({} samples, {} classes, {} prototypes)",
            bundle.dataset_name,
            bundle.samples.len(),
            bundle.class_count,
            bundle.model.prototype_count()
        );
        return Ok(());
    }
    for v in &violations {
        match &v.sample_id {
            Some(id) => eprintln!("{id}: {}", v.message),
            None => eprintln!("{}", v.message),
        }
    }
    Err(Error::Validation(format!(
        "{} violation(s) in {}",
        violations.len(),
        manifest.display()
    )))
}

fn metrics(
    suite: &str,
    manifest: &Path,
    config: &ConfigArgs,
    out: &Path,
    format: &str,
) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    if format == ReportFormat::Svg {
        return Err(Error::Usage(
            "metrics writes json or csv; use `report --format svg` for figures".into(),
        ));
    }
    let mut config = config.load()?;
    if suite != "all" {
        config.suites = vec![suite.parse::<SuiteKind>()?];
    }
    let bundle = load_bundle(manifest)?;
    let report = run_suites(&bundle, &config)?;
    let text = match format {
        ReportFormat::Csv => report.to_csv()?,
        _ => report.to_json(),
    };
    write_file(out, &text)
}

fn report(
    inputs: &[PathBuf],
    format: &str,
    out: &Path,
    combine: Option<Grouping>,
    labels: &[String],
) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(Error::Usage(format!(
            "{} labels for {} reports",
            labels.len(),
            inputs.len()
        )));
    }
    let mut runs = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("report-{i}"))
        });
        runs.push((label, MetricReport::read(path)?));
    }
    if let Some(grouping) = combine {
        let grouping = match grouping {
            Grouping::Folds => RunGrouping::Folds,
            Grouping::Seeds => RunGrouping::Seeds,
        };
        let merged = combine_runs(&runs, grouping)?;
        runs = vec![(merged.metadata.dataset.clone(), merged)];
    }
    match format {
        ReportFormat::Json | ReportFormat::Csv => {
            let [(_, single)] = runs.as_slice() else {
                return Err(Error::Usage(
                    "json/csv output takes one report; pass --combine to merge several runs".into(),
                ));
            };
            let text = if format == ReportFormat::Json {
                single.to_json()
            } else {
                single.to_csv()?
            };
            write_file(out, &text)
        }
        ReportFormat::Svg => {
            let groups = radar_groups(&runs)?;
            if groups.is_empty() {
                return Err(Error::Validation("no metric with a mean to plot".into()));
            }
            fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
            for (suite, specs) in groups {
                let path = out.join(format!("radar-{}.svg", suite.name()));
                write_file(&path, &render_svg(suite.name(), &specs))?;
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn read_labels(input: &LabelInput) -> Result<Vec<usize>> {
    if let Some(path) = &input.labels {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        return serde_json::from_str(&text).map_err(|e| {
            Error::Format(format!(
                "{}: expected a JSON array of labels: {e}",
                path.display()
            ))
        });
    }
    let manifest = input
        .manifest
        .as_ref()
        .expect("clap enforces one label source");
    let bundle = load_bundle(manifest)?;
    bundle
        .samples
        .iter()
        .map(|s| {
            s.labels
                .first()
                .copied()
                .ok_or_else(|| Error::Validation(format!("sample {} has no label", s.id)))
        })
        .collect()
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("split results serialize")
}

fn split(kind: &SplitKind) -> Result<()> {
    match kind {
        SplitKind::Stratified { input, seed, out } => {
            let labels = read_labels(input)?;
            write_file(out, &to_json(&stratified_splits(&labels, *seed)?))
        }
        SplitKind::Hsv {
            manifest,
            seed,
            config,
            out,
        } => {
            let config = match config {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                    serde_json::from_str::<HsvSplitConfig>(&text)
                        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
                }
                None => HsvSplitConfig::default(),
            };
            let bundle = load_bundle(manifest)?;
            let images: Vec<_> = bundle.samples.iter().map(|s| s.image.clone()).collect();
            let labels = read_labels(&LabelInput {
                labels: None,
                manifest: Some(manifest.clone()),
            })?;
            write_file(
                out,
                &to_json(&hsv_context_split(&images, &labels, *seed, &config)?),
            )
        }
    }
}

fn synth(out: &Path, samples: usize, mode: Mode, config: &ConfigArgs) -> Result<()> {
    let mut bundle = planted_bundle(&FixtureSpec {
        samples,
        ..Default::default()
    })?;
    let mode = match mode {
        Mode::Synthetic => PerturbedMode::Synthetic,
        Mode::Regenerate => PerturbedMode::Regenerate,
        Mode::Bundle => PerturbedMode::Bundle,
    };
    attach_perturbed_records(&mut bundle, &config.load()?, mode)?;
    let manifest = write_bundle(&bundle, out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Perturb {
            manifest,
            out,
            config,
        } => {
            let config = config.load()?;
            let bundle = load_bundle(&manifest)?;
            let index = write_perturbations(&bundle, &config, &out)?;
            println!("{}", index.display());
            Ok(())
        }
        Command::Metrics {
            suite,
            manifest,
            config,
            out,
            format,
        } => metrics(&suite, &manifest, &config, &out, &format),
        Command::Report {
            reports,
            format,
            out,
            combine,
            labels,
        } => report(&reports, &format, &out, combine, &labels),
        Command::Split { kind } => split(&kind),
        Command::Synth {
            out,
            samples,
            mode,
            config,
        } => synth(&out, samples, mode, &config),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on malformed arguments and 0 for --help/--version
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Usage("x".into())), 2);
        assert_eq!(
            exit_code(&io_error(
                Path::new("a"),
                std::io::ErrorKind::NotFound.into()
            )),
            3
        );
        for err in [
            Error::Validation("x".into()),
            Error::Manifest("x".into()),
            Error::Format("x".into()),
            Error::Suite("x".into()),
        ] {
            assert_eq!(exit_code(&err), 1);
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
