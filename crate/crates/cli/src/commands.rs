//! One function per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use irisforge::eval::{quality_experiment, uniqueness_experiment, utility_experiment};
use irisforge::models::{build_models, load_checkpoint, pretrain_classifier, save_checkpoint, ModelBundle};
use irisforge::synthesis::{generate_dataset, load_provenance, PROVENANCE_FILE};
use irisforge::toydata::{build_toy_dataset_with, load_manifest, split_dataset, Manifest};
use irisforge::training::{train_with_progress, FINAL_CHECKPOINT_FILE};
use serde::Serialize;

use crate::args::{Cli, Command};
use crate::config::*;
use crate::CliError;

pub const PRETRAINED_FILE: &str = "pretrained.bin";
pub const CLASSIFIER_REPORT_FILE: &str = "classifier_report.json";
pub const QUALITY_SUMMARY_FILE: &str = "quality_summary.json";

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn manifest(path: &Path) -> Result<Manifest, CliError> {
    require(path)?;
    Ok(load_manifest(path)?)
}

fn checkpoint(path: &Path) -> Result<ModelBundle, CliError> {
    require(path)?;
    Ok(load_checkpoint(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(irisforge::Error::from)?;
    std::fs::write(path, text).map_err(|e| CliError::Runtime(irisforge::error::io_err(path)(e)))
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::MakeToy(a) => make_toy(&resolve(file, &a.overrides())?),
        Command::PretrainClassifier(a) => pretrain(&resolve(file, &a.overrides())?),
        Command::Train(a) => train(resolve(file, &a.overrides())?),
        Command::Generate(a) => generate(&resolve(file, &a.overrides())?),
        Command::EvalQuality(a) => eval_quality(&resolve(file, &a.overrides())?),
        Command::EvalUniqueness(a) => eval_uniqueness(&resolve(file, &a.overrides())?),
        Command::EvalUtility(a) => eval_utility(&resolve(file, &a.overrides())?),
    }
}

pub fn make_toy(cfg: &MakeToyConfig) -> Result<(), CliError> {
    write_snapshot(&cfg.out, cfg)?;
    let m = build_toy_dataset_with(cfg.ids, cfg.styles, cfg.size, cfg.seed, &cfg.out, &cfg.toy)?;
    eprintln!("wrote {} images to {}", m.len(), cfg.out.display());
    Ok(())
}

pub fn pretrain(cfg: &PretrainConfig) -> Result<(), CliError> {
    cfg.net.validate()?;
    cfg.classifier.validate()?;
    let data = manifest(&cfg.manifest)?;
    write_snapshot(&cfg.out, cfg)?;
    let mut bundle = build_models(&cfg.net, cfg.seed)?;
    let report = pretrain_classifier(&mut bundle, &data, &cfg.classifier, cfg.seed)?;
    save_checkpoint(&bundle, &cfg.out.join(PRETRAINED_FILE))?;
    write_json(&cfg.out.join(CLASSIFIER_REPORT_FILE), &report)?;
    print_json(&report);
    Ok(())
}

pub fn train(mut cfg: TrainRunConfig) -> Result<(), CliError> {
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;
    let data = manifest(&cfg.manifest)?;
    let bundle = checkpoint(&cfg.checkpoint)?;
    write_snapshot(&cfg.out, &cfg)?;
    let every = (cfg.train.steps / 20).max(1);
    let outcome = train_with_progress(&cfg.train, &data, bundle, Some(&cfg.out), |step, pathway, _| {
        if (step + 1) % every == 0 {
            eprintln!("step {}/{} ({pathway:?})", step + 1, cfg.train.steps);
        }
    })?;
    eprintln!("wrote {}", cfg.out.join(FINAL_CHECKPOINT_FILE).display());
    let _ = writeln!(std::io::stdout().lock(), "{}", outcome.bundle.fingerprint());
    Ok(())
}

pub fn generate(cfg: &GenerateConfig) -> Result<(), CliError> {
    let bundle = checkpoint(&cfg.checkpoint)?;
    let source = manifest(&cfg.source)?;
    write_snapshot(&cfg.out, cfg)?;
    let ds = generate_dataset(&bundle, &source, cfg.ids, cfg.styles, cfg.seed, &cfg.out)?;
    eprintln!("wrote {} images for {} identities to {}", ds.manifest.len(), ds.identities.len(), cfg.out.display());
    Ok(())
}

#[derive(Serialize)]
struct QualitySummary<'a> {
    images: usize,
    failures: usize,
    code_failures: usize,
    rejection_rate: f64,
    histogram: &'a [usize],
}

pub fn eval_quality(cfg: &QualityConfig) -> Result<(), CliError> {
    let data = manifest(&cfg.manifest)?;
    write_snapshot(&cfg.out, cfg)?;
    let q = quality_experiment(&data, Some(&cfg.out), &cfg.label)?;
    let summary = QualitySummary {
        images: q.reports.len(),
        failures: q.failures,
        code_failures: q.code_failures,
        rejection_rate: q.rejection_rate,
        histogram: &q.histogram,
    };
    write_json(&cfg.out.join(QUALITY_SUMMARY_FILE), &summary)?;
    print_json(&summary);
    Ok(())
}

pub fn eval_uniqueness(cfg: &UniquenessConfig) -> Result<(), CliError> {
    let real = manifest(&cfg.real)?;
    let synth = manifest(&cfg.synth)?;
    let provenance_path: PathBuf = match &cfg.provenance {
        Some(p) => p.clone(),
        None => cfg.synth.parent().unwrap_or(Path::new(".")).join(PROVENANCE_FILE),
    };
    require(&provenance_path)?;
    let provenance = load_provenance(&provenance_path)?;
    write_snapshot(&cfg.out, cfg)?;
    let u = uniqueness_experiment(&real, &synth, &provenance, cfg.pair_budget, cfg.seed, Some(&cfg.out))?;
    print_json(&u.summary);
    Ok(())
}

pub fn eval_utility(cfg: &UtilityRunConfig) -> Result<(), CliError> {
    let synth = manifest(&cfg.synth)?;
    let (train, test) = match (&cfg.real_train, &cfg.test, &cfg.real) {
        (Some(train), Some(test), _) => (manifest(train)?, manifest(test)?),
        (None, None, Some(real)) => split_dataset(&manifest(real)?, cfg.train_fraction, cfg.seed)?,
        _ => return Err(CliError::Usage("give either --real-train and --test, or --real".into())),
    };
    write_snapshot(&cfg.out, cfg)?;
    let report = utility_experiment(&train, &synth, &test, &cfg.utility, cfg.seed, Some(&cfg.out))?;
    print_json(&report);
    Ok(())
}
