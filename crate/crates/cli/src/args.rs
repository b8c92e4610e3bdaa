//! Command-line grammar. Every flag is optional so a config file can supply it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "irisforge", version, about = "Iris image synthesis with identity minting and evaluation")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap (falls back to IRISFORGE_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a toy iris dataset.
    MakeToy(MakeToyArgs),
    /// Train and freeze the identity feature classifier.
    PretrainClassifier(PretrainArgs),
    /// Train the generator with alternating style and identity steps.
    Train(TrainArgs),
    /// Mint identities and render a synthetic dataset.
    Generate(GenerateArgs),
    /// Score image quality and the rejection rate.
    EvalQuality(QualityArgs),
    /// Compare match-score distributions of real and synthetic data.
    EvalUniqueness(UniquenessArgs),
    /// Verification with and without synthetic training data.
    EvalUtility(UtilityArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        o.set("seed", &self.seed).set("out", &self.out);
        o
    }
}

#[derive(Debug, Args)]
pub struct MakeToyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ids: Option<usize>,
    #[arg(long)]
    pub styles: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Pretrained bundle to start from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Manifest of source images.
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub ids: Option<usize>,
    #[arg(long)]
    pub styles: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct UniquenessArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long)]
    pub provenance: Option<PathBuf>,
    #[arg(long)]
    pub pair_budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UtilityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long)]
    pub real_train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Embedding training steps per arm.
    #[arg(long)]
    pub steps: Option<usize>,
}

impl MakeToyArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("ids", &self.ids).set("styles", &self.styles).set("size", &self.size);
        o
    }
}

impl PretrainArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("manifest", &self.manifest).set("classifier.steps", &self.steps).set("net.image_size", &self.image_size);
        o
    }
}

impl TrainArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("manifest", &self.manifest)
            .set("checkpoint", &self.checkpoint)
            .set("train.steps", &self.steps)
            .set("train.batch_size", &self.batch_size)
            .set("train.checkpoint_every", &self.checkpoint_every);
        o
    }
}

impl GenerateArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("checkpoint", &self.checkpoint)
            .set("source", &self.source)
            .set("ids", &self.ids)
            .set("styles", &self.styles);
        o
    }
}

impl QualityArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("manifest", &self.manifest).set("label", &self.label);
        o
    }
}

impl UniquenessArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("real", &self.real)
            .set("synth", &self.synth)
            .set("provenance", &self.provenance)
            .set("pair_budget", &self.pair_budget);
        o
    }
}

impl UtilityArgs {
    pub fn overrides(&self) -> Overrides {
        let mut o = self.common.overrides();
        o.set("synth", &self.synth)
            .set("real_train", &self.real_train)
            .set("test", &self.test)
            .set("real", &self.real)
            .set("train_fraction", &self.train_fraction)
            .set("utility.embedding.steps", &self.steps);
        o
    }
}
