//! Alternating style/identity pathway training.

pub mod losses;
mod steps;

use std::fmt::Write as _;
use std::path::Path;

use irisforge_nn::{Adam, AdamConfig};
use serde::{Deserialize, Serialize};

pub use losses::{
    adversarial_losses, attribute_loss, clamp_push, gradient_penalty, identity_push_losses, interpolate,
    style_recon_loss, warp_regression_loss, ConstantCritic, InputGradient, LinearCritic, NetCritic, IDENTITY_CLAMP,
};
pub use steps::{identity_pathway_step, style_pathway_step, BatchPair};

use crate::attribute::AttributeVector;
use crate::error::{io_err, Error, Result};
use crate::image::Image;
use crate::models::{save_checkpoint, ModelBundle, NetKind};
use crate::seed;
use crate::toydata::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub style_encoder: f32,
    pub identity_encoder: f32,
    pub warper: f32,
    pub generator: f32,
    pub discriminator: f32,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { style_encoder: 2e-4, identity_encoder: 2e-4, warper: 2e-4, generator: 2e-4, discriminator: 2e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: LearningRates,
    pub beta1: f32,
    pub beta2: f32,
    pub lambda_sty: f32,
    pub lambda_id_recon: f32,
    pub lambda_id_cls: f32,
    pub lambda_attr: f32,
    pub lambda_gp: f32,
    pub lambda_eps: f32,
    /// `|ε|` range for identity-pathway shifts; `(0, 0)` disables the warp.
    pub epsilon_range: (f64, f64),
    /// Cap on each identity-push term.
    pub identity_clamp: f32,
    /// Style steps then identity steps per cycle.
    pub interleave: (usize, usize),
    /// Redraws of `(m, ε)` when the warp gradient is degenerate.
    pub max_resamples: usize,
    /// Write an intermediate checkpoint every this many steps (0 = never).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            steps: 2000,
            lr: LearningRates::default(),
            beta1: 0.5,
            beta2: 0.999,
            lambda_sty: 1.0,
            lambda_id_recon: 1.0,
            lambda_id_cls: 1.0,
            lambda_attr: 1.0,
            lambda_gp: 10.0,
            lambda_eps: 1.0,
            epsilon_range: (0.2, 1.0),
            identity_clamp: IDENTITY_CLAMP as f32,
            interleave: (1, 1),
            max_resamples: 8,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let lr = self.lr;
        if [lr.style_encoder, lr.identity_encoder, lr.warper, lr.generator, lr.discriminator]
            .iter()
            .any(|&r| !(r > 0.0))
        {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        let weights = [
            self.lambda_sty,
            self.lambda_id_recon,
            self.lambda_id_cls,
            self.lambda_attr,
            self.lambda_gp,
            self.lambda_eps,
        ];
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return bad("loss weights must be finite and non-negative");
        }
        let (lo, hi) = self.epsilon_range;
        let off = lo == 0.0 && hi == 0.0;
        if !off && !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("epsilon_range must satisfy 0 < min <= max, or be (0, 0)");
        }
        if !(self.identity_clamp > 0.0) {
            return bad("identity_clamp must be positive");
        }
        if self.interleave.0 + self.interleave.1 == 0 {
            return bad("interleave needs at least one step per cycle");
        }
        Ok(())
    }

    fn adam(&self, lr: f32) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }

    pub fn pathway(&self, step: usize) -> Pathway {
        let (a, b) = self.interleave;
        if step % (a + b) < a {
            Pathway::Style
        } else {
            Pathway::Identity
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Style,
    Identity,
}

impl Pathway {
    pub fn as_str(self) -> &'static str {
        match self {
            Pathway::Style => "style",
            Pathway::Identity => "identity",
        }
    }
}

/// Loss values of one step; terms of the other pathway are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub g_sty: Option<f64>,
    pub d_sty: Option<f64>,
    pub sty_recon: Option<f64>,
    pub g_id: Option<f64>,
    pub d_id: Option<f64>,
    pub w_reg: Option<f64>,
    pub ident_recon: Option<f64>,
    pub ident_cls: Option<f64>,
    pub attribute: Option<f64>,
    pub gp: Option<f64>,
    /// Samples dropped for a degenerate warp gradient.
    pub skipped: usize,
}

pub const LOSS_NAMES: [&str; 10] = [
    "L_G-Sty",
    "L_D-Sty",
    "L_Sty-Recon",
    "L_G-ID",
    "L_D-ID",
    "L_W-Reg",
    "L_Ident-Recon",
    "L_Ident-Cls",
    "attribute",
    "gp",
];

impl LossRecord {
    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.g_sty,
            self.d_sty,
            self.sty_recon,
            self.g_id,
            self.d_id,
            self.w_reg,
            self.ident_recon,
            self.ident_cls,
            self.attribute,
            self.gp,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().flatten().all(|v| v.is_finite())
    }
}

pub fn loss_csv_header() -> String {
    format!("step,pathway,{}", LOSS_NAMES.join(","))
}

pub fn loss_csv_row(step: usize, pathway: Pathway, r: &LossRecord) -> String {
    let mut s = format!("{step},{}", pathway.as_str());
    for v in r.values() {
        s.push(',');
        if let Some(v) = v {
            write!(s, "{v}").expect("write to string");
        }
    }
    s
}

/// Per-network optimizer state; the classifier has none.
#[derive(Clone, Debug)]
pub struct Optimizers {
    pub style_encoder: Adam,
    pub identity_encoder: Adam,
    pub warper: Adam,
    pub generator: Adam,
    pub discriminator: Adam,
}

impl Optimizers {
    pub fn new(bundle: &ModelBundle, cfg: &TrainConfig) -> Self {
        Self {
            style_encoder: Adam::new(cfg.adam(cfg.lr.style_encoder), bundle.params(NetKind::StyleEncoder)),
            identity_encoder: Adam::new(cfg.adam(cfg.lr.identity_encoder), bundle.params(NetKind::IdentityEncoder)),
            warper: Adam::new(cfg.adam(cfg.lr.warper), bundle.params(NetKind::Warper)),
            generator: Adam::new(cfg.adam(cfg.lr.generator), bundle.params(NetKind::Generator)),
            discriminator: Adam::new(cfg.adam(cfg.lr.discriminator), bundle.params(NetKind::Discriminator)),
        }
    }
}

/// Training images held in memory.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub images: Vec<Image>,
    pub attributes: Vec<AttributeVector>,
}

impl TrainData {
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        if manifest.is_empty() {
            return Err(Error::InsufficientData("training manifest has no samples".into()));
        }
        let images = manifest.samples.iter().map(|s| manifest.load_image(s)).collect::<Result<Vec<_>>>()?;
        let attributes = manifest.samples.iter().map(|s| s.attribute).collect();
        Ok(Self { images, attributes })
    }

    /// Random source and style-reference pairs for one step.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut impl rand::Rng) -> BatchPair<'_> {
        let n = self.images.len();
        let mut batch = BatchPair::default();
        for _ in 0..batch_size {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            batch.sources.push(&self.images[i]);
            batch.references.push(&self.images[j]);
            batch.attributes.push(self.attributes[j]);
        }
        batch
    }
}

/// Bundle, optimizers and data advancing one step at a time.
pub struct Trainer {
    pub bundle: ModelBundle,
    pub config: TrainConfig,
    pub optimizers: Optimizers,
    pub data: TrainData,
    step: usize,
}

impl Trainer {
    pub fn new(bundle: ModelBundle, config: TrainConfig, manifest: &Manifest) -> Result<Self> {
        config.validate()?;
        if !bundle.classifier_frozen {
            return Err(Error::InvalidConfig("the classifier must be pretrained and frozen before training".into()));
        }
        if manifest.image_size != bundle.config.image_size {
            return Err(Error::DimMismatch { expected: bundle.config.image_size, got: manifest.image_size });
        }
        let data = TrainData::from_manifest(manifest)?;
        let optimizers = Optimizers::new(&bundle, &config);
        Ok(Self { bundle, config, optimizers, data, step: 0 })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Run the next scheduled pathway step.
    pub fn step(&mut self) -> Result<(Pathway, LossRecord)> {
        let step = self.step;
        let pathway = self.config.pathway(step);
        let mut rng = seed::rng(seed::derive(seed::derive_named(self.config.seed, "step"), step as u64));
        let batch = self.data.sample_batch(self.config.batch_size, &mut rng);
        let record = match pathway {
            Pathway::Style => {
                style_pathway_step(&mut self.bundle, &batch, &self.config, &mut self.optimizers, &mut rng, step)?
            }
            Pathway::Identity => {
                identity_pathway_step(&mut self.bundle, &batch, &self.config, &mut self.optimizers, &mut rng, step)?
            }
        };
        self.step += 1;
        Ok((pathway, record))
    }
}

pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub records: Vec<(Pathway, LossRecord)>,
}

pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const FINAL_CHECKPOINT_FILE: &str = "checkpoint.bin";

pub fn train(
    cfg: &TrainConfig,
    manifest: &Manifest,
    bundle: ModelBundle,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_with_progress(cfg, manifest, bundle, out_dir, |_, _, _| {})
}

/// Run `cfg.steps` steps. With an output directory, writes the config
/// JSON, the loss log CSV, periodic checkpoints and a final checkpoint.
pub fn train_with_progress(
    cfg: &TrainConfig,
    manifest: &Manifest,
    bundle: ModelBundle,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(usize, Pathway, &LossRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(bundle, cfg.clone(), manifest)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(TRAIN_CONFIG_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(cfg)?).map_err(io_err(&path))?;
    }
    let mut log = loss_csv_header();
    log.push('\n');
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (pathway, record) = trainer.step()?;
        log.push_str(&loss_csv_row(step, pathway, &record));
        log.push('\n');
        progress(step, pathway, &record);
        records.push((pathway, record));
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                save_checkpoint(&trainer.bundle, &dir.join(format!("checkpoint_step{:06}.bin", step + 1)))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        let path = dir.join(LOSS_LOG_FILE);
        std::fs::write(&path, log).map_err(io_err(&path))?;
        save_checkpoint(&trainer.bundle, &dir.join(FINAL_CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome { bundle: trainer.bundle, records })
}
