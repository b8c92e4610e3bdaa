//! The five networks, their configuration, inference helpers and checkpoints.

mod checkpoint;
mod classifier;
pub mod nets;

use irisforge_nn::{ParamSet, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{
    checkpoint_parameter_names, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub(crate) use classifier::pair_scores;
pub use classifier::{
    embed_images, pretrain_classifier, train_embedding, ClassifierConfig, ClassifierReport, TRIPLET_MARGIN,
};
pub use nets::{ConvEncoder, Critic, CriticOutput, Decoder, Reconstructor, WarpLayer};

use crate::attribute::{AttributeVector, ATTRIBUTE_BITS};
use crate::error::{Error, Result};
use crate::image::{batch_tensor, Image};
use crate::seed;
use crate::warp::{self, LatentCode, WarpParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub image_size: usize,
    pub latent_dim: usize,
    pub style_dim: usize,
    /// Channel width of each strided stage.
    pub channels: Vec<usize>,
    /// Output width of the feature classifier.
    pub feature_dim: usize,
    pub num_warps: usize,
    pub num_rbfs: usize,
    pub recon_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            latent_dim: 64,
            style_dim: 16,
            channels: vec![8, 16, 32, 64],
            feature_dim: 32,
            num_warps: 8,
            num_rbfs: 16,
            recon_hidden: 64,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.image_size < 64 || !self.image_size.is_power_of_two() {
            return bad(format!("image_size {} must be a power of two >= 64", self.image_size));
        }
        if self.latent_dim < 8 || self.style_dim < 8 {
            return bad(format!("latent_dim {} and style_dim {} must be >= 8", self.latent_dim, self.style_dim));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channel widths must be non-empty and positive".into());
        }
        if self.image_size >> self.channels.len() == 0 {
            return bad(format!("{} stages are too many for {} px", self.channels.len(), self.image_size));
        }
        if self.feature_dim == 0 || self.num_warps == 0 || self.num_rbfs == 0 || self.recon_hidden == 0 {
            return bad("feature_dim, num_warps, num_rbfs and recon_hidden must be positive".into());
        }
        Ok(())
    }
}

/// A network: its parameters and the layer layout indexing into them.
#[derive(Clone, Debug)]
pub struct Net<A> {
    pub params: ParamSet,
    pub arch: A,
}

#[derive(Clone, Debug)]
pub struct Warper {
    pub warp: WarpLayer,
    pub recon: Reconstructor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetKind {
    StyleEncoder,
    IdentityEncoder,
    Warper,
    Generator,
    Discriminator,
    Classifier,
}

impl NetKind {
    pub const ALL: [NetKind; 6] = [
        NetKind::StyleEncoder,
        NetKind::IdentityEncoder,
        NetKind::Warper,
        NetKind::Generator,
        NetKind::Discriminator,
        NetKind::Classifier,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            NetKind::StyleEncoder => "style_encoder",
            NetKind::IdentityEncoder => "identity_encoder",
            NetKind::Warper => "warper",
            NetKind::Generator => "generator",
            NetKind::Discriminator => "discriminator",
            NetKind::Classifier => "classifier",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub config: NetConfig,
    pub style_encoder: Net<ConvEncoder>,
    pub identity_encoder: Net<ConvEncoder>,
    pub warper: Net<Warper>,
    pub generator: Net<Decoder>,
    pub discriminator: Net<Critic>,
    pub classifier: Net<ConvEncoder>,
    pub classifier_frozen: bool,
}

pub fn build_models(cfg: &NetConfig, seed: u64) -> Result<ModelBundle> {
    cfg.validate()?;
    let s = cfg.image_size;
    let ch = &cfg.channels;
    let rng = |name: &str| seed::rng(seed::derive_named(seed, name));

    let mut ps = ParamSet::new();
    let arch = ConvEncoder::new(&mut ps, "style_encoder", s, 1 + ATTRIBUTE_BITS, ch, cfg.style_dim, &mut rng("E_S"));
    let style_encoder = Net { params: ps, arch };

    let mut ps = ParamSet::new();
    let arch = ConvEncoder::new(&mut ps, "identity_encoder", s, 1, ch, cfg.latent_dim, &mut rng("E"));
    let identity_encoder = Net { params: ps, arch };

    let mut ps = ParamSet::new();
    let warp = WarpLayer::new(
        &mut ps,
        "warper.warp",
        cfg.num_warps,
        cfg.num_rbfs,
        cfg.latent_dim,
        seed::derive_named(seed, "W"),
    );
    let recon =
        Reconstructor::new(&mut ps, "warper.recon", cfg.latent_dim, cfg.recon_hidden, cfg.num_warps, &mut rng("R"));
    let warper = Net { params: ps, arch: Warper { warp, recon } };

    let mut ps = ParamSet::new();
    let arch = Decoder::new(&mut ps, "generator", s, cfg.latent_dim + cfg.style_dim, ch, &mut rng("G"));
    let generator = Net { params: ps, arch };

    let mut ps = ParamSet::new();
    let arch = Critic::new(&mut ps, "discriminator", s, 1, ch, ATTRIBUTE_BITS, &mut rng("D"));
    let discriminator = Net { params: ps, arch };

    let mut ps = ParamSet::new();
    let arch = ConvEncoder::new(&mut ps, "classifier", s, 1, ch, cfg.feature_dim, &mut rng("C"));
    let classifier = Net { params: ps, arch };

    Ok(ModelBundle {
        config: cfg.clone(),
        style_encoder,
        identity_encoder,
        warper,
        generator,
        discriminator,
        classifier,
        classifier_frozen: false,
    })
}

impl ModelBundle {
    pub fn params(&self, kind: NetKind) -> &ParamSet {
        match kind {
            NetKind::StyleEncoder => &self.style_encoder.params,
            NetKind::IdentityEncoder => &self.identity_encoder.params,
            NetKind::Warper => &self.warper.params,
            NetKind::Generator => &self.generator.params,
            NetKind::Discriminator => &self.discriminator.params,
            NetKind::Classifier => &self.classifier.params,
        }
    }

    pub fn params_mut(&mut self, kind: NetKind) -> &mut ParamSet {
        match kind {
            NetKind::StyleEncoder => &mut self.style_encoder.params,
            NetKind::IdentityEncoder => &mut self.identity_encoder.params,
            NetKind::Warper => &mut self.warper.params,
            NetKind::Generator => &mut self.generator.params,
            NetKind::Discriminator => &mut self.discriminator.params,
            NetKind::Classifier => &mut self.classifier.params,
        }
    }

    pub fn is_finite(&self) -> bool {
        NetKind::ALL.iter().all(|&k| self.params(k).is_finite())
    }

    /// SHA-256 over the names, shapes and raw values of one network.
    pub fn network_hash(&self, kind: NetKind) -> String {
        let mut h = Sha256::new();
        hash_params(&mut h, self.params(kind));
        hex::encode(h.finalize())
    }

    /// SHA-256 identifying every parameter of the bundle.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for kind in NetKind::ALL {
            hash_params(&mut h, self.params(kind));
        }
        hex::encode(h.finalize())
    }

    /// Current warp functions in double precision.
    pub fn warp_params(&self) -> WarpParams {
        let p = &self.warper.params;
        let w = self.warper.arch.warp;
        let f64s = |t: &Tensor| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
        let scales = p.get(w.raw_scales).data().iter().map(|&v| warp::softplus(v as f64)).collect();
        WarpParams::new(w.num_warps, w.num_rbfs, w.dim, f64s(p.get(w.centers)), f64s(p.get(w.weights)), scales)
            .expect("warp parameters keep their shape and positive scales")
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let s = self.config.image_size;
        if image.width() != s || image.height() != s {
            return Err(Error::DimMismatch { expected: s, got: image.width().max(image.height()) });
        }
        Ok(())
    }

    /// Style codes `[B, d_s]` for images with their attribute vectors.
    pub fn encode_styles(&self, images: &[&Image], ys: &[AttributeVector]) -> Result<Vec<Vec<f32>>> {
        images.iter().try_for_each(|i| self.check_image(i))?;
        let tape = Tape::new();
        let p = self.style_encoder.params.bind(&tape, false);
        let x = tape.constant(batch_tensor(images));
        let ys: Vec<[f32; 12]> = ys.iter().map(|y| y.as_f32()).collect();
        let s = self.style_encoder.arch.forward(&p, nets::with_attribute_planes(&tape, x, &ys));
        Ok(rows(&s.value()))
    }

    /// Identity codes `[B, d_z]`.
    pub fn encode_identities(&self, images: &[&Image]) -> Result<Vec<Vec<f32>>> {
        images.iter().try_for_each(|i| self.check_image(i))?;
        let tape = Tape::new();
        let p = self.identity_encoder.params.bind(&tape, false);
        let z = self.identity_encoder.arch.forward(&p, tape.constant(batch_tensor(images)));
        Ok(rows(&z.value()))
    }

    /// Generated images for paired identity and style codes.
    pub fn generate_batch(&self, ds: &[Vec<f32>], ss: &[Vec<f32>]) -> Result<Vec<Image>> {
        let cfg = &self.config;
        if ds.len() != ss.len() || ds.is_empty() {
            return Err(Error::DimMismatch { expected: ds.len(), got: ss.len() });
        }
        let mut code = Vec::with_capacity(ds.len() * (cfg.latent_dim + cfg.style_dim));
        for (d, s) in ds.iter().zip(ss) {
            if d.len() != cfg.latent_dim {
                return Err(Error::DimMismatch { expected: cfg.latent_dim, got: d.len() });
            }
            if s.len() != cfg.style_dim {
                return Err(Error::DimMismatch { expected: cfg.style_dim, got: s.len() });
            }
            code.extend_from_slice(d);
            code.extend_from_slice(s);
        }
        let tape = Tape::new();
        let p = self.generator.params.bind(&tape, false);
        let code = tape.constant(Tensor::new(&[ds.len(), cfg.latent_dim + cfg.style_dim], code));
        let x = self.generator.arch.forward(&p, code).value();
        Ok((0..ds.len()).map(|i| Image::from_tensor(&x.batch_item(i))).collect())
    }

    /// Realness scores and attribute logits for images.
    pub fn discriminate(&self, images: &[&Image]) -> Result<Vec<(f32, Vec<f32>)>> {
        images.iter().try_for_each(|i| self.check_image(i))?;
        let tape = Tape::new();
        let p = self.discriminator.params.bind(&tape, false);
        let out = self.discriminator.arch.forward(&p, tape.constant(batch_tensor(images)));
        let real = out.real.value();
        Ok(rows(&out.attr.value()).into_iter().enumerate().map(|(i, a)| (real.data()[i], a)).collect())
    }

    /// L2-normalized classifier features.
    pub fn features(&self, images: &[&Image]) -> Result<Vec<Vec<f32>>> {
        images.iter().try_for_each(|i| self.check_image(i))?;
        Ok(embed_images(&self.classifier, images))
    }
}

fn hash_params(h: &mut Sha256, ps: &ParamSet) {
    for (name, t) in ps.iter() {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
}

pub(crate) fn rows(t: &Tensor) -> Vec<Vec<f32>> {
    let n = t.shape()[0];
    let f = t.len() / n.max(1);
    t.data().chunks(f).map(<[f32]>::to_vec).collect()
}

/// Style code of one image under attribute `y`.
pub fn encode_style(bundle: &ModelBundle, image: &Image, y: &AttributeVector) -> Result<Vec<f32>> {
    Ok(bundle.encode_styles(&[image], std::slice::from_ref(y))?.remove(0))
}

/// `(z, z̄)` for one image: `z = E(image)` shifted along warp `m` by `ε`.
/// `ε = 0` bypasses the warp and returns `z̄ = z`.
pub fn encode_identity(
    bundle: &ModelBundle,
    image: &Image,
    m: usize,
    epsilon: f64,
) -> Result<(LatentCode, LatentCode)> {
    let z = LatentCode::from_f32(&bundle.encode_identities(&[image])?.remove(0));
    shift_identity(bundle, z, m, epsilon)
}

pub fn shift_identity(bundle: &ModelBundle, z: LatentCode, m: usize, epsilon: f64) -> Result<(LatentCode, LatentCode)> {
    if m >= bundle.config.num_warps {
        return Err(Error::IndexOutOfRange { index: m, len: bundle.config.num_warps });
    }
    if epsilon == 0.0 {
        return Ok((z.clone(), z));
    }
    let z_bar = warp::shift_code(&bundle.warp_params(), m, &z, epsilon)?;
    Ok((z, z_bar))
}

/// `G([d ‖ s])`: a `[1, S, S]` tensor in `[-1, 1]`.
pub fn generate(bundle: &ModelBundle, d: &LatentCode, s: &[f32]) -> Result<Tensor> {
    let cfg = &bundle.config;
    if d.dim() != cfg.latent_dim {
        return Err(Error::DimMismatch { expected: cfg.latent_dim, got: d.dim() });
    }
    if s.len() != cfg.style_dim {
        return Err(Error::DimMismatch { expected: cfg.style_dim, got: s.len() });
    }
    let tape = Tape::new();
    let p = bundle.generator.params.bind(&tape, false);
    let mut code = d.to_f32();
    code.extend_from_slice(s);
    let code: Var = tape.constant(Tensor::new(&[1, code.len()], code));
    let x = bundle.generator.arch.forward(&p, code).value();
    Ok((*x).clone().reshape(&[1, cfg.image_size, cfg.image_size]))
}

/// [`generate`] rescaled to an image in `[0, 1]`.
pub fn generate_image(bundle: &ModelBundle, d: &LatentCode, s: &[f32]) -> Result<Image> {
    Ok(bundle.generate_batch(&[d.to_f32()], &[s.to_vec()])?.remove(0))
}
