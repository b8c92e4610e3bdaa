//! Minting new identities along warp directions and rendering them in
//! reference styles.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use irisforge_nn::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::AttributeVector;
use crate::error::{io_err, Error, Result};
use crate::image::Image;
use crate::models::{encode_style, generate, shift_identity, ModelBundle};
use crate::seed;
use crate::toydata::{IrisSample, Manifest, MANIFEST_FILE};
use crate::warp::LatentCode;

/// Offset added to synthetic identity labels.
pub const SYNTH_ID_OFFSET: u64 = 1_000_000;
/// `|ε|` range for minted identities.
pub const MINT_EPSILON: (f64, f64) = (0.5, 1.5);
/// Sources tried per identity before giving up.
pub const MINT_ATTEMPTS: usize = 8;
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MintedIdentity {
    pub identity_id: u64,
    pub source_path: String,
    pub source_identity: u64,
    pub m: usize,
    pub epsilon: f64,
    /// `d̄ = shift(E(source), m, ε)`.
    pub code: LatentCode,
    /// Fingerprint of the bundle that minted the code.
    pub checkpoint: String,
}

/// One entry of the provenance sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub identity_id: u64,
    pub source_path: String,
    pub m: usize,
    pub epsilon: f64,
}

impl From<&MintedIdentity> for Provenance {
    fn from(id: &MintedIdentity) -> Self {
        Self { identity_id: id.identity_id, source_path: id.source_path.clone(), m: id.m, epsilon: id.epsilon }
    }
}

pub fn mint_identity(
    bundle: &ModelBundle,
    source_image: &Image,
    source: &IrisSample,
    m: usize,
    epsilon: f64,
    identity_id: u64,
) -> Result<MintedIdentity> {
    mint_with_fingerprint(bundle, &bundle.fingerprint(), source_image, source, m, epsilon, identity_id)
}

fn mint_with_fingerprint(
    bundle: &ModelBundle,
    fingerprint: &str,
    source_image: &Image,
    source: &IrisSample,
    m: usize,
    epsilon: f64,
    identity_id: u64,
) -> Result<MintedIdentity> {
    let z = LatentCode::from_f32(&bundle.encode_identities(&[source_image])?.remove(0));
    let (_, code) = shift_identity(bundle, z, m, epsilon)?;
    Ok(MintedIdentity {
        identity_id,
        source_path: source.path.clone(),
        source_identity: source.identity_id,
        m,
        epsilon,
        code,
        checkpoint: fingerprint.to_string(),
    })
}

/// `G([d̄ ‖ E_S(style image, y)])` as a `[1, S, S]` tensor in `[-1, 1]`.
pub fn synthesize_image(
    bundle: &ModelBundle,
    id: &MintedIdentity,
    style: &Image,
    y: &AttributeVector,
) -> Result<Tensor> {
    check_fingerprint(&bundle.fingerprint(), id)?;
    synthesize_unchecked(bundle, id, style, y)
}

fn check_fingerprint(fingerprint: &str, id: &MintedIdentity) -> Result<()> {
    if id.checkpoint != fingerprint {
        return Err(Error::CheckpointMismatch { expected: id.checkpoint.clone(), got: fingerprint.to_string() });
    }
    Ok(())
}

fn synthesize_unchecked(
    bundle: &ModelBundle,
    id: &MintedIdentity,
    style: &Image,
    y: &AttributeVector,
) -> Result<Tensor> {
    let s = encode_style(bundle, style, y)?;
    generate(bundle, &id.code, &s)
}

/// A generated dataset with the identities behind it.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub manifest: Manifest,
    pub identities: Vec<MintedIdentity>,
}

/// Style reference indices for one identity, with distinct attribute
/// vectors while enough remain.
fn pick_styles(source: &Manifest, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(rng);
    let mut seen = BTreeSet::new();
    let mut picks: Vec<usize> = Vec::with_capacity(count);
    for &i in &order {
        if picks.len() == count {
            break;
        }
        if seen.insert(source.samples[i].attribute) {
            picks.push(i);
        }
    }
    let mut k = 0;
    while picks.len() < count {
        picks.push(order[k % order.len()]);
        k += 1;
    }
    picks
}

/// Mint `n_identities` identities and render each in `styles_per_identity`
/// reference styles. Sources cycle through a seeded order of the source
/// manifest, warp indices round-robin and `|ε| ~ U[0.5, 1.5]` with a random
/// sign. Writes the images, `manifest.json` and `provenance.json`.
pub fn generate_dataset(
    bundle: &ModelBundle,
    source: &Manifest,
    n_identities: usize,
    styles_per_identity: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<SynthDataset> {
    if source.is_empty() {
        return Err(Error::InsufficientData("source manifest has no samples".into()));
    }
    if n_identities == 0 || styles_per_identity == 0 {
        return Err(Error::InvalidConfig("identity and style counts must be positive".into()));
    }
    if source.image_size != bundle.config.image_size {
        return Err(Error::DimMismatch { expected: bundle.config.image_size, got: source.image_size });
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let fingerprint = bundle.fingerprint();
    let images: Vec<Image> = source.samples.iter().map(|s| source.load_image(s)).collect::<Result<_>>()?;
    let mut cycle: Vec<usize> = (0..source.len()).collect();
    cycle.shuffle(&mut seed::rng(seed::derive_named(seed, "sources")));
    let num_warps = bundle.config.num_warps;

    let results: Vec<(MintedIdentity, Vec<IrisSample>)> = (0..n_identities)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = seed::rng(seed::derive(seed::derive_named(seed, "identity"), i as u64));
            let magnitude = rng.random_range(MINT_EPSILON.0..=MINT_EPSILON.1);
            let epsilon = if rng.random::<bool>() { magnitude } else { -magnitude };
            let m = i % num_warps;
            let label = SYNTH_ID_OFFSET + i as u64;
            let mut minted = None;
            let mut last_err = None;
            for attempt in 0..MINT_ATTEMPTS {
                let idx = cycle[(i + attempt * n_identities) % cycle.len()];
                match mint_with_fingerprint(bundle, &fingerprint, &images[idx], &source.samples[idx], m, epsilon, label)
                {
                    Ok(id) => {
                        minted = Some(id);
                        break;
                    }
                    Err(e @ Error::DegenerateGradient { .. }) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            let id = match minted {
                Some(id) => id,
                None => return Err(last_err.expect("at least one attempt")),
            };
            let styles = pick_styles(source, styles_per_identity, &mut rng);
            let mut samples = Vec::with_capacity(styles_per_identity);
            for (k, &j) in styles.iter().enumerate() {
                let y = source.samples[j].attribute;
                let x = synthesize_unchecked(bundle, &id, &images[j], &y)?;
                let name = format!("id{label:07}_s{k:03}.png");
                Image::from_tensor(&x).save_png(&out_dir.join(&name))?;
                samples.push(IrisSample { path: name, identity_id: label, attribute: y, pupil: None, limbus: None });
            }
            Ok((id, samples))
        })
        .collect::<Result<_>>()?;

    let mut manifest = Manifest::new(bundle.config.image_size, seed, "synth", out_dir);
    let mut identities = Vec::with_capacity(n_identities);
    for (id, samples) in results {
        manifest.samples.extend(samples);
        identities.push(id);
    }
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    let provenance: Vec<Provenance> = identities.iter().map(Provenance::from).collect();
    let path = out_dir.join(PROVENANCE_FILE);
    fs::write(&path, serde_json::to_string_pretty(&provenance)?).map_err(io_err(&path))?;
    Ok(SynthDataset { manifest, identities })
}

pub fn load_provenance(path: &Path) -> Result<Vec<Provenance>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })
}
