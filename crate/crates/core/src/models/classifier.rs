//! Triplet-trained embedding network used as the frozen feature classifier
//! and as the recognition model of the utility experiment.

use std::collections::BTreeMap;

use irisforge_nn::{Adam, AdamConfig, Tape};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nets::{l2_normalize, ConvEncoder};
use super::{rows, ModelBundle, Net};
use crate::error::{Error, Result};
use crate::image::{batch_tensor, Image};
use crate::metrics;
use crate::seed;
use crate::toydata::Manifest;

pub const TRIPLET_MARGIN: f32 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub steps: usize,
    /// Triplets per step.
    pub batch_size: usize,
    pub lr: f32,
    pub margin: f32,
    /// Images per identity held out for the verification report.
    pub holdout_per_identity: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { steps: 400, batch_size: 16, lr: 1e-3, margin: TRIPLET_MARGIN, holdout_per_identity: 2 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.margin >= 0.0) {
            return Err(Error::InvalidConfig("classifier batch_size, lr and margin must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub steps: usize,
    pub final_loss: f64,
    pub holdout_images: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    /// Mean squared feature distance of genuine held-out pairs.
    pub genuine_mean_distance: f64,
    pub impostor_mean_distance: f64,
    /// Verification TAR at FAR = 10% with cosine similarity scores.
    pub tar_at_far_10: f64,
}

/// L2-normalized embeddings, computed in chunks.
pub fn embed_images(net: &Net<ConvEncoder>, images: &[&Image]) -> Vec<Vec<f32>> {
    images
        .chunks(64)
        .flat_map(|chunk| {
            let tape = Tape::new();
            let p = net.params.bind(&tape, false);
            let f = l2_normalize(net.arch.forward(&p, tape.constant(batch_tensor(chunk))));
            rows(&f.value())
        })
        .collect()
}

/// Train `net` with random triplets: anchor and positive share a label, the
/// negative does not. Returns the per-step losses.
pub fn train_embedding(
    net: &mut Net<ConvEncoder>,
    images: &[&Image],
    labels: &[u64],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if images.len() != labels.len() {
        return Err(Error::DimMismatch { expected: images.len(), got: labels.len() });
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let ids: Vec<u64> = groups.keys().copied().collect();
    let anchors: Vec<u64> = groups.iter().filter(|(_, v)| v.len() >= 2).map(|(&k, _)| k).collect();
    if ids.len() < 2 || anchors.is_empty() {
        return Err(Error::InsufficientData(
            "triplet training needs two identities and one identity with two images".into(),
        ));
    }
    let mut rng = seed::rng(seed::derive_named(seed, "triplets"));
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &net.params);
    let mut losses = Vec::with_capacity(cfg.steps);
    let b = cfg.batch_size;
    for _ in 0..cfg.steps {
        let mut picks = [Vec::with_capacity(b), Vec::with_capacity(b), Vec::with_capacity(b)];
        for _ in 0..b {
            let a_id = *anchors.choose(&mut rng).expect("non-empty");
            let members = &groups[&a_id];
            let ai = rng.random_range(0..members.len());
            let pi = (ai + rng.random_range(1..members.len())) % members.len();
            let n_id = loop {
                let id = *ids.choose(&mut rng).expect("non-empty");
                if id != a_id {
                    break id;
                }
            };
            let negs = &groups[&n_id];
            picks[0].push(images[members[ai]]);
            picks[1].push(images[members[pi]]);
            picks[2].push(images[*negs.choose(&mut rng).expect("non-empty")]);
        }
        let batch: Vec<&Image> = picks.concat();
        let tape = Tape::new();
        let p = net.params.bind(&tape, true);
        let f = l2_normalize(net.arch.forward(&p, tape.constant(batch_tensor(&batch))));
        let (a, pos, neg) = (f.narrow(0, 0, b), f.narrow(0, b, b), f.narrow(0, 2 * b, b));
        let dp = a.sub(pos).square().sum_rows();
        let dn = a.sub(neg).square().sum_rows();
        let loss = dp.sub(dn).add_scalar(cfg.margin).relu().mean();
        let value = loss.value().item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFinite { name: "triplet".into(), step: losses.len() });
        }
        let grads = p.grads(&tape.backward(loss));
        opt.step(&mut net.params, &grads);
        losses.push(value);
    }
    Ok(losses)
}

/// Genuine and impostor cosine scores plus squared distances over every pair.
pub(crate) fn pair_scores(features: &[Vec<f32>], labels: &[u64]) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let (mut gen, mut imp) = (Vec::new(), Vec::new());
    let (mut gd, mut id) = (Vec::new(), Vec::new());
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let dot: f64 = features[i].iter().zip(&features[j]).map(|(&a, &b)| a as f64 * b as f64).sum();
            let dist: f64 = features[i].iter().zip(&features[j]).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            if labels[i] == labels[j] {
                gen.push(dot);
                gd.push(dist);
            } else {
                imp.push(dot);
                id.push(dist);
            }
        }
    }
    (gen, imp, metrics::mean(&gd), metrics::mean(&id))
}

/// Train the bundle's classifier on the real training identities and
/// freeze it. The last `holdout_per_identity` images of each identity are
/// kept out of training and scored for the report.
pub fn pretrain_classifier(
    bundle: &mut ModelBundle,
    train: &Manifest,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<ClassifierReport> {
    cfg.validate()?;
    let groups = train.by_identity();
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!("{} identities, need at least 2", groups.len())));
    }
    let images: Vec<Image> = train.samples.iter().map(|s| train.load_image(s)).collect::<Result<_>>()?;
    let labels: Vec<u64> = train.samples.iter().map(|s| s.identity_id).collect();
    let mut fit = Vec::new();
    let mut held = Vec::new();
    for members in groups.values() {
        let keep = members.len().saturating_sub(cfg.holdout_per_identity).max(2.min(members.len()));
        fit.extend_from_slice(&members[..keep]);
        held.extend_from_slice(&members[keep..]);
    }
    let fit_images: Vec<&Image> = fit.iter().map(|&i| &images[i]).collect();
    let fit_labels: Vec<u64> = fit.iter().map(|&i| labels[i]).collect();
    let losses = train_embedding(&mut bundle.classifier, &fit_images, &fit_labels, cfg, seed)?;
    bundle.classifier_frozen = true;

    let eval: Vec<usize> = if held.len() >= 2 { held } else { fit };
    let eval_images: Vec<&Image> = eval.iter().map(|&i| &images[i]).collect();
    let eval_labels: Vec<u64> = eval.iter().map(|&i| labels[i]).collect();
    let features = embed_images(&bundle.classifier, &eval_images);
    let (gen, imp, gd, id) = pair_scores(&features, &eval_labels);
    let tail = losses.len().min(20);
    Ok(ClassifierReport {
        steps: losses.len(),
        final_loss: metrics::mean(&losses[losses.len() - tail..]),
        holdout_images: eval_images.len(),
        genuine_pairs: gen.len(),
        impostor_pairs: imp.len(),
        genuine_mean_distance: gd,
        impostor_mean_distance: id,
        tar_at_far_10: metrics::tar_at_far(&gen, &imp, 0.1),
    })
}
