//! Quality, uniqueness and recognition-utility experiments.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::image::Image;
use crate::irisproc::{self, assess_quality, match_codes, IrisCode, QualityReport, FAILURE_SCORE};
use crate::metrics::{self, RocPoint};
use crate::models::{build_models, embed_images, train_embedding, ClassifierConfig, NetConfig};
use crate::seed;
use crate::synthesis::Provenance;
use crate::toydata::Manifest;

/// Default number of pairs drawn per score distribution.
pub const PAIR_BUDGET: usize = 2000;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Counts of `scores` in `bins` equal-width bins over `[lo, hi]`; values
/// outside the range fall into the first or last bin.
pub fn histogram(scores: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if !(hi > lo) {
        return Err(Error::InvalidConfig(format!("histogram range [{lo}, {hi}] is empty")));
    }
    let mut counts = vec![0; bins];
    for &s in scores {
        let t = ((s - lo) / (hi - lo) * bins as f64).floor();
        let b = if t.is_nan() { 0 } else { (t.max(0.0) as usize).min(bins - 1) };
        counts[b] += 1;
    }
    Ok(counts)
}

/// Write `lower,upper,count` rows for [`histogram`].
pub fn emit_histogram(scores: &[f64], bins: usize, lo: f64, hi: f64, path: &Path) -> Result<Vec<usize>> {
    let counts = histogram(scores, bins, lo, hi)?;
    let w = (hi - lo) / bins as f64;
    let mut s = String::from("lower,upper,count\n");
    for (i, c) in counts.iter().enumerate() {
        writeln!(s, "{},{},{c}", lo + i as f64 * w, lo + (i + 1) as f64 * w).expect("write to string");
    }
    write_file(path, s)?;
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityOutcome {
    pub reports: Vec<(String, QualityReport)>,
    /// Counts over `[0, 100]` in `bins` bins.
    pub histogram: Vec<usize>,
    /// Images scoring 255.
    pub failures: usize,
    /// Images that scored but gave no usable iris code.
    pub code_failures: usize,
    pub rejection_rate: f64,
}

pub const QUALITY_BINS: usize = 20;

/// Score every image, and write `quality.csv` plus `hist_<label>.csv`
/// (with a final 255 bucket) when `out_dir` is given.
pub fn quality_experiment(manifest: &Manifest, out_dir: Option<&Path>, label: &str) -> Result<QualityOutcome> {
    if manifest.is_empty() {
        return Err(Error::InsufficientData("empty manifest".into()));
    }
    let scored: Vec<(String, QualityReport, bool)> = manifest
        .samples
        .par_iter()
        .map(|s| -> Result<_> {
            let img = manifest.load_image(s)?;
            let report = assess_quality(&img);
            let code_ok = report.is_failure() || irisproc::extract_code(&img).is_ok();
            Ok((s.path.clone(), report, code_ok))
        })
        .collect::<Result<_>>()?;
    let failures = scored.iter().filter(|(_, r, _)| r.is_failure()).count();
    let code_failures = scored.iter().filter(|(_, _, ok)| !ok).count();
    let values: Vec<f64> =
        scored.iter().filter(|(_, r, _)| !r.is_failure()).map(|(_, r, _)| r.overall as f64).collect();
    let hist = histogram(&values, QUALITY_BINS, 0.0, 100.0)?;
    let reports: Vec<(String, QualityReport)> = scored.into_iter().map(|(p, r, _)| (p, r)).collect();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        irisproc::write_quality_csv(&dir.join("quality.csv"), &reports)?;
        let w = 100.0 / QUALITY_BINS as f64;
        let mut s = String::from("lower,upper,count\n");
        for (i, c) in hist.iter().enumerate() {
            writeln!(s, "{},{},{c}", i as f64 * w, (i + 1) as f64 * w).expect("write to string");
        }
        writeln!(s, "{FAILURE_SCORE},{FAILURE_SCORE},{failures}").expect("write to string");
        write_file(&dir.join(format!("hist_{label}.csv")), s)?;
    }
    Ok(QualityOutcome {
        rejection_rate: (failures + code_failures) as f64 / reports.len() as f64,
        reports,
        histogram: hist,
        failures,
        code_failures,
    })
}

/// Scores of the four pair distributions plus the synthetic-vs-source pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchScoreSet {
    pub genuine_real: Vec<f64>,
    pub impostor_real: Vec<f64>,
    pub synth_vs_source: Vec<f64>,
    pub synth_genuine: Vec<f64>,
    pub synth_impostor: Vec<f64>,
}

impl MatchScoreSet {
    pub fn named(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("genuine_real", &self.genuine_real),
            ("impostor_real", &self.impostor_real),
            ("synth_vs_source", &self.synth_vs_source),
            ("synth_genuine", &self.synth_genuine),
            ("synth_impostor", &self.synth_impostor),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessSummary {
    pub distributions: BTreeMap<String, DistributionSummary>,
    /// Images whose iris code could not be extracted.
    pub real_code_failures: usize,
    pub synth_code_failures: usize,
    /// Pairs without jointly valid bits.
    pub no_overlap_pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessOutcome {
    pub scores: MatchScoreSet,
    pub summary: UniquenessSummary,
}

fn extract_codes(manifest: &Manifest) -> Result<Vec<Option<IrisCode>>> {
    manifest.samples.par_iter().map(|s| Ok(irisproc::extract_code(&manifest.load_image(s)?).ok())).collect()
}

/// All index pairs within (`same = true`) or across groups.
fn candidate_pairs(labels: &[u64], same: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if (labels[i] == labels[j]) == same {
                out.push((i, j));
            }
        }
    }
    out
}

/// Up to `budget` pairs, drawn without replacement.
fn budgeted<T: Copy>(mut pairs: Vec<T>, budget: usize, rng: &mut impl Rng) -> Vec<T> {
    if pairs.len() > budget {
        pairs.shuffle(rng);
        pairs.truncate(budget);
    }
    pairs
}

fn score_pairs(a: &[Option<IrisCode>], b: &[Option<IrisCode>], pairs: &[(usize, usize)]) -> (Vec<f64>, usize) {
    let scored: Vec<Option<f64>> = pairs
        .par_iter()
        .filter_map(|&(i, j)| match (&a[i], &b[j]) {
            (Some(x), Some(y)) => Some(match_codes(x, y).ok()),
            _ => None,
        })
        .collect();
    let missing = scored.iter().filter(|s| s.is_none()).count();
    (scored.into_iter().flatten().collect(), missing)
}

fn canonical(manifest: &Manifest, path: &str) -> PathBuf {
    let p = manifest.root.join(path);
    p.canonicalize().unwrap_or(p)
}

/// Genuine and impostor match scores within the real and synthetic sets,
/// and between each synthetic image and its source image.
pub fn uniqueness_experiment(
    real: &Manifest,
    synth: &Manifest,
    provenance: &[Provenance],
    pair_budget: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<UniquenessOutcome> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::InsufficientData("uniqueness needs non-empty real and synthetic manifests".into()));
    }
    let real_codes = extract_codes(real)?;
    let synth_codes = extract_codes(synth)?;
    let real_labels: Vec<u64> = real.samples.iter().map(|s| s.identity_id).collect();
    let synth_labels: Vec<u64> = synth.samples.iter().map(|s| s.identity_id).collect();

    let by_path: HashMap<PathBuf, usize> =
        real.samples.iter().enumerate().map(|(i, s)| (canonical(real, &s.path), i)).collect();
    let source_of: HashMap<u64, usize> = provenance
        .iter()
        .filter_map(|p| {
            let idx = real
                .samples
                .iter()
                .position(|s| s.path == p.source_path)
                .or_else(|| by_path.get(&canonical(real, &p.source_path)).copied())?;
            Some((p.identity_id, idx))
        })
        .collect();
    if source_of.is_empty() {
        return Err(Error::InsufficientData("no provenance entry resolves to a real sample".into()));
    }
    let source_pairs: Vec<(usize, usize)> =
        synth_labels.iter().enumerate().filter_map(|(k, id)| source_of.get(id).map(|&r| (k, r))).collect();

    let pick = |name: &str, pairs: Vec<(usize, usize)>| {
        budgeted(pairs, pair_budget, &mut seed::rng(seed::derive_named(seed, name)))
    };
    let mut no_overlap = 0;
    let mut run = |a: &[Option<IrisCode>], b: &[Option<IrisCode>], pairs: Vec<(usize, usize)>| {
        let (s, missing) = score_pairs(a, b, &pairs);
        no_overlap += missing;
        s
    };
    let scores = MatchScoreSet {
        genuine_real: run(&real_codes, &real_codes, pick("genuine_real", candidate_pairs(&real_labels, true))),
        impostor_real: run(&real_codes, &real_codes, pick("impostor_real", candidate_pairs(&real_labels, false))),
        synth_vs_source: run(&synth_codes, &real_codes, pick("synth_vs_source", source_pairs)),
        synth_genuine: run(&synth_codes, &synth_codes, pick("synth_genuine", candidate_pairs(&synth_labels, true))),
        synth_impostor: run(&synth_codes, &synth_codes, pick("synth_impostor", candidate_pairs(&synth_labels, false))),
    };
    let summary = UniquenessSummary {
        distributions: scores
            .named()
            .iter()
            .map(|(n, v)| (n.to_string(), DistributionSummary { count: v.len(), mean: metrics::mean(v) }))
            .collect(),
        real_code_failures: real_codes.iter().filter(|c| c.is_none()).count(),
        synth_code_failures: synth_codes.iter().filter(|c| c.is_none()).count(),
        no_overlap_pairs: no_overlap,
    };
    if let Some(dir) = out_dir {
        for (name, values) in scores.named() {
            let mut s = String::from("score\n");
            for v in values {
                writeln!(s, "{v}").expect("write to string");
            }
            write_file(&dir.join(format!("scores_{name}.csv")), s)?;
            emit_histogram(values, 20, 0.0, 1.0, &dir.join(format!("hist_{name}.csv")))?;
        }
        write_file(&dir.join("uniqueness_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(UniquenessOutcome { scores, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityConfig {
    pub net: NetConfig,
    pub embedding: ClassifierConfig,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self { net: NetConfig::default(), embedding: ClassifierConfig { steps: 300, ..ClassifierConfig::default() } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub train_images: usize,
    pub train_identities: usize,
    pub final_loss: f64,
    pub tar_at_far_0_1: f64,
    pub tar_at_far_0_01: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub steps: usize,
    pub test_images: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
    pub real_only: ArmReport,
    pub real_plus_synth: ArmReport,
    /// `real_plus_synth − real_only` at FAR 0.1 and 0.01.
    pub delta_tar_at_far_0_1: f64,
    pub delta_tar_at_far_0_01: f64,
    /// `"improved"`, `"unchanged"` or `"degraded"` at FAR 0.1.
    pub direction: String,
}

struct Arm {
    report: ArmReport,
    roc: Vec<RocPoint>,
}

fn run_arm(
    sets: &[&Manifest],
    test_images: &[&Image],
    test_labels: &[u64],
    cfg: &UtilityConfig,
    seed: u64,
) -> Result<Arm> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for m in sets {
        for s in &m.samples {
            images.push(m.load_image(s)?);
            labels.push(s.identity_id);
        }
    }
    let refs: Vec<&Image> = images.iter().collect();
    let mut net = build_models(&cfg.net, seed)?.classifier;
    let losses = train_embedding(&mut net, &refs, &labels, &cfg.embedding, seed)?;
    let features = embed_images(&net, test_images);
    let (gen, imp, _, _) = crate::models::pair_scores(&features, test_labels);
    let tail = losses.len().min(20);
    let mut ids = labels.clone();
    ids.sort_unstable();
    ids.dedup();
    Ok(Arm {
        report: ArmReport {
            train_images: images.len(),
            train_identities: ids.len(),
            final_loss: if tail == 0 { 0.0 } else { metrics::mean(&losses[losses.len() - tail..]) },
            tar_at_far_0_1: metrics::tar_at_far(&gen, &imp, 0.1),
            tar_at_far_0_01: metrics::tar_at_far(&gen, &imp, 0.01),
        },
        roc: metrics::roc_curve(&gen, &imp),
    })
}

/// Train the embedding network on real data alone and on real plus
/// synthetic data with identical budgets, then verify on the test set.
pub fn utility_experiment(
    real_train: &Manifest,
    synth_train: &Manifest,
    test: &Manifest,
    cfg: &UtilityConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<UtilityReport> {
    let train_ids = real_train.identities();
    let test_ids = test.identities();
    if test_ids.len() < 2 || train_ids.len() < 2 {
        return Err(Error::InsufficientData("utility needs two train and two test identities".into()));
    }
    if test_ids.iter().any(|id| train_ids.binary_search(id).is_ok()) {
        return Err(Error::InvalidConfig("real train and test identities overlap".into()));
    }
    let images: Vec<Image> = test.samples.iter().map(|s| test.load_image(s)).collect::<Result<_>>()?;
    let refs: Vec<&Image> = images.iter().collect();
    let labels: Vec<u64> = test.samples.iter().map(|s| s.identity_id).collect();
    let arm_seed = seed::derive_named(seed, "utility");
    let real = run_arm(&[real_train], &refs, &labels, cfg, arm_seed)?;
    let mixed = run_arm(&[real_train, synth_train], &refs, &labels, cfg, arm_seed)?;
    let genuine_pairs = candidate_pairs(&labels, true).len();
    let delta1 = mixed.report.tar_at_far_0_1 - real.report.tar_at_far_0_1;
    let delta2 = mixed.report.tar_at_far_0_01 - real.report.tar_at_far_0_01;
    let direction = match delta1.partial_cmp(&0.0) {
        Some(std::cmp::Ordering::Greater) => "improved",
        Some(std::cmp::Ordering::Less) => "degraded",
        _ => "unchanged",
    };
    let report = UtilityReport {
        steps: cfg.embedding.steps,
        test_images: images.len(),
        genuine_pairs,
        impostor_pairs: labels.len() * (labels.len().saturating_sub(1)) / 2 - genuine_pairs,
        real_only: real.report,
        real_plus_synth: mixed.report,
        delta_tar_at_far_0_1: delta1,
        delta_tar_at_far_0_01: delta2,
        direction: direction.to_string(),
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        metrics::write_roc_csv(&dir.join("roc_real_only.csv"), &real.roc)?;
        metrics::write_roc_csv(&dir.join("roc_real_plus_synth.csv"), &mixed.roc)?;
        write_file(&dir.join("utility_report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
