//! Dataset manifests: one JSON file listing labeled iris images.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribute::AttributeVector;
use crate::error::{io_err, Error, Result};
use crate::image::Image;
use crate::seed;

/// Circle `(cx, cy, r)` in pixels; serialized as a 3-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    /// Whether the full disc lies within a `width × height` pixel grid.
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.cx - self.r >= 0.0
            && self.cy - self.r >= 0.0
            && self.cx + self.r <= width as f64 - 1.0
            && self.cy + self.r <= height as f64 - 1.0
    }
}

impl From<[f64; 3]> for Circle {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Circle> for [f64; 3] {
    fn from(c: Circle) -> Self {
        [c.cx, c.cy, c.r]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisSample {
    /// Image path, relative to the manifest directory unless absolute.
    pub path: String,
    pub identity_id: u64,
    pub attribute: AttributeVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pupil: Option<Circle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limbus: Option<Circle>,
}

impl IrisSample {
    fn check_circles(&self, image_size: usize) -> Result<()> {
        if let (Some(p), Some(l)) = (self.pupil, self.limbus) {
            if p.r >= l.r {
                return Err(Error::Load {
                    path: self.path.clone().into(),
                    reason: format!("pupil radius {} not below limbus radius {}", p.r, l.r),
                });
            }
        }
        for c in [self.pupil, self.limbus].into_iter().flatten() {
            if !c.inside(image_size, image_size) {
                return Err(Error::Load {
                    path: self.path.clone().into(),
                    reason: format!("circle {c:?} outside image"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub image_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub generator: String,
    #[serde(default)]
    pub version: u32,
    pub samples: Vec<IrisSample>,
    /// Directory that relative sample paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new(image_size: usize, seed: u64, generator: &str, root: impl Into<PathBuf>) -> Self {
        Self {
            image_size,
            seed,
            generator: generator.to_string(),
            version: MANIFEST_VERSION,
            samples: Vec::new(),
            root: root.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn resolve(&self, sample: &IrisSample) -> PathBuf {
        let p = Path::new(&sample.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_image(&self, sample: &IrisSample) -> Result<Image> {
        Image::load_png(&self.resolve(sample))
    }

    /// Sorted distinct identity labels.
    pub fn identities(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.identity_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Sample indices grouped by identity, in label order.
    pub fn by_identity(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut map: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            map.entry(s.identity_id).or_default().push(i);
        }
        map
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the serialized manifest.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    /// Write as JSON. Sample paths are rewritten to stay valid relative to
    /// the new location.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut out = self.clone();
        if !same_dir(&dir, &self.root) {
            for s in &mut out.samples {
                let abs = self.resolve(s);
                s.path = match abs.canonicalize() {
                    Ok(c) => relative_to(&c, &dir).unwrap_or(c).to_string_lossy().into_owned(),
                    Err(_) => abs.to_string_lossy().into_owned(),
                };
            }
        }
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::write(path, out.to_json()?).map_err(io_err(path))
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn relative_to(path: &Path, dir: &Path) -> Option<PathBuf> {
    let dir = dir.canonicalize().ok()?;
    path.strip_prefix(&dir).ok().map(Path::to_path_buf)
}

/// Read a manifest and check that every referenced image exists.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for s in &m.samples {
        let p = m.resolve(s);
        if !p.is_file() {
            return Err(Error::Load { path: p, reason: "image file missing".into() });
        }
        s.check_circles(m.image_size)?;
    }
    Ok(m)
}

/// Split by identity: a seeded shuffle of identities, with
/// `floor(n * (1 - train_fraction))` (at least one) going to the test side.
pub fn split_dataset(m: &Manifest, train_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut ids = m.identities();
    if ids.len() < 2 {
        return Err(Error::InsufficientData(format!("{} identities, need at least 2 to split", ids.len())));
    }
    let n = ids.len();
    let n_test = ((n as f64 * (1.0 - train_fraction) + 1e-9).floor() as usize).clamp(1, n - 1);
    ids.shuffle(&mut seed::rng(seed::derive_named(seed, "split")));
    let test_ids: BTreeSet<u64> = ids[..n_test].iter().copied().collect();
    let mut train = Manifest { samples: vec![], ..m.clone() };
    let mut test = Manifest { samples: vec![], ..m.clone() };
    for s in &m.samples {
        if test_ids.contains(&s.identity_id) {
            test.samples.push(s.clone());
        } else {
            train.samples.push(s.clone());
        }
    }
    Ok((train, test))
}
