//! Procedural toy iris images and dataset construction.
//!
//! A toy scene is a bright sclera field, an iris annulus carrying a
//! band-limited value-noise texture keyed by the identity seed, and a
//! near-black pupil. The texture lives in rubber-sheet coordinates
//! (normalized radius, angle) so it follows rotation and pupil dilation the
//! same way real iris texture is assumed to.

mod manifest;

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use manifest::{load_manifest, split_dataset, Circle, IrisSample, Manifest, MANIFEST_FILE, MANIFEST_VERSION};

use crate::attribute::{all_combinations, AttributeVector, PupilFactors, COMBINATIONS};
use crate::error::{io_err, Result};
use crate::image::Image;
use crate::seed;

/// Appearance constants of the toy renderer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Neutral pupil radius as a fraction of the image side.
    pub pupil_fraction: f64,
    /// Limbus radius as a fraction of the image side.
    pub limbus_fraction: f64,
    pub pupil_level: f32,
    pub iris_level: f32,
    pub sclera_level: f32,
    /// Peak-to-peak intensity swing of the iris texture.
    pub texture_contrast: f32,
    /// Half-width of the uniform sensor noise.
    pub noise_amplitude: f32,
    pub factors: PupilFactors,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            pupil_fraction: 0.14,
            limbus_fraction: 0.31,
            pupil_level: 0.04,
            iris_level: 0.36,
            sclera_level: 0.88,
            texture_contrast: 0.5,
            noise_amplitude: 1.0 / 255.0,
            factors: PupilFactors::default(),
        }
    }
}

/// Explicit placement of a toy scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneGeometry {
    pub center: (f64, f64),
    pub pupil_radius: f64,
    pub limbus_radius: f64,
    /// Texture rotation in degrees.
    pub angle: f64,
}

impl SceneGeometry {
    /// Geometry a `size × size` toy image takes for attribute `v`.
    pub fn for_attribute(v: &AttributeVector, size: usize, cfg: &ToyConfig) -> Result<Self> {
        let style = v.decode()?;
        let half = (size / 2) as f64;
        Ok(Self {
            center: (half + style.shift[0] as f64, half + style.shift[1] as f64),
            pupil_radius: cfg.pupil_fraction * size as f64 * cfg.factors.factor(style.pupil),
            limbus_radius: cfg.limbus_fraction * size as f64,
            angle: style.angle,
        })
    }

    /// Neutral (unrotated, centered, undilated) geometry for a `size` image.
    pub fn neutral(size: usize, cfg: &ToyConfig) -> Self {
        let half = (size / 2) as f64;
        Self {
            center: (half, half),
            pupil_radius: cfg.pupil_fraction * size as f64,
            limbus_radius: cfg.limbus_fraction * size as f64,
            angle: 0.0,
        }
    }
}

/// A rendered toy sample before it is written to disk.
#[derive(Clone, Debug)]
pub struct RenderedSample {
    pub image: Image,
    pub identity_seed: u64,
    pub attribute: AttributeVector,
    pub pupil: Circle,
    pub limbus: Circle,
}

/// Octaves of the identity texture: (angular cells, radial cells, amplitude).
const OCTAVES: [(u32, u32, f64); 3] = [(8, 3, 0.4), (16, 4, 1.0), (32, 6, 0.8)];

/// Identity texture in `[0, 1]` at normalized radius `rho ∈ [0, 1]` and
/// angle `phi` (radians).
pub fn iris_texture(identity_seed: u64, rho: f64, phi: f64) -> f64 {
    let turns = (phi / TAU).rem_euclid(1.0);
    let mut acc = 0.0;
    let mut norm = 0.0;
    for (o, &(ang, rad, amp)) in OCTAVES.iter().enumerate() {
        let oseed = seed::derive(identity_seed, o as u64);
        acc += amp * value_noise(oseed, rho * rad as f64, turns * ang as f64, ang as i64);
        norm += amp;
    }
    // sums of smoothed uniforms concentrate near zero; stretch before clamping
    (0.5 + 0.9 * acc / norm).clamp(0.0, 1.0)
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = seed::mix64(seed ^ seed::mix64((i as u64).wrapping_mul(0x1_0000_01B3) ^ (j as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// 2-D value noise, periodic with `period` cells along `v`.
fn value_noise(seed: u64, u: f64, v: f64, period: i64) -> f64 {
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (i0, j0) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (smooth(u - i0 as f64), smooth(v - j0 as f64));
    let j0w = j0.rem_euclid(period);
    let j1w = (j0 + 1).rem_euclid(period);
    let a = lattice(seed, i0, j0w);
    let b = lattice(seed, i0 + 1, j0w);
    let c = lattice(seed, i0, j1w);
    let d = lattice(seed, i0 + 1, j1w);
    let top = a + (b - a) * fu;
    let bottom = c + (d - c) * fu;
    top + (bottom - top) * fv
}

/// Render a scene with explicit geometry; noise is seeded by `rng_seed`.
pub fn render_scene(
    identity_seed: u64,
    geom: &SceneGeometry,
    width: usize,
    height: usize,
    noise_amplitude: f32,
    rng_seed: u64,
    cfg: &ToyConfig,
) -> Image {
    let mut rng = seed::rng(rng_seed);
    let (cx, cy) = geom.center;
    let (rp, rl) = (geom.pupil_radius, geom.limbus_radius);
    let theta = geom.angle.to_radians();
    Image::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let r = (dx * dx + dy * dy).sqrt();
        let phi = dy.atan2(dx) - theta;
        let rho = ((r - rp) / (rl - rp)).clamp(0.0, 1.0);
        let iris = cfg.iris_level as f64 + cfg.texture_contrast as f64 * (iris_texture(identity_seed, rho, phi) - 0.5);
        // one-pixel linear ramps at both boundaries
        let a = (r - rp + 0.5).clamp(0.0, 1.0);
        let b = (r - rl + 0.5).clamp(0.0, 1.0);
        let inner = cfg.pupil_level as f64 * (1.0 - a) + iris * a;
        let v = inner * (1.0 - b) + cfg.sclera_level as f64 * b;
        let noise = if noise_amplitude > 0.0 { rng.random_range(-1.0..=1.0) * noise_amplitude as f64 } else { 0.0 };
        (v + noise).clamp(0.0, 1.0) as f32
    })
}

pub fn render_toy_iris_with(
    identity_seed: u64,
    v: &AttributeVector,
    size: usize,
    rng_seed: u64,
    cfg: &ToyConfig,
) -> Result<RenderedSample> {
    assert!(size >= 64, "toy images must be at least 64 px");
    let geom = SceneGeometry::for_attribute(v, size, cfg)?;
    let image = render_scene(identity_seed, &geom, size, size, cfg.noise_amplitude, rng_seed, cfg);
    Ok(RenderedSample {
        image,
        identity_seed,
        attribute: *v,
        pupil: Circle::new(geom.center.0, geom.center.1, geom.pupil_radius),
        limbus: Circle::new(geom.center.0, geom.center.1, geom.limbus_radius),
    })
}

/// Render one toy sample with the default appearance.
pub fn render_toy_iris(identity_seed: u64, v: &AttributeVector, size: usize, rng_seed: u64) -> Result<RenderedSample> {
    render_toy_iris_with(identity_seed, v, size, rng_seed, &ToyConfig::default())
}

/// Seed of the texture for identity `index` of a dataset seeded by `seed`.
pub fn identity_seed(dataset_seed: u64, index: u64) -> u64 {
    seed::derive(seed::derive_named(dataset_seed, "identity"), index)
}

/// Attribute assignment for `n` samples: the 50 combinations in a seeded
/// order, repeated cyclically, so global counts differ by at most one and
/// each run of up to 50 consecutive samples has distinct styles.
pub fn balanced_attributes(n: usize, dataset_seed: u64) -> Vec<AttributeVector> {
    let mut order = all_combinations();
    order.shuffle(&mut seed::rng(seed::derive_named(dataset_seed, "attributes")));
    (0..n).map(|i| order[i % COMBINATIONS]).collect()
}

/// Render `n_identities × styles_per_identity` toy images into `out_dir` and
/// write `manifest.json` there.
pub fn build_toy_dataset(
    n_identities: usize,
    styles_per_identity: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    build_toy_dataset_with(n_identities, styles_per_identity, size, seed, out_dir, &ToyConfig::default())
}

pub fn build_toy_dataset_with(
    n_identities: usize,
    styles_per_identity: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
    cfg: &ToyConfig,
) -> Result<Manifest> {
    use rayon::prelude::*;

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let attrs = balanced_attributes(n_identities * styles_per_identity, seed);
    let jobs: Vec<(usize, usize)> =
        (0..n_identities).flat_map(|i| (0..styles_per_identity).map(move |k| (i, k))).collect();
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(id, k))| -> Result<IrisSample> {
            let rendered = render_toy_iris_with(
                identity_seed(seed, id as u64),
                &attrs[index],
                size,
                seed::derive(seed::derive_named(seed, "sample"), index as u64),
                cfg,
            )?;
            let name = format!("id{id:05}_s{k:03}.png");
            rendered.image.save_png(&out_dir.join(&name))?;
            Ok(IrisSample {
                path: name,
                identity_id: id as u64,
                attribute: rendered.attribute,
                pupil: Some(rendered.pupil),
                limbus: Some(rendered.limbus),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = Manifest::new(size, seed, "toy", out_dir);
    manifest.samples = samples;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute::encode_attributes;
    use crate::attribute::PupilState;

    #[test]
    fn rendering_is_deterministic() {
        let v = encode_attributes(12.0, [5, 5], PupilState::Dilation).unwrap();
        let a = render_toy_iris(7, &v, 64, 3).unwrap();
        let b = render_toy_iris(7, &v, 64, 3).unwrap();
        assert_eq!(a.image, b.image);
        let c = render_toy_iris(7, &v, 64, 4).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn ground_truth_circles_follow_the_attribute() {
        let v = encode_attributes(0.0, [-10, 10], PupilState::Contraction).unwrap();
        let s = render_toy_iris(1, &v, 64, 0).unwrap();
        assert_eq!(s.pupil.center(), (22.0, 42.0));
        assert!((s.pupil.r - 64.0 * 0.14 * 0.8).abs() < 1e-12);
        assert!(s.pupil.r < s.limbus.r);
        assert!(s.limbus.inside(64, 64));
        // pupil dark, sclera bright
        assert!(s.image.get(22, 42) < 0.1);
        assert!(s.image.get(60, 3) > 0.8);
    }

    #[test]
    fn every_toy_geometry_fits_the_image() {
        for v in all_combinations() {
            let g = SceneGeometry::for_attribute(&v, 64, &ToyConfig::default()).unwrap();
            let c = Circle::new(g.center.0, g.center.1, g.limbus_radius);
            assert!(c.inside(64, 64), "{v} -> {g:?}");
            assert!(g.limbus_radius / g.pupil_radius >= 1.5 && g.limbus_radius / g.pupil_radius <= 4.0);
        }
    }

    #[test]
    fn texture_is_periodic_in_angle_and_bounded() {
        for i in 0..50 {
            let rho = i as f64 / 49.0;
            let a = iris_texture(9, rho, 0.3);
            let b = iris_texture(9, rho, 0.3 + TAU);
            assert!((a - b).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn balanced_attribute_cycle() {
        let attrs = balanced_attributes(200, 1);
        let mut counts = [0usize; COMBINATIONS];
        for a in &attrs {
            counts[a.combination_index().unwrap()] += 1;
        }
        assert_eq!(counts.iter().max(), counts.iter().min());
        for block in attrs.chunks(10) {
            let distinct: std::collections::HashSet<_> = block.iter().collect();
            assert_eq!(distinct.len(), 10);
        }
    }
}
