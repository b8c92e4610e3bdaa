//! Image quality components and the combined 0–100 score.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::code::{normalize_iris_with, CodeConfig};
use super::segment::{segment_iris_with, SegmentConfig, Segmentation};
use crate::error::{io_err, Error, Result};
use crate::image::Image;

/// Score assigned when an image cannot be segmented.
pub const FAILURE_SCORE: u8 = 255;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    /// Reference mean squared LoG energy mapped to sharpness 100.
    pub sharpness_ref: f64,
    pub log_sigma: f64,
    /// Offset in the contrast denominators.
    pub contrast_delta: f64,
    /// Vertices of the traced pupil boundary.
    pub boundary_vertices: usize,
    pub segment: SegmentConfig,
    pub code: CodeConfig,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            sharpness_ref: SHARPNESS_REF,
            log_sigma: 1.0,
            contrast_delta: 0.01,
            boundary_vertices: 32,
            segment: SegmentConfig::default(),
            code: CodeConfig::default(),
        }
    }
}

/// Median LoG energy over clean 64×64 toy renders.
pub const SHARPNESS_REF: f64 = 0.004;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityComponents {
    pub usable_area: f64,
    pub sclera_contrast: f64,
    pub pupil_contrast: f64,
    pub sharpness: f64,
    pub circularity: f64,
}

impl QualityComponents {
    pub fn as_array(&self) -> [f64; 5] {
        [self.usable_area, self.sclera_contrast, self.pupil_contrast, self.sharpness, self.circularity]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub components: Option<QualityComponents>,
    pub overall: u8,
}

impl QualityReport {
    pub fn failed() -> Self {
        Self { components: None, overall: FAILURE_SCORE }
    }

    pub fn is_failure(&self) -> bool {
        self.overall == FAILURE_SCORE
    }
}

/// Rounded geometric mean of the components, each clamped to `[0, 100]`.
pub fn combine_components(c: &[f64; 5]) -> u8 {
    if c.iter().any(|&v| !(v > 0.0)) {
        return 0;
    }
    let log_mean = c.iter().map(|&v| v.min(100.0).ln()).sum::<f64>() / c.len() as f64;
    log_mean.exp().round().clamp(0.0, 100.0) as u8
}

fn ring_mean(img: &Image, cx: f64, cy: f64, r_in: f64, r_out: f64) -> Option<f64> {
    let (mut acc, mut n) = (0.0, 0usize);
    let x0 = (cx - r_out).floor().max(0.0) as usize;
    let y0 = (cy - r_out).floor().max(0.0) as usize;
    let x1 = ((cx + r_out).ceil() as usize).min(img.width().saturating_sub(1));
    let y1 = ((cy + r_out).ceil() as usize).min(img.height().saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if r >= r_in && r <= r_out {
                acc += img.get(x, y) as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| acc / n as f64)
}

fn contrast(a: f64, b: f64, delta: f64) -> f64 {
    (100.0 * (a - b).abs() / (a + b + delta)).clamp(0.0, 100.0)
}

/// Pixels strictly between the pupil and limbus circles.
fn annulus_pixels(img: &Image, seg: &Segmentation) -> Vec<(usize, usize)> {
    let (p, l) = (seg.pupil, seg.limbus);
    let mut out = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (fx, fy) = (x as f64, y as f64);
            let dp = ((fx - p.cx).powi(2) + (fy - p.cy).powi(2)).sqrt();
            let dl = ((fx - l.cx).powi(2) + (fy - l.cy).powi(2)).sqrt();
            if dp > p.r + 1.0 && dl < l.r - 1.0 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Mean squared Laplacian-of-Gaussian response over the iris annulus.
pub fn log_energy(image: &Image, seg: &Segmentation, sigma: f64) -> f64 {
    let log = image.laplacian_of_gaussian(sigma);
    let px = annulus_pixels(image, seg);
    if px.is_empty() {
        return 0.0;
    }
    px.iter().map(|&(x, y)| (log.get(x, y) as f64).powi(2)).sum::<f64>() / px.len() as f64
}

/// Pupil boundary polygon along `n` rays. Each ray takes the first rise
/// above a low global level, then refines to the half-level between the
/// pupil and the value just past that rise; radii are median-smoothed.
pub fn trace_pupil_boundary(image: &Image, seg: &Segmentation, n: usize) -> Vec<(f64, f64)> {
    let img = image.gaussian_blur(0.7);
    let p = seg.pupil;
    let inside = ring_mean(&img, p.cx, p.cy, 0.0, 0.5 * p.r).unwrap_or(0.0);
    let iris_band = (0.25 * (seg.limbus.r - p.r)).max(1.0);
    let outside = ring_mean(&img, p.cx, p.cy, p.r + 1.0, p.r + 1.0 + iris_band).unwrap_or(1.0);
    let low = inside + 0.25 * (outside - inside);
    let hi = 0.5 * (p.r + seg.limbus.r);
    let step = 0.125;
    let radii: Vec<f64> = (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            let (c, s) = (t.cos(), t.sin());
            let at = |r: f64| img.sample_or(p.cx + r * c, p.cy + r * s, 1.0) as f64;
            let crossing = |level: f64, from: f64, to: f64| -> Option<f64> {
                let mut prev = (from, at(from));
                let mut r = from + step;
                while r <= to {
                    let v = at(r);
                    if v >= level && prev.1 < level {
                        return Some(prev.0 + step * (level - prev.1) / (v - prev.1));
                    }
                    prev = (r, v);
                    r += step;
                }
                None
            };
            let Some(r0) = crossing(low, 0.0, hi) else { return hi };
            let level = 0.5 * (inside + at(r0 + 1.5));
            crossing(level, (r0 - 1.5).max(0.0), r0 + 1.5).unwrap_or(r0)
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut window: Vec<f64> = (0..5).map(|k| radii[(i + n + k - 2) % n]).collect();
            window.sort_by(f64::total_cmp);
            let r = window[2];
            let t = TAU * i as f64 / n as f64;
            (p.cx + r * t.cos(), p.cy + r * t.sin())
        })
        .collect()
}

/// `4πA / P²` of a closed polygon.
pub fn polygon_circularity(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let (mut area, mut perimeter) = (0.0, 0.0);
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        area += x0 * y1 - x1 * y0;
        perimeter += ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    }
    if perimeter == 0.0 {
        return 0.0;
    }
    4.0 * PI * (0.5 * area).abs() / (perimeter * perimeter)
}

pub fn quality_components(image: &Image, seg: &Segmentation) -> Result<QualityComponents> {
    quality_components_with(image, seg, &QualityConfig::default())
}

pub fn quality_components_with(image: &Image, seg: &Segmentation, cfg: &QualityConfig) -> Result<QualityComponents> {
    if !seg.success {
        return Err(Error::SegmentationFailed);
    }
    let (p, l) = (seg.pupil, seg.limbus);
    let width = l.r - p.r;
    let band = (0.2 * width).max(2.0);
    let gap = 1.5;

    let strip = normalize_iris_with(image, seg, &cfg.code)?;
    let usable_area = 100.0 * strip.valid_fraction();

    let sclera = ring_mean(image, l.cx, l.cy, l.r + gap, l.r + gap + band);
    let iris_outer = ring_mean(image, l.cx, l.cy, l.r - gap - band, l.r - gap);
    let sclera_contrast = match (sclera, iris_outer) {
        (Some(s), Some(i)) => contrast(s, i, cfg.contrast_delta),
        _ => 0.0,
    };
    let pupil = ring_mean(image, p.cx, p.cy, 0.0, (p.r - gap).max(0.5 * p.r));
    let iris_inner = ring_mean(image, p.cx, p.cy, p.r + gap, p.r + gap + band);
    let pupil_contrast = match (pupil, iris_inner) {
        (Some(a), Some(b)) => contrast(a, b, cfg.contrast_delta),
        _ => 0.0,
    };

    let energy = log_energy(image, seg, cfg.log_sigma);
    let sharpness = 100.0 * (energy / cfg.sharpness_ref).min(1.0);

    let boundary = trace_pupil_boundary(image, seg, cfg.boundary_vertices);
    let circularity = (100.0 * polygon_circularity(&boundary)).min(100.0);

    Ok(QualityComponents { usable_area, sclera_contrast, pupil_contrast, sharpness, circularity })
}

pub fn assess_quality(image: &Image) -> QualityReport {
    assess_quality_with(image, &QualityConfig::default())
}

pub fn assess_quality_with(image: &Image, cfg: &QualityConfig) -> QualityReport {
    let seg = segment_iris_with(image, &cfg.segment);
    match quality_components_with(image, &seg, cfg) {
        Ok(c) => QualityReport { overall: combine_components(&c.as_array()), components: Some(c) },
        Err(_) => QualityReport::failed(),
    }
}

/// Overall score in `0..=100`, or 255 when segmentation fails.
pub fn overall_quality(image: &Image) -> u8 {
    assess_quality(image).overall
}

pub const QUALITY_CSV_HEADER: &str = "path,usable_area,sclera_contrast,pupil_contrast,sharpness,circularity,overall";

pub fn write_quality_csv(path: &Path, rows: &[(String, QualityReport)]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{QUALITY_CSV_HEADER}").expect("write to vec");
    for (name, r) in rows {
        match r.components {
            Some(c) => writeln!(
                out,
                "{name},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
                c.usable_area, c.sclera_contrast, c.pupil_contrast, c.sharpness, c.circularity, r.overall
            ),
            None => writeln!(out, "{name},,,,,,{}", r.overall),
        }
        .expect("write to vec");
    }
    std::fs::write(path, out).map_err(io_err(path))
}
