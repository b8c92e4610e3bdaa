//! Rubber-sheet normalization, Gabor phase codes and masked Hamming matching.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::segment::Segmentation;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeConfig {
    /// Radial bands `R`.
    pub rows: usize,
    /// Angular samples `Θ`.
    pub cols: usize,
    /// Gabor carrier wavelength in columns.
    pub wavelength: f64,
    /// Gaussian envelope width relative to the wavelength.
    pub envelope: f64,
    /// Fraction of the annulus skipped next to each boundary.
    pub margin: f64,
    /// Column rotations searched in both directions when matching.
    pub max_shift: usize,
    /// Fraction of valid cells with the weakest response masked out.
    #[serde(default)]
    pub fragile_fraction: f64,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self { rows: 8, cols: 64, wavelength: 6.0, envelope: 0.5, margin: 0.08, max_shift: 8, fragile_fraction: 0.15 }
    }
}

/// Unwrapped iris annulus: `rows × cols` intensities and validity flags.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarStrip {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl PolarStrip {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrisCode {
    pub rows: usize,
    pub cols: usize,
    /// `[rows, cols, 2]` phase bits (real, imaginary).
    pub bits: Vec<bool>,
    /// `[rows, cols]` validity.
    pub mask: Vec<bool>,
}

impl IrisCode {
    pub fn valid_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len().max(1) as f64
    }

    pub fn is_usable(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    /// Code with every phase bit inverted.
    pub fn complement(&self) -> IrisCode {
        IrisCode { bits: self.bits.iter().map(|b| !b).collect(), ..self.clone() }
    }
}

pub fn normalize_iris(image: &Image, seg: &Segmentation) -> Result<PolarStrip> {
    normalize_iris_with(image, seg, &CodeConfig::default())
}

/// Sample the annulus on a `rows × cols` grid, linearly between the pupil
/// and limbus boundary points along each angle.
pub fn normalize_iris_with(image: &Image, seg: &Segmentation, cfg: &CodeConfig) -> Result<PolarStrip> {
    if !seg.success {
        return Err(Error::SegmentationFailed);
    }
    let (p, l) = (seg.pupil, seg.limbus);
    let mut values = Vec::with_capacity(cfg.rows * cfg.cols);
    let mut mask = Vec::with_capacity(cfg.rows * cfg.cols);
    for row in 0..cfg.rows {
        let rho = cfg.margin + (1.0 - 2.0 * cfg.margin) * (row as f64 + 0.5) / cfg.rows as f64;
        for col in 0..cfg.cols {
            let phi = TAU * col as f64 / cfg.cols as f64;
            let (c, s) = (phi.cos(), phi.sin());
            let inner = (p.cx + p.r * c, p.cy + p.r * s);
            let outer = (l.cx + l.r * c, l.cy + l.r * s);
            let x = inner.0 + rho * (outer.0 - inner.0);
            let y = inner.1 + rho * (outer.1 - inner.1);
            match image.sample(x, y) {
                Some(v) => {
                    values.push(v);
                    mask.push(true);
                }
                None => {
                    values.push(0.0);
                    mask.push(false);
                }
            }
        }
    }
    Ok(PolarStrip { rows: cfg.rows, cols: cfg.cols, values, mask })
}

fn gabor_kernel(cfg: &CodeConfig) -> Vec<(i64, f64, f64)> {
    let sigma = cfg.envelope * cfg.wavelength;
    let half = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<(i64, f64, f64)> = (-half..=half)
        .map(|t| {
            let g = (-(t * t) as f64 / (2.0 * sigma * sigma)).exp();
            let a = TAU * t as f64 / cfg.wavelength;
            (t, g * a.cos(), g * a.sin())
        })
        .collect();
    // zero-mean the even part so flat rows give no response
    let dc = taps.iter().map(|t| t.1).sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| t.1 -= dc);
    taps
}

pub fn iris_code(strip: &PolarStrip) -> IrisCode {
    iris_code_with(strip, &CodeConfig::default())
}

/// Two sign bits of a circular 1-D complex Gabor response along each row.
pub fn iris_code_with(strip: &PolarStrip, cfg: &CodeConfig) -> IrisCode {
    let taps = gabor_kernel(cfg);
    let (rows, cols) = (strip.rows, strip.cols);
    let mut bits = Vec::with_capacity(rows * cols * 2);
    let mut strength = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = &strip.values[r * cols..(r + 1) * cols];
        let row_mask = &strip.mask[r * cols..(r + 1) * cols];
        let valid: Vec<f64> = row.iter().zip(row_mask).filter(|(_, &m)| m).map(|(&v, _)| v as f64).collect();
        let fill = if valid.is_empty() { 0.0 } else { valid.iter().sum::<f64>() / valid.len() as f64 };
        let value = |c: i64| {
            let c = c.rem_euclid(cols as i64) as usize;
            if row_mask[c] {
                row[c] as f64
            } else {
                fill
            }
        };
        for c in 0..cols as i64 {
            let (mut re, mut im) = (0.0, 0.0);
            for &(t, kr, ki) in &taps {
                let v = value(c + t);
                re += kr * v;
                im += ki * v;
            }
            bits.push(re > 0.0);
            bits.push(im > 0.0);
            strength.push(re.abs().min(im.abs()));
        }
    }
    let mut mask = strip.mask.clone();
    let mut valid: Vec<f64> = strength.iter().zip(&mask).filter(|(_, &m)| m).map(|(&s, _)| s).collect();
    let drop = (cfg.fragile_fraction.clamp(0.0, 1.0) * valid.len() as f64).floor() as usize;
    if drop > 0 {
        valid.sort_by(f64::total_cmp);
        let cut = valid[drop - 1];
        let mut dropped = 0;
        for (m, &s) in mask.iter_mut().zip(&strength) {
            if *m && s <= cut && dropped < drop {
                *m = false;
                dropped += 1;
            }
        }
    }
    IrisCode { rows, cols, bits, mask }
}

/// Masked fractional Hamming distance with `b` rotated by `shift` columns.
pub fn hamming_distance(a: &IrisCode, b: &IrisCode, shift: i64) -> Option<f64> {
    let cols = a.cols as i64;
    let (mut diff, mut count) = (0usize, 0usize);
    for r in 0..a.rows {
        for c in 0..a.cols {
            let cb = (c as i64 + shift).rem_euclid(cols) as usize;
            let (ia, ib) = (r * a.cols + c, r * a.cols + cb);
            if a.mask[ia] && b.mask[ib] {
                diff += (a.bits[2 * ia] != b.bits[2 * ib]) as usize;
                diff += (a.bits[2 * ia + 1] != b.bits[2 * ib + 1]) as usize;
                count += 2;
            }
        }
    }
    (count > 0).then(|| diff as f64 / count as f64)
}

/// Smallest masked Hamming distance over rotations in `[-max_shift, max_shift]`.
pub fn best_hamming_distance(a: &IrisCode, b: &IrisCode, max_shift: usize) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::DimMismatch { expected: a.rows * a.cols, got: b.rows * b.cols });
    }
    let s = max_shift as i64;
    (-s..=s).filter_map(|k| hamming_distance(a, b, k)).reduce(f64::min).ok_or(Error::NoOverlap)
}

/// Similarity `1 − min HD` with the default rotation search.
pub fn match_codes(a: &IrisCode, b: &IrisCode) -> Result<f64> {
    Ok(1.0 - best_hamming_distance(a, b, CodeConfig::default().max_shift)?)
}
