//! Integro-differential circle search for the pupil and limbus boundaries.

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::toydata::Circle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub pupil: Circle,
    pub limbus: Circle,
    pub success: bool,
}

impl Segmentation {
    pub fn failed() -> Self {
        let zero = Circle::new(0.0, 0.0, 0.0);
        Self { pupil: zero, limbus: zero, success: false }
    }

    /// Segmentation taken from annotated circles; succeeds when they are
    /// nested and inside the image.
    pub fn from_circles(pupil: Circle, limbus: Circle, width: usize, height: usize) -> Self {
        let dx = pupil.cx - limbus.cx;
        let dy = pupil.cy - limbus.cy;
        let nested = (dx * dx + dy * dy).sqrt() + pupil.r < limbus.r;
        let success = pupil.r > 0.0 && nested && limbus.inside(width, height);
        Self { pupil, limbus, success }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Pre-smoothing applied before the circular integrals.
    pub blur_sigma: f64,
    /// Pupil radius search range as fractions of the image side.
    pub pupil_range: (f64, f64),
    /// Limbus radius range as multiples of the pupil radius.
    pub limbus_ratio: (f64, f64),
    /// Largest pupil/limbus center offset, as a fraction of the pupil radius.
    pub max_center_offset: f64,
    /// Minimum radial intensity step (per pixel of radius) for a boundary.
    pub min_response: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 1.0,
            pupil_range: (0.06, 0.25),
            limbus_ratio: (1.5, 4.0),
            max_center_offset: 0.3,
            min_response: 0.04,
        }
    }
}

/// Mean intensity along a circle; `None` if any sample leaves the image.
fn circle_mean(img: &Image, cx: f64, cy: f64, r: f64) -> Option<f64> {
    let n = ((std::f64::consts::TAU * r).ceil() as usize).clamp(16, 256);
    let mut acc = 0.0;
    for i in 0..n {
        let t = std::f64::consts::TAU * i as f64 / n as f64;
        acc += img.sample(cx + r * t.cos(), cy + r * t.sin())? as f64;
    }
    Some(acc / n as f64)
}

/// Radial derivative of the circular mean at radius `r`, smoothed over radius.
fn response(img: &Image, cx: f64, cy: f64, r: f64) -> Option<f64> {
    let m = |rr: f64| circle_mean(img, cx, cy, rr);
    let d = |rr: f64| -> Option<f64> { Some(m(rr + 0.5)? - m(rr - 0.5)?) };
    Some(0.25 * d(r - 0.5)? + 0.5 * d(r)? + 0.25 * d(r + 0.5)?)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    cx: f64,
    cy: f64,
    r: f64,
    score: f64,
}

fn search(
    img: &Image,
    centers: impl Iterator<Item = (f64, f64)>,
    radii: &dyn Fn(f64, f64) -> Vec<f64>,
) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for (cx, cy) in centers {
        for r in radii(cx, cy) {
            if let Some(score) = response(img, cx, cy, r) {
                if best.is_none_or(|b| score > b.score) {
                    best = Some(Candidate { cx, cy, r, score });
                }
            }
        }
    }
    best
}

/// Coarse pupil candidate: the dark disc whose surrounding ring is brightest
/// relative to its interior.
fn coarse_pupil(img: &Image, centers: impl Iterator<Item = (f64, f64)>, lo: f64, hi: f64) -> Option<Candidate> {
    let (r_lo, r_hi) = (lo.round().max(2.0) as usize, hi.round() as usize);
    let mut best: Option<Candidate> = None;
    for (cx, cy) in centers {
        let profile: Option<Vec<f64>> = (0..=r_hi + 2)
            .map(|k| if k == 0 { img.sample(cx, cy).map(f64::from) } else { circle_mean(img, cx, cy, k as f64) })
            .collect();
        let Some(profile) = profile else { continue };
        let (mut acc, mut weight) = (0.25 * profile[0], 0.25);
        let mut disc = Vec::with_capacity(profile.len());
        for (k, &m) in profile.iter().enumerate().skip(1) {
            disc.push(acc / weight);
            acc += k as f64 * m;
            weight += k as f64;
        }
        disc.push(acc / weight);
        for r in r_lo..=r_hi {
            // the pupil is both the darkest disc and a sharp step to its ring
            let score = 0.5 * (profile[r + 1] + profile[r + 2]) - 3.0 * disc[r - 1];
            if best.is_none_or(|b| score > b.score) {
                best = Some(Candidate { cx, cy, r: r as f64, score });
            }
        }
    }
    best
}

fn grid(center: (f64, f64), half: f64, step: f64) -> impl Iterator<Item = (f64, f64)> {
    let n = (half / step).round() as i64;
    (-n..=n).flat_map(move |i| (-n..=n).map(move |j| (center.0 + i as f64 * step, center.1 + j as f64 * step)))
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).floor().max(0.0) as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

pub fn segment_iris(image: &Image) -> Segmentation {
    segment_iris_with(image, &SegmentConfig::default())
}

/// Coarse-to-fine search: pupil first, then the limbus around it.
pub fn segment_iris_with(image: &Image, cfg: &SegmentConfig) -> Segmentation {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let side = w.min(h);
    if side < 16.0 {
        return Segmentation::failed();
    }
    let img = image.gaussian_blur(cfg.blur_sigma);
    let (rp_lo, rp_hi) = ((cfg.pupil_range.0 * side).max(2.0), cfg.pupil_range.1 * side);

    let coarse = (side / 32.0).max(1.0);
    let smooth = image.gaussian_blur(2.0 * cfg.blur_sigma);
    let mid = (w / 2.0, h / 2.0);
    let Some(p) = coarse_pupil(&smooth, grid(mid, 0.3 * side, coarse), rp_lo, rp_hi) else {
        return Segmentation::failed();
    };
    let fine_radii = |_: f64, _: f64| steps((p.r - 1.5).max(rp_lo), (p.r + 1.5).min(rp_hi), 0.25);
    let Some(p) = search(&img, grid((p.cx, p.cy), coarse, 0.5), &fine_radii) else {
        return Segmentation::failed();
    };
    let finer_radii = |_: f64, _: f64| steps((p.r - 0.5).max(rp_lo), (p.r + 0.5).min(rp_hi), 0.125);
    let Some(p) = search(&img, grid((p.cx, p.cy), 0.5, 0.25), &finer_radii) else {
        return Segmentation::failed();
    };
    if p.score < cfg.min_response {
        return Segmentation::failed();
    }

    let (rl_lo, rl_hi) = (cfg.limbus_ratio.0 * p.r, cfg.limbus_ratio.1 * p.r);
    let fits = move |cx: f64, cy: f64, r: f64| {
        cx - r - 1.0 >= 0.0 && cy - r - 1.0 >= 0.0 && cx + r + 1.0 <= w - 1.0 && cy + r + 1.0 <= h - 1.0
    };
    let offset = (cfg.max_center_offset * p.r).max(1.0);
    let limbus_radii =
        move |cx: f64, cy: f64| steps(rl_lo, rl_hi, 1.0).into_iter().filter(|&r| fits(cx, cy, r)).collect();
    let Some(l) = search(&img, grid((p.cx, p.cy), offset, 1.0), &limbus_radii) else {
        return Segmentation::failed();
    };
    let fine_limbus = move |cx: f64, cy: f64| {
        steps((l.r - 1.5).max(rl_lo), (l.r + 1.5).min(rl_hi), 0.25).into_iter().filter(|&r| fits(cx, cy, r)).collect()
    };
    let Some(l) = search(&img, grid((l.cx, l.cy), 1.0, 0.25), &fine_limbus) else {
        return Segmentation::failed();
    };
    if l.score < cfg.min_response {
        return Segmentation::failed();
    }
    Segmentation::from_circles(
        Circle::new(p.cx, p.cy, p.r),
        Circle::new(l.cx, l.cy, l.r),
        image.width(),
        image.height(),
    )
}
