//! Radial-basis warp functions over the identity latent space.
//!
//! Warp `m` is `f_m(z) = Σ_k b_k exp(-u_k ‖z - v_k‖²)`. Its normalized
//! gradient gives a direction along which a latent code is moved to mint a
//! new identity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Gradient norm below which a shift direction is undefined.
pub const GRADIENT_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    m: usize,
    k: usize,
    d: usize,
    /// Row-major `[M, K, d]`.
    centers: Vec<f64>,
    /// Row-major `[M, K]`.
    weights: Vec<f64>,
    /// Row-major `[M, K]`, strictly positive.
    scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn new(z: Vec<f64>) -> Self {
        Self(z)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &LatentCode) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(z: &[f32]) -> Self {
        Self(z.iter().map(|&v| v as f64).collect())
    }
}

impl From<Vec<f64>> for LatentCode {
    fn from(z: Vec<f64>) -> Self {
        Self(z)
    }
}

impl WarpParams {
    pub fn new(m: usize, k: usize, d: usize, centers: Vec<f64>, weights: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if m == 0 || k == 0 || d == 0 {
            return Err(Error::InvalidConfig(format!("warp shape ({m}, {k}, {d}) has a zero dimension")));
        }
        for (name, len, want) in
            [("centers", centers.len(), m * k * d), ("weights", weights.len(), m * k), ("scales", scales.len(), m * k)]
        {
            if len != want {
                return Err(Error::InvalidConfig(format!("warp {name} has {len} entries, expected {want}")));
            }
        }
        if let Some(u) = scales.iter().find(|&&u| !(u > 0.0 && u.is_finite())) {
            return Err(Error::InvalidConfig(format!("warp scale {u} is not positive")));
        }
        Ok(Self { m, k, d, centers, weights, scales })
    }

    /// Number of warps `M`.
    pub fn num_warps(&self) -> usize {
        self.m
    }

    /// RBFs per warp `K`.
    pub fn num_rbfs(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn center(&self, m: usize, k: usize) -> &[f64] {
        let start = (m * self.k + k) * self.d;
        &self.centers[start..start + self.d]
    }

    fn check(&self, m: usize, z: &LatentCode) -> Result<()> {
        if m >= self.m {
            return Err(Error::IndexOutOfRange { index: m, len: self.m });
        }
        if z.dim() != self.d {
            return Err(Error::DimMismatch { expected: self.d, got: z.dim() });
        }
        Ok(())
    }

    /// `(b_k, u_k, exp(-u_k ‖z - v_k‖²))` for each RBF of warp `m`.
    fn terms<'a>(&'a self, m: usize, z: &'a LatentCode) -> impl Iterator<Item = (usize, f64, f64, f64)> + 'a {
        (0..self.k).map(move |k| {
            let sq: f64 = self.center(m, k).iter().zip(&z.0).map(|(v, z)| (z - v) * (z - v)).sum();
            let i = m * self.k + k;
            (k, self.weights[i], self.scales[i], (-self.scales[i] * sq).exp())
        })
    }
}

pub fn eval_warp(p: &WarpParams, m: usize, z: &LatentCode) -> Result<f64> {
    p.check(m, z)?;
    Ok(p.terms(m, z).map(|(_, b, _, e)| b * e).sum())
}

pub fn warp_gradient(p: &WarpParams, m: usize, z: &LatentCode) -> Result<Vec<f64>> {
    p.check(m, z)?;
    let mut g = vec![0.0; p.d];
    for (k, b, u, e) in p.terms(m, z) {
        let coef = -2.0 * b * u * e;
        for ((gi, zi), vi) in g.iter_mut().zip(&z.0).zip(p.center(m, k)) {
            *gi += coef * (zi - vi);
        }
    }
    Ok(g)
}

/// `z + ε ∇f_m(z) / ‖∇f_m(z)‖`.
pub fn shift_code(p: &WarpParams, m: usize, z: &LatentCode, epsilon: f64) -> Result<LatentCode> {
    let g = warp_gradient(p, m, z)?;
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > GRADIENT_FLOOR) {
        return Err(Error::DegenerateGradient { norm });
    }
    Ok(LatentCode(z.0.iter().zip(&g).map(|(zi, gi)| zi + epsilon * gi / norm).collect()))
}

/// Mean of the raw (pre-softplus) scale draws for latent dimension `d`.
///
/// Places `u ≈ 1 / (2d)` so that `u ‖z - v‖²` is O(1) for unit-Gaussian
/// `z` and `v`, where `‖z - v‖² ≈ 2d`.
pub fn raw_scale_offset(d: usize) -> f64 {
    inverse_softplus(1.0 / (2.0 * d as f64))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Raw draws `(centers, weights, raw_scales)`; scales are `softplus(raw)`.
pub fn init_warp_raw(m: usize, k: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = seed::rng(seed::derive_named(seed, "warp"));
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let centers = normal(m * k * d);
    let weights = normal(m * k);
    let offset = raw_scale_offset(d);
    let raw = normal(m * k).into_iter().map(|g| g + offset).collect();
    (centers, weights, raw)
}

pub fn init_warp_params(m: usize, k: usize, d: usize, seed: u64) -> Result<WarpParams> {
    let (centers, weights, raw) = init_warp_raw(m, k, d, seed);
    WarpParams::new(m, k, d, centers, weights, raw.into_iter().map(softplus).collect())
}
