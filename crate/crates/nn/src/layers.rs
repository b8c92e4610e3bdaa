//! Layer descriptors that own parameter ids inside a [`ParamSet`].

use rand::Rng;

use crate::kernels::ConvGeom;
use crate::params::{scaled_normal, Bound, ParamId, ParamSet};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

impl Conv2d {
    pub fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, geom: ConvGeom, rng: &mut impl Rng) -> Self {
        let k = geom.kernel;
        let weight = ps.add(format!("{name}.w"), scaled_normal(&[cout, cin, k, k], cin * k * k, 2f32.sqrt(), rng));
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { weight, bias, geom }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        x.conv2d(p.get(self.weight), self.geom).add_channel_bias(p.get(self.bias))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeom,
}

impl ConvTranspose2d {
    pub fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, geom: ConvGeom, rng: &mut impl Rng) -> Self {
        let k = geom.kernel;
        // each output pixel receives about cin * k² / stride² contributions
        let fan_in = cin * k * k / (geom.stride * geom.stride).max(1);
        let weight = ps.add(format!("{name}.w"), scaled_normal(&[cin, cout, k, k], fan_in, 2f32.sqrt(), rng));
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[cout]));
        Self { weight, bias, geom }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        x.conv_transpose2d(p.get(self.weight), self.geom, None).add_channel_bias(p.get(self.bias))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, din: usize, dout: usize, gain: f32, rng: &mut impl Rng) -> Self {
        let weight = ps.add(format!("{name}.w"), scaled_normal(&[dout, din], din, gain, rng));
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[dout]));
        Self { weight, bias }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        x.linear(p.get(self.weight), p.get(self.bias))
    }
}

/// Instance normalization followed by a learned per-channel affine map.
#[derive(Clone, Copy, Debug)]
pub struct InstanceNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl InstanceNorm {
    pub const EPS: f32 = 1e-5;

    pub fn new(ps: &mut ParamSet, name: &str, channels: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::ones(&[channels]));
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self { gamma, beta }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        x.instance_norm(Self::EPS).mul_channel(p.get(self.gamma)).add_channel_bias(p.get(self.beta))
    }
}
