//! Network definitions. Each network owns a [`ParamSet`] plus the layer
//! descriptors that index into it.

use irisforge_nn::layers::{Conv2d, ConvTranspose2d, InstanceNorm, Linear};
use irisforge_nn::{Bound, ConvGeom, ParamId, ParamSet, Tape, Tensor, Var};
use rand::Rng;

const LEAK: f32 = 0.2;

fn down() -> ConvGeom {
    ConvGeom::new(4, 2, 1)
}

/// Strided convolutional encoder: `[B, cin, S, S] -> [B, out]`.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    convs: Vec<Conv2d>,
    norms: Vec<Option<InstanceNorm>>,
    head: Linear,
}

impl ConvEncoder {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        image_size: usize,
        cin: usize,
        channels: &[usize],
        out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c = cin;
        for (i, &co) in channels.iter().enumerate() {
            convs.push(Conv2d::new(ps, &format!("{name}.conv{i}"), c, co, down(), rng));
            norms.push((i > 0).then(|| InstanceNorm::new(ps, &format!("{name}.norm{i}"), co)));
            c = co;
        }
        let side = image_size >> channels.len();
        let head = Linear::new(ps, &format!("{name}.head"), c * side * side, out, 1.0, rng);
        Self { convs, norms, head }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Var<'t> {
        let mut h = x;
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            h = conv.forward(p, h);
            if let Some(n) = norm {
                h = n.forward(p, h);
            }
            h = h.leaky_relu(LEAK);
        }
        let s = h.shape();
        self.head.forward(p, h.reshape(&[s[0], s[1] * s[2] * s[3]]))
    }
}

/// Decoder from a code vector to a single-channel image in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Decoder {
    fc: Linear,
    fc_norm: InstanceNorm,
    ups: Vec<ConvTranspose2d>,
    norms: Vec<InstanceNorm>,
    base: (usize, usize),
}

impl Decoder {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        image_size: usize,
        din: usize,
        channels: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        let side = image_size >> channels.len();
        let top = *channels.last().expect("at least one stage");
        let fc = Linear::new(ps, &format!("{name}.fc"), din, top * side * side, 1.0, rng);
        let fc_norm = InstanceNorm::new(ps, &format!("{name}.fc_norm"), top);
        let mut ups = Vec::new();
        let mut norms = Vec::new();
        let mut widths: Vec<usize> = channels.iter().rev().copied().collect();
        widths.push(1);
        for (i, pair) in widths.windows(2).enumerate() {
            ups.push(ConvTranspose2d::new(ps, &format!("{name}.up{i}"), pair[0], pair[1], down(), rng));
            if i + 2 < widths.len() {
                norms.push(InstanceNorm::new(ps, &format!("{name}.norm{i}"), pair[1]));
            }
        }
        Self { fc, fc_norm, ups, norms, base: (top, side) }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, code: Var<'t>) -> Var<'t> {
        let b = code.shape()[0];
        let (c, s) = self.base;
        let mut h = self.fc.forward(p, code).reshape(&[b, c, s, s]);
        h = self.fc_norm.forward(p, h).relu();
        for (i, up) in self.ups.iter().enumerate() {
            h = up.forward(p, h);
            h = match self.norms.get(i) {
                Some(n) => n.forward(p, h).relu(),
                None => h.tanh(),
            };
        }
        h
    }
}

/// Critic with a realness head and an attribute head. It has no
/// normalization layers, so its input gradient can be written as a chain
/// of tape operations and differentiated again for the gradient penalty.
#[derive(Clone, Debug)]
pub struct Critic {
    convs: Vec<Conv2d>,
    real: Linear,
    attr: Linear,
}

/// Critic outputs for a batch.
pub struct CriticOutput<'t> {
    /// `[B, 1]` realness scores.
    pub real: Var<'t>,
    /// `[B, attr_dim]` attribute logits.
    pub attr: Var<'t>,
    /// Pre-activations of each conv stage, kept for the input gradient.
    pre: Vec<Var<'t>>,
    input_hw: Vec<(usize, usize)>,
}

impl Critic {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        image_size: usize,
        cin: usize,
        channels: &[usize],
        attr_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut convs = Vec::new();
        let mut c = cin;
        for (i, &co) in channels.iter().enumerate() {
            convs.push(Conv2d::new(ps, &format!("{name}.conv{i}"), c, co, down(), rng));
            c = co;
        }
        let side = image_size >> channels.len();
        let real = Linear::new(ps, &format!("{name}.real"), c * side * side, 1, 1.0, rng);
        let attr = Linear::new(ps, &format!("{name}.attr"), c * side * side, attr_dim, 1.0, rng);
        Self { convs, real, attr }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> CriticOutput<'t> {
        let mut h = x;
        let mut pre = Vec::new();
        let mut input_hw = Vec::new();
        for conv in &self.convs {
            let s = h.shape();
            input_hw.push((s[2], s[3]));
            let a = conv.forward(p, h);
            pre.push(a);
            h = a.leaky_relu(LEAK);
        }
        let s = h.shape();
        let flat = h.reshape(&[s[0], s[1] * s[2] * s[3]]);
        CriticOutput { real: self.real.forward(p, flat), attr: self.attr.forward(p, flat), pre, input_hw }
    }

    /// `∂ real_b / ∂ x_b` for every sample, as a differentiable function of
    /// the critic weights. Shape `[B, C·H·W]` of the input.
    pub fn input_gradient<'t>(&self, p: &Bound<'t>, out: &CriticOutput<'t>) -> Var<'t> {
        let last = out.pre.last().expect("critic has conv stages");
        let ls = last.shape();
        let b = ls[0];
        let w_real = p.get(self.real.weight);
        let mut g = w_real.expand_rows(b).reshape(&ls);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let a = out.pre[i].value();
            let mask = a.map(|v| if v > 0.0 { 1.0 } else { LEAK });
            g = g.mul(g.tape().constant(mask));
            g = g.conv_transpose2d(p.get(conv.weight), conv.geom, Some(out.input_hw[i]));
        }
        let s = g.shape();
        g.reshape(&[s[0], s[1..].iter().product()])
    }
}

/// Reconstructor: predicts the warp index and shift from a code pair.
#[derive(Clone, Debug)]
pub struct Reconstructor {
    hidden: Linear,
    out: Linear,
}

impl Reconstructor {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        latent_dim: usize,
        hidden: usize,
        num_warps: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let h = Linear::new(ps, &format!("{name}.hidden"), 2 * latent_dim, hidden, 2f32.sqrt(), rng);
        let out = Linear::new(ps, &format!("{name}.out"), hidden, num_warps + 1, 1.0, rng);
        Self { hidden: h, out }
    }

    /// `(z, z̄) -> [B, M + 1]`: `M` warp logits followed by the shift estimate.
    pub fn forward<'t>(&self, p: &Bound<'t>, z: Var<'t>, z_bar: Var<'t>) -> Var<'t> {
        let h = self.hidden.forward(p, Var::concat(&[z, z_bar], 1)).leaky_relu(LEAK);
        self.out.forward(p, h)
    }
}

/// Warp parameter ids inside the warper's [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub struct WarpLayer {
    pub centers: ParamId,
    pub weights: ParamId,
    pub raw_scales: ParamId,
    pub num_warps: usize,
    pub num_rbfs: usize,
    pub dim: usize,
}

impl WarpLayer {
    pub fn new(ps: &mut ParamSet, name: &str, m: usize, k: usize, d: usize, seed: u64) -> Self {
        let (centers, weights, raw) = crate::warp::init_warp_raw(m, k, d, seed);
        let f32s = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<_>>();
        let centers = ps.add(format!("{name}.centers"), Tensor::new(&[m, k * d], f32s(centers)));
        let weights = ps.add(format!("{name}.weights"), Tensor::new(&[m, k], f32s(weights)));
        let raw_scales = ps.add(format!("{name}.raw_scales"), Tensor::new(&[m, k], f32s(raw)));
        Self { centers, weights, raw_scales, num_warps: m, num_rbfs: k, dim: d }
    }

    /// Shift one code `[1, d]` along the normalized gradient of warp `m`.
    pub fn shift<'t>(&self, p: &Bound<'t>, z: Var<'t>, m: usize, epsilon: f32) -> Var<'t> {
        let (k, d) = (self.num_rbfs, self.dim);
        let v = p.get(self.centers).narrow(0, m, 1).reshape(&[k, d]);
        let b = p.get(self.weights).narrow(0, m, 1).reshape(&[k]);
        let u = p.get(self.raw_scales).narrow(0, m, 1).reshape(&[k]).softplus();
        let diff = z.expand_rows(k).sub(v);
        let e = u.mul(diff.square().sum_rows()).neg().exp();
        let coef = b.mul(u).mul(e).scale(-2.0).reshape(&[1, k]);
        let grad = coef.matmul(diff);
        let norm = grad.square().sum().add_scalar(1e-30).sqrt();
        let dir = grad.div(norm.expand_cols(d));
        z.add(dir.scale(epsilon))
    }
}

/// Append 12 constant attribute planes to single-channel images.
pub fn with_attribute_planes<'t>(tape: &'t Tape, x: Var<'t>, ys: &[[f32; 12]]) -> Var<'t> {
    let s = x.shape();
    let (b, h, w) = (s[0], s[2], s[3]);
    assert_eq!(b, ys.len(), "one attribute vector per image");
    let mut planes = Vec::with_capacity(b * 12 * h * w);
    for y in ys {
        for &bit in y {
            planes.extend(std::iter::repeat_n(bit * 2.0 - 1.0, h * w));
        }
    }
    let planes = tape.constant(Tensor::new(&[b, 12, h, w], planes));
    Var::concat(&[x, planes], 1)
}

/// Row-wise L2 normalization of `[B, F]`.
pub fn l2_normalize<'t>(x: Var<'t>) -> Var<'t> {
    let f = x.shape()[1];
    let norm = x.square().sum_rows().add_scalar(1e-12).sqrt();
    x.div(norm.expand_cols(f))
}
