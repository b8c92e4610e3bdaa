//! Differentiable operations on [`Var`].

use std::rc::Rc;

use crate::kernels::{self, ConvGeom};
use crate::tape::Var;
use crate::tensor::Tensor;

fn dims4(t: &Tensor) -> [usize; 4] {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected NCHW tensor, got {s:?}");
    [s[0], s[1], s[2], s[3]]
}

fn dims2(t: &Tensor) -> [usize; 2] {
    let s = t.shape();
    assert_eq!(s.len(), 2, "expected matrix, got {s:?}");
    [s[0], s[1]]
}

impl<'t> Var<'t> {
    fn unary(self, value: Tensor, local_grad: impl Fn(&Tensor, &Tensor) -> Tensor + 'static) -> Var<'t> {
        // local_grad(grad_out, input) -> grad_in
        let input = self.value();
        self.tape.op(value, &[self], Box::new(move |g, _| vec![Some(local_grad(g, &input))]))
    }

    fn unary_with_output(self, value: Tensor, local_grad: impl Fn(&Tensor, &Tensor) -> Tensor + 'static) -> Var<'t> {
        // local_grad(grad_out, output) -> grad_in
        let out = Rc::new(value.clone());
        self.tape.op(value, &[self], Box::new(move |g, _| vec![Some(local_grad(g, &out))]))
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let value = self.value().zip_map(&other.value(), |a, b| a + b);
        self.tape.op(value, &[self, other], Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let value = self.value().zip_map(&other.value(), |a, b| a - b);
        self.tape.op(value, &[self, other], Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|x| -x))]))
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let value = a.zip_map(&b, |x, y| x * y);
        self.tape.op(
            value,
            &[self, other],
            Box::new(move |g, need| {
                vec![need[0].then(|| g.zip_map(&b, |g, y| g * y)), need[1].then(|| g.zip_map(&a, |g, x| g * x))]
            }),
        )
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let value = a.zip_map(&b, |x, y| x / y);
        let out = Rc::new(value.clone());
        self.tape.op(
            value,
            &[self, other],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.zip_map(&b, |g, y| g / y)),
                    need[1].then(|| {
                        let t = g.zip_map(&out, |g, q| -g * q);
                        t.zip_map(&b, |t, y| t / y)
                    }),
                ]
            }),
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn scale(self, k: f32) -> Var<'t> {
        let value = self.value().scaled(k);
        self.tape.op(value, &[self], Box::new(move |g, _| vec![Some(g.scaled(k))]))
    }

    pub fn add_scalar(self, c: f32) -> Var<'t> {
        let value = self.value().map(|x| x + c);
        self.tape.op(value, &[self], Box::new(|g, _| vec![Some(g.clone())]))
    }

    pub fn square(self) -> Var<'t> {
        let value = self.value().map(|x| x * x);
        self.unary(value, |g, x| g.zip_map(x, |g, x| 2.0 * g * x))
    }

    pub fn sqrt(self) -> Var<'t> {
        let value = self.value().map(f32::sqrt);
        self.unary_with_output(value, |g, y| g.zip_map(y, |g, y| 0.5 * g / y))
    }

    pub fn exp(self) -> Var<'t> {
        let value = self.value().map(f32::exp);
        self.unary_with_output(value, |g, y| g.zip_map(y, |g, y| g * y))
    }

    pub fn ln(self) -> Var<'t> {
        let value = self.value().map(f32::ln);
        self.unary(value, |g, x| g.zip_map(x, |g, x| g / x))
    }

    pub fn abs(self) -> Var<'t> {
        let value = self.value().map(f32::abs);
        self.unary(value, |g, x| {
            g.zip_map(x, |g, x| {
                if x > 0.0 {
                    g
                } else if x < 0.0 {
                    -g
                } else {
                    0.0
                }
            })
        })
    }

    pub fn tanh(self) -> Var<'t> {
        let value = self.value().map(f32::tanh);
        self.unary_with_output(value, |g, y| g.zip_map(y, |g, y| g * (1.0 - y * y)))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.value().map(sigmoid);
        self.unary_with_output(value, |g, y| g.zip_map(y, |g, y| g * y * (1.0 - y)))
    }

    pub fn relu(self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(self, slope: f32) -> Var<'t> {
        let value = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(value, move |g, x| g.zip_map(x, |g, x| if x > 0.0 { g } else { slope * g }))
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(self) -> Var<'t> {
        let value = self.value().map(softplus);
        self.unary(value, |g, x| g.zip_map(x, |g, x| g * sigmoid(x)))
    }

    /// Elementwise `min(x, cap)`; the gradient is cut where the cap is active.
    pub fn clamp_max(self, cap: f32) -> Var<'t> {
        let value = self.value().map(|x| x.min(cap));
        self.unary(value, move |g, x| g.zip_map(x, |g, x| if x < cap { g } else { 0.0 }))
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        let old = self.shape();
        let value = (*self.value()).clone().reshape(shape);
        self.tape.op(value, &[self], Box::new(move |g, _| vec![Some(g.clone().reshape(&old))]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(self) -> Var<'t> {
        let v = self.value();
        let shape = v.shape().to_vec();
        let value = Tensor::scalar(v.sum());
        self.tape.op(value, &[self], Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f32;
        self.sum().scale(1.0 / n)
    }

    /// `[n, f] -> [n]`: sum over the trailing axis.
    pub fn sum_rows(self) -> Var<'t> {
        let v = self.value();
        let [n, f] = dims2(&v);
        let value = Tensor::new(&[n], v.data().chunks(f).map(|r| r.iter().sum()).collect());
        self.tape.op(
            value,
            &[self],
            Box::new(move |g, _| {
                let data = g.data().iter().flat_map(|&x| std::iter::repeat_n(x, f)).collect();
                vec![Some(Tensor::new(&[n, f], data))]
            }),
        )
    }

    /// `[n, f] -> [f]`: sum over the leading axis.
    pub fn sum_cols(self) -> Var<'t> {
        let v = self.value();
        let [n, f] = dims2(&v);
        let mut acc = vec![0.0; f];
        for row in v.data().chunks(f) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        self.tape.op(
            Tensor::new(&[f], acc),
            &[self],
            Box::new(move |g, _| {
                let mut data = Vec::with_capacity(n * f);
                for _ in 0..n {
                    data.extend_from_slice(g.data());
                }
                vec![Some(Tensor::new(&[n, f], data))]
            }),
        )
    }

    /// Repeat a vector of `f` elements as `n` rows: `[f] | [1, f] -> [n, f]`.
    pub fn expand_rows(self, n: usize) -> Var<'t> {
        let v = self.value();
        let f = v.len();
        let in_shape = v.shape().to_vec();
        let mut data = Vec::with_capacity(n * f);
        for _ in 0..n {
            data.extend_from_slice(v.data());
        }
        self.tape.op(
            Tensor::new(&[n, f], data),
            &[self],
            Box::new(move |g, _| {
                let mut acc = vec![0.0; f];
                for row in g.data().chunks(f) {
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += x;
                    }
                }
                vec![Some(Tensor::new(&in_shape, acc))]
            }),
        )
    }

    /// Repeat each of `n` scalars across `f` columns: `[n] | [n, 1] -> [n, f]`.
    pub fn expand_cols(self, f: usize) -> Var<'t> {
        let v = self.value();
        let n = v.len();
        let in_shape = v.shape().to_vec();
        let data = v.data().iter().flat_map(|&x| std::iter::repeat_n(x, f)).collect();
        self.tape.op(
            Tensor::new(&[n, f], data),
            &[self],
            Box::new(move |g, _| {
                let acc = g.data().chunks(f).map(|r| r.iter().sum()).collect();
                vec![Some(Tensor::new(&in_shape, acc))]
            }),
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'t> {
        let v = self.value();
        let shape = v.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        self.tape.op(
            Tensor::new(&out_shape, data),
            &[self],
            Box::new(move |g, _| {
                let mut gi = Tensor::zeros(&shape);
                let gd = gi.data_mut();
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    gd[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gi)]
            }),
        )
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Var<'t> {
        assert!(!parts.is_empty());
        let tape = parts[0].tape;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let sizes: Vec<usize> = values
            .iter()
            .map(|v| {
                let s = v.shape();
                assert_eq!(s.len(), base.len());
                assert!(s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b), "concat mismatch");
                s[axis]
            })
            .collect();
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &sz) in values.iter().zip(&sizes) {
                data.extend_from_slice(&v.data()[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let part_shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        tape.op(
            Tensor::new(&shape, data),
            parts,
            Box::new(move |g, need| {
                let mut offset = 0;
                let mut out = Vec::with_capacity(sizes.len());
                for (i, &sz) in sizes.iter().enumerate() {
                    if need[i] {
                        let mut d = Vec::with_capacity(outer * sz * inner);
                        for o in 0..outer {
                            let b = (o * total + offset) * inner;
                            d.extend_from_slice(&g.data()[b..b + sz * inner]);
                        }
                        out.push(Some(Tensor::new(&part_shapes[i], d)));
                    } else {
                        out.push(None);
                    }
                    offset += sz;
                }
                out
            }),
        )
    }

    /// `[m, k] · [k, n]`, with either operand optionally transposed.
    pub fn matmul_t(self, other: Var<'t>, a_trans: bool, b_trans: bool) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        let [ar, ac] = dims2(&a);
        let [br, bc] = dims2(&b);
        let (m, k) = if a_trans { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if b_trans { (bc, br) } else { (br, bc) };
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut c = vec![0.0; m * n];
        kernels::gemm(m, k, n, a.data(), a_trans, b.data(), b_trans, &mut c, false);
        self.tape.op(
            Tensor::new(&[m, n], c),
            &[self, other],
            Box::new(move |g, need| {
                // C = op(A) op(B); dop(A) = G op(B)ᵀ, dop(B) = op(A)ᵀ G
                let ga = need[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    if a_trans {
                        // dA (k×m) = op(B) Gᵀ
                        kernels::gemm(k, n, m, b.data(), b_trans, g.data(), true, &mut d, false);
                    } else {
                        kernels::gemm(m, n, k, g.data(), false, b.data(), !b_trans, &mut d, false);
                    }
                    Tensor::new(a.shape(), d)
                });
                let gb = need[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    if b_trans {
                        // dB (n×k) = Gᵀ op(A)
                        kernels::gemm(n, m, k, g.data(), true, a.data(), a_trans, &mut d, false);
                    } else {
                        kernels::gemm(k, m, n, a.data(), !a_trans, g.data(), false, &mut d, false);
                    }
                    Tensor::new(b.shape(), d)
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(other, false, false)
    }

    /// Affine map of row vectors: `x [n, in] · wᵀ + b` with `w: [out, in]`.
    pub fn linear(self, weight: Var<'t>, bias: Var<'t>) -> Var<'t> {
        let y = self.matmul_t(weight, false, true);
        let n = y.shape()[0];
        y.add(bias.expand_rows(n))
    }

    pub fn conv2d(self, weight: Var<'t>, geom: ConvGeom) -> Var<'t> {
        let (x, w) = (self.value(), weight.value());
        let xs = dims4(&x);
        let ws = dims4(&w);
        assert_eq!(ws[1], xs[1], "conv2d channel mismatch");
        assert_eq!((ws[2], ws[3]), (geom.kernel, geom.kernel));
        let (y, ys) = kernels::conv2d(x.data(), xs, w.data(), ws[0], geom);
        self.tape.op(
            Tensor::new(&ys, y),
            &[self, weight],
            Box::new(move |g, need| {
                let gx = need[0].then(|| {
                    let (d, _) = kernels::conv_transpose2d(g.data(), ys, w.data(), xs[1], geom, (xs[2], xs[3]));
                    Tensor::new(&xs, d)
                });
                let gw = need[1].then(|| Tensor::new(&ws, kernels::conv_weight_grad(g.data(), ys, x.data(), xs, geom)));
                vec![gx, gw]
            }),
        )
    }

    /// Transposed convolution with weight `[ci, co, k, k]`; output side is
    /// `(n - 1) * stride + k - 2 * pad` unless given.
    pub fn conv_transpose2d(self, weight: Var<'t>, geom: ConvGeom, out_hw: Option<(usize, usize)>) -> Var<'t> {
        let (x, w) = (self.value(), weight.value());
        let xs = dims4(&x);
        let ws = dims4(&w);
        assert_eq!(ws[0], xs[1], "conv_transpose2d channel mismatch");
        let out_hw = out_hw.unwrap_or((geom.transposed_len(xs[2]), geom.transposed_len(xs[3])));
        let (y, ys) = kernels::conv_transpose2d(x.data(), xs, w.data(), ws[1], geom, out_hw);
        self.tape.op(
            Tensor::new(&ys, y),
            &[self, weight],
            Box::new(move |g, need| {
                let gx = need[0].then(|| {
                    let (d, s) = kernels::conv2d(g.data(), ys, w.data(), ws[0], geom);
                    debug_assert_eq!(s, xs);
                    Tensor::new(&xs, d)
                });
                let gw = need[1].then(|| Tensor::new(&ws, kernels::conv_weight_grad(x.data(), xs, g.data(), ys, geom)));
                vec![gx, gw]
            }),
        )
    }

    /// Add a per-channel bias `[c]` to an NCHW tensor.
    pub fn add_channel_bias(self, bias: Var<'t>) -> Var<'t> {
        let (x, b) = (self.value(), bias.value());
        let [n, c, h, w] = dims4(&x);
        assert_eq!(b.len(), c);
        let hw = h * w;
        let mut y = (*x).clone();
        for (i, plane) in y.data_mut().chunks_mut(hw).enumerate() {
            let bi = b.data()[i % c];
            plane.iter_mut().for_each(|v| *v += bi);
        }
        let bshape = b.shape().to_vec();
        self.tape.op(
            y,
            &[self, bias],
            Box::new(move |g, need| {
                let gb = need[1].then(|| {
                    let mut acc = vec![0.0; c];
                    for (i, plane) in g.data().chunks(hw).enumerate() {
                        acc[i % c] += plane.iter().sum::<f32>();
                    }
                    let _ = n;
                    Tensor::new(&bshape, acc)
                });
                vec![need[0].then(|| g.clone()), gb]
            }),
        )
    }

    /// Multiply each channel of an NCHW tensor by `scale[c]`.
    pub fn mul_channel(self, scale: Var<'t>) -> Var<'t> {
        let (x, s) = (self.value(), scale.value());
        let [_, c, h, w] = dims4(&x);
        assert_eq!(s.len(), c);
        let hw = h * w;
        let mut y = (*x).clone();
        for (i, plane) in y.data_mut().chunks_mut(hw).enumerate() {
            let si = s.data()[i % c];
            plane.iter_mut().for_each(|v| *v *= si);
        }
        let sshape = s.shape().to_vec();
        self.tape.op(
            y,
            &[self, scale],
            Box::new(move |g, need| {
                let gx = need[0].then(|| {
                    let mut gx = g.clone();
                    for (i, plane) in gx.data_mut().chunks_mut(hw).enumerate() {
                        let si = s.data()[i % c];
                        plane.iter_mut().for_each(|v| *v *= si);
                    }
                    gx
                });
                let gs = need[1].then(|| {
                    let mut acc = vec![0.0; c];
                    for (i, (gp, xp)) in g.data().chunks(hw).zip(x.data().chunks(hw)).enumerate() {
                        acc[i % c] += gp.iter().zip(xp).map(|(a, b)| a * b).sum::<f32>();
                    }
                    Tensor::new(&sshape, acc)
                });
                vec![gx, gs]
            }),
        )
    }

    /// Normalize every (sample, channel) plane to zero mean and unit variance.
    pub fn instance_norm(self, eps: f32) -> Var<'t> {
        let x = self.value();
        let [_, _, h, w] = dims4(&x);
        let hw = h * w;
        let mut y = (*x).clone();
        let mut inv_std = Vec::with_capacity(x.len() / hw);
        for plane in y.data_mut().chunks_mut(hw) {
            let mean = plane.iter().sum::<f32>() / hw as f32;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / hw as f32;
            let is = 1.0 / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let out = Rc::new(y.clone());
        self.tape.op(
            y,
            &[self],
            Box::new(move |g, _| {
                // dx = is/N * (N g - Σg - ŷ Σ(g ŷ))
                let mut gx = g.clone();
                let nf = hw as f32;
                for ((gp, yp), &is) in gx.data_mut().chunks_mut(hw).zip(out.data().chunks(hw)).zip(&inv_std) {
                    let sg: f32 = gp.iter().sum();
                    let sgy: f32 = gp.iter().zip(yp).map(|(a, b)| a * b).sum();
                    for (gv, &yv) in gp.iter_mut().zip(yp) {
                        *gv = is / nf * (nf * *gv - sg - yv * sgy);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Row-wise log-sum-exp: `[n, m] -> [n]`.
    pub fn logsumexp_rows(self) -> Var<'t> {
        let x = self.value();
        let [n, m] = dims2(&x);
        let lse: Vec<f32> = x
            .data()
            .chunks(m)
            .map(|r| {
                let mx = r.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                mx + r.iter().map(|v| (v - mx).exp()).sum::<f32>().ln()
            })
            .collect();
        let lse_c = lse.clone();
        self.tape.op(
            Tensor::new(&[n], lse),
            &[self],
            Box::new(move |g, _| {
                let mut gx = Tensor::zeros(&[n, m]);
                for (i, (row, out)) in x.data().chunks(m).zip(gx.data_mut().chunks_mut(m)).enumerate() {
                    for (o, v) in out.iter_mut().zip(row) {
                        *o = g.data()[i] * (v - lse_c[i]).exp();
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
