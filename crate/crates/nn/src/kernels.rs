//! Raw compute kernels: GEMM and the three convolution primitives.
//!
//! Everything is NCHW. A 2-D convolution with weight `[co, ci, k, k]` and its
//! transpose share one im2col geometry, so three kernels cover all forward and
//! backward passes:
//!
//! * `conv2d`              y = W · im2col(x)
//! * `conv_transpose2d`    y = col2im(Wᵀ · x)         (adjoint of `conv2d` in x)
//! * `conv_weight_grad`    gW = Σₙ g · im2col(x)ᵀ     (adjoint of `conv2d` in W)

/// Geometry of a strided 2-D convolution over a single image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self { kernel, stride, pad }
    }

    /// Output side of `conv2d` for input side `n`.
    pub fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Natural output side of `conv_transpose2d` for input side `n`.
    pub fn transposed_len(&self, n: usize) -> usize {
        (n - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// `c = a · b (+ c if accumulate)` with optional transposition of either
/// operand. `a` is `m×k` (or `k×m` when transposed), `b` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices were length-checked above against the strides used.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f32], channels: usize, h: usize, w: usize, g: ConvGeom, oh: usize, ow: usize, cols: &mut [f32]) {
    let k = g.kernel;
    let plane = oh * ow;
    for c in 0..channels {
        let src = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        drow.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= w as isize { 0.0 } else { srow[ix as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f32], channels: usize, h: usize, w: usize, g: ConvGeom, oh: usize, ow: usize, x: &mut [f32]) {
    let k = g.kernel;
    let plane = oh * ow;
    for c in 0..channels {
        let dst = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    let srow = &src[oy * ow..(oy + 1) * ow];
                    for (ox, s) in srow.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            drow[ix as usize] += s;
                        }
                    }
                }
            }
        }
    }
}

/// `x: [n, ci, h, w]`, `weight: [co, ci, k, k]` → `[n, co, oh, ow]`.
pub fn conv2d(x: &[f32], xs: [usize; 4], weight: &[f32], co: usize, g: ConvGeom) -> (Vec<f32>, [usize; 4]) {
    let [n, ci, h, w] = xs;
    let (oh, ow) = (g.out_len(h), g.out_len(w));
    let kk = ci * g.kernel * g.kernel;
    let mut cols = vec![0.0; kk * oh * ow];
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        im2col(&x[b * ci * h * w..(b + 1) * ci * h * w], ci, h, w, g, oh, ow, &mut cols);
        gemm(co, kk, oh * ow, weight, false, &cols, false, &mut out[b * co * oh * ow..(b + 1) * co * oh * ow], false);
    }
    (out, [n, co, oh, ow])
}

/// `x: [n, ci, h, w]`, `weight: [ci, co, k, k]` → `[n, co, oh, ow]` where
/// `(oh, ow)` is given explicitly (it is ambiguous when strides do not divide).
pub fn conv_transpose2d(
    x: &[f32],
    xs: [usize; 4],
    weight: &[f32],
    co: usize,
    g: ConvGeom,
    out_hw: (usize, usize),
) -> (Vec<f32>, [usize; 4]) {
    let [n, ci, h, w] = xs;
    let (oh, ow) = out_hw;
    debug_assert_eq!(g.out_len(oh), h);
    debug_assert_eq!(g.out_len(ow), w);
    let kk = co * g.kernel * g.kernel;
    let mut cols = vec![0.0; kk * h * w];
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        gemm(kk, ci, h * w, weight, true, &x[b * ci * h * w..(b + 1) * ci * h * w], false, &mut cols, false);
        col2im(&cols, co, oh, ow, g, h, w, &mut out[b * co * oh * ow..(b + 1) * co * oh * ow]);
    }
    (out, [n, co, oh, ow])
}

/// Gradient of `conv2d` with respect to its weight: `grad: [n, co, oh, ow]`,
/// `x: [n, ci, h, w]` → `[co, ci, k, k]`.
pub fn conv_weight_grad(grad: &[f32], gs: [usize; 4], x: &[f32], xs: [usize; 4], g: ConvGeom) -> Vec<f32> {
    let [n, co, oh, ow] = gs;
    let [nx, ci, h, w] = xs;
    assert_eq!(n, nx);
    let kk = ci * g.kernel * g.kernel;
    let mut cols = vec![0.0; kk * oh * ow];
    let mut out = vec![0.0; co * kk];
    for b in 0..n {
        im2col(&x[b * ci * h * w..(b + 1) * ci * h * w], ci, h, w, g, oh, ow, &mut cols);
        gemm(co, oh * ow, kk, &grad[b * co * oh * ow..(b + 1) * co * oh * ow], false, &cols, true, &mut out, true);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f32], xs: [usize; 4], wt: &[f32], co: usize, g: ConvGeom) -> Vec<f32> {
        let [n, ci, h, w] = xs;
        let (oh, ow) = (g.out_len(h), g.out_len(w));
        let k = g.kernel;
        let mut out = vec![0.0; n * co * oh * ow];
        for b in 0..n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += x[((b * ci + c) * h + iy as usize) * w + ix as usize]
                                        * wt[((o * ci + c) * k + ky) * k + kx];
                                }
                            }
                        }
                        out[((b * co + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(len: usize, phase: f32) -> Vec<f32> {
        (0..len).map(|i| (i as f32 * 0.37 + phase).sin()).collect()
    }

    #[test]
    fn conv2d_matches_direct_sum() {
        let xs = [2, 3, 9, 8];
        let g = ConvGeom::new(4, 2, 1);
        let x = ramp(2 * 3 * 9 * 8, 0.1);
        let wt = ramp(5 * 3 * 16, 1.3);
        let (y, ys) = conv2d(&x, xs, &wt, 5, g);
        assert_eq!(ys, [2, 5, 4, 4]);
        let want = naive_conv(&x, xs, &wt, 5, g);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> and <conv_w(x), y> == <w, weight_grad(y, x)>
        let xs = [2, 3, 8, 8];
        let g = ConvGeom::new(4, 2, 1);
        let x = ramp(2 * 3 * 64, 0.2);
        let wt = ramp(4 * 3 * 16, 0.7);
        let (y, ys) = conv2d(&x, xs, &wt, 4, g);
        let probe = ramp(y.len(), 2.1);
        let lhs: f32 = y.iter().zip(&probe).map(|(a, b)| a * b).sum();
        let (xt, _) = conv_transpose2d(&probe, ys, &wt, 3, g, (8, 8));
        let rhs: f32 = xt.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3 * lhs.abs().max(1.0));
        let gw = conv_weight_grad(&probe, ys, &x, xs, g);
        let rhs_w: f32 = gw.iter().zip(&wt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-3 * lhs.abs().max(1.0));
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, &mut c, false);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, false);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
