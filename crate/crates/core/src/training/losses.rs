//! Loss terms, as plain functions on values and as tape expressions.

use irisforge_nn::{ParamSet, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::models::Critic;

/// Cap applied to each identity-push term before it is maximized.
pub const IDENTITY_CLAMP: f64 = 10.0;

/// Offset inside the gradient-norm square root.
const NORM_EPS: f32 = 1e-16;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `(L_G, L_D) = (−mean(d_fake), mean(d_fake) − mean(d_real))`.
pub fn adversarial_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (r, f) = (mean(d_real), mean(d_fake));
    Ok((-f, f - r))
}

fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Squared L2 distance between the style code of a generated image and
/// that of its reference.
pub fn style_recon_loss(s_generated: &[f64], s_reference: &[f64]) -> Result<f64> {
    squared_distance(s_generated, s_reference)
}

/// Unclamped `(L_Ident-Recon, L_Ident-Cls)` for one generated/source pair.
pub fn identity_push_losses(
    code_gen: &[f64],
    code_src: &[f64],
    feat_gen: &[f64],
    feat_src: &[f64],
) -> Result<(f64, f64)> {
    Ok((squared_distance(code_gen, code_src)?, squared_distance(feat_gen, feat_src)?))
}

/// Amount an identity-push term contributes before its negative weight.
pub fn clamp_push(value: f64, tau: f64) -> f64 {
    value.min(tau)
}

/// Cross-entropy of the warp logits plus `λ_ε |ε̂ − ε|`.
pub fn warp_regression_loss(
    m_true: usize,
    eps_true: f64,
    m_logits: &[f64],
    eps_pred: f64,
    lambda_eps: f64,
) -> Result<f64> {
    if m_true >= m_logits.len() {
        return Err(Error::IndexOutOfRange { index: m_true, len: m_logits.len() });
    }
    let mx = m_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + m_logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    Ok(lse - m_logits[m_true] + lambda_eps * (eps_pred - eps_true).abs())
}

fn bce_with_logits(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of attribute logits against 0/1 targets.
pub fn attribute_loss(logits: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(y.len(), logits.len())?;
    if logits.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(logits.iter().zip(y).map(|(&x, &t)| bce_with_logits(x, t)).sum::<f64>() / logits.len() as f64)
}

/// A critic whose input gradient can be expressed on a tape.
pub trait InputGradient {
    /// `[B, n]` gradients of the realness score with respect to each input row.
    fn input_gradient<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Var<'t>;
}

/// `D(x) = w · x + b`.
#[derive(Clone, Debug)]
pub struct LinearCritic {
    pub weight: Vec<f32>,
}

impl InputGradient for LinearCritic {
    fn input_gradient<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Var<'t> {
        let b = x.shape()[0];
        tape.constant(Tensor::new(&[1, self.weight.len()], self.weight.clone())).expand_rows(b)
    }
}

/// `D(x) = c`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantCritic;

impl InputGradient for ConstantCritic {
    fn input_gradient<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Var<'t> {
        let s = x.shape();
        tape.constant(Tensor::zeros(&[s[0], s[1..].iter().product()]))
    }
}

/// The convolutional critic with fixed parameters.
pub struct NetCritic<'a> {
    pub arch: &'a Critic,
    pub params: &'a ParamSet,
}

impl InputGradient for NetCritic<'_> {
    fn input_gradient<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Var<'t> {
        let p = self.params.bind(tape, false);
        let out = self.arch.forward(&p, x);
        self.arch.input_gradient(&p, &out)
    }
}

/// `α x_real + (1 − α) x_fake` with one `α` per sample.
pub fn interpolate(real: &Tensor, fake: &Tensor, alpha: &[f32]) -> Result<Tensor> {
    if real.shape() != fake.shape() {
        return Err(Error::DimMismatch { expected: real.len(), got: fake.len() });
    }
    let b = real.shape()[0];
    check_dims(b, alpha.len())?;
    let per = real.len() / b.max(1);
    let data = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(i, (&r, &f))| {
            let a = alpha[i / per];
            a * r + (1.0 - a) * f
        })
        .collect();
    Ok(Tensor::new(real.shape(), data))
}

/// `mean_b (‖g_b‖ − 1)²` for per-sample gradients `[B, n]`.
pub fn penalty_from_gradient(g: Var<'_>) -> Var<'_> {
    g.square().sum_rows().add_scalar(NORM_EPS).sqrt().add_scalar(-1.0).square().mean()
}

/// Gradient penalty at interpolates between real and fake batches.
pub fn gradient_penalty(critic: &impl InputGradient, real: &Tensor, fake: &Tensor, alpha: &[f32]) -> Result<f64> {
    let x = interpolate(real, fake, alpha)?;
    let tape = Tape::new();
    let g = critic.input_gradient(&tape, tape.constant(x));
    Ok(penalty_from_gradient(g).value().item() as f64)
}

/// Mean BCE between `[B, A]` logits and constant targets.
pub(crate) fn attribute_loss_var<'t>(logits: Var<'t>, targets: Var<'t>) -> Var<'t> {
    logits.softplus().sub(logits.mul(targets)).mean()
}

/// Mean cross-entropy between `[B, M]` logits and one-hot targets.
pub(crate) fn cross_entropy_var<'t>(logits: Var<'t>, one_hot: Var<'t>) -> Var<'t> {
    logits.logsumexp_rows().sub(logits.mul(one_hot).sum_rows()).mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversarial_example() {
        let (g, d) = adversarial_losses(&[0.8, 1.0], &[0.2, 0.4]).unwrap();
        assert!((g + 0.3).abs() < 1e-12 && (d + 0.6).abs() < 1e-12);
        assert!(matches!(adversarial_losses(&[], &[1.0]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn tape_bce_matches_scalar() {
        let logits = [-3.0f32, 0.0, 2.5, 10.0];
        let y = [1.0f32, 0.0, 1.0, 0.0];
        let tape = Tape::new();
        let l = attribute_loss_var(
            tape.constant(Tensor::new(&[1, 4], logits.to_vec())),
            tape.constant(Tensor::new(&[1, 4], y.to_vec())),
        );
        let lf: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        assert!((l.value().item() as f64 - attribute_loss(&lf, &yf).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn tape_cross_entropy_matches_scalar() {
        let logits = [0.3f32, -1.0, 2.0];
        let tape = Tape::new();
        let l = cross_entropy_var(
            tape.constant(Tensor::new(&[1, 3], logits.to_vec())),
            tape.constant(Tensor::new(&[1, 3], vec![0.0, 0.0, 1.0])),
        );
        let lf: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let want = warp_regression_loss(2, 0.0, &lf, 0.0, 1.0).unwrap();
        assert!((l.value().item() as f64 - want).abs() < 1e-6);
    }
}
