//! One optimization step of each pathway.

use irisforge_nn::{Bound, Tape, Tensor, Var};
use rand::Rng;

use super::losses::{attribute_loss_var, cross_entropy_var, penalty_from_gradient};
use super::{LossRecord, Optimizers, TrainConfig};
use crate::attribute::{AttributeVector, ATTRIBUTE_BITS};
use crate::error::{Error, Result};
use crate::image::{batch_tensor, Image};
use crate::models::nets::{l2_normalize, with_attribute_planes};
use crate::models::{ModelBundle, WarpLayer};
use crate::warp::{self, LatentCode, WarpParams, GRADIENT_FLOOR};

/// Sources `x_i` and style references `(x_j, y_j)`.
#[derive(Clone, Debug, Default)]
pub struct BatchPair<'a> {
    pub sources: Vec<&'a Image>,
    pub references: Vec<&'a Image>,
    pub attributes: Vec<AttributeVector>,
}

impl<'a> BatchPair<'a> {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.references.len() != self.len() || self.attributes.len() != self.len() {
            return Err(Error::DimMismatch { expected: self.len(), got: self.references.len() });
        }
        Ok(())
    }

    fn select(&self, keep: &[usize]) -> BatchPair<'a> {
        BatchPair {
            sources: keep.iter().map(|&i| self.sources[i]).collect(),
            references: keep.iter().map(|&i| self.references[i]).collect(),
            attributes: keep.iter().map(|&i| self.attributes[i]).collect(),
        }
    }
}

fn attribute_targets(ys: &[AttributeVector]) -> Tensor {
    Tensor::new(&[ys.len(), ATTRIBUTE_BITS], ys.iter().flat_map(|y| y.as_f32()).collect())
}

fn planes(ys: &[AttributeVector]) -> Vec<[f32; ATTRIBUTE_BITS]> {
    ys.iter().map(|y| y.as_f32()).collect()
}

fn finite(name: &str, v: f64, step: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { name: name.to_string(), step })
    }
}

fn scalar(v: Var<'_>) -> f64 {
    v.value().item() as f64
}

struct CriticLosses {
    adversarial: f64,
    gp: f64,
}

/// Critic update on real references against detached generated images:
/// `mean D(fake) − mean D(real) + λ_gp GP + λ_attr BCE(real attributes)`.
#[allow(clippy::too_many_arguments)]
fn critic_step(
    bundle: &mut ModelBundle,
    opt: &mut Optimizers,
    real: &Tensor,
    fake: &Tensor,
    ys: &[AttributeVector],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    step: usize,
) -> Result<CriticLosses> {
    let b = ys.len();
    let alpha: Vec<f32> = (0..b).map(|_| rng.random::<f32>()).collect();
    let mixed = super::interpolate(real, fake, &alpha)?;
    let d = &bundle.discriminator;
    let tape = Tape::new();
    let p = d.params.bind(&tape, true);
    let out_real = d.arch.forward(&p, tape.constant(real.clone()));
    let out_fake = d.arch.forward(&p, tape.constant(fake.clone()));
    let adversarial = out_fake.real.mean().sub(out_real.real.mean());
    let attr = attribute_loss_var(out_real.attr, tape.constant(attribute_targets(ys)));
    let out_mix = d.arch.forward(&p, tape.constant(mixed));
    let gp = penalty_from_gradient(d.arch.input_gradient(&p, &out_mix));
    let total = adversarial.add(gp.scale(cfg.lambda_gp)).add(attr.scale(cfg.lambda_attr));
    let losses =
        CriticLosses { adversarial: finite("L_D", scalar(adversarial), step)?, gp: finite("gp", scalar(gp), step)? };
    finite("critic total", scalar(total), step)?;
    let grads = p.grads(&tape.backward(total));
    opt.discriminator.step(&mut bundle.discriminator.params, &grads);
    Ok(losses)
}

/// Style pathway: `x̄ = G([E(x_i) ‖ E_S(x_j, y_j)])` with the warp bypassed.
/// Updates `E_S`, `G` and `D`; `E`, `W` and `C` are untouched.
pub fn style_pathway_step(
    bundle: &mut ModelBundle,
    batch: &BatchPair<'_>,
    cfg: &TrainConfig,
    opt: &mut Optimizers,
    rng: &mut impl Rng,
    step: usize,
) -> Result<LossRecord> {
    batch.check()?;
    let ys = planes(&batch.attributes);
    let real = batch_tensor(&batch.references);
    let tape = Tape::new();
    let pe = bundle.identity_encoder.params.bind(&tape, false);
    let ps = bundle.style_encoder.params.bind(&tape, true);
    let pg = bundle.generator.params.bind(&tape, true);
    let pd = bundle.discriminator.params.bind(&tape, false);

    let d = bundle.identity_encoder.arch.forward(&pe, tape.constant(batch_tensor(&batch.sources)));
    let es = &bundle.style_encoder.arch;
    let s = es.forward(&ps, with_attribute_planes(&tape, tape.constant(real.clone()), &ys));
    let fake = bundle.generator.arch.forward(&pg, Var::concat(&[d, s], 1));
    let out = bundle.discriminator.arch.forward(&pd, fake);
    let g_adv = out.real.mean().neg();
    let attr = attribute_loss_var(out.attr, tape.constant(attribute_targets(&batch.attributes)));
    let s_fake = es.forward(&ps, with_attribute_planes(&tape, fake, &ys));
    let recon = s_fake.sub(s.detach()).square().sum_rows().mean();
    let total = g_adv.add(recon.scale(cfg.lambda_sty)).add(attr.scale(cfg.lambda_attr));

    let mut record = LossRecord {
        g_sty: Some(finite("L_G-Sty", scalar(g_adv), step)?),
        sty_recon: Some(finite("L_Sty-Recon", scalar(recon), step)?),
        attribute: Some(finite("attribute", scalar(attr), step)?),
        ..LossRecord::default()
    };
    finite("generator total", scalar(total), step)?;
    let fake_value = (*fake.value()).clone();
    let grads = tape.backward(total);
    let gs = ps.grads(&grads);
    let gg = pg.grads(&grads);
    drop(grads);
    opt.style_encoder.step(&mut bundle.style_encoder.params, &gs);
    opt.generator.step(&mut bundle.generator.params, &gg);

    let critic = critic_step(bundle, opt, &real, &fake_value, &batch.attributes, cfg, rng, step)?;
    record.d_sty = Some(critic.adversarial);
    record.gp = Some(critic.gp);
    Ok(record)
}

fn gradient_ok(wp: &WarpParams, m: usize, z: &[f32]) -> bool {
    warp::warp_gradient(wp, m, &LatentCode::from_f32(z))
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt() >= GRADIENT_FLOOR)
        .unwrap_or(false)
}

/// Shift each row of `z` by its drawn `(m, ε)`, leaving `skip` rows as they are.
fn shift_rows<'t>(layer: &WarpLayer, p: &Bound<'t>, z: Var<'t>, draws: &[(usize, f64)], skip: &[bool]) -> Vec<Var<'t>> {
    draws
        .iter()
        .enumerate()
        .map(|(i, &(m, eps))| {
            let zi = z.narrow(0, i, 1);
            if skip[i] {
                zi
            } else {
                layer.shift(p, zi, m, eps as f32)
            }
        })
        .collect()
}

/// Identity pathway: `z = E(x_i)`, `z̄ = z + ε ∇f_m/‖∇f_m‖`,
/// `x̄ = G([z̄ ‖ E_S(x_j, y_j)])`, and the reconstructor predicts `(m, ε)`
/// from `(z, z̄)`. Updates `E`, `W` (with the reconstructor), `G` and `D`;
/// `E_S` and `C` are untouched.
pub fn identity_pathway_step(
    bundle: &mut ModelBundle,
    batch: &BatchPair<'_>,
    cfg: &TrainConfig,
    opt: &mut Optimizers,
    rng: &mut impl Rng,
    step: usize,
) -> Result<LossRecord> {
    batch.check()?;
    let num_warps = bundle.config.num_warps;
    let (eps_lo, eps_hi) = cfg.epsilon_range;
    let bypass = eps_hi == 0.0;
    let wp = bundle.warp_params();

    // draw (m, ε) per sample, redrawing while the warp gradient at z is degenerate
    let z_values = crate::models::rows(&{
        let tape = Tape::new();
        let pe = bundle.identity_encoder.params.bind(&tape, false);
        let z = bundle.identity_encoder.arch.forward(&pe, tape.constant(batch_tensor(&batch.sources)));
        (*z.value()).clone()
    });
    let mut keep = Vec::new();
    let mut draws = Vec::new();
    for (b, z) in z_values.iter().enumerate() {
        for _ in 0..=cfg.max_resamples {
            let m = rng.random_range(0..num_warps);
            let magnitude = if bypass { 0.0 } else { rng.random_range(eps_lo..=eps_hi) };
            let eps = if rng.random::<bool>() { magnitude } else { -magnitude };
            if bypass || gradient_ok(&wp, m, z) {
                keep.push(b);
                draws.push((m, eps));
                break;
            }
        }
    }
    let skipped = batch.len() - keep.len();
    if keep.is_empty() {
        return Ok(LossRecord { skipped, ..LossRecord::default() });
    }
    let batch = batch.select(&keep);
    let n = batch.len();
    let ys = planes(&batch.attributes);
    let real = batch_tensor(&batch.references);
    let sources = batch_tensor(&batch.sources);

    let tape = Tape::new();
    let pe = bundle.identity_encoder.params.bind(&tape, true);
    let pw = bundle.warper.params.bind(&tape, true);
    let pg = bundle.generator.params.bind(&tape, true);
    let pd = bundle.discriminator.params.bind(&tape, false);
    let ps = bundle.style_encoder.params.bind(&tape, false);
    let pc = bundle.classifier.params.bind(&tape, false);
    let enc = &bundle.identity_encoder.arch;
    let warp_layer = &bundle.warper.arch.warp;
    let z = enc.forward(&pe, tape.constant(sources.clone()));
    let z_bar = Var::concat(&shift_rows(warp_layer, &pw, z, &draws, &vec![bypass; n]), 0);
    let s = bundle.style_encoder.arch.forward(&ps, with_attribute_planes(&tape, tape.constant(real.clone()), &ys));
    let fake = bundle.generator.arch.forward(&pg, Var::concat(&[z_bar, s], 1));

    let out = bundle.discriminator.arch.forward(&pd, fake);
    let g_adv = out.real.mean().neg();
    let attr = attribute_loss_var(out.attr, tape.constant(attribute_targets(&batch.attributes)));

    let pred = bundle.warper.arch.recon.forward(&pw, z, z_bar);
    let mut one_hot = vec![0.0f32; n * num_warps];
    for (i, &(m, _)) in draws.iter().enumerate() {
        one_hot[i * num_warps + m] = 1.0;
    }
    let eps_true = tape.constant(Tensor::new(&[n, 1], draws.iter().map(|&(_, e)| e as f32).collect()));
    let ce = cross_entropy_var(pred.narrow(1, 0, num_warps), tape.constant(Tensor::new(&[n, num_warps], one_hot)));
    let w_reg = ce.add(pred.narrow(1, num_warps, 1).sub(eps_true).abs().mean().scale(cfg.lambda_eps));

    // E_D(x̄) against the detached source code; rows whose warp gradient
    // vanishes at E(x̄) are compared unshifted
    let z_fake = enc.forward(&pe, fake);
    let fake_rows = crate::models::rows(&z_fake.value());
    let skip: Vec<bool> = (0..n).map(|i| bypass || !gradient_ok(&wp, draws[i].0, &fake_rows[i])).collect();
    let z_fake_bar = Var::concat(&shift_rows(warp_layer, &pw, z_fake, &draws, &skip), 0);
    let tau = cfg.identity_clamp;
    let ident_recon = z_fake_bar.sub(z.detach()).square().sum_rows().clamp_max(tau).mean();
    let c = &bundle.classifier.arch;
    let f_fake = l2_normalize(c.forward(&pc, fake));
    let f_src = l2_normalize(c.forward(&pc, tape.constant(sources)));
    let ident_cls = f_fake.sub(f_src).square().sum_rows().clamp_max(tau).mean();

    let total = g_adv
        .add(attr.scale(cfg.lambda_attr))
        .add(w_reg)
        .sub(ident_recon.scale(cfg.lambda_id_recon))
        .sub(ident_cls.scale(cfg.lambda_id_cls));
    let mut record = LossRecord {
        g_id: Some(finite("L_G-ID", scalar(g_adv), step)?),
        w_reg: Some(finite("L_W-Reg", scalar(w_reg), step)?),
        ident_recon: Some(finite("L_Ident-Recon", scalar(ident_recon), step)?),
        ident_cls: Some(finite("L_Ident-Cls", scalar(ident_cls), step)?),
        attribute: Some(finite("attribute", scalar(attr), step)?),
        skipped,
        ..LossRecord::default()
    };
    finite("generator total", scalar(total), step)?;
    let fake_value = (*fake.value()).clone();
    let grads = tape.backward(total);
    let ge = pe.grads(&grads);
    let gw = pw.grads(&grads);
    let gg = pg.grads(&grads);
    drop(grads);
    opt.identity_encoder.step(&mut bundle.identity_encoder.params, &ge);
    opt.warper.step(&mut bundle.warper.params, &gw);
    opt.generator.step(&mut bundle.generator.params, &gg);

    let critic = critic_step(bundle, opt, &real, &fake_value, &batch.attributes, cfg, rng, step)?;
    record.d_id = Some(critic.adversarial);
    record.gp = Some(critic.gp);
    Ok(record)
}
