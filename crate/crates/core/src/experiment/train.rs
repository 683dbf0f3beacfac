//! Training loops for the three model kinds.
//!
//! The autoencoder minimizes mean squared reconstruction error with the mean
//! rotation as latent. The variational models minimize the negative ELBO
//! with a unit-variance Gaussian likelihood,
//! log p(x | z) = -0.5 ||x - xhat||^2 - (D/2) log(2 pi), one posterior
//! sample per example, and a single-sample KL estimate (closed form for the
//! normal3 baseline).

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::autodiff::{adam::Adam, NodeId, Tape};
use crate::{Error, Result};

use super::config::{ExperimentConfig, ModelKind};
use super::dataset::Dataset;
use super::model::{
    compose9_on_tape, head_to_r9_on_tape, kl_normal3_on_tape, kl_sample_on_tape, zyz_to_r9_on_tape,
    Model,
};

pub struct TrainOutcome {
    pub model: Model,
    pub losses: Vec<f64>,
    pub seconds: f64,
}

/// Trains a fresh model on the dataset per the configuration.
pub fn train(cfg: &ExperimentConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = Model::new(cfg)?;
    if data.meta.total_dim != model.spec.total_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dimension {} does not match configured representation {}",
            data.meta.total_dim,
            model.spec.total_dim()
        )));
    }
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x51_7c_c1_b7).wrapping_add(2));
    let mut opt = Adam::new(cfg.lr, &model.params);
    let mut losses = Vec::with_capacity(cfg.steps);
    let b = cfg.batch_size.min(data.len());
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..b).map(|_| rng.gen_range(0..data.len())).collect();
        let mut xb = Array2::zeros((b, data.meta.total_dim));
        for (r, &i) in idx.iter().enumerate() {
            xb.row_mut(r).assign(&data.xs[i]);
        }
        let loss = match model.kind {
            ModelKind::Ae => step_ae(&mut model, &mut opt, &xb)?,
            ModelKind::Vae | ModelKind::VaeNormal3 => {
                // ramp the KL weight from 0 to 1 over the warm-up window so
                // the encoder can fit the means before the prior term is
                // allowed to widen the posteriors
                let warmup = (cfg.kl_warmup * cfg.steps as f64).round() as usize;
                let beta = if warmup == 0 {
                    1.0
                } else {
                    (step as f64 / warmup as f64).min(1.0)
                };
                step_vae(&mut model, &mut opt, &xb, beta, &mut rng)?
            }
        };
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss {loss} at step {step}"
            )));
        }
        losses.push(loss);
    }
    Ok(TrainOutcome {
        model,
        losses,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn step_ae(model: &mut Model, opt: &mut Adam, xb: &Array2<f64>) -> Result<f64> {
    let b = xb.nrows();
    let head = model.head.expect("AE has a head");
    let mut t = Tape::new();
    let ids = model.tape_params(&mut t);
    let xn = t.matrix(xb.clone());
    let out = model.encoder_on_tape(&mut t, &ids, xn);
    let mut loss = t.scalar(0.0);
    for i in 0..b {
        let row = t.row(out, i);
        let raw = t.slice(row, 0, head.input_dim());
        let r9 = head_to_r9_on_tape(&mut t, head, raw);
        let xhat = t.rep_act(&model.spec, r9, ids[6]);
        let xrow = t.row(xn, i);
        let d = t.sub(xhat, xrow);
        let sse = t.dot(d, d);
        loss = t.add(loss, sse);
    }
    let loss = t.scale(loss, 1.0 / b as f64);
    apply_step(model, opt, &t, &ids, loss)
}

fn step_vae(
    model: &mut Model,
    opt: &mut Adam,
    xb: &Array2<f64>,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let b = xb.nrows();
    let dim = model.spec.total_dim() as f64;
    let mut t = Tape::new();
    let ids = model.tape_params(&mut t);
    let xn = t.matrix(xb.clone());
    let out = model.encoder_on_tape(&mut t, &ids, xn);
    let mut neg_elbo = t.scalar(0.0);
    for i in 0..b {
        let row = t.row(out, i);
        let eps = Array1::from_iter((0..3).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let epsn = t.vector(eps);
        let (rz9, kl) = match model.kind {
            ModelKind::Vae => {
                let head = model.head.expect("VAE has a head");
                let hd = head.input_dim();
                let raw = t.slice(row, 0, hd);
                let r_mu9 = head_to_r9_on_tape(&mut t, head, raw);
                let sig_raw = t.slice(row, hd, 3);
                let sp = t.softplus(sig_raw);
                let sigma = t.add_const(sp, model.sigma_floor);
                let v = t.mul(sigma, epsn);
                let rexp9 = t.exp_map_rot(v);
                let rz9 = compose9_on_tape(&mut t, r_mu9, rexp9);
                let kl = kl_sample_on_tape(&mut t, v, sigma, model.k_max);
                (rz9, kl)
            }
            ModelKind::VaeNormal3 => {
                let mu = t.slice(row, 0, 3);
                let sig_raw = t.slice(row, 3, 3);
                let sp = t.softplus(sig_raw);
                let sigma = t.add_const(sp, model.sigma_floor);
                let noise = t.mul(sigma, epsn);
                let z = t.add(mu, noise);
                let rz9 = zyz_to_r9_on_tape(&mut t, z);
                let kl = kl_normal3_on_tape(&mut t, mu, sigma);
                (rz9, kl)
            }
            ModelKind::Ae => unreachable!("AE handled separately"),
        };
        let xhat = t.rep_act(&model.spec, rz9, ids[6]);
        let xrow = t.row(xn, i);
        let d = t.sub(xhat, xrow);
        let sse = t.dot(d, d);
        // -log p(x|z) = 0.5 sse + (D/2) ln 2 pi
        let mut nll = t.scale(sse, 0.5);
        nll = t.add_const(nll, 0.5 * dim * (2.0 * PI).ln());
        let kl_weighted = t.scale(kl, beta);
        let item = t.add(nll, kl_weighted);
        neg_elbo = t.add(neg_elbo, item);
    }
    let loss = t.scale(neg_elbo, 1.0 / b as f64);
    apply_step(model, opt, &t, &ids, loss)
}

fn apply_step(
    model: &mut Model,
    opt: &mut Adam,
    t: &Tape,
    ids: &[NodeId],
    loss: NodeId,
) -> Result<f64> {
    let lv = t.value(loss).s();
    let grads = t.grad(loss);
    let gs: Vec<_> = ids
        .iter()
        .zip(&model.params)
        .map(|(id, p)| grads.get_or_zero(*id, p))
        .collect();
    opt.step(&mut model.params, &gs);
    Ok(lv)
}
