//! Evaluation: reconstruction error, ELBO, importance-sampled marginal
//! likelihood, posterior KL, and the encoder-continuity fraction, collected
//! into one results row per run.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::contmetric::{disc_fraction_rotations, ContinuityParams, ContinuityReport};
use crate::gauss::{log_8pi2, log_qhat_from_algebra, DensityTruncation};
use crate::so3::{self, Rotation, Vec3};
use crate::wigner::{content_vector, make_s1_trajectory};
use crate::{Error, Result};

use super::config::{ExperimentConfig, ModelKind};
use super::dataset::Dataset;
use super::model::Model;

/// One line of the results table.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub label: String,
    pub model: String,
    pub nll: f64,
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    pub disc: f64,
    pub seconds: f64,
    pub seed: u64,
}

pub const RESULTS_HEADER: &str = "label,model,nll,elbo,recon,kl,disc,seconds,seed";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3},{}",
            self.label,
            self.model,
            fmt_metric(self.nll),
            fmt_metric(self.elbo),
            fmt_metric(self.recon),
            fmt_metric(self.kl),
            fmt_metric(self.disc),
            self.seconds,
            self.seed
        )
    }
}

fn fmt_metric(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6}")
    }
}

/// Appends rows to a CSV file, writing the header when the file is new.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(f, "{RESULTS_HEADER}")?;
    }
    for r in rows {
        writeln!(f, "{}", r.to_csv_line())?;
    }
    Ok(())
}

/// Mean rotations (and posterior scales) for a batch of inputs.
pub fn encode_batch(model: &Model, xs: &[Array1<f64>]) -> Result<Vec<(Rotation, Option<[f64; 3]>)>> {
    let mut xb = Array2::zeros((xs.len(), model.spec.total_dim()));
    for (i, x) in xs.iter().enumerate() {
        xb.row_mut(i).assign(x);
    }
    let out = model.encoder_plain(&xb);
    (0..xs.len())
        .map(|i| model.encode_row_plain(&out.row(i).to_owned()))
        .collect()
}

/// Mean squared reconstruction error through the mean rotation.
pub fn recon_metric(model: &Model, data: &Dataset) -> Result<f64> {
    let enc = encode_batch(model, &data.xs)?;
    let mut total = 0.0;
    for (x, (r, _)) in data.xs.iter().zip(&enc) {
        let xhat = model.decode_plain(r)?;
        total += (x - &xhat).iter().map(|d| d * d).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

struct VariationalStats {
    elbo: f64,
    kl: f64,
    /// One NLL estimate per requested importance-sample count.
    nll_by_k: Vec<f64>,
}

/// Gaussian log-likelihood term of the decoder.
fn log_lik(x: &Array1<f64>, xhat: &Array1<f64>) -> f64 {
    let sse = (x - xhat).iter().map(|d| d * d).sum::<f64>();
    -0.5 * sse - 0.5 * x.len() as f64 * (2.0 * PI).ln()
}

fn log_normal3(z: &[f64; 3], mu: &[f64; 3], sigma: &[f64; 3]) -> f64 {
    let mut s = -1.5 * (2.0 * PI).ln();
    for i in 0..3 {
        let d = (z[i] - mu[i]) / sigma[i];
        s -= 0.5 * d * d + sigma[i].ln();
    }
    s
}

/// ELBO, KL and importance-sampled NLL over the dataset. `ks` must be
/// ascending; the largest determines the sample pool, smaller counts reuse
/// its prefix. Non-finite importance weights are resampled.
fn variational_stats(
    model: &Model,
    data: &Dataset,
    cfg: &ExperimentConfig,
    ks: &[usize],
) -> Result<VariationalStats> {
    let trunc = DensityTruncation::new(cfg.k_max)?;
    let k_pool = *ks.last().expect("at least one k");
    let s_elbo = cfg.elbo_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0xa076_1d64).wrapping_add(3));
    let enc = encode_batch(model, &data.xs)?;
    // raw rows are needed again for the normal3 mean angles
    let mut xb = Array2::zeros((data.len(), model.spec.total_dim()));
    for (i, x) in data.xs.iter().enumerate() {
        xb.row_mut(i).assign(x);
    }
    let rows = model.encoder_plain(&xb);

    let mut elbo_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut nll_sums = vec![0.0; ks.len()];
    for (i, x) in data.xs.iter().enumerate() {
        let (r_mu, sigma) = &enc[i];
        let sigma = sigma.ok_or_else(|| {
            Error::InvalidParameter("variational metrics need a posterior scale".into())
        })?;
        // sample log-weights: log p(x|z) + log p(z) - log q(z)
        let mut log_liks = Vec::with_capacity(k_pool);
        let mut log_ws = Vec::with_capacity(k_pool);
        let mut log_qs = Vec::with_capacity(k_pool);
        while log_ws.len() < k_pool {
            let eps: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
            let (ll, lq, lp) = match model.kind {
                ModelKind::Vae => {
                    let v: Vec3 = std::array::from_fn(|j| sigma[j] * eps[j]);
                    let rz = r_mu.compose(&so3::exp_map(&v));
                    let ll = log_lik(x, &model.decode_plain(&rz)?);
                    // normalized Haar: uniform prior log-density is 0
                    let lq = log_qhat_from_algebra(&v, &sigma, trunc) + log_8pi2();
                    (ll, lq, 0.0)
                }
                ModelKind::VaeNormal3 => {
                    let mu = Model::normal3_mean(&rows.row(i).to_owned());
                    let z: [f64; 3] = std::array::from_fn(|j| mu[j] + sigma[j] * eps[j]);
                    let rz = so3::euler_zyz_to_rotation(&so3::EulerZyz {
                        alpha: z[0],
                        beta: z[1],
                        gamma: z[2],
                    });
                    let ll = log_lik(x, &model.decode_plain(&rz)?);
                    let lq = log_normal3(&z, &mu, &sigma);
                    let lp = log_normal3(&z, &[0.0; 3], &[1.0; 3]);
                    (ll, lq, lp)
                }
                ModelKind::Ae => {
                    return Err(Error::InvalidParameter(
                        "autoencoders have no variational metrics".into(),
                    ))
                }
            };
            let lw = ll + lp - lq;
            if !lw.is_finite() {
                continue; // singular draw: resample
            }
            log_liks.push(ll);
            log_qs.push(lq - lp);
            log_ws.push(lw);
        }
        // ELBO and KL from the first s_elbo samples
        let s = s_elbo.min(k_pool);
        let kl_i = log_qs[..s].iter().sum::<f64>() / s as f64;
        let ll_i = log_liks[..s].iter().sum::<f64>() / s as f64;
        elbo_sum += ll_i - kl_i;
        kl_sum += kl_i;
        for (j, &k) in ks.iter().enumerate() {
            let lse = crate::gauss::logsumexp(&log_ws[..k]);
            nll_sums[j] -= lse - (k as f64).ln();
        }
    }
    let n = data.len() as f64;
    Ok(VariationalStats {
        elbo: elbo_sum / n,
        kl: kl_sum / n,
        nll_by_k: nll_sums.into_iter().map(|s| s / n).collect(),
    })
}

/// Importance-sampled NLL at several sample counts (ascending, nested).
pub fn nll_by_samples(
    model: &Model,
    data: &Dataset,
    cfg: &ExperimentConfig,
    ks: &[usize],
) -> Result<Vec<f64>> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "sample counts must be ascending".into(),
        ));
    }
    Ok(variational_stats(model, data, cfg, ks)?.nll_by_k)
}

/// Continuity fraction of the trained encoder over S^1 orbits with
/// Haar-random axes, using the dataset's own content vector.
pub fn disc_metric(model: &Model, cfg: &ExperimentConfig) -> Result<ContinuityReport> {
    let spec = &model.spec;
    let v = content_vector(spec, cfg.content_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0xc2b2_ae35).wrapping_add(4));
    let mut axes = Vec::with_capacity(cfg.n_paths);
    for _ in 0..cfg.n_paths {
        // uniform axis from a Haar rotation acting on e_z
        let r = so3::sample_uniform(&mut rng);
        axes.push(r.apply(&[0.0, 0.0, 1.0]));
    }
    let params = ContinuityParams {
        gamma: cfg.gamma,
        alpha: cfg.alpha,
    };
    let spec_c = spec.clone();
    disc_fraction_rotations(
        cfg.n_paths,
        &params,
        |p| {
            Ok(make_s1_trajectory(&spec_c, &v, &axes[p], cfg.path_steps)?
                .into_iter()
                .map(|(x, _)| x)
                .collect())
        },
        |x| {
            let xb = x.view().insert_axis(ndarray::Axis(0)).to_owned();
            let row = model.encoder_plain(&xb).row(0).to_owned();
            model
                .encode_row_plain(&row)
                .expect("encoder output is well-formed")
                .0
        },
    )
}

/// Runs the full evaluation suite and assembles the results row.
pub fn evaluate(
    model: &Model,
    cfg: &ExperimentConfig,
    eval_data: &Dataset,
    seconds: f64,
) -> Result<ResultRow> {
    let recon = recon_metric(model, eval_data)?;
    let disc = disc_metric(model, cfg)?.disc_fraction;
    let (nll, elbo, kl) = match model.kind {
        ModelKind::Ae => (f64::NAN, f64::NAN, f64::NAN),
        _ => {
            let st = variational_stats(model, eval_data, cfg, &[cfg.nll_samples])?;
            (st.nll_by_k[0], st.elbo, st.kl)
        }
    };
    let label = match model.kind {
        ModelKind::VaeNormal3 => cfg.model.clone(),
        _ => format!("{}-{}", cfg.model, cfg.head),
    };
    Ok(ResultRow {
        label,
        model: cfg.model.clone(),
        nll,
        elbo,
        recon,
        kl,
        disc,
        seconds,
        seed: cfg.seed,
    })
}

/// One point of an encoded-then-reconstructed trajectory.
#[derive(Clone, Debug)]
pub struct TrajPoint {
    pub step: usize,
    pub phi: f64,
    pub recon_err: f64,
    pub r_flat: [f64; 9],
}

/// Pushes an S^1 orbit through the encoder mean and decoder, reporting the
/// per-point reconstruction error and the encoded rotation; discontinuous
/// encoders show isolated error spikes along the loop.
pub fn reconstruct_trajectory(
    model: &Model,
    cfg: &ExperimentConfig,
    axis: &Vec3,
    n_steps: usize,
) -> Result<Vec<TrajPoint>> {
    let v = content_vector(&model.spec, cfg.content_seed);
    let traj = make_s1_trajectory(&model.spec, &v, axis, n_steps)?;
    let xs: Vec<Array1<f64>> = traj.iter().map(|(x, _)| x.clone()).collect();
    let enc = encode_batch(model, &xs)?;
    let mut out = Vec::with_capacity(xs.len());
    for (i, ((x, _), (r, _))) in traj.iter().zip(&enc).enumerate() {
        let xhat = model.decode_plain(r)?;
        let err = (x - &xhat).iter().map(|d| d * d).sum::<f64>();
        out.push(TrajPoint {
            step: i,
            phi: 2.0 * PI * i as f64 / n_steps as f64,
            recon_err: err,
            r_flat: r.to_flat(),
        });
    }
    Ok(out)
}
