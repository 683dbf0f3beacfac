//! Encoder/decoder pair of the toy experiment.
//!
//! The encoder is a two-hidden-layer tanh MLP whose output row is split into
//! the raw mean-map input and, for variational models, three raw scale
//! entries mapped through softplus plus a floor. The decoder applies the
//! block representation of the latent rotation to a learned content vector,
//! so decoding is exactly the mechanism that generated the data.
//!
//! Every decoder/posterior construction exists twice: on the tape (for
//! training gradients) and as plain array math (for evaluation); tests pin
//! the two against each other.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::autodiff::{NodeId, Tape, Value};
use crate::gauss::log_8pi2;
use crate::heads::HeadKind;
use crate::so3::{self, Rotation};
use crate::wigner::RepSpec;
use crate::{Error, Result};

use super::config::{ExperimentConfig, ModelKind};

/// Parameter layout: w1, b1, w2, b2, w3, b3, content vector.
pub const N_PARAMS: usize = 7;

pub struct Model {
    pub kind: ModelKind,
    pub head: Option<HeadKind>,
    pub spec: RepSpec,
    pub sigma_floor: f64,
    pub k_max: i64,
    pub params: Vec<Value>,
}

impl Model {
    /// Raw encoder output width before any head.
    pub fn out_dim(kind: ModelKind, head: Option<HeadKind>) -> usize {
        match kind {
            ModelKind::Ae => head.expect("AE needs a head").input_dim(),
            ModelKind::Vae => head.expect("VAE needs a head").input_dim() + 3,
            ModelKind::VaeNormal3 => 6,
        }
    }

    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let kind = cfg.model_kind()?;
        let head = match kind {
            ModelKind::VaeNormal3 => None,
            _ => Some(cfg.head_kind()?),
        };
        let spec = cfg.rep_spec()?;
        let in_dim = spec.total_dim();
        let h = cfg.hidden;
        let out = Self::out_dim(kind, head);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
        let mut mat = |r: usize, c: usize| {
            let scale = (1.0 / r as f64).sqrt();
            Value::M(Array2::from_shape_fn((r, c), |_| {
                rng.sample::<f64, _>(StandardNormal) * scale
            }))
        };
        // start variational posteriors concentrated: softplus(-2) ~ 0.13,
        // otherwise early latent noise swamps the reconstruction signal
        let mut out_bias = Array1::zeros(out);
        if kind != ModelKind::Ae {
            for i in out - 3..out {
                out_bias[i] = -2.0;
            }
        }
        let params = vec![
            mat(in_dim, h),
            Value::V(Array1::zeros(h)),
            mat(h, h),
            Value::V(Array1::zeros(h)),
            mat(h, out),
            Value::V(out_bias),
            // learned content vector, standard normal init
            Value::V(Array1::from_shape_fn(in_dim, |_| {
                rng.sample::<f64, _>(StandardNormal)
            })),
        ];
        Ok(Model {
            kind,
            head,
            spec,
            sigma_floor: cfg.sigma_floor,
            k_max: cfg.k_max as i64,
            params,
        })
    }

    pub fn content(&self) -> &Array1<f64> {
        self.params[6].v()
    }

    /// Registers parameters as tape leaves, in layout order.
    pub fn tape_params(&self, t: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| t.leaf(p.clone())).collect()
    }

    /// Batched MLP forward on the tape; `x` is a (B, in_dim) leaf.
    pub fn encoder_on_tape(&self, t: &mut Tape, ids: &[NodeId], x: NodeId) -> NodeId {
        let h1 = t.matmul(x, ids[0]);
        let h1 = t.add_row_broadcast(h1, ids[1]);
        let h1 = t.tanh(h1);
        let h2 = t.matmul(h1, ids[2]);
        let h2 = t.add_row_broadcast(h2, ids[3]);
        let h2 = t.tanh(h2);
        let out = t.matmul(h2, ids[4]);
        t.add_row_broadcast(out, ids[5])
    }

    /// Plain batched MLP forward for evaluation.
    pub fn encoder_plain(&self, xs: &Array2<f64>) -> Array2<f64> {
        let h1 = (xs.dot(self.params[0].m()) + &self.params[1].v().view().insert_axis(ndarray::Axis(0)))
            .mapv(f64::tanh);
        let h2 = (h1.dot(self.params[2].m()) + &self.params[3].v().view().insert_axis(ndarray::Axis(0)))
            .mapv(f64::tanh);
        h2.dot(self.params[4].m()) + &self.params[5].v().view().insert_axis(ndarray::Axis(0))
    }

    /// Mean rotation and (for variational models) the posterior scale.
    pub fn encode_row_plain(&self, row: &Array1<f64>) -> Result<(Rotation, Option<[f64; 3]>)> {
        match self.kind {
            ModelKind::Ae | ModelKind::Vae => {
                let head = self.head.expect("head set for AE/VAE");
                let hd = head.input_dim();
                let r = head.apply(&row.as_slice().unwrap()[..hd])?;
                let sigma = if self.kind == ModelKind::Vae {
                    Some(std::array::from_fn(|i| {
                        softplus(row[hd + i]) + self.sigma_floor
                    }))
                } else {
                    None
                };
                Ok((r, sigma))
            }
            ModelKind::VaeNormal3 => {
                let e = so3::EulerZyz {
                    alpha: row[0],
                    beta: row[1],
                    gamma: row[2],
                };
                let sigma = std::array::from_fn(|i| softplus(row[3 + i]) + self.sigma_floor);
                Ok((so3::euler_zyz_to_rotation(&e), Some(sigma)))
            }
        }
    }

    /// Raw mean parameters of the normal3 posterior (the three angles).
    pub fn normal3_mean(row: &Array1<f64>) -> [f64; 3] {
        [row[0], row[1], row[2]]
    }

    pub fn decode_plain(&self, r: &Rotation) -> Result<Array1<f64>> {
        crate::wigner::act(&self.spec, r, self.content())
    }
}

/// Serialized form of a trained model.
#[derive(serde::Serialize, serde::Deserialize)]
struct ModelFile {
    model: String,
    head: Option<String>,
    blocks: Vec<(usize, usize)>,
    sigma_floor: f64,
    k_max: i64,
    hidden: usize,
    vectors: Vec<Vec<f64>>,
    matrices: Vec<(usize, usize, Vec<f64>)>,
}

impl Model {
    /// Writes the model as JSON; parameter layout is fixed, so vectors and
    /// matrices are stored in order of appearance.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut vectors = Vec::new();
        let mut matrices = Vec::new();
        for p in &self.params {
            match p {
                Value::V(v) => vectors.push(v.to_vec()),
                Value::M(m) => {
                    matrices.push((m.nrows(), m.ncols(), m.iter().cloned().collect()))
                }
                Value::S(_) => unreachable!("no scalar parameters"),
            }
        }
        let file = ModelFile {
            model: match self.kind {
                ModelKind::Ae => "ae".into(),
                ModelKind::Vae => "vae".into(),
                ModelKind::VaeNormal3 => "vae-normal3".into(),
            },
            head: self.head.map(|h| h.token().to_string()),
            blocks: self.spec.blocks().to_vec(),
            sigma_floor: self.sigma_floor,
            k_max: self.k_max,
            hidden: self.params[1].v().len(),
            vectors,
            matrices,
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let kind = ModelKind::parse(&file.model)?;
        let head = match &file.head {
            Some(h) => Some(HeadKind::parse(h)?),
            None => None,
        };
        if kind != ModelKind::VaeNormal3 && head.is_none() {
            return Err(Error::Config("model file is missing its head".into()));
        }
        let spec = RepSpec::new(file.blocks)?;
        if file.vectors.len() != 4 || file.matrices.len() != 3 {
            return Err(Error::ShapeMismatch(
                "model file does not have the expected parameter layout".into(),
            ));
        }
        let mat = |i: usize| -> Result<Value> {
            let (r, c, ref data) = file.matrices[i];
            Ok(Value::M(
                Array2::from_shape_vec((r, c), data.clone())
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            ))
        };
        let params = vec![
            mat(0)?,
            Value::V(Array1::from(file.vectors[0].clone())),
            mat(1)?,
            Value::V(Array1::from(file.vectors[1].clone())),
            mat(2)?,
            Value::V(Array1::from(file.vectors[2].clone())),
            Value::V(Array1::from(file.vectors[3].clone())),
        ];
        let model = Model {
            kind,
            head,
            spec,
            sigma_floor: file.sigma_floor,
            k_max: file.k_max,
            params,
        };
        // dimension sanity
        let in_dim = model.spec.total_dim();
        let out = Model::out_dim(kind, model.head);
        if model.params[0].m().nrows() != in_dim
            || model.params[4].m().ncols() != out
            || model.content().len() != in_dim
        {
            return Err(Error::ShapeMismatch(
                "model parameter shapes are inconsistent".into(),
            ));
        }
        Ok(model)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// v / max(|v|, 1e-12) on the tape.
pub fn normalize_on_tape(t: &mut Tape, v: NodeId) -> NodeId {
    let n = t.norm(v);
    let n = t.max_const(n, 1e-12);
    let r = t.recip(n);
    t.mul_vs(v, r)
}

/// Rotation entries (row-major 9-vector) from an unnormalized quaternion.
pub fn quat_to_r9_on_tape(t: &mut Tape, raw: NodeId) -> NodeId {
    let q = normalize_on_tape(t, raw);
    let w = t.index(q, 0);
    let x = t.index(q, 1);
    let y = t.index(q, 2);
    let z = t.index(q, 3);
    let p = |t: &mut Tape, a: NodeId, b: NodeId, c: f64| {
        let m = t.mul(a, b);
        t.scale(m, c)
    };
    // matches the covering map used everywhere else
    let yy2 = p(t, y, y, 2.0);
    let zz2 = p(t, z, z, 2.0);
    let xx2 = p(t, x, x, 2.0);
    let xy2 = p(t, x, y, 2.0);
    let wz2 = p(t, w, z, 2.0);
    let xz2 = p(t, x, z, 2.0);
    let wy2 = p(t, w, y, 2.0);
    let yz2 = p(t, y, z, 2.0);
    let wx2 = p(t, w, x, 2.0);
    let one_minus = |t: &mut Tape, a: NodeId, b: NodeId| {
        let s = t.add(a, b);
        let n = t.neg(s);
        t.add_const(n, 1.0)
    };
    let e00 = one_minus(t, yy2, zz2);
    let e11 = one_minus(t, xx2, zz2);
    let e22 = one_minus(t, xx2, yy2);
    let e01 = t.sub(xy2, wz2);
    let e10 = t.add(xy2, wz2);
    let e02 = t.add(xz2, wy2);
    let e20 = t.sub(xz2, wy2);
    let e12 = t.sub(yz2, wx2);
    let e21 = t.add(yz2, wx2);
    t.stack_scalars(&[e00, e01, e02, e10, e11, e12, e20, e21, e22])
}

/// Rotation entries from the (axis, angle-circle) parameterization:
/// R = v1 I + v2 hat(u) + (1 - v1) u u^T with u, (v1, v2) the normalized
/// 3- and 2-blocks of the raw 5-vector.
pub fn s2s1_to_r9_on_tape(t: &mut Tape, raw: NodeId) -> NodeId {
    let u_raw = t.slice(raw, 0, 3);
    let y_raw = t.slice(raw, 3, 2);
    let u = normalize_on_tape(t, u_raw);
    let y = normalize_on_tape(t, y_raw);
    let v1 = t.index(y, 0);
    let v2 = t.index(y, 1);
    let one_minus_v1 = {
        let n = t.neg(v1);
        t.add_const(n, 1.0)
    };
    let ui = [t.index(u, 0), t.index(u, 1), t.index(u, 2)];
    let mut entries = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            // hat(u)_ij = -eps_{ijk} u_k
            let hat = match (i, j) {
                (0, 1) => Some((ui[2], -1.0)),
                (0, 2) => Some((ui[1], 1.0)),
                (1, 0) => Some((ui[2], 1.0)),
                (1, 2) => Some((ui[0], -1.0)),
                (2, 0) => Some((ui[1], -1.0)),
                (2, 1) => Some((ui[0], 1.0)),
                _ => None,
            };
            let uu = t.mul(ui[i], ui[j]);
            let mut e = t.mul(one_minus_v1, uu);
            if i == j {
                let d = t.scale(v1, 1.0);
                e = t.add(e, d);
            }
            if let Some((uk, sign)) = hat {
                let h = t.mul(v2, uk);
                let h = t.scale(h, sign);
                e = t.add(e, h);
            }
            entries.push(e);
        }
    }
    t.stack_scalars(&entries)
}

/// Rotation entries by Gram-Schmidt on the two raw 3-blocks; rows are
/// (w1, w2, w1 x w2).
pub fn s2s2_to_r9_on_tape(t: &mut Tape, raw: NodeId) -> NodeId {
    let u1 = t.slice(raw, 0, 3);
    let u2 = t.slice(raw, 3, 3);
    let w1 = normalize_on_tape(t, u1);
    let proj = t.dot(w1, u2);
    let pw = t.mul_vs(w1, proj);
    let w2t = t.sub(u2, pw);
    let w2 = normalize_on_tape(t, w2t);
    let w3 = t.cross(w1, w2);
    t.concat(&[w1, w2, w3])
}

/// Dispatch over the mean maps.
pub fn head_to_r9_on_tape(t: &mut Tape, kind: HeadKind, raw: NodeId) -> NodeId {
    match kind {
        HeadKind::Alg => t.exp_map_rot(raw),
        HeadKind::Q => quat_to_r9_on_tape(t, raw),
        HeadKind::S2S1 => s2s1_to_r9_on_tape(t, raw),
        HeadKind::S2S2 => s2s2_to_r9_on_tape(t, raw),
    }
}

/// Rotation entries of Rz(alpha) Ry(beta) Rz(gamma) from three angle nodes.
pub fn zyz_to_r9_on_tape(t: &mut Tape, angles: NodeId) -> NodeId {
    let a = t.index(angles, 0);
    let b = t.index(angles, 1);
    let g = t.index(angles, 2);
    let (ca, sa) = (t.cos(a), t.sin(a));
    let (cb, sb) = (t.cos(b), t.sin(b));
    let (cg, sg) = (t.cos(g), t.sin(g));
    let m = |t: &mut Tape, x: NodeId, y: NodeId| t.mul(x, y);
    let cacb = m(t, ca, cb);
    let sacb = m(t, sa, cb);
    let e00 = {
        let x = m(t, cacb, cg);
        let y = m(t, sa, sg);
        t.sub(x, y)
    };
    let e01 = {
        let x = m(t, cacb, sg);
        let y = m(t, sa, cg);
        let nx = t.neg(x);
        t.sub(nx, y)
    };
    let e02 = m(t, ca, sb);
    let e10 = {
        let x = m(t, sacb, cg);
        let y = m(t, ca, sg);
        t.add(x, y)
    };
    let e11 = {
        let x = m(t, sacb, sg);
        let y = m(t, ca, cg);
        let nx = t.neg(x);
        t.add(nx, y)
    };
    let e12 = m(t, sa, sb);
    let e20 = {
        let x = m(t, sb, cg);
        t.neg(x)
    };
    let e21 = m(t, sb, sg);
    let e22 = cb;
    t.stack_scalars(&[e00, e01, e02, e10, e11, e12, e20, e21, e22])
}

/// Product of two rotations given as row-major 9-vectors.
pub fn compose9_on_tape(t: &mut Tape, a: NodeId, b: NodeId) -> NodeId {
    let mut entries = Vec::with_capacity(9);
    let ai: Vec<NodeId> = (0..9).map(|k| t.index(a, k)).collect();
    let bi: Vec<NodeId> = (0..9).map(|k| t.index(b, k)).collect();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = t.mul(ai[3 * i], bi[j]);
            for k in 1..3 {
                let p = t.mul(ai[3 * i + k], bi[3 * k + j]);
                acc = t.add(acc, p);
            }
            entries.push(acc);
        }
    }
    t.stack_scalars(&entries)
}

/// log qhat of the wrapped pushforward evaluated at the algebra sample `v`
/// with scale node `sigma`, differentiable in both; mirrors
/// [`crate::gauss::log_qhat_from_algebra`].
pub fn log_qhat_on_tape(t: &mut Tape, v: NodeId, sigma: NodeId, k_max: i64) -> NodeId {
    let n_raw = t.norm(v);
    let n = t.max_const(n_raw, 1e-12);
    let rn = t.recip(n);
    let u = t.mul_vs(v, rn);
    let half = t.scale(n, 0.5);
    let s = t.sin(half);
    let s2 = t.mul(s, s);
    let s2f = t.max_const(s2, 1e-300);
    let ln_s2 = t.ln(s2f);
    let ln_denom = t.add_const(ln_s2, 4f64.ln());
    let rsig = t.recip(sigma);
    let ln_sig = t.ln(sigma);
    let sum_ln_sig = t.sum(ln_sig);
    let mut terms = Vec::with_capacity((2 * k_max + 1) as usize);
    for k in -k_max..=k_max {
        let rho = t.add_const(n, 2.0 * PI * k as f64);
        let x = t.mul_vs(u, rho);
        let z = t.mul(x, rsig);
        let q = t.dot(z, z);
        let mut base = t.scale(q, -0.5);
        base = t.add_const(base, -1.5 * (2.0 * PI).ln());
        base = t.sub(base, sum_ln_sig);
        let rho2 = t.mul(rho, rho);
        let rho2f = t.max_const(rho2, 1e-300);
        let ln_rho2 = t.ln(rho2f);
        let with_jac = t.add(base, ln_rho2);
        terms.push(t.sub(with_jac, ln_denom));
    }
    let stacked = t.stack_scalars(&terms);
    t.logsumexp(stacked)
}

/// Single-sample KL estimate against the uniform prior under the normalized
/// Haar convention: log q_nu(z) = log qhat + log 8 pi^2.
pub fn kl_sample_on_tape(t: &mut Tape, v: NodeId, sigma: NodeId, k_max: i64) -> NodeId {
    let lq = log_qhat_on_tape(t, v, sigma, k_max);
    t.add_const(lq, log_8pi2())
}

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)) for the normal3 baseline.
pub fn kl_normal3_on_tape(t: &mut Tape, mu: NodeId, sigma: NodeId) -> NodeId {
    let s2 = t.mul(sigma, sigma);
    let m2 = t.mul(mu, mu);
    let both = t.add(s2, m2);
    let sum = t.sum(both);
    let ln_sig = t.ln(sigma);
    let sum_ln = t.sum(ln_sig);
    let half = t.scale(sum, 0.5);
    let ln_term = t.add_const(sum_ln, 1.5);
    t.sub(half, ln_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff;
    use crate::gauss::{log_qhat_from_algebra, DensityTruncation};
    use crate::so3::{frobenius_distance, sample_uniform};

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0_f64).max(a.abs().max(b.abs()))
    }

    #[test]
    fn tape_heads_match_plain_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [HeadKind::Alg, HeadKind::Q, HeadKind::S2S1, HeadKind::S2S2] {
            for _ in 0..50 {
                let raw: Vec<f64> = (0..kind.input_dim())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect();
                let expected = kind.apply(&raw).unwrap();
                let mut t = Tape::new();
                let rv = t.vector(Array1::from(raw.clone()));
                let r9 = head_to_r9_on_tape(&mut t, kind, rv);
                let got = t.value(r9).v();
                let mut flat = [0.0; 9];
                flat.copy_from_slice(got.as_slice().unwrap());
                let got = Rotation::from_flat(&flat).unwrap();
                assert!(
                    frobenius_distance(&got, &expected) < 1e-9,
                    "{kind:?} mismatch"
                );
            }
        }
    }

    #[test]
    fn tape_head_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [HeadKind::Alg, HeadKind::Q, HeadKind::S2S1, HeadKind::S2S2] {
            let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let run = |raw: &[f64]| {
                let mut t = Tape::new();
                let rv = t.vector(Array1::from(raw.to_vec()));
                let r9 = head_to_r9_on_tape(&mut t, kind, rv);
                let wv = t.vector(Array1::from(w.clone()));
                let loss = t.dot(r9, wv);
                (t, rv, loss)
            };
            for _ in 0..10 {
                let raw: Vec<f64> = (0..kind.input_dim())
                    .map(|_| rng.gen_range(0.3..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                    .collect();
                let (t, rv, loss) = run(&raw);
                let g = t.grad(loss);
                let ga = g.get(rv).unwrap().v().clone();
                let fd = finite_diff(
                    |y| {
                        let (t, _, l) = run(y);
                        t.value(l).s()
                    },
                    &raw,
                    1e-6,
                );
                for i in 0..raw.len() {
                    assert!(
                        rel_err(ga[i], fd[i]) < 1e-5,
                        "{kind:?} comp {i}: {} vs {}",
                        ga[i],
                        fd[i]
                    );
                }
            }
        }
    }

    #[test]
    fn tape_zyz_matches_plain_zyz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let angles = [
                rng.gen_range(-PI..PI),
                rng.gen_range(0.0..PI),
                rng.gen_range(-PI..PI),
            ];
            let expected = so3::euler_zyz_to_rotation(&so3::EulerZyz {
                alpha: angles[0],
                beta: angles[1],
                gamma: angles[2],
            });
            let mut t = Tape::new();
            let a = t.vector(Array1::from(angles.to_vec()));
            let r9 = zyz_to_r9_on_tape(&mut t, a);
            let got = t.value(r9).v();
            let mut flat = [0.0; 9];
            flat.copy_from_slice(got.as_slice().unwrap());
            let got = Rotation::from_flat(&flat).unwrap();
            assert!(frobenius_distance(&got, &expected) < 1e-12);
        }
    }

    #[test]
    fn compose9_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = sample_uniform(&mut rng);
            let b = sample_uniform(&mut rng);
            let mut t = Tape::new();
            let av = t.vector(Array1::from(a.to_flat().to_vec()));
            let bv = t.vector(Array1::from(b.to_flat().to_vec()));
            let c9 = compose9_on_tape(&mut t, av, bv);
            let got = t.value(c9).v();
            let expected = a.compose(&b).to_flat();
            for i in 0..9 {
                assert!((got[i] - expected[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn tape_log_qhat_matches_reference_and_gradchecks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trunc = DensityTruncation::new(5).unwrap();
        let run = |vs: &[f64]| {
            // vs = [v(3), sigma(3)]
            let mut t = Tape::new();
            let v = t.vector(Array1::from(vs[..3].to_vec()));
            let s = t.vector(Array1::from(vs[3..].to_vec()));
            let lq = log_qhat_on_tape(&mut t, v, s, 5);
            (t, v, s, lq)
        };
        for _ in 0..30 {
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let sigma: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..1.5));
            let expected = log_qhat_from_algebra(&v, &sigma, trunc);
            let all: Vec<f64> = v.iter().chain(sigma.iter()).cloned().collect();
            let (t, vn, sn, lq) = run(&all);
            assert!((t.value(lq).s() - expected).abs() < 1e-10);
            let fd = finite_diff(
                |y| {
                    let (t, _, _, l) = run(y);
                    t.value(l).s()
                },
                &all,
                1e-6,
            );
            let g = t.grad(lq);
            let gvv = g.get(vn).unwrap().v().clone();
            let gss = g.get(sn).unwrap().v().clone();
            for i in 0..3 {
                assert!(rel_err(gvv[i], fd[i]) < 1e-5, "{} vs {}", gvv[i], fd[i]);
                assert!(
                    rel_err(gss[i], fd[3 + i]) < 1e-5,
                    "{} vs {}",
                    gss[i],
                    fd[3 + i]
                );
            }
        }
    }

    #[test]
    fn kl_normal3_closed_form() {
        // standard normal posterior has zero KL
        let mut t = Tape::new();
        let mu = t.vector(Array1::zeros(3));
        let sig = t.vector(Array1::from(vec![1.0, 1.0, 1.0]));
        let kl = kl_normal3_on_tape(&mut t, mu, sig);
        assert!(t.value(kl).s().abs() < 1e-12);
        // hand value: mu = (1,0,0), sigma = (1,1,1) -> KL = 1/2
        let mut t = Tape::new();
        let mu = t.vector(Array1::from(vec![1.0, 0.0, 0.0]));
        let sig = t.vector(Array1::from(vec![1.0, 1.0, 1.0]));
        let kl = kl_normal3_on_tape(&mut t, mu, sig);
        assert!((t.value(kl).s() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tape_and_plain_encoders_agree() {
        let cfg = ExperimentConfig {
            model: "vae".into(),
            head: "s2s2".into(),
            ..Default::default()
        };
        let m = Model::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((4, m.spec.total_dim()), |_| rng.gen_range(-1.0..1.0));
        let plain = m.encoder_plain(&x);
        let mut t = Tape::new();
        let ids = m.tape_params(&mut t);
        let xn = t.matrix(x.clone());
        let out = m.encoder_on_tape(&mut t, &ids, xn);
        let taped = t.value(out).m();
        let err = (taped - &plain).iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(err < 1e-12);
    }

    #[test]
    fn model_shapes_per_kind() {
        for (model, head, want) in [
            ("ae", "alg", 3),
            ("ae", "q", 4),
            ("ae", "s2s1", 5),
            ("ae", "s2s2", 6),
            ("vae", "s2s2", 9),
            ("vae-normal3", "s2s2", 6),
        ] {
            let cfg = ExperimentConfig {
                model: model.into(),
                head: head.into(),
                ..Default::default()
            };
            let m = Model::new(&cfg).unwrap();
            assert_eq!(m.params[5].v().len(), want, "{model}/{head}");
            assert_eq!(m.content().len(), 48);
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        for model in ["ae", "vae", "vae-normal3"] {
            let cfg = ExperimentConfig {
                model: model.into(),
                ..Default::default()
            };
            let m = Model::new(&cfg).unwrap();
            m.save(&path).unwrap();
            let back = Model::load(&path).unwrap();
            assert_eq!(back.kind, m.kind);
            assert_eq!(back.head, m.head);
            assert_eq!(back.content(), m.content());
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let x = Array2::from_shape_fn((2, m.spec.total_dim()), |_| rng.gen_range(-1.0..1.0));
            let a = m.encoder_plain(&x);
            let b = back.encoder_plain(&x);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ExperimentConfig::default();
        let a = Model::new(&cfg).unwrap();
        let b = Model::new(&cfg).unwrap();
        assert_eq!(a.content(), b.content());
        let cfg2 = ExperimentConfig {
            seed: 1,
            ..Default::default()
        };
        let c = Model::new(&cfg2).unwrap();
        assert_ne!(a.content(), c.content());
    }
}
