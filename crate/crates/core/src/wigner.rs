//! Real Wigner-D block representations of SO(3), the group-action map, and
//! the toy-dataset generator.
//!
//! The matrices are expressed in the real spherical-harmonic basis ordered
//! m = -l..l, with the convention that D^l(R) rotates evaluations:
//! y_l(R x) = D^l(R) y_l(x). For l = 1 that makes D^1(R) = P R P^T where P
//! permutes (x, y, z) to (y, z, x).
//!
//! Two independent constructions are provided: [`wigner_d`] goes through
//! the ZYZ Euler decomposition, Wigner's factorial sum for the little-d
//! matrix, and conjugation by the fixed complex-to-real basis change;
//! [`real_rep_blocks`] builds the same matrices degree by degree from the
//! l = 1 block with the Ivanic-Ruedenberg recurrence, which is polynomial
//! in the rotation entries and therefore also usable on dual numbers for
//! exact derivatives.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::so3::{self, Rotation, Vec3};
use crate::{Error, Result};

/// Highest degree the factorial sum is validated for.
pub const MAX_DEGREE: usize = 6;

/// Block-diagonal representation spec: (degree, multiplicity) pairs with
/// degrees sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepSpec {
    blocks: Vec<(usize, usize)>,
}

impl RepSpec {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter("empty representation spec".into()));
        }
        for w in blocks.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidParameter(
                    "representation degrees must be strictly ascending".into(),
                ));
            }
        }
        for &(l, n) in &blocks {
            if l > MAX_DEGREE {
                return Err(Error::InvalidParameter(format!(
                    "degree {l} above the supported bound {MAX_DEGREE}"
                )));
            }
            if n == 0 {
                return Err(Error::InvalidParameter("zero multiplicity".into()));
            }
        }
        Ok(RepSpec { blocks })
    }

    /// Degrees 0..=l_max, each with multiplicity `mult`.
    pub fn degrees_up_to(l_max: usize, mult: usize) -> Result<Self> {
        RepSpec::new((0..=l_max).map(|l| (l, mult)).collect())
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn max_degree(&self) -> usize {
        self.blocks.last().map(|b| b.0).unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|&(l, n)| n * (2 * l + 1)).sum()
    }
}

impl Default for RepSpec {
    /// Three copies of degrees 0..3: dimension 48.
    fn default() -> Self {
        RepSpec::degrees_up_to(3, 3).unwrap()
    }
}

/// One real Wigner-D block for a fixed rotation.
#[derive(Clone, Debug)]
pub struct WignerBlock {
    pub l: usize,
    pub d: Array2<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Wigner's explicit factorial sum for the little-d matrix at angle `beta`;
/// entry (m' + l, m + l) holds d^l_{m'm}.
pub fn little_d(l: usize, beta: f64) -> Array2<f64> {
    let dim = 2 * l + 1;
    let (s, c) = ((beta / 2.0).sin(), (beta / 2.0).cos());
    let mut d = Array2::zeros((dim, dim));
    let li = l as i64;
    for mp in -li..=li {
        for m in -li..=li {
            let pref = (factorial((li + m) as usize)
                * factorial((li - m) as usize)
                * factorial((li + mp) as usize)
                * factorial((li - mp) as usize))
            .sqrt();
            let k_lo = 0.max(m - mp);
            let k_hi = (li + m).min(li - mp);
            let mut acc = 0.0;
            for k in k_lo..=k_hi {
                let sign = if (mp - m + k) % 2 == 0 { 1.0 } else { -1.0 };
                let denom = factorial((li + m - k) as usize)
                    * factorial(k as usize)
                    * factorial((li - mp - k) as usize)
                    * factorial((mp - m + k) as usize);
                let cpow = 2 * li + m - mp - 2 * k;
                let spow = mp - m + 2 * k;
                acc += sign * c.powi(cpow as i32) * s.powi(spow as i32) / denom;
            }
            d[((mp + li) as usize, (m + li) as usize)] = pref * acc;
        }
    }
    d
}

/// Complex Wigner-D in the convention D^l_{m'm} = e^{-i m' a} d^l_{m'm}(b) e^{-i m g}.
fn complex_d(l: usize, alpha: f64, beta: f64, gamma: f64) -> Array2<Complex64> {
    let dim = 2 * l + 1;
    let li = l as i64;
    let d = little_d(l, beta);
    let mut out = Array2::zeros((dim, dim));
    for mp in -li..=li {
        for m in -li..=li {
            let phase = Complex64::new(0.0, -(mp as f64) * alpha - (m as f64) * gamma).exp();
            out[((mp + li) as usize, (m + li) as usize)] =
                phase * d[((mp + li) as usize, (m + li) as usize)];
        }
    }
    out
}

/// Rows of the unitary change of basis from complex to real spherical
/// harmonics: y_mu = sum_m C[mu][m] Y^m.
fn complex_to_real_basis(l: usize) -> Array2<Complex64> {
    let dim = 2 * l + 1;
    let li = l as i64;
    let mut c: Array2<Complex64> = Array2::zeros((dim, dim));
    let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
    c[(l, l)] = Complex64::new(1.0, 0.0);
    for m in 1..=li {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let (pm, mm) = ((m + li) as usize, (-m + li) as usize);
        // y_m  = (Y^{-m} + (-1)^m Y^m) / sqrt(2)
        c[(pm, mm)] = Complex64::new(inv_sqrt2, 0.0);
        c[(pm, pm)] = Complex64::new(sign * inv_sqrt2, 0.0);
        // y_{-m} = i (Y^{-m} - (-1)^m Y^m) / sqrt(2)
        c[(mm, mm)] = Complex64::new(0.0, inv_sqrt2);
        c[(mm, pm)] = Complex64::new(0.0, -sign * inv_sqrt2);
    }
    c
}

/// Real-basis Wigner-D block via the ZYZ / little-d / basis-conjugation route.
pub fn wigner_d(l: usize, r: &Rotation) -> Result<WignerBlock> {
    if l > MAX_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "degree {l} above the supported bound {MAX_DEGREE}"
        )));
    }
    let e = so3::zyz_of(r);
    // y(Rx) = D_real y(x) requires the conjugated complex block:
    // Y(Rx) = conj(D(a,b,g)) Y(x) in this phase convention.
    let dc = complex_d(l, e.alpha, e.beta, e.gamma).mapv(|z| z.conj());
    let c = complex_to_real_basis(l);
    let dim = 2 * l + 1;
    let mut out = Array2::zeros((dim, dim));
    // C Dc C^dagger, imaginary parts cancel
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..dim {
                for b in 0..dim {
                    acc += c[(i, a)] * dc[(a, b)] * c[(j, b)].conj();
                }
            }
            debug_assert!(acc.im.abs() < 1e-9, "imaginary residue {}", acc.im);
            out[(i, j)] = acc.re;
        }
    }
    Ok(WignerBlock { l, d: out })
}

/// Block-diagonal stack of the spec's blocks, multiplicity copies adjacent.
pub fn rep_matrix(spec: &RepSpec, r: &Rotation) -> Result<Array2<f64>> {
    let dim = spec.total_dim();
    let mut out = Array2::zeros((dim, dim));
    let mut offset = 0;
    for &(l, n) in spec.blocks() {
        let block = wigner_d(l, r)?.d;
        let bd = 2 * l + 1;
        for _ in 0..n {
            for i in 0..bd {
                for j in 0..bd {
                    out[(offset + i, offset + j)] = block[(i, j)];
                }
            }
            offset += bd;
        }
    }
    Ok(out)
}

/// Group action on Fourier coefficients: rep_matrix(spec, R) * f_hat,
/// applied block by block.
pub fn act(spec: &RepSpec, r: &Rotation, f_hat: &Array1<f64>) -> Result<Array1<f64>> {
    if f_hat.len() != spec.total_dim() {
        return Err(Error::ShapeMismatch(format!(
            "coefficient vector has length {}, spec dimension is {}",
            f_hat.len(),
            spec.total_dim()
        )));
    }
    let mut out = Array1::zeros(f_hat.len());
    let mut offset = 0;
    for &(l, n) in spec.blocks() {
        let block = wigner_d(l, r)?.d;
        let bd = 2 * l + 1;
        for _ in 0..n {
            for i in 0..bd {
                let mut acc = 0.0;
                for j in 0..bd {
                    acc += block[(i, j)] * f_hat[offset + j];
                }
                out[offset + i] = acc;
            }
            offset += bd;
        }
    }
    Ok(out)
}

/// A scalar the representation recurrence can run over; implemented for
/// `f64` and for dual numbers carrying derivatives.
pub trait RepScalar: Copy {
    fn from_f64(x: f64) -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn scale(self, c: f64) -> Self;
}

impl RepScalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// l = 1 real block from rotation entries: P R P^T with (x,y,z) -> (y,z,x).
pub fn l1_block_entries<T: RepScalar>(r: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let p = [1usize, 2, 0]; // real-SH index -1,0,1 reads rows y,z,x
    let mut out = [[T::from_f64(0.0); 3]; 3];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &pj) in p.iter().enumerate() {
            out[i][j] = r[pi][pj];
        }
    }
    out
}

/// Dense square block in row-major order, indexed by (m' + l, m + l).
#[derive(Clone, Debug)]
pub struct GenericBlock<T> {
    pub l: usize,
    data: Vec<T>,
}

impl<T: Copy> GenericBlock<T> {
    pub fn get(&self, mp: i64, m: i64) -> T {
        let l = self.l as i64;
        self.data[((mp + l) * (2 * l + 1) + (m + l)) as usize]
    }
    fn set(&mut self, mp: i64, m: i64, v: T) {
        let l = self.l as i64;
        self.data[((mp + l) * (2 * l + 1) + (m + l)) as usize] = v;
    }
}

fn delta(a: i64, b: i64) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Ivanic-Ruedenberg recurrence: real blocks of all degrees 0..=l_max built
/// from the l = 1 block. Polynomial in the entries of `r`, hence exact on
/// dual numbers.
pub fn real_rep_blocks<T: RepScalar>(r: &[[T; 3]; 3], l_max: usize) -> Vec<GenericBlock<T>> {
    let zero = T::from_f64(0.0);
    let one = T::from_f64(1.0);
    let mut blocks: Vec<GenericBlock<T>> = Vec::with_capacity(l_max + 1);
    blocks.push(GenericBlock { l: 0, data: vec![one] });
    if l_max == 0 {
        return blocks;
    }
    let r1 = l1_block_entries(r);
    let l1 = GenericBlock {
        l: 1,
        data: r1.iter().flatten().copied().collect(),
    };
    blocks.push(l1);
    for l in 2..=l_max {
        let li = l as i64;
        let prev = &blocks[l - 1];
        let r1b = &blocks[1];
        // P_{i}(a, b): product of an l=1 entry with an l-1 entry
        let p = |i: i64, a: i64, b: i64| -> T {
            if b.abs() < li {
                r1b.get(i, 0).mul(prev.get(a, b))
            } else if b == li {
                r1b.get(i, 1)
                    .mul(prev.get(a, li - 1))
                    .sub(r1b.get(i, -1).mul(prev.get(a, -(li - 1))))
            } else {
                r1b.get(i, -1)
                    .mul(prev.get(a, li - 1))
                    .add(r1b.get(i, 1).mul(prev.get(a, -(li - 1))))
            }
        };
        let mut cur = GenericBlock {
            l,
            data: vec![zero; (2 * l + 1) * (2 * l + 1)],
        };
        for mp in -li..=li {
            for m in -li..=li {
                let denom = if m.abs() < li {
                    ((li + m) * (li - m)) as f64
                } else {
                    ((2 * li) * (2 * li - 1)) as f64
                };
                let u = (((li + mp) * (li - mp)) as f64 / denom).sqrt();
                let v = 0.5
                    * ((1.0 + delta(mp, 0)) * ((li + mp.abs() - 1) * (li + mp.abs())) as f64
                        / denom)
                        .sqrt()
                    * (1.0 - 2.0 * delta(mp, 0));
                let w = -0.5 * (((li - mp.abs() - 1) * (li - mp.abs())) as f64 / denom).sqrt()
                    * (1.0 - delta(mp, 0));
                let mut acc = zero;
                if u != 0.0 {
                    acc = acc.add(p(0, mp, m).scale(u));
                }
                if v != 0.0 {
                    let vt = if mp == 0 {
                        p(1, 1, m).add(p(-1, -1, m))
                    } else if mp > 0 {
                        let a = p(1, mp - 1, m).scale((1.0 + delta(mp, 1)).sqrt());
                        if mp == 1 {
                            a
                        } else {
                            a.sub(p(-1, -mp + 1, m))
                        }
                    } else {
                        let a = p(-1, -mp - 1, m).scale((1.0 + delta(mp, -1)).sqrt());
                        if mp == -1 {
                            a
                        } else {
                            a.add(p(1, mp + 1, m))
                        }
                    };
                    acc = acc.add(vt.scale(v));
                }
                if w != 0.0 {
                    let wt = if mp > 0 {
                        p(1, mp + 1, m).add(p(-1, -mp - 1, m))
                    } else {
                        p(1, mp - 1, m).sub(p(-1, -mp + 1, m))
                    };
                    acc = acc.add(wt.scale(w));
                }
                cur.set(mp, m, acc);
            }
        }
        blocks.push(cur);
    }
    blocks
}

/// Applies the spec's block-diagonal representation to `f`, with blocks from
/// the recurrence. Generic so the autodiff layer can push dual numbers through.
pub fn act_recursive<T: RepScalar>(spec: &RepSpec, r: &[[T; 3]; 3], f: &[T]) -> Vec<T> {
    let blocks = real_rep_blocks(r, spec.max_degree());
    let zero = T::from_f64(0.0);
    let mut out = vec![zero; f.len()];
    let mut offset = 0;
    for &(l, n) in spec.blocks() {
        let bd = 2 * l + 1;
        let block = &blocks[l];
        for _ in 0..n {
            for i in 0..bd {
                let mut acc = zero;
                for j in 0..bd {
                    acc = acc.add(block.data[i * bd + j].mul(f[offset + j]));
                }
                out[offset + i] = acc;
            }
            offset += bd;
        }
    }
    out
}

/// Toy dataset: pairs (W(R_i) v, R_i) with Haar-uniform R_i and a content
/// vector v drawn once from a standard Gaussian seeded by `content_seed`.
pub fn make_toy_dataset<R: rand::Rng>(
    spec: &RepSpec,
    content_seed: u64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(Array1<f64>, Rotation)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("dataset size must be >= 1".into()));
    }
    let v = content_vector(spec, content_seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = so3::sample_uniform(rng);
        out.push((act(spec, &r, &v)?, r));
    }
    Ok(out)
}

/// The shared content vector of the toy construction.
pub fn content_vector(spec: &RepSpec, content_seed: u64) -> Array1<f64> {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(content_seed);
    Array1::from_iter((0..spec.total_dim()).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// S^1 orbit in data space: R_i = exp(axis 2 pi i / n_steps), closed loop
/// with n_steps + 1 entries so the final point returns to the start.
pub fn make_s1_trajectory(
    spec: &RepSpec,
    v: &Array1<f64>,
    axis: &Vec3,
    n_steps: usize,
) -> Result<Vec<(Array1<f64>, Rotation)>> {
    if n_steps < 8 {
        return Err(Error::InvalidParameter(
            "trajectories need at least 8 steps".into(),
        ));
    }
    let n = so3::norm3(axis);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("axis must be a unit vector".into()));
    }
    let mut out = Vec::with_capacity(n_steps + 1);
    for i in 0..=n_steps {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n_steps as f64;
        let r = so3::exp_map(&[axis[0] * phi, axis[1] * phi, axis[2] * phi]);
        out.push((act(spec, &r, v)?, r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{exp_map, frobenius_distance, sample_uniform, theta_of};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Orthonormal real spherical harmonics up to l = 3, order m = -l..l.
    fn real_sh(l: usize, p: &Vec3) -> Vec<f64> {
        let (x, y, z) = (p[0], p[1], p[2]);
        let pi = PI;
        match l {
            0 => vec![0.5 * (1.0 / pi).sqrt()],
            1 => {
                let c = (3.0 / (4.0 * pi)).sqrt();
                vec![c * y, c * z, c * x]
            }
            2 => vec![
                0.5 * (15.0 / pi).sqrt() * x * y,
                0.5 * (15.0 / pi).sqrt() * y * z,
                0.25 * (5.0 / pi).sqrt() * (3.0 * z * z - 1.0),
                0.5 * (15.0 / pi).sqrt() * x * z,
                0.25 * (15.0 / pi).sqrt() * (x * x - y * y),
            ],
            3 => vec![
                0.25 * (35.0 / (2.0 * pi)).sqrt() * y * (3.0 * x * x - y * y),
                0.5 * (105.0 / pi).sqrt() * x * y * z,
                0.25 * (21.0 / (2.0 * pi)).sqrt() * y * (5.0 * z * z - 1.0),
                0.25 * (7.0 / pi).sqrt() * (5.0 * z * z * z - 3.0 * z),
                0.25 * (21.0 / (2.0 * pi)).sqrt() * x * (5.0 * z * z - 1.0),
                0.25 * (105.0 / pi).sqrt() * z * (x * x - y * y),
                0.25 * (35.0 / (2.0 * pi)).sqrt() * x * (x * x - 3.0 * y * y),
            ],
            _ => panic!("oracle only covers l <= 3"),
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n = crate::so3::norm3(&v);
            if n > 0.1 && n < 1.0 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    /// Solves D from y(R x_i) = D y(x_i) over many sphere points.
    fn oracle_block(l: usize, r: &Rotation) -> Array2<f64> {
        let dim = 2 * l + 1;
        let n_pts = 4 * dim;
        let mut rng = ChaCha8Rng::seed_from_u64(1234 + l as u64);
        let mut a = Array2::<f64>::zeros((dim, dim)); // Y Y^T
        let mut b = Array2::<f64>::zeros((dim, dim)); // Y_rot Y^T
        for _ in 0..n_pts {
            let p = random_unit(&mut rng);
            let yp = real_sh(l, &p);
            let yr = real_sh(l, &r.apply(&p));
            for i in 0..dim {
                for j in 0..dim {
                    a[(i, j)] += yp[i] * yp[j];
                    b[(i, j)] += yr[i] * yp[j];
                }
            }
        }
        // D = B A^{-1} via Gaussian elimination on A^T D^T = B^T
        let mut aug = Array2::<f64>::zeros((dim, 2 * dim));
        for i in 0..dim {
            for j in 0..dim {
                aug[(i, j)] = a[(j, i)];
                aug[(i, dim + j)] = b[(j, i)];
            }
        }
        for col in 0..dim {
            let mut piv = col;
            for row in col + 1..dim {
                if aug[(row, col)].abs() > aug[(piv, col)].abs() {
                    piv = row;
                }
            }
            if piv != col {
                for j in 0..2 * dim {
                    let tmp = aug[(col, j)];
                    aug[(col, j)] = aug[(piv, j)];
                    aug[(piv, j)] = tmp;
                }
            }
            let d = aug[(col, col)];
            for j in 0..2 * dim {
                aug[(col, j)] /= d;
            }
            for row in 0..dim {
                if row != col {
                    let f = aug[(row, col)];
                    for j in 0..2 * dim {
                        aug[(row, j)] -= f * aug[(col, j)];
                    }
                }
            }
        }
        let mut d = Array2::<f64>::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                d[(i, j)] = aug[(j, dim + i)];
            }
        }
        d
    }

    fn block_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn degree_zero_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let r = sample_uniform(&mut rng);
            let b = wigner_d(0, &r).unwrap();
            assert!((b.d[(0, 0)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degree_one_is_permuted_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let r = sample_uniform(&mut rng);
            let d = wigner_d(1, &r).unwrap().d;
            let m = r.matrix();
            let p = [1usize, 2, 0];
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (d[(i, j)] - m[p[i]][p[j]]).abs() < 1e-10,
                        "entry ({i},{j}): {} vs {}",
                        d[(i, j)],
                        m[p[i]][p[j]]
                    );
                }
            }
        }
    }

    #[test]
    fn matches_spherical_harmonic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in 0..=3 {
            for _ in 0..10 {
                let r = sample_uniform(&mut rng);
                let d = wigner_d(l, &r).unwrap().d;
                let d_oracle = oracle_block(l, &r);
                assert!(
                    block_err(&d, &d_oracle) < 1e-8,
                    "l = {l}: err {}",
                    block_err(&d, &d_oracle)
                );
            }
        }
    }

    #[test]
    fn identity_maps_to_identity() {
        let spec = RepSpec::default();
        let m = rep_matrix(&spec, &Rotation::identity()).unwrap();
        for i in 0..spec.total_dim() {
            for j in 0..spec.total_dim() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blocks_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let r = sample_uniform(&mut rng);
            for l in 0..=3 {
                let d = wigner_d(l, &r).unwrap().d;
                let dim = 2 * l + 1;
                let g = d.t().dot(&d);
                let mut err = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        let e = if i == j { 1.0 } else { 0.0 };
                        err += (g[(i, j)] - e).powi(2);
                    }
                }
                assert!(err.sqrt() < 1e-9, "l = {l} orthogonality {}", err.sqrt());
            }
        }
    }

    #[test]
    fn homomorphism_per_block_and_on_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = RepSpec::default();
        for _ in 0..50 {
            let g = sample_uniform(&mut rng);
            let h = sample_uniform(&mut rng);
            let gh = g.compose(&h);
            for l in [2usize] {
                let a = wigner_d(l, &g).unwrap().d.dot(&wigner_d(l, &h).unwrap().d);
                let b = wigner_d(l, &gh).unwrap().d;
                assert!(block_err(&a, &b) < 1e-8);
            }
            let a = rep_matrix(&spec, &g)
                .unwrap()
                .dot(&rep_matrix(&spec, &h).unwrap());
            let b = rep_matrix(&spec, &gh).unwrap();
            let err = (&a - &b).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err < 1e-8);
        }
    }

    #[test]
    fn z_rotations_compose_additively() {
        let spec = RepSpec::default();
        let (t1, t2) = (0.7, 1.9);
        let r1 = exp_map(&[0.0, 0.0, t1]);
        let r2 = exp_map(&[0.0, 0.0, t2]);
        let r12 = exp_map(&[0.0, 0.0, t1 + t2]);
        let a = rep_matrix(&spec, &r1)
            .unwrap()
            .dot(&rep_matrix(&spec, &r2).unwrap());
        let b = rep_matrix(&spec, &r12).unwrap();
        let err = (&a - &b).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err < 1e-9);
    }

    #[test]
    fn character_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let r = sample_uniform(&mut rng);
            let theta = theta_of(&r);
            for l in 0..=3i64 {
                let d = wigner_d(l as usize, &r).unwrap().d;
                let tr: f64 = (0..(2 * l + 1) as usize).map(|i| d[(i, i)]).sum();
                let expected: f64 = (-l..=l).map(|m| (m as f64 * theta).cos()).sum();
                assert!((tr - expected).abs() < 1e-8, "l = {l}: {tr} vs {expected}");
            }
        }
    }

    #[test]
    fn recursion_agrees_with_factorial_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let r = sample_uniform(&mut rng);
            let blocks = real_rep_blocks(r.matrix(), 3);
            for l in 0..=3usize {
                let d = wigner_d(l, &r).unwrap().d;
                let li = l as i64;
                let mut err = 0.0;
                for mp in -li..=li {
                    for m in -li..=li {
                        let rec = blocks[l].get(mp, m);
                        err += (rec - d[((mp + li) as usize, (m + li) as usize)]).powi(2);
                    }
                }
                assert!(err.sqrt() < 1e-10, "l = {l}: recursion err {}", err.sqrt());
            }
        }
    }

    #[test]
    fn act_matches_recursive_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = RepSpec::default();
        let v = content_vector(&spec, 99);
        for _ in 0..20 {
            let r = sample_uniform(&mut rng);
            let a = act(&spec, &r, &v).unwrap();
            let b = act_recursive(&spec, r.matrix(), v.as_slice().unwrap());
            for i in 0..spec.total_dim() {
                assert!((a[i] - b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn act_preserves_norm_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = RepSpec::default();
        let v = content_vector(&spec, 5);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..20 {
            let r1 = sample_uniform(&mut rng);
            let r2 = sample_uniform(&mut rng);
            let a1 = act(&spec, &r1, &v).unwrap();
            assert!((a1.iter().map(|x| x * x).sum::<f64>().sqrt() - norm).abs() < 1e-10);
            let nested = act(&spec, &r2, &a1).unwrap();
            let direct = act(&spec, &r2.compose(&r1), &v).unwrap();
            let err = (&nested - &direct).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err < 1e-8);
        }
        let id = act(&spec, &Rotation::identity(), &v).unwrap();
        assert!((&id - &v).iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-12);
        assert!(act(&spec, &Rotation::identity(), &Array1::zeros(3)).is_err());
    }

    #[test]
    fn toy_dataset_shapes_and_determinism() {
        let spec = RepSpec::default();
        assert_eq!(spec.total_dim(), 48);
        let a = make_toy_dataset(&spec, 1, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = make_toy_dataset(&spec, 1, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let v = content_vector(&spec, 1);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for ((xa, ra), (xb, rb)) in a.iter().zip(&b) {
            assert_eq!(xa.as_slice().unwrap(), xb.as_slice().unwrap());
            assert_eq!(ra.matrix(), rb.matrix());
            assert!((xa.iter().map(|x| x * x).sum::<f64>().sqrt() - norm).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_closes_and_moves_at_constant_speed() {
        let spec = RepSpec::default();
        let v = content_vector(&spec, 2);
        let axis = [0.0, 0.6, 0.8];
        let traj = make_s1_trajectory(&spec, &v, &axis, 64).unwrap();
        assert_eq!(traj.len(), 65);
        let first = &traj[0].0;
        let last = &traj[64].0;
        let err = (first - last).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err < 1e-9);
        let mut steps = Vec::new();
        for w in traj.windows(2) {
            let d = (&w[1].0 - &w[0].0).iter().map(|x| x * x).sum::<f64>().sqrt();
            steps.push(d);
        }
        for s in &steps {
            assert!((s - steps[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn quarter_turn_trajectory_hand_values() {
        // l <= 1, multiplicity 1: block diag(1, P R P^T)
        let spec = RepSpec::degrees_up_to(1, 1).unwrap();
        let v = Array1::from(vec![1.0, 0.5, -0.25, 2.0]);
        let traj = make_s1_trajectory(&spec, &v, &[0.0, 0.0, 1.0], 8).unwrap();
        // step 2 is the quarter turn about z: x -> y, y -> -x
        let r = exp_map(&[0.0, 0.0, PI / 2.0]);
        let m = r.matrix();
        // real l=1 order (y, z, x)
        let expected = [
            1.0,
            m[1][1] * 0.5 + m[1][2] * (-0.25) + m[1][0] * 2.0,
            m[2][1] * 0.5 + m[2][2] * (-0.25) + m[2][0] * 2.0,
            m[0][1] * 0.5 + m[0][2] * (-0.25) + m[0][0] * 2.0,
        ];
        for i in 0..4 {
            assert!((traj[2].0[i] - expected[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn faithfulness_above_degree_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let spec = RepSpec::default();
        for _ in 0..50 {
            let r1 = sample_uniform(&mut rng);
            let r2 = sample_uniform(&mut rng);
            if frobenius_distance(&r1, &r2) >= 1e-6 {
                let m1 = rep_matrix(&spec, &r1).unwrap();
                let m2 = rep_matrix(&spec, &r2).unwrap();
                let err = (&m1 - &m2).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(err > 1e-6);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(RepSpec::new(vec![]).is_err());
        assert!(RepSpec::new(vec![(1, 1), (1, 1)]).is_err());
        assert!(RepSpec::new(vec![(0, 0)]).is_err());
        assert!(RepSpec::new(vec![(7, 1)]).is_err());
        assert!(wigner_d(7, &Rotation::identity()).is_err());
    }
}
