//! Mean-parameterization heads: fixed surjective maps from raw network
//! outputs onto SO(3), plus the s2s2 embedding whose composition with its
//! head is the identity. Head kinds are named by the tokens used in result
//! tables: `alg`, `q`, `s2s1`, `s2s2`.

use serde::{Deserialize, Serialize};

use crate::so3::{self, Rotation, UnitQuaternion, Vec3};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-12;
const PARALLEL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Alg,
    Q,
    S2S1,
    S2S2,
}

impl HeadKind {
    /// Dimensionality of the raw input block the head consumes.
    pub fn input_dim(&self) -> usize {
        match self {
            HeadKind::Alg => 3,
            HeadKind::Q => 4,
            HeadKind::S2S1 => 5,
            HeadKind::S2S2 => 6,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            HeadKind::Alg => "alg",
            HeadKind::Q => "q",
            HeadKind::S2S1 => "s2s1",
            HeadKind::S2S2 => "s2s2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alg" => Ok(HeadKind::Alg),
            "q" => Ok(HeadKind::Q),
            "s2s1" => Ok(HeadKind::S2S1),
            "s2s2" => Ok(HeadKind::S2S2),
            _ => Err(Error::Config(format!("unknown head kind: {s}"))),
        }
    }

    /// Dispatches on the packed raw block.
    pub fn apply(&self, raw: &[f64]) -> Result<Rotation> {
        if raw.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "head {} expects {} inputs, got {}",
                self.token(),
                self.input_dim(),
                raw.len()
            )));
        }
        match self {
            HeadKind::Alg => Ok(head_algebra(&[raw[0], raw[1], raw[2]])),
            HeadKind::Q => head_quaternion(&[raw[0], raw[1], raw[2], raw[3]]),
            HeadKind::S2S1 => head_s2s1(&[raw[0], raw[1], raw[2]], &[raw[3], raw[4]]),
            HeadKind::S2S2 => head_s2s2(&[raw[0], raw[1], raw[2]], &[raw[3], raw[4], raw[5]]),
        }
    }
}

/// alg: the exponential map itself.
pub fn head_algebra(x: &Vec3) -> Rotation {
    so3::exp_map(x)
}

/// q: normalize to the unit quaternions, then the covering map.
pub fn head_quaternion(x: &[f64; 4]) -> Result<Rotation> {
    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    if n <= NORM_TOL {
        return Err(Error::DegenerateInput(
            "quaternion head input has near-zero norm".into(),
        ));
    }
    let q = UnitQuaternion::normalize(*x)?;
    Ok(so3::quat_to_rotation(&q))
}

/// s2s1: axis u in S^2 and angle (cos, sin) = y/|y| in S^1, composed as
/// I + v2 u_x + (1 - v1) u_x^2.
pub fn head_s2s1(x: &Vec3, y: &[f64; 2]) -> Result<Rotation> {
    let nx = so3::norm3(x);
    let ny = (y[0] * y[0] + y[1] * y[1]).sqrt();
    if nx <= NORM_TOL || ny <= NORM_TOL {
        return Err(Error::DegenerateInput(
            "s2s1 head input has near-zero norm".into(),
        ));
    }
    let u = [x[0] / nx, x[1] / nx, x[2] / nx];
    let (v1, v2) = (y[0] / ny, y[1] / ny);
    let k = so3::hat(&u);
    let k2 = so3::mat_mul(&k, &k);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { 1.0 } else { 0.0 };
            m[i][j] = e + v2 * k[i][j] + (1.0 - v1) * k2[i][j];
        }
    }
    Ok(Rotation::from_matrix_unchecked(m))
}

/// s2s2: Gram-Schmidt on the two blocks; rows of the result are
/// (w1, w2, w1 x w2).
pub fn head_s2s2(x: &Vec3, y: &Vec3) -> Result<Rotation> {
    let nx = so3::norm3(x);
    if nx <= NORM_TOL {
        return Err(Error::DegenerateInput(
            "s2s2 head first block has near-zero norm".into(),
        ));
    }
    let w1 = [x[0] / nx, x[1] / nx, x[2] / nx];
    let ny = so3::norm3(y);
    if ny <= NORM_TOL {
        return Err(Error::DegenerateInput(
            "s2s2 head second block has near-zero norm".into(),
        ));
    }
    let yn = [y[0] / ny, y[1] / ny, y[2] / ny];
    let proj = so3::dot3(&w1, &yn);
    let w2p = [yn[0] - proj * w1[0], yn[1] - proj * w1[1], yn[2] - proj * w1[2]];
    let n2 = so3::norm3(&w2p);
    // |w2'| = sin(angle between the blocks)
    if n2 <= PARALLEL_TOL {
        return Err(Error::DegenerateInput(
            "s2s2 head blocks are near-parallel".into(),
        ));
    }
    let w2 = [w2p[0] / n2, w2p[1] / n2, w2p[2] / n2];
    let w3 = so3::cross(&w1, &w2);
    Ok(Rotation::from_matrix_unchecked([w1, w2, w3]))
}

/// The continuous right inverse of `head_s2s2`: the first two rows.
pub fn embed_s2s2(r: &Rotation) -> (Vec3, Vec3) {
    let m = r.matrix();
    (m[0], m[1])
}
