//! Rotation-group primitives: conversions, exp/log maps, metrics and
//! Haar-uniform sampling.
//!
//! Rotations are stored as row-major 3x3 matrices. The algebra so(3) is
//! identified with R^3 through the hat map; `exp_map` is the Rodrigues
//! formula and `log_map` returns the principal branch with angle in [0, pi].

use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::Error;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Frobenius tolerance accepted on `R^T R - I` and `det(R) - 1`.
pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Below this angle `exp_map` switches to its second-order Taylor branch.
pub const EXP_TAYLOR_THRESHOLD: f64 = 1e-6;
/// Below this angle `log_map` uses the series for theta / (2 sin theta).
pub const LOG_SERIES_THRESHOLD: f64 = 1e-4;
/// Above this angle `log_map` recovers the axis from the symmetric part.
pub const LOG_AXIS_THRESHOLD: f64 = 3.0;

/// Element of SO(3): a 3x3 orthonormal matrix with determinant one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    m: Mat3,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Validates orthonormality and unit determinant before accepting `m`.
    pub fn from_matrix(m: Mat3) -> Result<Self, Error> {
        let r = Rotation { m };
        let mut dev = 0.0;
        let g = mat_mul(&transpose(&m), &m);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                dev += (g[i][j] - target).powi(2);
            }
        }
        if dev.sqrt() >= ORTHONORMALITY_TOL {
            return Err(Error::InvalidRotation(format!(
                "|R^T R - I|_F = {:.3e}",
                dev.sqrt()
            )));
        }
        let d = det3(&m);
        if (d - 1.0).abs() >= ORTHONORMALITY_TOL {
            return Err(Error::InvalidRotation(format!("det(R) = {d:.12}")));
        }
        Ok(r)
    }

    /// Caller guarantees the invariants hold.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation { m }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn transpose(&self) -> Rotation {
        Rotation {
            m: transpose(&self.m),
        }
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation {
            m: mat_mul(&self.m, &other.m),
        }
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        mat_vec(&self.m, v)
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// Row-major flattening, matching the dataset file layout.
    pub fn to_flat(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = self.m[i][j];
            }
        }
        out
    }

    pub fn from_flat(v: &[f64; 9]) -> Result<Self, Error> {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = v[3 * i + j];
            }
        }
        Rotation::from_matrix(m)
    }
}

/// Unit quaternion (w, x, y, z); the double cover of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion {
    q: [f64; 4],
}

impl UnitQuaternion {
    pub fn new(q: [f64; 4]) -> Result<Self, Error> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if (n - 1.0).abs() >= 1e-9 {
            return Err(Error::NonUnitQuaternion(n));
        }
        Ok(UnitQuaternion { q })
    }

    pub fn normalize(q: [f64; 4]) -> Result<Self, Error> {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < 1e-12 {
            return Err(Error::DegenerateInput("quaternion norm below 1e-12".into()));
        }
        Ok(UnitQuaternion {
            q: [q[0] / n, q[1] / n, q[2] / n, q[3] / n],
        })
    }

    pub fn components(&self) -> [f64; 4] {
        self.q
    }

    pub fn neg(&self) -> UnitQuaternion {
        UnitQuaternion {
            q: [-self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    /// Hamilton product.
    pub fn mul(&self, o: &UnitQuaternion) -> UnitQuaternion {
        let [w1, x1, y1, z1] = self.q;
        let [w2, x2, y2, z2] = o.q;
        UnitQuaternion {
            q: [
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ],
        }
    }
}

/// ZYZ Euler angles (alpha, beta, gamma).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerZyz {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Basis expansion v1 L1 + v2 L2 + v3 L3 of so(3).
pub fn hat(v: &Vec3) -> Mat3 {
    [
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ]
}

pub fn vee(m: &Mat3) -> Vec3 {
    [m[2][1], m[0][2], m[1][0]]
}

pub fn norm3(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rodrigues formula; second-order Taylor branch below `EXP_TAYLOR_THRESHOLD`.
pub fn exp_map(v: &Vec3) -> Rotation {
    let theta = norm3(v);
    let k = hat(v);
    let k2 = mat_mul(&k, &k);
    let mut m = [[0.0; 3]; 3];
    if theta < EXP_TAYLOR_THRESHOLD {
        // I + hat(v) + hat(v)^2 / 2, exact to O(theta^3)
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = eye(i, j) + k[i][j] + 0.5 * k2[i][j];
            }
        }
    } else {
        let (a, b) = ((theta.sin()) / theta, (1.0 - theta.cos()) / (theta * theta));
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = eye(i, j) + a * k[i][j] + b * k2[i][j];
            }
        }
    }
    Rotation { m }
}

/// Rotation angle in [0, pi]; the arccos argument is clamped silently.
pub fn theta_of(r: &Rotation) -> f64 {
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}

/// Principal logarithm: the algebra element of norm theta(R) in [0, pi].
///
/// Three branches: a series for small angles, the direct formula at
/// moderate angles, and axis recovery from the symmetric part near pi
/// (where R - R^T loses all angle information). At theta = pi the axis
/// sign is fixed by making its largest-magnitude component positive.
pub fn log_map(r: &Rotation) -> Vec3 {
    let theta = theta_of(r);
    let m = &r.m;
    let w = [
        m[2][1] - m[1][2],
        m[0][2] - m[2][0],
        m[1][0] - m[0][1],
    ];
    if theta < LOG_SERIES_THRESHOLD {
        // theta / (2 sin theta) = 1/2 + theta^2/12 + O(theta^4)
        let c = 0.5 + theta * theta / 12.0;
        return [c * w[0], c * w[1], c * w[2]];
    }
    if theta > LOG_AXIS_THRESHOLD {
        // arccos is ill-conditioned near pi; refine the angle from the skew
        // part, where sin(theta) = |w| / 2 is well-conditioned
        let theta = PI - ((norm3(&w) / 2.0).min(1.0)).asin();
        // sym(R) = cos(theta) I + (1 - cos(theta)) u u^T, exact for all theta
        let ct = theta.cos();
        let denom = 1.0 - ct;
        let mut uut = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                uut[i][j] = (0.5 * (m[i][j] + m[j][i]) - ct * eye(i, j)) / denom;
            }
        }
        let mut jmax = 0;
        for j in 1..3 {
            if uut[j][j] > uut[jmax][jmax] {
                jmax = j;
            }
        }
        let d = uut[jmax][jmax].max(0.0).sqrt();
        let mut u = [uut[0][jmax] / d, uut[1][jmax] / d, uut[2][jmax] / d];
        let un = norm3(&u);
        u = [u[0] / un, u[1] / un, u[2] / un];
        // resolve the sign from the skew part when it is informative
        let s = dot3(&u, &w);
        let flip = if s.abs() > 1e-8 {
            s < 0.0
        } else {
            let mut imax = 0;
            for i in 1..3 {
                if u[i].abs() > u[imax].abs() {
                    imax = i;
                }
            }
            u[imax] < 0.0
        };
        if flip {
            u = [-u[0], -u[1], -u[2]];
        }
        return [theta * u[0], theta * u[1], theta * u[2]];
    }
    let c = theta / (2.0 * theta.sin());
    [c * w[0], c * w[1], c * w[2]]
}

/// Two-to-one covering map from unit quaternions onto SO(3).
pub fn quat_to_rotation(q: &UnitQuaternion) -> Rotation {
    let [w, x, y, z] = q.q;
    Rotation {
        m: [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ],
    }
}

/// A quaternion lift of `r` (Shepperd's method); the other lift is its negation.
pub fn rotation_to_quat(r: &Rotation) -> UnitQuaternion {
    let m = &r.m;
    let tr = r.trace();
    let q = if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    };
    UnitQuaternion::normalize(q).expect("lift of a valid rotation is non-zero")
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn rot_y(b: f64) -> Mat3 {
    let (s, c) = b.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

/// R_z(alpha) R_y(beta) R_z(gamma).
pub fn euler_zyz_to_rotation(e: &EulerZyz) -> Rotation {
    let m = mat_mul(&mat_mul(&rot_z(e.alpha), &rot_y(e.beta)), &rot_z(e.gamma));
    Rotation { m }
}

/// ZYZ decomposition with alpha, gamma in (-pi, pi], beta in [0, pi].
/// At the gimbal degeneracies (beta = 0 or pi) gamma is set to zero.
pub fn zyz_of(r: &Rotation) -> EulerZyz {
    let m = &r.m;
    let cb = m[2][2].clamp(-1.0, 1.0);
    let sb = (m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
    if sb < 1e-12 {
        if cb > 0.0 {
            EulerZyz {
                alpha: m[1][0].atan2(m[0][0]),
                beta: 0.0,
                gamma: 0.0,
            }
        } else {
            EulerZyz {
                alpha: (-m[1][0]).atan2(-m[0][0]),
                beta: std::f64::consts::PI,
                gamma: 0.0,
            }
        }
    } else {
        EulerZyz {
            alpha: m[1][2].atan2(m[0][2]),
            beta: cb.acos(),
            gamma: m[2][1].atan2(-m[2][0]),
        }
    }
}

/// Haar-uniform rotation: a normalized 4-dim Gaussian draw through the
/// covering map.
pub fn sample_uniform<R: Rng>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        if let Ok(u) = UnitQuaternion::normalize(q) {
            return quat_to_rotation(&u);
        }
    }
}

pub fn frobenius_distance(a: &Rotation, b: &Rotation) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = a.m[i][j] - b.m[i][j];
            s += d * d;
        }
    }
    s.sqrt()
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub(crate) fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn eye(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}
