//! Forward-mode dual numbers used for the analytic Jacobians of the two
//! structured tape operations: the Rodrigues map (three directions) and the
//! block-representation action (nine directions, one per rotation entry).

use crate::wigner::RepScalar;

/// Dual number with a three-dimensional derivative part.
#[derive(Clone, Copy, Debug)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn constant(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    pub fn seeded(v: f64, dir: usize) -> Self {
        let mut d = [0.0; 3];
        d[dir] = 1.0;
        Dual3 { v, d }
    }

    pub fn add(self, o: Self) -> Self {
        Dual3 {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]],
        }
    }

    pub fn sub(self, o: Self) -> Self {
        Dual3 {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]],
        }
    }

    pub fn mul(self, o: Self) -> Self {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Dual3 {
            v: self.v * c,
            d: [self.d[0] * c, self.d[1] * c, self.d[2] * c],
        }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let g = 0.5 / s;
        Dual3 {
            v: s,
            d: [self.d[0] * g, self.d[1] * g, self.d[2] * g],
        }
    }

    pub fn sin(self) -> Self {
        let c = self.v.cos();
        Dual3 {
            v: self.v.sin(),
            d: [self.d[0] * c, self.d[1] * c, self.d[2] * c],
        }
    }

    pub fn cos(self) -> Self {
        let s = -self.v.sin();
        Dual3 {
            v: self.v.cos(),
            d: [self.d[0] * s, self.d[1] * s, self.d[2] * s],
        }
    }

    pub fn recip(self) -> Self {
        let g = -1.0 / (self.v * self.v);
        Dual3 {
            v: 1.0 / self.v,
            d: [self.d[0] * g, self.d[1] * g, self.d[2] * g],
        }
    }
}

/// Rodrigues map on duals: R = I + A hat(v) + B hat(v)^2 with
/// A = sin(t)/t and B = (1 - cos(t))/t^2, expanded in series below the
/// branch threshold so the derivative stays exact through t = 0.
/// Returns the rotation entries row-major together with the 9x3 Jacobian.
pub fn exp_map_with_jacobian(v: &[f64; 3]) -> ([f64; 9], [[f64; 3]; 9]) {
    let x = [
        Dual3::seeded(v[0], 0),
        Dual3::seeded(v[1], 1),
        Dual3::seeded(v[2], 2),
    ];
    let t2 = x[0].mul(x[0]).add(x[1].mul(x[1])).add(x[2].mul(x[2]));
    let (a, b) = if t2.v < 1e-12 {
        // sin(t)/t = 1 - t^2/6 + t^4/120, (1-cos t)/t^2 = 1/2 - t^2/24 + t^4/720
        let a = Dual3::constant(1.0)
            .sub(t2.scale(1.0 / 6.0))
            .add(t2.mul(t2).scale(1.0 / 120.0));
        let b = Dual3::constant(0.5)
            .sub(t2.scale(1.0 / 24.0))
            .add(t2.mul(t2).scale(1.0 / 720.0));
        (a, b)
    } else {
        let t = t2.sqrt();
        let a = t.sin().mul(t.recip());
        let b = Dual3::constant(1.0).sub(t.cos()).mul(t2.recip());
        (a, b)
    };
    // hat(v) and hat(v)^2 entries, assembled explicitly
    let (vx, vy, vz) = (x[0], x[1], x[2]);
    let zero = Dual3::constant(0.0);
    let h = [
        [zero, vz.scale(-1.0), vy],
        [vz, zero, vx.scale(-1.0)],
        [vy.scale(-1.0), vx, zero],
    ];
    let mut h2 = [[zero; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = zero;
            for k in 0..3 {
                acc = acc.add(h[i][k].mul(h[k][j]));
            }
            h2[i][j] = acc;
        }
    }
    let mut out = [0.0; 9];
    let mut jac = [[0.0; 3]; 9];
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { 1.0 } else { 0.0 };
            let r = Dual3::constant(e).add(a.mul(h[i][j])).add(b.mul(h2[i][j]));
            out[3 * i + j] = r.v;
            jac[3 * i + j] = r.d;
        }
    }
    (out, jac)
}

/// Dual number with a nine-dimensional derivative part, one direction per
/// rotation-matrix entry; implements the representation-recurrence scalar.
#[derive(Clone, Copy, Debug)]
pub struct Dual9 {
    pub v: f64,
    pub d: [f64; 9],
}

impl Dual9 {
    pub fn constant(v: f64) -> Self {
        Dual9 { v, d: [0.0; 9] }
    }

    pub fn seeded(v: f64, dir: usize) -> Self {
        let mut d = [0.0; 9];
        d[dir] = 1.0;
        Dual9 { v, d }
    }
}

impl RepScalar for Dual9 {
    fn from_f64(x: f64) -> Self {
        Dual9::constant(x)
    }

    fn add(self, o: Self) -> Self {
        let mut d = [0.0; 9];
        for i in 0..9 {
            d[i] = self.d[i] + o.d[i];
        }
        Dual9 { v: self.v + o.v, d }
    }

    fn sub(self, o: Self) -> Self {
        let mut d = [0.0; 9];
        for i in 0..9 {
            d[i] = self.d[i] - o.d[i];
        }
        Dual9 { v: self.v - o.v, d }
    }

    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; 9];
        for i in 0..9 {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual9 { v: self.v * o.v, d }
    }

    fn scale(self, c: f64) -> Self {
        let mut d = [0.0; 9];
        for i in 0..9 {
            d[i] = self.d[i] * c;
        }
        Dual9 { v: self.v * c, d }
    }
}
