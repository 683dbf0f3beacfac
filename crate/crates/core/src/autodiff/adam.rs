//! Adam optimizer over tape values.

use super::Value;

/// Adam with bias correction; moments mirror the parameter shapes.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Value>,
    v: Vec<Value>,
}

impl Adam {
    pub fn new(lr: f64, params: &[Value]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(Value::zeros_like).collect(),
            v: params.iter().map(Value::zeros_like).collect(),
        }
    }

    /// One update step; `grads` must match `params` in length and shapes.
    pub fn step(&mut self, params: &mut [Value], grads: &[Value]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            update_one(
                p, g, m, v, self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_one(
    p: &mut Value,
    g: &Value,
    m: &mut Value,
    v: &mut Value,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    let scalar = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= lr * mhat / (vhat.sqrt() + eps);
    };
    match (p, g, m, v) {
        (Value::S(p), Value::S(g), Value::S(m), Value::S(v)) => scalar(p, *g, m, v),
        (Value::V(p), Value::V(g), Value::V(m), Value::V(v)) => {
            for i in 0..p.len() {
                scalar(&mut p[i], g[i], &mut m[i], &mut v[i]);
            }
        }
        (Value::M(p), Value::M(g), Value::M(m), Value::M(v)) => {
            for (idx, pe) in p.indexed_iter_mut() {
                scalar(pe, g[idx], &mut m[idx], &mut v[idx]);
            }
        }
        _ => panic!("parameter/gradient shape mismatch"),
    }
}
