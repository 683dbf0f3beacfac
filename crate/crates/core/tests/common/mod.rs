//! Independent 1-D quadrature oracles for the isotropic wrapped rotation
//! distribution, used to cross-check the library's Monte Carlo estimates.
//!
//! For an isotropic scale `sigma` the distribution of the rotation angle
//! theta in [0, pi] has density
//!
//!   p(theta) = 4 pi * sum_k r(theta + 2 pi k) (theta + 2 pi k)^2
//!
//! where r is the radial profile of an isotropic 3-D normal,
//! r(x) = (2 pi sigma^2)^{-3/2} exp(-x^2 / (2 sigma^2)). These oracles are
//! written from that formula alone; they share no code with the crate.

#![allow(dead_code)]

const PI: f64 = std::f64::consts::PI;

/// Radial profile of the isotropic 3-D normal at radius `x`.
fn radial_normal(x: f64, sigma: f64) -> f64 {
    let c = (2.0 * PI * sigma * sigma).powf(-1.5);
    c * (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Marginal density of the rotation angle on [0, pi].
pub fn angle_pdf(theta: f64, sigma: f64, k_max: i64) -> f64 {
    let mut s = 0.0;
    for k in -k_max..=k_max {
        let t = theta + 2.0 * PI * k as f64;
        s += radial_normal(t.abs(), sigma) * t * t;
    }
    4.0 * PI * s
}

/// Log of the rotation density against normalized Haar (total mass one),
/// as a function of the rotation angle alone.
pub fn log_density_normalized(theta: f64, sigma: f64, k_max: i64) -> f64 {
    let mut s = 0.0;
    for k in -k_max..=k_max {
        let t = theta + 2.0 * PI * k as f64;
        s += radial_normal(t.abs(), sigma) * t * t;
    }
    let jac = 4.0 * (0.5 * theta).sin().powi(2);
    (8.0 * PI * PI * s).ln() - jac.max(f64::MIN_POSITIVE).ln()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Total mass of the angle density; should be 1 for any sigma.
pub fn normalization(sigma: f64, k_max: i64) -> f64 {
    simpson(|t| angle_pdf(t, sigma, k_max), 0.0, PI, 20_000)
}

/// CDF of the rotation angle at `theta`.
pub fn angle_cdf(theta: f64, sigma: f64, k_max: i64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    simpson(|t| angle_pdf(t, sigma, k_max), 0.0, theta.min(PI), 20_000)
}

/// Differential entropy against normalized Haar:
/// H = -int p(theta) log q(theta) dtheta.
///
/// The integrand has an integrable log singularity at theta = 0; starting
/// the quadrature at a small epsilon with a fine grid keeps the error well
/// below the tolerance used by the tests.
pub fn entropy_quadrature(sigma: f64, k_max: i64) -> f64 {
    let eps = 1e-9;
    -simpson(
        |t| angle_pdf(t, sigma, k_max) * log_density_normalized(t, sigma, k_max),
        eps,
        PI,
        40_000,
    )
}
