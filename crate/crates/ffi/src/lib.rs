//! C ABI over the core library: geometry conversions, the rotation-valued
//! wrapped distribution, and band-limited group actions.
//!
//! Conventions:
//! - Rotations are row-major 3x3 `double[9]` arrays.
//! - Every function returns a [`So3vaeStatus`]; outputs are written through
//!   pointers and are valid only on `SO3VAE_STATUS_OK`.
//! - Handles created by `*_new` functions must be released with the paired
//!   `*_free`; freeing NULL is a no-op.
//! - Panics never unwind across the boundary; they surface as
//!   `SO3VAE_STATUS_INTERNAL`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};

use so3vae::gauss::{self, DensityTruncation, HaarConvention, So3Gaussian};
use so3vae::heads::HeadKind;
use so3vae::so3::{self, Rotation, UnitQuaternion};
use so3vae::wigner::{self, RepSpec};
use so3vae::Error;

/// Result of every FFI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum So3vaeStatus {
    /// Success.
    Ok = 0,
    /// A pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of domain (bad rotation, bad scale, ...).
    InvalidArgument = 2,
    /// The computation is undefined at the requested point.
    Singular = 3,
    /// An unexpected internal failure.
    Internal = 4,
}

fn map_err(e: Error) -> So3vaeStatus {
    match e {
        Error::SingularDensity(_) => So3vaeStatus::Singular,
        Error::Io(_) | Error::Json(_) => So3vaeStatus::Internal,
        _ => So3vaeStatus::InvalidArgument,
    }
}

/// Runs `f` with panics converted to `Internal`.
fn guarded(f: impl FnOnce() -> So3vaeStatus) -> So3vaeStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(So3vaeStatus::Internal)
}

unsafe fn read_rotation(r: *const f64) -> Result<Rotation, So3vaeStatus> {
    let mut flat = [0.0; 9];
    flat.copy_from_slice(std::slice::from_raw_parts(r, 9));
    Rotation::from_flat(&flat).map_err(map_err)
}

unsafe fn read3(p: *const f64) -> [f64; 3] {
    let s = std::slice::from_raw_parts(p, 3);
    [s[0], s[1], s[2]]
}

unsafe fn write_rotation(out: *mut f64, r: &Rotation) {
    std::slice::from_raw_parts_mut(out, 9).copy_from_slice(&r.to_flat());
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() { return So3vaeStatus::NullPointer; })+
    };
}

// ---------------------------------------------------------------------------
// geometry

/// Rodrigues exponential: axis-angle vector `v[3]` to rotation `out[9]`.
#[no_mangle]
pub unsafe extern "C" fn so3vae_exp_map(v: *const f64, out: *mut f64) -> So3vaeStatus {
    non_null!(v, out);
    guarded(|| {
        let r = so3::exp_map(&read3(v));
        write_rotation(out, &r);
        So3vaeStatus::Ok
    })
}

/// Principal logarithm: rotation `r[9]` to axis-angle `out[3]`.
#[no_mangle]
pub unsafe extern "C" fn so3vae_log_map(r: *const f64, out: *mut f64) -> So3vaeStatus {
    non_null!(r, out);
    guarded(|| match read_rotation(r) {
        Ok(rot) => {
            let v = so3::log_map(&rot);
            std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&v);
            So3vaeStatus::Ok
        }
        Err(s) => s,
    })
}

/// Rotation angle in [0, pi].
#[no_mangle]
pub unsafe extern "C" fn so3vae_rotation_angle(r: *const f64, out: *mut f64) -> So3vaeStatus {
    non_null!(r, out);
    guarded(|| match read_rotation(r) {
        Ok(rot) => {
            *out = so3::theta_of(&rot);
            So3vaeStatus::Ok
        }
        Err(s) => s,
    })
}

/// Unit quaternion `q[4]` (w, x, y, z; normalized internally) to rotation.
#[no_mangle]
pub unsafe extern "C" fn so3vae_quat_to_rotation(q: *const f64, out: *mut f64) -> So3vaeStatus {
    non_null!(q, out);
    guarded(|| {
        let s = std::slice::from_raw_parts(q, 4);
        match UnitQuaternion::normalize([s[0], s[1], s[2], s[3]]) {
            Ok(uq) => {
                write_rotation(out, &so3::quat_to_rotation(&uq));
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}

/// Rotation to unit quaternion `out[4]` (w >= 0 branch).
#[no_mangle]
pub unsafe extern "C" fn so3vae_rotation_to_quat(r: *const f64, out: *mut f64) -> So3vaeStatus {
    non_null!(r, out);
    guarded(|| match read_rotation(r) {
        Ok(rot) => {
            let q = so3::rotation_to_quat(&rot).components();
            std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&q);
            So3vaeStatus::Ok
        }
        Err(s) => s,
    })
}

// ---------------------------------------------------------------------------
// random number generator handle

/// Deterministic stream cipher RNG behind an opaque handle.
pub struct So3vaeRng(ChaCha8Rng);

/// Creates an RNG seeded with `seed`. Never fails.
#[no_mangle]
pub extern "C" fn so3vae_rng_new(seed: u64) -> *mut So3vaeRng {
    Box::into_raw(Box::new(So3vaeRng(ChaCha8Rng::seed_from_u64(seed))))
}

/// Releases an RNG handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn so3vae_rng_free(rng: *mut So3vaeRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

// ---------------------------------------------------------------------------
// wrapped distribution

/// Draws one rotation from the wrapped distribution centered at `mu[9]`
/// with per-axis scale `sigma[3]`.
#[no_mangle]
pub unsafe extern "C" fn so3vae_gauss_sample(
    rng: *mut So3vaeRng,
    mu: *const f64,
    sigma: *const f64,
    out: *mut f64,
) -> So3vaeStatus {
    non_null!(rng, mu, sigma, out);
    guarded(|| {
        let mu = match read_rotation(mu) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match So3Gaussian::new(mu, read3(sigma)) {
            Ok(d) => {
                let (r, _) = d.sample(&mut (*rng).0);
                write_rotation(out, &r);
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}

/// Log-density of the wrapped distribution at `r[9]`. `k_max` controls the
/// wrapping truncation (5 covers scales up to about 1); `normalized`
/// selects the unit-mass Haar convention, otherwise Haar has mass 8 pi^2.
#[no_mangle]
pub unsafe extern "C" fn so3vae_gauss_log_density(
    mu: *const f64,
    sigma: *const f64,
    r: *const f64,
    k_max: u32,
    normalized: bool,
    out: *mut f64,
) -> So3vaeStatus {
    non_null!(mu, sigma, r, out);
    guarded(|| {
        let (mu, r) = match (read_rotation(mu), read_rotation(r)) {
            (Ok(m), Ok(r)) => (m, r),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let conv = if normalized {
            HaarConvention::Normalized
        } else {
            HaarConvention::Euler8Pi2
        };
        let res = So3Gaussian::new(mu, read3(sigma))
            .and_then(|d| DensityTruncation::new(k_max).map(|t| (d, t)))
            .and_then(|(d, t)| d.log_density(&r, t, conv));
        match res {
            Ok(ld) => {
                *out = ld;
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}

/// Monte Carlo entropy estimate of the wrapped distribution; writes the
/// estimate and its standard error.
#[no_mangle]
pub unsafe extern "C" fn so3vae_gauss_entropy(
    rng: *mut So3vaeRng,
    sigma: *const f64,
    n_samples: usize,
    k_max: u32,
    normalized: bool,
    out_entropy: *mut f64,
    out_stderr: *mut f64,
) -> So3vaeStatus {
    non_null!(rng, sigma, out_entropy, out_stderr);
    if n_samples == 0 {
        return So3vaeStatus::InvalidArgument;
    }
    guarded(|| {
        let conv = if normalized {
            HaarConvention::Normalized
        } else {
            HaarConvention::Euler8Pi2
        };
        let res = So3Gaussian::new(Rotation::identity(), read3(sigma))
            .and_then(|d| DensityTruncation::new(k_max).map(|t| (d, t)));
        match res {
            Ok((d, t)) => {
                let (h, se) =
                    gauss::entropy_mc_with_stderr(&d, n_samples, t, conv, &mut (*rng).0);
                *out_entropy = h;
                *out_stderr = se;
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}

// ---------------------------------------------------------------------------
// band-limited representation handle

/// Block structure of a band-limited function space behind an opaque handle.
pub struct So3vaeRep(RepSpec);

/// Creates a representation with degrees 0..=`max_degree`, each repeated
/// `multiplicity` times. Returns NULL when the arguments are out of range.
#[no_mangle]
pub extern "C" fn so3vae_rep_new(max_degree: usize, multiplicity: usize) -> *mut So3vaeRep {
    match RepSpec::degrees_up_to(max_degree, multiplicity) {
        Ok(spec) => Box::into_raw(Box::new(So3vaeRep(spec))),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Releases a representation handle. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn so3vae_rep_free(rep: *mut So3vaeRep) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// Total coefficient dimension of the representation.
#[no_mangle]
pub unsafe extern "C" fn so3vae_rep_dim(rep: *const So3vaeRep, out: *mut usize) -> So3vaeStatus {
    non_null!(rep, out);
    *out = (*rep).0.total_dim();
    So3vaeStatus::Ok
}

/// Applies the rotation to a coefficient vector: `out = D(r) f`. Both
/// buffers must hold `so3vae_rep_dim` doubles and may not alias.
#[no_mangle]
pub unsafe extern "C" fn so3vae_rep_act(
    rep: *const So3vaeRep,
    r: *const f64,
    f: *const f64,
    out: *mut f64,
) -> So3vaeStatus {
    non_null!(rep, r, f, out);
    guarded(|| {
        let spec = &(*rep).0;
        let rot = match read_rotation(r) {
            Ok(rot) => rot,
            Err(s) => return s,
        };
        let n = spec.total_dim();
        let fv = ndarray::Array1::from(std::slice::from_raw_parts(f, n).to_vec());
        match wigner::act(spec, &rot, &fv) {
            Ok(y) => {
                std::slice::from_raw_parts_mut(out, n)
                    .copy_from_slice(y.as_slice().expect("contiguous"));
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}

// ---------------------------------------------------------------------------
// mean maps

/// Rotation-valued readout heads over unconstrained inputs.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum So3vaeHead {
    /// 3 inputs: exponential of the algebra element.
    Algebra = 0,
    /// 4 inputs: normalized quaternion.
    Quaternion = 1,
    /// 5 inputs: axis on S^2 plus angle on S^1.
    S2S1 = 2,
    /// 6 inputs: two frame vectors, orthonormalized.
    S2S2 = 3,
}

/// Number of raw inputs the head consumes.
#[no_mangle]
pub extern "C" fn so3vae_head_input_dim(head: So3vaeHead) -> usize {
    head_kind(head).input_dim()
}

fn head_kind(head: So3vaeHead) -> HeadKind {
    match head {
        So3vaeHead::Algebra => HeadKind::Alg,
        So3vaeHead::Quaternion => HeadKind::Q,
        So3vaeHead::S2S1 => HeadKind::S2S1,
        So3vaeHead::S2S2 => HeadKind::S2S2,
    }
}

/// Maps `raw` (of the head's input dimension) to a rotation.
#[no_mangle]
pub unsafe extern "C" fn so3vae_head_apply(
    head: So3vaeHead,
    raw: *const f64,
    out: *mut f64,
) -> So3vaeStatus {
    non_null!(raw, out);
    guarded(|| {
        let kind = head_kind(head);
        let input = std::slice::from_raw_parts(raw, kind.input_dim());
        match kind.apply(input) {
            Ok(r) => {
                write_rotation(out, &r);
                So3vaeStatus::Ok
            }
            Err(e) => map_err(e),
        }
    })
}
