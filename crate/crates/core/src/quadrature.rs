//! One-dimensional numerical integration and the closed-form reference
//! quantities of the Gaussian-shift setup.

use crate::generators::{SOURCE_MEAN, TARGET_MEAN};

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // split first so narrow peaks are not missed by the initial 3-point rule
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (flo, fhi) = (f(lo), f(hi));
            let (whole, m, fm) = simpson(&f, lo, flo, hi, fhi);
            adaptive(&f, lo, flo, hi, fhi, whole, m, fm, tol / pieces as f64, 40)
        })
        .sum()
}

fn normal_pdf(x: f64, mean: f64) -> f64 {
    (-(x - mean) * (x - mean) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `ln σ(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// `E_{p(x)} Σ_y p(y|x) ln(p(y|x)/q(y|x))` for binary posteriors given as
/// logits `ln(p₊/p₋)`.
pub fn conditional_kl_1d(
    density: impl Fn(f64) -> f64,
    p_logit: impl Fn(f64) -> f64,
    q_logit: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> f64 {
    integrate(
        |x| {
            let (zp, zq) = (p_logit(x), q_logit(x));
            let p_plus = log_sigmoid(zp).exp();
            let inner =
                p_plus * (log_sigmoid(zp) - log_sigmoid(zq)) + (1.0 - p_plus) * (log_sigmoid(-zp) - log_sigmoid(-zq));
            density(x) * inner
        },
        lo,
        hi,
        1e-13,
    )
}

/// Logit of the two-Gaussian class posterior with means `±mean`, unit
/// variance and equal priors: `2·mean·x`.
pub fn gaussian_pair_logit(mean: f64, x: f64) -> f64 {
    2.0 * mean * x
}

/// True conditional KL `KL[p‖q]` of the Gaussian-shift setup
/// (`p(+1|x) = σ(3x)`, `q(+1|x) = σ(4x)`, `p(x)` the balanced target mixture).
pub fn gaussian_shift_conditional_kl() -> f64 {
    let span = 12.0 + TARGET_MEAN;
    conditional_kl_1d(
        |x| 0.5 * normal_pdf(x, TARGET_MEAN) + 0.5 * normal_pdf(x, -TARGET_MEAN),
        |x| gaussian_pair_logit(TARGET_MEAN, x),
        |x| gaussian_pair_logit(SOURCE_MEAN, x),
        -span,
        span,
    )
}

/// Population ratio parameter of the Gaussian-shift setup under the default
/// feature map `y·[x, 1]`: `logit p = logit q + 2θ₁x` gives
/// `θ* = (TARGET_MEAN - SOURCE_MEAN, 0)`.
pub fn gaussian_shift_theta_star() -> [f64; 2] {
    [TARGET_MEAN - SOURCE_MEAN, 0.0]
}
