//! Special functions used across modules. Gamma and the exponential integral
//! come from `statrs`, erf from `libm`.

use std::f64::consts::{PI, SQRT_2};

pub use libm::{erf, erfc};
pub use statrs::function::gamma::{gamma, ln_gamma};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// CDF of the chi distribution with three degrees of freedom.
pub fn chi3_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    erf(r / SQRT_2) - (2.0 / PI).sqrt() * r * (-0.5 * r * r).exp()
}

/// Transition density of BES(3) from `x > 0` to `y > 0` over time `t`.
pub fn bes3_density(x: f64, y: f64, t: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    let phi = |z: f64| normal_pdf(z / s) / s;
    (y / x) * (phi(y - x) - phi(y + x))
}

/// Transition CDF of BES(3) from `x > 0`: P(β_t ≤ y).
pub fn bes3_cdf(x: f64, y: f64, t: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    // ∫_0^y (u/x)[φ_t(u−x) − φ_t(u+x)] du in closed form.
    let a = (y - x) / s;
    let b = (y + x) / s;
    let a0 = -x / s;
    let b0 = x / s;
    let gauss = normal_cdf(a) - normal_cdf(a0) + normal_cdf(b) - normal_cdf(b0);
    let density_terms = (s / x) * (normal_pdf(b) - normal_pdf(a));
    (gauss + density_terms).clamp(0.0, 1.0)
}

/// Surface area of the unit sphere S^k ⊂ R^{k+1}.
pub fn sphere_area(k: usize) -> f64 {
    let m = (k + 1) as f64 / 2.0;
    2.0 * PI.powf(m) / gamma(m)
}

/// Exponential integral E1(x) for x > 0.
pub fn e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 700.0 {
        return 0.0;
    }
    statrs::function::exponential::integral(x, 1).unwrap_or(0.0)
}

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
