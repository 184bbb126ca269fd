//! Gaussian helpers shared by the kernels and the closed forms.

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF via erfc, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Gaussian density with variance `var`, evaluated at `x`.
#[inline]
pub fn gauss(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Inverse Mills ratio `phi(x) / Phi(-x)`, stable for large positive `x`.
pub fn inv_mills(x: f64) -> f64 {
    if x < 5.0 {
        return norm_pdf(x) / norm_cdf(-x);
    }
    // Laplace continued fraction for Phi(-x)/phi(x), evaluated bottom-up.
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    tail
}

/// `log(sum_i exp(v_i))` with the usual max shift. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}
