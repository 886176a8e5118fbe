//! Small numeric helpers shared across modules.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Position discount `1 / log2(position + 1)` for 1-based positions.
#[inline]
pub fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}
