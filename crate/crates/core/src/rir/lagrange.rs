//! Order-7 Lagrange fractional-delay interpolator.

use crate::{Error, Result};

pub const TAPS: usize = 8;

/// Denominators `prod_{m != k} (k - m)` of the Lagrange basis on nodes 0..7.
const DENOM: [f64; TAPS] = {
    let mut out = [0.0; TAPS];
    let mut k = 0;
    while k < TAPS {
        let mut p = 1.0;
        let mut m = 0;
        while m < TAPS {
            if m != k {
                p *= k as f64 - m as f64;
            }
            m += 1;
        }
        out[k] = p;
        k += 1;
    }
    out
};

/// Coefficients of the 8-tap Lagrange filter delaying by `d` samples,
/// `d` in `[3, 4)` so the interpolation point sits between the two center
/// taps.
pub fn lagrange_coeffs(d: f64) -> Result<[f64; TAPS]> {
    if !(3.0..4.0).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "fractional delay must lie in [3, 4), got {d}"
        )));
    }
    Ok(lagrange_unchecked(d))
}

pub(crate) fn lagrange_unchecked(d: f64) -> [f64; TAPS] {
    // prefix[k] = prod_{m<k} (d - m), suffix[k] = prod_{m>k} (d - m)
    let mut prefix = [1.0; TAPS];
    for k in 1..TAPS {
        prefix[k] = prefix[k - 1] * (d - (k - 1) as f64);
    }
    let mut suffix = [1.0; TAPS];
    for k in (0..TAPS - 1).rev() {
        suffix[k] = suffix[k + 1] * (d - (k + 1) as f64);
    }
    let mut c = [0.0; TAPS];
    for k in 0..TAPS {
        c[k] = prefix[k] * suffix[k] / DENOM[k];
    }
    c
}
