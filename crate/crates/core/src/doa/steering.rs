use num_complex::Complex64;

use crate::{MicArray, Vec3};

/// Far-field steering vector for a source at azimuth `theta` in the array
/// plane: `a_m = exp(-i 2 pi f tau_m)` with `tau_m = -(x_m . u) / c`.
pub fn steering_vector(array: &MicArray, theta: f64, f: f64, c: f64) -> Vec<Complex64> {
    let u = direction(theta);
    array
        .positions()
        .iter()
        .map(|p| {
            let tau = -p.dot(&u) / c;
            Complex64::from_polar(1.0, -std::f64::consts::TAU * f * tau)
        })
        .collect()
}

pub(crate) fn direction(theta: f64) -> Vec3 {
    let t = theta.to_radians();
    Vec3::new(t.cos(), t.sin(), 0.0)
}

/// Far-field arrival time of each mic relative to the array origin, seconds.
pub(crate) fn delays(array: &MicArray, theta: f64, c: f64) -> Vec<f64> {
    let u = direction(theta);
    array.positions().iter().map(|p| -p.dot(&u) / c).collect()
}
