use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SourcePosition};

/// Annular source region around the array: radius band `radius ± delta_r`,
/// elevation band `90 ± delta_phi` degrees, full azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub radius: f64,
    pub delta_r: f64,
    pub delta_phi: f64,
}

impl Default for TorusSpec {
    fn default() -> Self {
        Self {
            radius: 2.0,
            delta_r: 0.5,
            delta_phi: 7.0,
        }
    }
}

impl TorusSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_r >= 0.0 && self.radius - self.delta_r > 0.0) {
            return Err(Error::Geometry(format!(
                "torus radius band {} ± {} must stay positive",
                self.radius, self.delta_r
            )));
        }
        if !(self.delta_phi > 0.0 && self.delta_phi < 90.0) {
            return Err(Error::Geometry(format!(
                "torus elevation half-width must lie in (0, 90), got {}",
                self.delta_phi
            )));
        }
        Ok(())
    }
}

/// Independent uniform draws of azimuth, radius and elevation.
pub fn sample_torus<R: Rng + ?Sized>(spec: &TorusSpec, rng: &mut R) -> SourcePosition {
    let theta = rng.random_range(-180.0..180.0);
    let r = rng.random_range(spec.radius - spec.delta_r..=spec.radius + spec.delta_r);
    let phi = rng.random_range(90.0 - spec.delta_phi..=90.0 + spec.delta_phi);
    SourcePosition { r, theta, phi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn default_bounds() {
        let spec = TorusSpec::default();
        spec.validate().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p = sample_torus(&spec, &mut rng);
            assert!((1.5..=2.5).contains(&p.r));
            assert!((83.0..=97.0).contains(&p.phi));
            assert!((-180.0..180.0).contains(&p.theta));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(TorusSpec {
            radius: 1.0,
            delta_r: 1.0,
            delta_phi: 7.0
        }
        .validate()
        .is_err());
        assert!(TorusSpec {
            radius: 2.0,
            delta_r: 0.5,
            delta_phi: 90.0
        }
        .validate()
        .is_err());
        assert!(TorusSpec {
            radius: 2.0,
            delta_r: 0.5,
            delta_phi: 0.0
        }
        .validate()
        .is_err());
    }

    /// Chi-square goodness of fit of the azimuth marginal over 36 bins.
    #[test]
    fn azimuth_is_uniform() {
        let spec = TorusSpec::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut bins = [0usize; 36];
        for _ in 0..n {
            let p = sample_torus(&spec, &mut rng);
            bins[((p.theta + 180.0) / 10.0) as usize] += 1;
        }
        let expect = n as f64 / 36.0;
        for &b in &bins {
            // 3 sigma of a binomial(n, 1/36) count
            let sigma = (n as f64 * (1.0 / 36.0) * (35.0 / 36.0)).sqrt();
            assert!((b as f64 - expect).abs() < 3.0 * sigma, "{bins:?}");
        }
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        // 99.9th percentile of chi-square with 35 degrees of freedom
        assert!(chi2 < 66.6, "{chi2}");
    }
}
