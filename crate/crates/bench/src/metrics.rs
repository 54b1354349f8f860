//! Angular error statistics and classification scores.

use beamlab_core::{angular_distance, classify_azimuth, wrap_azimuth};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Half-width of the sliding window, in degrees of true azimuth.
pub const SLIDING_HALF_WIDTH: f64 = 2.5;
/// Number of points of the sliding series, one per degree from -180.
pub const SLIDING_POINTS: usize = 360;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean_abs: f64,
    pub median: f64,
    pub interquartile: (f64, f64),
    /// Median error of the sources whose true azimuth lies within
    /// ±2.5° of `-180 + i` degrees; `None` where no source falls inside.
    pub sliding_median: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationStats {
    pub n_classes: usize,
    pub n_total: usize,
    pub accuracy: f64,
    /// Mean wrapped distance between estimated and true partition centers.
    pub delta_theta_class: f64,
    /// Mean wrapped distance between estimated partition center and the
    /// true azimuth.
    pub delta_theta: f64,
    pub card_omega_m: usize,
    /// Percentage of misclassified sources assigned to a neighbouring
    /// partition. Absent when nothing is misclassified.
    pub p_adj: Option<f64>,
    /// Mean distance from the true azimuth to the nearest boundary of the
    /// estimated partition over misclassified sources.
    pub beta: Option<f64>,
    pub alpha_half: f64,
}

/// Quantile by linear interpolation between closest ranks. `sorted` must be
/// ascending and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sum of `v` in ascending order, so the result does not depend on the
/// order of the inputs.
fn order_free_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("accuracy of an empty set".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Summary of the wrapped absolute errors between true and estimated
/// azimuths, in degrees.
pub fn angular_error_stats(theta_true: &[f64], theta_est: &[f64]) -> Result<ErrorStats> {
    if theta_true.len() != theta_est.len() {
        return Err(Error::Config(format!(
            "{} true azimuths for {} estimates",
            theta_true.len(),
            theta_est.len()
        )));
    }
    if theta_true.is_empty() {
        return Err(Error::Data("error statistics of an empty set".into()));
    }
    if theta_true.iter().chain(theta_est).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite azimuth".into()));
    }
    let errors: Vec<f64> = theta_true
        .iter()
        .zip(theta_est)
        .map(|(t, e)| angular_distance(*t, *e))
        .collect();
    let s = sorted(&errors);
    let sliding_median = (0..SLIDING_POINTS)
        .map(|i| {
            let center = -180.0 + i as f64;
            let window: Vec<f64> = theta_true
                .iter()
                .zip(&errors)
                .filter(|(t, _)| angular_distance(**t, center) <= SLIDING_HALF_WIDTH)
                .map(|(_, e)| *e)
                .collect();
            (!window.is_empty()).then(|| quantile(&sorted(&window), 0.5))
        })
        .collect();
    Ok(ErrorStats {
        n: errors.len(),
        mean_abs: order_free_sum(errors.clone()) / errors.len() as f64,
        median: quantile(&s, 0.5),
        interquartile: (quantile(&s, 0.25), quantile(&s, 0.75)),
        sliding_median,
    })
}

/// Lower and upper boundary of partition `j` out of `n`, in degrees.
pub fn partition_bounds(j: usize, n: usize) -> (f64, f64) {
    let w = 360.0 / n as f64;
    let lo = -180.0 + j as f64 * w;
    (lo, lo + w)
}

fn center(j: usize, n: usize) -> f64 {
    wrap_azimuth((j as f64 + 0.5) * 360.0 / n as f64 - 180.0)
}

pub fn classification_stats(theta_true: &[f64], pred_class: &[usize], n: usize) -> Result<ClassificationStats> {
    if theta_true.len() != pred_class.len() {
        return Err(Error::Config(format!(
            "{} true azimuths for {} predicted classes",
            theta_true.len(),
            pred_class.len()
        )));
    }
    if theta_true.is_empty() {
        return Err(Error::Data("classification statistics of an empty set".into()));
    }
    if let Some(bad) = pred_class.iter().find(|&&c| c >= n) {
        return Err(Error::Data(format!("class {bad} out of range for {n} classes")));
    }
    let labels = theta_true
        .iter()
        .map(|&t| classify_azimuth(t, n).map(|(i, _)| i))
        .collect::<beamlab_core::Result<Vec<_>>>()?;
    let total = theta_true.len() as f64;
    let mut d_class = Vec::with_capacity(labels.len());
    let mut d_theta = Vec::with_capacity(labels.len());
    let mut beta = Vec::new();
    let mut adjacent = 0usize;
    for ((&theta, &truth), &pred) in theta_true.iter().zip(&labels).zip(pred_class) {
        d_class.push(angular_distance(center(pred, n), center(truth, n)));
        d_theta.push(angular_distance(center(pred, n), theta));
        if pred != truth {
            let gap = (pred + n - truth) % n;
            if gap == 1 || gap == n - 1 {
                adjacent += 1;
            }
            let (lo, hi) = partition_bounds(pred, n);
            beta.push(angular_distance(theta, lo).min(angular_distance(theta, hi)));
        }
    }
    let missed = beta.len();
    Ok(ClassificationStats {
        n_classes: n,
        n_total: theta_true.len(),
        accuracy: (theta_true.len() - missed) as f64 / total,
        delta_theta_class: order_free_sum(d_class) / total,
        delta_theta: order_free_sum(d_theta) / total,
        card_omega_m: missed,
        p_adj: (missed > 0).then(|| 100.0 * adjacent as f64 / missed as f64),
        beta: (missed > 0).then(|| order_free_sum(beta) / missed as f64),
        alpha_half: 180.0 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert!((accuracy(&[0, 1, 0], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(accuracy(&[3, 3], &[3, 3]).unwrap(), 1.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn quartiles_of_four() {
        let e = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&e, 0.5), 2.5);
        assert_eq!(quantile(&e, 0.25), 1.75);
        assert_eq!(quantile(&e, 0.75), 3.25);
    }

    #[test]
    fn perfect_estimates() {
        let t = [-179.0, 0.0, 33.0, 179.9];
        let s = angular_error_stats(&t, &t).unwrap();
        assert_eq!((s.mean_abs, s.median, s.interquartile), (0.0, 0.0, (0.0, 0.0)));
        assert_eq!(s.sliding_median.len(), SLIDING_POINTS);
        assert_eq!(s.sliding_median[180], Some(0.0));
        assert_eq!(s.sliding_median[90], None);
    }

    #[test]
    fn constant_offset_across_the_seam() {
        let t: Vec<f64> = (0..72).map(|i| -180.0 + 5.0 * i as f64).collect();
        let e: Vec<f64> = t.iter().map(|v| wrap_azimuth(v + 20.0)).collect();
        let s = angular_error_stats(&t, &e).unwrap();
        assert!((s.mean_abs - 20.0).abs() < 1e-12);
        assert!((s.median - 20.0).abs() < 1e-12);
    }

    #[test]
    fn single_adjacent_miss() {
        // 44° lies in [0, 45); predicted partition 5 is [45, 90)
        let s = classification_stats(&[44.0], &[5], 8).unwrap();
        assert_eq!(s.card_omega_m, 1);
        assert_eq!(s.p_adj, Some(100.0));
        assert!((s.beta.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.accuracy, 0.0);
    }

    #[test]
    fn all_correct_has_no_misclassified_population() {
        let t = [-170.0, -100.0, 10.0, 100.0];
        let pred: Vec<usize> = t.iter().map(|&v| classify_azimuth(v, 8).unwrap().0).collect();
        let s = classification_stats(&t, &pred, 8).unwrap();
        assert_eq!(s.accuracy, 1.0);
        assert_eq!(s.delta_theta_class, 0.0);
        assert!(s.delta_theta <= 22.5);
        assert_eq!((s.p_adj, s.beta, s.card_omega_m), (None, None, 0));
    }
}
