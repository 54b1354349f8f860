use super::gcc::PhatSpectra;
use super::steering::delays;
use super::{peak_to_mean, DoaEstimate, DoaGrid, Method, BAND_HZ};
use crate::{Error, MicArray, MultichannelFrame, Result};

/// Steered response power over `grid`: the sum over mic pairs of the
/// PHAT-weighted cross-correlation at each pair's far-field lag.
pub fn srp_spectrum(frame: &MultichannelFrame, array: &MicArray, grid: &DoaGrid, c: f64) -> Result<Vec<f64>> {
    let n_c = frame.n_channels();
    if n_c < 2 {
        return Err(Error::InvalidArgument("SRP-PHAT needs at least two channels".into()));
    }
    if n_c != array.len() {
        return Err(Error::InvalidArgument(format!(
            "frame has {n_c} channels but the array has {} mics",
            array.len()
        )));
    }
    let channels: Vec<&[f64]> = (0..n_c).map(|m| frame.channel(m)).collect();
    let spectra = PhatSpectra::new(&channels, frame.fs, BAND_HZ);
    let max_lag = (2.0 * array.radius() / c * frame.fs).ceil() as usize + 2;
    let taus: Vec<Vec<f64>> = grid.azimuths().iter().map(|&t| delays(array, t, c)).collect();
    let mut srp = vec![0.0; grid.len()];
    for i in 0..n_c {
        for j in i + 1..n_c {
            let r = spectra.correlate(i, j, max_lag);
            for (s, tau) in srp.iter_mut().zip(&taus) {
                *s += r.interpolate((tau[i] - tau[j]) * frame.fs);
            }
        }
    }
    Ok(srp)
}

pub fn srp_phat_azimuth(frame: &MultichannelFrame, array: &MicArray, grid: &DoaGrid, c: f64) -> Result<DoaEstimate> {
    let srp = srp_spectrum(frame, array, grid, c)?;
    let best = grid.argmax(&srp);
    // SRP can be negative; shift so the peak-to-mean ratio is meaningful
    let min = srp.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = srp.iter().map(|v| v - min).collect();
    let confidence = peak_to_mean(&shifted, best);
    Ok(DoaEstimate {
        theta: grid.azimuths()[best],
        method: Method::SrpPhat,
        confidence,
        low_confidence: shifted[best] == 0.0,
    })
}
