use crate::error::{Error, Result};

/// Zero-order-hold discretized first-order low-pass
/// `y[k+1] = a y[k] + (1 - a) u[k]`, `a = exp(-2 pi f_lp / f_s)`, `y[0] = 0`.
pub fn lowpass_filter(signal: &[f64], cutoff: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    if !(cutoff.is_finite() && cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(Error::invalid(format!(
            "cut-off {cutoff} Hz must lie in (0, {}) Hz",
            sample_rate / 2.0
        )));
    }
    let a = (-std::f64::consts::TAU * cutoff / sample_rate).exp();
    let mut y = 0.0;
    Ok(signal
        .iter()
        .map(|u| {
            let out = y;
            y = a * y + (1.0 - a) * u;
            out
        })
        .collect())
}
