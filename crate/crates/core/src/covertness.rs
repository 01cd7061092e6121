//! Warden-side detection statistics: exponential likelihood parameters of
//! the received-power test, the likelihood-ratio threshold, the closed-form
//! KL divergence between the two hypotheses, and the Pinsker lower bound on
//! the warden's total detection error.
//!
//! The covertness constraint itself is enforced structurally by the
//! beamformer (exact nulling); this module only audits it per CPI.

use crate::error::{Error, Result};
use crate::linalg::CVec;

/// Detection statistics of one CPI, assuming equal-prior hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    /// Received power scale under "silent" (AN plus noise), watts.
    pub lambda0: f64,
    /// Received power scale under "transmitting", watts.
    pub lambda1: f64,
    /// KL divergence between the two received-power distributions, nats.
    pub kl: f64,
    /// Pinsker lower bound on the warden's total error probability.
    pub error_lower_bound: f64,
}

/// Likelihood scale parameters `(lambda0, lambda1)` seen by the warden.
pub fn lambda_pair(h_w: &CVec, w: &CVec, q: &CVec, noise_w: f64) -> Result<(f64, f64)> {
    if noise_w <= 0.0 {
        return Err(Error::Domain("lambda_pair: noise power must be positive".into()));
    }
    if h_w.len() != w.len() || h_w.len() != q.len() {
        return Err(Error::Shape(format!(
            "lambda_pair: lengths {} / {} / {} disagree",
            h_w.len(),
            w.len(),
            q.len()
        )));
    }
    let an_power = h_w.dotc(q).norm_sqr();
    let signal_power = h_w.dotc(w).norm_sqr();
    let lambda0 = an_power + noise_w;
    Ok((lambda0, lambda0 + signal_power))
}

/// Closed-form KL divergence `ln(l1/l0) + l0/l1 - 1` between the two
/// exponential received-power laws.
pub fn kl_divergence(lambda0: f64, lambda1: f64) -> Result<f64> {
    if lambda0 <= 0.0 || lambda1 <= 0.0 {
        return Err(Error::Domain("kl_divergence: scales must be positive".into()));
    }
    Ok(((lambda1 / lambda0).ln() + lambda0 / lambda1 - 1.0).max(0.0))
}

/// Pinsker bound: the warden's total error (false-alarm plus miss
/// probability) is at least `1 - sqrt(kl/2)`.
pub fn error_lower_bound(kl: f64) -> Result<f64> {
    if kl < 0.0 || !kl.is_finite() {
        return Err(Error::Domain("error_lower_bound: kl must be nonnegative".into()));
    }
    Ok((1.0 - (kl / 2.0).sqrt()).max(0.0))
}

/// Likelihood-ratio threshold on `|y_w|^2` for the equal-prior test.
pub fn detection_threshold(lambda0: f64, lambda1: f64) -> Result<f64> {
    if lambda0 <= 0.0 || lambda1 <= 0.0 {
        return Err(Error::Domain("detection_threshold: scales must be positive".into()));
    }
    if lambda1 <= lambda0 {
        return Err(Error::DegenerateTest);
    }
    Ok(lambda0 * lambda1 / (lambda1 - lambda0) * (lambda1 / lambda0).ln())
}

/// Full audit for one CPI's transmit pair against a given warden channel.
pub fn audit(h_w: &CVec, w: &CVec, q: &CVec, noise_w: f64) -> Result<DetectionStats> {
    let (lambda0, lambda1) = lambda_pair(h_w, w, q, noise_w)?;
    let kl = kl_divergence(lambda0, lambda1)?;
    Ok(DetectionStats { lambda0, lambda1, kl, error_lower_bound: error_lower_bound(kl)? })
}
