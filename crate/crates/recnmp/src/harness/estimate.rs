//! Analytic end-to-end speedup model and the shipped operator latency
//! fractions it is fed with.

use thiserror::Error;

/// Measured SLS share of end-to-end model time (`model,batch_size,sls_fraction`);
/// only measured points ship, other combinations are unavailable.
pub const SLS_FRACTIONS_CSV: &str = include_str!("../../data/sls_fractions.csv");

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("sls_fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("sls_speedup {0} must be >= 1")]
    BadSpeedup(f64),
    #[error("fc_fraction_improvement {0} outside [0, 1)")]
    BadFcImprovement(f64),
}

/// Amdahl-style total speedup from accelerating the SLS fraction `f` by
/// `s`, with an optional fractional improvement of the non-SLS remainder:
/// `1 / ((1-f)*(1-fc) + f/s)`.
pub fn end_to_end_speedup(
    sls_fraction: f64,
    sls_speedup: f64,
    fc_fraction_improvement: f64,
) -> Result<f64, EstimateError> {
    if !(0.0..=1.0).contains(&sls_fraction) || !sls_fraction.is_finite() {
        return Err(EstimateError::BadFraction(sls_fraction));
    }
    if sls_speedup < 1.0 || !sls_speedup.is_finite() {
        return Err(EstimateError::BadSpeedup(sls_speedup));
    }
    if !(0.0..1.0).contains(&fc_fraction_improvement) {
        return Err(EstimateError::BadFcImprovement(fc_fraction_improvement));
    }
    let denom = (1.0 - sls_fraction) * (1.0 - fc_fraction_improvement) + sls_fraction / sls_speedup;
    Ok(1.0 / denom)
}

/// Looks up a shipped SLS latency fraction; `None` when unmeasured.
pub fn sls_fraction(model: &str, batch_size: u32) -> Option<f64> {
    for line in SLS_FRACTIONS_CSV.lines().skip(1) {
        let mut cols = line.split(',');
        let (m, b, f) = (cols.next()?, cols.next()?, cols.next()?);
        if m.eq_ignore_ascii_case(model) && b.parse::<u32>().ok()? == batch_size {
            return f.trim().parse().ok();
        }
    }
    None
}
