//! Modified Beer–Lambert inversion: two optical density changes to two
//! concentration changes.

use super::DspError;
use crate::physio::forward::UM_PER_MM;
use crate::physio::optics::{condition_number, OpticalTable};

/// Extinction matrices beyond this condition number are refused.
pub const MAX_INVERSION_CONDITION: f64 = 1e4;

pub fn dpf_lookup(optics: &OpticalTable, age_years: f64, wavelength_nm: f64) -> Result<f64, DspError> {
    Ok(optics.dpf.evaluate(age_years, wavelength_nm)?)
}

/// Solves `ΔOD_λ = (ε_HbO,λ·ΔHbO + ε_HbR,λ·ΔHbR)·d·DPF_λ` for every sample; returns µM.
pub fn mbll_invert(
    od_660: &[f64],
    od_940: &[f64],
    optics: &OpticalTable,
    distance_cm: f64,
    dpf_660: f64,
    dpf_940: f64,
) -> Result<(Vec<f64>, Vec<f64>), DspError> {
    if od_660.len() != od_940.len() {
        return Err(DspError::LengthMismatch(od_660.len(), od_940.len()));
    }
    let eps = optics.extinction_matrix()?;
    let cond = condition_number(&eps);
    if !(cond <= MAX_INVERSION_CONDITION) {
        return Err(DspError::IllConditioned(cond));
    }
    let path = [distance_cm * dpf_660, distance_cm * dpf_940];
    let [[a, b], [c, d]] = [[eps[0][0] * path[0], eps[0][1] * path[0]], [eps[1][0] * path[1], eps[1][1] * path[1]]];
    let det = a * d - b * c;
    let (hbo, hbr) = od_660
        .iter()
        .zip(od_940)
        .map(|(&y1, &y2)| ((d * y1 - b * y2) / det * UM_PER_MM, (a * y2 - c * y1) / det * UM_PER_MM))
        .unzip();
    Ok((hbo, hbr))
}
