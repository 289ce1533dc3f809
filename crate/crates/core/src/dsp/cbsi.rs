//! Correlation-based signal improvement.

use super::{std_dev, DspError};

#[derive(Clone, Debug, PartialEq)]
pub struct CbsiOutput {
    pub hbo: Vec<f64>,
    pub hbr: Vec<f64>,
    /// `None` when ΔHbR has no variance; the inputs are then returned unchanged.
    pub beta: Option<f64>,
}

impl CbsiOutput {
    pub fn degenerate(&self) -> bool {
        self.beta.is_none()
    }
}

/// β = σ(ΔHbO)/σ(ΔHbR); ΔHbO* = (ΔHbO − β·ΔHbR)/2; ΔHbR* = −ΔHbO*/β.
pub fn cbsi(hbo: &[f64], hbr: &[f64]) -> Result<CbsiOutput, DspError> {
    if hbo.len() != hbr.len() {
        return Err(DspError::LengthMismatch(hbo.len(), hbr.len()));
    }
    if hbo.len() < 2 {
        return Err(DspError::TooShort { needed: 1, got: hbo.len() });
    }
    let (so, sr) = (std_dev(hbo), std_dev(hbr));
    if !(sr > 0.0) || !(so > 0.0) {
        return Ok(CbsiOutput { hbo: hbo.to_vec(), hbr: hbr.to_vec(), beta: None });
    }
    let beta = so / sr;
    let o: Vec<f64> = hbo.iter().zip(hbr).map(|(&x, &y)| (x - beta * y) / 2.0).collect();
    let r = o.iter().map(|&v| -v / beta).collect();
    Ok(CbsiOutput { hbo: o, hbr: r, beta: Some(beta) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (super::super::mean(a), super::super::mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn ideal_anti_phase_is_a_fixed_point() {
        let s: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).sin() + 0.25).collect();
        let r: Vec<f64> = s.iter().map(|v| -v / 4.0).collect();
        let out = cbsi(&s, &r).unwrap();
        assert_eq!(out.beta, Some(4.0));
        assert_eq!(out.hbo, s);
        assert_eq!(out.hbr, r);
    }

    #[test]
    fn zeros_are_degenerate() {
        let out = cbsi(&[0.0; 10], &[0.0; 10]).unwrap();
        assert!(out.degenerate());
        assert_eq!(out.hbo, vec![0.0; 10]);
    }

    #[test]
    fn outputs_are_perfectly_anti_correlated_and_scale() {
        let o: Vec<f64> = (0..300).map(|i| (i as f64 * 0.07).sin() + 0.3 * (i as f64 * 0.31).cos()).collect();
        let r: Vec<f64> = (0..300).map(|i| 0.2 * (i as f64 * 0.11).sin() - 0.1 * (i as f64 * 0.07).sin()).collect();
        let out = cbsi(&o, &r).unwrap();
        assert!((corr(&out.hbo, &out.hbr) + 1.0).abs() < 1e-6);
        let b = out.beta.unwrap();
        assert!(out.hbo.iter().zip(&out.hbr).all(|(x, y)| *y == -x / b));
        let k = 3.7;
        let ko: Vec<f64> = o.iter().map(|v| v * k).collect();
        let kr: Vec<f64> = r.iter().map(|v| v * k).collect();
        let scaled = cbsi(&ko, &kr).unwrap();
        for (a, b) in scaled.hbo.iter().zip(&out.hbo) {
            assert!((a - k * b).abs() < 1e-12);
        }
    }

    #[test]
    fn length_checks() {
        assert!(cbsi(&[1.0, 2.0], &[1.0]).is_err());
        assert!(cbsi(&[1.0], &[1.0]).is_err());
    }
}
