//! Digital Butterworth band-pass and forward–backward (zero-phase) filtering.
//!
//! The design follows the classic route: analog low-pass prototype, low-pass to
//! band-pass transform around prewarped edges, bilinear transform, and grouping
//! into second-order sections by conjugate pole pairs. Filtering mirrors the
//! usual `sosfiltfilt`: odd extension of the ends, initial conditions scaled to
//! the first sample, one forward and one reverse pass.

use std::f64::consts::PI;

use super::DspError;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }
    fn add(self, o: Self) -> Self {
        Complex::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: Self) -> Self {
        Complex::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: Self) -> Self {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn scale(self, k: f64) -> Self {
        Complex::new(self.re * k, self.im * k)
    }
    fn div(self, o: Self) -> Self {
        let d = o.re * o.re + o.im * o.im;
        Complex::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
    fn sqrt(self) -> Self {
        let r = self.abs();
        let re = ((r + self.re) / 2.0).max(0.0).sqrt();
        let im = ((r - self.re) / 2.0).max(0.0).sqrt().copysign(self.im);
        Complex::new(re, im)
    }
}

/// One biquad: `b0 b1 b2 / 1 a1 a2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Section {
    /// Steady-state transposed-direct-form-II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        // (I − Aᵀ)·z = b[1..] − a[1..]·b0 with the companion matrix of the denominator.
        let (r0, r1) = (b1 - a1 * b0, b2 - a2 * b0);
        let det = (1.0 + a1) + a2;
        let z0 = (r0 + r1) / det;
        let z1 = r1 - a2 * z0;
        [z0, z1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ButterworthBandpass {
    pub sections: Vec<Section>,
    pub order: usize,
    pub fs_hz: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl ButterworthBandpass {
    /// Band-pass of prototype order `order` (the digital filter has order `2·order`).
    pub fn design(order: usize, lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<Self, DspError> {
        if order == 0 {
            return Err(DspError::InvalidOrder);
        }
        let nyquist_hz = fs_hz / 2.0;
        if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < nyquist_hz) {
            return Err(DspError::BandOutsideNyquist { lo_hz, hi_hz, nyquist_hz });
        }
        let fs2 = 2.0 * fs_hz;
        let w_lo = fs2 * (PI * lo_hz / fs_hz).tan();
        let w_hi = fs2 * (PI * hi_hz / fs_hz).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let n = order as f64;
        let mut analog = Vec::with_capacity(2 * order);
        for k in 0..order {
            let theta = PI * (2.0 * k as f64 + 1.0 + n) / (2.0 * n);
            let p = Complex::new(theta.cos(), theta.sin()).scale(bw / 2.0);
            let disc = p.mul(p).sub(Complex::new(w0_sq, 0.0)).sqrt();
            analog.push(p.add(disc));
            analog.push(p.sub(disc));
        }
        let two_fs = Complex::new(fs2, 0.0);
        let mut gain = (bw * fs2).powi(order as i32);
        let mut denom = Complex::new(1.0, 0.0);
        let mut poles: Vec<Complex> = analog
            .iter()
            .map(|&s| {
                denom = denom.mul(two_fs.sub(s));
                two_fs.add(s).div(two_fs.sub(s))
            })
            .collect();
        gain /= denom.re;

        // One pole of each conjugate pair, furthest from the unit circle first.
        poles.retain(|p| p.im > 0.0);
        poles.sort_by(|a, b| (1.0 - b.abs()).partial_cmp(&(1.0 - a.abs())).unwrap());
        let sections = poles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let g = if i == 0 { gain } else { 1.0 };
                Section { b: [g, 0.0, -g], a: [1.0, -2.0 * p.re, p.re * p.re + p.im * p.im] }
            })
            .collect();
        Ok(ButterworthBandpass { sections, order, fs_hz, lo_hz, hi_hz })
    }

    /// Shortest extension that still gives the edge initial conditions room to act:
    /// three times the number of filter taps.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Samples until the single-pass impulse response falls below 1% of its peak for good.
    pub fn settling_len(&self) -> usize {
        const LIMIT: usize = 1 << 22;
        let mut z = vec![[0.0f64; 2]; self.sections.len()];
        let mut peak = 0.0f64;
        let mut last_large = 0;
        let mut quiet = 0usize;
        for k in 0..LIMIT {
            let mut v = if k == 0 { 1.0 } else { 0.0 };
            for (s, zi) in self.sections.iter().zip(z.iter_mut()) {
                let y = s.b[0] * v + zi[0];
                zi[0] = s.b[1] * v - s.a[1] * y + zi[1];
                zi[1] = s.b[2] * v - s.a[2] * y;
                v = y;
            }
            peak = peak.max(v.abs());
            if v.abs() >= 0.01 * peak {
                last_large = k;
                quiet = 0;
            } else {
                quiet += 1;
                // Past a full slowest-pole period with nothing above threshold.
                if quiet > last_large.max(64) {
                    break;
                }
            }
        }
        last_large + 1
    }

    /// Single causal pass with optional initial state per section.
    pub fn filter(&self, x: &[f64], state: Option<&[[f64; 2]]>) -> Vec<f64> {
        let mut z: Vec<[f64; 2]> = state.map_or_else(|| vec![[0.0; 2]; self.sections.len()], <[_]>::to_vec);
        x.iter()
            .map(|&v| {
                let mut v = v;
                for (s, zi) in self.sections.iter().zip(z.iter_mut()) {
                    let y = s.b[0] * v + zi[0];
                    zi[0] = s.b[1] * v - s.a[1] * y + zi[1];
                    zi[1] = s.b[2] * v - s.a[2] * y;
                    v = y;
                }
                v
            })
            .collect()
    }

    /// Section states for a steady unit input through the cascade.
    pub fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let [z0, z1] = s.step_state();
                let zi = [scale * z0, scale * z1];
                scale *= s.b.iter().sum::<f64>() / s.a.iter().sum::<f64>();
                zi
            })
            .collect()
    }

    /// Forward–backward filtering with odd extension of three settling lengths at
    /// both ends, shortened to the signal length when the record is shorter.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        let pad = (3 * self.settling_len()).min(x.len().saturating_sub(1)).max(self.pad_len());
        self.filtfilt_padded(x, pad)
    }

    /// Forward–backward filtering with odd extension of `pad` samples at both ends.
    pub fn filtfilt_padded(&self, x: &[f64], pad: usize) -> Result<Vec<f64>, DspError> {
        let needed = pad.max(self.pad_len()).max(6 * self.order);
        if x.len() <= needed {
            return Err(DspError::TooShort { needed, got: x.len() });
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_state();
        let scaled = |k: f64| -> Vec<[f64; 2]> { zi.iter().map(|z| [z[0] * k, z[1] * k]).collect() };
        let mut y = self.filter(&ext, Some(&scaled(ext[0])));
        y.reverse();
        let mut y = self.filter(&y, Some(&scaled(y[0])));
        y.reverse();
        Ok(y[pad..pad + n].to_vec())
    }

    /// |H(e^{j2πf/fs})| of one pass.
    pub fn magnitude(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.fs_hz;
        let z1 = Complex::new(w.cos(), -w.sin());
        let z2 = z1.mul(z1);
        self.sections
            .iter()
            .map(|s| {
                let num = Complex::new(s.b[0], 0.0).add(z1.scale(s.b[1])).add(z2.scale(s.b[2]));
                let den = Complex::new(s.a[0], 0.0).add(z1.scale(s.a[1])).add(z2.scale(s.a[2]));
                num.abs() / den.abs()
            })
            .product()
    }
}

pub fn bandpass_zero_phase(x: &[f64], fs_hz: f64, lo_hz: f64, hi_hz: f64, order: usize) -> Result<Vec<f64>, DspError> {
    ButterworthBandpass::design(order, lo_hz, hi_hz, fs_hz)?.filtfilt(x)
}
