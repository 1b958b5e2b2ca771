//! Continuous wavelet analysis of daily series, following Torrence & Compo
//! (1998): Morlet transform computed in the frequency domain on the
//! zero-padded, mean-removed, variance-normalized series; pointwise
//! chi-square significance against a red-noise AR(1) background; power
//! ridges; and cross-wavelet spectra with coherence and phase
//! (Torrence & Webster 1999 smoothing).

mod cross;

pub use cross::{cross_wavelet, CrossSpectrum};

use chrono::NaiveDate;
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SpectralError {
    #[error("series too short: {len} points, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("series start dates differ ({x} vs {y})")]
    Misaligned { x: NaiveDate, y: NaiveDate },
}

/// A daily-sampled series anchored at a start date.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + chrono::Days::new(index as u64)
    }

    /// `ln(1 + x)` transform for heavy-tailed daily volumes.
    pub fn log1p(&self) -> TimeSeries {
        TimeSeries {
            start: self.start,
            values: self.values.iter().map(|v| v.ln_1p()).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance (N denominator).
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.values.len() as f64
    }
}

/// Morlet transform parameters. Defaults follow the geophysics
/// conventions: `omega0 = 6`, `s0 = 2` days, `dj = 0.25`, and scales up to
/// a period of half the record length.
#[derive(Debug, Clone, Copy)]
pub struct WaveletParams {
    pub omega0: f64,
    /// Smallest scale, in days.
    pub s0: f64,
    /// Fractional octave spacing of the scale grid.
    pub dj: f64,
    /// Largest Fourier period to analyze; `None` means half the record.
    pub max_period: Option<f64>,
    /// Remove the mean and divide by the standard deviation before
    /// transforming. Power is then in units of the series variance.
    pub normalize: bool,
}

impl Default for WaveletParams {
    fn default() -> Self {
        Self {
            omega0: 6.0,
            s0: 2.0,
            dj: 0.25,
            max_period: None,
            normalize: true,
        }
    }
}

impl WaveletParams {
    /// Conversion factor from scale to equivalent Fourier period.
    pub fn fourier_factor(&self) -> f64 {
        4.0 * PI / (self.omega0 + (2.0 + self.omega0 * self.omega0).sqrt())
    }

    fn validate(&self) -> Result<(), SpectralError> {
        if !(self.omega0 > 0.0) {
            return Err(SpectralError::InvalidParam("omega0 must be > 0".into()));
        }
        if !(self.s0 > 0.0) {
            return Err(SpectralError::InvalidParam("s0 must be > 0".into()));
        }
        if !(self.dj > 0.0) {
            return Err(SpectralError::InvalidParam("dj must be > 0".into()));
        }
        if let Some(p) = self.max_period {
            if !(p > 0.0) {
                return Err(SpectralError::InvalidParam("max_period must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Reconstruction factor for the Morlet wavelet with `omega0 = 6`
/// (Torrence & Compo, Table 2).
const C_DELTA_MORLET6: f64 = 0.776;

/// Complex Morlet coefficient field over a (scale x time) grid, plus the
/// background-noise parameters needed for significance testing.
#[derive(Debug, Clone)]
pub struct WaveletSpectrum {
    pub start: NaiveDate,
    /// Scales `s0 * 2^(j*dj)`, ascending.
    pub scales: Vec<f64>,
    /// Equivalent Fourier periods, strictly increasing geometric grid.
    pub periods: Vec<f64>,
    /// Coefficients indexed `[scale, time]`.
    pub coeffs: Array2<Complex64>,
    /// Maximum reliable period per time point (e-folding distance
    /// `sqrt(2) * s` from the nearer edge).
    pub coi: Vec<f64>,
    /// Lag-1 autocorrelation estimated from the series.
    pub lag1: f64,
    /// Population variance of the input series.
    pub variance: f64,
    pub dj: f64,
    pub omega0: f64,
    normalized: bool,
}

/// A local power maximum chained into a ridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePoint {
    pub time: usize,
    pub scale_index: usize,
    pub period: f64,
    pub power: f64,
    pub ridge_id: usize,
}

/// Morlet continuous wavelet transform.
pub fn cwt(series: &TimeSeries, params: &WaveletParams) -> Result<WaveletSpectrum, SpectralError> {
    params.validate()?;
    let n = series.len();
    if n < 8 {
        return Err(SpectralError::TooShort { len: n, min: 8 });
    }
    if series.values.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }

    let dt = 1.0; // daily sampling
    let mean = series.mean();
    let variance = series.variance();
    let std = variance.sqrt();
    let signal: Vec<f64> = if params.normalize {
        let denom = if std > 0.0 { std } else { 1.0 };
        series.values.iter().map(|v| (v - mean) / denom).collect()
    } else {
        series.values.iter().map(|v| v - mean).collect()
    };

    let lag1 = lag1_autocorrelation(&signal);

    // Zero-pad to the next power of two.
    let npad = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(npad);
    let inverse = planner.plan_fft_inverse(npad);
    let mut spectrum: Vec<Complex64> = signal
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(npad)
        .collect();
    forward.process(&mut spectrum);

    // Angular frequencies of the padded grid.
    let dw = 2.0 * PI / (npad as f64 * dt);
    let omega: Vec<f64> = (0..npad)
        .map(|i| {
            if i <= npad / 2 {
                i as f64 * dw
            } else {
                -((npad - i) as f64) * dw
            }
        })
        .collect();

    let fourier_factor = params.fourier_factor();
    let max_period = params.max_period.unwrap_or(n as f64 * dt / 2.0);
    let j_max = ((max_period / (params.s0 * fourier_factor)).log2() / params.dj).floor() as i64;
    let j_max = j_max.max(0) as usize;
    let scales: Vec<f64> = (0..=j_max)
        .map(|j| params.s0 * 2f64.powf(j as f64 * params.dj))
        .collect();
    let periods: Vec<f64> = scales.iter().map(|s| s * fourier_factor).collect();

    let psi0_norm = PI.powf(-0.25);
    let mut coeffs = Array2::<Complex64>::zeros((scales.len(), n));
    let mut row_buf = vec![Complex64::new(0.0, 0.0); npad];
    for (j, &scale) in scales.iter().enumerate() {
        let norm = (2.0 * PI * scale / dt).sqrt() * psi0_norm;
        for (i, &w) in omega.iter().enumerate() {
            row_buf[i] = if w > 0.0 {
                let arg = -0.5 * (scale * w - params.omega0).powi(2);
                spectrum[i] * (norm * arg.exp())
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        inverse.process(&mut row_buf);
        let scale_back = 1.0 / npad as f64;
        for t in 0..n {
            coeffs[[j, t]] = row_buf[t] * scale_back;
        }
    }

    // COI as a period bound: e-folding time sqrt(2)*s converted to periods.
    let coi_factor = fourier_factor / std::f64::consts::SQRT_2;
    let coi: Vec<f64> = (0..n)
        .map(|t| coi_factor * dt * t.min(n - 1 - t) as f64)
        .collect();

    Ok(WaveletSpectrum {
        start: series.start,
        scales,
        periods,
        coeffs,
        coi,
        lag1,
        variance,
        dj: params.dj,
        omega0: params.omega0,
        normalized: params.normalize,
    })
}

/// Lag-1 coefficient from the first two sample autocorrelations
/// (Torrence & Compo estimator `(r1 + sqrt(r2)) / 2`).
pub(crate) fn lag1_autocorrelation(signal: &[f64]) -> f64 {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let denom: f64 = signal.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let acf = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|i| (signal[i] - mean) * (signal[i + lag] - mean))
            .sum::<f64>()
            / denom
    };
    let r1 = acf(1);
    let r2 = acf(2);
    let alpha = if r2 > 0.0 { (r1 + r2.sqrt()) / 2.0 } else { r1 };
    alpha.clamp(0.0, 0.999_999)
}

/// Normalized red-noise spectrum at one period:
/// `(1 - a^2) / (1 + a^2 - 2a cos(2 pi dt / period))`.
pub(crate) fn red_noise_spectrum(lag1: f64, period: f64) -> f64 {
    let freq = 2.0 * PI / period;
    (1.0 - lag1 * lag1) / (1.0 + lag1 * lag1 - 2.0 * lag1 * freq.cos())
}

impl WaveletSpectrum {
    pub fn num_times(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn num_scales(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `|W|^2`, in variance units when the transform was normalized.
    pub fn power(&self) -> Array2<f64> {
        self.coeffs.mapv(|c| c.norm_sqr())
    }

    /// Power expressed in units of the series variance regardless of the
    /// normalization mode.
    fn power_sigma(&self) -> Array2<f64> {
        let power = self.power();
        if self.normalized || self.variance <= 0.0 {
            power
        } else {
            power / self.variance
        }
    }

    /// True where the coefficient is unaffected by edges (period within the
    /// cone boundary).
    pub fn in_coi(&self, scale_index: usize, time: usize) -> bool {
        self.periods[scale_index] <= self.coi[time]
    }

    /// Mean red-noise background power per scale, in variance units.
    pub fn background_spectrum(&self) -> Vec<f64> {
        self.periods
            .iter()
            .map(|&p| red_noise_spectrum(self.lag1, p))
            .collect()
    }

    /// Pointwise chi-square significance mask against the red-noise
    /// background at confidence `alpha` (e.g. 0.95). Points outside the
    /// cone of influence are masked off; see [`significance_unmasked`]
    /// for the raw test.
    ///
    /// [`significance_unmasked`]: WaveletSpectrum::significance_unmasked
    pub fn significance(&self, alpha: f64) -> Array2<bool> {
        let mut mask = self.significance_unmasked(alpha);
        for j in 0..self.num_scales() {
            for t in 0..self.num_times() {
                if !self.in_coi(j, t) {
                    mask[[j, t]] = false;
                }
            }
        }
        mask
    }

    /// The chi-square test without the COI gate.
    pub fn significance_unmasked(&self, alpha: f64) -> Array2<bool> {
        let mut mask = Array2::from_elem((self.num_scales(), self.num_times()), false);
        if self.variance <= 0.0 {
            return mask; // degenerate series: nothing is significant
        }
        let chi2 = ChiSquared::new(2.0).expect("valid dof");
        let threshold_factor = chi2.inverse_cdf(alpha) / 2.0;
        let power = self.power_sigma();
        let background = self.background_spectrum();
        for j in 0..self.num_scales() {
            let level = background[j] * threshold_factor;
            for t in 0..self.num_times() {
                mask[[j, t]] = power[[j, t]] > level;
            }
        }
        mask
    }

    /// Time-averaged power per scale (the global wavelet spectrum).
    pub fn global_spectrum(&self) -> Vec<f64> {
        let power = self.power();
        let n = self.num_times() as f64;
        (0..self.num_scales())
            .map(|j| power.row(j).sum() / n)
            .collect()
    }

    /// Per-time local power maxima across the period axis, thresholded at
    /// the red-noise background level and chained into ridges by
    /// nearest-neighbor scale continuity.
    pub fn ridges(&self) -> Vec<RidgePoint> {
        let power = self.power_sigma();
        let background = self.background_spectrum();
        let nj = self.num_scales();
        let nt = self.num_times();

        let mut points = Vec::new();
        // active ridges: (ridge_id, scale index at previous time)
        let mut active: Vec<(usize, usize)> = Vec::new();
        let mut next_id = 0usize;
        for t in 0..nt {
            let mut here: Vec<usize> = Vec::new();
            for j in 0..nj {
                let p = power[[j, t]];
                if p <= background[j] || !self.in_coi(j, t) {
                    continue;
                }
                let above = j + 1 < nj && power[[j + 1, t]] > p;
                let below = j > 0 && power[[j - 1, t]] > p;
                if !above && !below {
                    here.push(j);
                }
            }
            let mut new_active: Vec<(usize, usize)> = Vec::new();
            for &j in &here {
                let inherited = active
                    .iter()
                    .find(|(_, prev_j)| prev_j.abs_diff(j) <= 1)
                    .map(|(id, _)| *id);
                let id = inherited.unwrap_or_else(|| {
                    next_id += 1;
                    next_id - 1
                });
                if !new_active.iter().any(|(existing, _)| *existing == id) {
                    new_active.push((id, j));
                }
                points.push(RidgePoint {
                    time: t,
                    scale_index: j,
                    period: self.periods[j],
                    power: power[[j, t]],
                    ridge_id: id,
                });
            }
            active = new_active;
        }
        points
    }

    /// Scale-integrated variance estimate from COI-interior power
    /// (Torrence & Compo reconstruction, with per-scale means over valid
    /// points), in units of the series variance.
    pub fn reconstructed_variance_ratio(&self) -> f64 {
        let power = self.power_sigma();
        let mut total = 0.0;
        for j in 0..self.num_scales() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t in 0..self.num_times() {
                if self.in_coi(j, t) {
                    sum += power[[j, t]];
                    count += 1;
                }
            }
            if count > 0 {
                total += (sum / count as f64) / self.scales[j];
            }
        }
        self.dj * 1.0 / C_DELTA_MORLET6 * total
    }
}
