//! Cross-wavelet spectrum, coherence, and phase for a pair of aligned
//! series.
//!
//! The cross spectrum is `W_xy = W_x conj(W_y)`. Its magnitude is tested
//! against the product of the two red-noise backgrounds (Torrence & Compo
//! eq. 30). Coherence follows Torrence & Webster: the scale-divided fields
//! are smoothed in time with a scale-matched Gaussian and across scales
//! with a boxcar 0.6/dj rows wide; the phase field is the argument of the
//! smoothed cross spectrum.

use ndarray::Array2;
use num_complex::Complex64;

use super::{
    cwt, red_noise_spectrum, SpectralError, TimeSeries, WaveletParams, WaveletSpectrum,
};

/// Cross-wavelet products over the shared (scale x time) grid.
#[derive(Debug, Clone)]
pub struct CrossSpectrum {
    pub start: chrono::NaiveDate,
    pub scales: Vec<f64>,
    pub periods: Vec<f64>,
    /// Cross power `|W_x conj(W_y)|` in joint variance units.
    pub cross_power: Array2<f64>,
    /// Squared coherence in [0, 1].
    pub coherence: Array2<f64>,
    /// Phase difference (x relative to y) from the smoothed cross
    /// spectrum, in (-pi, pi]; NaN where the smoothed cross power vanishes.
    pub phase: Array2<f64>,
    /// Cross-power significance against the product of the two red-noise
    /// backgrounds, gated to the cone of influence.
    pub significance: Array2<bool>,
    pub coi: Vec<f64>,
}

impl CrossSpectrum {
    pub fn num_scales(&self) -> usize {
        self.cross_power.nrows()
    }

    pub fn num_times(&self) -> usize {
        self.cross_power.ncols()
    }

    pub fn in_coi(&self, scale_index: usize, time: usize) -> bool {
        self.periods[scale_index] <= self.coi[time]
    }
}

/// Cross-wavelet analysis of two aligned equal-length series at confidence
/// `alpha`.
pub fn cross_wavelet(
    x: &TimeSeries,
    y: &TimeSeries,
    params: &WaveletParams,
    alpha: f64,
) -> Result<CrossSpectrum, SpectralError> {
    if x.len() != y.len() {
        return Err(SpectralError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.start != y.start {
        return Err(SpectralError::Misaligned {
            x: x.start,
            y: y.start,
        });
    }
    let wx = cwt(x, params)?;
    let wy = cwt(y, params)?;

    let nj = wx.num_scales();
    let nt = wx.num_times();

    let mut cross = Array2::<Complex64>::zeros((nj, nt));
    for j in 0..nj {
        for t in 0..nt {
            cross[[j, t]] = wx.coeffs[[j, t]] * wy.coeffs[[j, t]].conj();
        }
    }
    let cross_power = cross.mapv(|c| c.norm());

    // Smooth the scale-divided fields.
    let divide_by_scale = |field: &Array2<Complex64>, scales: &[f64]| {
        let mut out = field.clone();
        for j in 0..nj {
            let s = scales[j];
            for t in 0..nt {
                out[[j, t]] /= s;
            }
        }
        out
    };
    let px = wx.coeffs.mapv(|c| Complex64::new(c.norm_sqr(), 0.0));
    let py = wy.coeffs.mapv(|c| Complex64::new(c.norm_sqr(), 0.0));
    let smooth_cross = smooth(&divide_by_scale(&cross, &wx.scales), &wx.scales, params.dj);
    let smooth_x = smooth(&divide_by_scale(&px, &wx.scales), &wx.scales, params.dj);
    let smooth_y = smooth(&divide_by_scale(&py, &wx.scales), &wx.scales, params.dj);

    let mut coherence = Array2::<f64>::zeros((nj, nt));
    let mut phase = Array2::<f64>::zeros((nj, nt));
    for j in 0..nj {
        for t in 0..nt {
            let num = smooth_cross[[j, t]].norm_sqr();
            let den = smooth_x[[j, t]].re * smooth_y[[j, t]].re;
            coherence[[j, t]] = if den > 0.0 {
                (num / den).clamp(0.0, 1.0)
            } else {
                0.0
            };
            phase[[j, t]] = if smooth_cross[[j, t]].norm() > 0.0 {
                smooth_cross[[j, t]].arg()
            } else {
                f64::NAN
            };
        }
    }

    let significance = cross_significance(&wx, &wy, &cross_power, alpha);

    Ok(CrossSpectrum {
        start: x.start,
        scales: wx.scales,
        periods: wx.periods,
        cross_power,
        coherence,
        phase,
        significance,
        coi: wx.coi,
    })
}

/// `|W_x conj(W_y)| / (sigma_x sigma_y) > Z_alpha sqrt(P_x P_y) / 2`,
/// where `Z_alpha` solves `z K_1(z) = 1 - alpha` (the square root of the
/// product of two chi-square(2) variables).
fn cross_significance(
    wx: &WaveletSpectrum,
    wy: &WaveletSpectrum,
    cross_power: &Array2<f64>,
    alpha: f64,
) -> Array2<bool> {
    let nj = cross_power.nrows();
    let nt = cross_power.ncols();
    let mut mask = Array2::from_elem((nj, nt), false);
    if wx.variance <= 0.0 || wy.variance <= 0.0 {
        return mask;
    }
    let z = product_chi2_quantile(alpha);
    for j in 0..nj {
        let px = red_noise_spectrum(wx.lag1, wx.periods[j]);
        let py = red_noise_spectrum(wy.lag1, wy.periods[j]);
        let level = z * (px * py).sqrt() / 2.0;
        for t in 0..nt {
            mask[[j, t]] = cross_power[[j, t]] > level && wx.in_coi(j, t);
        }
    }
    mask
}

/// Quantile of `sqrt(chi2_2 * chi2_2)`: the `z` with
/// `P(sqrt(uv) > z) = 1 - alpha`, i.e. `z K_1(z) = 1 - alpha`.
/// `Z(0.95) = 3.999`, `Z(0.865) = 2.182` (Torrence & Compo).
pub fn product_chi2_quantile(alpha: f64) -> f64 {
    let target = 1.0 - alpha;
    let f = |z: f64| z * bessel_k1(z) - target;
    let mut lo = 1e-8;
    let mut hi = 60.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Modified Bessel I1, Abramowitz & Stegun 9.8.3/9.8.4.
fn bessel_i1(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.75 {
        let t = x / 3.75;
        let t2 = t * t;
        x * (0.5
            + t2 * (0.878_905_94
                + t2 * (0.514_988_69
                    + t2 * (0.150_849_34
                        + t2 * (0.026_587_33 + t2 * (0.003_015_32 + t2 * 0.000_324_11))))))
    } else {
        let t = 3.75 / ax;
        let poly = 0.398_942_28
            + t * (-0.039_880_24
                + t * (-0.003_620_18
                    + t * (0.001_638_01
                        + t * (-0.010_315_55
                            + t * (0.022_829_67
                                + t * (-0.028_953_12
                                    + t * (0.017_876_54 + t * -0.004_200_59)))))));
        let value = poly * ax.exp() / ax.sqrt();
        if x < 0.0 {
            -value
        } else {
            value
        }
    }
}

/// Modified Bessel K1, Abramowitz & Stegun 9.8.7/9.8.8.
fn bessel_k1(x: f64) -> f64 {
    if x <= 2.0 {
        let t = x * x / 4.0;
        let log_term = (x / 2.0).ln() * bessel_i1(x);
        log_term
            + (1.0 / x)
                * (1.0
                    + t * (0.154_431_44
                        + t * (-0.672_785_79
                            + t * (-0.181_568_97
                                + t * (-0.019_194_02
                                    + t * (-0.001_104_04 + t * -0.000_046_86))))))
    } else {
        let t = 2.0 / x;
        let poly = 1.253_314_14
            + t * (0.234_986_19
                + t * (-0.036_556_20
                    + t * (0.015_042_68
                        + t * (-0.007_803_53 + t * (0.003_256_14 + t * -0.000_682_45)))));
        poly * (-x).exp() / x.sqrt()
    }
}

/// Smooth a (scale x time) field: per-scale Gaussian in time with standard
/// deviation equal to the scale, then a boxcar across scales covering
/// 0.6/dj rows (fractional end weights). Weights renormalize near the
/// edges so that smoothing a constant field returns it unchanged.
fn smooth(field: &Array2<Complex64>, scales: &[f64], dj: f64) -> Array2<Complex64> {
    let nj = field.nrows();
    let nt = field.ncols();

    // Time smoothing.
    let mut time_smoothed = Array2::<Complex64>::zeros((nj, nt));
    for j in 0..nj {
        let s = scales[j];
        let half = (4.0 * s).ceil() as isize;
        let weights: Vec<f64> = (-half..=half)
            .map(|k| (-(k as f64) * (k as f64) / (2.0 * s * s)).exp())
            .collect();
        for t in 0..nt {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for (wi, k) in (-half..=half).enumerate() {
                let idx = t as isize + k;
                if idx >= 0 && (idx as usize) < nt {
                    let w = weights[wi];
                    acc += field[[j, idx as usize]] * w;
                    wsum += w;
                }
            }
            time_smoothed[[j, t]] = acc / wsum;
        }
    }

    // Scale smoothing: boxcar of total width 0.6/dj rows.
    let half_width = 0.3 / dj;
    let reach = half_width.ceil() as isize;
    let mut out = Array2::<Complex64>::zeros((nj, nt));
    let overlap = |k: isize| -> f64 {
        // overlap of the row's unit cell [k-0.5, k+0.5] with [-h, h]
        let lo = (k as f64 - 0.5).max(-half_width);
        let hi = (k as f64 + 0.5).min(half_width);
        (hi - lo).max(0.0)
    };
    for j in 0..nj {
        for t in 0..nt {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for k in -reach..=reach {
                let idx = j as isize + k;
                if idx >= 0 && (idx as usize) < nj {
                    let w = overlap(k);
                    if w > 0.0 {
                        acc += time_smoothed[[idx as usize, t]] * w;
                        wsum += w;
                    }
                }
            }
            out[[j, t]] = acc / wsum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn sinusoid(n: usize, period: f64, lag_days: f64) -> TimeSeries {
        let values = (0..n)
            .map(|t| (2.0 * PI * (t as f64 - lag_days) / period).sin())
            .collect();
        TimeSeries::new(start(), values)
    }

    #[test]
    fn quantile_matches_published_value() {
        // Z_2(95%) = 3.999 (Torrence & Compo).
        assert_abs_diff_eq!(product_chi2_quantile(0.95), 3.999, epsilon = 2e-3);
    }

    #[test]
    fn quantile_matches_monte_carlo_tail() {
        // chi2(2) = -2 ln U; check P(sqrt(uv) > Z_alpha) = 1 - alpha.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for alpha in [0.9, 0.95] {
            let z = product_chi2_quantile(alpha);
            let n = 200_000;
            let mut above = 0usize;
            for _ in 0..n {
                let u: f64 = -2.0 * rng.random_range(0.0f64..1.0).max(1e-300).ln();
                let v: f64 = -2.0 * rng.random_range(0.0f64..1.0).max(1e-300).ln();
                if (u * v).sqrt() > z {
                    above += 1;
                }
            }
            let tail = above as f64 / n as f64;
            assert_abs_diff_eq!(tail, 1.0 - alpha, epsilon = 0.005);
        }
    }

    #[test]
    fn identical_series_in_phase_full_coherence() {
        let x = sinusoid(512, 32.0, 0.0);
        let cs = cross_wavelet(&x, &x, &WaveletParams::default(), 0.95).unwrap();
        let mut checked = 0;
        for j in 0..cs.num_scales() {
            for t in 0..cs.num_times() {
                if cs.significance[[j, t]] {
                    assert!(cs.phase[[j, t]].abs() < 0.1, "phase {}", cs.phase[[j, t]]);
                    assert!(cs.coherence[[j, t]] > 0.95);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "no significant in-COI points");
    }

    #[test]
    fn quarter_period_lag_gives_half_pi_phase() {
        let period = 32.0;
        let x = sinusoid(512, period, 0.0);
        let y = sinusoid(512, period, period / 4.0); // y delayed by P/4
        let cs = cross_wavelet(&x, &y, &WaveletParams::default(), 0.95).unwrap();
        let band = cs
            .periods
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - period).abs().partial_cmp(&(b.1 - period).abs()).unwrap()
            })
            .unwrap()
            .0;
        for t in 200..312 {
            assert!(cs.in_coi(band, t));
            let phase = cs.phase[[band, t]];
            assert!(
                (phase - PI / 2.0).abs() < 0.1,
                "phase at t={t} is {phase}, expected pi/2"
            );
        }
    }

    #[test]
    fn phase_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 256;
        let x = TimeSeries::new(
            start(),
            (0..n).map(|t| (2.0 * PI * t as f64 / 24.0).sin() + 0.3 * rng.random_range(-1.0..1.0)).collect(),
        );
        let y = TimeSeries::new(
            start(),
            (0..n).map(|t| (2.0 * PI * t as f64 / 24.0).cos() + 0.3 * rng.random_range(-1.0..1.0)).collect(),
        );
        let params = WaveletParams::default();
        let xy = cross_wavelet(&x, &y, &params, 0.95).unwrap();
        let yx = cross_wavelet(&y, &x, &params, 0.95).unwrap();
        for (a, b) in xy.phase.iter().zip(yx.phase.iter()) {
            if a.is_finite() && b.is_finite() && a.abs() < PI - 1e-6 {
                assert_abs_diff_eq!(*a, -*b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn independent_noise_rarely_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut noise = |n: usize| {
            TimeSeries::new(
                start(),
                (0..n)
                    .map(|_| (0..12).map(|_| rng.random_range(-0.5..0.5)).sum::<f64>())
                    .collect(),
            )
        };
        let mut significant = 0usize;
        let mut total = 0usize;
        for _ in 0..30 {
            let x = noise(256);
            let y = noise(256);
            let cs = cross_wavelet(&x, &y, &WaveletParams::default(), 0.95).unwrap();
            for j in 0..cs.num_scales() {
                for t in 0..cs.num_times() {
                    if cs.in_coi(j, t) {
                        total += 1;
                        if cs.significance[[j, t]] {
                            significant += 1;
                        }
                    }
                }
            }
        }
        let fraction = significant as f64 / total as f64;
        assert!(fraction < 0.08, "false positive rate {fraction}");
    }

    #[test]
    fn coherence_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = TimeSeries::new(
            start(),
            (0..200).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let y = TimeSeries::new(
            start(),
            (0..200).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let cs = cross_wavelet(&x, &y, &WaveletParams::default(), 0.95).unwrap();
        for &c in cs.coherence.iter() {
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn mismatched_series_rejected() {
        let x = sinusoid(128, 16.0, 0.0);
        let y = sinusoid(100, 16.0, 0.0);
        assert!(matches!(
            cross_wavelet(&x, &y, &WaveletParams::default(), 0.95),
            Err(SpectralError::LengthMismatch { .. })
        ));
        let mut z = sinusoid(128, 16.0, 0.0);
        z.start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        assert!(matches!(
            cross_wavelet(&x, &z, &WaveletParams::default(), 0.95),
            Err(SpectralError::Misaligned { .. })
        ));
    }
}
