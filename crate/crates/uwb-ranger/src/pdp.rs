//! Power delay profiles: frequency-domain ingestion and noise thresholding.
//!
//! A measured complex frequency response is windowed, inverse-transformed and
//! squared into a power delay profile (PDP). Downstream feature extraction
//! only considers bins above a noise threshold; bins at or below it count as
//! zero power.
//!
//! Power is stored in dBm; all arithmetic on powers happens in linear scale
//! (milliwatts).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// dBm floor used when a linear power is exactly zero (e.g. the flat bins of
/// a synthetic impulse). Far below any thermal noise floor.
pub const DBM_FLOOR: f64 = -300.0;

/// Converts linear power in milliwatts to dBm, clamped at [`DBM_FLOOR`].
pub fn mw_to_dbm(p_mw: f64) -> f64 {
    if p_mw <= 1e-30 {
        DBM_FLOOR
    } else {
        (10.0 * p_mw.log10()).max(DBM_FLOOR)
    }
}

/// Converts dBm to linear power in milliwatts.
pub fn dbm_to_mw(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

/// Window applied across the frequency grid before the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// No windowing.
    None,
    /// Hann window with zero endpoints, reduces out-of-band noise.
    Hann,
}

/// A measured complex channel frequency response on a uniform grid.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    center_frequency_hz: f64,
    frequencies_hz: Vec<f64>,
    values: Vec<Complex64>,
}

/// Relative tolerance on the uniformity of the frequency grid spacing.
const GRID_TOL: f64 = 1e-9;

impl FrequencyResponse {
    /// Builds a frequency response, validating the grid: at least two points,
    /// strictly increasing, spacing constant to relative tolerance 1e-9.
    pub fn new(
        center_frequency_hz: f64,
        frequencies_hz: Vec<f64>,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if frequencies_hz.len() < 2 {
            return Err(Error::Input(format!(
                "frequency response needs at least 2 points, got {}",
                frequencies_hz.len()
            )));
        }
        if frequencies_hz.len() != values.len() {
            return Err(Error::Dim {
                expected: frequencies_hz.len(),
                got: values.len(),
            });
        }
        let df = frequencies_hz[1] - frequencies_hz[0];
        if df <= 0.0 {
            return Err(Error::Grid("grid is not strictly increasing".into()));
        }
        for w in frequencies_hz.windows(2) {
            let step = w[1] - w[0];
            if step <= 0.0 {
                return Err(Error::Grid("grid is not strictly increasing".into()));
            }
            if (step - df).abs() > GRID_TOL * df.abs() {
                return Err(Error::Grid(format!(
                    "non-uniform spacing: {step} vs {df}"
                )));
            }
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Input("non-finite gain value".into()));
        }
        Ok(Self {
            center_frequency_hz,
            frequencies_hz,
            values,
        })
    }

    pub fn center_frequency_hz(&self) -> f64 {
        self.center_frequency_hz
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Span of the grid, `f_max - f_min`, in Hz.
    pub fn span_hz(&self) -> f64 {
        self.frequencies_hz[self.frequencies_hz.len() - 1] - self.frequencies_hz[0]
    }
}

/// A time-sampled received power trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    /// Delay of the first sample, seconds.
    pub t0_s: f64,
    /// Sample spacing, seconds.
    pub dt_s: f64,
    /// Power per delay bin, dBm.
    pub power_dbm: Vec<f64>,
}

impl PowerDelayProfile {
    /// Builds a PDP, validating `dt > 0`, a non-empty finite power list.
    pub fn new(t0_s: f64, dt_s: f64, power_dbm: Vec<f64>) -> Result<Self> {
        if !(dt_s > 0.0) || !dt_s.is_finite() {
            return Err(Error::Input(format!("dt must be positive, got {dt_s}")));
        }
        if power_dbm.is_empty() {
            return Err(Error::Input("PDP power list is empty".into()));
        }
        if !power_dbm.iter().all(|p| p.is_finite()) {
            return Err(Error::Input("non-finite PDP power value".into()));
        }
        Ok(Self {
            t0_s,
            dt_s,
            power_dbm,
        })
    }

    pub fn len(&self) -> usize {
        self.power_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_dbm.is_empty()
    }

    /// Delay of bin `i` in seconds.
    pub fn delay_s(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.dt_s
    }

    /// Largest bin power in dBm.
    pub fn peak_dbm(&self) -> f64 {
        self.power_dbm.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A PDP with a noise threshold applied. `mask[i]` is true iff
/// `power_dbm[i] > threshold_dbm` (strict).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedPdp {
    pub pdp: PowerDelayProfile,
    pub threshold_dbm: f64,
    pub mask: Vec<bool>,
}

impl ThresholdedPdp {
    /// Indices of bins above the threshold.
    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// Returns a PDP where below-threshold bins are forced to the dBm floor,
    /// i.e. treated as zero power.
    pub fn masked_pdp(&self) -> PowerDelayProfile {
        let power = self
            .pdp
            .power_dbm
            .iter()
            .zip(&self.mask)
            .map(|(&p, &m)| if m { p } else { DBM_FLOOR })
            .collect();
        PowerDelayProfile {
            t0_s: self.pdp.t0_s,
            dt_s: self.pdp.dt_s,
            power_dbm: power,
        }
    }
}

/// Converts a measured frequency response into a power delay profile.
///
/// The window is applied across the frequency grid, the inverse DFT (with
/// 1/N normalization) gives the complex impulse response, and the squared
/// magnitude is stored in dBm. The delay resolution is the reciprocal of the
/// grid span and the profile has as many bins as there were frequency points.
pub fn freq_response_to_pdp(
    fr: &FrequencyResponse,
    window: WindowKind,
) -> Result<PowerDelayProfile> {
    let n = fr.len();
    let mut buf: Vec<Complex64> = match window {
        WindowKind::None => fr.values().to_vec(),
        WindowKind::Hann => fr
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let w = 0.5
                    * (1.0
                        - (2.0 * std::f64::consts::PI * k as f64 / (n as f64 - 1.0)).cos());
                v * w
            })
            .collect(),
    };

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut buf);

    let scale = 1.0 / n as f64;
    let power_dbm = buf
        .iter()
        .map(|x| {
            let h = x * scale;
            mw_to_dbm(h.norm_sqr())
        })
        .collect();

    PowerDelayProfile::new(0.0, 1.0 / fr.span_hz(), power_dbm)
}

/// Applies the noise threshold: bins at or below `p_th_dbm` are masked out.
///
/// Errors with [`Error::EmptyPdp`] when no bin survives, which marks the
/// measurement as unusable.
pub fn apply_threshold(pdp: &PowerDelayProfile, p_th_dbm: f64) -> Result<ThresholdedPdp> {
    let mask: Vec<bool> = pdp.power_dbm.iter().map(|&p| p > p_th_dbm).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyPdp(p_th_dbm));
    }
    Ok(ThresholdedPdp {
        pdp: pdp.clone(),
        threshold_dbm: p_th_dbm,
        mask,
    })
}

/// Default threshold convention: `max(noise_floor + 6 dB, peak - 30 dB)`.
///
/// The threshold is an empirical choice; this convention keeps a 6 dB margin
/// over the noise floor while never reaching more than 30 dB below the peak.
pub fn default_threshold_dbm(pdp: &PowerDelayProfile, noise_floor_dbm: f64) -> f64 {
    (noise_floor_dbm + 6.0).max(pdp.peak_dbm() - 30.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform_grid(f0: f64, df: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| f0 + k as f64 * df).collect()
    }

    #[test]
    fn flat_response_gives_impulse_at_zero_delay() {
        let n = 4;
        let fr = FrequencyResponse::new(
            3.5e9,
            uniform_grid(2.5e9, 1e6, n),
            vec![Complex64::new(1.0, 0.0); n],
        )
        .unwrap();
        let pdp = freq_response_to_pdp(&fr, WindowKind::None).unwrap();
        assert_eq!(pdp.len(), n);
        // Bin 0 carries all the energy: |h[0]|^2 = 1 -> 0 dBm.
        assert_relative_eq!(pdp.power_dbm[0], 0.0, epsilon = 1e-9);
        for &p in &pdp.power_dbm[1..] {
            assert!(p < -250.0, "side bin not at numerical floor: {p}");
        }
    }

    #[test]
    fn delay_theorem_places_peak_at_bin_three() {
        let n = 64;
        let df = 1e7;
        let freqs = uniform_grid(2.5e9, df, n);
        let span = (n - 1) as f64 * df;
        let tau = 3.0 / span; // 3 * dt
        let values: Vec<Complex64> = freqs
            .iter()
            .map(|&f| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau))
            .collect();
        let fr = FrequencyResponse::new(3.5e9, freqs, values).unwrap();
        let pdp = freq_response_to_pdp(&fr, WindowKind::None).unwrap();
        let argmax = pdp
            .power_dbm
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 3);
    }

    #[test]
    fn table_scale_sweep_gives_half_ns_resolution() {
        let n = 3001;
        let df = 2e9 / (n as f64 - 1.0);
        let fr = FrequencyResponse::new(
            3.5e9,
            uniform_grid(2.5e9, df, n),
            vec![Complex64::new(1.0, 0.0); n],
        )
        .unwrap();
        let pdp = freq_response_to_pdp(&fr, WindowKind::Hann).unwrap();
        assert_relative_eq!(pdp.dt_s, 0.5e-9, max_relative = 1e-12);
        assert_eq!(pdp.len(), 3001);
    }

    #[test]
    fn parseval_energy_consistency_without_window() {
        // Pseudo-random complex gains, fixed pattern.
        let n = 128;
        let values: Vec<Complex64> = (0..n)
            .map(|k| {
                let a = ((k * 37 + 11) % 101) as f64 / 101.0 - 0.5;
                let b = ((k * 53 + 29) % 97) as f64 / 97.0 - 0.5;
                Complex64::new(a, b)
            })
            .collect();
        let mean_sq = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let fr = FrequencyResponse::new(3.5e9, uniform_grid(2.5e9, 1e6, n), values).unwrap();
        let pdp = freq_response_to_pdp(&fr, WindowKind::None).unwrap();
        let sum_linear: f64 = pdp.power_dbm.iter().map(|&p| dbm_to_mw(p)).sum();
        assert_relative_eq!(sum_linear, mean_sq, max_relative = 1e-6);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let mut freqs = uniform_grid(2.5e9, 1e6, 8);
        freqs[4] += 1e3;
        let err =
            FrequencyResponse::new(3.5e9, freqs, vec![Complex64::new(1.0, 0.0); 8]).unwrap_err();
        assert!(matches!(err, Error::Grid(_)));
    }

    #[test]
    fn too_few_points_is_rejected() {
        let err = FrequencyResponse::new(3.5e9, vec![2.5e9], vec![Complex64::new(1.0, 0.0)])
            .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn threshold_masks_strictly_above() {
        let pdp = PowerDelayProfile::new(0.0, 1e-9, vec![-80.0, -60.0, -90.0]).unwrap();
        let tp = apply_threshold(&pdp, -70.0).unwrap();
        assert_eq!(tp.mask, vec![false, true, false]);
        // A bin exactly at the threshold is excluded.
        let tp = apply_threshold(&pdp, -60.0).unwrap_err();
        assert!(matches!(tp, Error::EmptyPdp(th) if th == -60.0));
    }

    #[test]
    fn infinite_low_threshold_keeps_everything() {
        let pdp = PowerDelayProfile::new(0.0, 1e-9, vec![-80.0, -60.0, -90.0]).unwrap();
        let tp = apply_threshold(&pdp, f64::NEG_INFINITY).unwrap();
        assert!(tp.mask.iter().all(|&m| m));
    }

    #[test]
    fn threshold_above_peak_is_an_error() {
        let pdp = PowerDelayProfile::new(0.0, 1e-9, vec![-80.0, -60.0, -90.0]).unwrap();
        assert!(matches!(
            apply_threshold(&pdp, -10.0),
            Err(Error::EmptyPdp(_))
        ));
    }

    #[test]
    fn thresholding_is_idempotent() {
        let pdp =
            PowerDelayProfile::new(0.0, 1e-9, vec![-80.0, -55.0, -62.0, -90.0, -58.0]).unwrap();
        let tp = apply_threshold(&pdp, -65.0).unwrap();
        let tp2 = apply_threshold(&tp.masked_pdp(), -65.0).unwrap();
        assert_eq!(tp.mask, tp2.mask);
        for (i, &m) in tp2.mask.iter().enumerate() {
            if m {
                assert_eq!(tp2.pdp.power_dbm[i], tp.pdp.power_dbm[i]);
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_bins() {
        let pdp = PowerDelayProfile::new(
            0.0,
            1e-9,
            vec![-80.0, -55.0, -62.0, -90.0, -58.0, -71.5, -44.0],
        )
        .unwrap();
        let mut previous: Option<Vec<bool>> = None;
        for th in [-100.0, -75.0, -60.0, -50.0] {
            let tp = apply_threshold(&pdp, th).unwrap();
            if let Some(prev) = &previous {
                for (lo, hi) in prev.iter().zip(&tp.mask) {
                    assert!(*lo || !*hi, "raising threshold added a bin");
                }
            }
            previous = Some(tp.mask);
        }
    }

    #[test]
    fn default_threshold_convention() {
        let pdp = PowerDelayProfile::new(0.0, 1e-9, vec![-20.0, -60.0]).unwrap();
        // peak - 30 = -50 dominates noise_floor + 6 = -84.
        assert_eq!(default_threshold_dbm(&pdp, -90.0), -50.0);
        // noise_floor + 6 = -34 dominates peak - 30 = -50.
        assert_eq!(default_threshold_dbm(&pdp, -40.0), -34.0);
    }

    #[test]
    fn dbm_roundtrip_and_floor() {
        assert_relative_eq!(dbm_to_mw(0.0), 1.0);
        assert_relative_eq!(mw_to_dbm(1.0), 0.0);
        assert_relative_eq!(mw_to_dbm(dbm_to_mw(-57.3)), -57.3, epsilon = 1e-12);
        assert_eq!(mw_to_dbm(0.0), DBM_FLOOR);
    }
}
