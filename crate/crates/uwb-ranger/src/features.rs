//! Channel parameter extraction from thresholded PDPs, and feature
//! standardization.
//!
//! Eight channel parameters are extracted per measurement: TOA, RSS, maximum
//! received power, mean excess delay, maximum excess delay, RMS delay spread,
//! rise time and kurtosis. The kernel methods consume them as a standardized
//! vector in a fixed canonical order with delays in nanoseconds, powers in
//! dBm and kurtosis unitless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdp::{dbm_to_mw, mw_to_dbm, ThresholdedPdp};

/// Number of channel parameters.
pub const FEATURE_COUNT: usize = 8;

/// Canonical feature order; also the feature CSV column names.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "toa_ns",
    "rss_dbm",
    "max_power_dbm",
    "med_ns",
    "xed_ns",
    "rms_ns",
    "rise_ns",
    "kurtosis",
];

/// Which channel parameters feed the kernel methods. Used by the
/// feature-subset study; ranging with everything except TOA and RSS probes
/// how much the non-traditional parameters carry on their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    #[default]
    All,
    ToaRssOnly,
    NoToaRss,
}

impl FeatureSubset {
    pub fn indices(&self) -> &'static [usize] {
        match self {
            FeatureSubset::All => &[0, 1, 2, 3, 4, 5, 6, 7],
            FeatureSubset::ToaRssOnly => &[0, 1],
            FeatureSubset::NoToaRss => &[2, 3, 4, 5, 6, 7],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.indices().iter().map(|&i| FEATURE_NAMES[i]).collect()
    }

    pub fn select(&self, raw: &[f64; FEATURE_COUNT]) -> Vec<f64> {
        self.indices().iter().map(|&i| raw[i]).collect()
    }
}

impl std::fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureSubset::All => "all",
            FeatureSubset::ToaRssOnly => "toa_rss_only",
            FeatureSubset::NoToaRss => "no_toa_rss",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSubset::All),
            "toa_rss_only" => Ok(FeatureSubset::ToaRssOnly),
            "no_toa_rss" => Ok(FeatureSubset::NoToaRss),
            other => Err(Error::Config(format!("unknown feature subset `{other}`"))),
        }
    }
}

/// The channel parameters of a single measurement. Delays are stored in
/// seconds; [`ChannelFeatures::to_raw_vector`] converts to the canonical
/// nanosecond-scaled vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFeatures {
    /// Time of arrival of the first detected path, seconds.
    pub toa_s: f64,
    /// Received signal strength: total power over masked bins, dBm.
    pub rss_dbm: f64,
    /// Strongest masked bin, dBm.
    pub max_power_dbm: f64,
    /// Energy-weighted mean delay relative to the first path, seconds.
    pub mean_excess_delay_s: f64,
    /// Delay of the last masked bin relative to the first, seconds.
    pub max_excess_delay_s: f64,
    /// Energy-weighted delay spread, seconds.
    pub rms_delay_spread_s: f64,
    /// Delay from the first path to the strongest path, seconds.
    pub rise_time_s: f64,
    /// Fourth standardized moment of the masked linear powers.
    pub kurtosis: f64,
}

impl ChannelFeatures {
    /// Canonical raw vector: `[toa_ns, rss_dbm, max_power_dbm, med_ns,
    /// xed_ns, rms_ns, rise_ns, kurtosis]`.
    pub fn to_raw_vector(&self) -> [f64; FEATURE_COUNT] {
        [
            self.toa_s * 1e9,
            self.rss_dbm,
            self.max_power_dbm,
            self.mean_excess_delay_s * 1e9,
            self.max_excess_delay_s * 1e9,
            self.rms_delay_spread_s * 1e9,
            self.rise_time_s * 1e9,
            self.kurtosis,
        ]
    }

    /// Inverse of [`ChannelFeatures::to_raw_vector`].
    pub fn from_raw_vector(raw: &[f64; FEATURE_COUNT]) -> Self {
        Self {
            toa_s: raw[0] * 1e-9,
            rss_dbm: raw[1],
            max_power_dbm: raw[2],
            mean_excess_delay_s: raw[3] * 1e-9,
            max_excess_delay_s: raw[4] * 1e-9,
            rms_delay_spread_s: raw[5] * 1e-9,
            rise_time_s: raw[6] * 1e-9,
            kurtosis: raw[7],
        }
    }
}

/// A standardized feature vector, the input to the kernel methods. The
/// dimension is [`FEATURE_COUNT`] for the full parameter set but can be
/// smaller when a feature subset is selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn squared_distance(&self, other: &FeatureVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Per-feature means and standard deviations used for standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl FeatureScaler {
    /// Fits means and standard deviations (N-1 denominator) over generic
    /// rows. Errors if any column has (numerically) zero variance.
    pub fn fit_rows(rows: &[Vec<f64>], names: &[&str]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Input(format!(
                "scaler needs at least 2 samples, got {n}"
            )));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dim {
                expected: dim,
                got: rows.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(0),
            });
        }
        let mut means = vec![0.0; dim];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut stds = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for (k, s) in stds.iter_mut().enumerate() {
            *s = (*s / (n as f64 - 1.0)).sqrt();
            if *s <= 1e-12 * means[k].abs().max(1.0) {
                let name = names.get(k).copied().unwrap_or("?");
                return Err(Error::DegenerateFeature(name.to_string()));
            }
        }
        Ok(Self { means, stds })
    }

    /// Standardizes one raw row: element-wise `(x - mean) / std`.
    pub fn standardize_row(&self, raw: &[f64]) -> Result<FeatureVector> {
        if raw.len() != self.means.len() {
            return Err(Error::Dim {
                expected: self.means.len(),
                got: raw.len(),
            });
        }
        Ok(FeatureVector(
            raw.iter()
                .zip(self.means.iter().zip(&self.stds))
                .map(|(x, (m, s))| (x - m) / s)
                .collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Fits a [`FeatureScaler`] over the full 8-feature set.
pub fn fit_scaler(samples: &[ChannelFeatures]) -> Result<FeatureScaler> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|f| f.to_raw_vector().to_vec()).collect();
    FeatureScaler::fit_rows(&rows, &FEATURE_NAMES)
}

/// Standardizes the 8 channel parameters into a [`FeatureVector`].
pub fn standardize(f: &ChannelFeatures, scaler: &FeatureScaler) -> Result<FeatureVector> {
    scaler.standardize_row(&f.to_raw_vector())
}

/// Extracts the 8 channel parameters from a thresholded PDP.
///
/// All moments are energy-weighted over the masked bins with delays measured
/// relative to the first masked bin. Kurtosis uses population moments of the
/// masked linear powers; when the power variance vanishes (e.g. a single
/// path) it is reported as 0.
pub fn extract_features(tp: &ThresholdedPdp) -> Result<ChannelFeatures> {
    let bins: Vec<usize> = tp.masked_indices().collect();
    if bins.is_empty() {
        return Err(Error::EmptyPdp(tp.threshold_dbm));
    }

    let delays: Vec<f64> = bins.iter().map(|&i| tp.pdp.delay_s(i)).collect();
    let powers_mw: Vec<f64> = bins.iter().map(|&i| dbm_to_mw(tp.pdp.power_dbm[i])).collect();
    let total_mw: f64 = powers_mw.iter().sum();

    let toa = delays[0];
    let rss_dbm = mw_to_dbm(total_mw);
    let max_power_dbm = bins
        .iter()
        .map(|&i| tp.pdp.power_dbm[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let mean_excess = delays
        .iter()
        .zip(&powers_mw)
        .map(|(t, p)| p * (t - toa))
        .sum::<f64>()
        / total_mw;
    let max_excess = delays[delays.len() - 1] - toa;
    let rms = (delays
        .iter()
        .zip(&powers_mw)
        .map(|(t, p)| p * (t - toa - mean_excess).powi(2))
        .sum::<f64>()
        / total_mw)
        .sqrt();

    // First bin achieving the maximum power, ties broken toward the earliest.
    let peak_pos = powers_mw
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (j, &p)| {
            if p > acc.1 {
                (j, p)
            } else {
                acc
            }
        })
        .0;
    let rise_time = delays[peak_pos] - toa;

    let n = powers_mw.len() as f64;
    let p_mean = total_mw / n;
    let m2 = powers_mw.iter().map(|p| (p - p_mean).powi(2)).sum::<f64>() / n;
    let m4 = powers_mw.iter().map(|p| (p - p_mean).powi(4)).sum::<f64>() / n;
    let kurtosis = if m2 <= 1e-24 * p_mean * p_mean {
        0.0
    } else {
        m4 / (m2 * m2)
    };

    Ok(ChannelFeatures {
        toa_s: toa,
        rss_dbm,
        max_power_dbm,
        mean_excess_delay_s: mean_excess,
        max_excess_delay_s: max_excess,
        rms_delay_spread_s: rms,
        rise_time_s: rise_time,
        kurtosis,
    })
}
