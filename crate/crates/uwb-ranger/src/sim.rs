//! Seeded synthetic generator of tunnel-like UWB measurements.
//!
//! Samples are drawn from the generative inversion of the TOA bias model:
//! a uniform true distance, a Bernoulli LOS/NLOS hypothesis, the class
//! range-noise models, the quadratic NLOS error over a uniformly drawn max
//! excess delay, and exponential rise times per class. The remaining channel
//! parameters follow documented class-conditional affine models in
//! `(d, alpha_E)` plus Gaussian noise — simulator knobs, not measured
//! physics. In PDP mode each sample additionally synthesizes a tapped-delay-
//! line power profile realizing the drawn TOA, rise time and excess delay,
//! and the stored features are extracted from that profile through the
//! regular pipeline.
//!
//! Everything is deterministic given the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, ChannelFeatures};
use crate::nlos::Hypothesis;
use crate::pdp::{apply_threshold, default_threshold_dbm, PowerDelayProfile};
use crate::SPEED_OF_LIGHT;

/// What the generator emits per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Channel features drawn directly from the class-conditional models.
    #[default]
    Features,
    /// Synthesized power delay profiles; features extracted from them.
    Pdp,
}

/// Affine feature model `base + per_distance * d + per_excess * alpha_E`
/// plus Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxModel {
    pub base: f64,
    pub per_distance: f64,
    pub per_excess: f64,
    pub noise_std: f64,
}

impl AuxModel {
    fn sample(&self, d: f64, alpha_e: f64, rng: &mut ChaCha8Rng) -> f64 {
        self.base + self.per_distance * d + self.per_excess * alpha_e + gauss(self.noise_std, rng)
    }
}

/// Class-conditional models for the features not fixed by the ranging model.
/// Units: dBm for powers, ns for delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuxCoeffs {
    pub rss_los: AuxModel,
    pub rss_nlos: AuxModel,
    pub max_power_los: AuxModel,
    pub max_power_nlos: AuxModel,
    pub med_los: AuxModel,
    pub med_nlos: AuxModel,
    pub rms_los: AuxModel,
    pub rms_nlos: AuxModel,
    pub kurtosis_los: AuxModel,
    pub kurtosis_nlos: AuxModel,
    /// LOS max excess delay model; the NLOS one is the drawn alpha_E itself.
    pub xed_los: AuxModel,
}

impl Default for AuxCoeffs {
    fn default() -> Self {
        let m = |base, per_distance, per_excess, noise_std| AuxModel {
            base,
            per_distance,
            per_excess,
            noise_std,
        };
        Self {
            rss_los: m(-40.0, -0.35, 0.0, 1.5),
            rss_nlos: m(-46.0, -0.35, -0.04, 2.0),
            max_power_los: m(-43.0, -0.33, 0.0, 1.5),
            max_power_nlos: m(-52.0, -0.33, -0.06, 2.0),
            med_los: m(3.0, 0.08, 0.0, 1.0),
            med_nlos: m(6.0, 0.05, 0.35, 2.0),
            rms_los: m(4.0, 0.06, 0.0, 0.8),
            rms_nlos: m(8.0, 0.04, 0.25, 1.5),
            kurtosis_los: m(14.0, -0.05, 0.0, 1.5),
            kurtosis_nlos: m(6.0, 0.0, 0.01, 1.2),
            xed_los: m(6.0, 0.10, 0.0, 1.5),
        }
    }
}

/// PDP-mode synthesis knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdpSimConfig {
    pub dt_ns: f64,
    pub n_bins: usize,
    pub decay_db_per_ns: f64,
    pub noise_floor_dbm: f64,
    pub n_paths: usize,
}

impl Default for PdpSimConfig {
    fn default() -> Self {
        Self {
            dt_ns: 0.5,
            n_bins: 700,
            decay_db_per_ns: 0.5,
            noise_floor_dbm: -90.0,
            n_paths: 20,
        }
    }
}

/// Full generator configuration. Defaults follow the fitted tunnel
/// parameters: `sigma_l = 0.16 m`, `sigma_n = 1.61 m`,
/// `lambda_l = 0.333/ns`, `lambda_n = 0.075/ns`,
/// `poly = (0.00087, -0.2, 11.72)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub p_nlos: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub mu_l_m: f64,
    pub sigma_l_m: f64,
    pub sigma_n_m: f64,
    pub lambda_l_per_ns: f64,
    pub lambda_n_per_ns: f64,
    /// NLOS error polynomial `(p2, p1, p0)`, ns in / meters out.
    pub poly: (f64, f64, f64),
    /// Upper bound of the uniform max-excess-delay draw for NLOS samples.
    pub xed_max_ns: f64,
    pub mode: SimMode,
    pub pdp: PdpSimConfig,
    pub aux: AuxCoeffs,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 3600,
            p_nlos: 0.25,
            d_min_m: 2.0,
            d_max_m: 40.0,
            mu_l_m: 0.0,
            sigma_l_m: 0.16,
            sigma_n_m: 1.61,
            lambda_l_per_ns: 0.333,
            lambda_n_per_ns: 0.075,
            poly: (0.00087, -0.2, 11.72),
            xed_max_ns: 120.0,
            mode: SimMode::Features,
            pdp: PdpSimConfig::default(),
            aux: AuxCoeffs::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if !(self.p_nlos > 0.0 && self.p_nlos < 1.0) {
            return Err(Error::Config(format!(
                "p_nlos must lie strictly inside (0, 1), got {}",
                self.p_nlos
            )));
        }
        if !(self.d_min_m < self.d_max_m) || self.d_min_m < 0.0 {
            return Err(Error::Config(format!(
                "need 0 <= d_min < d_max, got [{}, {}]",
                self.d_min_m, self.d_max_m
            )));
        }
        if !(self.sigma_l_m > 0.0) || !(self.sigma_n_m > 0.0) {
            return Err(Error::Config("noise stds must be positive".into()));
        }
        if !(self.lambda_l_per_ns > 0.0) || !(self.lambda_n_per_ns > 0.0) {
            return Err(Error::Config("rise-time rates must be positive".into()));
        }
        if !(self.xed_max_ns > 0.0) {
            return Err(Error::Config("xed_max_ns must be positive".into()));
        }
        if self.mode == SimMode::Pdp {
            if !(self.pdp.dt_ns > 0.0) || self.pdp.n_bins < 2 {
                return Err(Error::Config("invalid PDP grid".into()));
            }
            let worst_ns = (self.d_max_m + self.g(0.0).max(self.g(self.xed_max_ns)) + 1.0)
                / SPEED_OF_LIGHT
                * 1e9
                + self.xed_max_ns;
            if worst_ns > self.pdp.dt_ns * (self.pdp.n_bins as f64 - 1.0) {
                return Err(Error::Config(format!(
                    "PDP span too short: worst-case delay {worst_ns:.0} ns exceeds the grid"
                )));
            }
        }
        Ok(())
    }

    /// NLOS error in meters for a max excess delay in ns.
    pub fn g(&self, alpha_e_ns: f64) -> f64 {
        let (p2, p1, p0) = self.poly;
        p2 * alpha_e_ns * alpha_e_ns + p1 * alpha_e_ns + p0
    }
}

/// One generated measurement with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: ChannelFeatures,
    /// Present in PDP mode only.
    pub pdp: Option<PowerDelayProfile>,
    pub distance_m: f64,
    pub hypothesis: Hypothesis,
    /// The generated `c * tau_1` in meters, before any bin quantization.
    pub c_tau_m: f64,
}

fn gauss(std: f64, rng: &mut ChaCha8Rng) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

/// Draws the full sample set. Deterministic given `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<Vec<LabeledSample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d_dist = Uniform::new(config.d_min_m, config.d_max_m)
        .map_err(|e| Error::Config(e.to_string()))?;
    let xed_dist =
        Uniform::new(0.0, config.xed_max_ns).map_err(|e| Error::Config(e.to_string()))?;
    let rise_los = Exp::new(config.lambda_l_per_ns).map_err(|e| Error::Config(e.to_string()))?;
    let rise_nlos = Exp::new(config.lambda_n_per_ns).map_err(|e| Error::Config(e.to_string()))?;

    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let d = d_dist.sample(&mut rng);
        let nlos = rng.random_bool(config.p_nlos);

        let (alpha_e_ns, bias_m, sigma) = if nlos {
            let alpha = xed_dist.sample(&mut rng);
            (alpha, config.g(alpha), config.sigma_n_m)
        } else {
            (0.0, config.mu_l_m, config.sigma_l_m)
        };

        // Redraw the range noise until c*tau stays positive; the truncated
        // mass is negligible for sane configurations.
        let mut c_tau = -1.0;
        for _ in 0..1000 {
            c_tau = d + bias_m + gauss(sigma, &mut rng);
            if c_tau > 0.0 {
                break;
            }
        }
        if c_tau <= 0.0 {
            return Err(Error::Numerical(
                "could not draw a positive c*tau; check d_range vs noise levels".into(),
            ));
        }

        let rise_ns = if nlos {
            rise_nlos.sample(&mut rng)
        } else {
            rise_los.sample(&mut rng)
        };

        let aux = &config.aux;
        let (rss, max_power, med, rms, kurt, xed_ns) = if nlos {
            (
                aux.rss_nlos.sample(d, alpha_e_ns, &mut rng),
                aux.max_power_nlos.sample(d, alpha_e_ns, &mut rng),
                aux.med_nlos.sample(d, alpha_e_ns, &mut rng).max(0.0),
                aux.rms_nlos.sample(d, alpha_e_ns, &mut rng).max(0.0),
                aux.kurtosis_nlos.sample(d, alpha_e_ns, &mut rng),
                alpha_e_ns,
            )
        } else {
            (
                aux.rss_los.sample(d, 0.0, &mut rng),
                aux.max_power_los.sample(d, 0.0, &mut rng),
                aux.med_los.sample(d, 0.0, &mut rng).max(0.0),
                aux.rms_los.sample(d, 0.0, &mut rng).max(0.0),
                aux.kurtosis_los.sample(d, 0.0, &mut rng),
                aux.xed_los.sample(d, 0.0, &mut rng).max(0.0),
            )
        };

        let hypothesis = if nlos { Hypothesis::Nlos } else { Hypothesis::Los };
        let sample = match config.mode {
            SimMode::Features => {
                let features = ChannelFeatures {
                    toa_s: c_tau / SPEED_OF_LIGHT,
                    rss_dbm: rss,
                    max_power_dbm: max_power,
                    mean_excess_delay_s: med * 1e-9,
                    max_excess_delay_s: xed_ns * 1e-9,
                    rms_delay_spread_s: rms * 1e-9,
                    rise_time_s: rise_ns * 1e-9,
                    kurtosis: kurt,
                };
                LabeledSample {
                    features,
                    pdp: None,
                    distance_m: d,
                    hypothesis,
                    c_tau_m: c_tau,
                }
            }
            SimMode::Pdp => {
                let pdp = synthesize_pdp(
                    config,
                    c_tau,
                    d,
                    nlos,
                    rise_ns,
                    xed_ns,
                    max_power,
                    &mut rng,
                )?;
                let p_th = default_threshold_dbm(&pdp, config.pdp.noise_floor_dbm);
                let features = extract_features(&apply_threshold(&pdp, p_th)?)?;
                LabeledSample {
                    features,
                    pdp: Some(pdp),
                    distance_m: d,
                    hypothesis,
                    c_tau_m: c_tau,
                }
            }
        };
        samples.push(sample);
    }
    Ok(samples)
}

/// Tapped-delay-line profile: the first detectable path at `c_tau / c`, the
/// strongest path `rise` later, the last path `xed` later, `n_paths` decaying
/// taps in between, and for NLOS a suppressed direct path below threshold.
#[allow(clippy::too_many_arguments)]
fn synthesize_pdp(
    config: &SimConfig,
    c_tau_m: f64,
    d_m: f64,
    nlos: bool,
    rise_ns: f64,
    xed_ns: f64,
    peak_power_dbm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PowerDelayProfile> {
    let pdp_cfg = &config.pdp;
    let dt = pdp_cfg.dt_ns;
    let n = pdp_cfg.n_bins;
    let floor = pdp_cfg.noise_floor_dbm;

    // Thermal noise everywhere.
    let mut power: Vec<f64> = (0..n).map(|_| floor + gauss(1.0, rng)).collect();

    let toa_ns = c_tau_m / SPEED_OF_LIGHT * 1e9;
    let k0 = (toa_ns / dt).round() as usize;
    let k_peak = (k0 + (rise_ns / dt).round() as usize).min(n - 1);
    let k_last = (k0 + (xed_ns / dt).round() as usize).min(n - 1);
    if k0 >= n {
        return Err(Error::Config(format!(
            "first path bin {k0} beyond the PDP grid of {n} bins"
        )));
    }

    // The profile must survive the default threshold convention:
    // max(floor + 6, peak - 30).
    let peak = peak_power_dbm.max(floor + 20.0);
    let p_th = (floor + 6.0).max(peak - 30.0);
    let min_path = p_th + 1.0;

    // Undetectable direct path for NLOS (kept below the noise threshold).
    if nlos {
        let k_direct = ((d_m / SPEED_OF_LIGHT * 1e9) / dt).round() as usize;
        if k_direct < k0 {
            power[k_direct] = floor - 15.0;
        }
    }

    let mut set_path = |bin: usize, level: f64| {
        power[bin] = power[bin].max(level.max(min_path));
    };

    set_path(k0, peak - config.pdp.decay_db_per_ns * rise_ns * 0.5 - 2.0);
    set_path(k_last, peak - config.pdp.decay_db_per_ns * (xed_ns - rise_ns).abs() - 1.0);
    if pdp_cfg.n_paths > 2 && k_last > k0 + 1 {
        let span = Uniform::new(k0 + 1, k_last).map_err(|e| Error::Config(e.to_string()))?;
        for _ in 0..(pdp_cfg.n_paths - 2) {
            let bin = span.sample(rng);
            let delay_from_peak = (bin as f64 - k_peak as f64).abs() * dt;
            let level = peak - config.pdp.decay_db_per_ns * delay_from_peak + gauss(2.0, rng);
            set_path(bin, level);
        }
    }
    // The strongest tap sits at the rise-time offset, strictly above the rest.
    let current_max = power
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k_peak)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    power[k_peak] = (current_max + 2.0).max(peak);

    PowerDelayProfile::new(0.0, dt * 1e-9, power)
}

/// Stratified (or plain) train/test split, deterministic given the seed.
/// With stratification the LOS:NLOS ratio carries over exactly (counts are
/// rounded per class).
pub fn split(
    samples: &[LabeledSample],
    train_fraction: f64,
    stratify: bool,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled_take = |indices: &mut Vec<usize>, fraction: f64| -> Result<usize> {
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let n_train = (fraction * indices.len() as f64).round() as usize;
        if n_train == 0 || n_train == indices.len() {
            return Err(Error::Split(format!(
                "a class with {} samples cannot be split at fraction {fraction}",
                indices.len()
            )));
        }
        Ok(n_train)
    };

    let groups: Vec<Vec<usize>> = if stratify {
        let mut los = Vec::new();
        let mut nlos = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            match s.hypothesis {
                Hypothesis::Los => los.push(i),
                Hypothesis::Nlos => nlos.push(i),
            }
        }
        vec![los, nlos]
    } else {
        vec![(0..samples.len()).collect()]
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in groups {
        if group.is_empty() {
            return Err(Error::Split("a class has no samples".into()));
        }
        let n_train = shuffled_take(&mut group, train_fraction)?;
        for (pos, &idx) in group.iter().enumerate() {
            if pos < n_train {
                train.push(samples[idx].clone());
            } else {
                test.push(samples[idx].clone());
            }
        }
    }
    Ok((train, test))
}
