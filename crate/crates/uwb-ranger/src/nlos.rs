//! Soft LOS/NLOS identification.
//!
//! Two classifiers produce a posterior over the channel hypothesis: an
//! exponential-likelihood classifier on the rise time, and a naive-Bayes
//! classifier with per-component Gaussians on the leading kernel-PCA
//! projections. Likelihood products are accumulated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpca::Projection;

/// Channel hypothesis: direct path detectable or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Los,
    Nlos,
}

/// Normalized posterior over the two hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftDecision {
    pub p_los: f64,
    pub p_nlos: f64,
}

impl SoftDecision {
    /// Normalizes a pair of unnormalized log weights. Handles degenerate
    /// (-inf) weights from zero priors.
    pub fn from_log_weights(log_los: f64, log_nlos: f64) -> Self {
        if log_los == f64::NEG_INFINITY && log_nlos == f64::NEG_INFINITY {
            return Self { p_los: 0.5, p_nlos: 0.5 };
        }
        let m = log_los.max(log_nlos);
        let wl = (log_los - m).exp();
        let wn = (log_nlos - m).exp();
        let z = wl + wn;
        Self {
            p_los: wl / z,
            p_nlos: wn / z,
        }
    }

    /// Hard decision; the tie at 0.5 resolves to LOS.
    pub fn hard(&self) -> Hypothesis {
        if self.p_los >= 0.5 {
            Hypothesis::Los
        } else {
            Hypothesis::Nlos
        }
    }
}

fn validate_prior(prior_los: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&prior_los) {
        return Err(Error::Config(format!(
            "prior must lie in [0, 1], got {prior_los}"
        )));
    }
    Ok(())
}

/// Bayes classifier with exponential rise-time likelihoods
/// `p(rise | H) = lambda_H exp(-lambda_H rise)`, rates in 1/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiseTimeClassifier {
    pub lambda_los: f64,
    pub lambda_nlos: f64,
    pub prior_los: f64,
}

impl RiseTimeClassifier {
    pub fn new(lambda_los: f64, lambda_nlos: f64, prior_los: f64) -> Result<Self> {
        if !(lambda_los > 0.0) || !(lambda_nlos > 0.0) {
            return Err(Error::Config(format!(
                "rates must be positive, got ({lambda_los}, {lambda_nlos})"
            )));
        }
        validate_prior(prior_los)?;
        Ok(Self {
            lambda_los,
            lambda_nlos,
            prior_los,
        })
    }

    /// Maximum-likelihood exponential rates per class: `lambda = 1 / mean`.
    /// Class means are floored at 1e-3 ns so an all-zero class stays finite.
    pub fn fit(rise_times_ns: &[f64], labels: &[Hypothesis], prior_los: f64) -> Result<Self> {
        if rise_times_ns.len() != labels.len() {
            return Err(Error::Dim {
                expected: rise_times_ns.len(),
                got: labels.len(),
            });
        }
        validate_prior(prior_los)?;
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for (&t, &h) in rise_times_ns.iter().zip(labels) {
            if t < 0.0 || !t.is_finite() {
                return Err(Error::Input(format!("invalid rise time {t} ns")));
            }
            let k = usize::from(h == Hypothesis::Nlos);
            sums[k] += t;
            counts[k] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::Fit(
                "rise-time classifier needs samples from both classes".into(),
            ));
        }
        let mean_los = (sums[0] / counts[0] as f64).max(1e-3);
        let mean_nlos = (sums[1] / counts[1] as f64).max(1e-3);
        Self::new(1.0 / mean_los, 1.0 / mean_nlos, prior_los)
    }

    /// Posterior over the hypothesis given a rise time in ns.
    pub fn classify(&self, rise_time_ns: f64) -> SoftDecision {
        let log_prior_los = self.prior_los.ln();
        let log_prior_nlos = (1.0 - self.prior_los).ln();
        let ll_los = self.lambda_los.ln() - self.lambda_los * rise_time_ns + log_prior_los;
        let ll_nlos = self.lambda_nlos.ln() - self.lambda_nlos * rise_time_ns + log_prior_nlos;
        SoftDecision::from_log_weights(ll_los, ll_nlos)
    }
}

/// Per-component class-conditional Gaussian statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub mu_los: f64,
    pub sigma_los: f64,
    pub mu_nlos: f64,
    pub sigma_nlos: f64,
}

/// Naive-Bayes classifier over the first `m_prime` kernel-PCA projections,
/// each class-conditional distribution approximated as Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionClassifier {
    pub components: Vec<ComponentStats>,
    pub prior_los: f64,
}

impl ProjectionClassifier {
    /// Number of projections consumed per classification.
    pub fn m_prime(&self) -> usize {
        self.components.len()
    }

    /// Fits class-conditional sample means and standard deviations (N-1
    /// denominator) over the first `m_prime` components.
    pub fn fit(
        projections: &[Projection],
        labels: &[Hypothesis],
        m_prime: usize,
        prior_los: f64,
    ) -> Result<Self> {
        if projections.len() != labels.len() {
            return Err(Error::Dim {
                expected: projections.len(),
                got: labels.len(),
            });
        }
        validate_prior(prior_los)?;
        if m_prime == 0 {
            return Err(Error::Config("m_prime must be at least 1".into()));
        }
        if let Some(p) = projections.iter().find(|p| p.len() < m_prime) {
            return Err(Error::Dim {
                expected: m_prime,
                got: p.len(),
            });
        }
        let n_los = labels.iter().filter(|&&h| h == Hypothesis::Los).count();
        let n_nlos = labels.len() - n_los;
        if n_los < 2 || n_nlos < 2 {
            return Err(Error::Fit(format!(
                "need at least 2 samples per class, got {n_los} LOS / {n_nlos} NLOS"
            )));
        }

        let class_stats = |class: Hypothesis, i: usize| -> Result<(f64, f64)> {
            let values: Vec<f64> = projections
                .iter()
                .zip(labels)
                .filter(|(_, &h)| h == class)
                .map(|(p, _)| p.0[i])
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let sigma = var.sqrt();
            if !(sigma > 0.0) {
                return Err(Error::Fit(format!(
                    "component {i} is constant within a class"
                )));
            }
            Ok((mean, sigma))
        };

        let mut components = Vec::with_capacity(m_prime);
        for i in 0..m_prime {
            let (mu_los, sigma_los) = class_stats(Hypothesis::Los, i)?;
            let (mu_nlos, sigma_nlos) = class_stats(Hypothesis::Nlos, i)?;
            components.push(ComponentStats {
                mu_los,
                sigma_los,
                mu_nlos,
                sigma_nlos,
            });
        }
        Ok(Self {
            components,
            prior_los,
        })
    }

    /// Posterior over the hypothesis from the first `m_prime` projections.
    pub fn classify(&self, y: &Projection) -> Result<SoftDecision> {
        if y.len() < self.m_prime() {
            return Err(Error::Dim {
                expected: self.m_prime(),
                got: y.len(),
            });
        }
        let mut ll_los = self.prior_los.ln();
        let mut ll_nlos = (1.0 - self.prior_los).ln();
        for (stats, &yi) in self.components.iter().zip(&y.0) {
            ll_los += log_gaussian(yi, stats.mu_los, stats.sigma_los);
            ll_nlos += log_gaussian(yi, stats.mu_nlos, stats.sigma_nlos);
        }
        Ok(SoftDecision::from_log_weights(ll_los, ll_nlos))
    }
}

fn log_gaussian(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
}

/// Separability diagnostic `sqrt(sigma_l * sigma_n) / |mu_l - mu_n|`.
/// Coincident means give the +inf sentinel. Both sigmas must be positive.
pub fn overlap_metric(mu_l: f64, sigma_l: f64, mu_n: f64, sigma_n: f64) -> f64 {
    assert!(
        sigma_l > 0.0 && sigma_n > 0.0,
        "overlap metric needs positive sigmas"
    );
    let gap = (mu_l - mu_n).abs();
    if gap == 0.0 {
        return f64::INFINITY;
    }
    (sigma_l * sigma_n).sqrt() / gap
}

/// Fraction of hard decisions (LOS at `p_los >= 0.5`) disagreeing with the
/// labels.
pub fn misclassification_rate(decisions: &[SoftDecision], labels: &[Hypothesis]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::Input("no decisions to score".into()));
    }
    if decisions.len() != labels.len() {
        return Err(Error::Dim {
            expected: decisions.len(),
            got: labels.len(),
        });
    }
    let wrong = decisions
        .iter()
        .zip(labels)
        .filter(|(d, &h)| d.hard() != h)
        .count();
    Ok(wrong as f64 / decisions.len() as f64)
}
