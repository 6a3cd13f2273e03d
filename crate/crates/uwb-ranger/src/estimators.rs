//! The range estimators behind one uniform interface.
//!
//! Six methods are composed here: the TOA-only baseline, TOA with soft NLOS
//! mitigation, plain GPR, plain kPCA, and the two hybrids (kPCA+ and
//! kPCA+GPR) that weigh a TOA-based LOS branch against an NLOS-only-trained
//! ranger by the soft posterior from the projection classifier.
//!
//! [`TrainedModel`] bundles a fitted method with its feature scaler and
//! subset so a single `predict` call maps raw channel parameters to a
//! [`RangeEstimate`]; its JSON envelope is the on-disk model format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fit_scaler, ChannelFeatures, FeatureScaler, FeatureSubset, FeatureVector};
use crate::gpr::{fit_gpr, GprFitConfig, GprModel};
use crate::kpca::{fit_kpca, KpcaModel};
use crate::kernels::PolyKernel;
use crate::nlos::{Hypothesis, ProjectionClassifier, RiseTimeClassifier, SoftDecision};
use crate::SPEED_OF_LIGHT;

/// Estimator identity, also the CLI method name and model-file tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    ToaOnly,
    ToaMitig,
    Gpr,
    Kpca,
    KpcaPlus,
    KpcaPlusGpr,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::ToaOnly => "toa-only",
            MethodTag::ToaMitig => "toa-mitig",
            MethodTag::Gpr => "gpr",
            MethodTag::Kpca => "kpca",
            MethodTag::KpcaPlus => "kpca-plus",
            MethodTag::KpcaPlusGpr => "kpca-plus-gpr",
        }
    }

    /// Whether the method produces a LOS/NLOS decision worth scoring.
    pub fn has_identification(&self) -> bool {
        matches!(
            self,
            MethodTag::ToaMitig | MethodTag::KpcaPlus | MethodTag::KpcaPlusGpr
        )
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toa-only" => Ok(MethodTag::ToaOnly),
            "toa-mitig" => Ok(MethodTag::ToaMitig),
            "gpr" => Ok(MethodTag::Gpr),
            "kpca" => Ok(MethodTag::Kpca),
            "kpca-plus" => Ok(MethodTag::KpcaPlus),
            "kpca-plus-gpr" => Ok(MethodTag::KpcaPlusGpr),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// The universal estimator output: range mean, variance and the soft LOS
/// posterior (1.0 for methods without identification).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    pub mean_m: f64,
    pub variance_m2: f64,
    pub p_los: f64,
    pub method: MethodTag,
}

/// One labeled training measurement.
#[derive(Debug, Clone, Copy)]
pub struct TrainRow {
    pub features: ChannelFeatures,
    pub distance_m: f64,
    pub hypothesis: Hypothesis,
}

/// Mean and variance of a two-branch Gaussian mixture: the variance includes
/// the squared branch deviations from the mixture mean.
pub fn mixture_mean_variance(
    p_los: f64,
    los: (f64, f64),
    nlos: (f64, f64),
) -> (f64, f64) {
    let p_nlos = 1.0 - p_los;
    let mean = p_los * los.0 + p_nlos * nlos.0;
    let variance = p_los * ((los.0 - mean).powi(2) + los.1)
        + p_nlos * ((nlos.0 - mean).powi(2) + nlos.1);
    (mean, variance)
}

/// The naive baseline `d = c * toa`. The variance is `sigma_l^2` when a LOS
/// noise level is known, otherwise the 0 sentinel.
pub fn estimate_toa_only(toa_s: f64, sigma_l: Option<f64>) -> RangeEstimate {
    RangeEstimate {
        mean_m: SPEED_OF_LIGHT * toa_s,
        variance_m2: sigma_l.map_or(0.0, |s| s * s),
        p_los: 1.0,
        method: MethodTag::ToaOnly,
    }
}

/// TOA with soft NLOS mitigation: LOS bias, class noise levels, the
/// polynomial NLOS error model over the max excess delay, and the rise-time
/// classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationModel {
    /// Known LOS bias, meters.
    pub mu_l: f64,
    /// LOS range noise std, meters.
    pub sigma_l: f64,
    /// NLOS range noise std, meters.
    pub sigma_n: f64,
    /// NLOS error polynomial `(p2, p1, p0)`: max excess delay in ns maps to
    /// meters.
    pub poly: (f64, f64, f64),
    pub classifier: RiseTimeClassifier,
}

impl MitigationModel {
    pub fn new(
        mu_l: f64,
        sigma_l: f64,
        sigma_n: f64,
        poly: (f64, f64, f64),
        classifier: RiseTimeClassifier,
    ) -> Result<Self> {
        if !(sigma_l > 0.0) || !(sigma_n > 0.0) {
            return Err(Error::Config(format!(
                "noise stds must be positive, got ({sigma_l}, {sigma_n})"
            )));
        }
        Ok(Self {
            mu_l,
            sigma_l,
            sigma_n,
            poly,
            classifier,
        })
    }

    /// NLOS error in meters as a function of the max excess delay in ns.
    pub fn g(&self, alpha_e_ns: f64) -> f64 {
        let (p2, p1, p0) = self.poly;
        p2 * alpha_e_ns * alpha_e_ns + p1 * alpha_e_ns + p0
    }

    /// Fits all parameters from labeled training data: LOS bias and noise
    /// from LOS range residuals, the quadratic error model and NLOS noise
    /// from NLOS residuals against the max excess delay, and the exponential
    /// rise-time rates per class.
    pub fn fit(rows: &[TrainRow], prior_los: f64) -> Result<Self> {
        let los: Vec<&TrainRow> = rows
            .iter()
            .filter(|r| r.hypothesis == Hypothesis::Los)
            .collect();
        let nlos: Vec<&TrainRow> = rows
            .iter()
            .filter(|r| r.hypothesis == Hypothesis::Nlos)
            .collect();
        if los.len() < 2 {
            return Err(Error::Fit(format!(
                "mitigation fit needs at least 2 LOS samples, got {}",
                los.len()
            )));
        }
        if nlos.len() < 4 {
            return Err(Error::Fit(format!(
                "mitigation fit needs at least 4 NLOS samples, got {}",
                nlos.len()
            )));
        }

        let residual = |r: &TrainRow| SPEED_OF_LIGHT * r.features.toa_s - r.distance_m;

        let mu_l = los.iter().map(|r| residual(r)).sum::<f64>() / los.len() as f64;
        let var_l = los
            .iter()
            .map(|r| (residual(r) - mu_l).powi(2))
            .sum::<f64>()
            / (los.len() - 1) as f64;
        let sigma_l = var_l.sqrt().max(1e-6);

        // Quadratic least squares of the NLOS residual against xed (ns).
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for r in &nlos {
            let x = r.features.max_excess_delay_s * 1e9;
            let row = nalgebra::Vector3::new(x * x, x, 1.0);
            ata += row * row.transpose();
            atb += row * residual(r);
        }
        let coef = ata
            .lu()
            .solve(&atb)
            .ok_or_else(|| Error::Fit("degenerate NLOS error polynomial fit".into()))?;
        let poly = (coef[0], coef[1], coef[2]);

        let ss_res: f64 = nlos
            .iter()
            .map(|r| {
                let x = r.features.max_excess_delay_s * 1e9;
                (residual(r) - (poly.0 * x * x + poly.1 * x + poly.2)).powi(2)
            })
            .sum();
        let sigma_n = (ss_res / (nlos.len() - 3) as f64).sqrt().max(1e-6);

        let rises: Vec<f64> = rows.iter().map(|r| r.features.rise_time_s * 1e9).collect();
        let labels: Vec<Hypothesis> = rows.iter().map(|r| r.hypothesis).collect();
        let classifier = RiseTimeClassifier::fit(&rises, &labels, prior_los)?;

        MitigationModel::new(mu_l, sigma_l, sigma_n, poly, classifier)
    }

    /// Mitigated estimate with an externally supplied soft decision.
    pub fn estimate_with_decision(
        &self,
        toa_s: f64,
        alpha_e_ns: f64,
        decision: &SoftDecision,
    ) -> RangeEstimate {
        let c_tau = SPEED_OF_LIGHT * toa_s;
        let (mean, variance) = mixture_mean_variance(
            decision.p_los,
            (c_tau - self.mu_l, self.sigma_l * self.sigma_l),
            (c_tau - self.g(alpha_e_ns), self.sigma_n * self.sigma_n),
        );
        RangeEstimate {
            mean_m: mean,
            variance_m2: variance,
            p_los: decision.p_los,
            method: MethodTag::ToaMitig,
        }
    }

    /// Mitigated estimate: soft decision from the rise time, then the
    /// two-branch mixture.
    pub fn estimate(&self, toa_s: f64, rise_time_ns: f64, alpha_e_ns: f64) -> RangeEstimate {
        let decision = self.classifier.classify(rise_time_ns);
        self.estimate_with_decision(toa_s, alpha_e_ns, &decision)
    }
}

/// The NLOS-only ranger inside a hybrid estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NlosRanger {
    Kpca(KpcaModel),
    Gpr(GprModel),
}

impl NlosRanger {
    pub fn train_len(&self) -> usize {
        match self {
            NlosRanger::Kpca(m) => m.train_len(),
            NlosRanger::Gpr(m) => m.train_len(),
        }
    }
}

/// Which ranger a hybrid uses for its NLOS branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlosRangerKind {
    Kpca,
    Gpr,
}

/// A hybrid estimator: the full-data kPCA model supplies projections for the
/// classifier, the LOS branch is the bias-corrected TOA range, and the NLOS
/// branch comes from a ranger trained exclusively on NLOS samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridModel {
    pub kpca_full: KpcaModel,
    pub classifier: ProjectionClassifier,
    pub nlos_ranger: NlosRanger,
    /// Known LOS bias, meters.
    pub mu_l: f64,
    /// LOS branch noise std, meters; enters the mixture variance.
    pub sigma_l: f64,
    /// Number of NLOS training samples behind the ranger.
    pub n_nlos: usize,
}

impl HybridModel {
    pub fn method(&self) -> MethodTag {
        match self.nlos_ranger {
            NlosRanger::Kpca(_) => MethodTag::KpcaPlus,
            NlosRanger::Gpr(_) => MethodTag::KpcaPlusGpr,
        }
    }

    /// Soft decision from the leading projections of the full-data model.
    pub fn classify(&self, a: &FeatureVector) -> Result<SoftDecision> {
        let proj = self.kpca_full.project(a)?;
        self.classifier.classify(&proj)
    }

    /// Mixture estimate: LOS branch `c*toa - mu_l` with variance
    /// `sigma_l^2`, NLOS branch from the NLOS-only ranger.
    pub fn estimate(&self, a: &FeatureVector, toa_s: f64) -> Result<RangeEstimate> {
        let decision = self.classify(a)?;
        let nlos_branch = match &self.nlos_ranger {
            NlosRanger::Kpca(m) => {
                let e = m.estimate(a)?;
                (e.mean_m, e.variance_m2)
            }
            NlosRanger::Gpr(m) => {
                let p = m.predict(a)?;
                (p.mean_m, p.variance_m2)
            }
        };
        let c_tau = SPEED_OF_LIGHT * toa_s;
        let (mean, variance) = mixture_mean_variance(
            decision.p_los,
            (c_tau - self.mu_l, self.sigma_l * self.sigma_l),
            nlos_branch,
        );
        Ok(RangeEstimate {
            mean_m: mean,
            variance_m2: variance,
            p_los: decision.p_los,
            method: self.method(),
        })
    }
}

/// Hyperparameters for [`train_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Feature subset fed to the kernel methods.
    pub subset: FeatureSubset,
    /// Polynomial kernel degree c.
    pub degree: u32,
    /// Retained components M for kPCA ranging.
    pub num_components: usize,
    /// Leading components M' for NLOS identification.
    pub num_id_components: usize,
    /// Prior LOS probability.
    pub prior_los: f64,
    /// GPR hyperparameter fitting controls.
    pub gpr: GprFitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            subset: FeatureSubset::All,
            degree: 3,
            num_components: 60,
            num_id_components: 4,
            prior_los: 0.5,
            gpr: GprFitConfig::default(),
        }
    }
}

/// The method-specific pieces of a trained model.
#[derive(Debug, Clone)]
pub enum ModelKind {
    ToaOnly { sigma_l: Option<f64> },
    ToaMitig(MitigationModel),
    Gpr(GprModel),
    Kpca(KpcaModel),
    Hybrid(HybridModel),
}

/// A fitted estimator with everything needed to map raw channel features to
/// a range estimate.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub subset: FeatureSubset,
    pub scaler: Option<FeatureScaler>,
    pub kind: ModelKind,
}

impl TrainedModel {
    pub fn method(&self) -> MethodTag {
        match &self.kind {
            ModelKind::ToaOnly { .. } => MethodTag::ToaOnly,
            ModelKind::ToaMitig(_) => MethodTag::ToaMitig,
            ModelKind::Gpr(_) => MethodTag::Gpr,
            ModelKind::Kpca(_) => MethodTag::Kpca,
            ModelKind::Hybrid(h) => h.method(),
        }
    }

    /// The TOA-only baseline; needs no training data.
    pub fn toa_only() -> Self {
        Self {
            subset: FeatureSubset::All,
            scaler: None,
            kind: ModelKind::ToaOnly { sigma_l: None },
        }
    }

    fn standardized(&self, f: &ChannelFeatures) -> Result<FeatureVector> {
        let scaler = self.scaler.as_ref().ok_or_else(|| {
            Error::Input("model has no feature scaler but needs standardized inputs".into())
        })?;
        scaler.standardize_row(&self.subset.select(&f.to_raw_vector()))
    }

    /// Maps raw channel features to a range estimate.
    pub fn predict(&self, f: &ChannelFeatures) -> Result<RangeEstimate> {
        match &self.kind {
            ModelKind::ToaOnly { sigma_l } => Ok(estimate_toa_only(f.toa_s, *sigma_l)),
            ModelKind::ToaMitig(m) => Ok(m.estimate(
                f.toa_s,
                f.rise_time_s * 1e9,
                f.max_excess_delay_s * 1e9,
            )),
            ModelKind::Gpr(m) => {
                let p = m.predict(&self.standardized(f)?)?;
                Ok(RangeEstimate {
                    mean_m: p.mean_m,
                    variance_m2: p.variance_m2,
                    p_los: 1.0,
                    method: MethodTag::Gpr,
                })
            }
            ModelKind::Kpca(m) => {
                let e = m.estimate(&self.standardized(f)?)?;
                Ok(RangeEstimate {
                    mean_m: e.mean_m,
                    variance_m2: e.variance_m2,
                    p_los: 1.0,
                    method: MethodTag::Kpca,
                })
            }
            ModelKind::Hybrid(h) => h.estimate(&self.standardized(f)?, f.toa_s),
        }
    }
}

/// Precision-weighted kPCA range estimate wrapped as a [`RangeEstimate`].
pub fn estimate_kpca(model: &KpcaModel, a: &FeatureVector) -> Result<RangeEstimate> {
    let e = model.estimate(a)?;
    Ok(RangeEstimate {
        mean_m: e.mean_m,
        variance_m2: e.variance_m2,
        p_los: 1.0,
        method: MethodTag::Kpca,
    })
}

fn standardized_rows(
    rows: &[TrainRow],
    subset: FeatureSubset,
) -> Result<(FeatureScaler, Vec<FeatureVector>)> {
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| subset.select(&r.features.to_raw_vector()))
        .collect();
    let names = subset.names();
    let scaler = FeatureScaler::fit_rows(&raw, &names)?;
    let vectors = raw
        .iter()
        .map(|r| scaler.standardize_row(r))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, vectors))
}

/// Fits an estimator of the requested kind on labeled training rows.
pub fn train_model(
    method: MethodTag,
    rows: &[TrainRow],
    config: &TrainConfig,
) -> Result<TrainedModel> {
    match method {
        MethodTag::ToaOnly => Ok(TrainedModel::toa_only()),
        MethodTag::ToaMitig => {
            let model = MitigationModel::fit(rows, config.prior_los)?;
            Ok(TrainedModel {
                subset: config.subset,
                scaler: None,
                kind: ModelKind::ToaMitig(model),
            })
        }
        MethodTag::Gpr => {
            let (scaler, inputs) = standardized_rows(rows, config.subset)?;
            let targets: Vec<f64> = rows.iter().map(|r| r.distance_m).collect();
            let model = fit_gpr(&inputs, &targets, &config.gpr)?;
            Ok(TrainedModel {
                subset: config.subset,
                scaler: Some(scaler),
                kind: ModelKind::Gpr(model),
            })
        }
        MethodTag::Kpca => {
            let (scaler, inputs) = standardized_rows(rows, config.subset)?;
            let train: Vec<(FeatureVector, f64)> = inputs
                .into_iter()
                .zip(rows.iter().map(|r| r.distance_m))
                .collect();
            let kernel = PolyKernel::new(config.degree)?;
            let model = fit_kpca(&train, kernel, config.num_components)?;
            Ok(TrainedModel {
                subset: config.subset,
                scaler: Some(scaler),
                kind: ModelKind::Kpca(model),
            })
        }
        MethodTag::KpcaPlus => train_hybrid(rows, config, NlosRangerKind::Kpca),
        MethodTag::KpcaPlusGpr => train_hybrid(rows, config, NlosRangerKind::Gpr),
    }
}

fn train_hybrid(
    rows: &[TrainRow],
    config: &TrainConfig,
    ranger_kind: NlosRangerKind,
) -> Result<TrainedModel> {
    let (scaler, inputs) = standardized_rows(rows, config.subset)?;
    let kernel = PolyKernel::new(config.degree)?;

    // Full-data model: only the M' leading components are needed, for
    // classification.
    let full_train: Vec<(FeatureVector, f64)> = inputs
        .iter()
        .cloned()
        .zip(rows.iter().map(|r| r.distance_m))
        .collect();
    let kpca_full = fit_kpca(&full_train, kernel, config.num_id_components)?;

    let train_projections: Vec<crate::kpca::Projection> =
        (0..rows.len()).map(|j| kpca_full.train_projection(j)).collect();
    let labels: Vec<Hypothesis> = rows.iter().map(|r| r.hypothesis).collect();
    let classifier = ProjectionClassifier::fit(
        &train_projections,
        &labels,
        config.num_id_components,
        config.prior_los,
    )?;

    // LOS bias and noise from LOS range residuals.
    let los_residuals: Vec<f64> = rows
        .iter()
        .filter(|r| r.hypothesis == Hypothesis::Los)
        .map(|r| SPEED_OF_LIGHT * r.features.toa_s - r.distance_m)
        .collect();
    if los_residuals.len() < 2 {
        return Err(Error::Fit(
            "hybrid fit needs at least 2 LOS samples for the LOS branch".into(),
        ));
    }
    let mu_l = los_residuals.iter().sum::<f64>() / los_residuals.len() as f64;
    let sigma_l = (los_residuals
        .iter()
        .map(|r| (r - mu_l).powi(2))
        .sum::<f64>()
        / (los_residuals.len() - 1) as f64)
        .sqrt()
        .max(1e-6);

    // NLOS-only ranger.
    let nlos_pairs: Vec<(FeatureVector, f64)> = inputs
        .iter()
        .zip(rows)
        .filter(|(_, r)| r.hypothesis == Hypothesis::Nlos)
        .map(|(a, r)| (a.clone(), r.distance_m))
        .collect();
    if nlos_pairs.len() < 2 {
        return Err(Error::Fit(format!(
            "hybrid fit needs at least 2 NLOS samples, got {}",
            nlos_pairs.len()
        )));
    }
    let n_nlos = nlos_pairs.len();
    let nlos_ranger = match ranger_kind {
        NlosRangerKind::Kpca => {
            let m = config.num_components.min(n_nlos - 1);
            NlosRanger::Kpca(fit_kpca(&nlos_pairs, kernel, m)?)
        }
        NlosRangerKind::Gpr => {
            let inputs: Vec<FeatureVector> = nlos_pairs.iter().map(|(a, _)| a.clone()).collect();
            let targets: Vec<f64> = nlos_pairs.iter().map(|(_, d)| *d).collect();
            NlosRanger::Gpr(fit_gpr(&inputs, &targets, &config.gpr)?)
        }
    };

    Ok(TrainedModel {
        subset: config.subset,
        scaler: Some(scaler),
        kind: ModelKind::Hybrid(HybridModel {
            kpca_full,
            classifier,
            nlos_ranger,
            mu_l,
            sigma_l,
            n_nlos,
        }),
    })
}

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format_version: u32,
    method: MethodTag,
    subset: FeatureSubset,
    scaler: Option<FeatureScaler>,
    components: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ToaOnlyComponents {
    sigma_l: Option<f64>,
}

impl TrainedModel {
    /// Serializes to the versioned JSON envelope
    /// `{format_version, method, subset, scaler, components}`.
    pub fn to_json(&self) -> Result<String> {
        let components = match &self.kind {
            ModelKind::ToaOnly { sigma_l } => {
                serde_json::to_value(ToaOnlyComponents { sigma_l: *sigma_l })?
            }
            ModelKind::ToaMitig(m) => serde_json::to_value(m)?,
            ModelKind::Gpr(m) => serde_json::to_value(m)?,
            ModelKind::Kpca(m) => serde_json::to_value(m)?,
            ModelKind::Hybrid(m) => serde_json::to_value(m)?,
        };
        let envelope = ModelEnvelope {
            format_version: MODEL_FORMAT_VERSION,
            method: self.method(),
            subset: self.subset,
            scaler: self.scaler.clone(),
            components,
        };
        Ok(serde_json::to_string_pretty(&envelope)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envelope: ModelEnvelope = serde_json::from_str(text)?;
        if envelope.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported model format version {}",
                envelope.format_version
            )));
        }
        let kind = match envelope.method {
            MethodTag::ToaOnly => {
                let c: ToaOnlyComponents = serde_json::from_value(envelope.components)?;
                ModelKind::ToaOnly { sigma_l: c.sigma_l }
            }
            MethodTag::ToaMitig => ModelKind::ToaMitig(serde_json::from_value(envelope.components)?),
            MethodTag::Gpr => ModelKind::Gpr(serde_json::from_value(envelope.components)?),
            MethodTag::Kpca => ModelKind::Kpca(serde_json::from_value(envelope.components)?),
            MethodTag::KpcaPlus | MethodTag::KpcaPlusGpr => {
                let hybrid: HybridModel = serde_json::from_value(envelope.components)?;
                if hybrid.method() != envelope.method {
                    return Err(Error::Input(
                        "model method tag does not match its NLOS ranger".into(),
                    ));
                }
                ModelKind::Hybrid(hybrid)
            }
        };
        Ok(TrainedModel {
            subset: envelope.subset,
            scaler: envelope.scaler,
            kind,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Convenience: fits the scaler over full training rows (all 8 features)
/// and standardizes them. Used by callers that work outside
/// [`train_model`], e.g. the sweep harness.
pub fn standardize_rows_full(rows: &[TrainRow]) -> Result<(FeatureScaler, Vec<FeatureVector>)> {
    let features: Vec<ChannelFeatures> = rows.iter().map(|r| r.features).collect();
    let scaler = fit_scaler(&features)?;
    let vectors = features
        .iter()
        .map(|f| scaler.standardize_row(&f.to_raw_vector()))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, vectors))
}
