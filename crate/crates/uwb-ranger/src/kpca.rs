//! Kernel principal component analysis for ranging.
//!
//! The centered polynomial-kernel Gram matrix of the training features is
//! eigendecomposed; test points are projected onto the leading components
//! with the standard out-of-sample centering; each retained component gets a
//! linear read-out `y_i = b1_i * d + b0_i + noise` fitted by least squares,
//! and the per-component Gaussians combine into a precision-weighted range
//! estimate.
//!
//! Retained eigenvectors are rescaled by `1/sqrt(eigenvalue)` so the implicit
//! feature-space axes have unit norm; with that convention the projections of
//! a degree-1 kernel coincide with standard PCA scores. The read-out
//! regression absorbs any fixed rescaling, so range estimates do not depend
//! on it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::kernels::{
    center_gram, center_test_vector, gram, CenteringStats, Kernel, PolyKernel,
};
use crate::metrics;

/// Per-component linear read-out tying a projection to distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// Slope `b1` (projection units per meter).
    pub slope: f64,
    /// Intercept `b0` (projection units).
    pub intercept: f64,
    /// Residual standard deviation (projection units, N-2 denominator).
    pub sigma_y: f64,
}

/// Projections of one point onto the retained components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection(pub Vec<f64>);

impl Projection {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Range mean and variance from the combined per-component read-outs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpcaEstimate {
    pub mean_m: f64,
    pub variance_m2: f64,
}

/// A fitted kernel-PCA ranging model.
#[derive(Debug, Clone)]
pub struct KpcaModel {
    kernel: PolyKernel,
    train_inputs: Vec<FeatureVector>,
    centering: CenteringStats,
    /// Top-M eigenvalues of the centered Gram matrix, descending.
    eigenvalues: Vec<f64>,
    /// N x M: column i is the i-th eigenvector scaled by 1/sqrt(eigenvalue).
    components: DMatrix<f64>,
    readouts: Vec<Readout>,
    /// Components with |slope| below this carry no range information and are
    /// skipped by the estimator.
    slope_tol: f64,
}

/// Combines per-component read-outs into the precision-weighted range
/// estimate: `var = 1 / sum(b1^2 / s^2)`, `mean = var * sum(b1 (y - b0) / s^2)`,
/// summing only over components with `|b1| >= slope_tol`.
pub fn combine_readouts(readouts: &[Readout], y: &[f64], slope_tol: f64) -> Result<KpcaEstimate> {
    if readouts.len() != y.len() {
        return Err(Error::Dim {
            expected: readouts.len(),
            got: y.len(),
        });
    }
    let mut precision = 0.0;
    let mut weighted = 0.0;
    let mut usable = 0usize;
    for (r, &yi) in readouts.iter().zip(y) {
        if r.slope.abs() < slope_tol {
            continue;
        }
        let s2 = r.sigma_y * r.sigma_y;
        precision += r.slope * r.slope / s2;
        weighted += r.slope * (yi - r.intercept) / s2;
        usable += 1;
    }
    if usable == 0 || !(precision > 0.0) {
        return Err(Error::Estimate(
            "no component with a usable read-out slope".into(),
        ));
    }
    metrics::add_flops(8 * usable as u64);
    let variance = 1.0 / precision;
    Ok(KpcaEstimate {
        mean_m: variance * weighted,
        variance_m2: variance,
    })
}

/// Fits kernel PCA with `m` retained components plus the per-component
/// read-outs, over `(feature vector, distance)` training pairs.
pub fn fit_kpca(
    train: &[(FeatureVector, f64)],
    kernel: PolyKernel,
    m: usize,
) -> Result<KpcaModel> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "kPCA needs at least 2 training samples, got {n}"
        )));
    }
    if m < 1 {
        return Err(Error::Input("must retain at least one component".into()));
    }
    if m > n {
        return Err(Error::Input(format!(
            "cannot retain {m} components from {n} samples"
        )));
    }
    let points: Vec<FeatureVector> = train.iter().map(|(a, _)| a.clone()).collect();
    let distances: Vec<f64> = train.iter().map(|(_, d)| *d).collect();

    let k = gram(&kernel, &points)?;
    let centering = CenteringStats::from_gram(&k);
    let eig = crate::kernels::sym_eig(&center_gram(&k))?;
    let rank = eig.numerical_rank();
    if m > rank {
        return Err(Error::Rank {
            requested: m,
            rank,
        });
    }

    let mut components = DMatrix::zeros(n, m);
    for i in 0..m {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for j in 0..n {
            components[(j, i)] = eig.eigenvectors[(j, i)] * scale;
        }
    }

    // Training projections come free from the eigendecomposition:
    // column i of (centered K) * components = sqrt(eigenvalue_i) * v_i.
    let mut train_proj = DMatrix::zeros(n, m);
    for i in 0..m {
        let scale = eig.eigenvalues[i].sqrt();
        for j in 0..n {
            train_proj[(j, i)] = eig.eigenvectors[(j, i)] * scale;
        }
    }

    let d_mean = distances.iter().sum::<f64>() / n as f64;
    let d_ss: f64 = distances.iter().map(|d| (d - d_mean) * (d - d_mean)).sum();
    if d_ss <= 0.0 {
        return Err(Error::Fit(
            "all training distances are equal; read-out regression is degenerate".into(),
        ));
    }
    let d_std = (d_ss / (n as f64 - 1.0)).sqrt();
    let slope_tol = 1e-8 * d_std;

    let mut readouts = Vec::with_capacity(m);
    for i in 0..m {
        let y_mean = train_proj.column(i).iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        for (j, d) in distances.iter().enumerate() {
            cov += (d - d_mean) * (train_proj[(j, i)] - y_mean);
        }
        let slope = cov / d_ss;
        let intercept = y_mean - slope * d_mean;
        let ss_res: f64 = distances
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let r = train_proj[(j, i)] - slope * d - intercept;
                r * r
            })
            .sum();
        let sigma_y = if n > 2 {
            (ss_res / (n as f64 - 2.0)).sqrt()
        } else {
            0.0
        };
        // Numerical floor keeps an exact fit usable in the precision weights.
        let sigma_y = sigma_y.max(1e-9 * slope.abs().max(1e-12) * d_std);
        readouts.push(Readout {
            slope,
            intercept,
            sigma_y,
        });
    }

    Ok(KpcaModel {
        kernel,
        train_inputs: points,
        centering,
        eigenvalues: eig.eigenvalues[..m].to_vec(),
        components,
        readouts,
        slope_tol,
    })
}

impl KpcaModel {
    pub fn kernel(&self) -> PolyKernel {
        self.kernel
    }

    pub fn train_len(&self) -> usize {
        self.train_inputs.len()
    }

    /// Retained component count M.
    pub fn num_components(&self) -> usize {
        self.readouts.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn readouts(&self) -> &[Readout] {
        &self.readouts
    }

    pub fn slope_tol(&self) -> f64 {
        self.slope_tol
    }

    /// Projects a point onto the retained components: evaluates the kernel
    /// against all N training inputs, centers the kernel vector with the
    /// training statistics and applies the M weighted sums.
    pub fn project(&self, a: &FeatureVector) -> Result<Projection> {
        let n = self.train_inputs.len();
        let mut k_test = Vec::with_capacity(n);
        for x in &self.train_inputs {
            k_test.push(self.kernel.eval(a, x)?);
        }
        let centered = center_test_vector(&k_test, &self.centering)?;
        let m = self.num_components();
        let mut y = vec![0.0; m];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = centered
                .iter()
                .enumerate()
                .map(|(j, &kj)| kj * self.components[(j, i)])
                .sum();
        }
        metrics::add_flops(2 * (n * m) as u64);
        Ok(Projection(y))
    }

    /// Projects the j-th training point without kernel evaluations (training
    /// projections are determined by the eigendecomposition).
    pub fn train_projection(&self, j: usize) -> Projection {
        let m = self.num_components();
        let mut y = vec![0.0; m];
        for (i, yi) in y.iter_mut().enumerate() {
            // components stores v/sqrt(lambda); the projection is sqrt(lambda)*v.
            *yi = self.components[(j, i)] * self.eigenvalues[i];
        }
        Projection(y)
    }

    /// Precision-weighted range estimate from the projections of `a`.
    pub fn estimate(&self, a: &FeatureVector) -> Result<KpcaEstimate> {
        let proj = self.project(a)?;
        combine_readouts(&self.readouts, proj.as_slice(), self.slope_tol)
    }
}

#[derive(Serialize, Deserialize)]
struct KpcaModelJson {
    kernel: PolyKernel,
    train_inputs: Vec<Vec<f64>>,
    centering: CenteringStats,
    eigenvalues: Vec<f64>,
    components: Vec<Vec<f64>>,
    readouts: Vec<Readout>,
    slope_tol: f64,
}

impl Serialize for KpcaModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.num_components();
        let n = self.train_inputs.len();
        KpcaModelJson {
            kernel: self.kernel,
            train_inputs: self.train_inputs.iter().map(|v| v.0.clone()).collect(),
            centering: self.centering.clone(),
            eigenvalues: self.eigenvalues.clone(),
            components: (0..m)
                .map(|i| (0..n).map(|j| self.components[(j, i)]).collect())
                .collect(),
            readouts: self.readouts.clone(),
            slope_tol: self.slope_tol,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KpcaModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = KpcaModelJson::deserialize(deserializer)?;
        let n = json.train_inputs.len();
        let m = json.eigenvalues.len();
        if json.components.len() != m
            || json.components.iter().any(|c| c.len() != n)
            || json.readouts.len() != m
            || json.centering.col_means.len() != n
        {
            return Err(D::Error::custom("inconsistent kPCA model dimensions"));
        }
        let mut components = DMatrix::zeros(n, m);
        for (i, col) in json.components.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                components[(j, i)] = v;
            }
        }
        Ok(KpcaModel {
            kernel: json.kernel,
            train_inputs: json.train_inputs.into_iter().map(FeatureVector).collect(),
            centering: json.centering,
            eigenvalues: json.eigenvalues,
            components,
            readouts: json.readouts,
            slope_tol: json.slope_tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec())
    }

    fn pseudo_uniform(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_train(seed: u64, n: usize, dim: usize) -> Vec<(FeatureVector, f64)> {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..dim).map(|_| pseudo_uniform(&mut s) * 4.0 - 2.0).collect();
                let d = 5.0 + a.iter().sum::<f64>() + pseudo_uniform(&mut s);
                (fv(&a), d)
            })
            .collect()
    }

    #[test]
    fn collinear_inputs_exact_linear_recovery() {
        // 1-D inputs, d an exact linear function of the input, degree-1 kernel.
        let train: Vec<(FeatureVector, f64)> = [(-1.0f64, 3.0f64), (0.0, 5.0), (1.0, 7.0)]
            .iter()
            .map(|&(x, d)| (fv(&[x]), d))
            .collect();
        let model = fit_kpca(&train, PolyKernel::new(1).unwrap(), 1).unwrap();
        for (a, d) in &train {
            let est = model.estimate(a).unwrap();
            assert!((est.mean_m - d).abs() < 1e-8, "{} vs {d}", est.mean_m);
        }
        // Projections are the centered inputs up to a common scale.
        let p: Vec<f64> = (0..3).map(|j| model.train_projection(j).0[0]).collect();
        let scale = p[2] - p[1];
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(p[0], -scale, epsilon = 1e-9);
    }

    #[test]
    fn project_matches_training_projection() {
        let train = random_train(3, 12, 3);
        let model = fit_kpca(&train, PolyKernel::new(3).unwrap(), 6).unwrap();
        for (j, (a, _)) in train.iter().enumerate() {
            let out = model.project(a).unwrap();
            let expect = model.train_projection(j);
            for (x, e) in out.as_slice().iter().zip(expect.as_slice()) {
                assert!((x - e).abs() < 1e-8, "{x} vs {e}");
            }
        }
    }

    #[test]
    fn training_projections_have_zero_mean() {
        let train = random_train(5, 10, 2);
        let model = fit_kpca(&train, PolyKernel::new(2).unwrap(), 5).unwrap();
        for i in 0..model.num_components() {
            let mean: f64 = (0..train.len())
                .map(|j| model.train_projection(j).0[i])
                .sum::<f64>()
                / train.len() as f64;
            assert!(mean.abs() < 1e-9, "component {i} mean {mean}");
        }
    }

    #[test]
    fn training_projections_are_uncorrelated() {
        let train = random_train(9, 14, 3);
        let m = 7;
        let model = fit_kpca(&train, PolyKernel::new(2).unwrap(), m).unwrap();
        let n = train.len();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..n).map(|j| model.train_projection(j).0[i]).collect())
            .collect();
        let mut diag_scale = 0.0f64;
        for col in &cols {
            diag_scale = diag_scale.max(col.iter().map(|x| x * x).sum::<f64>());
        }
        for i in 0..m {
            for k in (i + 1)..m {
                let dot: f64 = cols[i].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                assert!(
                    dot.abs() < 1e-8 * diag_scale,
                    "components {i},{k} correlated: {dot}"
                );
            }
        }
    }

    /// Explicit PCA scores in input space: center rows, eigendecompose the
    /// scatter matrix, project onto unit eigenvectors.
    fn explicit_pca_scores(rows: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
        let n = rows.len();
        let dim = rows[0].len();
        let mut means = vec![0.0; dim];
        for r in rows {
            for (mu, v) in means.iter_mut().zip(r) {
                *mu += v / n as f64;
            }
        }
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&means).map(|(v, mu)| v - mu).collect())
            .collect();
        let mut scatter = DMatrix::<f64>::zeros(dim, dim);
        for r in &centered {
            for i in 0..dim {
                for j in 0..dim {
                    scatter[(i, j)] += r[i] * r[j];
                }
            }
        }
        let eig = scatter.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        centered
            .iter()
            .map(|r| {
                order
                    .iter()
                    .take(m)
                    .map(|&c| (0..dim).map(|i| r[i] * eig.eigenvectors[(i, c)]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn degree_one_kernel_reproduces_standard_pca() {
        let train = random_train(17, 9, 3);
        let m = 3;
        let model = fit_kpca(&train, PolyKernel::new(1).unwrap(), m).unwrap();
        let rows: Vec<Vec<f64>> = train.iter().map(|(a, _)| a.0.clone()).collect();
        let pca = explicit_pca_scores(&rows, m);
        for i in 0..m {
            let ours: Vec<f64> = (0..train.len())
                .map(|j| model.train_projection(j).0[i])
                .collect();
            let theirs: Vec<f64> = pca.iter().map(|r| r[i]).collect();
            let same: f64 = ours.iter().zip(&theirs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let flipped: f64 =
                ours.iter().zip(&theirs).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            assert!(
                same.min(flipped) < 1e-8,
                "component {i}: |diff| {same}, |sum| {flipped}"
            );
        }
    }

    #[test]
    fn combine_readouts_hand_example() {
        let readouts = [
            Readout { slope: 1.0, intercept: 0.0, sigma_y: 1.0 },
            Readout { slope: 2.0, intercept: 0.0, sigma_y: 1.0 },
        ];
        let est = combine_readouts(&readouts, &[1.0, 2.0], 0.0).unwrap();
        assert_relative_eq!(est.mean_m, 1.0, epsilon = 1e-15);
        assert_relative_eq!(est.variance_m2, 0.2, epsilon = 1e-15);

        // Single identity read-out returns the projection itself.
        let est = combine_readouts(&readouts[..1], &[3.7], 0.0).unwrap();
        assert_relative_eq!(est.mean_m, 3.7, epsilon = 1e-15);
        assert_relative_eq!(est.variance_m2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_slope_components_contribute_nothing() {
        let readouts = [
            Readout { slope: 1.5, intercept: 0.2, sigma_y: 0.8 },
            Readout { slope: 0.0, intercept: 9.9, sigma_y: 1.0 },
        ];
        let with = combine_readouts(&readouts, &[2.0, 123.0], 1e-8).unwrap();
        let without = combine_readouts(&readouts[..1], &[2.0], 1e-8).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn variance_shrinks_with_additional_usable_component() {
        let mut readouts = vec![Readout { slope: 1.0, intercept: 0.0, sigma_y: 1.0 }];
        let base = combine_readouts(&readouts, &[1.0], 0.0).unwrap();
        readouts.push(Readout { slope: 0.5, intercept: 0.1, sigma_y: 2.0 });
        let more = combine_readouts(&readouts, &[1.0, 0.7], 0.0).unwrap();
        assert!(more.variance_m2 < base.variance_m2);
    }

    #[test]
    fn estimates_invariant_to_component_rescaling() {
        // Rescaling a projection axis rescales (slope, intercept, sigma_y, y)
        // together; the combined estimate must not move.
        let readouts = [
            Readout { slope: 1.3, intercept: -0.4, sigma_y: 0.9 },
            Readout { slope: -0.7, intercept: 0.2, sigma_y: 1.7 },
        ];
        let y = [0.8, -1.1];
        let base = combine_readouts(&readouts, &y, 0.0).unwrap();
        let gamma = 37.5;
        let scaled: Vec<Readout> = readouts
            .iter()
            .map(|r| Readout {
                slope: r.slope * gamma,
                intercept: r.intercept * gamma,
                sigma_y: r.sigma_y * gamma,
            })
            .collect();
        let ys: Vec<f64> = y.iter().map(|v| v * gamma).collect();
        let est = combine_readouts(&scaled, &ys, 0.0).unwrap();
        assert_relative_eq!(est.mean_m, base.mean_m, epsilon = 1e-12);
        assert_relative_eq!(est.variance_m2, base.variance_m2, epsilon = 1e-12);
    }

    #[test]
    fn no_usable_component_is_an_error() {
        let readouts = [Readout { slope: 1e-12, intercept: 0.0, sigma_y: 1.0 }];
        assert!(matches!(
            combine_readouts(&readouts, &[1.0], 1e-8),
            Err(Error::Estimate(_))
        ));
    }

    #[test]
    fn rank_error_when_m_exceeds_numerical_rank() {
        // 3 samples -> centered Gram rank <= 2.
        let train = random_train(23, 3, 2);
        let err = fit_kpca(&train, PolyKernel::new(1).unwrap(), 3).unwrap_err();
        assert!(matches!(err, Error::Rank { requested: 3, rank: 2 }));
    }

    #[test]
    fn equal_distances_cannot_be_fit() {
        let train: Vec<(FeatureVector, f64)> =
            (0..4).map(|i| (fv(&[i as f64]), 7.0)).collect();
        let err = fit_kpca(&train, PolyKernel::new(1).unwrap(), 1).unwrap_err();
        assert!(matches!(err, Error::Fit(_)));
    }

    #[test]
    fn serialization_roundtrip_preserves_estimates() {
        let train = random_train(29, 10, 3);
        let model = fit_kpca(&train, PolyKernel::new(3).unwrap(), 5).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let restored: KpcaModel = serde_json::from_str(&json).unwrap();
        let mut s = 31u64;
        for _ in 0..8 {
            let q = fv(&[
                pseudo_uniform(&mut s) * 4.0 - 2.0,
                pseudo_uniform(&mut s) * 4.0 - 2.0,
                pseudo_uniform(&mut s) * 4.0 - 2.0,
            ]);
            let a = model.estimate(&q).unwrap();
            let b = restored.estimate(&q).unwrap();
            assert_relative_eq!(a.mean_m, b.mean_m, epsilon = 1e-12);
            assert_relative_eq!(a.variance_m2, b.variance_m2, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_costs_n_kernel_evaluations() {
        let train = random_train(37, 15, 2);
        let model = fit_kpca(&train, PolyKernel::new(3).unwrap(), 4).unwrap();
        crate::metrics::reset();
        model.project(&fv(&[0.3, -0.4])).unwrap();
        assert_eq!(crate::metrics::kernel_evals(), 15);
    }
}
