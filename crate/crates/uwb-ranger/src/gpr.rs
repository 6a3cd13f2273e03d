//! Gaussian process regression from standardized channel features to range.
//!
//! A zero-mean GP prior with the squared-exponential + linear kernel is
//! conditioned directly on training distances; hyperparameters are estimated
//! by maximizing the log-marginal likelihood with a multi-start projected
//! gradient ascent in log-space. The fitted model stores the Cholesky factor
//! of `K + sigma_w^2 I` and the weight vector `(K + sigma_w^2 I)^-1 d`, so a
//! posterior mean costs O(N) and a posterior variance O(N^2) per query.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::kernels::{gram, Kernel, SqExpLinKernel};
use crate::metrics;

/// Box constraints for the hyperparameter search (raw scale).
pub const THETA_BOUNDS: (f64, f64) = (1e-6, 1e6);
/// Box constraints for the noise standard deviation (raw scale).
pub const SIGMA_BOUNDS: (f64, f64) = (1e-3, 1e2);

/// Controls for [`fit_gpr`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprFitConfig {
    /// Number of optimizer restarts; the best converged run wins.
    pub restarts: usize,
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Convergence threshold on the projected gradient norm (log-space).
    pub tol: f64,
    /// Seed for the restart initializations.
    pub seed: u64,
    /// When set and the training set is larger, hyperparameters are
    /// estimated on a seeded random subset of this size; the returned model
    /// still conditions on the full training set. Keeps the O(N^3)
    /// optimization loop tractable for large N.
    pub fit_subsample: Option<usize>,
}

impl Default for GprFitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 200,
            tol: 1e-2,
            seed: 0,
            fit_subsample: None,
        }
    }
}

/// A fitted GP regression model.
#[derive(Debug, Clone)]
pub struct GprModel {
    kernel: SqExpLinKernel,
    sigma_omega: f64,
    train_inputs: Vec<FeatureVector>,
    train_targets: Vec<f64>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    fit_grad_norm: Option<f64>,
}

/// Posterior mean and variance of the range at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GprPrediction {
    pub mean_m: f64,
    pub variance_m2: f64,
}

fn validate_training_set(inputs: &[FeatureVector], targets: &[f64]) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::Input("GPR training set is empty".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Dim {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let dim = inputs[0].dim();
    if inputs.iter().any(|v| v.dim() != dim) {
        return Err(Error::Input("ragged training inputs".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("non-finite training target".into()));
    }
    Ok(dim)
}

/// Cholesky with escalating jitter: starts exact, then adds
/// `1e-10 * trace/N` scaled up by 10 per attempt, capped at `1e-4 * trace/N`.
fn cholesky_with_jitter(c: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = c.nrows();
    let base = (c.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let attempt = if jitter == 0.0 {
            c.clone()
        } else {
            c + DMatrix::identity(n, n) * jitter
        };
        if let Some(chol) = nalgebra::Cholesky::new(attempt) {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 { 1e-10 * base } else { jitter * 10.0 };
        if jitter > 1e-4 * base {
            return Err(Error::Numerical(
                "Cholesky failed after jitter escalation".into(),
            ));
        }
    }
}

fn covariance(
    kernel: &SqExpLinKernel,
    sigma_omega: f64,
    inputs: &[FeatureVector],
) -> Result<DMatrix<f64>> {
    let mut c = gram(kernel, inputs)?.as_matrix().clone();
    let s2 = sigma_omega * sigma_omega;
    for i in 0..c.nrows() {
        c[(i, i)] += s2;
    }
    Ok(c)
}

/// Log-marginal likelihood `-d'C^-1 d/2 - log|C|/2 - N log(2 pi)/2` with
/// `C = K(theta) + sigma_w^2 I`.
pub fn log_marginal_likelihood(
    kernel: &SqExpLinKernel,
    sigma_omega: f64,
    inputs: &[FeatureVector],
    targets: &[f64],
) -> Result<f64> {
    validate_training_set(inputs, targets)?;
    if !(sigma_omega > 0.0) {
        return Err(Error::Config(format!(
            "sigma_omega must be positive, got {sigma_omega}"
        )));
    }
    let n = inputs.len();
    let c = covariance(kernel, sigma_omega, inputs)?;
    let chol = cholesky_with_jitter(&c)?;
    let d = DVector::from_column_slice(targets);
    let alpha = chol.solve(&d);
    let log_det_half: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum();
    Ok(-0.5 * d.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Analytic gradient of the log-marginal likelihood with respect to
/// `(theta0, theta1, theta2, sigma_omega)`:
/// `tr((alpha alpha' - C^-1) dC/dpsi) / 2` per hyperparameter.
pub fn lml_gradient(
    kernel: &SqExpLinKernel,
    sigma_omega: f64,
    inputs: &[FeatureVector],
    targets: &[f64],
) -> Result<[f64; 4]> {
    validate_training_set(inputs, targets)?;
    if !(sigma_omega > 0.0) {
        return Err(Error::Config(format!(
            "sigma_omega must be positive, got {sigma_omega}"
        )));
    }
    let n = inputs.len();
    let c = covariance(kernel, sigma_omega, inputs)?;
    let chol = cholesky_with_jitter(&c)?;
    let d = DVector::from_column_slice(targets);
    let alpha = chol.solve(&d);
    let c_inv = chol.inverse();

    // Elementwise pieces of dC/dpsi.
    let mut sqdist = DMatrix::zeros(n, n);
    let mut lin = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s = inputs[i].squared_distance(&inputs[j]);
            let l = inputs[i].dot(&inputs[j]);
            sqdist[(i, j)] = s;
            sqdist[(j, i)] = s;
            lin[(i, j)] = l;
            lin[(j, i)] = l;
        }
    }
    let expm = sqdist.map(|s| (-kernel.theta1 * s).exp());

    // tr((aa' - Cinv) D) accumulated elementwise; all matrices symmetric.
    let mut grad = [0.0f64; 4];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - c_inv[(i, j)];
            let e = expm[(i, j)];
            grad[0] += w * e;
            grad[1] += w * (-kernel.theta0 * sqdist[(i, j)] * e);
            grad[2] += w * lin[(i, j)];
            if i == j {
                grad[3] += w * 2.0 * sigma_omega;
            }
        }
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    Ok(grad)
}

const LOG_LO: [f64; 4] = [
    // ln of lower bounds for (theta0, theta1, theta2, sigma_omega)
    -13.815510557964274, // ln 1e-6
    -13.815510557964274,
    -13.815510557964274,
    -6.907755278982137, // ln 1e-3
];
const LOG_HI: [f64; 4] = [
    13.815510557964274, // ln 1e6
    13.815510557964274,
    13.815510557964274,
    4.605170185988092, // ln 1e2
];

fn clamp_log(x: &mut [f64; 4]) {
    for k in 0..4 {
        x[k] = x[k].clamp(LOG_LO[k], LOG_HI[k]);
    }
}

fn params_from_log(x: &[f64; 4]) -> (SqExpLinKernel, f64) {
    (
        SqExpLinKernel {
            theta0: x[0].exp(),
            theta1: x[1].exp(),
            theta2: x[2].exp(),
        },
        x[3].exp(),
    )
}

/// LML and its log-space gradient at log-parameters `x`.
fn eval_log(x: &[f64; 4], inputs: &[FeatureVector], targets: &[f64]) -> Result<(f64, [f64; 4])> {
    let (kernel, sigma) = params_from_log(x);
    let value = log_marginal_likelihood(&kernel, sigma, inputs, targets)?;
    let raw = lml_gradient(&kernel, sigma, inputs, targets)?;
    // Chain rule: d/d ln(p) = p * d/dp.
    let grad = [
        raw[0] * kernel.theta0,
        raw[1] * kernel.theta1,
        raw[2] * kernel.theta2,
        raw[3] * sigma,
    ];
    Ok((value, grad))
}

/// Gradient with the components that push outside the active box zeroed out.
fn project_gradient(x: &[f64; 4], g: &[f64; 4]) -> [f64; 4] {
    let mut pg = *g;
    for k in 0..4 {
        let at_lo = x[k] <= LOG_LO[k] + 1e-12;
        let at_hi = x[k] >= LOG_HI[k] - 1e-12;
        if (at_lo && pg[k] < 0.0) || (at_hi && pg[k] > 0.0) {
            pg[k] = 0.0;
        }
    }
    pg
}

fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct RestartResult {
    log_params: [f64; 4],
    lml: f64,
    grad_norm: f64,
}

/// Projected gradient ascent with a Barzilai-Borwein step and Armijo
/// backtracking. Returns the final point when the projected gradient norm
/// reaches `tol`, `None` when it stalls or errors out.
fn optimize_restart(
    init: [f64; 4],
    inputs: &[FeatureVector],
    targets: &[f64],
    max_iters: usize,
    tol: f64,
) -> Option<RestartResult> {
    let mut x = init;
    clamp_log(&mut x);
    let (mut fx, mut gx) = eval_log(&x, inputs, targets).ok()?;
    let mut step = 0.05f64;

    for _ in 0..max_iters {
        let pg = project_gradient(&x, &gx);
        let pg_norm = norm4(&pg);
        if pg_norm < tol {
            return Some(RestartResult {
                log_params: x,
                lml: fx,
                grad_norm: pg_norm,
            });
        }

        let mut t = step;
        let mut accepted = None;
        while t > 1e-14 {
            let mut xn = x;
            for k in 0..4 {
                xn[k] += t * pg[k];
            }
            clamp_log(&mut xn);
            let moved: f64 = (0..4).map(|k| (xn[k] - x[k]).powi(2)).sum();
            if moved == 0.0 {
                break;
            }
            if let Ok((fnew, gnew)) = eval_log(&xn, inputs, targets) {
                let ascent: f64 = (0..4).map(|k| (xn[k] - x[k]) * pg[k]).sum();
                if fnew.is_finite() && fnew > fx + 1e-4 * ascent.max(0.0) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((xn, fnew, gnew)) = accepted else {
            // Stalled: report convergence only if already below tolerance.
            let pg_norm = norm4(&project_gradient(&x, &gx));
            return (pg_norm < tol).then_some(RestartResult {
                log_params: x,
                lml: fx,
                grad_norm: pg_norm,
            });
        };

        // Barzilai-Borwein step estimate for the next iteration.
        let mut ss = 0.0;
        let mut sy = 0.0;
        for k in 0..4 {
            let s = xn[k] - x[k];
            let y = gnew[k] - gx[k];
            ss += s * s;
            sy += s * y;
        }
        step = if sy.abs() > 1e-18 {
            (ss / sy.abs()).clamp(1e-8, 1e2)
        } else {
            (t * 2.0).clamp(1e-8, 1e2)
        };

        x = xn;
        fx = fnew;
        gx = gnew;
    }

    let pg_norm = norm4(&project_gradient(&x, &gx));
    (pg_norm < tol).then_some(RestartResult {
        log_params: x,
        lml: fx,
        grad_norm: pg_norm,
    })
}

fn heuristic_init(inputs: &[FeatureVector], targets: &[f64]) -> [f64; 4] {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n.max(2.0);
    let var = var.max(1e-6);
    let mut msd = 0.0;
    let mut cnt = 0.0;
    for (i, a) in inputs.iter().enumerate().take(20) {
        for b in inputs.iter().skip(i + 1).take(20) {
            msd += a.squared_distance(b);
            cnt += 1.0;
        }
    }
    let theta1 = if cnt > 0.0 && msd > 0.0 { cnt / (2.0 * msd) } else { 0.5 };
    [
        var.ln(),
        theta1.clamp(1e-4, 1e2).ln(),
        (var / inputs[0].dim() as f64).max(1e-4).ln(),
        (0.3 * var.sqrt()).clamp(1e-2, 10.0).ln(),
    ]
}

/// Fits hyperparameters by maximizing the log-marginal likelihood and returns
/// a model conditioned on the full training set, with the inverse-covariance
/// factor and weight vector precomputed.
pub fn fit_gpr(
    inputs: &[FeatureVector],
    targets: &[f64],
    config: &GprFitConfig,
) -> Result<GprModel> {
    validate_training_set(inputs, targets)?;
    if inputs.len() < 2 {
        return Err(Error::Input("GPR fitting needs at least 2 samples".into()));
    }

    // Optional subsampling for the O(N^3) optimization loop.
    let (fit_inputs, fit_targets): (Vec<FeatureVector>, Vec<f64>) = match config.fit_subsample {
        Some(m) if inputs.len() > m && m >= 2 => {
            let mut idx: Vec<usize> = (0..inputs.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5a17);
            for i in (1..idx.len()).rev() {
                let j = rng.random_range(0..=i);
                idx.swap(i, j);
            }
            idx.truncate(m);
            (
                idx.iter().map(|&i| inputs[i].clone()).collect(),
                idx.iter().map(|&i| targets[i]).collect(),
            )
        }
        _ => (inputs.to_vec(), targets.to_vec()),
    };

    let mut best: Option<RestartResult> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for r in 0..config.restarts.max(1) {
        let init = if r == 0 {
            heuristic_init(&fit_inputs, &fit_targets)
        } else {
            [
                rng.random_range(-4.6f64..6.9),  // theta0 in [1e-2, 1e3]
                rng.random_range(-6.9f64..2.3),  // theta1 in [1e-3, 1e1]
                rng.random_range(-6.9f64..4.6),  // theta2 in [1e-3, 1e2]
                rng.random_range(-4.6f64..2.3),  // sigma in [1e-2, 1e1]
            ]
        };
        if let Some(res) =
            optimize_restart(init, &fit_inputs, &fit_targets, config.max_iters, config.tol)
        {
            if best.as_ref().is_none_or(|b| res.lml > b.lml) {
                best = Some(res);
            }
        }
    }

    let best = best.ok_or_else(|| {
        Error::Fit(format!(
            "no restart converged to gradient norm < {} in {} iterations",
            config.tol, config.max_iters
        ))
    })?;
    let (kernel, sigma) = params_from_log(&best.log_params);
    let mut model = GprModel::new(kernel, sigma, inputs.to_vec(), targets.to_vec())?;
    model.fit_grad_norm = Some(best.grad_norm);
    Ok(model)
}

impl GprModel {
    /// Builds a model with given hyperparameters, precomputing the Cholesky
    /// factor of `K + sigma_w^2 I` and the weight vector.
    pub fn new(
        kernel: SqExpLinKernel,
        sigma_omega: f64,
        train_inputs: Vec<FeatureVector>,
        train_targets: Vec<f64>,
    ) -> Result<Self> {
        validate_training_set(&train_inputs, &train_targets)?;
        if !(sigma_omega > 0.0) || !sigma_omega.is_finite() {
            return Err(Error::Config(format!(
                "sigma_omega must be positive and finite, got {sigma_omega}"
            )));
        }
        let c = covariance(&kernel, sigma_omega, &train_inputs)?;
        let chol = cholesky_with_jitter(&c)?;
        let d = DVector::from_column_slice(&train_targets);
        let alpha = chol.solve(&d);
        Ok(Self {
            kernel,
            sigma_omega,
            train_inputs,
            train_targets,
            chol_l: chol.unpack(),
            alpha,
            fit_grad_norm: None,
        })
    }

    pub fn kernel(&self) -> &SqExpLinKernel {
        &self.kernel
    }

    pub fn sigma_omega(&self) -> f64 {
        self.sigma_omega
    }

    pub fn train_len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn train_inputs(&self) -> &[FeatureVector] {
        &self.train_inputs
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    /// Projected gradient norm achieved by [`fit_gpr`]; `None` for models
    /// built directly from hyperparameters.
    pub fn fit_grad_norm(&self) -> Option<f64> {
        self.fit_grad_norm
    }

    /// Posterior mean and variance at a query point. O(N) kernel
    /// evaluations for the mean, one O(N^2) triangular solve for the
    /// variance.
    pub fn predict(&self, a: &FeatureVector) -> Result<GprPrediction> {
        let n = self.train_inputs.len();
        let mut k = DVector::zeros(n);
        for (i, x) in self.train_inputs.iter().enumerate() {
            k[i] = self.kernel.eval(a, x)?;
        }
        let mean = k.dot(&self.alpha);
        metrics::add_flops(2 * n as u64);

        let mut z = k;
        self.chol_l.solve_lower_triangular_mut(&mut z);
        metrics::add_flops((n * n) as u64 + 2 * n as u64 + 3);
        let prior = self.sigma_omega * self.sigma_omega + self.kernel.self_eval(a);
        let variance = (prior - z.norm_squared()).max(1e-300);
        Ok(GprPrediction {
            mean_m: mean,
            variance_m2: variance,
        })
    }
}

/// Serialized form: hyperparameters and training data only; the factorization
/// is recomputed on load.
#[derive(Serialize, Deserialize)]
struct GprModelJson {
    kernel: SqExpLinKernel,
    sigma_omega: f64,
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vec<f64>,
}

impl Serialize for GprModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GprModelJson {
            kernel: self.kernel,
            sigma_omega: self.sigma_omega,
            train_inputs: self.train_inputs.iter().map(|v| v.0.clone()).collect(),
            train_targets: self.train_targets.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GprModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = GprModelJson::deserialize(deserializer)?;
        GprModel::new(
            json.kernel,
            json.sigma_omega,
            json.train_inputs.into_iter().map(FeatureVector).collect(),
            json.train_targets,
        )
        .map_err(serde::de::Error::custom)
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
        // xorshift64*, mapped to [0, 1)
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_problem(seed: u64, n: usize, dim: usize) -> (Vec<FeatureVector>, Vec<f64>) {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let inputs = (0..n)
            .map(|_| fv(&(0..dim).map(|_| pseudo_uniform(&mut s) * 4.0 - 2.0).collect::<Vec<_>>()))
            .collect();
        let targets = (0..n).map(|_| pseudo_uniform(&mut s) * 10.0).collect();
        (inputs, targets)
    }

    #[test]
    fn prior_only_lml_for_single_point() {
        let kernel = SqExpLinKernel::new(0.0, 0.0, 0.0).unwrap();
        let sigma = 0.7;
        let d1 = 1.9;
        let lml =
            log_marginal_likelihood(&kernel, sigma, &[fv(&[0.3, -0.1])], &[d1]).unwrap();
        let expect = -0.5 * (d1 * d1) / (sigma * sigma)
            - 0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
        assert_relative_eq!(lml, expect, max_relative = 1e-12);

        // sigma_omega = 0 is rejected.
        assert!(log_marginal_likelihood(&kernel, 0.0, &[fv(&[0.0])], &[1.0]).is_err());
    }

    #[test]
    fn single_point_zero_target_lml() {
        let kernel = SqExpLinKernel::new(2.0, 0.5, 0.3).unwrap();
        let a = fv(&[1.0, -2.0]);
        let sigma = 0.4;
        let kaa = kernel.self_eval(&a);
        let lml = log_marginal_likelihood(&kernel, sigma, &[a], &[0.0]).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * (kaa + sigma * sigma)).ln();
        assert_relative_eq!(lml, expect, max_relative = 1e-12);
    }

    #[test]
    fn lml_matches_multivariate_normal_density() {
        for seed in 1..6u64 {
            let (inputs, targets) = random_problem(seed, 4, 3);
            let kernel = SqExpLinKernel::new(1.5, 0.3, 0.2).unwrap();
            let sigma = 0.5;
            let lml = log_marginal_likelihood(&kernel, sigma, &inputs, &targets).unwrap();

            // Independent route: explicit inverse + determinant.
            let c = covariance(&kernel, sigma, &inputs).unwrap();
            let det = c.clone().determinant();
            let cinv = c.try_inverse().unwrap();
            let d = DVector::from_column_slice(&targets);
            let quad = (d.transpose() * &cinv * &d)[(0, 0)];
            let n = targets.len() as f64;
            let expect =
                -0.5 * quad - 0.5 * det.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
            assert_relative_eq!(lml, expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (inputs, targets) = random_problem(7, 6, 2);
        let theta = [1.2, 0.4, 0.6];
        let sigma = 0.5;
        let kernel = SqExpLinKernel::new(theta[0], theta[1], theta[2]).unwrap();
        let grad = lml_gradient(&kernel, sigma, &inputs, &targets).unwrap();

        let h = 1e-5;
        let lml_at = |t0: f64, t1: f64, t2: f64, s: f64| {
            log_marginal_likelihood(&SqExpLinKernel::new(t0, t1, t2).unwrap(), s, &inputs, &targets)
                .unwrap()
        };
        let fd = [
            (lml_at(theta[0] + h, theta[1], theta[2], sigma)
                - lml_at(theta[0] - h, theta[1], theta[2], sigma))
                / (2.0 * h),
            (lml_at(theta[0], theta[1] + h, theta[2], sigma)
                - lml_at(theta[0], theta[1] - h, theta[2], sigma))
                / (2.0 * h),
            (lml_at(theta[0], theta[1], theta[2] + h, sigma)
                - lml_at(theta[0], theta[1], theta[2] - h, sigma))
                / (2.0 * h),
            (lml_at(theta[0], theta[1], theta[2], sigma + h)
                - lml_at(theta[0], theta[1], theta[2], sigma - h))
                / (2.0 * h),
        ];
        for k in 0..4 {
            let denom = fd[k].abs().max(grad[k].abs()).max(1e-3);
            assert!(
                (grad[k] - fd[k]).abs() / denom < 1e-4,
                "component {k}: analytic {} vs fd {}",
                grad[k],
                fd[k]
            );
        }
    }

    #[test]
    fn theta2_gradient_vanishes_for_zero_inputs() {
        let inputs = vec![fv(&[0.0, 0.0]), fv(&[0.0, 0.0]), fv(&[0.0, 0.0])];
        let targets = vec![1.0, 2.0, 3.0];
        let kernel = SqExpLinKernel::new(1.0, 1.0, 0.5).unwrap();
        let grad = lml_gradient(&kernel, 0.8, &inputs, &targets).unwrap();
        assert!(grad[2].abs() < 1e-12, "theta2 gradient {}", grad[2]);
    }

    #[test]
    fn predict_single_training_point() {
        let kernel = SqExpLinKernel::new(2.0, 0.3, 0.1).unwrap();
        let a1 = fv(&[0.5, -0.5]);
        let sigma = 0.4;
        let d1 = 3.0;
        let model = GprModel::new(kernel, sigma, vec![a1.clone()], vec![d1]).unwrap();
        let query = fv(&[0.1, 0.2]);
        let p = model.predict(&query).unwrap();
        let kq = kernel.eval(&query, &a1).unwrap();
        let kaa = kernel.self_eval(&a1);
        assert_relative_eq!(p.mean_m, kq * d1 / (kaa + sigma * sigma), max_relative = 1e-12);
    }

    #[test]
    fn far_query_recovers_prior() {
        let kernel = SqExpLinKernel::new(1.7, 0.9, 0.0).unwrap();
        let model = GprModel::new(
            kernel,
            0.3,
            vec![fv(&[0.0, 0.0]), fv(&[1.0, 0.5])],
            vec![2.0, 3.5],
        )
        .unwrap();
        let far = fv(&[600.0, -800.0]);
        let p = model.predict(&far).unwrap();
        assert!(p.mean_m.abs() < 1e-9, "mean should vanish, got {}", p.mean_m);
        let prior = 0.3 * 0.3 + kernel.self_eval(&far);
        assert_relative_eq!(p.variance_m2, prior, max_relative = 1e-9);
    }

    #[test]
    fn interpolates_training_point_with_tiny_noise() {
        let kernel = SqExpLinKernel::new(3.0, 0.4, 0.5).unwrap();
        let inputs = vec![fv(&[0.0, 0.0]), fv(&[1.0, -1.0]), fv(&[-0.5, 0.7])];
        let targets = vec![2.0, 4.5, 3.1];
        let model = GprModel::new(kernel, 1e-6, inputs.clone(), targets.clone()).unwrap();
        for (a, d) in inputs.iter().zip(&targets) {
            let p = model.predict(a).unwrap();
            assert!((p.mean_m - d).abs() < 1e-6, "{} vs {d}", p.mean_m);
        }
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let kernel = SqExpLinKernel::new(2.0, 0.5, 0.7).unwrap();
        let (inputs, targets) = random_problem(11, 6, 2);
        let model = GprModel::new(kernel, 0.5, inputs, targets).unwrap();
        let mut s = 99u64;
        for _ in 0..20 {
            let q = fv(&[pseudo_uniform(&mut s) * 6.0 - 3.0, pseudo_uniform(&mut s) * 6.0 - 3.0]);
            let p = model.predict(&q).unwrap();
            let prior = 0.25 + kernel.self_eval(&q);
            assert!(p.variance_m2 > 0.0);
            assert!(p.variance_m2 <= prior + 1e-9);
        }
    }

    #[test]
    fn duplicated_training_point_never_increases_variance() {
        let kernel = SqExpLinKernel::new(1.4, 0.6, 0.2).unwrap();
        let (inputs, targets) = random_problem(13, 5, 2);
        let base = GprModel::new(kernel, 0.4, inputs.clone(), targets.clone()).unwrap();
        let mut a_inputs = inputs.clone();
        let mut a_targets = targets.clone();
        a_inputs.push(inputs[2].clone());
        a_targets.push(targets[2]);
        let augmented = GprModel::new(kernel, 0.4, a_inputs, a_targets).unwrap();
        let mut s = 4242u64;
        for _ in 0..20 {
            let q = fv(&[pseudo_uniform(&mut s) * 4.0 - 2.0, pseudo_uniform(&mut s) * 4.0 - 2.0]);
            let v0 = base.predict(&q).unwrap().variance_m2;
            let v1 = augmented.predict(&q).unwrap().variance_m2;
            assert!(v1 <= v0 + 1e-9, "variance grew: {v0} -> {v1}");
        }
    }

    #[test]
    fn fit_recovers_linear_function() {
        // d = w . a + tiny noise; the linear kernel term can fit exactly.
        let mut s = 5u64;
        let w = [1.5, -2.0, 0.7];
        let noise = 0.01;
        let make = |s: &mut u64, n: usize| {
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            for _ in 0..n {
                let a: Vec<f64> = (0..3).map(|_| pseudo_uniform(s) * 2.0 - 1.0).collect();
                let d: f64 = a.iter().zip(&w).map(|(x, wk)| x * wk).sum::<f64>()
                    + noise * (pseudo_uniform(s) - 0.5) * 3.0;
                inputs.push(fv(&a));
                targets.push(d);
            }
            (inputs, targets)
        };
        let (train_in, train_d) = make(&mut s, 30);
        let (test_in, test_d) = make(&mut s, 15);
        let config = GprFitConfig {
            restarts: 3,
            seed: 3,
            ..Default::default()
        };
        let model = fit_gpr(&train_in, &train_d, &config).unwrap();
        assert!(model.fit_grad_norm().unwrap() < config.tol);
        let rms = (test_in
            .iter()
            .zip(&test_d)
            .map(|(a, d)| (model.predict(a).unwrap().mean_m - d).powi(2))
            .sum::<f64>()
            / test_d.len() as f64)
            .sqrt();
        assert!(rms < 2.0 * noise, "held-out RMS {rms}");
    }

    #[test]
    fn identical_inputs_push_noise_into_sigma() {
        let a = fv(&[0.5, 0.5]);
        let inputs = vec![a.clone(), a];
        let targets = vec![1.0, 3.0];
        let config = GprFitConfig {
            restarts: 4,
            seed: 11,
            ..Default::default()
        };
        let model = fit_gpr(&inputs, &targets, &config).unwrap();
        let sample_var = {
            let mean = 2.0;
            ((1.0f64 - mean).powi(2) + (3.0f64 - mean).powi(2)) / 1.0
        };
        assert!(
            model.sigma_omega().powi(2) >= 0.5 * sample_var,
            "sigma^2 {} vs sample var {sample_var}",
            model.sigma_omega().powi(2)
        );
    }

    #[test]
    fn serialization_roundtrip_preserves_predictions() {
        let kernel = SqExpLinKernel::new(1.1, 0.3, 0.4).unwrap();
        let (inputs, targets) = random_problem(21, 8, 3);
        let model = GprModel::new(kernel, 0.6, inputs, targets).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let restored: GprModel = serde_json::from_str(&json).unwrap();
        let mut s = 7u64;
        for _ in 0..10 {
            let q = fv(&(0..3).map(|_| pseudo_uniform(&mut s) * 4.0 - 2.0).collect::<Vec<_>>());
            let p0 = model.predict(&q).unwrap();
            let p1 = restored.predict(&q).unwrap();
            assert_relative_eq!(p0.mean_m, p1.mean_m, epsilon = 1e-12);
            assert_relative_eq!(p0.variance_m2, p1.variance_m2, epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_eval_counter_is_n_per_query() {
        let kernel = SqExpLinKernel::new(1.0, 0.5, 0.5).unwrap();
        let (inputs, targets) = random_problem(31, 12, 2);
        let model = GprModel::new(kernel, 0.5, inputs, targets).unwrap();
        metrics::reset();
        model.predict(&fv(&[0.1, 0.2])).unwrap();
        assert_eq!(metrics::kernel_evals(), 12);
    }
}
