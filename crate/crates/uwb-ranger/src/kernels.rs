//! Kernel functions, Gram matrices, double-centering and the symmetric
//! eigendecomposition shared by GPR and kernel PCA.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::metrics;

/// Eigenvalues below this fraction of the largest one are treated as zero;
/// the corresponding components are unavailable for projection. Centered Gram
/// matrices have rank at most N-1, so some zero eigenvalues always exist.
pub const RANK_EIG_TOL: f64 = 1e-10;

fn check_dims(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dim {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// A kernel function over feature vectors.
pub trait Kernel {
    /// Kernel value against a stored training input. Counted by
    /// [`crate::metrics::kernel_evals`].
    fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64>;

    /// `k(a, a)`. Constant cost per query, not counted as a training-point
    /// evaluation.
    fn self_eval(&self, a: &FeatureVector) -> f64;
}

/// Weighted sum of a squared-exponential and a linear term:
/// `theta0 * exp(-theta1 * ||a - b||^2) + theta2 * a.b`.
///
/// `(0, 0, 1)` degenerates to standard linear regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqExpLinKernel {
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl SqExpLinKernel {
    pub fn new(theta0: f64, theta1: f64, theta2: f64) -> Result<Self> {
        for (name, v) in [("theta0", theta0), ("theta1", theta1), ("theta2", theta2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "kernel hyperparameter {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self {
            theta0,
            theta1,
            theta2,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta0, self.theta1, self.theta2]
    }
}

impl Kernel for SqExpLinKernel {
    fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        check_dims(a, b)?;
        metrics::add_kernel_evals(1);
        metrics::add_flops(5 * a.dim() as u64 + 4);
        Ok(self.theta0 * (-self.theta1 * a.squared_distance(b)).exp() + self.theta2 * a.dot(b))
    }

    fn self_eval(&self, a: &FeatureVector) -> f64 {
        metrics::add_flops(2 * a.dim() as u64 + 2);
        self.theta0 + self.theta2 * a.dot(a)
    }
}

/// Polynomial kernel `(a.b + 1)^c`. The linear kernel `a.b` used as the
/// standard-PCA diagnostic is [`LinearKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyKernel {
    pub degree: u32,
}

impl PolyKernel {
    pub fn new(degree: u32) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Config(format!(
                "polynomial degree must be >= 1, got {degree}"
            )));
        }
        Ok(Self { degree })
    }
}

impl Kernel for PolyKernel {
    fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        check_dims(a, b)?;
        metrics::add_kernel_evals(1);
        metrics::add_flops(2 * a.dim() as u64 + 1 + self.degree as u64);
        Ok((a.dot(b) + 1.0).powi(self.degree as i32))
    }

    fn self_eval(&self, a: &FeatureVector) -> f64 {
        metrics::add_flops(2 * a.dim() as u64 + 1 + self.degree as u64);
        (a.dot(a) + 1.0).powi(self.degree as i32)
    }
}

/// Plain inner-product kernel; kernel PCA with it reduces to standard PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn eval(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        check_dims(a, b)?;
        metrics::add_kernel_evals(1);
        metrics::add_flops(2 * a.dim() as u64);
        Ok(a.dot(b))
    }

    fn self_eval(&self, a: &FeatureVector) -> f64 {
        metrics::add_flops(2 * a.dim() as u64);
        a.dot(a)
    }
}

/// A symmetric kernel (or Gram) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    /// Wraps a square matrix, validating symmetry to `1e-12 * scale`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Input(format!(
                "kernel matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())).max(1e-300);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Input(format!(
                        "kernel matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().cloned().collect()
    }
}

/// Assembles the symmetric matrix of pairwise kernel values.
pub fn gram<K: Kernel>(kernel: &K, points: &[FeatureVector]) -> Result<KernelMatrix> {
    if points.is_empty() {
        return Err(Error::Input("gram matrix needs at least one point".into()));
    }
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&points[i], &points[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(KernelMatrix(m))
}

/// Column means and grand mean of a training Gram matrix; everything needed
/// to center out-of-sample kernel vectors consistently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringStats {
    pub col_means: Vec<f64>,
    pub grand_mean: f64,
}

impl CenteringStats {
    pub fn from_gram(k: &KernelMatrix) -> Self {
        let n = k.n() as f64;
        let col_means: Vec<f64> = (0..k.n())
            .map(|j| k.0.column(j).iter().sum::<f64>() / n)
            .collect();
        let grand_mean = col_means.iter().sum::<f64>() / n;
        Self {
            col_means,
            grand_mean,
        }
    }
}

/// Double-centers a Gram matrix: `K - 1K - K1 + 1K1` with `1` the matrix of
/// `1/N` entries. Row and column sums of the result vanish.
pub fn center_gram(k: &KernelMatrix) -> KernelMatrix {
    let stats = CenteringStats::from_gram(k);
    let n = k.n();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] =
                k.0[(i, j)] - stats.col_means[i] - stats.col_means[j] + stats.grand_mean;
        }
    }
    KernelMatrix(out)
}

/// Centers a test kernel vector against the training Gram statistics:
/// `k~_i = k_i - mean(k) - col_mean_i + grand_mean`.
pub fn center_test_vector(k_test: &[f64], stats: &CenteringStats) -> Result<Vec<f64>> {
    let n = stats.col_means.len();
    if k_test.len() != n {
        return Err(Error::Dim {
            expected: n,
            got: k_test.len(),
        });
    }
    metrics::add_flops(3 * n as u64);
    let mean = k_test.iter().sum::<f64>() / n as f64;
    Ok(k_test
        .iter()
        .zip(&stats.col_means)
        .map(|(k, c)| k - mean - c + stats.grand_mean)
        .collect())
}

/// Full spectrum of a symmetric matrix, eigenvalues descending, eigenvectors
/// orthonormal with a deterministic sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues above `RANK_EIG_TOL * max_eigenvalue`.
    pub fn numerical_rank(&self) -> usize {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return 0;
        }
        self.eigenvalues
            .iter()
            .filter(|&&l| l > RANK_EIG_TOL * max)
            .count()
    }
}

/// Symmetric eigendecomposition, sorted descending. Each eigenvector's sign
/// is fixed so its largest-magnitude component is positive, making
/// projections reproducible across runs.
pub fn sym_eig(k: &KernelMatrix) -> Result<EigenPairs> {
    let n = k.n();
    let eig = k
        .0
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Eig("symmetric eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("real symmetric eigenvalues are finite")
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        // Sign convention: first occurrence of the largest-magnitude entry
        // must be positive.
        let mut idx = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        let sign = if col[idx] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, dst)] = sign * col[i];
        }
    }
    Ok(EigenPairs {
        eigenvalues,
        eigenvectors,
    })
}
