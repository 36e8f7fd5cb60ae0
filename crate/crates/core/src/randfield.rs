//! Lognormal random fields built from a truncated Karhunen–Loève expansion.
//!
//! The covariance kernel is discretized on a set of grid points (element
//! centroids in practice) and its symmetric eigenproblem is solved densely.
//! One set of KLE coefficients is shared by every material property; each
//! property additionally gets its own mean-shift variable.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::{MaterialParams, Parameter};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RandFieldError {
    #[error("correlation lengths must be positive, got ({0}, {1})")]
    CorrelationLength(f64, f64),
    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("truncation order {modes} outside 1..={n}")]
    TruncationOrder { modes: usize, n: usize },
    #[error("invalid prior moments: mean {mean}, std {std}")]
    InvalidPrior { mean: f64, std: f64 },
    #[error("latent vector has length {got}, expected {expected}")]
    LatentLength { got: usize, expected: usize },
    #[error("empty grid")]
    EmptyGrid,
}

/// Separable exponential covariance kernel with one correlation length per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub l_x1: f64,
    pub l_x2: f64,
}

impl CovarianceSpec {
    pub fn new(l_x1: f64, l_x2: f64) -> Result<Self, RandFieldError> {
        let spec = CovarianceSpec { l_x1, l_x2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RandFieldError> {
        if self.l_x1 > 0.0 && self.l_x2 > 0.0 {
            Ok(())
        } else {
            Err(RandFieldError::CorrelationLength(self.l_x1, self.l_x2))
        }
    }
}

pub fn covariance(x: [f64; 2], y: [f64; 2], spec: &CovarianceSpec) -> f64 {
    (-(x[0] - y[0]).abs() / spec.l_x1 - (x[1] - y[1]).abs() / spec.l_x2).exp()
}

pub fn assemble_covariance_matrix(grid: &[[f64; 2]], spec: &CovarianceSpec) -> DMatrix<f64> {
    let n = grid.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = covariance(grid[i], grid[j], spec);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Leading eigenpairs of a discretized covariance operator.
#[derive(Debug, Clone)]
pub struct KleBasis {
    /// Eigenvalues, descending. Only the retained `modes` are stored.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
    /// Trace of the covariance matrix, i.e. the sum of all eigenvalues.
    pub total_variance: f64,
    pub grid: Vec<[f64; 2]>,
}

impl KleBasis {
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn len(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the leading `modes` eigenpairs.
    pub fn truncated(&self, modes: usize) -> Result<KleBasis, RandFieldError> {
        if modes == 0 || modes > self.modes() {
            return Err(RandFieldError::TruncationOrder {
                modes,
                n: self.modes(),
            });
        }
        Ok(KleBasis {
            eigenvalues: self.eigenvalues[..modes].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, modes).into_owned(),
            total_variance: self.total_variance,
            grid: self.grid.clone(),
        })
    }

    /// Fraction of the total variance captured by the retained modes.
    pub fn energy_fraction(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.total_variance
    }

    /// Σ ς_i ψ_i ψ_iᵀ over the retained modes.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.len(), self.modes(), |r, c| {
            self.eigenvectors[(r, c)] * self.eigenvalues[c]
        });
        &scaled * self.eigenvectors.transpose()
    }
}

/// Solves the symmetric eigenproblem of `cov` and keeps the `modes` largest pairs.
///
/// Eigenvectors are sign-normalized so that their largest-magnitude entry is
/// positive, which makes the basis reproducible across runs.
pub fn solve_kle(
    cov: &DMatrix<f64>,
    grid: &[[f64; 2]],
    modes: usize,
) -> Result<KleBasis, RandFieldError> {
    let n = cov.nrows();
    if n == 0 {
        return Err(RandFieldError::EmptyGrid);
    }
    if modes == 0 || modes > n {
        return Err(RandFieldError::TruncationOrder { modes, n });
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let asym = (cov - cov.transpose()).amax();
    if cov.ncols() != n || asym > 1e-12 * scale {
        return Err(RandFieldError::NotSymmetric(asym));
    }

    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvectors = DMatrix::zeros(n, modes);
    let mut eigenvalues = Vec::with_capacity(modes);
    for (k, &idx) in order.iter().take(modes).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = col.iter().enumerate().fold(0, |best, (i, v)| {
            if v.abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            eigenvectors[(r, k)] = sign * col[r];
        }
        eigenvalues.push(eig.eigenvalues[idx]);
    }

    Ok(KleBasis {
        eigenvalues,
        eigenvectors,
        total_variance: cov.trace(),
        grid: grid.to_vec(),
    })
}

/// Convenience: covariance assembly plus eigensolve.
pub fn build_basis(
    grid: &[[f64; 2]],
    spec: &CovarianceSpec,
    modes: usize,
) -> Result<KleBasis, RandFieldError> {
    spec.validate()?;
    let cov = assemble_covariance_matrix(grid, spec);
    solve_kle(&cov, grid, modes)
}

/// Standard Gaussian field Σ √ς_i ξ_i ψ_i over the grid.
pub fn sample_gaussian_field(basis: &KleBasis, xi_kle: &[f64]) -> Result<Vec<f64>, RandFieldError> {
    if xi_kle.len() != basis.modes() {
        return Err(RandFieldError::LatentLength {
            got: xi_kle.len(),
            expected: basis.modes(),
        });
    }
    let mut field = vec![0.0; basis.len()];
    for (i, (&lambda, &x)) in basis.eigenvalues.iter().zip(xi_kle).enumerate() {
        let w = lambda.max(0.0).sqrt() * x;
        if w == 0.0 {
            continue;
        }
        for (r, f) in field.iter_mut().enumerate() {
            *f += w * basis.eigenvectors[(r, i)];
        }
    }
    Ok(field)
}

/// Target lognormal moments and the moments of the underlying Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalMoments {
    pub mu_q: f64,
    pub sigma_q: f64,
    pub mu_g: f64,
    pub sigma_g: f64,
}

pub fn moments_to_gaussian(mu_q: f64, sigma_q: f64) -> Result<LognormalMoments, RandFieldError> {
    if !(mu_q > 0.0 && sigma_q >= 0.0 && mu_q.is_finite() && sigma_q.is_finite()) {
        return Err(RandFieldError::InvalidPrior {
            mean: mu_q,
            std: sigma_q,
        });
    }
    let cv = sigma_q / mu_q;
    let var_g = (cv * cv).ln_1p();
    Ok(LognormalMoments {
        mu_q,
        sigma_q,
        mu_g: mu_q.ln() - 0.5 * var_g,
        sigma_g: var_g.sqrt(),
    })
}

impl LognormalMoments {
    /// Mean and standard deviation of exp(N(mu_g, sigma_g²)).
    pub fn lognormal_mean_std(&self) -> (f64, f64) {
        let var_g = self.sigma_g * self.sigma_g;
        let mean = (self.mu_g + 0.5 * var_g).exp();
        (mean, mean * var_g.exp_m1().sqrt())
    }
}

/// Prior moments for all eight material properties.
pub fn prior_moments(
    mean: &MaterialParams,
    std: &MaterialParams,
) -> Result<[LognormalMoments; Parameter::COUNT], RandFieldError> {
    let m = mean.to_array();
    let s = std.to_array();
    let mut out = [LognormalMoments {
        mu_q: 0.0,
        sigma_q: 0.0,
        mu_g: 0.0,
        sigma_g: 0.0,
    }; Parameter::COUNT];
    for k in 0..Parameter::COUNT {
        out[k] = moments_to_gaussian(m[k], s[k])?;
    }
    Ok(out)
}

/// Latent standard-normal vector: `W` per-property shifts followed by `M`
/// shared KLE coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub const SHIFTS: usize = Parameter::COUNT;

    pub fn zeros(modes: usize) -> Self {
        LatentVector(vec![0.0; Self::SHIFTS + modes])
    }

    pub fn sample<R: Rng + ?Sized>(modes: usize, rng: &mut R) -> Self {
        LatentVector(
            (0..Self::SHIFTS + modes)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.0.len().saturating_sub(Self::SHIFTS)
    }

    pub fn shifts(&self) -> &[f64] {
        &self.0[..Self::SHIFTS.min(self.0.len())]
    }

    pub fn kle(&self) -> &[f64] {
        &self.0[Self::SHIFTS.min(self.0.len())..]
    }

    /// The same draw seen by a coarser expansion: shifts kept, KLE
    /// coefficients cut to the first `modes`.
    pub fn truncated(&self, modes: usize) -> LatentVector {
        LatentVector(self.0[..Self::SHIFTS + modes.min(self.modes())].to_vec())
    }
}

/// Element-wise material properties of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterFields {
    pub values: Vec<MaterialParams>,
}

impl ParameterFields {
    pub fn uniform(p: MaterialParams, n: usize) -> Self {
        ParameterFields { values: vec![p; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn field(&self, p: Parameter) -> Vec<f64> {
        self.values.iter().map(|v| v.get(p)).collect()
    }
}

/// Maps latent vectors to lognormal material fields.
#[derive(Debug, Clone)]
pub struct RandomFieldModel {
    pub basis: KleBasis,
    pub moments: [LognormalMoments; Parameter::COUNT],
}

impl RandomFieldModel {
    pub fn new(basis: KleBasis, moments: [LognormalMoments; Parameter::COUNT]) -> Self {
        RandomFieldModel { basis, moments }
    }

    /// Length L = M + W of the latent vector this model consumes.
    pub fn latent_len(&self) -> usize {
        LatentVector::SHIFTS + self.basis.modes()
    }

    pub fn realize(&self, xi: &LatentVector) -> Result<ParameterFields, RandFieldError> {
        realize_parameter_fields(&self.basis, &self.moments, xi)
    }

    /// Same model with fewer KLE modes.
    pub fn truncated(&self, modes: usize) -> Result<RandomFieldModel, RandFieldError> {
        Ok(RandomFieldModel {
            basis: self.basis.truncated(modes)?,
            moments: self.moments,
        })
    }
}

/// q̂ = exp(μ_g + σ_g ξ_{q,0} + σ_g Σ √ς_i ξ_i ψ_i) for every property.
pub fn realize_parameter_fields(
    basis: &KleBasis,
    moments: &[LognormalMoments; Parameter::COUNT],
    xi: &LatentVector,
) -> Result<ParameterFields, RandFieldError> {
    let expected = LatentVector::SHIFTS + basis.modes();
    if xi.len() != expected {
        return Err(RandFieldError::LatentLength {
            got: xi.len(),
            expected,
        });
    }
    let g = sample_gaussian_field(basis, xi.kle())?;
    let shifts = xi.shifts();
    let values = g
        .iter()
        .map(|&gx| {
            let mut v = [0.0; Parameter::COUNT];
            for (k, m) in moments.iter().enumerate() {
                v[k] = (m.mu_g + m.sigma_g * (shifts[k] + gx)).exp();
            }
            MaterialParams::from_array(v)
        })
        .collect();
    Ok(ParameterFields { values })
}

/// Relative point-wise error averaged over points and realizations.
///
/// `reference[j][i]` and `approx[j][i]` hold realization `j` at point `i`.
pub fn truncation_error(reference: &[Vec<f64>], approx: &[Vec<f64>]) -> f64 {
    assert_eq!(reference.len(), approx.len(), "realization count mismatch");
    if reference.is_empty() {
        return 0.0;
    }
    let total: f64 = reference
        .iter()
        .zip(approx)
        .map(|(q, qh)| {
            assert_eq!(q.len(), qh.len(), "grid size mismatch");
            q.iter()
                .zip(qh)
                .map(|(a, b)| (a - b).abs() / a.abs())
                .sum::<f64>()
                / q.len() as f64
        })
        .sum();
    total / reference.len() as f64
}
