//! The Gaussian covariance graph model: sample statistics, the profile
//! log-likelihood and its derivatives, likelihood-equation residuals,
//! conditional-distribution parameters and the deviance.
//!
//! Derivatives are taken with respect to the free-parameter vector
//! `σ = (σ_ij : (i, j) ∈ F)` in the order of [`CovarianceGraph::free_index_set`].
//! The duplication map `vec(Σ) = Q σ` is never formed as a dense 0/1 matrix;
//! every product with `Q` is a gather over at most two positions per column.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{CovarianceGraph, FreeIndexSet};
use crate::linalg;

/// Sample size, mean vector and empirical covariance (divisor `n`).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStats {
    n: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    n_adjust: bool,
}

impl SampleStats {
    /// Statistics from an `n × p` data table (rows are observations).
    pub fn from_data(data: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = data.shape();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 observations, got {n}")));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at row {}, column {}", k % n + 1, k / n + 1)));
        }
        let mean = DVector::from_fn(p, |j, _| data.column(j).sum() / n as f64);
        let mut centered = data.clone();
        for j in 0..p {
            centered.column_mut(j).add_scalar_mut(-mean[j]);
        }
        let mut cov = centered.transpose() * &centered / n as f64;
        linalg::symmetrize(&mut cov);
        Ok(Self { n, mean, cov, n_adjust: false })
    }

    /// Statistics from a known covariance matrix; the mean is set to zero.
    pub fn from_covariance(n: usize, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Dimension(format!("covariance is {}x{}", cov.nrows(), cov.ncols())));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
        }
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        if linalg::asymmetry(&cov) > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::NotSymmetric { row: 0, col: 0 });
        }
        let mut cov = cov;
        linalg::symmetrize(&mut cov);
        let p = cov.nrows();
        Ok(Self { n, mean: DVector::zeros(p), cov, n_adjust: false })
    }

    /// Switches to the profile-likelihood convention that uses `n - 1` in
    /// place of `n` in log-likelihoods and deviances.
    pub fn with_n_adjust(mut self, on: bool) -> Self {
        self.n_adjust = on;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The sample size entering likelihood expressions.
    pub fn effective_n(&self) -> f64 {
        if self.n_adjust {
            (self.n - 1) as f64
        } else {
            self.n as f64
        }
    }

    pub fn n_adjusted(&self) -> bool {
        self.n_adjust
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The empirical covariance `S`.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Whether `S` passed the positive-definiteness check. Fitters refuse a
    /// singular `S`; loading one only flags it.
    pub fn is_positive_definite(&self) -> bool {
        linalg::is_positive_definite(&self.cov)
    }

    pub(crate) fn require_pd(&self) -> Result<()> {
        if self.is_positive_definite() {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite("sample covariance"))
        }
    }
}

/// A positive definite covariance matrix whose entries vanish off the free set
/// of its graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedCovariance {
    graph: Arc<CovarianceGraph>,
    sigma: DMatrix<f64>,
}

impl ConstrainedCovariance {
    /// Validates shape, exact symmetry, the zero pattern and positive
    /// definiteness.
    pub fn new(graph: impl Into<Arc<CovarianceGraph>>, sigma: DMatrix<f64>) -> Result<Self> {
        let graph = graph.into();
        check_pattern(&graph, &sigma)?;
        if !linalg::is_positive_definite(&sigma) {
            return Err(Error::NotPositiveDefinite("covariance"));
        }
        Ok(Self { graph, sigma })
    }

    pub fn identity(graph: impl Into<Arc<CovarianceGraph>>) -> Self {
        let graph = graph.into();
        let p = graph.num_vertices();
        Self { graph, sigma: DMatrix::identity(p, p) }
    }

    /// Builds `Σ` from the free-parameter vector (`vec(Σ) = Q σ`).
    pub fn from_free(graph: impl Into<Arc<CovarianceGraph>>, free: &[f64]) -> Result<Self> {
        let graph = graph.into();
        let map = DuplicationMap::new(&graph);
        if free.len() != map.len() {
            return Err(Error::Dimension(format!("expected {} free values, got {}", map.len(), free.len())));
        }
        let sigma = map.expand(free);
        Self::new(graph, sigma)
    }

    pub(crate) fn from_parts_unchecked(graph: Arc<CovarianceGraph>, sigma: DMatrix<f64>) -> Self {
        Self { graph, sigma }
    }

    pub fn graph(&self) -> &CovarianceGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<CovarianceGraph> {
        &self.graph
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// The free-parameter vector `σ`.
    pub fn free_vector(&self) -> DVector<f64> {
        DuplicationMap::new(&self.graph).gather_upper(&self.sigma)
    }

    /// Correlations in the off-diagonal entries and standard deviations on
    /// the diagonal.
    pub fn correlation_sd(&self) -> DMatrix<f64> {
        correlation_sd(&self.sigma)
    }
}

/// Correlation matrix with standard deviations on the diagonal.
pub fn correlation_sd(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let p = sigma.nrows();
    let sd: Vec<f64> = (0..p).map(|i| sigma[(i, i)].sqrt()).collect();
    DMatrix::from_fn(p, p, |i, j| if i == j { sd[i] } else { sigma[(i, j)] / (sd[i] * sd[j]) })
}

/// Checks shape, exact symmetry and exact zeros off the free set.
pub fn check_pattern(graph: &CovarianceGraph, sigma: &DMatrix<f64>) -> Result<()> {
    let p = graph.num_vertices();
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Dimension(format!("matrix is {}x{}, graph has {p} vertices", sigma.nrows(), sigma.ncols())));
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if sigma[(i, j)] != sigma[(j, i)] {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
            if !graph.adjacent(i, j) && sigma[(i, j)] != 0.0 {
                return Err(Error::PatternViolation { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// The duplication map `Q` with `vec(Σ) = Q σ`, stored as index pairs.
#[derive(Clone, Debug)]
pub struct DuplicationMap {
    free: FreeIndexSet,
}

impl DuplicationMap {
    pub fn new(graph: &CovarianceGraph) -> Self {
        Self { free: graph.free_index_set() }
    }

    pub fn free_set(&self) -> &FreeIndexSet {
        &self.free
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Matrix positions `(row, col)` holding a one in column `k` of `Q`:
    /// one position for a variance, two for a covariance.
    pub fn column_positions(&self, k: usize) -> Vec<(usize, usize)> {
        let (i, j) = self.free.pairs()[k];
        if i == j {
            vec![(i, i)]
        } else {
            vec![(i, j), (j, i)]
        }
    }

    /// Row indices of the ones in column `k` of `Q` under column-major `vec`.
    pub fn column_rows(&self, k: usize) -> Vec<usize> {
        let p = self.free.dim();
        self.column_positions(k).into_iter().map(|(r, c)| r + p * c).collect()
    }

    /// `Σ` from `σ`.
    pub fn expand(&self, free: &[f64]) -> DMatrix<f64> {
        let p = self.free.dim();
        let mut m = DMatrix::zeros(p, p);
        for (&(i, j), &v) in self.free.pairs().iter().zip(free) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// `Q′ vec(M)`: sums the entries of `M` at each column's positions.
    pub fn gather(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|k| self.column_positions(k).iter().map(|&(r, c)| m[(r, c)]).sum()),
        )
    }

    /// Picks `m_ij` for each `(i, j) ∈ F` (the left inverse of `Q` on
    /// symmetric matrices).
    pub fn gather_upper(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.free.pairs().iter().map(|&(i, j)| m[(i, j)]))
    }

    /// `Q′ (A ⊗ B) Q` for `p × p` matrices `A`, `B`.
    ///
    /// With column-major `vec`, the entry of `A ⊗ B` linking positions
    /// `(r, c)` and `(r′, c′)` is `A[c, c′] · B[r, r′]`.
    pub fn kron_sandwich(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        let cols: Vec<Vec<(usize, usize)>> = (0..m).map(|k| self.column_positions(k)).collect();
        DMatrix::from_fn(m, m, |u, v| {
            let mut s = 0.0;
            for &(r, c) in &cols[u] {
                for &(r2, c2) in &cols[v] {
                    s += a[(c, c2)] * b[(r, r2)];
                }
            }
            s
        })
    }
}

fn check_compatible(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<()> {
    if stats.dim() != sigma.dim() {
        return Err(Error::Dimension(format!("sample covariance is {0}x{0}, Σ is {1}x{1}", stats.dim(), sigma.dim())));
    }
    Ok(())
}

/// `Σ⁻¹` and `Σ⁻¹ S Σ⁻¹`.
fn precision_pair(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_compatible(stats, sigma)?;
    let k = linalg::spd_inverse(sigma.matrix(), "covariance")?;
    let mut w = &k * stats.cov() * &k;
    linalg::symmetrize(&mut w);
    Ok((k, w))
}

/// Profile log-likelihood `−(np/2) log 2π − (n/2) log|Σ| − (n/2) tr(Σ⁻¹S)`.
pub fn profile_loglik(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<f64> {
    check_compatible(stats, sigma)?;
    loglik_matrix(stats, sigma.matrix())
}

/// [`profile_loglik`] for an arbitrary positive definite matrix.
pub fn loglik_matrix(stats: &SampleStats, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = stats.effective_n();
    let p = stats.dim() as f64;
    let logdet = linalg::log_det_spd(sigma, "covariance")?;
    let k = linalg::spd_inverse(sigma, "covariance")?;
    let trace = k.component_mul(stats.cov()).sum();
    Ok(-0.5 * n * (p * (2.0 * PI).ln() + logdet + trace))
}

/// Score `(n/2) Q′[vec(Σ⁻¹SΣ⁻¹) − vec(Σ⁻¹)]`, indexed by the free set.
pub fn score(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<DVector<f64>> {
    let (k, w) = precision_pair(stats, sigma)?;
    let map = DuplicationMap::new(sigma.graph());
    Ok(map.gather(&(w - k)) * (0.5 * stats.effective_n()))
}

/// Fisher information `(n/2) Q′(Σ⁻¹ ⊗ Σ⁻¹)Q`.
pub fn fisher_information(sigma: &ConstrainedCovariance, n: f64) -> Result<DMatrix<f64>> {
    let k = linalg::spd_inverse(sigma.matrix(), "covariance")?;
    let map = DuplicationMap::new(sigma.graph());
    Ok(map.kron_sandwich(&k, &k) * (0.5 * n))
}

/// Hessian `(n/2) Q′{Σ⁻¹⊗Σ⁻¹ − W⊗Σ⁻¹ − Σ⁻¹⊗W}Q` with `W = Σ⁻¹SΣ⁻¹`.
pub fn hessian(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<DMatrix<f64>> {
    let (k, w) = precision_pair(stats, sigma)?;
    let map = DuplicationMap::new(sigma.graph());
    let kk = map.kron_sandwich(&k, &k);
    let wk = map.kron_sandwich(&w, &k);
    let kw = map.kron_sandwich(&k, &w);
    let mut h = (kk - wk - kw) * (0.5 * stats.effective_n());
    linalg::symmetrize(&mut h);
    Ok(h)
}

/// `max_{(i,j) ∈ F} |(Σ⁻¹)_ij − (Σ⁻¹SΣ⁻¹)_ij|`; zero exactly at solutions of
/// the likelihood equations.
pub fn stationarity_residual(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<f64> {
    check_pattern(sigma.graph(), sigma.matrix())?;
    let (k, w) = precision_pair(stats, sigma)?;
    Ok(sigma.graph().free_index_set().pairs().iter().map(|&(i, j)| (k[(i, j)] - w[(i, j)]).abs()).fold(0.0, f64::max))
}

/// Regression of a block `C` on the remaining variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalParams {
    /// The block `C`, ascending.
    pub block: Vec<usize>,
    /// The complement `V \ C`, ascending.
    pub rest: Vec<usize>,
    /// `B_C = Σ_{C,−C} (Σ_{−C,−C})⁻¹`.
    pub coefficients: DMatrix<f64>,
    /// `Λ_C = Σ_{C,C} − Σ_{C,−C} (Σ_{−C,−C})⁻¹ Σ_{−C,C}`.
    pub conditional_cov: DMatrix<f64>,
}

pub fn conditional_params(sigma: &ConstrainedCovariance, c: &[usize]) -> Result<ConditionalParams> {
    conditional_params_matrix(sigma.matrix(), c)
}

pub(crate) fn conditional_params_matrix(sigma: &DMatrix<f64>, c: &[usize]) -> Result<ConditionalParams> {
    let p = sigma.nrows();
    let mut block: Vec<usize> = c.to_vec();
    block.sort_unstable();
    block.dedup();
    if block.is_empty() || block.len() >= p {
        return Err(Error::InvalidArgument("conditioning block must be non-empty and proper".into()));
    }
    if let Some(&bad) = block.iter().find(|&&i| i >= p) {
        return Err(Error::UnknownVertex(format!("#{bad}")));
    }
    let rest: Vec<usize> = (0..p).filter(|i| !block.contains(i)).collect();
    let rest_inv = linalg::spd_inverse(&linalg::submatrix(sigma, &rest, &rest), "covariance of the complement")?;
    let s_cr = linalg::submatrix(sigma, &block, &rest);
    let coefficients = &s_cr * &rest_inv;
    let mut conditional_cov = linalg::submatrix(sigma, &block, &block) - &coefficients * s_cr.transpose();
    linalg::symmetrize(&mut conditional_cov);
    Ok(ConditionalParams { block, rest, coefficients, conditional_cov })
}

/// Deviance against the saturated model and its degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deviance {
    pub deviance: f64,
    pub df: usize,
}

/// `n[log(|Σ|/|S|) + tr(Σ⁻¹S) − p]` over `p(p+1)/2 − |F|` degrees of freedom.
pub fn deviance(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<Deviance> {
    check_compatible(stats, sigma)?;
    let df = {
        let p = stats.dim();
        p * (p + 1) / 2 - sigma.graph().free_index_set().len()
    };
    Ok(Deviance { deviance: deviance_matrix(stats, sigma.matrix())?, df })
}

pub(crate) fn deviance_matrix(stats: &SampleStats, sigma: &DMatrix<f64>) -> Result<f64> {
    let n = stats.effective_n();
    let p = stats.dim() as f64;
    let ld_sigma = linalg::log_det_spd(sigma, "covariance")?;
    let ld_s = linalg::log_det_spd(stats.cov(), "sample covariance")?;
    let k = linalg::spd_inverse(sigma, "covariance")?;
    let trace = k.component_mul(stats.cov()).sum();
    Ok(n * (ld_sigma - ld_s + trace - p))
}
