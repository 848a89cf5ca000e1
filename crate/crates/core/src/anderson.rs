//! Anderson's iteration for the likelihood equations.
//!
//! Each step solves the linear system `A_Σ σ′ = b_Σ` built from the current
//! iterate. The iterates need not stay positive definite and the likelihood
//! may decrease; the algorithm is reproduced without damping so those
//! failure modes stay observable. Every iterate's definiteness is recorded.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitResult, Method};
use crate::graph::{CovarianceGraph, FreeIndexSet};
use crate::linalg;
use crate::model::{self, ConstrainedCovariance, DuplicationMap, SampleStats};

/// Iterates whose entries exceed this multiple of `max |S_ij|` count as
/// divergent.
const BLOWUP_FACTOR: f64 = 1e12;

/// Relative pivot size below which a linear system is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AndersonStatus {
    /// Fixed point reached and it is positive definite.
    ConvergedPd,
    /// Fixed point reached but it is not positive definite.
    ConvergedNonPd,
    /// Iteration cap reached without meeting the tolerance.
    NotConverged,
    /// Iterates became non-finite or exploded.
    Diverged,
    /// `Σ` or `A_Σ` was numerically singular at some iterate.
    SingularSystem,
}

impl fmt::Display for AndersonStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ConvergedPd => "converged-PD",
            Self::ConvergedNonPd => "converged-non-PD",
            Self::NotConverged => "not-converged",
            Self::Diverged => "diverged",
            Self::SingularSystem => "singular-system",
        })
    }
}

/// The current (patterned, possibly indefinite) iterate.
#[derive(Clone, Debug)]
pub struct AndersonState {
    pub sigma: DMatrix<f64>,
    pub iteration: usize,
    /// Positive definiteness of iterates `1..=iteration`.
    pub pd_flags: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct AndersonOutcome {
    pub state: AndersonState,
    pub status: AndersonStatus,
    /// Log-likelihood of each iterate, `None` where it is not positive definite.
    pub loglik_trace: Vec<Option<f64>>,
    /// Likelihood-equation residual of the final iterate, when `Σ` is invertible.
    pub stationarity: Option<f64>,
    graph: Arc<CovarianceGraph>,
}

impl AndersonOutcome {
    pub fn converged(&self) -> bool {
        self.status == AndersonStatus::ConvergedPd
    }

    /// True if some iterate was not positive definite.
    pub fn visited_non_pd(&self) -> bool {
        self.state.pd_flags.iter().any(|&pd| !pd)
    }

    /// Converts a positive definite final iterate into a [`FitResult`].
    pub fn into_fit_result(self, stats: &SampleStats) -> Result<FitResult> {
        if !linalg::is_positive_definite(&self.state.sigma) {
            return Err(Error::NoConvergence(format!(
                "Anderson iteration ended {} with a non-positive-definite iterate",
                self.status
            )));
        }
        let estimate = ConstrainedCovariance::from_parts_unchecked(self.graph, self.state.sigma);
        let loglik = model::profile_loglik(stats, &estimate)?;
        let stationarity = model::stationarity_residual(stats, &estimate)?;
        Ok(FitResult {
            estimate,
            loglik,
            iterations: self.state.iteration,
            converged: self.status == AndersonStatus::ConvergedPd,
            trace: Some(self.loglik_trace.iter().map(|l| l.unwrap_or(f64::NAN)).collect()),
            method: Method::MlAnderson,
            stationarity,
        })
    }
}

/// Inverse of a general square matrix, `None` when numerically singular.
fn general_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || diag.iter().any(|&d| d <= SINGULAR_PIVOT * max) {
        return None;
    }
    lu.try_inverse()
}

fn general_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || diag.iter().any(|&d| d <= SINGULAR_PIVOT * max) {
        return None;
    }
    lu.solve(b)
}

/// The system `(A_Σ, b_Σ)` for the current iterate:
/// `A_(ij,kℓ) = σ^{ik}σ^{jk}` if `k = ℓ`, `σ^{ik}σ^{jℓ} + σ^{jk}σ^{iℓ}` otherwise,
/// and `b_ij = (Σ⁻¹SΣ⁻¹)_ij`, where `σ^{ij} = (Σ⁻¹)_ij`.
pub fn anderson_system(
    sigma: &DMatrix<f64>,
    stats: &SampleStats,
    free: &FreeIndexSet,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if sigma.nrows() != stats.dim() || free.dim() != stats.dim() {
        return Err(Error::Dimension("Σ, S and the free set differ in size".into()));
    }
    let k = general_inverse(sigma).ok_or(Error::Singular("covariance iterate"))?;
    Ok(system_from_inverse(&k, stats, free))
}

fn system_from_inverse(k: &DMatrix<f64>, stats: &SampleStats, free: &FreeIndexSet) -> (DMatrix<f64>, DVector<f64>) {
    let pairs = free.pairs();
    let m = pairs.len();
    let a = DMatrix::from_fn(m, m, |u, v| {
        let (i, j) = pairs[u];
        let (kk, l) = pairs[v];
        if kk == l {
            k[(i, kk)] * k[(j, kk)]
        } else {
            k[(i, kk)] * k[(j, l)] + k[(j, kk)] * k[(i, l)]
        }
    });
    let w = k * stats.cov() * k;
    let b = DVector::from_iterator(m, pairs.iter().map(|&(i, j)| 0.5 * (w[(i, j)] + w[(j, i)])));
    (a, b)
}

fn residual_general(k: &DMatrix<f64>, stats: &SampleStats, free: &FreeIndexSet) -> f64 {
    let w = k * stats.cov() * k;
    free.pairs().iter().map(|&(i, j)| (k[(i, j)] - w[(i, j)]).abs()).fold(0.0, f64::max)
}

/// Runs Anderson's iteration from `cfg.start` (identity by default).
///
/// Stops when the largest entry change drops below `cfg.tol` (and the
/// likelihood equations hold to `100 * cfg.tol`), on a singular system, on
/// divergence, or after `cfg.max_iter` iterations.
pub fn fit_anderson(stats: &SampleStats, graph: &CovarianceGraph, cfg: &FitConfig) -> Result<AndersonOutcome> {
    cfg.validate()?;
    if stats.dim() != graph.num_vertices() {
        return Err(Error::Dimension("data and graph differ in dimension".into()));
    }
    stats.require_pd()?;
    let free = graph.free_index_set();
    let map = DuplicationMap::new(graph);
    let scale = stats.cov().amax();
    let mut sigma = cfg.start_matrix(graph)?;
    let mut pd_flags = Vec::new();
    let mut loglik_trace = Vec::new();
    let mut status = AndersonStatus::NotConverged;
    let mut iteration = 0;
    for r in 1..=cfg.max_iter {
        let Some(k) = general_inverse(&sigma) else {
            status = AndersonStatus::SingularSystem;
            break;
        };
        let (a, b) = system_from_inverse(&k, stats, &free);
        let Some(next_free) = general_solve(&a, &b) else {
            status = AndersonStatus::SingularSystem;
            break;
        };
        let next = map.expand(next_free.as_slice());
        iteration = r;
        if next.iter().any(|x| !x.is_finite() || x.abs() > BLOWUP_FACTOR * scale) {
            sigma = next;
            pd_flags.push(false);
            loglik_trace.push(None);
            status = AndersonStatus::Diverged;
            break;
        }
        let pd = linalg::is_positive_definite(&next);
        pd_flags.push(pd);
        loglik_trace.push(if pd { model::loglik_matrix(stats, &next).ok() } else { None });
        let delta = linalg::max_abs_diff(&next, &sigma);
        sigma = next;
        if delta < cfg.tol {
            if let Some(k) = general_inverse(&sigma) {
                if residual_general(&k, stats, &free) <= 100.0 * cfg.tol {
                    status = if pd { AndersonStatus::ConvergedPd } else { AndersonStatus::ConvergedNonPd };
                    break;
                }
            }
        }
    }
    let stationarity = general_inverse(&sigma).map(|k| residual_general(&k, stats, &free));
    Ok(AndersonOutcome {
        state: AndersonState { sigma, iteration, pd_flags },
        status,
        loglik_trace,
        stationarity,
        graph: Arc::new(graph.clone()),
    })
}
