//! Configuration and result types shared by the fitters, and the sweep loop
//! used by both ICF variants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::CovarianceGraph;
use crate::linalg;
use crate::model::{self, ConstrainedCovariance, SampleStats};

/// Estimation method tags, spelled as on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    MlIcf,
    MlIcfMulti,
    MlAnderson,
    Dual,
    El,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::MlIcf, Method::MlIcfMulti, Method::MlAnderson, Method::Dual, Method::El];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MlIcf => "ml-icf",
            Method::MlIcfMulti => "ml-icf-multi",
            Method::MlAnderson => "ml-anderson",
            Method::Dual => "dual",
            Method::El => "el",
        }
    }

    /// Whether the method targets the Gaussian likelihood maximum.
    pub fn is_likelihood(self) -> bool {
        matches!(self, Method::MlIcf | Method::MlIcfMulti | Method::MlAnderson)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Stopping rule and starting point for the iterative fitters.
#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Convergence threshold on the largest absolute entry change per sweep.
    pub tol: f64,
    /// Maximum number of sweeps.
    pub max_iter: usize,
    /// Starting value; the identity when `None`.
    pub start: Option<ConstrainedCovariance>,
    /// Record the log-likelihood after every sweep.
    pub record_trace: bool,
    /// Vertex order for univariate sweeps; declaration order when `None`.
    pub order: Option<Vec<usize>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, start: None, record_trace: false, order: None }
    }
}

impl FitConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_start(mut self, start: ConstrainedCovariance) -> Self {
        self.start = Some(start);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.order = Some(order);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// The starting matrix, checked against `graph`.
    pub(crate) fn start_matrix(&self, graph: &CovarianceGraph) -> Result<DMatrix<f64>> {
        match &self.start {
            None => Ok(DMatrix::identity(graph.num_vertices(), graph.num_vertices())),
            Some(s) => {
                model::check_pattern(graph, s.matrix())?;
                Ok(s.matrix().clone())
            }
        }
    }

    pub(crate) fn vertex_order(&self, p: usize) -> Result<Vec<usize>> {
        match &self.order {
            None => Ok((0..p).collect()),
            Some(o) => {
                let mut sorted = o.clone();
                sorted.sort_unstable();
                if sorted != (0..p).collect::<Vec<_>>() {
                    return Err(Error::InvalidArgument("vertex order must be a permutation of all vertices".into()));
                }
                Ok(o.clone())
            }
        }
    }
}

/// Outcome of a fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub estimate: ConstrainedCovariance,
    /// Profile log-likelihood at the estimate.
    pub loglik: f64,
    /// Sweeps (or iterations) performed.
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each sweep, when requested.
    pub trace: Option<Vec<f64>>,
    pub method: Method,
    /// Likelihood-equation residual at the estimate, see
    /// [`model::stationarity_residual`].
    pub stationarity: f64,
}

/// Runs `sweep` until the largest entry change drops below `cfg.tol` and the
/// likelihood equations hold to within `100 * cfg.tol`.
pub(crate) fn run_sweeps<F>(
    stats: &SampleStats,
    graph: Arc<CovarianceGraph>,
    cfg: &FitConfig,
    method: Method,
    mut sweep: F,
) -> Result<FitResult>
where
    F: FnMut(&mut DMatrix<f64>) -> Result<()>,
{
    cfg.validate()?;
    if stats.dim() != graph.num_vertices() {
        return Err(Error::Dimension(format!(
            "data has {} variables, graph has {} vertices",
            stats.dim(),
            graph.num_vertices()
        )));
    }
    stats.require_pd()?;
    let mut sigma = cfg.start_matrix(&graph)?;
    if !linalg::is_positive_definite(&sigma) {
        return Err(Error::NotPositiveDefinite("starting value"));
    }
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;
    for r in 1..=cfg.max_iter {
        let previous = sigma.clone();
        sweep(&mut sigma)?;
        iterations = r;
        if let Some(t) = trace.as_mut() {
            t.push(model::loglik_matrix(stats, &sigma)?);
        }
        if linalg::max_abs_diff(&sigma, &previous) < cfg.tol {
            let current = ConstrainedCovariance::from_parts_unchecked(graph.clone(), sigma.clone());
            stationarity = model::stationarity_residual(stats, &current)?;
            if stationarity <= 100.0 * cfg.tol {
                converged = true;
                break;
            }
        }
    }
    if !linalg::is_positive_definite(&sigma) {
        return Err(Error::NotPositiveDefinite("iterate"));
    }
    let estimate = ConstrainedCovariance::from_parts_unchecked(graph, sigma);
    if !converged {
        stationarity = model::stationarity_residual(stats, &estimate)?;
    }
    let loglik = model::profile_loglik(stats, &estimate)?;
    Ok(FitResult { estimate, loglik, iterations, converged, trace, method, stationarity })
}
