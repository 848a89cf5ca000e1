//! Iterative conditional fitting with univariate updates.
//!
//! Each update fixes `Σ_{−i,−i}` and fits the regression of variable `i` on
//! its pseudo-variables `Z = [(Σ_{−i,−i})⁻¹]_{spo(i),−i} Y_{−i}` by least
//! squares. All cross products are expressed through `S`, so the data never
//! need to be materialized and the cost does not depend on `n`.
//!
//! `Σ_{−i,−i}` is block diagonal over the connected components of the graph
//! with `i` removed; only the components that contain a spouse of `i` are
//! inverted.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fit::{run_sweeps, FitConfig, FitResult, Method};
use crate::graph::CovarianceGraph;
use crate::linalg;
use crate::model::{ConstrainedCovariance, SampleStats};

/// Second moments of a block `C` and its pseudo-variables, in `S`-space.
#[derive(Clone, Debug)]
pub(crate) struct PseudoRegression {
    /// `spo(C)`, ascending.
    pub spouses: Vec<usize>,
    /// `Y_C Zᵀ / n = S_{C,−C} [(Σ_{−C,−C})⁻¹]_{−C,spo}`.
    pub cross: DMatrix<f64>,
    /// `Z Zᵀ / n`.
    pub gram: DMatrix<f64>,
    /// `[(Σ_{−C,−C})⁻¹]_{spo,spo}`.
    pub inv_spouses: DMatrix<f64>,
}

pub(crate) fn pseudo_regression(
    stats: &SampleStats,
    sigma: &DMatrix<f64>,
    graph: &CovarianceGraph,
    block: &[usize],
) -> Result<PseudoRegression> {
    let spouses = graph.spouses_of_set(block)?;
    if spouses.is_empty() {
        return Ok(PseudoRegression {
            spouses,
            cross: DMatrix::zeros(block.len(), 0),
            gram: DMatrix::zeros(0, 0),
            inv_spouses: DMatrix::zeros(0, 0),
        });
    }
    let reach = graph.reachable_avoiding(&spouses, block);
    let inv = linalg::spd_inverse(&linalg::submatrix(sigma, &reach, &reach), "covariance of the complement")?;
    let positions: Vec<usize> = spouses.iter().map(|s| reach.binary_search(s).expect("spouse is reachable")).collect();
    let all: Vec<usize> = (0..reach.len()).collect();
    let inv_r_spo = linalg::submatrix(&inv, &all, &positions);
    let s = stats.cov();
    let cross = linalg::submatrix(s, block, &reach) * &inv_r_spo;
    let mut gram = inv_r_spo.transpose() * linalg::submatrix(s, &reach, &reach) * &inv_r_spo;
    linalg::symmetrize(&mut gram);
    let inv_spouses = linalg::submatrix(&inv, &positions, &positions);
    Ok(PseudoRegression { spouses, cross, gram, inv_spouses })
}

/// Cross products `Y_i Zᵀ/n` (`1 × spo(i)`) and Gram matrix `Z Zᵀ/n` of the
/// pseudo-variables for vertex `i`. Only `Σ_{−i,−i}` is read from `sigma`.
pub fn pseudo_variable_gram(
    stats: &SampleStats,
    sigma: &ConstrainedCovariance,
    i: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let g = sigma.graph();
    if g.spouses(i)?.is_empty() {
        return Err(Error::InvalidArgument(format!("vertex {} has no spouses", g.label(i))));
    }
    let reg = pseudo_regression(stats, sigma.matrix(), g, &[i])?;
    Ok((reg.cross, reg.gram))
}

/// One ICF update of row and column `i`: the unique maximizer of the
/// likelihood over matrices that agree with `sigma` outside row/column `i`.
pub fn icf_update_vertex(
    stats: &SampleStats,
    sigma: &ConstrainedCovariance,
    i: usize,
) -> Result<ConstrainedCovariance> {
    if stats.dim() != sigma.dim() {
        return Err(Error::Dimension("sample covariance and Σ differ in size".into()));
    }
    let mut m = sigma.matrix().clone();
    update_vertex(stats, &mut m, sigma.graph(), i)?;
    Ok(ConstrainedCovariance::from_parts_unchecked(sigma.graph_arc().clone(), m))
}

pub(crate) fn update_vertex(
    stats: &SampleStats,
    sigma: &mut DMatrix<f64>,
    graph: &CovarianceGraph,
    i: usize,
) -> Result<()> {
    let s_ii = stats.cov()[(i, i)];
    let reg = pseudo_regression(stats, sigma, graph, &[i])?;
    if reg.spouses.is_empty() {
        sigma[(i, i)] = s_ii;
        return Ok(());
    }
    let cross: DVector<f64> = reg.cross.row(0).transpose();
    let beta = linalg::spd_solve(&reg.gram, &cross, "pseudo-variable Gram matrix")?;
    // Residual variance of the least-squares fit.
    let lambda = s_ii - 2.0 * beta.dot(&cross) + beta.dot(&(&reg.gram * &beta));
    for (k, &j) in reg.spouses.iter().enumerate() {
        sigma[(i, j)] = beta[k];
        sigma[(j, i)] = beta[k];
    }
    sigma[(i, i)] = lambda + beta.dot(&(&reg.inv_spouses * &beta));
    Ok(())
}

/// Maximum likelihood estimate by univariate iterative conditional fitting.
pub fn fit_icf(stats: &SampleStats, graph: &CovarianceGraph, cfg: &FitConfig) -> Result<FitResult> {
    let order = cfg.vertex_order(graph.num_vertices())?;
    let arc = Arc::new(graph.clone());
    let g = arc.clone();
    run_sweeps(stats, arc, cfg, Method::MlIcf, |sigma| {
        for &i in &order {
            update_vertex(stats, sigma, &g, i)?;
        }
        Ok(())
    })
}

/// Runs [`fit_icf`] from the configured start (or the identity) and from each
/// extra start, returning the fit with the largest log-likelihood.
pub fn fit_icf_multistart(
    stats: &SampleStats,
    graph: &CovarianceGraph,
    cfg: &FitConfig,
    extra_starts: &[ConstrainedCovariance],
) -> Result<FitResult> {
    let mut best = fit_icf(stats, graph, cfg)?;
    for start in extra_starts {
        let fit = fit_icf(stats, graph, &cfg.clone().with_start(start.clone()))?;
        if fit.loglik > best.loglik {
            best = fit;
        }
    }
    Ok(best)
}

/// A random positive definite matrix in `P(G)`: free off-diagonal entries
/// uniform on `(−1, 1)`, diagonal made strictly dominant.
pub fn random_start<R: Rng + ?Sized>(graph: &CovarianceGraph, rng: &mut R) -> ConstrainedCovariance {
    let p = graph.num_vertices();
    let mut m = DMatrix::zeros(p, p);
    for &(i, j) in graph.edges() {
        let v: f64 = rng.random_range(-1.0..1.0);
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    for i in 0..p {
        let off: f64 = (0..p).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        m[(i, i)] = off + rng.random_range(0.5..1.5);
    }
    ConstrainedCovariance::from_parts_unchecked(Arc::new(graph.clone()), m)
}
