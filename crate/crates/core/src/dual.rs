//! Dual ("discriminant information") estimation.
//!
//! The dual estimate is the unique `Σ̂ ∈ P(G)` with `(Σ̂⁻¹)_ij = (S⁻¹)_ij` for
//! every `(i, j) ∈ F`. Reading `T = S⁻¹` as the sample covariance of a
//! concentration-graph problem on `G`, `Σ̂` is that problem's fitted
//! concentration matrix, found by iterative proportional fitting over the
//! cliques. For decomposable graphs the fit is available in closed form from
//! a perfect sequence of cliques.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fit::{FitConfig, FitResult, Method};
use crate::graph::{CompleteSetFamily, CovarianceGraph};
use crate::linalg;
use crate::model::{self, ConstrainedCovariance, SampleStats};

/// `max_{(i,j) ∈ F} |(Σ⁻¹)_ij − (S⁻¹)_ij|`.
pub fn dual_residual(stats: &SampleStats, sigma: &ConstrainedCovariance) -> Result<f64> {
    let t = linalg::spd_inverse(stats.cov(), "sample covariance")?;
    let k = linalg::spd_inverse(sigma.matrix(), "covariance")?;
    Ok(residual(&k, &t, sigma.graph()))
}

fn residual(k: &DMatrix<f64>, t: &DMatrix<f64>, graph: &CovarianceGraph) -> f64 {
    graph.free_index_set().pairs().iter().map(|&(i, j)| (k[(i, j)] - t[(i, j)]).abs()).fold(0.0, f64::max)
}

fn prepare(stats: &SampleStats, graph: &CovarianceGraph, cfg: &FitConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    if stats.dim() != graph.num_vertices() {
        return Err(Error::Dimension("data and graph differ in dimension".into()));
    }
    stats.require_pd()?;
    linalg::spd_inverse(stats.cov(), "sample covariance")
}

fn finish(
    stats: &SampleStats,
    graph: &CovarianceGraph,
    sigma: DMatrix<f64>,
    iterations: usize,
    converged: bool,
) -> Result<FitResult> {
    if !linalg::is_positive_definite(&sigma) {
        return Err(Error::NotPositiveDefinite("dual estimate"));
    }
    let estimate = ConstrainedCovariance::from_parts_unchecked(Arc::new(graph.clone()), sigma);
    let loglik = model::profile_loglik(stats, &estimate)?;
    let stationarity = model::stationarity_residual(stats, &estimate)?;
    Ok(FitResult { estimate, loglik, iterations, converged, trace: None, method: Method::Dual, stationarity })
}

/// Dual estimate. Decomposable graphs use the closed form (verified against
/// `cfg.tol`, with IPF as the fallback); other graphs run IPF over the cliques.
pub fn fit_dual(stats: &SampleStats, graph: &CovarianceGraph, cfg: &FitConfig) -> Result<FitResult> {
    let t = prepare(stats, graph, cfg)?;
    if let Some(seq) = graph.perfect_sequence() {
        let p = graph.num_vertices();
        let mut k = DMatrix::zeros(p, p);
        for (clique, sep) in &seq {
            add_padded_inverse(&mut k, &t, clique, 1.0)?;
            if !sep.is_empty() {
                add_padded_inverse(&mut k, &t, sep, -1.0)?;
            }
        }
        zero_off_pattern(&mut k, graph);
        linalg::symmetrize(&mut k);
        if let Some(inv) =
            linalg::is_positive_definite(&k).then(|| linalg::spd_inverse(&k, "dual estimate").ok()).flatten()
        {
            if residual(&inv, &t, graph) <= cfg.tol {
                return finish(stats, graph, k, 1, true);
            }
        }
    }
    fit_dual_ipf(stats, graph, &graph.cliques(), cfg)
}

fn add_padded_inverse(k: &mut DMatrix<f64>, t: &DMatrix<f64>, set: &[usize], sign: f64) -> Result<()> {
    let inv = linalg::spd_inverse(&linalg::submatrix(t, set, set), "marginal of the inverse sample covariance")?;
    for (a, &i) in set.iter().enumerate() {
        for (b, &j) in set.iter().enumerate() {
            k[(i, j)] += sign * inv[(a, b)];
        }
    }
    Ok(())
}

fn zero_off_pattern(k: &mut DMatrix<f64>, graph: &CovarianceGraph) {
    let p = graph.num_vertices();
    for i in 0..p {
        for j in 0..p {
            if i != j && !graph.adjacent(i, j) {
                k[(i, j)] = 0.0;
            }
        }
    }
}

/// Dual estimate by iterative proportional fitting over `cliques`, processed
/// in the given order, starting from the identity.
///
/// Each step sets `Σ̂_{C,C} ← Σ̂_{C,C} + (T_{C,C})⁻¹ − ((Σ̂⁻¹)_{C,C})⁻¹`, after
/// which `(Σ̂⁻¹)_{C,C} = T_{C,C}`. Stops once the dual residual is at most
/// `cfg.tol`.
pub fn fit_dual_ipf(
    stats: &SampleStats,
    graph: &CovarianceGraph,
    cliques: &CompleteSetFamily,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let t = prepare(stats, graph, cfg)?;
    graph.validate_family(cliques).map_err(Error::InvalidFamily)?;
    let targets: Vec<DMatrix<f64>> = cliques
        .sets
        .iter()
        .map(|c| linalg::spd_inverse(&linalg::submatrix(&t, c, c), "marginal of the inverse sample covariance"))
        .collect::<Result<_>>()?;
    let p = graph.num_vertices();
    let mut k = DMatrix::identity(p, p);
    let mut converged = false;
    let mut iterations = 0;
    for r in 1..=cfg.max_iter {
        for (c, target) in cliques.sets.iter().zip(&targets) {
            let inv = linalg::spd_inverse(&k, "dual iterate")?;
            let fitted = linalg::spd_inverse(&linalg::submatrix(&inv, c, c), "dual iterate marginal")?;
            for (a, &i) in c.iter().enumerate() {
                for (b, &j) in c.iter().enumerate() {
                    k[(i, j)] += target[(a, b)] - fitted[(a, b)];
                }
            }
            linalg::symmetrize(&mut k);
        }
        iterations = r;
        let inv = linalg::spd_inverse(&k, "dual iterate")?;
        if residual(&inv, &t, graph) <= cfg.tol {
            converged = true;
            break;
        }
    }
    finish(stats, graph, k, iterations, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;

    #[test]
    fn complete_graph_returns_sample() {
        let g = CovarianceGraph::complete(&["a", "b", "c"]).unwrap();
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.1, 0.4, 1.0, 0.3, 0.1, 0.3, 1.5]);
        let st = SampleStats::from_covariance(10, s.clone()).unwrap();
        let fit = fit_dual(&st, &g, &FitConfig::default()).unwrap();
        assert!(linalg::max_abs_diff(fit.estimate.matrix(), &s) < 1e-12);
    }

    #[test]
    fn two_variables_without_edge() {
        let r = 0.6;
        let g = CovarianceGraph::edgeless(&["a", "b"]).unwrap();
        let st = SampleStats::from_covariance(10, DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0])).unwrap();
        let fit = fit_dual(&st, &g, &FitConfig::default()).unwrap();
        let expected = DMatrix::identity(2, 2) * (1.0 - r * r);
        assert!(linalg::max_abs_diff(fit.estimate.matrix(), &expected) < 1e-14);
    }

    #[test]
    fn closed_form_matches_ipf_on_decomposable_graph() {
        let g = datasets::path_graph();
        let mut s = datasets::path_sigma();
        s[(0, 1)] = 0.2;
        s[(1, 0)] = 0.2;
        let st = SampleStats::from_covariance(10, s).unwrap();
        let cfg = FitConfig::default().with_tol(1e-12);
        let closed = fit_dual(&st, &g, &cfg).unwrap();
        assert_eq!(closed.iterations, 1);
        let ipf = fit_dual_ipf(&st, &g, &g.cliques(), &cfg).unwrap();
        assert!(linalg::max_abs_diff(closed.estimate.matrix(), ipf.estimate.matrix()) < 1e-10);
        assert!(dual_residual(&st, &closed.estimate).unwrap() <= 1e-12);
        model::check_pattern(&g, closed.estimate.matrix()).unwrap();
    }

    #[test]
    fn four_cycle_uses_ipf() {
        let g = CovarianceGraph::from_indices(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.3, 0.1, 0.2, 0.3, 1.2, 0.25, 0.05, 0.1, 0.25, 0.9, 0.3, 0.2, 0.05, 0.3, 1.1],
        );
        let st = SampleStats::from_covariance(10, s).unwrap();
        let fit = fit_dual(&st, &g, &FitConfig::default().with_tol(1e-10)).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations > 1);
        assert!(dual_residual(&st, &fit.estimate).unwrap() <= 1e-10);
        model::check_pattern(&g, fit.estimate.matrix()).unwrap();
    }
}
