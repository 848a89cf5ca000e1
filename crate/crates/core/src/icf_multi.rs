//! Iterative conditional fitting with multivariate (block) updates.
//!
//! For a complete set `C` the regression of `Y_C` on its pseudo-variables is
//! a system of seemingly unrelated regressions. Each block update performs a
//! single two-step pass: generalized least squares for `Σ_{C,spo(C)}` with the
//! weight `Ω_C = Λ_C⁻¹` taken from the incoming estimate, then the residual
//! covariance as the new `Λ_C`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{run_sweeps, FitConfig, FitResult, Method};
use crate::graph::{CompleteSetFamily, CovarianceGraph};
use crate::icf::pseudo_regression;
use crate::linalg;
use crate::model::{ConstrainedCovariance, SampleStats};

/// The selection map `P_C` with `vec(Σ_{C,spo(C)}) = P_C σ_C`, stored as the
/// position of the single one in each column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSelector {
    block: Vec<usize>,
    spouses: Vec<usize>,
    /// For each element of `σ_C`: (index into `block`, index into `spouses`).
    entries: Vec<(usize, usize)>,
}

impl BlockSelector {
    pub fn new(graph: &CovarianceGraph, block: &[usize], spouses: &[usize]) -> Self {
        let mut entries = Vec::new();
        // Column-major over the C × spo(C) matrix.
        for (b, &j) in spouses.iter().enumerate() {
            for (a, &i) in block.iter().enumerate() {
                if graph.adjacent(i, j) {
                    entries.push((a, b));
                }
            }
        }
        Self { block: block.to_vec(), spouses: spouses.to_vec(), entries }
    }

    /// Number of free coefficients `|σ_C|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(i, j)` vertex pair of column `u`.
    pub fn pair(&self, u: usize) -> (usize, usize) {
        let (a, b) = self.entries[u];
        (self.block[a], self.spouses[b])
    }

    /// Row of `vec(Σ_{C,spo(C)})` holding the one in column `u`.
    pub fn vec_row(&self, u: usize) -> usize {
        let (a, b) = self.entries[u];
        a + self.block.len() * b
    }

    /// Fills a `C × spo(C)` matrix from `σ_C`.
    pub fn expand(&self, values: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.block.len(), self.spouses.len());
        for (&(a, b), &v) in self.entries.iter().zip(values.iter()) {
            m[(a, b)] = v;
        }
        m
    }

    /// `P_Cᵀ (G ⊗ Ω) P_C`.
    fn normal_matrix(&self, gram: &DMatrix<f64>, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |u, v| {
            let (a, b) = self.entries[u];
            let (a2, b2) = self.entries[v];
            gram[(b, b2)] * omega[(a, a2)]
        })
    }

    /// `P_Cᵀ vec(M)`.
    fn gather(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|&(a, b)| m[(a, b)]))
    }
}

/// One multivariate ICF update for the complete set `c`.
pub fn block_update(stats: &SampleStats, sigma: &ConstrainedCovariance, c: &[usize]) -> Result<ConstrainedCovariance> {
    if stats.dim() != sigma.dim() {
        return Err(Error::Dimension("sample covariance and Σ differ in size".into()));
    }
    let block = normalize_block(sigma.graph(), c)?;
    let mut m = sigma.matrix().clone();
    update_block(stats, &mut m, sigma.graph(), &block)?;
    Ok(ConstrainedCovariance::from_parts_unchecked(sigma.graph_arc().clone(), m))
}

fn normalize_block(graph: &CovarianceGraph, c: &[usize]) -> Result<Vec<usize>> {
    let mut block = c.to_vec();
    block.sort_unstable();
    block.dedup();
    if block.is_empty() {
        return Err(Error::InvalidArgument("block must be non-empty".into()));
    }
    if let Some(&bad) = block.iter().find(|&&i| i >= graph.num_vertices()) {
        return Err(Error::UnknownVertex(format!("#{bad}")));
    }
    if !graph.is_complete_set(&block) {
        return Err(Error::InvalidArgument("block is not a complete set".into()));
    }
    Ok(block)
}

pub(crate) fn update_block(
    stats: &SampleStats,
    sigma: &mut DMatrix<f64>,
    graph: &CovarianceGraph,
    block: &[usize],
) -> Result<()> {
    let s = stats.cov();
    let s_cc = linalg::submatrix(s, block, block);
    let reg = pseudo_regression(stats, sigma, graph, block)?;
    if reg.spouses.is_empty() {
        for (a, &i) in block.iter().enumerate() {
            for (b, &j) in block.iter().enumerate() {
                sigma[(i, j)] = s_cc[(a, b)];
            }
        }
        return Ok(());
    }
    let spouses = &reg.spouses;
    // Incoming conditional covariance; Σ_{C,−C} vanishes outside spo(C).
    let current = linalg::submatrix(sigma, block, spouses);
    let mut lambda_in = linalg::submatrix(sigma, block, block) - &current * &reg.inv_spouses * current.transpose();
    linalg::symmetrize(&mut lambda_in);
    let omega = linalg::spd_inverse(&lambda_in, "conditional covariance")?;

    let selector = BlockSelector::new(graph, block, spouses);
    let normal = selector.normal_matrix(&reg.gram, &omega);
    let rhs = selector.gather(&(&omega * &reg.cross));
    let coef = linalg::spd_solve(&normal, &rhs, "GLS normal matrix")?;
    let b = selector.expand(&coef);

    let bc = &b * reg.cross.transpose();
    let mut lambda = &s_cc - &bc - bc.transpose() + &b * &reg.gram * b.transpose();
    linalg::symmetrize(&mut lambda);
    let mut new_cc = lambda + &b * &reg.inv_spouses * b.transpose();
    linalg::symmetrize(&mut new_cc);

    for (a, &i) in block.iter().enumerate() {
        for (k, &j) in spouses.iter().enumerate() {
            sigma[(i, j)] = b[(a, k)];
            sigma[(j, i)] = b[(a, k)];
        }
        for (a2, &i2) in block.iter().enumerate() {
            sigma[(i, i2)] = new_cc[(a, a2)];
        }
    }
    Ok(())
}

/// Maximum likelihood estimate by ICF with block updates over `family`.
pub fn fit_icf_multi(
    stats: &SampleStats,
    graph: &CovarianceGraph,
    family: &CompleteSetFamily,
    cfg: &FitConfig,
) -> Result<FitResult> {
    graph.validate_family(family).map_err(Error::InvalidFamily)?;
    let blocks: Vec<Vec<usize>> = family.sets.iter().map(|s| normalize_block(graph, s)).collect::<Result<_>>()?;
    let arc = Arc::new(graph.clone());
    let g = arc.clone();
    run_sweeps(stats, arc, cfg, Method::MlIcfMulti, |sigma| {
        for block in &blocks {
            update_block(stats, sigma, &g, block)?;
        }
        Ok(())
    })
}
