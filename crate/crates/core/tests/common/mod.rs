//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use covgraph::graph::CovarianceGraph;
use covgraph::{datasets, linalg, model, SampleStats};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generic PD matrix: `A Aᵀ / k + 0.1 I` with Gaussian `A` (p × k).
pub fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = p + 3;
    let a = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut m = &a * a.transpose() / k as f64 + DMatrix::identity(p, p) * 0.1;
    linalg::symmetrize(&mut m);
    m
}

/// Gaussian rows with the given covariance.
pub fn random_data(sigma: &DMatrix<f64>, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    covgraph::simulation::sample_gaussian(sigma, n, rng).unwrap()
}

pub fn path_stats(seed: u64, n: usize) -> SampleStats {
    let mut r = rng(seed);
    SampleStats::from_covariance(n, random_spd(4, &mut r)).unwrap()
}

/// Random graph on `p` vertices with edge probability `prob`.
pub fn random_graph(p: usize, prob: f64, rng: &mut ChaCha8Rng) -> CovarianceGraph {
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }
    CovarianceGraph::from_indices(p, &edges).unwrap()
}

pub fn path_graph() -> CovarianceGraph {
    datasets::path_graph()
}

/// Writes `value` into positions `(i, j)` and `(j, i)`.
pub fn set_sym(m: &mut DMatrix<f64>, i: usize, j: usize, value: f64) {
    m[(i, j)] = value;
    m[(j, i)] = value;
}

/// Builds a patterned symmetric matrix from free values in free-set order.
pub fn from_free(graph: &CovarianceGraph, free: &[f64]) -> DMatrix<f64> {
    let p = graph.num_vertices();
    let mut m = DMatrix::zeros(p, p);
    for (&(i, j), &v) in graph.free_index_set().pairs().iter().zip(free) {
        set_sym(&mut m, i, j, v);
    }
    m
}

/// Log-likelihood written out from its definition, `−∞` outside the PD cone.
pub fn direct_loglik(stats: &SampleStats, sigma: &DMatrix<f64>) -> f64 {
    let Some(chol) = sigma.clone().cholesky() else { return f64::NEG_INFINITY };
    let p = sigma.nrows() as f64;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = (chol.inverse() * stats.cov()).trace();
    -(stats.n() as f64) / 2.0 * (p * (2.0 * std::f64::consts::PI).ln() + logdet + trace)
}

struct NegLoglik<'a, F: Fn(&[f64]) -> DMatrix<f64>> {
    stats: &'a SampleStats,
    build: &'a F,
}

impl<F: Fn(&[f64]) -> DMatrix<f64>> CostFunction for NegLoglik<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let l = direct_loglik(self.stats, &(self.build)(x));
        Ok(if l.is_finite() { -l } else { 1e30 })
    }
}

/// Maximizes the log-likelihood of `build(x)` over `x` by restarted
/// Nelder–Mead. Returns the maximizer and the maximum.
pub fn nelder_mead_max<F>(stats: &SampleStats, build: F, start: Vec<f64>, step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> DMatrix<f64>,
{
    let problem = NegLoglik { stats, build: &build };
    let mut best = start;
    let mut best_cost = problem.cost(&best).unwrap();
    let mut scale = step;
    for _ in 0..8 {
        let mut simplex = vec![best.clone()];
        for k in 0..best.len() {
            let mut v = best.clone();
            v[k] += scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).unwrap();
        let res =
            Executor::new(NegLoglik { stats, build: &build }, solver).configure(|s| s.max_iters(20_000)).run().unwrap();
        let x = res.state().get_best_param().unwrap().clone();
        let c = res.state().get_best_cost();
        let improved = best_cost - c;
        if c < best_cost {
            best = x;
            best_cost = c;
        }
        if improved.abs() < 1e-12 {
            break;
        }
        scale *= 0.3;
    }
    (best, -best_cost)
}

/// Brute-force ML over all free entries of `graph`, started at `diag(S)`.
pub fn brute_force_ml(stats: &SampleStats, graph: &CovarianceGraph) -> (DMatrix<f64>, f64) {
    let free = graph.free_index_set();
    let start: Vec<f64> = free.pairs().iter().map(|&(i, j)| if i == j { stats.cov()[(i, i)] } else { 0.0 }).collect();
    let (x, l) = nelder_mead_max(stats, |x| from_free(graph, x), start, 0.2);
    (from_free(graph, &x), l)
}

/// Solves `(Σ⁻¹)_F = (S⁻¹)_F` over the free entries by Newton's method with
/// a forward-difference Jacobian, started at `start`.
pub fn dual_root(stats: &SampleStats, graph: &CovarianceGraph, start: &DMatrix<f64>) -> DMatrix<f64> {
    let pairs = graph.free_index_set().pairs().to_vec();
    let t = stats.cov().clone().try_inverse().unwrap();
    let residual = |x: &DVector<f64>| -> Option<DVector<f64>> {
        let k = from_free(graph, x.as_slice()).try_inverse()?;
        Some(DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| k[(i, j)] - t[(i, j)])))
    };
    let mut x = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| start[(i, j)]));
    for _ in 0..100 {
        let r = residual(&x).unwrap();
        if r.amax() < 1e-13 {
            break;
        }
        let h = 1e-7;
        let jac = DMatrix::from_fn(pairs.len(), pairs.len(), |a, b| {
            let mut xp = x.clone();
            xp[b] += h;
            (residual(&xp).unwrap()[a] - r[a]) / h
        });
        let step = jac.lu().solve(&r).unwrap();
        let mut t = 1.0;
        loop {
            let trial = &x - t * &step;
            if linalg::is_positive_definite(&from_free(graph, trial.as_slice())) {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
    from_free(graph, x.as_slice())
}

/// Maximizes `Σ log w_k` subject to `Σ w_k g_k = 0`, `Σ w_k = 1` with an
/// infeasible-start primal Newton method; returns `Σ log(n w_k)`.
pub fn primal_el(g: &DMatrix<f64>) -> f64 {
    let (n, m) = g.shape();
    // Equality constraints A w = b.
    let mut a = DMatrix::zeros(m + 1, n);
    a.view_mut((0, 0), (m, n)).copy_from(&g.transpose());
    a.row_mut(m).fill(1.0);
    let mut b = DVector::zeros(m + 1);
    b[m] = 1.0;
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut nu = DVector::zeros(m + 1);
    let resid = |w: &DVector<f64>, nu: &DVector<f64>| -> DVector<f64> {
        let grad = w.map(|v| 1.0 / v);
        let mut r = DVector::zeros(n + m + 1);
        r.rows_mut(0, n).copy_from(&(-grad + a.transpose() * nu));
        r.rows_mut(n, m + 1).copy_from(&(&a * w - &b));
        r
    };
    for _ in 0..200 {
        let r = resid(&w, &nu);
        if r.norm() < 1e-13 {
            break;
        }
        // KKT system for minimizing −Σ log w.
        let mut kkt = DMatrix::zeros(n + m + 1, n + m + 1);
        for k in 0..n {
            kkt[(k, k)] = 1.0 / (w[k] * w[k]);
        }
        kkt.view_mut((0, n), (n, m + 1)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (m + 1, n)).copy_from(&a);
        let step = kkt.lu().solve(&(-&r)).unwrap();
        let dw = step.rows(0, n).into_owned();
        let dnu = step.rows(n, m + 1).into_owned();
        let mut t = 1.0;
        while (0..n).any(|k| w[k] + t * dw[k] <= 0.0) {
            t *= 0.5;
        }
        while resid(&(&w + t * &dw), &(&nu + t * &dnu)).norm() > (1.0 - 0.01 * t) * r.norm() && t > 1e-12 {
            t *= 0.5;
        }
        w += t * &dw;
        nu += t * &dnu;
    }
    assert!((&a * &w - &b).amax() < 1e-10, "primal oracle did not reach feasibility");
    w.iter().map(|v| (n as f64 * v).ln()).sum()
}

/// Moment vectors `g_k` at `mu` for the missing pairs of `graph`.
pub fn moments(data: &DMatrix<f64>, mu: &DVector<f64>, graph: &CovarianceGraph) -> DMatrix<f64> {
    let pairs = covgraph::el::missing_pairs(graph);
    let (n, p) = data.shape();
    DMatrix::from_fn(n, p + pairs.len(), |k, c| {
        if c < p {
            data[(k, c)] - mu[c]
        } else {
            let (i, j) = pairs[c - p];
            (data[(k, i)] - mu[i]) * (data[(k, j)] - mu[j])
        }
    })
}

/// Brute-force maximal complete sets, each sorted, in lexicographic order.
pub fn brute_force_cliques(graph: &CovarianceGraph) -> Vec<Vec<usize>> {
    let p = graph.num_vertices();
    let complete = |mask: u32| {
        (0..p).all(|i| (0..p).all(|j| i == j || mask >> i & 1 == 0 || mask >> j & 1 == 0 || graph.adjacent(i, j)))
    };
    let mut out = Vec::new();
    for mask in 1u32..(1 << p) {
        if !complete(mask) {
            continue;
        }
        let maximal = (0..p).all(|v| mask >> v & 1 == 1 || !complete(mask | 1 << v));
        if maximal {
            out.push((0..p).filter(|&v| mask >> v & 1 == 1).collect::<Vec<_>>());
        }
    }
    out.sort();
    out
}

/// Central finite-difference gradient of the log-likelihood over free entries.
pub fn fd_score(stats: &SampleStats, graph: &CovarianceGraph, sigma: &DMatrix<f64>, h: f64) -> DVector<f64> {
    let pairs = graph.free_index_set().pairs().to_vec();
    DVector::from_iterator(
        pairs.len(),
        pairs.iter().map(|&(i, j)| {
            let mut plus = sigma.clone();
            let mut minus = sigma.clone();
            set_sym(&mut plus, i, j, sigma[(i, j)] + h);
            set_sym(&mut minus, i, j, sigma[(i, j)] - h);
            (model::loglik_matrix(stats, &plus).unwrap() - model::loglik_matrix(stats, &minus).unwrap()) / (2.0 * h)
        }),
    )
}

pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}
