//! Empirical likelihood estimation under zero-covariance constraints.
//!
//! For a fixed mean `μ` the weights maximize `Σ log(n w_k)` subject to
//! `Σ w_k g_k(μ) = 0`, where `g_k` stacks the mean residuals `y_k − μ` and the
//! products `(y_ki − μ_i)(y_kj − μ_j)` for every non-adjacent pair. The inner
//! problem is solved through its Lagrange dual, and the mean is profiled out
//! by a quasi-Newton search.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::CovarianceGraph;
use crate::linalg;
use crate::model::{ConstrainedCovariance, SampleStats};

/// Solver settings.
#[derive(Clone, Debug)]
pub struct ElConfig {
    /// Largest accepted constraint violation `|Σ w_k g_k|`, in data units.
    pub tol: f64,
    /// Newton iterations for each inner problem.
    pub max_iter: usize,
    /// Scale-free gradient threshold for the search over `μ`.
    pub outer_tol: f64,
    /// Quasi-Newton iterations over `μ`.
    pub outer_max_iter: usize,
}

impl Default for ElConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, outer_tol: 1e-8, outer_max_iter: 200 }
    }
}

/// Optimal weights for one mean value.
#[derive(Clone, Debug)]
pub struct WeightedSample {
    pub weights: DVector<f64>,
    pub mean: DVector<f64>,
    /// Multipliers for the mean constraints followed by one per missing pair,
    /// in the order of [`missing_pairs`].
    pub lambda: DVector<f64>,
    /// `Σ_k log(n w_k)`, never positive.
    pub el_log_ratio: f64,
}

impl WeightedSample {
    /// Largest violation of the mean and zero-covariance constraints.
    pub fn constraint_residual(&self, data: &DMatrix<f64>, graph: &CovarianceGraph) -> f64 {
        let g = moment_matrix(data, &self.mean, &missing_pairs(graph));
        (g.transpose() * &self.weights).amax()
    }

    /// `Σ_k w_k (y_k − μ)(y_k − μ)ᵀ`.
    pub fn weighted_covariance(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let p = data.ncols();
        let mut cov = DMatrix::zeros(p, p);
        for (k, row) in data.row_iter().enumerate() {
            let r = row.transpose() - &self.mean;
            cov += self.weights[k] * &r * r.transpose();
        }
        linalg::symmetrize(&mut cov);
        cov
    }
}

/// Result of [`fit_el`].
#[derive(Clone, Debug)]
pub struct ElFit {
    pub sample: WeightedSample,
    /// Weighted covariance at the optimal weights, reported as computed.
    pub sigma: DMatrix<f64>,
    /// Whether `sigma` failed the positive-definiteness check.
    pub singular: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl ElFit {
    /// `sigma` with the solver-level residuals on missing edges set to zero.
    pub fn estimate(&self, graph: &CovarianceGraph) -> Result<ConstrainedCovariance> {
        let mut m = self.sigma.clone();
        for (i, j) in missing_pairs(graph) {
            m[(i, j)] = 0.0;
            m[(j, i)] = 0.0;
        }
        ConstrainedCovariance::new(graph.clone(), m)
    }
}

/// Non-adjacent pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn missing_pairs(graph: &CovarianceGraph) -> Vec<(usize, usize)> {
    let p = graph.num_vertices();
    (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|&(i, j)| !graph.adjacent(i, j)).collect()
}

fn moment_matrix(data: &DMatrix<f64>, mu: &DVector<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
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

fn check_input(data: &DMatrix<f64>, graph: &CovarianceGraph) -> Result<()> {
    let (n, p) = data.shape();
    if p != graph.num_vertices() {
        return Err(Error::Dimension(format!("data has {p} columns, graph has {} vertices", graph.num_vertices())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("data contains non-finite values".into()));
    }
    let constraints = missing_pairs(graph).len();
    if n <= 1 + constraints {
        return Err(Error::Infeasible(format!("{n} observations cannot support {constraints} covariance constraints")));
    }
    Ok(())
}

/// Maximizes the empirical likelihood over the weights for a fixed `mu`.
///
/// Returns [`Error::Infeasible`] when zero is not interior to the convex hull
/// of the moment vectors.
pub fn inner_el(
    data: &DMatrix<f64>,
    mu: &DVector<f64>,
    graph: &CovarianceGraph,
    cfg: &ElConfig,
) -> Result<WeightedSample> {
    check_input(data, graph)?;
    if mu.len() != data.ncols() {
        return Err(Error::Dimension("mean vector length differs from data width".into()));
    }
    solve_inner(data, mu, &missing_pairs(graph), cfg)
}

fn solve_inner(
    data: &DMatrix<f64>,
    mu: &DVector<f64>,
    pairs: &[(usize, usize)],
    cfg: &ElConfig,
) -> Result<WeightedSample> {
    let raw = moment_matrix(data, mu, pairs);
    let n = raw.nrows();
    let scale: Vec<f64> = raw
        .column_iter()
        .map(|c| {
            let rms = (c.norm_squared() / n as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        })
        .collect();
    let mut g = raw;
    for (c, s) in scale.iter().enumerate() {
        g.column_mut(c).unscale_mut(*s);
    }
    if !hull_contains_origin(&g) {
        return Err(Error::Infeasible("zero is not interior to the convex hull of the moment vectors".into()));
    }
    let lambda = dual_newton(&g, &scale, cfg)?;
    let z = DVector::from_element(n, 1.0) + &g * &lambda;
    if z.min() <= 0.0 {
        return Err(Error::Infeasible("dual solution leaves the domain of the logarithm".into()));
    }
    let mut weights = z.map(|v| 1.0 / (n as f64 * v));
    let total = weights.sum();
    weights /= total;
    let el_log_ratio = weights.iter().map(|w| (n as f64 * w).ln()).sum();
    let lambda = DVector::from_iterator(lambda.len(), lambda.iter().zip(&scale).map(|(l, s)| l / s));
    Ok(WeightedSample { weights, mean: mu.clone(), lambda, el_log_ratio })
}

/// Phase-1 check: maximize `t` subject to `Σ w_k g_k = 0`, `Σ w_k = 1`,
/// `w_k ≥ t`.
fn hull_contains_origin(g: &DMatrix<f64>) -> bool {
    let (n, m) = g.shape();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    let w: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    for c in 0..m {
        let expr: Vec<_> = w.iter().enumerate().map(|(k, &v)| (v, g[(k, c)])).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, 0.0);
    }
    let ones: Vec<_> = w.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for &v in &w {
        lp.add_constraint([(v, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    match lp.solve() {
        Ok(sol) => sol.objective() > 1e-9 / n as f64,
        Err(_) => false,
    }
}

/// Logarithm continued below `eps` by its second-order Taylor polynomial.
fn pseudo_log(z: f64, eps: f64) -> (f64, f64, f64) {
    if z >= eps {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let r = z / eps;
        (eps.ln() - 1.5 + 2.0 * r - 0.5 * r * r, (2.0 - r) / eps, -1.0 / (eps * eps))
    }
}

/// Minimizes `−Σ log⋆(1 + λᵀ g_k)` by damped Newton steps.
fn dual_newton(g: &DMatrix<f64>, scale: &[f64], cfg: &ElConfig) -> Result<DVector<f64>> {
    let (n, m) = g.shape();
    let eps = 1.0 / n as f64;
    let objective = |lambda: &DVector<f64>| -> f64 { (g * lambda).iter().map(|v| -pseudo_log(1.0 + v, eps).0).sum() };
    let mut lambda = DVector::zeros(m);
    let mut value = objective(&lambda);
    for _ in 0..cfg.max_iter {
        let z = DVector::from_element(n, 1.0) + g * &lambda;
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        for k in 0..n {
            let (_, d1, d2) = pseudo_log(z[k], eps);
            let row = g.row(k).transpose();
            grad -= d1 * &row;
            hess -= d2 * &row * row.transpose();
        }
        // Σ_k g_k / (n z_k) is the constraint residual once every z_k ≥ eps.
        let residual = grad.iter().zip(scale).map(|(v, s)| (v * s / n as f64).abs()).fold(0.0, f64::max);
        if residual <= cfg.tol && z.min() >= eps {
            return Ok(lambda);
        }
        let step = newton_step(&hess, &grad);
        let slope = grad.dot(&step);
        if slope >= 0.0 {
            break;
        }
        // Close to the root the decrease drops below rounding in the objective.
        let noise = if residual < 1e-6 { 1e3 * f64::EPSILON * (1.0 + value.abs()) } else { 0.0 };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = &lambda + t * &step;
            let v = objective(&trial);
            if v <= value + 1e-4 * t * slope + noise {
                lambda = trial;
                value = v;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let z = DVector::from_element(n, 1.0) + g * &lambda;
    if z.min() < eps {
        return Err(Error::Infeasible("dual iterates left the feasible region".into()));
    }
    let residual = (g.transpose() * z.map(|v| 1.0 / (n as f64 * v)))
        .iter()
        .zip(scale)
        .map(|(v, s)| (v * s).abs())
        .fold(0.0, f64::max);
    if residual <= cfg.tol {
        Ok(lambda)
    } else {
        Err(Error::NoConvergence(format!("empirical likelihood dual stalled at residual {residual:.3e}")))
    }
}

fn newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    match hess.clone().cholesky() {
        Some(ch) => -ch.solve(grad),
        None => {
            let svd = hess.clone().svd(true, true);
            let cutoff = 1e-12 * svd.singular_values.max();
            -svd.solve(grad, cutoff).unwrap_or_else(|_| grad.clone())
        }
    }
}

/// Maximizes the profile empirical likelihood over the mean.
///
/// The search starts at the sample mean and falls back to the coordinatewise
/// median and to points shifted along each axis when the start is infeasible.
pub fn fit_el(data: &DMatrix<f64>, graph: &CovarianceGraph, cfg: &ElConfig) -> Result<ElFit> {
    check_input(data, graph)?;
    let pairs = missing_pairs(graph);
    let stats = SampleStats::from_data(data)?;
    let n = data.nrows() as f64;
    let sd = stats.cov().diagonal().map(f64::sqrt);

    let eval = |mu: &DVector<f64>| solve_inner(data, mu, &pairs, cfg).ok();
    let start = candidate_starts(data, stats.mean(), &sd)
        .into_iter()
        .find_map(|mu| eval(&mu))
        .ok_or_else(|| Error::Infeasible("no feasible starting value for the mean".into()))?;

    let p = data.ncols();
    let mut current = start;
    let gradient = |ws: &WeightedSample| -> DVector<f64> { ws.lambda.rows(0, p) * (-n) };
    let mut grad = gradient(&current);
    let mut hinv = DMatrix::from_diagonal(&stats.cov().diagonal()) / n;
    let scaled_norm = |g: &DVector<f64>| g.iter().zip(sd.iter()).map(|(v, s)| (v * s / n).abs()).fold(0.0, f64::max);

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.outer_max_iter {
        iterations = it;
        if scaled_norm(&grad) <= cfg.outer_tol {
            converged = true;
            break;
        }
        let mut dir = -(&hinv * &grad);
        if dir.dot(&grad) >= 0.0 {
            hinv = DMatrix::from_diagonal(&stats.cov().diagonal()) / n;
            dir = -(&hinv * &grad);
        }
        let f0 = -current.el_log_ratio;
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mu = &current.mean + t * &dir;
            if let Some(ws) = eval(&mu) {
                if -ws.el_log_ratio <= f0 + 1e-4 * t * slope {
                    accepted = Some(ws);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            converged = scaled_norm(&grad) <= cfg.outer_tol.sqrt();
            break;
        };
        let new_grad = gradient(&next);
        let s = &next.mean - &current.mean;
        let y = &new_grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(p, p);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        let stalled = (f0 + next.el_log_ratio).abs() <= 1e-15 * (1.0 + f0.abs());
        current = next;
        grad = new_grad;
        if stalled {
            converged = scaled_norm(&grad) <= cfg.outer_tol.sqrt();
            break;
        }
    }
    if !converged && scaled_norm(&grad) <= cfg.outer_tol {
        converged = true;
    }
    let sigma = current.weighted_covariance(data);
    let singular = !linalg::is_positive_definite(&sigma);
    Ok(ElFit { sample: current, sigma, singular, iterations, converged })
}

fn candidate_starts(data: &DMatrix<f64>, mean: &DVector<f64>, sd: &DVector<f64>) -> Vec<DVector<f64>> {
    let p = data.ncols();
    let median = DVector::from_iterator(
        p,
        data.column_iter().map(|c| {
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let h = v.len() / 2;
            if v.len() % 2 == 1 {
                v[h]
            } else {
                0.5 * (v[h - 1] + v[h])
            }
        }),
    );
    let mut out = vec![mean.clone(), median];
    for frac in [0.1, 0.25, 0.5] {
        for i in 0..p {
            for sign in [1.0, -1.0] {
                let mut mu = mean.clone();
                mu[i] += sign * frac * sd[i];
                out.push(mu);
            }
        }
    }
    out
}
