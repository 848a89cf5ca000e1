//! Monte-Carlo comparison of the estimators.
//!
//! Every replication draws from its own ChaCha stream, selected by the sample
//! size and replication index, so results do not depend on how replications
//! are scheduled across threads.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::anderson::fit_anderson;
use crate::dual::fit_dual;
use crate::el::{fit_el, ElConfig};
use crate::error::{Error, Result};
use crate::fit::{FitConfig, Method};
use crate::graph::CovarianceGraph;
use crate::icf::fit_icf;
use crate::icf_multi::fit_icf_multi;
use crate::linalg;
use crate::model::{self, SampleStats};

/// Sampling distribution of the simulated rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Gaussian,
    /// Multivariate t with the given degrees of freedom and dispersion `Σ`.
    StudentT {
        df: f64,
    },
}

impl Distribution {
    /// Population covariance for dispersion `sigma`.
    pub fn covariance(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Distribution::Gaussian => sigma.clone(),
            Distribution::StudentT { df } => sigma * (df / (df - 2.0)),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Gaussian => f.write_str("gaussian"),
            Distribution::StudentT { df } => write!(f, "t({df})"),
        }
    }
}

/// Draws `n` rows from `N(0, sigma)`.
pub fn sample_gaussian<R: Rng + ?Sized>(sigma: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let factor = linalg::cholesky_checked(sigma).ok_or(Error::NotPositiveDefinite("sampling covariance"))?;
    let p = sigma.nrows();
    let mut out = DMatrix::zeros(n, p);
    let mut z = nalgebra::DVector::zeros(p);
    for k in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        out.row_mut(k).copy_from(&(&factor * &z).transpose());
    }
    Ok(out)
}

/// Draws `n` rows `z / sqrt(u / df)` with `z ~ N(0, sigma)` and `u ~ χ²(df)`.
pub fn sample_t<R: Rng + ?Sized>(sigma: &DMatrix<f64>, df: f64, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(df >= 1.0 && df.is_finite()) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be at least 1, got {df}")));
    }
    let chi = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = sample_gaussian(sigma, n, rng)?;
    for mut row in out.row_iter_mut() {
        let u: f64 = chi.sample(rng);
        row /= (u / df).sqrt();
    }
    Ok(out)
}

/// Simulation design.
#[derive(Clone, Debug)]
pub struct SimSpec {
    pub graph: CovarianceGraph,
    /// Dispersion matrix; the covariance itself for Gaussian data.
    pub sigma: DMatrix<f64>,
    pub distribution: Distribution,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    pub el: ElConfig,
}

impl SimSpec {
    /// Gaussian design with 200 replications at `n = 100` for every method.
    pub fn new(graph: CovarianceGraph, sigma: DMatrix<f64>) -> Self {
        Self {
            graph,
            sigma,
            distribution: Distribution::Gaussian,
            sample_sizes: vec![100],
            replications: 200,
            seed: 0,
            methods: Method::ALL.to_vec(),
            fit: FitConfig::default(),
            el: ElConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        model::check_pattern(&self.graph, &self.sigma)?;
        if !linalg::is_positive_definite(&self.sigma) {
            return Err(Error::NotPositiveDefinite("simulation covariance"));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("at least one replication is required".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if let Distribution::StudentT { df } = self.distribution {
            if !(df > 4.0 && df.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "t degrees of freedom must exceed 4 for the RMSE to exist, got {df}"
                )));
            }
        }
        self.fit.validate()
    }

    /// Covariance the estimates are compared against.
    pub fn truth(&self) -> DMatrix<f64> {
        self.distribution.covariance(&self.sigma)
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        match self.distribution {
            Distribution::Gaussian => sample_gaussian(&self.sigma, n, rng),
            Distribution::StudentT { df } => sample_t(&self.sigma, df, n, rng),
        }
    }

    /// The generator for replication `rep` at sample size index `size_index`.
    pub fn rng(&self, size_index: usize, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((size_index as u64) << 32) | rep as u64);
        rng
    }
}

/// Aggregated error of one method for one covariance entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EntrySummary {
    pub method: Method,
    pub n: usize,
    /// Zero-based row, with `i <= j`.
    pub i: usize,
    pub j: usize,
    pub bias: f64,
    pub rmse: f64,
    pub failures: usize,
    pub successes: usize,
    /// Monte-Carlo standard error of `bias`.
    pub se_bias: f64,
    /// Delta-method Monte-Carlo standard error of `rmse`.
    pub se_rmse: f64,
}

/// Outcome of [`run_simulation`].
#[derive(Clone, Debug)]
pub struct SimReport {
    pub distribution: Distribution,
    pub seed: u64,
    pub replications: usize,
    pub truth: DMatrix<f64>,
    pub entries: Vec<EntrySummary>,
}

impl SimReport {
    pub fn entry(&self, method: Method, n: usize, i: usize, j: usize) -> Option<&EntrySummary> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.iter().find(|e| e.method == method && e.n == n && e.i == i && e.j == j)
    }

    /// Replications in which `method` failed at sample size `n`.
    pub fn failures(&self, method: Method, n: usize) -> Option<usize> {
        self.entries.iter().find(|e| e.method == method && e.n == n).map(|e| e.failures)
    }

    /// Writes `#` metadata lines followed by the table
    /// `method,n,i,j,bias,rmse,failures` with one-based indices.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# distribution: {}", self.distribution)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# replications: {}", self.replications)?;
        for row in self.truth.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "# truth: {}", cells.join(","))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "n", "i", "j", "bias", "rmse", "failures"]).map_err(csv_error)?;
        for e in &self.entries {
            w.write_record([
                e.method.to_string(),
                e.n.to_string(),
                (e.i + 1).to_string(),
                (e.j + 1).to_string(),
                e.bias.to_string(),
                e.rmse.to_string(),
                e.failures.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("report is valid UTF-8"))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("{other:?}")),
    }
}

/// Fits `method` to one simulated data set.
///
/// Non-converged fits count as failures.
pub fn fit_method(
    method: Method,
    data: &DMatrix<f64>,
    graph: &CovarianceGraph,
    spec: &SimSpec,
) -> Result<DMatrix<f64>> {
    if method == Method::El {
        let fit = fit_el(data, graph, &spec.el)?;
        if !fit.converged {
            return Err(Error::NoConvergence("empirical likelihood".into()));
        }
        return Ok(fit.sigma);
    }
    let stats = SampleStats::from_data(data)?;
    let fit = match method {
        Method::MlIcf => fit_icf(&stats, graph, &spec.fit)?,
        Method::MlIcfMulti => fit_icf_multi(&stats, graph, &graph.cliques(), &spec.fit)?,
        Method::MlAnderson => fit_anderson(&stats, graph, &spec.fit)?.into_fit_result(&stats)?,
        Method::Dual => fit_dual(&stats, graph, &spec.fit)?,
        Method::El => unreachable!(),
    };
    if !fit.converged {
        return Err(Error::NoConvergence(method.to_string()));
    }
    Ok(fit.estimate.into_matrix())
}

/// Runs the simulation with the built-in estimators.
pub fn run_simulation(spec: &SimSpec) -> Result<SimReport> {
    run_simulation_with(spec, |method, data, spec| fit_method(method, data, &spec.graph, spec))
}

/// Runs the simulation with a caller-supplied fitting function.
pub fn run_simulation_with<F>(spec: &SimSpec, fitter: F) -> Result<SimReport>
where
    F: Fn(Method, &DMatrix<f64>, &SimSpec) -> Result<DMatrix<f64>> + Sync,
{
    spec.validate()?;
    let truth = spec.truth();
    let p = truth.nrows();
    let mut entries = Vec::new();
    for (size_index, &n) in spec.sample_sizes.iter().enumerate() {
        // One row per replication, one slot per method.
        let outcomes: Vec<Vec<Option<DMatrix<f64>>>> = (0..spec.replications)
            .into_par_iter()
            .map(|rep| -> Result<Vec<Option<DMatrix<f64>>>> {
                let mut rng = spec.rng(size_index, rep);
                let data = spec.draw(n, &mut rng)?;
                Ok(spec.methods.iter().map(|&m| fitter(m, &data, spec).ok()).collect())
            })
            .collect::<Result<_>>()?;
        for (slot, &method) in spec.methods.iter().enumerate() {
            let fits: Vec<&DMatrix<f64>> = outcomes.iter().filter_map(|o| o[slot].as_ref()).collect();
            for i in 0..p {
                for j in i..p {
                    let errors: Vec<f64> = fits.iter().map(|m| m[(i, j)] - truth[(i, j)]).collect();
                    entries.push(summarize(method, n, i, j, &errors, spec.replications));
                }
            }
        }
    }
    Ok(SimReport { distribution: spec.distribution, seed: spec.seed, replications: spec.replications, truth, entries })
}

fn summarize(method: Method, n: usize, i: usize, j: usize, errors: &[f64], reps: usize) -> EntrySummary {
    let m = errors.len();
    let mf = m as f64;
    let bias = errors.iter().sum::<f64>() / mf;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / mf;
    let rmse = mse.sqrt();
    let sd = |values: &mut dyn Iterator<Item = f64>, mean: f64| -> f64 {
        if m < 2 {
            return f64::NAN;
        }
        (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt()
    };
    let se_bias = sd(&mut errors.iter().copied(), bias) / mf.sqrt();
    let se_sq = sd(&mut errors.iter().map(|e| e * e), mse) / mf.sqrt();
    let se_rmse = if rmse > 0.0 { se_sq / (2.0 * rmse) } else { 0.0 };
    EntrySummary { method, n, i, j, bias, rmse, failures: reps - m, successes: m, se_bias, se_rmse }
}
