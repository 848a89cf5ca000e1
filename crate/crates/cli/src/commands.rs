use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;

use covgraph::el::ElConfig;
use covgraph::io;
use covgraph::simulation::{run_simulation, Distribution, SimSpec};
use covgraph::{
    fit_anderson, fit_dual, fit_el, fit_icf, fit_icf_multi, model, CompleteSetFamily, ConstrainedCovariance,
    CovarianceGraph, Error, FitConfig, Method, Result,
};
use nalgebra::DMatrix;

use crate::args::{CompareArgs, Dist, FitArgs, LoglikArgs, SimulateArgs, SolverArgs};
use crate::input::{self, Input};
use crate::{note, Status};

struct Fitted {
    matrix: DMatrix<f64>,
    loglik: Option<f64>,
    iterations: usize,
    converged: bool,
    trace: Option<Vec<f64>>,
    extra: Vec<String>,
}

fn config(solver: &SolverArgs) -> FitConfig {
    FitConfig::default().with_tol(solver.tol).with_max_iter(solver.max_iter)
}

fn run_method(method: Method, input: &Input, cfg: &FitConfig, family: Option<&CompleteSetFamily>) -> Result<Fitted> {
    let Input { graph, data, stats } = input;
    let fitted = match method {
        Method::El => {
            let data = data.as_ref().ok_or_else(|| {
                Error::InvalidArgument("method el needs raw observations (--data), not summary statistics".into())
            })?;
            let el_cfg = ElConfig { outer_max_iter: cfg.max_iter, ..ElConfig::default() };
            let fit = fit_el(data, graph, &el_cfg)?;
            if fit.singular {
                note("the empirical likelihood covariance estimate is singular");
            }
            let loglik = model::loglik_matrix(stats, &fit.sigma).ok();
            return Ok(Fitted {
                loglik,
                iterations: fit.iterations,
                converged: fit.converged,
                trace: None,
                extra: vec![
                    format!("el log ratio: {}", fit.sample.el_log_ratio),
                    format!("singular: {}", fit.singular),
                ],
                matrix: fit.sigma,
            });
        }
        Method::MlIcf => fit_icf(stats, graph, cfg)?,
        Method::MlIcfMulti => {
            let cliques;
            let family = match family {
                Some(f) => f,
                None => {
                    cliques = graph.cliques();
                    &cliques
                }
            };
            fit_icf_multi(stats, graph, family, cfg)?
        }
        Method::MlAnderson => {
            let outcome = fit_anderson(stats, graph, cfg)?;
            let status = outcome.status;
            if outcome.visited_non_pd() {
                note("Anderson iterates left the positive definite cone");
            }
            let mut fit = outcome.into_fit_result(stats)?;
            fit.trace = fit.trace.filter(|_| cfg.record_trace);
            let mut f = from_fit(fit);
            f.extra.push(format!("anderson status: {status}"));
            return Ok(f);
        }
        Method::Dual => fit_dual(stats, graph, cfg)?,
    };
    Ok(from_fit(fitted))
}

fn from_fit(fit: covgraph::FitResult) -> Fitted {
    Fitted {
        loglik: Some(fit.loglik),
        iterations: fit.iterations,
        converged: fit.converged,
        trace: fit.trace,
        extra: vec![format!("stationarity residual: {:e}", fit.stationarity)],
        matrix: fit.estimate.into_matrix(),
    }
}

pub fn fit(args: &FitArgs) -> Result<Status> {
    let method: Method = args.method.parse()?;
    let input = input::load(&args.input)?;
    if method == Method::El && input.data.is_none() {
        return Err(Error::InvalidArgument("method el needs raw observations (--data), not summary statistics".into()));
    }
    let mut cfg = config(&args.solver);
    if args.trace.is_some() {
        cfg = cfg.with_trace();
    }
    if let Some(path) = &args.start {
        let m = input::matrix_for(path, &input.graph)?;
        cfg = cfg.with_start(ConstrainedCovariance::new(input.graph.clone(), m)?);
    }
    let family = match &args.family {
        Some(path) => Some(CompleteSetFamily::parse(&input.graph, &fs::read_to_string(path)?)?),
        None => None,
    };
    if family.is_some() && method != Method::MlIcfMulti {
        note("--family only affects ml-icf-multi");
    }
    let fitted = run_method(method, &input, &cfg, family.as_ref())?;

    let mut summary = String::new();
    let _ = writeln!(summary, "# method: {method}");
    let _ = writeln!(summary, "# converged: {}", fitted.converged);
    let _ = writeln!(summary, "# iterations: {}", fitted.iterations);
    match fitted.loglik {
        Some(l) => {
            let _ = writeln!(summary, "# loglik: {l}");
        }
        None => {
            let _ = writeln!(summary, "# loglik: undefined (estimate is not positive definite)");
        }
    }
    if fitted.loglik.is_some() {
        let dev = deviance_of(&input, &fitted.matrix)?;
        let label = if method.is_likelihood() { "deviance" } else { "deviance functional" };
        let _ = writeln!(summary, "# {label}: {}", dev.deviance);
        let _ = writeln!(summary, "# df: {}", dev.df);
    }
    for line in &fitted.extra {
        let _ = writeln!(summary, "# {line}");
    }

    if let (Some(path), Some(trace)) = (&args.trace, &fitted.trace) {
        let mut text = String::from("iteration,loglik\n");
        for (i, l) in trace.iter().enumerate() {
            let _ = writeln!(text, "{},{l}", i + 1);
        }
        fs::write(path, text)?;
    }
    let matrix = io::format_matrix(input.graph.labels(), &fitted.matrix, args.digits);
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(summary.as_bytes())?;
    match &args.output {
        Some(path) => fs::write(path, matrix)?,
        None => stdout.write_all(matrix.as_bytes())?,
    }
    Ok(if fitted.converged { Status::Ok } else { Status::NotConverged })
}

fn deviance_of(input: &Input, m: &DMatrix<f64>) -> Result<model::Deviance> {
    let mut patterned = m.clone();
    snap_pattern(&mut patterned, &input.graph);
    model::deviance(&input.stats, &ConstrainedCovariance::new(input.graph.clone(), patterned)?)
}

/// Zeroes solver-level residue on the missing edges.
fn snap_pattern(m: &mut DMatrix<f64>, graph: &CovarianceGraph) {
    let p = graph.num_vertices();
    for i in 0..p {
        for j in 0..p {
            if i != j && !graph.adjacent(i, j) {
                m[(i, j)] = 0.0;
            }
        }
    }
}

pub fn loglik(args: &LoglikArgs) -> Result<Status> {
    let input = input::load(&args.input)?;
    let m = input::matrix_for(&args.sigma, &input.graph)?;
    let sigma = ConstrainedCovariance::new(input.graph.clone(), m)?;
    let dev = model::deviance(&input.stats, &sigma)?;
    println!("loglik: {}", model::profile_loglik(&input.stats, &sigma)?);
    println!("deviance: {}", dev.deviance);
    println!("df: {}", dev.df);
    Ok(Status::Ok)
}

pub fn compare(args: &CompareArgs) -> Result<Status> {
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let reference = *methods.first().ok_or_else(|| Error::InvalidArgument("no methods given".into()))?;
    let input = input::load(&args.input)?;
    let cfg = config(&args.solver);
    let mut all_converged = true;
    let mut rows = Vec::new();
    for &method in &methods {
        if method == Method::El && input.data.is_none() {
            note("skipping el: it needs raw observations (--data)");
            continue;
        }
        let fitted = run_method(method, &input, &cfg, None)?;
        all_converged &= fitted.converged;
        rows.push((method, fitted.loglik, fitted.converged));
    }
    let base = rows.iter().find(|r| r.0 == reference).and_then(|r| r.1);
    println!("method,loglik,difference,converged");
    for (method, loglik, converged) in rows {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let diff = base.zip(loglik).map(|(b, l)| b - l);
        println!("{method},{},{},{converged}", fmt(loglik), fmt(diff));
    }
    Ok(if all_converged { Status::Ok } else { Status::NotConverged })
}

pub fn simulate(args: &SimulateArgs) -> Result<Status> {
    let graph = CovarianceGraph::parse(&fs::read_to_string(&args.graph)?)?;
    let sigma = input::matrix_for(&args.sigma, &graph)?;
    let mut spec = SimSpec::new(graph, sigma);
    spec.distribution = match args.dist {
        Dist::Gaussian => Distribution::Gaussian,
        Dist::T => Distribution::StudentT { df: args.df },
    };
    spec.sample_sizes = args.n.clone();
    spec.replications = args.reps;
    spec.seed = args.seed;
    spec.methods = args.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    spec.fit = config(&args.solver);
    let report = run_simulation(&spec)?;
    match &args.output {
        Some(path) => report.write_csv(fs::File::create(path)?)?,
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(Status::Ok)
}
