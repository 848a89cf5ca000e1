//! Randomized checks of structural properties of the estimators.

mod common;

use common::*;
use covgraph::simulation::{run_simulation_with, sample_gaussian, sample_t, SimSpec};
use covgraph::{
    block_update, datasets, el, fit_anderson, fit_dual, fit_el, fit_icf, fit_icf_multi, icf_update_vertex, io, linalg,
    model, ConstrainedCovariance, CovarianceGraph, FitConfig, Method, SampleStats,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pattern_exact(graph: &CovarianceGraph, m: &DMatrix<f64>) -> bool {
    let p = graph.num_vertices();
    (0..p).all(|i| (0..p).all(|j| i == j || graph.adjacent(i, j) || m[(i, j)] == 0.0))
}

/// Random statistics for the four-vertex path.
fn instance(seed: u64) -> SampleStats {
    path_stats(seed, 30 + (seed % 50) as usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spouses_partition_the_vertex_set(seed in any::<u64>(), p in 1usize..9) {
        let g = random_graph(p, 0.4, &mut rng(seed));
        for i in 0..p {
            let spo = g.spouses(i).unwrap();
            let nsp = g.non_spouses(i).unwrap();
            let mut all: Vec<usize> = spo.iter().chain(&nsp).copied().collect();
            all.push(i);
            all.sort_unstable();
            prop_assert_eq!(all, (0..p).collect::<Vec<_>>());
        }
    }

    #[test]
    fn free_index_set_is_stable(seed in any::<u64>(), p in 1usize..9) {
        let g = random_graph(p, 0.5, &mut rng(seed));
        let a = g.free_index_set();
        let b = g.free_index_set();
        prop_assert_eq!(a.pairs(), b.pairs());
        prop_assert_eq!(a.len(), p + g.num_edges());
    }

    #[test]
    fn matrix_text_round_trip_is_exact(seed in any::<u64>(), p in 1usize..6) {
        let m = random_spd(p, &mut rng(seed)) * 1e3_f64.powi((seed % 7) as i32 - 3);
        let labels: Vec<String> = (0..p).map(|i| format!("v{i}")).collect();
        let text = io::format_matrix(&labels, &m, None);
        let (back_labels, back) = io::parse_matrix(&text).unwrap();
        prop_assert_eq!(back_labels, labels);
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Every vertex update raises the likelihood and stays positive definite.
    #[test]
    fn icf_ascends_monotonically(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let mut sigma = ConstrainedCovariance::identity(g.clone());
        let mut ll = model::profile_loglik(&stats, &sigma).unwrap();
        for _ in 0..15 {
            for i in 0..4 {
                sigma = icf_update_vertex(&stats, &sigma, i).unwrap();
                let next = model::profile_loglik(&stats, &sigma).unwrap();
                prop_assert!(next >= ll - 1e-10, "{next} < {ll}");
                prop_assert!(linalg::min_eigenvalue(sigma.matrix()) > 0.0);
                prop_assert!(pattern_exact(&g, sigma.matrix()));
                ll = next;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn icf_converges_to_a_stationary_point(seed in any::<u64>()) {
        let stats = instance(seed);
        let cfg = FitConfig::default();
        let fit = fit_icf(&stats, &path_graph(), &cfg).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(fit.stationarity <= 100.0 * cfg.tol);
        prop_assert!(model::deviance(&stats, &fit.estimate).unwrap().deviance >= -1e-9);
    }

    #[test]
    fn sweep_order_does_not_change_the_maximum(seed in any::<u64>()) {
        let stats = instance(seed);
        let g = path_graph();
        let cfg = FitConfig::default().with_tol(1e-10);
        let a = fit_icf(&stats, &g, &cfg).unwrap();
        let b = fit_icf(&stats, &g, &cfg.clone().with_order(vec![3, 1, 2, 0])).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-6);
    }

    #[test]
    fn block_update_touches_only_its_block(seed in any::<u64>(), which in 0usize..3) {
        let g = path_graph();
        let stats = instance(seed);
        let start = fit_icf(&stats, &g, &FitConfig::default().with_max_iter(1)).unwrap().estimate;
        let c = g.cliques().sets[which].clone();
        let next = block_update(&stats, &start, &c).unwrap();
        let rest: Vec<usize> = (0..4).filter(|v| !c.contains(v)).collect();
        for &a in &rest {
            for &b in &rest {
                prop_assert_eq!(next.matrix()[(a, b)], start.matrix()[(a, b)]);
            }
        }
        prop_assert!(pattern_exact(&g, next.matrix()));
        let before = model::profile_loglik(&stats, &start).unwrap();
        let after = model::profile_loglik(&stats, &next).unwrap();
        prop_assert!(after >= before - 1e-10);
    }

    #[test]
    fn fisher_information_is_positive_definite(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let sigma = fit_icf(&stats, &g, &FitConfig::default().with_max_iter(2)).unwrap().estimate;
        let info = model::fisher_information(&sigma, 10.0).unwrap();
        prop_assert!(linalg::min_eigenvalue(&info) > 0.0);
    }

    /// With `S = Σ` the observed and expected information coincide.
    #[test]
    fn hessian_at_the_truth_is_minus_fisher(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let sigma = fit_icf(&stats, &g, &FitConfig::default().with_max_iter(3)).unwrap().estimate;
        let at_truth = SampleStats::from_covariance(40, sigma.matrix().clone()).unwrap();
        let h = model::hessian(&at_truth, &sigma).unwrap();
        let info = model::fisher_information(&sigma, 40.0).unwrap();
        prop_assert!(linalg::max_abs_diff(&h, &(-info)) < 1e-10);
    }

    #[test]
    fn stationarity_residual_vanishes_with_the_score(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let fit = fit_icf(&stats, &g, &FitConfig::default().with_tol(1e-12)).unwrap();
        let score = model::score(&stats, &fit.estimate).unwrap();
        prop_assert!(fit.stationarity < 1e-9);
        prop_assert!(score.amax() < 1e-6 * stats.n() as f64);

        let mut shifted = fit.estimate.matrix().clone();
        shifted[(0, 0)] *= 1.1;
        let shifted = ConstrainedCovariance::new(g.clone(), shifted).unwrap();
        prop_assert!(model::stationarity_residual(&stats, &shifted).unwrap() > 1e-4);
        prop_assert!(model::score(&stats, &shifted).unwrap().amax() > 1e-4);
    }

    #[test]
    fn anderson_first_iterate_copies_the_sample_covariance(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let out = fit_anderson(&stats, &g, &FitConfig::default().with_max_iter(1)).unwrap();
        for &(i, j) in g.free_index_set().pairs() {
            prop_assert!((out.state.sigma[(i, j)] - stats.cov()[(i, j)]).abs() < 1e-12);
        }
        prop_assert!(pattern_exact(&g, &out.state.sigma));
    }

    #[test]
    fn anderson_iterates_keep_the_pattern(seed in any::<u64>(), steps in 1usize..8) {
        let g = path_graph();
        let stats = instance(seed);
        let out = fit_anderson(&stats, &g, &FitConfig::default().with_max_iter(steps)).unwrap();
        prop_assert!(pattern_exact(&g, &out.state.sigma));
    }

    #[test]
    fn converged_anderson_is_stationary(seed in any::<u64>()) {
        let stats = instance(seed);
        let cfg = FitConfig::default();
        let out = fit_anderson(&stats, &path_graph(), &cfg).unwrap();
        if out.converged() {
            prop_assert!(out.stationarity.unwrap() <= 100.0 * cfg.tol);
        }
    }

    #[test]
    fn blockwise_and_vertexwise_fits_agree(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let cfg = FitConfig::default().with_tol(1e-10);
        let a = fit_icf(&stats, &g, &cfg).unwrap();
        let b = fit_icf_multi(&stats, &g, &g.cliques(), &cfg).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-6);
    }

    #[test]
    fn dual_fit_is_patterned_and_solves_its_equations(seed in any::<u64>()) {
        let g = path_graph();
        let stats = instance(seed);
        let cfg = FitConfig::default().with_tol(1e-10);
        let fit = fit_dual(&stats, &g, &cfg).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(pattern_exact(&g, fit.estimate.matrix()));
        prop_assert!(covgraph::dual_residual(&stats, &fit.estimate).unwrap() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn el_weights_satisfy_the_constraints(seed in any::<u64>()) {
        let g = path_graph();
        let mut r = rng(seed);
        let data = random_data(&datasets::path_sigma(), 40, &mut r);
        let fit = fit_el(&data, &g, &el::ElConfig::default()).unwrap();
        let w = &fit.sample.weights;
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.sum() - 1.0).abs() < 1e-8);
        prop_assert!(fit.sample.constraint_residual(&data, &g) < 1e-8);
        prop_assert!(fit.sample.el_log_ratio <= 0.0);
        let est = fit.estimate(&g).unwrap();
        prop_assert!(pattern_exact(&g, est.matrix()));
    }

    /// Removing an edge adds a constraint, so the optimum cannot improve.
    #[test]
    fn el_optimum_degrades_with_fewer_edges(seed in any::<u64>()) {
        let mut r = rng(seed);
        let data = random_data(&datasets::path_sigma(), 40, &mut r);
        let full = CovarianceGraph::from_indices(4, &[(0, 2), (1, 3), (2, 3), (0, 1)]).unwrap();
        let cfg = el::ElConfig::default();
        let wide = fit_el(&data, &full, &cfg).unwrap();
        let narrow = fit_el(&data, &path_graph(), &cfg).unwrap();
        prop_assert!(narrow.sample.el_log_ratio <= wide.sample.el_log_ratio + 1e-8);
    }
}

#[test]
fn el_is_uniform_on_the_complete_graph() {
    let g = CovarianceGraph::from_indices(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
    let data = random_data(&random_spd(3, &mut rng(3)), 25, &mut rng(4));
    let fit = fit_el(&data, &g, &el::ElConfig::default()).unwrap();
    assert!(fit.sample.el_log_ratio.abs() < 1e-12);
    let stats = SampleStats::from_data(&data).unwrap();
    assert!(linalg::max_abs_diff(&fit.sigma, stats.cov()) < 1e-10);
}

#[test]
fn dual_tracks_ml_more_closely_on_the_denser_yeast_graph() {
    let stats = datasets::yeast_stats();
    let cfg = FitConfig::default();
    let gap = |g: &CovarianceGraph| {
        let ml = fit_icf(&stats, g, &cfg).unwrap().estimate;
        let dual = fit_dual(&stats, g, &cfg).unwrap().estimate;
        linalg::max_abs_diff(&model::correlation_sd(ml.matrix()), &model::correlation_sd(dual.matrix()))
    };
    assert!(gap(&datasets::yeast_graph_d()) < gap(&datasets::yeast_graph_s()));
}

fn sample_covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    SampleStats::from_data(data).unwrap().cov().clone()
}

#[test]
fn gaussian_sampler_recovers_identity() {
    let n = 20_000;
    let data = sample_gaussian(&DMatrix::identity(3, 3), n, &mut rng(11)).unwrap();
    let err = linalg::max_abs_diff(&sample_covariance(&data), &DMatrix::identity(3, 3));
    assert!(err < 5.0 / (n as f64).sqrt(), "{err}");
}

#[test]
fn gaussian_sampler_recovers_the_design_covariance() {
    let sigma = datasets::path_sigma();
    let data = sample_gaussian(&sigma, 100_000, &mut rng(12)).unwrap();
    assert!(linalg::max_abs_diff(&sample_covariance(&data), &sigma) < 0.02);
}

#[test]
fn t_sampler_has_scaled_covariance() {
    let sigma = datasets::path_sigma();
    let data = sample_t(&sigma, 5.0, 100_000, &mut rng(13)).unwrap();
    let err = linalg::max_abs_diff(&sample_covariance(&data), &(sigma * (5.0 / 3.0)));
    assert!(err < 0.05, "{err}");
}

/// Two-sample Kolmogorov–Smirnov distance between sorted samples.
fn ks_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn t_sampler_approaches_gaussian_for_large_df() {
    let n = 5000;
    let eye = DMatrix::identity(2, 2);
    let t = sample_t(&eye, 1e4, n, &mut rng(14)).unwrap();
    let z = sample_gaussian(&eye, n, &mut rng(15)).unwrap();
    let mut a: Vec<f64> = t.column(0).iter().copied().collect();
    let mut b: Vec<f64> = z.column(0).iter().copied().collect();
    // Critical value at level 0.001.
    let critical = 1.95 * (2.0 / n as f64).sqrt();
    assert!(ks_distance(&mut a, &mut b) < critical);
}

fn small_spec() -> SimSpec {
    let mut spec = SimSpec::new(path_graph(), datasets::path_sigma());
    spec.replications = 12;
    spec.sample_sizes = vec![30, 60];
    spec.methods = vec![Method::MlIcf, Method::Dual];
    spec.seed = 99;
    spec
}

#[test]
fn truth_as_estimate_gives_zero_error() {
    let spec = small_spec();
    let report = run_simulation_with(&spec, |_, _, s| Ok(s.truth())).unwrap();
    for e in &report.entries {
        assert_eq!((e.bias, e.rmse, e.failures), (0.0, 0.0, 0));
    }
}

#[test]
fn simulation_ignores_thread_count() {
    let spec = small_spec();
    let parallel = covgraph::run_simulation(&spec).unwrap().to_csv_string().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| covgraph::run_simulation(&spec)).unwrap().to_csv_string().unwrap();
    assert_eq!(parallel, serial);
}

#[test]
fn failures_and_successes_add_up() {
    let spec = small_spec();
    let report = covgraph::run_simulation(&spec).unwrap();
    for e in &report.entries {
        assert_eq!(e.failures + e.successes, spec.replications);
    }
}

fn data_file(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn data_files_match_builtin_datasets() {
    assert_eq!(CovarianceGraph::parse(&data_file("path.graph")).unwrap(), datasets::path_graph());
    assert_eq!(CovarianceGraph::parse(&data_file("yeast_gd.graph")).unwrap(), datasets::yeast_graph_d());
    assert_eq!(CovarianceGraph::parse(&data_file("yeast_gs.graph")).unwrap(), datasets::yeast_graph_s());
    let (_, sigma) = io::parse_matrix(&data_file("path.sigma")).unwrap();
    assert_eq!(sigma, datasets::path_sigma());
    let stats = io::parse_stats(&data_file("yeast.stats")).unwrap();
    assert_eq!(stats.labels, datasets::yeast_graph_s().labels());
    assert!(linalg::max_abs_diff(stats.stats.cov(), datasets::yeast_stats().cov()) < 1e-12);
}
