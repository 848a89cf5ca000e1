//! Covariance graph models: Gaussian models whose missing edges are zero
//! covariances.
//!
//! The crate fits `Σ` under a covariance graph by maximum likelihood
//! (iterative conditional fitting, vertexwise or blockwise, and Anderson's
//! algorithm), by dual estimation matching `Σ⁻¹` to `S⁻¹` on the free
//! entries, and by empirical likelihood. A Monte-Carlo harness compares the
//! estimators.
//!
//! ```
//! use covgraph::{datasets, fit_icf, model, FitConfig};
//!
//! let stats = datasets::yeast_stats();
//! let fit = fit_icf(&stats, &datasets::yeast_graph_d(), &FitConfig::default()).unwrap();
//! let dev = model::deviance(&stats, &fit.estimate).unwrap();
//! assert_eq!(dev.df, 9);
//! assert!((dev.deviance - 9.98).abs() < 1.0);
//! ```

pub mod anderson;
pub mod datasets;
pub mod dual;
pub mod el;
mod error;
pub mod fit;
pub mod graph;
pub mod icf;
pub mod icf_multi;
pub mod io;
pub mod linalg;
pub mod model;
pub mod simulation;

pub use anderson::{fit_anderson, AndersonOutcome, AndersonStatus};
pub use dual::{dual_residual, fit_dual, fit_dual_ipf};
pub use el::{fit_el, inner_el, ElConfig, ElFit, WeightedSample};
pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult, Method};
pub use graph::{CompleteSetFamily, CovarianceGraph, FamilyViolation, FreeIndexSet};
pub use icf::{fit_icf, icf_update_vertex};
pub use icf_multi::{block_update, fit_icf_multi};
pub use model::{ConstrainedCovariance, Deviance, SampleStats};
pub use simulation::{run_simulation, Distribution, SimReport, SimSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/icf.md")]
    mod icf {}
    #[doc = include_str!("../../../book/src/anderson.md")]
    mod anderson {}
    #[doc = include_str!("../../../book/src/dual.md")]
    mod dual {}
    #[doc = include_str!("../../../book/src/empirical_likelihood.md")]
    mod empirical_likelihood {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
