//! Reference inputs: the four-variable example graph and its simulation
//! covariance, and the yeast galactose-gene summary statistics
//! together with the two selected covariance graphs.

use nalgebra::DMatrix;

use crate::graph::CovarianceGraph;
use crate::model::SampleStats;

/// The graph `1 <-> 3 <-> 4 <-> 2` on vertices `1, 2, 3, 4`.
pub fn path_graph() -> CovarianceGraph {
    CovarianceGraph::new(&["1", "2", "3", "4"], &[("1", "3"), ("3", "4"), ("2", "4")]).expect("static graph")
}

/// Covariance matrix used for the simulations; its zero pattern is that of
/// [`path_graph`].
pub fn path_sigma() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.5, 0.0, //
            0.0, 1.0, 0.0, 0.25, //
            0.5, 0.0, 1.0, 0.75, //
            0.0, 0.25, 0.75, 1.0,
        ],
    )
}

/// Gene labels in the order of the correlation table.
pub const YEAST_LABELS: [&str; 8] = ["X11", "X4", "X80", "X2", "X1", "X3", "X7", "X10"];

/// Number of experiments.
pub const YEAST_N: usize = 134;

/// Standard deviations, rounded to two decimals.
pub const YEAST_SD: [f64; 8] = [0.39, 0.36, 0.47, 1.70, 1.70, 0.78, 1.85, 1.54];

/// Strictly lower-triangular correlations by row, rounded to two decimals.
pub const YEAST_CORR: [&[f64]; 7] = [
    &[0.24],
    &[0.08, 0.23],
    &[-0.18, -0.03, 0.26],
    &[-0.10, -0.10, 0.28, 0.87],
    &[-0.18, 0.12, 0.20, 0.44, 0.39],
    &[-0.07, -0.08, 0.21, 0.81, 0.88, 0.50],
    &[-0.08, -0.07, 0.26, 0.87, 0.92, 0.46, 0.91],
];

/// Solid edges of the smaller yeast graph `G_s`.
pub const YEAST_SOLID_EDGES: [(&str, &str); 15] = [
    ("X4", "X11"),
    ("X4", "X80"),
    ("X80", "X1"),
    ("X80", "X2"),
    ("X80", "X10"),
    ("X1", "X2"),
    ("X1", "X3"),
    ("X1", "X10"),
    ("X1", "X7"),
    ("X2", "X3"),
    ("X2", "X10"),
    ("X2", "X7"),
    ("X3", "X10"),
    ("X3", "X7"),
    ("X10", "X7"),
];

/// Additional edges that turn `G_s` into `G_d`.
pub const YEAST_DASHED_EDGES: [(&str, &str); 4] = [("X11", "X2"), ("X11", "X3"), ("X80", "X3"), ("X80", "X7")];

/// `S_ij = r_ij sd_i sd_j` from the rounded table.
pub fn yeast_covariance() -> DMatrix<f64> {
    let p = YEAST_LABELS.len();
    DMatrix::from_fn(p, p, |i, j| {
        let r = match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => YEAST_CORR[i - 1][j],
            std::cmp::Ordering::Less => YEAST_CORR[j - 1][i],
        };
        r * YEAST_SD[i] * YEAST_SD[j]
    })
}

pub fn yeast_stats() -> SampleStats {
    SampleStats::from_covariance(YEAST_N, yeast_covariance()).expect("static covariance")
}

pub fn yeast_graph_s() -> CovarianceGraph {
    CovarianceGraph::new(&YEAST_LABELS, &YEAST_SOLID_EDGES).expect("static graph")
}

pub fn yeast_graph_d() -> CovarianceGraph {
    let edges: Vec<(&str, &str)> = YEAST_SOLID_EDGES.iter().chain(YEAST_DASHED_EDGES.iter()).copied().collect();
    CovarianceGraph::new(&YEAST_LABELS, &edges).expect("static graph")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yeast_inputs_are_consistent() {
        let s = yeast_stats();
        assert!(s.is_positive_definite());
        assert_eq!(yeast_graph_s().num_edges(), 15);
        assert_eq!(yeast_graph_d().num_edges(), 19);
        let c = yeast_covariance();
        assert!((c[(4, 3)] - 0.87 * 1.70 * 1.70).abs() < 1e-15);
        assert_eq!(c[(3, 4)], c[(4, 3)]);
    }

    #[test]
    fn path_sigma_fits_its_pattern() {
        let g = path_graph();
        crate::model::check_pattern(&g, &path_sigma()).unwrap();
        assert!(crate::linalg::is_positive_definite(&path_sigma()));
    }
}
