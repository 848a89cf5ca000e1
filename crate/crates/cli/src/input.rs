use std::fs;
use std::path::Path;

use covgraph::io::{self, DataOptions};
use covgraph::{CovarianceGraph, Error, Result, SampleStats};
use nalgebra::DMatrix;

use crate::args::InputArgs;

/// Observations and statistics aligned to the graph's vertex order.
pub struct Input {
    pub graph: CovarianceGraph,
    pub data: Option<DMatrix<f64>>,
    pub stats: SampleStats,
}

pub fn load(args: &InputArgs) -> Result<Input> {
    let graph = CovarianceGraph::parse(&fs::read_to_string(&args.graph)?)?;
    let (data, stats) = match (&args.data, &args.stats) {
        (Some(path), _) => {
            let delimiter = u8::try_from(args.delimiter)
                .map_err(|_| Error::InvalidArgument("delimiter must be a single-byte character".into()))?;
            let table = io::load_data(path, DataOptions { delimiter, header: !args.no_header })?;
            let order =
                if args.no_header { identity_order(table.cols(), &graph)? } else { align(&table.labels, &graph)? };
            let values = table.values.select_columns(&order);
            let stats = SampleStats::from_data(&values)?;
            (Some(values), stats)
        }
        (None, Some(path)) => {
            let file = io::load_stats(path)?;
            let order = align(&file.labels, &graph)?;
            let cov = file.stats.cov().select_rows(&order).select_columns(&order);
            (None, SampleStats::from_covariance(file.stats.n(), cov)?)
        }
        (None, None) => return Err(Error::InvalidArgument("one of --data or --stats is required".into())),
    };
    if !stats.is_positive_definite() {
        crate::note("the sample covariance matrix is singular; likelihood-based fits will fail");
    }
    Ok(Input { graph, data, stats: stats.with_n_adjust(args.n_adjust) })
}

fn identity_order(cols: usize, graph: &CovarianceGraph) -> Result<Vec<usize>> {
    if cols != graph.num_vertices() {
        return Err(Error::Dimension(format!("data has {cols} columns, graph has {} vertices", graph.num_vertices())));
    }
    Ok((0..cols).collect())
}

/// For each graph vertex, the position of its column in `labels`.
pub fn align(labels: &[String], graph: &CovarianceGraph) -> Result<Vec<usize>> {
    if labels.len() != graph.num_vertices() {
        return Err(Error::Dimension(format!(
            "input has {} variables, graph has {} vertices",
            labels.len(),
            graph.num_vertices()
        )));
    }
    graph
        .labels()
        .iter()
        .map(|v| labels.iter().position(|l| l == v).ok_or_else(|| Error::UnknownVertex(v.clone())))
        .collect()
}

/// A labelled matrix file reordered to the graph's vertex order.
pub fn matrix_for(path: &Path, graph: &CovarianceGraph) -> Result<DMatrix<f64>> {
    let (labels, m) = io::read_matrix(path)?;
    let order = align(&labels, graph)?;
    Ok(m.select_rows(&order).select_columns(&order))
}
