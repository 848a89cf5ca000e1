//! Bi-directed covariance graphs and the combinatorial objects derived from
//! them: spouses, the free index set, complete sets and cliques.
//!
//! Vertices are identified by their position in declaration order; that order
//! is also the row/column order of every matrix associated with the graph.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A graph whose edges `i <-> j` mark the covariances allowed to be nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CovarianceGraph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<bool>>,
    /// Edges `(i, j)` with `i < j`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
}

impl CovarianceGraph {
    /// Builds a graph from vertex labels and label pairs.
    ///
    /// Rejects duplicate labels, self-loops, unknown endpoints and repeated
    /// edges (in either orientation).
    pub fn new<S: AsRef<str>>(labels: &[S], edges: &[(S, S)]) -> Result<Self> {
        let mut g = Self::with_labels(labels.iter().map(|s| s.as_ref().to_string()).collect())?;
        for (a, b) in edges {
            let i = g.index_of(a.as_ref())?;
            let j = g.index_of(b.as_ref())?;
            g.insert_edge(i, j)?;
        }
        g.finish();
        Ok(g)
    }

    /// Builds a graph on `p` vertices labelled `1..=p` from 0-based index pairs.
    pub fn from_indices(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::with_labels((1..=p).map(|i| i.to_string()).collect())?;
        for &(i, j) in edges {
            if i >= p || j >= p {
                return Err(Error::UnknownVertex(format!("#{}", i.max(j))));
            }
            g.insert_edge(i, j)?;
        }
        g.finish();
        Ok(g)
    }

    /// Graph with the given labels and no edges.
    pub fn edgeless<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        Self::new::<S>(labels, &[])
    }

    /// Graph with the given labels and every possible edge.
    pub fn complete<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut g = Self::edgeless(labels)?;
        let p = g.num_vertices();
        for i in 0..p {
            for j in (i + 1)..p {
                g.insert_edge(i, j)?;
            }
        }
        g.finish();
        Ok(g)
    }

    /// Graph whose edges are the nonzero off-diagonal entries of `pattern`
    /// (upper triangle is read).
    pub fn from_pattern<S: AsRef<str>>(labels: &[S], pattern: &nalgebra::DMatrix<f64>) -> Result<Self> {
        let mut g = Self::edgeless(labels)?;
        let p = g.num_vertices();
        if pattern.nrows() != p || pattern.ncols() != p {
            return Err(Error::Dimension(format!(
                "pattern is {}x{}, graph has {p} vertices",
                pattern.nrows(),
                pattern.ncols()
            )));
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if pattern[(i, j)] != 0.0 {
                    g.insert_edge(i, j)?;
                }
            }
        }
        g.finish();
        Ok(g)
    }

    fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(char::is_whitespace) || l.contains(',') {
                return Err(Error::InvalidArgument(format!("invalid vertex label {l:?}")));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateVertex(l.clone()));
            }
        }
        let p = labels.len();
        Ok(Self { labels, index, adjacency: vec![vec![false; p]; p], edges: Vec::new() })
    }

    fn insert_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::SelfLoop(self.labels[i].clone()));
        }
        if self.adjacency[i][j] {
            return Err(Error::DuplicateEdge(self.labels[i].clone(), self.labels[j].clone()));
        }
        self.adjacency[i][j] = true;
        self.adjacency[j][i] = true;
        self.edges.push((i.min(j), i.max(j)));
        Ok(())
    }

    fn finish(&mut self) {
        self.edges.sort_unstable();
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Edges as `(i, j)` with `i < j` in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::UnknownVertex(label.to_string()))
    }

    /// Resolves a list of labels to vertex indices.
    pub fn resolve<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.index_of(l.as_ref())).collect()
    }

    /// True when `i <-> j`. Never true for `i == j`.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    fn check_vertex(&self, i: usize) -> Result<()> {
        if i < self.num_vertices() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(format!("#{i}")))
        }
    }

    /// `spo(i)`: the vertices joined to `i` by an edge, ascending.
    pub fn spouses(&self, i: usize) -> Result<Vec<usize>> {
        self.check_vertex(i)?;
        Ok((0..self.num_vertices()).filter(|&j| self.adjacency[i][j]).collect())
    }

    /// `nsp(i)`: vertices other than `i` not joined to it.
    pub fn non_spouses(&self, i: usize) -> Result<Vec<usize>> {
        self.check_vertex(i)?;
        Ok((0..self.num_vertices()).filter(|&j| j != i && !self.adjacency[i][j]).collect())
    }

    /// `spo(C)`: vertices outside `c` adjacent to at least one vertex of `c`.
    pub fn spouses_of_set(&self, c: &[usize]) -> Result<Vec<usize>> {
        let inside = self.membership(c)?;
        Ok((0..self.num_vertices()).filter(|&j| !inside[j] && c.iter().any(|&i| self.adjacency[i][j])).collect())
    }

    /// Label-based convenience wrapper around [`Self::spouses`].
    pub fn spouses_of_label(&self, label: &str) -> Result<Vec<&str>> {
        let i = self.index_of(label)?;
        Ok(self.spouses(i)?.into_iter().map(|j| self.label(j)).collect())
    }

    fn membership(&self, set: &[usize]) -> Result<Vec<bool>> {
        let mut inside = vec![false; self.num_vertices()];
        for &i in set {
            self.check_vertex(i)?;
            inside[i] = true;
        }
        Ok(inside)
    }

    pub fn is_complete_set(&self, set: &[usize]) -> bool {
        set.iter().enumerate().all(|(a, &i)| set[a + 1..].iter().all(|&j| i == j || self.adjacency[i][j]))
    }

    /// The free index set: every `(i, i)` in vertex order, then each edge.
    pub fn free_index_set(&self) -> FreeIndexSet {
        let p = self.num_vertices();
        let mut pairs: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
        pairs.extend_from_slice(&self.edges);
        FreeIndexSet::from_pairs(p, pairs)
    }

    /// All maximal complete sets, each sorted, in lexicographic order.
    ///
    /// Bron–Kerbosch with Tomita pivoting; the pivot is the candidate with the
    /// most neighbours in `P`, ties broken by smallest index.
    pub fn cliques(&self) -> CompleteSetFamily {
        let p = self.num_vertices();
        let mut out = Vec::new();
        let mut r = Vec::new();
        self.bron_kerbosch(&mut r, (0..p).collect(), Vec::new(), &mut out);
        for c in &mut out {
            c.sort_unstable();
        }
        out.sort();
        CompleteSetFamily { sets: out }
    }

    fn bron_kerbosch(
        &self,
        r: &mut Vec<usize>,
        candidates: Vec<usize>,
        excluded: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if candidates.is_empty() {
            if excluded.is_empty() {
                out.push(r.clone());
            }
            return;
        }
        let pivot = candidates
            .iter()
            .chain(excluded.iter())
            .copied()
            .max_by_key(|&u| {
                let deg = candidates.iter().filter(|&&v| self.adjacency[u][v]).count();
                (deg, std::cmp::Reverse(u))
            })
            .expect("non-empty");
        let branch: Vec<usize> = candidates.iter().copied().filter(|&v| !self.adjacency[pivot][v]).collect();
        let mut candidates = candidates;
        let mut excluded = excluded;
        for v in branch {
            r.push(v);
            let next_p = candidates.iter().copied().filter(|&u| self.adjacency[v][u]).collect();
            let next_x = excluded.iter().copied().filter(|&u| self.adjacency[v][u]).collect();
            self.bron_kerbosch(r, next_p, next_x, out);
            r.pop();
            candidates.retain(|&u| u != v);
            excluded.push(v);
        }
    }

    /// Checks that every set is complete and that the sets cover all vertices.
    pub fn validate_family(&self, family: &CompleteSetFamily) -> std::result::Result<(), FamilyViolation> {
        let p = self.num_vertices();
        let mut covered = vec![false; p];
        for (k, set) in family.sets.iter().enumerate() {
            if set.is_empty() {
                return Err(FamilyViolation::EmptySet { set: k });
            }
            for (a, &i) in set.iter().enumerate() {
                if i >= p {
                    return Err(FamilyViolation::UnknownVertex { set: k, vertex: i });
                }
                for &j in &set[a + 1..] {
                    if i == j {
                        return Err(FamilyViolation::RepeatedVertex { set: k, vertex: self.label(i).to_string() });
                    }
                    if j < p && !self.adjacency[i][j] {
                        return Err(FamilyViolation::MissingEdge {
                            set: k,
                            a: self.label(i).to_string(),
                            b: self.label(j).to_string(),
                        });
                    }
                }
                covered[i] = true;
            }
        }
        match covered.iter().position(|&c| !c) {
            Some(v) => Err(FamilyViolation::Uncovered { vertex: self.label(v).to_string() }),
            None => Ok(()),
        }
    }

    /// Vertices reachable from `seeds` without entering `removed`; the union
    /// of the connected components of `G - removed` that contain a seed.
    pub fn reachable_avoiding(&self, seeds: &[usize], removed: &[usize]) -> Vec<usize> {
        let p = self.num_vertices();
        let mut blocked = vec![false; p];
        for &r in removed {
            blocked[r] = true;
        }
        let mut seen = vec![false; p];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !blocked[s] && !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(u) = stack.pop() {
            for v in 0..p {
                if self.adjacency[u][v] && !blocked[v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        (0..p).filter(|&v| seen[v]).collect()
    }

    /// Maximum cardinality search order (first visited first).
    fn max_cardinality_order(&self) -> Vec<usize> {
        let p = self.num_vertices();
        let mut weight = vec![0usize; p];
        let mut visited = vec![false; p];
        let mut order = Vec::with_capacity(p);
        for _ in 0..p {
            let v = (0..p)
                .filter(|&v| !visited[v])
                .max_by_key(|&v| (weight[v], std::cmp::Reverse(v)))
                .expect("unvisited vertex");
            visited[v] = true;
            order.push(v);
            for u in 0..p {
                if !visited[u] && self.adjacency[v][u] {
                    weight[u] += 1;
                }
            }
        }
        order
    }

    /// For a decomposable (chordal) graph, its cliques in an order with the
    /// running intersection property, each paired with its separator
    /// `C_k ∩ (C_1 ∪ … ∪ C_{k-1})`. `None` when the graph is not decomposable.
    pub fn perfect_sequence(&self) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
        let order = self.max_cardinality_order();
        let p = self.num_vertices();
        let mut pos = vec![0; p];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(p);
        for (k, &v) in order.iter().enumerate() {
            let mut set: Vec<usize> = order[..k].iter().copied().filter(|&u| self.adjacency[v][u]).collect();
            if !self.is_complete_set(&set) {
                return None;
            }
            set.push(v);
            set.sort_unstable();
            candidates.push(set);
        }
        let maximal: Vec<Vec<usize>> = candidates
            .iter()
            .enumerate()
            .filter(|(k, c)| {
                !candidates
                    .iter()
                    .enumerate()
                    .any(|(j, d)| j != *k && d.len() > c.len() && c.iter().all(|x| d.contains(x)))
            })
            .map(|(_, c)| c.clone())
            .collect();
        let mut seen = vec![false; p];
        let mut seq = Vec::with_capacity(maximal.len());
        for c in maximal {
            let sep: Vec<usize> = c.iter().copied().filter(|&v| seen[v]).collect();
            for &v in &c {
                seen[v] = true;
            }
            seq.push((c, sep));
        }
        Some(seq)
    }

    pub fn is_decomposable(&self) -> bool {
        self.perfect_sequence().is_some()
    }

    /// Parses the plain-text graph format: `vertex <label>` lines, then
    /// `edge <a> <b>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut edges: Vec<(usize, String, String)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            match fields.as_slice() {
                ["vertex", label] => {
                    if !edges.is_empty() {
                        return Err(parse_err(line, "vertex declarations must precede edges"));
                    }
                    labels.push((*label).to_string());
                }
                ["edge", a, b] => edges.push((line, (*a).to_string(), (*b).to_string())),
                _ => {
                    return Err(parse_err(
                        line,
                        &format!("expected `vertex <label>` or `edge <a> <b>`, got {content:?}"),
                    ))
                }
            }
        }
        let mut g = Self::with_labels(labels)?;
        for (line, a, b) in edges {
            let wrap = |e: Error| parse_err(line, &e.to_string());
            let i = g.index_of(&a).map_err(wrap)?;
            let j = g.index_of(&b).map_err(wrap)?;
            g.insert_edge(i, j).map_err(wrap)?;
        }
        g.finish();
        Ok(g)
    }

    /// Serializes to the format read by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.labels {
            s.push_str(&format!("vertex {l}\n"));
        }
        for &(i, j) in &self.edges {
            s.push_str(&format!("edge {} {}\n", self.labels[i], self.labels[j]));
        }
        s
    }
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse { line, column: None, message: message.to_string() }
}

/// The pairs `(i, j)`, `i <= j`, indexing the unrestricted entries of a
/// covariance matrix in `P(G)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeIndexSet {
    p: usize,
    pairs: Vec<(usize, usize)>,
    lookup: HashMap<(usize, usize), usize>,
}

impl FreeIndexSet {
    fn from_pairs(p: usize, pairs: Vec<(usize, usize)>) -> Self {
        let lookup = pairs.iter().enumerate().map(|(k, &pr)| (pr, k)).collect();
        Self { p, pairs, lookup }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Position of `(i, j)` (either orientation) in the set.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.lookup.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.position(i, j).is_some()
    }
}

/// An ordered family of vertex sets, each intended to be complete.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompleteSetFamily {
    pub sets: Vec<Vec<usize>>,
}

impl CompleteSetFamily {
    pub fn new(sets: Vec<Vec<usize>>) -> Self {
        Self { sets }
    }

    /// The family of all singletons `{0}, {1}, …, {p-1}`.
    pub fn singletons(p: usize) -> Self {
        Self { sets: (0..p).map(|i| vec![i]).collect() }
    }

    /// Builds a family from label lists.
    pub fn from_labels<S: AsRef<str>>(g: &CovarianceGraph, sets: &[Vec<S>]) -> Result<Self> {
        let sets = sets.iter().map(|s| g.resolve(s)).collect::<Result<_>>()?;
        Ok(Self { sets })
    }

    /// Parses one set per line with comma-separated labels; `#` comments.
    pub fn parse(g: &CovarianceGraph, text: &str) -> Result<Self> {
        let mut sets = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let set = content
                .split(',')
                .map(|l| {
                    g.index_of(l.trim()).map_err(|e| Error::Parse {
                        line: ln + 1,
                        column: None,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            sets.push(set);
        }
        Ok(Self { sets })
    }

    pub fn to_text(&self, g: &CovarianceGraph) -> String {
        self.sets.iter().map(|s| s.iter().map(|&i| g.label(i)).collect::<Vec<_>>().join(",") + "\n").collect()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Why a family of vertex sets is not a valid complete-set cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilyViolation {
    EmptySet { set: usize },
    UnknownVertex { set: usize, vertex: usize },
    RepeatedVertex { set: usize, vertex: String },
    MissingEdge { set: usize, a: String, b: String },
    Uncovered { vertex: String },
}

impl fmt::Display for FamilyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySet { set } => write!(f, "set #{set} is empty"),
            Self::UnknownVertex { set, vertex } => write!(f, "set #{set} contains unknown vertex #{vertex}"),
            Self::RepeatedVertex { set, vertex } => write!(f, "set #{set} repeats vertex {vertex}"),
            Self::MissingEdge { set, a, b } => write!(f, "set #{set} is not complete: {a} <-> {b} is absent"),
            Self::Uncovered { vertex } => write!(f, "vertex {vertex} is not covered by any set"),
        }
    }
}

impl std::error::Error for FamilyViolation {}
