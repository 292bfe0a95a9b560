//! Sparse undirected multigraphs and block bookkeeping.
//!
//! A [`Graph`] stores each unordered pair once as `(u, v, a_uv)` with `u < v`
//! and `a_uv >= 1`, together with a compressed adjacency used by the message
//! passing engine. Node ids from the input are kept so reports can use the
//! original names.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub multiplicity: u32,
}

/// Nodes sharing one degree value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeClass {
    pub degree: u64,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Graph {
    names: Vec<String>,
    edges: Vec<Edge>,
    degrees: Vec<u64>,
    m: u64,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    mults: Vec<u32>,
    reverse: Vec<usize>,
    classes: Vec<DegreeClass>,
    class_of: Vec<usize>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.edges == other.edges
    }
}

/// What to do when the same unordered pair appears on several lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DuplicatePolicy {
    /// Add the multiplicities (Poisson multigraph semantics).
    #[default]
    Sum,
    /// Keep a single edge of multiplicity one per pair.
    Collapse,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub duplicates: DuplicatePolicy,
}

/// Counters collected while reading an edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub lines: usize,
    pub self_loops_dropped: usize,
    pub duplicate_lines: usize,
}

impl Graph {
    /// Builds a graph on `n` nodes named `1..=n`.
    pub fn from_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, u32)>,
    {
        let names = (1..=n).map(|i| i.to_string()).collect();
        Self::with_names(names, edges, DuplicatePolicy::Sum).0
    }

    /// Builds a graph from named nodes. Self-loops are dropped and repeated
    /// pairs merged according to `policy`; returns the number of each.
    pub fn with_names<I>(names: Vec<String>, edges: I, policy: DuplicatePolicy) -> (Self, usize, usize)
    where
        I: IntoIterator<Item = (usize, usize, u32)>,
    {
        let n = names.len();
        let mut self_loops = 0;
        let mut raw: Vec<(usize, usize, u32)> = Vec::new();
        for (a, b, w) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if w == 0 {
                continue;
            }
            if a == b {
                self_loops += 1;
                continue;
            }
            raw.push((a.min(b), a.max(b), w));
        }
        raw.sort_unstable_by_key(|&(u, v, _)| (u, v));

        let mut edges: Vec<Edge> = Vec::with_capacity(raw.len());
        let mut duplicates = 0;
        for (u, v, w) in raw {
            match edges.last_mut() {
                Some(last) if last.u == u && last.v == v => {
                    duplicates += 1;
                    if policy == DuplicatePolicy::Sum {
                        last.multiplicity += w;
                    }
                }
                _ => edges.push(Edge {
                    u,
                    v,
                    multiplicity: if policy == DuplicatePolicy::Collapse { 1 } else { w },
                }),
            }
        }
        (Self::assemble(names, edges), self_loops, duplicates)
    }

    fn assemble(names: Vec<String>, edges: Vec<Edge>) -> Self {
        let n = names.len();
        let mut degrees = vec![0u64; n];
        let mut counts = vec![0usize; n];
        let mut m = 0u64;
        for e in &edges {
            let w = u64::from(e.multiplicity);
            degrees[e.u] += w;
            degrees[e.v] += w;
            counts[e.u] += 1;
            counts[e.v] += 1;
            m += w;
        }

        let mut offsets = vec![0usize; n + 1];
        for u in 0..n {
            offsets[u + 1] = offsets[u] + counts[u];
        }
        let total = offsets[n];
        let mut targets = vec![0usize; total];
        let mut mults = vec![0u32; total];
        let mut reverse = vec![0usize; total];
        let mut fill = offsets[..n].to_vec();
        for e in &edges {
            let iu = fill[e.u];
            let iv = fill[e.v];
            targets[iu] = e.v;
            mults[iu] = e.multiplicity;
            targets[iv] = e.u;
            mults[iv] = e.multiplicity;
            reverse[iu] = iv;
            reverse[iv] = iu;
            fill[e.u] += 1;
            fill[e.v] += 1;
        }

        let mut by_degree: Vec<usize> = (0..n).collect();
        by_degree.sort_by_key(|&u| (degrees[u], u));
        let mut classes: Vec<DegreeClass> = Vec::new();
        let mut class_of = vec![0usize; n];
        for u in by_degree {
            if classes.last().map(|c| c.degree) != Some(degrees[u]) {
                classes.push(DegreeClass {
                    degree: degrees[u],
                    nodes: Vec::new(),
                });
            }
            let idx = classes.len() - 1;
            classes[idx].nodes.push(u);
            class_of[u] = idx;
        }

        Self {
            names,
            edges,
            degrees,
            m,
            offsets,
            targets,
            mults,
            reverse,
            classes,
            class_of,
        }
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Total edge count, counting multiplicity.
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    pub fn degree(&self, u: usize) -> u64 {
        self.degrees[u]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, u: usize) -> &str {
        &self.names[u]
    }

    /// Distinct degree values in increasing order with their members.
    pub fn degree_classes(&self) -> &[DegreeClass] {
        &self.classes
    }

    pub fn class_of(&self, u: usize) -> usize {
        self.class_of[u]
    }

    /// Range of directed-edge slots leaving `u`.
    pub fn slots(&self, u: usize) -> std::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }

    pub fn num_slots(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, slot: usize) -> usize {
        self.targets[slot]
    }

    pub fn multiplicity(&self, slot: usize) -> u32 {
        self.mults[slot]
    }

    /// The slot of the opposite direction of `slot`.
    pub fn reverse(&self, slot: usize) -> usize {
        self.reverse[slot]
    }

    /// Neighbors of `u` with multiplicities.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.slots(u).map(move |s| (self.targets[s], self.mults[s]))
    }

    /// For each entry of [`Graph::edges`], the slot carrying direction `u -> v`.
    pub fn edge_slots(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.edges.len());
        for u in 0..self.n() {
            out.extend(self.slots(u).filter(|&s| self.targets[s] > u));
        }
        out
    }

    pub fn multiplicity_between(&self, u: usize, v: usize) -> u32 {
        self.neighbors(u)
            .find(|&(w, _)| w == v)
            .map_or(0, |(_, a)| a)
    }

    /// Writes the graph as an edge list that reloads to an identical graph.
    ///
    /// Nodes that would otherwise appear out of index order (or not at all,
    /// when isolated) are declared with a self-loop line, which the loader
    /// drops after registering the node.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# n={} m={}", self.n(), self.m)?;
        let mut next = 0;
        let introduce = |node: usize, out: &mut W, next: &mut usize| -> std::io::Result<()> {
            while *next < node {
                let name = &self.names[*next];
                writeln!(out, "{name} {name}")?;
                *next += 1;
            }
            if *next == node {
                *next += 1;
            }
            Ok(())
        };
        for e in &self.edges {
            let fresh = e.u >= next;
            introduce(e.u, &mut out, &mut next)?;
            if fresh && e.v > next {
                // nodes between u and v get declared before this line, so u must come first
                let name = &self.names[e.u];
                writeln!(out, "{name} {name}")?;
            }
            introduce(e.v, &mut out, &mut next)?;
            if e.multiplicity == 1 {
                writeln!(out, "{} {}", self.names[e.u], self.names[e.v])?;
            } else {
                writeln!(out, "{} {} {}", self.names[e.u], self.names[e.v], e.multiplicity)?;
            }
        }
        introduce(self.n(), &mut out, &mut next)?;
        Ok(())
    }
}

/// Reads a whitespace-separated edge list.
///
/// Lines are `u v` or `u v w` with `w` a positive integer multiplicity; lines
/// starting with `#` and blank lines are skipped. Tokens are mapped to dense
/// indices in order of first appearance.
pub fn load_edge_list<R: BufRead>(source: R, options: LoadOptions) -> Result<(Graph, LoadReport)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut raw = Vec::new();
    let mut report = LoadReport::default();

    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        report.lines += 1;
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 2 || tokens.len() > 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `u v` or `u v w`, found {} fields", tokens.len()),
            });
        }
        let weight = match tokens.get(2) {
            None => 1,
            Some(tok) => {
                let w: i64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("multiplicity `{tok}` is not an integer"),
                })?;
                if w <= 0 {
                    return Err(Error::Multiplicity { line: lineno, value: w });
                }
                u32::try_from(w).map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("multiplicity {w} too large"),
                })?
            }
        };
        let mut id = |tok: &str| -> usize {
            if let Some(&i) = index.get(tok) {
                return i;
            }
            let i = names.len();
            names.push(tok.to_string());
            index.insert(tok.to_string(), i);
            i
        };
        let a = id(tokens[0]);
        let b = id(tokens[1]);
        raw.push((a, b, weight));
    }

    let (graph, self_loops, duplicates) = Graph::with_names(names, raw, options.duplicates);
    report.self_loops_dropped = self_loops;
    report.duplicate_lines = duplicates;
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop line(s)");
    }
    Ok((graph, report))
}

/// A hard labeling of nodes into `k` blocks with its sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockAssignment {
    /// Zero-based block id per node.
    pub labels: Vec<usize>,
    pub k: usize,
    /// `n_r`
    pub block_sizes: Vec<usize>,
    /// `m_rs`, row-major `k x k`; diagonal entries count within-block edges twice.
    pub block_edge_counts: Vec<u64>,
    /// `sum of d_u over block r`
    pub block_degree_sums: Vec<u64>,
    /// `d_r`, zero for empty blocks.
    pub block_mean_degrees: Vec<f64>,
}

impl BlockAssignment {
    pub fn edge_count(&self, r: usize, s: usize) -> u64 {
        self.block_edge_counts[r * self.k + s]
    }
}

/// Computes `n_r`, `m_rs` and `d_r` for zero-based `labels` in `0..k`.
pub fn block_statistics(graph: &Graph, labels: &[usize], k: usize) -> Result<BlockAssignment> {
    if labels.len() != graph.n() {
        return Err(Error::LabelCount {
            expected: graph.n(),
            got: labels.len(),
        });
    }
    if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &g)| g >= k) {
        return Err(Error::LabelOutOfRange {
            node,
            label: label + 1,
            k,
        });
    }
    let mut sizes = vec![0usize; k];
    let mut degree_sums = vec![0u64; k];
    for (u, &g) in labels.iter().enumerate() {
        sizes[g] += 1;
        degree_sums[g] += graph.degree(u);
    }
    let mut counts = vec![0u64; k * k];
    for e in graph.edges() {
        let (r, s) = (labels[e.u], labels[e.v]);
        let w = u64::from(e.multiplicity);
        counts[r * k + s] += w;
        counts[s * k + r] += w;
    }
    let means = sizes
        .iter()
        .zip(&degree_sums)
        .map(|(&n, &d)| if n == 0 { 0.0 } else { d as f64 / n as f64 })
        .collect();
    Ok(BlockAssignment {
        labels: labels.to_vec(),
        k,
        block_sizes: sizes,
        block_edge_counts: counts,
        block_degree_sums: degree_sums,
        block_mean_degrees: means,
    })
}

/// Converts one-based labels (as written in label files) to zero-based ones.
pub fn labels_from_one_based(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(node, &g)| {
            if g == 0 || g > k {
                Err(Error::LabelOutOfRange { node, label: g, k })
            } else {
                Ok(g - 1)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Graph {
        load_edge_list(text.as_bytes(), LoadOptions::default()).unwrap().0
    }

    #[test]
    fn path_graph() {
        let g = load("a b\nb c");
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 2);
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.names(), &["a", "b", "c"]);
    }

    #[test]
    fn duplicate_lines_sum() {
        let (g, report) = load_edge_list("a b\na b".as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!((g.n(), g.m()), (2, 2));
        assert_eq!(g.multiplicity_between(0, 1), 2);
        assert_eq!(report.duplicate_lines, 1);

        let opts = LoadOptions {
            duplicates: DuplicatePolicy::Collapse,
        };
        let (g, _) = load_edge_list("a b\nb a 3".as_bytes(), opts).unwrap();
        assert_eq!(g.m(), 1);
    }

    #[test]
    fn explicit_multiplicity_and_comments() {
        let g = load("# header\n\nx y 3\n  # indented comment\ny z\n");
        assert_eq!(g.m(), 4);
        assert_eq!(g.degrees(), &[3, 4, 1]);
    }

    #[test]
    fn self_loops_are_dropped_but_nodes_kept() {
        let (g, report) = load_edge_list("a a\nb c".as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.m(), 1);
        assert_eq!(g.degree(0), 0);
        assert_eq!(report.self_loops_dropped, 1);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = load_edge_list("a b\nc\n".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = load_edge_list("a b c d".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = load_edge_list("a b 1.5".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = load_edge_list("a b\n# c\na c 0".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Multiplicity { line: 3, value: 0 }));
        let err = load_edge_list("a b -2".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Multiplicity { value: -2, .. }));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = load("a b 2\nb c\nc a\nd a");
        for u in 0..g.n() {
            for s in g.slots(u) {
                let v = g.target(s);
                let back = g.reverse(s);
                assert_eq!(g.target(back), u);
                assert_eq!(g.multiplicity(back), g.multiplicity(s));
                assert_eq!(g.multiplicity_between(v, u), g.multiplicity(s));
            }
        }
        let total: u64 = g.degrees().iter().sum();
        assert_eq!(total, 2 * g.m());
    }

    #[test]
    fn degree_classes_partition_nodes() {
        let g = load("a b\nb c\nc d\nd a\na c");
        let classes = g.degree_classes();
        assert_eq!(classes.iter().map(|c| c.degree).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(classes[1].nodes, vec![0, 2]);
        assert_eq!(g.class_of(1), 0);
    }

    #[test]
    fn block_statistics_on_path() {
        let g = load("a b\nb c");
        let b = block_statistics(&g, &[0, 0, 1], 2).unwrap();
        assert_eq!(b.block_sizes, vec![2, 1]);
        assert_eq!(b.edge_count(0, 0), 2);
        assert_eq!(b.edge_count(0, 1), 1);
        assert_eq!(b.edge_count(1, 0), 1);
        assert_eq!(b.edge_count(1, 1), 0);
        assert_eq!(b.block_mean_degrees, vec![1.5, 1.0]);
    }

    #[test]
    fn block_statistics_single_block_and_empty_graph() {
        let g = load("a b\nb c\nc a 2");
        let b = block_statistics(&g, &[0, 0, 0], 1).unwrap();
        assert_eq!(b.block_sizes, vec![3]);
        assert_eq!(b.edge_count(0, 0), 2 * g.m());

        let empty = Graph::from_edges(2, []);
        let b = block_statistics(&empty, &[0, 1], 2).unwrap();
        assert!(b.block_edge_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn block_statistics_rejects_bad_labels() {
        let g = load("a b");
        assert!(matches!(
            block_statistics(&g, &[0, 2], 2),
            Err(Error::LabelOutOfRange { node: 1, .. })
        ));
        assert!(matches!(block_statistics(&g, &[0], 2), Err(Error::LabelCount { .. })));
        assert!(labels_from_one_based(&[1, 0], 2).is_err());
        assert_eq!(labels_from_one_based(&[1, 2], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn round_trip_keeps_isolated_and_out_of_order_nodes() {
        // node "q" only touches "z", which is introduced late
        let (g, _) =
            load_edge_list("a a\nb z\nq z 2\nb c\n".as_bytes(), LoadOptions::default()).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let (back, _) = load_edge_list(buf.as_slice(), LoadOptions::default()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.degrees(), g.degrees());
    }
}
