//! Immutable CSR graph storage, degree analytics, k-hop queries,
//! degree-threshold splitting, and synthetic graph generation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Node identifier. Graphs in this crate are id-contiguous: ids run from
/// `0` to `node_count - 1`.
pub type NodeId = u32;

/// Immutable compressed-sparse-row adjacency. This is the "disk" every
/// sampler reads from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    in_offsets: Option<Vec<usize>>,
    in_targets: Option<Vec<NodeId>>,
    symmetrized: bool,
}

/// Which adjacency a degree is counted over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMode {
    Out,
    In,
    Total,
}

/// Per-node degrees under a fixed [`DegreeMode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeVector {
    pub degrees: Vec<usize>,
    pub mode: DegreeMode,
}

/// Result of a degree-threshold split: node partition, induced subgraphs,
/// and the id remappings between original and local ids.
#[derive(Debug, Clone)]
pub struct SplitResult {
    /// Original ids with total degree strictly greater than theta, ascending.
    pub dense_nodes: Vec<NodeId>,
    /// Original ids with total degree at most theta, ascending.
    pub sparse_nodes: Vec<NodeId>,
    pub dense_subgraph: Graph,
    pub sparse_subgraph: Graph,
    /// original id -> local id within the dense subgraph.
    pub dense_id_map: BTreeMap<NodeId, NodeId>,
    /// original id -> local id within the sparse subgraph.
    pub sparse_id_map: BTreeMap<NodeId, NodeId>,
    /// Edges with endpoints in different partitions; they appear in neither
    /// subgraph.
    pub dropped_cross_edges: usize,
    pub theta: i64,
}

impl SplitResult {
    /// Local id of `node` inside the partition it belongs to, together with
    /// a flag that is true for the dense partition.
    pub fn locate(&self, node: NodeId) -> Option<(bool, NodeId)> {
        if let Some(&local) = self.dense_id_map.get(&node) {
            Some((true, local))
        } else {
            self.sparse_id_map.get(&node).map(|&local| (false, local))
        }
    }
}

/// Synthetic graph families. Output is always symmetrized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticModel {
    /// Independent undirected edges with probability `p`.
    ErdosRenyi { n: usize, p: f64 },
    /// Growth with preferential attachment: each new node attaches to `m`
    /// distinct existing nodes chosen proportionally to degree.
    PreferentialAttachment { n: usize, m: usize },
}

/// Builds a CSR graph from an edge list.
///
/// Edges are sorted by source then target; duplicates are preserved.
/// With `symmetrize`, the reversed copy of every edge is added before
/// construction. With `build_in_adjacency`, the in-edge mirror arrays are
/// materialized too.
pub fn build_graph(
    edges: &[(NodeId, NodeId)],
    node_count: usize,
    symmetrize: bool,
    build_in_adjacency: bool,
) -> Result<Graph> {
    for &(u, v) in edges {
        if (u as usize) >= node_count || (v as usize) >= node_count {
            return Err(Error::invalid_argument(format!(
                "edge ({u}, {v}) out of range for node_count {node_count}"
            )));
        }
    }
    let mut all: Vec<(NodeId, NodeId)> = Vec::with_capacity(if symmetrize {
        edges.len() * 2
    } else {
        edges.len()
    });
    all.extend_from_slice(edges);
    if symmetrize {
        all.extend(edges.iter().map(|&(u, v)| (v, u)));
    }
    all.sort_unstable();

    let (out_offsets, out_targets) = csr_arrays(&all, node_count, false);
    let (in_offsets, in_targets) = if build_in_adjacency {
        let (o, t) = csr_arrays(&all, node_count, true);
        (Some(o), Some(t))
    } else {
        (None, None)
    };

    Ok(Graph {
        node_count,
        out_offsets,
        out_targets,
        in_offsets,
        in_targets,
        symmetrized: symmetrize,
    })
}

fn csr_arrays(
    sorted_edges: &[(NodeId, NodeId)],
    node_count: usize,
    reversed: bool,
) -> (Vec<usize>, Vec<NodeId>) {
    let mut offsets = vec![0usize; node_count + 1];
    let mut pairs: Vec<(NodeId, NodeId)>;
    let edges: &[(NodeId, NodeId)] = if reversed {
        pairs = sorted_edges.iter().map(|&(u, v)| (v, u)).collect();
        pairs.sort_unstable();
        &pairs
    } else {
        sorted_edges
    };
    for &(u, _) in edges {
        offsets[u as usize + 1] += 1;
    }
    for i in 0..node_count {
        offsets[i + 1] += offsets[i];
    }
    let targets = edges.iter().map(|&(_, v)| v).collect();
    (offsets, targets)
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn has_in_adjacency(&self) -> bool {
        self.in_offsets.is_some()
    }

    /// Out-neighbors of `v`, duplicates preserved.
    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    /// In-neighbors of `v`. For a symmetrized graph without explicit
    /// mirrors, the out-list is the in-list.
    pub fn in_neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        let vi = v as usize;
        match (&self.in_offsets, &self.in_targets) {
            (Some(offsets), Some(targets)) => Ok(&targets[offsets[vi]..offsets[vi + 1]]),
            _ if self.symmetrized => Ok(self.out_neighbors(v)),
            _ => Err(Error::config(
                "in-adjacency requested but the graph has neither in mirrors nor symmetry",
            )),
        }
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count as NodeId).into_iter()
    }

    /// All edges in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes()
            .flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v)))
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if (v as usize) < self.node_count {
            Ok(())
        } else {
            Err(Error::invalid_argument(format!(
                "node id {v} out of range for node_count {}",
                self.node_count
            )))
        }
    }
}

/// Per-node degrees of `g` under `mode`.
///
/// `Total` counts `|out(v)| + |in(v)|` and requires either explicit in
/// mirrors or a symmetrized graph.
pub fn total_degree(g: &Graph, mode: DegreeMode) -> Result<DegreeVector> {
    let degrees = match mode {
        DegreeMode::Out => g.nodes().map(|v| g.out_degree(v)).collect(),
        DegreeMode::In => {
            let mut deg = vec![0usize; g.node_count()];
            if let Some(offsets) = &g.in_offsets {
                for v in 0..g.node_count() {
                    deg[v] = offsets[v + 1] - offsets[v];
                }
            } else if g.symmetrized {
                for v in g.nodes() {
                    deg[v as usize] = g.out_degree(v);
                }
            } else {
                return Err(Error::config(
                    "degree mode 'in' requires in-adjacency or a symmetrized graph",
                ));
            }
            deg
        }
        DegreeMode::Total => {
            let out = total_degree(g, DegreeMode::Out)?;
            let inn = total_degree(g, DegreeMode::In)?;
            out.degrees
                .iter()
                .zip(inn.degrees.iter())
                .map(|(a, b)| a + b)
                .collect()
        }
    };
    Ok(DegreeVector { degrees, mode })
}

/// Splits `g` into dense (total degree strictly greater than `theta`) and
/// sparse partitions with node-induced subgraphs on remapped contiguous
/// local ids. Cross-partition edges are dropped from both subgraphs and
/// counted.
pub fn split_by_degree(g: &Graph, theta: i64) -> Result<SplitResult> {
    let total = total_degree(g, DegreeMode::Total)?;
    let mut dense_nodes = Vec::new();
    let mut sparse_nodes = Vec::new();
    for v in g.nodes() {
        if total.degrees[v as usize] as i64 > theta {
            dense_nodes.push(v);
        } else {
            sparse_nodes.push(v);
        }
    }
    let (dense_subgraph, dense_id_map, dense_kept) = induce(g, &dense_nodes)?;
    let (sparse_subgraph, sparse_id_map, sparse_kept) = induce(g, &sparse_nodes)?;
    let dropped_cross_edges = g.edge_count() - dense_kept - sparse_kept;
    Ok(SplitResult {
        dense_nodes,
        sparse_nodes,
        dense_subgraph,
        sparse_subgraph,
        dense_id_map,
        sparse_id_map,
        dropped_cross_edges,
        theta,
    })
}

fn induce(g: &Graph, nodes: &[NodeId]) -> Result<(Graph, BTreeMap<NodeId, NodeId>, usize)> {
    let id_map: BTreeMap<NodeId, NodeId> = nodes
        .iter()
        .enumerate()
        .map(|(local, &orig)| (orig, local as NodeId))
        .collect();
    let mut edges = Vec::new();
    for &orig in nodes {
        let src = id_map[&orig];
        for &t in g.out_neighbors(orig) {
            if let Some(&dst) = id_map.get(&t) {
                edges.push((src, dst));
            }
        }
    }
    let kept = edges.len();
    let sub = build_graph(&edges, nodes.len(), false, g.has_in_adjacency())?;
    let sub = Graph {
        symmetrized: g.symmetrized,
        ..sub
    };
    Ok((sub, id_map, kept))
}

/// Nodes within shortest-path distance `k` of `v` over out-edges,
/// including `v` itself. Returned sorted ascending.
pub fn k_hop(g: &Graph, v: NodeId, k: usize) -> Result<Vec<NodeId>> {
    g.check_node(v)?;
    let mut seen = vec![false; g.node_count()];
    seen[v as usize] = true;
    let mut frontier = vec![v];
    let mut out = vec![v];
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &t in g.out_neighbors(u) {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    next.push(t);
                    out.push(t);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out.sort_unstable();
    Ok(out)
}

/// Generates a synthetic symmetrized graph, deterministic for a fixed seed.
pub fn generate_synthetic(model: SyntheticModel, seed: u64) -> Result<Graph> {
    match model {
        SyntheticModel::ErdosRenyi { n, p } => {
            if n < 1 {
                return Err(Error::invalid_argument("erdos-renyi requires n >= 1"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid_argument("erdos-renyi requires 0 <= p <= 1"));
            }
            let mut rng = rng_from(seed);
            let mut edges = Vec::new();
            for i in 0..n as NodeId {
                for j in (i + 1)..n as NodeId {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            build_graph(&edges, n, true, false)
        }
        SyntheticModel::PreferentialAttachment { n, m } => {
            if m < 1 {
                return Err(Error::invalid_argument(
                    "preferential-attachment requires m >= 1",
                ));
            }
            if n <= m {
                return Err(Error::invalid_argument(
                    "preferential-attachment requires n > m",
                ));
            }
            let mut rng = rng_from(seed);
            let mut edges = Vec::new();
            // Degree-proportional choice via the repeated-endpoints list.
            let mut repeated: Vec<NodeId> = Vec::new();
            let core = (m + 1).min(n);
            for i in 0..core as NodeId {
                for j in (i + 1)..core as NodeId {
                    edges.push((i, j));
                    repeated.push(i);
                    repeated.push(j);
                }
            }
            for v in core as NodeId..n as NodeId {
                let mut targets = std::collections::BTreeSet::new();
                while targets.len() < m {
                    let t = repeated[rng.gen_range(0..repeated.len())];
                    targets.insert(t);
                }
                for &t in &targets {
                    edges.push((v, t));
                    repeated.push(v);
                    repeated.push(t);
                }
            }
            build_graph(&edges, n, true, false)
        }
    }
}

/// Reads the plain-text edge-list format: one `u<ws>v` pair per line,
/// `#`-prefixed lines ignored except a `# nodes=N` header which overrides
/// the default `node_count = 1 + max id`.
pub fn read_edge_list<R: Read>(reader: R) -> Result<(Vec<(NodeId, NodeId)>, usize)> {
    let reader = BufReader::new(reader);
    let mut edges = Vec::new();
    let mut declared_nodes: Option<usize> = None;
    let mut max_id: Option<NodeId> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(value) = rest.strip_prefix("nodes=") {
                declared_nodes = Some(value.trim().parse().map_err(|_| {
                    Error::parse(format!("line {}: bad node count '{value}'", lineno + 1))
                })?);
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next()) {
            (Some(u), Some(v)) => (u, v),
            _ => {
                return Err(Error::parse(format!(
                    "line {}: expected 'u v', got '{line}'",
                    lineno + 1
                )))
            }
        };
        let u: NodeId = u
            .parse()
            .map_err(|_| Error::parse(format!("line {}: bad node id '{u}'", lineno + 1)))?;
        let v: NodeId = v
            .parse()
            .map_err(|_| Error::parse(format!("line {}: bad node id '{v}'", lineno + 1)))?;
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let node_count = declared_nodes.unwrap_or(match max_id {
        Some(m) => m as usize + 1,
        None => 0,
    });
    Ok((edges, node_count))
}

pub fn read_edge_list_file(path: impl AsRef<Path>) -> Result<(Vec<(NodeId, NodeId)>, usize)> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::parse(format!(
            "cannot open edge list {}: {e}",
            path.as_ref().display()
        ))
    })?;
    read_edge_list(file)
}

/// Writes a graph in the edge-list format with a `# nodes=N` header.
///
/// For a symmetrized graph each undirected edge is written once as
/// `min max`; otherwise every directed edge is written.
pub fn write_edge_list<W: Write>(g: &Graph, mut writer: W) -> Result<()> {
    writeln!(writer, "# nodes={}", g.node_count())?;
    if g.symmetrized {
        let mut undirected: Vec<(NodeId, NodeId)> = g
            .edges()
            .filter(|&(u, v)| u <= v)
            .collect();
        undirected.sort_unstable();
        for (u, v) in undirected {
            writeln!(writer, "{u} {v}")?;
        }
    } else {
        for (u, v) in g.edges() {
            writeln!(writer, "{u} {v}")?;
        }
    }
    Ok(())
}
