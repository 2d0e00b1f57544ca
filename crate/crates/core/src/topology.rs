//! Hardware (Chimera) and logical (two-level-grid) graph construction,
//! percolation subgraphs, and the line-oriented graph text format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::{Error, Result};

pub type NodeId = usize;

/// Undirected graph over dense vertex ids with an active-vertex mask.
///
/// The structural edge set is kept as given; the *active view* (adjacency,
/// `edges`, degrees) drops every edge incident to an inactive vertex.
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct Graph {
    n: usize,
    active: Vec<bool>,
    adj: Vec<Vec<NodeId>>,
    edges: Vec<(NodeId, NodeId)>,
    structural_edges: Vec<(NodeId, NodeId)>,
}

impl Graph {
    pub fn new(
        n: usize,
        edge_list: &[(NodeId, NodeId)],
        inactive: &BTreeSet<NodeId>,
    ) -> Result<Self> {
        for &v in inactive {
            if v >= n {
                return Err(Error::Parameter(format!(
                    "inactive vertex {v} out of range (n = {n})"
                )));
            }
        }
        let mut active = vec![true; n];
        for &v in inactive {
            active[v] = false;
        }
        let mut structural: Vec<(NodeId, NodeId)> = Vec::with_capacity(edge_list.len());
        for &(u, v) in edge_list {
            if u >= n || v >= n {
                return Err(Error::Parameter(format!(
                    "edge ({u},{v}) out of range (n = {n})"
                )));
            }
            if u == v {
                return Err(Error::Parameter(format!("self loop at vertex {u}")));
            }
            structural.push((u.min(v), u.max(v)));
        }
        structural.sort_unstable();
        structural.dedup();

        let mut adj = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(structural.len());
        for &(u, v) in &structural {
            if active[u] && active[v] {
                adj[u].push(v);
                adj[v].push(u);
                edges.push((u, v));
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            active,
            adj,
            edges,
            structural_edges: structural,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, v: NodeId) -> bool {
        self.active[v]
    }

    pub fn active_vertices(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(move |&v| self.active[v])
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adj[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v].len()
    }

    /// Active-view edges, normalized u < v, lexicographically sorted.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// All structural edges, including those masked by inactive vertices.
    pub fn structural_edges(&self) -> &[(NodeId, NodeId)] {
        &self.structural_edges
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }
}

/// Union-find with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    pub fn component_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Chimera hardware graph: an M x N grid of K_{L,L} bipartite unit cells.
///
/// Within a cell, positions 0..L are the "left" (vertical-coupling) half and
/// L..2L the "right" (horizontal-coupling) half. Vertically adjacent cells
/// couple left halves position-by-position; horizontally adjacent cells
/// couple right halves.
#[derive(Clone, Debug)]
pub struct HardwareGraph {
    pub rows: usize,
    pub cols: usize,
    pub half: usize,
    graph: Graph,
    inactive: BTreeSet<NodeId>,
}

impl HardwareGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn inactive(&self) -> &BTreeSet<NodeId> {
        &self.inactive
    }

    pub fn vertex_count(&self) -> usize {
        self.rows * self.cols * 2 * self.half
    }

    pub fn active_count(&self) -> usize {
        self.graph.active_count()
    }

    /// Qubit id for (cell row, cell col, half in {0 left, 1 right}, position).
    pub fn qubit(&self, row: usize, col: usize, half: usize, pos: usize) -> NodeId {
        (row * self.cols + col) * 2 * self.half + half * self.half + pos
    }

    /// Inverse of [`qubit`]: (row, col, half, pos).
    pub fn qubit_coords(&self, q: NodeId) -> (usize, usize, usize, usize) {
        let cell = q / (2 * self.half);
        let within = q % (2 * self.half);
        (
            cell / self.cols,
            cell % self.cols,
            within / self.half,
            within % self.half,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "GRAPH chimera {} {} {}",
            self.rows, self.cols, self.half
        )
        .unwrap();
        for &(u, v) in self.graph.structural_edges() {
            writeln!(out, "E {u} {v}").unwrap();
        }
        for &x in &self.inactive {
            writeln!(out, "X {x}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (kind, params, _, inactive) = parse_graph_text(text)?;
        if kind != "chimera" {
            return Err(Error::Parse(format!("expected chimera graph, got {kind}")));
        }
        if params.len() != 3 {
            return Err(Error::Parse("chimera header needs M N L".into()));
        }
        chimera(params[0], params[1], params[2], &inactive)
    }
}

/// Builds a Chimera graph, masking the given dead qubits.
pub fn chimera(m: usize, n: usize, l: usize, inactive: &BTreeSet<NodeId>) -> Result<HardwareGraph> {
    if m < 1 || n < 1 || l < 1 {
        return Err(Error::Parameter("chimera dimensions must be >= 1".into()));
    }
    let total = m * n * 2 * l;
    let id =
        |row: usize, col: usize, half: usize, pos: usize| (row * n + col) * 2 * l + half * l + pos;
    let mut edges = Vec::with_capacity(m * n * l * l + l * (m * (n - 1) + n * (m - 1)));
    for row in 0..m {
        for col in 0..n {
            for i in 0..l {
                for j in 0..l {
                    edges.push((id(row, col, 0, i), id(row, col, 1, j)));
                }
            }
            if row + 1 < m {
                for k in 0..l {
                    edges.push((id(row, col, 0, k), id(row + 1, col, 0, k)));
                }
            }
            if col + 1 < n {
                for k in 0..l {
                    edges.push((id(row, col, 1, k), id(row, col + 1, 1, k)));
                }
            }
        }
    }
    let graph = Graph::new(total, &edges, inactive)?;
    Ok(HardwareGraph {
        rows: m,
        cols: n,
        half: l,
        graph,
        inactive: inactive.clone(),
    })
}

/// Two-level-grid logical graph: two N x N square lattices plus one vertical
/// edge per (x, y) position. Vertex id = z * N^2 + y * N + x.
#[derive(Clone, Debug)]
pub struct LogicalGraph {
    pub side: usize,
    graph: Graph,
    removed_edges: BTreeSet<(NodeId, NodeId)>,
}

impl LogicalGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn vertex_count(&self) -> usize {
        2 * self.side * self.side
    }

    /// Usable (active) encoded vertices.
    pub fn usable_count(&self) -> usize {
        self.graph.active_count()
    }

    pub fn removed_edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.removed_edges
    }

    pub fn vertex_id(&self, x: usize, y: usize, z: usize) -> NodeId {
        z * self.side * self.side + y * self.side + x
    }

    pub fn coords(&self, v: NodeId) -> (usize, usize, usize) {
        let layer = self.side * self.side;
        (v % layer % self.side, v % layer / self.side, v / layer)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "GRAPH 2lg {}", self.side).unwrap();
        for &(u, v) in self.graph.structural_edges() {
            writeln!(out, "E {u} {v}").unwrap();
        }
        for v in 0..self.vertex_count() {
            if !self.graph.is_active(v) {
                writeln!(out, "X {v}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (kind, params, edges, inactive) = parse_graph_text(text)?;
        if kind != "2lg" {
            return Err(Error::Parse(format!("expected 2lg graph, got {kind}")));
        }
        if params.len() != 1 {
            return Err(Error::Parse("2lg header needs N".into()));
        }
        let side = params[0];
        let full: BTreeSet<(NodeId, NodeId)> = full_2lg_edges(side).into_iter().collect();
        let present: BTreeSet<(NodeId, NodeId)> =
            edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let removed: BTreeSet<(NodeId, NodeId)> = full.difference(&present).copied().collect();
        let mut lg = two_level_grid(side, &removed)?;
        if !inactive.is_empty() {
            lg = lg.with_inactive(&inactive)?;
        }
        Ok(lg)
    }

    /// Copy with the given vertices marked unusable.
    pub fn with_inactive(&self, inactive: &BTreeSet<NodeId>) -> Result<Self> {
        let graph = Graph::new(self.vertex_count(), self.graph.structural_edges(), inactive)?;
        Ok(LogicalGraph {
            side: self.side,
            graph,
            removed_edges: self.removed_edges.clone(),
        })
    }
}

fn full_2lg_edges(n: usize) -> Vec<(NodeId, NodeId)> {
    let id = |x: usize, y: usize, z: usize| z * n * n + y * n + x;
    let mut edges = Vec::new();
    for z in 0..2 {
        for y in 0..n {
            for x in 0..n {
                if x + 1 < n {
                    edges.push((id(x, y, z), id(x + 1, y, z)));
                }
                if y + 1 < n {
                    edges.push((id(x, y, z), id(x, y + 1, z)));
                }
            }
        }
    }
    for y in 0..n {
        for x in 0..n {
            edges.push((id(x, y, 0), id(x, y, 1)));
        }
    }
    edges
}

/// Builds the full two-level grid minus the given removed edges.
pub fn two_level_grid(n: usize, removed: &BTreeSet<(NodeId, NodeId)>) -> Result<LogicalGraph> {
    if n < 1 {
        return Err(Error::Parameter("2LG side must be >= 1".into()));
    }
    let full = full_2lg_edges(n);
    let full_set: BTreeSet<(NodeId, NodeId)> = full.iter().copied().collect();
    for &(u, v) in removed {
        let key = (u.min(v), u.max(v));
        if !full_set.contains(&key) {
            return Err(Error::Parameter(format!(
                "removed edge ({u},{v}) not in the full 2LG"
            )));
        }
    }
    let kept: Vec<(NodeId, NodeId)> = full
        .into_iter()
        .filter(|&(u, v)| !removed.contains(&(u, v)) && !removed.contains(&(v, u)))
        .collect();
    let graph = Graph::new(2 * n * n, &kept, &BTreeSet::new())?;
    let removed_edges = removed.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    Ok(LogicalGraph {
        side: n,
        graph,
        removed_edges,
    })
}

/// Physical qubit hosting 2LG vertex (x, y, z) under the direct embedding:
/// position 0 of half z in cell (y, x).
pub fn direct_embedding_qubit(hw: &HardwareGraph, x: usize, y: usize, z: usize) -> NodeId {
    hw.qubit(y, x, z, 0)
}

/// The largest 2LG subgraph directly embeddable in a square Chimera graph.
///
/// One logical vertex per half-cell at position 0. In-plane edges survive only
/// where an inter-cell coupler exists (y-direction on layer 0, x-direction on
/// layer 1); vertical edges use an intra-cell coupler and always survive.
/// Vertices whose assigned qubit is dead are marked unusable.
pub fn embeddable_subgraph(hw: &HardwareGraph) -> Result<LogicalGraph> {
    if hw.rows != hw.cols {
        return Err(Error::Parameter(
            "embeddable subgraph needs a square Chimera grid".into(),
        ));
    }
    let n = hw.rows;
    let lg_full = two_level_grid(n, &BTreeSet::new())?;
    let mut removed = BTreeSet::new();
    for &(u, v) in lg_full.graph().structural_edges() {
        let (xu, yu, zu) = lg_full.coords(u);
        let (xv, yv, zv) = lg_full.coords(v);
        let qu = direct_embedding_qubit(hw, xu, yu, zu);
        let qv = direct_embedding_qubit(hw, xv, yv, zv);
        // Keep the edge iff the physical coupler exists structurally.
        let structural = hw.graph().structural_edges();
        let key = (qu.min(qv), qu.max(qv));
        if structural.binary_search(&key).is_err() {
            removed.insert((u.min(v), u.max(v)));
        }
        let _ = (zu, zv);
    }
    let lg = two_level_grid(n, &removed)?;
    let mut unusable = BTreeSet::new();
    for v in 0..lg.vertex_count() {
        let (x, y, z) = lg.coords(v);
        if !hw.graph().is_active(direct_embedding_qubit(hw, x, y, z)) {
            unusable.insert(v);
        }
    }
    lg.with_inactive(&unusable)
}

/// Connected components of the subgraph induced by `occupied`.
///
/// Components are returned as sorted vertex lists, ordered by smallest member;
/// their union is exactly `occupied`.
pub fn percolation_subgraph(g: &Graph, occupied: &BTreeSet<NodeId>) -> Vec<Vec<NodeId>> {
    let mut uf = UnionFind::new(g.vertex_count());
    for &v in occupied {
        for &w in g.neighbors(v) {
            if w > v && occupied.contains(&w) {
                uf.union(v, w);
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<NodeId>> =
        std::collections::BTreeMap::new();
    for &v in occupied {
        by_root.entry(uf.find(v)).or_default().push(v);
    }
    let mut comps: Vec<Vec<NodeId>> = by_root.into_values().collect();
    for c in &mut comps {
        c.sort_unstable();
    }
    comps.sort_by_key(|c| c[0]);
    comps
}

/// A representative 8-dead-qubit mask for an 8x8x4 graph. Real masks are a
/// runtime input; this fixture kills position 0 of eight distinct half-cells
/// so that Direct, ME and QAC-ME embeddings each lose exactly eight encoded
/// vertices (leaving 120 usable).
pub fn representative_dead_qubit_mask(hw: &HardwareGraph) -> BTreeSet<NodeId> {
    [
        hw.qubit(0, 3, 0, 0),
        hw.qubit(1, 6, 1, 0),
        hw.qubit(2, 1, 0, 0),
        hw.qubit(3, 4, 1, 0),
        hw.qubit(4, 7, 0, 0),
        hw.qubit(5, 2, 1, 0),
        hw.qubit(6, 5, 0, 0),
        hw.qubit(7, 0, 1, 0),
    ]
    .into_iter()
    .collect()
}

type ParsedGraph = (String, Vec<usize>, Vec<(NodeId, NodeId)>, BTreeSet<NodeId>);

fn parse_graph_text(text: &str) -> Result<ParsedGraph> {
    let mut kind = None;
    let mut params = Vec::new();
    let mut edges = Vec::new();
    let mut inactive = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("GRAPH") => {
                kind = Some(
                    it.next()
                        .ok_or_else(|| Error::Parse("GRAPH line missing kind".into()))?
                        .to_string(),
                );
                for tok in it {
                    params.push(
                        tok.parse::<usize>()
                            .map_err(|_| Error::Parse(format!("bad GRAPH parameter {tok:?}")))?,
                    );
                }
            }
            Some("E") => {
                let u = parse_usize(it.next(), "E")?;
                let v = parse_usize(it.next(), "E")?;
                edges.push((u, v));
            }
            Some("X") => {
                inactive.insert(parse_usize(it.next(), "X")?);
            }
            _ => return Err(Error::Parse(format!("unrecognized graph line {line:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| Error::Parse("missing GRAPH header".into()))?;
    Ok((kind, params, edges, inactive))
}

fn parse_usize(tok: Option<&str>, ctx: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::Parse(format!("{ctx} line truncated")))?
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("bad integer on {ctx} line")))
}
