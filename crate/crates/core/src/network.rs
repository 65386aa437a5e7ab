//! Road network: a directed graph with travel-time arcs, lazily cached
//! shortest travel times, and the depot set.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::time::{millis_from_secs, Millis};

/// Dense node index. Indices follow ascending external identifier order, so
/// "lowest index" and "lowest identifier" coincide for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Sentinel distance for nodes not reachable from a source.
pub const UNREACHABLE: Millis = Millis::MAX / 4;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: dangling endpoint: arc references unknown node {node}")]
    DanglingEndpoint { line: usize, node: u64 },
    #[error("line {line}: duplicate node {node}")]
    DuplicateNode { line: usize, node: u64 },
    #[error("arc {from} -> {to}: non-positive or non-finite weight {weight}")]
    NonPositiveWeight { from: u64, to: u64, weight: f64 },
    #[error("disconnected graph: node {node} is not mutually reachable with node {root}")]
    Disconnected { node: u64, root: u64 },
    #[error("unreachable: no path from node {from} to node {to}")]
    Unreachable { from: u64, to: u64 },
    #[error("unknown node {0}")]
    UnknownNode(u64),
    #[error("depot {0} is not a node of the graph")]
    UnknownDepot(u64),
    #[error("duplicate depot {0}")]
    DuplicateDepot(u64),
    #[error("network has no depots")]
    NoDepots,
    #[error("cannot place {k} centers on a graph with {nodes} nodes")]
    TooManyCenters { k: usize, nodes: usize },
    #[error("k-center needs k >= 1 and restarts >= 1")]
    InvalidKCenter,
    #[error("empty graph")]
    Empty,
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    head: u32,
    weight: Millis,
}

/// Compressed adjacency (CSR) for one direction.
#[derive(Debug, Default)]
struct Adjacency {
    start: Vec<u32>,
    edges: Vec<Edge>,
}

impl Adjacency {
    fn build(n: usize, arcs: &[(u32, u32, Millis)]) -> Self {
        let mut start = vec![0u32; n + 1];
        for &(tail, _, _) in arcs {
            start[tail as usize + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut edges = vec![Edge { head: 0, weight: 0 }; arcs.len()];
        for &(tail, head, weight) in arcs {
            let slot = &mut fill[tail as usize];
            edges[*slot as usize] = Edge { head, weight };
            *slot += 1;
        }
        Self { start, edges }
    }

    #[inline]
    fn neighbors(&self, node: usize) -> &[Edge] {
        &self.edges[self.start[node] as usize..self.start[node + 1] as usize]
    }
}

/// One entry of a reverse shortest-path tree: distance to the tree's target
/// and the next node to move to from here.
#[derive(Debug, Clone, Copy)]
struct Hop {
    dist: Millis,
    next: u32,
}

/// Graph topology plus per-source and per-target shortest-path caches.
/// Shared between [`Network`] values that differ only in their depot set.
struct Graph {
    labels: Vec<u64>,
    coords: Vec<(f64, f64)>,
    index: HashMap<u64, NodeId>,
    forward: Adjacency,
    backward: Adjacency,
    from_source: Vec<OnceLock<Box<[Millis]>>>,
    to_target: Vec<OnceLock<Box<[Hop]>>>,
}

impl Graph {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dijkstra(&self, adj: &Adjacency, root: usize) -> (Vec<Millis>, Vec<u32>) {
        let n = self.len();
        let mut dist = vec![UNREACHABLE; n];
        let mut parent = vec![u32::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[root] = 0;
        parent[root] = root as u32;
        heap.push(Reverse((0, root as u32)));
        while let Some(Reverse((d, u))) = heap.pop() {
            let u = u as usize;
            if d > dist[u] {
                continue;
            }
            for e in adj.neighbors(u) {
                let nd = d + e.weight;
                let v = e.head as usize;
                // Equal-length ties resolve to the lower predecessor index.
                if nd < dist[v] || (nd == dist[v] && (u as u32) < parent[v]) {
                    if nd < dist[v] {
                        heap.push(Reverse((nd, e.head)));
                    }
                    dist[v] = nd;
                    parent[v] = u as u32;
                }
            }
        }
        (dist, parent)
    }

    fn source_times(&self, source: NodeId) -> &[Millis] {
        self.from_source[source.index()]
            .get_or_init(|| self.dijkstra(&self.forward, source.index()).0.into_boxed_slice())
    }

    fn to_target(&self, target: NodeId) -> &[Hop] {
        self.to_target[target.index()].get_or_init(|| {
            let (dist, parent) = self.dijkstra(&self.backward, target.index());
            dist.into_iter()
                .zip(parent)
                .map(|(dist, next)| Hop { dist, next })
                .collect()
        })
    }
}

/// Depots by travel time to one node, filled on first use.
type DepotRanking = OnceLock<Box<[(Millis, NodeId)]>>;

/// Directed road network with a depot set. Immutable after construction;
/// travel-time caches are filled lazily and are safe to share across threads.
#[derive(Clone)]
pub struct Network {
    graph: Arc<Graph>,
    depots: Vec<NodeId>,
    depot_ranking: Arc<Vec<DepotRanking>>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("nodes", &self.graph.len())
            .field("arcs", &self.graph.forward.edges.len())
            .field("depots", &self.depots.len())
            .finish()
    }
}

/// Incremental construction of a [`Network`].
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    nodes: Vec<(u64, f64, f64)>,
    arcs: Vec<(u64, u64, Option<f64>)>,
    depots: Vec<u64>,
    speed: f64,
}

impl NetworkBuilder {
    /// `speed` (m/s) converts coordinate distance to travel time for arcs
    /// without an explicit weight.
    pub fn new(speed: f64) -> Self {
        Self {
            speed,
            ..Self::default()
        }
    }

    pub fn node(&mut self, id: u64, x: f64, y: f64) -> &mut Self {
        self.nodes.push((id, x, y));
        self
    }

    /// Adds an arc with weight in seconds, or derived from coordinates when
    /// `seconds` is `None`.
    pub fn arc(&mut self, from: u64, to: u64, seconds: Option<f64>) -> &mut Self {
        self.arcs.push((from, to, seconds));
        self
    }

    pub fn depots(&mut self, ids: impl IntoIterator<Item = u64>) -> &mut Self {
        self.depots = ids.into_iter().collect();
        self
    }

    /// Builds and validates strong connectivity.
    pub fn build(&self) -> Result<Network, NetworkError> {
        let net = self.build_unchecked()?;
        net.check_strongly_connected()?;
        Ok(net)
    }

    /// Builds without the strong-connectivity check. Queries between mutually
    /// unreachable nodes then report [`NetworkError::Unreachable`].
    pub fn build_unchecked(&self) -> Result<Network, NetworkError> {
        if self.nodes.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut nodes = self.nodes.clone();
        nodes.sort_by_key(|n| n.0);
        for pair in nodes.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(NetworkError::DuplicateNode {
                    line: 0,
                    node: pair[0].0,
                });
            }
        }
        let labels: Vec<u64> = nodes.iter().map(|n| n.0).collect();
        let coords: Vec<(f64, f64)> = nodes.iter().map(|n| (n.1, n.2)).collect();
        let index: HashMap<u64, NodeId> = labels.iter().enumerate().map(|(i, &l)| (l, NodeId(i as u32))).collect();

        let mut best: HashMap<(u32, u32), Millis> = HashMap::new();
        for &(from, to, seconds) in &self.arcs {
            let a = *index
                .get(&from)
                .ok_or(NetworkError::DanglingEndpoint { line: 0, node: from })?;
            let b = *index
                .get(&to)
                .ok_or(NetworkError::DanglingEndpoint { line: 0, node: to })?;
            let secs = match seconds {
                Some(s) => s,
                None => {
                    let (ax, ay) = coords[a.index()];
                    let (bx, by) = coords[b.index()];
                    ((ax - bx).hypot(ay - by)) / self.speed
                }
            };
            let weight = if secs.is_finite() { millis_from_secs(secs) } else { 0 };
            if weight <= 0 {
                return Err(NetworkError::NonPositiveWeight { from, to, weight: secs });
            }
            if a == b {
                continue;
            }
            best.entry((a.0, b.0))
                .and_modify(|w| *w = (*w).min(weight))
                .or_insert(weight);
        }
        let mut arcs: Vec<(u32, u32, Millis)> = best.into_iter().map(|((a, b), w)| (a, b, w)).collect();
        arcs.sort_unstable();
        let reversed: Vec<(u32, u32, Millis)> = arcs.iter().map(|&(a, b, w)| (b, a, w)).collect();
        let n = labels.len();
        let graph = Graph {
            forward: Adjacency::build(n, &arcs),
            backward: Adjacency::build(n, &reversed),
            from_source: (0..n).map(|_| OnceLock::new()).collect(),
            to_target: (0..n).map(|_| OnceLock::new()).collect(),
            labels,
            coords,
            index,
        };
        let net = Network {
            graph: Arc::new(graph),
            depots: Vec::new(),
            depot_ranking: Arc::new((0..n).map(|_| OnceLock::new()).collect()),
        };
        if self.depots.is_empty() {
            Ok(net)
        } else {
            let depots = self
                .depots
                .iter()
                .map(|&d| net.node(d).map_err(|_| NetworkError::UnknownDepot(d)))
                .collect::<Result<Vec<_>, _>>()?;
            net.with_depots(depots)
        }
    }
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.graph.len()
    }

    pub fn arc_count(&self) -> usize {
        self.graph.forward.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.graph.len() as u32).map(NodeId)
    }

    /// External identifier of a node.
    pub fn label(&self, node: NodeId) -> u64 {
        self.graph.labels[node.index()]
    }

    pub fn coords(&self, node: NodeId) -> (f64, f64) {
        self.graph.coords[node.index()]
    }

    /// Looks up a node by external identifier.
    pub fn node(&self, label: u64) -> Result<NodeId, NetworkError> {
        self.graph
            .index
            .get(&label)
            .copied()
            .ok_or(NetworkError::UnknownNode(label))
    }

    pub fn depots(&self) -> &[NodeId] {
        &self.depots
    }

    pub fn is_depot(&self, node: NodeId) -> bool {
        self.depots.binary_search(&node).is_ok()
    }

    /// Same graph (and shared travel-time caches) with a different depot set.
    pub fn with_depots(&self, mut depots: Vec<NodeId>) -> Result<Network, NetworkError> {
        depots.sort_unstable();
        for pair in depots.windows(2) {
            if pair[0] == pair[1] {
                return Err(NetworkError::DuplicateDepot(self.label(pair[0])));
            }
        }
        if let Some(d) = depots.iter().find(|d| d.index() >= self.graph.len()) {
            return Err(NetworkError::UnknownDepot(d.0 as u64));
        }
        Ok(Network {
            graph: Arc::clone(&self.graph),
            depots,
            depot_ranking: Arc::new((0..self.graph.len()).map(|_| OnceLock::new()).collect()),
        })
    }

    /// Weight of the direct arc `a -> b`, if any.
    pub fn arc_time(&self, a: NodeId, b: NodeId) -> Option<Millis> {
        self.graph
            .forward
            .neighbors(a.index())
            .iter()
            .find(|e| e.head == b.0)
            .map(|e| e.weight)
    }

    /// Outgoing arcs of `node` as `(head, weight)`.
    pub fn out_arcs(&self, node: NodeId) -> impl Iterator<Item = (NodeId, Millis)> + '_ {
        self.graph
            .forward
            .neighbors(node.index())
            .iter()
            .map(|e| (NodeId(e.head), e.weight))
    }

    /// Shortest travel time from `a` to `b`.
    pub fn travel_time(&self, a: NodeId, b: NodeId) -> Result<Millis, NetworkError> {
        let d = self.time(a, b);
        if d >= UNREACHABLE {
            Err(NetworkError::Unreachable {
                from: self.label(a),
                to: self.label(b),
            })
        } else {
            Ok(d)
        }
    }

    /// Shortest travel time, returning [`UNREACHABLE`] when there is no path.
    /// On validated (strongly connected) networks this never happens.
    #[inline]
    pub fn time(&self, a: NodeId, b: NodeId) -> Millis {
        if a == b {
            return 0;
        }
        self.graph.source_times(a)[b.index()]
    }

    /// All shortest travel times from `source`.
    pub fn times_from(&self, source: NodeId) -> &[Millis] {
        self.graph.source_times(source)
    }

    /// First node after `from` on a shortest path to `target`, with the arc
    /// weight. `None` when `from == target` or the target is unreachable.
    pub fn next_hop(&self, from: NodeId, target: NodeId) -> Option<(NodeId, Millis)> {
        if from == target {
            return None;
        }
        let tree = self.graph.to_target(target);
        let hop = tree[from.index()];
        if hop.dist >= UNREACHABLE {
            return None;
        }
        let next = NodeId(hop.next);
        let weight = hop.dist - tree[next.index()].dist;
        Some((next, weight))
    }

    /// Depots ordered by travel time to `node` (depot -> node), ties by
    /// lower node id.
    pub fn depots_by_time_to(&self, node: NodeId) -> &[(Millis, NodeId)] {
        self.depot_ranking[node.index()].get_or_init(|| {
            let mut ranked: Vec<(Millis, NodeId)> = self.depots.iter().map(|&d| (self.time(d, node), d)).collect();
            ranked.sort_unstable();
            ranked.into_boxed_slice()
        })
    }

    /// Travel time from the closest depot to `node`.
    pub fn nearest_depot_time(&self, node: NodeId) -> Option<Millis> {
        self.depots_by_time_to(node)
            .first()
            .map(|&(t, _)| t)
            .filter(|&t| t < UNREACHABLE)
    }

    fn check_strongly_connected(&self) -> Result<(), NetworkError> {
        let root = 0usize;
        for adj in [&self.graph.forward, &self.graph.backward] {
            let mut seen = vec![false; self.graph.len()];
            let mut stack = vec![root];
            seen[root] = true;
            while let Some(u) = stack.pop() {
                for e in adj.neighbors(u) {
                    if !seen[e.head as usize] {
                        seen[e.head as usize] = true;
                        stack.push(e.head as usize);
                    }
                }
            }
            if let Some(bad) = seen.iter().position(|s| !s) {
                return Err(NetworkError::Disconnected {
                    node: self.graph.labels[bad],
                    root: self.graph.labels[root],
                });
            }
        }
        Ok(())
    }

    /// Writes the graph in the line-oriented text format, with explicit
    /// weights in seconds.
    pub fn to_graph_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "nodes {} arcs {}", self.node_count(), self.arc_count()).unwrap();
        for n in self.nodes() {
            let (x, y) = self.coords(n);
            writeln!(out, "N {} {} {}", self.label(n), x, y).unwrap();
        }
        for a in self.nodes() {
            for (b, w) in self.out_arcs(a) {
                writeln!(
                    out,
                    "A {} {} {}",
                    self.label(a),
                    self.label(b),
                    crate::time::format_secs(w)
                )
                .unwrap();
            }
        }
        out
    }
}

/// Parses the graph text format. Depots are attached separately.
pub fn parse_network(text: &str, speed: f64) -> Result<Network, NetworkError> {
    let mut builder = NetworkBuilder::new(speed);
    let mut header: Option<(usize, usize)> = None;
    let mut node_lines: HashMap<u64, usize> = HashMap::new();
    let mut arc_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| NetworkError::Parse { line: line_no, msg };
        match fields[0] {
            "nodes" => {
                if fields.len() != 4 || fields[2] != "arcs" {
                    return Err(parse_err("expected `nodes <count> arcs <count>`".into()));
                }
                let n = fields[1]
                    .parse()
                    .map_err(|_| parse_err(format!("bad node count `{}`", fields[1])))?;
                let a = fields[3]
                    .parse()
                    .map_err(|_| parse_err(format!("bad arc count `{}`", fields[3])))?;
                header = Some((n, a));
            }
            "N" => {
                if fields.len() != 4 {
                    return Err(parse_err("expected `N <id> <x> <y>`".into()));
                }
                let id: u64 = fields[1]
                    .parse()
                    .map_err(|_| parse_err(format!("bad node id `{}`", fields[1])))?;
                let x: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(format!("bad x `{}`", fields[2])))?;
                let y: f64 = fields[3]
                    .parse()
                    .map_err(|_| parse_err(format!("bad y `{}`", fields[3])))?;
                if node_lines.insert(id, line_no).is_some() {
                    return Err(NetworkError::DuplicateNode {
                        line: line_no,
                        node: id,
                    });
                }
                builder.node(id, x, y);
            }
            "A" => {
                if fields.len() != 3 && fields.len() != 4 {
                    return Err(parse_err("expected `A <from> <to> [<seconds>]`".into()));
                }
                let from: u64 = fields[1]
                    .parse()
                    .map_err(|_| parse_err(format!("bad arc tail `{}`", fields[1])))?;
                let to: u64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(format!("bad arc head `{}`", fields[2])))?;
                let w = match fields.get(3) {
                    Some(s) => Some(
                        s.parse::<f64>()
                            .map_err(|_| parse_err(format!("bad arc weight `{s}`")))?,
                    ),
                    None => None,
                };
                arc_lines.push((line_no, from, to));
                builder.arc(from, to, w);
            }
            other => return Err(parse_err(format!("unknown record `{other}`"))),
        }
    }
    let Some((n, a)) = header else {
        return Err(NetworkError::Parse {
            line: 1,
            msg: "missing `nodes <count> arcs <count>` header".into(),
        });
    };
    if n != node_lines.len() || a != arc_lines.len() {
        return Err(NetworkError::Parse {
            line: 1,
            msg: format!(
                "header declares {n} nodes / {a} arcs, file has {} / {}",
                node_lines.len(),
                arc_lines.len()
            ),
        });
    }
    for &(line, from, to) in &arc_lines {
        for node in [from, to] {
            if !node_lines.contains_key(&node) {
                return Err(NetworkError::DanglingEndpoint { line, node });
            }
        }
    }
    builder.build()
}

pub fn load_network(path: impl AsRef<Path>, speed: f64) -> Result<Network, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network(&text, speed)
}

/// Parses a depot list (one node id per line) against `net`.
pub fn parse_depots(text: &str, net: &Network) -> Result<Vec<NodeId>, NetworkError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let id: u64 = line.parse().map_err(|_| NetworkError::Parse {
            line: i + 1,
            msg: format!("bad depot id `{line}`"),
        })?;
        out.push(net.node(id).map_err(|_| NetworkError::UnknownDepot(id))?);
    }
    Ok(out)
}

pub fn load_depots(path: impl AsRef<Path>, net: &Network) -> Result<Vec<NodeId>, NetworkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_depots(&text, net)
}

pub fn depots_to_text(net: &Network, depots: &[NodeId]) -> String {
    depots.iter().map(|&d| format!("{}\n", net.label(d))).collect()
}

/// Result of [`k_center_depots`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KCenter {
    /// Chosen depots, ascending.
    pub depots: Vec<NodeId>,
    /// Max over nodes of the travel time from the nearest chosen depot.
    pub objective: Millis,
}

/// Max over all nodes of the travel time from the closest center.
pub fn k_center_objective(net: &Network, centers: &[NodeId]) -> Millis {
    let mut nearest = vec![UNREACHABLE; net.node_count()];
    for &c in centers {
        for (slot, &d) in nearest.iter_mut().zip(net.times_from(c)) {
            *slot = (*slot).min(d);
        }
    }
    nearest.into_iter().max().unwrap_or(0)
}

/// Greedy farthest-point k-center, restarted from `restarts` seeded random
/// start nodes; keeps the depot set with the smallest covering radius.
pub fn k_center_depots(net: &Network, k: usize, restarts: usize, seed: u64) -> Result<KCenter, NetworkError> {
    let n = net.node_count();
    if k == 0 || restarts == 0 {
        return Err(NetworkError::InvalidKCenter);
    }
    if k > n {
        return Err(NetworkError::TooManyCenters { k, nodes: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<usize> = if restarts <= n {
        sample(&mut rng, n, restarts).into_vec()
    } else {
        (0..restarts).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect()
    };

    let mut best: Option<KCenter> = None;
    for start in starts {
        let mut centers = vec![NodeId(start as u32)];
        let mut nearest: Vec<Millis> = net.times_from(centers[0]).to_vec();
        while centers.len() < k {
            // Farthest node; ties to the lowest id.
            let (far, _) = nearest.iter().enumerate().fold(
                (0usize, Millis::MIN),
                |acc, (i, &d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                },
            );
            let c = NodeId(far as u32);
            centers.push(c);
            for (slot, &d) in nearest.iter_mut().zip(net.times_from(c)) {
                *slot = (*slot).min(d);
            }
        }
        let objective = nearest.into_iter().max().unwrap_or(0);
        centers.sort_unstable();
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(KCenter {
                depots: centers,
                objective,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Square grid with 4-neighbour bidirectional arcs. Node ids are
/// `row * cols + col`; weights are derived from `spacing` and `speed`.
pub fn grid_network(rows: usize, cols: usize, spacing: f64, speed: f64) -> Result<Network, NetworkError> {
    let mut b = NetworkBuilder::new(speed);
    let id = |r: usize, c: usize| (r * cols + c) as u64;
    for r in 0..rows {
        for c in 0..cols {
            b.node(id(r, c), c as f64 * spacing, r as f64 * spacing);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                b.arc(id(r, c), id(r, c + 1), None);
                b.arc(id(r, c + 1), id(r, c), None);
            }
            if r + 1 < rows {
                b.arc(id(r, c), id(r + 1, c), None);
                b.arc(id(r + 1, c), id(r, c), None);
            }
        }
    }
    b.build()
}
