//! Synthetic navigation environments: graphs of viewpoints with panoramic
//! per-direction features, expert shortest-path trajectories, and disjoint
//! seen/unseen environment splits.
//!
//! Everything here is immutable after generation and a pure function of
//! (seed, config); loading a serialized world reproduces identical
//! observations.

mod gen;

pub use gen::{generate_world, World, WorldConfig, SplitRatios};

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instructions::TokenSeq;
use crate::rng;

/// Final-location-to-goal distance below which an episode counts as a
/// success, in world units. Graphs are scaled so the typical inter-node
/// distance is [`TARGET_EDGE_LEN`], which keeps success non-trivial.
pub const SUCCESS_THRESHOLD: f64 = 3.0;
pub const TARGET_EDGE_LEN: f64 = 2.2;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world generation failed: {0}")]
    Generation(String),
    #[error("node {0} not in graph {1}")]
    UnknownNode(NodeId, String),
    #[error("action index {index} out of range: node has {candidates} candidates plus stop")]
    ActionOutOfRange { index: usize, candidates: usize },
    #[error("infeasible world config: {0}")]
    InfeasibleConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into the landmark vocabulary shared by a world's graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkId(pub u16);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NavGraph {
    pub id: String,
    /// Node positions in world units; index is the node id.
    pub positions: Vec<[f64; 2]>,
    /// Undirected edges, canonical (a < b), sorted.
    pub edges: Vec<(NodeId, NodeId)>,
    /// Landmark symbols visible at each node; index is the node id.
    pub landmark_map: Vec<Vec<LandmarkId>>,
    #[serde(skip)]
    adjacency: OnceLock<Vec<Vec<NodeId>>>,
    #[serde(skip)]
    routes: OnceLock<RouteTable>,
}

#[derive(Debug, Clone)]
struct RouteTable {
    /// dist[a][b]: Euclidean shortest-path length.
    dist: Vec<Vec<f64>>,
    /// hops[a][b]: minimum edge count (breadth-first).
    hops: Vec<Vec<u32>>,
}

impl NavGraph {
    pub fn new(
        id: String,
        positions: Vec<[f64; 2]>,
        mut edges: Vec<(NodeId, NodeId)>,
        landmark_map: Vec<Vec<LandmarkId>>,
    ) -> Result<Self, WorldError> {
        edges.sort();
        let g = NavGraph {
            id,
            positions,
            edges,
            landmark_map,
            adjacency: OnceLock::new(),
            routes: OnceLock::new(),
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), WorldError> {
        let n = self.positions.len();
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.edges {
            if a == b {
                return Err(WorldError::Generation(format!(
                    "self-loop at node {a} in graph {}",
                    self.id
                )));
            }
            if a.index() >= n || b.index() >= n {
                return Err(WorldError::Generation(format!(
                    "edge ({a},{b}) references missing node in graph {}",
                    self.id
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(WorldError::Generation(format!(
                    "duplicate edge ({a},{b}) in graph {}",
                    self.id
                )));
            }
        }
        // connectivity
        if n > 0 {
            let adj = self.adjacency();
            let mut visited = vec![false; n];
            let mut queue = std::collections::VecDeque::from([NodeId(0)]);
            visited[0] = true;
            let mut count = 1;
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u.index()] {
                    if !visited[v.index()] {
                        visited[v.index()] = true;
                        count += 1;
                        queue.push_back(v);
                    }
                }
            }
            if count != n {
                return Err(WorldError::Generation(format!(
                    "graph {} is not connected ({count}/{n} reachable)",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.positions.len()
    }

    /// Neighbors of each node, sorted by id.
    pub fn adjacency(&self) -> &Vec<Vec<NodeId>> {
        self.adjacency.get_or_init(|| {
            let mut adj = vec![Vec::new(); self.positions.len()];
            for &(a, b) in &self.edges {
                adj[a.index()].push(b);
                adj[b.index()].push(a);
            }
            for list in &mut adj {
                list.sort();
            }
            adj
        })
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency()[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors(node).len()
    }

    pub fn edge_len(&self, a: NodeId, b: NodeId) -> f64 {
        let pa = self.positions[a.index()];
        let pb = self.positions[b.index()];
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    }

    fn routes(&self) -> &RouteTable {
        self.routes.get_or_init(|| {
            let n = self.positions.len();
            let mut dist = Vec::with_capacity(n);
            let mut hops = Vec::with_capacity(n);
            for s in 0..n {
                dist.push(self.dijkstra(NodeId(s as u32)));
                hops.push(self.bfs_hops(NodeId(s as u32)));
            }
            RouteTable { dist, hops }
        })
    }

    fn dijkstra(&self, source: NodeId) -> Vec<f64> {
        let n = self.positions.len();
        let adj = self.adjacency();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        dist[source.index()] = 0.0;
        // Small graphs: linear scan beats a heap and keeps ties ordered by id.
        for _ in 0..n {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best_d {
                    best = v;
                    best_d = dist[v];
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            for &nb in &adj[best] {
                let cand = best_d + self.edge_len(NodeId(best as u32), nb);
                if cand < dist[nb.index()] {
                    dist[nb.index()] = cand;
                }
            }
        }
        dist
    }

    fn bfs_hops(&self, source: NodeId) -> Vec<u32> {
        let n = self.positions.len();
        let adj = self.adjacency();
        let mut hops = vec![u32::MAX; n];
        hops[source.index()] = 0;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u.index()] {
                if hops[v.index()] == u32::MAX {
                    hops[v.index()] = hops[u.index()] + 1;
                    queue.push_back(v);
                }
            }
        }
        hops
    }

    /// Euclidean shortest-path distance between two nodes, world units.
    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.routes().dist[a.index()][b.index()]
    }

    /// Minimum number of edges between two nodes.
    pub fn hop_distance(&self, a: NodeId, b: NodeId) -> u32 {
        self.routes().hops[a.index()][b.index()]
    }
}

/// Tolerance for "lies on a shortest path" checks; edge sums differ from the
/// table entries only by float rounding, orders of magnitude below this.
const PATH_EPS: f64 = 1e-9;

/// Shortest path by summed Euclidean edge length; among equal-length paths
/// the lexicographically smallest node-id sequence is returned.
pub fn shortest_path(graph: &NavGraph, a: NodeId, b: NodeId) -> (Vec<NodeId>, f64) {
    let total = graph.distance(a, b);
    let mut path = vec![a];
    let mut current = a;
    while current != b {
        let remaining = graph.distance(current, b);
        let next = graph
            .neighbors(current)
            .iter()
            .copied()
            .find(|&v| {
                let through = graph.edge_len(current, v) + graph.distance(v, b);
                (through - remaining).abs() <= PATH_EPS * remaining.max(1.0)
            })
            .expect("connected graph always has a tight next hop");
        path.push(next);
        current = next;
    }
    (path, total)
}

/// One candidate direction the agent can move in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub neighbor: NodeId,
    pub feature: Vec<f64>,
}

/// Panoramic observation at one node: movement candidates (sorted by
/// neighbor id) plus the distinguished stop candidate. The action space
/// indexes candidates `0..n` and uses `n` for stop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub node: NodeId,
    pub candidates: Vec<Candidate>,
    pub stop_feature: Vec<f64>,
}

impl Observation {
    pub fn stop_index(&self) -> usize {
        self.candidates.len()
    }

    pub fn action_count(&self) -> usize {
        self.candidates.len() + 1
    }

    /// Candidate features stacked as a row-major `(n+1) x d` matrix, stop
    /// row last — the layout attention and action scoring consume.
    pub fn feature_matrix(&self) -> (Vec<f64>, usize) {
        let d = self.stop_feature.len();
        let mut data = Vec::with_capacity((self.candidates.len() + 1) * d);
        for c in &self.candidates {
            data.extend_from_slice(&c.feature);
        }
        data.extend_from_slice(&self.stop_feature);
        (data, d)
    }
}

/// Deterministic unit-norm feature for the directed edge `from -> to`:
/// a hash-seeded visual vector anchored on the destination's landmark, plus
/// a relative-bearing encoding.
fn edge_feature(graph: &NavGraph, from: NodeId, to: NodeId, env_seed: u64, dim: usize) -> Vec<f64> {
    let visual_dim = dim - 2;
    let landmark = graph.landmark_map[to.index()]
        .first()
        .copied()
        .unwrap_or(LandmarkId(0));
    let mut f = landmark_base(env_seed, landmark, visual_dim);
    let jitter_seed = rng::derive_idx(
        rng::derive(env_seed, &graph.id),
        "edge-jitter",
        (u64::from(from.0) << 32) | u64::from(to.0),
    );
    add_jitter(&mut f, jitter_seed, VISUAL_JITTER);

    let pa = graph.positions[from.index()];
    let pb = graph.positions[to.index()];
    let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
    let norm = (dx * dx + dy * dy).sqrt();
    f.push(dx / norm);
    f.push(dy / norm);
    normalize(&mut f);
    f
}

fn stop_feature(graph: &NavGraph, node: NodeId, env_seed: u64, dim: usize) -> Vec<f64> {
    let visual_dim = dim - 2;
    let mut f = stop_base(env_seed, visual_dim);
    let jitter_seed = rng::derive_idx(
        rng::derive(env_seed, &graph.id),
        "stop-jitter",
        u64::from(node.0),
    );
    add_jitter(&mut f, jitter_seed, VISUAL_JITTER);
    f.push(0.0);
    f.push(0.0);
    normalize(&mut f);
    f
}

/// Strength of the per-edge appearance variation relative to the shared
/// landmark base vector.
const VISUAL_JITTER: f64 = 0.35;

/// Appearance vector for a landmark symbol, shared by every graph of a
/// world; this is what lets instruction grounding transfer to unseen
/// environments.
fn landmark_base(env_seed: u64, landmark: LandmarkId, dim: usize) -> Vec<f64> {
    unit_vector(rng::derive_idx(env_seed, "landmark-base", u64::from(landmark.0)), dim)
}

fn stop_base(env_seed: u64, dim: usize) -> Vec<f64> {
    unit_vector(rng::derive(env_seed, "stop-base"), dim)
}

fn unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng::rng_from(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn add_jitter(v: &mut [f64], seed: u64, scale: f64) {
    use rand::Rng;
    let mut r = rng::rng_from(seed);
    for x in v.iter_mut() {
        *x += scale * r.gen_range(-1.0..1.0);
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// The panoramic observation at `node`. Candidates enumerate exactly the
/// graph neighbors, sorted by id, plus stop.
pub fn observe(
    graph: &NavGraph,
    node: NodeId,
    env_seed: u64,
    feature_dim: usize,
) -> Result<Observation, WorldError> {
    if !graph.contains(node) {
        return Err(WorldError::UnknownNode(node, graph.id.clone()));
    }
    let candidates = graph
        .neighbors(node)
        .iter()
        .map(|&nb| Candidate {
            neighbor: nb,
            feature: edge_feature(graph, node, nb, env_seed, feature_dim),
        })
        .collect();
    Ok(Observation {
        node,
        candidates,
        stop_feature: stop_feature(graph, node, env_seed, feature_dim),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Moved(NodeId),
    Stopped,
}

/// Resolve an action index against the observation at `current`.
pub fn step(graph: &NavGraph, current: NodeId, action: usize) -> Result<StepOutcome, WorldError> {
    if !graph.contains(current) {
        return Err(WorldError::UnknownNode(current, graph.id.clone()));
    }
    let neighbors = graph.neighbors(current);
    if action < neighbors.len() {
        Ok(StepOutcome::Moved(neighbors[action]))
    } else if action == neighbors.len() {
        Ok(StepOutcome::Stopped)
    } else {
        Err(WorldError::ActionOutOfRange { index: action, candidates: neighbors.len() })
    }
}

/// The teacher: stop at the goal, otherwise the candidate index of the next
/// hop on the (tie-broken) shortest path to the goal.
pub fn expert_action(graph: &NavGraph, current: NodeId, goal: NodeId) -> usize {
    let neighbors = graph.neighbors(current);
    if current == goal {
        return neighbors.len();
    }
    let remaining = graph.distance(current, goal);
    let next = neighbors
        .iter()
        .copied()
        .find(|&v| {
            let through = graph.edge_len(current, v) + graph.distance(v, goal);
            (through - remaining).abs() <= PATH_EPS * remaining.max(1.0)
        })
        .expect("connected graph always has a tight next hop");
    neighbors
        .iter()
        .position(|&v| v == next)
        .expect("next hop is a neighbor")
}

/// One navigation task: start, goal, the expert trajectory, and the
/// instructions rendered for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: String,
    pub graph_id: String,
    pub start: NodeId,
    pub goal: NodeId,
    pub expert_path: Vec<NodeId>,
    pub instructions: Vec<TokenSeq>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    TrainSeen,
    ValSeen,
    ValUnseen,
    TestUnseen,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SplitName::TrainSeen => "train_seen",
            SplitName::ValSeen => "val_seen",
            SplitName::ValUnseen => "val_unseen",
            SplitName::TestUnseen => "test_unseen",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSplit {
    pub train_seen: Vec<EpisodeSpec>,
    pub val_seen: Vec<EpisodeSpec>,
    pub val_unseen: Vec<EpisodeSpec>,
    pub test_unseen: Vec<EpisodeSpec>,
}

impl WorldSplit {
    pub fn get(&self, name: SplitName) -> &[EpisodeSpec] {
        match name {
            SplitName::TrainSeen => &self.train_seen,
            SplitName::ValSeen => &self.val_seen,
            SplitName::ValUnseen => &self.val_unseen,
            SplitName::TestUnseen => &self.test_unseen,
        }
    }

    pub fn all_names() -> [SplitName; 4] {
        [
            SplitName::TrainSeen,
            SplitName::ValSeen,
            SplitName::ValUnseen,
            SplitName::TestUnseen,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_graph() -> NavGraph {
        // 0 - 1 - 2 in a line
        NavGraph::new(
            "chain".into(),
            vec![[0.0, 0.0], [2.2, 0.0], [4.4, 0.0]],
            vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))],
            vec![vec![LandmarkId(0)], vec![LandmarkId(1)], vec![LandmarkId(2)]],
        )
        .unwrap()
    }

    #[test]
    fn shortest_path_identity_and_chain() {
        let g = chain_graph();
        let (p, len) = shortest_path(&g, NodeId(1), NodeId(1));
        assert_eq!(p, vec![NodeId(1)]);
        assert_eq!(len, 0.0);

        let (p, len) = shortest_path(&g, NodeId(0), NodeId(2));
        assert_eq!(p, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert!((len - 4.4).abs() < 1e-12);
    }

    #[test]
    fn observe_lists_neighbors_plus_stop() {
        let g = chain_graph();
        let obs = observe(&g, NodeId(1), 7, 8).unwrap();
        assert_eq!(obs.candidates.len(), 2);
        assert_eq!(obs.stop_index(), 2);
        assert_eq!(obs.candidates[0].neighbor, NodeId(0));
        assert_eq!(obs.candidates[1].neighbor, NodeId(2));

        let again = observe(&g, NodeId(1), 7, 8).unwrap();
        assert_eq!(obs.candidates[0].feature, again.candidates[0].feature);

        let missing = observe(&g, NodeId(9), 7, 8);
        assert!(matches!(missing, Err(WorldError::UnknownNode(..))));
    }

    #[test]
    fn features_unit_norm_and_direction_dependent() {
        let g = chain_graph();
        let from0 = observe(&g, NodeId(0), 7, 8).unwrap();
        let from1 = observe(&g, NodeId(1), 7, 8).unwrap();
        let f01 = &from0.candidates[0].feature;
        let f10 = &from1.candidates[0].feature;
        assert_ne!(f01, f10);
        let norm: f64 = f01.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_moves_and_stops() {
        let g = chain_graph();
        assert_eq!(step(&g, NodeId(1), 0).unwrap(), StepOutcome::Moved(NodeId(0)));
        assert_eq!(step(&g, NodeId(1), 2).unwrap(), StepOutcome::Stopped);
        assert!(matches!(
            step(&g, NodeId(1), 3),
            Err(WorldError::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn expert_action_stop_and_toward_goal() {
        let g = chain_graph();
        assert_eq!(expert_action(&g, NodeId(2), NodeId(2)), g.degree(NodeId(2)));
        // at node 0 with goal 2: only candidate is node 1
        assert_eq!(expert_action(&g, NodeId(0), NodeId(2)), 0);
    }

    #[test]
    fn duplicate_and_self_edges_rejected() {
        let bad = NavGraph::new(
            "bad".into(),
            vec![[0.0, 0.0], [1.0, 0.0]],
            vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(0))],
            vec![vec![], vec![]],
        );
        assert!(bad.is_err());
        let looped = NavGraph::new(
            "loop".into(),
            vec![[0.0, 0.0]],
            vec![(NodeId(0), NodeId(0))],
            vec![vec![]],
        );
        assert!(looped.is_err());
    }
}
