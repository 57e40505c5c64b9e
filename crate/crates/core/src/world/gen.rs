//! World generation: random geometric graphs, expert episodes, rendered
//! instruction corpora, and the seen/unseen split structure. Pure function
//! of (seed, config).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instructions::{tokenize, Grammar, GrammarConfig, TokenSeq, Vocabulary, DEFAULT_MAX_LEN};
use crate::rng;

use super::{
    shortest_path, EpisodeSpec, LandmarkId, NavGraph, NodeId, SplitName, WorldError, WorldSplit,
    TARGET_EDGE_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub seen: f64,
    pub val_unseen: f64,
    pub test_unseen: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { seen: 0.6, val_unseen: 0.2, test_unseen: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_graphs: usize,
    pub nodes_per_graph: usize,
    /// Dimension of each per-direction feature vector (visual part plus a
    /// two-dimensional bearing encoding).
    pub feature_dim: usize,
    pub landmark_vocab_size: usize,
    pub max_degree: usize,
    pub split_ratios: SplitRatios,
    pub episodes_per_graph: usize,
    /// Fraction of each seen graph's episodes held out as val_seen.
    pub val_seen_fraction: f64,
    pub min_path_nodes: usize,
    pub max_path_nodes: usize,
    pub instructions_per_episode: usize,
    pub grammar: GrammarConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_graphs: 10,
            nodes_per_graph: 12,
            feature_dim: 16,
            landmark_vocab_size: 30,
            max_degree: 6,
            split_ratios: SplitRatios::default(),
            episodes_per_graph: 24,
            val_seen_fraction: 0.2,
            min_path_nodes: 3,
            max_path_nodes: 6,
            instructions_per_episode: 3,
            grammar: GrammarConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |m: String| Err(WorldError::InfeasibleConfig(m));
        if self.num_graphs == 0 || self.nodes_per_graph < 3 || self.episodes_per_graph == 0 {
            return err("num_graphs, nodes_per_graph and episodes_per_graph must be positive".into());
        }
        if self.feature_dim < 4 {
            return err(format!("feature_dim must be at least 4, got {}", self.feature_dim));
        }
        if self.landmark_vocab_size < self.nodes_per_graph {
            return err(format!(
                "landmark_vocab_size {} must cover nodes_per_graph {} (landmarks are distinct per graph)",
                self.landmark_vocab_size, self.nodes_per_graph
            ));
        }
        let s = self.split_ratios;
        let total = s.seen + s.val_unseen + s.test_unseen;
        if (total - 1.0).abs() > 1e-9 || s.seen <= 0.0 || s.val_unseen < 0.0 || s.test_unseen < 0.0 {
            return err(format!("split ratios must be nonnegative and sum to 1, got {total}"));
        }
        if !(0.0..1.0).contains(&self.val_seen_fraction) {
            return err("val_seen_fraction must be in [0, 1)".into());
        }
        if self.min_path_nodes < 2 || self.max_path_nodes < self.min_path_nodes {
            return err(format!(
                "path node bounds invalid: {}..{}",
                self.min_path_nodes, self.max_path_nodes
            ));
        }
        if self.max_path_nodes > self.nodes_per_graph {
            return err("max_path_nodes exceeds nodes_per_graph".into());
        }
        if self.instructions_per_episode == 0 {
            return err("instructions_per_episode must be at least 1".into());
        }
        Ok(())
    }
}

/// A fully generated world: graphs, splits with rendered instructions, the
/// training vocabulary, and the provenance (seed, config) that reproduces
/// it all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub config: WorldConfig,
    pub graphs: Vec<NavGraph>,
    pub split: WorldSplit,
    pub vocab: Vocabulary,
}

impl World {
    pub fn graph(&self, graph_id: &str) -> Option<&NavGraph> {
        self.graphs.iter().find(|g| g.id == graph_id)
    }

    pub fn graph_for(&self, episode: &EpisodeSpec) -> &NavGraph {
        self.graph(&episode.graph_id)
            .expect("episode references a graph of this world")
    }

    /// Seed all observation features derive from.
    pub fn feature_seed(&self) -> u64 {
        rng::derive(self.seed, "features")
    }

    pub fn observe(
        &self,
        graph: &NavGraph,
        node: NodeId,
    ) -> Result<super::Observation, WorldError> {
        super::observe(graph, node, self.feature_seed(), self.config.feature_dim)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), WorldError> {
        let file = std::fs::File::create(path)
            .map_err(|e| WorldError::Generation(format!("cannot write {}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| WorldError::Generation(format!("serialize world: {e}")))?;
        use std::io::Write;
        w.flush()
            .map_err(|e| WorldError::Generation(format!("flush {}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, WorldError> {
        let file = std::fs::File::open(path)
            .map_err(|e| WorldError::Generation(format!("cannot read {}: {e}", path.display())))?;
        let world: World = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| WorldError::Generation(format!("parse {}: {e}", path.display())))?;
        for g in &world.graphs {
            g.validate()?;
        }
        Ok(world)
    }

    /// Raw instruction texts of a split, for corpus-level statistics.
    pub fn split_texts(&self, name: SplitName) -> Vec<TokenSeq> {
        self.split
            .get(name)
            .iter()
            .flat_map(|e| e.instructions.iter().cloned())
            .collect()
    }
}

pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<World, WorldError> {
    config.validate()?;
    let grammar = Grammar::new(config.landmark_vocab_size, config.grammar.clone())
        .map_err(|e| WorldError::InfeasibleConfig(e.to_string()))?;

    let mut graphs = Vec::with_capacity(config.num_graphs);
    for i in 0..config.num_graphs {
        let gseed = rng::derive_idx(seed, "graph", i as u64);
        graphs.push(generate_graph(gseed, i, config)?);
    }

    // Graphs are iid, so assignment by index is an unbiased split.
    let n = config.num_graphs;
    let seen_count = ((n as f64) * config.split_ratios.seen).round().max(1.0) as usize;
    let val_unseen_count = ((n as f64) * config.split_ratios.val_unseen).round() as usize;
    let seen_count = seen_count.min(n);
    let val_unseen_count = val_unseen_count.min(n - seen_count);

    let mut train_seen = Vec::new();
    let mut val_seen = Vec::new();
    let mut val_unseen = Vec::new();
    let mut test_unseen = Vec::new();

    for (gi, graph) in graphs.iter().enumerate() {
        let episodes = sample_episodes(seed, graph, config)?;
        let is_seen = gi < seen_count;
        let rare_rate = if is_seen {
            config.grammar.rare_rate_seen
        } else {
            config.grammar.rare_rate_unseen
        };
        let mut rendered = Vec::with_capacity(episodes.len());
        for (k, (start, goal, path)) in episodes.into_iter().enumerate() {
            let ep_seed = rng::derive(
                rng::derive(seed, "speaker"),
                &format!("{}/{k}", graph.id),
            );
            let texts = grammar
                .render_texts(&path, graph, config.instructions_per_episode, ep_seed, rare_rate)
                .map_err(|e| WorldError::Generation(format!("render {}: {e}", graph.id)))?;
            rendered.push((start, goal, path, texts));
        }
        if is_seen {
            let holdout = (rendered.len() as f64 * config.val_seen_fraction).floor() as usize;
            let cut = rendered.len() - holdout;
            for (k, r) in rendered.into_iter().enumerate() {
                if k < cut {
                    train_seen.push((graph.id.clone(), r));
                } else {
                    val_seen.push((graph.id.clone(), r));
                }
            }
        } else if gi < seen_count + val_unseen_count {
            for r in rendered {
                val_unseen.push((graph.id.clone(), r));
            }
        } else {
            for r in rendered {
                test_unseen.push((graph.id.clone(), r));
            }
        }
    }

    // The vocabulary is built from training-split text only; everything
    // else tokenizes against it, mapping unseen lexemes to the unknown id.
    let train_texts: Vec<&str> = train_seen
        .iter()
        .flat_map(|(_, (_, _, _, texts))| texts.iter().map(|s| s.as_str()))
        .collect();
    let vocab = Vocabulary::from_texts(train_texts);

    let finish = |list: Vec<(String, (NodeId, NodeId, Vec<NodeId>, Vec<String>))>| {
        list.into_iter()
            .map(|(graph_id, (start, goal, path, texts))| EpisodeSpec {
                id: format!("{graph_id}:{start}-{goal}"),
                graph_id,
                start,
                goal,
                expert_path: path,
                instructions: texts
                    .iter()
                    .map(|t| tokenize(t, &vocab, DEFAULT_MAX_LEN))
                    .collect(),
            })
            .collect::<Vec<_>>()
    };

    Ok(World {
        seed,
        config: config.clone(),
        graphs,
        split: WorldSplit {
            train_seen: finish(train_seen),
            val_seen: finish(val_seen),
            val_unseen: finish(val_unseen),
            test_unseen: finish(test_unseen),
        },
        vocab,
    })
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

fn generate_graph(gseed: u64, index: usize, config: &WorldConfig) -> Result<NavGraph, WorldError> {
    let n = config.nodes_per_graph;
    let mut r = rng::rng_from(gseed);
    let side = (n as f64).sqrt() * 1.15;
    const MIN_SEP: f64 = 0.45;

    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    'outer: for _ in 0..n {
        for _attempt in 0..10_000 {
            let p = [r.gen_range(0.0..side), r.gen_range(0.0..side)];
            if positions
                .iter()
                .all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= MIN_SEP)
            {
                positions.push(p);
                continue 'outer;
            }
        }
        return Err(WorldError::Generation(format!(
            "could not place {n} nodes with separation {MIN_SEP} in a {side:.2}-unit square"
        )));
    }

    let dist = |a: usize, b: usize| -> f64 {
        ((positions[a][0] - positions[b][0]).powi(2) + (positions[a][1] - positions[b][1]).powi(2))
            .sqrt()
    };

    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    pairs.sort_by(|&(a1, b1), &(a2, b2)| {
        dist(a1, b1)
            .total_cmp(&dist(a2, b2))
            .then(a1.cmp(&a2))
            .then(b1.cmp(&b2))
    });

    // Kruskal spanning tree guarantees connectivity; nearby extra edges give
    // the branching factor that makes navigation non-trivial.
    let mut ds = DisjointSet::new(n);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut degree = vec![0usize; n];
    let mut in_tree = std::collections::HashSet::new();
    for &(a, b) in &pairs {
        if ds.union(a, b) {
            edges.push((a, b));
            in_tree.insert((a, b));
            degree[a] += 1;
            degree[b] += 1;
        }
    }
    if degree.iter().any(|&d| d > config.max_degree) {
        return Err(WorldError::Generation(format!(
            "spanning tree exceeds max degree {}",
            config.max_degree
        )));
    }
    let tree_mean = edges.iter().map(|&(a, b)| dist(a, b)).sum::<f64>() / edges.len() as f64;
    let connect_radius = 1.45 * tree_mean;
    for &(a, b) in &pairs {
        if in_tree.contains(&(a, b)) || dist(a, b) > connect_radius {
            continue;
        }
        if degree[a] < config.max_degree && degree[b] < config.max_degree {
            edges.push((a, b));
            degree[a] += 1;
            degree[b] += 1;
        }
    }

    // Scale so the mean edge length lands on TARGET_EDGE_LEN world units.
    let mean = edges.iter().map(|&(a, b)| dist(a, b)).sum::<f64>() / edges.len() as f64;
    let scale = TARGET_EDGE_LEN / mean;
    for p in &mut positions {
        p[0] *= scale;
        p[1] *= scale;
    }

    // Distinct landmark per node, drawn from the shared landmark vocabulary.
    let mut symbols: Vec<u16> = (0..config.landmark_vocab_size as u16).collect();
    symbols.shuffle(&mut r);
    let landmark_map = symbols[..n]
        .iter()
        .map(|&s| vec![LandmarkId(s)])
        .collect();

    let edges = edges
        .into_iter()
        .map(|(a, b)| (NodeId(a as u32), NodeId(b as u32)))
        .collect();
    NavGraph::new(format!("g{index:02}"), positions, edges, landmark_map)
}

type EpisodeDraft = (NodeId, NodeId, Vec<NodeId>);

/// Sample (start, goal) pairs whose tie-broken shortest path has a node
/// count in the configured band and is also hop-minimal, so expert paths
/// agree with a breadth-first oracle.
fn sample_episodes(
    world_seed: u64,
    graph: &NavGraph,
    config: &WorldConfig,
) -> Result<Vec<EpisodeDraft>, WorldError> {
    let n = graph.node_count();
    let mut candidates: Vec<EpisodeDraft> = Vec::new();
    for s in 0..n {
        for g in 0..n {
            if s == g {
                continue;
            }
            let (start, goal) = (NodeId(s as u32), NodeId(g as u32));
            let (path, _) = shortest_path(graph, start, goal);
            if path.len() < config.min_path_nodes || path.len() > config.max_path_nodes {
                continue;
            }
            if graph.hop_distance(start, goal) as usize != path.len() - 1 {
                continue;
            }
            candidates.push((start, goal, path));
        }
    }
    if candidates.len() < config.episodes_per_graph {
        return Err(WorldError::InfeasibleConfig(format!(
            "graph {} yields only {} candidate episodes, {} requested",
            graph.id,
            candidates.len(),
            config.episodes_per_graph
        )));
    }
    let mut r = rng::rng_from(rng::derive(rng::derive(world_seed, "episodes"), &graph.id));
    candidates.shuffle(&mut r);
    candidates.truncate(config.episodes_per_graph);
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn same_seed_is_bit_identical() {
        let config = WorldConfig { num_graphs: 4, episodes_per_graph: 8, ..Default::default() };
        let a = generate_world(1, &config).unwrap();
        let b = generate_world(1, &config).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn seen_unseen_graph_ids_disjoint() {
        let config = WorldConfig {
            num_graphs: 4,
            episodes_per_graph: 8,
            split_ratios: SplitRatios { seen: 0.5, val_unseen: 0.25, test_unseen: 0.25 },
            ..Default::default()
        };
        let w = generate_world(1, &config).unwrap();
        let seen: HashSet<&str> = w
            .split
            .train_seen
            .iter()
            .chain(&w.split.val_seen)
            .map(|e| e.graph_id.as_str())
            .collect();
        let unseen: HashSet<&str> = w
            .split
            .val_unseen
            .iter()
            .chain(&w.split.test_unseen)
            .map(|e| e.graph_id.as_str())
            .collect();
        assert!(!seen.is_empty() && !unseen.is_empty());
        assert!(seen.is_disjoint(&unseen));
    }

    #[test]
    fn val_seen_pairs_held_out_from_train() {
        let w = generate_world(3, &WorldConfig::default()).unwrap();
        assert!(!w.split.val_seen.is_empty());
        let train: HashSet<(String, NodeId, NodeId)> = w
            .split
            .train_seen
            .iter()
            .map(|e| (e.graph_id.clone(), e.start, e.goal))
            .collect();
        for e in &w.split.val_seen {
            assert!(!train.contains(&(e.graph_id.clone(), e.start, e.goal)));
            assert!(train.iter().any(|(g, _, _)| g == &e.graph_id), "val_seen uses training graphs");
        }
    }

    #[test]
    fn expert_paths_match_bfs_oracle() {
        // Independent breadth-first search over the serialized edge list.
        let w = generate_world(5, &WorldConfig { num_graphs: 3, ..Default::default() }).unwrap();
        for e in w
            .split
            .train_seen
            .iter()
            .chain(&w.split.val_unseen)
        {
            let g = w.graph_for(e);
            let mut adj = vec![Vec::new(); g.node_count()];
            for &(a, b) in &g.edges {
                adj[a.index()].push(b);
                adj[b.index()].push(a);
            }
            let mut hops = vec![usize::MAX; g.node_count()];
            hops[e.start.index()] = 0;
            let mut q = std::collections::VecDeque::from([e.start]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u.index()] {
                    if hops[v.index()] == usize::MAX {
                        hops[v.index()] = hops[u.index()] + 1;
                        q.push_back(v);
                    }
                }
            }
            assert_eq!(
                e.expert_path.len() - 1,
                hops[e.goal.index()],
                "expert path of {} is not hop-minimal",
                e.id
            );
        }
    }

    #[test]
    fn world_file_roundtrip_reproduces_observations() {
        let dir = std::env::temp_dir().join(format!("navlab-world-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("world.json");

        let config = WorldConfig { num_graphs: 2, episodes_per_graph: 6, ..Default::default() };
        let w = generate_world(9, &config).unwrap();
        w.save(&path).unwrap();
        let loaded = World::load(&path).unwrap();

        let g = &w.graphs[0];
        let lg = loaded.graph(&g.id).unwrap();
        for node in 0..g.node_count() {
            let a = w.observe(g, NodeId(node as u32)).unwrap();
            let b = loaded.observe(lg, NodeId(node as u32)).unwrap();
            assert_eq!(a.stop_feature, b.stop_feature);
            for (ca, cb) in a.candidates.iter().zip(&b.candidates) {
                assert_eq!(ca.neighbor, cb.neighbor);
                assert_eq!(ca.feature, cb.feature);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn infeasible_config_is_an_error() {
        let config = WorldConfig {
            nodes_per_graph: 4,
            episodes_per_graph: 500,
            landmark_vocab_size: 30,
            ..Default::default()
        };
        assert!(matches!(
            generate_world(1, &config),
            Err(WorldError::InfeasibleConfig(_))
        ));
    }
}
