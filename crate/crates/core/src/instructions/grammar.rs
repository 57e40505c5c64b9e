//! The synthetic speaker: renders an expert path into imperative text.
//!
//! Lexical variation is controlled per synonym set: each concept has core
//! lexemes and rare lexemes, and a rendering draws rare ones with a
//! configurable rate. Seen-split and unseen-split corpora are rendered with
//! different rates, which manufactures the seen/unseen vocabulary shift.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::world::{LandmarkId, NavGraph, NodeId};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("path references landmark {0:?} absent from the grammar")]
    UnknownLandmark(LandmarkId),
    #[error("grammar supports at most {max} landmarks, {requested} requested")]
    TooManyLandmarks { max: usize, requested: usize },
    #[error("path must have at least two nodes, got {0}")]
    PathTooShort(usize),
    #[error("node {0} has no landmark to describe")]
    MissingLandmark(NodeId),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynonymSet {
    pub concept: String,
    pub core: Vec<String>,
    pub rare: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    /// Rare-synonym rate used when rendering seen-split instructions.
    pub rare_rate_seen: f64,
    /// Rare-synonym rate used when rendering unseen-split instructions.
    pub rare_rate_unseen: f64,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig { rare_rate_seen: 0.05, rare_rate_unseen: 0.35 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grammar {
    pub landmarks: Vec<SynonymSet>,
    pub motion_verbs: SynonymSet,
    pub stop_verbs: SynonymSet,
    pub dir_left: SynonymSet,
    pub dir_right: SynonymSet,
    pub dir_straight: SynonymSet,
    pub config: GrammarConfig,
}

fn set(concept: &str, core: &[&str], rare: &[&str]) -> SynonymSet {
    SynonymSet {
        concept: concept.to_string(),
        core: core.iter().map(|s| s.to_string()).collect(),
        rare: rare.iter().map(|s| s.to_string()).collect(),
    }
}

/// (core lexemes, rare lexemes) per landmark concept. The rare column is
/// what unseen-split renderings lean on.
const LANDMARK_TABLE: &[(&str, [&str; 2], [&str; 2])] = &[
    ("lamp", ["lamp", "light"], ["lantern", "sconce"]),
    ("sofa", ["sofa", "couch"], ["settee", "divan"]),
    ("table", ["table", "desk"], ["bureau", "workbench"]),
    ("chair", ["chair", "seat"], ["stool", "recliner"]),
    ("plant", ["plant", "fern"], ["ficus", "philodendron"]),
    ("painting", ["painting", "picture"], ["fresco", "canvas"]),
    ("mirror", ["mirror", "glass"], ["reflector", "vanity"]),
    ("clock", ["clock", "dial"], ["timepiece", "chronometer"]),
    ("vase", ["vase", "pot"], ["urn", "amphora"]),
    ("statue", ["statue", "figure"], ["mannequin", "manikin"]),
    ("shelf", ["shelf", "rack"], ["etagere", "sideboard"]),
    ("piano", ["piano", "keyboard"], ["spinet", "clavier"]),
    ("rug", ["rug", "carpet"], ["mat", "tapestry"]),
    ("fireplace", ["fireplace", "hearth"], ["mantel", "inglenook"]),
    ("window", ["window", "pane"], ["casement", "skylight"]),
    ("door", ["door", "doorway"], ["portal", "archway"]),
    ("stairs", ["stairs", "steps"], ["stairwell", "banister"]),
    ("fountain", ["fountain", "basin"], ["spring", "cascade"]),
    ("bench", ["bench", "pew"], ["settle", "ottoman"]),
    ("bookcase", ["bookcase", "books"], ["folios", "volumes"]),
    ("cabinet", ["cabinet", "cupboard"], ["armoire", "credenza"]),
    ("bed", ["bed", "cot"], ["bunk", "daybed"]),
    ("sink", ["sink", "faucet"], ["washbasin", "spigot"]),
    ("stove", ["stove", "oven"], ["range", "cooktop"]),
    ("fridge", ["fridge", "icebox"], ["refrigerator", "cooler"]),
    ("television", ["television", "screen"], ["monitor", "projector"]),
    ("barrel", ["barrel", "keg"], ["cask", "hogshead"]),
    ("crate", ["crate", "box"], ["chest", "footlocker"]),
    ("ladder", ["ladder", "rungs"], ["stepladder", "scaffold"]),
    ("candle", ["candle", "taper"], ["votive", "candelabra"]),
    ("globe", ["globe", "sphere"], ["orb", "planetarium"]),
    ("drum", ["drum", "bongo"], ["tympani", "snare"]),
    ("anchor", ["anchor", "hook"], ["grapnel", "mooring"]),
    ("wheel", ["wheel", "tire"], ["hub", "axle"]),
    ("basket", ["basket", "hamper"], ["pannier", "creel"]),
    ("curtain", ["curtain", "drape"], ["valance", "portiere"]),
];

pub const MAX_LANDMARKS: usize = LANDMARK_TABLE.len();

const CONNECTORS: &[&str] = &["then", "and then", "next"];

impl Grammar {
    /// A grammar covering `landmark_count` symbols. Every symbol gets at
    /// least one core lexeme by construction.
    pub fn new(landmark_count: usize, config: GrammarConfig) -> Result<Self, RenderError> {
        if landmark_count > MAX_LANDMARKS {
            return Err(RenderError::TooManyLandmarks {
                max: MAX_LANDMARKS,
                requested: landmark_count,
            });
        }
        let landmarks = LANDMARK_TABLE[..landmark_count]
            .iter()
            .map(|(concept, core, rare)| set(concept, core, rare))
            .collect();
        Ok(Grammar {
            landmarks,
            motion_verbs: set("motion", &["walk", "go", "head", "move"], &["stroll", "proceed", "saunter", "amble"]),
            stop_verbs: set("stop", &["stop", "wait"], &["halt", "linger"]),
            dir_left: set("left", &["left"], &["leftwards"]),
            dir_right: set("right", &["right"], &["rightwards"]),
            dir_straight: set("straight", &["straight", "ahead"], &["onwards", "forwards"]),
            config,
        })
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    fn pick<'a>(&self, s: &'a SynonymSet, rare_rate: f64, r: &mut ChaCha8Rng) -> &'a str {
        // One rarity draw and one synonym draw per slot, always, so the
        // token stream is a fixed-budget function of the rng.
        let use_rare = r.gen::<f64>() < rare_rate && !s.rare.is_empty();
        let pool = if use_rare { &s.rare } else { &s.core };
        &pool[r.gen_range(0..pool.len())]
    }

    fn landmark_word<'a>(
        &'a self,
        graph: &NavGraph,
        node: NodeId,
        rare_rate: f64,
        r: &mut ChaCha8Rng,
    ) -> Result<&'a str, RenderError> {
        let lm = graph.landmark_map[node.index()]
            .first()
            .copied()
            .ok_or(RenderError::MissingLandmark(node))?;
        let set = self
            .landmarks
            .get(lm.0 as usize)
            .ok_or(RenderError::UnknownLandmark(lm))?;
        Ok(self.pick(set, rare_rate, r))
    }

    /// Render `m` distinct instruction texts for one expert path,
    /// deterministic in `seed`.
    pub fn render_texts(
        &self,
        path: &[NodeId],
        graph: &NavGraph,
        m: usize,
        seed: u64,
        rare_rate: f64,
    ) -> Result<Vec<String>, RenderError> {
        if path.len() < 2 {
            return Err(RenderError::PathTooShort(path.len()));
        }
        let mut out: Vec<String> = Vec::with_capacity(m);
        for i in 0..m {
            // Distinctness: bump the salt when a rendering collides with an
            // earlier one; bounded retries keep this deterministic.
            let mut text = String::new();
            for salt in 0..20u64 {
                let mut r = rng::rng_from(rng::derive_idx(seed, "instruction", (i as u64) << 8 | salt));
                text = self.render_one(path, graph, rare_rate, &mut r)?;
                if !out.contains(&text) {
                    break;
                }
            }
            out.push(text);
        }
        Ok(out)
    }

    fn render_one(
        &self,
        path: &[NodeId],
        graph: &NavGraph,
        rare_rate: f64,
        r: &mut ChaCha8Rng,
    ) -> Result<String, RenderError> {
        let hops = path.len() - 1;
        // Long paths use the terse list style to stay inside the 5-25 token
        // band; short paths draw from the fuller clause templates.
        let list_style = hops > 3 || (hops == 3 && r.gen::<f64>() < 0.5);
        let mut clauses: Vec<String> = Vec::with_capacity(hops + 1);
        for h in 0..hops {
            let dest = path[h + 1];
            let lm = self.landmark_word(graph, dest, rare_rate, r)?;
            let dir = turn_direction(graph, path, h);
            if h > 0 && list_style {
                clauses.push(format!("to the {lm}"));
                continue;
            }
            let verb = self.pick(&self.motion_verbs, rare_rate, r);
            let clause = match dir {
                Some(turn) => {
                    let dirset = match turn {
                        Turn::Left => &self.dir_left,
                        Turn::Right => &self.dir_right,
                        Turn::Straight => &self.dir_straight,
                    };
                    let dirword = self.pick(dirset, rare_rate, r);
                    match r.gen_range(0..3) {
                        0 => format!("{verb} {dirword} to the {lm}"),
                        1 if matches!(turn, Turn::Left | Turn::Right) => {
                            format!("turn {dirword} and {verb} to the {lm}")
                        }
                        _ => format!("{verb} to the {lm}"),
                    }
                }
                None => match r.gen_range(0..3) {
                    0 => format!("{verb} toward the {lm}"),
                    _ => format!("{verb} to the {lm}"),
                },
            };
            clauses.push(clause);
        }

        let stopverb = self.pick(&self.stop_verbs, rare_rate, r);
        let goal_lm = self.landmark_word(graph, path[hops], rare_rate, r)?;
        let stop_clause = match r.gen_range(0..3) {
            0 => format!("{stopverb} at the {goal_lm}"),
            1 => format!("{stopverb} near the {goal_lm}"),
            _ => format!("{stopverb} there"),
        };
        clauses.push(stop_clause);

        let mut text = clauses[0].clone();
        for clause in &clauses[1..] {
            let conn = CONNECTORS[r.gen_range(0..CONNECTORS.len())];
            text.push(' ');
            text.push_str(conn);
            text.push(' ');
            text.push_str(clause);
        }
        Ok(text)
    }
}

#[derive(Clone, Copy)]
enum Turn {
    Left,
    Right,
    Straight,
}

/// Turn direction entering hop `h`, from the bearing change relative to the
/// previous hop. The first hop has no previous bearing.
fn turn_direction(graph: &NavGraph, path: &[NodeId], h: usize) -> Option<Turn> {
    if h == 0 {
        return None;
    }
    let p0 = graph.positions[path[h - 1].index()];
    let p1 = graph.positions[path[h].index()];
    let p2 = graph.positions[path[h + 1].index()];
    let (ax, ay) = (p1[0] - p0[0], p1[1] - p0[1]);
    let (bx, by) = (p2[0] - p1[0], p2[1] - p1[1]);
    let na = (ax * ax + ay * ay).sqrt();
    let nb = (bx * bx + by * by).sqrt();
    let cross = (ax * by - ay * bx) / (na * nb);
    if cross > 0.3 {
        Some(Turn::Left)
    } else if cross < -0.3 {
        Some(Turn::Right)
    } else {
        Some(Turn::Straight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::NavGraph;

    fn graph() -> NavGraph {
        NavGraph::new(
            "g".into(),
            vec![[0.0, 0.0], [2.2, 0.0], [4.4, 0.0], [4.4, 2.2]],
            vec![
                (NodeId(0), NodeId(1)),
                (NodeId(1), NodeId(2)),
                (NodeId(2), NodeId(3)),
            ],
            vec![
                vec![LandmarkId(0)],
                vec![LandmarkId(1)],
                vec![LandmarkId(2)],
                vec![LandmarkId(3)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_instruction_short_path() {
        let g = graph();
        let grammar = Grammar::new(8, GrammarConfig::default()).unwrap();
        let texts = grammar
            .render_texts(&[NodeId(0), NodeId(1)], &g, 1, 3, 0.0)
            .unwrap();
        assert_eq!(texts.len(), 1);
        let words = crate::instructions::split_words(&texts[0]);
        assert!(words.len() >= 5, "too short: {:?}", texts[0]);
        assert!(words.len() <= 25, "too long: {:?}", texts[0]);
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = graph();
        let grammar = Grammar::new(8, GrammarConfig::default()).unwrap();
        let path = [NodeId(0), NodeId(1), NodeId(2), NodeId(3)];
        let a = grammar.render_texts(&path, &g, 3, 42, 0.1).unwrap();
        let b = grammar.render_texts(&path, &g, 3, 42, 0.1).unwrap();
        assert_eq!(a, b);
        let c = grammar.render_texts(&path, &g, 3, 43, 0.1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn renderings_are_distinct() {
        let g = graph();
        let grammar = Grammar::new(8, GrammarConfig::default()).unwrap();
        let path = [NodeId(0), NodeId(1), NodeId(2)];
        let texts = grammar.render_texts(&path, &g, 3, 7, 0.05).unwrap();
        assert_eq!(texts.len(), 3);
        assert_ne!(texts[0], texts[1]);
        assert_ne!(texts[1], texts[2]);
        assert_ne!(texts[0], texts[2]);
    }

    #[test]
    fn unknown_landmark_is_an_error() {
        let g = NavGraph::new(
            "g".into(),
            vec![[0.0, 0.0], [2.2, 0.0]],
            vec![(NodeId(0), NodeId(1))],
            vec![vec![LandmarkId(0)], vec![LandmarkId(30)]],
        )
        .unwrap();
        let grammar = Grammar::new(4, GrammarConfig::default()).unwrap();
        let err = grammar
            .render_texts(&[NodeId(0), NodeId(1)], &g, 1, 1, 0.0)
            .unwrap_err();
        assert!(matches!(err, RenderError::UnknownLandmark(LandmarkId(30))));
    }

    #[test]
    fn rare_rate_one_avoids_core_landmark_lexemes() {
        let g = graph();
        let grammar = Grammar::new(8, GrammarConfig::default()).unwrap();
        let texts = grammar
            .render_texts(&[NodeId(0), NodeId(1), NodeId(2)], &g, 5, 11, 1.0)
            .unwrap();
        for t in &texts {
            for lm in &grammar.landmarks {
                for core in &lm.core {
                    let words = crate::instructions::split_words(t);
                    assert!(
                        !words.contains(core),
                        "core lexeme {core} appeared in rare-only rendering: {t}"
                    );
                }
            }
        }
    }
}
