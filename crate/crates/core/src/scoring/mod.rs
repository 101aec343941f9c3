//! Rewards: fragment-based synthetic accessibility and natural-product
//! likeness, target size, and per-episode final scores.

mod fragments;
mod table;

pub use fragments::{circular_fragments, environment_labels, fragment_id, FRAGMENT_RADIUS};
pub use table::{FragmentTable, ScoringTables, TableKind, NATURAL_TABLE_FILE, SA_TABLE_FILE, SYNTHETIC_TABLE_FILE};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::chem::{smallest_rings, ChemError, MolecularGraph};
use crate::pretrain::{EpisodeEnd, SampleBatch};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("graph is empty, disconnected or over valence")]
    InvalidGraph,
    #[error("no molecules to build a table from")]
    EmptyCorpus,
    #[error("fragment table not found at {0}")]
    MissingTable(String),
    #[error("fragment table: {0}")]
    TableFormat(String),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const SA_RANGE: (f64, f64) = (1.0, 10.0);
pub const NP_RANGE: (f64, f64) = (-5.0, 5.0);
/// Rings with more atoms than this count as macrocycles.
pub const MACROCYCLE_MIN: usize = 9;
/// Heavy atoms beyond this add a size penalty.
pub const SIZE_PENALTY_START: usize = 20;

fn rescale(raw: f64, lo: f64, hi: f64, out: (f64, f64)) -> f64 {
    let t = (raw - lo) / (hi - lo);
    (out.0 + t * (out.1 - out.0)).clamp(out.0, out.1)
}

/// Bridgehead and spiro atoms among the smallest rings.
fn ring_junctions(rings: &[Vec<usize>]) -> (usize, usize) {
    let sets: Vec<BTreeSet<usize>> = rings.iter().map(|r| r.iter().copied().collect()).collect();
    let mut bridge = BTreeSet::new();
    let mut spiro = BTreeSet::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let shared: BTreeSet<usize> = sets[i].intersection(&sets[j]).copied().collect();
            match shared.len() {
                0 | 2 => {}
                1 => {
                    spiro.extend(shared);
                }
                _ => {
                    // Ends of the shared path: shared atoms with a ring-i
                    // neighbor outside the overlap.
                    for (k, &a) in rings[i].iter().enumerate() {
                        if !shared.contains(&a) {
                            continue;
                        }
                        let n = rings[i].len();
                        let prev = rings[i][(k + n - 1) % n];
                        let next = rings[i][(k + 1) % n];
                        if !shared.contains(&prev) || !shared.contains(&next) {
                            bridge.insert(a);
                        }
                    }
                }
            }
        }
    }
    (bridge.len(), spiro.len())
}

/// Ring-junction, macrocycle and size penalties.
pub fn complexity_penalty(g: &MolecularGraph) -> f64 {
    let rings = smallest_rings(g);
    let (bridge, spiro) = ring_junctions(&rings);
    let ring_bridge = (1.0 + bridge as f64).ln() + (1.0 + spiro as f64).ln();
    let macrocycle = if rings.iter().any(|r| r.len() >= MACROCYCLE_MIN) {
        2f64.ln()
    } else {
        0.0
    };
    let size = (1.0 + g.atom_count().saturating_sub(SIZE_PENALTY_START) as f64).ln();
    ring_bridge + macrocycle + size
}

pub(crate) fn sa_raw(g: &MolecularGraph, fragments: &[u64], table: &FragmentTable) -> f64 {
    let mean = fragments.iter().map(|&f| table.contribution(f)).sum::<f64>() / fragments.len() as f64;
    -mean + complexity_penalty(g)
}

pub(crate) fn np_raw(fragments: &[u64], natural: &FragmentTable, synthetic: &FragmentTable) -> f64 {
    fragments
        .iter()
        .map(|&f| natural.contribution(f) - synthetic.contribution(f))
        .sum::<f64>()
        / fragments.len() as f64
}

/// Synthetic accessibility in `[1, 10]`; lower is easier.
pub fn sa_score(g: &MolecularGraph, table: &FragmentTable) -> Result<f64, ScoringError> {
    if table.kind != TableKind::Sa {
        return Err(ScoringError::MissingTable("SA table".into()));
    }
    let f = circular_fragments(g, FRAGMENT_RADIUS)?;
    Ok(rescale(sa_raw(g, &f, table), table.raw_lo, table.raw_hi, SA_RANGE))
}

/// Natural-product likeness in `[-5, 5]`; positive is natural-like.
pub fn np_score(g: &MolecularGraph, natural: &FragmentTable, synthetic: &FragmentTable) -> Result<f64, ScoringError> {
    if natural.kind != TableKind::Np || synthetic.kind != TableKind::Np {
        return Err(ScoringError::MissingTable("NP tables".into()));
    }
    let f = circular_fragments(g, FRAGMENT_RADIUS)?;
    Ok(rescale(np_raw(&f, natural, synthetic), natural.raw_lo, natural.raw_hi, NP_RANGE))
}

pub fn sa_reward(sa: f64) -> f64 {
    (SA_RANGE.1 - sa) / (SA_RANGE.1 - SA_RANGE.0)
}

pub fn np_reward(np: f64) -> f64 {
    (np - NP_RANGE.0) / (NP_RANGE.1 - NP_RANGE.0)
}

pub fn size_reward(g: &MolecularGraph, max_nodes: usize) -> u8 {
    let n = g.atom_count();
    u8::from(n > 0 && n <= max_nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub max_nodes: usize,
    /// SA, NP and size weights.
    pub weights: [f64; 3],
    pub sa_optimal_max: f64,
    pub np_optimal_min: f64,
}

impl ScoreConfig {
    pub fn new(max_nodes: usize) -> Self {
        Self {
            max_nodes,
            weights: [1.0 / 3.0; 3],
            sa_optimal_max: 3.0,
            np_optimal_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroReason {
    None,
    Invalid,
    Duplicate,
    Unfinished,
}

impl ZeroReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroReason::None => "none",
            ZeroReason::Invalid => "invalid",
            ZeroReason::Duplicate => "duplicate",
            ZeroReason::Unfinished => "unfinished",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    /// Absent when the graph cannot be scored.
    pub sa: Option<f64>,
    pub np: Option<f64>,
    pub size_reward: u8,
    pub final_score: f64,
    pub zeroed: ZeroReason,
}

impl Score {
    pub fn is_zeroed(&self) -> bool {
        self.zeroed != ZeroReason::None
    }
}

/// Scores a single valid molecule, with an optional reason to zero it.
pub fn score_graph(
    g: &MolecularGraph,
    cfg: &ScoreConfig,
    tables: &ScoringTables,
    zero: ZeroReason,
) -> Result<Score, ScoringError> {
    let sa = sa_score(g, &tables.sa)?;
    let np = np_score(g, &tables.natural, &tables.synthetic)?;
    let size = size_reward(g, cfg.max_nodes);
    let w = cfg.weights;
    let final_score = if zero == ZeroReason::None {
        w[0] * sa_reward(sa) + w[1] * np_reward(np) + w[2] * size as f64
    } else {
        0.0
    };
    Ok(Score {
        sa: Some(sa),
        np: Some(np),
        size_reward: size,
        final_score,
        zeroed: zero,
    })
}

/// One score per episode. Invalid, unfinished and repeated molecules get 0.
pub fn final_scores(batch: &SampleBatch, cfg: &ScoreConfig, tables: &ScoringTables) -> Result<Vec<Score>, ScoringError> {
    batch
        .episodes
        .iter()
        .map(|e| {
            let reason = match e.end {
                EpisodeEnd::InvalidAction(_) => ZeroReason::Invalid,
                EpisodeEnd::Terminated if !e.valid => ZeroReason::Invalid,
                EpisodeEnd::Terminated if !e.unique => ZeroReason::Duplicate,
                EpisodeEnd::Terminated => ZeroReason::None,
                _ => ZeroReason::Unfinished,
            };
            if e.graph.is_valid() {
                score_graph(&e.graph, cfg, tables, reason)
            } else {
                Ok(Score {
                    sa: None,
                    np: None,
                    size_reward: size_reward(&e.graph, cfg.max_nodes),
                    final_score: 0.0,
                    zeroed: reason,
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::ActionSequence;
    use crate::chem::{parse_smiles, write_smiles};
    use crate::pretrain::SampledEpisode;

    fn graphs(smiles: &[&str]) -> Vec<MolecularGraph> {
        smiles.iter().map(|s| parse_smiles(s).unwrap()).collect()
    }

    fn tables() -> ScoringTables {
        ScoringTables::bundled().unwrap()
    }

    #[test]
    fn bundled_corpus_spans_the_sa_range() {
        let t = tables();
        let nat = graphs(
            &crate::data::TOY_FLAVOR_CORPUS
                .lines()
                .map(|l| l.split('\t').next().unwrap())
                .collect::<Vec<_>>(),
        );
        let s: Vec<f64> = nat.iter().map(|g| sa_score(g, &t.sa).unwrap()).collect();
        assert!(s.iter().all(|x| (1.0..=10.0).contains(x)));
        let np: Vec<f64> = nat.iter().map(|g| np_score(g, &t.natural, &t.synthetic).unwrap()).collect();
        assert!(np.iter().all(|x| (-5.0..=5.0).contains(x)));
        let mean_np = np.iter().sum::<f64>() / np.len() as f64;
        assert!(mean_np > 0.0, "flavor molecules lean natural: {mean_np}");
    }

    #[test]
    fn macrocycle_raises_sa() {
        let t = tables();
        for base in ["CCCCCCO", "CCOC(=O)C", "CC(C)CCO", "O=CCCCC"] {
            let plain = parse_smiles(base).unwrap();
            let ring = parse_smiles(&format!("{base}C1CCCCCCCCCCC1")).unwrap();
            let chain = parse_smiles(&format!("{base}CCCCCCCCCCCC")).unwrap();
            let (a, b, c) = (
                sa_score(&plain, &t.sa).unwrap(),
                sa_score(&ring, &t.sa).unwrap(),
                sa_score(&chain, &t.sa).unwrap(),
            );
            assert!(b > a, "{base}: {a} vs {b}");
            assert!(b > c, "{base}: chain {c} vs ring {b}");
        }
    }

    #[test]
    fn ring_junction_counts() {
        let count = |s: &str| ring_junctions(&smallest_rings(&parse_smiles(s).unwrap()));
        assert_eq!(count("C1CC2CCC1C2"), (2, 0));
        assert_eq!(count("C1CCC2(CC1)CCCC2"), (0, 1));
        assert_eq!(count("c1ccc2ccccc2c1"), (0, 0));
        assert_eq!(count("CCO"), (0, 0));
    }

    #[test]
    fn identical_tables_give_zero_np() {
        let corpus = graphs(&["CCO", "CC(=O)OC", "c1ccccc1O"]);
        let (nat, syn) = FragmentTable::build_np(("a", &corpus), ("b", &corpus)).unwrap();
        for s in ["CCO", "CCCCN", "C1CCSC1", "c1ccncc1Cl"] {
            assert_eq!(np_score(&parse_smiles(s).unwrap(), &nat, &syn).unwrap(), 0.0);
        }
    }

    #[test]
    fn np_sign_follows_the_corpus() {
        let natural = graphs(&["OCC(O)CO", "CC(O)CO", "OCCO"]);
        let synthetic = graphs(&["NCCN", "CN(C)CCN", "CNCCN"]);
        let (nat, syn) = FragmentTable::build_np(("nat", &natural), ("syn", &synthetic)).unwrap();
        assert!(np_score(&natural[0], &nat, &syn).unwrap() > 0.0);
        assert!(np_score(&synthetic[1], &nat, &syn).unwrap() < 0.0);
    }

    #[test]
    fn table_text_round_trip_is_exact() {
        let t = tables();
        for table in [&t.sa, &t.natural, &t.synthetic] {
            let back = FragmentTable::from_text(&table.to_text()).unwrap();
            assert_eq!(&back, table);
        }
        let dir = tempfile::tempdir().unwrap();
        t.save_dir(dir.path()).unwrap();
        let back = ScoringTables::load_dir(dir.path()).unwrap();
        let g = parse_smiles("CC(C)=CCCC(C)=CC=O").unwrap();
        assert_eq!(
            sa_score(&g, &back.sa).unwrap().to_bits(),
            sa_score(&g, &t.sa).unwrap().to_bits()
        );
        assert!(FragmentTable::from_text("nonsense").is_err());
        assert!(matches!(
            ScoringTables::load_dir(&dir.path().join("absent")),
            Err(ScoringError::MissingTable(_))
        ));
    }

    #[test]
    fn size_and_reward_maps() {
        let five = parse_smiles("CCCCO").unwrap();
        assert_eq!(size_reward(&five, 12), 1);
        assert_eq!(size_reward(&MolecularGraph::new(), 12), 0);
        assert_eq!(size_reward(&parse_smiles("CCCCCCCCCCCCC").unwrap(), 12), 0);
        assert_eq!(sa_reward(1.0), 1.0);
        assert_eq!(sa_reward(10.0), 0.0);
        assert_eq!(np_reward(5.0), 1.0);
        assert_eq!(np_reward(-5.0), 0.0);
        let w = ScoreConfig::new(12).weights;
        assert_eq!(w[0] * sa_reward(1.0) + w[1] * np_reward(5.0) + w[2] * 1.0, 1.0);
    }

    fn ep(smiles: Option<&str>, end: EpisodeEnd) -> SampledEpisode {
        let graph = smiles.map_or_else(MolecularGraph::new, |s| parse_smiles(s).unwrap());
        let valid = end == EpisodeEnd::Terminated && graph.is_valid();
        SampledEpisode {
            actions: ActionSequence::default(),
            step_log_probs: vec![],
            smiles: valid.then(|| write_smiles(&graph).unwrap()),
            graph,
            end,
            valid,
            unique: false,
        }
    }

    #[test]
    fn batch_zeroing() {
        let t = tables();
        let batch = SampleBatch::new(vec![
            ep(Some("CCO"), EpisodeEnd::Terminated),
            ep(Some("OCC"), EpisodeEnd::Terminated),
            ep(Some("CCCC"), EpisodeEnd::StepCap),
            ep(None, EpisodeEnd::Terminated),
            ep(Some("CC=O"), EpisodeEnd::InvalidAction(crate::actions::Invalid::Valence)),
        ]);
        let s = final_scores(&batch, &ScoreConfig::new(12), &t).unwrap();
        assert!(!s[0].is_zeroed() && s[0].final_score > 0.0 && s[0].final_score <= 1.0);
        let reasons: Vec<_> = s.iter().map(|x| x.zeroed).collect();
        assert_eq!(
            reasons,
            vec![
                ZeroReason::None,
                ZeroReason::Duplicate,
                ZeroReason::Unfinished,
                ZeroReason::Invalid,
                ZeroReason::Invalid
            ]
        );
        assert!(s[1..].iter().all(|x| x.final_score == 0.0));
        assert_eq!(s[1].sa, s[0].sa);
    }
}
