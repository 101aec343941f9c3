//! Corpus ingestion, deterministic splits, vocabulary files and
//! deconstruction shards.

use std::collections::HashSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{construction_sequence, parse_trace, write_trace, ActionLayout, ActionSequence};
use crate::chem::{parse_smiles, write_smiles, AtomVocabulary, BondOrder, Element, MolecularGraph};
use crate::pretrain::TrainingExample;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("no molecule survived ingestion")]
    Empty,
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    /// 80/10/10 by the SHA-256 of the canonical SMILES.
    pub fn of(smiles: &str) -> Self {
        let d = Sha256::digest(smiles.as_bytes());
        match u64::from_le_bytes(d[..8].try_into().expect("32-byte digest")) % 10 {
            0..=7 => Split::Train,
            8 => Split::Valid,
            _ => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub smiles: String,
    pub descriptors: Vec<String>,
    pub split: Split,
    pub graph: MolecularGraph,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    pub vocab: AtomVocabulary,
    pub rejects: Vec<Reject>,
    /// Repeated canonical SMILES dropped during ingestion.
    pub duplicates: usize,
}

impl Corpus {
    /// Reads `SMILES[TAB]desc;desc` lines. Blank lines and `#` comments are
    /// skipped; unparseable lines and molecules above `max_nodes` become
    /// rejects.
    pub fn ingest(text: &str, max_nodes: Option<usize>) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        let mut rejects = Vec::new();
        let mut seen = HashSet::new();
        let mut duplicates = 0;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (smi, desc) = line.split_once('\t').unwrap_or((line, ""));
            let reject = |reason: String| Reject {
                line: n + 1,
                text: line.to_string(),
                reason,
            };
            let graph = match parse_smiles(smi.trim()) {
                Ok(g) => g,
                Err(e) => {
                    rejects.push(reject(e.to_string()));
                    continue;
                }
            };
            if let Some(m) = max_nodes {
                if graph.atom_count() > m {
                    rejects.push(reject(format!("{} heavy atoms exceeds max_nodes {m}", graph.atom_count())));
                    continue;
                }
            }
            let smiles = match write_smiles(&graph) {
                Ok(s) => s,
                Err(e) => {
                    rejects.push(reject(e.to_string()));
                    continue;
                }
            };
            if !seen.insert(smiles.clone()) {
                duplicates += 1;
                continue;
            }
            let descriptors = desc
                .split(';')
                .map(str::trim)
                .filter(|d| !d.is_empty())
                .map(str::to_string)
                .collect();
            entries.push(CorpusEntry {
                split: Split::of(&smiles),
                smiles,
                descriptors,
                graph,
            });
        }
        if entries.is_empty() {
            return Err(CorpusError::Empty);
        }
        if !entries.iter().any(|e| e.split == Split::Train) {
            entries.iter_mut().for_each(|e| e.split = Split::Train);
        }
        let vocab = AtomVocabulary::from_graphs(entries.iter().map(|e| &e.graph), max_nodes);
        Ok(Self {
            entries,
            vocab,
            rejects,
            duplicates,
        })
    }

    pub fn split(&self, s: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.split == s)
    }

    /// `smiles<TAB>split<TAB>descriptors`, with a header line.
    pub fn manifest(&self) -> String {
        let mut out = String::from("smiles\tsplit\tdescriptors\n");
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}", e.smiles, e.split.as_str(), e.descriptors.join(";"));
        }
        out
    }

    pub fn rejects_csv(&self) -> String {
        let mut out = String::from("line,reason,text\n");
        for r in &self.rejects {
            let _ = writeln!(out, "{},\"{}\",\"{}\"", r.line, r.reason.replace('"', "'"), r.text.replace('"', "'"));
        }
        out
    }
}

/// Parses the output of [`Corpus::manifest`].
pub fn read_manifest(text: &str) -> Result<Vec<(String, Split, Vec<String>)>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| CorpusError::Format {
            line: n + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let split = Split::parse(f[1]).ok_or_else(|| bad("unknown split"))?;
        let desc = f[2].split(';').filter(|d| !d.is_empty()).map(str::to_string).collect();
        out.push((f[0].to_string(), split, desc));
    }
    Ok(out)
}

pub fn vocab_to_text(v: &AtomVocabulary) -> String {
    let join = |xs: Vec<String>| xs.join(",");
    format!(
        "elements={}\ncharges={}\nbonds={}\nmax_nodes={}\n",
        join(v.elements.iter().map(|e| e.symbol().to_string()).collect()),
        join(v.charges.iter().map(|c| c.to_string()).collect()),
        join(v.bond_orders.iter().map(|b| b.as_u8().to_string()).collect()),
        v.max_nodes
    )
}

pub fn vocab_from_text(text: &str) -> Result<AtomVocabulary, CorpusError> {
    let mut v = AtomVocabulary {
        elements: Vec::new(),
        charges: Vec::new(),
        bond_orders: Vec::new(),
        max_nodes: 0,
    };
    let mut found = 0;
    for (n, line) in text.lines().enumerate() {
        let bad = |reason: &str| CorpusError::Format {
            line: n + 1,
            reason: reason.to_string(),
        };
        let Some((k, val)) = line.split_once('=') else { continue };
        let items = || val.split(',').filter(|s| !s.is_empty());
        match k {
            "elements" => {
                v.elements = items()
                    .map(|s| s.parse::<Element>().map_err(|_| bad("unknown element")))
                    .collect::<Result<_, _>>()?
            }
            "charges" => {
                v.charges = items()
                    .map(|s| s.parse::<i8>().map_err(|_| bad("bad charge")))
                    .collect::<Result<_, _>>()?
            }
            "bonds" => {
                v.bond_orders = items()
                    .map(|s| {
                        s.parse::<u8>()
                            .ok()
                            .and_then(BondOrder::from_u8)
                            .ok_or_else(|| bad("bad bond order"))
                    })
                    .collect::<Result<_, _>>()?
            }
            "max_nodes" => v.max_nodes = val.parse().map_err(|_| bad("bad max_nodes"))?,
            _ => return Err(bad("unknown vocabulary key")),
        }
        found += 1;
    }
    if found != 4 || v.elements.is_empty() || v.max_nodes == 0 {
        return Err(CorpusError::Format {
            line: 0,
            reason: "incomplete vocabulary".into(),
        });
    }
    Ok(v)
}

pub const SHARD_HEADER: &str = "molecule\tstep\ttarget\taction";

/// Construction steps of `entries`, `block_size` molecules per shard. Each
/// row is one step: molecule index, step, flat target slot, action.
pub fn deconstruction_shards(
    entries: &[CorpusEntry],
    vocab: &AtomVocabulary,
    block_size: usize,
) -> Result<Vec<String>, crate::actions::ActionError> {
    let layout = ActionLayout::from_vocab(vocab);
    let mut shards = Vec::new();
    for (b, block) in entries.chunks(block_size.max(1)).enumerate() {
        let mut out = String::from(SHARD_HEADER);
        out.push('\n');
        for (k, e) in block.iter().enumerate() {
            let seq = construction_sequence(&e.graph, vocab)?;
            for (step, a) in seq.steps.iter().enumerate() {
                let line = write_trace(&ActionSequence::new(vec![*a]));
                let _ = writeln!(
                    out,
                    "{}\t{step}\t{}\t{}",
                    b * block_size + k,
                    layout.flat_index(a)?,
                    line.trim_end()
                );
            }
        }
        shards.push(out);
    }
    Ok(shards)
}

/// Action sequences per molecule index from shard texts, in shard order.
pub fn read_shards<'a, I>(shards: I) -> Result<Vec<(usize, ActionSequence)>, CorpusError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out: Vec<(usize, Vec<crate::actions::Action>)> = Vec::new();
    for text in shards {
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| CorpusError::Format { line: n + 1, reason };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields".into()));
            }
            let mol: usize = f[0].parse().map_err(|_| bad("bad molecule index".into()))?;
            let action = parse_trace(f[3]).map_err(|e| bad(e.to_string()))?;
            match out.last_mut() {
                Some((m, steps)) if *m == mol => steps.extend(action.steps),
                _ => out.push((mol, action.steps)),
            }
        }
    }
    Ok(out.into_iter().map(|(m, s)| (m, ActionSequence::new(s))).collect())
}

impl TrainingExample {
    /// Example from a recorded construction sequence.
    pub fn from_actions(
        smiles: &str,
        seq: &ActionSequence,
        vocab: &AtomVocabulary,
    ) -> Result<Self, crate::pretrain::PretrainError> {
        let mut states = Vec::with_capacity(seq.len());
        let mut g = MolecularGraph::new();
        for a in &seq.steps {
            states.push(g.clone());
            crate::actions::apply_in_place(&mut g, a, vocab)
                .map_err(|e| crate::actions::ActionError::InvalidGraph(format!("replay failed: {e}")))?;
        }
        Self::from_steps(smiles.to_string(), states, &seq.steps, vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_rejects() {
        let c = Corpus::ingest("CCO\tsweet\nOCC\tsweet;x\nC1CC\nC(C)(C)(C)(C)C\n\n# note\nC.C\n", None).unwrap();
        assert_eq!(c.entries.len(), 1);
        assert_eq!(c.duplicates, 1);
        assert_eq!(c.entries[0].descriptors, vec!["sweet"]);
        let lines: Vec<usize> = c.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 7]);
        assert!(c.rejects_csv().lines().nth(1).unwrap().starts_with("3,"));
        assert!(Corpus::ingest("xyz\n", None).is_err());
        let capped = Corpus::ingest("CCO\nCCCCCC\n", Some(4)).unwrap();
        assert_eq!(capped.entries.len(), 1);
        assert_eq!(capped.vocab.max_nodes, 4);
    }

    #[test]
    fn toy_corpus_splits() {
        let c = Corpus::ingest(crate::data::TOY_FLAVOR_CORPUS, None).unwrap();
        assert_eq!(c.entries.len(), 50);
        assert!(c.rejects.is_empty());
        let train = c.split(Split::Train).count();
        assert!(train >= 30, "{train}");
        let again = Corpus::ingest(crate::data::TOY_FLAVOR_CORPUS, None).unwrap();
        assert_eq!(c, again);
        let m = read_manifest(&c.manifest()).unwrap();
        assert_eq!(m.len(), 50);
        assert!(m.iter().zip(&c.entries).all(|(r, e)| r.0 == e.smiles && r.1 == e.split && r.2 == e.descriptors));
        let single = Corpus::ingest("CC(=O)OCC\n", None).unwrap();
        assert_eq!(single.entries[0].split, Split::Train);
    }

    #[test]
    fn vocab_and_shards_round_trip() {
        let c = Corpus::ingest(crate::data::TOY_FLAVOR_CORPUS, None).unwrap();
        assert_eq!(vocab_from_text(&vocab_to_text(&c.vocab)).unwrap(), c.vocab);
        assert!(vocab_from_text("elements=C\n").is_err());
        let shards = deconstruction_shards(&c.entries, &c.vocab, 16).unwrap();
        assert_eq!(shards.len(), 4);
        let seqs = read_shards(shards.iter().map(String::as_str)).unwrap();
        assert_eq!(seqs.len(), 50);
        for (i, seq) in &seqs {
            let e = &c.entries[*i];
            let from_shard = TrainingExample::from_actions(&e.smiles, seq, &c.vocab).unwrap();
            let direct = TrainingExample::new(&e.graph, &c.vocab).unwrap();
            assert_eq!(from_shard, direct);
        }
    }
}
