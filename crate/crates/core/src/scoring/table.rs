use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::chem::MolecularGraph;
use crate::net::fmt_f64;

use super::{circular_fragments, ScoringError, FRAGMENT_RADIUS};

const TABLE_MAGIC: &str = "flavorgraph-fragments v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Centered log-counts for synthetic accessibility.
    Sa,
    /// Smoothed log-frequencies for natural-product likeness.
    Np,
}

impl TableKind {
    fn as_str(self) -> &'static str {
        match self {
            TableKind::Sa => "sa",
            TableKind::Np => "np",
        }
    }
}

/// Fragment id to contribution, plus the raw-score range that is mapped
/// onto the score's output range.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentTable {
    pub kind: TableKind,
    pub corpus: String,
    pub molecules: usize,
    /// Contribution of a fragment absent from the table.
    pub unseen: f64,
    pub raw_lo: f64,
    pub raw_hi: f64,
    pub contributions: BTreeMap<u64, f64>,
}

fn count_fragments(graphs: &[MolecularGraph]) -> Result<(BTreeMap<u64, u64>, Vec<Vec<u64>>), ScoringError> {
    let mut counts = BTreeMap::new();
    let mut per_mol = Vec::with_capacity(graphs.len());
    for g in graphs {
        let f = circular_fragments(g, FRAGMENT_RADIUS)?;
        for &id in &f {
            *counts.entry(id).or_insert(0u64) += 1;
        }
        per_mol.push(f);
    }
    Ok((counts, per_mol))
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

impl FragmentTable {
    pub fn contribution(&self, id: u64) -> f64 {
        self.contributions.get(&id).copied().unwrap_or(self.unseen)
    }

    /// SA table: `ln(count + 1)` centered on its mean over all fragment
    /// occurrences in the corpus.
    pub fn build_sa(corpus: &str, graphs: &[MolecularGraph]) -> Result<Self, ScoringError> {
        if graphs.is_empty() {
            return Err(ScoringError::EmptyCorpus);
        }
        let (counts, per_mol) = count_fragments(graphs)?;
        let occurrences: u64 = counts.values().sum();
        let center = counts.values().map(|&c| c as f64 * (c as f64 + 1.0).ln()).sum::<f64>() / occurrences as f64;
        let contributions = counts
            .iter()
            .map(|(&id, &c)| (id, (c as f64 + 1.0).ln() - center))
            .collect();
        let mut table = Self {
            kind: TableKind::Sa,
            corpus: sanitize(corpus),
            molecules: graphs.len(),
            unseen: -center,
            raw_lo: 0.0,
            raw_hi: 1.0,
            contributions,
        };
        let raws: Vec<f64> = graphs
            .iter()
            .zip(&per_mol)
            .map(|(g, f)| super::sa_raw(g, f, &table))
            .collect();
        let (lo, hi) = min_max(&raws);
        table.raw_lo = lo;
        table.raw_hi = if hi > lo { hi } else { lo + 1.0 };
        Ok(table)
    }

    /// Natural and synthetic NP tables. Each holds `ln((count + 1) / (total + 1))`;
    /// both carry the symmetric raw range `[-m, m]` where `m` is the largest
    /// absolute raw score over the two corpora.
    pub fn build_np(
        natural: (&str, &[MolecularGraph]),
        synthetic: (&str, &[MolecularGraph]),
    ) -> Result<(Self, Self), ScoringError> {
        let make = |name: &str, graphs: &[MolecularGraph]| -> Result<(Self, Vec<Vec<u64>>), ScoringError> {
            if graphs.is_empty() {
                return Err(ScoringError::EmptyCorpus);
            }
            let (counts, per_mol) = count_fragments(graphs)?;
            let total = counts.values().sum::<u64>() as f64 + 1.0;
            Ok((
                Self {
                    kind: TableKind::Np,
                    corpus: sanitize(name),
                    molecules: graphs.len(),
                    unseen: (1.0 / total).ln(),
                    raw_lo: -1.0,
                    raw_hi: 1.0,
                    contributions: counts.iter().map(|(&id, &c)| (id, ((c as f64 + 1.0) / total).ln())).collect(),
                },
                per_mol,
            ))
        };
        let (mut nat, nat_frags) = make(natural.0, natural.1)?;
        let (mut syn, syn_frags) = make(synthetic.0, synthetic.1)?;
        let m = nat_frags
            .iter()
            .chain(&syn_frags)
            .map(|f| super::np_raw(f, &nat, &syn).abs())
            .fold(0.0, f64::max);
        let m = if m > 0.0 { m } else { 1.0 };
        for t in [&mut nat, &mut syn] {
            t.raw_lo = -m;
            t.raw_hi = m;
        }
        Ok((nat, syn))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_MAGIC}");
        let _ = writeln!(out, "kind={}", self.kind.as_str());
        let _ = writeln!(out, "corpus={}", self.corpus);
        let _ = writeln!(out, "molecules={}", self.molecules);
        let _ = writeln!(out, "unseen={}", fmt_f64(self.unseen));
        let _ = writeln!(out, "raw_lo={}", fmt_f64(self.raw_lo));
        let _ = writeln!(out, "raw_hi={}", fmt_f64(self.raw_hi));
        for (id, c) in &self.contributions {
            let _ = writeln!(out, "{id:016x}\t{}", fmt_f64(*c));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScoringError> {
        let bad = |m: &str| ScoringError::TableFormat(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(TABLE_MAGIC) {
            return Err(bad("missing header"));
        }
        let mut header = |key: &str| -> Result<String, ScoringError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| ScoringError::TableFormat(format!("expected {key}=, got `{line}`")))
        };
        let kind = match header("kind")?.as_str() {
            "sa" => TableKind::Sa,
            "np" => TableKind::Np,
            k => return Err(ScoringError::TableFormat(format!("unknown kind {k}"))),
        };
        let corpus = header("corpus")?;
        let num = |s: String, what: &str| s.parse::<f64>().map_err(|_| ScoringError::TableFormat(format!("bad {what}")));
        let molecules = header("molecules")?.parse().map_err(|_| bad("bad molecules"))?;
        let unseen = num(header("unseen")?, "unseen")?;
        let raw_lo = num(header("raw_lo")?, "raw_lo")?;
        let raw_hi = num(header("raw_hi")?, "raw_hi")?;
        let mut contributions = BTreeMap::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (id, c) = line.split_once('\t').ok_or_else(|| bad("row without tab"))?;
            let id = u64::from_str_radix(id, 16).map_err(|_| bad("bad fragment id"))?;
            if contributions.insert(id, num(c.to_string(), "contribution")?).is_some() {
                return Err(bad("duplicate fragment id"));
            }
        }
        Ok(Self {
            kind,
            corpus,
            molecules,
            unseen,
            raw_lo,
            raw_hi,
            contributions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoringError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScoringError> {
        let text = std::fs::read_to_string(path).map_err(|_| ScoringError::MissingTable(path.display().to_string()))?;
        Self::from_text(&text)
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// The three tables used for rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringTables {
    pub sa: FragmentTable,
    pub natural: FragmentTable,
    pub synthetic: FragmentTable,
}

pub const SA_TABLE_FILE: &str = "sa_fragments.tsv";
pub const NATURAL_TABLE_FILE: &str = "np_natural.tsv";
pub const SYNTHETIC_TABLE_FILE: &str = "np_synthetic.tsv";

impl ScoringTables {
    /// The SA table is built from both sets together.
    pub fn build(
        natural: (&str, &[MolecularGraph]),
        synthetic: (&str, &[MolecularGraph]),
    ) -> Result<Self, ScoringError> {
        let both: Vec<MolecularGraph> = natural.1.iter().chain(synthetic.1).cloned().collect();
        let sa = FragmentTable::build_sa(&format!("{}+{}", natural.0, synthetic.0), &both)?;
        let (natural, synthetic) = FragmentTable::build_np(natural, synthetic)?;
        Ok(Self { sa, natural, synthetic })
    }

    /// Tables from the bundled toy flavor corpus and synthetic sample.
    pub fn bundled() -> Result<Self, ScoringError> {
        let parse = |text: &str| -> Result<Vec<MolecularGraph>, ScoringError> {
            text.lines()
                .filter_map(|l| l.split('\t').next())
                .map(str::trim)
                .filter(|s| !s.is_empty() && !s.starts_with('#'))
                .map(|s| crate::chem::parse_smiles(s).map_err(ScoringError::from))
                .collect()
        };
        let nat = parse(crate::data::TOY_FLAVOR_CORPUS)?;
        let syn = parse(crate::data::SYNTHETIC_SAMPLE)?;
        Self::build(("toy_flavor", &nat), ("synthetic_sample", &syn))
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), ScoringError> {
        std::fs::create_dir_all(dir)?;
        self.sa.save(&dir.join(SA_TABLE_FILE))?;
        self.natural.save(&dir.join(NATURAL_TABLE_FILE))?;
        self.synthetic.save(&dir.join(SYNTHETIC_TABLE_FILE))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, ScoringError> {
        let load = |name: &str, kind: TableKind| -> Result<FragmentTable, ScoringError> {
            let t = FragmentTable::load(&dir.join(name))?;
            if t.kind != kind {
                return Err(ScoringError::TableFormat(format!("{name} has the wrong kind")));
            }
            Ok(t)
        };
        Ok(Self {
            sa: load(SA_TABLE_FILE, TableKind::Sa)?,
            natural: load(NATURAL_TABLE_FILE, TableKind::Np)?,
            synthetic: load(SYNTHETIC_TABLE_FILE, TableKind::Np)?,
        })
    }
}
