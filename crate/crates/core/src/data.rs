//! Corpora bundled with the crate.

/// Fifty small flavor molecules, `SMILES<TAB>descriptor;descriptor`.
pub const TOY_FLAVOR_CORPUS: &str = include_str!("../data/toy_flavor.tsv");

/// Synthetic reference molecules for natural-product likeness, one SMILES
/// per line.
pub const SYNTHETIC_SAMPLE: &str = include_str!("../data/synthetic_sample.smi");
