//! Where each command reads and writes inside the work directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn manifest(&self) -> PathBuf {
        self.corpus_dir().join("manifest.tsv")
    }

    pub fn vocab(&self) -> PathBuf {
        self.corpus_dir().join("vocab.txt")
    }

    pub fn rejects(&self) -> PathBuf {
        self.corpus_dir().join("rejects.csv")
    }

    pub fn shard(&self, i: usize) -> PathBuf {
        self.corpus_dir().join(format!("shard_{i:04}.tsv"))
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.root.join("tables")
    }

    pub fn pretrain_dir(&self) -> PathBuf {
        self.root.join("pretrain")
    }

    pub fn finetune_dir(&self) -> PathBuf {
        self.root.join("finetune")
    }

    /// Frozen pretrained model used as the fine-tuning reference.
    pub fn reference(&self) -> PathBuf {
        self.pretrain_dir().join("reference.ckpt")
    }

    /// Selected fine-tuned agent.
    pub fn agent(&self) -> PathBuf {
        self.finetune_dir().join("best.ckpt")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples.csv")
    }

    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
}

pub fn epoch_checkpoint(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(format!("epoch_{epoch:06}.ckpt"))
}

/// Reads an upstream artifact; a missing file names the path and the
/// command that produces it.
pub fn read_artifact(path: &Path, producer: &str) -> Result<String> {
    if !path.exists() {
        anyhow::bail!("missing {}; run `flavorgraph {producer}` first", path.display());
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        anyhow::bail!("missing {}; run `flavorgraph {producer}` first", path.display());
    }
    Ok(())
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
