//! Run configuration as plain `key=value` lines.

use std::path::PathBuf;

use thiserror::Error;

use crate::net::{fmt_f64, NetConfig};
use crate::rl::RLConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: `{key}` appears twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub net: NetConfig,
    pub batch_size: usize,
    /// Molecules per preprocessing shard.
    pub block_size: usize,
    /// Fine-tuning steps.
    pub epochs: u64,
    pub pretrain_epochs: u64,
    pub alpha: f64,
    pub sigma: f64,
    pub memory_capacity: usize,
    pub n_samples: usize,
    pub mask_invalid_actions: bool,
    /// Defaults to the corpus maximum when unset.
    pub max_nodes: Option<usize>,
    pub seed: u64,
    /// Evaluate every this many pretraining epochs.
    pub pretrain_eval_interval: u64,
    /// Evaluate every this many fine-tuning steps.
    pub eval_interval: u64,
    /// Molecules sampled per evaluation.
    pub eval_samples: usize,
    pub uc_jsd_bins: usize,
    /// Empty means the bundled toy corpus.
    pub corpus: PathBuf,
    /// Empty means the bundled synthetic sample.
    pub synthetic_corpus: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rl = RLConfig::default();
        Self {
            net: NetConfig::default(),
            batch_size: rl.batch_size,
            block_size: 1000,
            epochs: rl.epochs,
            pretrain_epochs: 200,
            alpha: rl.alpha,
            sigma: rl.sigma,
            memory_capacity: rl.memory_capacity,
            n_samples: 200,
            mask_invalid_actions: rl.mask_invalid_actions,
            max_nodes: None,
            seed: 0,
            pretrain_eval_interval: 50,
            eval_interval: 5,
            eval_samples: 200,
            uc_jsd_bins: 20,
            corpus: PathBuf::new(),
            synthetic_corpus: PathBuf::new(),
            work_dir: PathBuf::from("flavorgraph-run"),
        }
    }
}

fn net_key(key: &str) -> &str {
    match key {
        "ggnn_width" => "width",
        k => k,
    }
}

impl RunConfig {
    pub fn rl(&self) -> RLConfig {
        RLConfig {
            alpha: self.alpha,
            sigma: self.sigma,
            batch_size: self.batch_size,
            epochs: self.epochs,
            memory_capacity: self.memory_capacity,
            mask_invalid_actions: self.mask_invalid_actions,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.net.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.rl().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.block_size == 0 || self.n_samples == 0 || self.eval_samples == 0 || self.uc_jsd_bins == 0 {
            return Err(ConfigError::Invalid(
                "block_size, n_samples, eval_samples and uc_jsd_bins must be positive".into(),
            ));
        }
        if self.max_nodes == Some(0) {
            return Err(ConfigError::Invalid("max_nodes must be positive".into()));
        }
        Ok(())
    }

    /// Every key in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("batch_size".into(), self.batch_size.to_string()),
            ("block_size".into(), self.block_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("pretrain_epochs".into(), self.pretrain_epochs.to_string()),
        ];
        for (k, v) in self.net.to_pairs() {
            let k = if k == "width" { "ggnn_width" } else { k };
            out.push((k.to_string(), v));
        }
        out.extend([
            ("alpha".into(), fmt_f64(self.alpha)),
            ("sigma".into(), fmt_f64(self.sigma)),
            ("memory_capacity".into(), self.memory_capacity.to_string()),
            ("n_samples".into(), self.n_samples.to_string()),
            ("mask_invalid_actions".into(), self.mask_invalid_actions.to_string()),
            ("max_nodes".into(), self.max_nodes.map(|n| n.to_string()).unwrap_or_default()),
            ("seed".into(), self.seed.to_string()),
            ("pretrain_eval_interval".into(), self.pretrain_eval_interval.to_string()),
            ("eval_interval".into(), self.eval_interval.to_string()),
            ("eval_samples".into(), self.eval_samples.to_string()),
            ("uc_jsd_bins".into(), self.uc_jsd_bins.to_string()),
            ("corpus".into(), self.corpus.display().to_string()),
            ("synthetic_corpus".into(), self.synthetic_corpus.display().to_string()),
            ("work_dir".into(), self.work_dir.display().to_string()),
        ]);
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Sets one key. `Ok(false)` means the key is unknown.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| e.to_string())
        }
        match key {
            "batch_size" => self.batch_size = parse(value)?,
            "block_size" => self.block_size = parse(value)?,
            "epochs" => self.epochs = parse(value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(value)?,
            "alpha" => self.alpha = parse(value)?,
            "sigma" => self.sigma = parse(value)?,
            "memory_capacity" => self.memory_capacity = parse(value)?,
            "n_samples" => self.n_samples = parse(value)?,
            "mask_invalid_actions" => self.mask_invalid_actions = parse(value)?,
            "max_nodes" => self.max_nodes = if value.is_empty() { None } else { Some(parse(value)?) },
            "seed" => self.seed = parse(value)?,
            "pretrain_eval_interval" => self.pretrain_eval_interval = parse(value)?,
            "eval_interval" => self.eval_interval = parse(value)?,
            "eval_samples" => self.eval_samples = parse(value)?,
            "uc_jsd_bins" => self.uc_jsd_bins = parse(value)?,
            "corpus" => self.corpus = PathBuf::from(value),
            "synthetic_corpus" => self.synthetic_corpus = PathBuf::from(value),
            "work_dir" => self.work_dir = PathBuf::from(value),
            "width" => return Ok(false),
            k => return self.net.set(net_key(k), value).map_err(|e| e.to_string()),
        }
        Ok(true)
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected key=value, got `{t}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate { line, key: k.into() });
            }
            match cfg.set(k, v) {
                Ok(true) => {}
                Ok(false) => return Err(ConfigError::UnknownKey { line, key: k.into() }),
                Err(reason) => {
                    return Err(ConfigError::Syntax {
                        line,
                        reason: format!("{k}: {reason}"),
                    })
                }
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_hyperparameters() {
        let c = RunConfig::default();
        let pairs: std::collections::HashMap<String, String> = c.to_pairs().into_iter().collect();
        for (k, v) in [
            ("batch_size", "20"),
            ("block_size", "1000"),
            ("epochs", "500"),
            ("ggnn_depth", "4"),
            ("ggnn_width", "100"),
            ("hidden_dim", "250"),
            ("message_size", "100"),
            ("message_passing_layers", "3"),
            ("mlp_depth", "4"),
            ("mlp_hidden", "500"),
            ("lr0", "0.0001"),
            ("lr_decay", "0.99"),
            ("lr_decay_interval", "10"),
            ("lr_rel_min", "0.0001"),
            ("lr_rel_max", "1.0"),
            ("alpha", "0.5"),
            ("sigma", "20.0"),
            ("n_samples", "200"),
            ("weight_decay", "0.0"),
            ("ggnn_dropout", "0.0"),
            ("mlp_dropout", "0.0"),
            ("mask_invalid_actions", "false"),
        ] {
            assert_eq!(pairs[k], v, "{k}");
        }
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trip_and_errors() {
        let mut c = RunConfig::default();
        c.max_nodes = Some(12);
        c.net.lr0 = 3e-4;
        c.corpus = PathBuf::from("data/x.tsv");
        let text = c.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        assert!(matches!(
            RunConfig::parse("bogus=1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(RunConfig::parse("width=3"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(RunConfig::parse("# c\nseed"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(RunConfig::parse("seed=1\nseed=2"), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(RunConfig::parse("alpha=x"), Err(ConfigError::Syntax { .. })));
        let partial = RunConfig::parse("\n# only one\nggnn_width = 8\n").unwrap();
        assert_eq!(partial.net.width, 8);
    }
}
