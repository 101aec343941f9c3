use super::NetError;

/// Network and optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    /// Message-passing rounds.
    pub ggnn_depth: usize,
    /// Dense layers in each per-bond message network.
    pub message_passing_layers: usize,
    /// Node state width.
    pub width: usize,
    /// Graph embedding size.
    pub hidden_dim: usize,
    pub message_size: usize,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    pub ggnn_dropout: f64,
    pub mlp_dropout: f64,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_interval: usize,
    pub lr_rel_min: f64,
    pub lr_rel_max: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            ggnn_depth: 4,
            message_passing_layers: 3,
            width: 100,
            hidden_dim: 250,
            message_size: 100,
            mlp_depth: 4,
            mlp_hidden: 500,
            ggnn_dropout: 0.0,
            mlp_dropout: 0.0,
            lr0: 1e-4,
            lr_decay: 0.99,
            lr_decay_interval: 10,
            lr_rel_min: 1e-4,
            lr_rel_max: 1.0,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let dims = [
            ("ggnn_depth", self.ggnn_depth),
            ("message_passing_layers", self.message_passing_layers),
            ("width", self.width),
            ("hidden_dim", self.hidden_dim),
            ("message_size", self.message_size),
            ("mlp_depth", self.mlp_depth),
            ("mlp_hidden", self.mlp_hidden),
            ("lr_decay_interval", self.lr_decay_interval),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        if self.ggnn_dropout != 0.0 || self.mlp_dropout != 0.0 {
            return Err(NetError::Config("only dropout 0 is supported".into()));
        }
        let positive = [
            ("lr0", self.lr0),
            ("lr_decay", self.lr_decay),
            ("lr_rel_min", self.lr_rel_min),
            ("lr_rel_max", self.lr_rel_max),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        if self.lr_rel_min > self.lr_rel_max {
            return Err(NetError::Config("lr_rel_min exceeds lr_rel_max".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NetError::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(NetError::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    /// Multiplier applied to `lr0` at optimizer step `step` (0-based).
    pub fn relative_lr(&self, step: u64) -> f64 {
        let k = (step / self.lr_decay_interval as u64) as f64;
        self.lr_decay.powf(k).clamp(self.lr_rel_min, self.lr_rel_max)
    }

    pub fn lr(&self, step: u64) -> f64 {
        self.lr0 * self.relative_lr(step)
    }

    /// `key=value` lines, in field order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("ggnn_depth", self.ggnn_depth.to_string()),
            ("message_passing_layers", self.message_passing_layers.to_string()),
            ("width", self.width.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("message_size", self.message_size.to_string()),
            ("mlp_depth", self.mlp_depth.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("ggnn_dropout", fmt_f64(self.ggnn_dropout)),
            ("mlp_dropout", fmt_f64(self.mlp_dropout)),
            ("lr0", fmt_f64(self.lr0)),
            ("lr_decay", fmt_f64(self.lr_decay)),
            ("lr_decay_interval", self.lr_decay_interval.to_string()),
            ("lr_rel_min", fmt_f64(self.lr_rel_min)),
            ("lr_rel_max", fmt_f64(self.lr_rel_max)),
            ("weight_decay", fmt_f64(self.weight_decay)),
            ("beta1", fmt_f64(self.beta1)),
            ("beta2", fmt_f64(self.beta2)),
            ("eps", fmt_f64(self.eps)),
        ]
    }

    /// Sets one field by name. Returns `Ok(false)` for an unknown key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, NetError> {
        let bad = |e: String| NetError::Config(format!("{key}: {e}"));
        let int = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
        let float = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        match key {
            "ggnn_depth" => self.ggnn_depth = int(value)?,
            "message_passing_layers" => self.message_passing_layers = int(value)?,
            "width" => self.width = int(value)?,
            "hidden_dim" => self.hidden_dim = int(value)?,
            "message_size" => self.message_size = int(value)?,
            "mlp_depth" => self.mlp_depth = int(value)?,
            "mlp_hidden" => self.mlp_hidden = int(value)?,
            "ggnn_dropout" => self.ggnn_dropout = float(value)?,
            "mlp_dropout" => self.mlp_dropout = float(value)?,
            "lr0" => self.lr0 = float(value)?,
            "lr_decay" => self.lr_decay = float(value)?,
            "lr_decay_interval" => self.lr_decay_interval = int(value)?,
            "lr_rel_min" => self.lr_rel_min = float(value)?,
            "lr_rel_max" => self.lr_rel_max = float(value)?,
            "weight_decay" => self.weight_decay = float(value)?,
            "beta1" => self.beta1 = float(value)?,
            "beta2" => self.beta2 = float(value)?,
            "eps" => self.eps = float(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
