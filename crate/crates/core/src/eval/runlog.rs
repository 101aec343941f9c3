use super::{EvalError, GenerationStats};
use crate::net::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// One row per training epoch.
    Pretrain,
    /// Sampled evaluation of a pretraining epoch.
    PretrainEval,
    /// One row per fine-tuning step, with that step's batch statistics.
    Finetune,
    FinetuneEval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::PretrainEval => "pretrain_eval",
            Phase::Finetune => "finetune",
            Phase::FinetuneEval => "finetune_eval",
        }
    }

    pub fn is_eval(self) -> bool {
        matches!(self, Phase::PretrainEval | Phase::FinetuneEval)
    }
}

/// One run-log line. Optional fields are blank in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLogRow {
    pub epoch: u64,
    pub phase: Phase,
    pub mean_loss: Option<f64>,
    pub stats: Option<GenerationStats>,
    pub uc_jsd: Option<f64>,
    pub mean_score: Option<f64>,
    pub memory_best: Option<f64>,
}

pub const RUN_LOG_HEADER: &str = "epoch,phase,mean_loss,n,pv,pvpt,ppt,v_av,eps_av,pu,uc_jsd,mean_score,memory_best";

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl RunLogRow {
    pub fn to_csv(&self) -> String {
        let s = self.stats;
        [
            self.epoch.to_string(),
            self.phase.as_str().to_string(),
            opt(self.mean_loss),
            s.map(|s| s.n.to_string()).unwrap_or_default(),
            opt(s.map(|s| s.pv)),
            opt(s.map(|s| s.pvpt)),
            opt(s.map(|s| s.ppt)),
            opt(s.map(|s| s.v_av)),
            opt(s.map(|s| s.eps_av)),
            opt(s.map(|s| s.pu)),
            opt(self.uc_jsd),
            opt(self.mean_score),
            opt(self.memory_best),
        ]
        .join(",")
    }

    pub fn from_csv(line: &str) -> Result<Self, EvalError> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(EvalError::RunLog(format!("expected 13 fields in `{line}`")));
        }
        let bad = |what: &str| EvalError::RunLog(format!("bad {what} in `{line}`"));
        let num = |i: usize, what: &str| -> Result<Option<f64>, EvalError> {
            if f[i].is_empty() {
                Ok(None)
            } else {
                f[i].parse().map(Some).map_err(|_| bad(what))
            }
        };
        let phase = match f[1] {
            "pretrain" => Phase::Pretrain,
            "pretrain_eval" => Phase::PretrainEval,
            "finetune" => Phase::Finetune,
            "finetune_eval" => Phase::FinetuneEval,
            _ => return Err(bad("phase")),
        };
        let stats = if f[3].is_empty() {
            None
        } else {
            let get = |i, what| num(i, what)?.ok_or_else(|| bad(what));
            Some(GenerationStats {
                n: f[3].parse().map_err(|_| bad("n"))?,
                pv: get(4, "pv")?,
                pvpt: get(5, "pvpt")?,
                ppt: get(6, "ppt")?,
                v_av: get(7, "v_av")?,
                eps_av: get(8, "eps_av")?,
                pu: get(9, "pu")?,
            })
        };
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad("epoch"))?,
            phase,
            mean_loss: num(2, "mean_loss")?,
            stats,
            uc_jsd: num(10, "uc_jsd")?,
            mean_score: num(11, "mean_score")?,
            memory_best: num(12, "memory_best")?,
        })
    }
}

pub fn write_run_log(rows: &[RunLogRow]) -> String {
    let mut out = String::from(RUN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn parse_run_log(text: &str) -> Result<Vec<RunLogRow>, EvalError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RUN_LOG_HEADER => {}
        _ => return Err(EvalError::RunLog("missing header".into())),
    }
    lines.filter(|l| !l.is_empty()).map(RunLogRow::from_csv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            RunLogRow {
                epoch: 10,
                phase: Phase::Pretrain,
                mean_loss: Some(0.1 + 0.2),
                stats: Some(GenerationStats {
                    n: 200,
                    pv: 0.99,
                    pvpt: 1.0,
                    ppt: 0.99,
                    pu: 0.9,
                    v_av: 9.35,
                    eps_av: 1.88,
                }),
                uc_jsd: Some(0.25),
                mean_score: None,
                memory_best: None,
            },
            RunLogRow {
                epoch: 11,
                phase: Phase::FinetuneEval,
                mean_loss: Some(144.0),
                stats: None,
                uc_jsd: None,
                mean_score: Some(0.5),
                memory_best: Some(0.75),
            },
        ];
        let text = write_run_log(&rows);
        assert_eq!(parse_run_log(&text).unwrap(), rows);
        assert!(parse_run_log("garbage\n").is_err());
    }
}
