//! Generation statistics, UC-JSD and score histograms.

mod runlog;

pub use runlog::{parse_run_log, write_run_log, Phase, RunLogRow, RUN_LOG_HEADER};

use thiserror::Error;

use crate::pretrain::SampleBatch;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no episodes to evaluate")]
    EmptyBatch,
    #[error("UC-JSD needs three non-empty NLL lists")]
    EmptyList,
    #[error("non-finite NLL value")]
    NonFinite,
    #[error("run log: {0}")]
    RunLog(String),
}

/// Sample-quality fractions and averages over one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub n: usize,
    /// Valid / all.
    pub pv: f64,
    /// Valid / properly terminated.
    pub pvpt: f64,
    /// Properly terminated / all.
    pub ppt: f64,
    /// Unique / valid.
    pub pu: f64,
    /// Mean heavy-atom count of valid molecules.
    pub v_av: f64,
    /// Mean bonds-per-atom of valid molecules.
    pub eps_av: f64,
}

pub fn compute_stats(batch: &SampleBatch) -> Result<GenerationStats, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let n = batch.len();
    let mut valid = 0usize;
    let mut terminated = 0usize;
    let mut unique = 0usize;
    let mut atoms = 0.0;
    let mut ratio = 0.0;
    for e in &batch.episodes {
        if e.terminated() {
            terminated += 1;
        }
        if e.valid {
            valid += 1;
            let a = e.graph.atom_count() as f64;
            atoms += a;
            ratio += e.graph.bond_count() as f64 / a;
        }
        if e.unique {
            unique += 1;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(GenerationStats {
        n,
        pv: frac(valid, n),
        pvpt: frac(valid, terminated),
        ppt: frac(terminated, n),
        pu: frac(unique, valid),
        v_av: if valid == 0 { 0.0 } else { atoms / valid as f64 },
        eps_av: if valid == 0 { 0.0 } else { ratio / valid as f64 },
    })
}

/// Generalized Jensen-Shannon divergence (natural log, equal weights) of
/// three NLL samples binned on a shared `bins`-bin grid over their pooled
/// range.
pub fn uc_jsd(sampled: &[f64], train: &[f64], valid: &[f64], bins: usize) -> Result<f64, EvalError> {
    let lists = [sampled, train, valid];
    if lists.iter().any(|l| l.is_empty()) || bins == 0 {
        return Err(EvalError::EmptyList);
    }
    if lists.iter().flat_map(|l| l.iter()).any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let pooled = lists.iter().flat_map(|l| l.iter().copied());
    let (lo, hi) = pooled.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let hists: Vec<Vec<f64>> = lists
        .iter()
        .map(|l| {
            let mut h = vec![0.0; bins];
            for &x in l.iter() {
                let b = if hi > lo {
                    (((x - lo) / (hi - lo)) * bins as f64).floor() as usize
                } else {
                    0
                };
                h[b.min(bins - 1)] += 1.0;
            }
            let total = l.len() as f64;
            h.iter_mut().for_each(|c| *c /= total);
            h
        })
        .collect();
    // Three-term sums are taken in sorted order so the result does not
    // depend on argument order.
    let sum3 = |mut v: [f64; 3]| -> f64 {
        v.sort_by(f64::total_cmp);
        v[0] + v[1] + v[2]
    };
    let entropy = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
    let mixture: Vec<f64> = (0..bins).map(|b| sum3([hists[0][b], hists[1][b], hists[2][b]]) / 3.0).collect();
    let mean_entropy = sum3([entropy(&hists[0]), entropy(&hists[1]), entropy(&hists[2])]) / 3.0;
    Ok((entropy(&mixture) - mean_entropy).clamp(0.0, 3f64.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Sa,
    Np,
}

impl ScoreKind {
    pub fn range(self) -> (f64, f64) {
        match self {
            ScoreKind::Sa => (1.0, 10.0),
            ScoreKind::Np => (-5.0, 5.0),
        }
    }

    /// `(low, high)` of the optimal band: SA below 3, NP above 0.
    pub fn optimal_band(self) -> (f64, f64) {
        match self {
            ScoreKind::Sa => (1.0, 3.0),
            ScoreKind::Np => (0.0, 5.0),
        }
    }

    pub fn is_optimal(self, x: f64) -> bool {
        match self {
            ScoreKind::Sa => x < 3.0,
            ScoreKind::Np => x > 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Sa => "SA",
            ScoreKind::Np => "NP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub kind: ScoreKind,
    pub label: String,
    pub bins: Vec<HistogramBin>,
    pub total: usize,
    pub optimal_count: usize,
    pub optimal_percent: f64,
}

/// Unit-width bins over the kind's range; the last bin includes its upper
/// edge. Values outside the range land in the nearest end bin.
pub fn score_histogram(scores: &[f64], kind: ScoreKind, label: &str) -> ScoreHistogram {
    let (lo, hi) = kind.range();
    let n_bins = (hi - lo) as usize;
    let mut counts = vec![0usize; n_bins];
    let mut optimal = 0;
    for &s in scores {
        let b = ((s - lo).floor().max(0.0) as usize).min(n_bins - 1);
        counts[b] += 1;
        if kind.is_optimal(s) {
            optimal += 1;
        }
    }
    let total = scores.len();
    let pct = |c: usize| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
    ScoreHistogram {
        kind,
        label: label.to_string(),
        bins: counts
            .iter()
            .enumerate()
            .map(|(i, &count)| HistogramBin {
                low: lo + i as f64,
                high: lo + i as f64 + 1.0,
                count,
                percent: pct(count),
            })
            .collect(),
        total,
        optimal_count: optimal,
        optimal_percent: pct(optimal),
    }
}

pub const HISTOGRAM_HEADER: &str = "kind,label,row,bin_low,bin_high,count,percent";

/// Bin rows followed by one `optimal` row per histogram.
pub fn histogram_csv(hists: &[ScoreHistogram]) -> String {
    let mut out = String::from(HISTOGRAM_HEADER);
    out.push('\n');
    for h in hists {
        for b in &h.bins {
            out.push_str(&format!(
                "{},{},bin,{},{},{},{:.4}\n",
                h.kind.name(),
                h.label,
                b.low,
                b.high,
                b.count,
                b.percent
            ));
        }
        let (lo, hi) = h.kind.optimal_band();
        out.push_str(&format!(
            "{},{},optimal,{},{},{},{:.4}\n",
            h.kind.name(),
            h.label,
            lo,
            hi,
            h.optimal_count,
            h.optimal_percent
        ));
    }
    out
}
