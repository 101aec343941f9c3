//! One function per subcommand. Each reads its inputs from the work
//! directory and returns a short summary for the caller to print.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _, Result};
use flavorgraph_core::chem::{parse_smiles, MolecularGraph};
use flavorgraph_core::config::RunConfig;
use flavorgraph_core::corpus::{
    deconstruction_shards, read_manifest, read_shards, vocab_from_text, vocab_to_text, Corpus, Split,
};
use flavorgraph_core::data::{SYNTHETIC_SAMPLE, TOY_FLAVOR_CORPUS};
use flavorgraph_core::eval::{histogram_csv, score_histogram, write_run_log, Phase, RunLogRow, ScoreHistogram, ScoreKind, RUN_LOG_HEADER};
use flavorgraph_core::net::{Checkpoint, ModelParams};
use flavorgraph_core::pretrain::{sample_molecules, train_epoch, SampleBatch, SampleOptions, TrainState, TrainingExample};
use flavorgraph_core::rl::{evaluate_model, finetune as run_finetune, select_best, AgentState, EvalPlan, FinetuneSetup};
use flavorgraph_core::scoring::{final_scores, score_graph, Score, ScoreConfig, ScoringTables, ZeroReason};

use crate::layout::{epoch_checkpoint, read_artifact, require, write, Layout};

/// Reference checkpoint key: fine-tuning epochs are numbered after it.
pub const LAST_PRETRAIN_EPOCH: &str = "last_pretrain_epoch";

pub const SAMPLES_HEADER: &str = "index,smiles,end,valid,unique,steps,nll";
pub const SCORES_HEADER: &str = "index,smiles,sa,np,size_reward,final_score,zeroed";

pub struct Context {
    pub cfg: RunConfig,
    pub layout: Layout,
    /// Print progress lines to stderr.
    pub verbose: bool,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        let layout = Layout::new(cfg.work_dir.clone());
        Self {
            cfg,
            layout,
            verbose: false,
        }
    }

    fn progress(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }

    fn sample_options(&self, seed: u64) -> SampleOptions {
        SampleOptions {
            seed,
            mask_invalid_actions: self.cfg.mask_invalid_actions,
        }
    }
}

/// Which checkpoint a sampling command uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelChoice {
    Reference,
    Agent,
    Path(PathBuf),
}

impl FromStr for ModelChoice {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "reference" => ModelChoice::Reference,
            "agent" => ModelChoice::Agent,
            p => ModelChoice::Path(PathBuf::from(p)),
        })
    }
}

impl ModelChoice {
    fn path(&self, layout: &Layout) -> (PathBuf, &'static str) {
        match self {
            ModelChoice::Reference => (layout.reference(), "pretrain"),
            ModelChoice::Agent => (layout.agent(), "finetune"),
            ModelChoice::Path(p) => (p.clone(), "finetune"),
        }
    }

    fn load(&self, layout: &Layout) -> Result<Checkpoint> {
        let (path, producer) = self.path(layout);
        require(&path, producer)?;
        Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))
    }
}

fn meta_u64(ck: &Checkpoint, key: &str) -> Result<u64> {
    ck.meta
        .get(key)
        .ok_or_else(|| anyhow!("checkpoint has no {key}"))?
        .parse()
        .with_context(|| format!("bad checkpoint {key}"))
}

fn checkpoint_epoch(ck: &Checkpoint) -> Result<u64> {
    meta_u64(ck, "epoch")
}

/// Preprocessed corpus as training examples per split.
pub struct LoadedCorpus {
    pub train: Vec<TrainingExample>,
    pub valid: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    pub vocab: flavorgraph_core::chem::AtomVocabulary,
}

pub fn load_corpus(layout: &Layout) -> Result<LoadedCorpus> {
    let manifest = read_manifest(&read_artifact(&layout.manifest(), "preprocess")?)?;
    let vocab = vocab_from_text(&read_artifact(&layout.vocab(), "preprocess")?)?;
    let mut shards = vec![read_artifact(&layout.shard(0), "preprocess")?];
    while layout.shard(shards.len()).exists() {
        shards.push(read_artifact(&layout.shard(shards.len()), "preprocess")?);
    }
    let mut out = LoadedCorpus {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        vocab,
    };
    for (i, seq) in read_shards(shards.iter().map(String::as_str))? {
        let (smiles, split, _) = manifest
            .get(i)
            .ok_or_else(|| anyhow!("shard molecule {i} is not in the manifest"))?;
        let ex = TrainingExample::from_actions(smiles, &seq, &out.vocab)?;
        match split {
            Split::Train => out.train.push(ex),
            Split::Valid => out.valid.push(ex),
            Split::Test => out.test.push(ex),
        }
    }
    Ok(out)
}

pub fn load_tables(layout: &Layout) -> Result<ScoringTables> {
    let dir = layout.tables_dir();
    ScoringTables::load_dir(&dir).map_err(|e| anyhow!("{e}; run `flavorgraph preprocess` first"))
}

fn read_input(path: &Path, bundled: &'static str) -> Result<String> {
    if path.as_os_str().is_empty() {
        return Ok(bundled.to_string());
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn label_of(path: &Path, bundled: &str) -> String {
    if path.as_os_str().is_empty() {
        return bundled.to_string();
    }
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub molecules: usize,
    pub rejects: usize,
    pub duplicates: usize,
    pub shards: usize,
    pub per_split: [usize; 3],
}

/// Parses, deduplicates and splits the corpus, then writes the manifest,
/// vocabulary, rejects, deconstruction shards and scoring tables.
pub fn preprocess(ctx: &Context, input: Option<&Path>) -> Result<PreprocessSummary> {
    let layout = &ctx.layout;
    let corpus_path = input.unwrap_or(&ctx.cfg.corpus);
    let text = read_input(corpus_path, TOY_FLAVOR_CORPUS)?;
    let corpus = Corpus::ingest(&text, ctx.cfg.max_nodes)?;
    let dir = layout.corpus_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    write(&layout.manifest(), &corpus.manifest())?;
    write(&layout.vocab(), &vocab_to_text(&corpus.vocab))?;
    write(&layout.rejects(), &corpus.rejects_csv())?;
    let shards = deconstruction_shards(&corpus.entries, &corpus.vocab, ctx.cfg.block_size)?;
    for (i, s) in shards.iter().enumerate() {
        write(&layout.shard(i), s)?;
    }

    let synthetic_text = read_input(&ctx.cfg.synthetic_corpus, SYNTHETIC_SAMPLE)?;
    let synthetic: Vec<MolecularGraph> = synthetic_text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.starts_with('#'))
        .map(|s| parse_smiles(s).with_context(|| format!("synthetic corpus: {s}")))
        .collect::<Result<_>>()?;
    let natural: Vec<MolecularGraph> = corpus.entries.iter().map(|e| e.graph.clone()).collect();
    let tables = ScoringTables::build(
        (&label_of(corpus_path, "toy_flavor"), &natural),
        (&label_of(&ctx.cfg.synthetic_corpus, "synthetic_sample"), &synthetic),
    )?;
    tables.save_dir(&layout.tables_dir())?;

    let count = |s| corpus.split(s).count();
    Ok(PreprocessSummary {
        molecules: corpus.entries.len(),
        rejects: corpus.rejects.len(),
        duplicates: corpus.duplicates,
        shards: shards.len(),
        per_split: [count(Split::Train), count(Split::Valid), count(Split::Test)],
    })
}

fn setup<'a>(
    ctx: &Context,
    reference: &'a ModelParams,
    tables: &'a ScoringTables,
    score: &'a ScoreConfig,
    rl: &'a flavorgraph_core::rl::RLConfig,
    corpus: &'a LoadedCorpus,
) -> FinetuneSetup<'a> {
    FinetuneSetup {
        reference,
        tables,
        score,
        rl,
        train: &corpus.train,
        valid: &corpus.valid,
        eval: EvalPlan {
            interval: ctx.cfg.eval_interval,
            samples: ctx.cfg.eval_samples,
            bins: ctx.cfg.uc_jsd_bins,
        },
        seed: ctx.cfg.seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub epochs: u64,
    pub final_loss: f64,
    pub reference_epoch: u64,
}

/// Trains from scratch, evaluating and checkpointing periodically, and
/// freezes the best evaluated epoch as the reference model.
pub fn pretrain(ctx: &Context) -> Result<PretrainSummary> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    if cfg.pretrain_epochs == 0 {
        bail!("pretrain_epochs must be positive");
    }
    let layout = &ctx.layout;
    let corpus = load_corpus(layout)?;
    let tables = load_tables(layout)?;
    let score = ScoreConfig::new(corpus.vocab.max_nodes);
    let rl = cfg.rl();
    let model = ModelParams::init(cfg.net.clone(), corpus.vocab.clone(), cfg.seed)?;
    let initial = model.clone();
    let setup = setup(ctx, &initial, &tables, &score, &rl, &corpus);
    let dir = layout.pretrain_dir();
    std::fs::create_dir_all(&dir)?;

    let mut state = TrainState::new(model, cfg.seed);
    let mut rows = Vec::new();
    let mut final_loss = f64::NAN;
    let interval = cfg.pretrain_eval_interval.max(1);
    for _ in 0..cfg.pretrain_epochs {
        let losses = train_epoch(&mut state, &corpus.train, cfg.batch_size)?;
        final_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        rows.push(RunLogRow {
            epoch: state.epoch,
            phase: Phase::Pretrain,
            mean_loss: Some(final_loss),
            stats: None,
            uc_jsd: None,
            mean_score: None,
            memory_best: None,
        });
        if state.epoch % interval == 0 || state.epoch == cfg.pretrain_epochs {
            let row = evaluate_model(&state.model, &setup, state.epoch, Phase::PretrainEval)?;
            ctx.progress(|| {
                format!(
                    "pretrain epoch {}: loss {final_loss:.4} valid {:.3} uc_jsd {:.4}",
                    state.epoch,
                    row.stats.as_ref().map_or(0.0, |s| s.pv),
                    row.uc_jsd.unwrap_or(f64::NAN)
                )
            });
            rows.push(row);
            state.to_checkpoint().save(&epoch_checkpoint(&dir, state.epoch))?;
        }
    }
    state.to_checkpoint().save(&dir.join("latest.ckpt"))?;
    write(&dir.join("run_log.csv"), &write_run_log(&rows))?;
    let reference_epoch = select_best(&rows, Phase::PretrainEval)?.epoch;
    let mut reference = Checkpoint::load(&epoch_checkpoint(&dir, reference_epoch))?;
    reference.meta.insert(LAST_PRETRAIN_EPOCH.into(), state.epoch.to_string());
    reference.save(&layout.reference())?;
    Ok(PretrainSummary {
        epochs: state.epoch,
        final_loss,
        reference_epoch,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSummary {
    pub first_epoch: u64,
    pub last_epoch: u64,
    pub best_epoch: u64,
    pub best_mean_score: f64,
}

/// Fine-tunes a copy of the reference model; epochs continue from the
/// reference's pretraining epoch.
pub fn finetune(ctx: &Context) -> Result<FinetuneSummary> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    if cfg.epochs == 0 {
        bail!("epochs must be positive");
    }
    let layout = &ctx.layout;
    let ck = ModelChoice::Reference.load(layout)?;
    let first_epoch = meta_u64(&ck, LAST_PRETRAIN_EPOCH).or_else(|_| checkpoint_epoch(&ck))?;
    let corpus = load_corpus(layout)?;
    let tables = load_tables(layout)?;
    let score = ScoreConfig::new(corpus.vocab.max_nodes);
    let rl = cfg.rl();
    let reference = ck.model;
    let setup = setup(ctx, &reference, &tables, &score, &rl, &corpus);
    let dir = layout.finetune_dir();
    std::fs::create_dir_all(&dir)?;

    let agent_checkpoint = |model: &ModelParams, epoch: u64| Checkpoint {
        model: model.clone(),
        adam: None,
        meta: BTreeMap::from([
            ("epoch".to_string(), epoch.to_string()),
            ("seed".to_string(), cfg.seed.to_string()),
        ]),
    };
    let state = AgentState::new(reference.clone(), first_epoch, cfg.memory_capacity);
    let out = run_finetune(&setup, state, cfg.epochs, |row, _| {
        ctx.progress(|| {
            format!(
                "finetune epoch {}: mean score {:.4} uc_jsd {:.4}",
                row.epoch,
                row.mean_score.unwrap_or(f64::NAN),
                row.uc_jsd.unwrap_or(f64::NAN)
            )
        });
        Ok(())
    })?;
    write(&dir.join("run_log.csv"), &write_run_log(&out.rows))?;
    agent_checkpoint(&out.state.model, out.state.epoch).save(&dir.join("latest.ckpt"))?;
    let (best_epoch, best) = out.best.ok_or_else(|| anyhow!("fine-tuning produced no evaluation"))?;
    agent_checkpoint(&best, best_epoch).save(&layout.agent())?;
    let best_mean_score = select_best(&out.rows, Phase::FinetuneEval)?.mean_score.unwrap_or(0.0);
    Ok(FinetuneSummary {
        first_epoch: first_epoch + 1,
        last_epoch: out.state.epoch,
        best_epoch,
        best_mean_score,
    })
}

fn max_nodes(layout: &Layout) -> Result<usize> {
    Ok(vocab_from_text(&read_artifact(&layout.vocab(), "preprocess")?)?.max_nodes)
}

pub fn samples_csv(batch: &SampleBatch) -> String {
    let mut out = String::from(SAMPLES_HEADER);
    out.push('\n');
    for (i, e) in batch.episodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{:?}",
            e.smiles.as_deref().unwrap_or(""),
            e.end.as_str(),
            e.valid,
            e.unique,
            e.actions.len(),
            e.nll()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub n: usize,
    pub valid: usize,
    pub unique: usize,
    pub path: PathBuf,
}

/// Samples molecules from a checkpoint and writes one row per episode.
pub fn generate(ctx: &Context, model: &ModelChoice, n: Option<usize>, out: Option<&Path>) -> Result<GenerateSummary> {
    let ck = model.load(&ctx.layout)?;
    let n = n.unwrap_or(ctx.cfg.n_samples);
    let batch = sample_molecules(&ck.model, n, ctx.sample_options(ctx.cfg.seed))?;
    let path = out.map_or_else(|| ctx.layout.samples(), Path::to_path_buf);
    write(&path, &samples_csv(&batch))?;
    Ok(GenerateSummary {
        n,
        valid: batch.episodes.iter().filter(|e| e.valid).count(),
        unique: batch.episodes.iter().filter(|e| e.unique).count(),
        path,
    })
}

/// Scored rows of a molecule file: a samples CSV keeps its episode flags,
/// a plain SMILES list treats every line as a finished molecule.
pub fn score_text(text: &str, cfg: &ScoreConfig, tables: &ScoringTables) -> Result<Vec<(String, Score)>> {
    let score_smiles = |smiles: &str, reason: ZeroReason| -> Result<(String, Score)> {
        match parse_smiles(smiles) {
            Ok(g) => Ok((smiles.to_string(), score_graph(&g, cfg, tables, reason)?)),
            Err(_) => Ok((
                smiles.to_string(),
                Score {
                    sa: None,
                    np: None,
                    size_reward: 0,
                    final_score: 0.0,
                    zeroed: if reason == ZeroReason::None { ZeroReason::Invalid } else { reason },
                },
            )),
        }
    };
    let mut out = Vec::new();
    if text.lines().next() == Some(SAMPLES_HEADER) {
        for (n, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                bail!("samples line {}: expected 7 fields", n + 1);
            }
            let reason = match (f[2], f[3], f[4]) {
                ("terminated", "true", "true") => ZeroReason::None,
                ("terminated", "true", _) => ZeroReason::Duplicate,
                ("terminated", _, _) | ("invalid_action", _, _) => ZeroReason::Invalid,
                _ => ZeroReason::Unfinished,
            };
            out.push(score_smiles(f[1], reason)?);
        }
    } else {
        let mut seen = HashSet::new();
        for line in text.lines() {
            let smi = line.split('\t').next().unwrap_or("").trim();
            if smi.is_empty() || smi.starts_with('#') {
                continue;
            }
            let canonical = parse_smiles(smi).ok().and_then(|g| flavorgraph_core::chem::write_smiles(&g).ok());
            let reason = match &canonical {
                None => ZeroReason::Invalid,
                Some(c) if !seen.insert(c.clone()) => ZeroReason::Duplicate,
                Some(_) => ZeroReason::None,
            };
            out.push(score_smiles(canonical.as_deref().unwrap_or(smi), reason)?);
        }
    }
    Ok(out)
}

pub fn scores_csv(rows: &[(String, Score)]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for (i, (smiles, s)) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{smiles},{},{},{},{:?},{}",
            opt(s.sa),
            opt(s.np),
            s.size_reward,
            s.final_score,
            s.zeroed.as_str()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub rows: usize,
    pub zeroed: usize,
    pub mean_final_score: f64,
    pub path: PathBuf,
}

pub fn score(ctx: &Context, input: Option<&Path>, out: Option<&Path>) -> Result<ScoreSummary> {
    let layout = &ctx.layout;
    let input = input.map_or_else(|| layout.samples(), Path::to_path_buf);
    let text = read_artifact(&input, "generate")?;
    let tables = load_tables(layout)?;
    let cfg = ScoreConfig::new(max_nodes(layout)?);
    let rows = score_text(&text, &cfg, &tables)?;
    let path = out.map_or_else(|| layout.scores(), Path::to_path_buf);
    write(&path, &scores_csv(&rows))?;
    let total: f64 = rows.iter().map(|(_, s)| s.final_score).sum();
    Ok(ScoreSummary {
        rows: rows.len(),
        zeroed: rows.iter().filter(|(_, s)| s.is_zeroed()).count(),
        mean_final_score: if rows.is_empty() { 0.0 } else { total / rows.len() as f64 },
        path,
    })
}

/// Generation statistics, UC-JSD and mean final score of one checkpoint,
/// written as a one-row run log.
pub fn eval(ctx: &Context, model: &ModelChoice, out: Option<&Path>) -> Result<RunLogRow> {
    let layout = &ctx.layout;
    let ck = model.load(layout)?;
    let epoch = checkpoint_epoch(&ck)?;
    let corpus = load_corpus(layout)?;
    let tables = load_tables(layout)?;
    let score = ScoreConfig::new(corpus.vocab.max_nodes);
    let rl = ctx.cfg.rl();
    let setup = setup(ctx, &ck.model, &tables, &score, &rl, &corpus);
    let phase = if *model == ModelChoice::Reference {
        Phase::PretrainEval
    } else {
        Phase::FinetuneEval
    };
    let row = evaluate_model(&ck.model, &setup, epoch, phase)?;
    let path = out.map_or_else(|| layout.eval(), Path::to_path_buf);
    write(&path, &format!("{RUN_LOG_HEADER}\n{}\n", row.to_csv()))?;
    Ok(row)
}

/// SA and NP values of the finished, valid molecules in a scores CSV.
pub fn read_score_values(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next() != Some(SCORES_HEADER) {
        bail!("not a scores file: expected header `{SCORES_HEADER}`");
    }
    let (mut sa, mut np) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!("scores line {}: expected 7 fields", n + 2);
        }
        if !matches!(f[6], "none" | "duplicate") || f[2].is_empty() {
            continue;
        }
        sa.push(f[2].parse().with_context(|| format!("scores line {}: sa", n + 2))?);
        np.push(f[3].parse().with_context(|| format!("scores line {}: np", n + 2))?);
    }
    Ok((sa, np))
}

fn sampled_values(ctx: &Context, model: &ModelChoice, tables: &ScoringTables, cfg: &ScoreConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let ck = model.load(&ctx.layout)?;
    let batch = sample_molecules(&ck.model, ctx.cfg.n_samples, ctx.sample_options(ctx.cfg.seed))?;
    let scores = final_scores(&batch, cfg, tables)?;
    let (mut sa, mut np) = (Vec::new(), Vec::new());
    for (e, s) in batch.episodes.iter().zip(&scores) {
        if let (true, Some(a), Some(b)) = (e.valid, s.sa, s.np) {
            sa.push(a);
            np.push(b);
        }
    }
    Ok((sa, np))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub histograms: Vec<ScoreHistogram>,
    pub path: PathBuf,
}

/// SA and NP histograms of labeled molecule sets. Each set is a scores
/// CSV; with no sets, `n_samples` molecules are drawn from the reference
/// (`generative`) and from the selected agent (`rl`).
pub fn report(ctx: &Context, sets: &[(String, PathBuf)], out: Option<&Path>) -> Result<ReportSummary> {
    let mut values = Vec::new();
    if sets.is_empty() {
        let layout = &ctx.layout;
        let tables = load_tables(layout)?;
        let cfg = ScoreConfig::new(max_nodes(layout)?);
        values.push(("generative".to_string(), sampled_values(ctx, &ModelChoice::Reference, &tables, &cfg)?));
        values.push(("rl".to_string(), sampled_values(ctx, &ModelChoice::Agent, &tables, &cfg)?));
    } else {
        for (label, path) in sets {
            let text = read_artifact(path, "score")?;
            values.push((label.clone(), read_score_values(&text).with_context(|| path.display().to_string())?));
        }
    }
    let mut histograms = Vec::new();
    for kind in [ScoreKind::Sa, ScoreKind::Np] {
        for (label, (sa, np)) in &values {
            let v = if kind == ScoreKind::Sa { sa } else { np };
            histograms.push(score_histogram(v, kind, label));
        }
    }
    let path = out.map_or_else(|| ctx.layout.report(), Path::to_path_buf);
    write(&path, &histogram_csv(&histograms))?;
    Ok(ReportSummary { histograms, path })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub preprocess: PreprocessSummary,
    pub pretrain: PretrainSummary,
    pub finetune: FinetuneSummary,
    pub report: ReportSummary,
}

/// preprocess, pretrain, finetune and the default report in one go.
pub fn run(ctx: &Context) -> Result<RunSummary> {
    Ok(RunSummary {
        preprocess: preprocess(ctx, None)?,
        pretrain: pretrain(ctx)?,
        finetune: finetune(ctx)?,
        report: report(ctx, &[], None)?,
    })
}
