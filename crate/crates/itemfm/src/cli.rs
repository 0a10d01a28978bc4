//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use itemfm_core::als::{self, AlsConfig, ImplicitModel, InteractionMatrix};
use itemfm_core::cooc::CoocMatrix;
use itemfm_core::embed::{self, EmbeddingSet};
use itemfm_core::eval::{self, EvalReport};
use itemfm_core::fm::FeatureSpace;
use itemfm_core::ingest::{self, PositiveInteraction};
use itemfm_core::synth::{self, SyntheticConfig};
use itemfm_core::trainer;
use serde_json::json;

use crate::config::{
    ComposeArg, Config, LossArg, ModeArg, OccurrenceArg, PositiveWeightArg, WeightingArg, CONFIG_ENV,
};
use crate::error::{exit, Error, Result};
use crate::formats::{self, Encoding};
use crate::log::StageLog;

#[derive(Debug, Parser)]
#[command(name = "itemfm", version, about = "Item-item track embeddings from listening logs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ALS sweeps and evaluation; 1 is fully deterministic.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Append JSON-lines stage records here instead of stderr.
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    /// Encoding of parameter and embedding snapshots.
    #[arg(long, global = true, value_enum)]
    pub encoding: Option<Encoding>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw events to positive interactions.
    Ingest(IngestArgs),
    /// Interactions to a co-occurrence matrix.
    Cooc(CoocArgs),
    /// Train the factorization machine.
    Train(TrainArgs),
    /// Train the implicit ALS baseline and export its item vectors.
    TrainAls(AlsArgs),
    /// Binned mean percentile rank of an embedding set.
    Eval(EvalArgs),
    /// Most similar tracks by cosine.
    Query(QueryArgs),
    /// Run every stage against one configuration.
    Pipeline(PipelineArgs),
    /// Write a clustered synthetic event log, e.g. `clusters=8 users=2000`.
    GenSynthetic(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_items_per_user: Option<usize>,
    #[arg(long)]
    pub min_users_per_item: Option<usize>,
    #[arg(long)]
    pub max_interactions_per_item: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WindowFlags {
    /// Window radius in tracks.
    #[arg(long)]
    pub radius: Option<usize>,
    /// Window radius in seconds (time mode).
    #[arg(long)]
    pub radius_seconds: Option<i64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
}

#[derive(Debug, Args)]
pub struct CoocArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub window: WindowFlags,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Negatives per positive.
    #[arg(long)]
    pub neg: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub smoothing_exponent: Option<f64>,
    #[arg(long, value_enum)]
    pub positive_weight: Option<PositiveWeightArg>,
    /// Also activate the context track's side features.
    #[arg(long)]
    pub include_context_side: bool,
    /// Which latent vectors make up a final track vector.
    #[arg(long, value_enum)]
    pub compose: Option<ComposeArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cooc: PathBuf,
    #[arg(long)]
    pub side_features: Option<PathBuf>,
    /// Parameter snapshot.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the composed track embeddings.
    #[arg(long)]
    pub embeddings_out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct AlsArgs {
    #[arg(long)]
    pub interactions: PathBuf,
    /// Item embedding snapshot.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    /// Comma-separated upper-inclusive bin edges.
    #[arg(long, value_delimiter = ',')]
    pub bins: Option<Vec<u64>>,
    #[arg(long)]
    pub max_eval_tracks: Option<usize>,
    #[arg(long, value_enum)]
    pub occurrence_count: Option<OccurrenceArg>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Test interactions.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub train_cooc: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[command(flatten)]
    pub window: WindowFlags,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub track: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub side_features: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub split_timestamp: Option<i64>,
    /// Skip the ALS baseline.
    #[arg(long)]
    pub no_als: bool,
    #[command(flatten)]
    pub window: WindowFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key=value` generator settings.
    pub settings: Vec<String>,
    #[arg(long)]
    pub events_out: PathBuf,
    /// Creator of each track, usable as side features.
    #[arg(long)]
    pub side_features_out: Option<PathBuf>,
    /// Cluster of each track.
    #[arg(long)]
    pub clusters_out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Failures print one line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("itemfm: error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: Config,
    log: StageLog,
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = Config::load_or_default(cli.global.config.as_deref())?;
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.global.threads {
        cfg.threads = t;
    }
    if let Some(e) = cli.global.encoding {
        cfg.encoding = e;
    }
    if cfg.threads == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    // Fails harmlessly when a pool already exists in this process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    let mut ctx = Ctx { cfg, log: StageLog::new(cli.global.log) };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&mut ctx, a),
        Command::Cooc(a) => cmd_cooc(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::TrainAls(a) => cmd_train_als(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Query(a) => cmd_query(&ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&mut ctx, a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&ctx, a),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_window(cfg: &mut Config, f: WindowFlags) {
    set(&mut cfg.cooc.radius, f.radius);
    set(&mut cfg.cooc.radius_seconds, f.radius_seconds);
    set(&mut cfg.cooc.mode, f.mode);
    set(&mut cfg.cooc.weighting, f.weighting);
}

fn apply_train(cfg: &mut Config, f: TrainFlags) {
    let t = &mut cfg.train;
    set(&mut t.loss, f.loss);
    set(&mut t.negatives, f.neg);
    set(&mut t.dim, f.dim);
    set(&mut t.epochs, f.epochs);
    set(&mut t.lr, f.lr);
    set(&mut t.l1, f.l1);
    set(&mut t.l2, f.l2);
    set(&mut t.smoothing_exponent, f.smoothing_exponent);
    set(&mut t.positive_weight, f.positive_weight);
    set(&mut t.compose, f.compose);
    t.include_context_side |= f.include_context_side;
}

fn apply_eval(cfg: &mut Config, f: EvalFlags) {
    set(&mut cfg.eval.bins, f.bins);
    if f.max_eval_tracks.is_some() {
        cfg.eval.max_eval_tracks_per_query = f.max_eval_tracks;
    }
    set(&mut cfg.eval.occurrence_count, f.occurrence_count);
}

// ---------------------------------------------------------------- stages

fn stage_ingest(ctx: &Ctx, events: &Path, out: &Path) -> Result<Vec<PositiveInteraction>> {
    let icfg = ctx.cfg.ingest_config()?;
    let mut st = ctx.log.start("ingest", ctx.cfg.seed);
    let file = formats::read_events(events)?;
    st.input("events", file.events.len()).input("unparseable_lines", file.unparseable);
    let result = ingest::ingest(file.events, &icfg)?;
    formats::write_interactions(out, &result.interactions)?;
    let d = &result.diagnostics;
    st.output("interactions", result.interactions.len())
        .output("users", ingest::distinct_users(&result.interactions).len())
        .detail("malformed_events", d.malformed_events)
        .detail("merged_pairs", d.merged_pairs)
        .detail("positive_pairs", d.positive_pairs)
        .detail("after_floors", d.after_floors)
        .detail("after_sampling", d.after_sampling);
    st.finish()?;
    Ok(result.interactions)
}

fn stage_cooc(ctx: &Ctx, interactions: &[PositiveInteraction], out: &Path) -> Result<CoocMatrix> {
    let window = ctx.cfg.window_config()?;
    let mut st = ctx.log.start("cooc", ctx.cfg.seed);
    st.input("interactions", interactions.len());
    let m = CoocMatrix::build(interactions, &window)?;
    formats::write_cooc(out, &m)?;
    st.output("tracks", m.num_tracks()).output("entries", m.num_entries());
    st.finish()?;
    Ok(m)
}

fn feature_space(cooc: &CoocMatrix, side: Option<&Path>) -> Result<FeatureSpace> {
    Ok(match side {
        Some(p) => {
            let pairs = formats::read_side_features(p)?;
            FeatureSpace::from_pairs(cooc.vocab(), pairs.iter().map(|(t, f)| (t.as_str(), f.as_str())))
        }
        None => FeatureSpace::tracks_only(cooc.num_tracks()),
    })
}

fn stage_train(
    ctx: &Ctx,
    cooc: &CoocMatrix,
    side: Option<&Path>,
    params_out: &Path,
    emb_out: Option<&Path>,
) -> Result<EmbeddingSet> {
    let tcfg = ctx.cfg.train_config()?;
    let space = feature_space(cooc, side)?;
    let mut st = ctx.log.start("train", ctx.cfg.seed);
    st.input("tracks", cooc.num_tracks())
        .input("entries", cooc.num_entries())
        .input("side_features", space.num_side_features());
    let outcome = trainer::train(cooc, &space, &tcfg)?;
    formats::write_fm_params(params_out, &outcome.params, space.catalog_size(), space.num_side_features(), ctx.cfg.encoding)?;
    let emb = embed::compose_final_vectors(&outcome.params, &space, cooc.vocab(), ctx.cfg.train.compose.into())?;
    if let Some(p) = emb_out {
        formats::write_embeddings(p, &emb, ctx.cfg.encoding)?;
    }
    let objectives: Vec<f64> = outcome.epochs.iter().map(|e| e.mean_objective).collect();
    st.output("slots", space.num_slots())
        .output("dim", tcfg.dim)
        .detail("epoch_mean_objective", objectives);
    st.finish()?;
    Ok(emb)
}

fn fit_als(m: &InteractionMatrix, cfg: &AlsConfig, threads: usize) -> Result<(ImplicitModel, Vec<f64>)> {
    if threads <= 1 {
        let fit = als::fit(m, cfg)?;
        return Ok((fit.model, fit.objectives));
    }
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => als::choose_alpha(m)?,
    };
    let mut model = ImplicitModel::new(m.num_users(), m.num_items(), cfg.dim, alpha, cfg.lambda_user, cfg.lambda_item, cfg.seed);
    let objectives = (0..cfg.sweeps).map(|_| model.sweep_parallel(m)).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((model, objectives))
}

fn stage_als(ctx: &Ctx, interactions: &[PositiveInteraction], out: &Path) -> Result<EmbeddingSet> {
    let acfg = ctx.cfg.als_config()?;
    let mut st = ctx.log.start("train-als", ctx.cfg.seed);
    let m = InteractionMatrix::from_interactions(interactions);
    st.input("users", m.num_users()).input("items", m.num_items()).input("observed", m.num_observed());
    let (model, objectives) = fit_als(&m, &acfg, ctx.cfg.threads)?;
    if !model.is_finite() {
        return Err(Error::Other("ALS produced non-finite factors".into()));
    }
    let emb = embed::from_implicit_model(&model, m.items())?;
    formats::write_embeddings(out, &emb, ctx.cfg.encoding)?;
    st.output("items", emb.len())
        .output("dim", emb.dim())
        .detail("alpha", model.alpha())
        .detail("objective", objectives);
    st.finish()?;
    Ok(emb)
}

fn stage_eval(
    ctx: &Ctx,
    name: &'static str,
    test: &[PositiveInteraction],
    train: &CoocMatrix,
    emb: &EmbeddingSet,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let window = ctx.cfg.window_config()?;
    let ecfg = ctx.cfg.eval_config()?;
    let mut st = ctx.log.start(name, ctx.cfg.seed);
    st.input("test_interactions", test.len()).input("embedded_tracks", emb.len());
    let report = eval::evaluate(test, train, emb, &window, &ecfg)?;
    match out {
        Some(p) => formats::write_report(p, &report)?,
        None => formats::write_report_to(&mut std::io::stdout().lock(), &report).map_err(|e| Error::io("<stdout>", e))?,
    }
    let d = &report.diagnostics;
    st.output("evaluated_tracks", report.evaluated_tracks)
        .output("average_mpr", report.average_mpr)
        .detail("missing_embedding", d.missing_embedding)
        .detail("missing_context_embedding", d.missing_context_embedding)
        .detail("no_context", d.no_context)
        .detail("no_candidates", d.no_candidates);
    st.finish()?;
    Ok(report)
}

// -------------------------------------------------------------- commands

fn cmd_ingest(ctx: &mut Ctx, a: IngestArgs) -> Result<()> {
    let i = &mut ctx.cfg.ingest;
    set(&mut i.min_items_per_user, a.min_items_per_user);
    set(&mut i.min_users_per_item, a.min_users_per_item);
    set(&mut i.max_interactions_per_item, a.max_interactions_per_item);
    stage_ingest(ctx, &a.events, &a.out).map(drop)
}

fn cmd_cooc(ctx: &mut Ctx, a: CoocArgs) -> Result<()> {
    apply_window(&mut ctx.cfg, a.window);
    let interactions = formats::read_interactions(&a.interactions)?;
    stage_cooc(ctx, &interactions, &a.out).map(drop)
}

fn cmd_train(ctx: &mut Ctx, a: TrainArgs) -> Result<()> {
    apply_train(&mut ctx.cfg, a.train);
    ctx.cfg.train_config()?;
    let cooc = formats::read_cooc(&a.cooc)?;
    stage_train(ctx, &cooc, a.side_features.as_deref(), &a.out, a.embeddings_out.as_deref()).map(drop)
}

fn cmd_train_als(ctx: &mut Ctx, a: AlsArgs) -> Result<()> {
    let s = &mut ctx.cfg.als;
    set(&mut s.dim, a.dim);
    set(&mut s.sweeps, a.sweeps);
    set(&mut s.l2, a.l2);
    if a.alpha.is_some() {
        s.alpha = a.alpha;
    }
    ctx.cfg.als_config()?;
    let interactions = formats::read_interactions(&a.interactions)?;
    stage_als(ctx, &interactions, &a.out).map(drop)
}

fn cmd_eval(ctx: &mut Ctx, a: EvalArgs) -> Result<()> {
    apply_window(&mut ctx.cfg, a.window);
    apply_eval(&mut ctx.cfg, a.eval);
    ctx.cfg.window_config()?;
    ctx.cfg.eval_config()?;
    let emb = formats::read_embeddings(&a.embeddings)?;
    let test = formats::read_interactions(&a.test)?;
    let train = formats::read_cooc(&a.train_cooc)?;
    stage_eval(ctx, "eval", &test, &train, &emb, a.out.as_deref()).map(drop)
}

fn cmd_query(ctx: &Ctx, a: QueryArgs) -> Result<()> {
    let mut st = ctx.log.start("query", ctx.cfg.seed);
    let emb = formats::read_embeddings(&a.embeddings)?;
    let top = embed::top_n_similar(&a.track, a.n, &emb)?;
    let mut out = std::io::stdout().lock();
    for (i, c) in &top {
        writeln!(out, "{}\t{c:.6}", emb.vocab().id(*i)).map_err(|e| Error::io("<stdout>", e))?;
    }
    st.input("tracks", emb.len()).output("results", top.len());
    st.finish()
}

/// Split point at quantile `q` of the sorted interaction timestamps.
pub fn quantile_split(interactions: &[PositiveInteraction], q: f64) -> Option<i64> {
    let mut ts: Vec<i64> = interactions.iter().map(|i| i.first_timestamp).collect();
    ts.sort_unstable();
    let k = ((ts.len() as f64 * q) as usize).min(ts.len().checked_sub(1)?);
    Some(ts[k])
}

fn cmd_pipeline(ctx: &mut Ctx, a: PipelineArgs) -> Result<()> {
    let cfg = &mut ctx.cfg;
    if a.events.is_some() {
        cfg.pipeline.events = a.events;
    }
    if a.side_features.is_some() {
        cfg.pipeline.side_features = a.side_features;
    }
    set(&mut cfg.pipeline.out_dir, a.out_dir);
    if a.split_timestamp.is_some() {
        cfg.pipeline.split_timestamp = a.split_timestamp;
    }
    cfg.pipeline.als &= !a.no_als;
    apply_window(cfg, a.window);
    apply_train(cfg, a.train);
    apply_eval(cfg, a.eval);
    cfg.validate()?;
    let p = cfg.pipeline.clone();
    let events = p.events.ok_or_else(|| Error::Config("pipeline needs an events file (--events or [pipeline] events)".into()))?;
    std::fs::create_dir_all(&p.out_dir).map_err(|e| Error::io(&p.out_dir, e))?;
    let out = |name: &str| p.out_dir.join(name);

    let interactions = stage_ingest(ctx, &events, &out("interactions.tsv"))?;

    let mut st = ctx.log.start("split", ctx.cfg.seed);
    let split = match p.split_timestamp {
        Some(t) => t,
        None => quantile_split(&interactions, p.split_quantile)
            .ok_or_else(|| Error::Other("no interactions survived ingest".into()))?,
    };
    let (train, test) = eval::time_split(&interactions, split);
    formats::write_interactions(&out("train.tsv"), &train)?;
    formats::write_interactions(&out("test.tsv"), &test)?;
    st.input("interactions", interactions.len())
        .output("train", train.len())
        .output("test", test.len())
        .detail("split_timestamp", split);
    st.finish()?;

    let cooc = stage_cooc(ctx, &train, &out("cooc.tsv"))?;
    let item = stage_train(ctx, &cooc, p.side_features.as_deref(), &out("fm.params"), Some(&out("item.emb")))?;
    stage_eval(ctx, "eval-item", &test, &cooc, &item, Some(&out("item_report.tsv")))?;
    if p.als {
        let als_emb = stage_als(ctx, &train, &out("als.emb"))?;
        stage_eval(ctx, "eval-als", &test, &cooc, &als_emb, Some(&out("als_report.tsv")))?;
    }
    Ok(())
}

/// Applies `key=value` settings to a generator config.
pub fn parse_synthetic(settings: &[String], base: SyntheticConfig) -> Result<SyntheticConfig> {
    let mut c = base;
    for s in settings {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("generator setting {s:?} is not key=value")))?;
        let bad = || Error::Config(format!("bad value for generator setting {k}: {v:?}"));
        macro_rules! parse {
            ($field:expr) => {
                $field = v.parse().map_err(|_| bad())?
            };
        }
        match k {
            "clusters" => parse!(c.clusters),
            "tracks" | "tracks_per_cluster" => parse!(c.tracks_per_cluster),
            "users" => parse!(c.users),
            "leak" | "leak_probability" => parse!(c.leak_probability),
            "creators" | "creators_per_cluster" => parse!(c.creators_per_cluster),
            "clusters_per_user" => parse!(c.clusters_per_user),
            "walk_step" => parse!(c.walk_step),
            "fresh_fraction" => parse!(c.fresh_fraction),
            "fresh_window" => parse!(c.fresh_window),
            "min_items" | "min_items_per_user" => parse!(c.min_items_per_user),
            "max_items" | "max_items_per_user" => parse!(c.max_items_per_user),
            "popularity_exponent" => parse!(c.popularity_exponent),
            "start_time" => parse!(c.start_time),
            "time_span" => parse!(c.time_span),
            "noise_rate" => parse!(c.noise_rate),
            "seed" => parse!(c.seed),
            _ => return Err(Error::Config(format!("unknown generator setting {k:?}"))),
        }
    }
    if !(0.0..=1.0).contains(&c.leak_probability) {
        return Err(Error::Config("leak must be in [0, 1]".into()));
    }
    if c.clusters == 0 || c.tracks_per_cluster == 0 {
        return Err(Error::Config("clusters and tracks must be at least 1".into()));
    }
    Ok(c)
}

fn cmd_gen_synthetic(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let sc = parse_synthetic(&a.settings, SyntheticConfig { seed: ctx.cfg.seed, ..SyntheticConfig::default() })?;
    let mut st = ctx.log.start("gen-synthetic", sc.seed);
    let corpus = synth::generate(&sc);
    formats::write_events(&a.events_out, &corpus.events)?;
    if let Some(p) = &a.side_features_out {
        formats::write_side_features(p, &corpus.creators)?;
    }
    if let Some(p) = &a.clusters_out {
        let rows: Vec<(String, String)> = corpus.clusters.iter().map(|(t, c)| (t.clone(), c.to_string())).collect();
        formats::write_side_features(p, &rows)?;
    }
    st.output("events", corpus.events.len())
        .output("tracks", corpus.creators.len())
        .detail("settings", json!({
            "clusters": sc.clusters,
            "tracks_per_cluster": sc.tracks_per_cluster,
            "users": sc.users,
            "leak_probability": sc.leak_probability,
        }));
    st.finish()
}
