//! Subcommands of the `synmarket` binary.
//!
//! Each command writes a `manifest.json` into its output directory before
//! doing any work and rewrites it with artifact checksums at the end. A
//! command returns `Ok(false)` when it ran but one of its built-in checks
//! failed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use synmarket::agents::{read_population, write_population, AgentParams};
use synmarket::datasets::{
    apply_transform, evaluate, load_csv, normalize, split, synth_clusters, write_predictions_csv,
    ClusterSpec, Dataset, EvalConfig, Evaluation, LabelMap, MinMax,
};
use synmarket::evolve::{
    build_memorizing_market, evolve, write_diagnostics_csv, GenerationStats, MutationMode,
    TrainConfig,
};
use synmarket::lmsr::{spot_prices, trade_cost, AssetSide, Liquidity, MarketState};
use synmarket::market::{
    detect_cycle, run_synchronous, write_trajectory_csv, Dynamics, MarketConfig, SYNC_CYCLE_TOL,
};
use synmarket::rng::{self, stream};

pub const OUT_DIR_ENV: &str = "SYNMARKET_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "synmarket",
    version,
    about = "Synthetic prediction markets as classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a population on a CSV dataset and score it on a held-out split.
    Train(TrainArgs),
    /// Score a saved population on the held-out split of a dataset.
    Eval(EvalArgs),
    /// Two-agent market whose price cycles forever.
    DemoOscillate(OscillateArgs),
    /// Constant-buyer limits and the cost/price gap as liquidity shrinks.
    DemoConverge(ConvergeArgs),
    /// Build and verify a market that reproduces every training label.
    Memorize(MemorizeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Headed CSV file; every column except the label must be numeric.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub label_col: String,
    /// Label values that form class 1; everything else is class 0.
    #[arg(long, value_delimiter = ',', required = true)]
    pub positive: Vec<String>,
    #[arg(long, default_value_t = 0.25)]
    pub test_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarketArgs {
    #[arg(long, default_value_t = synmarket::market::DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = synmarket::market::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = synmarket::market::DEFAULT_HORIZON)]
    pub horizon: f64,
    #[arg(long, default_value_t = synmarket::market::DEFAULT_BUDGET)]
    pub budget: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    #[arg(long, env = OUT_DIR_ENV, default_value = "synmarket-out")]
    pub out_dir: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationArg {
    Spherical,
    PerAxis,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, default_value_t = synmarket::evolve::DEFAULT_GENERATIONS)]
    pub generations: usize,
    #[arg(long, default_value_t = synmarket::evolve::DEFAULT_REPLICANTS)]
    pub replicants: usize,
    #[arg(long, default_value_t = synmarket::evolve::DEFAULT_RETAINED)]
    pub retained: usize,
    /// Markets per generation; defaults to the whole training split.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = MutationArg::Spherical)]
    pub mutation: MutationArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Population file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OscillateArgs {
    /// Market input as comma-separated coordinates.
    #[arg(long, value_delimiter = ',', default_values_t = [1.02, 0.0])]
    pub x: Vec<f64>,
    /// One run per liquidity value.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2])]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 10_000)]
    pub epochs: usize,
    #[arg(long, default_value_t = synmarket::market::DEFAULT_BETA)]
    pub beta: f64,
    /// Tolerance on the distance to the limiting price.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Liquidity grid for the gap table.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001])]
    pub gap_beta: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MemorizeArgs {
    /// Headed CSV; without it a built-in three-cluster set is used.
    #[arg(long, requires_all = ["label_col", "positive"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub positive: Option<Vec<String>>,
    /// Memorize only the training split of `--data`.
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Runs a command and reports whether its checks passed.
pub fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::DemoOscillate(a) => cmd_demo_oscillate(&a),
        Command::DemoConverge(a) => cmd_demo_converge(&a),
        Command::Memorize(a) => cmd_memorize(&a),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        ensure!(j > 0, "--jobs must be at least 1");
        builder = builder.num_threads(j);
    }
    Ok(builder
        .build()
        .context("starting worker threads")?
        .install(f))
}

#[derive(Debug, Serialize)]
struct InputFile {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: C,
    inputs: Vec<InputFile>,
    out_dir: PathBuf,
    /// File name to SHA-256 of every artifact written.
    artifacts: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Output directory plus the manifest describing it.
struct Run<C: Serialize> {
    dir: PathBuf,
    manifest: RunManifest<C>,
}

impl<C: Serialize> Run<C> {
    fn start(
        command: &'static str,
        seed: u64,
        config: C,
        inputs: &[&Path],
        out: &OutArgs,
    ) -> anyhow::Result<Self> {
        fs::create_dir_all(&out.out_dir)
            .with_context(|| format!("creating {}", out.out_dir.display()))?;
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputFile {
                    path: p.to_path_buf(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<anyhow::Result<_>>()?;
        let run = Self {
            dir: out.out_dir.clone(),
            manifest: RunManifest {
                command,
                version: env!("CARGO_PKG_VERSION"),
                seed,
                config,
                inputs,
                out_dir: out.out_dir.clone(),
                artifacts: BTreeMap::new(),
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> anyhow::Result<()> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Creates `name` in the output directory, fills it, and records its hash.
    fn artifact(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    ) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush()?;
        drop(w);
        self.manifest
            .artifacts
            .insert(name.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        self.artifact(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn finish(self) -> anyhow::Result<()> {
        self.write_manifest()
    }
}

/// Training and test partitions of a CSV, scaled by training statistics.
pub struct Prepared {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub transform: MinMax<f64>,
}

/// Loads, splits and normalizes a dataset. The split depends only on the
/// seed and the test fraction, so `eval` recovers the partition `train` used.
pub fn prepare(data: &DataArgs) -> anyhow::Result<Prepared> {
    let labels = LabelMap::positive(data.positive.iter().cloned());
    let raw: Dataset<f64> = load_csv(&data.data, &data.label_col, &labels)?;
    let (train, test) = split(
        &raw,
        data.test_frac,
        &mut rng::child(data.seed, &[stream::SPLIT]),
    )?;
    let (train, transform) = normalize(&train);
    let test = apply_transform(&test, &transform);
    Ok(Prepared {
        train,
        test,
        transform,
    })
}

impl MarketArgs {
    fn liquidity(&self) -> anyhow::Result<Liquidity<f64>> {
        Ok(Liquidity::new(self.beta)?)
    }

    fn event_config(&self) -> anyhow::Result<MarketConfig<f64>> {
        let config = MarketConfig {
            beta: self.liquidity()?,
            tau: self.tau,
            horizon: self.horizon,
            initial_budget: self.budget,
            ..MarketConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig<f64>> {
    let config = TrainConfig {
        replicants: args.replicants,
        retained: args.retained,
        generations: args.generations,
        batch_size: args.batch_size,
        tau: args.market.tau,
        beta: args.market.liquidity()?,
        initial_budget: args.market.budget,
        rng_seed: args.data.seed,
        horizon: args.market.horizon,
        mutation: match args.mutation {
            MutationArg::Spherical => MutationMode::Spherical,
            MutationArg::PerAxis => MutationMode::PerAxis,
        },
        ..TrainConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn eval_config(market: MarketConfig<f64>, train: &Dataset<f64>, seed: u64) -> EvalConfig<f64> {
    EvalConfig {
        market,
        price_window: synmarket::market::DEFAULT_PRICE_WINDOW,
        threshold: 0.5,
        fallback: train.majority(),
        seed,
    }
}

/// Result of training on one split and scoring on both partitions.
pub struct Experiment {
    pub prepared: Prepared,
    pub agents: Vec<AgentParams<f64>>,
    pub diagnostics: Vec<GenerationStats<f64>>,
    pub train_eval: Evaluation<f64>,
    pub test_eval: Evaluation<f64>,
}

pub fn run_experiment(args: &TrainArgs) -> anyhow::Result<Experiment> {
    let config = train_config(args)?;
    let prepared = prepare(&args.data)?;
    let trained = evolve(&prepared.train, &config)?;
    let agents = trained.population.agents();
    let eval = eval_config(config.market_config(0), &prepared.train, args.data.seed);
    let train_eval = evaluate(&agents, &prepared.train, &eval)?;
    let test_eval = evaluate(&agents, &prepared.test, &eval)?;
    Ok(Experiment {
        prepared,
        agents,
        diagnostics: trained.diagnostics,
        train_eval,
        test_eval,
    })
}

fn print_confusion(e: &Evaluation<f64>) {
    let c = e.metrics.confusion;
    println!("confusion (rows actual, columns predicted):");
    println!("        pred 0  pred 1");
    println!("true 0  {:>6}  {:>6}", c[0][0], c[0][1]);
    println!("true 1  {:>6}  {:>6}", c[1][0], c[1][1]);
    for (name, m) in [
        ("class 0", &e.metrics.class0),
        ("class 1", &e.metrics.class1),
    ] {
        println!(
            "{name}: precision {:.4} recall {:.4} f1 {:.4} support {}",
            m.precision, m.recall, m.f1, m.support
        );
    }
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<bool> {
    let config = train_config(args)?;
    let mut run = Run::start(
        "train",
        args.data.seed,
        (args, &config),
        &[&args.data.data],
        &args.out,
    )?;
    let exp = with_jobs(args.out.jobs, || run_experiment(args))??;

    run.artifact("population.txt", |w| {
        let stored: Vec<_> = exp
            .agents
            .iter()
            .map(|params| synmarket::agents::StoredAgent {
                params: params.clone(),
                budget: config.initial_budget,
            })
            .collect();
        Ok(write_population(w, &stored)?)
    })?;
    run.artifact("diagnostics.csv", |w| {
        Ok(write_diagnostics_csv(w, &exp.diagnostics)?)
    })?;
    run.json("transform.json", &exp.prepared.transform)?;
    run.json("train_metrics.json", &exp.train_eval.metrics)?;
    run.json("metrics.json", &exp.test_eval.metrics)?;
    run.artifact("predictions.csv", |w| {
        Ok(write_predictions_csv(w, &exp.test_eval.predictions)?)
    })?;
    run.finish()?;

    println!(
        "trained {} agents on {} rows over {} generations",
        exp.agents.len(),
        exp.prepared.train.len(),
        config.generations
    );
    println!("train accuracy {:.4}", exp.train_eval.metrics.accuracy);
    println!(
        "test accuracy {:.4} ({} of {} markets without participation)",
        exp.test_eval.metrics.accuracy,
        exp.test_eval.metrics.nonparticipating_markets,
        exp.test_eval.metrics.evaluated
    );
    print_confusion(&exp.test_eval);
    Ok(true)
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<bool> {
    let mut run = Run::start(
        "eval",
        args.data.seed,
        args,
        &[&args.model, &args.data.data],
        &args.out,
    )?;
    let file =
        File::open(&args.model).with_context(|| format!("opening {}", args.model.display()))?;
    let stored = read_population::<f64, _>(BufReader::new(file))?;
    ensure!(
        !stored.is_empty(),
        "{} holds no agents",
        args.model.display()
    );
    let prepared = prepare(&args.data)?;
    let dim = stored[0].params.dim();
    ensure!(
        dim == prepared.test.dim(),
        "the model expects {dim} features but {} has {}",
        args.data.data.display(),
        prepared.test.dim()
    );
    let agents: Vec<_> = stored.into_iter().map(|s| s.params).collect();
    let market = args.market.event_config()?;
    let config = eval_config(market, &prepared.train, args.data.seed);
    let ev = with_jobs(args.out.jobs, || evaluate(&agents, &prepared.test, &config))??;
    run.json("metrics.json", &ev.metrics)?;
    run.artifact("predictions.csv", |w| {
        Ok(write_predictions_csv(w, &ev.predictions)?)
    })?;
    run.finish()?;
    println!(
        "test accuracy {:.4} on {} rows ({} markets without participation)",
        ev.metrics.accuracy, ev.metrics.evaluated, ev.metrics.nonparticipating_markets
    );
    print_confusion(&ev);
    Ok(true)
}

pub const OSCILLATION_X: [f64; 2] = [1.02, 0.0];
pub const OSCILLATION_BETA: f64 = 0.2;

/// The two-agent market whose price never settles at its published input.
pub fn oscillation_agents() -> Vec<AgentParams<f64>> {
    vec![
        AgentParams::sphere(vec![0.0, 0.0], 1.015, 3.0, AssetSide::Asset0)
            .with_price_sensitivity(2.0),
        AgentParams::sphere(vec![2.0, 0.0], 1.015, 3.0, AssetSide::Asset1)
            .with_price_sensitivity(2.0),
    ]
}

/// Synchronous oscillation-demo run; idle epochs are kept so the series has
/// a fixed length.
pub fn oscillation_run(
    x: &[f64],
    beta: f64,
    epochs: usize,
) -> anyhow::Result<synmarket::market::MarketOutcome<f64>> {
    let config = MarketConfig {
        stop_when_idle: false,
        ..MarketConfig::unlimited(Liquidity::new(beta)?, 0.0, epochs)
    };
    Ok(run_synchronous(&oscillation_agents(), x, &config)?)
}

fn describe(d: &Dynamics<f64>) -> String {
    match d {
        Dynamics::Converged(p) => format!("converged to p1 = {p:.6}"),
        Dynamics::Cycle(k) => format!("cycle of period {k}"),
        Dynamics::Undetermined => "undetermined".to_string(),
    }
}

pub fn cmd_demo_oscillate(args: &OscillateArgs) -> anyhow::Result<bool> {
    ensure!(
        args.x.len() == 2,
        "--x needs two coordinates, got {}",
        args.x.len()
    );
    ensure!(!args.beta.is_empty(), "--beta needs at least one value");
    let mut run = Run::start("demo-oscillate", 0, args, &[], &args.out)?;
    let mut ok = true;
    let mut summary = Vec::new();
    for (k, &beta) in args.beta.iter().enumerate() {
        let out = oscillation_run(&args.x, beta, args.epochs)?;
        let dynamics = detect_cycle(&out.p1_series(), SYNC_CYCLE_TOL);
        run.artifact(&format!("trajectory_{k}.csv"), |w| {
            Ok(write_trajectory_csv(w, &out.trajectory)?)
        })?;
        println!("beta {beta}: {}", describe(&dynamics));
        let published = args.x == OSCILLATION_X && beta == OSCILLATION_BETA;
        if published && !matches!(dynamics, Dynamics::Cycle(_)) {
            eprintln!("expected a cycle at the published configuration");
            ok = false;
        }
        summary.push(serde_json::json!({
            "file": format!("trajectory_{k}.csv"),
            "beta": beta,
            "dynamics": describe(&dynamics),
            "period": match dynamics { Dynamics::Cycle(p) => Some(p), _ => None },
        }));
    }
    run.json("dynamics.json", &summary)?;
    run.finish()?;
    Ok(ok)
}

/// Constant-buyer case: `r` agents always buy Asset 1, `s` always buy Asset 0.
pub fn constant_buyers(r: usize, s: usize) -> Vec<AgentParams<f64>> {
    // at this scale the estimate rounds to one, so the purchase rule always fires
    let buyer = |side| AgentParams::sphere(vec![0.0], 1.0, 40.0, side);
    (0..r)
        .map(|_| buyer(AssetSide::Asset1))
        .chain((0..s).map(|_| buyer(AssetSide::Asset0)))
        .collect()
}

pub fn constant_buyer_limit(r: usize, s: usize) -> f64 {
    match r.cmp(&s) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 0.5,
    }
}

pub const CONVERGE_CASES: [(usize, usize); 4] = [(2, 0), (0, 2), (1, 1), (2, 1)];

/// Terminal Asset 1 price of a constant-buyer market.
pub fn constant_buyer_terminal(
    r: usize,
    s: usize,
    beta: f64,
    epochs: usize,
) -> anyhow::Result<f64> {
    let config = MarketConfig::unlimited(Liquidity::new(beta)?, 0.0, epochs);
    Ok(run_synchronous(&constant_buyers(r, s), &[0.0], &config)?
        .final_prices
        .p1)
}

/// Unit cost minus spot price of Asset 1 at `state`.
pub fn cost_gap(state: MarketState, beta: f64) -> anyhow::Result<f64> {
    let b = Liquidity::new(beta)?;
    Ok(trade_cost(state, AssetSide::Asset1, 1, b) - spot_prices(state, b).p1)
}

pub fn cmd_demo_converge(args: &ConvergeArgs) -> anyhow::Result<bool> {
    let mut run = Run::start("demo-converge", 0, args, &[], &args.out)?;
    let mut ok = true;
    let mut rows = Vec::new();
    for (r, s) in CONVERGE_CASES {
        let p = constant_buyer_terminal(r, s, args.beta, args.epochs)?;
        let limit = constant_buyer_limit(r, s);
        let pass = (p - limit).abs() < args.tolerance;
        ok &= pass;
        println!(
            "r={r} s={s}: p1 = {p:.9}, limit {limit}, {}",
            if pass { "ok" } else { "FAILED" }
        );
        rows.push((r, s, p, limit, pass));
    }
    run.artifact("convergence.csv", |w| {
        writeln!(w, "r,s,epochs,beta,terminal_p1,limit,within_tolerance")?;
        for (r, s, p, limit, pass) in &rows {
            writeln!(
                w,
                "{r},{s},{},{},{p},{limit},{}",
                args.epochs,
                args.beta,
                u8::from(*pass)
            )?;
        }
        Ok(())
    })?;

    let mut betas = args.gap_beta.clone();
    betas.sort_by(|a, b| b.total_cmp(a));
    let gaps = betas
        .iter()
        .map(|&b| Ok((b, cost_gap(MarketState::default(), b)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let shrinking = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    if !shrinking {
        eprintln!("gap did not shrink strictly with liquidity");
    }
    ok &= shrinking;
    run.artifact("gap.csv", |w| {
        writeln!(w, "beta,cost,p1,gap")?;
        for (b, g) in &gaps {
            writeln!(w, "{b},{},0.5,{g}", g + 0.5)?;
        }
        Ok(())
    })?;
    println!("gap at q=(0,0) strictly shrinking as beta decreases: {shrinking}");
    run.finish()?;
    Ok(ok)
}

/// Three alternating-label clusters on a line.
pub fn three_clusters(seed: u64) -> synmarket::Result<Dataset<f64>> {
    let spec = |x: f64, label| ClusterSpec {
        center: vec![x, 0.5],
        radius: 0.12,
        count: 20,
        label,
    };
    synth_clusters(
        &[
            spec(0.2, AssetSide::Asset0),
            spec(0.5, AssetSide::Asset1),
            spec(0.8, AssetSide::Asset0),
        ],
        &mut rng::seeded(seed),
    )
}

pub fn cmd_memorize(args: &MemorizeArgs) -> anyhow::Result<bool> {
    let inputs: Vec<&Path> = args.data.iter().map(PathBuf::as_path).collect();
    let mut run = Run::start("memorize", args.seed, args, &inputs, &args.out)?;
    let data = match &args.data {
        Some(path) => {
            let data_args = DataArgs {
                data: path.clone(),
                label_col: args.label_col.clone().unwrap_or_default(),
                positive: args.positive.clone().unwrap_or_default(),
                test_frac: args.test_frac.unwrap_or(0.25),
                seed: args.seed,
            };
            if args.test_frac.is_some() {
                prepare(&data_args)?.train
            } else {
                let labels = LabelMap::positive(data_args.positive.iter().cloned());
                normalize(&load_csv(path, &data_args.label_col, &labels)?).0
            }
        }
        None => three_clusters(args.seed)?,
    };
    if data.is_empty() {
        bail!("nothing to memorize");
    }
    let m = with_jobs(args.out.jobs, || {
        build_memorizing_market(&data.features, &data.labels, args.epsilon)
    })??;
    run.artifact("memorize.csv", |w| {
        writeln!(w, "index,label,terminal_p1,error")?;
        for (i, (p, y)) in m.terminal_prices.iter().zip(&data.labels).enumerate() {
            writeln!(
                w,
                "{i},{},{p},{}",
                y.label(),
                (p - f64::from(y.label())).abs()
            )?;
        }
        Ok(())
    })?;
    run.json(
        "summary.json",
        &serde_json::json!({
            "points": data.len(),
            "epsilon": args.epsilon,
            "alpha": m.alpha,
            "beta": m.config.beta.get(),
            "betas_tried": m.betas_tried,
            "epochs": m.config.max_epochs,
            "worst_error": m.worst_error,
        }),
    )?;
    run.finish()?;
    println!(
        "memorized {} points: beta {} after {} tries, worst |p1 - y| = {:.6} (epsilon {})",
        data.len(),
        m.config.beta.get(),
        m.betas_tried.len(),
        m.worst_error,
        args.epsilon
    );
    Ok(m.worst_error < args.epsilon)
}
