//! Population initialization from training data, evolutionary training, and
//! the exact memorizing construction.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, StoredAgent};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::lmsr::{AssetSide, Liquidity};
use crate::market::{
    classify, final_price_estimate, run_event_driven, run_synchronous, settle, MarketConfig,
    DEFAULT_ARRIVAL_RATE, DEFAULT_BETA, DEFAULT_BUDGET, DEFAULT_HORIZON, DEFAULT_PRICE_WINDOW,
    DEFAULT_TAU,
};
use crate::rng::{self, stream};
use crate::scalar::Scalar;

pub const DEFAULT_REPLICANTS: usize = 5;
pub const DEFAULT_RETAINED: usize = 3;
pub const DEFAULT_GENERATIONS: usize = 20;
pub const DEFAULT_R0: f64 = 0.05;
pub const DEFAULT_R0_PRIME: f64 = 0.1;
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (0.01, 5.0);

/// How mutation treats the axial radii of an agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMode {
    /// One shared radius; agents stay spheres.
    #[default]
    Spherical,
    /// Each axial radius moves independently.
    PerAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Scalar + Serialize",
    deserialize = "S: Scalar + Deserialize<'de>"
))]
pub struct TrainConfig<S> {
    pub replicants: usize,
    pub retained: usize,
    pub generations: usize,
    /// Markets per generation; `None` runs every training point each time.
    pub batch_size: Option<usize>,
    pub r0: S,
    pub r0_prime: S,
    pub alpha_range: (S, S),
    pub tau: S,
    pub beta: Liquidity<S>,
    pub initial_budget: S,
    pub rng_seed: u64,
    pub horizon: f64,
    pub arrival_rate: f64,
    pub price_window: usize,
    pub threshold: S,
    pub mutation: MutationMode,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        Self {
            replicants: DEFAULT_REPLICANTS,
            retained: DEFAULT_RETAINED,
            generations: DEFAULT_GENERATIONS,
            batch_size: None,
            r0: S::lit(DEFAULT_R0),
            r0_prime: S::lit(DEFAULT_R0_PRIME),
            alpha_range: (S::lit(DEFAULT_ALPHA_RANGE.0), S::lit(DEFAULT_ALPHA_RANGE.1)),
            tau: S::lit(DEFAULT_TAU),
            beta: Liquidity::new(S::lit(DEFAULT_BETA)).expect("default beta is positive"),
            initial_budget: S::lit(DEFAULT_BUDGET),
            rng_seed: 0,
            horizon: DEFAULT_HORIZON,
            arrival_rate: DEFAULT_ARRIVAL_RATE,
            price_window: DEFAULT_PRICE_WINDOW,
            threshold: S::lit(0.5),
            mutation: MutationMode::Spherical,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.retained == 0 || self.retained >= self.replicants {
            return bad(format!(
                "need 0 < retained < replicants, got retained {} and replicants {}",
                self.retained, self.replicants
            ));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(self.r0 > S::zero() && self.r0_prime > S::zero()) {
            return bad("default radii must be positive".into());
        }
        let (lo, hi) = self.alpha_range;
        if !(lo > S::zero() && lo < hi && hi.is_finite()) {
            return bad(format!("invalid scale range ({lo}, {hi})"));
        }
        if !(self.initial_budget > S::zero()) {
            return bad("initial budget must be positive".into());
        }
        if self.price_window == 0 {
            return bad("price window must be at least 1".into());
        }
        self.market_config(0).validate()
    }

    /// Event-driven market configuration for one run.
    pub fn market_config(&self, seed: u64) -> MarketConfig<S> {
        MarketConfig {
            beta: self.beta,
            tau: self.tau,
            horizon: self.horizon,
            arrival_rate: self.arrival_rate,
            initial_budget: self.initial_budget,
            rng_seed: seed,
            ..MarketConfig::default()
        }
    }
}

/// Lower and upper radius bounds of one center group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusBounds<S> {
    pub lower: S,
    pub upper: S,
}

/// The agents sharing one training point as their center.
#[derive(Debug, Clone, PartialEq)]
pub struct Group<S> {
    /// Row of the training set the group is centered on.
    pub center_index: usize,
    pub side: AssetSide,
    pub bounds: RadiusBounds<S>,
    pub agents: Vec<AgentParams<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population<S> {
    pub groups: Vec<Group<S>>,
}

impl<S: Scalar> Population<S> {
    /// All agents, group by group. Agent ids elsewhere index into this list.
    pub fn agents(&self) -> Vec<AgentParams<S>> {
        self.groups
            .iter()
            .flat_map(|g| g.agents.iter().cloned())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.agents.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_stored(&self, budget: S) -> Vec<StoredAgent<S>> {
        self.agents()
            .into_iter()
            .map(|params| StoredAgent { params, budget })
            .collect()
    }

    fn offsets(&self) -> Vec<usize> {
        self.groups
            .iter()
            .scan(0, |acc, g| {
                let start = *acc;
                *acc += g.agents.len();
                Some(start)
            })
            .collect()
    }
}

fn distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y))
        .sqrt()
}

/// Distance from point `i` to its nearest same-class neighbor and half the
/// distance to its nearest opposite-class point. Without a same-class
/// neighbor the first value falls back to the second.
pub fn nearest_radii<S: Scalar>(
    features: &[Vec<S>],
    labels: &[AssetSide],
    i: usize,
) -> Result<(S, S)> {
    if i >= features.len() || features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "point {i} out of range for {} rows",
            features.len()
        )));
    }
    let mut same = S::infinity();
    let mut opposite = S::infinity();
    for (j, x) in features.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = distance(&features[i], x);
        if labels[j] == labels[i] {
            same = same.min(d);
        } else {
            opposite = opposite.min(d);
        }
    }
    if opposite.is_infinite() {
        return Err(Error::Dataset(
            "both classes must be present to size agents".into(),
        ));
    }
    let r2 = opposite / S::lit(2.0);
    let r1 = if same.is_infinite() { r2 } else { same };
    Ok((r1, r2))
}

/// Mutation bounds `(max(r0, min(r1, r2)), max(r0', 2 r2))`, ordered.
pub fn init_bounds<S: Scalar>(r1: S, r2: S, r0: S, r0_prime: S) -> RadiusBounds<S> {
    let p = r0.max(r1.min(r2));
    let q = r0_prime.max(S::lit(2.0) * r2);
    RadiusBounds {
        lower: p.min(q),
        upper: p.max(q),
    }
}

fn uniform<S: Scalar, R: Rng + ?Sized>(lo: S, hi: S, rng: &mut R) -> S {
    if hi > lo {
        S::lit(
            Uniform::new_inclusive(lo.as_f64(), hi.as_f64())
                .expect("ordered bounds")
                .sample(rng),
        )
    } else {
        lo
    }
}

fn normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R) -> S {
    S::lit(StandardNormal.sample(rng))
}

/// `replicants` spherical agents per training point with radius, scale, and
/// price sensitivity drawn at random.
pub fn init_population<S: Scalar, R: Rng + ?Sized>(
    data: &Dataset<S>,
    config: &TrainConfig<S>,
    rng: &mut R,
) -> Result<Population<S>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset(
            "cannot initialize agents from an empty dataset".into(),
        ));
    }
    let (lo, hi) = config.alpha_range;
    let mut groups = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let (r1, r2) = nearest_radii(&data.features, &data.labels, i)?;
        let bounds = init_bounds(r1, r2, config.r0, config.r0_prime);
        let side = data.labels[i];
        let agents = (0..config.replicants)
            .map(|_| {
                let r = uniform(bounds.lower, bounds.upper, rng);
                let alpha = uniform(lo, hi, rng);
                AgentParams::sphere(data.features[i].clone(), r, alpha, side)
                    .with_price_sensitivity(normal(rng))
            })
            .collect();
        groups.push(Group {
            center_index: i,
            side,
            bounds,
            agents,
        });
    }
    Ok(Population { groups })
}

/// Twice the root-mean-square gap between Asset 1 readouts and labels.
pub fn rmse_sigma<S: Scalar>(prices: &[S], labels: &[AssetSide]) -> Result<S> {
    Ok(S::lit(2.0) * rmse(prices, labels)?)
}

fn rmse<S: Scalar>(prices: &[S], labels: &[AssetSide]) -> Result<S> {
    if prices.is_empty() || prices.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} prices for {} labels",
            prices.len(),
            labels.len()
        )));
    }
    let sum = prices.iter().zip(labels).fold(S::zero(), |acc, (p, y)| {
        let e = S::lit(f64::from(y.label())) - *p;
        acc + e * e
    });
    Ok((sum / S::lit(prices.len() as f64)).sqrt())
}

fn step_radius<S: Scalar, R: Rng + ?Sized>(r: S, sigma: S, b: RadiusBounds<S>, rng: &mut R) -> S {
    let u = uniform(b.lower - r, b.upper - r, rng);
    (r + sigma * u).max(b.lower).min(b.upper)
}

/// Perturbs radius, price sensitivity, and scale in proportion to `sigma`.
pub fn mutate<S: Scalar, R: Rng + ?Sized>(
    agent: &AgentParams<S>,
    sigma: S,
    bounds: RadiusBounds<S>,
    config: &TrainConfig<S>,
    rng: &mut R,
) -> AgentParams<S> {
    let mut out = agent.clone();
    if sigma == S::zero() {
        return out;
    }
    match config.mutation {
        MutationMode::Spherical => {
            let r = step_radius(agent.radius(), sigma, bounds, rng);
            let w = (r * r).recip();
            out.axis_weights.iter_mut().for_each(|x| *x = w);
        }
        MutationMode::PerAxis => {
            for (w, r) in out.axis_weights.iter_mut().zip(agent.radii()) {
                let r = step_radius(r, sigma, bounds, rng);
                *w = (r * r).recip();
            }
        }
    }
    out.price_sensitivity = out.price_sensitivity + sigma * normal(rng);
    let (lo, hi) = config.alpha_range;
    out.scale = (out.scale + sigma * normal(rng)).max(lo).min(hi);
    out
}

/// Child taking scale, axis weights, and price sensitivity each from a
/// parent picked by a fair coin.
pub fn crossover<S: Scalar, R: Rng + ?Sized>(
    a: &AgentParams<S>,
    b: &AgentParams<S>,
    rng: &mut R,
) -> Result<AgentParams<S>> {
    if a.center != b.center || a.side != b.side {
        return Err(Error::InvalidInput(
            "crossover parents must share center and side".into(),
        ));
    }
    let mut child = a.clone();
    if rng.random::<bool>() {
        child.scale = b.scale;
    }
    if rng.random::<bool>() {
        child.axis_weights.clone_from(&b.axis_weights);
    }
    if rng.random::<bool>() {
        child.price_sensitivity = b.price_sensitivity;
    }
    Ok(child)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats<S> {
    /// 1-based.
    pub generation: usize,
    pub rmse: S,
    pub sigma: S,
    pub nonparticipating_markets: usize,
    pub train_accuracy: f64,
}

/// Everything observed during one generation, for inspection and testing.
#[derive(Debug, Clone)]
pub struct GenerationRecord<S> {
    pub stats: GenerationStats<S>,
    /// Training rows whose markets ran.
    pub batch: Vec<usize>,
    /// Asset 1 readout per batch row.
    pub readouts: Vec<S>,
    /// Population the generation started from.
    pub before: Population<S>,
    /// Profit per agent id of `before`, summed over the generation's markets.
    pub profits: Vec<S>,
    pub participated: Vec<bool>,
    /// Per group, the within-group indices kept, best first; `None` when the
    /// group sat out.
    pub retained: Vec<Option<Vec<usize>>>,
}

/// Stepwise driver of the evolutionary loop.
pub struct Trainer<'a, S> {
    data: &'a Dataset<S>,
    config: TrainConfig<S>,
    population: Population<S>,
    generation: usize,
    fallback: AssetSide,
}

impl<'a, S: Scalar> Trainer<'a, S> {
    pub fn new(data: &'a Dataset<S>, config: TrainConfig<S>) -> Result<Self> {
        config.validate()?;
        if let Some(b) = config.batch_size {
            if b > data.len() {
                return Err(Error::InvalidParameter(format!(
                    "batch size {b} exceeds the {} training rows",
                    data.len()
                )));
            }
        }
        let population = init_population(
            data,
            &config,
            &mut rng::child(config.rng_seed, &[stream::INIT]),
        )?;
        Ok(Self {
            data,
            fallback: data.majority(),
            config,
            population,
            generation: 0,
        })
    }

    pub fn population(&self) -> &Population<S> {
        &self.population
    }

    pub fn into_population(self) -> Population<S> {
        self.population
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    fn batch(&self) -> Vec<usize> {
        let m = self.data.len();
        let b = self.config.batch_size.unwrap_or(m);
        let n_batches = m.div_ceil(b);
        let k = self.generation % n_batches;
        (k * b..((k + 1) * b).min(m)).collect()
    }

    pub fn step(&mut self) -> Result<GenerationRecord<S>> {
        let gen = self.generation as u64;
        let batch = self.batch();
        let agents = self.population.agents();
        let data = self.data;
        let config = &self.config;

        let runs = batch
            .par_iter()
            .map(|&i| {
                let seed = rng::child_seed(config.rng_seed, &[stream::TRAIN_MARKET, gen, i as u64]);
                let out =
                    run_event_driven(&agents, &data.features[i], &config.market_config(seed))?;
                let readout = final_price_estimate(&out, config.price_window)?;
                let settlement = settle(&out, &agents, data.labels[i])?;
                Ok((readout, out.any_participation, settlement))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut profits = vec![S::zero(); agents.len()];
        let mut participated = vec![false; agents.len()];
        let mut readouts = Vec::with_capacity(batch.len());
        let mut silent = 0;
        let mut correct = 0;
        for (&i, (readout, any, settlement)) in batch.iter().zip(&runs) {
            for (k, (p, took_part)) in settlement
                .profits
                .iter()
                .zip(&settlement.participated)
                .enumerate()
            {
                profits[k] = profits[k] + *p;
                participated[k] |= *took_part;
            }
            let predicted = if *any {
                classify(*readout, config.threshold)
            } else {
                silent += 1;
                self.fallback
            };
            correct += usize::from(predicted == data.labels[i]);
            readouts.push(*readout);
        }
        let labels: Vec<AssetSide> = batch.iter().map(|&i| data.labels[i]).collect();
        let rmse = rmse(&readouts, &labels)?;
        let sigma = S::lit(2.0) * rmse;

        let before = self.population.clone();
        let offsets = before.offsets();
        let mut retained = Vec::with_capacity(before.groups.len());
        for (g, (group, start)) in self.population.groups.iter_mut().zip(offsets).enumerate() {
            let mut ranked: Vec<usize> = (0..group.agents.len())
                .filter(|k| participated[start + k])
                .collect();
            if ranked.is_empty() {
                retained.push(None);
                continue;
            }
            ranked.sort_by(|a, b| {
                profits[start + b]
                    .partial_cmp(&profits[start + a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(b))
            });
            ranked.truncate(config.retained);
            let parents: Vec<AgentParams<S>> =
                ranked.iter().map(|&k| group.agents[k].clone()).collect();
            let mut rng = rng::child(config.rng_seed, &[stream::BREED, gen, g as u64]);
            let mut next = parents.clone();
            while next.len() < config.replicants {
                let a = &parents[rng.random_range(0..parents.len())];
                let b = &parents[rng.random_range(0..parents.len())];
                let child = crossover(a, b, &mut rng)?;
                next.push(mutate(&child, sigma, group.bounds, config, &mut rng));
            }
            group.agents = next;
            retained.push(Some(ranked));
        }

        self.generation += 1;
        Ok(GenerationRecord {
            stats: GenerationStats {
                generation: self.generation,
                rmse,
                sigma,
                nonparticipating_markets: silent,
                train_accuracy: correct as f64 / batch.len() as f64,
            },
            batch,
            readouts,
            before,
            profits,
            participated,
            retained,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub population: Population<S>,
    pub diagnostics: Vec<GenerationStats<S>>,
}

/// Initializes a population on `data` and evolves it for
/// `config.generations` generations.
pub fn evolve<S: Scalar>(data: &Dataset<S>, config: &TrainConfig<S>) -> Result<TrainOutcome<S>> {
    let mut trainer = Trainer::new(data, config.clone())?;
    let mut diagnostics = Vec::with_capacity(config.generations);
    for _ in 0..config.generations {
        diagnostics.push(trainer.step()?.stats);
    }
    Ok(TrainOutcome {
        population: trainer.into_population(),
        diagnostics,
    })
}

/// CSV with columns `generation,rmse,sigma,nonparticipating_markets,train_accuracy`.
pub fn write_diagnostics_csv<S: Scalar, W: Write>(
    mut out: W,
    stats: &[GenerationStats<S>],
) -> Result<()> {
    let io = |e| Error::io("writing diagnostics", e);
    writeln!(
        out,
        "generation,rmse,sigma,nonparticipating_markets,train_accuracy"
    )
    .map_err(io)?;
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.generation, s.rmse, s.sigma, s.nonparticipating_markets, s.train_accuracy
        )
        .map_err(io)?;
    }
    Ok(())
}

/// A market that reproduces every training label to within `epsilon`.
#[derive(Debug, Clone)]
pub struct MemorizingMarket<S> {
    pub agents: Vec<AgentParams<S>>,
    /// Synchronous configuration the check passed under.
    pub config: MarketConfig<S>,
    pub epsilon: S,
    pub alpha: S,
    /// Terminal Asset 1 price per training point.
    pub terminal_prices: Vec<S>,
    pub worst_error: S,
    /// Liquidity values tried, the last one being `config.beta`.
    pub betas_tried: Vec<S>,
}

const MAX_HALVINGS: usize = 40;

/// One exclusive spherical agent per training point, with liquidity halved
/// from 1/100 until a synchronous run on every training input ends within
/// `epsilon` of its label.
pub fn build_memorizing_market<S: Scalar>(
    features: &[Vec<S>],
    labels: &[AssetSide],
    epsilon: S,
) -> Result<MemorizingMarket<S>> {
    if !(epsilon > S::zero() && epsilon < S::one()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let data = Dataset::new(features.to_vec(), labels.to_vec())?;
    if data.is_empty() {
        return Err(Error::Dataset("cannot memorize an empty dataset".into()));
    }
    let m = data.len();
    let mut radii = vec![S::infinity(); m];
    for i in 0..m {
        for j in i + 1..m {
            let d = distance(&features[i], &features[j]);
            if d == S::zero() {
                if labels[i] != labels[j] {
                    return Err(Error::ConflictingDuplicates {
                        first: i,
                        second: j,
                    });
                }
                continue;
            }
            radii[i] = radii[i].min(d);
            radii[j] = radii[j].min(d);
        }
    }
    let half = S::lit(0.5);
    let delta = epsilon / S::lit(4.0);
    let alpha = ((S::one() - delta) / delta).ln();
    let agents: Vec<AgentParams<S>> = features
        .iter()
        .zip(labels)
        .zip(&radii)
        .map(|((x, y), r)| {
            let r = if r.is_finite() { *r * half } else { S::one() };
            AgentParams::sphere(x.clone(), r, alpha, *y)
        })
        .collect();

    let mut beta = S::lit(0.01);
    let mut betas_tried = Vec::new();
    let mut worst_seen = S::infinity();
    for _ in 0..MAX_HALVINGS {
        betas_tried.push(beta);
        let epochs = (S::lit(4.0) * alpha / beta)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX - 100)
            + 100;
        let config = MarketConfig::unlimited(Liquidity::new(beta)?, S::zero(), epochs);
        let terminal = features
            .par_iter()
            .map(|x| Ok(run_synchronous(&agents, x, &config)?.final_prices.p1))
            .collect::<Result<Vec<S>>>()?;
        let worst = terminal
            .iter()
            .zip(labels)
            .map(|(p, y)| (*p - S::lit(f64::from(y.label()))).abs())
            .fold(S::zero(), S::max);
        if worst < epsilon {
            return Ok(MemorizingMarket {
                agents,
                config,
                epsilon,
                alpha,
                terminal_prices: terminal,
                worst_error: worst,
                betas_tried,
            });
        }
        worst_seen = worst;
        beta = beta * half;
    }
    Err(Error::InvalidInput(format!(
        "no liquidity down to {beta} memorized the data; worst error {worst_seen}"
    )))
}
