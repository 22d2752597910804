//! Agents with ellipsoidal decision regions.
//!
//! An agent values its asset at
//! `sigmoid(scale * (1 - sum_j w_j (x_j - h_j)^2) + sensitivity * (p - p_ref) + bias)`
//! and buys one unit whenever the relative margin of that estimate over the
//! unit trade cost reaches the threshold `tau`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::lmsr::{spot_prices, trade_cost, AssetSide, Liquidity, MarketState};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams<S> {
    pub center: Vec<S>,
    /// Inverse squared axial radii. A zero weight turns the ellipsoid into a
    /// cylinder along that axis.
    pub axis_weights: Vec<S>,
    pub bias: S,
    pub scale: S,
    pub price_sensitivity: S,
    /// Price of the agent's asset when the market opened.
    pub ref_price: S,
    pub side: AssetSide,
}

impl<S: Scalar> AgentParams<S> {
    /// Spherical agent of radius `radius` with no bias or price feedback.
    pub fn sphere(center: Vec<S>, radius: S, scale: S, side: AssetSide) -> Self {
        let w = (radius * radius).recip();
        let axis_weights = vec![w; center.len()];
        Self {
            center,
            axis_weights,
            bias: S::zero(),
            scale,
            price_sensitivity: S::zero(),
            ref_price: S::lit(0.5),
            side,
        }
    }

    #[must_use]
    pub fn with_price_sensitivity(mut self, w: S) -> Self {
        self.price_sensitivity = w;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis_weights.len() != self.center.len() {
            return Err(Error::InvalidParameter(format!(
                "agent has {} axis weights for a {}-dimensional center",
                self.axis_weights.len(),
                self.center.len()
            )));
        }
        if self
            .axis_weights
            .iter()
            .any(|w| !(*w >= S::zero()) || !w.is_finite())
        {
            return Err(Error::InvalidParameter(
                "axis weights must be finite and nonnegative".into(),
            ));
        }
        if !(self.scale > S::zero()) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.ref_price > S::zero() && self.ref_price < S::one()) {
            return Err(Error::InvalidParameter(format!(
                "reference price must lie in (0, 1), got {}",
                self.ref_price
            )));
        }
        Ok(())
    }

    /// Weighted squared distance `sum_j w_j (x_j - h_j)^2`.
    pub fn mahalanobis_sq(&self, x: &[S]) -> Result<S> {
        if x.len() != self.center.len() {
            return Err(Error::InvalidInput(format!(
                "input has dimension {} but agent center has dimension {}",
                x.len(),
                self.center.len()
            )));
        }
        Ok(self.mahalanobis_sq_unchecked(x))
    }

    #[inline]
    pub(crate) fn mahalanobis_sq_unchecked(&self, x: &[S]) -> S {
        self.center
            .iter()
            .zip(&self.axis_weights)
            .zip(x)
            .fold(S::zero(), |acc, ((h, w), xi)| {
                let d = *xi - *h;
                acc + *w * d * d
            })
    }

    /// Radius implied by the first axis weight; exact for spherical agents.
    pub fn radius(&self) -> S {
        self.axis_weights
            .first()
            .map_or(S::infinity(), |w| w.sqrt().recip())
    }

    pub fn radii(&self) -> Vec<S> {
        self.axis_weights.iter().map(|w| w.sqrt().recip()).collect()
    }

    /// Logit of the estimate, split into the input-dependent constant and the
    /// price-dependent slope: `logit = offset + price_sensitivity * p`.
    pub(crate) fn logit_offset(&self, x: &[S]) -> S {
        self.scale * (S::one() - self.mahalanobis_sq_unchecked(x)) + self.bias
            - self.price_sensitivity * self.ref_price
    }
}

/// Agent's private valuation of its asset at input `x` and current price of
/// that asset.
pub fn estimate<S: Scalar>(params: &AgentParams<S>, x: &[S], current_price: S) -> Result<S> {
    let d2 = params.mahalanobis_sq(x)?;
    let z = params.scale * (S::one() - d2)
        + params.price_sensitivity * (current_price - params.ref_price)
        + params.bias;
    Ok(sigmoid(z))
}

/// Mutable per-run state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<S> {
    pub budget: S,
    pub holdings: u64,
    pub total_spent: S,
    pub participated: bool,
}

impl<S: Scalar> AgentState<S> {
    pub fn with_budget(budget: S) -> Self {
        Self {
            budget,
            holdings: 0,
            total_spent: S::zero(),
            participated: false,
        }
    }

    /// Records a unit purchase at `cost`.
    pub fn record_purchase(&mut self, cost: S) {
        self.budget = self.budget - cost;
        self.holdings += 1;
        self.total_spent = self.total_spent + cost;
        self.participated = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision<S> {
    Buy { cost: S },
    Pass,
}

impl<S> Decision<S> {
    pub fn is_buy(&self) -> bool {
        matches!(self, Decision::Buy { .. })
    }
}

/// The purchase rule on already-evaluated quantities: buy iff
/// `(estimate - cost) / cost >= tau` and the budget covers the cost.
#[inline]
pub fn purchase_rule<S: Scalar>(estimate: S, cost: S, budget: S, tau: S) -> Decision<S> {
    if margin_clears(estimate, cost, tau) && budget >= cost {
        Decision::Buy { cost }
    } else {
        Decision::Pass
    }
}

#[inline]
pub(crate) fn margin_clears<S: Scalar>(estimate: S, cost: S, tau: S) -> bool {
    cost > S::zero() && (estimate - cost) / cost >= tau
}

pub fn decide<S: Scalar>(
    params: &AgentParams<S>,
    state: &AgentState<S>,
    x: &[S],
    market: MarketState,
    beta: Liquidity<S>,
    tau: S,
) -> Result<Decision<S>> {
    let price = spot_prices(market, beta).of(params.side);
    let pi = estimate(params, x, price)?;
    let cost = trade_cost(market, params.side, 1, beta);
    Ok(purchase_rule(pi, cost, state.budget, tau))
}

/// Whether `x` lies in the agent's current decision set, ignoring budget.
pub fn in_region<S: Scalar>(
    params: &AgentParams<S>,
    x: &[S],
    market: MarketState,
    beta: Liquidity<S>,
    tau: S,
) -> Result<bool> {
    let price = spot_prices(market, beta).of(params.side);
    let pi = estimate(params, x, price)?;
    let cost = trade_cost(market, params.side, 1, beta);
    Ok(margin_clears(pi, cost, tau))
}

/// An agent as stored on disk: parameters plus the budget it starts each
/// market with.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredAgent<S> {
    pub params: AgentParams<S>,
    pub budget: S,
}

pub const POPULATION_MAGIC: &str = "synmarket-population";
pub const POPULATION_VERSION: u32 = 1;

/// Writes agents as a versioned whitespace-separated text record, one agent
/// per line: side, center, axis weights, bias, scale, price sensitivity,
/// reference price, budget.
pub fn write_population<S: Scalar, W: Write>(mut out: W, agents: &[StoredAgent<S>]) -> Result<()> {
    let dim = agents.first().map_or(0, |a| a.params.dim());
    let io = |e| Error::io("writing population", e);
    writeln!(out, "{POPULATION_MAGIC} v{POPULATION_VERSION}").map_err(io)?;
    writeln!(out, "dim {dim} agents {}", agents.len()).map_err(io)?;
    for a in agents {
        let p = &a.params;
        if p.dim() != dim {
            return Err(Error::InvalidInput(
                "population mixes agent dimensions".into(),
            ));
        }
        let mut line = String::new();
        line.push_str(&p.side.label().to_string());
        for v in p.center.iter().chain(&p.axis_weights) {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        for v in [p.bias, p.scale, p.price_sensitivity, p.ref_price, a.budget] {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_population<S: Scalar, R: BufRead>(input: R) -> Result<Vec<StoredAgent<S>>> {
    let bad = |line: usize, message: String| Error::Population { line, message };
    let mut lines = input.lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, l)) => Ok(Some((
                i + 1,
                l.map_err(|e| Error::io("reading population", e))?,
            ))),
            None => Ok(None),
        }
    };

    let (_, header) = next()?.ok_or_else(|| bad(1, "empty file".into()))?;
    let expected = format!("{POPULATION_MAGIC} v{POPULATION_VERSION}");
    if header.trim() != expected {
        return Err(bad(
            1,
            format!("expected header `{expected}`, found `{}`", header.trim()),
        ));
    }
    let (_, sizes) = next()?.ok_or_else(|| bad(2, "missing size line".into()))?;
    let fields: Vec<&str> = sizes.split_whitespace().collect();
    let (dim, count) = match fields.as_slice() {
        ["dim", d, "agents", n] => (
            d.parse::<usize>()
                .map_err(|e| bad(2, format!("dim: {e}")))?,
            n.parse::<usize>()
                .map_err(|e| bad(2, format!("agents: {e}")))?,
        ),
        _ => {
            return Err(bad(
                2,
                format!("expected `dim <n> agents <m>`, found `{sizes}`"),
            ))
        }
    };

    let width = 1 + 2 * dim + 5;
    let mut agents = Vec::with_capacity(count);
    while let Some((lineno, line)) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != width {
            return Err(bad(
                lineno,
                format!("expected {width} fields, found {}", tokens.len()),
            ));
        }
        let side = match tokens[0] {
            "0" => AssetSide::Asset0,
            "1" => AssetSide::Asset1,
            other => return Err(bad(lineno, format!("side must be 0 or 1, found `{other}`"))),
        };
        let mut values = Vec::with_capacity(width - 1);
        for t in &tokens[1..] {
            let v = t
                .parse::<S>()
                .map_err(|_| bad(lineno, format!("`{t}` is not a number")))?;
            values.push(v);
        }
        let params = AgentParams {
            center: values[..dim].to_vec(),
            axis_weights: values[dim..2 * dim].to_vec(),
            bias: values[2 * dim],
            scale: values[2 * dim + 1],
            price_sensitivity: values[2 * dim + 2],
            ref_price: values[2 * dim + 3],
            side,
        };
        params.validate().map_err(|e| bad(lineno, e.to_string()))?;
        agents.push(StoredAgent {
            params,
            budget: values[2 * dim + 4],
        });
    }
    if agents.len() != count {
        return Err(bad(
            2,
            format!(
                "header declares {count} agents, file holds {}",
                agents.len()
            ),
        ));
    }
    Ok(agents)
}
