//! Checks the event-driven engine against a plain reference simulation that
//! keeps every clock running.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_distr::{Distribution, Exp};
use synmarket::agents::{estimate, purchase_rule, AgentParams, Decision};
use synmarket::lmsr::{spot_prices, trade_cost};
use synmarket::market::{run_event_driven, MarketConfig};
use synmarket::{rng, AssetSide, Liquidity, MarketState};

struct Tick(f64, usize);

impl PartialEq for Tick {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Tick {}
impl PartialOrd for Tick {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Tick {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Final p1 and purchase count.
fn reference(agents: &[AgentParams<f64>], x: &[f64], cfg: &MarketConfig<f64>) -> (f64, usize) {
    let mut r = rng::seeded(cfg.rng_seed);
    let clock = Exp::new(cfg.arrival_rate).unwrap();
    let mut budgets = vec![cfg.initial_budget; agents.len()];
    let mut state = MarketState::default();
    let mut buys = 0;
    let mut q: BinaryHeap<Tick> = (0..agents.len())
        .map(|i| Tick(clock.sample(&mut r), i))
        .collect();
    while let Some(Tick(t, i)) = q.pop() {
        if t > cfg.horizon {
            break;
        }
        let a = &agents[i];
        let price = spot_prices(state, cfg.beta).of(a.side);
        let pi = estimate(a, x, price).unwrap();
        let cost = trade_cost(state, a.side, 1, cfg.beta);
        if let Decision::Buy { cost } = purchase_rule(pi, cost, budgets[i], cfg.tau) {
            budgets[i] -= cost;
            state = state.bought(a.side, 1);
            buys += 1;
        }
        q.push(Tick(t + clock.sample(&mut r), i));
    }
    (spot_prices(state, cfg.beta).p1, buys)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

#[test]
fn matches_reference_in_distribution() {
    let x = [0.0, 0.0];
    // a weak Asset 1 buyer that sleeps whenever p1 is high, a strong Asset 0
    // buyer, a price-chasing Asset 1 buyer, and one agent too far to matter
    let agents = vec![
        AgentParams::sphere(vec![0.0, 0.0], 1.0, 0.3, AssetSide::Asset1),
        AgentParams::sphere(vec![0.1, 0.0], 1.0, 2.0, AssetSide::Asset0),
        AgentParams::sphere(vec![0.0, 0.2], 0.8, 1.0, AssetSide::Asset1)
            .with_price_sensitivity(-3.0),
        AgentParams::sphere(vec![5.0, 5.0], 0.5, 4.0, AssetSide::Asset1),
    ];
    let base = MarketConfig {
        beta: Liquidity::new(0.05).unwrap(),
        horizon: 60.0,
        ..MarketConfig::default()
    };
    let n = 600;
    let (mut fast_p, mut fast_k, mut ref_p, mut ref_k) = (vec![], vec![], vec![], vec![]);
    for seed in 0..n {
        let cfg = MarketConfig {
            rng_seed: seed,
            ..base.clone()
        };
        let out = run_event_driven(&agents, &x, &cfg).unwrap();
        fast_p.push(out.final_prices.p1);
        fast_k.push(out.ledger.len() as f64);
        let cfg = MarketConfig {
            rng_seed: seed + 1_000_000,
            ..base.clone()
        };
        let (p, k) = reference(&agents, &x, &cfg);
        ref_p.push(p);
        ref_k.push(k as f64);
    }
    for (a, b) in [(&fast_p, &ref_p), (&fast_k, &ref_k)] {
        let (ma, va) = mean_var(a);
        let (mb, vb) = mean_var(b);
        let se = ((va + vb) / n as f64).sqrt();
        assert!(
            (ma - mb).abs() < 4.0 * se + 1e-12,
            "means {ma} vs {mb}, se {se}"
        );
        assert!(
            va > 0.0 && (va / vb).ln().abs() < 0.4,
            "variances {va} vs {vb}"
        );
    }
}

#[test]
fn agrees_exactly_when_nobody_sleeps() {
    // strong buyers of both assets never see their ceiling below the price
    let agents = vec![
        AgentParams::sphere(vec![0.0], 1.0, 30.0, AssetSide::Asset1),
        AgentParams::sphere(vec![0.0], 1.0, 30.0, AssetSide::Asset0),
    ];
    let cfg = MarketConfig {
        horizon: 40.0,
        rng_seed: 17,
        ..MarketConfig::default()
    };
    let out = run_event_driven(&agents, &[0.0], &cfg).unwrap();
    let (p, k) = reference(&agents, &[0.0], &cfg);
    assert_eq!(out.ledger.len(), k);
    assert_eq!(out.final_prices.p1, p);
}

#[test]
fn every_ledger_entry_cleared_the_rule() {
    let agents = vec![
        AgentParams::sphere(vec![0.0, 0.0], 1.0, 1.5, AssetSide::Asset1)
            .with_price_sensitivity(1.0),
        AgentParams::sphere(vec![0.3, 0.0], 1.0, 1.5, AssetSide::Asset0)
            .with_price_sensitivity(-1.0),
    ];
    let x = [0.1, 0.0];
    let cfg = MarketConfig {
        beta: Liquidity::new(0.1).unwrap(),
        horizon: 100.0,
        rng_seed: 3,
        ..MarketConfig::default()
    };
    let out = run_event_driven(&agents, &x, &cfg).unwrap();
    assert!(!out.ledger.is_empty());
    for (e, before) in out.ledger.iter().zip(&out.trajectory) {
        let a = &agents[e.agent];
        let pi = estimate(a, &x, before.prices.of(a.side)).unwrap();
        assert_eq!(e.cost, trade_cost(before.state, a.side, 1, cfg.beta));
        assert!((pi - e.cost) / e.cost >= cfg.tau);
    }
}
