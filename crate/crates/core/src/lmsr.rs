//! Logarithmic market scoring rule for a two-asset market.
//!
//! Spot prices are the softmax of `beta * q` and the cost of a purchase is the
//! difference of the log-sum-exp cost function before and after it. Both are
//! evaluated in shifted or `ln_1p`/`exp_m1` form so that neither overflows as
//! share counts grow over long runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One of the two assets traded in a binary market. `Asset1` corresponds to
/// label 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssetSide {
    Asset0,
    Asset1,
}

impl AssetSide {
    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(AssetSide::Asset0),
            1 => Ok(AssetSide::Asset1),
            other => Err(Error::InvalidInput(format!("label {other} is not binary"))),
        }
    }

    pub fn label(self) -> u8 {
        match self {
            AssetSide::Asset0 => 0,
            AssetSide::Asset1 => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            AssetSide::Asset0 => AssetSide::Asset1,
            AssetSide::Asset1 => AssetSide::Asset0,
        }
    }
}

/// Outstanding share counts. Counts only ever grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarketState {
    pub q0: u64,
    pub q1: u64,
}

impl MarketState {
    pub const fn new(q0: u64, q1: u64) -> Self {
        Self { q0, q1 }
    }

    pub fn shares(&self, side: AssetSide) -> u64 {
        match side {
            AssetSide::Asset0 => self.q0,
            AssetSide::Asset1 => self.q1,
        }
    }

    /// State after buying `dq` units of `side`.
    #[must_use]
    pub fn bought(mut self, side: AssetSide, dq: u64) -> Self {
        match side {
            AssetSide::Asset0 => self.q0 += dq,
            AssetSide::Asset1 => self.q1 += dq,
        }
        self
    }
}

/// Spot prices of the two assets; they always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair<S> {
    pub p0: S,
    pub p1: S,
}

impl<S: Scalar> PricePair<S> {
    pub fn of(&self, side: AssetSide) -> S {
        match side {
            AssetSide::Asset0 => self.p0,
            AssetSide::Asset1 => self.p1,
        }
    }
}

/// Liquidity parameter `beta > 0`. Smaller values move prices less per share.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64", bound = "S: Scalar")]
pub struct Liquidity<S>(S);

impl<S: Scalar> Liquidity<S> {
    pub fn new(beta: S) -> Result<Self> {
        if beta.is_finite() && beta > S::zero() {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidParameter(format!(
                "liquidity beta must be finite and positive, got {beta}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> S {
        self.0
    }
}

impl<S: Scalar> TryFrom<f64> for Liquidity<S> {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Liquidity::new(S::lit(v))
    }
}

impl<S: Scalar> From<Liquidity<S>> for f64 {
    fn from(l: Liquidity<S>) -> f64 {
        l.0.as_f64()
    }
}

/// Softmax prices of `state` under liquidity `beta`.
pub fn spot_prices<S: Scalar>(state: MarketState, beta: Liquidity<S>) -> PricePair<S> {
    let b = beta.get();
    let a0 = b * S::lit(state.q0 as f64);
    let a1 = b * S::lit(state.q1 as f64);
    let m = a0.max(a1);
    let e0 = (a0 - m).exp();
    let e1 = (a1 - m).exp();
    let z = e0 + e1;
    PricePair {
        p0: e0 / z,
        p1: e1 / z,
    }
}

/// Natural logarithms of the spot prices, exact even where the prices
/// themselves underflow.
pub fn log_spot_prices<S: Scalar>(state: MarketState, beta: Liquidity<S>) -> PricePair<S> {
    let b = beta.get();
    let a0 = b * S::lit(state.q0 as f64);
    let a1 = b * S::lit(state.q1 as f64);
    let lse = log_sum_exp(a0, a1);
    PricePair {
        p0: a0 - lse,
        p1: a1 - lse,
    }
}

#[inline]
fn log_sum_exp<S: Scalar>(a: S, b: S) -> S {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Cost of buying `dq` units of `side` from `state`.
///
/// With `p` the side's spot price and `d = beta * dq` the cost is
/// `ln(1 + p (e^d - 1)) / beta`. Once `e^d` would overflow it is evaluated in
/// the log domain as `ln(p e^d + (1 - p)) / beta`.
pub fn trade_cost<S: Scalar>(
    state: MarketState,
    side: AssetSide,
    dq: u64,
    beta: Liquidity<S>,
) -> S {
    if dq == 0 {
        return S::zero();
    }
    let b = beta.get();
    let d = b * S::lit(dq as f64);
    if d < S::max_value().ln() - S::one() {
        let p = spot_prices(state, beta).of(side);
        (p * d.exp_m1()).ln_1p() / b
    } else {
        let logs = log_spot_prices(state, beta);
        log_sum_exp(logs.of(side) + d, logs.of(side.other())) / b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn beta(b: f64) -> Liquidity<f64> {
        Liquidity::new(b).unwrap()
    }

    #[test]
    fn equal_counts_give_even_prices() {
        for k in [0, 1, 17, 100_000] {
            for b in [1e-3, 0.2, 3.0] {
                let p = spot_prices(MarketState::new(k, k), beta(b));
                assert_eq!(p.p0, 0.5);
                assert_eq!(p.p1, 0.5);
            }
        }
    }

    #[test]
    fn spot_price_closed_form() {
        let p = spot_prices(MarketState::new(0, 100), beta(0.01));
        assert_relative_eq!(p.p1, 0.731_058_578_630_004_9, epsilon = 1e-14);
        assert_relative_eq!(p.p0 + p.p1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn label_swap_symmetry() {
        let a = spot_prices(MarketState::new(3, 7), beta(0.2));
        let b = spot_prices(MarketState::new(7, 3), beta(0.2));
        assert_eq!(a.p0, b.p1);
    }

    #[test]
    fn rejects_bad_liquidity() {
        assert!(Liquidity::new(0.0_f64).is_err());
        assert!(Liquidity::new(-1.0_f64).is_err());
        assert!(Liquidity::new(f64::NAN).is_err());
        assert!(Liquidity::new(f64::INFINITY).is_err());
    }

    #[test]
    fn zero_purchase_is_free() {
        assert_eq!(
            trade_cost(MarketState::new(4, 9), AssetSide::Asset1, 0, beta(0.3)),
            0.0
        );
    }

    #[test]
    fn unit_cost_from_empty_market() {
        let k = trade_cost(MarketState::default(), AssetSide::Asset1, 1, beta(1.0));
        assert_relative_eq!(k, 0.620_114_506_958_277_5, epsilon = 1e-14);
    }

    #[test]
    fn split_purchase_costs_the_same() {
        let s = MarketState::new(5, 3);
        let b = beta(0.5);
        let whole = trade_cost(s, AssetSide::Asset1, 2, b);
        let split = trade_cost(s, AssetSide::Asset1, 1, b)
            + trade_cost(s.bought(AssetSide::Asset1, 1), AssetSide::Asset1, 1, b);
        assert_relative_eq!(whole, split, epsilon = 1e-12);
        assert_relative_eq!(whole, 0.759_770_986_083_445, epsilon = 1e-12);
    }

    #[test]
    fn large_exponents_stay_finite() {
        let s = MarketState::new(0, 1_000_000);
        let p = spot_prices(s, beta(1.0));
        assert!(p.p0.is_finite() && p.p1.is_finite());
        assert_eq!(p.p1, 1.0);
        let k = trade_cost(s, AssetSide::Asset0, 5, beta(1.0));
        assert!(k.is_finite() && k >= 0.0);
        let k = trade_cost(
            MarketState::default(),
            AssetSide::Asset1,
            1_000_000,
            beta(1.0),
        );
        assert_relative_eq!(
            k,
            1_000_000.0 - std::f64::consts::LN_2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn works_in_single_precision() {
        let b = Liquidity::new(0.01_f32).unwrap();
        let p = spot_prices(MarketState::new(0, 100), b);
        assert!((p.p1 - 0.731_058_6).abs() < 1e-6);
        let k = trade_cost(
            MarketState::default(),
            AssetSide::Asset1,
            1,
            Liquidity::new(1.0_f32).unwrap(),
        );
        assert!((k - 0.620_114_5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cost_is_bracketed_by_spot_prices(q0 in 0u64..5000, q1 in 0u64..5000, dq in 1u64..50, b in 1e-4f64..2.0, side1 in any::<bool>()) {
            // keep the cheaper side's price above f64 underflow
            prop_assume!(b * (q0 as f64 - q1 as f64).abs() < 600.0);
            let side = if side1 { AssetSide::Asset1 } else { AssetSide::Asset0 };
            let s = MarketState::new(q0, q1);
            let before = spot_prices(s, beta(b)).of(side);
            let after = spot_prices(s.bought(side, dq), beta(b)).of(side);
            let k = trade_cost(s, side, dq, beta(b));
            let n = dq as f64;
            prop_assert!(k > 0.0);
            prop_assert!(n * before <= k * (1.0 + 1e-12));
            prop_assert!(k <= n * after * (1.0 + 1e-12));
        }

        #[test]
        fn monotone_in_own_shares(q0 in 0u64..10_000, offset in 0u64..600, flip in any::<bool>(), b in 1e-4f64..0.05) {
            let s = if flip { MarketState::new(q0 + offset, q0) } else { MarketState::new(q0, q0 + offset) };
            let p = spot_prices(s, beta(b)).p1;
            prop_assert!(spot_prices(s.bought(AssetSide::Asset1, 1), beta(b)).p1 > p);
            prop_assert!(spot_prices(s.bought(AssetSide::Asset0, 1), beta(b)).p1 < p);
        }
    }
}
