//! Two-state cash/stock portfolio with integer shares and proportional costs.
//!
//! The state mirrors `Z(t) = (I, M, N, W)`: an invested flag, cash, share
//! count and wealth. A signal `J(t)` either keeps the current state or moves
//! everything into the other one:
//!
//! ```text
//!   cash --J=1--> stock     buy max_shares at s(t), pay (1 + eps_buy)
//!   stock --J=0--> cash     sell all at s(t), receive (1 - eps_sell)
//! ```
//!
//! Fixed per-trade charges are not modelled.

use serde::{Deserialize, Serialize};

/// Binary trading control `J(t)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub enum Signal {
    #[default]
    Cash,
    Stock,
}

impl Signal {
    pub fn as_u8(self) -> u8 {
        match self {
            Signal::Cash => 0,
            Signal::Stock => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_u8() as f64
    }
}

impl From<bool> for Signal {
    fn from(invest: bool) -> Self {
        if invest {
            Signal::Stock
        } else {
            Signal::Cash
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub eps_buy: f64,
    pub eps_sell: f64,
}

impl CostModel {
    pub fn proportional(eps: f64) -> Self {
        Self {
            eps_buy: eps,
            eps_sell: eps,
        }
    }

    pub fn free() -> Self {
        Self::proportional(0.0)
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [("eps_buy", self.eps_buy), ("eps_sell", self.eps_sell)] {
            if !(0.0..1.0).contains(&v) {
                return Err(crate::Error::Config(format!(
                    "{name} = {v} must lie in [0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Total outlay for `shares` at `price`: gross plus the buy fee.
    pub fn buy_outlay(&self, shares: u64, price: f64) -> f64 {
        let gross = shares as f64 * price;
        gross + gross * self.eps_buy
    }

    /// Net proceeds for selling `shares` at `price`.
    pub fn sell_proceeds(&self, shares: u64, price: f64) -> f64 {
        let gross = shares as f64 * price;
        gross - gross * self.eps_sell
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::proportional(0.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub invested: bool,
    pub cash: f64,
    pub shares: u64,
    pub wealth: f64,
}

impl PortfolioState {
    /// All-cash starting state `(0, m0, 0, m0)`.
    pub fn cash_only(m0: f64) -> Self {
        Self {
            invested: false,
            cash: m0,
            shares: 0,
            wealth: m0,
        }
    }

    pub fn position(&self) -> Signal {
        Signal::from(self.invested)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TradeKind {
    Buy,
    Sell,
}

impl TradeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TradeKind::Buy => "buy",
            TradeKind::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub t: usize,
    pub kind: TradeKind,
    pub price: f64,
    pub shares: u64,
    pub cash_after: f64,
    pub wealth_after: f64,
}

/// Largest share count affordable at `price` including the buy fee, and the
/// cash left over.
pub fn max_shares(cash: f64, price: f64, costs: &CostModel) -> (u64, f64) {
    debug_assert!(cash >= 0.0 && price > 0.0);
    let unit = price * (1.0 + costs.eps_buy);
    let mut n = (cash / unit).floor().max(0.0) as u64;
    // the division only gives a guess; settle on the exact outlay comparison
    while n > 0 && costs.buy_outlay(n, price) > cash {
        n -= 1;
    }
    while costs.buy_outlay(n + 1, price) <= cash {
        n += 1;
    }
    (n, cash - costs.buy_outlay(n, price))
}

pub fn wealth_at(state: &PortfolioState, price: f64) -> f64 {
    state.cash + state.shares as f64 * price
}

/// Applies signal `signal` at time `t` and price `price`.
///
/// A buy signal that cannot afford a single share leaves the state in cash
/// and produces no trade record.
pub fn step(
    state: &PortfolioState,
    signal: Signal,
    price: f64,
    costs: &CostModel,
    t: usize,
) -> (PortfolioState, Option<TradeRecord>) {
    let mut next = *state;
    let trade = match (state.invested, signal) {
        (false, Signal::Stock) => {
            let (n, residual) = max_shares(state.cash, price, costs);
            if n == 0 {
                None
            } else {
                next.invested = true;
                next.shares = n;
                next.cash = residual;
                Some(TradeKind::Buy)
            }
        }
        (true, Signal::Cash) => {
            next.cash = state.cash + costs.sell_proceeds(state.shares, price);
            next.shares = 0;
            next.invested = false;
            Some(TradeKind::Sell)
        }
        _ => None,
    };
    next.wealth = wealth_at(&next, price);
    let record = trade.map(|kind| TradeRecord {
        t,
        kind,
        price,
        shares: if kind == TradeKind::Buy {
            next.shares
        } else {
            state.shares
        },
        cash_after: next.cash,
        wealth_after: next.wealth,
    });
    (next, record)
}

/// Percent return `(final - initial) / initial * 100`.
pub fn performance(final_wealth: f64, initial_wealth: f64) -> f64 {
    (final_wealth - initial_wealth) / initial_wealth * 100.0
}
