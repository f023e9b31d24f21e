//! Hindsight-optimal trading trajectory.
//!
//! [`optimal_trajectory`] runs a forward dynamic program over the two
//! position states. Because shares are integers, the state of a path is the
//! pair `(cash, shares)`, not just its wealth:
//!
//! - the cash node keeps a single label, the one with the most cash, since
//!   the best achievable terminal wealth from cash never decreases with the
//!   amount of cash;
//! - the stock node keeps every label not dominated by another over all
//!   future prices it could still be sold or marked at.
//!
//! Exact ties are broken like the brute-force oracle: higher wealth, then
//! fewer executed trades, then the lexicographically smaller signal sequence.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::portfolio::{max_shares, step, CostModel, PortfolioState, Signal};

/// Longest input [`brute_force_optimal`] accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTrajectory {
    /// `J̃(0..=T)`.
    pub signals: Vec<Signal>,
    pub final_wealth: f64,
    /// `W(t)` after applying `J̃(t)`.
    pub wealth: Vec<f64>,
    pub n_trades: usize,
}

/// Runs `signals` through the portfolio engine, returning the wealth trace
/// and the number of executed trades.
pub fn replay(prices: &[f64], signals: &[Signal], m0: f64, costs: &CostModel) -> (Vec<f64>, usize) {
    let mut state = PortfolioState::cash_only(m0);
    let mut trades = 0;
    let wealth = prices
        .iter()
        .zip(signals)
        .enumerate()
        .map(|(t, (p, j))| {
            let (next, rec) = step(&state, *j, *p, costs, t);
            trades += rec.is_some() as usize;
            state = next;
            state.wealth
        })
        .collect();
    (wealth, trades)
}

fn check_prices(prices: &[f64], min_len: usize) -> Result<()> {
    if prices.len() < min_len {
        return Err(Error::Domain(format!(
            "optimal trajectory needs at least {min_len} prices, got {}",
            prices.len()
        )));
    }
    if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Domain(format!(
            "price at index {i} is {} (must be positive)",
            prices[i]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Node {
    signal: Signal,
    parent: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cash: f64,
    shares: u64,
    trades: usize,
    node: usize,
}

struct Arena(Vec<Node>);

impl Arena {
    fn push(&mut self, signal: Signal, parent: Option<usize>) -> usize {
        self.0.push(Node { signal, parent });
        self.0.len() - 1
    }

    /// Lexicographic order of two equally long signal paths.
    fn lex_cmp(&self, mut a: usize, mut b: usize) -> Ordering {
        let mut decided = Ordering::Equal;
        // walk back in lockstep; the earliest difference wins
        while a != b {
            let (na, nb) = (self.0[a], self.0[b]);
            let c = na.signal.cmp(&nb.signal);
            if c != Ordering::Equal {
                decided = c;
            }
            match (na.parent, nb.parent) {
                (Some(pa), Some(pb)) => {
                    a = pa;
                    b = pb;
                }
                _ => break,
            }
        }
        decided
    }

    fn path(&self, mut node: usize) -> Vec<Signal> {
        let mut out = vec![self.0[node].signal];
        while let Some(p) = self.0[node].parent {
            out.push(self.0[p].signal);
            node = p;
        }
        out.reverse();
        out
    }
}

/// True if `(wealth, trades, path)` of `a` is preferred over `b`.
fn preferred(arena: &Arena, a: (f64, &Label), b: (f64, &Label)) -> bool {
    match a.0.partial_cmp(&b.0).expect("wealth is finite") {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.1.trades.cmp(&b.1.trades) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => arena.lex_cmp(a.1.node, b.1.node) == Ordering::Less,
        },
    }
}

/// Keeps the stock labels that can still win for some future price.
///
/// `a` dominates `b` if `a.cash + a.shares p >= b.cash + b.shares p` for
/// every price `p >= floor` at which the position may later be valued.
/// Near-ties are kept so rounding can never prune the true optimum.
fn prune_stock(arena: &Arena, labels: Vec<Label>, floor: f64) -> Vec<Label> {
    let dominates = |a: &Label, b: &Label| -> bool {
        if a.shares == b.shares && a.cash == b.cash {
            return preferred(arena, (a.cash, a), (b.cash, b));
        }
        if a.shares < b.shares {
            return false;
        }
        if a.cash >= b.cash {
            return true;
        }
        let lhs = a.cash + a.shares as f64 * floor;
        let rhs = b.cash + b.shares as f64 * floor;
        lhs - rhs > 1e-9 * rhs.abs().max(1.0)
    };
    let mut kept: Vec<Label> = Vec::with_capacity(labels.len());
    for (i, b) in labels.iter().enumerate() {
        let beaten = labels
            .iter()
            .enumerate()
            .any(|(k, a)| k != i && dominates(a, b));
        if !beaten {
            kept.push(*b);
        }
    }
    kept
}

/// Wealth-maximizing signal sequence over `prices`, executed through the
/// integer-share portfolio engine. Terminal wealth is marked at `s(T)`.
pub fn optimal_trajectory(prices: &[f64], m0: f64, costs: &CostModel) -> Result<OptimalTrajectory> {
    check_prices(prices, 2)?;
    let n = prices.len();
    // suffix_min[t] = min s(t..=T), the lowest later valuation price
    let mut suffix_min = prices.to_vec();
    for t in (0..n - 1).rev() {
        suffix_min[t] = suffix_min[t].min(suffix_min[t + 1]);
    }

    let mut arena = Arena(Vec::with_capacity(4 * n));
    let mut cash: Option<Label> = None;
    let mut stock: Vec<Label> = Vec::new();

    for (t, &p) in prices.iter().enumerate() {
        let mut cash_next: Option<Label> = None;
        let mut stock_next: Vec<Label> = Vec::new();
        let offer_cash = |arena: &Arena, cand: Label, best: &mut Option<Label>| match best {
            Some(cur) if !preferred(arena, (cand.cash, &cand), (cur.cash, cur)) => {}
            _ => *best = Some(cand),
        };

        // from cash: stay, or buy
        let (start_cash, start_trades, parent) = match &cash {
            Some(c) => (c.cash, c.trades, Some(c.node)),
            None if t == 0 => (m0, 0, None),
            None => (f64::NAN, 0, None),
        };
        if !start_cash.is_nan() {
            let node = arena.push(Signal::Cash, parent);
            offer_cash(
                &arena,
                Label {
                    cash: start_cash,
                    shares: 0,
                    trades: start_trades,
                    node,
                },
                &mut cash_next,
            );
            let (shares, residual) = max_shares(start_cash, p, costs);
            // an unaffordable buy reproduces the stay label with a larger
            // sequence, so it never wins
            if shares > 0 {
                let node = arena.push(Signal::Stock, parent);
                stock_next.push(Label {
                    cash: residual,
                    shares,
                    trades: start_trades + 1,
                    node,
                });
            }
        }

        // from stock: sell, or hold
        for s in &stock {
            let node = arena.push(Signal::Cash, Some(s.node));
            let sold = s.cash + costs.sell_proceeds(s.shares, p);
            offer_cash(
                &arena,
                Label {
                    cash: sold,
                    shares: 0,
                    trades: s.trades + 1,
                    node,
                },
                &mut cash_next,
            );
            let node = arena.push(Signal::Stock, Some(s.node));
            stock_next.push(Label { node, ..*s });
        }

        let floor = if t + 1 < n {
            suffix_min[t + 1] * (1.0 - costs.eps_sell)
        } else {
            p
        };
        cash = cash_next;
        stock = prune_stock(&arena, stock_next, floor);
    }

    let last = prices[n - 1];
    let mut best: Option<(f64, Label)> = cash.map(|c| (c.cash, c));
    for s in &stock {
        let w = s.cash + s.shares as f64 * last;
        if best
            .as_ref()
            .is_none_or(|(bw, b)| preferred(&arena, (w, s), (*bw, b)))
        {
            best = Some((w, *s));
        }
    }
    let (final_wealth, label) = best.expect("the all-cash path always exists");
    let signals = arena.path(label.node);
    let (wealth, n_trades) = replay(prices, &signals, m0, costs);
    debug_assert_eq!(n_trades, label.trades);
    Ok(OptimalTrajectory {
        signals,
        final_wealth,
        wealth,
        n_trades,
    })
}

/// Exhaustive search over all `2^(T+1)` signal sequences.
pub fn brute_force_optimal(
    prices: &[f64],
    m0: f64,
    costs: &CostModel,
) -> Result<OptimalTrajectory> {
    check_prices(prices, 1)?;
    let n = prices.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::Domain(format!(
            "brute force limited to {BRUTE_FORCE_MAX_LEN} prices, got {n}"
        )));
    }
    let decode = |mask: u32| -> Vec<Signal> {
        (0..n)
            .map(|i| Signal::from(mask >> (n - 1 - i) & 1 == 1))
            .collect()
    };
    let mut best: Option<(f64, usize, u32)> = None;
    // ascending masks are ascending lexicographic order, so keeping only
    // strict improvements resolves ties toward the smaller sequence
    for mask in 0..(1u32 << n) {
        let signals = decode(mask);
        let (wealth, trades) = replay(prices, &signals, m0, costs);
        let w = wealth[n - 1];
        let better = match best {
            None => true,
            Some((bw, bt, _)) => w > bw || (w == bw && trades < bt),
        };
        if better {
            best = Some((w, trades, mask));
        }
    }
    let (final_wealth, n_trades, mask) = best.expect("at least one sequence");
    let signals = decode(mask);
    let (wealth, _) = replay(prices, &signals, m0, costs);
    Ok(OptimalTrajectory {
        signals,
        final_wealth,
        wealth,
        n_trades,
    })
}

/// Holding gate: `J̃(t)` if the last `t_ho` hindsight signals agree, else cash.
pub fn gate_tail(signals: &[Signal], t_ho: usize) -> Result<Signal> {
    if t_ho == 0 {
        return Err(Error::Config("t_ho must be >= 1".into()));
    }
    if signals.len() < t_ho {
        return Err(Error::InsufficientHistory(format!(
            "t_ho = {t_ho} needs {t_ho} signals, have {}",
            signals.len()
        )));
    }
    let tail = &signals[signals.len() - t_ho..];
    let last = tail[tail.len() - 1];
    Ok(if tail.iter().all(|s| *s == last) {
        last
    } else {
        Signal::Cash
    })
}

/// HistOpt-RT: solve the hindsight problem on `s(0..=t)` extended by
/// `ŝ(t+1)` and follow `J̃(t)` when its recent tail is consistent.
pub fn decide_histopt_rt(
    prices_through_t: &[f64],
    s_hat: f64,
    t_ho: usize,
    m0: f64,
    costs: &CostModel,
) -> Result<Signal> {
    if prices_through_t.len() < t_ho {
        return Err(Error::InsufficientHistory(format!(
            "histopt-rt with t_ho = {t_ho} at t = {}",
            prices_through_t.len().saturating_sub(1)
        )));
    }
    let mut extended = Vec::with_capacity(prices_through_t.len() + 1);
    extended.extend_from_slice(prices_through_t);
    extended.push(s_hat);
    let traj = optimal_trajectory(&extended, m0, costs)?;
    gate_tail(&traj.signals[..prices_through_t.len()], t_ho)
}
