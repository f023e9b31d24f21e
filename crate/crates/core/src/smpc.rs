//! Scenario-based one-step controllers.
//!
//! All three controllers reason about a *virtual* portfolio holding a
//! fractional position `u ∈ {0, 1}` of one share, whose wealth evolves as
//!
//! ```text
//! w(t+1) = (1 + r) (w(t) - h(t)) + b(t) u(t)
//! h(t)   = eps s(t) |u(t) - u(t-1)|
//! b(t)   = s(t+1) - (1 + r) s(t)
//! ```
//!
//! The decision `u(t)` becomes the trading signal for the real, integer-share
//! portfolio. Since `u` is binary, every objective is evaluated at both
//! candidates and the better one wins; ties keep the previous position.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::HistoryView;
use crate::portfolio::Signal;
use crate::predictors::PRICE_FLOOR;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub prices: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ScenarioSet {
    /// Equally weighted scenarios.
    pub fn uniform(prices: Vec<f64>) -> Self {
        assert!(!prices.is_empty(), "scenario set needs at least one price");
        let p = 1.0 / prices.len() as f64;
        let probs = vec![p; prices.len()];
        Self { prices, probs }
    }

    pub fn single(price: f64) -> Self {
        Self {
            prices: vec![price],
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Probability-weighted mean and variance of the excess return
    /// `b^j = s^j - (1 + r) s_now`.
    ///
    /// Computed on deviations from the first scenario, which is exact when
    /// all scenarios coincide and avoids cancellation in `E[b²] - E[b]²`.
    pub fn excess_moments(&self, s_now: f64, r: f64) -> (f64, f64) {
        let shift = excess_return(s_now, self.prices[0], r);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (s, p) in self.prices.iter().zip(&self.probs) {
            let d = excess_return(s_now, *s, r) - shift;
            m1 += p * d;
            m2 += p * d * d;
        }
        (shift + m1, (m2 - m1 * m1).max(0.0))
    }
}

/// Fractional-position wealth process used only for decision making.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualPortfolio {
    pub u_prev: Signal,
    pub w: f64,
    /// Trailing high-water level `l(t)`; only SMPC-DH reads it.
    pub level: f64,
}

impl Default for VirtualPortfolio {
    fn default() -> Self {
        Self::new()
    }
}

impl VirtualPortfolio {
    /// Starts in cash with `w(0) = 0` and `l(0) = 0`, so `w` is the gain
    /// since the start and shares a scale with `s(t) - s(0)`.
    pub fn new() -> Self {
        Self {
            u_prev: Signal::Cash,
            w: 0.0,
            level: 0.0,
        }
    }

    /// Commits decision `u` and advances `w` with the realized next price.
    pub fn advance(&mut self, u: Signal, s_now: f64, s_next: f64, eps: f64, r: f64) {
        self.w = next_virtual_wealth(self.w, u, self.u_prev, s_now, s_next, eps, r);
        self.u_prev = u;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmpcConfig {
    /// Number of sampled scenarios `M`.
    pub scenarios: usize,
    /// Mean-variance trade-off `α`.
    pub alpha: f64,
    /// Switching penalty `β` (QP-E+ only).
    pub beta: f64,
    /// Scenario perturbation standard deviation, in currency units.
    pub sigma_pert: f64,
    /// Risk-free rate per trading day.
    pub rate: f64,
    /// Log-return window for the ML volatility estimate.
    pub vol_window: usize,
}

impl SmpcConfig {
    pub fn qp_eplus() -> Self {
        Self {
            scenarios: 1,
            alpha: 1.0,
            beta: 1.0,
            sigma_pert: 0.0,
            rate: 0.0,
            vol_window: 100,
        }
    }

    pub fn m100() -> Self {
        Self {
            scenarios: 100,
            alpha: 10.0,
            beta: 0.0,
            sigma_pert: 0.3,
            rate: 0.0,
            vol_window: 100,
        }
    }

    pub fn dh() -> Self {
        Self {
            scenarios: 100,
            alpha: 0.0,
            beta: 0.0,
            sigma_pert: 0.3,
            rate: 0.0,
            vol_window: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios == 0 {
            return Err(Error::Config("scenarios must be at least 1".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma_pert", self.sigma_pert),
            ("rate", self.rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if self.vol_window == 0 {
            return Err(Error::Config("vol_window must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SmpcConfig {
    fn default() -> Self {
        Self::m100()
    }
}

/// `s^j = max(floor, ŝ + σ_pert η^j)` with `η^j ~ N(0, 1)`, uniform weights.
pub fn generate_scenarios<R: Rng + ?Sized>(
    s_hat: f64,
    cfg: &SmpcConfig,
    rng: &mut R,
) -> ScenarioSet {
    let floor = PRICE_FLOOR * s_hat;
    let prices = (0..cfg.scenarios)
        .map(|_| {
            let eta: f64 = rng.sample(StandardNormal);
            (s_hat + cfg.sigma_pert * eta).max(floor)
        })
        .collect();
    ScenarioSet::uniform(prices)
}

/// `b = s_next - (1 + r) s_now`.
pub fn excess_return(s_now: f64, s_next: f64, r: f64) -> f64 {
    s_next - (1.0 + r) * s_now
}

fn switched(u: Signal, u_prev: Signal) -> f64 {
    if u == u_prev {
        0.0
    } else {
        1.0
    }
}

/// Wealth after paying the switching cost and growing at the risk-free rate,
/// before the stock's excess return is added.
fn carried_wealth(w: f64, u: Signal, u_prev: Signal, s_now: f64, eps: f64, r: f64) -> f64 {
    (1.0 + r) * (w - eps * s_now * switched(u, u_prev))
}

pub fn next_virtual_wealth(
    w: f64,
    u: Signal,
    u_prev: Signal,
    s_now: f64,
    s_next: f64,
    eps: f64,
    r: f64,
) -> f64 {
    carried_wealth(w, u, u_prev, s_now, eps, r) + excess_return(s_now, s_next, r) * u.as_f64()
}

/// Maximum-likelihood standard deviation of the last `window` log-returns.
pub fn ml_volatility(history: &HistoryView<'_>, window: usize) -> Result<f64> {
    let past = history.past();
    if window == 0 {
        return Err(Error::Config("volatility window must be >= 1".into()));
    }
    if past.len() < window + 1 {
        return Err(Error::InsufficientHistory(format!(
            "volatility over {window} returns needs {} prices, have {}",
            window + 1,
            past.len()
        )));
    }
    let tail = &past[past.len() - window - 1..];
    // Welford
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, pair) in tail.windows(2).enumerate() {
        let x = (pair[1] / pair[0]).ln();
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok((m2 / window as f64).max(0.0).sqrt())
}

/// Picks the candidate with the larger objective; ties keep `u_prev`.
pub fn argmax_binary(cash_value: f64, stock_value: f64, u_prev: Signal) -> Signal {
    if stock_value > cash_value {
        Signal::Stock
    } else if cash_value > stock_value {
        Signal::Cash
    } else {
        u_prev
    }
}

/// Picks the candidate with the smaller objective; ties keep `u_prev`.
pub fn argmin_binary(cash_value: f64, stock_value: f64, u_prev: Signal) -> Signal {
    argmax_binary(-cash_value, -stock_value, u_prev)
}

const CANDIDATES: [Signal; 2] = [Signal::Cash, Signal::Stock];

/// QP-E+: `max_u E[w(t+1)] - (β/2)(u - u_prev)² σ` with a single scenario.
pub fn decide_qp_eplus(
    s_now: f64,
    scenario: &ScenarioSet,
    vp: &VirtualPortfolio,
    sigma: f64,
    eps: f64,
    cfg: &SmpcConfig,
) -> Signal {
    debug_assert_eq!(scenario.len(), 1, "QP-E+ works on exactly one scenario");
    let (mean_b, _) = scenario.excess_moments(s_now, cfg.rate);
    let [cash, stock] = CANDIDATES.map(|u| {
        let expected =
            carried_wealth(vp.w, u, vp.u_prev, s_now, eps, cfg.rate) + mean_b * u.as_f64();
        let du = switched(u, vp.u_prev);
        expected - 0.5 * cfg.beta * du * du * sigma
    });
    argmax_binary(cash, stock, vp.u_prev)
}

/// SMPC-M100: `max_u E[w(t+1)] - (α/2) Var[w(t+1)]` over the scenario set.
pub fn decide_m100(
    s_now: f64,
    scenarios: &ScenarioSet,
    vp: &VirtualPortfolio,
    eps: f64,
    cfg: &SmpcConfig,
) -> Signal {
    let (mean_b, var_b) = scenarios.excess_moments(s_now, cfg.rate);
    let [cash, stock] = CANDIDATES.map(|u| {
        let x = u.as_f64();
        let expected = carried_wealth(vp.w, u, vp.u_prev, s_now, eps, cfg.rate) + mean_b * x;
        // the carried part is deterministic, so Var[w] = u² Var[b]
        let variance = x * x * var_b;
        expected - 0.5 * cfg.alpha * variance
    });
    argmax_binary(cash, stock, vp.u_prev)
}

/// Discounted hedging references `p^j(t+1) = (1+r)^-(T-(t+1)) max(s^j - s(0), l(t))`.
pub fn reference_scenarios(
    scenarios: &ScenarioSet,
    s0: f64,
    level: f64,
    t: usize,
    horizon: usize,
    r: f64,
) -> Vec<f64> {
    debug_assert!(t < horizon, "reference needs t < T");
    let steps = horizon.saturating_sub(t + 1) as i32;
    let discount = (1.0 + r).powi(-steps);
    scenarios
        .prices
        .iter()
        .map(|s| discount * (s - s0).max(level))
        .collect()
}

/// High-water mark `max(l(t-1), w(t), 0)`.
pub fn update_trailing_level(level: f64, w_now: f64) -> f64 {
    level.max(w_now).max(0.0)
}

/// SMPC-DH: `min_u max_j |w^j(t+1) - p^j(t+1)|`.
pub fn decide_dh(
    s_now: f64,
    scenarios: &ScenarioSet,
    references: &[f64],
    vp: &VirtualPortfolio,
    eps: f64,
    r: f64,
) -> Signal {
    assert_eq!(
        scenarios.len(),
        references.len(),
        "scenarios and references must align"
    );
    let [cash, stock] = CANDIDATES.map(|u| {
        scenarios
            .prices
            .iter()
            .zip(references)
            .map(|(s, p)| (next_virtual_wealth(vp.w, u, vp.u_prev, s_now, *s, eps, r) - p).abs())
            .fold(0.0_f64, f64::max)
    });
    argmin_binary(cash, stock, vp.u_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use proptest::prelude::*;

    fn vp(u_prev: Signal, w: f64) -> VirtualPortfolio {
        VirtualPortfolio {
            u_prev,
            w,
            level: 0.0,
        }
    }

    #[test]
    fn zero_noise_scenarios_are_copies() {
        let cfg = SmpcConfig {
            scenarios: 5,
            sigma_pert: 0.0,
            ..SmpcConfig::m100()
        };
        let set = generate_scenarios(100.0, &cfg, &mut derive_stream(1, &["s"]));
        assert_eq!(set.prices, vec![100.0; 5]);
        assert_eq!(set.probs, vec![0.2; 5]);
    }

    #[test]
    fn single_scenario_equals_estimate() {
        let cfg = SmpcConfig::qp_eplus();
        let set = generate_scenarios(97.5, &cfg, &mut derive_stream(1, &["s"]));
        assert_eq!(set, ScenarioSet::single(97.5));
    }

    #[test]
    fn scenario_mean_converges() {
        let m = 100_000;
        let cfg = SmpcConfig {
            scenarios: m,
            sigma_pert: 0.3,
            ..SmpcConfig::m100()
        };
        let set = generate_scenarios(100.0, &cfg, &mut derive_stream(2, &["lln"]));
        let mean = set.prices.iter().sum::<f64>() / m as f64;
        assert!((mean - 100.0).abs() < 3.0 * 0.3 / (m as f64).sqrt());
        let total: f64 = set.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn excess_return_examples() {
        assert_eq!(excess_return(100.0, 103.0, 0.0), 3.0);
        assert_eq!(excess_return(100.0, 100.0, 0.01), -1.0);
        assert_eq!(excess_return(80.0, 80.0 * 1.5, 0.5), 0.0);
    }

    /// Plain two-pass population variance of the log-returns.
    fn two_pass_vol(prices: &[f64]) -> f64 {
        let r: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn ml_volatility_examples() {
        let flat = [50.0; 8];
        assert_eq!(
            ml_volatility(&HistoryView::from_slice(&flat), 5).unwrap(),
            0.0
        );

        let zig = [100.0, 110.0, 100.0, 110.0, 100.0, 110.0];
        let v = HistoryView::from_slice(&zig);
        let got = ml_volatility(&v, 4).unwrap();
        assert!((got - two_pass_vol(&zig[1..])).abs() < 1e-15);
        assert!((got - 1.1f64.ln()).abs() < 1e-12);

        let geo: Vec<f64> = (0..12).map(|k| 100.0 * 1.03f64.powi(k)).collect();
        assert!(ml_volatility(&HistoryView::from_slice(&geo), 10).unwrap() < 1e-12);

        assert!(matches!(
            ml_volatility(&HistoryView::from_slice(&geo[..5]), 10),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn ml_volatility_matches_two_pass() {
        use rand::Rng;
        let mut rng = derive_stream(3, &["vol"]);
        for _ in 0..200 {
            let n = rng.random_range(3..120);
            let prices: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..200.0)).collect();
            let window = rng.random_range(1..n);
            let v = HistoryView::from_slice(&prices);
            let want = two_pass_vol(&prices[n - window - 1..]);
            let got = ml_volatility(&v, window).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn qp_eplus_indifferent_stays_in_cash() {
        let cfg = SmpcConfig::qp_eplus();
        let u = decide_qp_eplus(
            100.0,
            &ScenarioSet::single(100.0),
            &vp(Signal::Cash, 100.0),
            0.02,
            0.01,
            &cfg,
        );
        assert_eq!(u, Signal::Cash);
    }

    #[test]
    fn qp_eplus_buys_when_gain_beats_cost() {
        // u=0: 100, u=1: 100 - 1 + 10 = 109
        let cfg = SmpcConfig {
            beta: 0.0,
            ..SmpcConfig::qp_eplus()
        };
        let u = decide_qp_eplus(
            100.0,
            &ScenarioSet::single(110.0),
            &vp(Signal::Cash, 100.0),
            0.02,
            0.01,
            &cfg,
        );
        assert_eq!(u, Signal::Stock);
    }

    #[test]
    fn qp_eplus_huge_beta_never_switches() {
        let cfg = SmpcConfig {
            beta: 1e12,
            ..SmpcConfig::qp_eplus()
        };
        for (prev, s_hat) in [(Signal::Cash, 150.0), (Signal::Stock, 50.0)] {
            let u = decide_qp_eplus(
                100.0,
                &ScenarioSet::single(s_hat),
                &vp(prev, 100.0),
                0.02,
                0.01,
                &cfg,
            );
            assert_eq!(u, prev);
        }
    }

    #[test]
    fn m100_alpha_zero_is_mean_test() {
        let cfg = SmpcConfig {
            alpha: 0.0,
            sigma_pert: 0.3,
            ..SmpcConfig::m100()
        };
        let mut rng = derive_stream(9, &["m100"]);
        for s_hat in [99.0, 100.5, 100.99, 101.01, 102.0] {
            let set = generate_scenarios(s_hat, &cfg, &mut rng);
            let mean_b = set.prices.iter().map(|s| s - 100.0).sum::<f64>() / set.len() as f64;
            // buying from cash costs eps * s = 1
            let expected = if mean_b > 1.0 {
                Signal::Stock
            } else {
                Signal::Cash
            };
            assert_eq!(
                decide_m100(100.0, &set, &vp(Signal::Cash, 100.0), 0.01, &cfg),
                expected
            );
        }
    }

    #[test]
    fn m100_large_alpha_avoids_risk() {
        let cfg = SmpcConfig {
            alpha: 1e9,
            sigma_pert: 0.3,
            ..SmpcConfig::m100()
        };
        let set = generate_scenarios(130.0, &cfg, &mut derive_stream(4, &["risk"]));
        assert_eq!(
            decide_m100(100.0, &set, &vp(Signal::Cash, 100.0), 0.01, &cfg),
            Signal::Cash
        );
    }

    #[test]
    fn reference_examples() {
        let set = ScenarioSet::uniform(vec![90.0, 100.0, 150.0]);
        assert_eq!(
            reference_scenarios(&set, 100.0, 5.0, 0, 10, 0.0),
            vec![5.0, 5.0, 50.0]
        );
        let flat = ScenarioSet::single(100.0);
        assert_eq!(
            reference_scenarios(&flat, 100.0, 0.0, 3, 10, 0.0),
            vec![0.0]
        );
        let up = ScenarioSet::single(150.0);
        let p = reference_scenarios(&up, 100.0, 10.0, 7, 10, 0.01)[0];
        assert!((p - 50.0 / (1.01f64 * 1.01)).abs() < 1e-12);
        assert!((p - 49.0148).abs() < 1e-4);
    }

    #[test]
    fn trailing_level_examples() {
        assert_eq!(update_trailing_level(0.0, 50.0), 50.0);
        assert_eq!(update_trailing_level(50.0, 40.0), 50.0);
        assert_eq!(update_trailing_level(50.0, -10.0), 50.0);
        assert_eq!(update_trailing_level(0.0, -10.0), 0.0);
    }

    #[test]
    fn dh_flat_reference_stays_in_cash() {
        // u=0 error |w - w| = 0, u=1 error eps * s = 1
        let set = ScenarioSet::uniform(vec![100.0; 4]);
        let refs = vec![100.0; 4];
        assert_eq!(
            decide_dh(100.0, &set, &refs, &vp(Signal::Cash, 100.0), 0.01, 0.0),
            Signal::Cash
        );
    }

    #[test]
    fn dh_follows_rising_reference() {
        // w = 10, s = 100, s0 = 95, s^j = 150 -> p = 55
        // u=0: |10 - 55| = 45; u=1: |10 - 1 + 50 - 55| = 4
        let set = ScenarioSet::single(150.0);
        let refs = reference_scenarios(&set, 95.0, 0.0, 0, 5, 0.0);
        assert_eq!(refs, vec![55.0]);
        assert_eq!(
            decide_dh(100.0, &set, &refs, &vp(Signal::Cash, 10.0), 0.01, 0.0),
            Signal::Stock
        );
    }

    #[test]
    fn dh_identical_scenarios_match_single() {
        let mut rng = derive_stream(5, &["dh"]);
        use rand::Rng;
        for _ in 0..500 {
            let s_now = rng.random_range(50.0..150.0);
            let s_next = rng.random_range(50.0..150.0);
            let level = rng.random_range(0.0..100.0);
            let w = rng.random_range(0.0..200.0);
            let prev = Signal::from(rng.random_bool(0.5));
            let many = ScenarioSet::uniform(vec![s_next; 7]);
            let one = ScenarioSet::single(s_next);
            let v = VirtualPortfolio {
                u_prev: prev,
                w,
                level,
            };
            let r_many = reference_scenarios(&many, 100.0, level, 2, 9, 0.0);
            let r_one = reference_scenarios(&one, 100.0, level, 2, 9, 0.0);
            assert_eq!(
                decide_dh(s_now, &many, &r_many, &v, 0.01, 0.0),
                decide_dh(s_now, &one, &r_one, &v, 0.01, 0.0)
            );
        }
    }

    #[test]
    fn virtual_wealth_advance() {
        let mut v = VirtualPortfolio::new();
        v.advance(Signal::Stock, 100.0, 104.0, 0.01, 0.0);
        assert_eq!(v.w, -1.0 + 4.0);
        assert_eq!(v.u_prev, Signal::Stock);
        v.advance(Signal::Stock, 104.0, 100.0, 0.01, 0.0);
        assert_eq!(v.w, -1.0);
        v.advance(Signal::Cash, 100.0, 120.0, 0.01, 0.0);
        assert_eq!(v.w, -2.0);
    }

    proptest! {
        #[test]
        fn m100_without_noise_equals_qp_eplus(
            s_now in 1.0f64..500.0,
            s_hat in 1.0f64..500.0,
            w in 0.0f64..1000.0,
            prev in any::<bool>(),
            eps in 0.0f64..0.05,
            alpha in 0.0f64..100.0,
            m in 1usize..200,
            sigma in 0.0f64..0.1,
        ) {
            let v = vp(Signal::from(prev), w);
            let set = ScenarioSet::uniform(vec![s_hat; m]);
            let m_cfg = SmpcConfig { scenarios: m, alpha, sigma_pert: 0.0, ..SmpcConfig::m100() };
            let q_cfg = SmpcConfig { beta: 0.0, ..SmpcConfig::qp_eplus() };
            prop_assert_eq!(
                decide_m100(s_now, &set, &v, eps, &m_cfg),
                decide_qp_eplus(s_now, &ScenarioSet::single(s_hat), &v, sigma, eps, &q_cfg)
            );
        }

        #[test]
        fn tie_break_is_shift_invariant(a in -1000i32..1000, b in -1000i32..1000, c in -1000i32..1000, prev in any::<bool>()) {
            let prev = Signal::from(prev);
            let (a, b, c) = (a as f64, b as f64, c as f64);
            prop_assert_eq!(argmax_binary(a, b, prev), argmax_binary(a + c, b + c, prev));
            prop_assert_eq!(argmin_binary(a, b, prev), argmin_binary(a + c, b + c, prev));
        }

        #[test]
        fn level_never_decreases(ws in prop::collection::vec(-200.0f64..200.0, 1..100)) {
            let mut level = 0.0;
            for w in ws {
                let next = update_trailing_level(level, w);
                prop_assert!(next >= level);
                level = next;
            }
        }

        #[test]
        fn deciders_are_pure(s_now in 10.0f64..200.0, s_hat in 10.0f64..200.0, w in 0.0f64..300.0, seed in 0u64..1000) {
            let cfg = SmpcConfig::m100();
            let set = generate_scenarios(s_hat, &cfg, &mut derive_stream(seed, &["pure"]));
            let v = vp(Signal::Cash, w);
            let refs = reference_scenarios(&set, 100.0, 5.0, 1, 10, 0.0);
            prop_assert_eq!(decide_m100(s_now, &set, &v, 0.01, &cfg), decide_m100(s_now, &set, &v, 0.01, &cfg));
            prop_assert_eq!(decide_dh(s_now, &set, &refs, &v, 0.01, 0.0), decide_dh(s_now, &set, &refs, &v, 0.01, 0.0));
        }
    }
}
