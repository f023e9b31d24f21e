//! Daily backtest loop, baselines, metrics and the experiment matrix.
//!
//! Each evaluation day `t` (from `eval_start` up to, but excluding, the last
//! index `T`) the loop forms `ŝ(t+1)`, asks the controller for `J(t)`,
//! rebalances at `s(t)` and lets SMPC controllers advance their virtual
//! portfolio with the realized `s(t+1)`. Wealth `W(T)` is marked at the
//! final close without liquidation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histopt::{decide_histopt_rt, optimal_trajectory};
use crate::market_data::PriceSeries;
use crate::parallel::{self, Execution};
use crate::portfolio::{
    performance, step, wealth_at, CostModel, PortfolioState, Signal, TradeRecord,
};
use crate::predictors::{predict, PredictorKind};
use crate::rng::{derive_stream, RunRng};
use crate::smpc::{
    decide_dh, decide_m100, decide_qp_eplus, generate_scenarios, ml_volatility,
    reference_scenarios, update_trailing_level, SmpcConfig, VirtualPortfolio,
};
use crate::technical::{
    decide_ma_cross, decide_ma_sign, decide_tr_inside, decide_tr_outside, MaCrossConfig,
    MaSignConfig, TrConfig,
};

pub const DEFAULT_M0: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    QpEplus,
    SmpcM100,
    SmpcDh,
    MaCross,
    MaSign,
    TrInside,
    TrOutside,
    HistoptRt,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 8] = [
        ControllerKind::QpEplus,
        ControllerKind::SmpcM100,
        ControllerKind::SmpcDh,
        ControllerKind::MaCross,
        ControllerKind::MaSign,
        ControllerKind::TrInside,
        ControllerKind::TrOutside,
        ControllerKind::HistoptRt,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ControllerKind::QpEplus => "qp-eplus",
            ControllerKind::SmpcM100 => "smpc-m100",
            ControllerKind::SmpcDh => "smpc-dh",
            ControllerKind::MaCross => "ma-cross",
            ControllerKind::MaSign => "ma-sign",
            ControllerKind::TrInside => "tr-inside",
            ControllerKind::TrOutside => "tr-outside",
            ControllerKind::HistoptRt => "histopt-rt",
        }
    }

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::QpEplus => "QP-E+",
            ControllerKind::SmpcM100 => "SMPC-M100",
            ControllerKind::SmpcDh => "SMPC-DH",
            ControllerKind::MaCross => "MA-Cross",
            ControllerKind::MaSign => "MA-Sign",
            ControllerKind::TrInside => "TR-Inside",
            ControllerKind::TrOutside => "TR-Outside",
            ControllerKind::HistoptRt => "HistOpt-RT",
        }
    }

    pub fn is_smpc(self) -> bool {
        matches!(
            self,
            ControllerKind::QpEplus | ControllerKind::SmpcM100 | ControllerKind::SmpcDh
        )
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistOptRtConfig {
    /// Number of trailing hindsight signals that must agree.
    pub t_ho: usize,
}

impl Default for HistOptRtConfig {
    fn default() -> Self {
        Self { t_ho: 1 }
    }
}

/// A controller together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerSpec {
    QpEplus(SmpcConfig),
    SmpcM100(SmpcConfig),
    SmpcDh(SmpcConfig),
    MaCross(MaCrossConfig),
    MaSign(MaSignConfig),
    TrInside(TrConfig),
    TrOutside(TrConfig),
    HistoptRt(HistOptRtConfig),
}

fn integral(name: &str, value: f64) -> Result<usize> {
    if value.is_finite() && value >= 0.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!(
            "parameter `{name}` must be a nonnegative integer, got {value}"
        )))
    }
}

impl ControllerSpec {
    /// Default parameter set.
    pub fn default_for(kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::QpEplus => ControllerSpec::QpEplus(SmpcConfig::qp_eplus()),
            ControllerKind::SmpcM100 => ControllerSpec::SmpcM100(SmpcConfig::m100()),
            ControllerKind::SmpcDh => ControllerSpec::SmpcDh(SmpcConfig::dh()),
            ControllerKind::MaCross => ControllerSpec::MaCross(MaCrossConfig::default()),
            ControllerKind::MaSign => ControllerSpec::MaSign(MaSignConfig::default()),
            ControllerKind::TrInside => ControllerSpec::TrInside(TrConfig::inside()),
            ControllerKind::TrOutside => ControllerSpec::TrOutside(TrConfig::outside()),
            ControllerKind::HistoptRt => ControllerSpec::HistoptRt(HistOptRtConfig::default()),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::QpEplus(_) => ControllerKind::QpEplus,
            ControllerSpec::SmpcM100(_) => ControllerKind::SmpcM100,
            ControllerSpec::SmpcDh(_) => ControllerKind::SmpcDh,
            ControllerSpec::MaCross(_) => ControllerKind::MaCross,
            ControllerSpec::MaSign(_) => ControllerKind::MaSign,
            ControllerSpec::TrInside(_) => ControllerKind::TrInside,
            ControllerSpec::TrOutside(_) => ControllerKind::TrOutside,
            ControllerSpec::HistoptRt(_) => ControllerKind::HistoptRt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControllerSpec::QpEplus(c) => {
                c.validate()?;
                if c.scenarios != 1 {
                    return Err(Error::Config(format!(
                        "qp-eplus uses one scenario, got {}",
                        c.scenarios
                    )));
                }
                Ok(())
            }
            ControllerSpec::SmpcM100(c) | ControllerSpec::SmpcDh(c) => c.validate(),
            ControllerSpec::MaCross(c) => c.validate(),
            ControllerSpec::MaSign(c) => c.validate(),
            ControllerSpec::TrInside(c) | ControllerSpec::TrOutside(c) => c.validate(),
            ControllerSpec::HistoptRt(c) => {
                if c.t_ho == 0 {
                    Err(Error::Config("histopt-rt t_ho must be >= 1".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Smallest absolute index at which the controller can decide.
    pub fn min_history(&self) -> usize {
        match self {
            ControllerSpec::QpEplus(c) => c.vol_window,
            ControllerSpec::SmpcM100(_) | ControllerSpec::SmpcDh(_) => 0,
            ControllerSpec::MaCross(c) => c.min_history(),
            ControllerSpec::MaSign(c) => c.min_history(),
            ControllerSpec::TrInside(c) | ControllerSpec::TrOutside(c) => c.min_history(),
            // works on the evaluation window only
            ControllerSpec::HistoptRt(_) => 0,
        }
    }

    /// Tunable parameters in canonical order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            ControllerSpec::QpEplus(c) => {
                vec![("beta", c.beta), ("vol_window", c.vol_window as f64)]
            }
            ControllerSpec::SmpcM100(c) => vec![
                ("alpha", c.alpha),
                ("sigma_pert", c.sigma_pert),
                ("scenarios", c.scenarios as f64),
            ],
            ControllerSpec::SmpcDh(c) => vec![
                ("sigma_pert", c.sigma_pert),
                ("scenarios", c.scenarios as f64),
            ],
            ControllerSpec::MaCross(c) => vec![("short", c.short as f64), ("long", c.long as f64)],
            ControllerSpec::MaSign(c) => vec![("p_ma", c.p_ma as f64), ("t_ma", c.t_ma as f64)],
            ControllerSpec::TrInside(c) | ControllerSpec::TrOutside(c) => vec![
                ("t_win", c.t_win as f64),
                ("p_tr", c.p_tr as f64),
                ("eps_tr", c.eps_tr),
            ],
            ControllerSpec::HistoptRt(c) => vec![("t_ho", c.t_ho as f64)],
        }
    }

    /// Copy with one parameter replaced; unknown names are an error.
    pub fn with_param(mut self, name: &str, value: f64) -> Result<Self> {
        let kind = self.kind();
        let unknown = || Error::Config(format!("{kind} has no parameter `{name}`"));
        match &mut self {
            ControllerSpec::QpEplus(c)
            | ControllerSpec::SmpcM100(c)
            | ControllerSpec::SmpcDh(c) => match name {
                "alpha" => c.alpha = value,
                "beta" => c.beta = value,
                "sigma_pert" => c.sigma_pert = value,
                "rate" => c.rate = value,
                "scenarios" => c.scenarios = integral(name, value)?,
                "vol_window" => c.vol_window = integral(name, value)?,
                _ => return Err(unknown()),
            },
            ControllerSpec::MaCross(c) => match name {
                "short" => c.short = integral(name, value)?,
                "long" => c.long = integral(name, value)?,
                _ => return Err(unknown()),
            },
            ControllerSpec::MaSign(c) => match name {
                "p_ma" => c.p_ma = integral(name, value)?,
                "t_ma" => c.t_ma = integral(name, value)?,
                _ => return Err(unknown()),
            },
            ControllerSpec::TrInside(c) | ControllerSpec::TrOutside(c) => match name {
                "t_win" => c.t_win = integral(name, value)?,
                "p_tr" => c.p_tr = integral(name, value)?,
                "eps_tr" => c.eps_tr = value,
                _ => return Err(unknown()),
            },
            ControllerSpec::HistoptRt(c) => match name {
                "t_ho" => c.t_ho = integral(name, value)?,
                _ => return Err(unknown()),
            },
        }
        Ok(self)
    }
}

/// What to do on evaluation days before the controller's warm-up is met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmupPolicy {
    /// Refuse to run.
    #[default]
    Strict,
    /// Stay in cash until the controller can decide.
    HoldCash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub controller: ControllerSpec,
    pub predictor: PredictorKind,
    pub seed: u64,
    pub costs: CostModel,
    pub m0: f64,
    pub warmup: WarmupPolicy,
}

impl RunConfig {
    pub fn new(controller: ControllerSpec, predictor: PredictorKind) -> Self {
        Self {
            controller,
            predictor,
            seed: 0,
            costs: CostModel::default(),
            m0: DEFAULT_M0,
            warmup: WarmupPolicy::Strict,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0.is_finite() && self.m0 > 0.0) {
            return Err(Error::Config(format!("m0 = {} must be > 0", self.m0)));
        }
        self.costs.validate()?;
        self.controller.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub symbol: String,
    /// Controller id, or the baseline name.
    pub controller: String,
    /// Predictor id; empty for baselines.
    pub predictor: String,
    pub eval_start: usize,
    pub n_trades: usize,
    pub t_min_between: usize,
    pub initial_wealth: f64,
    pub final_wealth: f64,
    pub f: f64,
    pub trades: Vec<TradeRecord>,
    /// `W(t)` for `t = eval_start..=T`.
    pub wealth: Vec<f64>,
    /// `J(t)` for `t = eval_start..T`.
    pub signals: Vec<Signal>,
    /// `ŝ(t+1)` for `t = eval_start..T`; empty for baselines.
    pub predictions: Vec<f64>,
}

impl RunMetrics {
    #[allow(clippy::too_many_arguments)]
    fn build(
        series: &PriceSeries,
        controller: String,
        predictor: String,
        m0: f64,
        trades: Vec<TradeRecord>,
        wealth: Vec<f64>,
        signals: Vec<Signal>,
        predictions: Vec<f64>,
    ) -> Self {
        let final_wealth = *wealth.last().expect("wealth trace is nonempty");
        Self {
            symbol: series.symbol().to_string(),
            controller,
            predictor,
            eval_start: series.eval_start(),
            n_trades: trades.len(),
            t_min_between: min_gap(&trades),
            initial_wealth: m0,
            final_wealth,
            f: performance(final_wealth, m0),
            trades,
            wealth,
            signals,
            predictions,
        }
    }

    pub fn ends_invested(&self) -> bool {
        self.trades
            .last()
            .is_some_and(|r| r.kind == crate::portfolio::TradeKind::Buy)
    }
}

/// Minimum distance in trading days between consecutive trades; 0 with fewer
/// than two trades.
pub fn min_gap(trades: &[TradeRecord]) -> usize {
    trades
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .min()
        .unwrap_or(0)
}

/// Mutable controller state carried through a run.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub spec: ControllerSpec,
    pub j_prev: Signal,
    pub virtual_portfolio: VirtualPortfolio,
    start: usize,
    last: usize,
    s0: f64,
}

impl ControllerState {
    pub fn new(spec: ControllerSpec, series: &PriceSeries) -> Self {
        let start = series.eval_start();
        let s0 = series.closes()[start];
        Self {
            spec,
            j_prev: Signal::Cash,
            virtual_portfolio: VirtualPortfolio::new(),
            start,
            last: series.last_index(),
            s0,
        }
    }

    fn decide(
        &mut self,
        closes: &[f64],
        t: usize,
        s_hat: f64,
        rng: &mut RunRng,
        run: &RunConfig,
    ) -> Result<Signal> {
        let view = crate::market_data::HistoryView::from_slice(&closes[..=t]);
        let s_now = closes[t];
        let eps = run.costs.eps_buy;
        let vp = &mut self.virtual_portfolio;
        let t_rel = t - self.start;
        Ok(match &self.spec {
            ControllerSpec::QpEplus(c) => {
                let set = generate_scenarios(s_hat, c, rng);
                let sigma = ml_volatility(&view, c.vol_window)?;
                decide_qp_eplus(s_now, &set, vp, sigma, eps, c)
            }
            ControllerSpec::SmpcM100(c) => {
                let set = generate_scenarios(s_hat, c, rng);
                decide_m100(s_now, &set, vp, eps, c)
            }
            ControllerSpec::SmpcDh(c) => {
                if t_rel > 0 {
                    vp.level = update_trailing_level(vp.level, vp.w);
                }
                let set = generate_scenarios(s_hat, c, rng);
                let horizon = self.last - self.start;
                let refs = reference_scenarios(&set, self.s0, vp.level, t_rel, horizon, c.rate);
                decide_dh(s_now, &set, &refs, vp, eps, c.rate)
            }
            ControllerSpec::MaCross(c) => decide_ma_cross(&view, s_hat, c, self.j_prev)?,
            ControllerSpec::MaSign(c) => decide_ma_sign(&view, s_hat, c)?,
            ControllerSpec::TrInside(c) => decide_tr_inside(&view, s_hat, c, self.j_prev)?,
            ControllerSpec::TrOutside(c) => decide_tr_outside(&view, s_hat, c, self.j_prev)?,
            ControllerSpec::HistoptRt(c) => {
                let window = &closes[self.start..=t];
                if window.len() < c.t_ho {
                    Signal::Cash
                } else {
                    decide_histopt_rt(window, s_hat, c.t_ho, run.m0, &run.costs)?
                }
            }
        })
    }

    fn commit(&mut self, j: Signal, s_now: f64, s_next: f64, eps: f64) {
        let rate = match &self.spec {
            ControllerSpec::QpEplus(c)
            | ControllerSpec::SmpcM100(c)
            | ControllerSpec::SmpcDh(c) => c.rate,
            _ => 0.0,
        };
        self.virtual_portfolio.advance(j, s_now, s_next, eps, rate);
        self.j_prev = j;
    }
}

fn warmup_need(spec: &ControllerSpec, predictor: PredictorKind) -> usize {
    spec.min_history().max(predictor.min_history())
}

/// Backtest with a fixed controller.
pub fn run_backtest(series: &PriceSeries, cfg: &RunConfig) -> Result<RunMetrics> {
    run_backtest_with(series, cfg, |_, _| Ok(()))
}

/// Backtest that calls `on_day(t - eval_start, spec)` before each decision,
/// letting the caller replace controller parameters mid-run. Portfolio,
/// random streams and controller state carry over.
pub fn run_backtest_with<F>(
    series: &PriceSeries,
    cfg: &RunConfig,
    mut on_day: F,
) -> Result<RunMetrics>
where
    F: FnMut(usize, &mut ControllerSpec) -> Result<()>,
{
    cfg.validate()?;
    let start = series.eval_start();
    let last = series.last_index();
    if start >= last {
        return Err(Error::InsufficientData(format!(
            "{}: evaluation window needs at least two days",
            series.symbol()
        )));
    }
    let need = warmup_need(&cfg.controller, cfg.predictor);
    if cfg.warmup == WarmupPolicy::Strict && start < need {
        return Err(Error::Config(format!(
            "{}: {} with {} predictor needs t >= {need} before trading, evaluation starts at t = {start}",
            series.symbol(),
            cfg.controller.kind(),
            cfg.predictor
        )));
    }

    let kind = cfg.controller.kind();
    let labels =
        |purpose: &'static str| [series.symbol(), kind.id(), cfg.predictor.name(), purpose];
    let mut pred_rng = derive_stream(cfg.seed, &labels("predictor"));
    let mut scen_rng = derive_stream(cfg.seed, &labels("scenarios"));

    let closes = series.closes();
    let mut state = PortfolioState::cash_only(cfg.m0);
    let mut ctrl = ControllerState::new(cfg.controller, series);
    let days = last - start;
    let mut trades = Vec::new();
    let mut wealth = Vec::with_capacity(days + 1);
    let mut signals = Vec::with_capacity(days);
    let mut predictions = Vec::with_capacity(days);

    for t in start..last {
        on_day(t - start, &mut ctrl.spec)?;
        if ctrl.spec.kind() != kind {
            return Err(Error::Contract("controller kind changed mid-run".into()));
        }
        ctrl.spec.validate()?;
        let need = warmup_need(&ctrl.spec, cfg.predictor);
        let next = closes[t + 1];
        let j = if t < need {
            if cfg.warmup == WarmupPolicy::Strict {
                return Err(Error::Config(format!(
                    "{}: warm-up of {kind} not met at t = {t}",
                    series.symbol()
                )));
            }
            predictions.push(closes[t]);
            Signal::Cash
        } else {
            let view = series.view(t);
            let hint = (!cfg.predictor.is_causal()).then_some(next);
            let s_hat = predict(cfg.predictor, &view, hint, &mut pred_rng)?;
            predictions.push(s_hat);
            ctrl.decide(closes, t, s_hat, &mut scen_rng, cfg)?
        };
        let (after, record) = step(&state, j, closes[t], &cfg.costs, t);
        state = after;
        trades.extend(record);
        wealth.push(state.wealth);
        signals.push(j);
        ctrl.commit(j, closes[t], next, cfg.costs.eps_buy);
    }
    wealth.push(wealth_at(&state, closes[last]));

    Ok(RunMetrics::build(
        series,
        kind.id().to_string(),
        cfg.predictor.name().to_string(),
        cfg.m0,
        trades,
        wealth,
        signals,
        predictions,
    ))
}

/// Executes a fixed signal sequence over the evaluation window.
pub fn replay_signals(
    series: &PriceSeries,
    signals: &[Signal],
    label: &str,
    costs: &CostModel,
    m0: f64,
) -> Result<RunMetrics> {
    let start = series.eval_start();
    let closes = series.closes();
    if signals.len() != closes.len() - start - 1 {
        return Err(Error::Contract(format!(
            "{} signals for an evaluation window with {} decision days",
            signals.len(),
            closes.len() - start - 1
        )));
    }
    let mut state = PortfolioState::cash_only(m0);
    let mut trades = Vec::new();
    let mut wealth = Vec::with_capacity(signals.len() + 1);
    for (k, j) in signals.iter().enumerate() {
        let t = start + k;
        let (after, record) = step(&state, *j, closes[t], costs, t);
        state = after;
        trades.extend(record);
        wealth.push(state.wealth);
    }
    wealth.push(wealth_at(&state, closes[closes.len() - 1]));
    Ok(RunMetrics::build(
        series,
        label.to_string(),
        String::new(),
        m0,
        trades,
        wealth,
        signals.to_vec(),
        Vec::new(),
    ))
}

pub const BUY_AND_HOLD: &str = "buy-and-hold";
pub const HISTOPT: &str = "histopt";

pub fn buy_and_hold(series: &PriceSeries, costs: &CostModel, m0: f64) -> Result<RunMetrics> {
    let days = series.len() - series.eval_start() - 1;
    replay_signals(series, &vec![Signal::Stock; days], BUY_AND_HOLD, costs, m0)
}

/// Hindsight-optimal run over the evaluation window.
pub fn histopt_baseline(series: &PriceSeries, costs: &CostModel, m0: f64) -> Result<RunMetrics> {
    let traj = optimal_trajectory(series.eval_closes(), m0, costs)?;
    let days = traj.signals.len() - 1;
    let metrics = replay_signals(series, &traj.signals[..days], HISTOPT, costs, m0)?;
    debug_assert_eq!(metrics.final_wealth, traj.final_wealth);
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub controller: String,
    pub predictor: String,
    pub runs: usize,
    /// Mean trade count.
    pub n_trades: f64,
    /// Minimum gap between trades over runs with at least two trades.
    pub t_min: usize,
    pub f_mean: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Percent of runs with `f > 0`.
    pub f_pos: f64,
}

pub fn aggregate(metrics: &[RunMetrics]) -> Result<SummaryRow> {
    let first = metrics
        .first()
        .ok_or_else(|| Error::Domain("cannot aggregate an empty set of runs".into()))?;
    let n = metrics.len() as f64;
    let fs: Vec<f64> = metrics.iter().map(|m| m.f).collect();
    Ok(SummaryRow {
        controller: first.controller.clone(),
        predictor: first.predictor.clone(),
        runs: metrics.len(),
        n_trades: metrics.iter().map(|m| m.n_trades as f64).sum::<f64>() / n,
        t_min: metrics
            .iter()
            .filter(|m| m.n_trades >= 2)
            .map(|m| m.t_min_between)
            .min()
            .unwrap_or(0),
        f_mean: fs.iter().sum::<f64>() / n,
        f_min: fs.iter().copied().fold(f64::INFINITY, f64::min),
        f_max: fs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        f_pos: 100.0 * fs.iter().filter(|f| **f > 0.0).count() as f64 / n,
    })
}

/// Settings shared by every run of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub seed: u64,
    pub costs: CostModel,
    pub m0: f64,
    pub warmup: WarmupPolicy,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            costs: CostModel::default(),
            m0: DEFAULT_M0,
            warmup: WarmupPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub symbol: String,
    pub controller: String,
    pub predictor: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    /// One row per (controller, predictor) in input order, then HistOpt and
    /// Buy-and-Hold.
    pub rows: Vec<SummaryRow>,
    /// Successful runs, in the same order as `rows`, stocks in input order.
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Controlled(usize, usize, usize),
    HistOpt(usize),
    BuyAndHold(usize),
}

/// Full cross product of controllers, predictors and stocks plus baselines.
pub fn run_matrix(
    universe: &[PriceSeries],
    controllers: &[ControllerSpec],
    predictors: &[PredictorKind],
    cfg: &MatrixConfig,
    exec: Execution,
) -> MatrixOutput {
    let mut jobs = Vec::with_capacity((controllers.len() * predictors.len() + 2) * universe.len());
    for c in 0..controllers.len() {
        for p in 0..predictors.len() {
            jobs.extend((0..universe.len()).map(|s| Job::Controlled(c, p, s)));
        }
    }
    jobs.extend((0..universe.len()).map(Job::HistOpt));
    jobs.extend((0..universe.len()).map(Job::BuyAndHold));

    let describe = |job: &Job| -> (usize, String, String) {
        match *job {
            Job::Controlled(c, p, s) => (
                s,
                controllers[c].kind().id().into(),
                predictors[p].name().into(),
            ),
            Job::HistOpt(s) => (s, HISTOPT.into(), String::new()),
            Job::BuyAndHold(s) => (s, BUY_AND_HOLD.into(), String::new()),
        }
    };

    let results = parallel::map(&jobs, exec, |job| match *job {
        Job::Controlled(c, p, s) => {
            let run = RunConfig {
                controller: controllers[c],
                predictor: predictors[p],
                seed: cfg.seed,
                costs: cfg.costs,
                m0: cfg.m0,
                warmup: cfg.warmup,
            };
            run_backtest(&universe[s], &run)
        }
        Job::HistOpt(s) => histopt_baseline(&universe[s], &cfg.costs, cfg.m0),
        Job::BuyAndHold(s) => buy_and_hold(&universe[s], &cfg.costs, cfg.m0),
    });

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut group: Vec<RunMetrics> = Vec::new();
    let mut group_key: Option<(String, String)> = None;
    let flush =
        |group: &mut Vec<RunMetrics>, rows: &mut Vec<SummaryRow>, runs: &mut Vec<RunMetrics>| {
            if let Ok(row) = aggregate(group) {
                rows.push(row);
            }
            runs.append(group);
        };
    for (job, result) in jobs.iter().zip(results) {
        let (s, controller, predictor) = describe(job);
        let key = (controller.clone(), predictor.clone());
        if group_key.as_ref() != Some(&key) {
            flush(&mut group, &mut rows, &mut runs);
            group_key = Some(key);
        }
        match result {
            Ok(m) => group.push(m),
            Err(e) => {
                log::warn!(
                    "{} {controller} {predictor}: excluded: {e}",
                    universe[s].symbol()
                );
                failures.push(RunFailure {
                    symbol: universe[s].symbol().to_string(),
                    controller,
                    predictor,
                    message: e.to_string(),
                });
            }
        }
    }
    flush(&mut group, &mut rows, &mut runs);
    MatrixOutput {
        rows,
        runs,
        failures,
    }
}
