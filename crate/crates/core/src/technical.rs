//! Rule-based controllers built on moving averages and trading ranges.
//!
//! Every rule takes the causal history up to `t` plus the estimate
//! `ŝ(t+1)`, which replaces the unknown next close wherever an indicator
//! would need it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::HistoryView;
use crate::portfolio::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaCrossConfig {
    pub short: usize,
    pub long: usize,
}

impl MaCrossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.short == 0 || self.long == 0 {
            return Err(Error::Config("ma-cross lengths must be >= 1".into()));
        }
        if self.short >= self.long {
            return Err(Error::Config(format!(
                "ma-cross needs short < long, got short = {}, long = {}",
                self.short, self.long
            )));
        }
        Ok(())
    }

    /// First `t` with both realized averages defined.
    pub fn min_history(&self) -> usize {
        self.long - 1
    }
}

impl Default for MaCrossConfig {
    fn default() -> Self {
        Self { short: 1, long: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaSignConfig {
    /// Moving-average length.
    pub p_ma: usize,
    /// Number of averages whose consecutive slopes must all be positive.
    pub t_ma: usize,
}

impl MaSignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_ma == 0 {
            return Err(Error::Config("ma-sign p_ma must be >= 1".into()));
        }
        if self.t_ma < 2 {
            return Err(Error::Config(format!(
                "ma-sign t_ma must be >= 2 to define a slope, got {}",
                self.t_ma
            )));
        }
        Ok(())
    }

    pub fn min_history(&self) -> usize {
        (self.t_ma + self.p_ma).saturating_sub(3)
    }
}

impl Default for MaSignConfig {
    fn default() -> Self {
        Self {
            p_ma: 100,
            t_ma: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrConfig {
    /// Window length in trading days.
    pub t_win: usize,
    /// Sub-window length.
    pub p_tr: usize,
    /// Relative corridor threshold.
    pub eps_tr: f64,
}

impl TrConfig {
    pub fn inside() -> Self {
        Self {
            t_win: 261,
            p_tr: 100,
            eps_tr: 0.01,
        }
    }

    pub fn outside() -> Self {
        Self {
            t_win: 261,
            p_tr: 20,
            eps_tr: 0.03,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_tr == 0 {
            return Err(Error::Config("p_tr must be >= 1".into()));
        }
        if self.t_win < 2 * self.p_tr {
            return Err(Error::Config(format!(
                "t_win = {} too short for two sub-windows of p_tr = {}",
                self.t_win, self.p_tr
            )));
        }
        if !(self.eps_tr.is_finite() && self.eps_tr > 0.0) {
            return Err(Error::Config(format!(
                "eps_tr = {} must be > 0",
                self.eps_tr
            )));
        }
        Ok(())
    }

    pub fn sub_windows(&self) -> usize {
        self.t_win / self.p_tr
    }

    pub fn min_history(&self) -> usize {
        self.t_win - 1
    }
}

/// Mean of `values` minus `reference`, summed as deviations so that a flat
/// stretch gives exactly zero.
fn mean_deviation<'a>(values: impl Iterator<Item = &'a f64>, reference: f64, len: usize) -> f64 {
    values.map(|v| v - reference).sum::<f64>() / len as f64
}

/// Mean of `ŝ(t+1), s(t), …, s(t-p+2)` minus `reference`.
fn head_ma_deviation(past: &[f64], s_hat: f64, p: usize, reference: f64) -> f64 {
    let tail = &past[past.len() + 1 - p..];
    ((s_hat - reference) + tail.iter().map(|v| v - reference).sum::<f64>()) / p as f64
}

/// Mean of the realized `s(end-p+1..=end)` minus `reference`.
fn realized_ma_deviation(past: &[f64], end: usize, p: usize, reference: f64) -> f64 {
    mean_deviation(past[end + 1 - p..=end].iter(), reference, p)
}

/// `s_MA(t+1)`: the `p`-day average with `ŝ(t+1)` at its head.
pub fn moving_average(history: &HistoryView<'_>, s_hat: f64, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::Config("moving average length must be >= 1".into()));
    }
    if p == 1 {
        return Ok(s_hat);
    }
    let past = history.past();
    if past.len() < p - 1 {
        return Err(Error::InsufficientHistory(format!(
            "{p}-day average needs {} past prices, have {}",
            p - 1,
            past.len()
        )));
    }
    let reference = history.current();
    Ok(reference + head_ma_deviation(past, s_hat, p, reference))
}

/// Crossing rule on the short-minus-long difference.
pub fn cross_rule(d_now: f64, d_next: f64, j_prev: Signal) -> Signal {
    if d_now <= 0.0 && d_next > 0.0 {
        Signal::Stock
    } else if d_now >= 0.0 && d_next < 0.0 {
        Signal::Cash
    } else {
        j_prev
    }
}

pub fn decide_ma_cross(
    history: &HistoryView<'_>,
    s_hat: f64,
    cfg: &MaCrossConfig,
    j_prev: Signal,
) -> Result<Signal> {
    let past = history.past();
    let t = history.now();
    if t < cfg.min_history() {
        return Err(Error::InsufficientHistory(format!(
            "ma-cross({}, {}) needs t >= {}, at t = {t}",
            cfg.short,
            cfg.long,
            cfg.min_history()
        )));
    }
    let reference = history.current();
    let d_next = head_ma_deviation(past, s_hat, cfg.short, reference)
        - head_ma_deviation(past, s_hat, cfg.long, reference);
    let d_now = realized_ma_deviation(past, t, cfg.short, reference)
        - realized_ma_deviation(past, t, cfg.long, reference);
    Ok(cross_rule(d_now, d_next, j_prev))
}

/// Buys while the last `t_ma - 1` slopes of the `p_ma`-day average are all
/// positive, sells otherwise.
///
/// Consecutive averages share all but one term, so each slope is
/// `(newest - dropped) / p_ma` and only its sign matters.
pub fn decide_ma_sign(history: &HistoryView<'_>, s_hat: f64, cfg: &MaSignConfig) -> Result<Signal> {
    let past = history.past();
    let t = history.now();
    if t < cfg.min_history() {
        return Err(Error::InsufficientHistory(format!(
            "ma-sign({}, {}) needs t >= {}, at t = {t}",
            cfg.t_ma,
            cfg.p_ma,
            cfg.min_history()
        )));
    }
    let p = cfg.p_ma;
    // slope ending at t+1 uses the estimate
    if s_hat - past[t + 1 - p] <= 0.0 {
        return Ok(Signal::Cash);
    }
    let rising = (1..=cfg.t_ma - 2).all(|tau| {
        let newest = t + 1 - tau;
        past[newest] - past[newest - p] > 0.0
    });
    Ok(Signal::from(rising))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaSet {
    /// `(t, s)` of each sub-window maximum, oldest first.
    pub maxima: Vec<(usize, f64)>,
    pub minima: Vec<(usize, f64)>,
}

/// Splits the last `t_win` closes forward into `K = t_win / p_tr` sub-windows
/// (the remainder widens the last one) and records each one's extremes.
/// Ties go to the earliest index.
pub fn local_extrema(history: &HistoryView<'_>, cfg: &TrConfig) -> Result<ExtremaSet> {
    cfg.validate()?;
    let past = history.past();
    if past.len() < cfg.t_win {
        return Err(Error::InsufficientHistory(format!(
            "trading range over {} days at t = {}",
            cfg.t_win,
            history.now()
        )));
    }
    let start = past.len() - cfg.t_win;
    let k_count = cfg.sub_windows();
    let mut maxima = Vec::with_capacity(k_count);
    let mut minima = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let lo = start + k * cfg.p_tr;
        let hi = if k + 1 == k_count {
            past.len()
        } else {
            lo + cfg.p_tr
        };
        let (mut imax, mut imin) = (lo, lo);
        for i in lo + 1..hi {
            if past[i] > past[imax] {
                imax = i;
            }
            if past[i] < past[imin] {
                imin = i;
            }
        }
        maxima.push((imax, past[imax]));
        minima.push((imin, past[imin]));
    }
    Ok(ExtremaSet { maxima, minima })
}

/// Affine extrapolation through the last two points to `t_eval`.
/// `None` if the two points share a time index.
pub fn extrapolate(points: &[(usize, f64)], t_eval: usize) -> Option<f64> {
    let [.., (t1, s1), (t2, s2)] = points else {
        return None;
    };
    if t1 == t2 {
        return None;
    }
    let slope = (s2 - s1) / (*t2 as f64 - *t1 as f64);
    Some((t_eval as f64 - *t2 as f64) * slope + s2)
}

/// Corridor `(ŷ_max(t+1), ŷ_min(t+1))`, or `None` when degenerate.
pub fn corridor(extrema: &ExtremaSet, t: usize) -> Option<(f64, f64)> {
    let y_max = extrapolate(&extrema.maxima, t + 1)?;
    let y_min = extrapolate(&extrema.minima, t + 1)?;
    (y_max > 0.0 && y_min > 0.0).then_some((y_max, y_min))
}

/// Sell near the upper line, buy near the lower one.
pub fn tr_inside_rule(s_hat: f64, y_max: f64, y_min: f64, eps_tr: f64, j_prev: Signal) -> Signal {
    if ((s_hat - y_max) / y_max).abs() < eps_tr {
        Signal::Cash
    } else if ((s_hat - y_min) / y_min).abs() < eps_tr {
        Signal::Stock
    } else {
        j_prev
    }
}

/// Buy on a break above the upper line, sell on a break below the lower one.
pub fn tr_outside_rule(s_hat: f64, y_max: f64, y_min: f64, eps_tr: f64, j_prev: Signal) -> Signal {
    if (s_hat - y_max) / y_max > eps_tr {
        Signal::Stock
    } else if (s_hat - y_min) / y_min < -eps_tr {
        Signal::Cash
    } else {
        j_prev
    }
}

pub fn decide_tr_inside(
    history: &HistoryView<'_>,
    s_hat: f64,
    cfg: &TrConfig,
    j_prev: Signal,
) -> Result<Signal> {
    let extrema = local_extrema(history, cfg)?;
    Ok(match corridor(&extrema, history.now()) {
        Some((y_max, y_min)) => tr_inside_rule(s_hat, y_max, y_min, cfg.eps_tr, j_prev),
        None => j_prev,
    })
}

pub fn decide_tr_outside(
    history: &HistoryView<'_>,
    s_hat: f64,
    cfg: &TrConfig,
    j_prev: Signal,
) -> Result<Signal> {
    let extrema = local_extrema(history, cfg)?;
    Ok(match corridor(&extrema, history.now()) {
        Some((y_max, y_min)) => tr_outside_rule(s_hat, y_max, y_min, cfg.eps_tr, j_prev),
        None => j_prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use proptest::prelude::*;
    use rand::Rng;

    /// Direct summation oracle for `s_MA(k)` on realized prices.
    fn ma_direct(prices: &[f64], k: usize, p: usize) -> f64 {
        prices[k + 1 - p..=k].iter().sum::<f64>() / p as f64
    }

    #[test]
    fn moving_average_examples() {
        let flat = [4.25; 9];
        let v = HistoryView::from_slice(&flat);
        for p in 1..=9 {
            assert_eq!(moving_average(&v, 4.25, p).unwrap(), 4.25);
        }
        let h = [1.0, 2.0, 3.0];
        assert_eq!(
            moving_average(&HistoryView::from_slice(&h), 4.0, 2).unwrap(),
            3.5
        );
        assert_eq!(
            moving_average(&HistoryView::from_slice(&h), 17.0, 1).unwrap(),
            17.0
        );
        assert!(moving_average(&HistoryView::from_slice(&h), 4.0, 5).is_err());
    }

    #[test]
    fn cross_rule_examples() {
        assert_eq!(cross_rule(-1.0, 1.0, Signal::Cash), Signal::Stock);
        assert_eq!(cross_rule(2.0, 3.0, Signal::Cash), Signal::Cash);
        assert_eq!(cross_rule(2.0, 3.0, Signal::Stock), Signal::Stock);
        assert_eq!(cross_rule(1.0, -1.0, Signal::Stock), Signal::Cash);
        // touching from below counts as coming from below
        assert_eq!(cross_rule(0.0, 0.5, Signal::Cash), Signal::Stock);
    }

    #[test]
    fn ma_cross_detects_upward_cross() {
        // long average sits at 10, short (p = 1) jumps from 9 to 11
        let mut h = vec![10.0; 5];
        h.push(9.0);
        h.push(10.0); // t: short 10 vs long ~9.8 -> d(t) > 0
        let cfg = MaCrossConfig { short: 1, long: 3 };
        let v = HistoryView::from_slice(&h);
        // realized d(t) = 10 - (9 + 10 + 10)/3 > 0, so a rise keeps j_prev
        assert_eq!(
            decide_ma_cross(&v, 12.0, &cfg, Signal::Cash).unwrap(),
            Signal::Cash
        );
        // predicted drop below the long average sells
        assert_eq!(
            decide_ma_cross(&v, 8.0, &cfg, Signal::Stock).unwrap(),
            Signal::Cash
        );

        let h2 = [10.0, 10.0, 10.0, 9.0];
        let v2 = HistoryView::from_slice(&h2);
        assert_eq!(
            decide_ma_cross(&v2, 12.0, &cfg, Signal::Cash).unwrap(),
            Signal::Stock
        );
    }

    #[test]
    fn ma_cross_flat_series_never_signals() {
        let h = [7.1; 60];
        let v = HistoryView::from_slice(&h);
        let cfg = MaCrossConfig::default();
        for prev in [Signal::Cash, Signal::Stock] {
            assert_eq!(decide_ma_cross(&v, 7.1, &cfg, prev).unwrap(), prev);
        }
    }

    #[test]
    fn ma_sign_monotone_series() {
        let up: Vec<f64> = (0..40).map(|i| 100.0 + i as f64).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let cfg = MaSignConfig { p_ma: 5, t_ma: 10 };
        assert_eq!(
            decide_ma_sign(&HistoryView::from_slice(&up), 140.0, &cfg).unwrap(),
            Signal::Stock
        );
        assert_eq!(
            decide_ma_sign(&HistoryView::from_slice(&down), 100.0, &cfg).unwrap(),
            Signal::Cash
        );
    }

    #[test]
    fn ma_sign_single_dip_sells() {
        // rising series with one drop placed so exactly one of the nine
        // slopes turns negative
        let p = 3;
        let mut h: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        h[25] = 80.0;
        let t = h.len() - 1;
        let s_hat = h[t] + 1.0;
        let mut ext = h.clone();
        ext.push(s_hat);
        let slopes: Vec<f64> = (0..9)
            .map(|tau| ma_direct(&ext, t + 1 - tau, p) - ma_direct(&ext, t - tau, p))
            .collect();
        assert_eq!(
            slopes.iter().filter(|d| **d <= 0.0).count(),
            1,
            "{slopes:?}"
        );
        let cfg = MaSignConfig { p_ma: p, t_ma: 10 };
        assert_eq!(
            decide_ma_sign(&HistoryView::from_slice(&h), s_hat, &cfg).unwrap(),
            Signal::Cash
        );
    }

    #[test]
    fn ma_sign_matches_direct_slopes() {
        let mut rng = derive_stream(21, &["ma-sign"]);
        for _ in 0..2000 {
            let p = rng.random_range(1..8);
            let t_ma = rng.random_range(2..8);
            let n = t_ma + p + rng.random_range(0..10);
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(90.0..110.0)).collect();
            let s_hat = rng.random_range(90.0..110.0);
            let t = n - 1;
            let mut ext = h.clone();
            ext.push(s_hat);
            let all_up = (0..=t_ma - 2)
                .all(|tau| ma_direct(&ext, t + 1 - tau, p) - ma_direct(&ext, t - tau, p) > 0.0);
            let cfg = MaSignConfig { p_ma: p, t_ma };
            assert_eq!(
                decide_ma_sign(&HistoryView::from_slice(&h), s_hat, &cfg).unwrap(),
                Signal::from(all_up)
            );
        }
    }

    #[test]
    fn extrema_partition_lengths() {
        let cfg = TrConfig::inside();
        assert_eq!(cfg.sub_windows(), 2);
        let h: Vec<f64> = (0..300).map(|i| 50.0 + i as f64).collect();
        let e = local_extrema(&HistoryView::from_slice(&h), &cfg).unwrap();
        let start = 300 - 261;
        // monotone increasing: max at each right edge, min at each left edge
        assert_eq!(
            e.minima,
            vec![(start, h[start]), (start + 100, h[start + 100])]
        );
        assert_eq!(e.maxima, vec![(start + 99, h[start + 99]), (299, h[299])]);
        // last sub-window absorbs the residual: 100 + 61
        assert_eq!(299 - (start + 100) + 1, 161);
    }

    /// Independent scan: chunk the window and take extremes with ties to the
    /// earliest index.
    fn scan_extrema(window: &[f64], offset: usize, p_tr: usize) -> ExtremaSet {
        let k = window.len() / p_tr;
        let mut maxima = vec![];
        let mut minima = vec![];
        for j in 0..k {
            let end = if j == k - 1 {
                window.len()
            } else {
                (j + 1) * p_tr
            };
            let chunk = &window[j * p_tr..end];
            let mx = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mn = chunk.iter().cloned().fold(f64::INFINITY, f64::min);
            let imx = chunk.iter().position(|v| *v == mx).unwrap();
            let imn = chunk.iter().position(|v| *v == mn).unwrap();
            maxima.push((offset + j * p_tr + imx, mx));
            minima.push((offset + j * p_tr + imn, mn));
        }
        ExtremaSet { maxima, minima }
    }

    #[test]
    fn extrema_match_scan_on_random_windows() {
        let mut rng = derive_stream(22, &["extrema"]);
        for _ in 0..1000 {
            let p_tr = rng.random_range(1..15);
            let t_win = 2 * p_tr + rng.random_range(0..30);
            let n = t_win + rng.random_range(0..20);
            // coarse prices so ties happen
            let h: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..20) as f64 + 1.0)
                .collect();
            let cfg = TrConfig {
                t_win,
                p_tr,
                eps_tr: 0.01,
            };
            let got = local_extrema(&HistoryView::from_slice(&h), &cfg).unwrap();
            assert_eq!(got, scan_extrema(&h[n - t_win..], n - t_win, p_tr));
        }
    }

    #[test]
    fn extrema_reject_short_windows() {
        let h = [1.0; 50];
        let bad = TrConfig {
            t_win: 30,
            p_tr: 20,
            eps_tr: 0.01,
        };
        assert!(matches!(
            local_extrema(&HistoryView::from_slice(&h), &bad),
            Err(Error::Config(_))
        ));
        let long = TrConfig {
            t_win: 60,
            p_tr: 20,
            eps_tr: 0.01,
        };
        assert!(matches!(
            local_extrema(&HistoryView::from_slice(&h), &long),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn corridor_line_examples() {
        let y = extrapolate(&[(10, 100.0), (20, 110.0)], 21).unwrap();
        assert_eq!(y, 111.0);
        let y_min = extrapolate(&[(5, 90.0), (15, 92.0)], 21).unwrap();
        assert!((y_min - 93.2).abs() < 1e-12);
        assert!(extrapolate(&[(3, 1.0), (3, 2.0)], 5).is_none());

        assert_eq!(
            tr_inside_rule(111.5, 111.0, y_min, 0.01, Signal::Stock),
            Signal::Cash
        );
        assert_eq!(
            tr_inside_rule(93.0, 111.0, y_min, 0.01, Signal::Cash),
            Signal::Stock
        );
        assert_eq!(
            tr_inside_rule(102.0, 111.0, y_min, 0.01, Signal::Stock),
            Signal::Stock
        );
        assert_eq!(
            tr_inside_rule(102.0, 111.0, y_min, 0.01, Signal::Cash),
            Signal::Cash
        );

        assert_eq!(
            tr_outside_rule(104.0, 100.0, 90.0, 0.03, Signal::Cash),
            Signal::Stock
        );
        assert_eq!(
            tr_outside_rule(96.0, 120.0, 100.0, 0.03, Signal::Stock),
            Signal::Cash
        );
        assert_eq!(
            tr_outside_rule(110.0, 120.0, 100.0, 0.03, Signal::Stock),
            Signal::Stock
        );
        assert_eq!(
            tr_outside_rule(110.0, 120.0, 100.0, 0.03, Signal::Cash),
            Signal::Cash
        );
    }

    #[test]
    fn tr_controllers_on_a_built_window() {
        // two sub-windows of 10 with maxima (9, 100) and (19, 110) and
        // minima (0, 50) and (10, 60): lines give ŷ_max(21) = 112, ŷ_min(21) = 71
        let mut h = vec![0.0; 21];
        for (i, v) in h.iter_mut().enumerate() {
            *v = 80.0 + (i % 3) as f64;
        }
        h[0] = 49.0; // outside the window
        h[1] = 50.0;
        h[10] = 100.0;
        h[11] = 60.0;
        h[20] = 110.0;
        let v = HistoryView::from_slice(&h);
        let cfg = TrConfig {
            t_win: 20,
            p_tr: 10,
            eps_tr: 0.01,
        };
        let e = local_extrema(&v, &cfg).unwrap();
        assert_eq!(e.maxima, vec![(10, 100.0), (20, 110.0)]);
        assert_eq!(e.minima, vec![(1, 50.0), (11, 60.0)]);
        let (y_max, y_min) = corridor(&e, 20).unwrap();
        assert_eq!((y_max, y_min), (111.0, 70.0));
        assert_eq!(
            decide_tr_inside(&v, 111.5, &cfg, Signal::Stock).unwrap(),
            Signal::Cash
        );
        assert_eq!(
            decide_tr_inside(&v, 70.3, &cfg, Signal::Cash).unwrap(),
            Signal::Stock
        );
        let out = TrConfig {
            eps_tr: 0.03,
            ..cfg
        };
        assert_eq!(
            decide_tr_outside(&v, 116.0, &out, Signal::Cash).unwrap(),
            Signal::Stock
        );
        assert_eq!(
            decide_tr_outside(&v, 67.0, &out, Signal::Stock).unwrap(),
            Signal::Cash
        );
        assert_eq!(
            decide_tr_outside(&v, 90.0, &out, Signal::Stock).unwrap(),
            Signal::Stock
        );
    }

    #[test]
    fn negative_corridor_holds() {
        let e = ExtremaSet {
            maxima: vec![(0, 100.0), (10, 50.0)],
            minima: vec![(1, 90.0), (11, 10.0)],
        };
        assert!(corridor(&e, 20).is_none());
    }

    fn signals_for<F>(prices: &[f64], s_hats: &[f64], start: usize, mut decide: F) -> Vec<Signal>
    where
        F: FnMut(&HistoryView<'_>, f64, Signal) -> Signal,
    {
        let mut j = Signal::Cash;
        (start..prices.len())
            .map(|t| {
                j = decide(&HistoryView::from_slice(&prices[..=t]), s_hats[t], j);
                j
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn controllers_are_scale_invariant(seed in 0u64..10_000, exp in -6i32..7) {
            let c = 2f64.powi(exp);
            let mut rng = derive_stream(seed, &["scale"]);
            let n = 120;
            let mut s = 100.0;
            let prices: Vec<f64> = (0..n).map(|_| { s *= 1.0 + rng.random_range(-0.03..0.03); s }).collect();
            let s_hats: Vec<f64> = prices.iter().map(|p| p * (1.0 + rng.random_range(-0.02..0.02))).collect();
            let scaled: Vec<f64> = prices.iter().map(|p| p * c).collect();
            let scaled_hats: Vec<f64> = s_hats.iter().map(|p| p * c).collect();

            let cross = MaCrossConfig { short: 3, long: 12 };
            let sign = MaSignConfig { p_ma: 7, t_ma: 4 };
            let ins = TrConfig { t_win: 40, p_tr: 15, eps_tr: 0.01 };
            let outs = TrConfig { t_win: 40, p_tr: 8, eps_tr: 0.02 };

            let run_all = |p: &[f64], h: &[f64]| {
                (
                    signals_for(p, h, 40, |v, x, j| decide_ma_cross(v, x, &cross, j).unwrap()),
                    signals_for(p, h, 40, |v, x, _| decide_ma_sign(v, x, &sign).unwrap()),
                    signals_for(p, h, 40, |v, x, j| decide_tr_inside(v, x, &ins, j).unwrap()),
                    signals_for(p, h, 40, |v, x, j| decide_tr_outside(v, x, &outs, j).unwrap()),
                )
            };
            prop_assert_eq!(run_all(&prices, &s_hats), run_all(&scaled, &scaled_hats));
        }

        #[test]
        fn ma_sign_two_averages_is_one_slope(prices in prop::collection::vec(1.0f64..100.0, 12..30), s_hat in 1.0f64..100.0, p in 1usize..10) {
            let v = HistoryView::from_slice(&prices);
            let cfg = MaSignConfig { p_ma: p, t_ma: 2 };
            let slope = moving_average(&v, s_hat, p).unwrap() - ma_direct(&prices, prices.len() - 1, p);
            let got = decide_ma_sign(&v, s_hat, &cfg).unwrap();
            // the sign test is exact; the subtraction above can be off by
            // rounding only when the slope is within an ulp of zero
            if slope.abs() > 1e-9 {
                prop_assert_eq!(got, Signal::from(slope > 0.0));
            }
        }
    }
}
