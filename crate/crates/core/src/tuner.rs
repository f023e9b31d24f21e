//! Grid-search tuning on training windows, periodic re-tuning inside a
//! continuous backtest, and the train/validation overfitting report.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    buy_and_hold, run_backtest, run_backtest_with, ControllerKind, ControllerSpec, MatrixConfig,
    RunConfig, RunMetrics, WarmupPolicy,
};
use crate::market_data::PriceSeries;
use crate::parallel::{self, Execution};
use crate::predictors::PredictorKind;

/// One grid axis as written in a config file: an explicit list or an
/// inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        #[serde(default = "unit_step")]
        step: f64,
    },
}

fn unit_step() -> f64 {
    1.0
}

impl AxisSpec {
    pub fn expand(&self, name: &str) -> Result<Vec<f64>> {
        let bad = |msg: String| Error::Config(format!("grid parameter `{name}`: {msg}"));
        let mut values = match self {
            AxisSpec::List(v) => v.clone(),
            AxisSpec::Range { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    return Err(bad("bounds must be finite".into()));
                }
                if min > max {
                    return Err(bad(format!("min {min} exceeds max {max}")));
                }
                if *step <= 0.0 {
                    return Err(bad(format!("step {step} must be > 0")));
                }
                let count = ((max - min) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|k| min + k as f64 * step).collect()
            }
        };
        if values.is_empty() {
            return Err(bad("no values".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(bad(format!("value {v} is not finite")));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamGrid {
    pub kind: ControllerKind,
    /// Axes in the controller's canonical parameter order.
    pub axes: Vec<Axis>,
}

impl ParamGrid {
    pub fn new(kind: ControllerKind, specs: &BTreeMap<String, AxisSpec>) -> Result<Self> {
        let canonical: Vec<&str> = ControllerSpec::default_for(kind)
            .params()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        if let Some(name) = specs.keys().find(|n| !canonical.contains(&n.as_str())) {
            return Err(Error::Config(format!(
                "{kind} has no tunable parameter `{name}`"
            )));
        }
        let axes = canonical
            .iter()
            .filter_map(|name| specs.get(*name).map(|s| (name, s)))
            .map(|(name, s)| {
                Ok(Axis {
                    name: name.to_string(),
                    values: s.expand(name)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, axes })
    }

    /// Grid over a single parameter point.
    pub fn singleton(spec: &ControllerSpec) -> Self {
        Self {
            kind: spec.kind(),
            axes: spec
                .params()
                .into_iter()
                .map(|(name, v)| Axis {
                    name: name.to_string(),
                    values: vec![v],
                })
                .collect(),
        }
    }

    pub fn default_for(kind: ControllerKind) -> Self {
        let range = |min: f64, max: f64, step: f64| AxisSpec::Range { min, max, step };
        let list = |v: &[f64]| AxisSpec::List(v.to_vec());
        let axes: Vec<(&str, AxisSpec)> = match kind {
            ControllerKind::QpEplus => vec![("beta", list(&[0.0, 0.5, 1.0, 2.0, 5.0]))],
            ControllerKind::SmpcM100 => vec![
                ("alpha", list(&[1.0, 5.0, 10.0, 20.0])),
                ("sigma_pert", list(&[0.1, 0.3, 1.0])),
            ],
            ControllerKind::SmpcDh => vec![("sigma_pert", list(&[0.1, 0.3, 1.0]))],
            ControllerKind::MaCross => vec![
                ("short", range(1.0, 25.0, 1.0)),
                ("long", range(5.0, 200.0, 1.0)),
            ],
            ControllerKind::MaSign => vec![
                ("p_ma", range(5.0, 150.0, 5.0)),
                ("t_ma", range(2.0, 20.0, 1.0)),
            ],
            ControllerKind::TrInside | ControllerKind::TrOutside => vec![
                ("t_win", list(&[261.0])),
                ("p_tr", range(10.0, 130.0, 10.0)),
                ("eps_tr", list(&[0.005, 0.01, 0.02, 0.03, 0.05])),
            ],
            ControllerKind::HistoptRt => vec![("t_ho", range(1.0, 5.0, 1.0))],
        };
        let specs: BTreeMap<String, AxisSpec> =
            axes.into_iter().map(|(n, s)| (n.to_string(), s)).collect();
        Self::new(kind, &specs).expect("built-in grids are valid")
    }

    /// Valid parameter points in ascending lexicographic order of their
    /// value tuples; combinations violating the controller's invariants
    /// (e.g. `short >= long`) are skipped.
    pub fn points(&self) -> Result<Vec<ControllerSpec>> {
        let base = ControllerSpec::default_for(self.kind);
        let mut out = vec![base];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for spec in &out {
                for v in &axis.values {
                    next.push(spec.with_param(&axis.name, *v)?);
                }
            }
            out = next;
        }
        out.retain(|s| s.validate().is_ok());
        if out.is_empty() {
            return Err(Error::Config(format!(
                "{} grid has no valid parameter point",
                self.kind
            )));
        }
        Ok(out)
    }
}

fn tuple_of(spec: &ControllerSpec, grid: &ParamGrid) -> Vec<(String, f64)> {
    let all = spec.params();
    grid.axes
        .iter()
        .map(|a| {
            let v = all
                .iter()
                .find(|(n, _)| *n == a.name)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN);
            (a.name.clone(), v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub spec: ControllerSpec,
    /// Values of the grid axes at the optimum.
    pub params: Vec<(String, f64)>,
    pub f_train: f64,
    pub evaluated: usize,
}

/// Exhaustive search for the point with the best return on `train`.
/// Training runs hold cash until each point's warm-up is met.
pub fn grid_search(
    grid: &ParamGrid,
    train: &PriceSeries,
    predictor: PredictorKind,
    cfg: &MatrixConfig,
    exec: Execution,
) -> Result<GridResult> {
    let points = grid.points()?;
    let fs = parallel::map(&points, exec, |spec| {
        let run = RunConfig {
            controller: *spec,
            predictor,
            seed: cfg.seed,
            costs: cfg.costs,
            m0: cfg.m0,
            warmup: WarmupPolicy::HoldCash,
        };
        run_backtest(train, &run).map(|m| m.f)
    });
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in fs.into_iter().enumerate() {
        let f = f?;
        // points are in ascending tuple order, so ties keep the earlier one
        if best.is_none_or(|(_, bf)| f > bf) {
            best = Some((i, f));
        }
    }
    let (i, f_train) = best.expect("grid is nonempty");
    Ok(GridResult {
        spec: points[i],
        params: tuple_of(&points[i], grid),
        f_train,
        evaluated: points.len(),
    })
}

/// Continuous backtest over the evaluation window in which the parameters
/// are re-tuned every `period` evaluation days on the preceding `lookback`
/// days.
pub fn recursive_retune(
    series: &PriceSeries,
    grid: &ParamGrid,
    period: usize,
    lookback: usize,
    predictor: PredictorKind,
    cfg: &MatrixConfig,
    exec: Execution,
) -> Result<RunMetrics> {
    if period == 0 || lookback < 2 {
        return Err(Error::Config(format!(
            "re-tuning needs period >= 1 and lookback >= 2, got {period} and {lookback}"
        )));
    }
    let start = series.eval_start();
    if start < lookback {
        return Err(Error::InsufficientHistory(format!(
            "{}: lookback of {lookback} days before evaluation start {start}",
            series.symbol()
        )));
    }
    let tune_at = |t: usize| -> Result<ControllerSpec> {
        let window = series.slice(t - lookback..t)?;
        Ok(grid_search(grid, &window, predictor, cfg, exec)?.spec)
    };
    let run = RunConfig {
        controller: tune_at(start)?,
        predictor,
        seed: cfg.seed,
        costs: cfg.costs,
        m0: cfg.m0,
        warmup: cfg.warmup,
    };
    run_backtest_with(series, &run, |rel, spec| {
        if rel > 0 && rel % period == 0 {
            *spec = tune_at(start + rel)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitRow {
    pub symbol: String,
    pub params: Vec<(String, f64)>,
    pub f_train: f64,
    pub f_val: f64,
    /// Buy-and-hold return on the validation window.
    pub f_val_bh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverfitAverages {
    pub f_train: f64,
    pub f_val: f64,
    pub f_val_bh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitReport {
    pub rows: Vec<OverfitRow>,
    /// Means over `rows`; `None` when every stock failed.
    pub averages: Option<OverfitAverages>,
    /// `(symbol, message)` for stocks excluded from the report.
    pub failures: Vec<(String, String)>,
}

/// Index of the first date on or after `split`, checked to leave at least
/// two training and two validation days.
pub fn split_index(series: &PriceSeries, split: NaiveDate) -> Result<usize> {
    let idx = series.dates().partition_point(|d| *d < split);
    if idx < 2 || idx + 2 > series.len() {
        return Err(Error::Domain(format!(
            "{}: split {split} leaves {idx} training and {} validation days",
            series.symbol(),
            series.len() - idx
        )));
    }
    Ok(idx)
}

fn overfit_row(
    series: &PriceSeries,
    grid: &ParamGrid,
    split: NaiveDate,
    predictor: PredictorKind,
    cfg: &MatrixConfig,
    exec: Execution,
) -> Result<OverfitRow> {
    let idx = split_index(series, split)?;
    let train = series.slice(0..idx)?;
    let best = grid_search(grid, &train, predictor, cfg, exec)?;
    let validation = series.clone().with_eval_start(idx)?;
    let run = RunConfig {
        controller: best.spec,
        predictor,
        seed: cfg.seed,
        costs: cfg.costs,
        m0: cfg.m0,
        warmup: cfg.warmup,
    };
    let val = run_backtest(&validation, &run)?;
    let bh = buy_and_hold(&validation, &cfg.costs, cfg.m0)?;
    Ok(OverfitRow {
        symbol: series.symbol().to_string(),
        params: best.params,
        f_train: best.f_train,
        f_val: val.f,
        f_val_bh: bh.f,
    })
}

/// Tune on data before `split`, validate the frozen parameters after it.
pub fn overfitting_report(
    universe: &[PriceSeries],
    grid: &ParamGrid,
    split: NaiveDate,
    predictor: PredictorKind,
    cfg: &MatrixConfig,
    exec: Execution,
) -> OverfitReport {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for series in universe {
        match overfit_row(series, grid, split, predictor, cfg, exec) {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("{}: excluded from overfitting report: {e}", series.symbol());
                failures.push((series.symbol().to_string(), e.to_string()));
            }
        }
    }
    let averages = (!rows.is_empty()).then(|| {
        let n = rows.len() as f64;
        OverfitAverages {
            f_train: rows.iter().map(|r| r.f_train).sum::<f64>() / n,
            f_val: rows.iter().map(|r| r.f_val).sum::<f64>() / n,
            f_val_bh: rows.iter().map(|r| r.f_val_bh).sum::<f64>() / n,
        }
    });
    OverfitReport {
        rows,
        averages,
        failures,
    }
}
