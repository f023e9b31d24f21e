//! Experiment configuration, command dispatch and report writing for the
//! `tradectl` binary.
//!
//! A run is described by one TOML file. Omitted keys take their defaults,
//! nested sections may be overridden partially, and command-line flags win
//! over the file. The merged configuration is written next to the outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    run_matrix, ControllerKind, ControllerSpec, HistOptRtConfig, MatrixConfig, MatrixOutput,
    RunMetrics, SummaryRow, WarmupPolicy, BUY_AND_HOLD, DEFAULT_M0, HISTOPT,
};
use crate::histopt::{optimal_trajectory, OptimalTrajectory};
use crate::market_data::{load_price_series, read_manifest, PriceSeries};
use crate::parallel::{self, Execution};
use crate::portfolio::CostModel;
use crate::predictors::PredictorKind;
use crate::smpc::SmpcConfig;
use crate::synthetic;
use crate::technical::{MaCrossConfig, MaSignConfig, TrConfig};
use crate::tuner::{overfitting_report, recursive_retune, AxisSpec, OverfitReport, ParamGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ControllerParams {
    pub qp_eplus: SmpcConfig,
    pub smpc_m100: SmpcConfig,
    pub smpc_dh: SmpcConfig,
    pub ma_cross: MaCrossConfig,
    pub ma_sign: MaSignConfig,
    pub tr_inside: TrConfig,
    pub tr_outside: TrConfig,
    pub histopt_rt: HistOptRtConfig,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            qp_eplus: SmpcConfig::qp_eplus(),
            smpc_m100: SmpcConfig::m100(),
            smpc_dh: SmpcConfig::dh(),
            ma_cross: MaCrossConfig::default(),
            ma_sign: MaSignConfig::default(),
            tr_inside: TrConfig::inside(),
            tr_outside: TrConfig::outside(),
            histopt_rt: HistOptRtConfig::default(),
        }
    }
}

impl ControllerParams {
    pub fn spec(&self, kind: ControllerKind) -> ControllerSpec {
        match kind {
            ControllerKind::QpEplus => ControllerSpec::QpEplus(self.qp_eplus),
            ControllerKind::SmpcM100 => ControllerSpec::SmpcM100(self.smpc_m100),
            ControllerKind::SmpcDh => ControllerSpec::SmpcDh(self.smpc_dh),
            ControllerKind::MaCross => ControllerSpec::MaCross(self.ma_cross),
            ControllerKind::MaSign => ControllerSpec::MaSign(self.ma_sign),
            ControllerKind::TrInside => ControllerSpec::TrInside(self.tr_inside),
            ControllerKind::TrOutside => ControllerSpec::TrOutside(self.tr_outside),
            ControllerKind::HistoptRt => ControllerSpec::HistoptRt(self.histopt_rt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSettings {
    pub controller: ControllerKind,
    pub predictor: PredictorKind,
    /// First validation day; falls back to the experiment's split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_date: Option<NaiveDate>,
    /// Axes to search; empty means the controller's default grid.
    pub grid: BTreeMap<String, AxisSpec>,
    /// Re-tuning period in evaluation days; 0 disables re-tuning.
    pub period: usize,
    pub lookback: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            controller: ControllerKind::MaCross,
            predictor: PredictorKind::Indifferent,
            split_date: None,
            grid: BTreeMap::new(),
            period: 0,
            lookback: 261,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `symbol,path` manifest of price CSVs.
    pub manifest: PathBuf,
    /// First evaluation day. Without it the last `eval_days` closes form the
    /// evaluation window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_date: Option<NaiveDate>,
    pub eval_days: usize,
    pub seed: u64,
    pub m0: f64,
    pub costs: CostModel,
    pub warmup: WarmupPolicy,
    pub controllers: Vec<ControllerKind>,
    pub predictors: Vec<PredictorKind>,
    pub out_dir: PathBuf,
    /// Worker threads, 0 for one per core, 1 for sequential execution.
    pub jobs: usize,
    /// Write per-run trade logs and traces.
    pub write_runs: bool,
    pub params: ControllerParams,
    pub tune: TuneSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data/synthetic/manifest.csv"),
            split_date: None,
            eval_days: 261,
            seed: 42,
            m0: DEFAULT_M0,
            costs: CostModel::default(),
            warmup: WarmupPolicy::Strict,
            controllers: ControllerKind::ALL.to_vec(),
            predictors: PredictorKind::ALL.to_vec(),
            out_dir: PathBuf::from("out"),
            jobs: 0,
            write_runs: true,
            params: ControllerParams::default(),
            tune: TuneSettings::default(),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "grid" => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses `text` on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base =
            toml::Table::try_from(Self::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overlay);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, resolving a relative manifest against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0.is_finite() && self.m0 > 0.0) {
            return Err(Error::Config(format!("m0 = {} must be > 0", self.m0)));
        }
        self.costs.validate()?;
        if self.eval_days < 2 {
            return Err(Error::Config(format!(
                "eval_days = {} must be >= 2",
                self.eval_days
            )));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config(
                "controllers: at least one controller required".into(),
            ));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config(
                "predictors: at least one predictor required".into(),
            ));
        }
        for kind in &self.controllers {
            self.params
                .spec(*kind)
                .validate()
                .map_err(|e| Error::Config(format!("params.{kind}: {e}")))?;
        }
        Ok(())
    }

    pub fn controller_specs(&self) -> Vec<ControllerSpec> {
        self.controllers
            .iter()
            .map(|k| self.params.spec(*k))
            .collect()
    }

    pub fn matrix_config(&self) -> MatrixConfig {
        MatrixConfig {
            seed: self.seed,
            costs: self.costs,
            m0: self.m0,
            warmup: self.warmup,
        }
    }

    pub fn execution(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// Grid for `[tune]`: the configured axes or the controller's default.
    pub fn tune_grid(&self) -> Result<ParamGrid> {
        if self.tune.grid.is_empty() {
            Ok(ParamGrid::default_for(self.tune.controller))
        } else {
            ParamGrid::new(self.tune.controller, &self.tune.grid)
        }
    }
}

/// Loads every manifest entry and sets its evaluation window.
pub fn load_universe(cfg: &ExperimentConfig) -> Result<Vec<PriceSeries>> {
    let entries = read_manifest(&cfg.manifest)?;
    entries
        .iter()
        .map(|e| {
            let series = load_price_series(&e.path, &e.symbol)?;
            match cfg.split_date {
                Some(d) => crate::market_data::split(series, d),
                None => {
                    if series.len() <= cfg.eval_days {
                        return Err(Error::InsufficientData(format!(
                            "{}: {} closes, need more than eval_days = {}",
                            e.path.display(),
                            series.len(),
                            cfg.eval_days
                        )));
                    }
                    let start = series.len() - cfg.eval_days;
                    series.with_eval_start(start)
                }
            }
        })
        .collect()
}

fn predictor_label(p: &str) -> &str {
    if p.is_empty() {
        "-"
    } else {
        p
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("controller,predictor,runs,n_trades,t_min,f_mean,f_min,f_max,f_pos\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.2},{},{:.4},{:.4},{:.4},{:.4}",
            r.controller,
            predictor_label(&r.predictor),
            r.runs,
            r.n_trades,
            r.t_min,
            r.f_mean,
            r.f_min,
            r.f_max,
            r.f_pos
        );
    }
    out
}

fn controller_label(id: &str) -> String {
    match id {
        HISTOPT => "HistOpt".to_string(),
        BUY_AND_HOLD => "Buy-and-Hold".to_string(),
        other => other
            .parse::<ControllerKind>()
            .map(|k| k.label().to_string())
            .unwrap_or_else(|_| other.to_string()),
    }
}

fn case_title(p: &str) -> String {
    let (n, text) = match p.parse::<PredictorKind>() {
        Ok(PredictorKind::Perfect) => (1, "Perfect: s^(t+1) = s(t+1)"),
        Ok(PredictorKind::Indifferent) => (2, "Indifferent: s^(t+1) = s(t)"),
        Ok(PredictorKind::Random) => (3, "Random: s^(t+1) = s(t) + eta(t) mean|ds|"),
        Ok(PredictorKind::CorrectSign) => (4, "Correct sign: s^(t+1) = s(t) + 10 xi(t) sign(ds)"),
        Ok(PredictorKind::WrongSign) => (5, "Wrong sign: s^(t+1) = s(t) - 10 xi(t) sign(ds)"),
        Err(_) => return "Baselines".to_string(),
    };
    format!("{n}. {text}")
}

/// Aligned text table grouped by prediction case, baselines last.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let header = format!(
        "{:<14}{:>8}{:>7}{:>10}{:>10}{:>10}{:>8}",
        "Controller", "N_tr", "t_min", "f_mean", "f_min", "f_max", "F_pos"
    );
    let rule = "-".repeat(header.len());
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.predictor.as_str()) {
            order.push(&r.predictor);
        }
    }
    // baselines carry an empty predictor and go last
    order.sort_by_key(|p| p.is_empty());
    let mut out = String::new();
    for p in order {
        let _ = writeln!(out, "{}\n{rule}\n{header}\n{rule}", case_title(p));
        for r in rows.iter().filter(|r| r.predictor == p) {
            let _ = writeln!(
                out,
                "{:<14}{:>8.1}{:>7}{:>10.1}{:>10.1}{:>10.1}{:>8.1}",
                controller_label(&r.controller),
                r.n_trades,
                r.t_min,
                r.f_mean,
                r.f_min,
                r.f_max,
                r.f_pos
            );
        }
        let _ = writeln!(out);
    }
    out
}

pub fn trade_log_csv(run: &RunMetrics, series: &PriceSeries) -> String {
    let mut out = String::from("t,date,kind,price,shares,cash_after,wealth_after\n");
    for r in &run.trades {
        let _ = writeln!(
            out,
            "{},{},{},{:.2},{},{:.2},{:.2}",
            r.t,
            series.dates()[r.t],
            r.kind.as_str(),
            r.price,
            r.shares,
            r.cash_after,
            r.wealth_after
        );
    }
    out
}

/// Tidy `(t, series, value)` rows for plotting.
pub fn trace_csv(run: &RunMetrics, series: &PriceSeries) -> String {
    let mut out = String::from("t,series,value\n");
    let start = run.eval_start;
    for (k, w) in run.wealth.iter().enumerate() {
        let t = start + k;
        let _ = writeln!(out, "{t},price,{:.2}", series.closes()[t]);
        let _ = writeln!(out, "{t},wealth,{w:.2}");
        if let Some(j) = run.signals.get(k) {
            let _ = writeln!(out, "{t},signal,{}", j.as_u8());
        }
        if let Some(p) = run.predictions.get(k) {
            let _ = writeln!(out, "{t},prediction,{p:.4}");
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `effective_config.toml` with the manifest as an absolute path so
/// the file can be re-run from anywhere.
fn echo_config(cfg: &ExperimentConfig) -> Result<()> {
    let mut echoed = cfg.clone();
    if let Ok(abs) = std::fs::canonicalize(&cfg.manifest) {
        echoed.manifest = abs;
    }
    write_file(
        &cfg.out_dir.join("effective_config.toml"),
        &echoed.to_toml()?,
    )
}

fn run_file_stem(run: &RunMetrics) -> String {
    if run.predictor.is_empty() {
        format!("{}__{}", run.symbol, run.controller)
    } else {
        format!("{}__{}__{}", run.symbol, run.controller, run.predictor)
    }
}

/// Runs the full matrix and writes `summary.csv`, `summary.txt`, the
/// effective config and, if enabled, per-run trade logs and traces.
pub fn cmd_backtest(cfg: &ExperimentConfig) -> Result<MatrixOutput> {
    cfg.validate()?;
    let universe = load_universe(cfg)?;
    let specs = cfg.controller_specs();
    let output = parallel::with_threads(cfg.jobs, || {
        run_matrix(
            &universe,
            &specs,
            &cfg.predictors,
            &cfg.matrix_config(),
            cfg.execution(),
        )
    })?;

    create_dir(&cfg.out_dir)?;
    echo_config(cfg)?;
    write_file(&cfg.out_dir.join("summary.csv"), &summary_csv(&output.rows))?;
    let mut table = summary_table(&output.rows);
    if !output.failures.is_empty() {
        let _ = writeln!(table, "Excluded runs:");
        for f in &output.failures {
            let _ = writeln!(
                table,
                "  {} {} {}: {}",
                f.symbol,
                f.controller,
                predictor_label(&f.predictor),
                f.message
            );
        }
    }
    write_file(&cfg.out_dir.join("summary.txt"), &table)?;

    if cfg.write_runs {
        let runs_dir = cfg.out_dir.join("runs");
        create_dir(&runs_dir)?;
        for run in &output.runs {
            let series = universe
                .iter()
                .find(|s| s.symbol() == run.symbol)
                .expect("run belongs to a loaded series");
            let stem = run_file_stem(run);
            write_file(
                &runs_dir.join(format!("{stem}.trades.csv")),
                &trade_log_csv(run, series),
            )?;
            write_file(
                &runs_dir.join(format!("{stem}.trace.csv")),
                &trace_csv(run, series),
            )?;
        }
    }
    Ok(output)
}

fn params_text(params: &[(String, f64)]) -> String {
    params
        .iter()
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn overfit_csv(report: &OverfitReport) -> String {
    let mut out = String::from("symbol,params,f_train,f_val,f_val_bh\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4}",
            r.symbol,
            params_text(&r.params),
            r.f_train,
            r.f_val,
            r.f_val_bh
        );
    }
    if let Some(a) = report.averages {
        let _ = writeln!(
            out,
            "average,,{:.4},{:.4},{:.4}",
            a.f_train, a.f_val, a.f_val_bh
        );
    }
    out
}

pub fn overfit_table(report: &OverfitReport) -> String {
    let mut out = format!(
        "{:<10}{:<28}{:>10}{:>10}{:>10}\n",
        "Stock", "Parameters", "f_train", "f_val", "f_val_BH"
    );
    for r in &report.rows {
        let params: Vec<String> = r.params.iter().map(|(_, v)| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{:<10}{:<28}{:>10.1}{:>10.1}{:>10.1}",
            r.symbol,
            format!("({})", params.join(", ")),
            r.f_train,
            r.f_val,
            r.f_val_bh
        );
    }
    if let Some(a) = report.averages {
        let _ = writeln!(
            out,
            "{:<10}{:<28}{:>10.1}{:>10.1}{:>10.1}",
            "Average", "", a.f_train, a.f_val, a.f_val_bh
        );
    }
    for (symbol, msg) in &report.failures {
        let _ = writeln!(out, "excluded {symbol}: {msg}");
    }
    out
}

/// First validation date for `tune`: `[tune].split_date`, then the top-level
/// `split_date`, then the start of the last `eval_days` of the first series.
fn tune_split(cfg: &ExperimentConfig, universe: &[PriceSeries]) -> Result<NaiveDate> {
    if let Some(d) = cfg.tune.split_date.or(cfg.split_date) {
        return Ok(d);
    }
    let first = universe
        .first()
        .ok_or_else(|| Error::InsufficientData("empty universe".into()))?;
    Ok(first.dates()[first.eval_start()])
}

/// Overfitting report, plus a re-tuned backtest per stock when
/// `[tune].period > 0`.
pub fn cmd_tune(cfg: &ExperimentConfig) -> Result<OverfitReport> {
    cfg.validate()?;
    let grid = cfg.tune_grid()?;
    grid.points()?;
    let universe = load_universe(cfg)?;
    let split = tune_split(cfg, &universe)?;
    let mc = cfg.matrix_config();
    let exec = cfg.execution();
    let (report, retuned) = parallel::with_threads(cfg.jobs, || -> Result<_> {
        let report = overfitting_report(&universe, &grid, split, cfg.tune.predictor, &mc, exec);
        let retuned = if cfg.tune.period > 0 {
            universe
                .iter()
                .map(|s| {
                    let s = crate::market_data::split(s.clone(), split)?;
                    recursive_retune(
                        &s,
                        &grid,
                        cfg.tune.period,
                        cfg.tune.lookback,
                        cfg.tune.predictor,
                        &mc,
                        exec,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok((report, retuned))
    })??;

    create_dir(&cfg.out_dir)?;
    echo_config(cfg)?;
    write_file(&cfg.out_dir.join("overfit.csv"), &overfit_csv(&report))?;
    write_file(&cfg.out_dir.join("overfit.txt"), &overfit_table(&report))?;
    if !retuned.is_empty() {
        let mut out = String::from("symbol,n_trades,t_min,f\n");
        for r in &retuned {
            let _ = writeln!(
                out,
                "{},{},{},{:.4}",
                r.symbol, r.n_trades, r.t_min_between, r.f
            );
        }
        write_file(&cfg.out_dir.join("retune.csv"), &out)?;
    }
    Ok(report)
}

pub fn trajectory_csv(traj: &OptimalTrajectory, series: &PriceSeries) -> String {
    let mut out = String::from("t,date,price,signal,wealth\n");
    for (t, (j, w)) in traj.signals.iter().zip(&traj.wealth).enumerate() {
        let _ = writeln!(
            out,
            "{t},{},{:.2},{},{w:.2}",
            series.dates()[t],
            series.closes()[t],
            j.as_u8()
        );
    }
    out
}

/// Hindsight-optimal trajectory over a whole CSV; writes
/// `<out>/histopt.csv` when `out` is given.
pub fn cmd_histopt(
    csv: &Path,
    costs: &CostModel,
    m0: f64,
    out: Option<&Path>,
) -> Result<OptimalTrajectory> {
    costs.validate()?;
    let symbol = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    let series = load_price_series(csv, symbol)?;
    let traj = optimal_trajectory(series.closes(), m0, costs)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("histopt.csv"), &trajectory_csv(&traj, &series))?;
    }
    Ok(traj)
}

#[derive(Debug, Parser)]
#[command(
    name = "tradectl",
    version,
    about = "Backtest single-stock trading controllers"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for all random streams
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated controller ids
    #[arg(long, global = true, value_delimiter = ',')]
    pub controllers: Option<Vec<String>>,
    /// Comma-separated predictor ids
    #[arg(long, global = true, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    /// Worker threads (0 = one per core, 1 = sequential)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every controller x predictor on every stock, plus baselines
    Backtest,
    /// Tune on the training window and validate after the split
    Tune,
    /// Dump the hindsight-optimal trajectory of one price CSV
    Histopt {
        csv: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        eps_buy: f64,
        #[arg(long, default_value_t = 0.01)]
        eps_sell: f64,
        #[arg(long, default_value_t = DEFAULT_M0)]
        m0: f64,
    },
    /// Generate geometric-random-walk fixtures and a manifest
    Synth {
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 522)]
        days: usize,
    },
}

impl GlobalArgs {
    /// Config file (or defaults) with flag overrides applied.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(list) = &self.controllers {
            cfg.controllers = list
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<_>>()?;
        }
        if let Some(list) = &self.predictors {
            cfg.predictors = list
                .iter()
                .map(|s| s.trim().parse())
                .collect::<Result<_>>()?;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Executes a parsed command line, printing human-readable results.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Backtest => {
            let cfg = cli.global.experiment_config()?;
            let out = cmd_backtest(&cfg)?;
            print!("{}", summary_table(&out.rows));
            for f in &out.failures {
                eprintln!(
                    "warning: excluded {} {} {}: {}",
                    f.symbol,
                    f.controller,
                    predictor_label(&f.predictor),
                    f.message
                );
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Tune => {
            let cfg = cli.global.experiment_config()?;
            let report = cmd_tune(&cfg)?;
            print!("{}", overfit_table(&report));
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Histopt {
            csv,
            eps_buy,
            eps_sell,
            m0,
        } => {
            let costs = CostModel {
                eps_buy: *eps_buy,
                eps_sell: *eps_sell,
            };
            let traj = cmd_histopt(csv, &costs, *m0, cli.global.out.as_deref())?;
            let bits: String = traj
                .signals
                .iter()
                .map(|j| char::from(b'0' + j.as_u8()))
                .collect();
            println!("signals {bits}");
            println!("trades {}", traj.n_trades);
            println!("final_wealth {:.2}", traj.final_wealth);
        }
        Command::Synth { count, days } => {
            let seed = cli.global.seed.unwrap_or(7);
            let dir = cli
                .global
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("data/synthetic"));
            let universe = synthetic::universe(*count, *days, seed)?;
            synthetic::write_universe(&dir, &universe)?;
            println!("wrote {count} series of {days} days to {}", dir.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 9\n[params.tr-outside]\neps_tr = 0.05\n[params.qp-eplus]\nbeta = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(
            cfg.params.tr_outside,
            TrConfig {
                eps_tr: 0.05,
                ..TrConfig::outside()
            }
        );
        assert_eq!(
            cfg.params.qp_eplus,
            SmpcConfig {
                beta: 2.0,
                ..SmpcConfig::qp_eplus()
            }
        );
        assert_eq!(cfg.params.tr_inside, TrConfig::inside());
    }

    #[test]
    fn bad_fields_are_named() {
        let err = ExperimentConfig::from_toml_str("sed = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("sed"), "{err}");
        let err = ExperimentConfig::from_toml_str("[params.ma-cross]\nshort = 60\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("ma-cross"), "{err}");
        let err = ExperimentConfig::from_toml_str("controllers = [\"psychic\"]\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("psychic"), "{err}");
    }

    #[test]
    fn tune_grid_parses_ranges_and_lists() {
        let cfg = ExperimentConfig::from_toml_str(
            "[tune]\ncontroller = \"ma-cross\"\n[tune.grid]\nshort = [1, 2]\nlong = { min = 5, max = 7 }\n",
        )
        .unwrap();
        let grid = cfg.tune_grid().unwrap();
        assert_eq!(grid.axes[0].values, vec![1.0, 2.0]);
        assert_eq!(grid.axes[1].values, vec![5.0, 6.0, 7.0]);
        let bad =
            ExperimentConfig::from_toml_str("[tune.grid]\nlong = { min = 9, max = 7 }\n").unwrap();
        assert!(bad.tune_grid().unwrap_err().to_string().contains("long"));
    }

    #[test]
    fn summary_formats() {
        let row = SummaryRow {
            controller: "qp-eplus".into(),
            predictor: "perfect".into(),
            runs: 30,
            n_trades: 56.0,
            t_min: 1,
            f_mean: 150.71,
            f_min: 40.8,
            f_max: 534.5,
            f_pos: 100.0,
        };
        let csv = summary_csv(std::slice::from_ref(&row));
        assert!(csv.ends_with("qp-eplus,perfect,30,56.00,1,150.7100,40.8000,534.5000,100.0000\n"));
        let table = summary_table(&[row]);
        assert!(table.starts_with("1. Perfect"));
        assert!(table.contains("QP-E+"));
        assert!(table.contains("150.7"));
    }
}
