//! One-step-ahead price estimates `ŝ(t+1)`.
//!
//! Three of the five kinds look at the realized next price and are therefore
//! noncausal benchmarks; they only work when the caller hands that price in
//! explicitly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::HistoryView;

/// Absolute size of the sign-predictor perturbation, in currency units.
pub const SIGN_PERTURBATION: f64 = 10.0;

/// Relative floor applied to every estimate: `ŝ >= PRICE_FLOOR * s(t)`.
pub const PRICE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    /// `ŝ(t+1) = s(t+1)`
    Perfect,
    /// `ŝ(t+1) = s(t)`
    Indifferent,
    /// `s(t)` plus Gaussian noise scaled by the mean absolute daily move.
    Random,
    /// Right direction, random magnitude.
    CorrectSign,
    /// Wrong direction, random magnitude.
    WrongSign,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::Perfect,
        PredictorKind::Indifferent,
        PredictorKind::Random,
        PredictorKind::CorrectSign,
        PredictorKind::WrongSign,
    ];

    pub fn is_causal(self) -> bool {
        matches!(self, PredictorKind::Indifferent | PredictorKind::Random)
    }

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Perfect => "perfect",
            PredictorKind::Indifferent => "indifferent",
            PredictorKind::Random => "random",
            PredictorKind::CorrectSign => "correct-sign",
            PredictorKind::WrongSign => "wrong-sign",
        }
    }

    /// Minimum `t` at which [`predict`] can produce a value.
    pub fn min_history(self) -> usize {
        match self {
            PredictorKind::Random => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown predictor `{s}`")))
    }
}

/// Mean of `|s(τ) - s(τ-1)|` over `τ = 1..=t`.
pub fn avg_abs_delta(history: &HistoryView<'_>) -> Result<f64> {
    let past = history.past();
    if past.len() < 2 {
        return Err(Error::InsufficientHistory(
            "average absolute change needs t >= 1".into(),
        ));
    }
    let total: f64 = past.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (past.len() - 1) as f64)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn predict<R: Rng + ?Sized>(
    kind: PredictorKind,
    history: &HistoryView<'_>,
    true_next: Option<f64>,
    rng: &mut R,
) -> Result<f64> {
    let now = history.current();
    let next = || {
        true_next.ok_or_else(|| {
            Error::Contract(format!("{kind} predictor requires the realized next price"))
        })
    };
    let raw = match kind {
        PredictorKind::Perfect => next()?,
        PredictorKind::Indifferent => now,
        PredictorKind::Random => {
            let scale = avg_abs_delta(history)?;
            let eta: f64 = rng.sample(StandardNormal);
            now + eta * scale
        }
        PredictorKind::CorrectSign => {
            let dir = sign(next()? - now);
            let xi: f64 = rng.sample(Open01);
            now + SIGN_PERTURBATION * xi * dir
        }
        PredictorKind::WrongSign => {
            let dir = sign(next()? - now);
            let xi: f64 = rng.sample(Open01);
            now - SIGN_PERTURBATION * xi * dir
        }
    };
    Ok(raw.max(PRICE_FLOOR * now))
}
