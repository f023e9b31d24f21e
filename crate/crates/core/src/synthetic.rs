//! Geometric-random-walk price fixtures.

use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::{write_price_series, PriceSeries};
use crate::rng::derive_stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub s0: f64,
    /// Daily log drift.
    pub drift: f64,
    /// Daily log volatility.
    pub vol: f64,
    pub days: usize,
}

/// `s(t+1) = s(t) exp(drift + vol η)`, rounded to cents.
pub fn geometric_walk<R: Rng + ?Sized>(
    symbol: &str,
    start: NaiveDate,
    params: &WalkParams,
    rng: &mut R,
) -> Result<PriceSeries> {
    if params.days < 2
        || !params.s0.is_finite()
        || params.s0 <= 0.0
        || !params.vol.is_finite()
        || params.vol < 0.0
    {
        return Err(Error::Config(format!("invalid walk parameters {params:?}")));
    }
    let mut s = params.s0;
    let closes = (0..params.days)
        .map(|t| {
            if t > 0 {
                let eta: f64 = rng.sample(StandardNormal);
                s *= (params.drift + params.vol * eta).exp();
            }
            ((s * 100.0).round() / 100.0).max(0.01)
        })
        .collect();
    PriceSeries::from_closes(symbol, start, closes)
}

/// `count` walks with per-stock start price, drift and volatility drawn from
/// the master seed. Symbols are `SYN01`, `SYN02`, ...
pub fn universe(count: usize, days: usize, seed: u64) -> Result<Vec<PriceSeries>> {
    let start = NaiveDate::from_ymd_opt(2014, 11, 28).expect("valid date");
    (0..count)
        .map(|i| {
            let symbol = format!("SYN{:02}", i + 1);
            let mut rng = derive_stream(seed, &["synthetic", &symbol]);
            let params = WalkParams {
                s0: rng.random_range(20.0..200.0),
                drift: 0.0005 * rng.sample::<f64, _>(StandardNormal),
                vol: rng.random_range(0.01..0.025),
                days,
            };
            geometric_walk(&symbol, start, &params, &mut rng)
        })
        .collect()
}

/// Writes each series as `<SYMBOL>.csv` plus a `manifest.csv` into `dir`.
pub fn write_universe(dir: impl AsRef<Path>, series: &[PriceSeries]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("# symbol,path\n");
    for s in series {
        let file = format!("{}.csv", s.symbol());
        write_price_series(dir.join(&file), s)?;
        manifest.push_str(&format!("{},{file}\n", s.symbol()));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{load_price_series, read_manifest};

    #[test]
    fn universe_is_deterministic_and_positive() {
        let a = universe(4, 300, 9).unwrap();
        let b = universe(4, 300, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, universe(4, 300, 10).unwrap());
        for s in &a {
            assert_eq!(s.len(), 300);
            assert!(s.closes().iter().all(|c| *c > 0.0));
        }
    }

    #[test]
    fn written_universe_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let u = universe(3, 50, 1).unwrap();
        write_universe(dir.path(), &u).unwrap();
        let entries = read_manifest(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(entries.len(), 3);
        for (e, s) in entries.iter().zip(&u) {
            assert_eq!(&load_price_series(&e.path, &e.symbol).unwrap(), s);
        }
    }
}
