// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsWorse,
    HigherIsBetter,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::HigherIsWorse => "higher_is_worse",
            Polarity::HigherIsBetter => "higher_is_better",
        }
    }

    /// Sign a correlation with a risk measure is expected to have.
    pub fn expected_sign(self) -> f64 {
        match self {
            Polarity::HigherIsWorse => 1.0,
            Polarity::HigherIsBetter => -1.0,
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher_is_worse" => Ok(Polarity::HigherIsWorse),
            "higher_is_better" => Ok(Polarity::HigherIsBetter),
            _ => Err(Error::Invalid(format!(
                "polarity must be higher_is_worse or higher_is_better, got {s:?}"
            ))),
        }
    }
}

/// An external country-level indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub name: String,
    pub year: Option<i32>,
    pub polarity: Polarity,
    pub values: BTreeMap<String, f64>,
}

impl IndicatorSeries {
    pub fn new(
        name: impl Into<String>,
        polarity: Polarity,
        values: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        let mut map = BTreeMap::new();
        for (country, v) in values {
            if !v.is_finite() {
                return Err(Error::Invalid(format!("{name}: non-finite value for {country}")));
            }
            if map.insert(country.clone(), v).is_some() {
                return Err(Error::Invalid(format!("{name}: duplicate country {country}")));
            }
        }
        Ok(Self {
            name,
            year: None,
            polarity,
            values: map,
        })
    }

    /// Reads a `country,value` CSV.
    pub fn load(path: &Path, name: &str, polarity: Polarity) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Invalid(format!("{}: {other:?}", path.display())),
        })?;
        let headers = reader.headers()?.clone();
        let col = |n: &str| {
            headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| Error::MissingColumn(n.to_string()))
        };
        let (ci, vi) = (col("country")?, col("value")?);
        let mut values = Vec::new();
        for row in reader.records() {
            let row = row?;
            let country = row.get(ci).unwrap_or("").trim().to_string();
            let raw = row.get(vi).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Invalid(format!("{name}: bad value {raw:?} for {country}")))?;
            values.push((country, v));
        }
        Self::new(name, polarity, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
    pub n_boot: usize,
    /// Resamples skipped because one side was constant.
    pub n_degenerate: usize,
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("need at least 2 pairs".into()));
    }
    pearson_unchecked(x, y).ok_or(Error::ZeroVariance)
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pearson r with a 95% percentile bootstrap interval over paired resamples.
pub fn pearson_with_bootstrap(x: &[f64], y: &[f64], n_boot: usize, seed: u64) -> Result<CorrelationResult> {
    if x.len() < 3 {
        return Err(Error::Invalid(format!("need at least 3 pairs, got {}", x.len())));
    }
    let r = pearson(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut rs = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        for k in 0..n {
            let j = rng.random_range(0..n);
            bx[k] = x[j];
            by[k] = y[j];
        }
        if let Some(rb) = pearson_unchecked(&bx, &by) {
            rs.push(rb);
        }
    }
    let n_degenerate = n_boot - rs.len();
    rs.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if rs.is_empty() {
        (None, None)
    } else {
        (Some(quantile(&rs, 0.025)), Some(quantile(&rs, 0.975)))
    };
    Ok(CorrelationResult {
        r,
        ci_low,
        ci_high,
        n,
        n_boot,
        n_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_lines() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input() {
        assert!(matches!(
            pearson_with_bootstrap(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 10, 0),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let a = pearson_with_bootstrap(&x, &y, 200, 5).unwrap();
        assert_eq!(a, pearson_with_bootstrap(&x, &y, 200, 5).unwrap());
        assert!(a.ci_low.unwrap() <= a.r && a.r <= a.ci_high.unwrap());
        assert!(a.n_degenerate < 20);
    }

    #[test]
    fn polarity_parsing() {
        assert_eq!("higher_is_better".parse::<Polarity>().unwrap().expected_sign(), -1.0);
        assert!("up".parse::<Polarity>().is_err());
    }

    #[test]
    fn duplicate_country_rejected() {
        let v = [("HU".to_string(), 1.0), ("HU".to_string(), 2.0)];
        assert!(IndicatorSeries::new("cpi", Polarity::HigherIsBetter, v).is_err());
    }
}
