//! One-dimensional parameter sweeps with a shared seed.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::config::ConfigError;
use crate::sim::engine::{run, RunOutput, SimError};
use crate::sim::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    K,
    TM,
    TI,
    TK,
    TConf,
    Priority,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::K,
        Dimension::TM,
        Dimension::TI,
        Dimension::TK,
        Dimension::TConf,
        Dimension::Priority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::K => "K",
            Dimension::TM => "T_M",
            Dimension::TI => "T_I",
            Dimension::TK => "T_K",
            Dimension::TConf => "T_Conf",
            Dimension::Priority => "priority",
        }
    }

    /// Returns a copy of `base` with this dimension set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario, SweepError> {
        let mut s = base.clone();
        let count = |v: f64| -> Result<usize, SweepError> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(SweepError::Value(self.name(), v))
            }
        };
        match self {
            Dimension::K => s.config.k = count(value)?,
            Dimension::TM => s.config.t_m = value,
            Dimension::TI => s.config.t_i = value,
            Dimension::TK => s.config.t_k = count(value)?,
            Dimension::TConf => s.config.t_conf = value,
            Dimension::Priority => {
                s.priority_enabled = match value {
                    v if v == 1.0 => true,
                    v if v == 0.0 => false,
                    v => return Err(SweepError::Value(self.name(), v)),
                }
            }
        }
        s.config.validate_relaxed()?;
        Ok(s)
    }
}

impl FromStr for Dimension {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s) || d.name().replace('_', "").eq_ignore_ascii_case(s))
            .ok_or_else(|| SweepError::UnknownDimension(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown sweep dimension {0:?}; expected one of K, T_M, T_I, T_K, T_Conf, priority")]
    UnknownDimension(String),
    #[error("no sweep values given")]
    NoValues,
    #[error("bad value list {0:?}")]
    BadValues(String),
    #[error("value {1} is outside the domain of {0}")]
    Value(&'static str, f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Parses `a,b,c` or `start:stop:step` (stop inclusive within a small
/// tolerance).
pub fn parse_values(text: &str) -> Result<Vec<f64>, SweepError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SweepError::NoValues);
    }
    let bad = || SweepError::BadValues(text.to_string());
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounded to 12 decimals so 0.65 + 3 * 0.1 prints as 0.95.
        return Ok((0..=n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    if parts.len() != 1 {
        return Err(bad());
    }
    let values: Vec<f64> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(num)
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub output: RunOutput,
}

/// Runs one seeded simulation per value, in parallel. Results keep the
/// order of `values`.
pub fn ablation_sweep(base: &Scenario, dimension: Dimension, values: &[f64]) -> Result<Vec<SweepPoint>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let scenarios: Vec<Scenario> = values
        .iter()
        .map(|v| dimension.apply(base, *v))
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<RunOutput, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    values
        .iter()
        .zip(results)
        .map(|(v, r)| {
            Ok(SweepPoint {
                value: *v,
                output: r?,
            })
        })
        .collect()
}

pub fn sweep_csv(dimension: Dimension, points: &[SweepPoint]) -> String {
    let mut out = format!(
        "{},captured,answered,accuracy,onboard_accuracy,onboard_fraction,mean_latency,median_latency,max_latency\n",
        dimension.name()
    );
    for p in points {
        let s = &p.output.summary;
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            p.value,
            s.captured,
            s.answered,
            s.accuracy,
            s.onboard_accuracy.map_or("na".to_string(), |a| format!("{a:.6}")),
            s.onboard_fraction,
            s.mean_latency,
            s.median_latency,
            s.max_latency
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("0.65:0.95:0.1").unwrap(), vec![0.65, 0.75, 0.85, 0.95]);
        assert_eq!(parse_values("0:5:1").unwrap().len(), 6);
        assert_eq!(parse_values("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(parse_values(""), Err(SweepError::NoValues)));
        assert!(matches!(parse_values(","), Err(SweepError::NoValues)));
        assert!(parse_values("1:0:1").is_err());
        assert!(parse_values("a,b").is_err());
    }

    #[test]
    fn dimension_names() {
        assert_eq!("T_Conf".parse::<Dimension>().unwrap(), Dimension::TConf);
        assert_eq!("tm".parse::<Dimension>().unwrap(), Dimension::TM);
        assert!("speed".parse::<Dimension>().is_err());
    }

    #[test]
    fn apply_checks_domain() {
        let base = Scenario::canonical();
        assert!(Dimension::K.apply(&base, 2.5).is_err());
        assert!(Dimension::TConf.apply(&base, 1.5).is_err());
        assert!(Dimension::Priority.apply(&base, 0.5).is_err());
        assert!(!Dimension::Priority.apply(&base, 0.0).unwrap().priority_enabled);
        assert_eq!(Dimension::TK.apply(&base, 0.0).unwrap().config.t_k, 0);
    }
}
