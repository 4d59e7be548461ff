use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Population statistics of a per-round metric over a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    /// Rounds in the window that had a value.
    pub count: usize,
}

/// Mean, population std and minimum of `series[window]`. NaN entries mark
/// rounds without an evaluation and are skipped.
pub fn stability(series: &[f64], window: RangeInclusive<usize>) -> Result<StabilityStats> {
    let (lo, hi) = (*window.start(), *window.end());
    if lo > hi {
        return Err(Error::Empty("stability window"));
    }
    if hi >= series.len() {
        return Err(Error::Config(format!(
            "stability window {lo}..={hi} exceeds the {} rounds available",
            series.len()
        )));
    }
    let values: Vec<f64> = series[lo..=hi].iter().copied().filter(|v| !v.is_nan()).collect();
    if values.is_empty() {
        return Err(Error::Empty("stability window has no evaluated rounds"));
    }
    let n = values.len() as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(StabilityStats {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        count: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_zero_std() {
        let s = stability(&[0.8; 10], 0..=9).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.mean, 0.8);
    }

    #[test]
    fn two_point_population_std() {
        let s = stability(&[0.9, 0.5], 0..=1).unwrap();
        assert!((s.mean - 0.7).abs() < 1e-15);
        assert!((s.std - 0.2).abs() < 1e-15);
        assert_eq!(s.min, 0.5);
    }

    #[test]
    fn single_round_window() {
        let s = stability(&[0.42], 0..=0).unwrap();
        assert_eq!((s.mean, s.min, s.std), (0.42, 0.42, 0.0));
    }

    #[test]
    fn bad_windows() {
        assert!(stability(&[0.1, 0.2], 1..=0).is_err());
        assert!(stability(&[0.1, 0.2], 0..=2).is_err());
        assert!(stability(&[f64::NAN], 0..=0).is_err());
        let s = stability(&[f64::NAN, 0.5, 0.7], 0..=2).unwrap();
        assert_eq!(s.count, 2);
    }
}
