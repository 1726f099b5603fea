//! Finite-horizon decay verdicts for averaged series.
//!
//! A series `(n, value)` is judged on its first and last quarters of the
//! horizon `N = max n`: it is *decaying* when the tail maximum (over
//! `n > 3N/4`) is below the tolerance and at most half the first-quarter
//! maximum (over `n <= N/4`). When exactly one of the two conditions holds
//! the series is *stalled*, when neither holds it has *failed*.

use serde::Serialize;

pub const DEFAULT_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayVerdict {
    Decaying,
    Stalled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayAssessment {
    pub verdict: DecayVerdict,
    pub tolerance: f64,
    pub horizon: u64,
    /// Tail window is `(tail_from, horizon]`.
    pub tail_from: u64,
    pub first_quarter_max: f64,
    pub tail_max: f64,
}

pub fn assess_decay(series: &[(u64, f64)], tolerance: f64) -> DecayAssessment {
    let horizon = series.iter().map(|p| p.0).max().unwrap_or(0);
    let quarter = horizon / 4;
    let tail_from = horizon - horizon / 4;
    let mut first = series
        .iter()
        .filter(|p| p.0 <= quarter)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if first == f64::NEG_INFINITY {
        first = series.first().map_or(0.0, |p| p.1);
    }
    let mut tail = series
        .iter()
        .filter(|p| p.0 > tail_from)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if tail == f64::NEG_INFINITY {
        tail = series.last().map_or(0.0, |p| p.1);
    }
    let below_tol = tail < tolerance;
    let halved = tail <= 0.5 * first;
    let verdict = match (below_tol, halved) {
        (true, true) => DecayVerdict::Decaying,
        (false, false) => DecayVerdict::Failed,
        _ => DecayVerdict::Stalled,
    };
    DecayAssessment {
        verdict,
        tolerance,
        horizon,
        tail_from,
        first_quarter_max: first,
        tail_max: tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(u64) -> f64, n: u64) -> Vec<(u64, f64)> {
        (1..=n).map(|k| (k, f(k))).collect()
    }

    #[test]
    fn inverse_sqrt_decays() {
        let a = assess_decay(&series(|n| 1.0 / (n as f64).sqrt(), 100_000), 1e-2);
        assert_eq!(a.verdict, DecayVerdict::Decaying);
    }

    #[test]
    fn constant_fails_and_zero_decays() {
        assert_eq!(assess_decay(&series(|_| 1.0, 100), 1e-2).verdict, DecayVerdict::Failed);
        assert_eq!(
            assess_decay(&series(|_| 0.0, 100), 1e-2).verdict,
            DecayVerdict::Decaying
        );
    }

    #[test]
    fn small_but_flat_is_stalled() {
        let a = assess_decay(&series(|_| 1e-3, 100), 1e-2);
        assert_eq!(a.verdict, DecayVerdict::Stalled);
    }
}
