//! Windowed Cesàro means, the ergodicity test, sups of shifted convex
//! combinations and the quantitative window bound: if every shift of
//! `Σ λ_j x_j` has norm at most `ε/2` then every window of length at least
//! `4p/ε` has mean norm at most `ε`, because the two means differ by at most
//! `2p/(n−m)`.
//!
//! Sequences with bound `M > 1` are rescaled by `1/M` before the bound checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::geometric_grid;
use crate::hull_geometry::{min_norm_in_hull, HullCertificate, DEFAULT_MAX_ITER};
use crate::integer_sets::FiniteIndexSet;
use crate::sequence_models::VectorSequence;
use crate::shift_bounds::shifted_norm;
use crate::verdict::{assess_decay, DecayAssessment};

pub const ERGODIC_GRID_RATIO: f64 = 1.2;
pub const RANDOM_WINDOWS: usize = 100;
/// Relative rounding allowance when comparing a computed norm to a bound.
const ROUNDING: f64 = 1e-12;

/// `∥(1/(n−m)) Σ_{k=m+1}^{n} x_k∥`.
pub fn windowed_mean_norm(seq: &VectorSequence, m: u64, n: u64) -> Result<f64> {
    if m >= n {
        return Err(Error::invalid(format!("bad window ({m}, {n}]")));
    }
    seq.mean_norm(m + 1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityReport {
    pub series: Vec<(u64, f64)>,
    pub assessment: DecayAssessment,
}

/// Prefix means on a geometric grid, plus block ends for block models.
pub fn ergodicity_test(seq: &VectorSequence, tolerance: f64) -> Result<ErgodicityReport> {
    let mut ns = geometric_grid(1, seq.horizon(), ERGODIC_GRID_RATIO);
    if let Some(s) = seq.block_schedule() {
        ns.extend(
            s.starts()
                .iter()
                .map(|&n| n - 1)
                .filter(|&n| n >= 1 && n <= seq.horizon()),
        );
        ns.sort_unstable();
        ns.dedup();
    }
    let series: Vec<(u64, f64)> = ns
        .par_iter()
        .map(|&n| seq.mean_norm(1, n).map(|v| (n, v)))
        .collect::<Result<_>>()?;
    let assessment = assess_decay(&series, tolerance);
    Ok(ErgodicityReport { series, assessment })
}

fn check_convex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("weights must be nonnegative and nonempty"));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftedSup {
    pub value: f64,
    pub argmax_k: u64,
}

/// `max_{1≤k≤k_max} ∥Σ_j λ_j x_{j+k}∥`; with `k_max = 0` only the unshifted
/// combination is evaluated.
pub fn shifted_combo_sup(seq: &VectorSequence, weights: &[f64], k_max: u64) -> Result<ShiftedSup> {
    check_convex(weights)?;
    let p = weights.len() as u64;
    if p + k_max > seq.horizon() {
        return Err(Error::OutOfRange {
            index: p + k_max,
            horizon: seq.horizon(),
        });
    }
    let ks: Vec<u64> = if k_max == 0 { vec![0] } else { (1..=k_max).collect() };
    let vals: Vec<f64> = ks
        .par_iter()
        .map(|&k| shifted_norm(seq, weights, k))
        .collect::<Result<_>>()?;
    let (i, &value) = vals.iter().enumerate().fold(
        (0, &f64::NEG_INFINITY),
        |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc },
    );
    Ok(ShiftedSup { value, argmax_k: ks[i] })
}

fn unit_bounded(seq: &VectorSequence) -> (VectorSequence, f64) {
    let m = seq.bound();
    if m > 1.0 {
        (seq.normalized(), m)
    } else {
        (seq.clone(), 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyCheck {
    pub m: u64,
    pub n: u64,
    pub p: usize,
    pub discrepancy: f64,
    pub bound: f64,
}

/// `∥(1/L) Σ_{k=m+1}^{n} x_k − (1/L) Σ_{k=m+1}^{n} Σ_j λ_j x_{j+k}∥ ≤ 2p/L`
/// with `L = n − m`, on a sequence bounded by 1.
pub fn theorem71_discrepancy_check(seq: &VectorSequence, weights: &[f64], m: u64, n: u64) -> Result<DiscrepancyCheck> {
    check_convex(weights)?;
    if seq.bound() > 1.0 + ROUNDING {
        return Err(Error::invalid(format!(
            "sequence bound {} exceeds 1; normalize first",
            seq.bound()
        )));
    }
    let p = weights.len() as u64;
    if m >= n || n - m < p {
        return Err(Error::invalid(format!("window ({m}, {n}] shorter than p = {p}")));
    }
    seq.check_index(n + p)?;
    let len = (n - m) as f64;
    let mut coef: BTreeMap<u64, f64> = BTreeMap::new();
    for k in m + 1..=n {
        *coef.entry(k).or_insert(0.0) += 1.0;
        for (j, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                *coef.entry(k + j as u64 + 1).or_insert(0.0) -= w;
            }
        }
    }
    let idx: Vec<u64> = coef.keys().copied().collect();
    let w: Vec<f64> = coef.values().copied().collect();
    let discrepancy = seq.combo_norm(&w, &idx)? / len;
    let bound = 2.0 * p as f64 / len;
    if discrepancy > bound * (1.0 + ROUNDING) {
        return Err(Error::Verification(format!(
            "discrepancy {discrepancy} exceeds 2p/(n-m) = {bound} on ({m}, {n}]"
        )));
    }
    Ok(DiscrepancyCheck {
        m,
        n,
        p: weights.len(),
        discrepancy,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCheck {
    pub m: u64,
    pub n: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub p: usize,
    pub epsilon: f64,
    /// Minimal window length `⌈4p/ε⌉` covered by the check.
    pub span: u64,
    pub hypothesis_sup: ShiftedSup,
    /// Factor the sequence was divided by before checking.
    pub normalized_by: f64,
    pub windows: Vec<WindowCheck>,
    pub max_mean: f64,
}

/// Checks every sampled window of length at least `⌈4p/ε⌉` after verifying
/// that all shifts of the combination stay within `ε/2`. Windows are all grid
/// pairs (ratio 1.2, plus 0) and 100 seeded random windows.
pub fn theorem71_threshold_check(
    seq: &VectorSequence,
    weights: &[f64],
    epsilon: f64,
    seed: u64,
) -> Result<ThresholdReport> {
    check_convex(weights)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let (seq, scale) = unit_bounded(seq);
    let p = weights.len() as u64;
    let h = seq.horizon();
    if p >= h {
        return Err(Error::invalid(format!("p = {p} leaves no shifts below horizon {h}")));
    }
    let limit = epsilon / 2.0;
    for k in 1..=h - p {
        let v = shifted_norm(&seq, weights, k)?;
        if v > limit {
            return Err(Error::HypothesisFailed { k, value: v, limit });
        }
    }
    let hypothesis_sup = shifted_combo_sup(&seq, weights, h - p)?;
    let span = (4.0 * p as f64 / epsilon).ceil() as u64;
    if span > h {
        return Err(Error::invalid(format!("window span {span} exceeds horizon {h}")));
    }
    let mut pts = vec![0];
    pts.extend(geometric_grid(1, h, ERGODIC_GRID_RATIO));
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    for &m in &pts {
        for &n in &pts {
            if n > m && n - m >= span {
                pairs.push((m, n));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_WINDOWS {
        let m = rng.random_range(0..=h - span);
        let n = rng.random_range(m + span..=h);
        pairs.push((m, n));
    }
    let windows: Vec<WindowCheck> = pairs
        .par_iter()
        .map(|&(m, n)| windowed_mean_norm(&seq, m, n).map(|mean| WindowCheck { m, n, mean }))
        .collect::<Result<_>>()?;
    let max_mean = windows.iter().map(|w| w.mean).fold(0.0, f64::max);
    if let Some(w) = windows.iter().find(|w| w.mean > epsilon * (1.0 + ROUNDING)) {
        return Err(Error::Verification(format!(
            "window ({}, {}] has mean {} above epsilon {epsilon}",
            w.m, w.n, w.mean
        )));
    }
    Ok(ThresholdReport {
        p: weights.len(),
        epsilon,
        span,
        hypothesis_sup,
        normalized_by: scale,
        windows,
        max_mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub p: usize,
    pub epsilon: f64,
    pub shift_bound_c: f64,
    pub hull: HullCertificate,
    pub shifted_sup: Option<ShiftedSup>,
    /// `c ε` for the hull value `ε`.
    pub shifted_sup_limit: Option<f64>,
    /// How far the sampled `c` undershoots the observed shifted sup.
    pub slack: f64,
    /// Mean bound handed to the window check.
    pub level: f64,
    pub threshold: Option<ThresholdReport>,
    /// `consistent_with_ergodic`, `non_ergodic` or `inconclusive`.
    pub conclusion: String,
}

/// Small hull value, pushed through the shift bound, bounds every shift of
/// the hull weights; the window bound then applies with `2cε` as its
/// hypothesis level. The level is floored at `16p/h` so that the required
/// window length fits four times into the horizon.
pub fn corollary72_chain(
    seq: &VectorSequence,
    shift_bound_c: f64,
    epsilon: f64,
    p_max: u64,
    hull_tol: f64,
    seed: u64,
) -> Result<ChainReport> {
    let (seq, _) = unit_bounded(seq);
    let h = seq.horizon();
    if p_max == 0 || p_max >= h {
        return Err(Error::invalid(format!("p_max = {p_max} must lie in [1, horizon)")));
    }
    let idx = FiniteIndexSet::new((1..=p_max).collect(), h)?;
    let hull = min_norm_in_hull(&seq, &idx, hull_tol, DEFAULT_MAX_ITER)?;
    let eps = hull.achieved_norm;
    let mut report = ChainReport {
        p: p_max as usize,
        epsilon,
        shift_bound_c,
        hull,
        shifted_sup: None,
        shifted_sup_limit: None,
        slack: 0.0,
        level: 0.0,
        threshold: None,
        conclusion: "non_ergodic".into(),
    };
    if eps > epsilon {
        return Ok(report);
    }
    let weights = report.hull.weights.clone();
    let sup = shifted_combo_sup(&seq, &weights, h - p_max)?;
    let limit = shift_bound_c * eps;
    report.slack = (sup.value - limit).max(0.0);
    report.shifted_sup = Some(sup);
    report.shifted_sup_limit = Some(limit);
    let level = (4.0 * shift_bound_c * eps).max(16.0 * p_max as f64 / h as f64);
    report.level = level;
    report.conclusion = match theorem71_threshold_check(&seq, &weights, level, seed) {
        Ok(t) => {
            report.threshold = Some(t);
            "consistent_with_ergodic".into()
        }
        Err(Error::HypothesisFailed { .. }) => "inconclusive".into(),
        Err(Error::InvalidInput(_)) => "inconclusive".into(),
        Err(e) => return Err(e),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence_models::BlockSchedule;
    use crate::verdict::DecayVerdict;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn window_means() {
        let c = VectorSequence::constant(100).unwrap();
        let o = VectorSequence::orthonormal(100).unwrap();
        let a = VectorSequence::alternating(100).unwrap();
        for (m, n) in [(0u64, 1u64), (3, 40), (10, 100)] {
            assert!((windowed_mean_norm(&c, m, n).unwrap() - 1.0).abs() < 1e-15);
            let l = (n - m) as f64;
            assert!((windowed_mean_norm(&o, m, n).unwrap() - 1.0 / l.sqrt()).abs() < 1e-15);
        }
        assert_eq!(windowed_mean_norm(&a, 4, 10).unwrap(), 0.0);
        assert!(windowed_mean_norm(&a, 4, 4).is_err());
    }

    #[test]
    fn ergodicity_verdicts() {
        let o = VectorSequence::orthonormal(100_000).unwrap();
        assert_eq!(
            ergodicity_test(&o, 1e-2).unwrap().assessment.verdict,
            DecayVerdict::Decaying
        );
        let z = VectorSequence::zero(100).unwrap();
        let r = ergodicity_test(&z, 1e-2).unwrap();
        assert!(r.series.iter().all(|p| p.1 == 0.0));
        let t = VectorSequence::example_3_1(BlockSchedule::default_for(1024), 1024).unwrap();
        let r = ergodicity_test(&t, 1e-2).unwrap();
        // tail stays at 1/2: halved from the start but never below tolerance
        assert_eq!(r.assessment.verdict, DecayVerdict::Stalled);
        let s = t.block_schedule().unwrap();
        for j in 2..=11 {
            let end = s.start(j + 1) - 1;
            let v = r.series.iter().find(|p| p.0 == end).unwrap().1;
            assert!(v >= 0.5);
        }
    }

    #[test]
    fn shifted_sups() {
        let o = VectorSequence::orthonormal(200).unwrap();
        let u = vec![1.0 / 16.0; 16];
        let s = shifted_combo_sup(&o, &u, 20).unwrap();
        assert!((s.value - 0.25).abs() < 1e-15);
        let m = VectorSequence::example_3_3(80).unwrap();
        let w = vec![0.2, 0.1, 0.3, 0.4];
        assert_eq!(shifted_combo_sup(&m, &w, 30).unwrap().argmax_k, 1);
        let e = VectorSequence::example_6_2(60).unwrap();
        let mut single = vec![0.0; 5];
        single[0] = 1.0;
        let best = (2..=21).map(|k| e.norm(k).unwrap()).fold(0.0, f64::max);
        assert_eq!(shifted_combo_sup(&e, &single, 20).unwrap().value, best);
        // full-prefix uniform weights without shifting give the prefix mean
        let full = vec![1.0 / 30.0; 30];
        let v = shifted_combo_sup(&e, &full, 0).unwrap().value;
        assert!((v - e.mean_norm(1, 30).unwrap()).abs() < 1e-14);
        assert!(shifted_combo_sup(&e, &[0.5, 0.6], 3).is_err());
    }

    #[test]
    fn discrepancy_examples() {
        let a = VectorSequence::alternating(100).unwrap();
        let d = theorem71_discrepancy_check(&a, &[1.0], 0, 9).unwrap();
        assert!((d.discrepancy - 2.0 / 9.0).abs() < 1e-15);
        let c = VectorSequence::constant(100).unwrap();
        assert_eq!(
            theorem71_discrepancy_check(&c, &[0.5, 0.5], 10, 50)
                .unwrap()
                .discrepancy,
            0.0
        );
        let big = VectorSequence::example_6_2(100).unwrap();
        assert!(theorem71_discrepancy_check(&big, &[1.0], 0, 9).is_err());
    }

    #[test]
    fn threshold_paths() {
        let o = VectorSequence::orthonormal(4096).unwrap();
        let r = theorem71_threshold_check(&o, &[1.0 / 64.0; 64], 0.25, 5).unwrap();
        assert_eq!(r.span, 1024);
        assert!(r.windows.len() > RANDOM_WINDOWS && r.max_mean <= 0.25);
        let z = VectorSequence::zero(100).unwrap();
        assert!(theorem71_threshold_check(&z, &[0.5, 0.5], 0.1, 0).is_ok());
        let c = VectorSequence::constant(100).unwrap();
        assert!(matches!(
            theorem71_threshold_check(&c, &[0.5, 0.5], 0.5, 0),
            Err(Error::HypothesisFailed { k: 1, .. })
        ));
    }

    #[test]
    fn chain_examples() {
        let o = VectorSequence::orthonormal(2048).unwrap();
        let r = corollary72_chain(&o, 1.0, 0.2, 64, 1e-10, 0).unwrap();
        assert_eq!(r.conclusion, "consistent_with_ergodic");
        assert!((r.hull.achieved_norm - 0.125).abs() < 1e-6);
        let t = r.threshold.unwrap();
        assert!(t
            .windows
            .iter()
            .all(|w| w.mean <= 2.0 * 0.125 + 2.0 * 64.0 / (w.n - w.m) as f64));
        let c = VectorSequence::constant(200).unwrap();
        assert_eq!(
            corollary72_chain(&c, 1.0, 0.2, 16, 1e-10, 0).unwrap().conclusion,
            "non_ergodic"
        );
        let m = VectorSequence::example_3_3(256).unwrap();
        let r = corollary72_chain(&m, 1.0, 1.0, 16, 1e-10, 0).unwrap();
        assert!(r.slack <= 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn discrepancy_bound_on_orbits(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let matrix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-0.6..0.6)).collect()).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let seq = VectorSequence::operator_orbit(&matrix, &x, 120).unwrap();
            let seq = if seq.bound() > 1.0 { seq.normalized() } else { seq };
            let p = rng.random_range(1..8usize);
            let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let m = rng.random_range(0..40u64);
            let n = m + p as u64 + rng.random_range(0..60u64);
            let c = theorem71_discrepancy_check(&seq, &w, m, n).unwrap();
            prop_assert!(c.discrepancy <= c.bound * (1.0 + ROUNDING));
        }

        #[test]
        fn prefix_means_are_windowed_means(n in 1u64..200) {
            let e = VectorSequence::example_6_2(200).unwrap();
            prop_assert_eq!(windowed_mean_norm(&e, 0, n).unwrap(), e.mean_norm(1, n).unwrap());
        }
    }
}
