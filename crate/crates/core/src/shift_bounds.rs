//! Sampled estimates of shift-boundedness constants, the rotation example's
//! convex unboundedness witness, and the exact non-orbit certificate for the
//! monomial schedule.

use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sequence_models::{rational_f64, Family, VectorSequence};

pub const DEFAULT_WEIGHT_SAMPLES: usize = 10_000;
pub const NEAR_SINGULAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Nonnegative weights, Dirichlet-uniform on the simplex.
    Convex,
    /// 0/1 weights, subset size uniform then subset uniform.
    ZeroOne,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(Scheme::Convex),
            "zero_one" | "cesaro" => Ok(Scheme::ZeroOne),
            _ => Err(Error::invalid(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub p: usize,
    /// `λ_1..λ_p` on indices `1..=p`.
    pub weights: Vec<f64>,
    pub shift: u64,
    pub numerator: f64,
    pub denominator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticBound {
    pub value: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftBoundReport {
    pub scheme: Scheme,
    /// Largest recorded ratio, a lower bound on the true constant.
    pub constant_estimate: f64,
    pub worst_case: Option<WorstCase>,
    pub samples_evaluated: usize,
    pub near_singular: usize,
    pub analytic_upper_bound: Option<AnalyticBound>,
    pub p_max: usize,
    pub shift_max: u64,
    pub seed: u64,
}

/// `∥Σ λ_j x_{j+shift}∥` over `j = 1..=λ.len()`.
pub fn shifted_norm(seq: &VectorSequence, weights: &[f64], shift: u64) -> Result<f64> {
    let idx: Vec<u64> = (1..=weights.len() as u64).map(|j| j + shift).collect();
    if seq.family() == Family::ContinuousFunction {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("tent combinations need nonnegative weights"));
        }
        // nonnegative tents: the sup norm is the largest per-block weight
        return seq.abs_combo_sup(weights, &idx);
    }
    seq.combo_norm(weights, &idx)
}

/// `(numerator, denominator)` of the shift ratio.
pub fn shift_ratio(seq: &VectorSequence, weights: &[f64], shift: u64) -> Result<(f64, f64)> {
    Ok((shifted_norm(seq, weights, shift)?, shifted_norm(seq, weights, 0)?))
}

/// Weight vector for sample `i`, drawn from its own ChaCha stream.
fn draw(scheme: Scheme, p_max: usize, seed: u64, i: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let p = rng.random_range(1..=p_max);
    match scheme {
        Scheme::Convex => {
            let e: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        }
        Scheme::ZeroOne => {
            let size = rng.random_range(1..=p);
            let mut w = vec![0.0; p];
            for j in sample(&mut rng, p, size) {
                w[j] = 1.0;
            }
            w
        }
    }
}

pub fn shift_bound_scan(
    seq: &VectorSequence,
    scheme: Scheme,
    p_max: usize,
    shift_max: u64,
    weight_samples: usize,
    seed: u64,
) -> Result<ShiftBoundReport> {
    if p_max == 0 || shift_max == 0 {
        return Err(Error::invalid("p_max and shift_max must be positive"));
    }
    if p_max as u64 + shift_max > seq.horizon() {
        return Err(Error::invalid(format!(
            "p_max + shift_max = {} exceeds horizon {}",
            p_max as u64 + shift_max,
            seq.horizon()
        )));
    }
    type Best = Option<(f64, u64, WorstCase)>;
    let per_sample: Vec<(Best, usize, usize)> = (0..weight_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<(Best, usize, usize)> {
            let w = draw(scheme, p_max, seed, i);
            let den = shifted_norm(seq, &w, 0)?;
            if den < NEAR_SINGULAR {
                return Ok((None, 0, shift_max as usize));
            }
            let mut best: Best = None;
            for k in 1..=shift_max {
                let num = shifted_norm(seq, &w, k)?;
                let r = num / den;
                if best.as_ref().is_none_or(|b| r > b.0) {
                    let wc = WorstCase {
                        p: w.len(),
                        weights: w.clone(),
                        shift: k,
                        numerator: num,
                        denominator: den,
                    };
                    best = Some((r, i, wc));
                }
            }
            Ok((best, shift_max as usize, 0))
        })
        .collect::<Result<_>>()?;
    let mut best: Best = None;
    let (mut evaluated, mut singular) = (0, 0);
    for (b, e, s) in per_sample {
        evaluated += e;
        singular += s;
        if let Some(b) = b {
            let better = best.as_ref().is_none_or(|c| b.0 > c.0 || (b.0 == c.0 && b.1 < c.1));
            if better {
                best = Some(b);
            }
        }
    }
    Ok(ShiftBoundReport {
        scheme,
        constant_estimate: best.as_ref().map_or(0.0, |b| b.0),
        worst_case: best.map(|b| b.2),
        samples_evaluated: evaluated,
        near_singular: singular,
        analytic_upper_bound: analytic_bound(seq, scheme),
        p_max,
        shift_max,
        seed,
    })
}

fn analytic_bound(seq: &VectorSequence, scheme: Scheme) -> Option<AnalyticBound> {
    if let Some(m) = seq.monomial_schedule() {
        if m.exponents().windows(2).all(|w| w[0] <= w[1]) {
            return Some(AnalyticBound {
                value: 1.0,
                reason: "Gram entries 1/(a_j + a_k + 1) are non-increasing under shifts".into(),
            });
        }
    }
    if seq.name() == "example_6_2" && scheme == Scheme::ZeroOne {
        return Some(AnalyticBound {
            value: 22.5f64.sqrt(),
            reason: "block counting: shifted sums touch at most 2q groups of norm <= sqrt(5), \
                     unshifted sums touch q groups of norm >= 2/3"
                .into(),
        });
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCountBounds {
    /// Number of index groups `{3k+1, 3k+2, 3k+3}` met by the support.
    pub q: u64,
    pub numerator_bound: f64,
    pub denominator_bound: f64,
}

/// Block-counting bounds for 0/1 sums in the rotation example:
/// unshifted norm at least `√(4q/9)`, shifted norm at most `√(10q)`.
pub fn example_6_2_block_bounds(support: &[u64]) -> BlockCountBounds {
    let mut groups: Vec<u64> = support.iter().map(|&n| (n - 1) / 3).collect();
    groups.dedup();
    let q = groups.len() as u64;
    BlockCountBounds {
        q,
        numerator_bound: (10.0 * q as f64).sqrt(),
        denominator_bound: (4.0 * q as f64 / 9.0).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexUnboundedness {
    pub k: u64,
    pub p: u64,
    pub weights: Vec<(u64, f64)>,
    pub shift: u64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    /// `√2 (k+3)`, which the ratio must exceed.
    pub ratio_floor: f64,
}

/// Weights 1 and 2 on `3k+1, 3k+2` with shift 3: the unshifted sum is
/// `2u_k − 2v_k`, nearly cancelling, while the shifted sum `2u_{k+1} + 2w_{k+1}`
/// has norm `2√2`.
pub fn convex_unboundedness_witness(seq: &VectorSequence, k: u64) -> Result<ConvexUnboundedness> {
    if !k.is_multiple_of(2) {
        return Err(Error::invalid(format!("k = {k} must be even")));
    }
    seq.check_index(3 * k + 5)?;
    let idx = [3 * k + 1, 3 * k + 2];
    let w = [1.0, 2.0];
    let denominator = seq.combo_norm(&w, &idx)?;
    let numerator = seq.combo_norm(&w, &idx.map(|i| i + 3))?;
    let ratio = numerator / denominator;
    let floor = 2f64.sqrt() * (k as f64 + 3.0);
    if !(ratio > floor) || !(denominator < 2.0 / (k as f64 + 3.0)) {
        return Err(Error::Verification(format!(
            "ratio {ratio} (denominator {denominator}) does not certify unboundedness at k = {k}"
        )));
    }
    Ok(ConvexUnboundedness {
        k,
        p: 3 * k + 2,
        weights: vec![(3 * k + 1, 1.0), (3 * k + 2, 2.0)],
        shift: 3,
        numerator,
        denominator,
        ratio,
        ratio_floor: floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonOrbitRow {
    pub k: u64,
    /// `∥f_{k+2} − f_{k+3}∥`.
    pub lhs: f64,
    /// `k ∥f_k − f_{k+1}∥`.
    pub rhs: f64,
    /// `∥f_k − f_{k+1}∥²` as an exact fraction.
    pub step_sq_exact: String,
    /// Whether `∥f_k − f_{k+1}∥² ≤ 1/(32 k² (k+2)² (2k+1))` holds exactly.
    pub step_bound_holds: bool,
    /// An orbit `f_k = U^k f` would force `∥U∥ ≥ √k`.
    pub implied_operator_norm: f64,
}

/// Exact check of `∥f_{k+2} − f_{k+3}∥ ≥ k ∥f_k − f_{k+1}∥` for each
/// `k ≡ 1 (mod 4)`.
pub fn non_orbit_certificate(seq: &VectorSequence, ks: &[u64]) -> Result<Vec<NonOrbitRow>> {
    let one = BigRational::one();
    let diff = [one.clone(), -one.clone()];
    ks.iter()
        .map(|&k| {
            if k % 4 != 1 {
                return Err(Error::invalid(format!("k = {k} is not 1 mod 4")));
            }
            seq.check_index(k + 3)?;
            let step = seq.exact_combo_norm_sq(&diff, &[k, k + 1])?;
            let far = seq.exact_combo_norm_sq(&diff, &[k + 2, k + 3])?;
            let kk = BigRational::from_integer(k.into());
            if far < &kk * &kk * &step || step.is_zero() {
                return Err(Error::Verification(format!("inequality fails at k = {k}")));
            }
            let kp2 = BigRational::from_integer((k + 2).into());
            let bound = one.clone()
                / (BigRational::from_integer(32.into())
                    * &kk
                    * &kk
                    * &kp2
                    * &kp2
                    * (BigRational::from_integer(2.into()) * &kk + &one));
            Ok(NonOrbitRow {
                k,
                lhs: rational_f64(&far).sqrt(),
                rhs: k as f64 * rational_f64(&step).sqrt(),
                step_sq_exact: step.to_string(),
                step_bound_holds: step <= bound,
                implied_operator_norm: (k as f64).sqrt(),
            })
        })
        .collect()
}
