//! Mixing diagnostics: Cesàro absolute averages, the dual-ball uniform value
//! (prefix and windowed), subsequence means, the averaging identity along a
//! subsequence, and extraction of failure witnesses.
//!
//! With real scalars, `sup_{∥y∥≤1} Σ |⟨y, x_k⟩| = max_ε ∥Σ ε_k x_k∥` over sign
//! vectors and `sup_{∥y∥≤1} Σ ⟨y, x_k⟩⁺ = max_S ∥Σ_{k∈S} x_k∥` over subsets.
//! Both are enumerated exactly up to `exact_cutoff` terms with a Gray code that
//! keeps `r = Gc` current, so each step costs one Gram row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integer_sets::FiniteIndexSet;
use crate::sequence_models::{Family, Functional, VectorSequence};
use crate::verdict::{assess_decay, DecayAssessment, DecayVerdict};

pub const DEFAULT_EXACT_CUTOFF: usize = 20;
pub const DEFAULT_RESTARTS: usize = 4096;
/// Largest window handled with a stored Gram section.
const DENSE_LIMIT: usize = 512;
/// Largest window for which a streaming Gershgorin bound is computed.
const GERSHGORIN_LIMIT: usize = 4096;
const ASCENT_STARTS: usize = 8;
const ASCENT_ITERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformOptions {
    pub exact_cutoff: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for UniformOptions {
    fn default() -> Self {
        Self {
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformValue {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
}

/// `(1/n) Σ_{k≤n} |⟨f, x_k⟩|`.
pub fn cesaro_abs_average(seq: &VectorSequence, f: &Functional, n: u64) -> Result<f64> {
    seq.check_index(n)?;
    seq.check_unit(f)?;
    let mut acc = 0.0;
    for k in 1..=n {
        acc += seq.pairing(f, k)?.abs();
    }
    Ok(acc / n as f64)
}

/// Cesàro averages at every `n` in `ns` from one pass.
pub fn cesaro_series(seq: &VectorSequence, f: &Functional, ns: &[u64]) -> Result<Vec<(u64, f64)>> {
    seq.check_unit(f)?;
    check_increasing(ns)?;
    let Some(&last) = ns.last() else { return Ok(Vec::new()) };
    seq.check_index(last)?;
    let mut out = Vec::with_capacity(ns.len());
    let mut acc = 0.0;
    let mut k = 0;
    for &n in ns {
        while k < n {
            k += 1;
            acc += seq.pairing(f, k)?.abs();
        }
        out.push((n, acc / n as f64));
    }
    Ok(out)
}

fn check_increasing(ns: &[u64]) -> Result<()> {
    if ns.first() == Some(&0) || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sample points must be positive and strictly increasing"));
    }
    Ok(())
}

/// Dual-ball uniform value over `[1, n]`.
pub fn uniform_mixing_value(seq: &VectorSequence, n: u64, opts: &UniformOptions) -> Result<UniformValue> {
    windowed_uniform_mixing(seq, 1, n, opts)
}

/// `sup_{∥y∥≤1} (1/L) Σ_{k=a}^{b} |⟨y, x_k⟩|` as an exact value or a bracket.
pub fn windowed_uniform_mixing(seq: &VectorSequence, a: u64, b: u64, opts: &UniformOptions) -> Result<UniformValue> {
    check_window(seq, a, b)?;
    let len = (b - a + 1) as usize;
    let lf = len as f64;
    if seq.family() == Family::ContinuousFunction {
        let idx: Vec<u64> = (a..=b).collect();
        let v = seq.abs_combo_sup(&vec![1.0; len], &idx)? / lf;
        return Ok(UniformValue {
            lower: v,
            upper: v,
            method: Method::Exact,
        });
    }
    let idx: Vec<u64> = (a..=b).collect();
    if len <= opts.exact_cutoff {
        let g = seq.gram_section(&idx)?;
        let (_, best) = gray_max(&g, len, -1.0, 1.0, true);
        let v = quad_form(&g, len, &best).max(0.0).sqrt() / lf;
        return Ok(UniformValue {
            lower: v,
            upper: v,
            method: Method::Exact,
        });
    }
    if len <= DENSE_LIMIT {
        let g = seq.gram_section(&idx)?;
        let (_, best) = random_flip_search(&g, len, -1.0, 1.0, opts.restarts, opts.seed);
        let lower = quad_form(&g, len, &best).max(0.0).sqrt() / lf;
        let lam = spectral_bound(&g, len);
        let upper = (lf * lam).sqrt() / lf;
        return Ok(UniformValue {
            lower,
            upper: upper.max(lower),
            method: Method::Bounded,
        });
    }
    let (lower, _) = sign_ascent(seq, &idx, opts.seed)?;
    let mut upper = idx.iter().map(|&k| seq.norm(k)).sum::<Result<f64>>()? / lf;
    if len <= GERSHGORIN_LIMIT {
        let mut row_max = 0.0f64;
        for &j in &idx {
            let mut s = 0.0;
            for &k in &idx {
                s += seq.gram(j, k)?.abs();
            }
            row_max = row_max.max(s);
        }
        upper = upper.min((lf * row_max * (1.0 + 1e-12)).sqrt() / lf);
    }
    Ok(UniformValue {
        lower: lower / lf,
        upper: upper.max(lower / lf),
        method: Method::Bounded,
    })
}

fn check_window(seq: &VectorSequence, a: u64, b: u64) -> Result<()> {
    if a == 0 || a > b {
        return Err(Error::invalid(format!("bad window [{a}, {b}]")));
    }
    seq.check_index(b)
}

/// `cᵀ G c` for `c_i ∈ {lo, hi}` chosen by `bits`.
fn quad_form(g: &[f64], m: usize, c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        if c[i] == 0.0 {
            continue;
        }
        let row = &g[i * m..(i + 1) * m];
        acc += c[i] * row.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    }
    acc
}

/// Max of `cᵀ G c` over `c ∈ {lo, hi}^m` by Gray-code enumeration.
/// With `symmetric` the last coordinate stays at `lo` (valid when `lo = −hi`).
fn gray_max(g: &[f64], m: usize, lo: f64, hi: f64, symmetric: bool) -> (f64, Vec<f64>) {
    let free = if symmetric { m.saturating_sub(1) } else { m };
    let mut c = vec![lo; m];
    let mut r: Vec<f64> = (0..m).map(|i| lo * g[i * m..(i + 1) * m].iter().sum::<f64>()).collect();
    let mut val: f64 = c.iter().zip(&r).map(|(x, y)| x * y).sum();
    let mut best = (val, c.clone());
    for step in 1u64..(1u64 << free) {
        let i = step.trailing_zeros() as usize;
        let delta = if c[i] == lo { hi - lo } else { lo - hi };
        val += 2.0 * delta * r[i] + delta * delta * g[i * m + i];
        c[i] += delta;
        let row = &g[i * m..(i + 1) * m];
        for (rj, gij) in r.iter_mut().zip(row) {
            *rj += delta * gij;
        }
        if val > best.0 {
            best = (val, c.clone());
        }
    }
    best
}

/// Random restarts with greedy single-flip ascent. Restart `i` draws from its
/// own ChaCha stream, so the result is independent of scheduling.
fn random_flip_search(g: &[f64], m: usize, lo: f64, hi: f64, restarts: usize, seed: u64) -> (f64, Vec<f64>) {
    let scale = (0..m)
        .map(|i| g[i * m + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let results: Vec<(f64, usize, Vec<f64>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut c: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { hi } else { lo }).collect();
            let mut r: Vec<f64> = (0..m)
                .map(|j| g[j * m..(j + 1) * m].iter().zip(&c).map(|(x, y)| x * y).sum())
                .collect();
            let mut val: f64 = c.iter().zip(&r).map(|(x, y)| x * y).sum();
            loop {
                let mut best_gain = 1e-12 * scale;
                let mut pick = None;
                for j in 0..m {
                    let delta = if c[j] == lo { hi - lo } else { lo - hi };
                    let gain = 2.0 * delta * r[j] + delta * delta * g[j * m + j];
                    if gain > best_gain {
                        best_gain = gain;
                        pick = Some((j, delta));
                    }
                }
                let Some((j, delta)) = pick else { break };
                val += best_gain;
                c[j] += delta;
                for (rk, gjk) in r.iter_mut().zip(&g[j * m..(j + 1) * m]) {
                    *rk += delta * gjk;
                }
            }
            (val, i, c)
        })
        .collect();
    let best = results
        .into_iter()
        .reduce(|x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x })
        .expect("at least one restart");
    (best.0, best.2)
}

/// Upper bound on the largest eigenvalue of a PSD section.
fn spectral_bound(g: &[f64], m: usize) -> f64 {
    let gersh = (0..m)
        .map(|i| g[i * m..(i + 1) * m].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mat = nalgebra::DMatrix::from_row_slice(m, m, g);
    let eig = mat.symmetric_eigenvalues().max();
    let trace: f64 = (0..m).map(|i| g[i * m + i].abs()).sum();
    (eig * (1.0 + 1e-12) + 1e-14 * trace.max(1.0)).min(gersh * (1.0 + 1e-12))
}

/// The vector `Σ c_k x_k` as a functional, with its norm.
pub(crate) fn combination_functional(seq: &VectorSequence, terms: &[(u64, f64)]) -> Result<(Functional, f64)> {
    let idx: Vec<u64> = terms.iter().map(|t| t.0).collect();
    let w: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let norm = seq.combo_norm(&w, &idx)?;
    if seq.coords(1).is_some() {
        let mut acc = std::collections::BTreeMap::new();
        for &(k, c) in terms {
            for &(i, x) in seq.coords(k).expect("coordinate model") {
                *acc.entry(i).or_insert(0.0) += seq.scale() * c * x;
            }
        }
        let coords = acc.into_iter().filter(|c| c.1 != 0.0).collect();
        Ok((Functional::Coordinates { coords }, norm))
    } else {
        Ok((Functional::Span { terms: terms.to_vec() }, norm))
    }
}

fn unit_of(seq: &VectorSequence, terms: &[(u64, f64)]) -> Result<Option<Functional>> {
    let (_, n) = combination_functional(seq, terms)?;
    if !(n > 0.0) {
        return Ok(None);
    }
    let scaled: Vec<(u64, f64)> = terms.iter().map(|&(k, c)| (k, c / n)).collect();
    Ok(Some(combination_functional(seq, &scaled)?.0))
}

/// Alternating sign ascent `s ← Σ sign⟨s, x_k⟩ x_k`; returns `∥s∥` and signs.
fn sign_ascent(seq: &VectorSequence, idx: &[u64], seed: u64) -> Result<(f64, Vec<f64>)> {
    let mut best = (0.0, vec![1.0; idx.len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for start in 0..ASCENT_STARTS {
        let mut signs: Vec<f64> = if start == 0 {
            vec![1.0; idx.len()]
        } else {
            (0..idx.len())
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect()
        };
        let mut val = 0.0;
        for _ in 0..ASCENT_ITERS {
            let terms: Vec<(u64, f64)> = idx.iter().copied().zip(signs.iter().copied()).collect();
            let (f, n) = combination_functional(seq, &terms)?;
            val = n;
            if !(n > 0.0) {
                break;
            }
            let next: Vec<f64> = idx
                .iter()
                .map(|&k| seq.pairing(&f, k).map(|p| if p >= 0.0 { 1.0 } else { -1.0 }))
                .collect::<Result<_>>()?;
            if next == signs {
                break;
            }
            signs = next;
        }
        if val > best.0 {
            best = (val, signs);
        }
    }
    Ok(best)
}

/// Best positive-part functional found for a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivePart {
    /// `(1/L) Σ ⟨y, x_k⟩⁺` for the returned `y`.
    pub value: f64,
    /// `(1/L) Σ |⟨y, x_k⟩|` for the same `y`, a lower bound on the uniform value.
    pub abs_value: f64,
    pub functional: Option<Functional>,
    pub method: Method,
}

/// `sup_{∥y∥≤1} (1/L) Σ_{k=a}^{b} ⟨y, x_k⟩⁺` with a maximizing functional.
pub fn positive_part_sup(seq: &VectorSequence, a: u64, b: u64, opts: &UniformOptions) -> Result<PositivePart> {
    check_window(seq, a, b)?;
    let len = (b - a + 1) as usize;
    let idx: Vec<u64> = (a..=b).collect();
    let (functional, method) = if let Some(s) = seq.block_schedule() {
        // Tents are nonnegative with disjoint interiors: the best measure is
        // a point mass at the apex of the most populated block.
        let best = s
            .block_counts(a, b)
            .into_iter()
            .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
        (best.map(|(j, _)| Functional::dirac(s.apex(j))), Method::Exact)
    } else if len <= DENSE_LIMIT.min(opts.exact_cutoff) {
        let g = seq.gram_section(&idx)?;
        let (_, c) = gray_max(&g, len, 0.0, 1.0, false);
        (unit_of(seq, &subset_terms(&idx, &c))?, Method::Exact)
    } else {
        (subset_ascent(seq, &idx, opts.seed)?, Method::Bounded)
    };
    let Some(f) = functional else {
        return Ok(PositivePart {
            value: 0.0,
            abs_value: 0.0,
            functional: None,
            method,
        });
    };
    let (mut pos, mut abs) = (0.0, 0.0);
    for &k in &idx {
        let p = seq.pairing(&f, k)?;
        pos += p.max(0.0);
        abs += p.abs();
    }
    Ok(PositivePart {
        value: pos / len as f64,
        abs_value: abs / len as f64,
        functional: Some(f),
        method,
    })
}

fn subset_terms(idx: &[u64], c: &[f64]) -> Vec<(u64, f64)> {
    idx.iter()
        .zip(c)
        .filter(|p| *p.1 != 0.0)
        .map(|(&k, _)| (k, 1.0))
        .collect()
}

/// Alternating ascent `S ← {k : ⟨s, x_k⟩ > 0}, s = Σ_S x_k` from the full sum,
/// the largest element and seeded random elements.
fn subset_ascent(seq: &VectorSequence, idx: &[u64], seed: u64) -> Result<Option<Functional>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<u64>> = vec![idx.to_vec()];
    let mut longest = idx[0];
    let mut longest_norm = -1.0;
    for &k in idx {
        let n = seq.norm(k)?;
        if n > longest_norm {
            longest_norm = n;
            longest = k;
        }
    }
    starts.push(vec![longest]);
    for _ in 2..ASCENT_STARTS {
        starts.push(vec![idx[rng.random_range(0..idx.len())]]);
    }
    let mut best: (f64, Option<Functional>) = (0.0, None);
    for mut set in starts {
        let mut f_best = None;
        let mut val = 0.0;
        for _ in 0..ASCENT_ITERS {
            let terms: Vec<(u64, f64)> = set.iter().map(|&k| (k, 1.0)).collect();
            let (f, n) = combination_functional(seq, &terms)?;
            if !(n > 0.0) {
                break;
            }
            val = n;
            f_best = Some(set.clone());
            let next: Vec<u64> = idx
                .iter()
                .copied()
                .filter_map(|k| match seq.pairing(&f, k) {
                    Ok(p) if p > 0.0 => Some(Ok(k)),
                    Ok(_) => None,
                    Err(e) => Some(Err(e)),
                })
                .collect::<Result<_>>()?;
            if next == set || next.is_empty() {
                break;
            }
            set = next;
        }
        if val > best.0 {
            let terms: Vec<(u64, f64)> = f_best.unwrap().iter().map(|&k| (k, 1.0)).collect();
            best = (val, unit_of(seq, &terms)?);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub n: u64,
    /// Window start for windowed series; 1 for prefix series.
    pub a: u64,
    pub value: f64,
    pub upper: Option<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub quantity: String,
    pub per_n: Vec<SeriesPoint>,
    pub assessment: DecayAssessment,
    pub method: Method,
}

impl MixingReport {
    pub fn verdict(&self) -> DecayVerdict {
        self.assessment.verdict
    }

    /// CSV with columns `n, value_or_lower, upper, method`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,value_or_lower,upper,method\n");
        for p in &self.per_n {
            let upper = p.upper.map(|u| format!("{u:.16e}")).unwrap_or_default();
            let method = match p.method {
                Method::Exact => "exact",
                Method::Bounded => "bounded",
            };
            out.push_str(&format!("{},{:.16e},{},{}\n", p.n, p.value, upper, method));
        }
        out
    }
}

/// Cesàro series of `|⟨f, x_k⟩|` with its decay verdict.
pub fn cesaro_report(seq: &VectorSequence, f: &Functional, ns: &[u64], tolerance: f64) -> Result<MixingReport> {
    let series = cesaro_series(seq, f, ns)?;
    let assessment = assess_decay(&series, tolerance);
    Ok(MixingReport {
        quantity: "cesaro_abs_average".into(),
        per_n: series
            .into_iter()
            .map(|(n, v)| SeriesPoint {
                n,
                a: 1,
                value: v,
                upper: Some(v),
                method: Method::Exact,
            })
            .collect(),
        assessment,
        method: Method::Exact,
    })
}

/// Uniform values on `ns`. The verdict is judged on the upper bounds.
pub fn uniform_report(seq: &VectorSequence, ns: &[u64], opts: &UniformOptions, tolerance: f64) -> Result<MixingReport> {
    check_increasing(ns)?;
    let windows: Vec<(u64, u64)> = ns.iter().map(|&n| (1, n)).collect();
    let mut r = windowed_report(seq, &windows, opts, tolerance)?;
    r.quantity = "uniform_mixing_value".into();
    Ok(r)
}

/// Windowed uniform values; the series is indexed by window end.
pub fn windowed_report(
    seq: &VectorSequence,
    windows: &[(u64, u64)],
    opts: &UniformOptions,
    tolerance: f64,
) -> Result<MixingReport> {
    let per_n: Vec<SeriesPoint> = windows
        .iter()
        .map(|&(a, b)| {
            windowed_uniform_mixing(seq, a, b, opts).map(|u| SeriesPoint {
                n: b,
                a,
                value: u.lower,
                upper: Some(u.upper),
                method: u.method,
            })
        })
        .collect::<Result<_>>()?;
    let series: Vec<(u64, f64)> = per_n
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64 + 1, p.upper.unwrap_or(p.value)))
        .collect();
    let assessment = if windows.iter().all(|w| w.0 == 1) {
        assess_decay(
            &per_n
                .iter()
                .map(|p| (p.n, p.upper.unwrap_or(p.value)))
                .collect::<Vec<_>>(),
            tolerance,
        )
    } else {
        assess_decay(&series, tolerance)
    };
    let method = if per_n.iter().all(|p| p.method == Method::Exact) {
        Method::Exact
    } else {
        Method::Bounded
    };
    Ok(MixingReport {
        quantity: "windowed_uniform_mixing".into(),
        per_n,
        assessment,
        method,
    })
}

/// `∥(1/n) Σ_{j≤n} x_{k_j}∥` over the first `n` elements of `K`.
pub fn subsequence_mean_norm(seq: &VectorSequence, k: &FiniteIndexSet, n: u64) -> Result<f64> {
    if n == 0 || (k.len() as u64) < n {
        return Err(Error::invalid(format!(
            "subsequence has {} elements, need {n}",
            k.len()
        )));
    }
    let idx = &k.elements()[..n as usize];
    Ok(seq.combo_norm(&vec![1.0; idx.len()], idx)? / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingIdentity {
    /// `∥(1/n) Σ_{k∈K,k≤n} x_k − (j/n)(1/j) Σ_{i≤j} x_{k_i}∥`.
    pub difference_norm: f64,
    /// `j(n)/n`.
    pub ratio: f64,
    pub j: u64,
}

/// Both sides of `(1/n) Σ_{k∈K, k≤n} x_k = (j/n) (1/j) Σ_{i≤j} x_{k_i}` where
/// `j = card(K ∩ [1, n])`.
pub fn lemma_2_1_identity(seq: &VectorSequence, k: &FiniteIndexSet, n: u64) -> Result<AveragingIdentity> {
    seq.check_index(n)?;
    match k.elements().first() {
        Some(&first) if first <= n => {}
        _ => return Err(Error::invalid(format!("n = {n} precedes the first element of K"))),
    }
    let j = k.count_upto(n);
    let idx = &k.elements()[..j as usize];
    let (nf, jf) = (n as f64, j as f64);
    // per-term coefficient difference, so cancellation happens before the
    // quadratic form rather than inside it
    let w = vec![1.0 / nf - (jf / nf) * (1.0 / jf); idx.len()];
    Ok(AveragingIdentity {
        difference_norm: seq.combo_norm(&w, idx)?,
        ratio: jf / nf,
        j,
    })
}

pub fn default_epsilon_grid() -> Vec<f64> {
    (2..=8).map(|i| 0.5f64.powi(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureWitness {
    pub epsilon_o: f64,
    pub b: FiniteIndexSet,
    /// Right ends of the chosen windows (the anchors).
    pub anchor_indices: Vec<u64>,
    pub windows: Vec<(u64, u64)>,
    pub functionals: Vec<Functional>,
    /// `card(B_n)` for each anchor's full window.
    pub card_b_n: Vec<u64>,
    /// `card(B'_n)`, the part kept in `B` (0 for the first anchor).
    pub card_b_prime: Vec<u64>,
    pub positive_part: Vec<f64>,
    /// Number of sampled windows whose uniform lower bound exceeds `16 ε_o`.
    pub large_uniform_count: usize,
}

impl FailureWitness {
    /// Re-checks every set relation and inequality from scratch.
    pub fn verify(&self, seq: &VectorSequence) -> Result<()> {
        let eps = self.epsilon_o;
        let fail = |m: String| Err(Error::Verification(m));
        let anchors = &self.anchor_indices;
        if anchors.len() < 2 || anchors.len() != self.functionals.len() || anchors.len() != self.windows.len() {
            return fail("witness needs matching anchors, windows and functionals".into());
        }
        for f in &self.functionals {
            seq.check_unit(f)?;
        }
        for (pos, w) in self.windows.iter().enumerate() {
            let n = pos as u64 + 1;
            let f = &self.functionals[pos];
            let (a, b) = *w;
            if b != anchors[pos] {
                return fail(format!("window {n} does not end at its anchor"));
            }
            let len = b - a + 1;
            let mut card = 0u64;
            let mut card_prime = 0u64;
            for k in a..=b {
                if seq.pairing(f, k)? > 2.0 * eps {
                    card += 1;
                    if n >= 2 && k > anchors[pos - 1] + n {
                        card_prime += 1;
                    }
                }
            }
            if (card as f64) < 2.0 * len as f64 * eps {
                return fail(format!("card(B_{n}) = {card} < 2·{len}·{eps}"));
            }
            if n == 1 {
                continue;
            }
            let prev = anchors[pos - 1];
            if b <= prev || b - prev <= n {
                return fail(format!("anchor gap {} - {prev} not above {n}", b));
            }
            if (card_prime as f64) <= len as f64 * eps {
                return fail(format!("card(B'_{n}) = {card_prime} not above {len}·{eps}"));
            }
            if self.b.count_in(prev + 1, prev + n) != 0 {
                return fail(format!("B meets ({prev}, {}]", prev + n));
            }
            let lo = (prev + n + 1).max(1);
            for &k in &self.b.elements()[self.b.count_upto(lo - 1) as usize..self.b.count_upto(b) as usize] {
                let p = seq.pairing(f, k)?;
                if !(p > 2.0 * eps) {
                    return fail(format!("pairing {p} at k = {k} not above 2·{eps}"));
                }
            }
        }
        let last = *anchors.last().unwrap();
        if self.b.count_in(last + 1, self.b.horizon()) != 0 || self.b.count_upto(anchors[0]) != 0 {
            return fail("B has elements outside the anchored blocks".into());
        }
        Ok(())
    }
}

/// Prefix variant: windows `[1, n]` for `n` in `sample_ns`.
pub fn extract_failure_witness(
    seq: &VectorSequence,
    sample_ns: &[u64],
    epsilon_grid: &[f64],
    opts: &UniformOptions,
) -> Result<Option<FailureWitness>> {
    check_increasing(sample_ns)?;
    let windows: Vec<(u64, u64)> = sample_ns.iter().map(|&n| (1, n)).collect();
    witness_core(seq, &windows, epsilon_grid, opts)
}

/// Windowed variant; the `j`-th window (1-based) must satisfy `b_j − a_j ≥ j`.
pub fn extract_failure_witness_windows(
    seq: &VectorSequence,
    windows: &[(u64, u64)],
    epsilon_grid: &[f64],
    opts: &UniformOptions,
) -> Result<Option<FailureWitness>> {
    for (i, &(a, b)) in windows.iter().enumerate() {
        if a == 0 || b < a || b - a < i as u64 + 1 {
            return Err(Error::invalid(format!(
                "window {} = [{a}, {b}] is shorter than required",
                i + 1
            )));
        }
    }
    witness_core(seq, windows, epsilon_grid, opts)
}

fn witness_core(
    seq: &VectorSequence,
    windows: &[(u64, u64)],
    epsilon_grid: &[f64],
    opts: &UniformOptions,
) -> Result<Option<FailureWitness>> {
    if seq.bound() > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "sequence bound {} exceeds 1; normalize first",
            seq.bound()
        )));
    }
    if epsilon_grid.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::invalid("epsilon grid values must lie in (0, 1]"));
    }
    for &(a, b) in windows {
        check_window(seq, a, b)?;
    }
    let parts: Vec<PositivePart> = windows
        .par_iter()
        .map(|&(a, b)| positive_part_sup(seq, a, b, opts))
        .collect::<Result<_>>()?;
    // Uniform lower bounds: exact where cheap, otherwise the absolute sum of
    // the positive-part functional.
    let uniform: Vec<f64> = windows
        .par_iter()
        .zip(&parts)
        .map(|(&(a, b), p)| {
            let len = (b - a + 1) as usize;
            if seq.family() == Family::ContinuousFunction || len <= opts.exact_cutoff {
                windowed_uniform_mixing(seq, a, b, opts).map(|u| u.lower.max(p.abs_value))
            } else {
                Ok(p.abs_value)
            }
        })
        .collect::<Result<_>>()?;

    let mut grid = epsilon_grid.to_vec();
    grid.sort_by(|x, y| y.total_cmp(x));
    for eps in grid {
        let large = uniform.iter().filter(|&&u| u > 16.0 * eps).count();
        if large < 3 {
            continue;
        }
        let plus: Vec<usize> = (0..windows.len()).filter(|&j| parts[j].value > 4.0 * eps).collect();
        let Some(&first) = plus.first() else { continue };
        let mut chain = vec![first];
        for &j in &plus[1..] {
            let pos = chain.len() as u64 + 1;
            let prev_b = windows[*chain.last().unwrap()].1;
            let (a, b) = windows[j];
            let len = (b - a + 1) as f64;
            if len > (prev_b + pos) as f64 / eps && b > prev_b {
                chain.push(j);
            }
        }
        if chain.len() < 3 {
            continue;
        }
        return build_witness(seq, windows, &parts, &chain, eps, large).map(Some);
    }
    Ok(None)
}

fn build_witness(
    seq: &VectorSequence,
    windows: &[(u64, u64)],
    parts: &[PositivePart],
    chain: &[usize],
    eps: f64,
    large: usize,
) -> Result<FailureWitness> {
    let mut elements = Vec::new();
    let mut card_b_n = Vec::new();
    let mut card_b_prime = Vec::new();
    let mut functionals = Vec::new();
    for (pos, &j) in chain.iter().enumerate() {
        let n = pos as u64 + 1;
        let (a, b) = windows[j];
        let f = parts[j].functional.clone().expect("positive value has a functional");
        let floor = if pos == 0 {
            u64::MAX
        } else {
            windows[chain[pos - 1]].1 + n
        };
        let (mut card, mut kept) = (0, 0);
        for k in a..=b {
            if seq.pairing(&f, k)? > 2.0 * eps {
                card += 1;
                if k > floor {
                    elements.push(k);
                    kept += 1;
                }
            }
        }
        card_b_n.push(card);
        card_b_prime.push(kept);
        functionals.push(f);
    }
    let w = FailureWitness {
        epsilon_o: eps,
        b: FiniteIndexSet::from_unsorted(elements, 1, seq.horizon())?,
        anchor_indices: chain.iter().map(|&j| windows[j].1).collect(),
        windows: chain.iter().map(|&j| windows[j]).collect(),
        functionals,
        card_b_n,
        card_b_prime,
        positive_part: chain.iter().map(|&j| parts[j].value).collect(),
        large_uniform_count: large,
    };
    w.verify(seq)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence_models::BlockSchedule;
    use proptest::prelude::*;

    fn opts() -> UniformOptions {
        UniformOptions {
            restarts: 256,
            ..Default::default()
        }
    }

    #[test]
    fn cesaro_basics() {
        let z = VectorSequence::zero(50).unwrap();
        assert_eq!(cesaro_abs_average(&z, &Functional::basis(1), 50).unwrap(), 0.0);
        let o = VectorSequence::orthonormal(50).unwrap();
        assert_eq!(cesaro_abs_average(&o, &Functional::basis(1), 8).unwrap(), 0.125);
        assert!(cesaro_abs_average(&o, &Functional::basis(1), 51).is_err());
        let big = Functional::Coordinates { coords: vec![(1, 2.0)] };
        assert!(cesaro_abs_average(&o, &big, 5).is_err());
    }

    #[test]
    fn dirac_decay_on_tents() {
        let seq = VectorSequence::example_3_1(BlockSchedule::default_for(1024), 1024).unwrap();
        let s = seq.block_schedule().unwrap().clone();
        // the apex of block 4 only sees indices in that block
        let t = s.apex(4);
        let count = (s.start(5) - s.start(4)) as f64;
        for n in [17u64, 100, 1024] {
            let v = cesaro_abs_average(&seq, &Functional::dirac(t), n).unwrap();
            assert!((v - count / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn orthonormal_uniform_exact() {
        let o = VectorSequence::orthonormal(300).unwrap();
        for n in 1..=16u64 {
            let u = uniform_mixing_value(&o, n, &opts()).unwrap();
            assert_eq!(u.method, Method::Exact);
            assert!((u.lower - 1.0 / (n as f64).sqrt()).abs() <= 1e-12);
        }
        let u = uniform_mixing_value(&o, 64, &opts()).unwrap();
        assert!(u.lower <= 0.125 + 1e-12 && u.upper >= 0.125 - 1e-12);
    }

    #[test]
    fn tents_uniform_half() {
        let seq = VectorSequence::example_3_1(BlockSchedule::default_for(1024), 1024).unwrap();
        let s = seq.block_schedule().unwrap().clone();
        for j in 1..=10 {
            let u = uniform_mixing_value(&seq, s.start(j + 1) - 1, &opts()).unwrap();
            assert!(u.lower >= 0.5);
        }
    }

    #[test]
    fn zero_and_window_cases() {
        let z = VectorSequence::zero(40).unwrap();
        let u = uniform_mixing_value(&z, 30, &opts()).unwrap();
        assert_eq!((u.lower, u.upper), (0.0, 0.0));
        let e = VectorSequence::example_6_2(40).unwrap();
        for k in 1..=40 {
            let u = windowed_uniform_mixing(&e, k, k, &opts()).unwrap();
            assert!((u.lower - e.norm(k).unwrap()).abs() < 1e-15);
        }
        let b = VectorSequence::example_3_2(&BlockSchedule::default_for(64), 64).unwrap();
        let u = windowed_uniform_mixing(&b, 33, 64, &opts()).unwrap();
        assert!((u.lower - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subsequence_and_identity() {
        let o = VectorSequence::orthonormal(100).unwrap();
        let all = FiniteIndexSet::new((1..=100).collect(), 100).unwrap();
        assert!((subsequence_mean_norm(&o, &all, 25).unwrap() - 0.2).abs() < 1e-15);
        let s = BlockSchedule::default_for(1024);
        let b = VectorSequence::example_3_2(&s, 1024).unwrap();
        let starts = FiniteIndexSet::new(s.starts()[..11].to_vec(), 1024).unwrap();
        let v = subsequence_mean_norm(&b, &starts, 9).unwrap();
        assert!((v * v - 1.0 / 9.0).abs() < 1e-15);
        let ev = FiniteIndexSet::multiples(2, 1, 100).unwrap();
        let id = lemma_2_1_identity(&o, &ev, 10).unwrap();
        assert_eq!(id.ratio, 0.5);
        assert!(id.difference_norm <= 1e-12);
        let one = FiniteIndexSet::new(vec![1], 100).unwrap();
        assert_eq!(lemma_2_1_identity(&o, &one, 7).unwrap().ratio, 1.0 / 7.0);
    }

    #[test]
    fn witness_on_tents() {
        let h = 1u64 << 14;
        let seq = VectorSequence::example_3_1(BlockSchedule::default_for(h), h).unwrap();
        let ns: Vec<u64> = (1..=h).collect();
        let w = extract_failure_witness(&seq, &ns, &default_epsilon_grid(), &opts())
            .unwrap()
            .expect("witness");
        assert_eq!(w.epsilon_o, 1.0 / 64.0);
        assert_eq!(w.anchor_indices, vec![1, 193, 12545]);
        w.verify(&seq).unwrap();
    }

    #[test]
    fn no_witness_for_orthonormal_or_zero() {
        let o = VectorSequence::orthonormal(1024).unwrap();
        let ns = crate::grid::geometric_grid(1, 1024, 1.1);
        assert!(extract_failure_witness(&o, &ns, &default_epsilon_grid(), &opts())
            .unwrap()
            .is_none());
        let z = VectorSequence::zero(256).unwrap();
        let ns: Vec<u64> = (1..=256).collect();
        assert!(extract_failure_witness(&z, &ns, &default_epsilon_grid(), &opts())
            .unwrap()
            .is_none());
        let big = VectorSequence::example_6_2(30).unwrap();
        assert!(extract_failure_witness(&big, &[1, 2], &[0.1], &opts()).is_err());
    }

    #[test]
    fn windowed_witness_on_constant() {
        let c = VectorSequence::constant(20_000).unwrap();
        let windows = [(1, 2), (3, 200), (201, 20_000)];
        let w = extract_failure_witness_windows(&c, &windows, &[0.25, 0.125, 1.0 / 32.0], &opts())
            .unwrap()
            .expect("constant sequence fails windowed mixing");
        assert_eq!(w.epsilon_o, 1.0 / 32.0);
        w.verify(&c).unwrap();
        let bad = [(5u64, 5u64)];
        assert!(extract_failure_witness_windows(&c, &bad, &[0.1], &opts()).is_err());
    }

    #[test]
    fn report_csv() {
        let o = VectorSequence::orthonormal(64).unwrap();
        let r = uniform_report(&o, &[1, 4, 16, 64], &opts(), 0.2).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("n,value_or_lower,upper,method\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(!csv.contains('\r'));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scalar_uniform_equals_cesaro(values in proptest::collection::vec(-1.0f64..1.0, 1..16)) {
            let seq = VectorSequence::scalar(&values).unwrap();
            let n = values.len() as u64;
            let u = uniform_mixing_value(&seq, n, &opts()).unwrap();
            let c = cesaro_abs_average(&seq, &Functional::basis(1), n).unwrap();
            prop_assert!((u.lower - c).abs() <= 1e-12);
            prop_assert_eq!(u.lower, u.upper);
        }

        #[test]
        fn uniform_dominates_cesaro(seed in 0u64..1000, n in 1u64..40) {
            let seq = VectorSequence::example_6_2(60).unwrap().normalized();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = seq.random_unit_functional(&mut rng).unwrap();
            let u = uniform_mixing_value(&seq, n, &opts()).unwrap();
            let c = cesaro_abs_average(&seq, &f, n).unwrap();
            prop_assert!(u.upper + 1e-12 >= c);
            prop_assert!(u.lower <= u.upper);
            if u.method == Method::Exact {
                prop_assert!(u.lower + 1e-12 >= c);
            }
        }

        #[test]
        fn identity_holds(n in 1u64..200, p in 1u64..9) {
            let seq = VectorSequence::example_6_2(200).unwrap();
            let k = FiniteIndexSet::multiples(p, 1, 200).unwrap();
            prop_assume!(n >= p);
            let id = lemma_2_1_identity(&seq, &k, n).unwrap();
            prop_assert!(id.difference_norm <= 1e-12);
            prop_assert_eq!(id.j, n / p);
        }
    }
}
