//! Finite subsets of the integers and the density statistics defined on them.
//!
//! A [`FiniteIndexSet`] lives on the domain `[origin, horizon]` where the
//! origin is 1 by default. Origin 0 is used by the symbolic-dynamics code,
//! whose words are indexed from 0. All densities divide by the number of
//! domain points in the prefix or window, so `card(A ∩ [origin, n]) /
//! (n - origin + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::geometric_grid;
use crate::verdict::{assess_decay, DecayAssessment, DecayVerdict, DEFAULT_TOLERANCE};

const BITMAP_LIMIT: u64 = 1 << 26;

#[derive(Debug, Clone)]
pub struct FiniteIndexSet {
    elements: Vec<u64>,
    origin: u64,
    horizon: u64,
    bitmap: Option<Vec<u64>>,
}

impl PartialEq for FiniteIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.elements == other.elements && self.origin == other.origin && self.horizon == other.horizon
    }
}

impl Eq for FiniteIndexSet {}

impl FiniteIndexSet {
    /// Builds a set on `[1, horizon]` from strictly increasing elements.
    pub fn new(elements: Vec<u64>, horizon: u64) -> Result<Self> {
        Self::with_origin(elements, 1, horizon)
    }

    pub fn with_origin(elements: Vec<u64>, origin: u64, horizon: u64) -> Result<Self> {
        if origin > 1 {
            return Err(Error::invalid(format!("origin must be 0 or 1, got {origin}")));
        }
        if horizon < origin {
            return Err(Error::invalid(format!("empty horizon {horizon}")));
        }
        if let Some(w) = elements.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "elements not strictly increasing at {} >= {}",
                w[0], w[1]
            )));
        }
        if let Some(&first) = elements.first() {
            if first < origin {
                return Err(Error::OutOfRange { index: first, horizon });
            }
        }
        if let Some(&last) = elements.last() {
            if last > horizon {
                return Err(Error::OutOfRange { index: last, horizon });
            }
        }
        let bitmap = (horizon <= BITMAP_LIMIT).then(|| {
            let mut words = vec![0u64; (horizon as usize >> 6) + 1];
            for &e in &elements {
                words[(e >> 6) as usize] |= 1 << (e & 63);
            }
            words
        });
        Ok(Self {
            elements,
            origin,
            horizon,
            bitmap,
        })
    }

    /// Sorts and deduplicates before building.
    pub fn from_unsorted(mut elements: Vec<u64>, origin: u64, horizon: u64) -> Result<Self> {
        elements.sort_unstable();
        elements.dedup();
        Self::with_origin(elements, origin, horizon)
    }

    pub fn empty(horizon: u64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    /// `{p, 2p, ...} ∩ [origin, horizon]`, including 0 when the origin is 0.
    pub fn multiples(p: u64, origin: u64, horizon: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("period p must be positive"));
        }
        let start = if origin == 0 { 0 } else { p };
        let elements = (start..=horizon).step_by(p as usize).collect();
        Self::with_origin(elements, origin, horizon)
    }

    /// Union of the blocks `[s, s + len - 1]`, clipped to the horizon.
    pub fn blocks(starts: &[u64], lengths: &[u64], origin: u64, horizon: u64) -> Result<Self> {
        if starts.len() != lengths.len() {
            return Err(Error::DimensionMismatch {
                expected: starts.len(),
                found: lengths.len(),
            });
        }
        let mut elements = Vec::new();
        for (&s, &len) in starts.iter().zip(lengths) {
            if len == 0 {
                continue;
            }
            let end = (s + len - 1).min(horizon);
            elements.extend(s.max(origin)..=end);
        }
        Self::from_unsorted(elements, origin, horizon)
    }

    /// `∪_{j ≤ jmax} [j!, j! + j]`. The default horizon is `jmax! + jmax`.
    pub fn factorial_blocks(jmax: u64, origin: u64, horizon: Option<u64>) -> Result<Self> {
        if jmax == 0 || jmax > 20 {
            return Err(Error::invalid(format!("jmax must lie in [1, 20], got {jmax}")));
        }
        let mut starts = Vec::new();
        let mut f = 1u64;
        for j in 1..=jmax {
            f *= j;
            starts.push(f);
        }
        let lengths: Vec<u64> = (1..=jmax).map(|j| j + 1).collect();
        let horizon = horizon.unwrap_or(f + jmax);
        Self::blocks(&starts, &lengths, origin, horizon)
    }

    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn origin(&self) -> u64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Number of domain points, `horizon - origin + 1`.
    pub fn domain_len(&self) -> u64 {
        self.horizon - self.origin + 1
    }

    pub fn contains(&self, k: u64) -> bool {
        if k > self.horizon {
            return false;
        }
        match &self.bitmap {
            Some(words) => words[(k >> 6) as usize] >> (k & 63) & 1 == 1,
            None => self.elements.binary_search(&k).is_ok(),
        }
    }

    /// `card(A ∩ [origin, n])`.
    pub fn count_upto(&self, n: u64) -> u64 {
        self.elements.partition_point(|&e| e <= n) as u64
    }

    /// `card(A ∩ [a, b])`.
    pub fn count_in(&self, a: u64, b: u64) -> u64 {
        if a > b {
            return 0;
        }
        let lo = self.elements.partition_point(|&e| e < a);
        let hi = self.elements.partition_point(|&e| e <= b);
        (hi - lo) as u64
    }

    /// Copy of the set with a different horizon, dropping elements beyond it.
    pub fn truncated(&self, horizon: u64) -> Result<Self> {
        let keep = self.count_upto(horizon) as usize;
        Self::with_origin(self.elements[..keep].to_vec(), self.origin, horizon)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.origin != other.origin {
            return Err(Error::invalid("cannot unite sets with different origins"));
        }
        let mut all = self.elements.clone();
        all.extend_from_slice(&other.elements);
        Self::from_unsorted(all, self.origin, self.horizon.max(other.horizon))
    }
}

impl Serialize for FiniteIndexSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FiniteIndexSet", 3)?;
        st.serialize_field("origin", &self.origin)?;
        st.serialize_field("horizon", &self.horizon)?;
        st.serialize_field("elements", &self.elements)?;
        st.end()
    }
}

/// Set generators accepted in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Multiples {
        p: u64,
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default = "default_origin")]
        origin: u64,
    },
    Blocks {
        starts: Vec<u64>,
        lengths: Vec<u64>,
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default = "default_origin")]
        origin: u64,
    },
    Explicit {
        elements: Vec<u64>,
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default = "default_origin")]
        origin: u64,
    },
    FactorialBlocks {
        jmax: u64,
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default = "default_origin")]
        origin: u64,
    },
}

fn default_origin() -> u64 {
    1
}

impl SetSpec {
    /// Builds the set. `horizon` overrides the horizon given in the spec value.
    pub fn build(&self, horizon: Option<u64>) -> Result<FiniteIndexSet> {
        match self {
            SetSpec::Multiples { p, horizon: h, origin } => {
                let h = horizon
                    .or(*h)
                    .ok_or_else(|| Error::invalid("multiples set needs an explicit horizon"))?;
                FiniteIndexSet::multiples(*p, *origin, h)
            }
            SetSpec::Blocks {
                starts,
                lengths,
                horizon: h,
                origin,
            } => {
                let natural = starts
                    .iter()
                    .zip(lengths)
                    .map(|(s, l)| s + l.saturating_sub(1))
                    .max()
                    .unwrap_or(1)
                    .max(1);
                FiniteIndexSet::blocks(starts, lengths, *origin, horizon.or(*h).unwrap_or(natural))
            }
            SetSpec::Explicit {
                elements,
                horizon: h,
                origin,
            } => {
                let natural = elements.iter().copied().max().unwrap_or(1).max(1);
                FiniteIndexSet::from_unsorted(elements.clone(), *origin, horizon.or(*h).unwrap_or(natural))
            }
            SetSpec::FactorialBlocks {
                jmax,
                horizon: h,
                origin,
            } => FiniteIndexSet::factorial_blocks(*jmax, *origin, horizon.or(*h)),
        }
    }
}

/// Exact ratio `num / den` kept alongside its float value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
    pub value: f64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        Self {
            num,
            den,
            value: num as f64 / den as f64,
        }
    }

    fn gt(&self, other: &Ratio) -> bool {
        (self.num as u128) * (other.den as u128) > (other.num as u128) * (self.den as u128)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    /// `(n, card(A ∩ [origin, n]) / (n - origin + 1))` on a geometric grid
    /// over `[tail_start, horizon]`.
    pub ratios: Vec<(u64, f64)>,
    pub upper_estimate: f64,
    pub lower_estimate: f64,
    pub banach_estimate: f64,
    pub window_schedule: u64,
    pub tail_start: u64,
    pub horizon: u64,
    pub upper_at: u64,
    pub lower_at: u64,
}

const RATIO_GRID: f64 = 1.05;

/// Upper and lower density estimates over `n ∈ [tail_start, horizon]`.
///
/// The extremes are exact over every `n` in the range; only the reported
/// ratio list is sampled. The Banach estimate uses windows of length at least
/// `min(⌊√horizon⌋, tail_start)` so that it dominates the upper estimate.
pub fn density_profile(a: &FiniteIndexSet, tail_start: u64) -> Result<DensityProfile> {
    if tail_start == 0 || tail_start > a.horizon || tail_start < a.origin {
        return Err(Error::invalid(format!(
            "tail_start {tail_start} outside [{}, {}]",
            a.origin.max(1),
            a.horizon
        )));
    }
    let den = |n: u64| n - a.origin + 1;
    let mut count = a.count_upto(tail_start);
    let mut idx = count as usize;
    let first = Ratio::new(count, den(tail_start));
    let (mut hi, mut lo) = (first, first);
    let (mut hi_at, mut lo_at) = (tail_start, tail_start);
    for n in tail_start + 1..=a.horizon {
        if idx < a.elements.len() && a.elements[idx] == n {
            idx += 1;
            count += 1;
        }
        let r = Ratio::new(count, den(n));
        if r.gt(&hi) {
            hi = r;
            hi_at = n;
        }
        if lo.gt(&r) {
            lo = r;
            lo_at = n;
        }
    }
    let ratios = geometric_grid(tail_start, a.horizon, RATIO_GRID)
        .into_iter()
        .map(|n| (n, a.count_upto(n) as f64 / den(n) as f64))
        .collect();
    let window = default_min_window(a.domain_len()).min(tail_start);
    let banach = banach_window(a, window)?;
    Ok(DensityProfile {
        ratios,
        upper_estimate: hi.value,
        lower_estimate: lo.value,
        banach_estimate: banach.density.value,
        window_schedule: window,
        tail_start,
        horizon: a.horizon,
        upper_at: hi_at,
        lower_at: lo_at,
    })
}

/// `⌊√len⌋`, at least 1.
pub fn default_min_window(len: u64) -> u64 {
    (len as f64).sqrt().floor().max(1.0) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowDensity {
    pub a: u64,
    pub b: u64,
    pub density: Ratio,
}

/// Max of `card(A ∩ [a, b]) / (b - a + 1)` over windows of length at least
/// `min_window` inside the domain.
pub fn banach_upper_density(a: &FiniteIndexSet, min_window: u64) -> Result<f64> {
    Ok(banach_window(a, min_window)?.density.value)
}

/// Maximizing window for [`banach_upper_density`].
///
/// Works on prefix-count points `(i, P_i)`. A window is the slope between two
/// points at least `min_window` apart; the best left point for each right
/// point is a tangent to the lower convex hull of the admissible left points.
pub fn banach_window(a: &FiniteIndexSet, min_window: u64) -> Result<WindowDensity> {
    let len = a.domain_len();
    if min_window == 0 || min_window > len {
        return Err(Error::invalid(format!("min_window {min_window} outside [1, {len}]")));
    }
    if a.is_empty() {
        return Ok(WindowDensity {
            a: a.origin,
            b: a.origin + min_window - 1,
            density: Ratio::new(0, min_window),
        });
    }
    // Incremental prefix counts, P_i = card(A ∩ first i domain points).
    let mut counts = Vec::with_capacity(len as usize + 1);
    counts.push(0i64);
    let mut idx = 0usize;
    let mut c = 0i64;
    for pos in a.origin..=a.horizon {
        if idx < a.elements.len() && a.elements[idx] == pos {
            idx += 1;
            c += 1;
        }
        counts.push(c);
    }

    let pt = |i: u64| (i as i64, counts[i as usize]);
    // (q - p) × (r - p)
    let cross = |p: (i64, i64), q: (i64, i64), r: (i64, i64)| -> i128 {
        (q.0 - p.0) as i128 * (r.1 - p.1) as i128 - (q.1 - p.1) as i128 * (r.0 - p.0) as i128
    };
    let mut hull: Vec<(i64, i64)> = Vec::new();
    let mut best = (0i64, 1i64, 0u64, min_window); // (num, den, left, right)
    for r in min_window..=len {
        let p = pt(r - min_window);
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
        let q = pt(r);
        // First hull index t whose successor does not improve the slope to q.
        let (mut lo, mut hi) = (0usize, hull.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cross(hull[mid], hull[mid + 1], q) > 0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let l = hull[lo];
        let (num, den) = (q.1 - l.1, q.0 - l.0);
        if (num as i128) * (best.1 as i128) > (best.0 as i128) * (den as i128) {
            best = (num, den, l.0 as u64, r);
        }
    }
    let (num, den, left, right) = best;
    Ok(WindowDensity {
        a: a.origin + left,
        b: a.origin + right - 1,
        density: Ratio::new(num as u64, den as u64),
    })
}

/// Largest gap between consecutive elements, counting the stretch from the
/// origin to the first element and from the last element to the horizon.
/// `None` signals a set that is not relatively dense (empty).
pub fn relative_density_gap(a: &FiniteIndexSet) -> Option<u64> {
    let (&first, &last) = (a.elements.first()?, a.elements.last()?);
    let inner = a.elements.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    Some(inner.max(first + 1 - a.origin).max(a.horizon + 1 - last))
}

/// `N ∪ {p, 2p, ...}` on the same domain.
pub fn augment_with_multiples(n: &FiniteIndexSet, p: u64) -> Result<FiniteIndexSet> {
    let m = FiniteIndexSet::multiples(p, 1, n.horizon)?;
    let mut all = n.elements.clone();
    all.extend(m.elements);
    FiniteIndexSet::from_unsorted(all, n.origin, n.horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRatio {
    pub value: f64,
    /// Position `j` (1-based) attaining the maximum of `k_j / j`.
    pub at: u64,
}

/// `max_j k_j / j` over the elements of `K`.
pub fn subsequence_growth_ratio(k: &FiniteIndexSet) -> Result<GrowthRatio> {
    if k.is_empty() {
        return Err(Error::invalid("growth ratio of an empty set"));
    }
    let mut best = (k.elements[0], 1u64);
    for (i, &e) in k.elements.iter().enumerate() {
        let j = i as u64 + 1;
        if (e as u128) * (best.1 as u128) > (best.0 as u128) * (j as u128) {
            best = (e, j);
        }
    }
    Ok(GrowthRatio {
        value: best.0 as f64 / best.1 as f64,
        at: best.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KvnCut {
    pub m: usize,
    pub threshold: f64,
    /// Block is `(start, end]`; the first block starts at 0.
    pub start: u64,
    pub end: u64,
    pub members: u64,
    /// Largest `|a_k|` over `k` in the block outside `E`, 0 if none.
    pub max_off_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KvnReport {
    pub cesaro: Vec<(u64, f64)>,
    pub cesaro_assessment: DecayAssessment,
    pub refused: bool,
    pub cuts: Vec<u64>,
    pub blocks: Vec<KvnCut>,
    pub truncated: bool,
    pub profile: Option<DensityProfile>,
}

#[derive(Debug, Clone)]
pub struct KvnExtraction {
    pub set: FiniteIndexSet,
    pub report: KvnReport,
}

/// Zero-density set outside of which `a` is uniformly small.
///
/// Cut points follow `c_{m+1} = min{n > c_m : card{k ≤ n : |a_k| ≥ τ_{m+1}} / n
/// ≤ τ_{m+1}}` and `E ∩ (c_m, c_{m+1}] = {k : |a_k| ≥ τ_m}`. The stretch before
/// `c_1` uses `τ_1`, and the stretch past the last cut uses the last threshold
/// reached. Extraction is refused when the Cesàro means of `|a|` do not decay.
pub fn kvn_extract(a: &[f64], schedule: &[f64]) -> Result<KvnExtraction> {
    kvn_extract_with(a, schedule, DEFAULT_TOLERANCE)
}

pub fn kvn_extract_with(a: &[f64], schedule: &[f64], tolerance: f64) -> Result<KvnExtraction> {
    if a.is_empty() {
        return Err(Error::invalid("empty sequence"));
    }
    if schedule.is_empty() || schedule.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("threshold schedule must be positive and finite"));
    }
    if let Some(i) = schedule.windows(2).position(|w| w[1] >= w[0]) {
        return Err(Error::invalid(format!(
            "threshold schedule not strictly decreasing at position {}",
            i + 2
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sequence has non-finite entries"));
    }
    let horizon = a.len() as u64;
    let mut sum = 0.0;
    let mut full = Vec::with_capacity(a.len());
    for (i, x) in a.iter().enumerate() {
        sum += x.abs();
        full.push(((i + 1) as u64, sum / (i + 1) as f64));
    }
    let cesaro_assessment = assess_decay(&full, tolerance);
    let cesaro: Vec<(u64, f64)> = geometric_grid(1, horizon, RATIO_GRID)
        .into_iter()
        .map(|n| full[n as usize - 1])
        .collect();
    if cesaro_assessment.verdict != DecayVerdict::Decaying {
        return Ok(KvnExtraction {
            set: FiniteIndexSet::empty(horizon)?,
            report: KvnReport {
                cesaro,
                cesaro_assessment,
                refused: true,
                cuts: Vec::new(),
                blocks: Vec::new(),
                truncated: false,
                profile: None,
            },
        });
    }

    let big = |k: u64, tau: f64| a[k as usize - 1].abs() >= tau;
    // Smallest n > after with card{k ≤ n : |a_k| ≥ tau} / n ≤ tau.
    let next_cut = |after: u64, tau: f64| -> Option<u64> {
        let mut count = (1..=after).filter(|&k| big(k, tau)).count() as u64;
        for n in after + 1..=horizon {
            if big(n, tau) {
                count += 1;
            }
            if (count as f64) <= tau * n as f64 {
                return Some(n);
            }
        }
        None
    };

    let mut cuts = Vec::new();
    let mut truncated = false;
    let mut prev = 0u64;
    for &tau in schedule {
        match next_cut(prev, tau) {
            Some(c) => {
                cuts.push(c);
                prev = c;
            }
            None => {
                truncated = true;
                break;
            }
        }
    }

    let mut elements = Vec::new();
    let mut blocks = Vec::new();
    let mut push_block = |m: usize, tau: f64, start: u64, end: u64, elements: &mut Vec<u64>| {
        let mut members = 0;
        let mut max_off = 0.0f64;
        for k in start + 1..=end {
            if big(k, tau) {
                elements.push(k);
                members += 1;
            } else {
                max_off = max_off.max(a[k as usize - 1].abs());
            }
        }
        blocks.push(KvnCut {
            m,
            threshold: tau,
            start,
            end,
            members,
            max_off_e: max_off,
        });
    };
    if cuts.is_empty() {
        push_block(1, schedule[0], 0, horizon, &mut elements);
    } else {
        push_block(1, schedule[0], 0, cuts[0], &mut elements);
        for (i, w) in cuts.windows(2).enumerate() {
            push_block(i + 1, schedule[i], w[0], w[1], &mut elements);
        }
        let last = cuts.len();
        if cuts[last - 1] < horizon {
            push_block(last, schedule[last - 1], cuts[last - 1], horizon, &mut elements);
        }
    }
    for b in &blocks {
        if b.max_off_e >= b.threshold {
            return Err(Error::Verification(format!(
                "off-E value {} reaches threshold {} in block m={}",
                b.max_off_e, b.threshold, b.m
            )));
        }
    }
    let set = FiniteIndexSet::new(elements, horizon)?;
    let tail_start = (horizon / 100).max(1);
    let profile = density_profile(&set, tail_start)?;
    Ok(KvnExtraction {
        set,
        report: KvnReport {
            cesaro,
            cesaro_assessment,
            refused: false,
            cuts,
            blocks,
            truncated,
            profile: Some(profile),
        },
    })
}

/// All shifts `k ≥ 0` with `F + k ⊆ B` and `max(F) + k ≤ B.horizon`.
pub fn translate_check(f: &FiniteIndexSet, b: &FiniteIndexSet) -> Result<Vec<u64>> {
    let Some((&fmin, &fmax)) = f.elements.first().zip(f.elements.last()) else {
        return Ok((0..=b.horizon).collect());
    };
    if fmax > b.horizon {
        return Err(Error::invalid(format!("max(F) = {fmax} exceeds horizon {}", b.horizon)));
    }
    let kmax = b.horizon - fmax;
    Ok(b.elements
        .iter()
        .filter(|&&e| e >= fmin && e - fmin <= kmax)
        .map(|&e| e - fmin)
        .filter(|&k| f.elements.iter().all(|&x| b.contains(x + k)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_banach(a: &FiniteIndexSet, w: u64) -> (u64, u64) {
        let mut best = (0u64, 1u64);
        for lo in a.origin..=a.horizon {
            for hi in lo + w - 1..=a.horizon {
                let c = a.count_in(lo, hi);
                let d = hi - lo + 1;
                if c * best.1 > best.0 * d {
                    best = (c, d);
                }
            }
        }
        best
    }

    #[test]
    fn multiples_of_three() {
        let a = FiniteIndexSet::multiples(3, 1, 3000).unwrap();
        let p = density_profile(&a, 1000).unwrap();
        assert!((p.upper_estimate - 1.0 / 3.0).abs() <= 1e-3);
        assert!((p.lower_estimate - 1.0 / 3.0).abs() <= 1e-3);
        assert!(p.lower_estimate <= p.upper_estimate && p.upper_estimate <= p.banach_estimate);
    }

    #[test]
    fn squares_have_small_upper_density() {
        let sq: Vec<u64> = (1..=1000u64).map(|j| j * j).collect();
        let a = FiniteIndexSet::new(sq, 1_000_000).unwrap();
        let p = density_profile(&a, 10_000).unwrap();
        assert!(p.upper_estimate <= 0.011);
        // max is at n = 10^4 where the count is 100
        assert_eq!(p.upper_at, 10_000);
        assert_eq!(p.upper_estimate, 0.01);
    }

    #[test]
    fn factorial_blocks_profile() {
        let a = FiniteIndexSet::factorial_blocks(10, 1, Some(3_628_800)).unwrap();
        let p = density_profile(&a, 1000).unwrap();
        // {1..4} ∪ {6..9} ∪ {24..28} ∪ {120..125} ∪ {720..726}
        assert_eq!(a.count_upto(1000), 26);
        assert_eq!(p.upper_at, 1000);
        assert_eq!(p.upper_estimate, 26.0 / 1000.0);
    }

    #[test]
    fn factorial_banach_is_one() {
        let a = FiniteIndexSet::factorial_blocks(10, 1, None).unwrap();
        assert_eq!(a.horizon(), 3_628_810);
        assert_eq!(banach_upper_density(&a, 10).unwrap(), 1.0);
        let w = banach_window(&a, 11).unwrap();
        assert_eq!(w.density.value, 1.0);
        assert_eq!((w.a, w.b - w.a + 1), (3_628_800, 11));
    }

    #[test]
    fn periodic_banach_bounds() {
        let a = FiniteIndexSet::multiples(3, 1, 3000).unwrap();
        let v = banach_upper_density(&a, 30).unwrap();
        assert!((1.0 / 3.0..=1.0 / 3.0 + 1.0 / 30.0).contains(&v));
        let e = FiniteIndexSet::empty(50).unwrap();
        assert_eq!(banach_upper_density(&e, 7).unwrap(), 0.0);
        assert!(banach_upper_density(&e, 51).is_err());
    }

    #[test]
    fn gaps() {
        let a = FiniteIndexSet::multiples(5, 1, 100).unwrap();
        assert_eq!(relative_density_gap(&a), Some(5));
        let dy: Vec<u64> = (0..=20).map(|i| 1u64 << i).collect();
        let d = FiniteIndexSet::new(dy, 1 << 20).unwrap();
        assert_eq!(relative_density_gap(&d), Some(1 << 19));
        assert_eq!(relative_density_gap(&FiniteIndexSet::empty(3).unwrap()), None);
        let aug = augment_with_multiples(&d, 7).unwrap();
        assert!(relative_density_gap(&aug).unwrap() <= 7);
    }

    #[test]
    fn augment_examples() {
        let e = FiniteIndexSet::empty(20).unwrap();
        assert_eq!(augment_with_multiples(&e, 4).unwrap().elements(), &[4, 8, 12, 16, 20]);
        let n = FiniteIndexSet::new(vec![3], 12).unwrap();
        assert_eq!(augment_with_multiples(&n, 5).unwrap().elements(), &[3, 5, 10]);
        assert!(augment_with_multiples(&n, 0).is_err());
    }

    #[test]
    fn growth_ratios() {
        let evens = FiniteIndexSet::multiples(2, 1, 100).unwrap();
        assert_eq!(subsequence_growth_ratio(&evens).unwrap().value, 2.0);
        let sq: Vec<u64> = (1..=1000u64).map(|j| j * j).collect();
        let s = FiniteIndexSet::new(sq, 1_000_000).unwrap();
        assert_eq!(subsequence_growth_ratio(&s).unwrap().value, 1000.0);
        let all = FiniteIndexSet::new((1..=10).collect(), 10).unwrap();
        assert_eq!(subsequence_growth_ratio(&all).unwrap().value, 1.0);
        assert!(subsequence_growth_ratio(&FiniteIndexSet::empty(4).unwrap()).is_err());
    }

    #[test]
    fn kvn_on_squares() {
        let n = 1_000_000usize;
        let mut a = vec![0.0; n];
        for j in 1..=1000usize {
            a[j * j - 1] = 1.0;
        }
        let sched: Vec<f64> = (1..=50).map(|m| 1.0 / m as f64).collect();
        let out = kvn_extract(&a, &sched).unwrap();
        assert!(!out.report.refused);
        assert!(out.set.elements().iter().all(|&k| {
            let r = (k as f64).sqrt().round() as u64;
            r * r == k
        }));
        assert!(out.report.blocks.iter().all(|b| b.max_off_e == 0.0));
        assert!(out.report.profile.as_ref().unwrap().upper_estimate <= 0.011);
    }

    #[test]
    fn kvn_trivial_cases() {
        let z = kvn_extract(&vec![0.0; 1000], &[0.5, 0.25]).unwrap();
        assert!(z.set.is_empty() && !z.report.refused);
        let ones = kvn_extract(&vec![1.0; 1000], &[0.5, 0.25]).unwrap();
        assert!(ones.report.refused);
        assert_eq!(ones.report.cesaro_assessment.verdict, DecayVerdict::Failed);
        assert!(kvn_extract(&[0.0; 4], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn translates() {
        let f = FiniteIndexSet::new(vec![1, 2], 2).unwrap();
        let b = FiniteIndexSet::new(vec![1, 2, 3, 11, 12, 13], 13).unwrap();
        assert_eq!(translate_check(&f, &b).unwrap(), vec![0, 1, 10, 11]);
        let e = FiniteIndexSet::empty(1).unwrap();
        assert_eq!(translate_check(&e, &b).unwrap().len(), 14);
        let one = FiniteIndexSet::new(vec![1], 1).unwrap();
        let ev = FiniteIndexSet::multiples(2, 1, 20).unwrap();
        let ks = translate_check(&one, &ev).unwrap();
        assert_eq!(ks, (1..=19).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn origin_zero_sets() {
        let a = FiniteIndexSet::multiples(3, 0, 8).unwrap();
        assert_eq!(a.elements(), &[0, 3, 6]);
        assert!(a.contains(0) && !a.contains(1));
        assert_eq!(relative_density_gap(&a), Some(3));
        let p = density_profile(&a, 2).unwrap();
        assert_eq!(p.upper_estimate, 0.5);
    }

    #[test]
    fn spec_roundtrip() {
        let s: SetSpec = serde_json::from_str(r#"{"kind":"factorial_blocks","jmax":4}"#).unwrap();
        let a = s.build(None).unwrap();
        assert_eq!(a.horizon(), 28);
        assert_eq!(a.elements(), &[1, 2, 3, 4, 6, 7, 8, 9, 24, 25, 26, 27, 28]);
        let m: SetSpec = serde_json::from_str(r#"{"kind":"multiples","p":3}"#).unwrap();
        assert!(m.build(None).is_err());
        assert_eq!(m.build(Some(9)).unwrap().elements(), &[3, 6, 9]);
    }

    fn arb_set() -> impl Strategy<Value = FiniteIndexSet> {
        (0u64..2).prop_flat_map(arb_set_from)
    }

    fn arb_set_from(origin: u64) -> impl Strategy<Value = FiniteIndexSet> {
        (1u64..120).prop_flat_map(move |h| {
            proptest::collection::btree_set(origin..=h, 0..=(h as usize))
                .prop_map(move |s| FiniteIndexSet::with_origin(s.into_iter().collect(), origin, h).unwrap())
        })
    }

    proptest! {
        #[test]
        fn banach_matches_brute_force(a in arb_set(), w in 1u64..20) {
            prop_assume!(w <= a.domain_len());
            let got = banach_window(&a, w).unwrap();
            let (c, d) = brute_banach(&a, w);
            prop_assert_eq!(got.density.num * d, c * got.density.den);
            prop_assert!(got.b - got.a + 1 >= w);
            prop_assert_eq!(a.count_in(got.a, got.b), got.density.num);
        }

        #[test]
        fn profile_is_ordered(a in arb_set(), t in 1u64..50) {
            prop_assume!(t <= a.horizon);
            let p = density_profile(&a, t).unwrap();
            prop_assert!(p.lower_estimate <= p.upper_estimate);
            prop_assert!(p.upper_estimate <= p.banach_estimate);
            prop_assert!(p.ratios.iter().all(|r| (0.0..=1.0).contains(&r.1)));
        }

        #[test]
        fn membership_agrees(a in arb_set()) {
            for k in 0..=a.horizon + 2 {
                prop_assert_eq!(a.contains(k), a.elements().binary_search(&k).is_ok());
            }
        }

        #[test]
        fn augmented_gap_bounded(a in arb_set_from(1), p in 1u64..15) {
            prop_assume!(p <= a.horizon());
            let g = augment_with_multiples(&a, p).unwrap();
            prop_assert!(relative_density_gap(&g).unwrap() <= p);
            prop_assert!(a.elements().iter().all(|&e| g.contains(e)));
        }

        #[test]
        fn relatively_dense_lower_bound(a in arb_set_from(1), t in 1u64..50) {
            prop_assume!(t <= a.horizon());
            if let Some(l) = relative_density_gap(&a) {
                let p = density_profile(&a, t).unwrap();
                prop_assert!(p.lower_estimate >= 1.0 / l as f64 - 1.0 / t as f64);
            }
        }

        #[test]
        fn zero_translate_iff_subset(f in arb_set_from(1), b in arb_set_from(1)) {
            prop_assume!(f.elements().last().is_none_or(|&m| m <= b.horizon()));
            let ks = translate_check(&f, &b).unwrap();
            let subset = f.elements().iter().all(|&e| b.contains(e));
            prop_assert_eq!(ks.first() == Some(&0), subset);
        }

        #[test]
        fn periodic_density(p in 1u64..12, mask in 1u32..4096, h in 500u64..2000) {
            let residues: Vec<u64> = (0..p).filter(|r| mask >> r & 1 == 1).collect();
            prop_assume!(!residues.is_empty());
            let elems: Vec<u64> = (1..=h).filter(|k| residues.contains(&(k % p))).collect();
            let a = FiniteIndexSet::new(elems, h).unwrap();
            let t = 200;
            let prof = density_profile(&a, t).unwrap();
            let d = residues.len() as f64 / p as f64;
            prop_assert!((prof.upper_estimate - d).abs() <= p as f64 / t as f64);
            prop_assert!((prof.lower_estimate - d).abs() <= p as f64 / t as f64);
        }
    }
}
