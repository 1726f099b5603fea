//! Characteristic words of integer sets and the structure search.
//!
//! Indexing here starts at 0: a set `B` becomes the word `ω` with `ω_k = 1`
//! iff `k ∈ B`, for `k = 0..=horizon`. Sets built with origin 1 simply have
//! `ω_0 = 0`.
//!
//! The search looks for offsets `n_1 < n_2 < …` whose windows
//! `ω[n_j ..= n_j + m_j]` extend one another, and decodes `A` from the longest
//! window, so that `A ∩ [0, m_j] = {k ≤ m_j : k + n_j ∈ B}` for every `j`. A
//! generic point for an invariant measure cannot be certified at finite
//! horizon; recurrence of each chosen pattern at least `min_recurrence` times
//! stands in for it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::integer_sets::{
    banach_upper_density, default_min_window, density_profile, translate_check, FiniteIndexSet, Ratio,
};

pub const DEFAULT_MIN_RECURRENCE: usize = 3;
const MAX_REVISIONS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryWord {
    bits: Vec<u8>,
}

impl BinaryWord {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("word bits must be 0 or 1"));
        }
        Ok(Self { bits })
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::invalid(format!("bad word character {:?}", c as char))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// The set `{k : ω_k = 1}` with origin 0.
    pub fn decode(&self) -> Result<FiniteIndexSet> {
        let horizon = self.bits.len().saturating_sub(1) as u64;
        let elems = self
            .bits
            .iter()
            .enumerate()
            .filter(|p| *p.1 == 1)
            .map(|p| p.0 as u64)
            .collect();
        FiniteIndexSet::with_origin(elems, 0, horizon)
    }
}

impl fmt::Display for BinaryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for BinaryWord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Bits `ω_0 ..= ω_horizon` of `B`.
pub fn char_word(b: &FiniteIndexSet) -> BinaryWord {
    let mut bits = vec![0u8; b.horizon() as usize + 1];
    for &k in b.elements() {
        bits[k as usize] = 1;
    }
    BinaryWord { bits }
}

/// Bits `n .. n + length` of `w`.
pub fn shift_window(w: &BinaryWord, n: usize, length: usize) -> Result<BinaryWord> {
    match n.checked_add(length) {
        Some(end) if end <= w.len() => Ok(BinaryWord {
            bits: w.bits[n..end].to_vec(),
        }),
        _ => Err(Error::OutOfRange {
            index: (n + length) as u64,
            horizon: w.len() as u64,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderEstimate {
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub windows: Vec<(u64, u64)>,
    pub max_cylinder_length: usize,
    /// Pattern (0/1 string) to per-window occurrence counts and frequencies.
    pub cylinder_estimates: BTreeMap<String, CylinderEstimate>,
    /// Best `{ω_0 = 1}` frequency over the windows.
    pub best_one_frequency: f64,
    pub banach_estimate: f64,
    /// `banach_estimate − best_one_frequency`, floored at 0.
    pub slack: f64,
}

/// Frequencies of every observed cylinder of length at most the cap, over
/// offsets `n ∈ [a_j, b_j]`. The `j`-th window (1-based) must have
/// `b_j − a_j ≥ j`.
pub fn empirical_measure(
    b: &FiniteIndexSet,
    windows: &[(u64, u64)],
    max_cylinder_length: usize,
) -> Result<EmpiricalMeasure> {
    let word = char_word(b);
    let len = word.len() as u64;
    for (i, &(lo, hi)) in windows.iter().enumerate() {
        if hi < lo || hi - lo < i as u64 + 1 {
            return Err(Error::invalid(format!("window {} = [{lo}, {hi}] is too short", i + 1)));
        }
        if hi + max_cylinder_length.max(1) as u64 > len {
            return Err(Error::OutOfRange {
                index: hi + max_cylinder_length as u64,
                horizon: len - 1,
            });
        }
    }
    let nw = windows.len();
    let mut table: BTreeMap<String, CylinderEstimate> = BTreeMap::new();
    let per_window: Vec<HashMap<&[u8], u64>> = windows
        .par_iter()
        .map(|&(lo, hi)| {
            let mut m: HashMap<&[u8], u64> = HashMap::new();
            for n in lo as usize..=hi as usize {
                for l in 1..=max_cylinder_length {
                    *m.entry(&word.bits[n..n + l]).or_insert(0) += 1;
                }
            }
            m
        })
        .collect();
    for (j, m) in per_window.iter().enumerate() {
        for (&pat, &c) in m {
            let key = BinaryWord { bits: pat.to_vec() }.to_string();
            table
                .entry(key)
                .or_insert_with(|| CylinderEstimate {
                    counts: vec![0; nw],
                    frequencies: vec![0.0; nw],
                })
                .counts[j] = c;
        }
    }
    table.insert(
        "".into(),
        CylinderEstimate {
            counts: windows.iter().map(|w| w.1 - w.0 + 1).collect(),
            frequencies: vec![],
        },
    );
    for est in table.values_mut() {
        est.frequencies = est
            .counts
            .iter()
            .zip(windows)
            .map(|(&c, w)| c as f64 / (w.1 - w.0 + 1) as f64)
            .collect();
    }
    let best = table
        .get("1")
        .map_or(0.0, |e| e.frequencies.iter().copied().fold(0.0, f64::max));
    let banach = banach_upper_density(b, default_min_window(b.domain_len()))?;
    Ok(EmpiricalMeasure {
        windows: windows.to_vec(),
        max_cylinder_length,
        cylinder_estimates: table,
        best_one_frequency: best,
        banach_estimate: banach,
        slack: (banach - best).max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureWitness {
    /// The set `A` with origin 0.
    pub a: FiniteIndexSet,
    pub m_list: Vec<u64>,
    pub n_list: Vec<u64>,
    pub periodic: Option<u64>,
    /// Occurrences of each chosen window pattern in the whole word.
    pub recurrence: Vec<usize>,
    pub a_density: Ratio,
    pub b_banach_estimate: f64,
    pub genericity_proxy: String,
    pub revisions: usize,
}

impl StructureWitness {
    /// Re-checks `A ∩ [0, m_j] = {k ∈ [0, m_j] : k + n_j ∈ B}` for every `j`.
    pub fn verify(&self, b: &FiniteIndexSet) -> Result<()> {
        if self.m_list.len() != self.n_list.len() || self.n_list.is_empty() {
            return Err(Error::Verification("m and n lists must be nonempty and aligned".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Verification("n list is not strictly increasing".into()));
        }
        for (&m, &n) in self.m_list.iter().zip(&self.n_list) {
            if m > self.a.horizon() || n + m > b.horizon() {
                return Err(Error::Verification(format!(
                    "window [{n}, {}] leaves the horizon",
                    n + m
                )));
            }
            for k in 0..=m {
                if self.a.contains(k) != b.contains(k + n) {
                    return Err(Error::Verification(format!("mismatch at k = {k} for n = {n}, m = {m}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Periodicity {
    pub period: u64,
    /// `card(B ∩ [0, n_o − 1]) / n_o`.
    pub density: Ratio,
    pub witness: StructureWitness,
}

/// Smallest period of the whole word, via the prefix function.
fn smallest_period(bits: &[u8]) -> usize {
    let n = bits.len();
    if n == 0 {
        return 0;
    }
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut k = pi[i - 1];
        while k > 0 && bits[i] != bits[k] {
            k = pi[k - 1];
        }
        if bits[i] == bits[k] {
            k += 1;
        }
        pi[i] = k;
    }
    n - pi[n - 1]
}

/// Smallest `n_o ≤ horizon/2` with `ω_{k+n_o} = ω_k` on the whole word.
pub fn detect_periodicity(b: &FiniteIndexSet) -> Result<Option<Periodicity>> {
    let word = char_word(b);
    let h = b.horizon();
    let p = smallest_period(&word.bits) as u64;
    if p == 0 || p > h / 2 {
        return Ok(None);
    }
    let count = b.count_in(0, p - 1);
    let jn = (h / (2 * p)).clamp(1, 8);
    let n_list: Vec<u64> = (1..=jn).map(|j| j * p).collect();
    let top = h - n_list[n_list.len() - 1];
    let m_list: Vec<u64> = (1..=jn).map(|j| top - jn + j).collect();
    let witness = periodic_witness(b, p, m_list, n_list)?;
    Ok(Some(Periodicity {
        period: p,
        density: Ratio::new(count, p),
        witness,
    }))
}

fn periodic_witness(b: &FiniteIndexSet, p: u64, m_list: Vec<u64>, n_list: Vec<u64>) -> Result<StructureWitness> {
    let a = FiniteIndexSet::with_origin(b.elements().to_vec(), 0, b.horizon())?;
    let w = StructureWitness {
        a_density: Ratio::new(b.count_in(0, p - 1), p),
        a,
        recurrence: vec![usize::MAX; m_list.len()],
        m_list,
        n_list,
        periodic: Some(p),
        b_banach_estimate: banach_upper_density(b, default_min_window(b.domain_len()))?,
        genericity_proxy: "exact period of the whole word".into(),
        revisions: 0,
    };
    w.verify(b)?;
    Ok(w)
}

/// Candidate extensions at one chain level, best first.
struct Level {
    m: u64,
    /// (offset, pattern ones, recurrence) in preference order.
    candidates: Vec<(u64, usize, usize)>,
    next: usize,
}

pub fn structure_search(b: &FiniteIndexSet, m_targets: &[u64], min_recurrence: usize) -> Result<StructureWitness> {
    let h = b.horizon();
    if m_targets.is_empty() || m_targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("m targets must be nonempty and strictly increasing"));
    }
    let m_max = *m_targets.last().unwrap();
    if m_max > h / 4 {
        return Err(Error::invalid(format!(
            "largest m target {m_max} exceeds horizon/4 = {}",
            h / 4
        )));
    }
    if let Some(per) = detect_periodicity(b)? {
        let p = per.period;
        let n_list: Vec<u64> = (1..=m_targets.len() as u64).map(|j| j * p).collect();
        if n_list.last().unwrap() + m_max <= h {
            return periodic_witness(b, p, m_targets.to_vec(), n_list);
        }
    }
    let word = char_word(b);
    let bits = &word.bits;
    // Occurrence counts of every window pattern, per target length.
    let counts: Vec<HashMap<&[u8], usize>> = m_targets
        .par_iter()
        .map(|&m| {
            let l = m as usize + 1;
            let mut map: HashMap<&[u8], usize> = HashMap::new();
            for n in 0..=(bits.len() - l) {
                *map.entry(&bits[n..n + l]).or_insert(0) += 1;
            }
            map
        })
        .collect();

    let level_for = |depth: usize, prev: Option<u64>| -> Level {
        let m = m_targets[depth];
        let l = m as usize + 1;
        let prefix = prev.map(|n| &bits[n as usize..n as usize + m_targets[depth - 1] as usize + 1]);
        let start = prev.map_or(0, |n| n + 1) as usize;
        let mut first_at: HashMap<&[u8], u64> = HashMap::new();
        for n in start..=(bits.len() - l) {
            let pat = &bits[n..n + l];
            if prefix.is_some_and(|p| &pat[..p.len()] != p) {
                continue;
            }
            first_at.entry(pat).or_insert(n as u64);
        }
        let mut candidates: Vec<(u64, usize, usize)> = first_at
            .into_iter()
            .map(|(pat, n)| (n, pat.iter().filter(|&&x| x == 1).count(), counts[depth][pat]))
            .filter(|c| c.2 >= min_recurrence)
            .collect();
        candidates.sort_by(|x, y| y.1.cmp(&x.1).then(y.2.cmp(&x.2)).then(x.0.cmp(&y.0)));
        Level { m, candidates, next: 0 }
    };

    let mut levels: Vec<Level> = vec![level_for(0, None)];
    let mut chain: Vec<(u64, usize)> = Vec::new();
    let mut longest: Vec<u64> = Vec::new();
    let mut revisions = 0;
    while chain.len() < m_targets.len() {
        let depth = chain.len();
        let lv = &mut levels[depth];
        if lv.next < lv.candidates.len() {
            let (n, _, rec) = lv.candidates[lv.next];
            lv.next += 1;
            chain.push((n, rec));
            if chain.len() > longest.len() {
                longest = chain.iter().map(|c| c.0).collect();
            }
            if chain.len() < m_targets.len() {
                levels.push(level_for(chain.len(), Some(n)));
            }
        } else {
            if depth == 0 || revisions >= MAX_REVISIONS {
                return Err(Error::SearchExhausted { longest_chain: longest });
            }
            revisions += 1;
            levels.pop();
            chain.pop();
        }
    }
    let n_last = chain.last().unwrap().0;
    let a_elems: Vec<u64> = (0..=m_max).filter(|&k| bits[(n_last + k) as usize] == 1).collect();
    let ones = a_elems.len() as u64;
    let w = StructureWitness {
        a: FiniteIndexSet::with_origin(a_elems, 0, m_max)?,
        m_list: levels.iter().map(|l| l.m).collect(),
        n_list: chain.iter().map(|c| c.0).collect(),
        periodic: None,
        recurrence: chain.iter().map(|c| c.1).collect(),
        a_density: Ratio::new(ones, m_max + 1),
        b_banach_estimate: banach_upper_density(b, default_min_window(b.domain_len()))?,
        genericity_proxy: format!("each chosen window pattern occurs at >= {min_recurrence} offsets"),
        revisions,
    };
    w.verify(b)?;
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslateRow {
    pub m: u64,
    pub n: u64,
    pub f_size: usize,
    /// Translates `k ≥ n_j` with `F + k ⊆ B`, capped at 16 for reporting.
    pub translates: Vec<u64>,
    pub count_at_or_after: usize,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslatesReport {
    pub witness: StructureWitness,
    pub rows: Vec<TranslateRow>,
    pub all_verified: bool,
    /// Density of `I` on the window it lives in.
    pub i_density: f64,
    /// `D(A) + D*(A_o) − 1`.
    pub density_floor: f64,
}

/// `I = A ∩ A_o` for the structure witness `A` of `B`, and for each `j` the
/// translates of `F = I ∩ [0, m_j]` into `B` from `n_j` on.
pub fn positive_density_translates(
    a_o: &FiniteIndexSet,
    b: &FiniteIndexSet,
    m_targets: &[u64],
    min_recurrence: usize,
) -> Result<(FiniteIndexSet, TranslatesReport)> {
    if a_o.horizon() != b.horizon() {
        return Err(Error::invalid(format!(
            "A_o horizon {} differs from B horizon {}",
            a_o.horizon(),
            b.horizon()
        )));
    }
    let witness = structure_search(b, m_targets, min_recurrence)?;
    let top = witness.a.horizon();
    let i_elems: Vec<u64> = witness
        .a
        .elements()
        .iter()
        .copied()
        .filter(|&k| a_o.contains(k))
        .collect();
    let i = FiniteIndexSet::with_origin(i_elems, 0, top)?;
    let mut rows = Vec::new();
    for (&m, &n) in witness.m_list.iter().zip(&witness.n_list) {
        let f = i.truncated(m)?;
        let ks = translate_check(&f, b)?;
        let after: Vec<u64> = ks.into_iter().filter(|&k| k >= n).collect();
        rows.push(TranslateRow {
            m,
            n,
            f_size: f.len(),
            count_at_or_after: after.len(),
            verified: after.len() >= 2,
            translates: after.into_iter().take(16).collect(),
        });
    }
    let dom = (top + 1) as f64;
    let upper_ao = density_profile(a_o, (a_o.horizon() / 100).max(1))?.upper_estimate;
    let report = TranslatesReport {
        all_verified: rows.iter().all(|r| r.verified),
        rows,
        i_density: i.len() as f64 / dom,
        density_floor: witness.a.len() as f64 / dom + upper_ao - 1.0,
        witness,
    };
    Ok((i, report))
}
