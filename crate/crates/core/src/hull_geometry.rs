//! Minimum-norm points in convex hulls of sequence elements, separating
//! functionals, and a greedy Cesàro-convergent subsequence selector.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integer_sets::FiniteIndexSet;
use crate::mixing_analysis::combination_functional;
use crate::sequence_models::{Functional, VectorSequence};

pub const DEFAULT_HULL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullCertificate {
    pub indices: Vec<u64>,
    /// Simplex weights aligned with `indices`.
    pub weights: Vec<f64>,
    pub achieved_norm: f64,
    /// Frank–Wolfe duality gap; `achieved² − min² ≤ gap`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Certified interval for the distance from 0 to the hull.
    pub distance_interval: (f64, f64),
}

/// Gram columns fetched on demand; Frank–Wolfe touches few vertices.
struct Columns<'a> {
    seq: &'a VectorSequence,
    idx: &'a [u64],
    cache: HashMap<usize, Vec<f64>>,
}

impl<'a> Columns<'a> {
    fn get(&mut self, i: usize) -> Result<&[f64]> {
        if !self.cache.contains_key(&i) {
            let col = self
                .idx
                .iter()
                .map(|&k| self.seq.gram(k, self.idx[i]))
                .collect::<Result<Vec<f64>>>()?;
            self.cache.insert(i, col);
        }
        Ok(&self.cache[&i])
    }
}

pub fn min_norm_in_hull(
    seq: &VectorSequence,
    indices: &FiniteIndexSet,
    tol: f64,
    max_iter: usize,
) -> Result<HullCertificate> {
    solve(seq, indices.elements(), tol, max_iter, None)
}

/// Away-step conditional gradient on `λ ↦ λᵀGλ` over the simplex with exact
/// line search. `r = Gλ` is kept current from cached columns.
fn solve(
    seq: &VectorSequence,
    idx: &[u64],
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<HullCertificate> {
    if !seq.is_inner_product() {
        return Err(Error::UnsupportedModel {
            model: "tents",
            what: "convex hull minimization",
        });
    }
    if idx.is_empty() {
        return Err(Error::invalid("hull needs at least one index"));
    }
    let m = idx.len();
    let diag: Vec<f64> = idx.iter().map(|&k| seq.gram(k, k)).collect::<Result<_>>()?;
    let start = (0..m).min_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap();
    let mut cols = Columns {
        seq,
        idx,
        cache: HashMap::new(),
    };
    let mut lambda = vec![0.0; m];
    lambda[start] = 1.0;
    let mut r = cols.get(start)?.to_vec();
    let mut active = vec![start];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let f: f64 = active.iter().map(|&i| lambda[i] * r[i]).sum();
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
        let s = (0..m).min_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
        if 2.0 * (f - r[s]) <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let v = *active.iter().max_by(|&&a, &&b| r[a].total_cmp(&r[b])).unwrap();
        let toward = f - r[s] >= r[v] - f && s != v;
        // Direction d, slope λᵀGd, curvature dᵀGd, and step cap.
        let (slope, curv, cap) = if toward {
            (r[s] - f, diag[s] - 2.0 * r[s] + f, 1.0)
        } else {
            (
                f - r[v],
                f - 2.0 * r[v] + diag[v],
                lambda[v] / (1.0 - lambda[v]).max(f64::MIN_POSITIVE),
            )
        };
        let gamma = if curv > 0.0 {
            (-slope / curv).clamp(0.0, cap)
        } else {
            cap
        };
        if gamma == 0.0 {
            break;
        }
        if toward {
            let col = cols.get(s)?;
            for (ri, ci) in r.iter_mut().zip(col) {
                *ri += gamma * (ci - *ri);
            }
            lambda.iter_mut().for_each(|l| *l *= 1.0 - gamma);
            lambda[s] += gamma;
            if gamma == 1.0 {
                lambda.iter_mut().for_each(|l| *l = 0.0);
                lambda[s] = 1.0;
            }
            if !active.contains(&s) {
                active.push(s);
            }
        } else {
            let col = cols.get(v)?;
            for (ri, ci) in r.iter_mut().zip(col) {
                *ri += gamma * (*ri - ci);
            }
            lambda.iter_mut().for_each(|l| *l *= 1.0 + gamma);
            lambda[v] -= gamma;
            if gamma == cap {
                lambda[v] = 0.0;
            }
        }
        active.retain(|&i| lambda[i] > 0.0);
    }

    // Fresh recomputation for the certificate.
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
    let mut r = vec![0.0; m];
    for &i in &active {
        for (rj, cj) in r.iter_mut().zip(cols.get(i)?) {
            *rj += lambda[i] * cj;
        }
    }
    let f: f64 = active.iter().map(|&i| lambda[i] * r[i]).sum::<f64>().max(0.0);
    let rmin = r.iter().copied().fold(f64::INFINITY, f64::min);
    let gap = 2.0 * (f - rmin);
    let a = f.sqrt();
    let low = if a > 0.0 { (a - gap.max(0.0) / a).max(0.0) } else { 0.0 };
    Ok(HullCertificate {
        indices: idx.to_vec(),
        weights: lambda,
        achieved_norm: a,
        gap,
        iterations,
        converged,
        distance_interval: (low, a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Separation {
    pub functional: Functional,
    /// Guaranteed lower bound on every pairing over the index set.
    pub pairing_floor: f64,
    pub certificate: HullCertificate,
}

/// A unit functional bounded below on the hull, when the hull test excludes 0
/// at level `delta`.
pub fn separation_witness(seq: &VectorSequence, indices: &FiniteIndexSet, delta: f64) -> Result<Option<Separation>> {
    let cert = min_norm_in_hull(
        seq,
        indices,
        (delta * delta / 4.0).min(DEFAULT_HULL_TOL),
        DEFAULT_MAX_ITER,
    )?;
    let a = cert.achieved_norm;
    if !(a >= delta) || cert.gap > delta * delta / 4.0 {
        return Ok(None);
    }
    let terms: Vec<(u64, f64)> = cert
        .indices
        .iter()
        .zip(&cert.weights)
        .filter(|p| *p.1 > 0.0)
        .map(|(&k, &w)| (k, w / a))
        .collect();
    let (functional, _) = combination_functional(seq, &terms)?;
    // rounding slack keeps the floor attained by the pairings themselves
    let floor = a - cert.gap.max(0.0) / a - 1e-12;
    for &k in &cert.indices {
        let p = seq.pairing(&functional, k)?;
        if p < floor {
            return Err(Error::Verification(format!(
                "pairing {p} at k = {k} below certified {floor}"
            )));
        }
    }
    Ok(Some(Separation {
        functional,
        pairing_floor: floor,
        certificate: cert,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanachSaksSelection {
    pub selected: Vec<u64>,
    pub stalled: bool,
    pub stall_report: Option<String>,
    /// `∥(1/n) Σ_{i≤n} y_i∥²` for every prefix.
    pub prefix_mean_norm_sq: Vec<f64>,
    /// `(M² + 2)/n` for every prefix.
    pub prefix_bound: Vec<f64>,
}

/// Greedy selection: with partial sum `S_m`, take the next candidate with
/// `|⟨S_m, x_k⟩| ≤ 1/(m+1)`.
pub fn banach_saks_select(
    seq: &VectorSequence,
    candidates: &[u64],
    target_count: usize,
) -> Result<BanachSaksSelection> {
    if !seq.is_inner_product() {
        return Err(Error::UnsupportedModel {
            model: "tents",
            what: "subsequence selection",
        });
    }
    for &k in candidates {
        seq.check_index(k)?;
    }
    let m2 = seq.bound() * seq.bound();
    let mut selected: Vec<u64> = Vec::new();
    let mut sum_sq = 0.0;
    let mut prefix_mean_norm_sq = Vec::new();
    let mut prefix_bound = Vec::new();
    let mut pos = 0;
    while selected.len() < target_count {
        let thr = 1.0 / (selected.len() as f64 + 1.0);
        let mut pick = None;
        while pos < candidates.len() {
            let k = candidates[pos];
            pos += 1;
            let cross: f64 = selected.iter().map(|&y| seq.gram(y, k)).sum::<Result<f64>>()?;
            if cross.abs() <= thr {
                pick = Some((k, cross));
                break;
            }
        }
        let Some((k, cross)) = pick else { break };
        sum_sq += seq.gram(k, k)? + 2.0 * cross;
        selected.push(k);
        let n = selected.len() as f64;
        let mean_sq = sum_sq.max(0.0) / (n * n);
        let bound = (m2 + 2.0) / n;
        if mean_sq > bound * (1.0 + 1e-12) {
            return Err(Error::Verification(format!("prefix {n}: {mean_sq} exceeds {bound}")));
        }
        prefix_mean_norm_sq.push(mean_sq);
        prefix_bound.push(bound);
    }
    let stalled = selected.len() < target_count;
    let stall_report = stalled.then(|| {
        format!(
            "no candidate met threshold 1/{} after {} selections",
            selected.len() + 1,
            selected.len()
        )
    });
    Ok(BanachSaksSelection {
        selected,
        stalled,
        stall_report,
        prefix_mean_norm_sq,
        prefix_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence_models::BlockSchedule;
    use proptest::prelude::*;

    fn set(v: Vec<u64>, h: u64) -> FiniteIndexSet {
        FiniteIndexSet::new(v, h).unwrap()
    }

    #[test]
    fn cancellation_and_symmetry() {
        let s = VectorSequence::alternating(4).unwrap();
        let c = min_norm_in_hull(&s, &set(vec![1, 2], 4), 1e-10, 1000).unwrap();
        assert!(c.achieved_norm <= 1e-6);
        assert!((c.weights[0] - 0.5).abs() < 1e-9);
        assert!(separation_witness(&s, &set(vec![1, 2], 4), 1e-6).unwrap().is_none());

        let o = VectorSequence::orthonormal(300).unwrap();
        for m in [1u64, 2, 7, 50] {
            let c = min_norm_in_hull(&o, &set((1..=m).collect(), 300), 1e-10, 100_000).unwrap();
            assert!((c.achieved_norm - 1.0 / (m as f64).sqrt()).abs() < 1e-6);
            assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_starts_hull() {
        let s = BlockSchedule::default_for(1024);
        let b = VectorSequence::example_3_2(&s, 1024).unwrap();
        let idx = set(s.starts()[..8].to_vec(), 1024);
        let c = min_norm_in_hull(&b, &idx, 1e-10, 100_000).unwrap();
        assert!((c.achieved_norm - 1.0 / 8f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn separation_examples() {
        let o = VectorSequence::orthonormal(10).unwrap();
        let w = separation_witness(&o, &set(vec![3], 10), 0.5).unwrap().unwrap();
        assert!((o.pairing(&w.functional, 3).unwrap() - 1.0).abs() < 1e-12);
        let w = separation_witness(&o, &set(vec![1, 2], 10), 0.5).unwrap().unwrap();
        for k in [1, 2] {
            assert!((o.pairing(&w.functional, k).unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn hull_decays_on_dense_subset() {
        let o = VectorSequence::orthonormal(800).unwrap();
        let k = FiniteIndexSet::multiples(3, 1, 800).unwrap();
        let first = set(k.elements()[..256].to_vec(), 800);
        assert!(min_norm_in_hull(&o, &first, 1e-10, 100_000).unwrap().achieved_norm <= 0.1);
    }

    #[test]
    fn descent_is_monotone() {
        let e = VectorSequence::example_6_2(60).unwrap();
        let idx: Vec<u64> = (1..=60).collect();
        let mut trace = Vec::new();
        let c = solve(&e, &idx, 1e-12, 5000, Some(&mut trace)).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(c.gap >= -1e-10);
        let form: f64 = (0..60)
            .flat_map(|i| (0..60).map(move |j| (i, j)))
            .map(|(i, j)| c.weights[i] * c.weights[j] * e.gram(idx[i], idx[j]).unwrap())
            .sum();
        assert!((c.achieved_norm.powi(2) - form).abs() < 1e-10);
    }

    #[test]
    fn selector_examples() {
        let o = VectorSequence::orthonormal(100).unwrap();
        let cand: Vec<u64> = (5..100).collect();
        let s = banach_saks_select(&o, &cand, 20).unwrap();
        assert_eq!(s.selected, (5..25).collect::<Vec<_>>());
        assert!((s.prefix_mean_norm_sq[19] - 1.0 / 20.0).abs() < 1e-15);

        let sch = BlockSchedule::default_for(1024);
        let b = VectorSequence::example_3_2(&sch, 1024).unwrap();
        let all: Vec<u64> = (1..=1024).collect();
        let s = banach_saks_select(&b, &all, 11).unwrap();
        assert!(!s.stalled);
        let blocks: Vec<usize> = s.selected.iter().map(|&k| sch.block_of(k)).collect();
        assert_eq!(blocks, (1..=11).collect::<Vec<_>>());

        let c = VectorSequence::constant(50).unwrap();
        let s = banach_saks_select(&c, &(1..=50).collect::<Vec<_>>(), 5).unwrap();
        assert!(s.stalled && s.selected == vec![1]);
    }

    #[test]
    fn tents_are_rejected() {
        let t = VectorSequence::example_3_1(BlockSchedule::default_for(64), 64).unwrap();
        assert!(matches!(
            min_norm_in_hull(&t, &set(vec![1], 64), 1e-10, 10),
            Err(Error::UnsupportedModel { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn certificate_sound_on_orthonormal(picks in proptest::collection::btree_set(1u64..200, 1..40)) {
            let o = VectorSequence::orthonormal(200).unwrap();
            let m = picks.len() as f64;
            let c = min_norm_in_hull(&o, &set(picks.into_iter().collect(), 200), 1e-10, 100_000).unwrap();
            prop_assert!(c.achieved_norm.powi(2) - 1.0 / m <= c.gap + 1e-9);
            prop_assert!(c.distance_interval.0 <= 1.0 / m.sqrt() + 1e-9);
            prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
        }

        #[test]
        fn selector_prefix_bound(h in 20u64..200) {
            let e = VectorSequence::example_6_2(h).unwrap();
            let s = banach_saks_select(&e, &(1..=h).collect::<Vec<_>>(), 10).unwrap();
            for (v, b) in s.prefix_mean_norm_sq.iter().zip(&s.prefix_bound) {
                prop_assert!(v <= b);
            }
        }
    }
}
