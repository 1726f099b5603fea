//! Bounded vector sequences and their evaluation oracles.
//!
//! Every sequence is indexed from 1 and exposes three oracles: pairing with a
//! [`Functional`], Gram entries (inner-product models only) and the norm of a
//! finite linear combination. Models:
//!
//! * coordinate vectors in ℓ² (orthonormal families, block repeats, the
//!   three-vector rotation construction, operator orbits, explicit vectors);
//! * monomials `t^α` in L²[0,1], known only through their Gram matrix;
//! * an explicit Gram section;
//! * piecewise-linear tents in C[0,1] under the sup norm.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    InnerProduct,
    ContinuousFunction,
    OperatorOrbit,
}

/// A functional on the sequence's space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Functional {
    /// Sparse coordinate vector for coordinate models, sorted by coordinate.
    Coordinates { coords: SparseVec },
    /// `Σ c_i x_i` over sequence elements; works with any inner-product model.
    Span { terms: Vec<(u64, f64)> },
    /// `sign · δ_t` on C[0,1].
    Dirac { t: f64, sign: f64 },
}

impl Functional {
    /// Unit-normalized coordinate functional.
    pub fn unit_coordinates(mut coords: SparseVec) -> Result<Self> {
        coords.sort_by_key(|c| c.0);
        if coords.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate coordinate in functional"));
        }
        let n = coords.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("functional has zero or non-finite norm"));
        }
        coords.iter_mut().for_each(|c| c.1 /= n);
        Ok(Functional::Coordinates { coords })
    }

    pub fn basis(coord: usize) -> Self {
        Functional::Coordinates {
            coords: vec![(coord, 1.0)],
        }
    }

    pub fn dirac(t: f64) -> Self {
        Functional::Dirac { t, sign: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonomialSchedule {
    exponents: Vec<Ratio<i64>>,
    #[serde(skip)]
    floats: Vec<f64>,
}

impl MonomialSchedule {
    pub fn new(exponents: Vec<Ratio<i64>>) -> Result<Self> {
        if exponents.first().is_some_and(|a| *a <= Ratio::zero()) {
            return Err(Error::InvalidSchedule("first exponent must be positive".into()));
        }
        if let Some(i) = exponents.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSchedule(format!(
                "exponents not strictly increasing at positions {} and {}",
                i + 1,
                i + 2
            )));
        }
        let floats = exponents.iter().map(ratio_f64).collect();
        Ok(Self { exponents, floats })
    }

    /// Blocks of four starting at every `k ≡ 1 (mod 4)`:
    /// `k, k + 1/(4(k+2)), k + 1, k + 3/2`.
    pub fn four_case(horizon: usize) -> Self {
        let exps = (1..=horizon as i64)
            .map(|i| {
                let k = i - (i - 1) % 4;
                match (i - 1) % 4 {
                    0 => Ratio::from_integer(k),
                    1 => Ratio::from_integer(k) + Ratio::new(1, 4 * (k + 2)),
                    2 => Ratio::from_integer(k + 1),
                    _ => Ratio::from_integer(k + 1) + Ratio::new(1, 2),
                }
            })
            .collect();
        Self::new(exps).expect("four-case exponents are increasing")
    }

    pub fn exponents(&self) -> &[Ratio<i64>] {
        &self.exponents
    }

    pub fn exponent(&self, k: u64) -> f64 {
        self.floats[k as usize - 1]
    }

    /// Exact `1/(α_j + α_k + 1)`.
    pub fn gram_exact(&self, j: u64, k: u64) -> BigRational {
        let s = big(&self.exponents[j as usize - 1]) + big(&self.exponents[k as usize - 1]);
        (s + BigRational::one()).recip()
    }

    fn gram(&self, j: u64, k: u64) -> f64 {
        let a = &self.exponents[j as usize - 1];
        let b = &self.exponents[k as usize - 1];
        // 1/(p/q + r/s + 1) = qs / (ps + rq + qs), evaluated in i128.
        let (p, q) = (*a.numer() as i128, *a.denom() as i128);
        let (r, s) = (*b.numer() as i128, *b.denom() as i128);
        let num = q * s;
        let den = p * s + r * q + q * s;
        num as f64 / den as f64
    }
}

fn big(r: &Ratio<i64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

fn ratio_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Block starts `1 = n_1 < n_2 < ...` with `2(n_j − 1) ≤ n_{j+1} − 1`, and
/// knots `1 > t_1 > t_2 > ... > 0`. Block `j` is `[n_j, n_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSchedule {
    starts: Vec<u64>,
    knots: Vec<f64>,
}

impl BlockSchedule {
    pub fn new(starts: Vec<u64>, knots: Vec<f64>) -> Result<Self> {
        if starts.len() < 2 {
            return Err(Error::InvalidSchedule("need at least two block starts".into()));
        }
        if starts[0] != 1 {
            return Err(Error::InvalidSchedule(format!("n_1 must be 1, got {}", starts[0])));
        }
        for (j, w) in starts.windows(2).enumerate() {
            if w[1] <= w[0] || 2 * (w[0] - 1) > w[1] - 1 {
                return Err(Error::InvalidSchedule(format!(
                    "ratio condition fails for (n_{}, n_{}) = ({}, {})",
                    j + 1,
                    j + 2,
                    w[0],
                    w[1]
                )));
            }
        }
        if knots.len() < starts.len() {
            return Err(Error::InvalidSchedule(format!(
                "need {} knots for {} blocks, got {}",
                starts.len(),
                starts.len() - 1,
                knots.len()
            )));
        }
        if !(knots[0] < 1.0) {
            return Err(Error::InvalidSchedule("t_1 must be below 1".into()));
        }
        for (j, w) in knots.windows(2).enumerate() {
            if !(w[1] < w[0]) || !(w[1] > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "knots not strictly decreasing and positive at (t_{}, t_{})",
                    j + 1,
                    j + 2
                )));
            }
        }
        Ok(Self { starts, knots })
    }

    /// `n_1 = 1, n_2 = 2, n_{j+1} = 2n_j − 1`, `t_j = 1/(j+1)`, enough blocks
    /// to cover `[1, horizon]`.
    pub fn default_for(horizon: u64) -> Self {
        let mut starts = vec![1u64, 2];
        while *starts.last().unwrap() <= horizon {
            let n = *starts.last().unwrap();
            starts.push(2 * n - 1);
        }
        let knots = (1..=starts.len()).map(|j| 1.0 / (j as f64 + 1.0)).collect();
        Self::new(starts, knots).expect("default schedule is valid")
    }

    /// From starts only, with the default knots.
    pub fn from_starts(starts: Vec<u64>) -> Result<Self> {
        let knots = (1..=starts.len()).map(|j| 1.0 / (j as f64 + 1.0)).collect();
        Self::new(starts, knots)
    }

    /// `n_j` for 1-based `j`.
    pub fn start(&self, j: usize) -> u64 {
        self.starts[j - 1]
    }

    pub fn starts(&self) -> &[u64] {
        &self.starts
    }

    /// `t_j` for 1-based `j`.
    pub fn knot(&self, j: usize) -> f64 {
        self.knots[j - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of complete blocks.
    pub fn blocks(&self) -> usize {
        self.starts.len() - 1
    }

    /// Largest index covered by complete blocks.
    pub fn capacity(&self) -> u64 {
        self.starts[self.starts.len() - 1] - 1
    }

    /// 1-based block containing `k`.
    pub fn block_of(&self, k: u64) -> usize {
        self.starts.partition_point(|&s| s <= k)
    }

    /// Tent `g_j` on `[t_{j+1}, t_j]` with apex 1 at the midpoint.
    pub fn tent(&self, j: usize, t: f64) -> f64 {
        let (lo, hi) = (self.knots[j], self.knots[j - 1]);
        if t <= lo || t >= hi {
            return 0.0;
        }
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (1.0 - (t - mid).abs() / half).max(0.0)
    }

    pub fn apex(&self, j: usize) -> f64 {
        0.5 * (self.knots[j] + self.knots[j - 1])
    }

    /// `card([a, b] ∩ block j)` for every block touched, in block order.
    pub fn block_counts(&self, a: u64, b: u64) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        if a > b {
            return out;
        }
        for j in self.block_of(a)..=self.block_of(b) {
            let lo = self.starts[j - 1].max(a);
            let hi = (self.starts[j] - 1).min(b);
            if lo <= hi {
                out.push((j, hi - lo + 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Model {
    Coordinates(Vec<SparseVec>),
    Monomial(MonomialSchedule),
    Gram { n: usize, entries: Vec<f64> },
    Tents(BlockSchedule),
}

#[derive(Debug, Clone)]
pub struct VectorSequence {
    name: String,
    family: Family,
    model: Model,
    horizon: u64,
    bound: f64,
    scale: f64,
    metadata: BTreeMap<String, String>,
}

const MODEL_COORDS: &str = "coordinate";
const MODEL_TENTS: &str = "continuous_function";
const MODEL_GRAM: &str = "gram-only";

impl VectorSequence {
    fn coordinates(name: &str, family: Family, vectors: Vec<SparseVec>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("sequence needs at least one element"));
        }
        let mut vectors = vectors;
        for v in &mut vectors {
            v.sort_by_key(|c| c.0);
            if v.iter().any(|c| !c.1.is_finite()) {
                return Err(Error::invalid("non-finite coordinate"));
            }
        }
        let bound = vectors.iter().map(|v| sparse_norm(v)).fold(0.0, f64::max);
        Ok(Self {
            name: name.into(),
            family,
            horizon: vectors.len() as u64,
            model: Model::Coordinates(vectors),
            bound,
            scale: 1.0,
            metadata: BTreeMap::new(),
        })
    }

    /// Explicit coordinate vectors `x_k = vectors[k-1]`.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        let sparse = vectors.into_iter().map(dense_to_sparse).collect();
        Self::coordinates("coordinates", Family::InnerProduct, sparse)
    }

    /// `x_k = e_k`.
    pub fn orthonormal(horizon: u64) -> Result<Self> {
        let v = (1..=horizon as usize).map(|k| vec![(k, 1.0)]).collect();
        Self::coordinates("orthonormal", Family::InnerProduct, v)
    }

    pub fn zero(horizon: u64) -> Result<Self> {
        Self::coordinates("zero", Family::InnerProduct, vec![Vec::new(); horizon as usize])
    }

    /// `x_k = e_1`.
    pub fn constant(horizon: u64) -> Result<Self> {
        Self::coordinates("constant", Family::InnerProduct, vec![vec![(1, 1.0)]; horizon as usize])
    }

    /// `x_k = (−1)^{k+1} e_1`.
    pub fn alternating(horizon: u64) -> Result<Self> {
        let v = (1..=horizon)
            .map(|k| vec![(1, if k % 2 == 1 { 1.0 } else { -1.0 })])
            .collect();
        Self::coordinates("alternating", Family::InnerProduct, v)
    }

    /// One-dimensional sequence `x_k = a_k`.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        let v = values.iter().map(|&a| vec![(1, a)]).collect();
        let mut s = Self::coordinates("scalar", Family::InnerProduct, v)?;
        s.name = "scalar".into();
        Ok(s)
    }

    /// Tents `f_k = g_j` for `n_j ≤ k < n_{j+1}` in C[0,1].
    pub fn example_3_1(schedule: BlockSchedule, horizon: u64) -> Result<Self> {
        check_capacity(&schedule, horizon)?;
        let mut metadata = BTreeMap::new();
        metadata.insert("block_shape".into(), "tent, apex 1 at the support midpoint".into());
        metadata.insert(
            "knots".into(),
            format!("{:?}", &schedule.knots[..schedule.starts.len()]),
        );
        metadata.insert("block_starts".into(), format!("{:?}", schedule.starts));
        Ok(Self {
            name: "example_3_1".into(),
            family: Family::ContinuousFunction,
            model: Model::Tents(schedule),
            horizon,
            bound: 1.0,
            scale: 1.0,
            metadata,
        })
    }

    /// `f_k = e_j` for `n_j ≤ k < n_{j+1}`.
    pub fn example_3_2(schedule: &BlockSchedule, horizon: u64) -> Result<Self> {
        check_capacity(schedule, horizon)?;
        let v = (1..=horizon).map(|k| vec![(schedule.block_of(k), 1.0)]).collect();
        let mut s = Self::coordinates("example_3_2", Family::InnerProduct, v)?;
        s.metadata
            .insert("block_vectors".into(), "abstract orthonormal e_j".into());
        s.metadata
            .insert("block_starts".into(), format!("{:?}", schedule.starts));
        Ok(s)
    }

    /// Monomials with the four-case exponent rule.
    pub fn example_3_3(horizon: u64) -> Result<Self> {
        if horizon < 4 {
            return Err(Error::invalid("example_3_3 needs horizon >= 4"));
        }
        let mut s = Self::monomials(MonomialSchedule::four_case(horizon as usize))?;
        s.name = "example_3_3".into();
        Ok(s)
    }

    pub fn monomials(schedule: MonomialSchedule) -> Result<Self> {
        if schedule.exponents.is_empty() {
            return Err(Error::invalid("empty exponent schedule"));
        }
        let a1 = schedule.floats[0];
        let mut metadata = BTreeMap::new();
        metadata.insert("gram".into(), "1/(a_j + a_k + 1), exact rationals".into());
        Ok(Self {
            name: "monomials".into(),
            family: Family::InnerProduct,
            horizon: schedule.exponents.len() as u64,
            model: Model::Monomial(schedule),
            bound: 1.0 / (2.0 * a1 + 1.0).sqrt(),
            scale: 1.0,
            metadata,
        })
    }

    /// `x_{3k+1} = 2u_k`, then `−v_k, w_k` for even `k` and `w_k, −v_k` for
    /// odd `k`, with `u_k = e_{3k}`, `v_k = cos θ e_{3k} + sin θ e_{3k+1}`,
    /// `w_k = e_{3k+2}`, `θ = 1/(k+4)`.
    pub fn example_6_2(horizon: u64) -> Result<Self> {
        if horizon < 6 {
            return Err(Error::invalid("example_6_2 needs horizon >= 6"));
        }
        let v = (1..=horizon).map(example_6_2_vector).collect();
        let mut s = Self::coordinates("example_6_2", Family::InnerProduct, v)?;
        s.metadata.insert("theta_k".into(), "1/(k+4)".into());
        s.metadata.insert(
            "vectors".into(),
            "u_k = e_3k, v_k = cos(theta) e_3k + sin(theta) e_3k+1, w_k = e_3k+2".into(),
        );
        Ok(s)
    }

    /// `x_k = U^k x` for `k = 1..=horizon`.
    pub fn operator_orbit(matrix: &[Vec<f64>], x: &[f64], horizon: u64) -> Result<Self> {
        let d = x.len();
        if matrix.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.len(),
            });
        }
        if let Some(row) = matrix.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut out = Vec::with_capacity(horizon as usize);
        for _ in 0..horizon {
            cur = matrix
                .iter()
                .map(|r| r.iter().zip(&cur).map(|(a, b)| a * b).sum())
                .collect();
            out.push(dense_to_sparse(cur.clone()));
        }
        Self::coordinates("operator_orbit", Family::OperatorOrbit, out)
    }

    /// Explicit Gram section, checked symmetric and positive semidefinite.
    pub fn gram_explicit(gram: &[Vec<f64>]) -> Result<Self> {
        let n = gram.len();
        if n == 0 {
            return Err(Error::invalid("empty Gram section"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in gram {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        for j in 0..n {
            for k in 0..j {
                if entries[j * n + k] != entries[k * n + j] {
                    return Err(Error::invalid(format!("Gram not symmetric at ({}, {})", j + 1, k + 1)));
                }
            }
        }
        let m = nalgebra::DMatrix::from_row_slice(n, n, &entries);
        let min_eig = m.symmetric_eigenvalues().min();
        if min_eig < -1e-9 {
            return Err(Error::invalid(format!(
                "Gram not positive semidefinite (eigenvalue {min_eig})"
            )));
        }
        let bound = (0..n).map(|i| entries[i * n + i].max(0.0).sqrt()).fold(0.0, f64::max);
        Ok(Self {
            name: "gram_explicit".into(),
            family: Family::InnerProduct,
            model: Model::Gram { n, entries },
            horizon: n as u64,
            bound,
            scale: 1.0,
            metadata: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Uniform bound `M` with `∥x_k∥ ≤ M` for `k ≤ horizon`.
    pub fn bound(&self) -> f64 {
        self.bound * self.scale
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn is_inner_product(&self) -> bool {
        !matches!(self.model, Model::Tents(_))
    }

    pub fn block_schedule(&self) -> Option<&BlockSchedule> {
        match &self.model {
            Model::Tents(s) => Some(s),
            _ => None,
        }
    }

    pub fn monomial_schedule(&self) -> Option<&MonomialSchedule> {
        match &self.model {
            Model::Monomial(s) => Some(s),
            _ => None,
        }
    }

    /// Copy rescaled so that the bound is 1 (unchanged when the bound is 0).
    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        let b = self.bound();
        if b > 0.0 {
            s.scale = self.scale / b;
        }
        s
    }

    /// Copy scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.scale *= factor;
        s
    }

    /// Same model restricted to `[1, horizon]`.
    pub fn truncated(&self, horizon: u64) -> Result<Self> {
        if horizon == 0 || horizon > self.horizon {
            return Err(Error::OutOfRange {
                index: horizon,
                horizon: self.horizon,
            });
        }
        let mut s = self.clone();
        s.horizon = horizon;
        Ok(s)
    }

    pub fn check_index(&self, k: u64) -> Result<()> {
        if k == 0 || k > self.horizon {
            Err(Error::OutOfRange {
                index: k,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    fn unsupported(&self, what: &'static str) -> Error {
        let model = match self.model {
            Model::Coordinates(_) => MODEL_COORDS,
            Model::Tents(_) => MODEL_TENTS,
            _ => MODEL_GRAM,
        };
        Error::UnsupportedModel { model, what }
    }

    /// Coordinates of `x_k` (unscaled) for coordinate models.
    pub fn coords(&self, k: u64) -> Option<&SparseVec> {
        match &self.model {
            Model::Coordinates(v) => v.get(k as usize - 1),
            _ => None,
        }
    }

    fn raw_gram(&self, j: u64, k: u64) -> f64 {
        match &self.model {
            Model::Coordinates(v) => sparse_dot(&v[j as usize - 1], &v[k as usize - 1]),
            Model::Monomial(m) => m.gram(j, k),
            Model::Gram { n, entries } => entries[(j as usize - 1) * n + k as usize - 1],
            Model::Tents(_) => unreachable!("tents have no Gram"),
        }
    }

    /// `⟨x_j, x_k⟩`.
    pub fn gram(&self, j: u64, k: u64) -> Result<f64> {
        self.check_index(j)?;
        self.check_index(k)?;
        if !self.is_inner_product() {
            return Err(self.unsupported("gram"));
        }
        Ok(self.scale * self.scale * self.raw_gram(j, k))
    }

    /// Row-major Gram section over `indices`.
    pub fn gram_section(&self, indices: &[u64]) -> Result<Vec<f64>> {
        for &k in indices {
            self.check_index(k)?;
        }
        if !self.is_inner_product() {
            return Err(self.unsupported("gram"));
        }
        let m = indices.len();
        let s2 = self.scale * self.scale;
        let mut g = vec![0.0; m * m];
        for a in 0..m {
            for b in a..m {
                let v = s2 * self.raw_gram(indices[a], indices[b]);
                g[a * m + b] = v;
                g[b * m + a] = v;
            }
        }
        Ok(g)
    }

    /// `∥x_k∥`.
    pub fn norm(&self, k: u64) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.scale
            * match &self.model {
                Model::Tents(_) => 1.0,
                _ => self.raw_gram(k, k).max(0.0).sqrt(),
            })
    }

    /// `⟨f, x_k⟩`.
    pub fn pairing(&self, f: &Functional, k: u64) -> Result<f64> {
        self.check_index(k)?;
        let raw = match (&self.model, f) {
            (Model::Coordinates(v), Functional::Coordinates { coords }) => {
                sparse_lookup_dot(&v[k as usize - 1], coords)
            }
            (Model::Tents(s), Functional::Dirac { t, sign }) => {
                if !(0.0..=1.0).contains(t) {
                    return Err(Error::invalid(format!("Dirac point {t} outside [0, 1]")));
                }
                sign * s.tent(s.block_of(k), *t)
            }
            (Model::Tents(_), _) => return Err(self.unsupported("non-Dirac functional")),
            (_, Functional::Span { terms }) => {
                let mut acc = 0.0;
                for &(i, c) in terms {
                    self.check_index(i)?;
                    acc += c * self.raw_gram(i, k);
                }
                return Ok(self.scale * self.scale * acc);
            }
            (_, Functional::Dirac { .. }) => return Err(self.unsupported("Dirac functional")),
            (_, Functional::Coordinates { .. }) => return Err(self.unsupported("coordinate functional")),
        };
        Ok(self.scale * raw)
    }

    /// Dual norm of `f`.
    pub fn functional_norm(&self, f: &Functional) -> Result<f64> {
        match f {
            Functional::Coordinates { coords } => {
                if !matches!(self.model, Model::Coordinates(_)) {
                    return Err(self.unsupported("coordinate functional"));
                }
                Ok(sparse_norm(coords))
            }
            Functional::Dirac { sign, .. } => {
                if !matches!(self.model, Model::Tents(_)) {
                    return Err(self.unsupported("Dirac functional"));
                }
                Ok(sign.abs())
            }
            Functional::Span { terms } => {
                let idx: Vec<u64> = terms.iter().map(|t| t.0).collect();
                let w: Vec<f64> = terms.iter().map(|t| t.1).collect();
                self.combo_norm(&w, &idx)
            }
        }
    }

    /// Errors unless `f` has dual norm at most `1 + 1e−12`.
    pub fn check_unit(&self, f: &Functional) -> Result<()> {
        let n = self.functional_norm(f)?;
        if n > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("functional has dual norm {n} > 1")));
        }
        Ok(())
    }

    /// `∥Σ w_i x_{indices_i}∥`.
    pub fn combo_norm(&self, weights: &[f64], indices: &[u64]) -> Result<f64> {
        Ok(self.combo_norm_sq(weights, indices)?.sqrt())
    }

    /// `∥Σ w_i x_{indices_i}∥²` (sup norm squared for tents).
    pub fn combo_norm_sq(&self, weights: &[f64], indices: &[u64]) -> Result<f64> {
        if weights.len() != indices.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                found: weights.len(),
            });
        }
        for &k in indices {
            self.check_index(k)?;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite weight"));
        }
        let s2 = self.scale * self.scale;
        let raw = match &self.model {
            Model::Coordinates(v) => {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (&w, &k) in weights.iter().zip(indices) {
                    for &(c, x) in &v[k as usize - 1] {
                        *acc.entry(c).or_insert(0.0) += w * x;
                    }
                }
                acc.values().map(|x| x * x).sum()
            }
            Model::Tents(s) => {
                let mut agg: BTreeMap<usize, f64> = BTreeMap::new();
                for (&w, &k) in weights.iter().zip(indices) {
                    *agg.entry(s.block_of(k)).or_insert(0.0) += w;
                }
                let sup = tent_sup(&agg);
                sup * sup
            }
            _ => {
                let m = indices.len();
                let mut acc = 0.0;
                for a in 0..m {
                    if weights[a] == 0.0 {
                        continue;
                    }
                    acc += weights[a] * weights[a] * self.raw_gram(indices[a], indices[a]);
                    for b in a + 1..m {
                        acc += 2.0 * weights[a] * weights[b] * self.raw_gram(indices[a], indices[b]);
                    }
                }
                acc.max(0.0)
            }
        };
        Ok(s2 * raw)
    }

    /// `∥(1/L) Σ_{k=a}^{b} x_k∥` with `L = b − a + 1`, summing before dividing.
    pub fn mean_norm(&self, a: u64, b: u64) -> Result<f64> {
        if a == 0 || a > b {
            return Err(Error::invalid(format!("bad window [{a}, {b}]")));
        }
        self.check_index(b)?;
        let len = (b - a + 1) as f64;
        let raw = match &self.model {
            Model::Tents(s) => {
                // Tents are nonnegative with disjoint interiors, so the sup of
                // the sum is the largest block count.
                let c = s.block_counts(a, b).into_iter().map(|c| c.1).max().unwrap_or(0);
                c as f64 / len
            }
            Model::Coordinates(v) => {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for k in a..=b {
                    for &(c, x) in &v[k as usize - 1] {
                        *acc.entry(c).or_insert(0.0) += x;
                    }
                }
                acc.values().map(|x| x * x).sum::<f64>().sqrt() / len
            }
            _ => {
                let idx: Vec<u64> = (a..=b).collect();
                let ones = vec![1.0; idx.len()];
                return Ok(self.combo_norm(&ones, &idx)? / len);
            }
        };
        Ok(self.scale * raw)
    }

    /// `∥Σ |w_k| |f_k|∥_∞` for tents, the dual-ball sup of `Σ |w_k| |⟨y, f_k⟩|`.
    pub fn abs_combo_sup(&self, weights: &[f64], indices: &[u64]) -> Result<f64> {
        let Model::Tents(s) = &self.model else {
            return Err(self.unsupported("absolute combination sup"));
        };
        for &k in indices {
            self.check_index(k)?;
        }
        let mut agg: BTreeMap<usize, f64> = BTreeMap::new();
        for (&w, &k) in weights.iter().zip(indices) {
            *agg.entry(s.block_of(k)).or_insert(0.0) += w.abs();
        }
        Ok(self.scale * tent_sup(&agg))
    }

    /// Exact `∥Σ w_i x_i∥²` for monomial and coordinate models; stored
    /// coordinates are taken at their exact binary values.
    pub fn exact_combo_norm_sq(&self, weights: &[BigRational], indices: &[u64]) -> Result<BigRational> {
        if weights.len() != indices.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                found: weights.len(),
            });
        }
        for &k in indices {
            self.check_index(k)?;
        }
        let mut acc = BigRational::zero();
        match &self.model {
            Model::Monomial(m) => {
                for (a, ka) in weights.iter().zip(indices) {
                    for (b, kb) in weights.iter().zip(indices) {
                        acc += a * b * m.gram_exact(*ka, *kb);
                    }
                }
            }
            Model::Coordinates(v) => {
                let mut sum: BTreeMap<usize, BigRational> = BTreeMap::new();
                for (w, &k) in weights.iter().zip(indices) {
                    for &(c, x) in &v[k as usize - 1] {
                        *sum.entry(c).or_insert_with(BigRational::zero) += w * exact_rational(x)?;
                    }
                }
                for x in sum.values() {
                    acc += x * x;
                }
            }
            _ => return Err(self.unsupported("exact rational norm")),
        }
        let s = BigRational::from_float(self.scale).ok_or_else(|| Error::invalid("bad scale"))?;
        Ok(acc * &s * &s)
    }

    /// Random unit functional with coefficients drawn from `N(0, 4^{−i})` on
    /// the first 64 coordinates (or sequence elements) in order.
    pub fn random_unit_functional<R: Rng>(&self, rng: &mut R) -> Result<Functional> {
        const TERMS: usize = 64;
        match &self.model {
            Model::Tents(_) => {
                let t: f64 = rng.random_range(0.0..1.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Ok(Functional::Dirac { t, sign })
            }
            Model::Coordinates(v) => {
                let ids: BTreeSet<usize> = v.iter().flatten().map(|c| c.0).collect();
                let coords: SparseVec = ids
                    .into_iter()
                    .take(TERMS)
                    .enumerate()
                    .map(|(i, c)| (c, rng.sample::<f64, _>(StandardNormal) * 0.5f64.powi(i as i32)))
                    .collect();
                if coords.is_empty() {
                    return Ok(Functional::Coordinates { coords: vec![(1, 1.0)] });
                }
                Functional::unit_coordinates(coords)
            }
            _ => {
                let m = (self.horizon as usize).min(TERMS);
                let terms: Vec<(u64, f64)> = (0..m)
                    .map(|i| {
                        (
                            i as u64 + 1,
                            rng.sample::<f64, _>(StandardNormal) * 0.5f64.powi(i as i32),
                        )
                    })
                    .collect();
                let n = {
                    let f = Functional::Span { terms: terms.clone() };
                    self.functional_norm(&f)?
                };
                if !(n > 0.0) {
                    return Err(Error::invalid("sequence spans the zero space"));
                }
                Ok(Functional::Span {
                    terms: terms.into_iter().map(|(i, c)| (i, c / n)).collect(),
                })
            }
        }
    }
}

fn check_capacity(s: &BlockSchedule, horizon: u64) -> Result<()> {
    if horizon == 0 || horizon > s.capacity() {
        return Err(Error::InvalidSchedule(format!(
            "horizon {horizon} exceeds the {} indices covered by complete blocks",
            s.capacity()
        )));
    }
    Ok(())
}

/// Coordinates of `x_n` in the rotation construction.
pub fn example_6_2_vector(n: u64) -> SparseVec {
    let k = (n - 1) / 3;
    let base = 3 * k as usize;
    let theta = 1.0 / (k as f64 + 4.0);
    let u = vec![(base, 2.0)];
    let minus_v = vec![(base, -theta.cos()), (base + 1, -theta.sin())];
    let w = vec![(base + 2, 1.0)];
    match ((n - 1) % 3, k.is_multiple_of(2)) {
        (0, _) => u,
        (1, true) | (2, false) => minus_v,
        _ => w,
    }
}

/// Sup norm of `Σ W_j g_j`. Tent supports meet only at knots, where every
/// tent vanishes, so the sup is attained at an apex.
fn tent_sup(agg: &BTreeMap<usize, f64>) -> f64 {
    agg.values().map(|w| w.abs()).fold(0.0, f64::max)
}

fn dense_to_sparse(v: Vec<f64>) -> SparseVec {
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (i + 1, x))
        .filter(|c| c.1 != 0.0)
        .collect()
}

fn sparse_norm(v: &[(usize, f64)]) -> f64 {
    v.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt()
}

/// Merge dot of two sorted sparse vectors.
pub(crate) fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    if a.len() * 8 < b.len() {
        return sparse_lookup_dot(a, b);
    }
    if b.len() * 8 < a.len() {
        return sparse_lookup_dot(b, a);
    }
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Dot of a short sparse vector against a long sorted one.
fn sparse_lookup_dot(short: &[(usize, f64)], long: &[(usize, f64)]) -> f64 {
    short
        .iter()
        .filter_map(|&(c, x)| long.binary_search_by_key(&c, |e| e.0).ok().map(|i| x * long[i].1))
        .sum()
}

/// `∫₀¹ t^a t^b dt` by composite 5-point Gauss–Legendre on `panels` equal
/// panels; an independent check on the closed form `1/(a + b + 1)`.
pub fn monomial_inner_quadrature(a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let h = 1.0 / panels as f64;
    let s = a + b;
    let mut acc = 0.0;
    for i in 0..panels {
        let mid = (i as f64 + 0.5) * h;
        for (x, w) in NODES {
            acc += w * (mid + 0.5 * h * x).powf(s);
        }
    }
    acc * 0.5 * h
}

/// Builds a rational from an `f64` exactly.
pub fn exact_rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::invalid(format!("non-finite value {x}")))
}

/// `f64` value of a rational.
pub fn rational_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Sequence generators accepted in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", deny_unknown_fields)]
pub enum SequenceSpec {
    #[serde(rename = "example_3_1")]
    Example31 {
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default)]
        block_starts: Option<Vec<u64>>,
        #[serde(default)]
        knots: Option<Vec<f64>>,
    },
    #[serde(rename = "example_3_2")]
    Example32 {
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default)]
        block_starts: Option<Vec<u64>>,
    },
    #[serde(rename = "example_3_3")]
    Example33 {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "example_6_2")]
    Example62 {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "operator_orbit")]
    OperatorOrbit {
        matrix: Vec<Vec<f64>>,
        vector: Vec<f64>,
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "gram_explicit")]
    GramExplicit { gram: Vec<Vec<f64>> },
    #[serde(rename = "orthonormal")]
    Orthonormal {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "zero")]
    Zero {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "constant")]
    Constant {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "alternating")]
    Alternating {
        #[serde(default)]
        horizon: Option<u64>,
    },
    #[serde(rename = "coordinates")]
    Coordinates { vectors: Vec<Vec<f64>> },
}

pub const DEFAULT_HORIZON: u64 = 1024;

impl SequenceSpec {
    /// Builds the sequence; `horizon` overrides the horizon given in the spec value.
    pub fn build(&self, horizon: Option<u64>) -> Result<VectorSequence> {
        let pick = |own: &Option<u64>, default: u64| horizon.or(*own).unwrap_or(default);
        match self {
            SequenceSpec::Example31 {
                horizon: h,
                block_starts,
                knots,
            } => {
                let n = pick(h, DEFAULT_HORIZON);
                let schedule = match (block_starts, knots) {
                    (None, None) => BlockSchedule::default_for(n),
                    (Some(s), None) => BlockSchedule::from_starts(s.clone())?,
                    (Some(s), Some(t)) => BlockSchedule::new(s.clone(), t.clone())?,
                    (None, Some(_)) => {
                        return Err(Error::Config {
                            path: "sequence.knots".into(),
                            message: "knots need block_starts".into(),
                        })
                    }
                };
                VectorSequence::example_3_1(schedule, n)
            }
            SequenceSpec::Example32 {
                horizon: h,
                block_starts,
            } => {
                let n = pick(h, DEFAULT_HORIZON);
                let schedule = match block_starts {
                    None => BlockSchedule::default_for(n),
                    Some(s) => BlockSchedule::from_starts(s.clone())?,
                };
                VectorSequence::example_3_2(&schedule, n)
            }
            SequenceSpec::Example33 { horizon: h } => VectorSequence::example_3_3(pick(h, 128)),
            SequenceSpec::Example62 { horizon: h } => VectorSequence::example_6_2(pick(h, 126)),
            SequenceSpec::OperatorOrbit {
                matrix,
                vector,
                horizon: h,
            } => VectorSequence::operator_orbit(matrix, vector, pick(h, 256)),
            SequenceSpec::GramExplicit { gram } => {
                let s = VectorSequence::gram_explicit(gram)?;
                match horizon {
                    Some(n) => s.truncated(n),
                    None => Ok(s),
                }
            }
            SequenceSpec::Orthonormal { horizon: h } => VectorSequence::orthonormal(pick(h, DEFAULT_HORIZON)),
            SequenceSpec::Zero { horizon: h } => VectorSequence::zero(pick(h, DEFAULT_HORIZON)),
            SequenceSpec::Constant { horizon: h } => VectorSequence::constant(pick(h, DEFAULT_HORIZON)),
            SequenceSpec::Alternating { horizon: h } => VectorSequence::alternating(pick(h, DEFAULT_HORIZON)),
            SequenceSpec::Coordinates { vectors } => {
                let s = VectorSequence::from_vectors(vectors.clone())?;
                match horizon {
                    Some(n) => s.truncated(n),
                    None => Ok(s),
                }
            }
        }
    }
}
