//! Model parameters: initiator matrices, mixtures and Kronecker sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PI_SUM_TOL: f64 = 1e-12;

/// A small square seed matrix with entries in `[0, 1]`, stored row-major.
///
/// Graphs are undirected, so the matrix must be symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInitiator", into = "RawInitiator")]
pub struct InitiatorMatrix {
    order: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawInitiator {
    order: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawInitiator> for InitiatorMatrix {
    type Error = Error;

    fn try_from(raw: RawInitiator) -> Result<Self> {
        InitiatorMatrix::new(raw.order, raw.entries)
    }
}

impl From<InitiatorMatrix> for RawInitiator {
    fn from(m: InitiatorMatrix) -> Self {
        RawInitiator {
            order: m.order,
            entries: m.entries,
        }
    }
}

impl InitiatorMatrix {
    pub fn new(order: usize, entries: Vec<f64>) -> Result<Self> {
        if order < 2 {
            return Err(Error::param(format!("initiator order must be >= 2, got {order}")));
        }
        if entries.len() != order * order {
            return Err(Error::param(format!(
                "initiator of order {order} needs {} entries, got {}",
                order * order,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::param(format!("initiator entry {bad} outside [0, 1]")));
        }
        for i in 0..order {
            for j in (i + 1)..order {
                let (x, y) = (entries[i * order + j], entries[j * order + i]);
                if (x - y).abs() > SYMMETRY_TOL {
                    return Err(Error::param(format!(
                        "initiator is not symmetric at ({i}, {j}): {x} vs {y}"
                    )));
                }
            }
        }
        Ok(InitiatorMatrix { order, entries })
    }

    /// The 2×2 matrix `[[a, b], [b, c]]`.
    pub fn two_by_two(a: f64, b: f64, c: f64) -> Result<Self> {
        InitiatorMatrix::new(2, vec![a, b, b, c])
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let order = rows.len();
        if rows.iter().any(|r| r.len() != order) {
            return Err(Error::param("initiator rows must form a square matrix"));
        }
        InitiatorMatrix::new(order, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    /// Named entries `(a, b, c)` of a 2×2 initiator.
    pub fn abc(&self) -> Option<(f64, f64, f64)> {
        (self.order == 2).then(|| (self.entries[0], self.entries[1], self.entries[3]))
    }
}

/// Which member of the Kronecker family a mixture reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// One initiator, no tying.
    Kpgm,
    /// One initiator, realization after every iteration.
    Tkpgm,
    /// One initiator, `1 < l < n`.
    Mkpgm,
    /// Several initiators, `l = 1`.
    MixtureTied,
    /// Several initiators, `l = n`.
    MixtureUntied,
    /// Several initiators, `1 < l < n`.
    MixturePartial,
}

/// `k` initiators, a mixing vector, iteration count `n` and tying level `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    matrices: Vec<InitiatorMatrix>,
    pi: Vec<f64>,
    n: u32,
    l: u32,
}

impl MixtureModel {
    pub fn new(matrices: Vec<InitiatorMatrix>, pi: Vec<f64>, n: u32, l: u32) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::param("a mixture needs at least one initiator"));
        }
        if pi.len() != matrices.len() {
            return Err(Error::param(format!(
                "mixing vector has {} entries for {} initiators",
                pi.len(),
                matrices.len()
            )));
        }
        if pi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("mixing weights must be finite and non-negative"));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > PI_SUM_TOL {
            return Err(Error::param(format!("mixing weights sum to {total}, not 1")));
        }
        if n == 0 {
            return Err(Error::param("iteration count n must be >= 1"));
        }
        if l == 0 || l > n {
            return Err(Error::param(format!("tying level l = {l} must lie in 1..={n}")));
        }
        Ok(MixtureModel { matrices, pi, n, l })
    }

    /// Plain KPGM: one initiator, untied.
    pub fn kpgm(theta: InitiatorMatrix, n: u32) -> Result<Self> {
        MixtureModel::new(vec![theta], vec![1.0], n, n)
    }

    pub fn matrices(&self) -> &[InitiatorMatrix] {
        &self.matrices
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn with_tying(&self, l: u32) -> Result<Self> {
        MixtureModel::new(self.matrices.clone(), self.pi.clone(), self.n, l)
    }

    pub fn variant(&self) -> Variant {
        let (n, l) = (self.n, self.l);
        match (self.k() == 1, l) {
            (true, l) if l == n => Variant::Kpgm,
            (true, 1) => Variant::Tkpgm,
            (true, _) => Variant::Mkpgm,
            (false, l) if l == n => Variant::MixtureUntied,
            (false, 1) => Variant::MixtureTied,
            (false, _) => Variant::MixturePartial,
        }
    }

    /// `n` independent categorical draws with probabilities `pi`.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, rng: &mut R) -> KronSequence {
        let indices = (0..self.n).map(|_| self.draw_index(rng)).collect();
        KronSequence { indices }
    }

    pub(crate) fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.k() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        self.pi.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// Ordered initiator indices (0-based) chosen at each iteration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct KronSequence {
    indices: Vec<usize>,
}

impl KronSequence {
    pub fn new(indices: Vec<usize>) -> Self {
        KronSequence { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Sorted ascending. Any ordering of the same multiset gives the same
    /// graph distribution up to node relabeling when no tying is applied.
    pub fn canonicalize(&self) -> KronSequence {
        let mut indices = self.indices.clone();
        indices.sort_unstable();
        KronSequence { indices }
    }

    /// Usage count of each of the `k` initiators.
    pub fn counts(&self, k: usize) -> Vec<u32> {
        let mut counts = vec![0u32; k];
        for &i in &self.indices {
            counts[i] += 1;
        }
        counts
    }

    /// Product of the orders of the chosen initiators.
    pub fn node_count(&self, matrices: &[InitiatorMatrix]) -> Result<usize> {
        self.radices(matrices)?
            .iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b).ok_or(Error::Overflow))
    }

    pub(crate) fn radices(&self, matrices: &[InitiatorMatrix]) -> Result<Vec<usize>> {
        self.indices
            .iter()
            .map(|&i| {
                matrices.get(i).map(InitiatorMatrix::order).ok_or_else(|| {
                    Error::param(format!("sequence index {i} with only {} initiators", matrices.len()))
                })
            })
            .collect()
    }
}
