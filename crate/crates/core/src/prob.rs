//! Probability matrices (implicit Kronecker products and dense arrays) and
//! their Bernoulli realizations.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{InitiatorMatrix, KronSequence};
use crate::rng::StreamSeed;

/// Which cells of a probability matrix are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellMode {
    /// Unordered pairs `u < v` only; the result is mirrored and the diagonal
    /// is never sampled.
    #[default]
    Undirected,
    /// Every ordered cell `(u, v)` including the diagonal, each independent.
    /// This is the cell model the closed-form edge-count variances describe.
    Directed,
}

/// Entry `(u, v)` of `Θ_{s_1} ⊗ … ⊗ Θ_{s_n}` without materializing it.
///
/// `u` and `v` are decomposed into mixed-radix digits with radices
/// `b_{s_1}, …, b_{s_n}`, the first being most significant.
pub fn kron_entry(
    seq: &KronSequence,
    matrices: &[InitiatorMatrix],
    u: usize,
    v: usize,
) -> Result<f64> {
    let order = seq.node_count(matrices)?;
    if u >= order || v >= order {
        return Err(Error::Bounds { u, v, order });
    }
    Ok(entry_unchecked(seq.indices(), matrices, u, v))
}

fn entry_unchecked(indices: &[usize], matrices: &[InitiatorMatrix], mut u: usize, mut v: usize) -> f64 {
    let mut p = 1.0;
    for &i in indices.iter().rev() {
        let m = &matrices[i];
        let b = m.order();
        p *= m.get(u % b, v % b);
        u /= b;
        v /= b;
    }
    p
}

/// Row `u` of the implicit product, written into `out` (resized to the order).
fn implicit_row(indices: &[usize], matrices: &[InitiatorMatrix], radices: &[usize], u: usize, out: &mut Vec<f64>) {
    let mut digits = vec![0usize; radices.len()];
    let mut rest = u;
    for (d, &b) in digits.iter_mut().zip(radices).rev() {
        *d = rest % b;
        rest /= b;
    }
    out.clear();
    out.push(1.0);
    let mut next = Vec::with_capacity(out.capacity());
    for (&i, &d) in indices.iter().zip(&digits) {
        let row = matrices[i].row(d);
        next.clear();
        for &x in out.iter() {
            next.extend(row.iter().map(|&y| x * y));
        }
        std::mem::swap(out, &mut next);
    }
}

/// An explicitly stored square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    order: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(order: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::param(format!(
                "dense matrix of order {order} needs {} entries, got {}",
                order * order,
                data.len()
            )));
        }
        Ok(DenseMatrix { order, data })
    }

    /// The 1×1 matrix `[[1]]`, the identity of the Kronecker product.
    pub fn unit() -> Self {
        DenseMatrix { order: 1, data: vec![1.0] }
    }

    pub fn zeros(order: usize) -> Self {
        DenseMatrix { order, data: vec![0.0; order * order] }
    }

    pub fn from_initiator(theta: &InitiatorMatrix) -> Self {
        DenseMatrix {
            order: theta.order(),
            data: theta.entries().to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.order + j] = x;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.order).all(|i| ((i + 1)..self.order).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Materialize `Θ_{s_1} ⊗ … ⊗ Θ_{s_n}`.
    pub fn from_sequence(seq: &KronSequence, matrices: &[InitiatorMatrix]) -> Result<Self> {
        seq.radices(matrices)?;
        Ok(seq
            .indices()
            .iter()
            .fold(DenseMatrix::unit(), |acc, &i| kronecker_product(&acc, &matrices[i])))
    }
}

/// `A ⊗ B`: `out[i·b + p, j·b + q] = A[i, j] · B[p, q]`.
pub fn kronecker_product(a: &DenseMatrix, b: &InitiatorMatrix) -> DenseMatrix {
    let (na, nb) = (a.order(), b.order());
    let order = na * nb;
    let mut data = vec![0.0; order * order];
    for i in 0..na {
        for p in 0..nb {
            let out_row = &mut data[(i * nb + p) * order..(i * nb + p + 1) * order];
            for j in 0..na {
                let x = a.get(i, j);
                for q in 0..nb {
                    out_row[j * nb + q] = x * b.get(p, q);
                }
            }
        }
    }
    DenseMatrix { order, data }
}

/// The Kronecker product of a chosen sequence of initiators, evaluated on
/// demand.
#[derive(Debug, Clone)]
pub struct ImplicitMatrix {
    seq: KronSequence,
    matrices: Vec<InitiatorMatrix>,
    radices: Vec<usize>,
    order: usize,
}

impl ImplicitMatrix {
    pub fn new(seq: KronSequence, matrices: &[InitiatorMatrix]) -> Result<Self> {
        let radices = seq.radices(matrices)?;
        let order = seq.node_count(matrices)?;
        Ok(ImplicitMatrix {
            seq,
            matrices: matrices.to_vec(),
            radices,
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sequence(&self) -> &KronSequence {
        &self.seq
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        entry_unchecked(self.seq.indices(), &self.matrices, u, v)
    }

    pub fn row_into(&self, u: usize, out: &mut Vec<f64>) {
        implicit_row(self.seq.indices(), &self.matrices, &self.radices, u, out);
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.order * self.order);
        let mut row = Vec::with_capacity(self.order);
        for u in 0..self.order {
            self.row_into(u, &mut row);
            data.extend_from_slice(&row);
        }
        DenseMatrix { order: self.order, data }
    }
}

/// Edge probabilities, either implicit or materialized.
#[derive(Debug, Clone)]
pub enum ProbabilityMatrix {
    Implicit(ImplicitMatrix),
    Dense(DenseMatrix),
}

impl ProbabilityMatrix {
    pub fn order(&self) -> usize {
        match self {
            ProbabilityMatrix::Implicit(m) => m.order(),
            ProbabilityMatrix::Dense(m) => m.order(),
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        match self {
            ProbabilityMatrix::Implicit(m) => m.get(u, v),
            ProbabilityMatrix::Dense(m) => m.get(u, v),
        }
    }

    fn row_into(&self, u: usize, out: &mut Vec<f64>) {
        match self {
            ProbabilityMatrix::Implicit(m) => m.row_into(u, out),
            ProbabilityMatrix::Dense(m) => {
                out.clear();
                out.extend_from_slice(m.row(u));
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            ProbabilityMatrix::Implicit(m) => m.to_dense(),
            ProbabilityMatrix::Dense(m) => m.clone(),
        }
    }
}

impl From<DenseMatrix> for ProbabilityMatrix {
    fn from(m: DenseMatrix) -> Self {
        ProbabilityMatrix::Dense(m)
    }
}

impl From<ImplicitMatrix> for ProbabilityMatrix {
    fn from(m: ImplicitMatrix) -> Self {
        ProbabilityMatrix::Implicit(m)
    }
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

/// Bernoulli draws over the cells selected by `mode`, returned as sorted
/// `(row, column)` pairs. Row `u` always consumes the stream `seed.derive(u)`,
/// so the result does not depend on the thread partition.
pub fn realize_cells(p: &ProbabilityMatrix, seed: StreamSeed, mode: CellMode) -> Vec<(u32, u32)> {
    let diagonal = usize::from(mode == CellMode::Undirected);
    realize_rows(p, seed, |u| if mode == CellMode::Directed { 0 } else { u + diagonal })
}

/// Cells `u <= v`: the upper triangle of a symmetric realization, diagonal
/// included.
pub(crate) fn realize_upper_with_diagonal(p: &ProbabilityMatrix, seed: StreamSeed) -> Vec<(u32, u32)> {
    realize_rows(p, seed, |u| u)
}

fn realize_rows(p: &ProbabilityMatrix, seed: StreamSeed, first_column: impl Fn(usize) -> usize + Sync) -> Vec<(u32, u32)> {
    let order = p.order();
    (0..order)
        .into_par_iter()
        .with_min_len(32)
        .map_init(Vec::new, |row, u| {
            p.row_into(u, row);
            let mut rng = seed.derive(u as u64).rng();
            let mut cells = Vec::new();
            for (v, &prob) in row.iter().enumerate().skip(first_column(u)) {
                if bernoulli(&mut rng, prob) {
                    cells.push((u as u32, v as u32));
                }
            }
            cells
        })
        .flatten_iter()
        .collect()
}

/// Sample an undirected simple graph: each pair `u < v` independently with
/// probability `P[u, v]`. The diagonal is never sampled.
pub fn realize(p: &ProbabilityMatrix, seed: StreamSeed) -> Graph {
    let cells = realize_cells(p, seed, CellMode::Undirected);
    Graph::from_sorted_upper(p.order(), cells)
}

/// Realization returned as a 0/1 matrix so it can re-enter a Kronecker
/// product. Undirected mode samples the upper triangle with its diagonal and
/// mirrors it.
pub fn realize_dense(p: &ProbabilityMatrix, seed: StreamSeed, mode: CellMode) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(p.order());
    let cells = match mode {
        CellMode::Undirected => realize_upper_with_diagonal(p, seed),
        CellMode::Directed => realize_cells(p, seed, mode),
    };
    for (u, v) in cells {
        out.set(u as usize, v as usize, 1.0);
        if mode == CellMode::Undirected {
            out.set(v as usize, u as usize, 1.0);
        }
    }
    out
}
