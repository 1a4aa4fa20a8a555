//! Graph generation for the whole Kronecker family.
//!
//! The untied prefix of the drawn sequence is kept implicit and realized
//! pair by pair. Each tied iteration multiplies a 0/1 realization by an
//! initiator, so its nonzero cells are exactly the blocks under the realized
//! cells; those blocks are expanded directly instead of materializing the
//! product.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{InitiatorMatrix, KronSequence, MixtureModel};
use crate::prob::{
    bernoulli, kronecker_product, realize_cells, realize_dense, realize_upper_with_diagonal, CellMode, DenseMatrix,
    ImplicitMatrix,
};
use crate::rng::StreamSeed;

pub const DEFAULT_MAX_ORDER: usize = 1 << 15;

const SEQUENCE_STREAM: u64 = 0x5345_5155;
const REALIZE_STREAM: u64 = 0x5245_414c;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub cells: CellMode,
    /// Largest node count a sample may have.
    pub max_order: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            cells: CellMode::Undirected,
            max_order: DEFAULT_MAX_ORDER,
        }
    }
}

impl SampleOptions {
    pub fn directed() -> Self {
        SampleOptions {
            cells: CellMode::Directed,
            ..Default::default()
        }
    }
}

/// Output of one run of the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub sequence: KronSequence,
    pub node_count: usize,
    pub mode: CellMode,
    /// Sorted sampled cells; `u < v` in undirected mode.
    pub cells: Vec<(u32, u32)>,
}

impl Realization {
    /// Number of sampled cells. In undirected mode this is the edge count.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn to_graph(&self) -> Graph {
        match self.mode {
            CellMode::Undirected => Graph::from_sorted_upper(self.node_count, self.cells.clone()),
            CellMode::Directed => Graph::new(self.node_count, self.cells.iter().copied())
                .expect("sampled cells lie inside the matrix"),
        }
    }
}

fn checked_order(seq: &KronSequence, matrices: &[InitiatorMatrix], cap: usize) -> Result<usize> {
    let radices = seq.radices(matrices)?;
    let required = radices.iter().fold(1u128, |acc, &b| acc.saturating_mul(b as u128));
    if required > cap as u128 {
        return Err(Error::Resource { required, cap });
    }
    Ok(required as usize)
}

/// Draw the initiator sequence for `seed`, as used by [`sample`].
pub fn sample_sequence(model: &MixtureModel, seed: StreamSeed) -> KronSequence {
    model.sample_sequence(&mut seed.derive(SEQUENCE_STREAM).rng())
}

/// Run the generator once.
pub fn sample(model: &MixtureModel, seed: StreamSeed, opts: SampleOptions) -> Result<Realization> {
    let sequence = sample_sequence(model, seed);
    sample_with_sequence(model, sequence, seed, opts)
}

/// Run the generator with a given initiator sequence.
pub fn sample_with_sequence(
    model: &MixtureModel,
    sequence: KronSequence,
    seed: StreamSeed,
    opts: SampleOptions,
) -> Result<Realization> {
    let matrices = model.matrices();
    let node_count = checked_order(&sequence, matrices, opts.max_order)?;
    let l = model.l() as usize;
    let (untied, tied) = sequence.indices().split_at(l.min(sequence.len()));
    let stage = |t: usize| seed.derive2(REALIZE_STREAM, t as u64);

    let prefix = ImplicitMatrix::new(KronSequence::new(untied.to_vec()), matrices)?.into();
    if tied.is_empty() {
        let cells = realize_cells(&prefix, stage(0), opts.cells);
        return Ok(Realization {
            sequence,
            node_count,
            mode: opts.cells,
            cells,
        });
    }
    // intermediate undirected stages keep their diagonal: a realized (u, u)
    // spawns the pairs inside block u at the next stage
    let symmetric = opts.cells == CellMode::Undirected;
    let mut cells = if symmetric {
        realize_upper_with_diagonal(&prefix, stage(0))
    } else {
        realize_cells(&prefix, stage(0), opts.cells)
    };
    for (t, &i) in tied.iter().enumerate() {
        cells = expand_cells(&cells, &matrices[i], stage(t + 1), symmetric);
    }
    if symmetric {
        cells.retain(|&(u, v)| u != v);
    }
    Ok(Realization {
        sequence,
        node_count,
        mode: opts.cells,
        cells,
    })
}

/// Realize `R ⊗ Θ` where `R` is the 0/1 matrix with ones at `cells`. Each
/// parent cell owns the stream `seed.derive2(u, v)`. With `symmetric`, cells
/// hold the upper triangle of `R` and only the upper triangle of diagonal
/// blocks is drawn.
fn expand_cells(cells: &[(u32, u32)], theta: &InitiatorMatrix, seed: StreamSeed, symmetric: bool) -> Vec<(u32, u32)> {
    let b = theta.order() as u32;
    let mut out: Vec<(u32, u32)> = cells
        .par_iter()
        .with_min_len(256)
        .flat_map_iter(|&(u, v)| {
            let mut rng = seed.derive2(u64::from(u), u64::from(v)).rng();
            let mut block = Vec::new();
            let on_diagonal = symmetric && u == v;
            for p in 0..b {
                for q in (if on_diagonal { p } else { 0 })..b {
                    if bernoulli(&mut rng, theta.get(p as usize, q as usize)) {
                        block.push((u * b + p, v * b + q));
                    }
                }
            }
            block
        })
        .collect();
    out.par_sort_unstable();
    out
}

/// Sample an undirected simple graph with default options.
pub fn sample_graph(model: &MixtureModel, seed: StreamSeed) -> Result<Graph> {
    Ok(sample(model, seed, SampleOptions::default())?.to_graph())
}

/// Reference generator that materializes every intermediate matrix densely.
///
/// Slower than [`sample`] and uses different per-cell streams, but draws from
/// the same distribution; the sequence stream is shared, so both see the same
/// initiator sequence for a given seed.
pub fn sample_dense(model: &MixtureModel, seed: StreamSeed, opts: SampleOptions) -> Result<Realization> {
    let sequence = sample_sequence(model, seed);
    let matrices = model.matrices();
    let node_count = checked_order(&sequence, matrices, opts.max_order)?;
    let l = model.l() as usize;
    let stage = |t: usize| seed.derive2(REALIZE_STREAM ^ 0xd, t as u64);

    let mut p = DenseMatrix::unit();
    for &i in &sequence.indices()[..l] {
        p = kronecker_product(&p, &matrices[i]);
    }
    for (t, &i) in sequence.indices()[l..].iter().enumerate() {
        let a = realize_dense(&p.into(), stage(t), opts.cells);
        p = kronecker_product(&a, &matrices[i]);
    }
    let cells = realize_cells(&p.into(), stage(sequence.len() - l), opts.cells);
    Ok(Realization {
        sequence,
        node_count,
        mode: opts.cells,
        cells,
    })
}
