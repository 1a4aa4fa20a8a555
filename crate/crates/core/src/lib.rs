//! Mixture Kronecker product graph models: sampling, closed-form moments,
//! method-of-moments estimation and graph statistics.

pub mod error;
pub mod estimation;
pub mod graph;
pub mod io;
pub mod model;
pub mod moments;
pub mod optim;
pub mod population;
pub mod prob;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use estimation::{fit, FitConfig, FitResult};
pub use graph::{Adjacency, Graph};
pub use io::{load_graph, LoadedGraph, ModelParamsFile};
pub use model::{InitiatorMatrix, KronSequence, MixtureModel, Variant};
pub use moments::{ExponentVector, MomentVector, MomentWeights, ThetaSums};
pub use prob::{CellMode, DenseMatrix, ImplicitMatrix, ProbabilityMatrix};
pub use rng::StreamSeed;
pub use sampler::{sample, sample_graph, Realization, SampleOptions};
pub use stats::{GraphStatistics, StatsConfig};
