//! Populations of graphs: forest-fire subsamples of one graph or repeated
//! draws from a model, with per-sample statistics and distribution summaries.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::MixtureModel;
use crate::moments::{expected_edges_directed, variance_edges, variance_edges_conditional, ExponentVector};
use crate::model::Variant;
use crate::prob::bernoulli;
use crate::rng::StreamSeed;
use crate::sampler::{sample, SampleOptions};
use crate::stats::{GraphStatistics, StatsConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FireConfig {
    pub target_nodes: usize,
    /// Probability of following each edge to an unburned neighbor.
    pub burn_probability: f64,
    /// Fresh ignitions allowed after the fire dies out; remaining nodes are
    /// then drawn uniformly.
    pub max_restarts: usize,
}

impl FireConfig {
    pub const DEFAULT_BURN_PROBABILITY: f64 = 0.7;

    pub fn new(target_nodes: usize) -> Self {
        FireConfig {
            target_nodes,
            burn_probability: Self::DEFAULT_BURN_PROBABILITY,
            max_restarts: 100,
        }
    }

    fn validate(&self, g: &Graph) -> Result<()> {
        if !(self.burn_probability > 0.0 && self.burn_probability <= 1.0) {
            return Err(Error::param(format!(
                "burn probability {} outside (0, 1]",
                self.burn_probability
            )));
        }
        if self.target_nodes > g.node_count() {
            return Err(Error::param(format!(
                "target of {} nodes exceeds the graph's {} nodes",
                self.target_nodes,
                g.node_count()
            )));
        }
        Ok(())
    }
}

fn random_unburned<R: Rng>(burned: &[bool], remaining: usize, rng: &mut R) -> usize {
    let pick = rng.random_range(0..remaining);
    burned
        .iter()
        .enumerate()
        .filter(|(_, &b)| !b)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("remaining counts unburned nodes")
}

/// Forest-fire subsample: the subgraph induced on exactly
/// `config.target_nodes` burned nodes.
///
/// The fire spreads breadth-first; each edge to an unburned neighbor is
/// followed independently with the burn probability, neighbors visited in
/// ascending id order. Burning stops as soon as the target is reached.
pub fn forest_fire_sample(g: &Graph, config: &FireConfig, seed: StreamSeed) -> Result<Graph> {
    Ok(g.induced_subgraph(&forest_fire_nodes(g, config, seed)?))
}

/// Burned node ids of [`forest_fire_sample`], in burning order.
pub fn forest_fire_nodes(g: &Graph, config: &FireConfig, seed: StreamSeed) -> Result<Vec<u32>> {
    config.validate(g)?;
    let target = config.target_nodes;
    let n = g.node_count();
    let adj = g.adjacency();
    let mut rng = seed.rng();
    let mut burned = vec![false; n];
    let mut order: Vec<u32> = Vec::with_capacity(target);
    let mut queue = VecDeque::new();
    let mut ignitions = 0usize;

    let ignite = |node: usize, burned: &mut [bool], order: &mut Vec<u32>| {
        burned[node] = true;
        order.push(node as u32);
    };

    while order.len() < target {
        if queue.is_empty() {
            let remaining = n - order.len();
            let start = random_unburned(&burned, remaining, &mut rng);
            ignite(start, &mut burned, &mut order);
            if ignitions > config.max_restarts {
                // fill uniformly without spreading
                continue;
            }
            ignitions += 1;
            queue.push_back(start);
            continue;
        }
        let x = queue.pop_front().unwrap();
        for &y in adj.neighbors(x) {
            if order.len() >= target {
                break;
            }
            let y = y as usize;
            if !burned[y] && bernoulli(&mut rng, config.burn_probability) {
                ignite(y, &mut burned, &mut order);
                queue.push_back(y);
            }
        }
    }
    Ok(order)
}

/// Bin edges and counts of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const MIN_BINS: usize = 8;
const MAX_SHARED_BINS: usize = 1000;

fn finite_sorted(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    sorted
}

/// Freedman–Diaconis bin count of sorted finite data, at least [`MIN_BINS`].
fn fd_bins(sorted: &[f64]) -> usize {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return MIN_BINS;
    }
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    let fd = if width > 0.0 { ((hi - lo) / width).ceil() as usize } else { 1 };
    fd.max(MIN_BINS)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Histogram {
    /// Freedman–Diaconis bin width `2·IQR·m^(−1/3)`, with at least
    /// [`MIN_BINS`] bins over the data range.
    pub fn freedman_diaconis(values: &[f64]) -> Histogram {
        let sorted = finite_sorted(values);
        if sorted.is_empty() {
            return Histogram {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        Histogram::with_range(&sorted, lo, hi, fd_bins(&sorted))
    }

    /// Histograms of several samples over one shared set of bins, so they can
    /// be compared bin by bin.
    pub fn shared(samples: &[&[f64]]) -> Vec<Histogram> {
        let sorted: Vec<Vec<f64>> = samples.iter().map(|v| finite_sorted(v)).collect();
        let lo = sorted.iter().filter_map(|v| v.first()).copied().fold(f64::INFINITY, f64::min);
        let hi = sorted.iter().filter_map(|v| v.last()).copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return samples.iter().map(|v| Histogram::freedman_diaconis(v)).collect();
        }
        let bins = sorted
            .iter()
            .filter(|v| !v.is_empty())
            .map(|v| {
                let own = fd_bins(v);
                let span = v[v.len() - 1] - v[0];
                if span > 0.0 {
                    // keep this sample's bin width over the wider range
                    ((own as f64) * (hi - lo) / span).ceil() as usize
                } else {
                    own
                }
            })
            .max()
            .unwrap_or(MIN_BINS)
            .min(MAX_SHARED_BINS);
        sorted.iter().map(|v| Histogram::with_range(v, lo, hi, bins)).collect()
    }

    /// `bins` equal-width bins over `[lo, hi]`; the last bin is closed.
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &v in values.iter().filter(|v| v.is_finite()) {
            let i = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// The five reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Alpha,
    Edges,
    Triangles,
    Apl,
    Acc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Alpha, Metric::Edges, Metric::Triangles, Metric::Apl, Metric::Acc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Alpha => "alpha",
            Metric::Edges => "edges",
            Metric::Triangles => "triangles",
            Metric::Apl => "apl",
            Metric::Acc => "acc",
        }
    }

    pub fn of(self, s: &GraphStatistics) -> Option<f64> {
        match self {
            Metric::Alpha => s.alpha,
            Metric::Edges => Some(s.moments.edges),
            Metric::Triangles => Some(s.moments.triangles),
            Metric::Apl => s.apl,
            Metric::Acc => Some(s.acc),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    /// Samples where the metric was defined.
    pub defined: usize,
    pub histogram: Histogram,
}

impl MetricSummary {
    pub fn of(metric: Metric, values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        MetricSummary {
            metric,
            mean,
            std,
            defined: values.len(),
            histogram: Histogram::freedman_diaconis(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationReport {
    pub rows: Vec<GraphStatistics>,
    pub summaries: Vec<MetricSummary>,
}

impl PopulationReport {
    pub fn from_rows(rows: Vec<GraphStatistics>) -> Self {
        let summaries = Metric::ALL
            .iter()
            .map(|&metric| {
                let values: Vec<f64> = rows.iter().filter_map(|r| metric.of(r)).collect();
                MetricSummary::of(metric, &values)
            })
            .collect();
        PopulationReport { rows, summaries }
    }

    /// Defined values of one metric, in sample order.
    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().filter_map(|r| metric.of(r)).collect()
    }

    pub fn summary(&self, metric: Metric) -> &MetricSummary {
        self.summaries.iter().find(|s| s.metric == metric).expect("every metric is summarized")
    }
}

/// Where population samples come from.
#[derive(Debug, Clone)]
pub enum PopulationSource<'a> {
    ForestFire { graph: &'a Graph, config: FireConfig },
    Model { model: &'a MixtureModel, options: SampleOptions },
}

/// Draw one sample of the population; sample `i` uses `seed.derive(i)`.
pub fn draw_sample(source: &PopulationSource<'_>, seed: StreamSeed, index: usize) -> Result<Graph> {
    let s = seed.derive(index as u64);
    match source {
        PopulationSource::ForestFire { graph, config } => forest_fire_sample(graph, config, s),
        PopulationSource::Model { model, options } => Ok(sample(model, s, *options)?.to_graph()),
    }
}

pub fn build_population(
    source: &PopulationSource<'_>,
    count: usize,
    stats: &StatsConfig,
    seed: StreamSeed,
) -> Result<PopulationReport> {
    if count < 2 {
        return Err(Error::param("a population needs at least two samples"));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|i| {
            let g = draw_sample(source, seed, i)?;
            let cfg = StatsConfig {
                path: crate::stats::PathLengthConfig {
                    seed: seed.derive2(0x41_504c, i as u64).value(),
                    ..stats.path
                },
                ..*stats
            };
            Ok(GraphStatistics::compute(&g, &cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PopulationReport::from_rows(rows))
}

/// Edge-count spread at one tying level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub l: u32,
    pub mean_edges: f64,
    pub std_edges: f64,
}

/// Edge counts of `count` samples of `model` (the count of sampled cells in
/// directed mode).
pub fn edge_counts(model: &MixtureModel, count: usize, options: SampleOptions, seed: StreamSeed) -> Result<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|i| Ok(sample(model, seed.derive(i as u64), options)?.cell_count() as f64))
        .collect()
}

/// Edge-count mean and standard deviation for each tying level.
pub fn variance_sweep(
    model: &MixtureModel,
    levels: &[u32],
    count: usize,
    options: SampleOptions,
    seed: StreamSeed,
) -> Result<Vec<SweepRow>> {
    if count < 2 {
        return Err(Error::param("a sweep needs at least two samples per level"));
    }
    levels
        .iter()
        .map(|&l| {
            let tied = model.with_tying(l)?;
            let counts = edge_counts(&tied, count, options, seed.derive(u64::from(l)))?;
            let (mean_edges, std_edges) = mean_std(&counts);
            Ok(SweepRow { l, mean_edges, std_edges })
        })
        .collect()
}

/// One analytic-versus-simulated comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub analytic: f64,
    pub empirical: f64,
    pub standard_error: f64,
    pub z: f64,
}

fn z_score(analytic: f64, empirical: f64, se: f64) -> f64 {
    if se > 0.0 {
        (empirical - analytic) / se
    } else if empirical == analytic {
        0.0
    } else {
        f64::INFINITY.copysign(empirical - analytic)
    }
}

/// Sample mean and variance with their standard errors.
fn moment_rows(values: &[f64], mean_label: &'static str, var_label: &'static str, mean: f64, var: f64) -> Vec<ComparisonRow> {
    let m = values.len() as f64;
    let avg = values.iter().sum::<f64>() / m;
    let centered: Vec<f64> = values.iter().map(|v| v - avg).collect();
    let s2 = centered.iter().map(|d| d * d).sum::<f64>() / (m - 1.0);
    let m4 = centered.iter().map(|d| d.powi(4)).sum::<f64>() / m;
    let se_mean = (s2 / m).sqrt();
    let se_var = ((m4 - s2 * s2 * (m - 3.0) / (m - 1.0)).max(0.0) / m).sqrt();
    vec![
        ComparisonRow {
            metric: mean_label,
            analytic: mean,
            empirical: avg,
            standard_error: se_mean,
            z: z_score(mean, avg, se_mean),
        },
        ComparisonRow {
            metric: var_label,
            analytic: var,
            empirical: s2,
            standard_error: se_var,
            z: z_score(var, s2, se_var),
        },
    ]
}

/// Compare simulated directed-cell edge counts with the closed forms.
///
/// For the untied mixture the closed forms hold per drawn sequence, so each
/// sample is standardized by the mean and variance of its own usage counts
/// and the rows compare the standardized values with 0 and 1.
pub fn empirical_vs_analytic(model: &MixtureModel, count: usize, seed: StreamSeed) -> Result<Vec<ComparisonRow>> {
    if count < 4 {
        return Err(Error::param("comparison needs at least four samples"));
    }
    let opts = SampleOptions::directed();
    if model.variant() == Variant::MixtureUntied {
        let z: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|i| {
                let r = sample(model, seed.derive(i as u64), opts)?;
                let e = ExponentVector::from_sequence(&r.sequence, model.k());
                let mean = crate::moments::expected_edges_conditional(model.matrices(), &e)?;
                let var = variance_edges_conditional(model.matrices(), &e)?;
                let x = r.cell_count() as f64;
                Ok(if var > 0.0 { (x - mean) / var.sqrt() } else { 0.0 })
            })
            .collect::<Result<_>>()?;
        return Ok(moment_rows(&z, "edges_mean_standardized", "edges_var_standardized", 0.0, 1.0));
    }
    let counts = edge_counts(model, count, opts, seed)?;
    Ok(moment_rows(
        &counts,
        "edges_mean",
        "edges_var",
        expected_edges_directed(model),
        variance_edges(model)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitiatorMatrix;

    fn grid(side: u32) -> Graph {
        let id = |r: u32, c: u32| r * side + c;
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                if c + 1 < side {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < side {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Graph::new((side * side) as usize, edges).unwrap()
    }

    #[test]
    fn full_burn_returns_connected_graph() {
        let g = grid(6);
        let cfg = FireConfig {
            burn_probability: 1.0,
            ..FireConfig::new(g.node_count())
        };
        for s in 0..3 {
            assert_eq!(forest_fire_sample(&g, &cfg, StreamSeed::new(s)).unwrap(), g);
        }
    }

    #[test]
    fn single_node_sample() {
        let g = grid(4);
        let sub = forest_fire_sample(&g, &FireConfig::new(1), StreamSeed::new(3)).unwrap();
        assert_eq!((sub.node_count(), sub.edge_count()), (1, 0));
    }

    #[test]
    fn exact_size_and_induced_edges() {
        // two components force re-ignition
        let mut edges: Vec<(u32, u32)> = grid(5).edges().to_vec();
        edges.extend((25..39).map(|u| (u, u + 1)));
        let g = Graph::new(40, edges).unwrap();
        for s in 0..20 {
            for target in [1, 7, 26, 33, 40] {
                let cfg = FireConfig {
                    burn_probability: 0.3,
                    max_restarts: 2,
                    ..FireConfig::new(target)
                };
                let sub = forest_fire_sample(&g, &cfg, StreamSeed::new(s)).unwrap();
                assert_eq!(sub.node_count(), target);
            }
        }
        assert!(forest_fire_sample(&g, &FireConfig::new(41), StreamSeed::new(0)).is_err());
        let bad = FireConfig {
            burn_probability: 0.0,
            ..FireConfig::new(3)
        };
        assert!(forest_fire_sample(&g, &bad, StreamSeed::new(0)).is_err());
    }

    #[test]
    fn histogram_counts_sum() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let h = Histogram::freedman_diaconis(&values);
        assert!(h.counts.len() >= MIN_BINS);
        assert_eq!(h.counts.iter().sum::<usize>(), 200);
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let flat = Histogram::freedman_diaconis(&[2.0; 10]);
        assert_eq!(flat.counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn shared_bins_cover_all_samples() {
        let a: Vec<f64> = (0..50).map(f64::from).collect();
        let b: Vec<f64> = (0..50).map(|i| 100.0 + f64::from(i) * 2.0).collect();
        let hs = Histogram::shared(&[&a, &b]);
        assert_eq!(hs[0].edges, hs[1].edges);
        assert_eq!(hs[0].edges[0], 0.0);
        assert_eq!(*hs[0].edges.last().unwrap(), 198.0);
        assert_eq!(hs[0].counts.iter().sum::<usize>(), 50);
        assert_eq!(hs[1].counts.iter().sum::<usize>(), 50);
    }

    #[test]
    fn deterministic_population_has_zero_spread() {
        let g = grid(5);
        let cfg = FireConfig {
            burn_probability: 1.0,
            ..FireConfig::new(25)
        };
        let source = PopulationSource::ForestFire { graph: &g, config: cfg };
        let report = build_population(&source, 2, &StatsConfig::default(), StreamSeed::new(1)).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0], report.rows[1]);
        for s in &report.summaries {
            assert_eq!(s.std, 0.0, "{:?}", s.metric);
            assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.defined);
        }
    }

    #[test]
    fn degenerate_sweep_has_zero_spread() {
        let ones = InitiatorMatrix::two_by_two(1.0, 1.0, 1.0).unwrap();
        let m = MixtureModel::kpgm(ones, 4).unwrap();
        let rows = variance_sweep(&m, &[1, 2, 3, 4], 5, SampleOptions::default(), StreamSeed::new(0)).unwrap();
        assert!(rows.iter().all(|r| r.std_edges == 0.0 && r.mean_edges == 120.0));
    }

    #[test]
    fn degenerate_comparison() {
        let ones = InitiatorMatrix::two_by_two(1.0, 1.0, 1.0).unwrap();
        let m = MixtureModel::kpgm(ones, 3).unwrap();
        let rows = empirical_vs_analytic(&m, 10, StreamSeed::new(0)).unwrap();
        assert_eq!(rows[1].analytic, 0.0);
        assert_eq!(rows[1].empirical, 0.0);
        assert!(rows.iter().all(|r| r.z == 0.0));
    }
}
