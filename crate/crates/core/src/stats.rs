//! Observed statistics of a concrete graph, and exact expected moments of a
//! small probability matrix.

use std::collections::VecDeque;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};
use crate::moments::MomentVector;
use crate::prob::DenseMatrix;
use crate::rng::StreamSeed;

pub const DEFAULT_ORACLE_CAP: usize = 64;

fn choose2(d: usize) -> f64 {
    let d = d as f64;
    d * (d - 1.0) / 2.0
}

fn choose3(d: usize) -> f64 {
    let d = d as f64;
    d * (d - 1.0) * (d - 2.0) / 6.0
}

/// Number of triangles, each counted once.
///
/// Nodes are ranked by (degree, id); every edge is oriented towards the
/// higher rank and triangles are found by intersecting the sorted forward
/// lists of the two endpoints.
pub fn count_triangles(g: &Graph) -> u64 {
    let adj = g.adjacency();
    let n = g.node_count();
    let rank_key = |u: usize| (adj.degree(u), u);
    let forward: Vec<Vec<u32>> = (0..n)
        .map(|u| {
            adj.neighbors(u)
                .iter()
                .copied()
                .filter(|&v| rank_key(v as usize) > rank_key(u))
                .collect()
        })
        .collect();
    forward
        .par_iter()
        .map(|fu| {
            let mut count = 0u64;
            for &v in fu {
                count += sorted_intersection_len(fu, &forward[v as usize]);
            }
            count
        })
        .sum()
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Edges, hairpins `Σ C(d,2)`, tripins `Σ C(d,3)` and triangles.
pub fn count_moments(g: &Graph) -> MomentVector {
    let degrees = g.degrees();
    MomentVector {
        edges: g.edge_count() as f64,
        hairpins: degrees.iter().map(|&d| choose2(d)).sum(),
        tripins: degrees.iter().map(|&d| choose3(d)).sum(),
        triangles: count_triangles(g) as f64,
    }
}

/// Expected moments of a graph whose pairs `u < v` are independent
/// Bernoulli(`P[u, v]`), by direct summation over pairs, wedges and triples.
/// `P` must be symmetric; its diagonal is ignored.
pub fn exact_expected_moments(p: &DenseMatrix, cap: usize) -> Result<MomentVector> {
    let n = p.order();
    if n > cap {
        return Err(Error::Resource {
            required: n as u128,
            cap,
        });
    }
    let mut m = MomentVector::default();
    for u in 0..n {
        for v in (u + 1)..n {
            m.edges += p.get(u, v);
            for w in (v + 1)..n {
                m.triangles += p.get(u, v) * p.get(v, w) * p.get(u, w);
            }
        }
    }
    for center in 0..n {
        let others: Vec<usize> = (0..n).filter(|&x| x != center).collect();
        for (i, &u) in others.iter().enumerate() {
            let pu = p.get(center, u);
            for (j, &w) in others.iter().enumerate().skip(i + 1) {
                let pw = p.get(center, w);
                m.hairpins += pu * pw;
                for &x in &others[j + 1..] {
                    m.tripins += pu * pw * p.get(center, x);
                }
            }
        }
    }
    Ok(m)
}

/// Discrete power-law exponent by the approximate maximum-likelihood
/// estimator `α = 1 + m / Σ ln(d_i / (d_min − ½))` over degrees `≥ d_min`.
pub fn power_law_alpha(g: &Graph, d_min: usize) -> Result<f64> {
    alpha_from_degrees(&g.degrees(), d_min)
}

pub fn alpha_from_degrees(degrees: &[usize], d_min: usize) -> Result<f64> {
    if d_min == 0 {
        return Err(Error::param("d_min must be at least 1"));
    }
    let tail: Vec<usize> = degrees.iter().copied().filter(|&d| d >= d_min).collect();
    if tail.len() < 2 {
        return Err(Error::Undefined(format!(
            "power-law fit needs two nodes with degree >= {d_min}, found {}",
            tail.len()
        )));
    }
    if tail.iter().all(|&d| d == tail[0]) {
        return Err(Error::Undefined("power-law fit on a single-valued degree sequence".into()));
    }
    let shift = d_min as f64 - 0.5;
    let denom: f64 = tail.iter().map(|&d| (d as f64 / shift).ln()).sum();
    if denom < 1e-12 {
        return Err(Error::Undefined("power-law fit has a vanishing log-sum".into()));
    }
    Ok(1.0 + tail.len() as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathLengthConfig {
    /// Exact all-sources BFS up to this many nodes in the largest component.
    pub exact_limit: usize,
    /// Number of BFS sources sampled above the limit.
    pub sample_sources: usize,
    pub seed: u64,
}

impl Default for PathLengthConfig {
    fn default() -> Self {
        PathLengthConfig {
            exact_limit: 4096,
            sample_sources: 512,
            seed: 0,
        }
    }
}

/// Node ids of the largest connected component (lowest id wins ties).
pub fn largest_component(adj: &Adjacency) -> Vec<u32> {
    let n = adj.node_count();
    let mut label = vec![u32::MAX; n];
    let mut best: Vec<u32> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != u32::MAX {
            continue;
        }
        let mut members = vec![start as u32];
        label[start] = start as u32;
        queue.push_back(start);
        while let Some(x) = queue.pop_front() {
            for &y in adj.neighbors(x) {
                if label[y as usize] == u32::MAX {
                    label[y as usize] = start as u32;
                    members.push(y);
                    queue.push_back(y as usize);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    best
}

fn bfs_distance_sum(adj: &Adjacency, source: usize, dist: &mut [u32], queue: &mut VecDeque<usize>) -> (u64, u64) {
    dist.fill(u32::MAX);
    dist[source] = 0;
    queue.clear();
    queue.push_back(source);
    let (mut total, mut reached) = (0u64, 0u64);
    while let Some(x) = queue.pop_front() {
        let d = dist[x];
        for &y in adj.neighbors(x) {
            if dist[y as usize] == u32::MAX {
                dist[y as usize] = d + 1;
                total += u64::from(d + 1);
                reached += 1;
                queue.push_back(y as usize);
            }
        }
    }
    (total, reached)
}

/// Mean shortest-path hop count over connected ordered pairs of the largest
/// connected component.
pub fn average_path_length(g: &Graph, config: &PathLengthConfig) -> Result<f64> {
    if g.edge_count() == 0 {
        return Err(Error::Undefined("average path length of an edgeless graph".into()));
    }
    let adj = g.adjacency();
    let component = largest_component(&adj);
    let sources: Vec<usize> = if component.len() <= config.exact_limit {
        component.iter().map(|&u| u as usize).collect()
    } else {
        let mut rng = StreamSeed::new(config.seed).rng();
        let mut picked: Vec<usize> = sample_indices(&mut rng, component.len(), config.sample_sources.min(component.len()))
            .into_iter()
            .map(|i| component[i] as usize)
            .collect();
        picked.sort_unstable();
        picked
    };
    let (total, pairs) = sources
        .par_iter()
        .map_init(
            || (vec![0u32; g.node_count()], VecDeque::new()),
            |(dist, queue), &s| bfs_distance_sum(&adj, s, dist, queue),
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(total as f64 / pairs as f64)
}

/// How nodes with fewer than two neighbors enter the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LowDegreeClustering {
    /// They contribute a coefficient of 0.
    #[default]
    Zero,
    /// They are left out of the average.
    Exclude,
}

/// Mean local clustering coefficient.
pub fn average_clustering(g: &Graph) -> f64 {
    average_clustering_with(g, LowDegreeClustering::Zero)
}

pub fn average_clustering_with(g: &Graph, low: LowDegreeClustering) -> f64 {
    let adj = g.adjacency();
    let n = g.node_count();
    // per-node values are collected in order and summed sequentially so the
    // result does not depend on the thread count
    let coefficients: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let nb = adj.neighbors(u);
            let d = nb.len();
            if d < 2 {
                return (low == LowDegreeClustering::Zero).then_some(0.0);
            }
            let links: u64 = nb
                .iter()
                .map(|&v| sorted_intersection_len(nb, adj.neighbors(v as usize)))
                .sum();
            // every neighbor pair is seen from both ends
            Some(links as f64 / (d * (d - 1)) as f64)
        })
        .collect();
    let counted = coefficients.iter().flatten().count();
    let sum: f64 = coefficients.iter().flatten().sum();
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

/// Summary statistics of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStatistics {
    pub node_count: usize,
    pub moments: MomentVector,
    /// `None` when the degree sequence is degenerate.
    pub alpha: Option<f64>,
    /// `None` for an edgeless graph.
    pub apl: Option<f64>,
    pub acc: f64,
    /// `degree_histogram[d]` = number of nodes of degree `d`.
    pub degree_histogram: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsConfig {
    pub d_min: usize,
    pub path: PathLengthConfig,
    pub low_degree: LowDegreeClustering,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            d_min: 1,
            path: PathLengthConfig::default(),
            low_degree: LowDegreeClustering::Zero,
        }
    }
}

impl GraphStatistics {
    pub fn compute(g: &Graph, config: &StatsConfig) -> Self {
        let degrees = g.degrees();
        let mut degree_histogram = vec![0usize; degrees.iter().max().map_or(0, |d| d + 1)];
        for &d in &degrees {
            degree_histogram[d] += 1;
        }
        GraphStatistics {
            node_count: g.node_count(),
            moments: count_moments(g),
            alpha: alpha_from_degrees(&degrees, config.d_min).ok(),
            apl: average_path_length(g, &config.path).ok(),
            acc: average_clustering_with(g, config.low_degree),
            degree_histogram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: u32) -> Graph {
        Graph::new(leaves as usize + 1, (1..=leaves).map(|v| (0, v))).unwrap()
    }

    fn path(n: u32) -> Graph {
        Graph::new(n as usize, (1..n).map(|v| (v - 1, v))).unwrap()
    }

    #[test]
    fn moment_examples() {
        assert_eq!(count_moments(&Graph::complete(3)), MomentVector::new(3.0, 3.0, 0.0, 1.0));
        assert_eq!(count_moments(&star(3)), MomentVector::new(3.0, 3.0, 1.0, 0.0));
        assert_eq!(count_moments(&path(3)), MomentVector::new(2.0, 1.0, 0.0, 0.0));
        assert_eq!(count_triangles(&Graph::complete(6)), 20);
    }

    #[test]
    fn oracle_examples() {
        let ones = DenseMatrix::new(3, vec![1.0; 9]).unwrap();
        assert_eq!(exact_expected_moments(&ones, 64).unwrap(), MomentVector::new(3.0, 3.0, 0.0, 1.0));
        let zeros = DenseMatrix::zeros(5);
        assert_eq!(exact_expected_moments(&zeros, 64).unwrap(), MomentVector::default());
        assert!(matches!(
            exact_expected_moments(&DenseMatrix::zeros(65), 64),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_from_degrees(&[1, 1, 2], 1).unwrap();
        assert!((a - 2.0820).abs() < 1e-4, "{a}");
        assert!(alpha_from_degrees(&[3, 3, 3, 3], 3).is_err());
        assert!(alpha_from_degrees(&[5, 1, 1], 2).is_err());
        assert!(alpha_from_degrees(&[1, 2], 0).is_err());
        assert!(power_law_alpha(&Graph::complete(3), 1).is_err());
    }

    #[test]
    fn path_length_examples() {
        let cfg = PathLengthConfig::default();
        assert_eq!(average_path_length(&Graph::complete(3), &cfg).unwrap(), 1.0);
        assert!((average_path_length(&path(3), &cfg).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((average_path_length(&star(3), &cfg).unwrap() - 1.5).abs() < 1e-15);
        assert!(average_path_length(&Graph::empty(4), &cfg).is_err());
    }

    #[test]
    fn path_length_uses_largest_component() {
        // triangle plus a separate edge
        let g = Graph::new(6, [(0, 1), (1, 2), (0, 2), (4, 5)]).unwrap();
        assert_eq!(average_path_length(&g, &PathLengthConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn sampled_path_length_is_close() {
        let g = path(60);
        let exact = average_path_length(&g, &PathLengthConfig::default()).unwrap();
        let cfg = PathLengthConfig {
            exact_limit: 10,
            sample_sources: 60,
            seed: 1,
        };
        assert!((average_path_length(&g, &cfg).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(average_clustering(&Graph::complete(3)), 1.0);
        assert_eq!(average_clustering(&star(3)), 0.0);
        let k4_minus = Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
        // nodes 2 and 3 have c = 1, nodes 0 and 1 have c = 2/3
        assert!((average_clustering(&k4_minus) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_clustering(&Graph::empty(3)), 0.0);
        let tail = Graph::new(4, [(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        assert!((average_clustering(&tail) - (1.0 + 1.0 + 1.0 / 3.0) / 4.0).abs() < 1e-15);
        assert!(
            (average_clustering_with(&tail, LowDegreeClustering::Exclude) - (1.0 + 1.0 + 1.0 / 3.0) / 3.0).abs()
                < 1e-15
        );
    }

    #[test]
    fn statistics_bundle() {
        let s = GraphStatistics::compute(&Graph::complete(3), &StatsConfig::default());
        assert_eq!(s.alpha, None);
        assert_eq!(s.apl, Some(1.0));
        assert_eq!(s.acc, 1.0);
        assert_eq!(s.degree_histogram, vec![0, 0, 3]);
    }
}
