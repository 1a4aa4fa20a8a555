//! Method-of-moments fitting of untied mixtures of 2×2 initiators.
//!
//! Each restart runs Nelder–Mead in an unconstrained space: `a` and `b` are
//! logistic transforms of free variables, `c = a·σ(t)` so that `a > c`
//! always holds, and `π` is a softmax with the first logit pinned at zero.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{InitiatorMatrix, MixtureModel};
use crate::moments::{expected_moments_untied, moments_from_abc, objective, relative_errors, ExponentVector, MomentVector, MomentWeights};
use crate::optim::{minimize, NelderMeadConfig};
use crate::rng::StreamSeed;
use crate::stats::count_moments;

const FIT_STREAM: u64 = 0x4649_545f;

/// Componentwise mean of the observed moments of several graphs.
pub fn average_moments(graphs: &[Graph]) -> Result<MomentVector> {
    if graphs.is_empty() {
        return Err(Error::param("cannot average moments over zero graphs"));
    }
    let sum = graphs
        .iter()
        .map(count_moments)
        .fold([0.0; 4], |acc, m| std::array::from_fn(|i| acc[i] + m[i]));
    Ok(MomentVector::from_array(sum).scale(1.0 / graphs.len() as f64))
}

/// Iteration count and mixing weights for a target node count.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeChoice {
    pub n: u32,
    pub pi: Vec<f64>,
    /// Exponent of each order when the target factors exactly.
    pub exponents: Option<Vec<u32>>,
    pub approximate: bool,
}

fn exact_factorization(target: u64, orders: &[usize]) -> Option<Vec<u32>> {
    // depth-first over orders, keeping the factorization with the fewest
    // factors; ties go to the first found
    fn search(rest: u64, orders: &[usize], idx: usize, cur: &mut Vec<u32>, best: &mut Option<Vec<u32>>) {
        if idx == orders.len() {
            if rest == 1 {
                let total: u32 = cur.iter().sum();
                if best.as_ref().is_none_or(|b| total < b.iter().sum()) {
                    *best = Some(cur.clone());
                }
            }
            return;
        }
        let b = orders[idx] as u64;
        let mut r = rest;
        let mut e = 0u32;
        let mut powers = vec![(r, e)];
        while b > 1 && r.is_multiple_of(b) {
            r /= b;
            e += 1;
            powers.push((r, e));
        }
        for &(r, e) in powers.iter().rev() {
            cur.push(e);
            search(r, orders, idx + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = None;
    search(target, orders, 0, &mut Vec::new(), &mut best);
    best.filter(|e| e.iter().sum::<u32>() > 0)
}

/// Choose `n` and `π` so that `Π b_i^{π_i n}` hits `target`.
///
/// Exact factorizations over the available orders are preferred. Otherwise
/// `n` is the smallest count for which the largest order reaches the target,
/// and `π` splits weight between the smallest and largest order so that the
/// geometric size equals the target when possible (and exceeds it when the
/// smallest order alone already overshoots).
pub fn choose_n(target: u64, orders: &[usize]) -> Result<SizeChoice> {
    if target < 2 {
        return Err(Error::param("target node count must be at least 2"));
    }
    if orders.is_empty() || orders.iter().any(|&b| b < 2) {
        return Err(Error::param("initiator orders must be at least 2"));
    }
    if let Some(e) = exact_factorization(target, orders) {
        let n: u32 = e.iter().sum();
        return Ok(SizeChoice {
            n,
            pi: e.iter().map(|&x| f64::from(x) / f64::from(n)).collect(),
            exponents: Some(e),
            approximate: false,
        });
    }
    let (imin, bmin) = orders.iter().copied().enumerate().min_by_key(|&(_, b)| b).unwrap();
    let (imax, bmax) = orders.iter().copied().enumerate().max_by_key(|&(_, b)| b).unwrap();
    let ln_target = (target as f64).ln();
    let mut n = 1u32;
    while (bmax as f64).powi(n as i32) < target as f64 {
        n += 1;
    }
    let mut pi = vec![0.0; orders.len()];
    let per_step = ln_target / f64::from(n);
    let (lo, hi) = ((bmin as f64).ln(), (bmax as f64).ln());
    if bmin == bmax || per_step <= lo {
        pi[imin] = 1.0;
    } else {
        let w = ((per_step - lo) / (hi - lo)).clamp(0.0, 1.0);
        pi[imax] = w;
        pi[imin] = 1.0 - w;
    }
    Ok(SizeChoice {
        n,
        pi,
        exponents: None,
        approximate: true,
    })
}

/// Node count implied by the model: the geometric size `Π b_i^{π_i n}` and
/// the mean `E[Π b_i^{n_i}] = (Σ π_i b_i)^n` over multinomial usage counts.
pub fn expected_graph_size(model: &MixtureModel) -> (f64, f64) {
    let n = f64::from(model.n());
    let geometric = model
        .matrices()
        .iter()
        .zip(model.pi())
        .map(|(m, p)| (m.order() as f64).powf(p * n))
        .product();
    let arithmetic = model
        .matrices()
        .iter()
        .zip(model.pi())
        .map(|(m, p)| p * m.order() as f64)
        .sum::<f64>()
        .powi(model.n() as i32);
    (geometric, arithmetic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub n: u32,
    pub restarts: usize,
    pub weights: MomentWeights,
    pub local: NelderMeadConfig,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(k: usize, n: u32) -> Self {
        FitConfig {
            k,
            n,
            restarts: 100,
            weights: MomentWeights::default(),
            local: NelderMeadConfig::default(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts must be at least 1"));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    pub objective: f64,
    pub expected: MomentVector,
    pub relative_errors: [f64; 4],
    /// Index of the winning restart; restart 0 is the warm start from the
    /// `k − 1` solution when `k > 1`.
    pub restart: usize,
    pub evaluations: usize,
    /// Weights actually used after zeroing unobserved moments.
    pub weights: MomentWeights,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Decoded parameters: `(a, b, c)` per component and `π`.
#[derive(Debug, Clone)]
struct Params {
    abc: Vec<(f64, f64, f64)>,
    pi: Vec<f64>,
}

fn decode(x: &[f64], k: usize) -> Params {
    let abc = (0..k)
        .map(|i| {
            let a = sigmoid(x[3 * i]);
            let b = sigmoid(x[3 * i + 1]);
            (a, b, a * sigmoid(x[3 * i + 2]))
        })
        .collect();
    let logits: Vec<f64> = std::iter::once(0.0).chain(x[3 * k..].iter().copied()).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    Params {
        abc,
        pi: exps.iter().map(|e| e / total).collect(),
    }
}

fn encode(p: &Params) -> Vec<f64> {
    let mut x = Vec::with_capacity(4 * p.abc.len() - 1);
    for &(a, b, c) in &p.abc {
        x.extend([logit(a), logit(b), logit(c / a)]);
    }
    let first = p.pi[0].max(1e-300).ln();
    x.extend(p.pi[1..].iter().map(|q| q.max(1e-300).ln() - first));
    x
}

fn random_start<R: Rng>(k: usize, rng: &mut R) -> Params {
    let abc = (0..k)
        .map(|_| loop {
            let (mut a, b, mut c) = (
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
                rng.random_range(0.01..0.99),
            );
            if a < c {
                std::mem::swap(&mut a, &mut c);
            }
            if a > c {
                break (a, b, c);
            }
        })
        .collect();
    // uniform on the simplex
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    Params {
        abc,
        pi: raw.iter().map(|r| r / total).collect(),
    }
}

fn to_model(p: &Params, n: u32) -> Result<MixtureModel> {
    let matrices = p
        .abc
        .iter()
        .map(|&(a, b, c)| InitiatorMatrix::two_by_two(a, b, c))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(matrices, p.pi.clone(), n, n)
}

fn from_model(model: &MixtureModel) -> Params {
    Params {
        abc: model.matrices().iter().map(|m| m.abc().expect("fitted initiators are 2x2")).collect(),
        pi: model.pi().to_vec(),
    }
}

/// Warm start for `k` components from a `k − 1` solution: the component with
/// the largest weight is duplicated and its weight split in half, which
/// leaves every expected moment unchanged.
fn split_component(p: &Params) -> Params {
    let (idx, _) = p
        .pi
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &w)| if w > best.1 { (i, w) } else { best });
    let mut abc = p.abc.clone();
    let mut pi = p.pi.clone();
    abc.push(p.abc[idx]);
    pi[idx] /= 2.0;
    pi.push(pi[idx]);
    Params { abc, pi }
}

/// Fit a `k`-component untied mixture to observed moments.
pub fn fit(observed: &MomentVector, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if observed.to_array().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::param("observed moments must be finite and non-negative"));
    }
    let mut weights = config.weights;
    let dropped = weights.zero_unobserved(observed);
    if !dropped.is_empty() {
        log::warn!("observed {} zero; weight set to 0", dropped.join(", "));
    }
    weights.validate().map_err(|_| Error::param("every positively weighted moment was observed as zero"))?;
    let config = FitConfig {
        weights,
        ..config.clone()
    };

    let warm = if config.k > 1 {
        let smaller = fit(observed, &FitConfig { k: config.k - 1, ..config.clone() })?;
        Some(split_component(&from_model(&smaller.model)))
    } else {
        None
    };

    let k = config.k;
    let n = config.n;
    let nf = f64::from(n);
    let score = |x: &[f64]| -> f64 {
        let p = decode(x, k);
        let e: Vec<f64> = p.pi.iter().map(|q| q * nf).collect();
        let expected = moments_from_abc(&p.abc, &e);
        (0..4)
            .filter(|&i| weights.0[i] > 0.0)
            .map(|i| {
                let r = (observed[i] - expected[i]) / observed[i];
                weights.0[i] * r * r
            })
            .sum()
    };

    let root = StreamSeed::new(config.seed).derive2(FIT_STREAM, k as u64);
    let runs: Vec<_> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = match (&warm, r) {
                (Some(w), 0) => w.clone(),
                _ => random_start(k, &mut root.derive(r as u64).rng()),
            };
            minimize(score, &encode(&start), &config.local)
        })
        .collect();

    let evaluations = runs.iter().map(|m| m.evaluations).sum();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.value.is_finite())
        .fold(None, |acc: Option<(usize, crate::optim::Minimum)>, (i, m)| match acc {
            Some((j, b)) if b.value <= m.value => Some((j, b)),
            _ => Some((i, m)),
        })
        .ok_or_else(|| {
            Error::Estimation(format!(
                "all {} restarts produced non-finite objectives (k = {k}, n = {n}, observed = {observed:?})",
                config.restarts
            ))
        })?;

    let model = to_model(&decode(&best.x, k), n)?;
    let expected = expected_moments_untied(model.matrices(), &ExponentVector::of_model(&model))?;
    let value = objective(&expected, observed, &weights)?;
    Ok(FitResult {
        model,
        objective: value,
        expected,
        relative_errors: relative_errors(&expected, observed),
        restart,
        evaluations,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: u32) -> Graph {
        Graph::new(leaves as usize + 1, (1..=leaves).map(|v| (0, v))).unwrap()
    }

    #[test]
    fn average_examples() {
        let k3 = Graph::complete(3);
        assert_eq!(average_moments(std::slice::from_ref(&k3)).unwrap(), MomentVector::new(3.0, 3.0, 0.0, 1.0));
        assert_eq!(average_moments(&[k3.clone(), k3.clone()]).unwrap(), MomentVector::new(3.0, 3.0, 0.0, 1.0));
        assert_eq!(average_moments(&[k3, star(3)]).unwrap(), MomentVector::new(3.0, 3.0, 0.5, 0.5));
        assert!(average_moments(&[]).is_err());
    }

    #[test]
    fn choose_n_examples() {
        let c = choose_n(12, &[2, 3]).unwrap();
        assert_eq!((c.n, c.approximate), (3, false));
        assert!((c.pi[0] - 2.0 / 3.0).abs() < 1e-15 && (c.pi[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.exponents, Some(vec![2, 1]));

        let c = choose_n(8, &[2]).unwrap();
        assert_eq!((c.n, c.pi.clone(), c.approximate), (3, vec![1.0], false));

        let c = choose_n(7, &[2]).unwrap();
        assert_eq!((c.n, c.pi.clone(), c.approximate), (3, vec![1.0], true));

        let c = choose_n(7, &[2, 3]).unwrap();
        assert!(c.approximate);
        let size: f64 = [2.0f64, 3.0].iter().zip(&c.pi).map(|(b, p)| b.powf(p * f64::from(c.n))).product();
        assert!((size - 7.0).abs() < 1e-9);
        assert!(choose_n(1, &[2]).is_err());
    }

    #[test]
    fn graph_size_examples() {
        let t = InitiatorMatrix::two_by_two(0.9, 0.5, 0.1).unwrap();
        let three = InitiatorMatrix::new(3, vec![0.5; 9]).unwrap();
        let m = MixtureModel::kpgm(t.clone(), 10).unwrap();
        assert_eq!(expected_graph_size(&m), (1024.0, 1024.0));
        let m = MixtureModel::new(vec![t.clone(), three.clone()], vec![0.5, 0.5], 2, 2).unwrap();
        let (g, a) = expected_graph_size(&m);
        assert!((g - 6.0).abs() < 1e-12 && (a - 6.25).abs() < 1e-12);
        let m = MixtureModel::new(vec![t, three], vec![1.0, 0.0], 4, 4).unwrap();
        assert_eq!(expected_graph_size(&m), (16.0, 16.0));
    }

    #[test]
    fn encode_decode_round_trip() {
        let p = Params {
            abc: vec![(0.9, 0.4, 0.2), (0.7, 0.3, 0.6)],
            pi: vec![0.25, 0.75],
        };
        let q = decode(&encode(&p), 2);
        for (x, y) in p.abc.iter().zip(&q.abc) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12 && (x.2 - y.2).abs() < 1e-12);
        }
        assert!((q.pi[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn split_keeps_moments() {
        let p = Params {
            abc: vec![(0.9, 0.4, 0.2)],
            pi: vec![1.0],
        };
        let s = split_component(&p);
        let a = moments_from_abc(&p.abc, &[9.0]);
        let b = moments_from_abc(&s.abc, &[4.5, 4.5]);
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() <= 1e-12 * a[i].abs());
        }
    }

    #[test]
    fn fit_recovers_single_initiator() {
        let truth = [(0.9, 0.5, 0.2)];
        let observed = moments_from_abc(&truth, &[8.0]);
        let mut cfg = FitConfig::new(1, 8);
        cfg.restarts = 20;
        let r = fit(&observed, &cfg).unwrap();
        assert!(r.objective < 1e-8, "{r:?}");
        let (a, b, c) = r.model.matrices()[0].abc().unwrap();
        assert!(a > c && (0.0..=1.0).contains(&b));
    }

    #[test]
    fn fit_rejects_bad_config() {
        let obs = MomentVector::new(10.0, 20.0, 5.0, 1.0);
        assert!(fit(&obs, &FitConfig { restarts: 0, ..FitConfig::new(1, 4) }).is_err());
        assert!(fit(&obs, &FitConfig::new(0, 4)).is_err());
        assert!(fit(&MomentVector::default(), &FitConfig::new(1, 4)).is_err());
    }
}
