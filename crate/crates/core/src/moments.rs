//! Closed-form expectations and variances of graph features.
//!
//! Two edge-counting conventions appear here. The *directed-cell* count sums
//! every Bernoulli cell of the final probability matrix, diagonal included;
//! it is what the edge-count mean/variance formulas describe and what
//! [`CellMode::Directed`](crate::CellMode::Directed) sampling produces. The
//! *simple* count counts each undirected non-loop edge once. For a symmetric
//! matrix `2·E_simple = E_directed − trace`.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitiatorMatrix, KronSequence, MixtureModel, Variant};

/// Edges, hairpins (2-stars), tripins (3-stars) and triangles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentVector {
    pub edges: f64,
    pub hairpins: f64,
    pub tripins: f64,
    pub triangles: f64,
}

impl MomentVector {
    pub const NAMES: [&'static str; 4] = ["edges", "hairpins", "tripins", "triangles"];

    pub fn new(edges: f64, hairpins: f64, tripins: f64, triangles: f64) -> Self {
        MomentVector {
            edges,
            hairpins,
            tripins,
            triangles,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        MomentVector::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.edges, self.hairpins, self.tripins, self.triangles]
    }

    pub fn scale(self, factor: f64) -> Self {
        MomentVector::from_array(self.to_array().map(|x| x * factor))
    }
}

impl Index<usize> for MomentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.edges,
            1 => &self.hairpins,
            2 => &self.tripins,
            3 => &self.triangles,
            _ => panic!("moment index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for MomentVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.edges,
            1 => &mut self.hairpins,
            2 => &mut self.tripins,
            3 => &mut self.triangles,
            _ => panic!("moment index {i} out of range"),
        }
    }
}

/// Entry sums of one initiator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSums {
    /// Sum of all entries.
    pub sum: f64,
    /// Sum of squared entries.
    pub sum_sq: f64,
    /// Sum of diagonal entries.
    pub trace: f64,
    /// Sum of squared diagonal entries.
    pub trace_sq: f64,
}

impl ThetaSums {
    pub fn of(theta: &InitiatorMatrix) -> Self {
        let b = theta.order();
        let diag = (0..b).map(|i| theta.get(i, i));
        ThetaSums {
            sum: theta.entries().iter().sum(),
            sum_sq: theta.entries().iter().map(|x| x * x).sum(),
            trace: diag.clone().sum(),
            trace_sq: diag.map(|x| x * x).sum(),
        }
    }

    /// Variance of the entry sum of one realized block, `S − S₂`.
    pub fn block_variance(&self) -> f64 {
        self.sum - self.sum_sq
    }
}

/// Per-initiator usage weights `e_i` with `Σ e_i = n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentVector(Vec<f64>);

impl ExponentVector {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::param("exponents must be finite and non-negative"));
        }
        Ok(ExponentVector(e))
    }

    /// `e_i = π_i · n`.
    pub fn from_pi(pi: &[f64], n: u32) -> Self {
        ExponentVector(pi.iter().map(|p| p * f64::from(n)).collect())
    }

    /// `e_i` = number of times initiator `i` occurs in `seq`.
    pub fn from_sequence(seq: &KronSequence, k: usize) -> Self {
        ExponentVector(seq.counts(k).into_iter().map(f64::from).collect())
    }

    pub fn of_model(model: &MixtureModel) -> Self {
        ExponentVector::from_pi(model.pi(), model.n())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[inline]
fn pow(base: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        base.powf(e)
    }
}

fn weighted_product(values: impl Iterator<Item = f64>, e: &ExponentVector) -> f64 {
    values.zip(e.as_slice()).map(|(x, &w)| pow(x, w)).product()
}

fn check_lengths(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<()> {
    if matrices.len() != e.as_slice().len() {
        return Err(Error::param(format!(
            "{} exponents for {} initiators",
            e.as_slice().len(),
            matrices.len()
        )));
    }
    Ok(())
}

// Geometric sum 1 + s + … + s^(m-1); equals (s^m − 1)/(s − 1) and its limit m at s = 1.
fn geometric_sum(s: f64, m: u32) -> f64 {
    (0..m).fold(0.0, |acc, _| acc * s + 1.0)
}

/// Directed-cell edge-count variance of KPGM: `S^n − S₂^n`.
pub fn kpgm_variance(s: ThetaSums, n: u32) -> f64 {
    s.sum.powi(n as i32) - s.sum_sq.powi(n as i32)
}

/// Directed-cell edge-count variance of tKPGM:
/// `S^(n−1) (S^n − 1)/(S − 1) (S − S₂)`.
pub fn tkpgm_variance(s: ThetaSums, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    s.sum.powi(n as i32 - 1) * geometric_sum(s.sum, n) * s.block_variance()
}

/// Directed-cell edge-count variance of mKPGM with `l` untied iterations.
pub fn mkpgm_variance(s: ThetaSums, n: u32, l: u32) -> f64 {
    let tied = n - l;
    let first = if n == 0 {
        0.0
    } else {
        s.sum.powi(n as i32 - 1) * geometric_sum(s.sum, tied) * s.block_variance()
    };
    first + kpgm_variance(s, l) * s.sum.powi(2 * tied as i32)
}

/// Mean directed-cell edge count of KPGM, `S^n` (1 for `n = 0`).
pub fn kpgm_mean(s: ThetaSums, n: u32) -> f64 {
    s.sum.powi(n as i32)
}

/// Moments of one realized block, averaged over the mixing distribution.
#[derive(Debug, Clone, Copy)]
struct MixtureSums {
    /// `Σ π_i S_i`
    mean: f64,
    /// `Σ π_i S₂_i`
    mean_sq_entries: f64,
    /// `Σ π_i S_i²`
    second: f64,
}

impl MixtureSums {
    fn of(matrices: &[InitiatorMatrix], pi: &[f64]) -> Self {
        let mut acc = MixtureSums {
            mean: 0.0,
            mean_sq_entries: 0.0,
            second: 0.0,
        };
        for (m, &p) in matrices.iter().zip(pi) {
            let s = ThetaSums::of(m);
            acc.mean += p * s.sum;
            acc.mean_sq_entries += p * s.sum_sq;
            acc.second += p * s.sum * s.sum;
        }
        acc
    }
}

/// Unconditional directed-cell edge-count variance for any mixture and
/// tying level.
///
/// The untied prefix contributes `m^l − m₂^l + q^l − m^(2l)`; every tied
/// iteration then acts as a branching step in a shared random environment:
/// `V' = M·w + q·V + (q − m²)·M²` with `m = Σπ S`, `m₂ = Σπ S₂`,
/// `q = Σπ S²`, `w = m − m₂` and `M` the current mean.
pub fn mixture_variance(matrices: &[InitiatorMatrix], pi: &[f64], n: u32, l: u32) -> f64 {
    let s = MixtureSums::of(matrices, pi);
    let (m, q) = (s.mean, s.second);
    let w = s.mean - s.mean_sq_entries;
    let between = (q - m * m).max(0.0);
    let mut mean = m.powi(l as i32);
    let mut var = mean - s.mean_sq_entries.powi(l as i32) + power_difference(q, m * m, between, l);
    for _ in l..n {
        var = mean * w + q * var + between * mean * mean;
        mean *= m;
    }
    var
}

// x^l − y^l written as (x − y)·Σ x^j y^(l−1−j), exact zero when x = y
fn power_difference(x: f64, y: f64, x_minus_y: f64, l: u32) -> f64 {
    let sum: f64 = (0..l).map(|j| x.powi(j as i32) * y.powi((l - 1 - j) as i32)).sum();
    x_minus_y * sum
}

/// Unconditional mean directed-cell edge count, `(Σ π_i S_i)^n`.
pub fn mixture_mean(matrices: &[InitiatorMatrix], pi: &[f64], n: u32) -> f64 {
    MixtureSums::of(matrices, pi).mean.powi(n as i32)
}

/// `Π S_i^{e_i}`: directed-cell mean given the initiator usage.
pub fn expected_edges_conditional(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<f64> {
    check_lengths(matrices, e)?;
    Ok(weighted_product(matrices.iter().map(|m| ThetaSums::of(m).sum), e))
}

/// `Π S_i^{e_i} − Π S₂_i^{e_i}`: directed-cell variance given the usage.
pub fn variance_edges_conditional(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<f64> {
    check_lengths(matrices, e)?;
    let sums: Vec<_> = matrices.iter().map(ThetaSums::of).collect();
    Ok(weighted_product(sums.iter().map(|s| s.sum), e) - weighted_product(sums.iter().map(|s| s.sum_sq), e))
}

/// Simple-graph edge mean given the usage: `(Π S^e − Π trace^e) / 2`.
pub fn expected_edges_simple_conditional(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<f64> {
    check_lengths(matrices, e)?;
    let sums: Vec<_> = matrices.iter().map(ThetaSums::of).collect();
    Ok((weighted_product(sums.iter().map(|s| s.sum), e) - weighted_product(sums.iter().map(|s| s.trace), e)) / 2.0)
}

/// Simple-graph edge variance given the usage: `Σ_{u<v} p(1 − p)`.
pub fn variance_edges_simple_conditional(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<f64> {
    check_lengths(matrices, e)?;
    let sums: Vec<_> = matrices.iter().map(ThetaSums::of).collect();
    let all = weighted_product(sums.iter().map(|s| s.sum), e) - weighted_product(sums.iter().map(|s| s.sum_sq), e);
    let diag = weighted_product(sums.iter().map(|s| s.trace), e) - weighted_product(sums.iter().map(|s| s.trace_sq), e);
    Ok((all - diag) / 2.0)
}

/// Mean directed-cell edge count.
///
/// Single-initiator models give `S^n`; mixtures with tying give
/// `(Σ π_i S_i)^n`; the untied mixture gives `Π S_i^{π_i n}`, i.e. the
/// count at the expected usage.
pub fn expected_edges_directed(model: &MixtureModel) -> f64 {
    match model.variant() {
        Variant::MixtureUntied => {
            expected_edges_conditional(model.matrices(), &ExponentVector::of_model(model))
                .expect("model lengths agree")
        }
        _ => mixture_mean(model.matrices(), model.pi(), model.n()),
    }
}

/// Directed-cell edge-count variance for the model's variant.
///
/// The untied mixture returns the variance at the expected usage
/// `e_i = π_i n` (no between-sequence term); use [`mixture_variance`] for
/// the unconditional value.
pub fn variance_edges(model: &MixtureModel) -> Result<f64> {
    let (n, l) = (model.n(), model.l());
    Ok(match model.variant() {
        Variant::Kpgm => kpgm_variance(ThetaSums::of(&model.matrices()[0]), n),
        Variant::Tkpgm => tkpgm_variance(ThetaSums::of(&model.matrices()[0]), n),
        Variant::Mkpgm => mkpgm_variance(ThetaSums::of(&model.matrices()[0]), n, l),
        Variant::MixtureUntied => variance_edges_conditional(model.matrices(), &ExponentVector::of_model(model))?,
        Variant::MixtureTied | Variant::MixturePartial => mixture_variance(model.matrices(), model.pi(), n, l),
    })
}

/// Expected simple-graph moments of the untied model with 2×2 initiators.
///
/// Each quantity is a signed sum of products over initiators of per-level
/// sums raised to `e_i`, and agrees with
/// [`exact_expected_moments`](crate::stats::exact_expected_moments).
pub fn expected_moments_untied(matrices: &[InitiatorMatrix], e: &ExponentVector) -> Result<MomentVector> {
    check_lengths(matrices, e)?;
    let abc: Vec<(f64, f64, f64)> = matrices
        .iter()
        .map(|m| {
            m.abc()
                .ok_or_else(|| Error::Unsupported(format!("moment formulas need 2x2 initiators, got order {}", m.order())))
        })
        .collect::<Result<_>>()?;
    Ok(moments_from_abc(&abc, e.as_slice()))
}

/// [`expected_moments_untied`] on raw `(a, b, c)` triples, without validation.
pub(crate) fn moments_from_abc(abc: &[(f64, f64, f64)], e: &[f64]) -> MomentVector {
    let prod = |f: &dyn Fn(f64, f64, f64) -> f64| abc.iter().zip(e).map(|(&(a, b, c), &w)| pow(f(a, b, c), w)).product::<f64>();

    let edges = signed_sum(&[
        (1.0, prod(&|a, b, c| a + 2.0 * b + c)),
        (-1.0, prod(&|a, _, c| a + c)),
    ]) / 2.0;

    let hairpins = signed_sum(&[
        (1.0, prod(&|a, b, c| (a + b).powi(2) + (b + c).powi(2))),
        (-2.0, prod(&|a, b, c| a * (a + b) + c * (c + b))),
        (-1.0, prod(&|a, b, c| a * a + 2.0 * b * b + c * c)),
        (2.0, prod(&|a, _, c| a * a + c * c)),
    ]) / 2.0;

    let cubes = |a: f64, c: f64| a.powi(3) + c.powi(3);
    let tripins = signed_sum(&[
        (1.0, prod(&|a, b, c| (a + b).powi(3) + (b + c).powi(3))),
        (-3.0, prod(&|a, b, c| a * (a + b).powi(2) + c * (b + c).powi(2))),
        (-3.0, prod(&|a, b, c| cubes(a, c) + b * (a * a + c * c) + b * b * (a + c) + 2.0 * b.powi(3))),
        (2.0, prod(&|a, b, c| cubes(a, c) + 2.0 * b.powi(3))),
        (3.0, prod(&|a, b, c| cubes(a, c) + b * b * (a + c))),
        (6.0, prod(&|a, b, c| cubes(a, c) + b * (a * a + c * c))),
        (-6.0, prod(&|a, _, c| cubes(a, c))),
    ]) / 6.0;

    let triangles = signed_sum(&[
        (1.0, prod(&|a, b, c| cubes(a, c) + 3.0 * b * b * (a + c))),
        (-3.0, prod(&|a, b, c| a * (a * a + b * b) + c * (b * b + c * c))),
        (2.0, prod(&|a, _, c| cubes(a, c))),
    ]) / 6.0;

    MomentVector::new(edges, hairpins, tripins, triangles)
}

/// `Σ coef·value` for a non-negative quantity. A result within the rounding
/// bound of the terms is returned as exactly zero.
fn signed_sum(terms: &[(f64, f64)]) -> f64 {
    let sum: f64 = terms.iter().map(|(c, v)| c * v).sum();
    let scale: f64 = terms.iter().map(|(c, v)| (c * v).abs()).sum();
    if sum <= 16.0 * f64::EPSILON * scale {
        0.0
    } else {
        sum
    }
}

/// Non-negative per-moment weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentWeights(pub [f64; 4]);

impl Default for MomentWeights {
    fn default() -> Self {
        MomentWeights([1.0; 4])
    }
}

impl MomentWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("moment weights must be finite and non-negative"));
        }
        if self.0.iter().all(|&w| w == 0.0) {
            return Err(Error::param("at least one moment weight must be positive"));
        }
        Ok(())
    }

    /// Zero the weight of every moment observed as zero. Returns the names
    /// of the moments that were dropped.
    pub fn zero_unobserved(&mut self, observed: &MomentVector) -> Vec<&'static str> {
        let mut dropped = Vec::new();
        for i in 0..4 {
            if observed[i] == 0.0 && self.0[i] > 0.0 {
                self.0[i] = 0.0;
                dropped.push(MomentVector::NAMES[i]);
            }
        }
        dropped
    }
}

/// `(F* − E[F]) / F*` per moment.
pub fn relative_errors(expected: &MomentVector, observed: &MomentVector) -> [f64; 4] {
    std::array::from_fn(|i| (observed[i] - expected[i]) / observed[i])
}

/// Weighted sum of squared relative errors between observed and expected
/// moments.
pub fn objective(expected: &MomentVector, observed: &MomentVector, weights: &MomentWeights) -> Result<f64> {
    weights.validate()?;
    let mut total = 0.0;
    for i in 0..4 {
        let w = weights.0[i];
        if w == 0.0 {
            continue;
        }
        if observed[i] == 0.0 {
            return Err(Error::param(format!(
                "observed {} is zero; set its weight to 0",
                MomentVector::NAMES[i]
            )));
        }
        let r = (observed[i] - expected[i]) / observed[i];
        total += w * r * r;
    }
    Ok(total)
}
