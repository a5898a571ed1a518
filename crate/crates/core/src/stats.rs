//! Rank-sum group tests and single-feature logistic regression.
//!
//! Every randomized procedure draws from ChaCha8 streams keyed by
//! `(seed, stage tag, repeat index)`, so serial and parallel runs agree and
//! one stage's randomness never depends on another's.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::embeddings::{fnv1a64, splitmix64_mix};
use crate::relevance::CompensatedSum;

/// Largest pooled sample size tested by exact enumeration.
pub const EXACT_CUTOFF: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("resampling needs at least {needed} comparison values, found {found}")]
    InsufficientComparison { needed: usize, found: usize },
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("features and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("only one class present")]
    SingleClass,
    #[error("feature has zero variance")]
    ZeroVariance,
    #[error("each class needs at least 2 records to split, smallest has {0}")]
    ClassTooSmall(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadTrainFraction(f64),
}

/// Seed of the `index`-th substream of stage `tag`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let base = splitmix64_mix(seed ^ fnv1a64(tag.as_bytes()));
    splitmix64_mix(base.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

fn substream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// First sample stochastically greater.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSumResult {
    /// Sum of the pooled ranks of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n_a: usize,
    pub n_b: usize,
    /// Every pooled value equal; p is reported as 1.
    pub all_tied: bool,
}

impl RankSumResult {
    /// Mann-Whitney U of the first sample.
    pub fn u(&self) -> f64 {
        let n = self.n_a as f64;
        self.statistic - n * (n + 1.0) / 2.0
    }
}

/// Average ranks of the pooled sample, doubled so ties stay integral.
/// Also returns the tie correction term `sum(t^3 - t)`.
fn doubled_ranks(pooled: &[f64]) -> (Vec<u64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Positions start+1..=end share rank (start + 1 + end) / 2.
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Exact upper-tail probability `P(W2 >= observed)` where W2 is the doubled
/// rank sum of a uniformly random `k`-subset of `ranks`.
fn exact_upper_tail(ranks: &[u64], k: usize, observed: u64) -> f64 {
    let max: usize = ranks.iter().map(|&r| r as usize).sum();
    // counts[j][s]: subsets of size j with doubled sum s.
    let mut counts = vec![vec![0u128; max + 1]; k + 1];
    counts[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for j in (1..=k).rev() {
            for s in (r..=max).rev() {
                counts[j][s] += counts[j - 1][s - r];
            }
        }
    }
    let total: u128 = counts[k].iter().sum();
    let hits: u128 = counts[k][observed as usize..].iter().sum();
    hits as f64 / total as f64
}

fn upper_normal(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Wilcoxon rank-sum test. Exact when the pooled size is at most
/// [`EXACT_CUTOFF`], otherwise normal with tie and continuity correction.
pub fn rank_sum_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<RankSumResult, StatsError> {
    let method = if a.len() + b.len() <= EXACT_CUTOFF {
        TestMethod::Exact
    } else {
        TestMethod::NormalApprox
    };
    rank_sum_test_with(a, b, alternative, method)
}

/// [`rank_sum_test`] with the p-value method forced.
pub fn rank_sum_test_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: TestMethod,
) -> Result<RankSumResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (n_a, n_b) = (a.len(), b.len());
    let n = n_a + n_b;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = doubled_ranks(&pooled);
    let w2: u64 = ranks[..n_a].iter().sum();
    let statistic = w2 as f64 / 2.0;
    let all_tied = pooled.iter().all(|v| *v == pooled[0]);

    let p_value = if all_tied {
        1.0
    } else {
        match method {
            TestMethod::Exact => match alternative {
                Alternative::Greater => exact_upper_tail(&ranks, n_a, w2),
                Alternative::Less => {
                    // Mirror ranks: small sums become large.
                    let top = 2 * (n as u64 + 1);
                    let mirrored: Vec<u64> = ranks.iter().map(|r| top - r).collect();
                    let w2m = mirrored[..n_a].iter().sum();
                    exact_upper_tail(&mirrored, n_a, w2m)
                }
            },
            TestMethod::NormalApprox => {
                let (fa, fb, fnn) = (n_a as f64, n_b as f64, n as f64);
                let u = statistic - fa * (fa + 1.0) / 2.0;
                let mean = fa * fb / 2.0;
                let var = fa * fb / 12.0 * ((fnn + 1.0) - tie_term / (fnn * (fnn - 1.0)));
                let sd = var.sqrt();
                match alternative {
                    Alternative::Greater => upper_normal((u - mean - 0.5) / sd),
                    Alternative::Less => upper_normal((mean - u - 0.5) / sd),
                }
            }
        }
    };
    Ok(RankSumResult {
        statistic,
        p_value: p_value.min(1.0),
        method,
        n_a,
        n_b,
        all_tied,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResampledTest {
    pub repeats: usize,
    pub mean_statistic: f64,
    pub mean_p: f64,
    pub seed: u64,
    pub n: usize,
}

/// Repeatedly subsamples `comparison` down to the size of `target` and
/// tests `target > subsample`, averaging statistic and p.
pub fn resampled_group_test(
    target: &[f64],
    comparison: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<ResampledTest, StatsError> {
    if repeats == 0 {
        return Err(StatsError::NoRepeats);
    }
    if target.is_empty() {
        return Err(StatsError::EmptySample("target"));
    }
    if comparison.len() < target.len() {
        return Err(StatsError::InsufficientComparison {
            needed: target.len(),
            found: comparison.len(),
        });
    }
    let results: Vec<RankSumResult> = (0..repeats)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "resample", i as u64);
            let mut picked = index::sample(&mut rng, comparison.len(), target.len()).into_vec();
            picked.sort_unstable();
            let sub: Vec<f64> = picked.iter().map(|&j| comparison[j]).collect();
            rank_sum_test(target, &sub, Alternative::Greater)
        })
        .collect::<Result<_, _>>()?;
    let stat: CompensatedSum = results.iter().map(|r| r.statistic).collect();
    let p: CompensatedSum = results.iter().map(|r| r.p_value).collect();
    Ok(ResampledTest {
        repeats,
        mean_statistic: stat.value() / repeats as f64,
        mean_p: p.value() / repeats as f64,
        seed,
        n: target.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRegConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRegModel {
    pub weight: f64,
    pub intercept: f64,
    pub mean: f64,
    pub sd: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

impl LogRegModel {
    pub fn probability(&self, x: f64) -> f64 {
        sigmoid(self.intercept + self.weight * (x - self.mean) / self.sd)
    }

    pub fn predict(&self, x: f64) -> bool {
        self.probability(x) >= 0.5
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn log_likelihood(z: &[f64], ys: &[bool], b: f64, w: f64) -> f64 {
    let mut ll = CompensatedSum::default();
    for (&zi, &yi) in z.iter().zip(ys) {
        let eta = b + w * zi;
        ll.add(if yi { eta } else { 0.0 } - softplus(eta));
    }
    ll.value()
}

/// Fits `P(y) = sigmoid(b + w * (x - mean) / sd)` by damped Newton
/// iteration. Step halving keeps the log-likelihood non-decreasing.
pub fn train_logreg(xs: &[f64], ys: &[bool], config: &LogRegConfig) -> Result<LogRegModel, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(StatsError::EmptySample("xs"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let positives = ys.iter().filter(|&&y| y).count();
    if positives == 0 || positives == ys.len() {
        return Err(StatsError::SingleClass);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value()
        / n;
    let sd = var.sqrt();
    if sd.is_nan() || sd <= 0.0 || sd < 1e-12 * mean.abs().max(1.0) {
        return Err(StatsError::ZeroVariance);
    }
    let z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();

    let (mut b, mut w) = (0.0, 0.0);
    let mut ll = log_likelihood(&z, ys, b, w);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&zi, &yi) in z.iter().zip(ys) {
            let p = sigmoid(b + w * zi);
            let r = f64::from(u8::from(yi)) - p;
            let s = p * (1.0 - p);
            g0 += r;
            g1 += r * zi;
            h00 += s;
            h01 += s * zi;
            h11 += s * zi * zi;
        }
        if g0.hypot(g1) < config.gradient_tolerance {
            converged = true;
            break;
        }
        let det = h00 * h11 - h01 * h01;
        if det.is_nan() || det <= f64::MIN_POSITIVE {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            let (nb, nw) = (b + step * d0, w + step * d1);
            let nll = log_likelihood(&z, ys, nb, nw);
            if nll >= ll {
                b = nb;
                w = nw;
                ll = nll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    Ok(LogRegModel {
        weight: w,
        intercept: b,
        mean,
        sd,
        iterations,
        converged,
        log_likelihood: ll,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyResult {
    pub repeats: usize,
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
    pub seed: u64,
    /// Records per class after balancing.
    pub per_class: usize,
}

/// Balanced, stratified repeated train/test evaluation of a logistic model
/// on a single feature.
///
/// Each repeat samples the larger class down to the size of the smaller,
/// splits each class `train_frac` / rest, trains and scores held-out
/// accuracy at probability threshold 0.5.
pub fn repeated_split_accuracy(
    records: &[(f64, bool)],
    repeats: usize,
    train_frac: f64,
    seed: u64,
) -> Result<AccuracyResult, StatsError> {
    if repeats == 0 {
        return Err(StatsError::NoRepeats);
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(StatsError::BadTrainFraction(train_frac));
    }
    let pos: Vec<f64> = records.iter().filter(|r| r.1).map(|r| r.0).collect();
    let neg: Vec<f64> = records.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let m = pos.len().min(neg.len());
    if m < 2 {
        return Err(StatsError::ClassTooSmall(m));
    }
    let n_train = ((m as f64 * train_frac).round() as usize).clamp(1, m - 1);
    let config = LogRegConfig::default();

    let accuracies: Vec<f64> = (0..repeats)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "split", i as u64);
            let p_idx = index::sample(&mut rng, pos.len(), m).into_vec();
            let n_idx = index::sample(&mut rng, neg.len(), m).into_vec();
            let mut train_x = Vec::with_capacity(2 * n_train);
            let mut train_y = Vec::with_capacity(2 * n_train);
            for (class, values, idx) in [(true, &pos, &p_idx), (false, &neg, &n_idx)] {
                for &j in &idx[..n_train] {
                    train_x.push(values[j]);
                    train_y.push(class);
                }
            }
            let model = train_logreg(&train_x, &train_y, &config)?;
            let mut correct = 0usize;
            let mut total = 0usize;
            for (class, values, idx) in [(true, &pos, &p_idx), (false, &neg, &n_idx)] {
                for &j in &idx[n_train..] {
                    correct += usize::from(model.predict(values[j]) == class);
                    total += 1;
                }
            }
            Ok(correct as f64 / total as f64)
        })
        .collect::<Result<_, StatsError>>()?;
    let sum: CompensatedSum = accuracies.iter().copied().collect();
    Ok(AccuracyResult {
        repeats,
        mean_accuracy: sum.value() / repeats as f64,
        accuracies,
        seed,
        per_class: m,
    })
}
