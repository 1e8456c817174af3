//! Per-run score variance and its effect on ranking and thresholding.
//!
//! Rank-change and split-disagreement statistics compare two disjoint
//! k-run subsets. When the number of distinct unordered disjoint pairs
//! is at most `n_trials` the pairs are enumerated exhaustively (exact
//! statistics); otherwise `n_trials` pairs are sampled without
//! replacement within each trial. Both paths are deterministic given
//! the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{mean_over_runs, ScoreMatrix, ScoreVector};
use crate::stats::{average_ranks, derive_seed, mean, quantile, quantile_sorted};

/// One bin of the variance-band summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BandBin {
    /// Mean rank position of the bin's examples in the mean-score order.
    pub mean_rank: f64,
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

/// Pooled per-run score quantiles for examples binned by mean-score rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSummary {
    pub bin_size: usize,
    pub ci_level: f64,
    pub bins: Vec<BandBin>,
}

/// Stability statistics at one subset size k.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPoint {
    pub k: usize,
    pub median_rank_change: f64,
    pub p95_rank_change: f64,
    pub disagreement: f64,
}

/// Stability statistics over a range of subset sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCurve {
    pub n_trials: usize,
    pub points: Vec<StabilityPoint>,
}

/// Sort examples by canonical mean score and pool per-run values into
/// consecutive bins, summarized by empirical quantiles at `(1 ± ci)/2`.
pub fn confidence_bands(
    matrix: &ScoreMatrix,
    bin_size: usize,
    ci_level: f64,
) -> Result<BandSummary> {
    if matrix.n_runs() < 2 {
        return Err(Error::InsufficientRuns {
            required: 2,
            found: matrix.n_runs(),
        });
    }
    let n = matrix.n_examples();
    if bin_size == 0 || bin_size > n {
        return Err(Error::BinTooLarge {
            bin_size,
            n_examples: n,
        });
    }
    if !(0.0..1.0).contains(&ci_level) {
        return Err(Error::InvalidConfig {
            msg: format!("ci_level must lie in [0, 1), got {ci_level}"),
        });
    }
    let means = matrix.canonical_mean();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        means.values[a]
            .partial_cmp(&means.values[b])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let sign = matrix.kind().polarity().sign();
    let r = matrix.n_runs();
    let lo_q = (1.0 - ci_level) / 2.0;
    let hi_q = (1.0 + ci_level) / 2.0;
    let mut bins = Vec::with_capacity(n.div_ceil(bin_size));
    let mut pooled = Vec::with_capacity(bin_size * r);
    for (bin_idx, chunk) in order.chunks(bin_size).enumerate() {
        pooled.clear();
        for &i in chunk {
            for run in 0..r {
                pooled.push(sign * matrix.value(i, run));
            }
        }
        pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let start = bin_idx * bin_size;
        let mean_rank = (start..start + chunk.len()).sum::<usize>() as f64 / chunk.len() as f64;
        bins.push(BandBin {
            mean_rank,
            lower: quantile_sorted(&pooled, lo_q),
            mean: mean(&pooled),
            upper: quantile_sorted(&pooled, hi_q),
        });
    }
    Ok(BandSummary {
        bin_size,
        ci_level,
        bins,
    })
}

/// All distinct unordered pairs of disjoint k-subsets of `0..r`, or
/// `n_trials` sampled pairs when enumeration would exceed that count.
pub(crate) fn disjoint_pairs(
    r: usize,
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k == 0 {
        return Err(Error::InvalidConfig {
            msg: "k must be positive".into(),
        });
    }
    if 2 * k > r {
        return Err(Error::SubsetTooLarge {
            two_k: 2 * k,
            n_runs: r,
        });
    }
    if n_trials == 0 {
        return Err(Error::InvalidConfig {
            msg: "n_trials must be positive".into(),
        });
    }
    let count = unordered_pair_count(r, k);
    if count.is_some_and(|c| c <= n_trials as u128) {
        let mut pairs = Vec::new();
        let mut a = Vec::with_capacity(k);
        enumerate_subsets(r, k, 0, &mut a, &mut |a| {
            let rest: Vec<usize> = (0..r).filter(|i| !a.contains(i)).collect();
            let mut b = Vec::with_capacity(k);
            enumerate_subsets_of(&rest, k, 0, &mut b, &mut |b| {
                // count each unordered pair once: disjoint sets have
                // distinct minima
                if a[0] < b[0] {
                    pairs.push((a.to_vec(), b.to_vec()));
                }
            });
        });
        Ok(pairs)
    } else {
        let mut pairs = Vec::with_capacity(n_trials);
        let mut indices: Vec<usize> = (0..r).collect();
        for trial in 0..n_trials {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5041_4952, trial as u64));
            indices.shuffle(&mut rng);
            let mut a = indices[..k].to_vec();
            let mut b = indices[k..2 * k].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            pairs.push((a, b));
        }
        Ok(pairs)
    }
}

fn unordered_pair_count(r: usize, k: usize) -> Option<u128> {
    let c1 = binomial(r, k)?;
    let c2 = binomial(r - k, k)?;
    Some(c1.checked_mul(c2)? / 2)
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    Some(acc)
}

fn enumerate_subsets(r: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..r {
        cur.push(i);
        enumerate_subsets(r, k, i + 1, cur, f);
        cur.pop();
    }
}

fn enumerate_subsets_of(
    items: &[usize],
    k: usize,
    start: usize,
    cur: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..items.len() {
        cur.push(items[i]);
        enumerate_subsets_of(items, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Absolute rank differences between two score vectors, appended to `out`.
pub(crate) fn pair_rank_changes(a: &ScoreVector, b: &ScoreVector, out: &mut Vec<f64>) {
    let ra = average_ranks(&a.values);
    let rb = average_ranks(&b.values);
    out.extend(ra.iter().zip(rb.iter()).map(|(x, y)| (x - y).abs()));
}

/// Fraction of examples falling on different sides of each vector's own
/// percentile split. Examples equal to the threshold count as hard.
pub(crate) fn split_disagreement(a: &ScoreVector, b: &ScoreVector, percentile: f64) -> f64 {
    let ta = quantile(&a.values, percentile);
    let tb = quantile(&b.values, percentile);
    let n = a.values.len();
    let differing = (0..n)
        .filter(|&i| (a.values[i] >= ta) != (b.values[i] >= tb))
        .count();
    differing as f64 / n as f64
}

/// Median and 95th percentile of absolute rank change between mean
/// scores of two disjoint k-run subsets, pooled over examples and trials.
pub fn rank_change(
    matrix: &ScoreMatrix,
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let pairs = disjoint_pairs(matrix.n_runs(), k, n_trials, seed)?;
    let mut pooled = Vec::with_capacity(pairs.len() * matrix.n_examples());
    for (sa, sb) in &pairs {
        let ma = mean_over_runs(matrix, sa)?;
        let mb = mean_over_runs(matrix, sb)?;
        pair_rank_changes(&ma, &mb, &mut pooled);
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite ranks"));
    Ok((
        quantile_sorted(&pooled, 0.5),
        quantile_sorted(&pooled, 0.95),
    ))
}

/// Mean fraction of examples that change sides of a percentile split
/// between two disjoint k-run mean estimates.
pub fn threshold_split_disagreement(
    matrix: &ScoreMatrix,
    k: usize,
    percentile: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0 < percentile && percentile < 1.0) {
        return Err(Error::InvalidConfig {
            msg: format!("percentile must lie in (0, 1), got {percentile}"),
        });
    }
    let pairs = disjoint_pairs(matrix.n_runs(), k, n_trials, seed)?;
    let mut total = 0.0;
    for (sa, sb) in &pairs {
        let ma = mean_over_runs(matrix, sa)?;
        let mb = mean_over_runs(matrix, sb)?;
        total += split_disagreement(&ma, &mb, percentile);
    }
    Ok(total / pairs.len() as f64)
}

/// Rank-change and disagreement statistics over a range of subset sizes.
pub fn stability_curve(
    matrix: &ScoreMatrix,
    ks: &[usize],
    percentile: f64,
    n_trials: usize,
    seed: u64,
) -> Result<StabilityCurve> {
    let points = ks
        .iter()
        .map(|&k| {
            let (median, p95) = rank_change(matrix, k, n_trials, seed)?;
            let disagreement =
                threshold_split_disagreement(matrix, k, percentile, n_trials, seed)?;
            Ok(StabilityPoint {
                k,
                median_rank_change: median,
                p95_rank_change: p95,
                disagreement,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityCurve { n_trials, points })
}
