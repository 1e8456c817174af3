//! Shared statistical primitives.
//!
//! Summations are plain left-to-right folds so that identical inputs give
//! bit-identical results regardless of thread count.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Arithmetic mean. Returns 0.0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Two-pass variance with divisor `n - ddof`.
fn variance_ddof(values: &[f64], ddof: usize) -> f64 {
    let n = values.len();
    if n <= ddof {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    ss / (n - ddof) as f64
}

/// Population variance (divisor n).
pub fn population_variance(values: &[f64]) -> f64 {
    variance_ddof(values, 0)
}

/// Sample variance (divisor n - 1). Zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    variance_ddof(values, 1)
}

/// 0-based ranks with ties assigned the average of their positions.
///
/// `[0.1, 0.3, 0.2]` ranks to `[0, 2, 1]`; four equal values all rank 1.5.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the same value
        let avg = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either argument has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Linear-interpolation quantile (numpy default) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Quantile of an unsorted slice (sorts a copy).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, p)
}

/// Welch's t statistic and Welch-Satterthwaite degrees of freedom from
/// group summaries. Returns `None` when the pooled standard error is zero.
pub fn welch_t(
    mean_a: f64,
    var_a: f64,
    n_a: usize,
    mean_b: f64,
    var_b: f64,
    n_b: usize,
) -> Option<(f64, f64)> {
    let va = var_a / n_a as f64;
    let vb = var_b / n_b as f64;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let denom = va * va / (n_a as f64 - 1.0) + vb * vb / (n_b as f64 - 1.0);
    let df = if denom > 0.0 {
        se2 * se2 / denom
    } else {
        (n_a + n_b - 2) as f64
    };
    Some((t, df))
}

/// Pooled-variance (Student) t statistic with `n_a + n_b - 2` degrees of
/// freedom. Returns `None` when the pooled standard error is zero.
pub fn pooled_t(
    mean_a: f64,
    var_a: f64,
    n_a: usize,
    mean_b: f64,
    var_b: f64,
    n_b: usize,
) -> Option<(f64, f64)> {
    let df = (n_a + n_b - 2) as f64;
    let sp2 = ((n_a as f64 - 1.0) * var_a + (n_b as f64 - 1.0) * var_b) / df;
    let se2 = sp2 * (1.0 / n_a as f64 + 1.0 / n_b as f64);
    if se2 <= 0.0 {
        return None;
    }
    Some(((mean_a - mean_b) / se2.sqrt(), df))
}

/// Two-sided p-value for a t statistic, floored at `P_FLOOR` so that
/// -log p stays finite.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    // symmetric tail: P(|T| >= |t|) = 2 * F(-|t|)
    let p = 2.0 * dist.cdf(-t.abs());
    p.clamp(P_FLOOR, 1.0)
}

/// Floor applied to p-values so their negative logarithm is always finite.
pub const P_FLOOR: f64 = 1e-300;

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).unwrap();
    dist.inverse_cdf(p)
}

/// Kolmogorov-Smirnov statistic of a sample against Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let cdf_hi = (i + 1) as f64 / n;
        let cdf_lo = i as f64 / n;
        d = d.max((cdf_hi - x).abs()).max((x - cdf_lo).abs());
    }
    d
}

/// splitmix64 step, used to derive independent sub-seeds.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for (seed, stream, index) tuples.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream.wrapping_mul(0xa076_1d64_78bd_642f)).wrapping_add(index))
}
