//! Kendall's tau-b with a tie-corrected significance test.
//!
//! Pair counts come from Knight's sort-and-merge algorithm, O(n log n).
//! The exact null distribution for untied data is built from the
//! inversion-count (Mahonian) recurrence rather than by listing permutations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KendallError {
    #[error("length mismatch: x has {x} values, y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
    #[error("tau is undefined because every value in {0} is tied")]
    Degenerate(&'static str),
    #[error("the exact null distribution requires untied data")]
    TiesPresent,
    #[error("exact enumeration supports at most {max} observations, got {n}")]
    TooLargeForExact { n: usize, max: usize },
}

/// Concordance counts for one pair of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n: usize,
    pub concordant: u64,
    pub discordant: u64,
    /// Pairs tied in x (including those also tied in y).
    pub x_ties: u64,
    /// Pairs tied in y (including those also tied in x).
    pub y_ties: u64,
    /// Pairs tied in both.
    pub joint_ties: u64,
}

impl PairCounts {
    pub fn total_pairs(&self) -> u64 {
        let n = self.n as u64;
        n * (n - 1) / 2
    }

    /// C - D.
    pub fn score(&self) -> i64 {
        self.concordant as i64 - self.discordant as i64
    }
}

/// Tie-group moments for one sample.
#[derive(Debug, Clone, Copy, Default)]
struct TieMoments {
    /// sum t(t-1)
    pairs2: f64,
    /// sum t(t-1)(2t+5)
    var_term: f64,
    /// sum t(t-1)(t-2)
    triples: f64,
}

impl TieMoments {
    fn add_group(&mut self, t: usize) {
        let t = t as f64;
        self.pairs2 += t * (t - 1.0);
        self.var_term += t * (t - 1.0) * (2.0 * t + 5.0);
        self.triples += t * (t - 1.0) * (t - 2.0);
    }
}

fn tie_group_sizes(sorted: &[f64]) -> impl Iterator<Item = usize> + '_ {
    sorted.chunk_by(|a, b| a == b).map(<[f64]>::len)
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    tie_group_sizes(sorted)
        .map(|t| (t as u64) * (t as u64 - 1) / 2)
        .sum()
}

fn validate(x: &[f64], y: &[f64]) -> Result<(), KendallError> {
    if x.len() != y.len() {
        return Err(KendallError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(KendallError::TooFew(x.len()));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(KendallError::NonFinite(i));
    }
    Ok(())
}

/// Counts concordant, discordant and tied pairs.
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts, KendallError> {
    validate(x, y)?;
    let n = x.len();
    // `+ 0.0` folds -0.0 into 0.0 so total_cmp agrees with ==.
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(y).map(|(&a, &b)| (a + 0.0, b + 0.0)).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let x_ties = tied_pairs(&xs);
    let joint_ties: u64 = pairs
        .chunk_by(|a, b| a == b)
        .map(|g| (g.len() as u64) * (g.len() as u64 - 1) / 2)
        .sum();

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let discordant = sort_counting_inversions(&mut ys);
    let y_ties = tied_pairs(&ys);

    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant = total + joint_ties - x_ties - y_ties - discordant;
    Ok(PairCounts {
        n,
        concordant,
        discordant,
        x_ties,
        y_ties,
        joint_ties,
    })
}

/// Bottom-up merge sort returning the number of strict inversions.
fn sort_counting_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    let mut buf = values.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    let (mut src, mut dst) = (values.to_vec(), std::mem::take(&mut buf));
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if src[j] < src[i] {
                    swaps += (mid - i) as u64;
                    dst[k] = src[j];
                    j += 1;
                } else {
                    dst[k] = src[i];
                    i += 1;
                }
                k += 1;
            }
            dst[k..k + (mid - i)].copy_from_slice(&src[i..mid]);
            k += mid - i;
            dst[k..k + (end - j)].copy_from_slice(&src[j..end]);
            start = end;
        }
        std::mem::swap(&mut src, &mut dst);
        width *= 2;
    }
    values.copy_from_slice(&src);
    swaps
}

fn tau_from_counts(c: &PairCounts) -> Result<f64, KendallError> {
    let n0 = c.total_pairs() as f64;
    let dx = n0 - c.x_ties as f64;
    let dy = n0 - c.y_ties as f64;
    if dx == 0.0 {
        return Err(KendallError::Degenerate("x"));
    }
    if dy == 0.0 {
        return Err(KendallError::Degenerate("y"));
    }
    let tau = c.score() as f64 / (dx * dy).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// Kendall's tau-b: `(C - D) / sqrt((n0 - n1)(n0 - n2))`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, KendallError> {
    tau_from_counts(&pair_counts(x, y)?)
}

/// Tau-b together with its two-sided normal-approximation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTest {
    pub n: usize,
    pub tau: f64,
    /// C - D.
    pub score: i64,
    /// Null variance of C - D, corrected for ties in both samples.
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
}

fn moments(values: &[f64]) -> TieMoments {
    let mut sorted: Vec<f64> = values.iter().map(|v| v + 0.0).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut m = TieMoments::default();
    for t in tie_group_sizes(&sorted).filter(|&t| t > 1) {
        m.add_group(t);
    }
    m
}

/// Null variance of `S = C - D` with ties in either sample.
pub fn score_variance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (tx, ty) = (moments(x), moments(y));
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let v1 = tx.pairs2 * ty.pairs2 / (2.0 * n * (n - 1.0));
    let v2 = if n > 2.0 {
        tx.triples * ty.triples / (9.0 * n * (n - 1.0) * (n - 2.0))
    } else {
        0.0
    };
    (v0 - tx.var_term - ty.var_term) / 18.0 + v1 + v2
}

/// Two-sided p-value for `|Z| >= |z|` under a standard normal.
pub fn two_sided_normal_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Tau-b and the two-sided p-value under independence.
///
/// The statistic is `S = C - D` standardized by its tie-corrected null
/// variance, with a continuity correction of one unit toward zero.
pub fn kendall_test(x: &[f64], y: &[f64]) -> Result<KendallTest, KendallError> {
    let counts = pair_counts(x, y)?;
    let tau = tau_from_counts(&counts)?;
    let score = counts.score();
    let variance = score_variance(x, y);
    if variance <= 0.0 {
        return Err(KendallError::Degenerate("x and y"));
    }
    let corrected = (score.unsigned_abs() as f64 - 1.0).max(0.0) * (score.signum() as f64);
    let z = corrected / variance.sqrt();
    Ok(KendallTest {
        n: counts.n,
        tau,
        score,
        variance,
        z,
        p_value: two_sided_normal_p(z),
    })
}

/// `(z, p)` for the pair of samples; see [`kendall_test`].
pub fn tau_p_value(x: &[f64], y: &[f64]) -> Result<(f64, f64), KendallError> {
    let t = kendall_test(x, y)?;
    Ok((t.z, t.p_value))
}

/// Largest sample size whose permutation count fits the exact path.
pub const MAX_EXACT_N: usize = 30;

/// Number of permutations of `n` items with exactly `k` inversions, for
/// every `k` in `0..=n(n-1)/2`.
pub fn inversion_distribution(n: usize) -> Vec<u128> {
    let max = n * n.saturating_sub(1) / 2;
    let mut dist = vec![0u128; max + 1];
    dist[0] = 1;
    for m in 2..=n {
        // Inserting the m-th item adds 0..m-1 inversions.
        let reach = m * (m - 1) / 2;
        let mut next = vec![0u128; max + 1];
        let mut window = 0u128;
        for k in 0..=reach {
            window += dist[k];
            if k >= m {
                window -= dist[k - m];
            }
            next[k] = window;
        }
        dist = next;
    }
    dist
}

/// Exact two-sided p-value `P(|S| >= |s|)` over all `n!` equally likely
/// orderings. Only valid without ties.
pub fn exact_p_value(x: &[f64], y: &[f64]) -> Result<f64, KendallError> {
    let counts = pair_counts(x, y)?;
    if counts.x_ties > 0 || counts.y_ties > 0 {
        return Err(KendallError::TiesPresent);
    }
    if counts.n > MAX_EXACT_N {
        return Err(KendallError::TooLargeForExact {
            n: counts.n,
            max: MAX_EXACT_N,
        });
    }
    let observed = counts.score().unsigned_abs();
    let total_pairs = counts.total_pairs() as i64;
    let dist = inversion_distribution(counts.n);
    let total: u128 = dist.iter().sum();
    let extreme: u128 = dist
        .iter()
        .enumerate()
        .filter(|&(inv, _)| (total_pairs - 2 * inv as i64).unsigned_abs() >= observed)
        .map(|(_, &c)| c)
        .sum();
    Ok(extreme as f64 / total as f64)
}
