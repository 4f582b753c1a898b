//! Nonparametric tests and multiple-comparison correction.
//!
//! All tests are two-sided. Ties get midranks. Exact null distributions are
//! used for small untied samples (Wilcoxon: at most 25 nonzero differences;
//! Mann-Whitney: at most 12 observations in total); otherwise a normal
//! approximation with continuity and tie correction is used.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

pub const WILCOXON_EXACT_MAX: usize = 25;
pub const MANN_WHITNEY_EXACT_MAX: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("at least two groups are required")]
    TooFewGroups,
    #[error("non-finite observation")]
    NonFinite,
    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    WilcoxonSignedRank,
    KruskalWallis,
    MannWhitneyU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    /// Wilcoxon: [pairs, nonzero differences]; Mann-Whitney: [n_a, n_b];
    /// Kruskal-Wallis: group sizes.
    pub n: Vec<usize>,
    pub exact: bool,
    /// No variation to test (all differences zero, all values tied).
    pub degenerate: bool,
}

/// Zero-difference handling for the signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Discard zero differences before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then drop their ranks.
    Pratt,
}

/// Midranks (1-based) and the sizes of tie groups larger than one.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<(), StatsError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Two-sided p from a standardized distance, with continuity correction
/// already applied by the caller.
fn normal_two_sided(z: f64) -> f64 {
    let z = z.max(0.0);
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Number of subsets of {1..n} with each possible sum.
fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<StatResult, StatsError> {
    wilcoxon_signed_rank_with(pairs, ZeroMethod::Wilcox)
}

/// Signed-rank test on `final - draft` differences.
pub fn wilcoxon_signed_rank_with(pairs: &[(f64, f64)], zero_method: ZeroMethod) -> Result<StatResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(pairs.iter().flat_map(|&(a, b)| [a, b]))?;
    let diffs: Vec<f64> = pairs.iter().map(|&(draft, final_)| final_ - draft).collect();
    let nonzero = diffs.iter().filter(|d| **d != 0.0).count();
    let degenerate = |n: Vec<usize>| StatResult {
        method: Method::WilcoxonSignedRank,
        statistic: 0.0,
        p_value: 1.0,
        n,
        exact: false,
        degenerate: true,
    };
    if nonzero == 0 {
        return Ok(degenerate(vec![pairs.len(), 0]));
    }

    let ranked: Vec<f64> = match zero_method {
        ZeroMethod::Wilcox => diffs.iter().copied().filter(|d| *d != 0.0).collect(),
        ZeroMethod::Pratt => diffs.clone(),
    };
    let (ranks, ties) = midranks(&ranked.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let mut w_plus = 0.0;
    let mut rank_sum = 0.0;
    let mut rank_sq = 0.0;
    for (&d, &r) in ranked.iter().zip(&ranks) {
        if d == 0.0 {
            continue;
        }
        rank_sum += r;
        rank_sq += r * r;
        if d > 0.0 {
            w_plus += r;
        }
    }
    let w_minus = rank_sum - w_plus;
    let statistic = w_plus.min(w_minus);
    let has_zero_ranks = ranked.len() != nonzero;

    if nonzero <= WILCOXON_EXACT_MAX && ties.is_empty() && !has_zero_ranks {
        let counts = signed_rank_counts(nonzero);
        let total = 2f64.powi(nonzero as i32);
        let w = statistic.round() as usize;
        let tail: f64 = counts[..=w].iter().sum();
        return Ok(StatResult {
            method: Method::WilcoxonSignedRank,
            statistic,
            p_value: (2.0 * tail / total).min(1.0),
            n: vec![pairs.len(), nonzero],
            exact: true,
            degenerate: false,
        });
    }

    let mean = rank_sum / 2.0;
    let sd = (rank_sq / 4.0).sqrt();
    if sd == 0.0 {
        return Ok(degenerate(vec![pairs.len(), nonzero]));
    }
    let z = ((w_plus - mean).abs() - 0.5) / sd;
    Ok(StatResult {
        method: Method::WilcoxonSignedRank,
        statistic,
        p_value: normal_two_sided(z),
        n: vec![pairs.len(), nonzero],
        exact: false,
        degenerate: false,
    })
}

/// Counts of label arrangements by U for samples of size `na`, `nb`:
/// `out[u]` is the number of ways to pick the `na` positions of sample A
/// among `na + nb` ranked slots such that A's U statistic equals `u`.
fn mann_whitney_counts(na: usize, nb: usize) -> Vec<f64> {
    let max_u = na * nb;
    // dp[j][u]: arrangements of the slots processed so far with j A-items
    // and statistic u.
    let mut dp = vec![vec![0.0; max_u + 1]; na + 1];
    dp[0][0] = 1.0;
    for slot in 0..na + nb {
        let mut next = vec![vec![0.0; max_u + 1]; na + 1];
        for j in 0..=na.min(slot) {
            let b_before = slot - j;
            if b_before > nb {
                continue;
            }
            for u in 0..=max_u {
                let c = dp[j][u];
                if c == 0.0 {
                    continue;
                }
                if b_before < nb {
                    next[j][u] += c;
                }
                if j < na && u + b_before <= max_u {
                    next[j + 1][u + b_before] += c;
                }
            }
        }
        dp = next;
    }
    dp.swap_remove(na)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<StatResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a.iter().chain(b).copied())?;
    let (na, nb) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&combined);
    let rank_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let statistic = u_a.min(u_b);
    let n = na + nb;

    if n <= MANN_WHITNEY_EXACT_MAX && ties.is_empty() {
        let counts = mann_whitney_counts(na, nb);
        let total: f64 = counts.iter().sum();
        let u = statistic.round() as usize;
        let tail: f64 = counts[..=u].iter().sum();
        return Ok(StatResult {
            method: Method::MannWhitneyU,
            statistic,
            p_value: (2.0 * tail / total).min(1.0),
            n: vec![na, nb],
            exact: true,
            degenerate: false,
        });
    }

    let nf = n as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term);
    let mean = (na * nb) as f64 / 2.0;
    if var <= 0.0 {
        return Ok(StatResult {
            method: Method::MannWhitneyU,
            statistic,
            p_value: 1.0,
            n: vec![na, nb],
            exact: false,
            degenerate: true,
        });
    }
    let z = ((u_a - mean).abs() - 0.5) / var.sqrt();
    Ok(StatResult {
        method: Method::MannWhitneyU,
        statistic,
        p_value: normal_two_sided(z),
        n: vec![na, nb],
        exact: false,
        degenerate: false,
    })
}

/// Kruskal-Wallis H with tie correction; p from chi-square with
/// `groups - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<StatResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups);
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(StatsError::EmptySample);
    }
    check_finite(groups.iter().flatten().copied())?;
    let combined: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = combined.len() as f64;
    let (ranks, ties) = midranks(&combined);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let correction = 1.0 - ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * n * n - n);
    let sizes = groups.iter().map(Vec::len).collect();
    if correction <= 0.0 {
        return Ok(StatResult {
            method: Method::KruskalWallis,
            statistic: 0.0,
            p_value: 1.0,
            n: sizes,
            exact: false,
            degenerate: true,
        });
    }
    let h = (h / correction).max(0.0);
    Ok(StatResult {
        method: Method::KruskalWallis,
        statistic: h,
        p_value: chi_square_upper_tail(h, groups.len() - 1),
        n: sizes,
        exact: false,
        degenerate: false,
    })
}

/// Holm step-down adjustment; output is in input order.
pub fn holm_correction(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidPValue(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// Upper tail of the chi-square distribution, Q(df/2, x/2).
pub fn chi_square_upper_tail(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Linear-interpolation quantile (the common "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    Some(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
