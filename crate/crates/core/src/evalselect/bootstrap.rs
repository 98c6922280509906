use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest number of resamples [`exact_rank_distribution`] will enumerate.
const MAX_ENUMERATION: usize = 1_000_000;

/// Rank histograms over bootstrap replicates. Average ranks are multiples
/// of 0.5, so slot `s` counts rank `1 + s / 2` (see [`rank_slot`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    pub replicates: usize,
    /// `histogram[a][s]`: replicates in which algorithm `a` had rank slot `s`.
    pub histogram: Vec<Vec<usize>>,
    pub mean_rank: Vec<f64>,
}

impl RankDistribution {
    /// Share of replicates in which algorithm `a` ranked exactly first.
    pub fn first_place_frequency(&self, a: usize) -> f64 {
        self.histogram[a][0] as f64 / self.replicates as f64
    }
}

pub fn rank_slot(rank: f64) -> usize {
    (2.0 * (rank - 1.0)).round() as usize
}

/// Ranks 1..K by descending value; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check(scores: &[Vec<f64>]) -> Result<usize> {
    if scores.len() < 2 {
        return Err(Error::Invalid(format!("ranking needs at least 2 algorithms, got {}", scores.len())));
    }
    let n = scores[0].len();
    if n == 0 {
        return Err(Error::EmptyInput("no cases to rank on"));
    }
    if scores.iter().any(|s| s.len() != n) {
        return Err(Error::ShapeMismatch("algorithms scored on different numbers of cases".into()));
    }
    Ok(n)
}

fn ranks_for(scores: &[Vec<f64>], sample: &[usize]) -> Vec<f64> {
    let means: Vec<f64> =
        scores.iter().map(|s| sample.iter().map(|&i| s[i]).sum::<f64>() / sample.len() as f64).collect();
    average_ranks(&means)
}

/// Resample cases with replacement `replicates` times; replicate `r` draws
/// from `rng.child(r)`, so the result does not depend on thread count.
pub fn bootstrap_ranking(scores: &[Vec<f64>], replicates: usize, rng: &RngStream) -> Result<RankDistribution> {
    let n = check(scores)?;
    if replicates == 0 {
        return Err(Error::Invalid("at least one replicate is required".into()));
    }
    let k = scores.len();
    let per_replicate: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut child = rng.child(r as u64);
            let sample: Vec<usize> = (0..n).map(|_| child.index(n)).collect();
            ranks_for(scores, &sample)
        })
        .collect();
    let mut histogram = vec![vec![0usize; 2 * k - 1]; k];
    let mut total = vec![0.0; k];
    for ranks in &per_replicate {
        for (a, &r) in ranks.iter().enumerate() {
            histogram[a][rank_slot(r)] += 1;
            total[a] += r;
        }
    }
    let mean_rank = total.into_iter().map(|t| t / replicates as f64).collect();
    Ok(RankDistribution { replicates, histogram, mean_rank })
}

/// Exact rank-slot probabilities over all `n^n` equally likely resamples.
pub fn exact_rank_distribution(scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = check(scores)?;
    let total = n
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_ENUMERATION)
        .ok_or_else(|| Error::Invalid(format!("{n} cases give too many resamples to enumerate")))?;
    let k = scores.len();
    let mut probs = vec![vec![0.0; 2 * k - 1]; k];
    let mut sample = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for s in sample.iter_mut() {
            *s = c % n;
            c /= n;
        }
        for (a, r) in ranks_for(scores, &sample).into_iter().enumerate() {
            probs[a][rank_slot(r)] += 1.0 / total as f64;
        }
    }
    Ok(probs)
}
