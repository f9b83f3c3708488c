use super::stats::average_ranks;
use crate::data::Label;
use crate::error::{Error, Result};

/// Share of applications accepted when computing R-Precision.
pub const DEFAULT_ACCEPT_FRACTION: f64 = 0.3;

fn check_lengths(labels: &[Label], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::InvalidDataset(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    Ok(())
}

/// Probability that a random bad case receives a higher PD than a random
/// good case (ties count one half), via the rank-sum formula.
pub fn auc(labels: &[Label], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n_bad = labels.iter().filter(|l| l.is_bad()).count();
    let n_good = labels.len() - n_bad;
    if n_bad == 0 {
        return Err(Error::SingleClass("good"));
    }
    if n_good == 0 {
        return Err(Error::SingleClass("bad"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.is_bad())
        .map(|(r, _)| r)
        .sum();
    let nb = n_bad as f64;
    Ok((rank_sum - nb * (nb + 1.0) / 2.0) / (nb * n_good as f64))
}

/// Mean squared error between predicted PD and the 0/1 bad indicator.
pub fn brier(labels: &[Label], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let s: f64 = labels
        .iter()
        .zip(probs)
        .map(|(l, p)| (p - l.target()).powi(2))
        .sum();
    Ok(s / labels.len() as f64)
}

/// Share of good cases among the `floor(accept_fraction * n)` lowest-PD
/// cases; equal scores keep their input order.
pub fn r_precision(labels: &[Label], scores: &[f64], accept_fraction: f64) -> Result<f64> {
    check_lengths(labels, scores)?;
    let take = (accept_fraction * labels.len() as f64 + 1e-9).floor() as usize;
    if !(accept_fraction > 0.0 && accept_fraction <= 1.0) || take == 0 {
        return Err(Error::param(format!(
            "accept fraction {accept_fraction} selects no cases out of {}",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let goods = order[..take]
        .iter()
        .filter(|&&i| !labels[i].is_bad())
        .count();
    Ok(goods as f64 / take as f64)
}
