//! The kickout measure and the protocol that produces its inputs.
//!
//! A scorer trained on part of the accepts approves the lowest-PD share `mu`
//! of the remaining accepts (`A1`). A second scorer trained after reject
//! inference approves the same share of those accepts pooled with held-out
//! rejects (`A2`). Cases in `A1` but not in `A2` are kicked out; their known
//! labels drive the measure, so reject labels are never needed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{stratified_split, CreditDataset, PartitionedData};
use crate::error::{Error, Result};
use crate::learners::{fit_gbt_with_holdout, GbtParams, ProbabilisticModel};
use crate::rng::{derive_seed, rng};
use crate::strategies::{run_strategy, AugmentedTrainingSet, StrategySpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickoutInputs {
    /// Kicked-out bad cases.
    pub k_bad: usize,
    /// Kicked-out good cases.
    pub k_good: usize,
    /// Bad cases in the original accepted pool `A1`.
    pub s_bad: usize,
    /// Share of bad cases in `A1`.
    pub p_bad: f64,
}

impl KickoutInputs {
    /// Derives `p_bad` from the size of `A1`.
    pub fn from_counts(k_bad: usize, k_good: usize, s_bad: usize, accepted: usize) -> Self {
        Self {
            k_bad,
            k_good,
            s_bad,
            p_bad: s_bad as f64 / accepted as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.s_bad == 0 {
            return Err(Error::param("kickout undefined: no bad cases in A1"));
        }
        if !(self.p_bad > 0.0 && self.p_bad < 1.0) {
            return Err(Error::param(format!(
                "kickout undefined: bad share {} outside (0,1)",
                self.p_bad
            )));
        }
        if self.k_bad > self.s_bad {
            return Err(Error::param("more kicked-out bads than bads in A1"));
        }
        let goods = (self.s_bad as f64 / self.p_bad).round() as usize - self.s_bad;
        if self.k_good > goods {
            return Err(Error::param("more kicked-out goods than goods in A1"));
        }
        Ok(())
    }
}

/// `(K_B/p - K_G/(1-p)) / (S_B/p)`, evaluated as
/// `(K_B - K_G p/(1-p)) / S_B`. Ranges over `[-1, 1]`.
pub fn kickout(inputs: &KickoutInputs) -> Result<f64> {
    inputs.validate()?;
    let p = inputs.p_bad;
    let value =
        (inputs.k_bad as f64 - inputs.k_good as f64 * p / (1.0 - p)) / inputs.s_bad as f64;
    Ok(value.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KickoutProtocolConfig {
    /// Acceptance rate applied to both holdout pools.
    pub mu: f64,
    /// Share of accepts used to train the scorers.
    pub accept_split: f64,
    /// Share of rejects handed to the strategy; the rest join the holdout.
    pub reject_split: f64,
    pub scorer: GbtParams,
    pub seed: u64,
}

impl Default for KickoutProtocolConfig {
    fn default() -> Self {
        Self {
            mu: 0.7,
            accept_split: 0.7,
            reject_split: 0.7,
            scorer: GbtParams::default(),
            seed: 0,
        }
    }
}

impl KickoutProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::param("mu must lie in (0, 1]"));
        }
        if !(self.accept_split > 0.0 && self.accept_split < 1.0) {
            return Err(Error::param("accept_split must lie in (0, 1)"));
        }
        if !(self.reject_split > 0.0 && self.reject_split <= 1.0) {
            return Err(Error::param("reject_split must lie in (0, 1]"));
        }
        self.scorer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KickoutOutcome {
    /// `None` when `A1` holds no bad (or only bad) cases.
    pub value: Option<f64>,
    pub k_bad: usize,
    pub k_good: usize,
    pub s_bad: usize,
    pub a1_size: usize,
    pub a2_size: usize,
    /// Rejects that made it into `A2`.
    pub rejects_accepted: usize,
}

/// Ids of the `floor(mu * n)` lowest scores (stable on ties).
fn accept_lowest(ids: &[String], scores: &[f64], mu: f64) -> Vec<String> {
    let take = ((mu * ids.len() as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order[..take].iter().map(|&i| ids[i].clone()).collect()
}

fn split_rejects(rejects: &CreditDataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..rejects.len()).collect();
    idx.shuffle(&mut rng(seed));
    let cut = ((fraction * idx.len() as f64).round() as usize).min(idx.len());
    let mut train = idx[..cut].to_vec();
    let mut hold = idx[cut..].to_vec();
    train.sort_unstable();
    hold.sort_unstable();
    (train, hold)
}

/// Runs the protocol with an arbitrary labeling routine
/// `strategy(train_accepts, train_rejects, seed)`.
pub fn kickout_protocol_with<F>(
    partition: &PartitionedData,
    cfg: &KickoutProtocolConfig,
    strategy: F,
) -> Result<KickoutOutcome>
where
    F: FnOnce(&CreditDataset, &CreditDataset, u64) -> Result<AugmentedTrainingSet>,
{
    cfg.validate()?;
    let accepts = &partition.accepts;
    let rejects = &partition.rejects;
    if accepts.is_empty() {
        return Err(Error::Empty("accepts"));
    }
    if rejects.is_empty() {
        return Err(Error::Empty("rejects"));
    }
    let (a_tr, a_ho) = stratified_split(accepts, cfg.accept_split, derive_seed(cfg.seed, &[1]))?;
    let (r_tr, r_ho) = split_rejects(rejects, cfg.reject_split, derive_seed(cfg.seed, &[2]));
    let a_train = accepts.select(&a_tr);
    let a_hold = accepts.select(&a_ho);
    let r_train = rejects.select(&r_tr);
    let r_hold = rejects.select(&r_ho);
    let scorer_seed = derive_seed(cfg.seed, &[3]);

    let c1 = fit_gbt_with_holdout(&a_train, &cfg.scorer, scorer_seed)?;
    let s1 = c1.predict_proba(a_hold.features().view())?;
    let a1 = accept_lowest(a_hold.ids(), &s1, cfg.mu);

    let augmented = strategy(&a_train, &r_train, derive_seed(cfg.seed, &[4]))?;
    let c2 = fit_gbt_with_holdout(&augmented.dataset, &cfg.scorer, scorer_seed)?;
    let pool = a_hold.without_labels().concat(&r_hold)?;
    let s2 = c2.predict_proba(pool.features().view())?;
    let a2 = accept_lowest(pool.ids(), &s2, cfg.mu);

    let a2_set: HashSet<&str> = a2.iter().map(String::as_str).collect();
    let hold_labels = a_hold.require_labels()?;
    let label_of: std::collections::HashMap<&str, crate::data::Label> = a_hold
        .ids()
        .iter()
        .map(String::as_str)
        .zip(hold_labels.iter().copied())
        .collect();
    let s_bad = a1.iter().filter(|id| label_of[id.as_str()].is_bad()).count();
    let (mut k_bad, mut k_good) = (0, 0);
    for id in a1.iter().filter(|id| !a2_set.contains(id.as_str())) {
        if label_of[id.as_str()].is_bad() {
            k_bad += 1;
        } else {
            k_good += 1;
        }
    }
    let reject_ids: HashSet<&str> = r_hold.ids().iter().map(String::as_str).collect();
    let rejects_accepted = a2.iter().filter(|id| reject_ids.contains(id.as_str())).count();
    let value = if s_bad == 0 || s_bad == a1.len() {
        None
    } else {
        Some(kickout(&KickoutInputs::from_counts(k_bad, k_good, s_bad, a1.len()))?)
    };
    Ok(KickoutOutcome {
        value,
        k_bad,
        k_good,
        s_bad,
        a1_size: a1.len(),
        a2_size: a2.len(),
        rejects_accepted,
    })
}

/// Kickout of `strategy` on `partition`.
pub fn kickout_protocol(
    partition: &PartitionedData,
    strategy: &StrategySpec,
    cfg: &KickoutProtocolConfig,
) -> Result<KickoutOutcome> {
    let scorer = cfg.scorer.clone();
    kickout_protocol_with(partition, cfg, |a, r, seed| {
        run_strategy(strategy, a, r, &scorer, seed)
    })
}
