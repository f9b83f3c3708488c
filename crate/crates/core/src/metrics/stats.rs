use ndarray::Array2;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean(i+1..=j)
        let r = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Mean within-block rank per treatment (rank 1 = smallest value).
    pub mean_ranks: Vec<f64>,
    pub k: usize,
    pub n_blocks: usize,
}

/// Friedman rank-sum test on a `k treatments x N blocks` matrix.
pub fn friedman_test(values: &Array2<f64>) -> Result<FriedmanResult> {
    let (k, n) = values.dim();
    if k < 3 || n < 2 {
        return Err(Error::param(format!(
            "Friedman test needs k >= 3 treatments and N >= 2 blocks, got k={k}, N={n}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    for block in values.columns() {
        let r = average_ranks(&block.to_vec());
        for (s, v) in rank_sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    let nf = n as f64;
    let kf = k as f64;
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / nf).collect();
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);
    let statistic = statistic.max(0.0);
    let chi = ChiSquared::new(kf - 1.0).expect("k >= 3");
    let p_value = chi.sf(statistic);
    Ok(FriedmanResult {
        statistic,
        p_value,
        mean_ranks,
        k,
        n_blocks: n,
    })
}

/// Two-tailed Nemenyi critical values `q_0.05` (studentized range / sqrt 2)
/// for k = 2..=10.
const Q05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

pub fn nemenyi_q05(k: usize) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(Error::param(format!(
            "Nemenyi constants are tabled for 2 <= k <= 10, got {k}"
        )));
    }
    Ok(Q05[k - 2])
}

/// Critical mean-rank difference `q_alpha * sqrt(k (k+1) / (6 N))`.
pub fn nemenyi_cd(k: usize, n_blocks: usize, alpha: f64) -> Result<f64> {
    if (alpha - 0.05).abs() > 1e-12 {
        return Err(Error::param("only alpha = 0.05 is tabled"));
    }
    if n_blocks == 0 {
        return Err(Error::param("N must be >= 1"));
    }
    let q = nemenyi_q05(k)?;
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * n_blocks as f64)).sqrt())
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either input is constant or lengths differ or n < 2.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn friedman_hand_example() {
        // rows = treatments, columns = blocks
        let v = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let r = friedman_test(&v).unwrap();
        assert_eq!(r.statistic, 4.0);
        assert_eq!(r.mean_ranks, vec![1.0, 2.0, 3.0]);
        assert!((r.p_value - (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn friedman_identical_and_permuted() {
        let same = Array2::from_elem((4, 5), 0.7);
        assert_eq!(friedman_test(&same).unwrap().statistic, 0.0);
        let v = array![[0.1, 0.5, 0.3], [0.4, 0.2, 0.9], [0.8, 0.6, 0.7]];
        let p = array![[0.8, 0.6, 0.7], [0.1, 0.5, 0.3], [0.4, 0.2, 0.9]];
        assert_eq!(friedman_test(&v).unwrap().statistic, friedman_test(&p).unwrap().statistic);
        assert!(friedman_test(&array![[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn nemenyi_values() {
        assert!((nemenyi_cd(2, 4, 0.05).unwrap() - 1.960 * 0.5).abs() < 1e-12);
        assert!(nemenyi_cd(11, 4, 0.05).is_err());
        assert!(nemenyi_cd(1, 4, 0.05).is_err());
        assert!(nemenyi_cd(5, 1_000_000, 0.05).unwrap() < 0.01);
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &a), Some(1.0));
        assert_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert!((spearman(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&a, &[1.0; 4]), None);
    }
}
