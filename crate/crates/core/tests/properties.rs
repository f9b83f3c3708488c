use std::collections::HashSet;

use ndarray::Array2;
use proptest::prelude::*;

use rejinf::data::{stratified_kfold, CreditDataset, Label};
use rejinf::filtering::tail_mask;
use rejinf::learners::GbtParams;
use rejinf::metrics::{auc, brier, kickout, KickoutInputs};
use rejinf::strategies::{run_strategy, Provenance, ShallowConfig, StrategySpec};

fn labels_from(bits: &[bool]) -> Vec<Label> {
    bits.iter().map(|&b| Label::from_bad(b)).collect()
}

fn brute_auc(labels: &[Label], scores: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, li) in labels.iter().enumerate() {
        if !li.is_bad() {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_bad() {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn both_classes(bits: &[bool]) -> bool {
    bits.iter().any(|&b| b) && bits.iter().any(|&b| !b)
}

fn scored_labels() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            // coarse grid so ties are common
            prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), n),
        )
    })
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count((bits, scores) in scored_labels()) {
        prop_assume!(both_classes(&bits));
        let l = labels_from(&bits);
        let a = auc(&l, &scores).unwrap();
        prop_assert!((a - brute_auc(&l, &scores)).abs() <= 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_maps((bits, scores) in scored_labels()) {
        prop_assume!(both_classes(&bits));
        let l = labels_from(&bits);
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc(&l, &scores).unwrap(), auc(&l, &mapped).unwrap());
    }

    #[test]
    fn brier_is_size_weighted_mean(
        a in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..50),
        b in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..50),
    ) {
        let split = |v: &[(bool, f64)]| -> (Vec<Label>, Vec<f64>) {
            (v.iter().map(|x| Label::from_bad(x.0)).collect(), v.iter().map(|x| x.1).collect())
        };
        let (la, pa) = split(&a);
        let (lb, pb) = split(&b);
        let whole: Vec<(bool, f64)> = a.iter().chain(&b).copied().collect();
        let (lw, pw) = split(&whole);
        let weighted = (brier(&la, &pa).unwrap() * a.len() as f64
            + brier(&lb, &pb).unwrap() * b.len() as f64)
            / whole.len() as f64;
        prop_assert!((brier(&lw, &pw).unwrap() - weighted).abs() < 1e-12);
    }

    #[test]
    fn kickout_stays_in_bounds(a1 in 2usize..500, sb_frac in 0.0f64..1.0, kb_frac in 0.0f64..=1.0, kg_frac in 0.0f64..=1.0) {
        let s_bad = ((sb_frac * a1 as f64) as usize).clamp(1, a1 - 1);
        let k_bad = (kb_frac * s_bad as f64) as usize;
        let k_good = (kg_frac * (a1 - s_bad) as f64) as usize;
        let v = kickout(&KickoutInputs::from_counts(k_bad, k_good, s_bad, a1)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn tail_filter_is_monotone_in_beta(
        scores in prop::collection::vec(0.0f64..1.0, 5..200),
        b1 in 0.0f64..20.0,
        extra in 0.0f64..20.0,
    ) {
        let narrow = tail_mask(&scores, b1, b1);
        let wide = tail_mask(&scores, b1 + extra, b1 + extra);
        for (n, w) in narrow.iter().zip(&wide) {
            prop_assert!(!n || *w);
        }
    }

    #[test]
    fn folds_partition_and_stratify(n_bad in 2usize..60, n_good in 2usize..60, k in 2usize..6, seed: u64) {
        prop_assume!(n_bad >= k && n_good >= k);
        let n = n_bad + n_good;
        let labels: Vec<Label> = (0..n).map(|i| Label::from_bad(i < n_bad)).collect();
        let ds = CreditDataset::from_matrix(Array2::zeros((n, 1)), Some(labels)).unwrap();
        let folds = stratified_kfold(&ds, k, seed).unwrap();
        let mut seen = vec![0; n];
        for f in 0..k {
            let test = folds.test_indices(f);
            let bads = test.iter().filter(|&&i| i < n_bad).count();
            prop_assert!(bads == n_bad / k || bads == n_bad / k + 1);
            let goods = test.len() - bads;
            prop_assert!(goods == n_good / k || goods == n_good / k + 1);
            for i in test {
                seen[i] += 1;
            }
            let train: HashSet<usize> = folds.train_indices(f).into_iter().collect();
            prop_assert_eq!(train.len() + folds.test_indices(f).len(), n);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}

fn toy_partition(seed: u64) -> (CreditDataset, CreditDataset) {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_a = 120;
    let n_r = 60;
    let x = Array2::from_shape_fn((n_a + n_r, 3), |_| r.random_range(-2.0..2.0));
    let labels: Vec<Label> = (0..n_a)
        .map(|i| Label::from_bad(x[[i, 0]] + 0.5 * r.random_range(-1.0..1.0) > 0.3))
        .collect();
    let ids: Vec<String> = (0..n_a + n_r).map(|i| format!("c{i}")).collect();
    let names = vec!["a".to_string(), "b".into(), "c".into()];
    let all = CreditDataset::new(ids, names, x, None).unwrap();
    let accepts = all.select(&(0..n_a).collect::<Vec<_>>()).with_labels(labels).unwrap();
    let rejects = all.select(&(n_a..n_a + n_r).collect::<Vec<_>>());
    (accepts, rejects)
}

#[test]
fn strategies_keep_accepts_and_draw_only_from_rejects() {
    let scorer = GbtParams {
        max_trees: 20,
        ..GbtParams::default()
    };
    let specs = [
        StrategySpec::IgnoreRejects,
        StrategySpec::LabelAllBad,
        StrategySpec::HardCutoff { threshold: 0.4 },
        StrategySpec::Parcelling {
            n_batches: 10,
            multiplier: 2.0,
        },
        StrategySpec::CvVoting {
            n_folds: 2,
            threshold: 0.3,
        },
        StrategySpec::RegularSelfLearning {
            percentage: 0.05,
            max_iterations: 5,
        },
        StrategySpec::ShallowSelfLearning(ShallowConfig::default()),
    ];
    for seed in 0..3 {
        let (accepts, rejects) = toy_partition(seed);
        let reject_ids: HashSet<&str> = rejects.ids().iter().map(String::as_str).collect();
        for spec in &specs {
            let out = run_strategy(spec, &accepts, &rejects, &scorer, seed).unwrap();
            let ds = &out.dataset;
            let n_a = accepts.len();
            assert_eq!(&ds.ids()[..n_a], accepts.ids(), "{}", spec.label());
            assert_eq!(&ds.labels().unwrap()[..n_a], accepts.labels().unwrap());
            let extra: Vec<&String> = ds.ids()[n_a..].iter().collect();
            let unique: HashSet<&str> = extra.iter().map(|s| s.as_str()).collect();
            assert_eq!(unique.len(), extra.len());
            assert!(unique.iter().all(|id| reject_ids.contains(id)));
            assert_eq!(out.provenance.len(), ds.len());
            assert_eq!(out.count(Provenance::OriginalAccept), n_a);
            assert!(out.iterations_used <= 5);
            match spec {
                StrategySpec::IgnoreRejects => assert_eq!(ds.len(), n_a),
                StrategySpec::LabelAllBad => {
                    assert_eq!(out.count(Provenance::InferredBad), rejects.len())
                }
                _ => {}
            }
        }
    }
}
