use curiolab::analysis::knn_purity;
use curiolab::dataset::{Label, ObservationDataset};
use curiolab::icm::{combine_rewards, intrinsic_reward, RewardMix};
use curiolab::ppo::TrainSchedule;
use curiolab::vae::kl_diag_gaussian;
use curiolab_numcore::Tensor;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn shuffled_labels_give_marginal_purity() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1000;
    let x = Tensor::randn(&[n, 4], 1.0, &mut rng);
    let weights = [0.5, 0.3, 0.2];
    let mut labels: Vec<Label> = (0..n)
        .map(|i| {
            let u = i as f64 / n as f64;
            if u < weights[0] {
                Label::ALL[0]
            } else if u < weights[0] + weights[1] {
                Label::ALL[1]
            } else {
                Label::ALL[2]
            }
        })
        .collect();
    labels.shuffle(&mut rng);
    // Expected purity of a random neighbour set is the sum of squared marginals.
    let chance: f64 = weights.iter().map(|w| w * w).sum();
    let purity = knn_purity(&x, &labels, 10);
    assert!((purity - chance).abs() < 0.05, "{purity} vs {chance}");
}

#[test]
fn dataset_survives_encode_and_subset() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ds = ObservationDataset::new(4, 4);
    for i in 0..7 {
        let img: Vec<f64> = (0..48).map(|_| rng.gen_range(0.0..1.0)).collect();
        ds.push(&img, Some(Label::ALL[i % 3])).unwrap();
    }
    let back = ObservationDataset::decode(&ds.encode()).unwrap();
    assert_eq!(back.len(), 7);
    assert_eq!(back.labels, ds.labels);
    let sub = back.subset(&[1, 4]);
    assert_eq!(sub.len(), 2);
    assert_eq!(sub.labels.unwrap(), vec![Label::ALL[1], Label::ALL[1]]);
}

proptest! {
    #[test]
    fn kl_is_non_negative(
        (mu, lv) in (1usize..12).prop_flat_map(|d| (prop::collection::vec(-8.0..8.0f64, d), prop::collection::vec(-8.0..8.0f64, d)))
    ) {
        prop_assert!(kl_diag_gaussian(&mu, &lv) >= 0.0);
    }

    #[test]
    fn kl_vanishes_at_the_prior(d in 1usize..20) {
        prop_assert_eq!(kl_diag_gaussian(&vec![0.0; d], &vec![0.0; d]), 0.0);
    }

    #[test]
    fn intrinsic_reward_is_euclidean_error(a in prop::collection::vec(-100.0..100.0f64, 1..32), shift in -5.0..5.0f64) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let expect = (a.len() as f64).sqrt() * shift.abs();
        let r = intrinsic_reward(&a, &b);
        prop_assert!(r >= 0.0);
        prop_assert!((r - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    #[test]
    fn zero_lambda_ignores_curiosity(ext in -10.0..10.0f64, int in 0.0..1e6f64) {
        prop_assert_eq!(combine_rewards(ext, int, &RewardMix::new(0.0, false)), ext);
    }

    #[test]
    fn schedule_is_non_increasing(total in 1u64..1_000_000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let s = TrainSchedule { total_steps: total, ..TrainSchedule::default() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (k0, k1) = ((lo * total as f64) as u64, (hi * total as f64) as u64);
        prop_assert!(s.lr_at(k0) >= s.lr_at(k1));
        prop_assert!(s.lr_at(k1) >= 0.0);
    }
}
