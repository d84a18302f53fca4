//! Closed-form cases and randomized invariants of the scalar building blocks.

use ndarray::{arr2, Array2};
use proptest::prelude::*;

use rlvc_core::cues::{mine_prototypes, pd_loss, VisualPrototypeTable};
use rlvc_core::data::make_synthetic;
use rlvc_core::eval::harmonic_mean;
use rlvc_core::nn::LEAKY_SLOPE;
use rlvc_core::reward::{advantage, reward, rewards};
use rlvc_core::rng::{stream, Stream};
use rlvc_core::{DenseNet, DiffusionSchedule, EmaBaseline, RewardModel, SyntheticSpec, ZslDataset};

fn single_prototype(v: &[f64]) -> VisualPrototypeTable {
    let x = Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    mine_prototypes(&x, &[0], &[0]).unwrap()
}

fn pd(x: &[f64], v: &[f64]) -> f64 {
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
    pd_loss(&row, &[0], &single_prototype(v)).unwrap().0
}

#[test]
fn pd_loss_closed_forms() {
    let v = [0.3, -1.2, 2.0];
    assert!(pd(&[0.6, -2.4, 4.0], &v).abs() < 1e-12);
    assert!((pd(&[-0.3, 1.2, -2.0], &v) - 2.0).abs() < 1e-12);
    assert!((pd(&[1.0, 0.0], &[0.0, 5.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn reported_harmonic_means_reproduce() {
    for (u, s, h) in [(80.9, 81.4, 81.2), (59.6, 55.6, 57.6), (78.4, 82.4, 80.4)] {
        assert!((harmonic_mean(u, s) - h).abs() <= 0.1, "{u} {s}");
    }
}

#[test]
fn uniform_reward_is_log_of_class_share() {
    let model = RewardModel::zeros(4, 6).unwrap();
    let r = reward(&model, &[0.5, -1.0, 3.0, 0.0, 2.0, 1.0], 2).unwrap();
    assert!((r - (0.25f64).ln()).abs() < 1e-12);
}

#[test]
fn hand_evaluated_reward() {
    let mut net = DenseNet::zeros(&[1, 3], LEAKY_SLOPE).unwrap();
    net.set_flat_params(&[0.0, 0.0, 0.0, 2.0, 1.0, 0.0]).unwrap();
    let model = RewardModel::from_net(net).unwrap();
    let r = reward(&model, &[0.0], 0).unwrap();
    assert!((r + 0.407606).abs() < 1e-5, "{r}");
    let batch = rewards(&model, &arr2(&[[0.0], [7.0]]), &[0, 0]).unwrap();
    assert_eq!(batch, vec![r, r]);
}

#[test]
fn posterior_mean_identity_on_eight_steps() {
    let s = DiffusionSchedule::linear(8, 0.1, 0.4).unwrap();
    for t in 0..8 {
        let c = s.posterior_coefficients(t).unwrap();
        let lhs = c.c1 + c.c2 * s.alpha_bar(t + 1).sqrt();
        assert!((lhs - s.alpha_bar(t).sqrt()).abs() < 1e-10, "t = {t}");
    }
}

#[test]
fn forward_noise_variance() {
    let s = DiffusionSchedule::linear(8, 0.1, 0.4).unwrap();
    let x0 = ndarray::Array1::<f64>::zeros(1);
    for t in 1..=8 {
        let mut rng = stream(t as u64, Stream::Data);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| s.forward_noise(x0.view(), t, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 1.0 - s.alpha_bar(t);
        assert!((var / want - 1.0).abs() < 0.02, "t = {t}: {var} vs {want}");
    }
}

#[test]
fn ema_contracts_geometrically() {
    let (alpha, b0, target) = (0.9, 3.0, -1.25);
    let mut b = EmaBaseline::with_value(b0, alpha).unwrap();
    for k in 1..=60 {
        b.update(&[target; 8]).unwrap();
        let want = alpha.powi(k) * (b0 - target).abs();
        assert!(((b.value() - target).abs() - want).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn first_ema_write_adopts_batch_mean() {
    let mut b = EmaBaseline::new(0.9).unwrap();
    b.update(&[-1.0, -3.0]).unwrap();
    assert_eq!(b.value(), -2.0);
    let adv = advantage(&[-1.0, -3.0], &b);
    assert_eq!(adv.advantages(), &[1.0, -1.0]);
}

fn small_dataset() -> ZslDataset {
    make_synthetic(&SyntheticSpec {
        n_seen: 4,
        n_unseen: 2,
        d: 4,
        d_z: 4,
        samples_per_class: 5,
        semantic_cluster_size: 3,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn harmonic_mean_bounds(u in 0.0f64..1.0, s in 0.0f64..1.0) {
        let h = harmonic_mean(u, s);
        prop_assert!(h <= (u + s) / 2.0 + 1e-15);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= u.max(s) + 1e-15);
        prop_assert!((harmonic_mean(u, u) - u).abs() < 1e-15);
    }

    #[test]
    fn pd_loss_stays_in_range(
        x in prop::collection::vec(-10.0f64..10.0, 5),
        v in prop::collection::vec(-10.0f64..10.0, 5),
    ) {
        prop_assume!(v.iter().any(|c| c.abs() > 1e-6));
        let l = pd(&x, &v);
        prop_assert!((0.0..=2.0).contains(&l), "{l}");
    }

    #[test]
    fn pd_loss_is_scale_invariant(
        x in prop::collection::vec(-5.0f64..5.0, 4),
        v in prop::collection::vec(-5.0f64..5.0, 4),
        k in 0.1f64..10.0,
    ) {
        prop_assume!(x.iter().any(|c| c.abs() > 1e-3) && v.iter().any(|c| c.abs() > 1e-3));
        let scaled: Vec<f64> = x.iter().map(|c| c * k).collect();
        prop_assert!((pd(&x, &v) - pd(&scaled, &v)).abs() < 1e-12);
    }

    #[test]
    fn ema_moves_toward_constant_reward(b0 in -10.0f64..10.0, r in -10.0f64..10.0, alpha in 0.0f64..0.99) {
        let mut b = EmaBaseline::with_value(b0, alpha).unwrap();
        b.update(&[r, r, r]).unwrap();
        prop_assert!((b.value() - r).abs() <= alpha * (b0 - r).abs() + 1e-12);
    }

    #[test]
    fn loader_rejects_unseen_training_rows(pick in 0usize..1000) {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let unseen_rows: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.unseen_classes().contains(&ds.labels()[i]))
            .collect();
        let row = unseen_rows[pick % unseen_rows.len()];
        let path = dir.path().join("labels.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let mutated: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == row { format!("{},train", ds.labels()[i]) } else { l.to_string() })
            .collect();
        std::fs::write(&path, mutated.join("\n") + "\n").unwrap();
        let err = ZslDataset::load(dir.path()).unwrap_err();
        prop_assert_eq!(err.exit_code(), 2);
        prop_assert!(err.to_string().contains(&format!("row {row}")), "{}", err);
    }

    #[test]
    fn loader_rejects_truncated_prototypes(drop in 1usize..3) {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let path = dir.path().join("prototypes.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        std::fs::write(&path, lines[..lines.len() - drop].join("\n") + "\n").unwrap();
        prop_assert!(ZslDataset::load(dir.path()).is_err());
    }
}
