//! Schedule, optimizer separation and end-to-end behaviour of the trainer on
//! small synthetic problems.

use rlvc_core::cues::mine_prototypes;
use rlvc_core::data::make_synthetic;
use rlvc_core::nn::{flatten_grads, AdamConfig};
use rlvc_core::reward::{pretrain_reward, rl_loss_on_tape};
use rlvc_core::rng::{stream, Stream};
use rlvc_core::trainer::{metrics_text, train, Trainer};
use rlvc_core::{
    AdamState, AdvantageBatch, RewardModel, RunConfig, SampleSplit, SyntheticSpec, Tape, TrainConfig,
    VisualPrototypeTable, ZslDataset,
};

struct Fixture {
    ds: ZslDataset,
    reward: RewardModel,
    protos: VisualPrototypeTable,
}

fn fixture(spec: SyntheticSpec) -> Fixture {
    let ds = make_synthetic(&spec).unwrap();
    let (x, y) = ds.split(SampleSplit::Train);
    let local = ds.seen_local_labels(&y).unwrap();
    let reward = pretrain_reward(
        &x,
        &local,
        ds.seen_classes().len(),
        RunConfig::default().reward,
        &mut stream(spec.seed, Stream::Reward),
    )
    .unwrap();
    let protos = mine_prototypes(&x, &y, &ds.seen_classes()).unwrap();
    Fixture { ds, reward, protos }
}

fn tiny() -> Fixture {
    fixture(SyntheticSpec {
        n_seen: 6,
        n_unseen: 2,
        d: 8,
        d_z: 4,
        samples_per_class: 10,
        semantic_cluster_size: 4,
        ..SyntheticSpec::default()
    })
}

fn config(epochs: usize, rl_start_epoch: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        rl_start_epoch,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn cold_start_gate() {
    let f = tiny();
    let out = train(&f.ds, &f.reward, &f.protos, config(10, 6), None).unwrap();
    let m = f.ds.rows_in(SampleSplit::Train).len().div_ceil(16) as u64;
    assert_eq!(out.counters.len(), 10);
    for (epoch, c) in out.counters.iter().enumerate() {
        let want = if epoch < 6 { 0 } else { m };
        assert_eq!((c.rl, c.ema_writes), (want, want), "epoch {epoch}");
        assert_eq!((c.critic, c.gen_adv), (m, m));
    }
    assert_eq!(out.baseline.writes(), 4 * m);
    assert!(out.metrics[..6].iter().all(|r| r.raw_reward_mean.is_nan() && r.ema_baseline.is_nan()));
    assert!(out.metrics[6..].iter().all(|r| r.raw_reward_mean.is_finite() && r.ema_baseline.is_finite()));
}

#[test]
fn rl_from_the_first_epoch() {
    let f = tiny();
    let out = train(&f.ds, &f.reward, &f.protos, config(2, 0), None).unwrap();
    assert!(out.counters.iter().all(|c| c.rl > 0 && c.rl == c.gen_adv));
}

#[test]
fn several_critic_steps_per_batch() {
    let f = tiny();
    let cfg = TrainConfig {
        critic_steps: 5,
        ..config(2, 1)
    };
    let out = train(&f.ds, &f.reward, &f.protos, cfg, None).unwrap();
    for c in &out.counters {
        assert_eq!(c.critic, 5 * c.gen_adv);
    }
}

#[test]
fn disabled_rl_never_touches_the_baseline() {
    let f = tiny();
    let cfg = TrainConfig {
        use_rl: false,
        ..config(3, 0)
    };
    let out = train(&f.ds, &f.reward, &f.protos, cfg, None).unwrap();
    assert!(out.counters.iter().all(|c| c.rl == 0 && c.ema_writes == 0));
    assert!(!out.baseline.is_initialized());
}

#[test]
fn raw_reward_skips_the_baseline() {
    let f = tiny();
    let cfg = TrainConfig {
        raw_reward: true,
        ..config(3, 1)
    };
    let out = train(&f.ds, &f.reward, &f.protos, cfg, None).unwrap();
    assert_eq!(out.baseline.writes(), 0);
    for r in &out.metrics[1..] {
        assert!(r.ema_baseline.is_nan());
        assert_eq!(r.raw_reward_mean, r.advantage_mean);
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let f = tiny();
    let cfg = TrainConfig {
        eval_interval: 2,
        synth_per_class: 20,
        ..config(4, 1)
    };
    let a = train(&f.ds, &f.reward, &f.protos, cfg.clone(), None).unwrap();
    let b = train(&f.ds, &f.reward, &f.protos, cfg.clone(), None).unwrap();
    assert_eq!(metrics_text(&a.metrics), metrics_text(&b.metrics));
    let c = train(&f.ds, &f.reward, &f.protos, TrainConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(metrics_text(&a.metrics), metrics_text(&c.metrics));
}

#[test]
fn advantages_act_as_constants() {
    let f = tiny();
    let mut trainer = Trainer::new(&f.ds, &f.reward, &f.protos, config(1, 0)).unwrap();
    let mut rng = stream(3, Stream::Train);
    let rows = trainer.sample_rows(&mut rng);
    let batch = trainer.draw_batch(&rows, &mut rng).unwrap();
    let (adv, computed) = trainer.rl_objective(&batch).unwrap();

    let constants = AdvantageBatch::new(adv.rewards().to_vec(), adv.advantages().to_vec(), true);
    let gen = trainer.generator();
    let mut tape = Tape::new();
    let bound = gen.net().bind(&mut tape, true);
    let x0 = gen
        .forward_tape(&mut tape, &bound, &batch.gen_noise, &batch.z, &batch.x_next, &batch.next_steps())
        .unwrap();
    let local = f.ds.seen_local_labels(&batch.labels).unwrap();
    let lp = f.reward.log_prob_on_tape(&mut tape, x0, &local).unwrap();
    let loss = rl_loss_on_tape(&mut tape, &constants, lp).unwrap();
    let grads = tape.grad(loss, &bound.params()).unwrap();
    let manual = flatten_grads(&tape, &grads);

    assert_eq!(computed.len(), manual.len());
    let worst = computed.iter().zip(&manual).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn rl_loss_refuses_advantages_without_barrier() {
    let mut tape = Tape::new();
    let lp = tape.constant(ndarray::arr2(&[[-1.0], [-2.0]]));
    let adv = AdvantageBatch::new(vec![-1.0, -2.0], vec![0.5, -0.5], false);
    assert!(rl_loss_on_tape(&mut tape, &adv, lp).is_err());
}

#[test]
fn generator_updates_alternate_between_optimizers() {
    let f = tiny();
    let cfg = TrainConfig {
        raw_reward: true,
        ..config(1, 0)
    };
    let mut trainer = Trainer::new(&f.ds, &f.reward, &f.protos, cfg.clone()).unwrap();
    let mut rng = stream(5, Stream::Train);
    let rows = trainer.sample_rows(&mut rng);
    let adv_batch = trainer.draw_batch(&rows, &mut rng).unwrap();
    let rl_batch = trainer.draw_batch(&rows, &mut rng).unwrap();

    let theta0 = trainer.generator().net().clone();
    let (_, g_adv) = trainer.generator_objective(&adv_batch).unwrap();
    let (_, g_rl_at_start) = trainer.rl_objective(&rl_batch).unwrap();
    trainer.generator_step(&adv_batch).unwrap();
    let (_, g_rl) = trainer.rl_objective(&rl_batch).unwrap();
    trainer.rl_step(&rl_batch).unwrap();
    let got = trainer.generator().net().flat_params();

    let mut replay = theta0.clone();
    AdamState::for_net(AdamConfig::gan(cfg.lr_adv), &replay)
        .unwrap()
        .step_net(&mut replay, &g_adv)
        .unwrap();
    AdamState::for_net(AdamConfig::gan(cfg.lr_rl), &replay)
        .unwrap()
        .step_net(&mut replay, &g_rl)
        .unwrap();
    let expected = replay.flat_params();
    let worst = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-14, "{worst}");

    let mut summed = theta0;
    let total: Vec<f64> = g_adv.iter().zip(&g_rl_at_start).map(|(a, b)| a + b).collect();
    AdamState::for_net(AdamConfig::gan(cfg.lr_adv), &summed)
        .unwrap()
        .step_net(&mut summed, &total)
        .unwrap();
    let gap = got
        .iter()
        .zip(summed.flat_params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-6, "{gap}");
}

#[test]
fn smoke_run_raises_the_reward() {
    let f = fixture(SyntheticSpec {
        n_seen: 10,
        n_unseen: 3,
        d: 16,
        d_z: 8,
        samples_per_class: 20,
        ..SyntheticSpec::default()
    });
    let cfg = TrainConfig {
        batch_size: 32,
        eval_interval: 20,
        synth_per_class: 50,
        ..config(20, 5)
    };
    let out = train(&f.ds, &f.reward, &f.protos, cfg, None).unwrap();
    let mean = |r: &[rlvc_core::MetricsRow]| r.iter().map(|m| m.raw_reward_mean).sum::<f64>() / r.len() as f64;
    let early = mean(&out.metrics[5..8]);
    let late = mean(&out.metrics[17..20]);
    assert!(late > early, "early {early}, late {late}");
    let report = out.final_report().unwrap();
    assert!((0.0..=1.0).contains(&report.acc) && report.acc > 1.0 / 3.0, "{report}");
    for r in &out.metrics {
        assert!(r.critic_loss.is_finite() && r.gen_adv_loss.is_finite() && r.pd_loss.is_finite());
    }
}
