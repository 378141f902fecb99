//! End-to-end training sanity on desk-scale datasets: the identity channel
//! is learnable to small MSE with flat per-position error, re-training
//! recovers what the PWL swap costs, and everything is seed-deterministic.

use pwleq_core::activation::{fit_hard, ActivationKind};
use pwleq_core::channel::{build_dataset, ChannelConfig};
use pwleq_core::metrics::{evaluate_raw, q_over_windows};
use pwleq_core::model::{dataset_windows, equalizer_forward, ActivationSet, TARGET_LEN, WINDOW_LEN};
use pwleq_core::training::{pretrain, retrain, split_dataset, TrainConfig};

fn channel(n_windows: usize, identity: bool) -> ChannelConfig {
    ChannelConfig {
        n_symbols: TARGET_LEN * n_windows + (WINDOW_LEN - TARGET_LEN),
        dispersion_strength: if identity { 0.0 } else { 0.8 },
        kerr_gamma: if identity { 0.0 } else { 0.10 },
        snr_db: if identity { f64::INFINITY } else { 18.0 },
        seed: 11,
        ..Default::default()
    }
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        lr: 3e-3,
        seed: 11,
        patience: 10,
        split: 0.875,
        ..Default::default()
    }
}

#[test]
fn identity_channel_learns_near_identity() {
    let ds = build_dataset(&channel(280, true)).unwrap();
    let tc = TrainConfig {
        epochs: 150,
        batch_size: 16,
        lr: 2e-3,
        seed: 11,
        patience: 25,
        split: 0.875,
    };
    let (params, log) = pretrain(&ds, &tc).unwrap();

    let best = log.best();
    assert!(
        best.val_mse < 1e-3,
        "validation MSE after training: {}",
        best.val_mse
    );
    // Training made progress over the first trained epoch.
    assert!(log.epochs[1].val_mse > best.val_mse);

    // Per-position MSE stays flat across the 61 output positions: center
    // alignment with symmetric context leaves no edge blow-up.
    let windows = dataset_windows(&ds).unwrap();
    let n_train = (windows.len() as f64 * tc.split).round() as usize;
    let val = &windows[n_train..];
    let acts = ActivationSet::exact();
    let mut per_pos = vec![0.0f64; TARGET_LEN];
    for w in val {
        let out = equalizer_forward(&params, &w.input, &acts).unwrap();
        for t in 0..TARGET_LEN {
            let dr = out.at2(t, 0) - w.target.at2(t, 0);
            let di = out.at2(t, 1) - w.target.at2(t, 1);
            per_pos[t] += dr * dr + di * di;
        }
    }
    let max = per_pos.iter().cloned().fold(f64::MIN, f64::max);
    let min = per_pos.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        max < 3.0 * min,
        "per-position MSE spread too wide: max {max} vs min {min}"
    );
}

#[test]
fn retrain_recovers_swap_damage_small_scale() {
    let ds = build_dataset(&channel(220, false)).unwrap();
    let (trainval, test) = split_dataset(&ds, 180).unwrap();
    let tc = quick_config(30);
    let (pre_params, pre_log) = pretrain(&trainval, &tc).unwrap();

    // Raw baseline is strictly worse than the trained exact model.
    let raw = evaluate_raw(&test).unwrap();
    let test_windows = dataset_windows(&test).unwrap();
    let exact_q = q_over_windows(&pre_params, &ActivationSet::exact(), &test_windows, 16).unwrap();
    assert!(
        exact_q.q.as_ord() > raw.q.as_ord(),
        "trained {:?} vs raw {:?}",
        exact_q.q,
        raw.q
    );

    let sig = fit_hard(ActivationKind::Sigmoid);
    let tanh = fit_hard(ActivationKind::Tanh);
    let (re_params, re_log) = retrain(&pre_params, &sig, &tanh, &trainval, &tc).unwrap();

    // Swapping before re-training can only hurt validation quality.
    let pre_best = pre_log.best();
    let swapped_epoch0 = &re_log.epochs[0];
    assert!(
        swapped_epoch0.val_q.as_ord() <= pre_best.val_q.as_ord() + 1e-12,
        "swap improved Q?! swapped {:?} vs exact {:?}",
        swapped_epoch0.val_q,
        pre_best.val_q
    );

    // Best-checkpoint selection includes epoch 0, so re-training never ends
    // worse than it started.
    let re_best = re_log.best();
    assert!(re_best.val_mse <= swapped_epoch0.val_mse);
    assert!(re_best.val_q.as_ord() >= swapped_epoch0.val_q.as_ord());

    // And the re-trained model is usable on held-out data.
    let pwl_acts = ActivationSet::pwl(sig, tanh).unwrap();
    let re_q = q_over_windows(&re_params, &pwl_acts, &test_windows, 16).unwrap();
    assert!(re_q.q.as_ord() > raw.q.as_ord());
}

#[test]
fn regimes_are_seed_deterministic() {
    use pwleq_core::training::train_scratch;
    let ds = build_dataset(&channel(24, false)).unwrap();
    let tc = quick_config(3);
    let sig = fit_hard(ActivationKind::Sigmoid);
    let tanh = fit_hard(ActivationKind::Tanh);

    let (p1, l1) = pretrain(&ds, &tc).unwrap();
    let (p2, l2) = pretrain(&ds, &tc).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(l1, l2);

    let (r1, rl1) = retrain(&p1, &sig, &tanh, &ds, &tc).unwrap();
    let (r2, rl2) = retrain(&p1, &sig, &tanh, &ds, &tc).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(rl1, rl2);

    let (s1, sl1) = train_scratch(&sig, &tanh, &ds, &tc).unwrap();
    let (s2, sl2) = train_scratch(&sig, &tanh, &ds, &tc).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(sl1, sl2);
}
