use super::*;
use crate::channel::{Cir, Constellation};
use crate::gnn::{detect_batch, GnnConfig};
use crate::graphs::{DetectionKind, Interleaver};
use crate::ldpc::ParityCheckMatrix;
use crate::metrics::bmi_estimate;
use crate::neural_core::Tape;
use crate::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn small(memory: usize) -> GnnConfig {
    GnnConfig {
        feature_size: 8,
        hidden_units: 16,
        ..GnnConfig::detection(DetectionKind::Ffg, 2, memory)
    }
}

fn awgn_task(n: usize) -> Task {
    Task::Detection(DetectionTask::new(Cir::real(&[1.0]).unwrap(), Constellation::bpsk(), n, DetectionKind::Ffg).unwrap())
}

fn isi_task(n: usize) -> Task {
    Task::Detection(
        DetectionTask::new(Cir::real(&[0.8, 0.6]).unwrap(), Constellation::bpsk(), n, DetectionKind::Ffg).unwrap(),
    )
}

fn quick(steps: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: steps,
        snr_range_db: (2.0, 6.0),
        schedule: Schedule::flooding(2),
        chunk_size: 4,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn bce_anchors() {
    assert!(bce_loss(&[0, 1, 1], &[0.0, 1.0, 1.0]).unwrap() < 1e-11);
    assert!((bce_loss(&[0, 1, 0, 1], &[0.5; 4]).unwrap() - 1.0).abs() < 1e-15);
    assert!(bce_loss(&[], &[]).is_err());
}

#[test]
fn bce_matches_natural_log_formula() {
    let mut rng = seeded(1);
    let bits: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
    let probs: Vec<f64> = (0..100).map(|_| rng.random_range(0.001..0.999)).collect();
    let mut oracle = 0.0;
    for (&c, &q) in bits.iter().zip(&probs) {
        let c = c as f64;
        oracle += -(c * q.ln() + (1.0 - c) * (1.0 - q).ln()) / 2f64.ln();
    }
    oracle /= 100.0;
    assert!((bce_loss(&bits, &probs).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn tape_bce_equals_probability_bce() {
    let mut rng = seeded(2);
    let bits: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
    let llrs: Vec<f64> = (0..50).map(|_| rng.random_range(-8.0..8.0)).collect();
    let probs: Vec<f64> = llrs.iter().map(|l| 1.0 / (1.0 + l.exp())).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_shape_vec((50, 1), llrs.clone()).unwrap());
    let l = tape.bce_logits(x, Arc::new(bits.clone()), 1.0 / 50.0);
    assert!((tape.value(l)[(0, 0)] - bce_loss(&bits, &probs).unwrap()).abs() < 1e-12);
    // BMI is one minus the cross-entropy
    assert!((bmi_raw(&bits, &llrs).unwrap() - (1.0 - tape.value(l)[(0, 0)])).abs() < 1e-12);
}

#[test]
fn multi_loss_cases() {
    assert_eq!(multi_loss(&[0.7]).unwrap(), 0.7);
    assert!((multi_loss(&[0.3; 5]).unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(multi_loss(&[0.1, 0.5, 0.9]).unwrap(), multi_loss(&[0.9, 0.1, 0.5]).unwrap());
    assert!(multi_loss(&[]).is_err());
}

#[test]
fn prior_zero_information_is_zero() {
    let s = sample_prior_llrs(&[0, 1, 1], 0.0, &mut seeded(0)).unwrap();
    assert_eq!(s.llrs.values, vec![0.0; 3]);
    assert_eq!(s.llrs.role, LlrRole::Prior);
    let s = sample_prior_llrs(&[0, 1], 1.0, &mut seeded(0)).unwrap();
    assert!(s.saturated);
    assert_eq!(s.llrs.values, vec![LLR_MAX, -LLR_MAX]);
    assert!(sample_prior_llrs(&[0], -0.1, &mut seeded(0)).is_err());
}

#[test]
fn prior_moments_are_consistent() {
    let bits = vec![0u8; 100_000];
    let s = sample_prior_llrs(&bits, 0.5, &mut seeded(3)).unwrap();
    let v = &s.llrs.values;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    assert!(((mean / var) - 0.5).abs() < 0.01, "mean {mean} var {var}");
}

#[test]
fn prior_information_closure() {
    let mut rng = seeded(4);
    for k in 1..10 {
        let ia = k as f64 / 10.0;
        let bits: Vec<u8> = (0..100_000).map(|_| rng.random_range(0..2)).collect();
        let s = sample_prior_llrs(&bits, ia, &mut rng).unwrap();
        let measured = bmi_estimate(&bits, &s.llrs.values).unwrap();
        assert!((measured - ia).abs() < 0.02, "{ia}: {measured}");
    }
}

#[test]
fn training_reduces_loss() {
    let task = awgn_task(8);
    let cfg = quick(2_000);
    let params = GnnParameters::new(small(0), &mut seeded(6)).unwrap();
    let (before, _) = evaluate_loss(&params, &task, &cfg, 4, 99, ExecMode::Parallel).unwrap();
    let mut state = TrainState::new(params, cfg.learning_rate);
    train(&mut state, &task, &cfg, Procedure::Plain, cfg.epochs, ExecMode::Parallel, None).unwrap();
    let (after, bmi) = evaluate_loss(&state.params, &task, &cfg, 4, 99, ExecMode::Parallel).unwrap();
    assert!(after < before, "{before} -> {after}");
    assert!(bmi > 0.5, "{bmi}");
}

#[test]
fn runs_are_reproducible_across_modes() {
    let task = isi_task(6);
    let cfg = quick(5);
    let run = |mode| {
        let mut s = TrainState::new(GnnParameters::new(small(1), &mut seeded(7)).unwrap(), cfg.learning_rate);
        let m = train(&mut s, &task, &cfg, Procedure::Plain, 5, mode, None).unwrap();
        (m.iter().map(|x| (x.loss, x.bmi, x.snr_db)).collect::<Vec<_>>(), s.params.named_tensors())
    };
    let a = run(ExecMode::Sequential);
    let b = run(ExecMode::Sequential);
    let c = run(ExecMode::Parallel);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn single_iteration_multi_loss_is_bce() {
    let task = isi_task(6);
    let cfg = TrainConfig {
        schedule: Schedule::flooding(1),
        ..quick(1)
    };
    let params = GnnParameters::new(small(1), &mut seeded(8)).unwrap();
    let (_, samples) = simulate_batch(&task, &cfg, 11, None, ExecMode::Sequential).unwrap();
    let (m, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, LossKind::Multi, 4, ExecMode::Sequential).unwrap();
    let (b, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, LossKind::Bce, 4, ExecMode::Sequential).unwrap();
    assert_eq!(m.loss_value, b.loss_value);
    assert_eq!(m.gradients, b.gradients);
}

#[test]
fn multi_loss_averages_iterations() {
    let task = isi_task(6);
    let cfg = TrainConfig {
        schedule: Schedule::flooding(3),
        ..quick(1)
    };
    let params = GnnParameters::new(small(1), &mut seeded(8)).unwrap();
    let (_, samples) = simulate_batch(&task, &cfg, 12, None, ExecMode::Sequential).unwrap();
    let (m, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, LossKind::Multi, 8, ExecMode::Sequential).unwrap();
    let frames: Vec<_> = samples.iter().map(|s| s.frame.clone()).collect();
    let out = detect_batch(&params, task.graph(), &frames, &cfg.schedule).unwrap();
    let targets: Vec<u8> = samples.iter().flat_map(|s| s.targets.clone()).collect();
    let per_it: Vec<f64> = (0..3)
        .map(|i| {
            let probs: Vec<f64> = out.iter().flat_map(|f| f[i].values.iter().map(|l| 1.0 / (1.0 + l.exp()))).collect();
            bce_loss(&targets, &probs).unwrap()
        })
        .collect();
    assert!((m.loss_value - multi_loss(&per_it).unwrap()).abs() < 1e-9);
}

#[test]
fn loss_ignores_batch_order() {
    let task = isi_task(6);
    let cfg = quick(1);
    let params = GnnParameters::new(small(1), &mut seeded(9)).unwrap();
    let (_, mut samples) = simulate_batch(&task, &cfg, 13, None, ExecMode::Sequential).unwrap();
    let (a, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, cfg.loss, 3, ExecMode::Sequential).unwrap();
    samples.reverse();
    let (b, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, cfg.loss, 3, ExecMode::Sequential).unwrap();
    assert!((a.loss_value - b.loss_value).abs() < 1e-12);
}

#[test]
fn chunking_does_not_change_gradients() {
    let task = isi_task(6);
    let cfg = quick(1);
    let params = GnnParameters::new(small(1), &mut seeded(9)).unwrap();
    let (_, samples) = simulate_batch(&task, &cfg, 14, None, ExecMode::Sequential).unwrap();
    let (a, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, cfg.loss, 8, ExecMode::Sequential).unwrap();
    let (b, _) = batch_gradients(&params, &task, &samples, &cfg.schedule, cfg.loss, 3, ExecMode::Sequential).unwrap();
    for (name, g) in &a.gradients {
        let d = (g - &b.gradients[name]).mapv(f64::abs).iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(d < 1e-12, "{name}: {d}");
    }
}

#[test]
fn zero_information_pretraining_is_plain_training() {
    let task = isi_task(6);
    let cfg = TrainConfig {
        ia_range: (0.0, 0.0),
        ..quick(3)
    };
    let cfgp = GnnConfig {
        with_prior: true,
        ..small(1)
    };
    let p = GnnParameters::new(cfgp, &mut seeded(10)).unwrap();
    let mut a = TrainState::new(p.clone(), cfg.learning_rate);
    let mut b = TrainState::new(p, cfg.learning_rate);
    for _ in 0..3 {
        let ma = train_epoch(&mut a, &task, &cfg, ExecMode::Sequential).unwrap();
        let mb = gaussian_prior_pretrain_epoch(&mut b, &task, &cfg, ExecMode::Sequential).unwrap();
        assert_eq!(ma.loss, mb.loss);
    }
    assert_eq!(a.params.named_tensors(), b.params.named_tensors());
    let mut plain = TrainState::new(GnnParameters::new(small(1), &mut seeded(10)).unwrap(), 1e-3);
    assert!(gaussian_prior_pretrain_epoch(&mut plain, &task, &cfg, ExecMode::Sequential).is_err());
}

#[test]
fn strong_priors_are_followed_after_pretraining() {
    // a channel at -10 dB carries almost nothing; the only useful input is
    // the prior
    let task = isi_task(8);
    let cfg = TrainConfig {
        snr_range_db: (-10.0, -10.0),
        ia_range: (0.95, 0.95),
        ..quick(300)
    };
    let p = GnnParameters::new(GnnConfig { with_prior: true, ..small(1) }, &mut seeded(11)).unwrap();
    let (eval_before, _) = {
        let (_, s) = simulate_batch(&task, &cfg, 777, Some(cfg.ia_range), ExecMode::Parallel).unwrap();
        batch_gradients(&p, &task, &s, &cfg.schedule, cfg.loss, 4, ExecMode::Parallel).unwrap()
    };
    let mut state = TrainState::new(p, cfg.learning_rate);
    train(&mut state, &task, &cfg, Procedure::GaussianPrior, 300, ExecMode::Parallel, None).unwrap();
    let (_, samples) = simulate_batch(&task, &cfg, 777, Some(cfg.ia_range), ExecMode::Parallel).unwrap();
    let (after, _) = batch_gradients(&state.params, &task, &samples, &cfg.schedule, cfg.loss, 4, ExecMode::Parallel).unwrap();
    assert!(after.loss_value < eval_before.loss_value);
    let frames: Vec<_> = samples.iter().map(|s| s.frame.clone()).collect();
    let out = detect_batch(&state.params, task.graph(), &frames, &cfg.schedule).unwrap();
    let (mut agree, mut total) = (0, 0);
    for (s, o) in samples.iter().zip(&out) {
        let prior = s.frame.prior.as_ref().unwrap();
        for (l, a) in o.last().unwrap().values.iter().zip(prior) {
            agree += usize::from((*l < 0.0) == (*a < 0.0));
            total += 1;
        }
    }
    assert!(agree as f64 / total as f64 > 0.95, "{agree}/{total}");
}

#[test]
fn identical_stages_equal_one_longer_run() {
    let task = isi_task(6);
    let cfg = quick(4);
    let p = GnnParameters::new(small(1), &mut seeded(12)).unwrap();
    let mut a = TrainState::new(p.clone(), cfg.learning_rate);
    let mut b = TrainState::new(p, cfg.learning_rate);
    let s = cfg.schedule.clone();
    two_stage_finetune(&mut a, &task, &cfg, s.clone(), 2, s, 2, ExecMode::Sequential, None).unwrap();
    train(&mut b, &task, &cfg, Procedure::Plain, 4, ExecMode::Sequential, None).unwrap();
    assert_eq!(a.params.named_tensors(), b.params.named_tensors());
}

#[test]
fn deeper_unrolling_stays_finite() {
    let task = isi_task(8);
    let cfg = TrainConfig {
        schedule: Schedule::flooding(10),
        ..quick(5)
    };
    let mut state = TrainState::new(GnnParameters::new(small(1), &mut seeded(13)).unwrap(), cfg.learning_rate);
    train(&mut state, &task, &cfg, Procedure::Plain, 5, ExecMode::Parallel, None).unwrap();
    let (_, samples) = simulate_batch(&task, &cfg, 3, None, ExecMode::Parallel).unwrap();
    let frames: Vec<_> = samples.iter().map(|s| s.frame.clone()).collect();
    let out = detect_batch(&state.params, task.graph(), &frames, &Schedule::flooding(20)).unwrap();
    assert!(out.iter().all(|f| f.len() == 20 && f[19].values.iter().all(|v| v.is_finite())));
}

#[test]
fn resume_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ck");
    let task = isi_task(6);
    let cfg = quick(4);
    let p = GnnParameters::new(small(1), &mut seeded(14)).unwrap();
    let mut full = TrainState::new(p.clone(), cfg.learning_rate);
    let m = train(&mut full, &task, &cfg, Procedure::Plain, 4, ExecMode::Sequential, None).unwrap();

    let mut part = TrainState::new(p.clone(), cfg.learning_rate);
    train(&mut part, &task, &cfg, Procedure::Plain, 3, ExecMode::Sequential, None).unwrap();
    part.save(&path).unwrap();
    let mut resumed = TrainState::load(&path, p, cfg.learning_rate).unwrap();
    assert_eq!(resumed.step, 3);
    let next = train_epoch(&mut resumed, &task, &cfg, ExecMode::Sequential).unwrap();
    assert_eq!(next.loss.to_bits(), m[3].loss.to_bits());
    assert_eq!(resumed.params.named_tensors(), full.params.named_tensors());
}

#[test]
fn log_has_header_and_rows() {
    let mut buf = Vec::new();
    {
        let mut log = TrainLog::new(&mut buf, true, false).unwrap();
        let task = isi_task(4);
        let cfg = quick(2);
        let mut s = TrainState::new(GnnParameters::new(small(1), &mut seeded(15)).unwrap(), cfg.learning_rate);
        train(&mut s, &task, &cfg, Procedure::Plain, 2, ExecMode::Sequential, Some(&mut log)).unwrap();
    }
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], TrainLog::HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",0.000000"));
}

fn punctured_code() -> ParityCheckMatrix {
    ParityCheckMatrix::from_dense(&[
        vec![1, 1, 0, 1, 0, 0, 1],
        vec![0, 1, 1, 0, 1, 0, 1],
        vec![1, 0, 1, 0, 0, 1, 1],
    ])
    .unwrap()
    .with_puncture(vec![6])
    .unwrap()
}

#[test]
fn joint_targets_include_punctured_bits() {
    let pcm = punctured_code();
    let task = Task::Joint(
        JointTask::new(Cir::real(&[0.8, 0.6]).unwrap(), pcm.clone(), Interleaver::random(6, &mut seeded(1)), DetectionKind::Ffg)
            .unwrap(),
    );
    let s = task.sample(5.0, &mut seeded(2)).unwrap();
    assert_eq!(s.targets.len(), 7);
    assert!(pcm.is_codeword(&s.targets));
    assert_eq!(s.frame.y.len(), 7);
    assert_eq!(task.graph().readout_vns.len(), 7);
    let cfg = GnnConfig {
        with_checks: true,
        ..small(1)
    };
    let mut state = TrainState::new(GnnParameters::new(cfg, &mut seeded(3)).unwrap(), 1e-3);
    let m = train_epoch(&mut state, &task, &quick(1), ExecMode::Sequential).unwrap();
    assert!(m.loss.is_finite());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig {
            snr_range_db: (5.0, 1.0),
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            ia_range: (0.5, 1.5),
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    TrainConfig::full_detection().validate().unwrap();
    TrainConfig::full_joint().validate().unwrap();
}

#[test]
fn divergence_reports_step_and_seed() {
    let task = isi_task(4);
    let cfg = quick(1);
    let mut p = GnnParameters::new(small(1), &mut seeded(16)).unwrap();
    p.readout.fill(f64::NAN);
    let mut s = TrainState::new(p, cfg.learning_rate);
    match train_epoch(&mut s, &task, &cfg, ExecMode::Sequential) {
        Err(Error::TrainingDivergence { step, batch_seed: seed }) => {
            assert_eq!(step, 1);
            assert_eq!(seed, batch_seed(cfg.seed, 0));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(s.step, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn bce_is_nonnegative(bits in prop::collection::vec(0u8..2, 1..40), seed in 0u64..500) {
        let mut rng = seeded(seed);
        let probs: Vec<f64> = bits.iter().map(|_| rng.random_range(0.0..=1.0)).collect();
        let v = bce_loss(&bits, &probs).unwrap();
        prop_assert!(v >= 0.0 && v.is_finite());
    }
}
