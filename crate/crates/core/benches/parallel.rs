use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isi_gnn::channel::{apply_isi, random_bits, snr_db_to_sigma2, Cir, Constellation};
use isi_gnn::classical::bcjr_detect;
use isi_gnn::gnn::{GnnConfig, GnnParameters, Schedule};
use isi_gnn::graphs::DetectionKind;
use isi_gnn::parallel::{map_indexed, ExecMode};
use isi_gnn::rng::{seeded, stream};
use isi_gnn::training::{batch_gradients, simulate_batch, DetectionTask, LossKind, Task, TrainConfig};

const MODES: [(&str, ExecMode); 2] = [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)];

fn bcjr_frames(c: &mut Criterion) {
    let cir = Cir::proakis_c();
    let bpsk = Constellation::bpsk();
    let sigma2 = snr_db_to_sigma2(10.0);
    let mut group = c.benchmark_group("bcjr_64_frames");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                map_indexed(mode, 64, |f| {
                    let mut rng = stream(1, &[f as u64]);
                    let bits = random_bits(256, &mut rng);
                    let y = apply_isi(&bpsk.modulate(&bits).unwrap(), &cir, sigma2, &mut rng).unwrap();
                    bcjr_detect(&y, &cir, sigma2, &bpsk, None).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn gnn_batch_gradients(c: &mut Criterion) {
    let cir = Cir::real(&[0.8, 0.6]).unwrap();
    let task = Task::Detection(DetectionTask::new(cir, Constellation::bpsk(), 32, DetectionKind::Ffg).unwrap());
    let params = GnnParameters::new(GnnConfig::detection(DetectionKind::Ffg, 2, 1), &mut seeded(3)).unwrap();
    let config = TrainConfig {
        batch_size: 64,
        schedule: Schedule::flooding(4),
        ..TrainConfig::default()
    };
    let (_, samples) = simulate_batch(&task, &config, 5, None, ExecMode::Sequential).unwrap();
    let mut group = c.benchmark_group("gnn_gradients_batch_64");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| batch_gradients(&params, &task, &samples, &config.schedule, LossKind::Multi, 16, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bcjr_frames, gnn_batch_gradients);
criterion_main!(benches);
