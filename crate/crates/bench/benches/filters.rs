use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hkf_core::channel::{make_dataset, ChannelDataset, Condition, DatasetSpec, Split};
use hkf_core::hkf::{filter_sequence, new_hkf, rdiag_for, sampler_draws, HkfVariant};
use hkf_core::kalman::{doppler_tag, fit_groups, run_filter, ArOrder, BankMode, Schedule};
use hkf_core::lstm::{input_scale, track_sequence, TrackerWeights};
use hkf_core::rng::SeededRng;
use hkf_core::tensor::Matrix;

fn small_desk() -> ChannelDataset {
    make_dataset(&DatasetSpec {
        train_per_doppler: 8,
        test_per_doppler: 1,
        ..DatasetSpec::desk_default()
    })
    .unwrap()
}

fn bench_solve(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let a = Matrix::from_vec(32, 32, rng.normals(32 * 32))
        .unwrap()
        .add(&Matrix::identity(32).scale(8.0));
    let b = Matrix::from_vec(32, 32, rng.normals(32 * 32)).unwrap();
    c.bench_function("lu_solve_32", |bench| {
        bench.iter(|| black_box(&a).solve(black_box(&b)).unwrap())
    });
}

fn bench_sequences(c: &mut Criterion) {
    let ds = small_desk();
    let record = ds.split(Split::Test).last().unwrap();
    let (obs, mask) = ds.observations(record, Condition::default()).unwrap();
    let rdiag = rdiag_for(ds.snr_db, ds.num_taps);

    let bank = fit_groups(&ds, BankMode::Genie, ArOrder::Two).unwrap();
    let params = bank
        .get(doppler_tag(record.instance.doppler_hz))
        .unwrap()
        .with_rdiag(rdiag.clone());
    c.bench_function("kalman_filter_256", |bench| {
        bench.iter(|| run_filter(black_box(&obs), &mask, Schedule::Static(&params), None).unwrap())
    });

    let weights = TrackerWeights::init(ds.num_taps, 1, input_scale(&ds).unwrap(), 1);
    c.bench_function("lstm_tracker_256", |bench| {
        bench.iter(|| track_sequence(&weights, black_box(&obs), &mask).unwrap())
    });

    let model = new_hkf(&ds, HkfVariant::Two, 1).unwrap();
    let eps = sampler_draws(record.instance.seed, obs.rows(), obs.cols());
    c.bench_function("hkf2_filter_256", |bench| {
        bench.iter(|| filter_sequence(&model, black_box(&obs), &mask, &rdiag, &eps).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_solve, bench_sequences
}
criterion_main!(benches);
