use criterion::{black_box, criterion_group, criterion_main, Criterion};
use gluco_bench::trained_ensemble;
use gluco_core::planner::{plan, ActionTable, DEFAULT_HORIZON, DEFAULT_MULTIPLIERS};
use gluco_core::profiles::ProfileFile;
use gluco_core::simcore::{steady_state, step_patient, STEP_MINUTES};
use gluco_core::{CostMode, ProfileId};

fn simulator(c: &mut Criterion) {
    let id: ProfileId = "adult#001".parse().unwrap();
    let p = ProfileFile::shipped().get(id).unwrap().params.clone();
    let s = steady_state(&p);
    c.bench_function("step_patient", |b| {
        b.iter(|| {
            step_patient(
                black_box(&s),
                &p,
                black_box(0.6),
                black_box(30.0),
                STEP_MINUTES,
            )
        })
    });
}

fn ensemble(c: &mut Criterion) {
    let ens = trained_ensemble(3);
    let table = ActionTable::new(0.1, &DEFAULT_MULTIPLIERS, DEFAULT_HORIZON).unwrap();
    let carbs = vec![0.0; table.horizon()];

    c.bench_function("rollout_single_sequence", |b| {
        b.iter(|| {
            ens.rollout(black_box(&table.sequences()[2]), &carbs)
                .unwrap()
        })
    });
    c.bench_function("rollout_batch_table", |b| {
        b.iter(|| {
            ens.rollout_batch(black_box(table.sequences()), &carbs)
                .unwrap()
        })
    });

    let mut group = c.benchmark_group("plan");
    for mode in [CostMode::WithUncertainty, CostMode::WithoutUncertainty] {
        group.bench_function(format!("{mode:?}"), |b| {
            b.iter(|| plan(&ens, &table, mode, black_box(45.0)).unwrap())
        });
    }
    group.finish();

    c.bench_function("fit_readouts", |b| {
        b.iter_batched(
            || ens.clone(),
            |mut e| e.fit().unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = simulator, ensemble
}
criterion_main!(benches);
