//! GP model fit and query costs at the control set's working size.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use exprec_core::gp::{FeatureVector, GpModel, Hyperparameters};

fn training_data(m: usize) -> (Vec<FeatureVector>, Vec<Vec<f64>>) {
    let inputs: Vec<FeatureVector> = (0..m)
        .map(|k| {
            let t = k as f64 * 0.37;
            FeatureVector::new(vec![1.5 + 0.3 * t.sin(), 0.6 * t.cos(), 0.4 * (t * 0.5).sin()])
                .unwrap()
        })
        .collect();
    let outputs: Vec<Vec<f64>> = (0..3)
        .map(|d| {
            inputs
                .iter()
                .map(|a| 0.1 * a.as_slice()[1] * (d as f64 + 1.0))
                .collect()
        })
        .collect();
    (inputs, outputs)
}

fn bench_gp(c: &mut Criterion) {
    let hyper = vec![Hyperparameters::disturbance_default(); 3];
    let (inputs, outputs) = training_data(50);

    c.bench_function("gp_fit_50x3", |b| {
        b.iter_batched(
            || inputs.clone(),
            |ins| GpModel::fit(ins, black_box(&outputs), &hyper).unwrap(),
            BatchSize::SmallInput,
        )
    });

    let model = GpModel::fit(inputs, &outputs, &hyper).unwrap();
    let at = FeatureVector::new(vec![1.4, 0.5, 0.4]).unwrap();
    c.bench_function("gp_predict_50x3", |b| {
        b.iter(|| model.predict(black_box(&at)).unwrap())
    });
    c.bench_function("gp_mean_gradient_50", |b| {
        b.iter(|| model.mean_gradient(2, black_box(&at)).unwrap())
    });
}

criterion_group!(benches, bench_gp);
criterion_main!(benches);
