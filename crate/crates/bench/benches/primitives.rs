use std::hint::black_box;

use auditml_bench::{field, with_triples};
use auditml_core::gc::{build_sign_circuit, garble, gc_eval, Hasher, Label};
use auditml_core::he::{keygen, Backend, Evaluator, HeParams};
use auditml_core::linalg::{ct_matmul, encode_sigma, encode_tau, SquareMat};
use auditml_core::nonlinear::{nl_preprocess, ReluGadget};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn garbling(c: &mut Criterion) {
    let f = field();
    let circuit = build_sign_circuit(f.kappa(), f.p()).unwrap();
    let h = Hasher::new();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    c.bench_function("garble_sign_44", |b| b.iter(|| garble(black_box(&circuit), &h, &mut rng)));
    let (gc, keys) = garble(&circuit, &h, &mut rng);
    let labels: Vec<Label> = (0..circuit.input_count()).map(|i| keys.input_label(i, i % 3 == 0)).collect();
    c.bench_function("eval_sign_44", |b| b.iter(|| gc_eval(&circuit, &gc, &h, black_box(&labels)).unwrap()));
    let gadget = ReluGadget::new(f).unwrap();
    let alpha = f.elem(12345);
    c.bench_function("relu_preprocess_x16", |b| b.iter(|| nl_preprocess(&gadget, alpha, 16, &mut rng)));
}

fn matmul(c: &mut Criterion) {
    let f = field();
    let mut group = c.benchmark_group("ct_matmul");
    for (backend, slots, d) in [(Backend::Sim, 4096, 16), (Backend::Sim, 4096, 64), (Backend::Rlwe, 256, 16)] {
        let mut rng = ChaCha20Rng::seed_from_u64(d as u64);
        let (pk, _) = keygen(&HeParams::new(backend, slots, &f), &mut rng).unwrap();
        let ev = Evaluator::new(pk, f).unwrap();
        let x = SquareMat::random(&f, d, &mut rng);
        let y = SquareMat::random(&f, d, &mut rng);
        let cx = ev.encrypt(&encode_sigma(&x), &mut rng).unwrap();
        let cy = ev.encrypt(&encode_tau(&y, slots), &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::new(format!("{backend:?}"), d), &d, |b, &d| {
            b.iter(|| ct_matmul(&ev, &cx, &cy, d).unwrap())
        });
    }
    group.finish();
}

fn triples(c: &mut Criterion) {
    let mut group = c.benchmark_group("matvec_triple");
    group.sample_size(10);
    for (d1, d2) in [(16, 256), (64, 256)] {
        group.bench_function(format!("{d1}x{d2}"), |b| {
            b.iter(|| {
                with_triples(
                    Backend::Sim,
                    4096,
                    |ch, t| {
                        t.gen_matvec(ch, d1, d2).unwrap();
                    },
                    |ch, t| {
                        t.gen_matvec(ch, d1, d2).unwrap();
                    },
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, garbling, matmul, triples);
criterion_main!(benches);
