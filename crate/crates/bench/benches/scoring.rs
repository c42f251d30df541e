use criterion::{criterion_group, criterion_main, Criterion};
use dropball_bench::{header, level, record, tape};
use dropball_core::engine::replay;
use dropball_core::placement::place_objects;
use dropball_core::{compute_report, tape as tapefile};
use std::hint::black_box;

fn bench_compute_report(c: &mut Criterion) {
    let session = record();
    c.bench_function("compute_report", |b| b.iter(|| compute_report(black_box(&session))));
}

fn bench_replay(c: &mut Criterion) {
    let (seed, events) = tape();
    let level = level();
    c.bench_function("replay", |b| {
        b.iter(|| replay(header(), &level, seed, black_box(&events)).unwrap())
    });
}

fn bench_tape_parse(c: &mut Criterion) {
    let text = tapefile::to_string(&tape().1);
    c.bench_function("tape::parse", |b| b.iter(|| tapefile::parse(black_box(&text)).unwrap()));
}

fn bench_placement(c: &mut Criterion) {
    let level = level();
    let mut seed = 0u64;
    c.bench_function("place_objects", |b| {
        b.iter(|| {
            seed = seed.wrapping_add(1);
            place_objects(&level, seed, 1).unwrap()
        })
    });
}

criterion_group!(scoring, bench_compute_report, bench_replay, bench_tape_parse, bench_placement);
criterion_main!(scoring);
