//! Streaming-transform throughput over a long episode.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use opshape_core::shaping::{ShaperConfig, ShaperKind, ShapingEvent, StreamShaper};

fn long_episode() -> Vec<ShapingEvent> {
    let n = 4500;
    (0..n)
        .map(|t| ShapingEvent {
            t,
            s: 0,
            a: 0,
            s_next: 0,
            f_raw: (t as f64 * 0.37).sin().abs(),
            done: t + 1 == n,
        })
        .collect()
}

fn bench_stream_shapers(c: &mut Criterion) {
    let events = long_episode();
    for (name, kind, d) in [
        ("pbim_episode_4500", ShaperKind::Pbim, 1),
        ("grm_d5_episode_4500", ShaperKind::Grm, 5),
    ] {
        let config = ShaperConfig::of_kind(kind).with_gamma_i(0.99).with_d(d);
        c.bench_function(name, |b| {
            b.iter(|| {
                let mut shaper = StreamShaper::new(config.clone());
                let mut acc = 0.0;
                for ev in &events {
                    acc += shaper.step(black_box(ev)).unwrap();
                }
                shaper.end_episode();
                acc
            })
        });
    }
}

criterion_group!(benches, bench_stream_shapers);
criterion_main!(benches);
