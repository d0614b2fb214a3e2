//! Parallel vs sequential kernel comparisons.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use helicity_core::geometry::edt::{squared_edt, squared_edt_serial};
use helicity_core::{DomainSpec, VoxelDomain};

fn edt_masks(h: f64) -> (Vec<bool>, [usize; 3]) {
    let dom = VoxelDomain::rasterize(&DomainSpec::torus([0.0; 3], 1.0, 0.35), h, 2).unwrap();
    let seeds: Vec<bool> = dom.mask.iter().map(|&m| !m).collect();
    (seeds, dom.grid.dims)
}

fn bench_edt(c: &mut Criterion) {
    let mut group = c.benchmark_group("squared_edt");
    for h in [0.05, 0.025] {
        let (seeds, dims) = edt_masks(h);
        let cells = dims[0] * dims[1] * dims[2];
        group.bench_with_input(BenchmarkId::new("parallel", cells), &h, |b, _| {
            b.iter(|| squared_edt(&seeds, dims))
        });
        group.bench_with_input(BenchmarkId::new("serial", cells), &h, |b, _| {
            b.iter(|| squared_edt_serial(&seeds, dims))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_edt);
criterion_main!(benches);
