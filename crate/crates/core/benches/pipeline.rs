//! Parallel against sequential execution of the capture pipeline and of the
//! per-pixel kernels it is built from.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evres::multiscale::resample_area;
use evres::par;
use evres::pipeline::{capture, CaptureRequest};
use evres::scene::{bundled_scene_with_size, render_frame};
use evres::Cutoff;

fn bench_capture(c: &mut Criterion) {
    let setup = bundled_scene_with_size("rocks", 512).expect("scene");
    let k = setup.intrinsics(256, 256).expect("intrinsics");
    let t_ref = setup.trajectory.domain().0 + 0.2;
    let req = CaptureRequest {
        resolutions: vec![(256, 256), (128, 128), (64, 64)],
        cutoffs: vec![Cutoff::IDEAL, Cutoff(50.0)],
        contrast_threshold: 0.2,
        frame_rate: 5000.0,
        warmup: 0.002,
        t_ref,
        duration: 0.004,
        keep_offsets: vec![0.0],
    };
    let mut g = c.benchmark_group("capture_256");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| capture(&setup.scene, &k, &setup.trajectory, &req).expect("capture")));
    g.bench_function("sequential", |b| {
        b.iter(|| par::sequential(|| capture(&setup.scene, &k, &setup.trajectory, &req).expect("capture")))
    });
    g.finish();
}

fn bench_kernels(c: &mut Criterion) {
    let setup = bundled_scene_with_size("rocks", 1024).expect("scene");
    let t = setup.trajectory.domain().0 + 0.2;
    let pose = setup.trajectory.sample(t).expect("pose");
    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for size in [256usize, 640] {
        let k = setup.intrinsics(size, size).expect("intrinsics");
        let frame = render_frame(&setup.scene, &k, &pose, t).expect("render");
        g.bench_with_input(BenchmarkId::new("render/parallel", size), &size, |b, _| {
            b.iter(|| render_frame(&setup.scene, &k, &pose, t).expect("render"))
        });
        g.bench_with_input(BenchmarkId::new("render/sequential", size), &size, |b, _| {
            b.iter(|| par::sequential(|| render_frame(&setup.scene, &k, &pose, t).expect("render")))
        });
        g.bench_with_input(BenchmarkId::new("resample/parallel", size), &size, |b, _| {
            b.iter(|| resample_area(&frame, size * 3 / 10, size * 3 / 10).expect("resample"))
        });
        g.bench_with_input(BenchmarkId::new("resample/sequential", size), &size, |b, _| {
            b.iter(|| par::sequential(|| resample_area(&frame, size * 3 / 10, size * 3 / 10).expect("resample")))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_capture, bench_kernels);
criterion_main!(benches);
