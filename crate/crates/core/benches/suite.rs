use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kaya_core::dbdl::TestSuite;
use kaya_core::minisol::SourceUnit;
use kaya_core::report::{build_report, DEFAULT_THRESHOLD};
use kaya_core::runner::{run_suite, RunOptions};
use kaya_testkit::{gen, rng};

fn workload(cases: usize) -> (Vec<SourceUnit>, TestSuite) {
    let mut r = rng(7);
    let decl = gen::contract(&mut r, "B");
    let suite = TestSuite {
        cases: (0..cases)
            .map(|i| gen::case(&mut r, &decl, &format!("b{i}")))
            .collect(),
    };
    (
        vec![SourceUnit {
            text: String::new(),
            contracts: vec![decl],
        }],
        suite,
    )
}

fn bench_suite(c: &mut Criterion) {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut group = c.benchmark_group("run_suite");
    for cases in [32usize, 256] {
        let (sources, suite) = workload(cases);
        for (label, jobs) in [("sequential", 1), ("parallel", threads)] {
            let opts = RunOptions {
                step_limit: 20_000,
                jobs,
            };
            group.bench_with_input(BenchmarkId::new(label, cases), &cases, |b, _| {
                b.iter(|| {
                    let results = run_suite(&suite, &sources, &opts).unwrap();
                    build_report(&results, DEFAULT_THRESHOLD)
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_suite);
criterion_main!(benches);
