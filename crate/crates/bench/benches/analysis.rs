use criterion::{black_box, criterion_group, criterion_main, Criterion};
use evmbound_core::bounds::{CostModelConfig, Env, FunctionAnalysis, Scope};
use evmbound_core::fixtures;
use evmbound_core::interp::execute;
use evmbound_core::{build_cfg, disassemble, GasSchedule};

fn cfg_construction(c: &mut Criterion) {
    let code = fixtures::nested_loops().code();
    c.bench_function("disassemble+cfg nested_loops", |b| {
        b.iter(|| build_cfg(&disassemble(black_box(&code)).unwrap()).unwrap())
    });
}

fn bounds(c: &mut Criterion) {
    let schedule = GasSchedule::default();
    let mut group = c.benchmark_group("bound");
    for (name, sig) in [("fill", "fill(uint256[])"), ("nested_loops", "grid(uint256)")] {
        let f = fixtures::by_name(name).unwrap();
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let layout = f.layout();
        let unit = split.find(sig).unwrap();
        for scope in [Scope::All, Scope::Storage] {
            group.bench_function(format!("{name}/{scope}"), |b| {
                b.iter(|| {
                    let a = FunctionAnalysis::new(&cfg, unit, Some(&layout));
                    a.compute(&CostModelConfig::gas(scope), &Env::new(&schedule)).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn interpreter(c: &mut Criterion) {
    let schedule = GasSchedule::default();
    let f = fixtures::fill();
    let code = f.code();
    let storage = f.initial_storage();
    let calldata = f.calldata("fill(uint256[])", 64);
    c.bench_function("execute fill data=64", |b| {
        b.iter(|| execute(black_box(&code), &calldata, &storage, &schedule, 100_000_000))
    });
}

criterion_group!(benches, cfg_construction, bounds, interpreter);
criterion_main!(benches);
