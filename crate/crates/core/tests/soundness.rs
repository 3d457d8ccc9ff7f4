use evmbound_core::bounds::*;
use evmbound_core::fixtures;
use evmbound_core::interp::*;
use evmbound_core::GasSchedule;

#[test]
fn measured_cost_never_exceeds_bound() {
    let s = GasSchedule::default();
    let mut bad = 0;
    for f in fixtures::all().into_iter().filter(|f| f.executable) {
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let sm = f.source_map();
        let layout = f.layout();
        for ff in &f.functions {
            let u = split.find(ff.signature).unwrap();
            let a = FunctionAnalysis::new(&cfg, u, Some(&layout));
            let env = Env::new(&s).with_srcmap(Some(&sm));
            let ctx = MeasureContext::new(&s).for_function(&cfg, u).with_layout(Some(&layout)).with_srcmap(Some(&sm));
            for res in [Resource::Gas, Resource::Instructions] {
                for scope in Scope::ALL {
                    let (cfgm, _) = CostModelConfig::new(res, scope, vec![]);
                    let r = a.compute(&cfgm, &env).unwrap();
                    for d in 0..=8u64 {
                        let cd = f.calldata(ff.signature, d);
                        let ex = execute(&f.code(), &cd, &f.initial_storage(), &s, 100_000_000);
                        assert!(ex.outcome.is_success(), "{} {:?}", f.name, ex.outcome);
                        let m = ctx.project(&ex.state.events, &cfgm);
                        let b = a.params.bindings(&cd, &f.initial_storage());
                        for (k, v) in &m {
                            let bound = r.get(k).unwrap_or_else(|| panic!("{} key {k} missing", f.name));
                            match bound.evaluate(&b) {
                                Ok(Evaluated::Finite(x)) if &x >= v => {}
                                Ok(Evaluated::Infinite) => {}
                                other => { bad += 1; eprintln!("violation: {} {} {:?} {:?} d={d} key={k} measured={v} bound={} {:?}", f.name, ff.signature, res, scope, bound.render(), other); }
                            }
                        }
                        if let Some(mg) = &r.memory_gas {
                            if let Ok(Evaluated::Finite(x)) = mg.evaluate(&b) {
                                let mine = ex.state.memory_gas(&s);
                                if x < mine.into() { bad += 1; eprintln!("memory violation: {} d={d} {x} < {mine}", f.name); }
                            }
                        }
                    }
                }
            }
        }
    }
    assert_eq!(bad, 0);
}
