//! One pass/fail line per primary acceptance criterion.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::*;
use evmbound_core::bounds::*;
use evmbound_core::fixtures::{self, Fixture};
use evmbound_core::interp::{execute, MeasureContext};
use evmbound_core::optimizer::{optimize_function, ratio_to_f64, summarize_storage, detect_candidates, transform};
use evmbound_core::GasSchedule;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::ToPrimitive;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, err: impl Into<String>) -> Outcome {
    if cond { Ok(ok.into()) } else { Err(err.into()) }
}

fn gas_all(f: &Fixture, sig: &str, pricing: SstorePricing) -> SymbolicBound {
    let s = GasSchedule::default();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let a = FunctionAnalysis::new(&cfg, split.find(sig).unwrap(), Some(&layout));
    let r = a.compute(&CostModelConfig::gas(Scope::All), &Env::new(&s).with_pricing(pricing)).unwrap();
    r.get("all").unwrap().clone()
}

fn soundness() -> Outcome {
    let start = Instant::now();
    let s = GasSchedule::default();
    let mut checks = 0usize;
    let mut violations = Vec::new();
    let set: Vec<Fixture> = fixtures::all().into_iter().filter(|f| f.executable).collect();
    for f in &set {
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let sm = f.source_map();
        let layout = f.layout();
        let storage = f.initial_storage();
        for ff in &f.functions {
            let unit = split.find(ff.signature).unwrap();
            let a = FunctionAnalysis::new(&cfg, unit, Some(&layout));
            let env = Env::new(&s).with_srcmap(Some(&sm));
            let ctx = MeasureContext::new(&s).for_function(&cfg, unit).with_layout(Some(&layout)).with_srcmap(Some(&sm));
            let runs: Vec<_> = (0..=8u64)
                .map(|d| {
                    let cd = f.calldata(ff.signature, d);
                    let ex = execute(&f.code(), &cd, &storage, &s, 100_000_000);
                    let b = a.params.bindings(&cd, &storage);
                    (d, ex, b)
                })
                .collect();
            for resource in [Resource::Gas, Resource::Instructions] {
                for scope in Scope::ALL {
                    let config = CostModelConfig::new(resource, scope, vec![]).0;
                    let report = a.compute(&config, &env).map_err(|e| e.to_string())?;
                    for (d, ex, b) in &runs {
                        if !ex.outcome.is_success() {
                            violations.push(format!("{} d={d}: {:?}", f.name, ex.outcome));
                            continue;
                        }
                        for (key, measured) in ctx.project(&ex.state.events, &config) {
                            checks += 1;
                            let ok = report.get(&key).is_some_and(|bound| match bound.evaluate(b) {
                                Ok(Evaluated::Finite(x)) => x >= measured,
                                Ok(Evaluated::Infinite) => true,
                                Err(_) => false,
                            });
                            if !ok {
                                violations.push(format!("{} {} {resource}/{scope} d={d} {key}", f.name, ff.signature));
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        set.len() >= 8 && violations.is_empty() && elapsed < Duration::from_secs(60),
        format!("{} fixtures, {checks} checks, 0 violations, {:.2}s", set.len(), elapsed.as_secs_f64()),
        format!("{} fixtures, violations: {:?}, {:.2}s", set.len(), violations, elapsed.as_secs_f64()),
    )
}

fn storage_optimization_bound() -> Outcome {
    let f = fixtures::fill();
    let s = GasSchedule::default();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let a = FunctionAnalysis::new(&cfg, split.find("fill(uint256[])").unwrap(), Some(&layout));
    let r = a.compute(&CostModelConfig::gas(Scope::StorageOptimization), &Env::new(&s)).map_err(|e| e.to_string())?;
    let got = r.get("totalSupply").cloned().unwrap_or_else(SymbolicBound::unbounded);
    let want = SymbolicBound::from_poly(Poly::param("data").scale(&BigRational::from_integer(2.into())));
    check(got == want, format!("totalSupply = {}", got.render()), format!("totalSupply = {}", got.render()))
}

fn storage_dominance() -> Outcome {
    let f = fixtures::fill();
    let s = GasSchedule::default();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let a = FunctionAnalysis::new(&cfg, split.find("fill(uint256[])").unwrap(), Some(&layout));
    let env = Env::new(&s);
    let storage = a.compute(&CostModelConfig::gas(Scope::Storage), &env).map_err(|e| e.to_string())?;
    let all = a.compute(&CostModelConfig::gas(Scope::All), &env).map_err(|e| e.to_string())?;
    let num = storage.total().linear_coefficient("data");
    let den = all.total().linear_coefficient("data");
    let ratio = ratio_to_f64(&(&num / &den));
    check(ratio >= 0.95, format!("{num}/{den} = {ratio:.4}"), format!("{num}/{den} = {ratio:.4} < 0.95"))
}

fn partitions() -> Outcome {
    let s = GasSchedule::default();
    let mut n = 0;
    for f in fixtures::all() {
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let sm = f.source_map();
        let env = Env::new(&s).with_srcmap(Some(&sm));
        for sig in f.signatures() {
            let a = FunctionAnalysis::new(&cfg, split.find(sig).unwrap(), None);
            let whole = a.compute(&CostModelConfig::gas(Scope::All), &env).unwrap().total();
            for scope in [Scope::GasFamily, Scope::Line, Scope::Selected] {
                let sum = a.compute(&CostModelConfig::gas(scope), &env).unwrap().total();
                if sum != whole {
                    return Err(format!("{} {sig} {scope}: {} != {}", f.name, sum.render(), whole.render()));
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} family/line/mnemonic partitions equal the all bound"))
}

fn memory_formula() -> Outcome {
    let f = fixtures::fill();
    let s = GasSchedule::default();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let a = FunctionAnalysis::new(&cfg, split.find("fill(uint256[])").unwrap(), None);
    let bound = a.memory_gas(&s);
    let shape_ok = bound.mem_terms.len() == 1
        && bound.mem_terms[0].divisor == 512
        && bound.mem_terms[0].inner.0.degree() == 1
        && bound.poly == bound.mem_terms[0].inner.0.scale(&BigRational::from_integer(3.into()));
    let storage = f.initial_storage();
    let mut rows = Vec::new();
    for d in 0..=8u64 {
        let cd = f.calldata("fill(uint256[])", d);
        let measured = execute(&f.code(), &cd, &storage, &s, 100_000_000).state.memory_gas(&s);
        let b = a.params.bindings(&cd, &storage);
        let eval = bound.evaluate(&b).ok().and_then(|e| e.finite().and_then(|x| x.to_u64()));
        if eval != Some(measured) {
            return Err(format!("d={d}: measured {measured}, bound {eval:?} ({})", bound.render()));
        }
        rows.push(measured);
    }
    check(shape_ok, format!("{} matches {:?}", bound.render(), rows), format!("unexpected shape {}", bound.render()))
}

fn optimization() -> Outcome {
    let s = GasSchedule::default();
    let f = fixtures::fill();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let a = FunctionAnalysis::new(&cfg, split.find("fill(uint256[])").unwrap(), Some(&layout));
    let (mut hits, mut misses) = (0, 0);
    for fx in fixtures::all() {
        let fcfg = fx.cfg();
        let fsplit = fx.split(&fcfg);
        let flayout = fx.layout();
        for sig in fx.signatures() {
            let fa = FunctionAnalysis::new(&fcfg, fsplit.find(sig).unwrap(), Some(&flayout));
            let summary = summarize_storage(&fa);
            let cands = detect_candidates(&summary);
            for (field, acc) in &summary.per_field {
                let detected = cands.iter().any(|c| &c.field == field);
                if detected == (acc.total.is_one() || acc.total.is_zero()) {
                    return Err(format!("{} {sig}: detection wrong for {field} ({})", fx.name, acc.total.render()));
                }
                if detected { hits += 1 } else if acc.total.is_one() { misses += 1 }
            }
        }
    }
    if hits == 0 || misses == 0 {
        return Err(format!("detection not exercised: {hits} candidates, {misses} single accesses"));
    }
    let cands = detect_candidates(&summarize_storage(&a));
    let report = optimize_function(&a, &f.source, "fill(uint256[])", &s).map_err(|e| e.to_string())?;
    if report.new_source.as_deref() != Some(fixtures::FILL_OPT_SOURCE) {
        return Err("transformed fill differs from the golden listing".into());
    }
    let ro_src = "contract C {\n    uint256 x;\n    function g() public view returns (uint256) {\n        return x + x;\n    }\n}\n";
    let mut ro = cands[0].clone();
    ro.read_only = true;
    ro.field = "x".into();
    let t = transform(ro_src, "g()", &ro).map_err(|e| e.to_string())?;
    if t.setter_name.is_some() || t.new_source.contains("set_field_x") {
        return Err("read-only variant got a setter".into());
    }
    let per_iter = |p| {
        let orig = gas_all(&f, "fill(uint256[])", p).linear_coefficient("data");
        let opt = gas_all(&fixtures::fill_opt(), "fill(uint256[])", p).linear_coefficient("data");
        (orig.clone(), opt.clone(), 1.0 - ratio_to_f64(&(opt / orig)))
    };
    let (wo, wn, worst) = per_iter(SstorePricing::Worst);
    let (bo, bn, best) = per_iter(SstorePricing::Best);
    check(
        worst >= 0.40 && best >= 0.15,
        format!(
            "{hits} candidates, {misses} single-access fields skipped; golden ok; per-iteration {wo} -> {wn} ({:.2}% worst), {bo} -> {bn} ({:.2}% best)",
            worst * 100.0,
            best * 100.0,
        ),
        format!("per-iteration reduction {:.2}% worst, {:.2}% best", worst * 100.0, best * 100.0),
    )
}

fn safety() -> Outcome {
    let s = GasSchedule::default();
    let mut reasons = Vec::new();
    for f in [fixtures::transitive_access(), fixtures::external_call()] {
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let layout = f.layout();
        for sig in f.signatures() {
            let a = FunctionAnalysis::new(&cfg, split.find(sig).unwrap(), Some(&layout));
            let report = optimize_function(&a, &f.source, sig, &s).map_err(|e| e.to_string())?;
            if report.candidates.is_empty() {
                return Err(format!("{}: no candidate to reject", f.name));
            }
            if report.new_source.is_some() || report.candidates.iter().any(|(c, _)| c.safe) {
                return Err(format!("{} was transformed", f.name));
            }
            reasons.extend(report.candidates.iter().filter_map(|(c, _)| c.reason_if_unsafe.clone()));
        }
    }
    Ok(format!("both rejected: {}", reasons.join("; ")))
}

fn unbounded() -> Outcome {
    let f = fixtures::unresolvable_loop();
    let schedule = GasSchedule::default();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let a = FunctionAnalysis::new(&cfg, split.find("grow(uint256)").unwrap(), Some(&layout));
    let env = Env::new(&schedule);
    let all = a.compute(&CostModelConfig::gas(Scope::All), &env).map_err(|e| e.to_string())?;
    let st = a.compute(&CostModelConfig::gas(Scope::Storage), &env).map_err(|e| e.to_string())?;
    let bounded: Vec<String> =
        st.entries.iter().filter(|(_, b)| !b.unbounded).map(|(k, b)| format!("{k}: {}", b.render())).collect();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = write_fixture(dir.path(), &f);
    let o = run(&["analyze", s(&files.code), "--function", "grow(uint256)"]);
    let text = stdout(&o);
    check(
        all.has_unbounded() && o.status.code() == Some(2) && text.contains("inf") && !bounded.is_empty(),
        format!("all: {}; exit 2; bounded {}", all.total().render(), bounded.join(", ")),
        format!("all: {}; exit {:?}; bounded {:?}", all.total().render(), o.status.code(), bounded),
    )
}

fn spot_check() -> Outcome {
    let mut p = Poly::int(1077);
    p = p.add(&Poly::param("data").scale(&BigRational::from_integer(40896.into())));
    let b = SymbolicBound::from_poly(p);
    let at = |d: u64| BTreeMap::from([("data".to_string(), BigUint::from(d))]);
    let v = b.evaluate(&at(2)).map_err(|e| e.to_string())?;
    let mem = SymbolicBound::memory(Poly::param("data").add(&Poly::int(5)), 3, 512);
    let m = mem.evaluate(&at(0)).map_err(|e| e.to_string())?;
    let (v, m) = (v.finite().cloned(), m.finite().cloned());
    check(
        v == Some(BigUint::from(82869u32)) && m == Some(BigUint::from(15u32)),
        "82869 and 15",
        format!("{v:?} and {m:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("soundness matrix", soundness),
        ("storage-optimization bound 2*data", storage_optimization_bound),
        ("storage dominance >= 0.95", storage_dominance),
        ("partition identities", partitions),
        ("memory gas formula", memory_formula),
        ("optimization detection and transformation", optimization),
        ("safety conservatism", safety),
        ("unbounded fallback", unbounded),
        ("evaluate spot-check", spot_check),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
