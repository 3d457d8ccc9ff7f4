use evmbound_core::bounds::*;
use evmbound_core::fixtures;
use evmbound_core::GasSchedule;

fn sum(report: &BoundReport) -> SymbolicBound {
    report.entries.iter().fold(SymbolicBound::zero(), |acc, (_, b)| acc.add(b))
}

#[test]
fn partitions_add_up_to_the_whole() {
    let schedule = GasSchedule::default();
    for f in fixtures::all() {
        let cfg = f.cfg();
        let split = f.split(&cfg);
        let sm = f.source_map();
        let layout = f.layout();
        let env = Env::new(&schedule).with_srcmap(Some(&sm));
        for sig in f.signatures() {
            let unit = split.find(sig).unwrap();
            let a = FunctionAnalysis::new(&cfg, unit, Some(&layout));
            for resource in [Resource::Gas, Resource::Instructions] {
                let all = a.compute(&CostModelConfig::new(resource, Scope::All, vec![]).0, &env).unwrap();
                let whole = all.get("all").unwrap().clone();
                for scope in [Scope::GasFamily, Scope::Line, Scope::Selected] {
                    let part = a.compute(&CostModelConfig::new(resource, scope, vec![]).0, &env).unwrap();
                    assert_eq!(sum(&part), whole, "{} {sig} {resource} {scope}", f.name);
                }
            }
        }
    }
}

#[test]
fn family_partition_matches_gas_family_scope() {
    let schedule = GasSchedule::default();
    let f = fixtures::fill();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let unit = split.find("fill(uint256[])").unwrap();
    let parts = family_partition(&cfg, unit, &Env::new(&schedule)).unwrap();
    let total = parts.values().fold(SymbolicBound::zero(), |acc, b| acc.add(b));
    let all = compute_bound(&cfg, unit, None, &CostModelConfig::gas(Scope::All), &Env::new(&schedule)).unwrap();
    assert_eq!(&total, all.get("all").unwrap());
    assert!(parts["SSTORE"].linear_coefficient("data") > parts["verylow"].linear_coefficient("data"));
}

#[test]
fn filters_select_subsets() {
    let schedule = GasSchedule::default();
    let f = fixtures::fill();
    let cfg = f.cfg();
    let split = f.split(&cfg);
    let layout = f.layout();
    let unit = split.find("fill(uint256[])").unwrap();
    let a = FunctionAnalysis::new(&cfg, unit, Some(&layout));
    let env = Env::new(&schedule);
    let sel = a.compute(&CostModelConfig::gas(Scope::Selected).with_filter(&["sstore", "SLOAD"]), &env).unwrap();
    assert_eq!(sel.entries.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>(), ["SSTORE", "SLOAD"]);
    assert!(a.compute(&CostModelConfig::gas(Scope::Selected).with_filter(&["NOPE"]), &env).is_err());
    assert!(a.compute(&CostModelConfig::gas(Scope::Storage).with_filter(&["missing"]), &env).is_err());
    assert!(a.compute(&CostModelConfig::gas(Scope::Line), &env).is_err());
}
