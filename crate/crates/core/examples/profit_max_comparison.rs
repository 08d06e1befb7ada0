//! Who gains and who loses when the joint policy maximizes total profit
//! instead of splitting the surplus.

use cooprec::ccrcache::{profit_max_baseline, solve_ccrcache, CcrCacheConfig};
use cooprec::scenario::{generate, toy_scenario, GeneratorParams};

fn main() -> cooprec::Result<()> {
    let instances = [
        ("toy", toy_scenario()),
        ("20x500", generate(&GeneratorParams::scenario_two().scaled(20, 500), 1, None)?),
    ];
    println!("{:>8} {:>22} {:>22}", "", "bargaining cp / cdn %", "max profit cp / cdn %");
    for (name, scenario) in instances {
        let joint = solve_ccrcache(&scenario, &CcrCacheConfig::default())?;
        let o = &joint.outcome;
        let pm = profit_max_baseline(&scenario)?;
        println!(
            "{name:>8} {:>10.2} / {:>8.2} {:>10.2} / {:>8.2}",
            100.0 * o.cp_gain / o.cp_baseline,
            100.0 * o.cdn_gain / o.cdn_baseline,
            100.0 * pm.cp_gain() / pm.cp_baseline,
            100.0 * pm.cdn_gain() / pm.cdn_baseline
        );
    }
    Ok(())
}
