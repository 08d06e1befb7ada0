//! Joint recommendation and caching next to recommendation alone and the
//! aggregate-profit policy, on a single-cache instance.
//!
//! `cargo run --release --example ccrcache_vs_ccr -- [users] [contents] [seed]`
//! (defaults 20 users, 500 contents, seed 1).

use cooprec::metrics::{run_solver, SolverChoice, SolverSettings};
use cooprec::scenario::{generate, GeneratorParams};

fn main() -> cooprec::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let users = args.first().copied().unwrap_or(20) as usize;
    let contents = args.get(1).copied().unwrap_or(500) as usize;
    let seed = args.get(2).copied().unwrap_or(1);
    let scenario = generate(&GeneratorParams::scenario_two().scaled(users, contents), seed, None)?;
    let settings = SolverSettings::default();

    // The percentage columns divide by different provider baselines: the
    // recommendation-only bargain ignores traffic outside the recommendations
    // while the joint one counts it. The absolute gains are comparable.
    println!(
        "{:>10} {:>9} {:>9} {:>10} {:>10} {:>9} {:>8}",
        "solver", "cp %", "cdn %", "cp gain", "cdn gain", "hit", "iters"
    );
    for solver in [SolverChoice::Ccr, SolverChoice::CcrCache, SolverChoice::ProfitMax] {
        let report = run_solver(&scenario, solver, &settings)?;
        let m = &report.metrics;
        println!(
            "{:>10} {:>9.2} {:>9.2} {:>10.4} {:>10.4} {:>9.4} {:>8}",
            solver.name(),
            m.cp_gain_pct,
            m.cdn_gain_pct,
            m.cp_gain,
            m.cdn_gain,
            m.hit_rate,
            m.iterations
        );
        if let Some(x) = &report.cache {
            let cached = x.0.iter().filter(|&&v| v > 0.5).count();
            println!("{:>10} {cached} contents mostly cached, {:.1} of {:.0} slots used", "", x.total(), scenario.topology.capacities[0]);
        }
    }
    Ok(())
}
