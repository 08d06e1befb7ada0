//! Gains, hit rate and quality of recommendations as the discount grows.
//!
//! `cargo run --release --example discount_sweep -- [users] [contents] [seed]`
//! (defaults 30 users, 600 contents, seed 1).

use cooprec::metrics::{grid, sweep_discount, SolverChoice, SolverSettings};
use cooprec::scenario::{generate, GeneratorParams};

fn main() -> cooprec::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let users = args.first().copied().unwrap_or(30) as usize;
    let contents = args.get(1).copied().unwrap_or(600) as usize;
    let seed = args.get(2).copied().unwrap_or(1);

    let scenario = generate(&GeneratorParams::scenario_one().scaled(users, contents), seed, None)?;
    let rhos = grid(0.05, 0.45, 0.05)?;
    let report = sweep_discount(&scenario, &rhos, SolverChoice::Ccr, &SolverSettings::default())?;

    println!("{:>5} {:>13} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6}", "rho", "status", "cp %", "cdn %", "total %", "hit", "base", "qor");
    for r in &report.rows {
        println!(
            "{:>5.2} {:>13} {:>8.2} {:>8.2} {:>8.2} {:>8.4} {:>8.4} {:>6.3}",
            r.rho, r.status, r.cp_gain_pct, r.cdn_gain_pct, r.total_gain_pct, r.hit_rate, r.baseline_hit_rate, r.qor
        );
    }
    println!("{:?}", report.trends);
    Ok(())
}
