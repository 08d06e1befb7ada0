//! Distributed bargaining against the centralized answer, for both penalty
//! presets.
//!
//! `cargo run --release --example dcr_convergence -- [users] [contents] [seed]`
//! (defaults 20 users, 200 contents, seed 2).

use cooprec::ccr::{solve_ccr, CcrConfig};
use cooprec::dcr::{solve_dcr_observed, DcrConfig, PENALTY_PRESETS};
use cooprec::scenario::{generate, GeneratorParams};

fn main() -> cooprec::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let users = args.first().copied().unwrap_or(20) as usize;
    let contents = args.get(1).copied().unwrap_or(200) as usize;
    let seed = args.get(2).copied().unwrap_or(2);
    let scenario = generate(&GeneratorParams::scenario_one().scaled(users, contents), seed, None)?;

    let central = solve_ccr(&scenario, &CcrConfig::default())?;
    let Some(best) = central.objective else {
        println!("no jointly improving policy at this discount");
        return Ok(());
    };
    println!("centralized objective {best:.6}");

    for q in PENALTY_PRESETS {
        println!("\npenalty {q}");
        println!("{:>5} {:>12} {:>12} {:>12}", "iter", "gap", "primal", "dual");
        let config = DcrConfig {
            max_outer_iterations: 50,
            ..DcrConfig::with_penalty(q)
        };
        let solution = solve_dcr_observed(&scenario, &config, |r| {
            if r.iteration <= 5 || r.iteration % 10 == 0 {
                println!(
                    "{:>5} {:>12.3e} {:>12.3e} {:>12.3e}",
                    r.iteration,
                    ((r.objective - best) / best).abs(),
                    r.primal_residual,
                    r.dual_residual
                );
            }
        })?;
        let gap = (solution.outcome.y_star.as_array() - central.y_star.as_array())
            .mapv(|v| v * v)
            .sum()
            .sqrt();
        println!("distance to the centralized policy {gap:.3e} after {} iterations", solution.outcome.iterations);
    }
    Ok(())
}
