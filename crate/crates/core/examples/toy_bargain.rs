//! The two-user, four-content toy: the baseline, the cooperative policy, and
//! a brute-force check of the bargaining point.

use cooprec::ccr::{solve_ccr, CcrConfig};
use cooprec::oracle::{enumerate_nash, DEFAULT_GRID_STEP};
use cooprec::scenario::toy_scenario;

fn main() -> cooprec::Result<()> {
    let scenario = toy_scenario();
    let outcome = solve_ccr(&scenario, &CcrConfig::default())?;

    println!("baseline recommendations:\n{}", scenario.baseline.recommendations);
    println!("cooperative recommendations:\n{:.3}", outcome.y_star.as_array());
    println!(
        "provider utility {:.4} -> {:.4} ({:+.1}%)",
        outcome.cp_baseline,
        outcome.cp_utility,
        100.0 * outcome.cp_gain / outcome.cp_baseline
    );
    println!(
        "cdn utility      {:.4} -> {:.4} ({:+.1}%)",
        outcome.cdn_baseline,
        outcome.cdn_utility,
        100.0 * outcome.cdn_gain / outcome.cdn_baseline
    );

    let grid = enumerate_nash(&scenario, DEFAULT_GRID_STEP)?;
    println!(
        "grid scan: {} policies, {} on the frontier, best objective {:.6}",
        grid.feasible_points,
        grid.frontier.len(),
        grid.best_objective().unwrap_or(f64::NAN)
    );
    println!(
        "solver objective {:.6}, dominated by a grid policy: {}",
        outcome.objective.unwrap_or(f64::NAN),
        grid.dominates(outcome.cp_gain, outcome.cdn_gain, 1e-9)
    );
    Ok(())
}
