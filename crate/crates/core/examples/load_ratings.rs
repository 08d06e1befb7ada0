//! Builds an instance from a ratings file instead of synthetic relevances.
//!
//! `cargo run --release --example load_ratings -- ratings.csv`
//! reads `user_id,content_id,rating` rows. Without an argument a small file
//! is written to the temporary directory first.

use std::io::Write;

use cooprec::ccr::{solve_ccr, CcrConfig};
use cooprec::scenario::{generate, load_relevance_csv, GeneratorParams};

const USERS: usize = 6;
const CONTENTS: usize = 40;

fn main() -> cooprec::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let path = std::env::temp_dir().join("cooprec_example_ratings.csv");
            let mut f = std::fs::File::create(&path).expect("temporary file");
            writeln!(f, "userId,movieId,rating").unwrap();
            for u in 0..USERS {
                for i in (u % 3..CONTENTS).step_by(3) {
                    let stars = 0.5 * (1 + (u * 7 + i * 13) % 10) as f64;
                    writeln!(f, "{},{},{}", 100 + u, 2000 + i, stars).unwrap();
                }
            }
            path
        }
    };

    let ratings = load_relevance_csv(&path, USERS, CONTENTS)?;
    println!(
        "{} x {} relevances, {} cells imputed, {} repeated ratings",
        ratings.relevance.nrows(),
        ratings.relevance.ncols(),
        ratings.imputed,
        ratings.duplicates
    );
    let mut params = GeneratorParams::small(USERS, CONTENTS, 2);
    params.latent_rank = 1;
    let scenario = generate(&params, 0, Some(ratings.relevance))?;
    let outcome = solve_ccr(&scenario, &CcrConfig::default())?;
    println!(
        "{:?}: provider {:+.2}%, cdn {:+.2}%",
        outcome.status,
        100.0 * outcome.cp_gain / outcome.cp_baseline,
        100.0 * outcome.cdn_gain / outcome.cdn_baseline
    );
    Ok(())
}
