//! Brute-force references for tiny instances and finite differences.
//!
//! Nothing here calls the solvers; only the utility model is shared.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, CacheVector, RecommendationMatrix, Scenario, UtilityCoefficients};

/// Size guard of the grid oracles, in control variables.
pub const ORACLE_MAX_VARIABLES: usize = 12;

/// Default grid spacing of [`enumerate_nash`].
pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// Gains count as improvements only above this fraction of
/// `max(|U^b|, |U~^b|, 1)`; smaller ones are rounding noise on ties.
pub const RELATIVE_GAIN_TOLERANCE: f64 = 1e-7;

/// A non-dominated point of the enumerated gain set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub cp_gain: f64,
    pub cdn_gain: f64,
    #[serde(with = "crate::matrix_serde")]
    pub y: Array2<f64>,
}

impl FrontierPoint {
    /// `-log(cp_gain) - log(cdn_gain)`, when both gains are positive.
    pub fn objective(&self) -> Option<f64> {
        (self.cp_gain > 0.0 && self.cdn_gain > 0.0).then(|| -self.cp_gain.ln() - self.cdn_gain.ln())
    }

    fn improves(&self, tolerance: f64) -> bool {
        self.cp_gain > tolerance && self.cdn_gain > tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashEnumeration {
    pub step: f64,
    /// Number of row-feasible policies covered: grid points plus discrete
    /// policies, counted per row and multiplied across rows.
    pub feasible_points: u128,
    /// Every enumerated policy not dominated by another one, ordered by
    /// decreasing provider gain. All other policies are dominated.
    pub frontier: Vec<FrontierPoint>,
    /// Index into `frontier` of the smallest Nash objective, absent when no
    /// enumerated policy improves both parties by more than `gain_tolerance`.
    pub best: Option<usize>,
    pub gain_tolerance: f64,
}

impl NashEnumeration {
    pub fn best_point(&self) -> Option<&FrontierPoint> {
        self.best.map(|i| &self.frontier[i])
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best_point().and_then(FrontierPoint::objective)
    }

    /// Whether some enumerated policy gives both parties at least these gains
    /// and their sum more than `tolerance` above.
    pub fn dominates(&self, cp_gain: f64, cdn_gain: f64, tolerance: f64) -> bool {
        self.frontier.iter().any(|p| {
            p.cp_gain >= cp_gain && p.cdn_gain >= cdn_gain && p.cp_gain + p.cdn_gain > cp_gain + cdn_gain + tolerance
        })
    }
}

/// Exhaustive scan of the Nash product over every row-feasible grid policy
/// (entries multiple of `step`, row sums within half a step of `N_u`) and
/// every discrete policy.
///
/// The product only depends on the pair of gains, which is a sum of per-row
/// contributions, so rows are reduced to their non-dominated contributions
/// and combined pairwise with dominated sums discarded. The result is the
/// same as scanning the full product of row sets.
pub fn enumerate_nash(scenario: &Scenario, step: f64) -> Result<NashEnumeration> {
    let coeffs = UtilityCoefficients::from_scenario(scenario);
    enumerate_nash_with(&coeffs, &scenario.users.rec_count, step)
}

pub fn enumerate_nash_with(coeffs: &UtilityCoefficients, rec_count: &[usize], step: f64) -> Result<NashEnumeration> {
    let (users, contents) = coeffs.dim();
    guard(users * contents)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step {step} outside (0, 1]")));
    }
    if rec_count.len() != users {
        return Err(Error::Dimension(format!("{} recommendation counts for {users} users", rec_count.len())));
    }

    let rows: Vec<Vec<Vec<f64>>> = (0..users)
        .map(|u| row_candidates(contents, rec_count[u] as f64, step))
        .collect();
    let feasible_points = rows.iter().map(|r| r.len() as u128).product();

    // Per-row frontier of (cp, cdn) contributions, each with its row vector.
    let mut combined: Vec<Partial> = vec![Partial {
        cp: -coeffs.cp_baseline,
        cdn: -coeffs.cdn_baseline,
        rows: Vec::new(),
    }];
    for (u, candidates) in rows.iter().enumerate() {
        let row_front = pareto(
            candidates
                .iter()
                .map(|v| Partial {
                    cp: v.iter().zip(coeffs.cp.row(u)).map(|(a, b)| a * b).sum(),
                    cdn: v.iter().zip(coeffs.cdn.row(u)).map(|(a, b)| a * b).sum(),
                    rows: vec![v.clone()],
                })
                .collect(),
        );
        let sums: Vec<Partial> = combined
            .par_iter()
            .flat_map_iter(|acc| {
                row_front.iter().map(move |r| {
                    let mut rows = acc.rows.clone();
                    rows.push(r.rows[0].clone());
                    Partial {
                        cp: acc.cp + r.cp,
                        cdn: acc.cdn + r.cdn,
                        rows,
                    }
                })
            })
            .collect();
        combined = pareto(sums);
    }

    let frontier: Vec<FrontierPoint> = combined
        .into_iter()
        .map(|p| FrontierPoint {
            cp_gain: p.cp,
            cdn_gain: p.cdn,
            y: Array2::from_shape_fn((users, contents), |(u, i)| p.rows[u][i]),
        })
        .collect();
    let gain_tolerance =
        RELATIVE_GAIN_TOLERANCE * coeffs.cp_baseline.abs().max(coeffs.cdn_baseline.abs()).max(1.0);
    let best = frontier
        .iter()
        .enumerate()
        .filter(|(_, p)| p.improves(gain_tolerance))
        .filter_map(|(k, p)| p.objective().map(|o| (k, o)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    Ok(NashEnumeration {
        step,
        feasible_points,
        frontier,
        best,
        gain_tolerance,
    })
}

fn guard(variables: usize) -> Result<()> {
    if variables > ORACLE_MAX_VARIABLES {
        return Err(Error::TooLarge {
            variables,
            limit: ORACLE_MAX_VARIABLES,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Partial {
    cp: f64,
    cdn: f64,
    rows: Vec<Vec<f64>>,
}

/// Keeps the points no other point weakly dominates; among equal gain pairs
/// the first one listed survives.
fn pareto(mut points: Vec<Partial>) -> Vec<Partial> {
    // Stable sort keeps the enumeration order among exact ties.
    points.sort_by(|a, b| b.cp.total_cmp(&a.cp).then(b.cdn.total_cmp(&a.cdn)));
    let mut out: Vec<Partial> = Vec::new();
    let mut best_cdn = f64::NEG_INFINITY;
    for p in points {
        if p.cdn > best_cdn {
            best_cdn = p.cdn;
            out.push(p);
        }
    }
    out
}

/// All vectors of length `contents` with entries on the grid whose sum is
/// within half a step of `target`, plus every 0/1 vector summing to
/// `target`.
fn row_candidates(contents: usize, target: f64, step: f64) -> Vec<Vec<f64>> {
    let levels = (1.0 / step + 1e-9).floor() as usize;
    let values: Vec<f64> = (0..=levels).map(|k| (k as f64 * step).min(1.0)).collect();
    let mut out = Vec::new();
    let mut current = vec![0.0; contents];
    fill(&values, target, step / 2.0, 0, 0.0, &mut current, &mut out);

    let mut binary = vec![0.0; contents];
    push_binary(target.round() as usize, 0, &mut binary, &mut out);
    out.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out.dedup();
    out
}

fn fill(values: &[f64], target: f64, slack: f64, pos: usize, sum: f64, current: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    let remaining = current.len() - pos;
    if remaining == 0 {
        if (sum - target).abs() <= slack + 1e-12 {
            out.push(current.clone());
        }
        return;
    }
    for &v in values {
        let s = sum + v;
        // Entries are at most 1, so the rest can add at most `remaining - 1`.
        if s > target + slack + 1e-12 {
            break;
        }
        if s + (remaining - 1) as f64 + slack + 1e-12 < target {
            continue;
        }
        current[pos] = v;
        fill(values, target, slack, pos + 1, s, current, out);
    }
    current[pos] = 0.0;
}

fn push_binary(ones: usize, pos: usize, current: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    let left = current.len() - pos;
    if ones > left {
        return;
    }
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    if ones > 0 {
        current[pos] = 1.0;
        push_binary(ones - 1, pos + 1, current, out);
        current[pos] = 0.0;
    }
    push_binary(ones, pos + 1, current, out);
}

/// Central differences `(f(p + h e_k) - f(p - h e_k)) / 2h` for every
/// coordinate.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64], h: f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + h;
            let up = f(&p);
            p[k] = orig - h;
            let down = f(&p);
            p[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// [`finite_difference_gradient`] for a function of a matrix.
pub fn finite_difference_matrix(f: impl Fn(&Array2<f64>) -> f64, point: &Array2<f64>, h: f64) -> Array2<f64> {
    let dim = point.dim();
    let flat: Vec<f64> = point.iter().copied().collect();
    let g = finite_difference_gradient(
        |v| f(&Array2::from_shape_vec(dim, v.to_vec()).expect("shape")),
        &flat,
        h,
    );
    Array2::from_shape_vec(dim, g).expect("shape")
}

/// Best joint policies on a grid for the single-cache extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEnumeration {
    pub evaluated: usize,
    /// Smallest `-log(U - U^b) - log(V - V^b)` and where it is reached.
    pub best_objective: Option<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub best_y: Array2<f64>,
    pub best_x: Vec<f64>,
    /// Largest undiscounted `U + V` and where it is reached.
    pub best_profit: f64,
    #[serde(with = "crate::matrix_serde")]
    pub profit_y: Array2<f64>,
    pub profit_x: Vec<f64>,
}

/// Scans every discrete recommendation policy against every caching vector
/// on a grid of spacing `x_step` within the cache capacity.
pub fn enumerate_joint(scenario: &Scenario, x_step: f64) -> Result<JointEnumeration> {
    scenario.require_single_cache()?;
    let cp_base = model::cp_baseline_utility(scenario);
    let cdn_base = model::cdn_baseline_utility_with_caching(scenario)?;
    let (users, contents) = scenario.shape();
    guard(users * contents)?;
    if !(x_step > 0.0 && x_step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step {x_step} outside (0, 1]")));
    }
    let capacity = scenario.topology.capacities[0];

    let rows: Vec<Vec<Vec<f64>>> = (0..users)
        .map(|u| {
            let mut out = Vec::new();
            push_binary(scenario.users.rec_count[u], 0, &mut vec![0.0; contents], &mut out);
            out
        })
        .collect();
    let levels = (1.0 / x_step + 1e-9).floor() as usize;
    let values: Vec<f64> = (0..=levels).map(|k| (k as f64 * x_step).min(1.0)).collect();
    let mut caches = Vec::new();
    cache_grid(&values, capacity, 0, 0.0, &mut vec![0.0; contents], &mut caches);

    // Undiscounted profit pieces.
    let lambda = scenario.pricing.lambda;
    let root = &scenario.topology.root_cost;
    let saving: Vec<f64> = (0..users)
        .map(|u| root[u] - scenario.topology.single_cache_cost(u))
        .collect();
    let profit = |y: &Array2<f64>, x: &[f64]| -> f64 {
        let mut total = 0.0;
        for u in 0..users {
            let w = scenario.users.click_weight(u);
            let miss = 1.0 - scenario.users.alpha[u];
            for i in 0..contents {
                let cost = root[u] - x[i] * saving[u];
                total += w * y[[u, i]] * (scenario.pricing.revenue[[u, i]] - cost);
                total += miss * scenario.catalog.popularity[i] * (lambda - cost);
            }
        }
        total
    };

    let mut policies: Vec<Array2<f64>> = vec![Array2::zeros((0, contents))];
    for row_set in &rows {
        policies = policies
            .iter()
            .flat_map(|p| {
                row_set.iter().map(move |r| {
                    let mut q = p.clone();
                    q.push_row(ndarray::ArrayView1::from(r)).expect("row width");
                    q
                })
            })
            .collect();
    }

    let mut best_objective: Option<f64> = None;
    let mut best = (Array2::zeros((users, contents)), vec![0.0; contents]);
    let mut best_profit = f64::NEG_INFINITY;
    let mut profit_at = best.clone();
    let mut evaluated = 0;
    for y in &policies {
        let rec = RecommendationMatrix::new(y.clone())?;
        let a = model::cp_utility(scenario, &rec)? - cp_base;
        for x in &caches {
            evaluated += 1;
            let xv = CacheVector::new(Array1::from(x.clone()))?;
            let v = model::cdn_utility_with_caching(scenario, &rec, &xv)? - cdn_base;
            if a > 0.0 && v > 0.0 {
                let o = -a.ln() - v.ln();
                if best_objective.is_none_or(|b| o < b) {
                    best_objective = Some(o);
                    best = (y.clone(), x.clone());
                }
            }
            let p = profit(y, x);
            if p > best_profit {
                best_profit = p;
                profit_at = (y.clone(), x.clone());
            }
        }
    }
    Ok(JointEnumeration {
        evaluated,
        best_objective,
        best_y: best.0,
        best_x: best.1,
        best_profit,
        profit_y: profit_at.0,
        profit_x: profit_at.1,
    })
}

fn cache_grid(values: &[f64], capacity: f64, pos: usize, sum: f64, current: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for &v in values {
        if sum + v > capacity + 1e-9 {
            break;
        }
        current[pos] = v;
        cache_grid(values, capacity, pos + 1, sum + v, current, out);
    }
    current[pos] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn coefficients(cp: Array2<f64>, cdn: Array2<f64>, bases: (f64, f64)) -> UtilityCoefficients {
        UtilityCoefficients {
            cp,
            cdn,
            cp_baseline: bases.0,
            cdn_baseline: bases.1,
        }
    }

    #[test]
    fn one_user_two_contents_scans_the_segment() {
        let c = coefficients(array![[1.0, 0.0]], array![[0.0, 1.0]], (0.0, 0.0));
        let e = enumerate_nash_with(&c, &[1], 0.05).unwrap();
        assert_eq!(e.feasible_points, 21);
        // Every point of the segment trades one party against the other.
        assert_eq!(e.frontier.len(), 21);
        let best = e.best_point().unwrap();
        assert!((best.y[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((e.best_objective().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equal_margins_collapse_to_one_gain_pair() {
        let c = coefficients(array![[1.0, 1.0, 1.0]], array![[2.0, 2.0, 2.0]], (0.5, 0.5));
        let e = enumerate_nash_with(&c, &[1], 0.1).unwrap();
        assert_eq!(e.frontier.len(), 1);
        assert!(e.feasible_points > 1);
        assert!((e.frontier[0].cp_gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_scan_on_two_users() {
        let c = coefficients(
            array![[0.3, 0.1, 0.2], [0.05, 0.4, 0.1]],
            array![[0.1, 0.35, 0.15], [0.3, 0.05, 0.2]],
            (0.2, 0.2),
        );
        let e = enumerate_nash_with(&c, &[1, 1], 0.1).unwrap();
        let rows = row_candidates(3, 1.0, 0.1);
        let mut naive = f64::INFINITY;
        for a in &rows {
            for b in &rows {
                let y = Array2::from_shape_fn((2, 3), |(u, i)| if u == 0 { a[i] } else { b[i] });
                let (g1, g2) = (c.cp_gain(y.view()), c.cdn_gain(y.view()));
                if g1 > 0.0 && g2 > 0.0 {
                    naive = naive.min(-g1.ln() - g2.ln());
                }
            }
        }
        assert!((e.best_objective().unwrap() - naive).abs() < 1e-12);
        assert_eq!(e.feasible_points, (rows.len() * rows.len()) as u128);
    }

    #[test]
    fn dominance_test() {
        let c = coefficients(array![[1.0, 0.0]], array![[0.0, 1.0]], (0.0, 0.0));
        let e = enumerate_nash_with(&c, &[1], 0.5).unwrap();
        assert!(e.dominates(0.4, 0.4, 1e-9));
        assert!(!e.dominates(0.5, 0.5, 1e-9));
    }

    #[test]
    fn oversized_instances_are_refused() {
        let c = coefficients(Array2::zeros((2, 7)), Array2::zeros((2, 7)), (0.0, 0.0));
        assert!(matches!(
            enumerate_nash_with(&c, &[1, 1], 0.05),
            Err(Error::TooLarge { variables: 14, .. })
        ));
    }

    #[test]
    fn rows_respect_sum_tolerance() {
        for v in row_candidates(4, 2.0, 0.3) {
            assert!((v.iter().sum::<f64>() - 2.0).abs() <= 0.15 + 1e-12);
            assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        // Step 0.3 misses 1.0, so the discrete rows are added explicitly.
        assert!(row_candidates(3, 1.0, 0.3).contains(&vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn finite_differences() {
        let linear = |v: &[f64]| 3.0 * v[0] - 2.0 * v[1] + 0.5 * v[2];
        let g = finite_difference_gradient(linear, &[0.3, 0.7, -1.0], 1e-6);
        for (a, b) in g.iter().zip([3.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-8);
        }
        let log = |v: &[f64]| (2.0 * v[0] + v[1]).ln();
        let p = [0.4, 0.3];
        let g = finite_difference_gradient(log, &p, 1e-6);
        let s = 2.0 * p[0] + p[1];
        assert!((g[0] - 2.0 / s).abs() / (2.0 / s) < 1e-5);
        assert!((g[1] - 1.0 / s).abs() / (1.0 / s) < 1e-5);
        let sym = |v: &[f64]| v[0] * v[0] + v[1] * v[1];
        let a = finite_difference_gradient(sym, &[0.2, 0.5], 1e-6);
        let b = finite_difference_gradient(sym, &[0.5, 0.2], 1e-6);
        assert!((a[0] - b[1]).abs() < 1e-9 && (a[1] - b[0]).abs() < 1e-9);
    }
}
