//! Euclidean projections onto the feasible sets of the solvers, and the
//! feasibility phase that produces a strictly improving starting point.
//!
//! Each user's recommendation row lives in the capped simplex
//! `{w : sum w = N_u, 0 <= w <= 1}`, optionally intersected with a
//! quality-of-recommendation half-space `{w : <r_u, w> >= N_u T_u}`. The cache
//! vector lives in `{w : sum w <= C, 0 <= w <= 1}`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{RecommendationMatrix, Scenario, UtilityCoefficients};

/// Absolute tolerance on the row sum reached by the shift search.
pub const SUM_TOLERANCE: f64 = 1e-10;
const SHIFT_SEARCH_CAP: usize = 200;

/// Dykstra iterations allowed for the quality half-space.
pub const DYKSTRA_MAX_ITERATIONS: usize = 200;
pub const DYKSTRA_TOLERANCE: f64 = 1e-9;

/// Rows are projected in parallel once the matrix has this many entries.
const PARALLEL_ENTRIES: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CappedSimplexSpec {
    pub target_sum: f64,
    pub dimension: usize,
}

impl CappedSimplexSpec {
    pub fn new(target_sum: f64, dimension: usize) -> Result<Self> {
        if !(target_sum > 0.0 && target_sum <= dimension as f64) {
            return Err(Error::Infeasible(format!(
                "capped simplex with sum {target_sum} in dimension {dimension}"
            )));
        }
        Ok(CappedSimplexSpec {
            target_sum,
            dimension,
        })
    }
}

/// Projection onto `{w : sum w = target, 0 <= w <= 1}`.
pub fn project_capped_simplex(v: &[f64], spec: &CappedSimplexSpec) -> Result<Vec<f64>> {
    let spec = CappedSimplexSpec::new(spec.target_sum, spec.dimension)?;
    if v.len() != spec.dimension {
        return Err(Error::Dimension(format!(
            "vector of length {} for a simplex of dimension {}",
            v.len(),
            spec.dimension
        )));
    }
    check_finite(v)?;
    let mut w = v.to_vec();
    project_capped_simplex_in_place(&mut w, spec.target_sum);
    Ok(w)
}

/// Projection onto `{w : sum w <= capacity, 0 <= w <= 1}`.
pub fn project_cache_capacity(v: &[f64], capacity: f64) -> Result<Vec<f64>> {
    if !(capacity > 0.0) {
        return Err(Error::Contract(format!(
            "cache capacity {capacity} must be positive"
        )));
    }
    check_finite(v)?;
    let mut w = v.to_vec();
    project_cache_capacity_in_place(&mut w, capacity);
    Ok(w)
}

/// Projection onto the capped simplex intersected with `{w : <a, w> >= floor}`,
/// by Dykstra's alternating projections. The result always lies exactly in the
/// capped simplex; the half-space holds to [`DYKSTRA_TOLERANCE`] once the
/// alternation has converged.
pub fn project_capped_simplex_with_floor(
    v: &[f64],
    spec: &CappedSimplexSpec,
    weights: &[f64],
    floor: f64,
) -> Result<Vec<f64>> {
    let spec = CappedSimplexSpec::new(spec.target_sum, spec.dimension)?;
    if v.len() != spec.dimension || weights.len() != spec.dimension {
        return Err(Error::Dimension("weights and point must match the simplex".into()));
    }
    check_finite(v)?;
    let mut w = v.to_vec();
    project_with_floor_in_place(&mut w, spec.target_sum, weights, floor);
    Ok(w)
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("non-finite input to projection".into()));
    }
    Ok(())
}

/// Shift search on `tau` in `w_i = clip(v_i - tau, 0, 1)`.
///
/// `sum_i w_i(tau)` is piecewise linear and nonincreasing; the bracket is
/// narrowed by bisection, with a Newton step on the current free set whenever
/// it lands strictly inside the bracket. The Newton step is exact once the
/// free set is right.
pub(crate) fn project_capped_simplex_in_place(v: &mut [f64], target: f64) {
    let n = v.len();
    if target >= n as f64 {
        v.fill(1.0);
        return;
    }
    let (mut lo, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // sum(lo - 1) = n >= target, sum(hi) = 0 <= target
    lo -= 1.0;
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..SHIFT_SEARCH_CAP {
        let (mut sum, mut free) = (0.0, 0usize);
        for &x in v.iter() {
            let w = x - tau;
            if w >= 1.0 {
                sum += 1.0;
            } else if w > 0.0 {
                sum += w;
                free += 1;
            }
        }
        let excess = sum - target;
        if excess.abs() <= SUM_TOLERANCE * 0.01 {
            break;
        }
        if excess > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = if free > 0 {
            tau + excess / free as f64
        } else {
            f64::NAN
        };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == tau || hi - lo <= f64::EPSILON * (1.0 + hi.abs().max(lo.abs())) {
            tau = next;
            break;
        }
        tau = next;
    }
    for x in v.iter_mut() {
        *x = (*x - tau).clamp(0.0, 1.0);
    }
}

pub(crate) fn project_cache_capacity_in_place(v: &mut [f64], capacity: f64) {
    let clipped: f64 = v.iter().map(|x| x.clamp(0.0, 1.0)).sum();
    if clipped <= capacity {
        v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    } else {
        project_capped_simplex_in_place(v, capacity);
    }
}

pub(crate) fn project_with_floor_in_place(v: &mut [f64], target: f64, weights: &[f64], floor: f64) {
    let norm2: f64 = weights.iter().map(|a| a * a).sum();
    let n = v.len();
    let mut x = v.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..DYKSTRA_MAX_ITERATIONS {
        // half-space step
        for i in 0..n {
            y[i] = x[i] + p[i];
        }
        let level: f64 = y.iter().zip(weights).map(|(a, b)| a * b).sum();
        if level < floor && norm2 > 0.0 {
            let shift = (floor - level) / norm2;
            y.iter_mut().zip(weights).for_each(|(a, w)| *a += shift * w);
        }
        for i in 0..n {
            p[i] = x[i] + p[i] - y[i];
            next[i] = y[i] + q[i];
        }
        // simplex step
        project_capped_simplex_in_place(&mut next, target);
        let mut change = 0.0;
        for i in 0..n {
            q[i] = y[i] + q[i] - next[i];
            change += (next[i] - x[i]) * (next[i] - x[i]);
        }
        std::mem::swap(&mut x, &mut next);
        let level: f64 = x.iter().zip(weights).map(|(a, b)| a * b).sum();
        if change.sqrt() <= DYKSTRA_TOLERANCE && level >= floor - DYKSTRA_TOLERANCE {
            break;
        }
    }
    v.copy_from_slice(&x);
}

/// Per-user row constraints of a recommendation matrix.
#[derive(Clone, Debug)]
pub struct RecommendationPolytope {
    rec_count: Vec<usize>,
    quality: Option<QualityFloors>,
}

/// Rows of `{w : <r_u, w> >= N_u T_u}`.
#[derive(Clone, Debug)]
struct QualityFloors {
    relevance: Array2<f64>,
    floors: Vec<f64>,
}

/// How tightly a matrix satisfies the polytope.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstraintSlack {
    /// Largest `|sum_i y_ui - N_u|`.
    pub max_row_sum_error: f64,
    /// Largest distance of an entry outside [0, 1] (0 when inside).
    pub max_box_violation: f64,
    /// Smallest `<r_u, y_u> - N_u T_u`, when quality floors are active.
    pub min_quality_slack: Option<f64>,
}

impl RecommendationPolytope {
    /// Rows of the scenario, plus quality floors when `thresholds` is given.
    pub fn new(scenario: &Scenario, thresholds: Option<&[f64]>) -> Result<Self> {
        let rec_count = scenario.users.rec_count.clone();
        let quality = match thresholds {
            None => None,
            Some(t) => {
                if t.len() != rec_count.len() {
                    return Err(Error::Dimension(format!(
                        "{} quality thresholds for {} users",
                        t.len(),
                        rec_count.len()
                    )));
                }
                if let Some(v) = t.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "quality threshold {v} outside (0, 1]"
                    )));
                }
                Some(QualityFloors {
                    relevance: scenario.users.relevance.clone(),
                    floors: t
                        .iter()
                        .zip(&rec_count)
                        .map(|(t, &n)| t * n as f64)
                        .collect(),
                })
            }
        };
        Ok(RecommendationPolytope { rec_count, quality })
    }

    /// Plain capped simplices, no quality floors.
    pub fn from_rec_count(rec_count: Vec<usize>) -> Self {
        RecommendationPolytope {
            rec_count,
            quality: None,
        }
    }

    pub fn rec_count(&self) -> &[usize] {
        &self.rec_count
    }

    pub fn has_quality_floors(&self) -> bool {
        self.quality.is_some()
    }

    /// Whether some row cannot reach its quality floor even with its most
    /// relevant items.
    pub fn first_unreachable_row(&self) -> Option<usize> {
        let q = self.quality.as_ref()?;
        q.relevance
            .outer_iter()
            .zip(&q.floors)
            .zip(&self.rec_count)
            .position(|((row, &floor), &n)| top_sum(row.as_slice().unwrap(), n) < floor)
    }

    /// Projects every row of a users x contents matrix stored row-major.
    pub(crate) fn project_flat(&self, y: &mut [f64]) {
        let users = self.rec_count.len();
        if users == 0 {
            return;
        }
        let contents = y.len() / users;
        let project_row = |(u, row): (usize, &mut [f64])| {
            let n = self.rec_count[u] as f64;
            match &self.quality {
                None => project_capped_simplex_in_place(row, n),
                Some(q) => project_with_floor_in_place(
                    row,
                    n,
                    q.relevance.row(u).as_slice().unwrap(),
                    q.floors[u],
                ),
            }
        };
        if y.len() >= PARALLEL_ENTRIES {
            y.par_chunks_mut(contents).enumerate().for_each(project_row);
        } else {
            y.chunks_mut(contents).enumerate().for_each(project_row);
        }
    }

    pub fn project(&self, y: &mut Array2<f64>) {
        let flat = y
            .as_slice_mut()
            .expect("recommendation matrices are stored row-major");
        self.project_flat(flat);
    }

    pub fn slack(&self, y: &Array2<f64>) -> ConstraintSlack {
        let max_row_sum_error = y
            .outer_iter()
            .zip(&self.rec_count)
            .map(|(row, &n)| (row.sum() - n as f64).abs())
            .fold(0.0, f64::max);
        let max_box_violation = y
            .iter()
            .map(|&v| (-v).max(v - 1.0).max(0.0))
            .fold(0.0, f64::max);
        let min_quality_slack = self.quality.as_ref().map(|q| {
            q.relevance
                .outer_iter()
                .zip(y.outer_iter())
                .zip(&q.floors)
                .map(|((r, row), f)| r.dot(&row) - f)
                .fold(f64::INFINITY, f64::min)
        });
        ConstraintSlack {
            max_row_sum_error,
            max_box_violation,
            min_quality_slack,
        }
    }
}

fn top_sum(values: &[f64], n: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[..n].iter().sum()
}

/// Knobs of the feasibility phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorConfig {
    /// Supergradient iterations used when quality floors are active.
    pub iterations: usize,
    /// First supergradient step as a fraction of the feasible set's diameter;
    /// step `t` is this divided by `sqrt(t)`.
    pub initial_step_fraction: f64,
    /// A point is interior when both gains exceed
    /// `margin_scale * max(|U^b|, |U~^b|, 1)`.
    pub margin_scale: f64,
}

impl Default for InteriorConfig {
    fn default() -> Self {
        InteriorConfig {
            iterations: 500,
            initial_step_fraction: 0.1,
            margin_scale: 1e-7,
        }
    }
}

/// A recommendation policy strictly improving both parties' utilities.
#[derive(Clone, Debug)]
pub struct InteriorPoint {
    pub y: RecommendationMatrix,
    pub cp_gain: f64,
    pub cdn_gain: f64,
    pub slack: ConstraintSlack,
}

#[derive(Clone, Debug)]
pub enum Feasibility {
    Interior(InteriorPoint),
    /// No policy improves both utilities by more than the margin. Carries the
    /// best `min(cp_gain, cdn_gain)` found.
    Disagreement { best_margin: f64 },
}

impl Feasibility {
    pub fn is_disagreement(&self) -> bool {
        matches!(self, Feasibility::Disagreement { .. })
    }
}

/// Maximizes `min(U(Y) - U^b, U~(Y) - U~^b)` over the polytope.
pub fn find_interior_point(scenario: &Scenario, polytope: &RecommendationPolytope) -> Feasibility {
    let coeffs = UtilityCoefficients::from_scenario(scenario);
    find_interior_point_with(&coeffs, polytope, &InteriorConfig::default())
}

pub fn interior_margin(coeffs: &UtilityCoefficients, config: &InteriorConfig) -> f64 {
    config.margin_scale * coeffs.cp_baseline.abs().max(coeffs.cdn_baseline.abs()).max(1.0)
}

/// Feasibility phase on precomputed utility coefficients.
///
/// Without quality floors the max-min problem is solved exactly through its
/// dual: `max_Y min(g1, g2) = min_theta max_Y theta g1 + (1 - theta) g2`, where
/// the inner maximum is a per-row top-`N_u` selection. Bisection on `theta`
/// isolates the two vertices adjacent to the optimum, and mixing them equalizes
/// the gains. With quality floors, that point (pulled toward the baseline
/// until the floors hold) seeds a projected supergradient ascent.
pub fn find_interior_point_with(
    coeffs: &UtilityCoefficients,
    polytope: &RecommendationPolytope,
    config: &InteriorConfig,
) -> Feasibility {
    let margin = interior_margin(coeffs, config);
    if polytope.first_unreachable_row().is_some() {
        return Feasibility::Disagreement {
            best_margin: f64::NEG_INFINITY,
        };
    }
    let (mut y, mut g1, mut g2) = exact_max_min(coeffs, polytope.rec_count());
    let relaxed = g1.min(g2);
    if relaxed <= margin {
        return Feasibility::Disagreement {
            best_margin: relaxed,
        };
    }
    if let Some(q) = &polytope.quality {
        let (point, a, b) = quality_feasible_ascent(coeffs, polytope, q, &y, config);
        y = point;
        g1 = a;
        g2 = b;
        if g1.min(g2) <= margin {
            return Feasibility::Disagreement {
                best_margin: g1.min(g2),
            };
        }
    }
    let slack = polytope.slack(&y);
    Feasibility::Interior(InteriorPoint {
        y: RecommendationMatrix::from_clamped(y),
        cp_gain: g1,
        cdn_gain: g2,
        slack,
    })
}

/// Per-row top-`N_u` policy for the weighted score `theta cp + (1 - theta) cdn`.
/// Ties go to the larger `cp + cdn`, then to the lower index.
pub(crate) fn weighted_vertex(coeffs: &UtilityCoefficients, rec_count: &[usize], theta: f64) -> Array2<f64> {
    let (users, contents) = coeffs.dim();
    let mut y = Array2::zeros((users, contents));
    let mut order: Vec<usize> = Vec::with_capacity(contents);
    let mut score = vec![0.0; contents];
    let mut total = vec![0.0; contents];
    for u in 0..users {
        let cp = coeffs.cp.row(u);
        let cdn = coeffs.cdn.row(u);
        for i in 0..contents {
            score[i] = theta * cp[i] + (1.0 - theta) * cdn[i];
            total[i] = cp[i] + cdn[i];
        }
        order.clear();
        order.extend(0..contents);
        let n = rec_count[u];
        let cmp = |a: &usize, b: &usize| {
            score[*b]
                .total_cmp(&score[*a])
                .then(total[*b].total_cmp(&total[*a]))
                .then(a.cmp(b))
        };
        if n < contents {
            order.select_nth_unstable_by(n - 1, cmp);
        }
        for &i in &order[..n] {
            y[[u, i]] = 1.0;
        }
    }
    y
}

fn exact_max_min(coeffs: &UtilityCoefficients, rec_count: &[usize]) -> (Array2<f64>, f64, f64) {
    let gains = |y: &Array2<f64>| (coeffs.cp_gain(y.view()), coeffs.cdn_gain(y.view()));
    let y_lo = weighted_vertex(coeffs, rec_count, 0.0);
    let (a_lo, b_lo) = gains(&y_lo);
    if a_lo >= b_lo {
        return (y_lo, a_lo, b_lo);
    }
    let y_hi = weighted_vertex(coeffs, rec_count, 1.0);
    let (a_hi, b_hi) = gains(&y_hi);
    if a_hi <= b_hi {
        return (y_hi, a_hi, b_hi);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut lo_pt, mut hi_pt) = ((y_lo, a_lo, b_lo), (y_hi, a_hi, b_hi));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y = weighted_vertex(coeffs, rec_count, mid);
        let (a, b) = gains(&y);
        if a < b {
            lo = mid;
            lo_pt = (y, a, b);
        } else {
            hi = mid;
            hi_pt = (y, a, b);
        }
    }
    let (y_lo, a_lo, b_lo) = lo_pt;
    let (y_hi, a_hi, b_hi) = hi_pt;
    let d_lo = a_lo - b_lo;
    let d_hi = a_hi - b_hi;
    let t = -d_lo / (d_hi - d_lo);
    let y = &y_hi * t + &y_lo * (1.0 - t);
    let (a, b) = gains(&y);
    (y, a, b)
}

fn quality_feasible_ascent(
    coeffs: &UtilityCoefficients,
    polytope: &RecommendationPolytope,
    q: &QualityFloors,
    relaxed: &Array2<f64>,
    config: &InteriorConfig,
) -> (Array2<f64>, f64, f64) {
    // Largest mixture toward the relaxed optimum that keeps every floor; the
    // baseline keeps them whenever any point does.
    let baseline = weighted_vertex_quality_seed(coeffs, q, polytope.rec_count());
    let mut t: f64 = 1.0;
    for ((r, (yb, yr)), &floor) in q
        .relevance
        .outer_iter()
        .zip(baseline.outer_iter().zip(relaxed.outer_iter()))
        .zip(&q.floors)
    {
        let lb = r.dot(&yb);
        let lr = r.dot(&yr);
        if lr < floor && lb > lr {
            t = t.min(((lb - floor) / (lb - lr)).max(0.0));
        }
    }
    let mut y = &baseline * (1.0 - t) + relaxed * t;
    polytope.project(&mut y);

    let gains = |y: &Array2<f64>| (coeffs.cp_gain(y.view()), coeffs.cdn_gain(y.view()));
    let (mut best_a, mut best_b) = gains(&y);
    let mut best = y.clone();
    let diameter = (2.0 * polytope.rec_count().iter().sum::<usize>() as f64).sqrt();
    let cp_norm = coeffs.cp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cdn_norm = coeffs.cdn.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut a, mut b) = (best_a, best_b);
    for t in 1..=config.iterations {
        let step = config.initial_step_fraction * diameter / (t as f64).sqrt();
        let (dir, norm) = if a <= b {
            (&coeffs.cp, cp_norm)
        } else {
            (&coeffs.cdn, cdn_norm)
        };
        if norm == 0.0 {
            break;
        }
        y.scaled_add(step / norm, dir);
        polytope.project(&mut y);
        (a, b) = gains(&y);
        if a.min(b) > best_a.min(best_b) {
            best.assign(&y);
            best_a = a;
            best_b = b;
        }
    }
    (best, best_a, best_b)
}

/// Most relevant `N_u` items per user: the policy that maximizes every row's
/// quality level.
fn weighted_vertex_quality_seed(
    coeffs: &UtilityCoefficients,
    q: &QualityFloors,
    rec_count: &[usize],
) -> Array2<f64> {
    let relevance_coeffs = UtilityCoefficients {
        cp: q.relevance.clone(),
        cdn: Array2::zeros(q.relevance.dim()),
        cp_baseline: 0.0,
        cdn_baseline: 0.0,
    };
    debug_assert_eq!(coeffs.dim(), q.relevance.dim());
    weighted_vertex(&relevance_coeffs, rec_count, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_oracle_simplex(v: &[f64], target: f64, step: f64) -> Vec<f64> {
        // 3-d brute force over the constraint set
        let levels = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..=levels {
            for b in 0..=levels {
                let (wa, wb) = (a as f64 * step, b as f64 * step);
                let wc = target - wa - wb;
                if !(-1e-12..=1.0 + 1e-12).contains(&wc) {
                    continue;
                }
                let w = [wa, wb, wc];
                let d: f64 = w.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.0 {
                    best = (d, w.to_vec());
                }
            }
        }
        best.1
    }

    #[test]
    fn feasible_point_is_fixed() {
        let v = [0.25, 0.75, 0.5, 0.5];
        let spec = CappedSimplexSpec::new(2.0, 4).unwrap();
        let w = project_capped_simplex(&v, &spec).unwrap();
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturating_entries() {
        let spec = CappedSimplexSpec::new(2.0, 4).unwrap();
        let w = project_capped_simplex(&[10.0, 10.0, -10.0, -10.0], &spec).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_grid_oracle() {
        let v = [0.9, 0.5, 0.1];
        let spec = CappedSimplexSpec::new(1.0, 3).unwrap();
        let w = project_capped_simplex(&v, &spec).unwrap();
        let oracle = grid_oracle_simplex(&v, 1.0, 1e-4);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-3, "{w:?} vs {oracle:?}");
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn infeasible_spec_is_an_error() {
        assert!(CappedSimplexSpec::new(5.0, 4).is_err());
        assert!(CappedSimplexSpec::new(0.0, 4).is_err());
        let bad = CappedSimplexSpec {
            target_sum: 5.0,
            dimension: 4,
        };
        assert!(project_capped_simplex(&[0.0; 4], &bad).is_err());
        let ok = CappedSimplexSpec::new(1.0, 2).unwrap();
        assert!(project_capped_simplex(&[f64::NAN, 0.0], &ok).is_err());
    }

    #[test]
    fn capacity_projection_cases() {
        // clip only
        assert_eq!(
            project_cache_capacity(&[1.5, -0.5, 0.3], 2.0).unwrap(),
            vec![1.0, 0.0, 0.3]
        );
        // symmetric KKT point
        let w = project_cache_capacity(&[1.0, 1.0, 1.0], 2.0).unwrap();
        for x in &w {
            assert!((x - 2.0 / 3.0).abs() < 1e-12);
        }
        let oracle = grid_oracle_simplex(&[1.0, 1.0, 1.0], 2.0, 1e-3);
        for (a, b) in w.iter().zip(&oracle) {
            assert!((a - b).abs() < 2e-3);
        }
        // capacity above the dimension
        assert_eq!(
            project_cache_capacity(&[2.0, 0.5, -1.0], 5.0).unwrap(),
            vec![1.0, 0.5, 0.0]
        );
        assert!(project_cache_capacity(&[0.5], 0.0).is_err());
    }

    #[test]
    fn floor_projection_meets_half_space() {
        let spec = CappedSimplexSpec::new(1.0, 3).unwrap();
        let weights = [0.9, 0.5, 0.1];
        let w = project_capped_simplex_with_floor(&[0.0, 0.0, 1.0], &spec, &weights, 0.6).unwrap();
        let level: f64 = w.iter().zip(&weights).map(|(a, b)| a * b).sum();
        assert!(level >= 0.6 - 1e-8, "level {level}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // inactive floor leaves the plain projection
        let plain = project_capped_simplex(&[0.2, 0.5, 0.6], &spec).unwrap();
        let floored = project_capped_simplex_with_floor(&[0.2, 0.5, 0.6], &spec, &weights, 0.0).unwrap();
        for (a, b) in plain.iter().zip(&floored) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_projection_matches_grid_oracle() {
        let v = [0.1, 0.3, 0.9];
        let weights = [1.0, 0.6, 0.1];
        let floor = 0.7;
        let spec = CappedSimplexSpec::new(1.0, 3).unwrap();
        let w = project_capped_simplex_with_floor(&v, &spec, &weights, floor).unwrap();
        let step = 1e-3;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for a in 0..=1000 {
            for b in 0..=1000 {
                let p = [a as f64 * step, b as f64 * step, 1.0 - (a + b) as f64 * step];
                if p[2] < -1e-12 {
                    continue;
                }
                let level: f64 = p.iter().zip(&weights).map(|(x, y)| x * y).sum();
                if level < floor {
                    continue;
                }
                let d: f64 = p.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.0 {
                    best = (d, p);
                }
            }
        }
        for (a, b) in w.iter().zip(&best.1) {
            assert!((a - b).abs() < 5e-3, "{w:?} vs {:?}", best.1);
        }
    }

    #[test]
    fn large_rows_are_exact() {
        let v: Vec<f64> = (0..6000).map(|i| ((i * 7919) % 6007) as f64 * 1e-4 - 0.2).collect();
        let spec = CappedSimplexSpec::new(5.0, 6000).unwrap();
        let w = project_capped_simplex(&v, &spec).unwrap();
        assert!((w.iter().sum::<f64>() - 5.0).abs() < SUM_TOLERANCE);
        assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
