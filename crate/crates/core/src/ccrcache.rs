//! Joint cooperative recommendations and caching with a single small cache.
//!
//! The CDN's utility is bilinear in the caching vector `x` and the
//! recommendations `y`. Replacing every product `x_i y_ui` by an auxiliary
//! `z_ui` makes the bargaining objective convex in `(x, y, z)` and moves the
//! non-convexity into the coupling constraints `z_ui = x_i y_ui`, which are
//! handled by ADMM with a scaled multiplier `h`:
//!
//! ```text
//! (y, z) <- argmin -log(U(y) - U^b) - log(G(x, y, z) - V^b) + q/2 ||z - x o y + h||^2
//! x      <- argmin                  - log(G(x, y, z) - V^b) + q/2 ||z - x o y + h||^2
//! h      <- h + (z - x o y)
//! ```
//!
//! The method is a heuristic: nothing guarantees convergence, so runs that
//! stop making progress are cut short and flagged as stalled.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ccr::{minimize_from, top_n_rows, BargainOutcome, CcrConfig, Status};
use crate::dcr::{AdmmIterate, AdmmRecord, AdmmTrace, InnerConfig};
use crate::error::{Error, Result};
use crate::model::{
    CacheVector, CachingCoefficients, RecommendationMatrix, Scenario, UtilityCoefficients,
};
use crate::projection::{
    find_interior_point_with, project_cache_capacity_in_place, Feasibility, InteriorConfig,
    RecommendationPolytope,
};
use crate::spg::{self, Objective};

/// Alternation cap of [`profit_max_baseline`].
pub const PROFIT_MAX_ALTERNATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcrCacheConfig {
    pub penalty_q: f64,
    pub max_outer_iterations: usize,
    /// Stop once `max |z_ui - x_i y_ui|` falls below this.
    pub coupling_tolerance: f64,
    /// A run stalls when neither the objective nor the coupling violation
    /// improved by `stall_threshold` over this many outer iterations.
    pub stall_window: usize,
    pub stall_threshold: f64,
    /// Besides coupling, convergence asks for the projected gradient of the
    /// joint objective at `(y, x)` to fall below this.
    pub stationarity_tolerance: f64,
    pub start: StartPoint,
    pub inner: InnerConfig,
    pub record_iterates: bool,
}

/// Recommendations the run starts from; the cache always starts at `X^b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    /// The bargaining solution with caching fixed at `X^b`.
    #[default]
    Bargain,
    /// The max-min feasibility point at `X^b`.
    Balanced,
}

impl Default for CcrCacheConfig {
    fn default() -> Self {
        CcrCacheConfig {
            penalty_q: 0.01,
            max_outer_iterations: 200,
            coupling_tolerance: 1e-4,
            stall_window: 20,
            stall_threshold: 1e-10,
            stationarity_tolerance: 1e-6,
            start: StartPoint::default(),
            inner: InnerConfig::default(),
            record_iterates: false,
        }
    }
}

impl CcrCacheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_q > 0.0 && self.penalty_q.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "penalty {} must be positive",
                self.penalty_q
            )));
        }
        if !(self.coupling_tolerance > 0.0 && self.stall_threshold > 0.0 && self.stationarity_tolerance > 0.0)
            || self.stall_window == 0
        {
            return Err(Error::InvalidConfig(
                "tolerances, stall threshold and stall window must be positive".into(),
            ));
        }
        self.inner.validate()
    }
}

/// `G(x, y, z)`: the CDN utility with the products `x_i y_ui` replaced by
/// `z_ui`.
pub fn g_function(
    scenario: &Scenario,
    x: &CacheVector,
    y: &RecommendationMatrix,
    z: ArrayView2<'_, f64>,
) -> Result<f64> {
    let coeffs = CachingCoefficients::from_scenario(scenario)?;
    let shape = scenario.shape();
    if y.dim() != shape || z.dim() != shape || x.len() != shape.1 {
        return Err(Error::Dimension(format!(
            "g_function expects {shape:?} matrices and {} cache entries",
            shape.1
        )));
    }
    Ok(coeffs.g_value(&x.0, y.view(), z))
}

/// `(y, z)` block over the concatenation `[y, z]` of two row-major matrices.
struct RecommendationBlock<'a> {
    cp: &'a [f64],
    cp_baseline: f64,
    rec: &'a [f64],
    coupling: &'a [f64],
    /// `<cache, x> + constant - V^b` at the fixed `x`.
    g_offset: f64,
    x: &'a [f64],
    h: &'a [f64],
    q: f64,
    polytope: &'a RecommendationPolytope,
}

impl RecommendationBlock<'_> {
    fn gains(&self, v: &[f64]) -> (f64, f64) {
        let n = self.cp.len();
        let (y, z) = v.split_at(n);
        let (mut a, mut b) = (0.0, self.g_offset);
        for k in 0..n {
            a += self.cp[k] * y[k];
            b += self.rec[k] * y[k] + self.coupling[k] * z[k];
        }
        (a - self.cp_baseline, b)
    }

    fn residual(&self, y: f64, z: f64, k: usize) -> f64 {
        z - self.x[k % self.x.len()] * y + self.h[k]
    }
}

impl Objective for RecommendationBlock<'_> {
    fn value(&self, v: &[f64]) -> Option<f64> {
        let (a, b) = self.gains(v);
        if !(a > 0.0 && b > 0.0) {
            return None;
        }
        let n = self.cp.len();
        let quad: f64 = (0..n)
            .map(|k| self.residual(v[k], v[n + k], k).powi(2))
            .sum();
        Some(-a.ln() - b.ln() + 0.5 * self.q * quad)
    }

    fn gradient(&self, v: &[f64], grad: &mut [f64]) {
        let (a, b) = self.gains(v);
        let (ia, ib) = (1.0 / a, 1.0 / b);
        let n = self.cp.len();
        let contents = self.x.len();
        for k in 0..n {
            let r = self.q * self.residual(v[k], v[n + k], k);
            grad[k] = -ia * self.cp[k] - ib * self.rec[k] - r * self.x[k % contents];
            grad[n + k] = -ib * self.coupling[k] + r;
        }
    }

    fn project(&self, v: &mut [f64]) {
        let (y, z) = v.split_at_mut(self.cp.len());
        self.polytope.project_flat(y);
        z.iter_mut().for_each(|t| *t = t.clamp(0.0, 1.0));
    }
}

/// `x` block. The penalty is separable per content: with
/// `a_i = sum_u y_ui^2` and `b_i = sum_u y_ui (z_ui + h_ui)` it equals
/// `sum_i a_i x_i^2 - 2 b_i x_i` up to a constant.
struct CacheBlock<'a> {
    cache: &'a [f64],
    /// `<rec, y> + <coupling, z> + constant - V^b` at the fixed `(y, z)`.
    g_offset: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    q: f64,
    capacity: f64,
}

impl<'a> CacheBlock<'a> {
    fn new(
        coeffs: &'a CachingCoefficients,
        y: &Array2<f64>,
        z: &Array2<f64>,
        h: &Array2<f64>,
        q: f64,
        capacity: f64,
    ) -> Self {
        let contents = coeffs.cache.len();
        let (mut a, mut b) = (vec![0.0; contents], vec![0.0; contents]);
        for ((yr, zr), hr) in y.outer_iter().zip(z.outer_iter()).zip(h.outer_iter()) {
            for i in 0..contents {
                a[i] += yr[i] * yr[i];
                b[i] += yr[i] * (zr[i] + hr[i]);
            }
        }
        let g_offset = crate::model::dot(coeffs.rec.view(), y.view())
            + crate::model::dot(coeffs.coupling.view(), z.view())
            + coeffs.constant
            - coeffs.baseline;
        CacheBlock {
            cache: coeffs.cache.as_slice().expect("contiguous cache coefficients"),
            g_offset,
            a,
            b,
            q,
            capacity,
        }
    }

    fn gain(&self, x: &[f64]) -> f64 {
        self.g_offset + x.iter().zip(self.cache).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Objective for CacheBlock<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        let g = self.gain(x);
        if !(g > 0.0) {
            return None;
        }
        let quad: f64 = (0..x.len())
            .map(|i| self.a[i] * x[i] * x[i] - 2.0 * self.b[i] * x[i])
            .sum();
        Some(-g.ln() + 0.5 * self.q * quad)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let inv = 1.0 / self.gain(x);
        for i in 0..x.len() {
            grad[i] = -inv * self.cache[i] + self.q * (self.a[i] * x[i] - self.b[i]);
        }
    }

    fn project(&self, x: &mut [f64]) {
        project_cache_capacity_in_place(x, self.capacity);
    }
}

/// Value of the `(y, z)` block objective, or `None` outside its domain.
pub fn recommendation_block_value(
    scenario: &Scenario,
    y: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    h: ArrayView2<'_, f64>,
    q: f64,
) -> Result<Option<f64>> {
    let parts = BlockParts::new(scenario)?;
    let (x, h) = (x.to_owned(), h.to_owned());
    let block = parts.recommendation_block(&x, &h, q);
    Ok(block.value(&stack(y, z)))
}

/// Gradient of the `(y, z)` block objective, returned as `(d/dy, d/dz)`.
pub fn recommendation_block_gradient(
    scenario: &Scenario,
    y: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    h: ArrayView2<'_, f64>,
    q: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let parts = BlockParts::new(scenario)?;
    let (x, h) = (x.to_owned(), h.to_owned());
    let block = parts.recommendation_block(&x, &h, q);
    let v = stack(y, z);
    let (a, b) = block.gains(&v);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Barrier {
            cp_gain: a,
            cdn_gain: b,
        });
    }
    let mut grad = vec![0.0; v.len()];
    block.gradient(&v, &mut grad);
    let n = v.len() / 2;
    let gz = grad.split_off(n);
    Ok((
        Array2::from_shape_vec(y.dim(), grad).expect("shape"),
        Array2::from_shape_vec(y.dim(), gz).expect("shape"),
    ))
}

/// Value of the `x` block objective, up to a constant independent of `x`.
pub fn cache_block_value(
    scenario: &Scenario,
    x: ArrayView1<'_, f64>,
    y: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    q: f64,
) -> Result<Option<f64>> {
    let parts = BlockParts::new(scenario)?;
    let block = CacheBlock::new(&parts.caching, &y.to_owned(), &z.to_owned(), &h.to_owned(), q, parts.capacity);
    Ok(block.value(&x.to_vec()))
}

/// Gradient of the `x` block objective.
pub fn cache_block_gradient(
    scenario: &Scenario,
    x: ArrayView1<'_, f64>,
    y: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    q: f64,
) -> Result<Array1<f64>> {
    let parts = BlockParts::new(scenario)?;
    let block = CacheBlock::new(&parts.caching, &y.to_owned(), &z.to_owned(), &h.to_owned(), q, parts.capacity);
    let x = x.to_vec();
    let g = block.gain(&x);
    if !(g > 0.0) {
        return Err(Error::Barrier {
            cp_gain: f64::NAN,
            cdn_gain: g,
        });
    }
    let mut grad = vec![0.0; x.len()];
    block.gradient(&x, &mut grad);
    Ok(Array1::from(grad))
}

fn stack(y: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Vec<f64> {
    y.iter().chain(z.iter()).copied().collect()
}

struct BlockParts {
    utility: UtilityCoefficients,
    caching: CachingCoefficients,
    polytope: RecommendationPolytope,
    capacity: f64,
}

impl BlockParts {
    fn new(scenario: &Scenario) -> Result<Self> {
        Ok(BlockParts {
            utility: UtilityCoefficients::from_scenario(scenario),
            caching: CachingCoefficients::from_scenario(scenario)?,
            polytope: RecommendationPolytope::from_rec_count(scenario.users.rec_count.clone()),
            capacity: scenario.topology.capacities[0],
        })
    }

    fn recommendation_block<'a>(&'a self, x: &'a Array1<f64>, h: &'a Array2<f64>, q: f64) -> RecommendationBlock<'a> {
        RecommendationBlock {
            cp: self.utility.cp.as_slice().expect("row-major"),
            cp_baseline: self.utility.cp_baseline,
            rec: self.caching.rec.as_slice().expect("row-major"),
            coupling: self.caching.coupling.as_slice().expect("row-major"),
            g_offset: self.caching.cache.dot(x) + self.caching.constant - self.caching.baseline,
            x: x.as_slice().expect("contiguous"),
            h: h.as_slice().expect("row-major"),
            q,
            polytope: &self.polytope,
        }
    }
}

/// Result of a joint caching run.
#[derive(Clone, Debug)]
pub struct CcrCacheSolution {
    /// Gains and utilities of the CDN are the exact bilinear `V(x, y)` and
    /// `V^b`, including requests made outside of the recommendations.
    pub outcome: BargainOutcome,
    pub cache: CacheVector,
    pub trace: AdmmTrace,
    /// The run stopped making progress before meeting the coupling
    /// tolerance; the returned policy is the iterate with the smallest
    /// coupling violation.
    pub stalled: bool,
    /// Largest `|z_ui - x_i y_ui|` at the returned iterate.
    pub coupling_violation: f64,
    pub z: Array2<f64>,
    pub h: Array2<f64>,
}

struct Candidate {
    y: Array2<f64>,
    x: Array1<f64>,
    z: Array2<f64>,
    coupling: f64,
}

/// Norm of the projected gradient of `-log(U(y) - U^b) - log(V(x, y) - V^b)`
/// over both blocks, or infinity outside the domain.
fn joint_stationarity(parts: &BlockParts, y: &Array2<f64>, x: &Array1<f64>) -> f64 {
    let c = &parts.caching;
    let a = parts.utility.cp_gain(y.view());
    let v = c.v_gain(x, y.view());
    if !(a > 0.0 && v > 0.0) {
        return f64::INFINITY;
    }
    let mut step_y = y.clone();
    let mut gx = c.cache.clone();
    for (u, mut row) in step_y.outer_iter_mut().enumerate() {
        for (i, t) in row.iter_mut().enumerate() {
            let coupling = c.coupling[[u, i]];
            let g = -parts.utility.cp[[u, i]] / a - (c.rec[[u, i]] + coupling * x[i]) / v;
            *t -= g;
            gx[i] += coupling * y[[u, i]];
        }
    }
    parts.polytope.project(&mut step_y);
    let mut step_x: Vec<f64> = x.iter().zip(&gx).map(|(xi, g)| xi + g / v).collect();
    project_cache_capacity_in_place(&mut step_x, parts.capacity);
    let dy: f64 = (&step_y - y).iter().map(|d| d * d).sum();
    let dx: f64 = step_x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    (dy + dx).sqrt()
}

pub fn solve_ccrcache(scenario: &Scenario, config: &CcrCacheConfig) -> Result<CcrCacheSolution> {
    config.validate()?;
    let parts = BlockParts::new(scenario)?;
    let shape = scenario.shape();
    let xb = scenario.baseline_cache_vector()?.0;
    let start = match find_interior_point_with(&parts.utility, &parts.polytope, &InteriorConfig::default()) {
        Feasibility::Disagreement { .. } => {
            let yb = scenario.baseline.recommendations.mapv(f64::from);
            let cdn_baseline = parts.caching.baseline;
            let z = &yb * &xb;
            return Ok(CcrCacheSolution {
                outcome: BargainOutcome::disagreement(yb, parts.utility.cp_baseline, cdn_baseline),
                cache: CacheVector(xb),
                trace: AdmmTrace::default(),
                stalled: false,
                coupling_violation: 0.0,
                z,
                h: Array2::zeros(shape),
            });
        }
        Feasibility::Interior(p) => p.y.into_array(),
    };
    let start = match config.start {
        StartPoint::Balanced => start,
        StartPoint::Bargain => {
            minimize_from(&parts.utility, &parts.polytope, start, &CcrConfig::default())?
                .y_star
                .into_array()
        }
    };

    let q = config.penalty_q;
    let caching = &parts.caching;
    let mut y = start.clone();
    let mut x = xb.clone();
    let mut z = &y * &x;
    // Scaled multipliers that make `z = x o y` stationary for the auxiliary
    // block at the start point, so the first step does not inflate every
    // `z_ui` before the multipliers have caught up.
    let start_gain = caching.v_gain(&x, y.view());
    let mut h: Array2<f64> = caching.coupling.mapv(|c| c / (q * start_gain));
    let mut trace = AdmmTrace::default();
    let mut best: Option<Candidate> = None;
    let mut best_objective = f64::INFINITY;
    let mut best_coupling = f64::INFINITY;
    let mut best_stationarity = f64::INFINITY;
    let mut last_progress = 0;
    let mut converged = false;
    let mut stalled = false;

    for k in 1..=config.max_outer_iterations {
        let settings = config.inner.settings(k);
        let previous_product = &y * &x;

        let mut v = stack(y.view(), z.view());
        let rec_out = {
            let block = parts.recommendation_block(&x, &h, q);
            spg::minimize(&block, &mut v, &settings)?
        };
        let zv = v.split_off(v.len() / 2);
        y = Array2::from_shape_vec(shape, v).expect("shape");
        z = Array2::from_shape_vec(shape, zv).expect("shape");
        let cp_gain = parts.utility.cp_gain(y.view());
        let stale_gain = caching.g_value(&x, y.view(), z.view()) - caching.baseline;

        let cache_block = CacheBlock::new(caching, &y, &z, &h, q, parts.capacity);
        let mut xs = x.to_vec();
        let cache_out = spg::minimize(&cache_block, &mut xs, &settings)?;
        x = Array1::from(xs);
        let fresh_gain = caching.g_value(&x, y.view(), z.view()) - caching.baseline;

        let product = &y * &x;
        let residual = &z - &product;
        h += &residual;
        let coupling = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let primal = frobenius(&residual);
        let dual = q * frobenius(&(&product - &previous_product));
        let objective = -cp_gain.ln() - stale_gain.ln();

        let record = AdmmRecord {
            iteration: k,
            primal_residual: primal,
            dual_residual: dual,
            objective,
            cp_gain,
            cdn_gain: stale_gain,
            inner_converged: rec_out.converged && cache_out.converged,
            coupling_violation: Some(coupling),
            fresh_cdn_gain: Some(fresh_gain),
        };
        trace.records.push(record);
        if config.record_iterates {
            trace.iterates.push(AdmmIterate {
                psi: y.clone(),
                psi_tilde: z.clone(),
                z: h.clone(),
            });
        }

        let exact_valid = cp_gain > 0.0 && caching.v_gain(&x, y.view()) > 0.0;
        if exact_valid && best.as_ref().is_none_or(|b| coupling < b.coupling) {
            best = Some(Candidate {
                y: y.clone(),
                x: x.clone(),
                z: z.clone(),
                coupling,
            });
        }
        let stationarity = joint_stationarity(&parts, &y, &x);
        log::debug!(
            "ccrcache {k}: coupling {coupling:.3e} stationarity {stationarity:.3e} objective {objective:.6} inner steps {}/{}",
            rec_out.iterations,
            cache_out.iterations
        );
        if coupling < config.coupling_tolerance && stationarity < config.stationarity_tolerance {
            converged = true;
            break;
        }
        let mut progressed = false;
        if objective < best_objective - config.stall_threshold {
            best_objective = objective;
            progressed = true;
        }
        if coupling < best_coupling - config.stall_threshold {
            best_coupling = coupling;
            progressed = true;
        }
        if stationarity < best_stationarity - config.stall_threshold {
            best_stationarity = stationarity;
            progressed = true;
        }
        if progressed {
            last_progress = k;
        } else if k - last_progress >= config.stall_window {
            log::info!("joint caching stalled at iteration {k} with coupling {coupling:.3e}");
            stalled = true;
            break;
        }
    }

    let final_valid = parts.utility.cp_gain(y.view()) > 0.0 && caching.v_gain(&x, y.view()) > 0.0;
    let (ry, rx, rz, returned_converged) = if converged && final_valid {
        (y, x, z, true)
    } else if let Some(c) = best {
        (c.y, c.x, c.z, false)
    } else {
        let z0 = &start * &xb;
        (start, xb, z0, false)
    };
    let coupling_violation = (&rz - &(&ry * &rx)).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let cp_utility = parts.utility.cp_utility(ry.view());
    let cdn_utility = caching.v_value(&rx, ry.view());
    let cp_gain = cp_utility - parts.utility.cp_baseline;
    let cdn_gain = cdn_utility - caching.baseline;
    let outcome = BargainOutcome {
        status: Status::Agreement,
        y_star: RecommendationMatrix::from_clamped(ry),
        cp_gain,
        cdn_gain,
        cp_utility,
        cdn_utility,
        cp_baseline: parts.utility.cp_baseline,
        cdn_baseline: caching.baseline,
        objective: Some(-cp_gain.ln() - cdn_gain.ln()),
        iterations: trace.len(),
        converged: returned_converged,
        projected_gradient_norm: trace.last().map_or(0.0, |r| r.primal_residual),
        history: Vec::new(),
    };
    Ok(CcrCacheSolution {
        outcome,
        cache: CacheVector(rx),
        trace,
        stalled,
        coupling_violation,
        z: rz,
        h,
    })
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Joint policy maximizing the summed profit of both parties, without
/// discount and without regard to the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitMaxSolution {
    #[serde(with = "crate::matrix_serde")]
    pub recommendations: Array2<u8>,
    pub cache: CacheVector,
    /// `U(y) + V(x, y)` at undiscounted prices.
    pub aggregate_profit: f64,
    pub cp_utility: f64,
    pub cdn_utility: f64,
    pub cp_baseline: f64,
    pub cdn_baseline: f64,
    /// Alternations summed over all starts.
    pub alternations: usize,
    /// Whether the kept end point is one where neither block changes.
    pub stationary: bool,
}

impl ProfitMaxSolution {
    pub fn cp_gain(&self) -> f64 {
        self.cp_utility - self.cp_baseline
    }

    pub fn cdn_gain(&self) -> f64 {
        self.cdn_utility - self.cdn_baseline
    }
}

/// Alternating maximization of `U(y) + V(x, y)`: each user's top `N_u`
/// contents by `R_ui - K_ui(x)`, then the cache filled greedily by marginal
/// saving, until neither changes.
///
/// The alternation only reaches a point where neither block can improve, so
/// it is run from three caches (the baseline one, an empty one, and every
/// content treated as cached) and the most profitable end point is kept,
/// earlier starts winning ties.
pub fn profit_max_baseline(scenario: &Scenario) -> Result<ProfitMaxSolution> {
    scenario.require_single_cache()?;
    let (users, contents) = scenario.shape();
    let capacity = scenario.topology.capacities[0];
    let lambda = scenario.pricing.lambda;
    let root = &scenario.topology.root_cost;
    let saving: Vec<f64> = (0..users)
        .map(|u| root[u] - scenario.topology.single_cache_cost(u))
        .collect();
    let weight: Vec<f64> = (0..users).map(|u| scenario.users.click_weight(u)).collect();
    let out_of_rec: Vec<f64> = (0..contents)
        .map(|i| {
            (0..users)
                .map(|u| (1.0 - scenario.users.alpha[u]) * scenario.catalog.popularity[i] * saving[u])
                .sum()
        })
        .collect();

    // Undiscounted utilities of both parties.
    let utilities = |y: &Array2<u8>, x: &Array1<f64>| {
        let mut cp = 0.0;
        let mut cdn = 0.0;
        for u in 0..users {
            let miss = 1.0 - scenario.users.alpha[u];
            for i in 0..contents {
                let cost = root[u] - x[i] * saving[u];
                if y[[u, i]] > 0 {
                    let fee = lambda * scenario.catalog.sizes[i];
                    cp += weight[u] * (scenario.pricing.revenue[[u, i]] - fee);
                    cdn += weight[u] * (fee - cost);
                }
                cdn += miss * scenario.catalog.popularity[i] * (lambda - cost);
            }
        }
        (cp, cdn)
    };

    let alternate = |mut x: Array1<f64>| {
        let mut y = Array2::<u8>::zeros((users, contents));
        let mut alternations = 0;
        let mut stationary = false;
        while alternations < PROFIT_MAX_ALTERNATIONS {
            alternations += 1;
            let scores = Array2::from_shape_fn((users, contents), |(u, i)| {
                scenario.pricing.revenue[[u, i]] - root[u] + x[i] * saving[u]
            });
            let new_y = top_n_rows(scores.view(), &scenario.users.rec_count);
            let marginal: Vec<f64> = (0..contents)
                .map(|i| {
                    out_of_rec[i]
                        + (0..users)
                            .map(|u| weight[u] * f64::from(new_y[[u, i]]) * saving[u])
                            .sum::<f64>()
                })
                .collect();
            let new_x = greedy_fill(&marginal, capacity);
            let unchanged = new_y == y && new_x == x;
            y = new_y;
            x = new_x;
            if unchanged {
                stationary = true;
                break;
            }
        }
        (y, x, alternations, stationary)
    };

    let starts = [
        scenario.baseline_cache_vector()?.0,
        Array1::zeros(contents),
        Array1::ones(contents),
    ];
    let mut best: Option<(Array2<u8>, Array1<f64>, bool, f64, f64)> = None;
    let mut alternations = 0;
    for start in starts {
        let (y, x, steps, stationary) = alternate(start);
        alternations += steps;
        let (cp, cdn) = utilities(&y, &x);
        if best.as_ref().is_none_or(|b| cp + cdn > b.3 + b.4) {
            best = Some((y, x, stationary, cp, cdn));
        }
    }
    let (y, x, stationary, cp_utility, cdn_utility) = best.expect("at least one start");

    let coeffs = UtilityCoefficients::from_scenario(scenario);
    Ok(ProfitMaxSolution {
        recommendations: y,
        cache: CacheVector(x),
        aggregate_profit: cp_utility + cdn_utility,
        cp_utility,
        cdn_utility,
        cp_baseline: coeffs.cp_baseline,
        cdn_baseline: CachingCoefficients::from_scenario(scenario)?.baseline,
        alternations,
        stationary,
    })
}

/// Fills `capacity` units with the contents of largest positive marginal,
/// ties to the lower index; the last content may be stored partially.
fn greedy_fill(marginal: &[f64], capacity: f64) -> Array1<f64> {
    let mut order: Vec<usize> = (0..marginal.len()).filter(|&i| marginal[i] > 0.0).collect();
    order.sort_by(|&a, &b| marginal[b].total_cmp(&marginal[a]).then(a.cmp(&b)));
    let mut x = Array1::zeros(marginal.len());
    let mut left = capacity;
    for i in order {
        if left <= 0.0 {
            break;
        }
        x[i] = left.min(1.0);
        left -= x[i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccr::{solve_ccr, CcrConfig};
    use crate::scenario::{generate, toy_scenario, GeneratorParams};
    use ndarray::array;

    fn small_single_cache(seed: u64) -> Scenario {
        let mut params = GeneratorParams::small(4, 12, 2);
        params.alpha_mean = 0.8;
        params.alpha_spread = 0.15;
        generate(&params, seed, None).unwrap()
    }

    #[test]
    fn g_equals_v_on_the_coupling_manifold() {
        let s = small_single_cache(3);
        let (users, contents) = s.shape();
        let y = Array2::from_shape_fn((users, contents), |(u, i)| ((u * 7 + i * 3) % 5) as f64 / 5.0);
        let x = Array1::from_shape_fn(contents, |i| (i % 4) as f64 / 4.0);
        let z = &y * &x;
        let g = g_function(&s, &CacheVector(x.clone()), &RecommendationMatrix::from_clamped(y.clone()), z.view()).unwrap();
        let v = crate::model::cdn_utility_with_caching(
            &s,
            &RecommendationMatrix::from_clamped(y),
            &CacheVector(x),
        )
        .unwrap();
        assert!((g - v).abs() < 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn g_with_nothing_recommended_keeps_only_outside_requests() {
        let s = small_single_cache(5);
        let (users, contents) = s.shape();
        let x = Array1::from_elem(contents, 0.5);
        let zero = Array2::zeros((users, contents));
        let g = g_function(&s, &CacheVector(x.clone()), &RecommendationMatrix::zeros(users, contents), zero.view()).unwrap();
        let mut expected = 0.0;
        for u in 0..users {
            let root = s.topology.root_cost[u];
            let edge = s.topology.single_cache_cost(u);
            for i in 0..contents {
                let cost = root + x[i] * (edge - root);
                expected += (1.0 - s.users.alpha[u]) * s.catalog.popularity[i] * (s.pricing.lambda - cost);
            }
        }
        assert!((g - expected).abs() < 1e-12);
    }

    #[test]
    fn g_is_rejected_on_multi_cache_topologies() {
        let s = crate::scenario::generate_scenario_one(1).unwrap();
        let (u, k) = s.shape();
        let err = g_function(
            &s,
            &CacheVector(Array1::zeros(k)),
            &RecommendationMatrix::zeros(u, k),
            Array2::zeros((u, k)).view(),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn cache_block_penalty_matches_direct_sum() {
        let s = small_single_cache(7);
        let (users, contents) = s.shape();
        let y = Array2::from_shape_fn((users, contents), |(u, i)| if (u + i) % 6 < 2 { 1.0 } else { 0.0 });
        let z = Array2::from_shape_fn((users, contents), |(u, i)| ((u + 2 * i) % 3) as f64 / 3.0);
        let h = Array2::from_shape_fn((users, contents), |(u, i)| (u as f64 - i as f64) / 20.0);
        let q = 0.7;
        let value = |x: &Array1<f64>| {
            let coeffs = CachingCoefficients::from_scenario(&s).unwrap();
            let g = coeffs.g_value(x, y.view(), z.view()) - coeffs.baseline;
            let r = &z - &(&y * x) + &h;
            -g.ln() + 0.5 * q * r.iter().map(|v| v * v).sum::<f64>()
        };
        let x1 = Array1::from_elem(contents, 0.2);
        let x2 = Array1::from_shape_fn(contents, |i| (i % 3) as f64 / 3.0);
        let b1 = cache_block_value(&s, x1.view(), y.view(), z.view(), h.view(), q).unwrap().unwrap();
        let b2 = cache_block_value(&s, x2.view(), y.view(), z.view(), h.view(), q).unwrap().unwrap();
        // The block drops an x-independent constant.
        assert!(((b1 - b2) - (value(&x1) - value(&x2))).abs() < 1e-10);
    }

    #[test]
    fn toy_joint_caching_meets_the_coupling_tolerance() {
        let s = toy_scenario();
        let sol = solve_ccrcache(&s, &CcrCacheConfig::default()).unwrap();
        assert!(sol.outcome.is_agreement());
        assert!(!sol.stalled);
        assert!(sol.coupling_violation < 1e-4, "{}", sol.coupling_violation);
        assert!(sol.cache.is_feasible(2.0));
        assert!(sol.outcome.cp_gain > 0.0 && sol.outcome.cdn_gain > 0.0);
        let exact = CachingCoefficients::from_scenario(&s)
            .unwrap()
            .v_gain(&sol.cache.0, sol.outcome.y_star.view());
        assert_eq!(exact, sol.outcome.cdn_gain);
    }

    #[test]
    fn pinned_cache_reduces_to_fixed_caching_bargain() {
        // Zero capacity forces x = 0 whatever the penalty wants; the baseline
        // cache is empty too, so the joint problem is the plain one.
        let mut s = small_single_cache(11);
        s.topology.capacities[0] = 0.0;
        s.baseline.caching.fill(0);
        let joint = solve_ccrcache(&s, &CcrCacheConfig::default()).unwrap();
        let plain = solve_ccr(&s, &CcrConfig::default()).unwrap();
        assert_eq!(joint.outcome.status, plain.status);
        if plain.is_agreement() {
            let gap = (joint.outcome.y_star.as_array() - plain.y_star.as_array())
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(gap < 1e-3, "gap {gap}");
        }
    }

    #[test]
    fn profit_max_with_full_attention_picks_top_revenue() {
        let mut s = small_single_cache(2);
        s.users.alpha.iter_mut().for_each(|a| *a = 1.0);
        for l in s.topology.access.iter_mut().flatten() {
            l.cost = s.topology.root_cost[0];
        }
        let r = s.topology.root_cost[0];
        s.topology.root_cost.iter_mut().for_each(|c| *c = r);
        let sol = profit_max_baseline(&s).unwrap();
        let expected = top_n_rows(s.pricing.revenue.view(), &s.users.rec_count);
        assert_eq!(sol.recommendations, expected);
        assert!(sol.stationary);
    }

    #[test]
    fn greedy_fill_respects_capacity_and_ties() {
        assert_eq!(greedy_fill(&[1.0, 3.0, 3.0, 0.0], 2.0), array![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(greedy_fill(&[1.0, 2.0], 1.5), array![0.5, 1.0]);
        assert_eq!(greedy_fill(&[1.0, 2.0], 0.0), array![0.0, 0.0]);
    }

    #[test]
    fn scenario_two_runs_at_reduced_scale() {
        let s = generate(&GeneratorParams::scenario_two().scaled(20, 300), 4, None).unwrap();
        assert!(s.require_single_cache().is_ok());
        let pm = profit_max_baseline(&s).unwrap();
        assert!(pm.stationary);
        assert!(pm.alternations <= 3 * PROFIT_MAX_ALTERNATIONS);
        assert!(pm.cache.is_feasible(s.topology.capacities[0]));
    }

    #[test]
    fn bad_config_is_rejected() {
        let c = CcrCacheConfig {
            penalty_q: 0.0,
            ..CcrCacheConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
