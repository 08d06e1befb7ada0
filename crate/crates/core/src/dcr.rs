//! Distributed cooperative recommendations by ADMM.
//!
//! The content provider and the CDN each keep a local copy of the
//! recommendation matrix (`psi` and `psi_tilde`) and minimize their own
//! augmented-Lagrangian block. They exchange only those copies and the
//! multipliers `z` of the consistency constraint `psi = psi_tilde`. Each party
//! is built from its own side of the utility model: [`CpParty`] never sees
//! retrieval costs or the CDN's utility, [`CdnParty`] never sees revenues or the
//! provider's utility.
//!
//! One outer iteration is
//!
//! ```text
//! psi       <- argmin -log(U(psi) - U^b)   + <z, psi>       + q/2 ||psi - psi_tilde||^2
//! psi_tilde <- argmin -log(U~(pt) - U~^b)  - <z, pt>        + q/2 ||psi - pt||^2
//! z         <- z + q (psi - psi_tilde)
//! ```
//!
//! with the CDN step using the fresh `psi`.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::ccr::BargainOutcome;
use crate::error::{Error, Result};
use crate::model::{discounted_price, retrieval_cost_matrix, Scenario, UtilityCoefficients};
use crate::projection::{find_interior_point_with, Feasibility, InteriorConfig, RecommendationPolytope};
use crate::spg::{self, Objective, StepRule};

/// Penalties offered as presets.
pub const PENALTY_PRESETS: [f64; 2] = [0.003, 0.01];

/// The provider's side of the bargaining problem.
#[derive(Clone, Debug)]
pub struct CpParty {
    /// `(alpha_u / N_u) (R_ui - Lambda_ui sigma_i)`
    margins: Array2<f64>,
    baseline: f64,
    polytope: RecommendationPolytope,
}

/// The CDN's side of the bargaining problem.
#[derive(Clone, Debug)]
pub struct CdnParty {
    /// `(alpha_u / N_u) (Lambda_ui sigma_i - K_ui)`
    margins: Array2<f64>,
    baseline: f64,
    polytope: RecommendationPolytope,
}

impl CpParty {
    /// Reads revenues, prices, click weights and the baseline recommendations;
    /// nothing from the cache topology.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let (users, contents) = scenario.shape();
        let margins = Array2::from_shape_fn((users, contents), |(u, i)| {
            let fee = discounted_price(&scenario.pricing, scenario.baseline.recommendations[[u, i]] > 0)
                * scenario.catalog.sizes[i];
            scenario.users.click_weight(u) * (scenario.pricing.revenue[[u, i]] - fee)
        });
        let baseline = baseline_value(&margins, &scenario.baseline.recommendations);
        CpParty {
            margins,
            baseline,
            polytope: RecommendationPolytope::from_rec_count(scenario.users.rec_count.clone()),
        }
    }

    pub fn utility(&self, psi: ArrayView2<'_, f64>) -> f64 {
        crate::model::dot(self.margins.view(), psi)
    }

    pub fn gain(&self, psi: ArrayView2<'_, f64>) -> f64 {
        self.utility(psi) - self.baseline
    }
}

impl CdnParty {
    /// Reads prices, retrieval costs, click weights and the baseline
    /// recommendations; no revenues.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let costs = retrieval_cost_matrix(scenario);
        let (users, contents) = scenario.shape();
        let margins = Array2::from_shape_fn((users, contents), |(u, i)| {
            let fee = discounted_price(&scenario.pricing, scenario.baseline.recommendations[[u, i]] > 0)
                * scenario.catalog.sizes[i];
            scenario.users.click_weight(u) * (fee - costs[[u, i]])
        });
        let baseline = baseline_value(&margins, &scenario.baseline.recommendations);
        CdnParty {
            margins,
            baseline,
            polytope: RecommendationPolytope::from_rec_count(scenario.users.rec_count.clone()),
        }
    }

    pub fn utility(&self, psi_tilde: ArrayView2<'_, f64>) -> f64 {
        crate::model::dot(self.margins.view(), psi_tilde)
    }

    pub fn gain(&self, psi_tilde: ArrayView2<'_, f64>) -> f64 {
        self.utility(psi_tilde) - self.baseline
    }
}

/// On the baseline every price is undiscounted, so the baseline utility is the
/// cooperative utility of `Y^b`.
fn baseline_value(margins: &Array2<f64>, yb: &Array2<u8>) -> f64 {
    let mut total = 0.0;
    Zip::from(margins).and(yb).for_each(|&m, &b| {
        if b > 0 {
            total += m;
        }
    });
    total
}

/// Inexact inner solves whose tolerance tightens from one outer iteration to
/// the next.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub max_iterations: usize,
    pub initial_tolerance: f64,
    /// Factor applied to the tolerance after each outer iteration.
    pub tolerance_decay: f64,
    pub tolerance_floor: f64,
    pub step: StepRule,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            max_iterations: 1000,
            initial_tolerance: 1e-4,
            tolerance_decay: 0.5,
            tolerance_floor: 1e-9,
            step: StepRule::default(),
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_tolerance > 0.0
            && self.tolerance_floor > 0.0
            && self.tolerance_decay > 0.0
            && self.tolerance_decay <= 1.0)
        {
            return Err(Error::InvalidConfig(format!("bad inner solver settings {self:?}")));
        }
        self.step.validate()
    }

    /// Tolerance used at outer iteration `k` (1-based).
    pub fn tolerance_at(&self, k: usize) -> f64 {
        let exponent = k.saturating_sub(1).min(i32::MAX as usize) as i32;
        (self.initial_tolerance * self.tolerance_decay.powi(exponent)).max(self.tolerance_floor)
    }

    pub(crate) fn settings(&self, k: usize) -> spg::Settings {
        spg::Settings {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance_at(k),
            step: self.step,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcrConfig {
    pub penalty_q: f64,
    pub max_outer_iterations: usize,
    /// Stop once `||psi - psi_tilde||_F` and `q ||delta psi_tilde||_F` are
    /// both below these.
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub inner: InnerConfig,
    /// Start each inner solve from the party's previous iterate rather than
    /// from the feasibility point.
    pub warm_start: bool,
    /// Keep `psi`, `psi_tilde` and `z` of every iteration in the trace.
    pub record_iterates: bool,
}

impl Default for DcrConfig {
    fn default() -> Self {
        DcrConfig {
            penalty_q: PENALTY_PRESETS[0],
            max_outer_iterations: 100,
            primal_tolerance: 1e-4,
            dual_tolerance: 1e-4,
            inner: InnerConfig::default(),
            warm_start: true,
            record_iterates: false,
        }
    }
}

impl DcrConfig {
    pub fn with_penalty(penalty_q: f64) -> Self {
        DcrConfig {
            penalty_q,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_q > 0.0 && self.penalty_q.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "penalty {} must be positive",
                self.penalty_q
            )));
        }
        if !(self.primal_tolerance > 0.0 && self.dual_tolerance > 0.0) {
            return Err(Error::InvalidConfig("residual tolerances must be positive".into()));
        }
        self.inner.validate()
    }
}

/// One outer iteration of an ADMM solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmRecord {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Sum of both parties' negative log gains, each at its own local copy.
    pub objective: f64,
    pub cp_gain: f64,
    pub cdn_gain: f64,
    /// Whether every inner solve of the iteration met its tolerance.
    pub inner_converged: bool,
    /// Largest `|z_ui - x_i y_ui|` (joint caching only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_violation: Option<f64>,
    /// CDN gain through the auxiliary form with the caching block already
    /// updated (joint caching only); `cdn_gain` uses the caching block the
    /// recommendation step saw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fresh_cdn_gain: Option<f64>,
}

/// Local solutions and multipliers after one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmmIterate {
    #[serde(with = "crate::matrix_serde")]
    pub psi: Array2<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub psi_tilde: Array2<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub z: Array2<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmmTrace {
    pub records: Vec<AdmmRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<AdmmIterate>,
}

impl AdmmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&AdmmRecord> {
        self.records.last()
    }

    /// Rows `iteration, primal_residual, dual_residual, objective, cp_gain,
    /// cdn_gain`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.primal_residual.to_string(),
                r.dual_residual.to_string(),
                r.objective.to_string(),
                r.cp_gain.to_string(),
                r.cdn_gain.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

pub const TRACE_COLUMNS: [&str; 6] = [
    "iteration",
    "primal_residual",
    "dual_residual",
    "objective",
    "cp_gain",
    "cdn_gain",
];

/// Result of one party's inner solve.
#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub point: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
}

/// `-log(<margins, x> - baseline) + sign <z, x> + q/2 ||x - other||^2`
struct Block<'a> {
    margins: &'a [f64],
    baseline: f64,
    z: &'a [f64],
    sign: f64,
    other: &'a [f64],
    q: f64,
    polytope: &'a RecommendationPolytope,
}

impl Block<'_> {
    fn gain(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.margins).map(|(a, b)| a * b).sum::<f64>() - self.baseline
    }
}

impl Objective for Block<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        let g = self.gain(x);
        if !(g > 0.0) {
            return None;
        }
        let mut linear = 0.0;
        let mut quad = 0.0;
        for i in 0..x.len() {
            linear += self.z[i] * x[i];
            let d = x[i] - self.other[i];
            quad += d * d;
        }
        Some(-g.ln() + self.sign * linear + 0.5 * self.q * quad)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let inv = 1.0 / self.gain(x);
        for i in 0..x.len() {
            grad[i] = -inv * self.margins[i] + self.sign * self.z[i] + self.q * (x[i] - self.other[i]);
        }
    }

    fn project(&self, x: &mut [f64]) {
        self.polytope.project_flat(x);
    }
}

/// Value of the provider's block objective at `psi`, or `None` outside the
/// barrier's domain.
pub fn cp_block_value(
    party: &CpParty,
    psi: ArrayView2<'_, f64>,
    psi_tilde: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    q: f64,
) -> Option<f64> {
    let (psi, pt, z) = (psi.to_owned(), psi_tilde.to_owned(), z.to_owned());
    cp_block(party, &pt, &z, q).value(psi.as_slice().unwrap())
}

/// Value of the CDN's block objective at `psi_tilde`.
pub fn cdn_block_value(
    party: &CdnParty,
    psi_tilde: ArrayView2<'_, f64>,
    psi: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    q: f64,
) -> Option<f64> {
    let (pt, psi, z) = (psi_tilde.to_owned(), psi.to_owned(), z.to_owned());
    cdn_block(party, &psi, &z, q).value(pt.as_slice().unwrap())
}

/// Analytic gradient of the provider's block objective.
pub fn cp_block_gradient(
    party: &CpParty,
    psi: ArrayView2<'_, f64>,
    psi_tilde: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    q: f64,
) -> Result<Array2<f64>> {
    let (pt, z) = (psi_tilde.to_owned(), z.to_owned());
    block_gradient(&cp_block(party, &pt, &z, q), psi)
}

/// Analytic gradient of the CDN's block objective.
pub fn cdn_block_gradient(
    party: &CdnParty,
    psi_tilde: ArrayView2<'_, f64>,
    psi: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    q: f64,
) -> Result<Array2<f64>> {
    let (psi, z) = (psi.to_owned(), z.to_owned());
    block_gradient(&cdn_block(party, &psi, &z, q), psi_tilde)
}

fn block_gradient(block: &Block<'_>, at: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let x = at.to_owned();
    let flat = x.as_slice().unwrap();
    let g = block.gain(flat);
    if !(g > 0.0) {
        return Err(Error::Barrier {
            cp_gain: g,
            cdn_gain: g,
        });
    }
    let mut grad = Array2::zeros(at.dim());
    block.gradient(flat, grad.as_slice_mut().unwrap());
    Ok(grad)
}

fn cp_block<'a>(party: &'a CpParty, psi_tilde: &'a Array2<f64>, z: &'a Array2<f64>, q: f64) -> Block<'a> {
    Block {
        margins: party.margins.as_slice().unwrap(),
        baseline: party.baseline,
        z: z.as_slice().unwrap(),
        sign: 1.0,
        other: psi_tilde.as_slice().unwrap(),
        q,
        polytope: &party.polytope,
    }
}

fn cdn_block<'a>(party: &'a CdnParty, psi: &'a Array2<f64>, z: &'a Array2<f64>, q: f64) -> Block<'a> {
    Block {
        margins: party.margins.as_slice().unwrap(),
        baseline: party.baseline,
        z: z.as_slice().unwrap(),
        sign: -1.0,
        other: psi.as_slice().unwrap(),
        q,
        polytope: &party.polytope,
    }
}

fn check_block_inputs(shape: (usize, usize), mats: &[(&str, (usize, usize))]) -> Result<()> {
    for (name, dim) in mats {
        if *dim != shape {
            return Err(Error::Dimension(format!("{name} is {dim:?}, expected {shape:?}")));
        }
    }
    Ok(())
}

/// The provider's step: minimizes its block objective from `start`, which
/// must give the provider a positive gain.
pub fn cp_subproblem(
    party: &CpParty,
    psi_tilde: &Array2<f64>,
    z: &Array2<f64>,
    q: f64,
    start: Array2<f64>,
    settings: &InnerConfig,
    outer_iteration: usize,
) -> Result<SubproblemSolution> {
    check_block_inputs(
        party.margins.dim(),
        &[("psi_tilde", psi_tilde.dim()), ("z", z.dim()), ("start", start.dim())],
    )?;
    solve_block(&cp_block(party, psi_tilde, z, q), start, &settings.settings(outer_iteration))
}

/// The CDN's step, mirror of [`cp_subproblem`] with the sign of the
/// multiplier term flipped.
pub fn cdn_subproblem(
    party: &CdnParty,
    psi: &Array2<f64>,
    z: &Array2<f64>,
    q: f64,
    start: Array2<f64>,
    settings: &InnerConfig,
    outer_iteration: usize,
) -> Result<SubproblemSolution> {
    check_block_inputs(
        party.margins.dim(),
        &[("psi", psi.dim()), ("z", z.dim()), ("start", start.dim())],
    )?;
    solve_block(&cdn_block(party, psi, z, q), start, &settings.settings(outer_iteration))
}

fn solve_block(block: &Block<'_>, mut start: Array2<f64>, settings: &spg::Settings) -> Result<SubproblemSolution> {
    let out = spg::minimize(block, start.as_slice_mut().unwrap(), settings)?;
    Ok(SubproblemSolution {
        point: start,
        iterations: out.iterations,
        converged: out.converged,
        projected_gradient_norm: out.pg_norm,
    })
}

/// Outcome of a distributed run.
#[derive(Clone, Debug)]
pub struct DcrSolution {
    pub outcome: BargainOutcome,
    pub trace: AdmmTrace,
    /// Final local copies and multipliers.
    pub psi: Array2<f64>,
    pub psi_tilde: Array2<f64>,
    pub z: Array2<f64>,
}

pub fn solve_dcr(scenario: &Scenario, config: &DcrConfig) -> Result<DcrSolution> {
    solve_dcr_observed(scenario, config, |_| {})
}

/// Runs the distributed solver, handing each iteration's record to `observe`
/// as soon as it is complete.
pub fn solve_dcr_observed(
    scenario: &Scenario,
    config: &DcrConfig,
    mut observe: impl FnMut(&AdmmRecord),
) -> Result<DcrSolution> {
    config.validate()?;
    let cp = CpParty::from_scenario(scenario);
    let cdn = CdnParty::from_scenario(scenario);
    // The feasibility phase is the only step that needs both sides at once.
    let coeffs = UtilityCoefficients::from_scenario(scenario);
    let polytope = RecommendationPolytope::from_rec_count(scenario.users.rec_count.clone());
    let shape = scenario.shape();
    let start = match find_interior_point_with(&coeffs, &polytope, &InteriorConfig::default()) {
        Feasibility::Disagreement { .. } => {
            let yb = scenario.baseline.recommendations.mapv(f64::from);
            return Ok(DcrSolution {
                outcome: BargainOutcome::disagreement(yb.clone(), coeffs.cp_baseline, coeffs.cdn_baseline),
                trace: AdmmTrace::default(),
                psi: yb.clone(),
                psi_tilde: yb,
                z: Array2::zeros(shape),
            });
        }
        Feasibility::Interior(p) => p.y.into_array(),
    };

    let q = config.penalty_q;
    let mut psi = start.clone();
    let mut psi_tilde = start.clone();
    let mut z = Array2::zeros(shape);
    let mut trace = AdmmTrace::default();
    let mut all_inner_converged = true;
    let mut converged = false;

    for k in 1..=config.max_outer_iterations {
        let cp_start = if config.warm_start { psi.clone() } else { start.clone() };
        let cp_step = cp_subproblem(&cp, &psi_tilde, &z, q, cp_start, &config.inner, k)?;
        let cdn_start = if config.warm_start { psi_tilde.clone() } else { start.clone() };
        let cdn_step = cdn_subproblem(&cdn, &cp_step.point, &z, q, cdn_start, &config.inner, k)?;

        let previous_tilde = std::mem::replace(&mut psi_tilde, cdn_step.point);
        psi = cp_step.point;
        let difference = &psi - &psi_tilde;
        z.scaled_add(q, &difference);

        let primal = frobenius(&difference);
        let dual = q * frobenius(&(&psi_tilde - &previous_tilde));
        let cp_gain = cp.gain(psi.view());
        let cdn_gain = cdn.gain(psi_tilde.view());
        let inner_converged = cp_step.converged && cdn_step.converged;
        all_inner_converged &= inner_converged;
        let record = AdmmRecord {
            iteration: k,
            primal_residual: primal,
            dual_residual: dual,
            objective: -cp_gain.ln() - cdn_gain.ln(),
            cp_gain,
            cdn_gain,
            inner_converged,
            coupling_violation: None,
            fresh_cdn_gain: None,
        };
        observe(&record);
        log::debug!(
            "dcr {k}: primal {primal:.3e} dual {dual:.3e} objective {:.6}",
            record.objective
        );
        trace.records.push(record);
        if config.record_iterates {
            trace.iterates.push(AdmmIterate {
                psi: psi.clone(),
                psi_tilde: psi_tilde.clone(),
                z: z.clone(),
            });
        }
        if primal < config.primal_tolerance && dual < config.dual_tolerance {
            converged = true;
            break;
        }
    }
    if !all_inner_converged {
        log::info!("some inner solves stopped at their iteration cap");
    }

    let mut outcome = consensus_outcome(&coeffs, &polytope, &psi, &psi_tilde, &start);
    outcome.iterations = trace.len();
    outcome.converged &= converged;
    outcome.projected_gradient_norm = trace.last().map_or(0.0, |r| r.primal_residual);
    Ok(DcrSolution {
        outcome,
        trace,
        psi,
        psi_tilde,
        z,
    })
}

/// Average of the two copies projected back onto the rows. Falls back to a
/// local copy, then to the feasibility point, when the average does not
/// improve both parties; the fallback is flagged as unconverged.
fn consensus_outcome(
    coeffs: &UtilityCoefficients,
    polytope: &RecommendationPolytope,
    psi: &Array2<f64>,
    psi_tilde: &Array2<f64>,
    start: &Array2<f64>,
) -> BargainOutcome {
    let mut average = (psi + psi_tilde) * 0.5;
    polytope.project(&mut average);
    let improving = |y: &Array2<f64>| coeffs.cp_gain(y.view()) > 0.0 && coeffs.cdn_gain(y.view()) > 0.0;
    if improving(&average) {
        return BargainOutcome::agreement(coeffs, average);
    }
    let fallback = [psi, psi_tilde]
        .into_iter()
        .find(|y| improving(y))
        .unwrap_or(start)
        .clone();
    let mut outcome = BargainOutcome::agreement(coeffs, fallback);
    outcome.converged = false;
    outcome
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccr::{solve_ccr, CcrConfig};
    use crate::scenario::{generate, toy_scenario, GeneratorParams};

    #[test]
    fn parties_reproduce_joint_utilities() {
        let s = toy_scenario();
        let coeffs = UtilityCoefficients::from_scenario(&s);
        let cp = CpParty::from_scenario(&s);
        let cdn = CdnParty::from_scenario(&s);
        assert_eq!(cp.margins, coeffs.cp);
        assert_eq!(cdn.margins, coeffs.cdn);
        assert!((cp.baseline - coeffs.cp_baseline).abs() < 1e-12);
        assert!((cdn.baseline - coeffs.cdn_baseline).abs() < 1e-12);
    }

    #[test]
    fn provider_party_ignores_cache_topology() {
        let s = toy_scenario();
        let mut t = s.clone();
        t.topology.root_cost = vec![0.4, 0.4];
        t.topology.access[0][0].cost = 0.3;
        let (a, b) = (CpParty::from_scenario(&s), CpParty::from_scenario(&t));
        assert_eq!(a.margins, b.margins);
        let mut r = s.clone();
        r.pricing.revenue *= 2.0;
        assert_eq!(CdnParty::from_scenario(&s).margins, CdnParty::from_scenario(&r).margins);
    }

    #[test]
    fn large_penalty_tracks_shifted_projection() {
        let s = toy_scenario();
        let cp = CpParty::from_scenario(&s);
        let q = 1e6;
        let psi_tilde = ndarray::array![[0.1, 0.1, 0.7, 0.1], [0.2, 0.3, 0.4, 0.1]];
        let z = ndarray::array![[100.0, 0.0, -200.0, 0.0], [0.0, 50.0, 0.0, 0.0]];
        let inner = InnerConfig {
            initial_tolerance: 1e-12,
            tolerance_floor: 1e-12,
            max_iterations: 5000,
            ..InnerConfig::default()
        };
        let sol = cp_subproblem(&cp, &psi_tilde, &z, q, psi_tilde.clone(), &inner, 1).unwrap();
        let mut expected = &psi_tilde - &(&z / q);
        cp.polytope.project(&mut expected);
        let gap = (&sol.point - &expected).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap < 1e-3, "gap {gap}");
    }

    #[test]
    fn one_inner_step_decreases_the_block_objective() {
        let s = generate(&GeneratorParams::small(10, 20, 3), 4, None).unwrap();
        let cp = CpParty::from_scenario(&s);
        let coeffs = UtilityCoefficients::from_scenario(&s);
        let polytope = RecommendationPolytope::from_rec_count(s.users.rec_count.clone());
        let Feasibility::Interior(p) = find_interior_point_with(&coeffs, &polytope, &InteriorConfig::default()) else {
            panic!("instance has an agreement region")
        };
        // the max-min start is the CDN's favourite policy here, so only the
        // provider has room to move
        let start = p.y.into_array();
        let z = Array2::zeros(s.shape());
        let before = cp_block_value(&cp, start.view(), start.view(), z.view(), 0.003).unwrap();
        let inner = InnerConfig {
            max_iterations: 1,
            initial_tolerance: 1e-14,
            ..InnerConfig::default()
        };
        let sol = cp_subproblem(&cp, &start, &z, 0.003, start.clone(), &inner, 1).unwrap();
        assert_eq!(sol.iterations, 1, "pg {}", sol.projected_gradient_norm);
        let after = cp_block_value(&cp, sol.point.view(), start.view(), z.view(), 0.003).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn dual_update_is_exact() {
        let s = generate(&GeneratorParams::small(6, 20, 2), 2, None).unwrap();
        let config = DcrConfig {
            record_iterates: true,
            max_outer_iterations: 10,
            ..DcrConfig::default()
        };
        let sol = solve_dcr(&s, &config).unwrap();
        assert_eq!(sol.trace.records.len(), sol.trace.iterates.len());
        let mut z = Array2::<f64>::zeros(s.shape());
        for it in &sol.trace.iterates {
            z = &z + &((&it.psi - &it.psi_tilde) * config.penalty_q);
            assert_eq!(z, it.z);
        }
    }

    #[test]
    fn toy_consensus_matches_centralized_objective() {
        let s = toy_scenario();
        let sol = solve_dcr(&s, &DcrConfig::with_penalty(0.01)).unwrap();
        let reference = solve_ccr(&s, &CcrConfig::default()).unwrap();
        let last = sol.trace.last().unwrap();
        let p = reference.objective.unwrap();
        assert!((last.objective - p).abs() < 1e-3, "{} vs {p}", last.objective);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let s = generate(&GeneratorParams::small(5, 10, 2), 9, None).unwrap();
        let a = solve_dcr(&s, &DcrConfig::default()).unwrap();
        assert!(a.outcome.is_agreement());
        let b = solve_dcr(&s, &DcrConfig::default()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.records[0].primal_residual.is_finite());
    }
}
