//! Centralized cooperative recommendations: the Nash bargaining policy
//! maximizing the product of both parties' utility gains.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RecommendationMatrix, Scenario, UtilityCoefficients};
use crate::projection::{find_interior_point_with, Feasibility, InteriorConfig, RecommendationPolytope};
use crate::spg::{self, Objective, StepRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcrConfig {
    pub max_iterations: usize,
    /// Stop once the projected-gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub step: StepRule,
    /// Per-user quality floors `T_u`: the recommended items must reach a
    /// fraction `T_u` of `N_u` in summed relevance.
    pub qor_thresholds: Option<Vec<f64>>,
    /// Keep the objective value after every accepted step.
    pub record_history: bool,
}

impl Default for CcrConfig {
    fn default() -> Self {
        CcrConfig {
            max_iterations: 5000,
            gradient_tolerance: 1e-8,
            step: StepRule::default(),
            qor_thresholds: None,
            record_history: false,
        }
    }
}

impl CcrConfig {
    /// Same threshold for every user.
    pub fn with_uniform_qor(mut self, users: usize, threshold: f64) -> Self {
        self.qor_thresholds = Some(vec![threshold; users]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gradient tolerance {} must be positive",
                self.gradient_tolerance
            )));
        }
        if let Some(t) = &self.qor_thresholds {
            if let Some(v) = t.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                return Err(Error::InvalidConfig(format!(
                    "quality threshold {v} outside (0, 1]"
                )));
            }
        }
        self.step.validate()
    }

    pub(crate) fn settings(&self) -> spg::Settings {
        spg::Settings {
            max_iterations: self.max_iterations,
            tolerance: self.gradient_tolerance,
            step: self.step,
            record_history: self.record_history,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Agreement,
    /// No policy improves both parties; the baseline recommendations stay.
    Disagreement,
}

/// A solved bargaining problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BargainOutcome {
    pub status: Status,
    pub y_star: RecommendationMatrix,
    pub cp_gain: f64,
    pub cdn_gain: f64,
    pub cp_utility: f64,
    pub cdn_utility: f64,
    pub cp_baseline: f64,
    pub cdn_baseline: f64,
    /// `-log(cp_gain) - log(cdn_gain)`; absent on disagreement.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl BargainOutcome {
    pub fn is_agreement(&self) -> bool {
        self.status == Status::Agreement
    }

    /// The fallback outcome: baseline policy, zero gains.
    pub fn disagreement(y_baseline: Array2<f64>, cp_baseline: f64, cdn_baseline: f64) -> Self {
        BargainOutcome {
            status: Status::Disagreement,
            y_star: RecommendationMatrix::from_clamped(y_baseline),
            cp_gain: 0.0,
            cdn_gain: 0.0,
            cp_utility: cp_baseline,
            cdn_utility: cdn_baseline,
            cp_baseline,
            cdn_baseline,
            objective: None,
            iterations: 0,
            converged: true,
            projected_gradient_norm: 0.0,
            history: Vec::new(),
        }
    }

    /// Agreement at `y` with gains evaluated on `coeffs`.
    pub(crate) fn agreement(coeffs: &UtilityCoefficients, y: Array2<f64>) -> Self {
        let cp_utility = coeffs.cp_utility(y.view());
        let cdn_utility = coeffs.cdn_utility(y.view());
        let cp_gain = cp_utility - coeffs.cp_baseline;
        let cdn_gain = cdn_utility - coeffs.cdn_baseline;
        BargainOutcome {
            status: Status::Agreement,
            y_star: RecommendationMatrix::from_clamped(y),
            cp_gain,
            cdn_gain,
            cp_utility,
            cdn_utility,
            cp_baseline: coeffs.cp_baseline,
            cdn_baseline: coeffs.cdn_baseline,
            objective: Some(-cp_gain.ln() - cdn_gain.ln()),
            iterations: 0,
            converged: true,
            projected_gradient_norm: 0.0,
            history: Vec::new(),
        }
    }
}

/// `-log(U(Y) - U^b) - log(U~(Y) - U~^b)`.
pub fn nash_objective(scenario: &Scenario, y: &RecommendationMatrix) -> Result<f64> {
    check_shape(scenario, y)?;
    nash_objective_with(&UtilityCoefficients::from_scenario(scenario), y.view())
}

/// Analytic gradient of [`nash_objective`] with respect to `Y`.
pub fn nash_gradient(scenario: &Scenario, y: &RecommendationMatrix) -> Result<Array2<f64>> {
    check_shape(scenario, y)?;
    nash_gradient_with(&UtilityCoefficients::from_scenario(scenario), y.view())
}

fn check_shape(scenario: &Scenario, y: &RecommendationMatrix) -> Result<()> {
    if y.dim() != scenario.shape() {
        return Err(Error::Dimension(format!(
            "recommendation matrix is {:?}, scenario is {:?}",
            y.dim(),
            scenario.shape()
        )));
    }
    Ok(())
}

fn positive_gains(coeffs: &UtilityCoefficients, y: ArrayView2<'_, f64>) -> Result<(f64, f64)> {
    let g1 = coeffs.cp_gain(y);
    let g2 = coeffs.cdn_gain(y);
    if g1 > 0.0 && g2 > 0.0 {
        Ok((g1, g2))
    } else {
        Err(Error::Barrier {
            cp_gain: g1,
            cdn_gain: g2,
        })
    }
}

pub fn nash_objective_with(coeffs: &UtilityCoefficients, y: ArrayView2<'_, f64>) -> Result<f64> {
    let (g1, g2) = positive_gains(coeffs, y)?;
    Ok(-g1.ln() - g2.ln())
}

pub fn nash_gradient_with(coeffs: &UtilityCoefficients, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (g1, g2) = positive_gains(coeffs, y)?;
    Ok(&coeffs.cp * (-1.0 / g1) - &coeffs.cdn * (1.0 / g2))
}

fn flat_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct NashProblem<'a> {
    cp: &'a [f64],
    cdn: &'a [f64],
    cp_baseline: f64,
    cdn_baseline: f64,
    polytope: &'a RecommendationPolytope,
}

impl NashProblem<'_> {
    fn gains(&self, y: &[f64]) -> (f64, f64) {
        (
            flat_dot(self.cp, y) - self.cp_baseline,
            flat_dot(self.cdn, y) - self.cdn_baseline,
        )
    }
}

impl Objective for NashProblem<'_> {
    fn value(&self, y: &[f64]) -> Option<f64> {
        let (g1, g2) = self.gains(y);
        (g1 > 0.0 && g2 > 0.0).then(|| -g1.ln() - g2.ln())
    }

    fn gradient(&self, y: &[f64], grad: &mut [f64]) {
        let (g1, g2) = self.gains(y);
        let (a, b) = (1.0 / g1, 1.0 / g2);
        for ((g, c1), c2) in grad.iter_mut().zip(self.cp).zip(self.cdn) {
            *g = -a * c1 - b * c2;
        }
    }

    fn project(&self, y: &mut [f64]) {
        self.polytope.project_flat(y);
    }
}

/// Solves the bargaining problem of a scenario.
pub fn solve_ccr(scenario: &Scenario, config: &CcrConfig) -> Result<BargainOutcome> {
    config.validate()?;
    let coeffs = UtilityCoefficients::from_scenario(scenario);
    let polytope = RecommendationPolytope::new(scenario, config.qor_thresholds.as_deref())?;
    let baseline = scenario.baseline.recommendations.mapv(f64::from);
    solve_with_coefficients(&coeffs, &polytope, baseline, config)
}

/// Solves the bargaining problem for arbitrary linear utilities.
///
/// `baseline` is the policy returned on disagreement.
pub fn solve_with_coefficients(
    coeffs: &UtilityCoefficients,
    polytope: &RecommendationPolytope,
    baseline: Array2<f64>,
    config: &CcrConfig,
) -> Result<BargainOutcome> {
    config.validate()?;
    let start = match find_interior_point_with(coeffs, polytope, &InteriorConfig::default()) {
        Feasibility::Disagreement { best_margin } => {
            log::info!("no jointly improving policy (best margin {best_margin:.3e})");
            return Ok(BargainOutcome::disagreement(
                baseline,
                coeffs.cp_baseline,
                coeffs.cdn_baseline,
            ));
        }
        Feasibility::Interior(p) => p.y.into_array(),
    };
    minimize_from(coeffs, polytope, start, config)
}

/// Runs the descent from a strictly improving `start`.
pub(crate) fn minimize_from(
    coeffs: &UtilityCoefficients,
    polytope: &RecommendationPolytope,
    mut y: Array2<f64>,
    config: &CcrConfig,
) -> Result<BargainOutcome> {
    let problem = NashProblem {
        cp: coeffs.cp.as_slice().expect("row-major coefficients"),
        cdn: coeffs.cdn.as_slice().expect("row-major coefficients"),
        cp_baseline: coeffs.cp_baseline,
        cdn_baseline: coeffs.cdn_baseline,
        polytope,
    };
    let out = spg::minimize(
        &problem,
        y.as_slice_mut().expect("row-major policy"),
        &config.settings(),
    )?;
    if !out.converged {
        log::warn!(
            "bargaining descent stopped after {} iterations, projected gradient {:.3e}",
            out.iterations,
            out.pg_norm
        );
    }
    let mut outcome = BargainOutcome::agreement(coeffs, y);
    outcome.iterations = out.iterations;
    outcome.converged = out.converged;
    outcome.projected_gradient_norm = out.pg_norm;
    outcome.history = out.history;
    Ok(outcome)
}

/// Deterministic discretization: each user's `N_u` largest entries, ties to
/// the lower content index.
pub fn round_to_discrete(y_star: &RecommendationMatrix, scenario: &Scenario) -> Array2<u8> {
    top_n_rows(y_star.view(), &scenario.users.rec_count)
}

pub(crate) fn top_n_rows(y: ArrayView2<'_, f64>, rec_count: &[usize]) -> Array2<u8> {
    let mut out = Array2::zeros(y.dim());
    for (u, row) in y.outer_iter().enumerate() {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &i in order.iter().take(rec_count[u]) {
            out[[u, i]] = 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::toy_scenario;
    use ndarray::array;

    fn unit_coefficients() -> UtilityCoefficients {
        UtilityCoefficients {
            cp: array![[1.0, 0.0], [0.0, 0.0]],
            cdn: array![[0.0, 1.0], [0.0, 0.0]],
            cp_baseline: 0.0,
            cdn_baseline: 0.0,
        }
    }

    #[test]
    fn objective_at_unit_and_e_gains() {
        let c = unit_coefficients();
        let y = array![[1.0, 1.0], [0.0, 0.0]];
        assert_eq!(nash_objective_with(&c, y.view()).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let y = array![[e, e], [0.0, 0.0]];
        assert!((nash_objective_with(&c, y.view()).unwrap() + 2.0).abs() < 1e-15);
        let y = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            nash_objective_with(&c, y.view()),
            Err(Error::Barrier { .. })
        ));
    }

    #[test]
    fn zero_coefficient_entry_has_zero_gradient() {
        let c = unit_coefficients();
        let g = nash_gradient_with(&c, array![[0.5, 0.5], [0.3, 0.7]].view()).unwrap();
        assert_eq!(g[[1, 0]], 0.0);
        assert_eq!(g[[1, 1]], 0.0);
        assert!((g[[0, 0]] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn toy_agreement_beats_baseline_for_both() {
        let s = toy_scenario();
        let out = solve_ccr(&s, &CcrConfig::default()).unwrap();
        assert!(out.is_agreement());
        assert!(out.converged, "pg {}", out.projected_gradient_norm);
        assert!(out.cp_gain > 0.0 && out.cdn_gain > 0.0);
        assert!(out.y_star.is_row_feasible(&s.users.rec_count, 1e-8));
        let direct = nash_objective(&s, &out.y_star).unwrap();
        assert!((direct - out.objective.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn descent_is_monotone() {
        // the max-min start (1/3, 2/3) is not the bargaining point (1/2, 1/2)
        let coeffs = UtilityCoefficients {
            cp: array![[2.0, 0.0]],
            cdn: array![[0.0, 1.0]],
            cp_baseline: 0.0,
            cdn_baseline: 0.0,
        };
        let polytope = RecommendationPolytope::from_rec_count(vec![1]);
        let config = CcrConfig {
            record_history: true,
            ..CcrConfig::default()
        };
        let out = solve_with_coefficients(&coeffs, &polytope, array![[1.0, 0.0]], &config).unwrap();
        assert!(out.converged);
        assert!(out.history.len() > 1);
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!((out.y_star.as_array()[[0, 0]] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn rounding_rules() {
        let s = toy_scenario();
        let y = RecommendationMatrix::new(array![[0.5, 0.5, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]).unwrap();
        let mut two = s.clone();
        two.users.rec_count = vec![2, 1];
        let r = round_to_discrete(&y, &two);
        assert_eq!(r, array![[1u8, 0, 1, 0], [0, 0, 0, 1]]);
        let integral = RecommendationMatrix::from_binary(&s.baseline.recommendations);
        assert_eq!(round_to_discrete(&integral, &s), s.baseline.recommendations);
    }

    #[test]
    fn bad_config_is_rejected() {
        let s = toy_scenario();
        let bad = CcrConfig {
            qor_thresholds: Some(vec![0.0, 0.5]),
            ..CcrConfig::default()
        };
        assert!(matches!(solve_ccr(&s, &bad), Err(Error::InvalidConfig(_))));
    }
}
