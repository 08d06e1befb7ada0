//! Evaluation quantities and discount sweeps.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccr::{solve_ccr, BargainOutcome, CcrConfig, Status};
use crate::ccrcache::{profit_max_baseline, solve_ccrcache, CcrCacheConfig};
use crate::dcr::{solve_dcr, AdmmTrace, DcrConfig};
use crate::error::{Error, Result};
use crate::model::{CacheVector, RecommendationMatrix, Scenario};
use crate::scenario::{hash_json, scenario_hash};

/// Slack allowed when checking monotone trends across sweep rows, in
/// percentage points.
pub const TREND_TOLERANCE: f64 = 1e-6;

/// Version stamped into every report.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeGains {
    pub cp: f64,
    pub cdn: f64,
    pub total: f64,
    /// Some baseline is zero: the three values are absolute gains rather
    /// than percentages.
    pub absolute: bool,
}

/// `100 (U - U^b) / U^b`, the same for the CDN, and the summed gain over
/// the summed baseline.
pub fn relative_gains(outcome: &BargainOutcome) -> RelativeGains {
    let (cpb, cdnb) = (outcome.cp_baseline, outcome.cdn_baseline);
    let (cp, cdn) = match outcome.status {
        Status::Disagreement => (0.0, 0.0),
        Status::Agreement => (outcome.cp_gain, outcome.cdn_gain),
    };
    if cpb == 0.0 || cdnb == 0.0 || cpb + cdnb == 0.0 {
        return RelativeGains {
            cp,
            cdn,
            total: cp + cdn,
            absolute: true,
        };
    }
    RelativeGains {
        cp: 100.0 * cp / cpb,
        cdn: 100.0 * cdn / cdnb,
        total: 100.0 * (cp + cdn) / (cpb + cdnb),
        absolute: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRate {
    /// Fraction of recommendation-driven requests served by a reachable
    /// small cache, in [0, 1].
    pub rate: f64,
    /// `sum_{u,i} sum_j (alpha_u / N_u) y_ui x_ij` over reachable small
    /// caches, without capping or normalization.
    pub raw: f64,
}

/// Hit rate of recommendations `y` under the contents x caches matrix
/// `caching`. A request counts at most once even when several reachable
/// caches hold the content.
pub fn cache_hit_rate(scenario: &Scenario, y: ArrayView2<'_, f64>, caching: ArrayView2<'_, f64>) -> Result<HitRate> {
    let (users, contents) = scenario.shape();
    if y.dim() != (users, contents) || caching.dim() != (contents, scenario.cache_count()) {
        return Err(Error::Dimension(format!(
            "hit rate expects a {:?} policy and a {:?} caching matrix",
            (users, contents),
            (contents, scenario.cache_count())
        )));
    }
    let mut capped = 0.0;
    let mut raw = 0.0;
    for u in 0..users {
        let w = scenario.users.click_weight(u);
        let links = &scenario.topology.access[u];
        for i in 0..contents {
            let yv = y[[u, i]];
            if yv == 0.0 {
                continue;
            }
            let stored: f64 = links.iter().map(|l| caching[[i, l.cache]]).sum();
            raw += w * yv * stored;
            capped += w * yv * stored.min(1.0);
        }
    }
    let attention: f64 = scenario.users.alpha.iter().sum();
    Ok(HitRate {
        rate: if attention > 0.0 { capped / attention } else { 0.0 },
        raw,
    })
}

/// Baseline caching as a real matrix.
pub fn baseline_caching_matrix(scenario: &Scenario) -> Array2<f64> {
    scenario.baseline.caching.mapv(f64::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    /// Mean of the per-user values.
    pub aggregate: f64,
    pub per_user_min: f64,
    pub per_user_max: f64,
    pub per_user: Vec<f64>,
}

/// Per user, `sum_i r_ui y_ui` over the sum of that user's `N_u` largest
/// relevances.
pub fn quality_of_recommendations(scenario: &Scenario, y: ArrayView2<'_, f64>) -> Result<Quality> {
    if y.dim() != scenario.shape() {
        return Err(Error::Dimension(format!(
            "policy is {:?}, expected {:?}",
            y.dim(),
            scenario.shape()
        )));
    }
    let relevance = &scenario.users.relevance;
    let per_user: Vec<f64> = y
        .outer_iter()
        .zip(relevance.outer_iter())
        .enumerate()
        .map(|(u, (yr, rr))| {
            let mut sorted: Vec<f64> = rr.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let best: f64 = sorted.iter().take(scenario.users.rec_count[u]).sum();
            let got: f64 = yr.iter().zip(rr).map(|(a, b)| a * b).sum();
            if best > 0.0 { got / best } else { 1.0 }
        })
        .collect();
    let n = per_user.len().max(1) as f64;
    Ok(Quality {
        aggregate: per_user.iter().sum::<f64>() / n,
        per_user_min: per_user.iter().copied().fold(f64::INFINITY, f64::min),
        per_user_max: per_user.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_user,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Ccr,
    Dcr,
    CcrCache,
    ProfitMax,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 4] = [
        SolverChoice::Ccr,
        SolverChoice::Dcr,
        SolverChoice::CcrCache,
        SolverChoice::ProfitMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Ccr => "ccr",
            SolverChoice::Dcr => "dcr",
            SolverChoice::CcrCache => "ccrcache",
            SolverChoice::ProfitMax => "profitmax",
        }
    }

    pub fn has_trace(self) -> bool {
        matches!(self, SolverChoice::Dcr | SolverChoice::CcrCache)
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverChoice::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver {s:?}")))
    }
}

/// Settings of every solver, loaded from one JSON document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub ccr: CcrConfig,
    pub dcr: DcrConfig,
    pub ccrcache: CcrCacheConfig,
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        self.ccr.validate()?;
        self.dcr.validate()?;
        self.ccrcache.validate()
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

/// One solve summarized for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rho: f64,
    pub solver: SolverChoice,
    /// `agreement`, `disagreement`, or `error`.
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub cp_gain: f64,
    pub cdn_gain: f64,
    pub cp_gain_pct: f64,
    pub cdn_gain_pct: f64,
    pub total_gain_pct: f64,
    pub gains_absolute: bool,
    pub objective: Option<f64>,
    pub hit_rate: f64,
    pub baseline_hit_rate: f64,
    pub raw_hit_sum: f64,
    pub qor: f64,
    pub qor_min: f64,
    pub qor_max: f64,
    /// Joint caching only.
    pub stalled: Option<bool>,
    pub error: Option<String>,
}

pub const METRICS_COLUMNS: [&str; 24] = [
    "rho",
    "solver",
    "status",
    "converged",
    "iterations",
    "cp_gain",
    "cdn_gain",
    "cp_gain_pct",
    "cdn_gain_pct",
    "total_gain_pct",
    "gains_absolute",
    "objective",
    "hit_rate",
    "baseline_hit_rate",
    "raw_hit_sum",
    "qor",
    "qor_min",
    "qor_max",
    "stalled",
    "error",
    "scenario_hash",
    "config_hash",
    "seed",
    "version",
];

impl MetricsRow {
    fn failed(rho: f64, solver: SolverChoice, error: &Error) -> Self {
        MetricsRow {
            rho,
            solver,
            status: "error".into(),
            converged: false,
            iterations: 0,
            cp_gain: f64::NAN,
            cdn_gain: f64::NAN,
            cp_gain_pct: f64::NAN,
            cdn_gain_pct: f64::NAN,
            total_gain_pct: f64::NAN,
            gains_absolute: false,
            objective: None,
            hit_rate: f64::NAN,
            baseline_hit_rate: f64::NAN,
            raw_hit_sum: f64::NAN,
            qor: f64::NAN,
            qor_min: f64::NAN,
            qor_max: f64::NAN,
            stalled: None,
            error: Some(error.to_string()),
        }
    }

    fn record(&self, meta: &ReportMeta) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        vec![
            self.rho.to_string(),
            self.solver.to_string(),
            self.status.clone(),
            self.converged.to_string(),
            self.iterations.to_string(),
            self.cp_gain.to_string(),
            self.cdn_gain.to_string(),
            self.cp_gain_pct.to_string(),
            self.cdn_gain_pct.to_string(),
            self.total_gain_pct.to_string(),
            self.gains_absolute.to_string(),
            opt(self.objective),
            self.hit_rate.to_string(),
            self.baseline_hit_rate.to_string(),
            self.raw_hit_sum.to_string(),
            self.qor.to_string(),
            self.qor_min.to_string(),
            self.qor_max.to_string(),
            self.stalled.map_or(String::new(), |s| s.to_string()),
            self.error.clone().unwrap_or_default(),
            meta.scenario_hash.clone(),
            meta.config_hash.clone(),
            meta.seed.to_string(),
            meta.version.clone(),
        ]
    }
}

/// A solver run with its policy and, for the iterative solvers, the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub meta: ReportMeta,
    pub solver: SolverChoice,
    pub rho: f64,
    /// For the profit-maximizing comparison the gains are measured from the
    /// same baselines, `objective` is present only when both are positive,
    /// and `converged` means a stationary point was reached.
    pub outcome: BargainOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<AdmmTrace>,
    pub metrics: MetricsRow,
}

/// Provenance stamped into every report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub scenario_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl ReportMeta {
    pub fn new(scenario: &Scenario, settings: &SolverSettings) -> Self {
        ReportMeta {
            scenario_hash: scenario_hash(scenario),
            config_hash: settings.hash(),
            seed: scenario.seed,
            version: ARTIFACT_VERSION.to_string(),
        }
    }
}

/// Runs `solver` on `scenario` and evaluates the result.
pub fn run_solver(scenario: &Scenario, solver: SolverChoice, settings: &SolverSettings) -> Result<SolveReport> {
    let meta = ReportMeta::new(scenario, settings);
    let baseline_caching = baseline_caching_matrix(scenario);
    let (outcome, cache, trace, stalled) = match solver {
        SolverChoice::Ccr => (solve_ccr(scenario, &settings.ccr)?, None, None, None),
        SolverChoice::Dcr => {
            let sol = solve_dcr(scenario, &settings.dcr)?;
            (sol.outcome, None, Some(sol.trace), None)
        }
        SolverChoice::CcrCache => {
            let sol = solve_ccrcache(scenario, &settings.ccrcache)?;
            (sol.outcome, Some(sol.cache), Some(sol.trace), Some(sol.stalled))
        }
        SolverChoice::ProfitMax => {
            let pm = profit_max_baseline(scenario)?;
            let (cp_gain, cdn_gain) = (pm.cp_gain(), pm.cdn_gain());
            let outcome = BargainOutcome {
                status: Status::Agreement,
                y_star: RecommendationMatrix::from_binary(&pm.recommendations),
                cp_gain,
                cdn_gain,
                cp_utility: pm.cp_utility,
                cdn_utility: pm.cdn_utility,
                cp_baseline: pm.cp_baseline,
                cdn_baseline: pm.cdn_baseline,
                objective: (cp_gain > 0.0 && cdn_gain > 0.0).then(|| -cp_gain.ln() - cdn_gain.ln()),
                iterations: pm.alternations,
                converged: pm.stationary,
                projected_gradient_norm: 0.0,
                history: Vec::new(),
            };
            (outcome, Some(pm.cache), None, None)
        }
    };
    let caching = match &cache {
        Some(x) => x.0.clone().insert_axis(ndarray::Axis(1)),
        None => baseline_caching.clone(),
    };
    let gains = relative_gains(&outcome);
    let hit = cache_hit_rate(scenario, outcome.y_star.view(), caching.view())?;
    let yb = RecommendationMatrix::baseline(scenario);
    let baseline_hit = cache_hit_rate(scenario, yb.view(), baseline_caching.view())?;
    let quality = quality_of_recommendations(scenario, outcome.y_star.view())?;
    let metrics = MetricsRow {
        rho: scenario.pricing.rho,
        solver,
        status: match outcome.status {
            Status::Agreement => "agreement".into(),
            Status::Disagreement => "disagreement".into(),
        },
        converged: outcome.converged,
        iterations: outcome.iterations,
        cp_gain: outcome.cp_gain,
        cdn_gain: outcome.cdn_gain,
        cp_gain_pct: gains.cp,
        cdn_gain_pct: gains.cdn,
        total_gain_pct: gains.total,
        gains_absolute: gains.absolute,
        objective: outcome.objective,
        hit_rate: hit.rate,
        baseline_hit_rate: baseline_hit.rate,
        raw_hit_sum: hit.raw,
        qor: quality.aggregate,
        qor_min: quality.per_user_min,
        qor_max: quality.per_user_max,
        stalled,
        error: None,
    };
    Ok(SolveReport {
        meta,
        solver,
        rho: scenario.pricing.rho,
        outcome,
        cache,
        trace,
        metrics,
    })
}

/// Monotone-trend summary of a sweep over the agreement rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFlags {
    pub cp_gain_nondecreasing: bool,
    pub cdn_gain_nonincreasing: bool,
    pub gains_positive: bool,
    pub hit_rate_at_least_baseline: bool,
    /// Smallest discount of the sweep whose row ended in disagreement.
    pub first_disagreement_rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub meta: ReportMeta,
    pub solver: SolverChoice,
    pub rows: Vec<MetricsRow>,
    pub trends: TrendFlags,
}

impl SweepReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        write_metrics_csv(&self.rows, &self.meta, writer)
    }
}

/// Solves the template under every discount in `rho_values`, rows in the
/// given order. Rows run in parallel on the current rayon pool; a failing
/// row is recorded and the sweep continues.
pub fn sweep_discount(
    template: &Scenario,
    rho_values: &[f64],
    solver: SolverChoice,
    settings: &SolverSettings,
) -> Result<SweepReport> {
    if rho_values.is_empty() {
        return Err(Error::InvalidConfig("empty discount grid".into()));
    }
    let rows: Vec<MetricsRow> = rho_values
        .par_iter()
        .map(|&rho| {
            template
                .with_rho(rho)
                .and_then(|s| run_solver(&s, solver, settings))
                .map(|r| r.metrics)
                .unwrap_or_else(|e| {
                    log::warn!("sweep row rho={rho} failed: {e}");
                    MetricsRow::failed(rho, solver, &e)
                })
        })
        .collect();
    let trends = trend_flags(&rows);
    Ok(SweepReport {
        meta: ReportMeta::new(template, settings),
        solver,
        rows,
        trends,
    })
}

pub fn trend_flags(rows: &[MetricsRow]) -> TrendFlags {
    let mut ordered: Vec<&MetricsRow> = rows.iter().collect();
    ordered.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    let agreement: Vec<&MetricsRow> = ordered.iter().copied().filter(|r| r.status == "agreement").collect();
    TrendFlags {
        cp_gain_nondecreasing: agreement
            .windows(2)
            .all(|w| w[1].cp_gain_pct >= w[0].cp_gain_pct - TREND_TOLERANCE),
        cdn_gain_nonincreasing: agreement
            .windows(2)
            .all(|w| w[1].cdn_gain_pct <= w[0].cdn_gain_pct + TREND_TOLERANCE),
        gains_positive: agreement.iter().all(|r| r.cp_gain > 0.0 && r.cdn_gain > 0.0),
        hit_rate_at_least_baseline: agreement
            .iter()
            .all(|r| r.hit_rate >= r.baseline_hit_rate - 1e-12),
        first_disagreement_rho: ordered.iter().find(|r| r.status == "disagreement").map(|r| r.rho),
    }
}

/// One row per entry, columns [`METRICS_COLUMNS`].
pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], meta: &ReportMeta, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_COLUMNS)?;
    for r in rows {
        w.write_record(r.record(meta))?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Evenly spaced grid `start, start + step, ...` up to `end` inclusive,
/// tolerant to rounding of the last point.
pub fn grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::InvalidConfig(format!("bad grid {start}:{end}:{step}")));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let v = start + k as f64 * step;
            // Keep printed values short, e.g. 0.15 rather than 0.15000000000000002.
            (v * 1e12).round() / 1e12
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, toy_scenario, GeneratorParams};
    use ndarray::array;

    fn outcome(cp: (f64, f64), cdn: (f64, f64)) -> BargainOutcome {
        let mut o = BargainOutcome::disagreement(array![[1.0]], cp.0, cdn.0);
        o.status = Status::Agreement;
        o.cp_utility = cp.1;
        o.cdn_utility = cdn.1;
        o.cp_gain = cp.1 - cp.0;
        o.cdn_gain = cdn.1 - cdn.0;
        o
    }

    #[test]
    fn relative_gains_follow_the_definitions() {
        let g = relative_gains(&outcome((10.0, 12.0), (10.0, 13.0)));
        assert_eq!((g.cp, g.cdn, g.total, g.absolute), (20.0, 30.0, 25.0, false));
        let g = relative_gains(&outcome((10.0, 10.0), (5.0, 5.0)));
        assert_eq!((g.cp, g.cdn, g.total), (0.0, 0.0, 0.0));
        let g = relative_gains(&BargainOutcome::disagreement(array![[1.0]], 3.0, 4.0));
        assert_eq!((g.cp, g.cdn, g.total), (0.0, 0.0, 0.0));
        let g = relative_gains(&outcome((0.0, 2.0), (1.0, 2.0)));
        assert!(g.absolute);
        assert_eq!((g.cp, g.cdn), (2.0, 1.0));
    }

    #[test]
    fn hit_rate_bounds() {
        let s = toy_scenario();
        let y = array![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let none = Array2::zeros((4, 1));
        assert_eq!(cache_hit_rate(&s, y.view(), none.view()).unwrap().rate, 0.0);
        let all = Array2::ones((4, 1));
        let h = cache_hit_rate(&s, y.view(), all.view()).unwrap();
        assert!((h.rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hit_rate_matches_request_enumeration() {
        let s = generate(&GeneratorParams::scenario_one().scaled(6, 30), 3, None).unwrap();
        let y = Array2::from_shape_fn(s.shape(), |(u, i)| ((u + i) % 7) as f64 / 7.0);
        let x = baseline_caching_matrix(&s);
        let got = cache_hit_rate(&s, y.view(), x.view()).unwrap();
        let mut hits = 0.0;
        let mut raw = 0.0;
        for u in 0..6 {
            let w = s.users.alpha[u] / s.users.rec_count[u] as f64;
            for i in 0..30 {
                let mut any = false;
                for l in &s.topology.access[u] {
                    if x[[i, l.cache]] > 0.0 {
                        raw += w * y[[u, i]];
                        any = true;
                    }
                }
                if any {
                    hits += w * y[[u, i]];
                }
            }
        }
        let total: f64 = s.users.alpha.iter().sum();
        assert!((got.rate - hits / total).abs() < 1e-12);
        assert!((got.raw - raw).abs() < 1e-12);
    }

    #[test]
    fn quality_definitions() {
        let s = toy_scenario();
        let top = crate::ccr::top_n_rows(s.users.relevance.view(), &s.users.rec_count).mapv(f64::from);
        let q = quality_of_recommendations(&s, top.view()).unwrap();
        assert!((q.aggregate - 1.0).abs() < 1e-12);
        let zero = Array2::zeros((2, 4));
        assert_eq!(quality_of_recommendations(&s, zero.view()).unwrap().aggregate, 0.0);
        // User 0: 0.5 * 0.6 + 0.5 * 0.95 over 1.0; user 1: 0.9 * 0.85 over 1.0.
        let y = array![[0.0, 0.5, 0.5, 0.0], [0.0, 0.0, 0.1, 0.9]];
        let q = quality_of_recommendations(&s, y.view()).unwrap();
        assert!((q.per_user[0] - 0.775).abs() < 1e-12);
        assert!((q.per_user[1] - (0.095 + 0.765)).abs() < 1e-12);
        assert_eq!(q.per_user_min, q.per_user[0]);
    }

    #[test]
    fn solver_names_round_trip() {
        for c in SolverChoice::ALL {
            assert_eq!(c.name().parse::<SolverChoice>().unwrap(), c);
        }
        assert!("simplex".parse::<SolverChoice>().is_err());
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(grid(0.05, 0.5, 0.05).unwrap().len(), 10);
        assert_eq!(grid(0.2, 0.2, 0.1).unwrap(), vec![0.2]);
        assert!(grid(0.3, 0.2, 0.1).is_err());
    }

    #[test]
    fn single_row_sweep_equals_direct_solve() {
        let s = toy_scenario();
        let settings = SolverSettings::default();
        let sweep = sweep_discount(&s, &[0.3], SolverChoice::Ccr, &settings).unwrap();
        let direct = run_solver(&s, SolverChoice::Ccr, &settings).unwrap();
        assert_eq!(sweep.rows, vec![direct.metrics]);
        assert!(sweep_discount(&s, &[], SolverChoice::Ccr, &settings).is_err());
    }

    #[test]
    fn failing_row_is_recorded() {
        let s = toy_scenario();
        let sweep = sweep_discount(&s, &[0.3, 1.5], SolverChoice::Ccr, &SolverSettings::default()).unwrap();
        assert_eq!(sweep.rows[1].status, "error");
        assert_eq!(sweep.rows[0].status, "agreement");
    }

    #[test]
    fn csv_has_stable_header() {
        let s = toy_scenario();
        let settings = SolverSettings::default();
        let r = run_solver(&s, SolverChoice::Ccr, &settings).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&[r.metrics], &r.meta, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 2);
    }
}
