//! Domain types and the pricing, cost and utility formulas.
//!
//! Every function here is a pure function of an immutable [`Scenario`] and a
//! policy. Utilities are expectations over the request model: a user `u`
//! follows one of its `N_u` recommendations with probability `alpha_u`, each
//! recommended item being equally likely, and otherwise requests content `i`
//! with probability `p_i`.
//!
//! Two evaluation paths are provided. The free functions ([`cp_utility`],
//! [`cdn_utility`], ...) sum the formulas term by term. [`UtilityCoefficients`]
//! and [`CachingCoefficients`] precompute the linear (and bilinear) forms once
//! so that the solvers can evaluate gains with a single multiply-add pass.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) == 1`.
pub const POPULARITY_TOLERANCE: f64 = 1e-9;
/// Tolerance on `sum_i y_ui == N_u` for row-feasible recommendation matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    /// Content sizes in Gb.
    pub sizes: Vec<f64>,
    /// Probability that a request made outside of the recommendations targets
    /// each content.
    pub popularity: Vec<f64>,
}

impl Catalog {
    pub fn content_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_size(&self) -> f64 {
        self.sizes.iter().sum()
    }

    pub fn has_unit_sizes(&self) -> bool {
        self.sizes.iter().all(|&s| s == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidScenario("empty catalog".into()));
        }
        if self.popularity.len() != self.sizes.len() {
            return Err(Error::Dimension(format!(
                "{} popularity entries for {} contents",
                self.popularity.len(),
                self.sizes.len()
            )));
        }
        if let Some(i) = self.sizes.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidScenario(format!(
                "content {i} has non-positive size {}",
                self.sizes[i]
            )));
        }
        if let Some(i) = self.popularity.iter().position(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidScenario(format!(
                "content {i} has negative popularity {}",
                self.popularity[i]
            )));
        }
        let total: f64 = self.popularity.iter().sum();
        if (total - 1.0).abs() > POPULARITY_TOLERANCE {
            return Err(Error::InvalidScenario(format!(
                "popularity sums to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserPopulation {
    /// Probability that each user follows its recommendations, in (0, 1].
    pub alpha: Vec<f64>,
    /// Number of recommendations shown to each user.
    pub rec_count: Vec<usize>,
    /// Dense users x contents relevance matrix in [0, 1].
    #[serde(with = "crate::matrix_serde")]
    pub relevance: Array2<f64>,
}

impl UserPopulation {
    pub fn user_count(&self) -> usize {
        self.alpha.len()
    }

    /// Weight `alpha_u / N_u` of a single recommended item.
    #[inline]
    pub fn click_weight(&self, u: usize) -> f64 {
        self.alpha[u] / self.rec_count[u] as f64
    }

    pub fn validate(&self, content_count: usize) -> Result<()> {
        let users = self.alpha.len();
        if users == 0 {
            return Err(Error::InvalidScenario("no users".into()));
        }
        if self.rec_count.len() != users || self.relevance.dim() != (users, content_count) {
            return Err(Error::Dimension(format!(
                "user population has {} alphas, {} rec counts and a {:?} relevance matrix for {} contents",
                users,
                self.rec_count.len(),
                self.relevance.dim(),
                content_count
            )));
        }
        if let Some(u) = self.alpha.iter().position(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidScenario(format!(
                "user {u} has alpha {} outside (0, 1]",
                self.alpha[u]
            )));
        }
        if let Some(u) = self
            .rec_count
            .iter()
            .position(|&n| n == 0 || n > content_count)
        {
            return Err(Error::InvalidScenario(format!(
                "user {u} receives {} recommendations from {} contents",
                self.rec_count[u], content_count
            )));
        }
        if self.relevance.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidScenario(
                "relevance entries must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A small cache reachable by a user, with the per-Gb retrieval cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheLink {
    pub cache: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheTopology {
    /// Capacity of every small cache in Gb.
    pub capacities: Vec<f64>,
    /// Per user, the reachable small caches ordered by nondecreasing cost.
    /// The root cache is implicitly reachable last.
    pub access: Vec<Vec<CacheLink>>,
    /// Per-Gb retrieval cost from the root cache, per user.
    pub root_cost: Vec<f64>,
}

impl CacheTopology {
    pub fn cache_count(&self) -> usize {
        self.capacities.len()
    }

    /// Retrieval cost of user `u` at the only small cache of a single-cache
    /// topology. Users without a link pay the root cost.
    pub fn single_cache_cost(&self, u: usize) -> f64 {
        self.access[u]
            .iter()
            .find(|l| l.cache == 0)
            .map_or(self.root_cost[u], |l| l.cost)
    }

    pub fn validate(&self, user_count: usize) -> Result<()> {
        if self.access.len() != user_count || self.root_cost.len() != user_count {
            return Err(Error::Dimension(format!(
                "topology describes {} access lists and {} root costs for {} users",
                self.access.len(),
                self.root_cost.len(),
                user_count
            )));
        }
        if let Some(j) = self
            .capacities
            .iter()
            .position(|&c| !(c >= 0.0 && c.is_finite()))
        {
            return Err(Error::InvalidScenario(format!(
                "cache {j} has invalid capacity {}",
                self.capacities[j]
            )));
        }
        for (u, links) in self.access.iter().enumerate() {
            let root = self.root_cost[u];
            if !(root > 0.0 && root.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "user {u} has invalid root cost {root}"
                )));
            }
            for (rank, link) in links.iter().enumerate() {
                if link.cache >= self.cache_count() {
                    return Err(Error::InvalidScenario(format!(
                        "user {u} links to unknown cache {}",
                        link.cache
                    )));
                }
                if !(link.cost > 0.0) {
                    return Err(Error::InvalidScenario(format!(
                        "user {u} has non-positive cost {} to cache {}",
                        link.cost, link.cache
                    )));
                }
                if !(link.cost < root) {
                    return Err(Error::InvalidScenario(format!(
                        "user {u}: cache {} cost {} does not undercut root cost {root}",
                        link.cache, link.cost
                    )));
                }
                if rank > 0 && links[rank - 1].cost > link.cost {
                    return Err(Error::InvalidScenario(format!(
                        "user {u}: access list is not ordered by cost"
                    )));
                }
                if links[..rank].iter().any(|l| l.cache == link.cache) {
                    return Err(Error::InvalidScenario(format!(
                        "user {u} lists cache {} twice",
                        link.cache
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nondecreasing map from relevance to the content provider's revenue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RevenueMap {
    /// `intercept + slope * r`
    Affine { intercept: f64, slope: f64 },
    /// `intercept + slope * sqrt(r)`
    Sqrt { intercept: f64, slope: f64 },
}

impl Default for RevenueMap {
    fn default() -> Self {
        RevenueMap::Affine {
            intercept: 0.15,
            slope: 0.09,
        }
    }
}

impl RevenueMap {
    pub fn apply(&self, relevance: f64) -> f64 {
        match *self {
            RevenueMap::Affine { intercept, slope } => intercept + slope * relevance,
            RevenueMap::Sqrt { intercept, slope } => intercept + slope * relevance.sqrt(),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match *self {
            RevenueMap::Affine { slope, .. } | RevenueMap::Sqrt { slope, .. } => slope >= 0.0,
        }
    }

    pub fn revenue_matrix(&self, relevance: &Array2<f64>) -> Array2<f64> {
        relevance.mapv(|r| self.apply(r))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    /// Delivery price per Gb requested.
    pub lambda: f64,
    /// Discount on the delivery price for items that were not recommended
    /// before cooperation, in (0, 1).
    pub rho: f64,
    /// Expected revenue per request, users x contents.
    #[serde(with = "crate::matrix_serde")]
    pub revenue: Array2<f64>,
    pub revenue_map: RevenueMap,
}

impl PricingModel {
    pub fn from_relevance(lambda: f64, rho: f64, map: RevenueMap, relevance: &Array2<f64>) -> Self {
        PricingModel {
            lambda,
            rho,
            revenue: map.revenue_matrix(relevance),
            revenue_map: map,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "delivery price {} must be positive",
                self.lambda
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "discount {} outside (0, 1)",
                self.rho
            )));
        }
        if !self.revenue_map.is_nondecreasing() {
            return Err(Error::InvalidScenario(
                "revenue map must be nondecreasing".into(),
            ));
        }
        if self.revenue.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidScenario("non-finite revenue".into()));
        }
        Ok(())
    }
}

/// Recommendation and caching decisions taken before any cooperation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinePolicy {
    /// Binary users x contents matrix.
    #[serde(with = "crate::matrix_serde")]
    pub recommendations: Array2<u8>,
    /// Binary contents x caches matrix.
    #[serde(with = "crate::matrix_serde")]
    pub caching: Array2<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub catalog: Catalog,
    pub users: UserPopulation,
    pub topology: CacheTopology,
    pub pricing: PricingModel,
    pub baseline: BaselinePolicy,
    pub seed: u64,
}

impl Scenario {
    pub fn user_count(&self) -> usize {
        self.users.user_count()
    }

    pub fn content_count(&self) -> usize {
        self.catalog.content_count()
    }

    pub fn cache_count(&self) -> usize {
        self.topology.cache_count()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.user_count(), self.content_count())
    }

    /// Checks every invariant of every component plus cross-field dimensions.
    pub fn validate(&self) -> Result<()> {
        let (users, contents) = self.shape();
        self.catalog.validate()?;
        self.users.validate(contents)?;
        self.topology.validate(users)?;
        self.pricing.validate()?;
        if self.pricing.revenue.dim() != (users, contents) {
            return Err(Error::Dimension(format!(
                "revenue matrix is {:?}, expected {:?}",
                self.pricing.revenue.dim(),
                (users, contents)
            )));
        }
        let yb = &self.baseline.recommendations;
        let xb = &self.baseline.caching;
        if yb.dim() != (users, contents) || xb.dim() != (contents, self.cache_count()) {
            return Err(Error::Dimension(format!(
                "baseline shapes {:?} / {:?} do not match {users} users, {contents} contents, {} caches",
                yb.dim(),
                xb.dim(),
                self.cache_count()
            )));
        }
        if yb.iter().chain(xb.iter()).any(|&b| b > 1) {
            return Err(Error::InvalidScenario("baseline entries must be 0 or 1".into()));
        }
        for (u, row) in yb.outer_iter().enumerate() {
            let count: usize = row.iter().map(|&b| b as usize).sum();
            if count != self.users.rec_count[u] {
                return Err(Error::InvalidScenario(format!(
                    "baseline recommends {count} items to user {u}, expected {}",
                    self.users.rec_count[u]
                )));
            }
        }
        for (j, &cap) in self.topology.capacities.iter().enumerate() {
            let stored: f64 = xb
                .column(j)
                .iter()
                .zip(&self.catalog.sizes)
                .map(|(&x, &s)| x as f64 * s)
                .sum();
            if stored > cap + 1e-9 {
                return Err(Error::InvalidScenario(format!(
                    "baseline stores {stored} Gb in cache {j} of capacity {cap}"
                )));
            }
        }
        Ok(())
    }

    /// Single small cache with unit-sized contents, as required by the joint
    /// caching extension.
    pub fn require_single_cache(&self) -> Result<()> {
        if self.cache_count() != 1 {
            return Err(Error::Contract(format!(
                "joint caching needs exactly one small cache, found {}",
                self.cache_count()
            )));
        }
        if !self.catalog.has_unit_sizes() {
            return Err(Error::Contract(
                "joint caching needs unit-sized contents".into(),
            ));
        }
        Ok(())
    }

    /// Same scenario under a different discount. Baselines do not depend on
    /// the discount and are kept.
    pub fn with_rho(&self, rho: f64) -> Result<Scenario> {
        let mut s = self.clone();
        s.pricing.rho = rho;
        s.pricing.validate()?;
        Ok(s)
    }

    /// Baseline caching of the single small cache as a continuous vector.
    pub fn baseline_cache_vector(&self) -> Result<CacheVector> {
        self.require_single_cache()?;
        Ok(CacheVector(
            self.baseline.caching.column(0).mapv(|b| b as f64),
        ))
    }

    fn check_user_content(&self, u: usize, i: usize) -> Result<()> {
        let (users, contents) = self.shape();
        if u >= users || i >= contents {
            return Err(Error::Contract(format!(
                "index ({u}, {i}) outside {users} users x {contents} contents"
            )));
        }
        Ok(())
    }

    fn check_matrix(&self, what: &str, dim: (usize, usize)) -> Result<()> {
        if dim != self.shape() {
            return Err(Error::Dimension(format!(
                "{what} is {dim:?}, expected {:?}",
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Probabilistic recommendations, users x contents, entries in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecommendationMatrix(#[serde(with = "crate::matrix_serde")] Array2<f64>);

impl RecommendationMatrix {
    pub fn new(y: Array2<f64>) -> Result<Self> {
        if let Some(v) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!(
                "recommendation entry {v} outside [0, 1]"
            )));
        }
        Ok(RecommendationMatrix(y))
    }

    /// Clamps into [0, 1]; used on solver iterates that sit within rounding
    /// of the box.
    pub(crate) fn from_clamped(y: Array2<f64>) -> Self {
        RecommendationMatrix(y.mapv(|v| v.clamp(0.0, 1.0)))
    }

    pub fn zeros(users: usize, contents: usize) -> Self {
        RecommendationMatrix(Array2::zeros((users, contents)))
    }

    pub fn from_binary(b: &Array2<u8>) -> Self {
        RecommendationMatrix(b.mapv(|v| if v > 0 { 1.0 } else { 0.0 }))
    }

    pub fn baseline(scenario: &Scenario) -> Self {
        Self::from_binary(&scenario.baseline.recommendations)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Every row sums to its user's recommendation count within `tol`.
    pub fn is_row_feasible(&self, rec_count: &[usize], tol: f64) -> bool {
        self.0.nrows() == rec_count.len()
            && self
                .0
                .outer_iter()
                .zip(rec_count)
                .all(|(row, &n)| (row.sum() - n as f64).abs() <= tol)
    }
}

/// Continuous caching decisions of a single small cache, entries in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheVector(#[serde(with = "crate::matrix_serde::vector")] pub Array1<f64>);

impl CacheVector {
    pub fn new(x: Array1<f64>) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("caching entry {v} outside [0, 1]")));
        }
        Ok(CacheVector(x))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    /// Box and capacity constraints hold within 1e-8.
    pub fn is_feasible(&self, capacity: f64) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v)) && self.total() <= capacity + 1e-8
    }
}

/// Delivery price per Gb after the cooperation discount:
/// `lambda * (1 + rho * (y_b - 1))`.
pub fn discounted_price(pricing: &PricingModel, baseline_recommended: bool) -> f64 {
    let yb = if baseline_recommended { 1.0 } else { 0.0 };
    pricing.lambda * (1.0 + pricing.rho * (yb - 1.0))
}

/// Cost for the CDN of delivering content `i` to user `u` under the baseline
/// caching: the cheapest reachable cache holding the content, else the root.
pub fn retrieval_cost(scenario: &Scenario, u: usize, i: usize) -> Result<f64> {
    scenario.check_user_content(u, i)?;
    Ok(retrieval_cost_unchecked(scenario, u, i))
}

fn retrieval_cost_unchecked(scenario: &Scenario, u: usize, i: usize) -> f64 {
    let size = scenario.catalog.sizes[i];
    let caching = &scenario.baseline.caching;
    // Product chain: the j-th ranked cache serves the request when it holds
    // the content and no cheaper cache does.
    let mut missed = 1.0;
    let mut cost = 0.0;
    for link in &scenario.topology.access[u] {
        let x = caching[[i, link.cache]] as f64;
        cost += size * link.cost * x * missed;
        missed *= 1.0 - x;
    }
    cost + size * scenario.topology.root_cost[u] * missed
}

/// Matrix of [`retrieval_cost`] over all users and contents.
pub fn retrieval_cost_matrix(scenario: &Scenario) -> Array2<f64> {
    let (users, contents) = scenario.shape();
    Array2::from_shape_fn((users, contents), |(u, i)| {
        retrieval_cost_unchecked(scenario, u, i)
    })
}

/// Content provider's utility before cooperation.
pub fn cp_baseline_utility(scenario: &Scenario) -> f64 {
    let lambda = scenario.pricing.lambda;
    let mut total = 0.0;
    for (u, row) in scenario.baseline.recommendations.outer_iter().enumerate() {
        let w = scenario.users.click_weight(u);
        for (i, &yb) in row.iter().enumerate() {
            if yb > 0 {
                let sigma = scenario.catalog.sizes[i];
                total += w * (scenario.pricing.revenue[[u, i]] - lambda * sigma);
            }
        }
    }
    total
}

/// CDN's utility before cooperation.
pub fn cdn_baseline_utility(scenario: &Scenario) -> f64 {
    let lambda = scenario.pricing.lambda;
    let mut total = 0.0;
    for (u, row) in scenario.baseline.recommendations.outer_iter().enumerate() {
        let w = scenario.users.click_weight(u);
        for (i, &yb) in row.iter().enumerate() {
            if yb > 0 {
                let sigma = scenario.catalog.sizes[i];
                total += w * (lambda * sigma - retrieval_cost_unchecked(scenario, u, i));
            }
        }
    }
    total
}

/// Content provider's utility under cooperative recommendations `y`.
pub fn cp_utility(scenario: &Scenario, y: &RecommendationMatrix) -> Result<f64> {
    scenario.check_matrix("recommendation matrix", y.dim())?;
    let mut total = 0.0;
    for (u, row) in y.view().outer_iter().enumerate() {
        let w = scenario.users.click_weight(u);
        for (i, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let price = discounted_price(
                    &scenario.pricing,
                    scenario.baseline.recommendations[[u, i]] > 0,
                );
                let sigma = scenario.catalog.sizes[i];
                total += w * v * (scenario.pricing.revenue[[u, i]] - price * sigma);
            }
        }
    }
    Ok(total)
}

/// CDN's utility under cooperative recommendations `y`.
pub fn cdn_utility(scenario: &Scenario, y: &RecommendationMatrix) -> Result<f64> {
    scenario.check_matrix("recommendation matrix", y.dim())?;
    let mut total = 0.0;
    for (u, row) in y.view().outer_iter().enumerate() {
        let w = scenario.users.click_weight(u);
        for (i, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let price = discounted_price(
                    &scenario.pricing,
                    scenario.baseline.recommendations[[u, i]] > 0,
                );
                let sigma = scenario.catalog.sizes[i];
                total += w * v * (price * sigma - retrieval_cost_unchecked(scenario, u, i));
            }
        }
    }
    Ok(total)
}

/// Retrieval cost with a single small cache holding a fraction `x` of the
/// content: `k_u0 + x (k_u1 - k_u0)`.
pub fn single_cache_retrieval_cost(scenario: &Scenario, u: usize, x: f64) -> f64 {
    let root = scenario.topology.root_cost[u];
    root + x * (scenario.topology.single_cache_cost(u) - root)
}

fn out_of_recommendation_profit(scenario: &Scenario, x: &dyn Fn(usize) -> f64) -> f64 {
    let lambda = scenario.pricing.lambda;
    let mut total = 0.0;
    for u in 0..scenario.user_count() {
        let miss = 1.0 - scenario.users.alpha[u];
        if miss == 0.0 {
            continue;
        }
        for (i, &p) in scenario.catalog.popularity.iter().enumerate() {
            total += miss * p * (lambda - single_cache_retrieval_cost(scenario, u, x(i)));
        }
    }
    total
}

/// CDN's baseline utility including requests made outside of the
/// recommendations (single cache, unit sizes).
pub fn cdn_baseline_utility_with_caching(scenario: &Scenario) -> Result<f64> {
    scenario.require_single_cache()?;
    let xb = &scenario.baseline.caching;
    Ok(cdn_baseline_utility(scenario)
        + out_of_recommendation_profit(scenario, &|i| xb[[i, 0]] as f64))
}

/// CDN's utility under joint cooperative recommendations `y` and caching `x`.
/// Bilinear in `(x, y)`.
pub fn cdn_utility_with_caching(
    scenario: &Scenario,
    y: &RecommendationMatrix,
    x: &CacheVector,
) -> Result<f64> {
    scenario.require_single_cache()?;
    scenario.check_matrix("recommendation matrix", y.dim())?;
    if x.len() != scenario.content_count() {
        return Err(Error::Dimension(format!(
            "cache vector has {} entries for {} contents",
            x.len(),
            scenario.content_count()
        )));
    }
    let mut total = 0.0;
    for (u, row) in y.view().outer_iter().enumerate() {
        let w = scenario.users.click_weight(u);
        for (i, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let price = discounted_price(
                    &scenario.pricing,
                    scenario.baseline.recommendations[[u, i]] > 0,
                );
                total += w * v * (price - single_cache_retrieval_cost(scenario, u, x.0[i]));
            }
        }
    }
    Ok(total + out_of_recommendation_profit(scenario, &|i| x.0[i]))
}

/// Linear forms of both parties' utilities.
///
/// `cp[u, i] = (alpha_u / N_u) (R_ui - Lambda_ui sigma_i)` and
/// `cdn[u, i] = (alpha_u / N_u) (Lambda_ui sigma_i - K_ui)`, so that
/// `U(Y) = <cp, Y>` and `U~(Y) = <cdn, Y>`.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityCoefficients {
    pub cp: Array2<f64>,
    pub cdn: Array2<f64>,
    pub cp_baseline: f64,
    pub cdn_baseline: f64,
}

impl UtilityCoefficients {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let costs = retrieval_cost_matrix(scenario);
        let (users, contents) = scenario.shape();
        let mut cp = Array2::zeros((users, contents));
        let mut cdn = Array2::zeros((users, contents));
        for u in 0..users {
            let w = scenario.users.click_weight(u);
            for i in 0..contents {
                let sigma = scenario.catalog.sizes[i];
                let fee = discounted_price(
                    &scenario.pricing,
                    scenario.baseline.recommendations[[u, i]] > 0,
                ) * sigma;
                cp[[u, i]] = w * (scenario.pricing.revenue[[u, i]] - fee);
                cdn[[u, i]] = w * (fee - costs[[u, i]]);
            }
        }
        UtilityCoefficients {
            cp,
            cdn,
            cp_baseline: cp_baseline_utility(scenario),
            cdn_baseline: cdn_baseline_utility(scenario),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.cp.dim()
    }

    pub fn cp_utility(&self, y: ArrayView2<'_, f64>) -> f64 {
        dot(self.cp.view(), y)
    }

    pub fn cdn_utility(&self, y: ArrayView2<'_, f64>) -> f64 {
        dot(self.cdn.view(), y)
    }

    pub fn cp_gain(&self, y: ArrayView2<'_, f64>) -> f64 {
        self.cp_utility(y) - self.cp_baseline
    }

    pub fn cdn_gain(&self, y: ArrayView2<'_, f64>) -> f64 {
        self.cdn_utility(y) - self.cdn_baseline
    }
}

/// Coefficients of the CDN utility with a single cache, written as an affine
/// function of `(y, z, x)` where `z_ui` stands in for the product `x_i y_ui`:
///
/// `G(x, y, z) = <rec, y> + <coupling, z> + <cache, x> + constant`.
///
/// With `z = x o y` this is exactly `V(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CachingCoefficients {
    /// `(alpha_u / N_u) (Lambda_ui - k_u0)`
    pub rec: Array2<f64>,
    /// `(alpha_u / N_u) (k_u0 - k_u1)`, nonnegative.
    pub coupling: Array2<f64>,
    /// `sum_u (1 - alpha_u) p_i (k_u0 - k_u1)`, nonnegative.
    pub cache: Array1<f64>,
    /// `sum_{u,i} (1 - alpha_u) p_i (lambda - k_u0)`
    pub constant: f64,
    /// Baseline utility `V^b`.
    pub baseline: f64,
}

impl CachingCoefficients {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        scenario.require_single_cache()?;
        let (users, contents) = scenario.shape();
        let lambda = scenario.pricing.lambda;
        let mut rec = Array2::zeros((users, contents));
        let mut coupling = Array2::zeros((users, contents));
        let mut cache = Array1::zeros(contents);
        let mut constant = 0.0;
        for u in 0..users {
            let w = scenario.users.click_weight(u);
            let root = scenario.topology.root_cost[u];
            let saving = root - scenario.topology.single_cache_cost(u);
            let miss = 1.0 - scenario.users.alpha[u];
            for i in 0..contents {
                let price = discounted_price(
                    &scenario.pricing,
                    scenario.baseline.recommendations[[u, i]] > 0,
                );
                rec[[u, i]] = w * (price - root);
                coupling[[u, i]] = w * saving;
                let p = scenario.catalog.popularity[i];
                cache[i] += miss * p * saving;
                constant += miss * p * (lambda - root);
            }
        }
        Ok(CachingCoefficients {
            rec,
            coupling,
            cache,
            constant,
            baseline: cdn_baseline_utility_with_caching(scenario)?,
        })
    }

    pub fn g_value(
        &self,
        x: &Array1<f64>,
        y: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
    ) -> f64 {
        dot(self.rec.view(), y) + dot(self.coupling.view(), z) + self.cache.dot(x) + self.constant
    }

    /// Exact bilinear `V(x, y)`.
    pub fn v_value(&self, x: &Array1<f64>, y: ArrayView2<'_, f64>) -> f64 {
        let mut bilinear = 0.0;
        Zip::from(self.coupling.rows())
            .and(y.rows())
            .for_each(|c, yr| {
                bilinear += c
                    .iter()
                    .zip(yr)
                    .zip(x)
                    .map(|((&c, &y), &x)| c * y * x)
                    .sum::<f64>();
            });
        dot(self.rec.view(), y) + bilinear + self.cache.dot(x) + self.constant
    }

    pub fn v_gain(&self, x: &Array1<f64>, y: ArrayView2<'_, f64>) -> f64 {
        self.v_value(x, y) - self.baseline
    }
}

pub(crate) fn dot(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let mut total = 0.0;
    Zip::from(&a).and(&b).for_each(|&x, &y| total += x * y);
    total
}
