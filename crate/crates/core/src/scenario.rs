//! Building problem instances: synthetic generators, ratings ingestion, the
//! baseline policies and the scenario file format.
//!
//! Random draws use ChaCha8 (`rand_chacha` 0.9) seeded from the scenario
//! seed, so a seed reproduces the same instance on every platform.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    BaselinePolicy, CacheLink, CacheTopology, Catalog, PricingModel, RevenueMap, Scenario,
    UserPopulation,
};

/// Version of the scenario JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Parameters of the synthetic instance generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub users: usize,
    pub contents: usize,
    /// `N_u`, the same for every user.
    pub rec_count: usize,
    /// Click probabilities are drawn symmetrically around `alpha_mean`, within
    /// `alpha_mean +- alpha_spread`.
    pub alpha_mean: f64,
    pub alpha_spread: f64,
    pub caches: usize,
    pub caches_per_user: usize,
    /// Range of user-to-cache retrieval costs per Gb.
    pub edge_cost: (f64, f64),
    pub root_cost: f64,
    pub lambda: f64,
    pub rho: f64,
    pub revenue_map: RevenueMap,
    /// Each cache's capacity is a fraction of the catalog size drawn from this
    /// range.
    pub cache_fraction: (f64, f64),
    /// Rank of the latent factors behind synthetic relevances.
    pub latent_rank: usize,
}

impl GeneratorParams {
    /// Multi-cache recipe: 100 users, 6000 contents, 9 caches.
    pub fn scenario_one() -> Self {
        GeneratorParams {
            users: 100,
            contents: 6000,
            rec_count: 5,
            alpha_mean: 0.8,
            alpha_spread: 0.2,
            caches: 9,
            caches_per_user: 2,
            edge_cost: (0.0005, 0.02),
            root_cost: 0.055,
            lambda: 0.11,
            rho: 0.3,
            revenue_map: RevenueMap::default(),
            cache_fraction: (0.01, 0.04),
            latent_rank: 8,
        }
    }

    /// Single shared cache holding 5% of the catalog, reachable by everyone.
    pub fn scenario_two() -> Self {
        GeneratorParams {
            caches: 1,
            caches_per_user: 1,
            rho: 0.2,
            cache_fraction: (0.05, 0.05),
            ..Self::scenario_one()
        }
    }

    /// Small instances for checks against exhaustive or centralized
    /// references: one cache reachable by every user, holding a quarter to a
    /// half of the catalog, so that small catalogs still cache something.
    pub fn small(users: usize, contents: usize, rec_count: usize) -> Self {
        GeneratorParams {
            users,
            contents,
            rec_count,
            caches: 1,
            caches_per_user: 1,
            cache_fraction: (0.25, 0.5),
            latent_rank: 2,
            ..Self::scenario_one()
        }
    }

    /// Same recipe on a smaller population and catalog.
    pub fn scaled(mut self, users: usize, contents: usize) -> Self {
        self.users = users;
        self.contents = contents;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.users == 0 || self.contents == 0 {
            return bad("empty population or catalog".into());
        }
        if self.rec_count == 0 || self.rec_count > self.contents {
            return bad(format!("{} recommendations for {} contents", self.rec_count, self.contents));
        }
        if self.caches_per_user > self.caches {
            return bad(format!(
                "{} caches per user but only {} caches",
                self.caches_per_user, self.caches
            ));
        }
        let (lo, hi) = self.edge_cost;
        if !(lo > 0.0 && lo <= hi && hi < self.root_cost) {
            return bad(format!("edge costs {lo}..{hi} must lie in (0, root cost)"));
        }
        let (a, b) = self.cache_fraction;
        if !(a >= 0.0 && a <= b && b <= 1.0) {
            return bad(format!("cache fraction range {a}..{b}"));
        }
        if !(self.alpha_spread >= 0.0
            && self.alpha_mean - self.alpha_spread >= 0.0
            && self.alpha_mean + self.alpha_spread <= 1.0
            && self.alpha_mean > 0.0)
        {
            return bad("click probabilities must stay within (0, 1]".into());
        }
        if self.latent_rank == 0 {
            return bad("latent rank must be positive".into());
        }
        Ok(())
    }
}

/// Multi-cache instance with synthetic relevances.
pub fn generate_scenario_one(seed: u64) -> Result<Scenario> {
    generate(&GeneratorParams::scenario_one(), seed, None)
}

/// Single-cache instance with synthetic relevances.
pub fn generate_scenario_two(seed: u64) -> Result<Scenario> {
    generate(&GeneratorParams::scenario_two(), seed, None)
}

/// Builds an instance from `params`. When `relevance` is given it must be
/// `users x contents`; otherwise relevances are synthesized from the seed.
pub fn generate(params: &GeneratorParams, seed: u64, relevance: Option<Array2<f64>>) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relevance = match relevance {
        Some(r) => {
            if r.dim() != (params.users, params.contents) {
                return Err(Error::Dimension(format!(
                    "relevance matrix is {:?}, recipe needs {:?}",
                    r.dim(),
                    (params.users, params.contents)
                )));
            }
            r
        }
        None => synthetic_relevance(params.users, params.contents, params.latent_rank, &mut rng),
    };

    let alpha = symmetric_alpha(params.users, params.alpha_mean, params.alpha_spread, &mut rng);

    let mut all: Vec<usize> = (0..params.caches).collect();
    let access = (0..params.users)
        .map(|_| {
            all.shuffle(&mut rng);
            let mut links: Vec<CacheLink> = all[..params.caches_per_user]
                .iter()
                .map(|&cache| CacheLink {
                    cache,
                    cost: rng.random_range(params.edge_cost.0..=params.edge_cost.1),
                })
                .collect();
            links.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.cache.cmp(&b.cache)));
            links
        })
        .collect();
    let total = params.contents as f64;
    let capacities = (0..params.caches)
        .map(|_| {
            let (a, b) = params.cache_fraction;
            let f = if a == b { a } else { rng.random_range(a..b) };
            (f * total).floor()
        })
        .collect();

    let column_sums = relevance.sum_axis(ndarray::Axis(0));
    let mass = column_sums.sum();
    let popularity = if mass > 0.0 {
        column_sums.iter().map(|c| c / mass).collect()
    } else {
        vec![1.0 / total; params.contents]
    };

    let pricing = PricingModel::from_relevance(params.lambda, params.rho, params.revenue_map, &relevance);
    let mut scenario = Scenario {
        catalog: Catalog {
            sizes: vec![1.0; params.contents],
            popularity,
        },
        users: UserPopulation {
            alpha,
            rec_count: vec![params.rec_count; params.users],
            relevance,
        },
        topology: CacheTopology {
            capacities,
            access,
            root_cost: vec![params.root_cost; params.users],
        },
        pricing,
        baseline: BaselinePolicy {
            recommendations: Array2::zeros((0, 0)),
            caching: Array2::zeros((0, 0)),
        },
        seed,
    };
    rebuild_baseline(&mut scenario);
    scenario.validate()?;
    Ok(scenario)
}

/// Relevances from a low-rank latent model squashed by a logistic function.
fn synthetic_relevance(users: usize, contents: usize, rank: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut normal = |scale: f64| -> f64 { scale * rng.sample::<f64, _>(StandardNormal) };
    let scale = 1.0 / (rank as f64).sqrt();
    let user_factors: Vec<f64> = (0..users * rank).map(|_| normal(1.0)).collect();
    let user_bias: Vec<f64> = (0..users).map(|_| normal(0.3)).collect();
    let item_factors: Vec<f64> = (0..contents * rank).map(|_| normal(1.0)).collect();
    let item_bias: Vec<f64> = (0..contents).map(|_| normal(0.6)).collect();
    Array2::from_shape_fn((users, contents), |(u, i)| {
        let affinity: f64 = user_factors[u * rank..(u + 1) * rank]
            .iter()
            .zip(&item_factors[i * rank..(i + 1) * rank])
            .map(|(a, b)| a * b)
            .sum();
        let logit = 0.6 + 1.5 * scale * affinity + user_bias[u] + item_bias[i];
        1.0 / (1.0 + (-logit).exp())
    })
}

/// Pairs `mean + d` and `mean - d` with `d` uniform in `[0, spread)`, so the
/// sample mean equals `mean` exactly; an odd user out gets `mean`. The result
/// is shuffled. Draws stay strictly below `mean + spread`.
fn symmetric_alpha(users: usize, mean: f64, spread: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(users);
    for _ in 0..users / 2 {
        let d = if spread > 0.0 { rng.random_range(0.0..spread) } else { 0.0 };
        alpha.push(mean + d);
        alpha.push(mean - d);
    }
    if users % 2 == 1 {
        alpha.push(mean);
    }
    alpha.shuffle(rng);
    alpha
}

/// The worked two-user, four-content example with a single 2 Gb cache.
///
/// Both users value the third content highly, and it sits in the cache. The
/// baseline recommends each user its favourite (first and second content),
/// served from the root. Recommending the third content to both raises the
/// provider's utility by 20% and the CDN's by about 21%.
pub fn toy_scenario() -> Scenario {
    let relevance = ndarray::array![[1.0, 0.6, 0.95, 0.9], [0.6, 1.0, 0.95, 0.85]];
    let map = RevenueMap::Affine {
        intercept: 0.0,
        slope: 1.0,
    };
    let mut scenario = Scenario {
        catalog: Catalog {
            sizes: vec![1.0; 4],
            popularity: vec![0.1, 0.1, 0.4, 0.4],
        },
        users: UserPopulation {
            alpha: vec![1.0, 1.0],
            rec_count: vec![1, 1],
            relevance: relevance.clone(),
        },
        topology: CacheTopology {
            capacities: vec![2.0],
            access: vec![
                vec![CacheLink { cache: 0, cost: 0.01 }],
                vec![CacheLink { cache: 0, cost: 0.01 }],
            ],
            root_cost: vec![0.22, 0.22],
        },
        pricing: PricingModel::from_relevance(0.5, 0.3, map, &relevance),
        baseline: BaselinePolicy {
            recommendations: Array2::zeros((0, 0)),
            caching: Array2::zeros((0, 0)),
        },
        seed: 0,
    };
    rebuild_baseline(&mut scenario);
    scenario
}

/// Recomputes both baseline policies from revenues, relevances and capacities.
pub fn rebuild_baseline(scenario: &mut Scenario) {
    scenario.baseline.recommendations = baseline_recommendations(scenario);
    scenario.baseline.caching = baseline_caching(scenario);
}

/// Per user, the `N_u` contents with the highest revenue; ties to the lower
/// index.
pub fn baseline_recommendations(scenario: &Scenario) -> Array2<u8> {
    crate::ccr::top_n_rows(scenario.pricing.revenue.view(), &scenario.users.rec_count)
}

/// Per cache, greedy fill by relevance summed over the users reaching that
/// cache, skipping contents that no longer fit; ties to the lower index.
pub fn baseline_caching(scenario: &Scenario) -> Array2<u8> {
    let contents = scenario.content_count();
    let caches = scenario.cache_count();
    let mut x = Array2::zeros((contents, caches));
    for j in 0..caches {
        let connected: Vec<usize> = scenario
            .topology
            .access
            .iter()
            .enumerate()
            .filter(|(_, links)| links.iter().any(|l| l.cache == j))
            .map(|(u, _)| u)
            .collect();
        let scores = aggregated_relevance(scenario.users.relevance.view(), &connected);
        let mut order: Vec<usize> = (0..contents).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut free = scenario.topology.capacities[j];
        for i in order {
            let size = scenario.catalog.sizes[i];
            if size <= free + 1e-12 {
                x[[i, j]] = 1;
                free -= size;
            }
        }
    }
    x
}

fn aggregated_relevance(relevance: ArrayView2<'_, f64>, users: &[usize]) -> Vec<f64> {
    let mut scores = vec![0.0; relevance.ncols()];
    for &u in users {
        for (s, r) in scores.iter_mut().zip(relevance.row(u)) {
            *s += r;
        }
    }
    let n = users.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    scores
}

/// Same instance with every cache resized to `fraction` of the catalog size,
/// and baseline caching recomputed.
pub fn with_cache_fraction(scenario: &Scenario, fraction: f64) -> Result<Scenario> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("cache fraction {fraction} outside [0, 1]")));
    }
    let mut s = scenario.clone();
    let total = s.catalog.total_size();
    s.topology.capacities.iter_mut().for_each(|c| *c = (fraction * total).floor());
    s.baseline.caching = baseline_caching(&s);
    s.validate()?;
    Ok(s)
}

/// Affine map of a rating scale onto [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 0.5, max: 5.0 }
    }
}

impl RatingScale {
    pub fn normalize(&self, rating: f64) -> f64 {
        (rating - self.min) / (self.max - self.min)
    }
}

/// A dense relevance matrix read from a ratings file.
#[derive(Clone, Debug)]
pub struct LoadedRatings {
    pub relevance: Array2<f64>,
    /// Original identifiers of the matrix rows and columns, ascending.
    pub user_ids: Vec<u64>,
    pub content_ids: Vec<u64>,
    /// Repeated `(user, content)` pairs; the last rating was kept.
    pub duplicates: usize,
    /// Cells filled by imputation.
    pub imputed: usize,
}

/// Reads `user_id,content_id,rating` rows on the default 0.5 to 5 star scale.
pub fn load_relevance_csv(
    path: impl AsRef<Path>,
    expected_users: usize,
    expected_contents: usize,
) -> Result<LoadedRatings> {
    load_relevance_csv_with_scale(path, expected_users, expected_contents, RatingScale::default())
}

/// Reads a ratings file into a dense `expected_users x expected_contents`
/// relevance matrix.
///
/// Distinct identifiers are sorted and mapped to consecutive indices. A first
/// line whose rating does not parse is treated as a header, and columns beyond
/// the third are ignored. Cells without a rating get the mean of the user's
/// observed relevances, or the global mean for users with no rating at all.
pub fn load_relevance_csv_with_scale(
    path: impl AsRef<Path>,
    expected_users: usize,
    expected_contents: usize,
    scale: RatingScale,
) -> Result<LoadedRatings> {
    let path = path.as_ref();
    if !(scale.max > scale.min) {
        return Err(Error::InvalidConfig(format!(
            "rating scale {}..{} is empty",
            scale.min, scale.max
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;

    let parse_error = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut ratings: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut duplicates = 0;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(index as u64 + 1, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(index as u64 + 1, |p| p.line());
        if record.len() < 3 {
            return Err(parse_error(line, format!("expected 3 fields, found {}", record.len())));
        }
        let rating = record[2].parse::<f64>();
        if index == 0 && rating.is_err() {
            continue;
        }
        let user = record[0]
            .parse::<u64>()
            .map_err(|e| parse_error(line, format!("user id {:?}: {e}", &record[0])))?;
        let content = record[1]
            .parse::<u64>()
            .map_err(|e| parse_error(line, format!("content id {:?}: {e}", &record[1])))?;
        let rating = rating.map_err(|e| parse_error(line, format!("rating {:?}: {e}", &record[2])))?;
        if !(rating >= scale.min && rating <= scale.max) {
            return Err(parse_error(
                line,
                format!("rating {rating} outside {}..{}", scale.min, scale.max),
            ));
        }
        if ratings.insert((user, content), scale.normalize(rating)).is_some() {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("{}: {duplicates} repeated ratings, kept the last of each", path.display());
    }

    let user_ids: Vec<u64> = ratings.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let content_ids: Vec<u64> = ratings.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    if user_ids.len() > expected_users || content_ids.len() > expected_contents {
        return Err(Error::Dimension(format!(
            "{}: {} users and {} contents, expected at most {expected_users} and {expected_contents}",
            path.display(),
            user_ids.len(),
            content_ids.len()
        )));
    }
    let user_index: BTreeMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let content_index: BTreeMap<u64, usize> =
        content_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut observed: Array2<Option<f64>> = Array2::from_elem((expected_users, expected_contents), None);
    for (&(u, i), &r) in &ratings {
        observed[[user_index[&u], content_index[&i]]] = Some(r);
    }
    let global_mean = if ratings.is_empty() {
        0.5
    } else {
        ratings.values().sum::<f64>() / ratings.len() as f64
    };
    let mut relevance = Array2::zeros((expected_users, expected_contents));
    let mut imputed = 0;
    for (u, row) in observed.outer_iter().enumerate() {
        let seen: Vec<f64> = row.iter().flatten().copied().collect();
        let fill = if seen.is_empty() {
            global_mean
        } else {
            seen.iter().sum::<f64>() / seen.len() as f64
        };
        for (i, cell) in row.iter().enumerate() {
            relevance[[u, i]] = cell.unwrap_or_else(|| {
                imputed += 1;
                fill
            });
        }
    }
    Ok(LoadedRatings {
        relevance,
        user_ids,
        content_ids,
        duplicates,
        imputed,
    })
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

#[derive(Serialize)]
struct ScenarioFileRef<'a> {
    schema_version: u32,
    #[serde(flatten)]
    scenario: &'a Scenario,
}

pub fn scenario_to_json(scenario: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioFileRef {
        schema_version: SCHEMA_VERSION,
        scenario,
    })?)
}

pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidScenario(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    file.scenario.validate()?;
    Ok(file.scenario)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = scenario_to_json(scenario)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scenario_from_json(&text)
}

/// SHA-256 of the scenario's compact JSON encoding, hex encoded.
pub fn scenario_hash(scenario: &Scenario) -> String {
    hash_json(scenario)
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory values serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cdn_baseline_utility, cp_baseline_utility};
    use ndarray::array;
    use std::io::Write;

    fn small() -> GeneratorParams {
        GeneratorParams::scenario_one().scaled(20, 300)
    }

    #[test]
    fn toy_has_documented_shape() {
        let s = toy_scenario();
        s.validate().unwrap();
        assert_eq!(s.shape(), (2, 4));
        assert_eq!(s.topology.capacities, vec![2.0]);
        assert_eq!(s.baseline.recommendations, array![[1u8, 0, 0, 0], [0, 1, 0, 0]]);
        assert_eq!(s.baseline.caching.column(0).to_vec(), vec![0u8, 0, 1, 1]);
        assert!((cp_baseline_utility(&s) - 1.0).abs() < 1e-12);
        assert!((cdn_baseline_utility(&s) - 0.56).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small(), 7, None).unwrap();
        let b = generate(&small(), 7, None).unwrap();
        assert_eq!(scenario_to_json(&a).unwrap(), scenario_to_json(&b).unwrap());
        let c = generate(&small(), 8, None).unwrap();
        assert_ne!(scenario_hash(&a), scenario_hash(&c));
    }

    #[test]
    fn recipe_ranges_hold() {
        let s = generate(&GeneratorParams::scenario_one().scaled(100, 400), 3, None).unwrap();
        assert!(s.users.alpha.iter().all(|a| (0.6..1.0).contains(a)));
        let mean = s.users.alpha.iter().sum::<f64>() / 100.0;
        assert!((0.78..=0.82).contains(&mean));
        assert!(s.pricing.revenue.iter().all(|r| (0.15..=0.24).contains(r)));
        assert!(s.topology.access.iter().all(|l| l.len() == 2));
        for (links, root) in s.topology.access.iter().zip(&s.topology.root_cost) {
            assert!(links.iter().all(|l| l.cost < *root && (0.0005..=0.02).contains(&l.cost)));
        }
        for &c in &s.topology.capacities {
            assert!((4.0..=16.0).contains(&c));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = generate(&small(), 11, None).unwrap();
        let text = scenario_to_json(&s).unwrap();
        let back = scenario_from_json(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(text, scenario_to_json(&back).unwrap());
    }

    #[test]
    fn baseline_recommendation_ties_go_to_lower_index() {
        let mut s = toy_scenario();
        s.pricing.revenue = array![[0.1, 0.3, 0.3, 0.2], [0.5, 0.4, 0.3, 0.2]];
        assert_eq!(baseline_recommendations(&s), array![[0u8, 1, 0, 0], [1, 0, 0, 0]]);
    }

    #[test]
    fn greedy_caching_cases() {
        let mut s = toy_scenario();
        s.users.relevance = array![[0.6, 0.1, 0.4, 0.0], [0.9, 0.1, 0.2, 0.0]];
        // aggregated scores (1.5, 0.2, 0.6, 0.0)
        assert_eq!(baseline_caching(&s).column(0).to_vec(), vec![1u8, 0, 1, 0]);
        s.topology.capacities = vec![0.0];
        assert_eq!(baseline_caching(&s).column(0).to_vec(), vec![0u8; 4]);
        // heterogeneous sizes: 3 Gb of room, scores prefer 0 (2 Gb), then 2 (2 Gb) which
        // does not fit, then 1 (1 Gb)
        s.topology.capacities = vec![3.0];
        s.catalog.sizes = vec![2.0, 1.0, 2.0, 1.0];
        s.users.relevance = array![[0.9, 0.2, 0.5, 0.1], [0.9, 0.2, 0.5, 0.1]];
        assert_eq!(baseline_caching(&s).column(0).to_vec(), vec![1u8, 1, 0, 0]);
    }

    #[test]
    fn ratings_file_with_hole_and_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "userId,movieId,rating,timestamp").unwrap();
        for (u, i, r) in [(1, 10, 5.0), (1, 20, 0.5), (1, 30, 3.0), (2, 10, 1.0), (2, 30, 4.0), (3, 10, 2.0), (3, 20, 2.0), (3, 30, 2.0)] {
            writeln!(f, "{u},{i},{r},0").unwrap();
        }
        let loaded = load_relevance_csv(f.path(), 3, 3).unwrap();
        let r = &loaded.relevance;
        assert_eq!(r[[0, 0]], 1.0);
        assert_eq!(r[[0, 1]], 0.0);
        let a = (1.0 - 0.5) / 4.5;
        let b = (4.0 - 0.5) / 4.5;
        assert!((r[[1, 1]] - (a + b) / 2.0).abs() < 1e-15);
        assert_eq!(loaded.imputed, 1);
        assert_eq!(loaded.user_ids, vec![1, 2, 3]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,1,4.0\n1,2,oops").unwrap();
        match load_relevance_csv(f.path(), 1, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_keep_last() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1,1,1.0\n1,1,5.0\n1,2,0.5").unwrap();
        let loaded = load_relevance_csv(f.path(), 1, 2).unwrap();
        assert_eq!(loaded.duplicates, 1);
        assert_eq!(loaded.relevance[[0, 0]], 1.0);
    }

    #[test]
    fn cache_fraction_resizes_and_recaches() {
        let s = generate(&small(), 1, None).unwrap();
        let t = with_cache_fraction(&s, 0.05).unwrap();
        assert!(t.topology.capacities.iter().all(|&c| c == 15.0));
        for j in 0..t.cache_count() {
            assert_eq!(t.baseline.caching.column(j).iter().map(|&b| b as usize).sum::<usize>(), 15);
        }
    }
}
