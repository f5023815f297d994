//! Route rating, Active Path Set selection and dispersal sizing.

use std::cmp::Ordering;

use thiserror::Error;

use crate::dispersal::DispersalConfig;
use crate::metrics::LinkWeightTable;
use crate::types::{NodeId, Path};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no eligible route")]
    NoRoute,
}

/// Scores a route from a source's node ratings and link weights. Higher is
/// better.
pub trait RouteRater {
    fn rate(&self, path: &Path, table: &LinkWeightTable) -> f64;
}

/// Mean intermediate-node rating divided by mean link weight. A direct
/// route has no intermediates and gets the maximal node term of 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct RatioRater;

impl RouteRater for RatioRater {
    fn rate(&self, path: &Path, table: &LinkWeightTable) -> f64 {
        let mids = path.intermediates();
        let node_mean = if mids.is_empty() {
            1.0
        } else {
            mids.iter().map(|&n| table.rating(n)).sum::<f64>() / mids.len() as f64
        };
        let weight_mean = path.links().map(|l| table.weight(l)).sum::<f64>() / path.len() as f64;
        node_mean / weight_mean
    }
}

pub fn rate_route(path: &Path, table: &LinkWeightTable) -> f64 {
    RatioRater.rate(path, table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Path,
    pub rating: f64,
    pub trust: f64,
}

impl Route {
    pub fn rated(path: Path, trust: f64, table: &LinkWeightTable, rater: &dyn RouteRater) -> Self {
        let rating = rater.rate(&path, table);
        Route { path, rating, trust }
    }

    pub fn length(&self) -> usize {
        self.path.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    /// Target number of routes.
    pub k: usize,
    pub trust_threshold: f64,
    /// Routes crossing a link at or above this weight are only used when
    /// nothing else is eligible.
    pub avoid_weight: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams { k: 4, trust_threshold: 0.2, avoid_weight: 2.0 }
    }
}

/// Node-disjoint routes between one source and destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePathSet {
    routes: Vec<Route>,
    k: usize,
}

impl ActivePathSet {
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// No two routes share a node other than the endpoints.
    pub fn is_disjoint(&self) -> bool {
        let mut used = std::collections::HashSet::new();
        self.routes.iter().all(|r| r.path.intermediates().iter().all(|n| used.insert(*n)))
    }
}

/// Greedy ordering: rating descending, then length ascending, then node ids.
pub fn rank_order(a: &Route, b: &Route) -> Ordering {
    b.rating
        .total_cmp(&a.rating)
        .then(a.length().cmp(&b.length()))
        .then_with(|| a.path.nodes().cmp(b.path.nodes()))
}

fn greedy(sorted: &[&Route], k: usize) -> Vec<Route> {
    let mut used: std::collections::HashSet<NodeId> = std::collections::HashSet::new();
    let mut taken = Vec::new();
    for r in sorted {
        if taken.len() == k {
            break;
        }
        let mids = r.path.intermediates();
        if mids.iter().any(|n| used.contains(n)) {
            continue;
        }
        used.extend(mids.iter().copied());
        taken.push((*r).clone());
    }
    taken
}

/// Greedy node-disjoint selection of up to `params.k` routes.
pub fn select_aps(
    candidates: &[Route],
    params: &SelectionParams,
    table: &LinkWeightTable,
) -> Result<ActivePathSet, SelectionError> {
    let mut eligible: Vec<&Route> = candidates.iter().filter(|r| r.trust >= params.trust_threshold).collect();
    eligible.sort_by(|a, b| rank_order(a, b));
    let clean: Vec<&Route> = eligible
        .iter()
        .copied()
        .filter(|r| r.path.links().all(|l| table.weight(l) < params.avoid_weight))
        .collect();
    let mut routes = greedy(&clean, params.k);
    if routes.is_empty() {
        routes = greedy(&eligible, params.k);
    }
    if routes.is_empty() {
        return Err(SelectionError::NoRoute);
    }
    Ok(ActivePathSet { routes, k: params.k })
}

/// Trust below which a route is expected to fail.
pub const RELIABLE_TRUST: f64 = 0.5;

/// One share per route; the threshold drops by one for every route expected
/// to fail, but never below half the routes.
pub fn choose_dispersion(aps: &ActivePathSet) -> DispersalConfig {
    let trusts: Vec<f64> = aps.routes.iter().map(|r| r.trust).collect();
    dispersion_for(&trusts)
}

/// [`choose_dispersion`] over the current trust of each route in use.
pub fn dispersion_for(trusts: &[f64]) -> DispersalConfig {
    let n = trusts.len().max(1);
    let expected_failures = trusts.iter().filter(|&&t| t < RELIABLE_TRUST).count();
    let m = n.saturating_sub(expected_failures).max(1).max(n.div_ceil(2));
    DispersalConfig::new(n, m).expect("1 <= m <= n by construction")
}
