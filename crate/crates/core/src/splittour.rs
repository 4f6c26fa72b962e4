//! Giant-tour representation, the Split decoder and penalized cost evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

/// Routes whose load exceeds `factor * Q` are never produced by Split.
pub const DEFAULT_MAX_LOAD_FACTOR: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("giant tour is not a permutation of 1..={n}: {msg}")]
    InvalidTour { n: usize, msg: String },
    #[error("route references vertex {0}, which is not a customer")]
    UnknownCustomer(usize),
    #[error("empty route at position {0}")]
    EmptyRoute(usize),
    #[error("routes do not partition the customers: {0}")]
    NotAPartition(String),
    #[error("no segmentation keeps every route under the load bound {0}")]
    NoSegmentation(f64),
    #[error("solution text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Sum of `w * excess` that never produces NaN for an infinite weight on a feasible route.
#[inline]
pub fn penalty(w: f64, excess: u64) -> f64 {
    if excess == 0 {
        0.0
    } else {
        w * excess as f64
    }
}

/// Permutation of all customers, depot omitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GiantTour(Vec<usize>);

impl GiantTour {
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self, SplitError> {
        if order.len() != n {
            return Err(SplitError::InvalidTour {
                n,
                msg: format!("length {}", order.len()),
            });
        }
        let mut seen = vec![false; n + 1];
        for &c in &order {
            if c == 0 || c > n {
                return Err(SplitError::InvalidTour {
                    n,
                    msg: format!("vertex {c} out of range"),
                });
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(SplitError::InvalidTour {
                    n,
                    msg: format!("customer {c} repeated"),
                });
            }
        }
        Ok(GiantTour(order))
    }

    /// Skips validation; callers guarantee the permutation property.
    pub(crate) fn from_vec_unchecked(order: Vec<usize>) -> Self {
        GiantTour(order)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(rng);
        GiantTour(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

/// A set of depot-to-depot routes with cached distance and capacity excess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    routes: Vec<Vec<usize>>,
    distance: f64,
    excess: u64,
}

impl Solution {
    /// Computes distance and excess from scratch. Routes must be nonempty and only
    /// reference customers; the partition property is checked separately.
    pub fn from_routes(inst: &Instance, routes: Vec<Vec<usize>>) -> Result<Self, SplitError> {
        let mut distance = 0.0;
        let mut excess = 0;
        for (k, route) in routes.iter().enumerate() {
            if route.is_empty() {
                return Err(SplitError::EmptyRoute(k));
            }
            if let Some(&c) = route.iter().find(|&&c| c == 0 || c > inst.n()) {
                return Err(SplitError::UnknownCustomer(c));
            }
            distance += route_distance(inst, route);
            excess += route_load(inst, route).saturating_sub(inst.capacity());
        }
        Ok(Solution {
            routes,
            distance,
            excess,
        })
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn into_routes(self) -> Vec<Vec<usize>> {
        self.routes
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Total load above capacity, summed over routes.
    pub fn excess(&self) -> u64 {
        self.excess
    }

    pub fn is_feasible(&self) -> bool {
        self.excess == 0
    }

    pub fn penalized_cost(&self, w: f64) -> f64 {
        self.distance + penalty(w, self.excess)
    }

    /// Verifies every customer of `inst` is visited exactly once.
    pub fn check_partition(&self, inst: &Instance) -> Result<(), SplitError> {
        let mut seen = vec![false; inst.n() + 1];
        for route in &self.routes {
            for &c in route {
                if c == 0 || c > inst.n() {
                    return Err(SplitError::UnknownCustomer(c));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(SplitError::NotAPartition(format!("customer {c} visited twice")));
                }
            }
        }
        match seen.iter().skip(1).position(|s| !s) {
            Some(k) => Err(SplitError::NotAPartition(format!("customer {} never visited", k + 1))),
            None => Ok(()),
        }
    }

    /// CVRPLIB solution format: `Route #k: ...` lines followed by `Cost <z>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, route) in self.routes.iter().enumerate() {
            let _ = write!(out, "Route #{}:", k + 1);
            for c in route {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Cost {}", self.distance);
        out
    }
}

/// Reads the routes of a CVRPLIB solution file; the `Cost` line is ignored.
pub fn parse_solution_text(inst: &Instance, text: &str) -> Result<Solution, SplitError> {
    let mut routes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        let Some(rest) = line.strip_prefix("Route") else {
            continue;
        };
        let (_, body) = rest.split_once(':').ok_or(SplitError::Parse {
            line: idx + 1,
            msg: "missing `:`".into(),
        })?;
        let route = body
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| SplitError::Parse {
                line: idx + 1,
                msg: "bad customer id".into(),
            })?;
        if !route.is_empty() {
            routes.push(route);
        }
    }
    Solution::from_routes(inst, routes)
}

pub fn route_distance(inst: &Instance, route: &[usize]) -> f64 {
    let (Some(&first), Some(&last)) = (route.first(), route.last()) else {
        return 0.0;
    };
    let inner: f64 = route.windows(2).map(|w| inst.distance(w[0], w[1])).sum();
    inst.distance(0, first) + inner + inst.distance(last, 0)
}

pub fn route_load(inst: &Instance, route: &[usize]) -> u64 {
    route.iter().map(|&c| inst.demand(c)).sum()
}

/// Recomputes the penalized cost of `sol` from its routes alone.
pub fn evaluate(inst: &Instance, sol: &Solution, w: f64) -> Result<f64, SplitError> {
    let fresh = Solution::from_routes(inst, sol.routes.clone())?;
    Ok(fresh.penalized_cost(w))
}

/// Split with the default overload bound of `1.5 Q`.
pub fn split(inst: &Instance, tour: &GiantTour, w: f64) -> Result<Solution, SplitError> {
    split_with_bound(inst, tour, w, DEFAULT_MAX_LOAD_FACTOR)
}

/// Optimal segmentation of `tour` into consecutive routes under penalty weight `w`.
///
/// Shortest path over the segmentation DAG, computed backwards over suffixes so that
/// ties (equal cost, then equal route count) resolve to the earliest cut positions.
pub fn split_with_bound(
    inst: &Instance,
    tour: &GiantTour,
    w: f64,
    max_load_factor: f64,
) -> Result<Solution, SplitError> {
    const TIE: f64 = 1e-9;
    let order = tour.as_slice();
    let n = order.len();
    let max_load = max_load_factor * inst.capacity() as f64;
    let q = inst.capacity();

    let mut best_cost = vec![f64::INFINITY; n + 1];
    let mut best_routes = vec![usize::MAX; n + 1];
    let mut next = vec![usize::MAX; n + 1];
    best_cost[n] = 0.0;
    best_routes[n] = 0;

    for a in (0..n).rev() {
        let mut load = 0u64;
        let mut inner = 0.0;
        for b in (a + 1)..=n {
            let last = order[b - 1];
            load += inst.demand(last);
            if load as f64 > max_load {
                break;
            }
            if b > a + 1 {
                inner += inst.distance(order[b - 2], last);
            }
            if best_routes[b] == usize::MAX {
                continue;
            }
            let route_cost = inst.distance(0, order[a]) + inner + inst.distance(last, 0);
            let cost = route_cost + penalty(w, load.saturating_sub(q)) + best_cost[b];
            let routes = best_routes[b] + 1;
            let better = if cost < best_cost[a] - TIE {
                true
            } else if cost <= best_cost[a] + TIE {
                routes < best_routes[a]
            } else {
                false
            };
            if better {
                best_cost[a] = cost;
                best_routes[a] = routes;
                next[a] = b;
            }
        }
    }
    if best_routes[0] == usize::MAX {
        return Err(SplitError::NoSegmentation(max_load));
    }

    let mut routes = Vec::with_capacity(best_routes[0]);
    let mut a = 0;
    while a < n {
        let b = next[a];
        routes.push(order[a..b].to_vec());
        a = b;
    }
    Solution::from_routes(inst, routes)
}

/// Concatenates the routes in a uniformly shuffled route order, keeping each route's
/// internal sequence.
pub fn to_giant_tour<R: Rng + ?Sized>(sol: &Solution, rng: &mut R) -> GiantTour {
    let mut idx: Vec<usize> = (0..sol.routes.len()).collect();
    idx.shuffle(rng);
    GiantTour(idx.into_iter().flat_map(|k| sol.routes[k].iter().copied()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Rounding;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inst(coords: Vec<(f64, f64)>, demands: Vec<u64>, q: u64) -> Instance {
        Instance::new("t", coords, demands, q, Rounding::Nearest).unwrap()
    }

    #[test]
    fn capacity_forces_singletons() {
        let i = inst(vec![(0.0, 0.0), (10.0, 0.0), (11.0, 0.0)], vec![0, 5, 5], 5);
        let sol = split(&i, &GiantTour::new(vec![1, 2], 2).unwrap(), 1000.0).unwrap();
        assert_eq!(sol.routes(), &[vec![1], vec![2]]);
        assert!(sol.is_feasible());
        assert_eq!(sol.distance(), 42.0);
    }

    #[test]
    fn colocated_customers_form_one_route() {
        let i = inst(
            vec![(0.0, 0.0), (6.0, 8.0), (6.0, 8.0), (6.0, 8.0)],
            vec![0, 1, 1, 1],
            3,
        );
        let sol = split(&i, &GiantTour::new(vec![2, 3, 1], 3).unwrap(), 1.0).unwrap();
        assert_eq!(sol.num_routes(), 1);
        assert_eq!(sol.distance(), 20.0);
    }

    #[test]
    fn overload_is_bounded() {
        // at w = 0 everything would merge into one route, but 3 units exceed 1.5 * 1
        let i = inst(
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
            vec![0, 1, 1, 1],
            1,
        );
        let sol = split(&i, &GiantTour::new(vec![1, 2, 3], 3).unwrap(), 0.0).unwrap();
        assert_eq!(sol.num_routes(), 3);
        let loose = split_with_bound(&i, &GiantTour::new(vec![1, 2, 3], 3).unwrap(), 0.0, 3.0).unwrap();
        assert_eq!(loose.num_routes(), 1);
        assert_eq!(loose.excess(), 2);
    }

    #[test]
    fn evaluate_adds_weighted_excess() {
        let i = inst(vec![(0.0, 0.0), (3.0, 4.0), (3.0, 4.0)], vec![0, 5, 6], 8);
        let sol = Solution::from_routes(&i, vec![vec![1, 2]]).unwrap();
        assert_eq!(sol.excess(), 3);
        assert_eq!(evaluate(&i, &sol, 10.0).unwrap(), 10.0 + 30.0);
        let feasible = Solution::from_routes(&i, vec![vec![1], vec![2]]).unwrap();
        assert_eq!(evaluate(&i, &feasible, 1e9).unwrap(), feasible.distance());
        assert_eq!(feasible.penalized_cost(f64::INFINITY), 20.0);
    }

    #[test]
    fn structural_errors() {
        let i = inst(vec![(0.0, 0.0), (1.0, 0.0)], vec![0, 1], 1);
        assert_eq!(
            Solution::from_routes(&i, vec![vec![2]]),
            Err(SplitError::UnknownCustomer(2))
        );
        assert_eq!(Solution::from_routes(&i, vec![vec![]]), Err(SplitError::EmptyRoute(0)));
        assert!(GiantTour::new(vec![1, 1], 2).is_err());
        assert!(GiantTour::new(vec![0], 1).is_err());
        let dup = Solution::from_routes(&i, vec![vec![1], vec![1]]).unwrap();
        assert!(dup.check_partition(&i).is_err());
    }

    #[test]
    fn giant_tour_keeps_route_order() {
        let i = inst(
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
            vec![0, 1, 1, 1],
            3,
        );
        let single = Solution::from_routes(&i, vec![vec![3, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(to_giant_tour(&single, &mut rng).as_slice(), &[3, 1, 2]);
    }

    #[test]
    fn solution_text_round_trip() {
        let i = inst(vec![(0.0, 0.0), (3.0, 4.0), (0.0, 5.0)], vec![0, 1, 1], 1);
        let sol = Solution::from_routes(&i, vec![vec![2], vec![1]]).unwrap();
        let text = sol.to_text();
        assert_eq!(text, "Route #1: 2\nRoute #2: 1\nCost 20\n");
        assert_eq!(parse_solution_text(&i, &text).unwrap(), sol);
    }
}
