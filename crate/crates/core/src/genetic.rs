//! Hybrid genetic search: two subpopulations (feasible / infeasible), ordered
//! crossover variants, Split decoding, local search education, adaptive capacity
//! penalty, repair, diversity-aware survivor selection and restarts.
//!
//! Randomness comes from a single ChaCha8 stream seeded with `SearchParams::seed`.
//! Draw order per iteration: two tournaments (two indices each), crossover cuts
//! (and the related-customer or start draw), the local search shuffles, the giant
//! tour route shuffle, the repair coin, and the repair search draws.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, ClockConfig};
use crate::instance::Instance;
use crate::localsearch::{run_local_search, LsConfig, LsOutcome, MoveCounters};
use crate::relatedness::{
    build_neighbor_lists_distance, build_neighbor_lists_heatmap, build_neighbor_lists_hybrid, Heatmap, NeighborLists,
    RelatednessError,
};
use crate::splittour::{split, to_giant_tour, GiantTour, Solution, SplitError};

#[derive(Debug, Error)]
pub enum GeneticError {
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
    #[error("mode {0} needs a heatmap")]
    MissingHeatmap(Mode),
    #[error(transparent)]
    Crossover(#[from] CrossoverError),
    #[error(transparent)]
    Relatedness(#[from] RelatednessError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrossoverError {
    #[error("parents are not permutations of the same customers")]
    Mismatch,
    #[error("cut points {a}..={b} out of range for length {n}")]
    BadCuts { a: usize, b: usize, n: usize },
}

/// Relatedness used for the local search neighbor lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LsRelatedness {
    Distance,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrossoverKind {
    Ox,
    Dox,
    Nox,
}

/// Solver variant: first letter picks the local search lists (D or N), the second
/// the crossover (O, D or N).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Mode {
    pub ls: LsRelatedness,
    pub crossover: CrossoverKind,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode {
            ls: LsRelatedness::Distance,
            crossover: CrossoverKind::Ox,
        },
        Mode {
            ls: LsRelatedness::Distance,
            crossover: CrossoverKind::Dox,
        },
        Mode {
            ls: LsRelatedness::Distance,
            crossover: CrossoverKind::Nox,
        },
        Mode {
            ls: LsRelatedness::Hybrid,
            crossover: CrossoverKind::Ox,
        },
        Mode {
            ls: LsRelatedness::Hybrid,
            crossover: CrossoverKind::Dox,
        },
        Mode {
            ls: LsRelatedness::Hybrid,
            crossover: CrossoverKind::Nox,
        },
    ];

    pub fn uses_heatmap(&self) -> bool {
        self.ls == LsRelatedness::Hybrid || self.crossover == CrossoverKind::Nox
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.ls {
            LsRelatedness::Distance => 'D',
            LsRelatedness::Hybrid => 'N',
        };
        let b = match self.crossover {
            CrossoverKind::Ox => 'O',
            CrossoverKind::Dox => 'D',
            CrossoverKind::Nox => 'N',
        };
        write!(f, "{a}-{b}")
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("HGS-").unwrap_or(&t);
        let mut parts = t.split('-');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("bad mode `{s}`"));
        };
        let ls = match a {
            "D" => LsRelatedness::Distance,
            "N" => LsRelatedness::Hybrid,
            _ => return Err(format!("bad mode `{s}`")),
        };
        let crossover = match b {
            "O" => CrossoverKind::Ox,
            "D" => CrossoverKind::Dox,
            "N" => CrossoverKind::Nox,
            _ => return Err(format!("bad mode `{s}`")),
        };
        Ok(Mode { ls, crossover })
    }
}

impl TryFrom<String> for Mode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub mu: usize,
    pub lambda: usize,
    pub gamma: usize,
    /// Offspring without improvement of the global best before a restart.
    pub n_it: u64,
    /// Budget in seconds of the configured clock.
    pub time_limit: f64,
    /// Target fraction of feasible offspring.
    pub xi: f64,
    pub repair_prob: f64,
    pub repair_mult: f64,
    /// Neighbors used for the diversity contribution.
    pub n_close: usize,
    /// Offspring between two penalty adjustments.
    pub penalty_window: usize,
    /// Initial penalty weight; mean edge cost over mean demand when absent.
    pub w_init: Option<f64>,
    pub seed: u64,
    pub clock: ClockConfig,
    pub ls: LsConfig,
    /// Optional cap on offspring, independent of the clock.
    pub max_iterations: Option<u64>,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            mu: 12,
            lambda: 20,
            gamma: 15,
            n_it: 20_000,
            time_limit: 10.0,
            xi: 0.2,
            repair_prob: 0.5,
            repair_mult: 10.0,
            n_close: 5,
            penalty_window: 100,
            w_init: None,
            seed: 0,
            clock: ClockConfig::default(),
            ls: LsConfig::default(),
            max_iterations: None,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), GeneticError> {
        let bad = |m: &str| Err(GeneticError::InvalidParams(m.to_string()));
        if self.mu == 0 || self.lambda == 0 || self.gamma == 0 || self.n_it == 0 || self.n_close == 0 {
            return bad("mu, lambda, gamma, n_it and n_close must be positive");
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return bad("time limit must be positive");
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad("xi must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.repair_prob) {
            return bad("repair probability must lie in [0, 1]");
        }
        if self.repair_mult.is_nan() || self.repair_mult <= 0.0 || self.penalty_window == 0 {
            return bad("repair multiplier and penalty window must be positive");
        }
        if let Some(w) = self.w_init {
            if !(w > 0.0 && w.is_finite()) {
                return bad("initial penalty must be positive");
            }
        }
        if self.clock.units_per_second.is_nan() || self.clock.units_per_second <= 0.0 {
            return bad("clock rate must be positive");
        }
        Ok(())
    }

    fn n_elite(&self) -> usize {
        self.mu.div_ceil(4)
    }
}

// ---------------------------------------------------------------- crossover

fn check_parents(p1: &[usize], p2: &[usize]) -> Result<(), CrossoverError> {
    if p1.len() != p2.len() {
        return Err(CrossoverError::Mismatch);
    }
    let n = p1.len();
    let mut seen = vec![0u8; n + 1];
    for &c in p1 {
        if c == 0 || c > n || seen[c] != 0 {
            return Err(CrossoverError::Mismatch);
        }
        seen[c] = 1;
    }
    for &c in p2 {
        if c == 0 || c > n || seen[c] != 1 {
            return Err(CrossoverError::Mismatch);
        }
        seen[c] = 2;
    }
    Ok(())
}

fn draw_cuts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let x = rng.gen_range(0..n);
    let y = rng.gen_range(0..n);
    (x.min(y), x.max(y))
}

/// Copies `p1[a..=b]` in place, then fills positions `b+1, b+2, …` circularly with
/// the customers of `p2` read circularly from index `start`, skipping the fragment.
fn fill(p1: &[usize], p2: &[usize], a: usize, b: usize, start: usize) -> Vec<usize> {
    let n = p1.len();
    let mut out = vec![0; n];
    let mut in_f = vec![false; n + 1];
    for k in a..=b {
        out[k] = p1[k];
        in_f[p1[k]] = true;
    }
    let mut pos = (b + 1) % n;
    for t in 0..n {
        let c = p2[(start + t) % n];
        if !in_f[c] {
            out[pos] = c;
            pos = (pos + 1) % n;
        }
    }
    out
}

/// Ordered crossover with explicit cut points.
pub fn ox_with_cuts(p1: &GiantTour, p2: &GiantTour, a: usize, b: usize) -> Result<GiantTour, CrossoverError> {
    relatedness_ox_with(p1, p2, a, b, b + 1)
}

/// Ordered crossover with explicit cut points and an explicit scan start in `p2`.
pub fn relatedness_ox_with(
    p1: &GiantTour,
    p2: &GiantTour,
    a: usize,
    b: usize,
    start: usize,
) -> Result<GiantTour, CrossoverError> {
    let (s1, s2) = (p1.as_slice(), p2.as_slice());
    check_parents(s1, s2)?;
    let n = s1.len();
    if a > b || b >= n {
        return Err(CrossoverError::BadCuts { a, b, n });
    }
    Ok(GiantTour::from_vec_unchecked(fill(s1, s2, a, b, start % n)))
}

pub fn ox_crossover<R: Rng + ?Sized>(p1: &GiantTour, p2: &GiantTour, rng: &mut R) -> Result<GiantTour, CrossoverError> {
    check_parents(p1.as_slice(), p2.as_slice())?;
    let (a, b) = draw_cuts(p1.len(), rng);
    ox_with_cuts(p1, p2, a, b)
}

/// Related customers of the fragment's last customer that are outside the fragment.
pub fn reconnection_candidates(p1: &GiantTour, a: usize, b: usize, nl: &NeighborLists) -> Vec<usize> {
    let frag = &p1.as_slice()[a..=b];
    let i = p1.as_slice()[b];
    nl.list(i).iter().copied().filter(|j| !frag.contains(j)).collect()
}

/// Ordered crossover whose completion starts at a customer related to the end of
/// the fragment, or at a random position of `p2` when every related customer is
/// inside the fragment.
pub fn relatedness_ox<R: Rng + ?Sized>(
    p1: &GiantTour,
    p2: &GiantTour,
    nl: &NeighborLists,
    rng: &mut R,
) -> Result<GiantTour, CrossoverError> {
    check_parents(p1.as_slice(), p2.as_slice())?;
    let n = p1.len();
    let (a, b) = draw_cuts(n, rng);
    let cands = reconnection_candidates(p1, a, b, nl);
    let start = match cands.choose(rng) {
        Some(&j) => p2
            .as_slice()
            .iter()
            .position(|&c| c == j)
            .expect("parents share customers"),
        None => rng.gen_range(0..n),
    };
    relatedness_ox_with(p1, p2, a, b, start)
}

// ---------------------------------------------------------------- individuals

#[derive(Debug, Clone)]
pub struct Individual {
    pub tour: GiantTour,
    pub solution: Solution,
    pub penalized_cost: f64,
    pub feasible: bool,
    pub diversity: f64,
    pub biased_fitness: f64,
    succ: Vec<usize>,
    pred: Vec<usize>,
}

impl Individual {
    pub fn new(tour: GiantTour, solution: Solution, w: f64) -> Self {
        let n = tour.len();
        let mut succ = vec![0; n + 1];
        let mut pred = vec![0; n + 1];
        for r in solution.routes() {
            for k in 0..r.len() {
                pred[r[k]] = if k == 0 { 0 } else { r[k - 1] };
                succ[r[k]] = r.get(k + 1).copied().unwrap_or(0);
            }
        }
        Individual {
            penalized_cost: solution.penalized_cost(w),
            feasible: solution.is_feasible(),
            tour,
            solution,
            diversity: 0.0,
            biased_fitness: 0.0,
            succ,
            pred,
        }
    }

    /// Edges of `self` (route edges, depot included) that `other` lacks.
    fn broken_edges(&self, other: &Individual) -> usize {
        let mut broken = 0;
        for c in 1..self.succ.len() {
            let s = self.succ[c];
            if s != other.succ[c] && s != other.pred[c] {
                broken += 1;
            }
            if self.pred[c] == 0 && other.pred[c] != 0 && other.succ[c] != 0 {
                broken += 1;
            }
        }
        broken
    }
}

/// Broken-pairs distance between the route edge sets of two individuals, in [0, 1].
pub fn broken_pairs_distance(a: &Individual, b: &Individual) -> f64 {
    let edges = 2 * a.tour.len() + a.solution.num_routes() + b.solution.num_routes();
    if edges == 0 {
        return 0.0;
    }
    (a.broken_edges(b) + b.broken_edges(a)) as f64 / edges as f64
}

/// One subpopulation with its pairwise distance matrix.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    members: Vec<Individual>,
    dist: Vec<Vec<f64>>,
}

impl Pool {
    pub fn from_individuals(members: Vec<Individual>) -> Self {
        let mut p = Pool::default();
        for m in members {
            p.push(m);
        }
        p
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn clear(&mut self) {
        self.members.clear();
        self.dist.clear();
    }

    fn is_clone_at(&self, i: usize, j: usize) -> bool {
        self.dist[i][j] == 0.0 || self.members[i].tour == self.members[j].tour
    }

    /// True if an individual with the same tour or the same routes is present.
    pub fn contains_clone(&self, ind: &Individual) -> bool {
        self.members
            .iter()
            .any(|m| m.tour == ind.tour || broken_pairs_distance(m, ind) == 0.0)
    }

    pub fn push(&mut self, ind: Individual) {
        let row: Vec<f64> = self.members.iter().map(|m| broken_pairs_distance(m, &ind)).collect();
        for (k, d) in row.iter().enumerate() {
            self.dist[k].push(*d);
        }
        let mut row = row;
        row.push(0.0);
        self.dist.push(row);
        self.members.push(ind);
    }

    pub fn remove(&mut self, k: usize) -> Individual {
        self.dist.remove(k);
        for row in &mut self.dist {
            row.remove(k);
        }
        self.members.remove(k)
    }

    pub fn reprice(&mut self, w: f64) {
        for m in &mut self.members {
            m.penalized_cost = m.solution.penalized_cost(w);
        }
    }

    /// Recomputes diversity and biased fitness of every member.
    pub fn update_fitness(&mut self, n_elite: usize, n_close: usize) {
        let s = self.members.len();
        if s == 0 {
            return;
        }
        if s == 1 {
            self.members[0].diversity = 0.0;
            self.members[0].biased_fitness = 0.0;
            return;
        }
        let k_close = n_close.min(s - 1);
        for i in 0..s {
            let mut ds: Vec<f64> = (0..s).filter(|&j| j != i).map(|j| self.dist[i][j]).collect();
            ds.sort_by(f64::total_cmp);
            self.members[i].diversity = ds[..k_close].iter().sum::<f64>() / k_close as f64;
        }
        let mut by_cost: Vec<usize> = (0..s).collect();
        by_cost.sort_by(|&x, &y| {
            self.members[x]
                .penalized_cost
                .total_cmp(&self.members[y].penalized_cost)
                .then(x.cmp(&y))
        });
        let mut by_div: Vec<usize> = (0..s).collect();
        by_div.sort_by(|&x, &y| {
            self.members[y]
                .diversity
                .total_cmp(&self.members[x].diversity)
                .then(x.cmp(&y))
        });
        let mut rank_c = vec![0.0; s];
        let mut rank_d = vec![0.0; s];
        let denom = (s - 1) as f64;
        for (r, &i) in by_cost.iter().enumerate() {
            rank_c[i] = r as f64 / denom;
        }
        for (r, &i) in by_div.iter().enumerate() {
            rank_d[i] = r as f64 / denom;
        }
        let weight = (1.0 - n_elite as f64 / s as f64).max(0.0);
        for i in 0..s {
            self.members[i].biased_fitness = rank_c[i] + weight * rank_d[i];
        }
    }

    fn best_feasible(&self) -> Option<usize> {
        (0..self.len()).filter(|&i| self.members[i].feasible).min_by(|&x, &y| {
            self.members[x]
                .penalized_cost
                .total_cmp(&self.members[y].penalized_cost)
                .then(x.cmp(&y))
        })
    }
}

/// Shrinks `pool` to `mu` members. Clones go first, then the member with the worst
/// biased fitness; fitness is recomputed after each removal and the cheapest feasible
/// member is never removed.
pub fn survivor_selection(pool: &mut Pool, mu: usize, n_close: usize) {
    let n_elite = mu.div_ceil(4);
    while pool.len() > mu {
        pool.update_fitness(n_elite, n_close);
        let protected = pool.best_feasible();
        let s = pool.len();
        let worst_of = |cands: &mut dyn Iterator<Item = usize>| {
            cands.filter(|&i| Some(i) != protected).max_by(|&x, &y| {
                pool.members[x]
                    .biased_fitness
                    .total_cmp(&pool.members[y].biased_fitness)
                    .then(x.cmp(&y))
            })
        };
        let clones = &mut (0..s).filter(|&i| (0..s).any(|j| j != i && pool.is_clone_at(i, j)));
        let victim = worst_of(clones)
            .or_else(|| worst_of(&mut (0..s)))
            .expect("pool larger than mu");
        pool.remove(victim);
    }
    pool.update_fitness(n_elite, n_close);
}

// ---------------------------------------------------------------- penalty

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub w: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub target_feasible: f64,
    pub window: Vec<bool>,
}

pub const PENALTY_W_MAX: f64 = 100_000.0;

impl PenaltyState {
    pub fn new(w_init: f64, target_feasible: f64) -> Self {
        let w_max = PENALTY_W_MAX.max(w_init);
        PenaltyState {
            w: w_init,
            w_min: 0.01 * w_init,
            w_max,
            target_feasible,
            window: Vec::new(),
        }
    }

    pub fn record(&mut self, feasible: bool) {
        self.window.push(feasible);
    }
}

/// Adjusts `w` toward the target feasible fraction and clears the window.
pub fn adapt_penalty(mut state: PenaltyState) -> PenaltyState {
    if !state.window.is_empty() {
        let f = state.window.iter().filter(|&&b| b).count() as f64 / state.window.len() as f64;
        // band edges are inclusive; the slack absorbs rounding in target ± 0.05
        const SLACK: f64 = 1e-12;
        if f < state.target_feasible - 0.05 - SLACK {
            state.w *= 1.2;
        } else if f > state.target_feasible + 0.05 + SLACK {
            state.w *= 0.85;
        }
        state.w = state.w.clamp(state.w_min, state.w_max);
    }
    state.window.clear();
    state
}

// ---------------------------------------------------------------- main loop

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSolutionReport {
    pub instance: String,
    pub mode: Mode,
    pub seed: u64,
    pub gamma: usize,
    pub time_limit: f64,
    pub feasible: bool,
    pub cost: Option<f64>,
    pub routes: Vec<Vec<usize>>,
    pub restarts: u64,
    pub iterations: u64,
    /// Seconds on the search clock when the search stopped.
    pub elapsed_seconds: f64,
    pub time_to_best: Option<f64>,
    /// (elapsed seconds, best feasible cost) at every improvement.
    pub trace: Vec<(f64, f64)>,
    pub final_penalty: f64,
    pub moves: MoveCounters,
    pub diagnostic: Option<String>,
}

impl BestSolutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn solution(&self, inst: &Instance) -> Option<Solution> {
        if self.routes.is_empty() {
            return None;
        }
        Solution::from_routes(inst, self.routes.clone()).ok()
    }
}

struct Search<'a> {
    inst: &'a Instance,
    params: &'a SearchParams,
    mode: Mode,
    ls_lists: NeighborLists,
    x_lists: Option<NeighborLists>,
    rng: ChaCha8Rng,
    clock: Clock,
    penalty: PenaltyState,
    feasible: Pool,
    infeasible: Pool,
    best: Option<Solution>,
    trace: Vec<(f64, f64)>,
    time_to_best: Option<f64>,
    moves: MoveCounters,
    iterations: u64,
    since_improvement: u64,
    restarts: u64,
    split_units: u64,
}

impl<'a> Search<'a> {
    fn out_of_time(&self) -> bool {
        self.clock.elapsed() >= self.params.time_limit
            || self.params.max_iterations.is_some_and(|m| self.iterations >= m)
    }

    fn educate(&mut self, sol: &Solution, w: f64) -> LsOutcome {
        let out = run_local_search(self.inst, sol, &self.ls_lists, w, self.params.ls, &mut self.rng);
        let n = self.inst.n() as u64;
        self.clock
            .charge(out.counters.total_evaluated() + n * out.counters.total_applied() / 4 + n);
        self.moves.add(&out.counters);
        out
    }

    fn decode(&mut self, tour: &GiantTour) -> Solution {
        self.clock.charge(self.split_units);
        split(self.inst, tour, self.penalty.w).expect("every customer fits in a route")
    }

    fn consider_best(&mut self, sol: &Solution) -> bool {
        if !sol.is_feasible() {
            return false;
        }
        if self.best.as_ref().is_some_and(|b| b.distance() <= sol.distance()) {
            return false;
        }
        let t = self.clock.elapsed();
        self.trace.push((t, sol.distance()));
        self.time_to_best = Some(t);
        self.best = Some(sol.clone());
        true
    }

    /// Turns a searched solution into an individual and stores it.
    fn insert(&mut self, sol: &Solution) -> bool {
        let mut improved = self.consider_best(sol);
        let tour = to_giant_tour(sol, &mut self.rng);
        let decoded = self.decode(&tour);
        improved |= self.consider_best(&decoded);
        let ind = Individual::new(tour, decoded, self.penalty.w);
        let pool = if ind.feasible {
            &mut self.feasible
        } else {
            &mut self.infeasible
        };
        self.clock.charge((pool.len() as u64 + 1) * self.inst.n() as u64);
        if !pool.contains_clone(&ind) {
            pool.push(ind);
            if pool.len() > self.params.mu + self.params.lambda {
                let s = pool.len() as u64;
                self.clock.charge(self.params.lambda as u64 * s * s);
                survivor_selection(pool, self.params.mu, self.params.n_close);
            }
        }
        improved
    }

    /// Educates, stores, and possibly repairs and stores again.
    fn process(&mut self, start: &Solution, count_for_penalty: bool) -> bool {
        let w = self.penalty.w;
        let out = self.educate(start, w);
        if count_for_penalty {
            self.penalty.record(out.solution.is_feasible());
        }
        let mut improved = self.insert(&out.solution);
        if !out.solution.is_feasible() && self.rng.gen_bool(self.params.repair_prob) {
            let repaired = self.educate(&out.solution, w * self.params.repair_mult);
            improved |= self.insert(&repaired.solution);
        }
        improved
    }

    fn initialize(&mut self) {
        for _ in 0..2 * self.params.mu {
            if self.out_of_time() && self.best.is_some() {
                break;
            }
            let tour = GiantTour::random(self.inst.n(), &mut self.rng);
            let sol = self.decode(&tour);
            self.process(&sol, false);
        }
    }

    fn tournament(&mut self) -> GiantTour {
        let nf = self.feasible.len();
        let total = nf + self.infeasible.len();
        let x = self.rng.gen_range(0..total);
        let y = self.rng.gen_range(0..total);
        let pick = |k: usize| {
            if k < nf {
                &self.feasible.members[k]
            } else {
                &self.infeasible.members[k - nf]
            }
        };
        let (a, b) = (pick(x), pick(y));
        if b.biased_fitness < a.biased_fitness {
            b.tour.clone()
        } else {
            a.tour.clone()
        }
    }

    fn step(&mut self) -> Result<(), GeneticError> {
        let n_elite = self.params.n_elite();
        self.feasible.update_fitness(n_elite, self.params.n_close);
        self.infeasible.update_fitness(n_elite, self.params.n_close);
        let p1 = self.tournament();
        let p2 = self.tournament();
        self.clock.charge(self.inst.n() as u64);
        let child = match (self.mode.crossover, &self.x_lists) {
            (CrossoverKind::Ox, _) | (_, None) => ox_crossover(&p1, &p2, &mut self.rng)?,
            (_, Some(nl)) => relatedness_ox(&p1, &p2, nl, &mut self.rng)?,
        };
        let sol = self.decode(&child);
        self.iterations += 1;
        if self.process(&sol, true) {
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        if self.penalty.window.len() >= self.params.penalty_window {
            self.penalty = adapt_penalty(std::mem::take(&mut self.penalty));
            let w = self.penalty.w;
            self.feasible.reprice(w);
            self.infeasible.reprice(w);
        }
        if self.since_improvement >= self.params.n_it {
            self.restarts += 1;
            self.since_improvement = 0;
            self.feasible.clear();
            self.infeasible.clear();
            self.initialize();
        }
        Ok(())
    }
}

impl Default for PenaltyState {
    fn default() -> Self {
        PenaltyState::new(1.0, 0.2)
    }
}

/// Runs the search until the clock budget is spent and reports the best feasible
/// solution found.
pub fn run_hgs(
    inst: &Instance,
    params: &SearchParams,
    mode: Mode,
    heatmap: Option<&Heatmap>,
) -> Result<BestSolutionReport, GeneticError> {
    params.validate()?;
    let hm = match (mode.uses_heatmap(), heatmap) {
        (true, None) => return Err(GeneticError::MissingHeatmap(mode)),
        (_, h) => h,
    };
    let ls_lists = match mode.ls {
        LsRelatedness::Distance => build_neighbor_lists_distance(inst, params.gamma),
        LsRelatedness::Hybrid => build_neighbor_lists_hybrid(inst, hm.expect("checked"), params.gamma)?,
    };
    let x_lists = match mode.crossover {
        CrossoverKind::Ox => None,
        CrossoverKind::Dox => Some(build_neighbor_lists_distance(inst, params.gamma)),
        CrossoverKind::Nox => Some(build_neighbor_lists_heatmap(inst, hm.expect("checked"), params.gamma)?),
    };
    let w_init = params.w_init.unwrap_or_else(|| {
        let w = inst.mean_edge_cost() / inst.mean_demand();
        if w > 0.0 && w.is_finite() {
            w
        } else {
            1.0
        }
    });
    let n = inst.n() as u64;
    let route_span = ((1.5 * inst.capacity() as f64 / inst.mean_demand()).ceil() as u64).clamp(1, n);
    let mut s = Search {
        inst,
        params,
        mode,
        ls_lists,
        x_lists,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        clock: params.clock.start(),
        penalty: PenaltyState::new(w_init, params.xi),
        feasible: Pool::default(),
        infeasible: Pool::default(),
        best: None,
        trace: Vec::new(),
        time_to_best: None,
        moves: MoveCounters::default(),
        iterations: 0,
        since_improvement: 0,
        restarts: 0,
        split_units: n * (route_span + 2),
    };
    s.initialize();
    while !s.out_of_time() {
        s.step()?;
    }
    let elapsed = s.clock.elapsed();
    let diagnostic = s
        .best
        .is_none()
        .then(|| "no feasible solution found within the budget".to_string());
    Ok(BestSolutionReport {
        instance: inst.name().to_string(),
        mode,
        seed: params.seed,
        gamma: params.gamma,
        time_limit: params.time_limit,
        feasible: s.best.is_some(),
        cost: s.best.as_ref().map(|b| b.distance()),
        routes: s.best.map(|b| b.into_routes()).unwrap_or_default(),
        restarts: s.restarts,
        iterations: s.iterations,
        elapsed_seconds: elapsed,
        time_to_best: s.time_to_best,
        trace: s.trace,
        final_penalty: s.penalty.w,
        moves: s.moves,
        diagnostic,
    })
}
