//! Relatedness between customers and the granular neighbor lists built from it.
//!
//! Two sources are supported: inverse distance, and an edge heatmap read from
//! a file or synthesized from known solutions. Heatmaps for large instances can
//! be assembled from fixed-size subproblems around every customer.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::Instance;
use crate::splittour::Solution;

#[derive(Debug, Error)]
pub enum RelatednessError {
    #[error("relatedness of a vertex with itself ({0}) is undefined")]
    SameVertex(usize),
    #[error("heatmap covers {heatmap} customers, instance has {instance}")]
    DimensionMismatch { heatmap: usize, instance: usize },
    #[error("heatmap entry ({i}, {j}) is out of range for n = {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("heatmap probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("heatmap line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("heatmap pair ({0}, {1}) listed twice")]
    Duplicate(usize, usize),
    #[error("subproblem around customer {customer} failed: {msg}")]
    Aggregation { customer: usize, msg: String },
    #[error("subproblem size {n_g} must lie in [1, {n}]")]
    SubproblemSize { n_g: usize, n: usize },
    #[error("oracle heatmap needs at least one solution")]
    NoSolutions,
    #[error("solution references vertex {0}, which is not a customer")]
    UnknownCustomer(usize),
}

/// Distance relatedness `1 / d(i, j)`; co-located vertices are maximally related.
pub fn phi_distance(inst: &Instance, i: usize, j: usize) -> Result<f64, RelatednessError> {
    if i == j {
        return Err(RelatednessError::SameVertex(i));
    }
    let d = inst.distance(i, j);
    Ok(if d > 0.0 { 1.0 / d } else { f64::INFINITY })
}

/// Sparse symmetric edge probabilities over customers `1..=n`. Absent pairs read as 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Heatmap {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl Heatmap {
    pub fn new(n: usize) -> Self {
        Heatmap {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn key(&self, i: usize, j: usize) -> Result<(usize, usize), RelatednessError> {
        if i == j {
            return Err(RelatednessError::SameVertex(i));
        }
        if i == 0 || j == 0 || i > self.n || j > self.n {
            return Err(RelatednessError::IndexOutOfRange { i, j, n: self.n });
        }
        Ok((i.min(j), i.max(j)))
    }

    /// Stores `p` for the unordered pair `{i, j}`; zero removes the entry.
    pub fn set(&mut self, i: usize, j: usize, p: f64) -> Result<(), RelatednessError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RelatednessError::ProbabilityOutOfRange(p));
        }
        let key = self.key(i, j)?;
        if p == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, p);
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.entries.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Nonzero entries as `(i, j, p)` with `i < j`, in increasing pair order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &p)| (i, j, p))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn parse(text: &str) -> Result<Heatmap, RelatednessError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(RelatednessError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut head = header.split_whitespace();
        if head.next() != Some("HEATMAP") {
            return Err(RelatednessError::Parse {
                line: 1,
                msg: "expected `HEATMAP <n>`".into(),
            });
        }
        let n: usize = head
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or(RelatednessError::Parse {
                line: 1,
                msg: "missing customer count".into(),
            })?;
        let mut hm = Heatmap::new(n);
        for (idx, line) in lines {
            let bad = |msg: &str| RelatednessError::Parse {
                line: idx + 1,
                msg: msg.into(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected `<i> <j> <p>`"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("bad index"))?;
            let p: f64 = fields[2].parse().map_err(|_| bad("bad probability"))?;
            let key = hm.key(i, j)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(RelatednessError::ProbabilityOutOfRange(p));
            }
            if hm.entries.contains_key(&key) {
                return Err(RelatednessError::Duplicate(key.0, key.1));
            }
            hm.entries.insert(key, p);
        }
        // explicit zeros are legal in the file but not stored
        hm.entries.retain(|_, p| *p > 0.0);
        Ok(hm)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("HEATMAP {}\n", self.n);
        for (i, j, p) in self.iter() {
            let _ = writeln!(out, "{i} {j} {p}");
        }
        out
    }

    fn merge_max(&mut self, i: usize, j: usize, p: f64) {
        if p > 0.0 {
            let slot = self.entries.entry((i.min(j), i.max(j))).or_insert(0.0);
            *slot = slot.max(p);
        }
    }
}

/// Per-customer granular sets. `list(0)` (the depot) is always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    gamma: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborLists {
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    #[inline]
    pub fn list(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.lists[i].contains(&j)
    }

    /// Wraps externally built lists (index 0 must be empty).
    pub fn from_lists(gamma: usize, lists: Vec<Vec<usize>>) -> Self {
        debug_assert!(lists.first().is_none_or(|l| l.is_empty()));
        NeighborLists { gamma, lists }
    }
}

/// `Φ(i)` = the `gamma` customers closest to `i`, ties broken by smaller index.
pub fn build_neighbor_lists_distance(inst: &Instance, gamma: usize) -> NeighborLists {
    let mut lists = vec![Vec::new()];
    for i in 1..=inst.n() {
        let mut order = inst.customers_by_distance(i);
        order.truncate(gamma);
        lists.push(order);
    }
    NeighborLists { gamma, lists }
}

/// First `⌊Γ/2⌋` entries by heatmap probability (positive entries only), then
/// completed with the nearest customers not chosen yet.
pub fn build_neighbor_lists_hybrid(
    inst: &Instance,
    hm: &Heatmap,
    gamma: usize,
) -> Result<NeighborLists, RelatednessError> {
    build_mixed(inst, hm, gamma, gamma / 2)
}

/// Up to `Γ` entries by heatmap probability, deficit filled by distance. This is the
/// candidate set used by the heatmap-driven crossover.
pub fn build_neighbor_lists_heatmap(
    inst: &Instance,
    hm: &Heatmap,
    gamma: usize,
) -> Result<NeighborLists, RelatednessError> {
    build_mixed(inst, hm, gamma, gamma)
}

fn build_mixed(
    inst: &Instance,
    hm: &Heatmap,
    gamma: usize,
    heat_quota: usize,
) -> Result<NeighborLists, RelatednessError> {
    if hm.n() != inst.n() {
        return Err(RelatednessError::DimensionMismatch {
            heatmap: hm.n(),
            instance: inst.n(),
        });
    }
    let n = inst.n();
    let size = gamma.min(n.saturating_sub(1));
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 1];
    for (i, j, p) in hm.iter() {
        rows[i].push((j, p));
        rows[j].push((i, p));
    }
    let mut lists = vec![Vec::new()];
    let mut chosen = vec![false; n + 1];
    for (i, row) in rows.iter_mut().enumerate().skip(1) {
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut list: Vec<usize> = row.iter().take(heat_quota.min(size)).map(|&(j, _)| j).collect();
        for &j in &list {
            chosen[j] = true;
        }
        for j in inst.customers_by_distance(i) {
            if list.len() >= size {
                break;
            }
            if !chosen[j] {
                list.push(j);
            }
        }
        for &j in &list {
            chosen[j] = false;
        }
        lists.push(list);
    }
    Ok(NeighborLists { gamma, lists })
}

/// Source of heatmaps for fixed-size subproblems (depot + `n_g` customers).
/// `members[k]` is the original index of local customer `k + 1`.
pub trait HeatmapProvider {
    fn heatmap(&mut self, sub: &Instance, members: &[usize]) -> Result<Heatmap, String>;
}

impl<F> HeatmapProvider for F
where
    F: FnMut(&Instance, &[usize]) -> Result<Heatmap, String>,
{
    fn heatmap(&mut self, sub: &Instance, members: &[usize]) -> Result<Heatmap, String> {
        self(sub, members)
    }
}

/// Builds a heatmap for an instance of any size from a provider that only handles
/// subproblems of exactly `n_g` customers.
///
/// Customer `i` and its `n_g - 1` nearest customers form the subproblem for `i`;
/// its values are kept for the edges incident to `i`, everything else reads 0.
/// A pair seen from both endpoints keeps the larger value.
pub fn aggregate_subproblem_heatmaps<P: HeatmapProvider + ?Sized>(
    inst: &Instance,
    provider: &mut P,
    n_g: usize,
) -> Result<Heatmap, RelatednessError> {
    let n = inst.n();
    if n_g == 0 || n_g > n {
        return Err(RelatednessError::SubproblemSize { n_g, n });
    }
    let check = |customer: usize, hm: Heatmap| {
        if hm.n() == n_g {
            Ok(hm)
        } else {
            Err(RelatednessError::Aggregation {
                customer,
                msg: format!("provider returned a heatmap over {} customers, expected {n_g}", hm.n()),
            })
        }
    };
    if n_g == n {
        let all: Vec<usize> = (1..=n).collect();
        let whole = provider
            .heatmap(inst, &all)
            .map_err(|msg| RelatednessError::Aggregation { customer: 1, msg })?;
        return check(1, whole);
    }

    let mut out = Heatmap::new(n);
    for i in 1..=n {
        let mut members = Vec::with_capacity(n_g);
        members.push(i);
        members.extend(inst.customers_by_distance(i).into_iter().take(n_g - 1));
        let sub = inst
            .subinstance(format!("{}-sub{i}", inst.name()), &members)
            .map_err(|e| RelatednessError::Aggregation {
                customer: i,
                msg: e.to_string(),
            })?;
        let hm = provider
            .heatmap(&sub, &members)
            .map_err(|msg| RelatednessError::Aggregation { customer: i, msg })?;
        let hm = check(i, hm)?;
        for (local, &j) in members.iter().enumerate().skip(1) {
            out.merge_max(i, j, hm.get(1, local + 1));
        }
    }
    Ok(out)
}

/// Test stand-in for a learned heatmap: edge frequencies over `solutions`, each
/// pair perturbed by uniform noise in `[-noise, noise]` and clamped to `[0, 1]`.
pub fn synthesize_oracle_heatmap(
    inst: &Instance,
    solutions: &[Solution],
    noise: f64,
    seed: u64,
) -> Result<Heatmap, RelatednessError> {
    if solutions.is_empty() {
        return Err(RelatednessError::NoSolutions);
    }
    let n = inst.n();
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for sol in solutions {
        for route in sol.routes() {
            if let Some(&bad) = route.iter().find(|&&c| c == 0 || c > n) {
                return Err(RelatednessError::UnknownCustomer(bad));
            }
            for w in route.windows(2) {
                *counts.entry((w[0].min(w[1]), w[0].max(w[1]))).or_insert(0) += 1;
            }
        }
    }
    let total = solutions.len() as f64;
    let mut hm = Heatmap::new(n);
    if noise <= 0.0 {
        for ((i, j), c) in counts {
            hm.entries.insert((i, j), (c as f64 / total).min(1.0));
        }
        return Ok(hm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 1..=n {
        for j in (i + 1)..=n {
            let base = counts.get(&(i, j)).map_or(0.0, |&c| c as f64 / total);
            let p = (base + rng.gen_range(-noise..=noise)).clamp(0.0, 1.0);
            if p > 0.0 {
                hm.entries.insert((i, j), p);
            }
        }
    }
    Ok(hm)
}
