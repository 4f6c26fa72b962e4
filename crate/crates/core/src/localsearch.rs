//! Granular first-improvement local search over Relocate, Swap, 2-Opt and 2-Opt*.
//!
//! A move is defined by an ordered pair `(u, v)` with `v` in the granular list of
//! `u`. Every variant below is tied to such a pair:
//!
//! * Relocate: `u` after `v`; if `v` opens its route, also `u` between the depot and `v`.
//!   Independently of pairs, `u` may be moved to a fresh route (defining pair `(u, 0)`).
//! * Swap: exchange `u` and `v`.
//! * 2-Opt (same route): reverse the stretch after the earlier of the two, up to the
//!   later one, which creates the edge `(u, v)`.
//! * 2-Opt* (different routes): exchange the tails after `u` and after `v`; the
//!   variant reconnecting `u` to `v` reverses the parts in between; if `v` opens its
//!   route, the whole route of `v` can be appended after `u`.
//!
//! Optional extensions move or swap pairs of consecutive customers.
//!
//! Distances and loads are tracked incrementally; each accepted move must improve
//! the penalized cost `distance + w * excess` by more than [`IMPROVEMENT_EPS`].

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::relatedness::NeighborLists;
use crate::splittour::{route_distance, Solution, SplitError};

pub const IMPROVEMENT_EPS: f64 = 1e-9;

/// Repair runs the local search with the penalty weight multiplied by this factor.
pub const DEFAULT_REPAIR_MULTIPLIER: f64 = 10.0;

#[derive(Debug, Error)]
pub enum LsError {
    #[error("repair called on a feasible solution")]
    AlreadyFeasible,
    #[error(transparent)]
    Structure(#[from] SplitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveFamily {
    Relocate,
    Swap,
    TwoOpt,
    TwoOptStar,
    RelocatePair,
    SwapPair,
}

impl MoveFamily {
    pub const ALL: [MoveFamily; 6] = [
        MoveFamily::Relocate,
        MoveFamily::Swap,
        MoveFamily::TwoOpt,
        MoveFamily::TwoOptStar,
        MoveFamily::RelocatePair,
        MoveFamily::SwapPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MoveFamily::Relocate => "relocate",
            MoveFamily::Swap => "swap",
            MoveFamily::TwoOpt => "2-opt",
            MoveFamily::TwoOptStar => "2-opt*",
            MoveFamily::RelocatePair => "relocate-pair",
            MoveFamily::SwapPair => "swap-pair",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsConfig {
    /// Enables relocate-pair and swap-pair moves.
    pub extensions: bool,
    /// Records every applied move.
    pub audit: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub evaluated: [u64; 6],
    pub applied: [u64; 6],
}

impl MoveCounters {
    pub fn total_evaluated(&self) -> u64 {
        self.evaluated.iter().sum()
    }

    pub fn total_applied(&self) -> u64 {
        self.applied.iter().sum()
    }

    pub fn add(&mut self, other: &MoveCounters) {
        for k in 0..6 {
            self.evaluated[k] += other.evaluated[k];
            self.applied[k] += other.applied[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub sweep: usize,
    pub family: MoveFamily,
    pub i: usize,
    /// 0 when the move is anchored on the depot (relocation into a new route).
    pub j: usize,
    pub delta: f64,
}

/// Move log as CSV with header `sweep,family,i,j,delta`.
pub fn audit_csv(entries: &[AuditEntry]) -> String {
    let mut out = String::from("sweep,family,i,j,delta\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{},{},{}", e.sweep, e.family.name(), e.i, e.j, e.delta);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsOutcome {
    pub solution: Solution,
    pub sweeps: usize,
    pub counters: MoveCounters,
    /// Distance accumulated from move deltas, for auditing against a fresh evaluation.
    pub tracked_distance: f64,
    pub tracked_excess: u64,
    pub audit: Vec<AuditEntry>,
}

/// Runs the granular local search to a local minimum and returns the improved solution.
pub fn local_search<R: Rng + ?Sized>(
    inst: &Instance,
    start: &Solution,
    nl: &NeighborLists,
    w: f64,
    rng: &mut R,
) -> Solution {
    run_local_search(inst, start, nl, w, LsConfig::default(), rng).solution
}

/// Local search with the penalty weight temporarily multiplied by 10.
pub fn repair<R: Rng + ?Sized>(
    inst: &Instance,
    sol: &Solution,
    nl: &NeighborLists,
    w: f64,
    rng: &mut R,
) -> Result<Solution, LsError> {
    repair_with(inst, sol, nl, w, DEFAULT_REPAIR_MULTIPLIER, LsConfig::default(), rng).map(|o| o.solution)
}

pub fn repair_with<R: Rng + ?Sized>(
    inst: &Instance,
    sol: &Solution,
    nl: &NeighborLists,
    w: f64,
    multiplier: f64,
    config: LsConfig,
    rng: &mut R,
) -> Result<LsOutcome, LsError> {
    if sol.is_feasible() {
        return Err(LsError::AlreadyFeasible);
    }
    Ok(run_local_search(inst, sol, nl, w * multiplier, config, rng))
}

pub fn run_local_search<R: Rng + ?Sized>(
    inst: &Instance,
    start: &Solution,
    nl: &NeighborLists,
    w: f64,
    config: LsConfig,
    rng: &mut R,
) -> LsOutcome {
    let mut st = State::new(inst, start, w, config);
    let mut order: Vec<usize> = (1..=inst.n()).collect();
    loop {
        st.sweep += 1;
        order.shuffle(rng);
        let mut improved = false;
        for &u in &order {
            for &v in nl.list(u) {
                improved |= st.try_pair(u, v);
            }
            improved |= st.try_new_route(u);
        }
        if !improved {
            break;
        }
    }
    st.finish()
}

#[inline]
fn pen(w: f64, delta_excess: i64) -> f64 {
    if delta_excess == 0 {
        0.0
    } else {
        w * delta_excess as f64
    }
}

struct State<'a> {
    inst: &'a Instance,
    w: f64,
    config: LsConfig,
    routes: Vec<Vec<usize>>,
    loads: Vec<u64>,
    prefix: Vec<Vec<u64>>,
    route_of: Vec<usize>,
    pos_of: Vec<usize>,
    distance: f64,
    excess: u64,
    sweep: usize,
    counters: MoveCounters,
    audit: Vec<AuditEntry>,
}

impl<'a> State<'a> {
    fn new(inst: &'a Instance, start: &Solution, w: f64, config: LsConfig) -> Self {
        let n = inst.n();
        let mut st = State {
            inst,
            w,
            config,
            routes: start.routes().to_vec(),
            loads: Vec::new(),
            prefix: Vec::new(),
            route_of: vec![usize::MAX; n + 1],
            pos_of: vec![0; n + 1],
            distance: start.distance(),
            excess: 0,
            sweep: 0,
            counters: MoveCounters::default(),
            audit: Vec::new(),
        };
        st.loads = vec![0; st.routes.len()];
        st.prefix = vec![Vec::new(); st.routes.len()];
        for r in 0..st.routes.len() {
            st.refresh(r);
        }
        st.excess = st.total_excess();
        st
    }

    fn finish(self) -> LsOutcome {
        let routes: Vec<Vec<usize>> = self.routes.into_iter().filter(|r| !r.is_empty()).collect();
        let solution = Solution::from_routes(self.inst, routes).expect("local search keeps routes valid");
        LsOutcome {
            solution,
            sweeps: self.sweep,
            counters: self.counters,
            tracked_distance: self.distance,
            tracked_excess: self.excess,
            audit: self.audit,
        }
    }

    fn refresh(&mut self, r: usize) {
        let mut acc = 0;
        let prefix = &mut self.prefix[r];
        prefix.clear();
        for (k, &c) in self.routes[r].iter().enumerate() {
            acc += self.inst.demand(c);
            prefix.push(acc);
            self.route_of[c] = r;
            self.pos_of[c] = k;
        }
        self.loads[r] = acc;
    }

    fn total_excess(&self) -> u64 {
        self.loads.iter().map(|&l| self.exc(l)).sum()
    }

    #[inline]
    fn exc(&self, load: u64) -> u64 {
        load.saturating_sub(self.inst.capacity())
    }

    #[inline]
    fn d(&self, a: usize, b: usize) -> f64 {
        self.inst.distance(a, b)
    }

    #[inline]
    fn pred(&self, u: usize) -> usize {
        let p = self.pos_of[u];
        if p == 0 {
            0
        } else {
            self.routes[self.route_of[u]][p - 1]
        }
    }

    #[inline]
    fn succ(&self, u: usize) -> usize {
        let r = &self.routes[self.route_of[u]];
        r.get(self.pos_of[u] + 1).copied().unwrap_or(0)
    }

    /// Load of the route of `u` up to and including `u`.
    #[inline]
    fn prefix_load(&self, u: usize) -> u64 {
        self.prefix[self.route_of[u]][self.pos_of[u]]
    }

    /// Excess change when two routes move from loads `(a, b)` to `(na, nb)`.
    #[inline]
    fn dexc2(&self, a: u64, b: u64, na: u64, nb: u64) -> i64 {
        (self.exc(na) + self.exc(nb)) as i64 - (self.exc(a) + self.exc(b)) as i64
    }

    #[inline]
    fn accept(&mut self, family: MoveFamily, ddist: f64, dexc: i64) -> Option<f64> {
        self.counters.evaluated[family.index()] += 1;
        let delta = ddist + pen(self.w, dexc);
        (delta < -IMPROVEMENT_EPS).then_some(delta)
    }

    fn commit(&mut self, family: MoveFamily, u: usize, v: usize, ddist: f64, delta: f64, changed: &[usize]) {
        self.counters.applied[family.index()] += 1;
        self.distance += ddist;
        for &r in changed {
            self.refresh(r);
        }
        // drop emptied routes, highest index first so swap_remove keeps indices valid
        let mut sorted: Vec<usize> = changed.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.dedup();
        for r in sorted {
            if self.routes[r].is_empty() {
                self.routes.swap_remove(r);
                self.loads.swap_remove(r);
                self.prefix.swap_remove(r);
                if r < self.routes.len() {
                    self.refresh(r);
                }
            }
        }
        self.excess = self.total_excess();
        if self.config.audit {
            self.audit.push(AuditEntry {
                sweep: self.sweep,
                family,
                i: u,
                j: v,
                delta,
            });
        }
        debug_assert!(self.consistent(), "tracked cost diverged after {family:?} ({u}, {v})");
    }

    fn consistent(&self) -> bool {
        let recomputed: f64 = self.routes.iter().map(|r| route_distance(self.inst, r)).sum();
        let tol = if self.inst.rounding() == crate::instance::Rounding::Nearest {
            0.0
        } else {
            1e-6
        };
        (recomputed - self.distance).abs() <= tol
    }

    fn try_pair(&mut self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        if self.relocate(u, v) || self.swap(u, v) {
            return true;
        }
        let same = self.route_of[u] == self.route_of[v];
        if same && self.two_opt(u, v) {
            return true;
        }
        if !same && self.two_opt_star(u, v) {
            return true;
        }
        self.config.extensions && (self.relocate_pair(u, v) || self.swap_pair(u, v))
    }

    /// Removal gain of `u` from its current position.
    #[inline]
    fn removal_delta(&self, u: usize) -> f64 {
        let (p, x) = (self.pred(u), self.succ(u));
        self.d(p, x) - self.d(p, u) - self.d(u, x)
    }

    fn relocate(&mut self, u: usize, v: usize) -> bool {
        let ru = self.route_of[u];
        let rv = self.route_of[v];
        let du = self.inst.demand(u);
        let dexc = if ru == rv {
            0
        } else {
            self.dexc2(self.loads[ru], self.loads[rv], self.loads[ru] - du, self.loads[rv] + du)
        };
        let removal = self.removal_delta(u);

        // u after v
        let y = self.succ(v);
        if self.pred(u) != v {
            let ddist = removal + self.d(v, u) + self.d(u, y) - self.d(v, y);
            if let Some(delta) = self.accept(MoveFamily::Relocate, ddist, dexc) {
                self.apply_relocate(u, rv, Some(v));
                self.commit(MoveFamily::Relocate, u, v, ddist, delta, &[ru, rv]);
                return true;
            }
        }
        // u between the depot and v
        if self.pos_of[v] == 0 && self.succ(u) != v {
            let ddist = removal + self.d(0, u) + self.d(u, v) - self.d(0, v);
            if let Some(delta) = self.accept(MoveFamily::Relocate, ddist, dexc) {
                self.apply_relocate(u, rv, None);
                self.commit(MoveFamily::Relocate, u, v, ddist, delta, &[ru, rv]);
                return true;
            }
        }
        false
    }

    fn apply_relocate(&mut self, u: usize, target: usize, after: Option<usize>) {
        let ru = self.route_of[u];
        self.routes[ru].remove(self.pos_of[u]);
        let at = match after {
            None => 0,
            Some(a) => {
                self.routes[target]
                    .iter()
                    .position(|&c| c == a)
                    .expect("anchor in route")
                    + 1
            }
        };
        self.routes[target].insert(at, u);
    }

    fn try_new_route(&mut self, u: usize) -> bool {
        let ru = self.route_of[u];
        if self.routes[ru].len() == 1 {
            return false;
        }
        let du = self.inst.demand(u);
        let ddist = self.removal_delta(u) + 2.0 * self.d(0, u);
        let dexc = self.exc(self.loads[ru] - du) as i64 - self.exc(self.loads[ru]) as i64;
        if let Some(delta) = self.accept(MoveFamily::Relocate, ddist, dexc) {
            self.routes[ru].remove(self.pos_of[u]);
            self.routes.push(vec![u]);
            self.loads.push(0);
            self.prefix.push(Vec::new());
            let fresh = self.routes.len() - 1;
            self.commit(MoveFamily::Relocate, u, 0, ddist, delta, &[ru, fresh]);
            return true;
        }
        false
    }

    fn swap(&mut self, u: usize, v: usize) -> bool {
        let ru = self.route_of[u];
        let rv = self.route_of[v];
        let (pu, xu) = (self.pred(u), self.succ(u));
        let (pv, xv) = (self.pred(v), self.succ(v));
        let ddist = if xu == v {
            self.d(pu, v) + self.d(u, xv) - self.d(pu, u) - self.d(v, xv)
        } else if xv == u {
            self.d(pv, u) + self.d(v, xu) - self.d(pv, v) - self.d(u, xu)
        } else {
            self.d(pu, v) + self.d(v, xu) - self.d(pu, u) - self.d(u, xu) + self.d(pv, u) + self.d(u, xv)
                - self.d(pv, v)
                - self.d(v, xv)
        };
        let dexc = if ru == rv {
            0
        } else {
            let (du, dv) = (self.inst.demand(u), self.inst.demand(v));
            self.dexc2(
                self.loads[ru],
                self.loads[rv],
                self.loads[ru] - du + dv,
                self.loads[rv] - dv + du,
            )
        };
        if let Some(delta) = self.accept(MoveFamily::Swap, ddist, dexc) {
            let (iu, iv) = (self.pos_of[u], self.pos_of[v]);
            self.routes[ru][iu] = v;
            self.routes[rv][iv] = u;
            self.commit(MoveFamily::Swap, u, v, ddist, delta, &[ru, rv]);
            return true;
        }
        false
    }

    fn two_opt(&mut self, u: usize, v: usize) -> bool {
        let r = self.route_of[u];
        let (a, b) = if self.pos_of[u] < self.pos_of[v] {
            (u, v)
        } else {
            (v, u)
        };
        let x = self.succ(a);
        if x == b {
            return false;
        }
        let y = self.succ(b);
        let ddist = self.d(a, b) + self.d(x, y) - self.d(a, x) - self.d(b, y);
        if let Some(delta) = self.accept(MoveFamily::TwoOpt, ddist, 0) {
            let (i, j) = (self.pos_of[a] + 1, self.pos_of[b]);
            self.routes[r][i..=j].reverse();
            self.commit(MoveFamily::TwoOpt, u, v, ddist, delta, &[r]);
            return true;
        }
        false
    }

    fn two_opt_star(&mut self, u: usize, v: usize) -> bool {
        let ru = self.route_of[u];
        let rv = self.route_of[v];
        let (x, y) = (self.succ(u), self.succ(v));
        let (lu, lv) = (self.loads[ru], self.loads[rv]);
        let (hu, hv) = (self.prefix_load(u), self.prefix_load(v));
        let (iu, iv) = (self.pos_of[u], self.pos_of[v]);

        // tails exchanged: [..u] + [y..] and [..v] + [x..]
        if !(x == 0 && y == 0) {
            let ddist = self.d(u, y) + self.d(v, x) - self.d(u, x) - self.d(v, y);
            let dexc = self.dexc2(lu, lv, hu + (lv - hv), hv + (lu - hu));
            if let Some(delta) = self.accept(MoveFamily::TwoOptStar, ddist, dexc) {
                let tail_u = self.routes[ru].split_off(iu + 1);
                let tail_v = self.routes[rv].split_off(iv + 1);
                self.routes[ru].extend(tail_v);
                self.routes[rv].extend(tail_u);
                self.commit(MoveFamily::TwoOptStar, u, v, ddist, delta, &[ru, rv]);
                return true;
            }
        }
        // u joined to v: [..u] + rev([..v]) and rev([x..]) + [y..]
        {
            let ddist = self.d(u, v) + self.d(x, y) - self.d(u, x) - self.d(v, y);
            let dexc = self.dexc2(lu, lv, hu + hv, (lu - hu) + (lv - hv));
            if let Some(delta) = self.accept(MoveFamily::TwoOptStar, ddist, dexc) {
                let mut tail_u = self.routes[ru].split_off(iu + 1);
                let tail_v = self.routes[rv].split_off(iv + 1);
                let mut head_v = std::mem::take(&mut self.routes[rv]);
                head_v.reverse();
                tail_u.reverse();
                self.routes[ru].extend(head_v);
                tail_u.extend(tail_v);
                self.routes[rv] = tail_u;
                self.commit(MoveFamily::TwoOptStar, u, v, ddist, delta, &[ru, rv]);
                return true;
            }
        }
        // v opens its route: [..u] + whole route of v, and [x..] alone
        if iv == 0 {
            let ddist = self.d(u, v) + self.d(0, x) - self.d(u, x) - self.d(0, v);
            let dexc = self.dexc2(lu, lv, hu + lv, lu - hu);
            if let Some(delta) = self.accept(MoveFamily::TwoOptStar, ddist, dexc) {
                let tail_u = self.routes[ru].split_off(iu + 1);
                let whole_v = std::mem::replace(&mut self.routes[rv], tail_u);
                self.routes[ru].extend(whole_v);
                self.commit(MoveFamily::TwoOptStar, u, v, ddist, delta, &[ru, rv]);
                return true;
            }
        }
        false
    }

    /// Generic evaluation for the extension moves: rebuilds the affected routes.
    fn try_rebuilt(&mut self, family: MoveFamily, u: usize, v: usize, new_routes: Vec<(usize, Vec<usize>)>) -> bool {
        let mut ddist = 0.0;
        let mut old_exc = 0i64;
        let mut new_exc = 0i64;
        for (r, route) in &new_routes {
            ddist += route_distance(self.inst, route) - route_distance(self.inst, &self.routes[*r]);
            old_exc += self.exc(self.loads[*r]) as i64;
            new_exc += self.exc(route.iter().map(|&c| self.inst.demand(c)).sum()) as i64;
        }
        if let Some(delta) = self.accept(family, ddist, new_exc - old_exc) {
            let changed: Vec<usize> = new_routes.iter().map(|(r, _)| *r).collect();
            for (r, route) in new_routes {
                self.routes[r] = route;
            }
            self.commit(family, u, v, ddist, delta, &changed);
            return true;
        }
        false
    }

    fn relocate_pair(&mut self, u: usize, v: usize) -> bool {
        let x = self.succ(u);
        if x == 0 || x == v || self.pred(u) == v {
            return false;
        }
        let (ru, rv) = (self.route_of[u], self.route_of[v]);
        for pair in [[u, x], [x, u]] {
            let mut src: Vec<usize> = self.routes[ru].iter().copied().filter(|&c| c != u && c != x).collect();
            let changes = if ru == rv {
                let at = src.iter().position(|&c| c == v).unwrap() + 1;
                src.splice(at..at, pair);
                vec![(ru, src)]
            } else {
                let mut dst = self.routes[rv].clone();
                let at = self.pos_of[v] + 1;
                dst.splice(at..at, pair);
                vec![(ru, src), (rv, dst)]
            };
            if self.try_rebuilt(MoveFamily::RelocatePair, u, v, changes) {
                return true;
            }
        }
        false
    }

    fn swap_pair(&mut self, u: usize, v: usize) -> bool {
        let (ru, rv) = (self.route_of[u], self.route_of[v]);
        let x = self.succ(u);
        if ru == rv || x == 0 {
            return false;
        }
        let (iu, iv) = (self.pos_of[u], self.pos_of[v]);
        // (u, x) <-> v
        let mut a = self.routes[ru].clone();
        let mut b = self.routes[rv].clone();
        a.splice(iu..=iu + 1, [v]);
        b.splice(iv..=iv, [u, x]);
        if self.try_rebuilt(MoveFamily::SwapPair, u, v, vec![(ru, a), (rv, b)]) {
            return true;
        }
        // (u, x) <-> (v, y)
        let y = self.succ(v);
        if y == 0 {
            return false;
        }
        let mut a = self.routes[ru].clone();
        let mut b = self.routes[rv].clone();
        a.splice(iu..=iu + 1, [v, y]);
        b.splice(iv..=iv + 1, [u, x]);
        self.try_rebuilt(MoveFamily::SwapPair, u, v, vec![(ru, a), (rv, b)])
    }
}
