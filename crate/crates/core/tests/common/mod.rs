//! Independent reference implementations used by the integration and acceptance tests.
//! Nothing here calls into the solver code it checks, apart from instance accessors.
#![allow(dead_code)]

use relhgs_core::instance::{Instance, Rounding};

/// Penalized cost recomputed from scratch.
pub fn penalized(inst: &Instance, routes: &[Vec<usize>], w: f64) -> f64 {
    let mut dist = 0.0;
    let mut excess = 0u64;
    for r in routes.iter().filter(|r| !r.is_empty()) {
        let mut prev = 0;
        let mut load = 0;
        for &c in r {
            dist += inst.distance(prev, c);
            load += inst.demand(c);
            prev = c;
        }
        dist += inst.distance(prev, 0);
        excess += load.saturating_sub(inst.capacity());
    }
    if excess == 0 {
        dist
    } else {
        dist + w * excess as f64
    }
}

/// Optimal segmentation cost over all 2^(n-1) cut patterns, skipping patterns with a
/// route loaded above 1.5 Q. Costs are doubled so that w in {0.5, 2, 10} stays integral.
pub fn brute_force_split_doubled(inst: &Instance, order: &[usize], w: f64) -> Option<i64> {
    assert_eq!(inst.rounding(), Rounding::Nearest);
    let w2 = (2.0 * w) as i64;
    assert_eq!(w2 as f64, 2.0 * w, "weight must be a multiple of 0.5");
    let n = order.len();
    let q = inst.capacity() as i64;
    let d = |a: usize, b: usize| inst.distance(a, b) as i64;
    let mut best: Option<i64> = None;
    for mask in 0u32..(1u32 << (n - 1)) {
        let mut total = 0i64;
        let mut ok = true;
        let mut start = 0;
        for k in 0..n {
            let cut_after = k == n - 1 || mask & (1 << k) != 0;
            if cut_after {
                let route = &order[start..=k];
                let load: i64 = route.iter().map(|&c| inst.demand(c) as i64).sum();
                if 2 * load > 3 * q {
                    ok = false;
                    break;
                }
                let mut dist = d(0, route[0]) + d(route[route.len() - 1], 0);
                for p in route.windows(2) {
                    dist += d(p[0], p[1]);
                }
                total += 2 * dist + w2 * (load - q).max(0);
                start = k + 1;
            }
        }
        if ok {
            best = Some(best.map_or(total, |b| b.min(total)));
        }
    }
    best
}

fn locate(routes: &[Vec<usize>], c: usize) -> (usize, usize) {
    for (r, route) in routes.iter().enumerate() {
        if let Some(p) = route.iter().position(|&x| x == c) {
            return (r, p);
        }
    }
    panic!("customer {c} not routed");
}

/// Every solution reachable by one admissible move from `routes`:
/// relocate u after v, or before v when v opens its route, or into a new route;
/// swap u and v; 2-opt between u and v in the same route; and across routes the
/// tail exchange, the reversing reconnection of u to v, and appending v's whole
/// route after u when v opens it. Each entry is (description, resulting routes).
pub fn neighbors(routes: &[Vec<usize>], lists: &[Vec<usize>]) -> Vec<(String, Vec<Vec<usize>>)> {
    let mut out = Vec::new();
    for (u, list) in lists.iter().enumerate().skip(1) {
        let (ru, pu) = locate(routes, u);
        if routes[ru].len() > 1 {
            let mut next = routes.to_vec();
            next[ru].remove(pu);
            next.push(vec![u]);
            out.push((format!("relocate {u} to a new route"), next));
        }
        for &v in list {
            if v == u {
                continue;
            }
            let (rv, pv) = locate(routes, v);
            // relocate u after v / before v
            for before in [false, true] {
                if before && pv != 0 {
                    continue;
                }
                let mut next = routes.to_vec();
                next[ru].remove(pu);
                let at = next[rv].iter().position(|&x| x == v).unwrap() + usize::from(!before);
                next[rv].insert(at, u);
                out.push((
                    format!("relocate {u} {} {v}", if before { "before" } else { "after" }),
                    next,
                ));
            }
            // swap
            let mut next = routes.to_vec();
            next[ru][pu] = v;
            next[rv][pv] = u;
            out.push((format!("swap {u} {v}"), next));
            if ru == rv {
                let (i, j) = (pu.min(pv), pu.max(pv));
                let mut next = routes.to_vec();
                next[ru][i + 1..=j].reverse();
                out.push((format!("2-opt {u} {v}"), next));
            } else {
                let (a, b) = (&routes[ru], &routes[rv]);
                let mut next = routes.to_vec();
                next[ru] = a[..=pu].iter().chain(&b[pv + 1..]).copied().collect();
                next[rv] = b[..=pv].iter().chain(&a[pu + 1..]).copied().collect();
                out.push((format!("2-opt* tails {u} {v}"), next));

                let mut next = routes.to_vec();
                next[ru] = a[..=pu].iter().chain(b[..=pv].iter().rev()).copied().collect();
                next[rv] = a[pu + 1..].iter().rev().chain(&b[pv + 1..]).copied().collect();
                out.push((format!("2-opt* reversed {u} {v}"), next));

                if pv == 0 {
                    let mut next = routes.to_vec();
                    next[ru] = a[..=pu].iter().chain(b.iter()).copied().collect();
                    next[rv] = a[pu + 1..].to_vec();
                    out.push((format!("2-opt* append {u} {v}"), next));
                }
            }
        }
    }
    out
}

/// Moves that improve the penalized cost by more than `tol`.
pub fn improving_moves(
    inst: &Instance,
    routes: &[Vec<usize>],
    lists: &[Vec<usize>],
    w: f64,
    tol: f64,
) -> Vec<(String, f64)> {
    let base = penalized(inst, routes, w);
    neighbors(routes, lists)
        .into_iter()
        .filter_map(|(name, next)| {
            let delta = penalized(inst, &next, w) - base;
            (delta < -tol).then_some((name, delta))
        })
        .collect()
}

/// Γ nearest customers of every customer, ties to the smaller index.
pub fn distance_lists(inst: &Instance, gamma: usize) -> Vec<Vec<usize>> {
    let n = inst.n();
    let mut lists = vec![Vec::new()];
    for i in 1..=n {
        let mut others: Vec<usize> = (1..=n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| inst.distance(i, a).total_cmp(&inst.distance(i, b)).then(a.cmp(&b)));
        others.truncate(gamma);
        lists.push(others);
    }
    lists
}

/// The unique permutation holding `p1[a..=b]` in place whose remaining customers,
/// read circularly from position b+1, follow `p2` read circularly from `start`.
/// Found by enumerating all permutations (small n only).
pub fn ordered_crossover_by_enumeration(p1: &[usize], p2: &[usize], a: usize, b: usize, start: usize) -> Vec<usize> {
    let n = p1.len();
    assert!(n <= 8);
    let frag = &p1[a..=b];
    let expected: Vec<usize> = (0..n)
        .map(|k| p2[(start + k) % n])
        .filter(|c| !frag.contains(c))
        .collect();
    let mut found = Vec::new();
    let mut perm: Vec<usize> = (1..=n).collect();
    permute(&mut perm, 0, &mut |c| {
        if c[a..=b] != *frag {
            return;
        }
        let seq: Vec<usize> = (0..n)
            .map(|k| c[(b + 1 + k) % n])
            .filter(|x| !frag.contains(x))
            .collect();
        if seq == expected {
            found.push(c.to_vec());
        }
    });
    assert_eq!(found.len(), 1, "definition must single out one offspring");
    found.pop().unwrap()
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

pub fn is_permutation(v: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n + 1];
    v.len() == n
        && v.iter()
            .all(|&c| c >= 1 && c <= n && !std::mem::replace(&mut seen[c], true))
}

/// Two-tailed signed-rank p-value by enumerating all 2^n sign assignments.
pub fn wilcoxon_brute_force(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    let n = d.len();
    assert!(n <= 20);
    // midranks by counting
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| ranks[k]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * le.min(ge) as f64 / total).min(1.0)
}

/// Undirected adjacency pairs of a route set, depot included.
fn adjacency(routes: &[Vec<usize>]) -> std::collections::BTreeSet<(usize, usize)> {
    let mut s = std::collections::BTreeSet::new();
    for r in routes {
        let mut prev = 0;
        for &c in r.iter().chain(std::iter::once(&0)) {
            s.insert((prev.min(c), prev.max(c)));
            prev = c;
        }
    }
    s
}

/// Edge list of a route set: one edge per customer to its successor, plus one
/// depot-to-first edge per route.
fn edge_list(routes: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for r in routes {
        e.push((0, r[0]));
        for k in 0..r.len() {
            let s = r.get(k + 1).copied().unwrap_or(0);
            e.push((r[k].min(s), r[k].max(s)));
        }
    }
    e
}

/// Share of edges, over both route sets, whose endpoints are not adjacent in the other.
pub fn broken_pairs_reference(a: &[Vec<usize>], b: &[Vec<usize>]) -> f64 {
    let (ea, eb) = (edge_list(a), edge_list(b));
    let (sa, sb) = (adjacency(a), adjacency(b));
    let broken = ea.iter().filter(|e| !sb.contains(e)).count() + eb.iter().filter(|e| !sa.contains(e)).count();
    broken as f64 / (ea.len() + eb.len()) as f64
}

pub struct RefMember {
    pub routes: Vec<Vec<usize>>,
    pub tour: Vec<usize>,
    pub cost: f64,
    pub feasible: bool,
}

/// Survivor selection written out directly: repeatedly drop the worst clone (same
/// tour or zero distance), otherwise the worst member, by
/// cost rank + (1 - ceil(mu/4)/size) * diversity rank, never the cheapest feasible.
/// Returns the indices of the survivors in the original numbering.
pub fn survivors_reference(members: &[RefMember], mu: usize, n_close: usize) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..members.len()).collect();
    let n_elite = mu.div_ceil(4) as f64;
    while alive.len() > mu {
        let s = alive.len();
        let dist = |x: usize, y: usize| broken_pairs_reference(&members[x].routes, &members[y].routes);
        let mut div = vec![0.0; s];
        for i in 0..s {
            let mut ds: Vec<f64> = (0..s).filter(|&j| j != i).map(|j| dist(alive[i], alive[j])).collect();
            ds.sort_by(f64::total_cmp);
            let k = n_close.min(s - 1);
            div[i] = ds[..k].iter().sum::<f64>() / k as f64;
        }
        let mut fit = vec![0.0; s];
        for i in 0..s {
            let ci = members[alive[i]].cost;
            let cost_rank = (0..s)
                .filter(|&j| {
                    let cj = members[alive[j]].cost;
                    cj < ci || (cj == ci && j < i)
                })
                .count();
            let div_rank = (0..s)
                .filter(|&j| div[j] > div[i] || (div[j] == div[i] && j < i))
                .count();
            let weight = (1.0 - n_elite / s as f64).max(0.0);
            fit[i] = cost_rank as f64 / (s - 1) as f64 + weight * div_rank as f64 / (s - 1) as f64;
        }
        let mut protected = None;
        for i in 0..s {
            let m = &members[alive[i]];
            if m.feasible && protected.is_none_or(|p: usize| m.cost < members[alive[p]].cost) {
                protected = Some(i);
            }
        }
        let is_clone = |i: usize| {
            (0..s).any(|j| {
                j != i && (members[alive[i]].tour == members[alive[j]].tour || dist(alive[i], alive[j]) == 0.0)
            })
        };
        let pick = |only_clones: bool| {
            let mut worst: Option<usize> = None;
            for i in 0..s {
                if Some(i) == protected || (only_clones && !is_clone(i)) {
                    continue;
                }
                if worst.is_none_or(|w| fit[i] >= fit[w]) {
                    worst = Some(i);
                }
            }
            worst
        };
        let victim = pick(true).or_else(|| pick(false)).unwrap();
        alive.remove(victim);
    }
    alive
}
