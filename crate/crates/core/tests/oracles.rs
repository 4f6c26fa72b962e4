mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relhgs_core::genetic::{
    adapt_penalty, broken_pairs_distance, ox_with_cuts, relatedness_ox_with, survivor_selection, Individual,
    PenaltyState, Pool,
};
use relhgs_core::harness::wilcoxon_paired;
use relhgs_core::instance::{Instance, Rounding};
use relhgs_core::localsearch::{run_local_search, LsConfig};
use relhgs_core::relatedness::build_neighbor_lists_distance;
use relhgs_core::splittour::{evaluate, split, GiantTour, Solution};

fn tiny_instance(n: usize, rng: &mut ChaCha8Rng) -> Instance {
    let coords = (0..=n)
        .map(|_| (rng.gen_range(0..100) as f64, rng.gen_range(0..100) as f64))
        .collect();
    let mut demands: Vec<u64> = (0..=n).map(|_| rng.gen_range(1..=10)).collect();
    demands[0] = 0;
    let cap = rng.gen_range(10..=30);
    Instance::new("tiny", coords, demands, cap, Rounding::Nearest).unwrap()
}

#[test]
fn split_matches_exhaustive_segmentation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let inst = tiny_instance(n, &mut rng);
        let tour = GiantTour::random(n, &mut rng);
        for w in [0.5, 2.0, 10.0] {
            let expected = common::brute_force_split_doubled(&inst, tour.as_slice(), w);
            match (split(&inst, &tour, w), expected) {
                (Ok(sol), Some(best)) => {
                    let got = evaluate(&inst, &sol, w).unwrap();
                    assert_eq!((2.0 * got).round() as i64, best);
                    let concat: Vec<usize> = sol.routes().concat();
                    assert_eq!(concat, tour.as_slice());
                }
                (Err(_), None) => {}
                (got, want) => panic!("split {got:?} vs brute force {want:?}"),
            }
        }
    }
}

#[test]
fn local_search_output_admits_no_improving_listed_move() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.gen_range(8..=25);
        let inst = tiny_instance(n, &mut rng);
        let gamma = rng.gen_range(2..=6);
        let nl = build_neighbor_lists_distance(&inst, gamma);
        let lists = common::distance_lists(&inst, gamma);
        for (i, l) in lists.iter().enumerate() {
            assert_eq!(nl.list(i), &l[..]);
        }
        let w = [1.0, 5.0, 50.0][rng.gen_range(0..3)];
        let start = split(&inst, &GiantTour::random(n, &mut rng), w).unwrap();
        let out = run_local_search(&inst, &start, &nl, w, LsConfig::default(), &mut rng);
        let routes = out.solution.routes().to_vec();
        let left = common::improving_moves(&inst, &routes, &lists, w, 1e-7);
        assert!(left.is_empty(), "improving moves remain: {left:?}");
        let cost = common::penalized(&inst, &routes, w);
        assert!(cost <= common::penalized(&inst, start.routes(), w) + 1e-9);
        assert!((cost - evaluate(&inst, &out.solution, w).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn crossover_matches_enumerated_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let n = rng.gen_range(2..=7);
        let p1 = GiantTour::random(n, &mut rng);
        let p2 = GiantTour::random(n, &mut rng);
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(a..n);
        let start = rng.gen_range(0..n);
        let got = relatedness_ox_with(&p1, &p2, a, b, start).unwrap();
        let want = common::ordered_crossover_by_enumeration(p1.as_slice(), p2.as_slice(), a, b, start);
        assert_eq!(got.as_slice(), &want[..]);
        let plain = ox_with_cuts(&p1, &p2, a, b).unwrap();
        let want = common::ordered_crossover_by_enumeration(p1.as_slice(), p2.as_slice(), a, b, (b + 1) % n);
        assert_eq!(plain.as_slice(), &want[..]);
    }
}

#[test]
fn wilcoxon_matches_sign_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..40 {
        let k = rng.gen_range(6..=14);
        let a: Vec<f64> = (0..k).map(|_| rng.gen_range(0..20) as f64).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.gen_range(0..20) as f64 + 1.5).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let res = wilcoxon_paired(&a, &b).unwrap();
        assert!(res.exact);
        let want = common::wilcoxon_brute_force(&d);
        assert!((res.p_value - want).abs() < 1e-12, "{} vs {want}", res.p_value);
    }
}

fn individual(inst: &Instance, routes: Vec<Vec<usize>>, w: f64) -> Individual {
    let tour = GiantTour::new(routes.concat(), inst.n()).unwrap();
    Individual::new(tour, Solution::from_routes(inst, routes).unwrap(), w)
}

fn random_routes(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let tour = GiantTour::random(n, rng).into_vec();
    let mut routes = Vec::new();
    let mut cur = Vec::new();
    for c in tour {
        cur.push(c);
        if rng.gen_bool(0.3) {
            routes.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        routes.push(cur);
    }
    routes
}

#[test]
fn broken_pairs_matches_edge_set_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let n = rng.gen_range(1..=12);
        let inst = tiny_instance(n, &mut rng);
        let (ra, rb) = (random_routes(n, &mut rng), random_routes(n, &mut rng));
        let (a, b) = (individual(&inst, ra.clone(), 1.0), individual(&inst, rb.clone(), 1.0));
        let want = common::broken_pairs_reference(&ra, &rb);
        assert!((broken_pairs_distance(&a, &b) - want).abs() < 1e-12);
        assert!((broken_pairs_distance(&b, &a) - want).abs() < 1e-12);
        assert_eq!(broken_pairs_distance(&a, &a), 0.0);
    }
}

#[test]
fn survivor_selection_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..25 {
        let n = rng.gen_range(5..=10);
        let inst = tiny_instance(n, &mut rng);
        let w = 3.0;
        let size = rng.gen_range(6..=14);
        let mu = rng.gen_range(2..size);
        let mut members: Vec<common::RefMember> = Vec::new();
        let mut inds = Vec::new();
        for _ in 0..size {
            // duplicate an earlier member now and then so that clones occur
            let routes = if !members.is_empty() && rng.gen_bool(0.2) {
                let k = rng.gen_range(0..members.len());
                let mut r = members[k].routes.clone();
                r.reverse();
                r
            } else {
                random_routes(n, &mut rng)
            };
            let ind = individual(&inst, routes.clone(), w);
            members.push(common::RefMember {
                tour: ind.tour.as_slice().to_vec(),
                cost: ind.penalized_cost,
                feasible: ind.feasible,
                routes,
            });
            inds.push(ind);
        }
        let want: Vec<Vec<usize>> = common::survivors_reference(&members, mu, 5)
            .into_iter()
            .map(|i| members[i].tour.clone())
            .collect();
        let mut pool = Pool::from_individuals(inds);
        survivor_selection(&mut pool, mu, 5);
        let got: Vec<Vec<usize>> = pool.members().iter().map(|m| m.tour.as_slice().to_vec()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn penalty_follows_closed_form() {
    // k consecutive windows all below target: w = min(w0 * 1.2^k, max)
    let mut s = PenaltyState::new(2.0, 0.2);
    for k in 1..=80 {
        for _ in 0..100 {
            s.record(false);
        }
        s = adapt_penalty(s);
        let want = (2.0 * 1.2f64.powi(k)).min(100_000.0);
        assert!((s.w - want).abs() <= 1e-9 * want, "k={k}: {} vs {want}", s.w);
    }
    // all above target: w = max(w0 * 0.85^k, 0.01 w0)
    let mut s = PenaltyState::new(2.0, 0.2);
    for k in 1..=40 {
        for _ in 0..100 {
            s.record(true);
        }
        s = adapt_penalty(s);
        let want = (2.0 * 0.85f64.powi(k)).max(0.02);
        assert!((s.w - want).abs() <= 1e-9 * want);
    }
    // inside the band nothing moves
    let mut s = PenaltyState::new(2.0, 0.2);
    for f in [15, 20, 25] {
        for i in 0..100 {
            s.record(i < f);
        }
        s = adapt_penalty(s);
        assert_eq!(s.w, 2.0);
    }
}
