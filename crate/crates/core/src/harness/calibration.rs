//! Neighborhood size calibration: for each instance, ten random starts shared by
//! all Γ values, each improved by a single local search; the best of the ten is
//! compared with a reference cost.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::gap_percent;
use super::HarnessError;
use crate::clock::{ClockConfig, ClockMode};
use crate::instance::Instance;
use crate::localsearch::{repair_with, run_local_search, LsConfig, DEFAULT_REPAIR_MULTIPLIER};
use crate::relatedness::build_neighbor_lists_distance;
use crate::splittour::{split, GiantTour};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub starts: usize,
    pub clock: ClockConfig,
    /// Reference cost per instance. Falls back to the instance's best-known cost, then
    /// to the best cost found over all Γ values.
    pub references: Option<Vec<f64>>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            starts: 10,
            clock: ClockConfig::default(),
            references: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub instance: String,
    pub gamma: usize,
    pub best_cost: Option<f64>,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
    /// Summed search time of the starts on the configured clock.
    pub seconds: f64,
    pub wall_seconds: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub gamma: usize,
    pub instances: usize,
    pub with_gap: usize,
    pub mean_gap: Option<f64>,
    pub mean_seconds: f64,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub rows: Vec<CalibrationRow>,
    pub summary: Vec<CalibrationSummary>,
}

fn stream(seed: u64, instance: usize, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((instance as u64) << 32) | start as u64);
    rng
}

pub fn calibration_protocol(
    instances: &[Instance],
    gammas: &[usize],
    seed: u64,
    opts: &CalibrationOptions,
) -> Result<CalibrationTable, HarnessError> {
    if gammas.is_empty() || gammas.contains(&0) {
        return Err(HarnessError::Config(
            "gamma values must be nonempty and positive".into(),
        ));
    }
    if opts.starts == 0 {
        return Err(HarnessError::Config("at least one start is needed".into()));
    }
    if let Some(r) = &opts.references {
        if r.len() != instances.len() {
            return Err(HarnessError::Config(format!(
                "{} references for {} instances",
                r.len(),
                instances.len()
            )));
        }
    }
    let mut rows = Vec::with_capacity(instances.len() * gammas.len());
    for (k, inst) in instances.iter().enumerate() {
        let w = inst.mean_edge_cost() / inst.mean_demand();
        let starts: Vec<_> = {
            let mut rng = stream(seed, k, usize::MAX >> 32);
            (0..opts.starts)
                .map(|_| split(inst, &GiantTour::random(inst.n(), &mut rng), w))
                .collect::<Result<_, _>>()?
        };
        let first_row = rows.len();
        for &gamma in gammas {
            let nl = build_neighbor_lists_distance(inst, gamma);
            let started = Instant::now();
            let mut best: Option<f64> = None;
            let mut evaluations = 0;
            for (s, sol) in starts.iter().enumerate() {
                let mut rng = stream(seed, k, s);
                let mut out = run_local_search(inst, sol, &nl, w, LsConfig::default(), &mut rng);
                evaluations += out.counters.total_evaluated();
                if !out.solution.is_feasible() {
                    let fixed = repair_with(
                        inst,
                        &out.solution,
                        &nl,
                        w,
                        DEFAULT_REPAIR_MULTIPLIER,
                        LsConfig::default(),
                        &mut rng,
                    )?;
                    evaluations += fixed.counters.total_evaluated();
                    out = fixed;
                }
                if out.solution.is_feasible() {
                    let z = out.solution.distance();
                    best = Some(best.map_or(z, |b: f64| b.min(z)));
                }
            }
            let wall_seconds = started.elapsed().as_secs_f64();
            let seconds = match opts.clock.mode {
                ClockMode::Work => opts.clock.units_to_seconds(evaluations),
                ClockMode::Wall => wall_seconds,
            };
            rows.push(CalibrationRow {
                instance: inst.name().to_string(),
                gamma,
                best_cost: best,
                reference: None,
                gap: None,
                seconds,
                wall_seconds,
                evaluations,
            });
        }
        let observed = rows[first_row..].iter().filter_map(|r| r.best_cost).reduce(f64::min);
        let reference = opts.references.as_ref().map(|r| r[k]).or(inst.bks()).or(observed);
        for row in &mut rows[first_row..] {
            row.reference = reference;
            row.gap = match (row.best_cost, reference) {
                (Some(z), Some(r)) => gap_percent(z, r).ok(),
                _ => None,
            };
        }
    }
    let summary = gammas
        .iter()
        .map(|&gamma| {
            let rs: Vec<&CalibrationRow> = rows.iter().filter(|r| r.gamma == gamma).collect();
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.gap).collect();
            let m = rs.len().max(1) as f64;
            CalibrationSummary {
                gamma,
                instances: rs.len(),
                with_gap: gaps.len(),
                mean_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
                mean_seconds: rs.iter().map(|r| r.seconds).sum::<f64>() / m,
                mean_evaluations: rs.iter().map(|r| r.evaluations as f64).sum::<f64>() / m,
            }
        })
        .collect();
    Ok(CalibrationTable { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, GeneratorSpec};

    fn instances(k: u64) -> Vec<Instance> {
        let spec: GeneratorSpec = "n=40,depot=random,customers=random,demand=small,r=5".parse().unwrap();
        (0..k).map(|s| generate_instance(&spec, s).unwrap()).collect()
    }

    #[test]
    fn deterministic_rows() {
        let inst = instances(1);
        let g = inst[0].n() - 1;
        let opts = CalibrationOptions::default();
        let a = calibration_protocol(&inst, &[g, g], 3, &opts).unwrap();
        assert_eq!(a.rows.len(), 2);
        let strip = |r: &CalibrationRow| (r.best_cost, r.gap, r.seconds, r.evaluations);
        assert_eq!(strip(&a.rows[0]), strip(&a.rows[1]));
        let b = calibration_protocol(&inst, &[g], 3, &opts).unwrap();
        assert_eq!(strip(&a.rows[0]), strip(&b.rows[0]));
    }

    #[test]
    fn time_grows_with_gamma() {
        let inst = instances(3);
        let t = calibration_protocol(&inst, &[5, 30], 1, &CalibrationOptions::default()).unwrap();
        assert_eq!(t.summary.len(), 2);
        assert!(t.summary[1].mean_seconds > t.summary[0].mean_seconds);
        assert!(t.rows.iter().all(|r| r.gap.is_some_and(|g| g >= 0.0)));
    }

    #[test]
    fn rejects_empty_gamma_list() {
        assert!(calibration_protocol(&instances(1), &[], 0, &CalibrationOptions::default()).is_err());
    }
}
