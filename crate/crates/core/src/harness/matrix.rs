//! Experiment matrix: configuration, heatmap provisioning and cell execution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stats::gap_percent;
use super::HarnessError;
use crate::clock::{ClockConfig, ClockMode};
use crate::genetic::{run_hgs, Mode, SearchParams};
use crate::instance::{generate_instance, load_instance, GeneratorSpec, Instance, Rounding};
use crate::relatedness::{synthesize_oracle_heatmap, Heatmap};
use crate::splittour::{parse_solution_text, Solution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File {
        path: PathBuf,
    },
    Dir {
        dir: PathBuf,
    },
    Generated {
        generate: String,
        count: u64,
        #[serde(default)]
        first_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Fixed {
        seconds: f64,
    },
    /// `base * n / 100` seconds.
    Linear {
        base: f64,
    },
}

impl Budget {
    pub fn seconds(&self, n: usize) -> f64 {
        match *self {
            Budget::Fixed { seconds } => seconds,
            Budget::Linear { base } => base * n as f64 / 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeatmapSource {
    #[default]
    None,
    /// `<path>/<instance name>.heatmap` files.
    Dir { path: PathBuf },
    /// Edge frequencies of reference solutions plus uniform noise. Solutions come from
    /// `<solutions>/<instance name>*.sol` when given, otherwise from the final solutions
    /// of the distance-only variants of the same experiment.
    Oracle {
        noise: f64,
        #[serde(default)]
        solutions: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// The instance's provided best-known cost.
    #[default]
    Bks,
    /// The best cost over all runs of the experiment on that instance.
    BestObserved,
}

fn default_gammas() -> Vec<usize> {
    vec![15]
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    pub instances: Vec<InstanceSource>,
    pub variants: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<usize>,
    #[serde(default)]
    pub heatmaps: HeatmapSource,
    /// Ignore heatmap preparation time when charging the budget.
    #[serde(default)]
    pub optimistic: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub clock: ClockConfig,
    #[serde(default)]
    pub reference: ReferenceMode,
    #[serde(default)]
    pub no_round: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Remaining search parameters; budget, Γ, seed and clock are set per cell.
    #[serde(default)]
    pub search: SearchParams,
}

impl ExperimentMatrix {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let m: ExperimentMatrix = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.instances.is_empty() || self.variants.is_empty() || self.seeds.is_empty() || self.gammas.is_empty() {
            return bad("instances, variants, seeds and gammas must be nonempty");
        }
        let positive = match self.budget {
            Budget::Fixed { seconds } => seconds,
            Budget::Linear { base } => base,
        };
        if !(positive > 0.0 && positive.is_finite()) {
            return bad("budget must be positive");
        }
        if self.gammas.contains(&0) {
            return bad("gamma values must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        let needs_heatmap = self.variants.iter().any(|v| v.uses_heatmap());
        match &self.heatmaps {
            HeatmapSource::None if needs_heatmap => bad("heatmap variants need a heatmap source"),
            HeatmapSource::Oracle {
                noise, solutions: None, ..
            } => {
                if !(0.0..=1.0).contains(noise) {
                    return bad("oracle noise must lie in [0, 1]");
                }
                if needs_heatmap && self.variants.iter().all(|v| v.uses_heatmap()) {
                    return bad("an oracle without a solutions directory needs at least one distance variant");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub n: usize,
    pub variant: Mode,
    pub seed: u64,
    pub gamma: usize,
    /// Full cell budget before inference charging.
    pub budget: f64,
    pub cost: Option<f64>,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
    pub hit_bks: bool,
    /// Search time on the configured clock.
    pub solve_seconds: f64,
    pub wall_seconds: f64,
    pub inference_seconds: f64,
    pub time_to_best: Option<f64>,
    pub iterations: u64,
    pub trace: Vec<(f64, f64)>,
    pub routes: Vec<Vec<usize>>,
    pub error: Option<String>,
}

/// Resolves the instance sources relative to `base`.
pub fn load_matrix_instances(m: &ExperimentMatrix, base: &Path) -> Result<Vec<Instance>, HarnessError> {
    let mut out = Vec::new();
    for src in &m.instances {
        match src {
            InstanceSource::File { path } => out.push(load_instance(&base.join(path))?),
            InstanceSource::Dir { dir } => {
                let dir = base.join(dir);
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .map_err(|e| HarnessError::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "vrp"))
                    .collect();
                paths.sort();
                for p in paths {
                    out.push(load_instance(&p)?);
                }
            }
            InstanceSource::Generated {
                generate,
                count,
                first_seed,
            } => {
                let spec: GeneratorSpec = generate.parse()?;
                for s in *first_seed..*first_seed + *count {
                    out.push(generate_instance(&spec, s)?);
                }
            }
        }
    }
    if m.no_round {
        out = out.into_iter().map(|i| i.with_rounding(Rounding::Exact)).collect();
    }
    Ok(out)
}

/// Loads instances and runs every cell.
pub fn run_matrix(m: &ExperimentMatrix, base: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let instances = load_matrix_instances(m, base)?;
    run_matrix_with(m, &instances, base)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    inst: usize,
    variant: Mode,
    gamma: usize,
    seed: u64,
}

struct PreparedHeatmap {
    heatmap: Heatmap,
    inference_seconds: f64,
}

type Prepared = Result<PreparedHeatmap, String>;

/// Runs every (instance, variant, Γ, seed) cell on already loaded instances.
/// Records come back in cell order: instance, then variant, then Γ, then seed.
pub fn run_matrix_with(
    m: &ExperimentMatrix,
    instances: &[Instance],
    base: &Path,
) -> Result<Vec<RunRecord>, HarnessError> {
    m.validate()?;
    let mut cells = Vec::new();
    for inst in 0..instances.len() {
        for &variant in &m.variants {
            for &gamma in &m.gammas {
                for &seed in &m.seeds {
                    cells.push(Cell {
                        inst,
                        variant,
                        gamma,
                        seed,
                    });
                }
            }
        }
    }
    let (plain, heat): (Vec<usize>, Vec<usize>) = (0..cells.len()).partition(|&k| !cells[k].variant.uses_heatmap());
    let mut records: Vec<Option<RunRecord>> = vec![None; cells.len()];
    let no_heatmaps: Vec<Option<Prepared>> = instances.iter().map(|_| None).collect();
    run_cells(m, instances, &cells, &plain, &no_heatmaps, &mut records);

    if !heat.is_empty() {
        let prepared = prepare_heatmaps(m, instances, base, &cells, &records);
        run_cells(m, instances, &cells, &heat, &prepared, &mut records);
    }
    let mut records: Vec<RunRecord> = records.into_iter().map(|r| r.expect("every cell ran")).collect();
    assign_references(&mut records, instances, m.reference);
    Ok(records)
}

fn prepare_heatmaps(
    m: &ExperimentMatrix,
    instances: &[Instance],
    base: &Path,
    cells: &[Cell],
    records: &[Option<RunRecord>],
) -> Vec<Option<Prepared>> {
    instances
        .iter()
        .enumerate()
        .map(|(k, inst)| Some(prepare_one(m, k, inst, base, cells, records).map_err(|e| e.to_string())))
        .collect()
}

fn prepare_one(
    m: &ExperimentMatrix,
    k: usize,
    inst: &Instance,
    base: &Path,
    cells: &[Cell],
    records: &[Option<RunRecord>],
) -> Result<PreparedHeatmap, HarnessError> {
    let started = Instant::now();
    let heatmap = match &m.heatmaps {
        HeatmapSource::None => unreachable!("validated"),
        HeatmapSource::Dir { path } => {
            let file = base.join(path).join(format!("{}.heatmap", inst.name()));
            let text = std::fs::read_to_string(&file).map_err(|e| HarnessError::io(&file, e))?;
            let hm = Heatmap::parse(&text)?;
            if hm.n() != inst.n() {
                return Err(HarnessError::Config(format!(
                    "{} has dimension {}, expected {}",
                    file.display(),
                    hm.n(),
                    inst.n()
                )));
            }
            hm
        }
        HeatmapSource::Oracle { noise, solutions, seed } => {
            let sols = match solutions {
                Some(dir) => read_solution_dir(&base.join(dir), inst)?,
                None => cells
                    .iter()
                    .zip(records)
                    .filter(|(c, _)| c.inst == k)
                    .filter_map(|(_, r)| r.as_ref())
                    .filter(|r| !r.routes.is_empty())
                    .map(|r| Solution::from_routes(inst, r.routes.clone()))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            synthesize_oracle_heatmap(inst, &sols, *noise, seed.wrapping_add(k as u64))?
        }
    };
    let inference_seconds = if m.optimistic {
        0.0
    } else {
        match m.clock.mode {
            // one unit per entry of a dense heatmap
            ClockMode::Work => m.clock.units_to_seconds(((inst.n() + 1) * (inst.n() + 1)) as u64),
            ClockMode::Wall => started.elapsed().as_secs_f64(),
        }
    };
    Ok(PreparedHeatmap {
        heatmap,
        inference_seconds,
    })
}

/// Reads `<dir>/<instance name>*.sol` solution files.
pub fn read_solution_dir(dir: &Path, inst: &Instance) -> Result<Vec<Solution>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "sol")
                && p.file_name()
                    .and_then(|f| f.to_str())
                    .is_some_and(|f| f.starts_with(inst.name()))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            Ok(parse_solution_text(inst, &text)?)
        })
        .collect()
}

fn run_cells(
    m: &ExperimentMatrix,
    instances: &[Instance],
    cells: &[Cell],
    which: &[usize],
    heatmaps: &[Option<Prepared>],
    records: &mut [Option<RunRecord>],
) {
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(which.len()));
    let workers = m.workers.min(which.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                let Some(&k) = which.get(t) else { break };
                let c = cells[k];
                let rec = run_cell(m, &instances[c.inst], c, heatmaps[c.inst].as_ref());
                log::info!(
                    "{} {} gamma={} seed={} cost={:?}{}",
                    rec.instance,
                    rec.variant,
                    rec.gamma,
                    rec.seed,
                    rec.cost,
                    rec.error.as_deref().map(|e| format!(" error={e}")).unwrap_or_default()
                );
                done.lock().expect("collector lock").push((k, rec));
            });
        }
    });
    for (k, rec) in done.into_inner().expect("collector lock") {
        records[k] = Some(rec);
    }
}

fn run_cell(m: &ExperimentMatrix, inst: &Instance, c: Cell, heatmap: Option<&Prepared>) -> RunRecord {
    let budget = m.budget.seconds(inst.n());
    let (heatmap, heatmap_error) = match heatmap {
        None => (None, None),
        Some(Ok(h)) => (Some(h), None),
        Some(Err(e)) => (None, Some(format!("heatmap unavailable: {e}"))),
    };
    let inference_seconds = heatmap.map_or(0.0, |h| h.inference_seconds);
    let mut rec = RunRecord {
        instance: inst.name().to_string(),
        n: inst.n(),
        variant: c.variant,
        seed: c.seed,
        gamma: c.gamma,
        budget,
        cost: None,
        reference: None,
        gap: None,
        hit_bks: false,
        solve_seconds: 0.0,
        wall_seconds: 0.0,
        inference_seconds,
        time_to_best: None,
        iterations: 0,
        trace: Vec::new(),
        routes: Vec::new(),
        error: None,
    };
    if heatmap_error.is_some() {
        rec.error = heatmap_error;
        return rec;
    }
    let time_limit = budget - inference_seconds;
    if time_limit <= 0.0 {
        rec.error = Some(format!("inference time {inference_seconds:.3}s exhausts the budget"));
        return rec;
    }
    let params = SearchParams {
        time_limit,
        gamma: c.gamma,
        seed: c.seed,
        clock: m.clock,
        ..m.search.clone()
    };
    let started = Instant::now();
    match run_hgs(inst, &params, c.variant, heatmap.map(|h| &h.heatmap)) {
        Ok(rep) => {
            rec.cost = rep.cost;
            rec.solve_seconds = rep.elapsed_seconds;
            rec.time_to_best = rep.time_to_best;
            rec.iterations = rep.iterations;
            // the trace is shifted by the charged inference time
            rec.trace = rep.trace.iter().map(|&(t, z)| (t + inference_seconds, z)).collect();
            rec.routes = rep.routes;
            rec.error = rep.diagnostic;
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec.wall_seconds = started.elapsed().as_secs_f64();
    rec
}

/// Fills reference, gap and hit flag of each record.
pub fn assign_references(records: &mut [RunRecord], instances: &[Instance], mode: ReferenceMode) {
    let by_name: BTreeMap<&str, &Instance> = instances.iter().map(|i| (i.name(), i)).collect();
    let mut observed: BTreeMap<String, f64> = BTreeMap::new();
    for r in records.iter() {
        if let Some(z) = r.cost {
            let e = observed.entry(r.instance.clone()).or_insert(z);
            *e = e.min(z);
        }
    }
    for r in records.iter_mut() {
        let inst = by_name.get(r.instance.as_str());
        r.reference = match mode {
            ReferenceMode::Bks => inst.and_then(|i| i.bks()),
            ReferenceMode::BestObserved => observed.get(&r.instance).copied(),
        };
        let exact = inst.is_none_or(|i| i.rounding() == Rounding::Nearest);
        match (r.cost, r.reference) {
            (Some(z), Some(z_ref)) => {
                r.gap = gap_percent(z, z_ref).ok();
                r.hit_bks = if exact {
                    z == z_ref
                } else {
                    (z - z_ref).abs() <= 1e-9 * z_ref.abs()
                };
            }
            _ => {
                r.gap = None;
                r.hit_bks = false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_matrix() -> ExperimentMatrix {
        ExperimentMatrix::from_toml(
            r#"
            variants = ["D-O", "D-D"]
            seeds = [1, 2, 3]
            budget = { seconds = 0.02 }
            gammas = [5]
            workers = 2
            reference = "best-observed"
            [[instances]]
            generate = "n=12,depot=central,customers=random,demand=unitary,r=4"
            count = 1
            "#,
        )
        .unwrap()
    }

    #[test]
    fn cardinality_and_order() {
        let m = small_matrix();
        let recs = run_matrix(&m, Path::new(".")).unwrap();
        assert_eq!(recs.len(), 6);
        let keys: Vec<(String, u64)> = recs.iter().map(|r| (r.variant.to_string(), r.seed)).collect();
        assert_eq!(keys[0], ("D-O".to_string(), 1));
        assert_eq!(keys[5], ("D-D".to_string(), 3));
        assert!(recs
            .iter()
            .all(|r| r.cost.is_some() && r.gap.is_some() && r.error.is_none()));
        assert!(recs.iter().any(|r| r.hit_bks));
        assert!(recs.iter().all(|r| r.gap.unwrap() >= 0.0));
        // reproducible
        let again = run_matrix(&m, Path::new(".")).unwrap();
        let costs = |v: &[RunRecord]| v.iter().map(|r| r.cost).collect::<Vec<_>>();
        assert_eq!(costs(&recs), costs(&again));
    }

    #[test]
    fn oracle_heatmaps_from_distance_runs() {
        let mut m = small_matrix();
        m.variants = vec!["D-O".parse().unwrap(), "D-N".parse().unwrap(), "N-N".parse().unwrap()];
        m.heatmaps = HeatmapSource::Oracle {
            noise: 0.05,
            solutions: None,
            seed: 0,
        };
        let recs = run_matrix(&m, Path::new(".")).unwrap();
        assert_eq!(recs.len(), 9);
        for r in &recs {
            assert!(r.error.is_none(), "{:?}", r.error);
            assert_eq!(r.inference_seconds > 0.0, r.variant.uses_heatmap());
            assert!(r.solve_seconds + r.inference_seconds <= r.budget * 1.02);
        }
        m.optimistic = true;
        let recs = run_matrix(&m, Path::new(".")).unwrap();
        assert!(recs.iter().all(|r| r.inference_seconds == 0.0));
    }

    #[test]
    fn linear_budget_rule() {
        let b = Budget::Linear { base: 24.0 };
        assert_eq!(b.seconds(100), 24.0);
        assert_eq!(b.seconds(1000), 240.0);
    }

    #[test]
    fn config_errors() {
        let bad = r#"
            variants = ["N-O"]
            seeds = [1]
            budget = { seconds = 1 }
            [[instances]]
            path = "x.vrp"
            "#;
        assert!(matches!(ExperimentMatrix::from_toml(bad), Err(HarnessError::Config(_))));
        assert!(ExperimentMatrix::from_toml("variants = [\"D-Q\"]").is_err());
    }

    #[test]
    fn exhausted_budget_is_recorded_not_fatal() {
        let mut m = small_matrix();
        m.variants = vec!["D-N".parse().unwrap(), "D-O".parse().unwrap()];
        m.heatmaps = HeatmapSource::Oracle {
            noise: 0.0,
            solutions: None,
            seed: 0,
        };
        m.clock.units_per_second = 100.0;
        m.budget = Budget::Fixed { seconds: 1.0 };
        m.search.max_iterations = Some(3);
        let recs = run_matrix(&m, Path::new(".")).unwrap();
        assert!(recs
            .iter()
            .filter(|r| r.variant.uses_heatmap())
            .all(|r| r.error.is_some() && r.cost.is_none()));
    }
}
