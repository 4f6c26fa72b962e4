use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use relhgs_core::clock::{ClockConfig, ClockMode, DEFAULT_UNITS_PER_SECOND};
use relhgs_core::genetic::{run_hgs, Mode, SearchParams};
use relhgs_core::harness::{
    calibration_protocol, emit_reports, load_matrix_instances, run_matrix_with, CalibrationOptions, ExperimentMatrix,
};
use relhgs_core::instance::{
    emit_cvrplib, generate_instance, load_instance, parse_bks, GeneratorSpec, Instance, Rounding,
};
use relhgs_core::localsearch::LsConfig;
use relhgs_core::relatedness::{aggregate_subproblem_heatmaps, synthesize_oracle_heatmap, Heatmap};
use relhgs_core::splittour::Solution;

#[derive(Parser)]
#[command(name = "relhgs", version, about = "Hybrid genetic search for the capacitated VRP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the report as JSON.
    Solve(SolveArgs),
    /// Run an experiment matrix from a TOML file and write CSV reports.
    Bench(BenchArgs),
    /// Best-of-starts local search gaps for a list of neighborhood sizes.
    Calibrate(CalibrateArgs),
    /// Generate instances in CVRPLIB format.
    Gen(GenArgs),
    /// Build a heatmap from reference solutions plus uniform noise.
    HeatmapOracle(OracleArgs),
}

#[derive(Args)]
struct ClockArgs {
    /// Measure the budget in wall-clock seconds instead of counted work.
    #[arg(long)]
    wall_clock: bool,
    /// Work units per second of the counted-work clock.
    #[arg(long, default_value_t = DEFAULT_UNITS_PER_SECOND)]
    units_per_second: f64,
}

impl ClockArgs {
    fn config(&self) -> ClockConfig {
        let mode = if self.wall_clock {
            ClockMode::Wall
        } else {
            ClockMode::Work
        };
        ClockConfig {
            mode,
            units_per_second: self.units_per_second,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "d-o")]
    mode: Mode,
    #[arg(long, default_value_t = 15)]
    gamma: usize,
    #[arg(long, default_value_t = 10.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Reference cost file; defaults to a `.bks` file next to the instance.
    #[arg(long)]
    bks: Option<PathBuf>,
    /// Use unrounded Euclidean distances.
    #[arg(long)]
    no_round: bool,
    #[arg(long)]
    convergence_out: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the best solution in CVRPLIB solution format.
    #[arg(long)]
    solution_out: Option<PathBuf>,
    /// Enable relocate-pair and swap-pair moves.
    #[arg(long)]
    extensions: bool,
    #[arg(long)]
    n_it: Option<u64>,
    #[command(flatten)]
    clock: ClockArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config file.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory of `.vrp` files.
    #[arg(long, required_unless_present = "generate")]
    instances: Option<PathBuf>,
    /// Generator spec used instead of a directory, with `--count` seeds.
    #[arg(long, conflicts_with = "instances")]
    generate: Option<GeneratorSpec>,
    #[arg(long, default_value_t = 10)]
    count: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,30,50,100")]
    gammas: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    /// Per-instance rows as CSV.
    #[arg(long)]
    rows_out: Option<PathBuf>,
    #[command(flatten)]
    clock: ClockArgs,
}

#[derive(Args)]
struct GenArgs {
    /// e.g. `n=100,depot=random,customers=clustered,demand=small,r=6`
    #[arg(long)]
    spec: GeneratorSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Directory for `<name>.vrp` files; standard output when absent (single instance only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Directory with `<instance name>*.sol` files.
    #[arg(long)]
    solutions: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Build the heatmap from subproblems of this many customers.
    #[arg(long)]
    subproblem_size: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path, bks: Option<&Path>, no_round: bool) -> Result<Instance> {
    let mut inst = load_instance(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(b) = bks {
        let text = std::fs::read_to_string(b).with_context(|| format!("reading {}", b.display()))?;
        inst = inst.with_bks(Some(parse_bks(&text)?));
    }
    if no_round {
        inst = inst.with_rounding(Rounding::Exact);
    }
    Ok(inst)
}

fn solve(a: SolveArgs) -> Result<()> {
    let inst = load(&a.instance, a.bks.as_deref(), a.no_round)?;
    let heatmap = match &a.heatmap {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let hm = Heatmap::parse(&text)?;
            if hm.n() != inst.n() {
                bail!("heatmap has {} customers, instance has {}", hm.n(), inst.n());
            }
            Some(hm)
        }
        None => None,
    };
    let defaults = SearchParams::default();
    let params = SearchParams {
        gamma: a.gamma,
        time_limit: a.time_limit,
        seed: a.seed,
        clock: a.clock.config(),
        ls: LsConfig {
            extensions: a.extensions,
            audit: false,
        },
        n_it: a.n_it.unwrap_or(defaults.n_it),
        ..defaults
    };
    let report = run_hgs(&inst, &params, a.mode, heatmap.as_ref())?;
    if let Some(p) = &a.convergence_out {
        let mut csv = String::from("seconds,cost\n");
        for (t, z) in &report.trace {
            writeln!(csv, "{t},{z}")?;
        }
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    if let (Some(p), Some(sol)) = (&a.solution_out, report.solution(&inst)) {
        std::fs::write(p, sol.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let (Some(z), Some(bks)) = (report.cost, inst.bks()) {
        log::info!("gap to reference: {:.4}%", relhgs_core::harness::gap_percent(z, bks)?);
    }
    write_or_print(a.output.as_deref(), &(report.to_json() + "\n"))
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut m = ExperimentMatrix::from_toml(&text)?;
    if let Some(w) = a.workers {
        m.workers = w;
    }
    let base = a.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = a
        .output
        .or_else(|| m.output.as_ref().map(|o| base.join(o)))
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let instances = load_matrix_instances(&m, &base)?;
    let records = run_matrix_with(&m, &instances, &base)?;
    let files = emit_reports(&records, &out)?;
    print!("{}", std::fs::read_to_string(&files.summary)?);
    eprintln!("reports written to {}", out.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let instances: Vec<Instance> = match (&a.instances, &a.generate) {
        (_, Some(spec)) => (0..a.count)
            .map(|s| generate_instance(spec, s))
            .collect::<Result<_, _>>()?,
        (Some(dir), None) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "vrp"))
                .collect();
            paths.sort();
            paths.iter().map(|p| load(p, None, false)).collect::<Result<_>>()?
        }
        (None, None) => bail!("either --instances or --generate is required"),
    };
    if instances.is_empty() {
        bail!("no instances found");
    }
    let opts = CalibrationOptions {
        starts: a.starts,
        clock: a.clock.config(),
        references: None,
    };
    let table = calibration_protocol(&instances, &a.gammas, a.seed, &opts)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    if let Some(p) = &a.rows_out {
        let mut csv = String::from("instance,gamma,best_cost,reference,gap,seconds,evaluations\n");
        for r in &table.rows {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.instance,
                r.gamma,
                opt(r.best_cost),
                opt(r.reference),
                opt(r.gap),
                r.seconds,
                r.evaluations
            )?;
        }
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut out = String::from("gamma,instances,with_gap,mean_gap,mean_seconds,mean_evaluations\n");
    for s in &table.summary {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.gamma,
            s.instances,
            s.with_gap,
            opt(s.mean_gap),
            s.mean_seconds,
            s.mean_evaluations
        )?;
    }
    print!("{out}");
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    match &a.out {
        None if a.count == 1 => print!("{}", emit_cvrplib(&generate_instance(&a.spec, a.seed)?)),
        None => bail!("--out is required with --count > 1"),
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for s in a.seed..a.seed + a.count {
                let inst = generate_instance(&a.spec, s)?;
                let p = dir.join(format!("{}.vrp", inst.name()));
                std::fs::write(&p, emit_cvrplib(&inst)).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

fn heatmap_oracle(a: OracleArgs) -> Result<()> {
    let inst = load(&a.instance, None, false)?;
    let sols: Vec<Solution> = relhgs_core::harness::matrix::read_solution_dir(&a.solutions, &inst)?;
    if sols.is_empty() {
        bail!("no {}*.sol files in {}", inst.name(), a.solutions.display());
    }
    let full = synthesize_oracle_heatmap(&inst, &sols, a.noise, a.seed)?;
    let hm = match a.subproblem_size {
        None => full,
        Some(n_g) => {
            // each subproblem reads the full oracle through its member mapping
            let mut provider = |sub: &Instance, members: &[usize]| {
                let mut h = Heatmap::new(sub.n());
                for x in 0..members.len() {
                    for y in x + 1..members.len() {
                        h.set(x + 1, y + 1, full.get(members[x], members[y]))
                            .map_err(|e| e.to_string())?;
                    }
                }
                Ok(h)
            };
            aggregate_subproblem_heatmaps(&inst, &mut provider, n_g)?
        }
    };
    write_or_print(a.output.as_deref(), &hm.to_text())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Gen(a) => gen(a),
        Command::HeatmapOracle(a) => heatmap_oracle(a),
    }
}
