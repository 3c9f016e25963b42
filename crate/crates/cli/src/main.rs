use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use gwassign::cqap::solve_exact_enum;
use gwassign::harness::{
    emit_report, generate_with_metadata, instance_from_json, instance_to_json, run_on_instances, run_suite, sweep,
    InstanceSpec, LoadedInstance, Method, ReportFormat, SolveReport, Status, SuiteConfig, SweepKind, DEFAULT_ALPHA,
    DEFAULT_EPSILON, DEFAULT_NODE_CAP, DEFAULT_TRIALS,
};
use gwassign::heuristics::GaConfig;
use gwassign::{Error, SeedPolicy};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "gwassign", version, about = "Assignment as optimal transport: solvers and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic capacitated QAP instance.
    Gen(GenArgs),
    /// Solve one instance with one method and write a JSON report.
    Solve(SolveArgs),
    /// Run several methods over several named instance sizes.
    Bench(BenchArgs),
    /// Sweep the EGW epsilon or the FGW alpha on one instance.
    Sweep(SweepArgs),
    /// Run the exact enumeration oracle on one instance.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Named size (S1..S4, M1..M4, L1..L5) or `custom`.
    #[arg(long)]
    spec: String,
    #[arg(long, required_if_eq("spec", "custom"))]
    agents: Option<usize>,
    #[arg(long, required_if_eq("spec", "custom"))]
    tasks: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunOptions {
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Skip runtime measurement; output is then byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Oracle node budget used for the exact method and for gaps.
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: u64,
}

impl RunOptions {
    fn config(&self) -> SuiteConfig {
        SuiteConfig {
            workers: self.workers,
            timing: !self.no_timing,
            node_cap: self.node_cap,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    inst: PathBuf,
    /// exact | gw | gw-multi | egw | fgw | ga
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    ga_pop: Option<usize>,
    #[arg(long)]
    ga_gens: Option<usize>,
    /// Master seed; defaults to the seed stored in the instance file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated named sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    specs: Vec<String>,
    /// Comma-separated methods, e.g. `exact,gw,gw-multi:20,egw:0.8,fgw:0.5,ga`.
    #[arg(long, value_delimiter = ',', default_value = "exact,gw,gw-multi,egw,fgw,ga")]
    methods: Vec<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Args)]
struct SweepArgs {
    /// epsilon | alpha
    #[arg(long)]
    kind: String,
    #[arg(long)]
    inst: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOptions,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load_instance(path: &Path) -> anyhow::Result<LoadedInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    instance_from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn status_code(reports: &[SolveReport]) -> u8 {
    if reports.iter().any(|r| r.status == Status::Infeasible) {
        EXIT_INFEASIBLE
    } else if reports
        .iter()
        .any(|r| matches!(r.status, Status::NotConverged | Status::SkippedTooLarge))
    {
        EXIT_NOT_CONVERGED
    } else if reports.iter().any(|r| matches!(r.status, Status::Failed(_))) {
        1
    } else {
        0
    }
}

fn gen(args: GenArgs) -> anyhow::Result<u8> {
    let seed = SeedPolicy::new(args.seed, args.stream);
    let spec = if args.spec.eq_ignore_ascii_case("custom") {
        let (Some(n), Some(m)) = (args.agents, args.tasks) else {
            bail!(Error::InvalidConfig("custom instances need --agents and --tasks".into()));
        };
        InstanceSpec::new(format!("custom_{n}x{m}"), n, m, seed)?
    } else {
        if args.agents.is_some() || args.tasks.is_some() {
            warn!("--agents/--tasks are ignored for named spec {}", args.spec);
        }
        InstanceSpec::named(&args.spec.to_ascii_uppercase(), seed)?
    };
    let generated = generate_with_metadata(&spec)?;
    info!(
        "generated {} ({}x{}), demand policy {}",
        spec.test_id, spec.n_agents, spec.n_tasks, generated.metadata.demand_policy
    );
    let json = instance_to_json(&generated.instance, seed, Some(&generated.metadata))?;
    write_output(args.out.as_deref(), json.as_bytes())?;
    Ok(0)
}

fn solve(args: SolveArgs) -> anyhow::Result<u8> {
    let loaded = load_instance(&args.inst)?;
    let ga = GaConfig::default();
    let method = match args.method.to_ascii_lowercase().as_str() {
        "exact" => Method::Exact,
        "gw" => Method::GwDefault,
        "gw-multi" => Method::GwMultiInit { trials: args.trials },
        "egw" => Method::Egw { epsilon: args.epsilon },
        "fgw" => Method::Fgw { alpha: args.alpha },
        "ga" => Method::Ga {
            population: args.ga_pop.unwrap_or(ga.population),
            generations: args.ga_gens.unwrap_or(ga.generations),
        },
        other => bail!(Error::InvalidConfig(format!("unknown method {other:?}"))),
    };
    let seed = args.seed.map_or(loaded.seed, |s| SeedPolicy::new(s, loaded.seed.stream_id));
    let reports = run_on_instances(&[(loaded.instance, seed)], &[method], &args.run.config())?;
    write_output(args.out.as_deref(), &emit_report(&reports, ReportFormat::Json)?)?;
    for r in &reports {
        info!("{} on {}: {}", r.method, r.instance_id, r.status);
    }
    Ok(status_code(&reports))
}

fn bench(args: BenchArgs) -> anyhow::Result<u8> {
    let format: ReportFormat = args.format.parse()?;
    let methods = args.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?;
    let specs = args
        .specs
        .iter()
        .enumerate()
        .map(|(k, id)| InstanceSpec::named(&id.trim().to_ascii_uppercase(), SeedPolicy::new(args.seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = run_suite(&specs, &methods, &args.run.config())?;
    write_output(args.out.as_deref(), &emit_report(&reports, format)?)?;
    for r in reports.iter().filter(|r| r.status != Status::Ok) {
        warn!("{} on {}: {}", r.method, r.instance_id, r.status);
    }
    Ok(0)
}

fn run_sweep(args: SweepArgs) -> anyhow::Result<u8> {
    let kind: SweepKind = args.kind.parse()?;
    let loaded = load_instance(&args.inst)?;
    let seed = args.seed.map_or(loaded.seed, |s| SeedPolicy::new(s, loaded.seed.stream_id));
    let table = sweep(&loaded.instance, seed, kind, &args.grid, &args.run.config())?;
    write_output(args.out.as_deref(), &table.to_csv()?)?;
    Ok(0)
}

fn oracle(args: OracleArgs) -> anyhow::Result<u8> {
    let loaded = load_instance(&args.inst)?;
    let inst = &loaded.instance;
    let result = solve_exact_enum(inst, args.node_cap)?;
    let body = serde_json::json!({
        "instance_id": inst.id(),
        "objective": result.objective,
        "proven": result.proven,
        "nodes": result.nodes,
        "node_cap": args.node_cap,
        "assignment": result.assignment.to_matrix().outer_iter().map(|row| row.to_vec()).collect::<Vec<_>>(),
    });
    let mut bytes = serde_json::to_vec_pretty(&body)?;
    bytes.push(b'\n');
    write_output(args.out.as_deref(), &bytes)?;
    Ok(if result.proven { 0 } else { EXIT_NOT_CONVERGED })
}

fn error_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Infeasible) => EXIT_INFEASIBLE,
        Some(Error::NoConvergence { .. } | Error::NodeCapExceeded(_)) => EXIT_NOT_CONVERGED,
        Some(_) => EXIT_VALIDATION,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => EXIT_VALIDATION,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Oracle(a) => oracle(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(error_code(&err))
        }
    }
}
