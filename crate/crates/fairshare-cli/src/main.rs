//! Command-line front end: instance generation, partitioning, solving,
//! certification, penalty bounds, and the two experiment sweeps.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on solver or oracle
//! failures. Progress goes to standard error (gated by `FAIRSHARE_LOG`),
//! machine-readable output to standard output or `--out`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairshare::harness::{
    convergence_csv_body, csv_header, manifest_json, overhead_csv_body, overhead_report,
    reconfig_csv_body, run_convergence, run_reconfig, ExperimentConfig,
};
use fairshare::model::{read_instance, validate, write_instance, Instance};
use fairshare::oracle::fairness_certificate;
use fairshare::partition::{partition_domains, read_partition, write_partition, Partition};
use fairshare::solver::{penalty_bound, SolverState, StopCriteria};
use fairshare::topology::{
    assemble_instance, generate_barabasi_albert, generate_fat_tree, generate_fat_tree_requests,
    generate_requests, LinkMode,
};

#[derive(Parser)]
#[command(name = "fairshare", version, about = "Multi-path alpha-fair bandwidth allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance and write it as JSON.
    Generate(GenerateArgs),
    /// Partition an instance's links into connected domains.
    Partition(PartitionArgs),
    /// Run the distributed solver and emit the iteration trace as CSV.
    Solve(SolveArgs),
    /// Certify a candidate allocation against the exact fairness condition.
    Certify(CertifyArgs),
    /// Print the derived penalty initialization table.
    Bound(BoundArgs),
    /// Convergence-versus-domains experiment from a config file.
    SweepDomains(SweepArgs),
    /// Switching-cost sweep experiment from a config file.
    SweepTheta(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyKind {
    Ba,
    FatTree,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    topology: TopologyKind,
    /// Node count (BA topologies).
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    /// Attachment degree (BA topologies).
    #[arg(long, default_value_t = 4)]
    min_degree: usize,
    /// Pod count (fat-tree topologies; even).
    #[arg(long, default_value_t = 4)]
    pods: usize,
    /// Number of requests (BA topologies; fat trees derive theirs).
    #[arg(long, default_value_t = 20)]
    requests: usize,
    #[arg(long, default_value_t = 2)]
    paths_min: usize,
    #[arg(long, default_value_t = 4)]
    paths_max: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10.0)]
    capacity: f64,
    /// Model each edge as two directed resources.
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    domains: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Partition file; generated from --domains and --seed when omitted.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    domains: usize,
    /// Penalty parameter; the derived initialization when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Residual threshold for both residuals.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: u64,
    /// Switching cost; enables the l1 mode around a zero baseline, or the
    /// allocation in --baseline.
    #[arg(long)]
    theta: Option<f64>,
    /// JSON map path id -> incumbent value, used as the l1 baseline.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV file; standard output when omitted. The per-pair message
    /// table goes next to it with a `.messages.csv` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// JSON map path id -> allocated value.
    #[arg(long)]
    allocation: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for CSVs and the manifest.
    #[arg(long)]
    out: PathBuf,
}

fn log(msg: &str) {
    if std::env::var("FAIRSHARE_LOG").map(|v| !v.is_empty()).unwrap_or(false) {
        eprintln!("fairshare: {msg}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful terminations, everything
            // else is a usage error.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairshare: error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> fairshare::error::Result<()> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Partition(args) => partition(args),
        Command::Solve(args) => solve(args),
        Command::Certify(args) => certify(args),
        Command::Bound(args) => bound(args),
        Command::SweepDomains(args) => sweep_domains(args),
        Command::SweepTheta(args) => sweep_theta(args),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> fairshare::error::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> fairshare::error::Result<()> {
    let instance = match args.topology {
        TopologyKind::Ba => {
            let topo = generate_barabasi_albert(args.nodes, args.min_degree, args.seed)?;
            let specs =
                generate_requests(&topo, args.requests, (args.paths_min, args.paths_max), args.seed)?;
            let mode = if args.directed { LinkMode::Directed } else { LinkMode::Undirected };
            assemble_instance(&topo, &specs, args.alpha, args.capacity, mode)?
        }
        TopologyKind::FatTree => {
            let topo = generate_fat_tree(args.pods)?;
            let specs = generate_fat_tree_requests(&topo, args.paths_max, args.seed)?;
            assemble_instance(&topo, &specs, args.alpha, args.capacity, LinkMode::Undirected)?
        }
    };
    log(&format!(
        "generated instance: {} links, {} paths, {} requests",
        instance.links.len(),
        instance.paths.len(),
        instance.requests.len()
    ));
    match &args.out {
        Some(path) => write_instance(&instance, path)?,
        None => println!("{}", fairshare::model::instance_to_string(&instance)?),
    }
    Ok(())
}

fn partition(args: PartitionArgs) -> fairshare::error::Result<()> {
    let instance = read_instance(&args.instance)?;
    let part = partition_domains(&instance, args.domains, args.seed)?;
    log(&format!("partition sizes: {:?}", part.sizes()));
    match &args.out {
        Some(path) => write_partition(&part, path)?,
        None => {
            let map: BTreeMap<&String, &usize> = part.link_domain.iter().collect();
            println!("{}", serde_json::to_string_pretty(&map).unwrap());
        }
    }
    Ok(())
}

fn load_partition(
    instance: &Instance,
    file: &Option<PathBuf>,
    domains: usize,
    seed: u64,
) -> fairshare::error::Result<Partition> {
    match file {
        Some(path) => read_partition(path, instance),
        None => partition_domains(instance, domains, seed),
    }
}

fn read_allocation(
    instance: &Instance,
    path: &PathBuf,
) -> fairshare::error::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let map: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| fairshare::Error::Schema {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
    instance
        .paths
        .iter()
        .map(|p| {
            map.get(&p.id)
                .copied()
                .ok_or_else(|| fairshare::Error::UnknownId(format!("allocation misses path {}", p.id)))
        })
        .collect()
}

fn solve(args: SolveArgs) -> fairshare::error::Result<()> {
    let instance = read_instance(&args.instance)?;
    let report = validate(&instance);
    if !report.is_ok() {
        return Err(fairshare::Error::InvalidInstance(report.to_string()));
    }
    let part = load_partition(&instance, &args.partition, args.domains, args.seed)?;
    let lambda = match args.lambda {
        Some(l) => l,
        None => penalty_bound(&instance)?.lambda_star,
    };
    log(&format!("solving with lambda = {lambda}, {} domains", part.num_domains));
    let mut state = SolverState::new(&instance, &part, lambda, None)?;
    if let Some(theta) = args.theta {
        let baseline = match &args.baseline {
            Some(path) => read_allocation(&instance, path)?,
            None => vec![0.0; instance.paths.len()],
        };
        state.set_switching(theta, baseline)?;
    }
    let trace = state.solve(
        &StopCriteria { residual_threshold: args.tol, max_iters: args.max_iters, wall_clock: None },
        None,
    )?;
    log(&format!(
        "{} after {} rounds",
        if trace.converged { "converged" } else { "stopped" },
        trace.rows.len()
    ));
    emit(&args.out, &trace.to_csv())?;
    if let Some(out) = &args.out {
        let mut messages = out.clone();
        messages.set_extension("messages.csv");
        std::fs::write(messages, trace.messages_csv())?;
    }
    Ok(())
}

fn certify(args: CertifyArgs) -> fairshare::error::Result<()> {
    let instance = read_instance(&args.instance)?;
    let candidate = read_allocation(&instance, &args.allocation)?;
    let cert = fairness_certificate(&instance, &candidate, args.tol)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "certified": cert.certified(),
            "violation": cert.violation,
            "tolerance": cert.tolerance,
            "candidate_y": cert.candidate_y,
        }))
        .unwrap()
    );
    Ok(())
}

fn bound(args: BoundArgs) -> fairshare::error::Result<()> {
    let instance = read_instance(&args.instance)?;
    let pb = penalty_bound(&instance)?;
    println!("request\ta\trho\td");
    for id in pb.a.keys() {
        println!("{id}\t{}\t{}\t{}", pb.a[id], pb.rho[id], pb.d[id]);
    }
    println!("lambda_star\t{}", pb.lambda_star);
    Ok(())
}

fn load_config(args: &SweepArgs) -> fairshare::error::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(workers) = args.workers {
        config.workers = workers.max(1);
    }
    Ok(config)
}

fn sweep_domains(args: SweepArgs) -> fairshare::error::Result<()> {
    let config = load_config(&args)?;
    std::fs::create_dir_all(&args.out)?;
    log(&format!(
        "convergence sweep: domains {:?}, {} seeds",
        config.domain_counts,
        config.seeds.len()
    ));
    let results = run_convergence(&config)?;
    let header = csv_header(&config);
    std::fs::write(args.out.join("gap.csv"), format!("{header}{}", convergence_csv_body(&results)))?;
    std::fs::write(
        args.out.join("overhead.csv"),
        format!("{header}{}", overhead_csv_body(&overhead_report(&results.cells))),
    )?;
    std::fs::write(args.out.join("manifest.json"), manifest_json(&config))?;
    log(&format!("wrote gap.csv, overhead.csv, manifest.json to {}", args.out.display()));
    Ok(())
}

fn sweep_theta(args: SweepArgs) -> fairshare::error::Result<()> {
    let config = load_config(&args)?;
    std::fs::create_dir_all(&args.out)?;
    log(&format!(
        "switching-cost sweep: {} thetas, {} seeds",
        config.theta_grid.len(),
        config.seeds.len()
    ));
    let results = run_reconfig(&config)?;
    let header = csv_header(&config);
    std::fs::write(args.out.join("reconfig.csv"), format!("{header}{}", reconfig_csv_body(&results)))?;
    std::fs::write(args.out.join("manifest.json"), manifest_json(&config))?;
    log(&format!("wrote reconfig.csv, manifest.json to {}", args.out.display()));
    Ok(())
}
