use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snmkit::harness::{
    obtain_table, random_bound_suite, random_environments, run_experiment, sensitivity_sweep, verify_bounds, write_csv,
    write_csv_file, BoundsReport, EnvironmentRef, ObstacleSize, ResultRow, RunOptions, ScenarioConfig,
};
use snmkit::models::NoiseSpec;
use snmkit::planners::{PlannerKind, PlannerSpec};
use snmkit::pomdp::DiscretePomdp;
use snmkit::rng::stream;
use snmkit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "snm",
    version,
    about = "Belief-space planning experiments around the SNM non-linearity measure"
)]
struct Cli {
    /// Master seed; overrides the seed stored in a scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (CSV, JSON) or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lookup-table operations.
    Table {
        #[command(subcommand)]
        action: TableCommand,
    },
    /// Run every planner of a scenario and write one CSV row per planner and noise level.
    Run {
        scenario: PathBuf,
        /// Build missing lookup tables instead of failing.
        #[arg(long)]
        build_tables: bool,
    },
    /// Check the value-loss and α-gap bounds on finite POMDPs.
    VerifyBounds(VerifyArgs),
    /// Re-run a scenario's SNM planner over a list of thresholds.
    SweepThreshold {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        thresholds: Vec<f64>,
        #[arg(long)]
        build_tables: bool,
    },
    /// Generate scenario files with randomly placed box obstacles.
    GenEnvs(GenArgs),
}

#[derive(Subcommand)]
enum TableCommand {
    /// Build (and save) the lookup table of a scenario.
    Build {
        scenario: PathBuf,
        /// Only the noise level with this e_T (all levels by default).
        #[arg(long)]
        e_t: Option<f64>,
        #[arg(long, requires = "e_t")]
        e_z: Option<f64>,
        /// Table states.
        #[arg(long)]
        nodes: Option<usize>,
        /// Samples per state and action.
        #[arg(long)]
        samples: Option<usize>,
        /// Histogram bins per dimension.
        #[arg(long)]
        bins: Option<usize>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON file with a finite POMDP; random instances are used when absent.
    #[arg(long)]
    pomdp: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Largest mixing weight of the random perturbations.
    #[arg(long, default_value_t = 0.3)]
    perturbation: f64,
    /// Perturbed copies per model.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Random models (ignored with --pomdp).
    #[arg(long, default_value_t = 100)]
    models: usize,
    #[arg(long, default_value_t = 0.9)]
    discount: f64,
}

#[derive(Args)]
struct GenArgs {
    /// Environments per obstacle count.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30])]
    obstacles: Vec<usize>,
    #[arg(long, default_value_t = 0.03)]
    min_half: f64,
    #[arg(long, default_value_t = 0.08)]
    max_half: f64,
    /// Scenario used as a template for everything but the environment.
    #[arg(long)]
    template: Option<PathBuf>,
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn emit_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_csv_file(rows, path),
        None => write_csv(rows, std::io::stdout().lock()),
    }
}

fn table_build(
    cli: &Cli,
    scenario: &Path,
    level: Option<NoiseSpec>,
    nodes: Option<usize>,
    samples: Option<usize>,
    bins: Option<usize>,
) -> Result<()> {
    let (mut cfg, base) = load_scenario(scenario, cli.seed)?;
    cfg.tables.node_budget = nodes.unwrap_or(cfg.tables.node_budget);
    cfg.tables.samples = samples.unwrap_or(cfg.tables.samples);
    cfg.tables.bins = bins.unwrap_or(cfg.tables.bins);
    let levels: Vec<NoiseSpec> = match level {
        Some(n) => vec![n],
        None => cfg.noise.clone(),
    };
    let env = cfg.environment.resolve(&base)?;
    let pool = rayon_pool(cli.jobs)?;
    for noise in levels {
        let model = cfg.model(&env, noise);
        let path = cfg.table_path(&base, noise);
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
        }
        let table = pool.install(|| obtain_table(&cfg, &base, &model, noise, true))?;
        if let Some(out) = &cli.out {
            table.save(out)?;
        }
        println!(
            "{}: {} states, mean SNM {:.4}, mean MoNG {}",
            path.display(),
            table.len(),
            table.mean_snm(),
            table.mean_mong().map_or("-".into(), |m| format!("{m:.4}"))
        );
    }
    Ok(())
}

fn rayon_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start thread pool: {e}")))
}

fn print_report(report: &BoundsReport, out: Option<&Path>) -> Result<()> {
    println!(
        "{} checks, {} value-bound violations, {} alpha-bound violations, min slack {:.3e} / {:.3e}",
        report.checks.len(),
        report.value_violations(),
        report.alpha_violations(),
        report.min_value_slack(),
        report.min_alpha_slack()
    );
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn verify(cli: &Cli, args: &VerifyArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let report = match &args.pomdp {
        Some(path) => {
            let dp = DiscretePomdp::load(path)?;
            verify_bounds(&dp, args.depth, args.perturbation, args.count, &mut stream(seed, &[]))?
        }
        None => random_bound_suite(
            args.models,
            args.count,
            (3, 2, 2),
            args.depth,
            args.perturbation,
            args.discount,
            seed,
        )?,
    };
    print_report(&report, cli.out.as_deref())?;
    if !report.passed() {
        eprintln!("error[bound-violation]: a bound failed on at least one instance");
        std::process::exit(1);
    }
    Ok(())
}

fn default_template() -> ScenarioConfig {
    ScenarioConfig {
        id: String::new(),
        environment: EnvironmentRef::Named("empty".into()),
        noise: vec![NoiseSpec::new(0.038, 0.038)],
        variant: Default::default(),
        planners: vec![PlannerSpec::new(PlannerKind::Mcts), PlannerSpec::new(PlannerKind::Mhfr)],
        episodes: 100,
        max_steps: 100,
        particles: 200,
        start: snmkit::models::START.to_vec(),
        seed: 0,
        tables: Default::default(),
        output: None,
    }
}

fn gen_envs(cli: &Cli, args: &GenArgs) -> Result<()> {
    if !(0.0 < args.min_half && args.min_half <= args.max_half && args.max_half < 1.0) {
        return Err(Error::InvalidArgument("need 0 < --min-half <= --max-half < 1".into()));
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("envs"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let template = match &args.template {
        Some(path) => ScenarioConfig::load(path)?,
        None => default_template(),
    };
    let seed = cli.seed.unwrap_or(template.seed);
    let size = ObstacleSize {
        min_half: args.min_half,
        max_half: args.max_half,
    };
    let generated = random_environments(args.count, &args.obstacles, size, seed);
    for g in &generated {
        let cfg = ScenarioConfig {
            id: g.name.clone(),
            environment: EnvironmentRef::Inline(g.environment.clone()),
            seed,
            output: None,
            ..template.clone()
        };
        let path = dir.join(format!("{}.json", g.name));
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    println!("wrote {} scenario files to {}", generated.len(), dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Table {
            action:
                TableCommand::Build {
                    scenario,
                    e_t,
                    e_z,
                    nodes,
                    samples,
                    bins,
                },
        } => {
            let level = e_t.map(|t| NoiseSpec::new(t, e_z.unwrap_or(t)));
            table_build(cli, scenario, level, *nodes, *samples, *bins)
        }
        Command::Run { scenario, build_tables } => {
            let (cfg, base) = load_scenario(scenario, cli.seed)?;
            let opts = RunOptions {
                jobs: cli.jobs,
                build_tables: *build_tables,
            };
            let rows = run_experiment(&cfg, &base, &opts)?;
            let out = cli.out.clone().or_else(|| cfg.output.as_ref().map(|p| base.join(p)));
            emit_rows(&rows, out.as_deref())
        }
        Command::SweepThreshold {
            scenario,
            thresholds,
            build_tables,
        } => {
            let (cfg, base) = load_scenario(scenario, cli.seed)?;
            let opts = RunOptions {
                jobs: cli.jobs,
                build_tables: *build_tables,
            };
            let rows = sensitivity_sweep(&cfg, &base, thresholds, &opts)?;
            emit_rows(&rows, cli.out.as_deref())
        }
        Command::VerifyBounds(args) => verify(cli, args),
        Command::GenEnvs(args) => gen_envs(cli, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
