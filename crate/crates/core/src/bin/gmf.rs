use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gmf_core::bp::{run_bp, BpConfig};
use gmf_core::clustering::Partition;
use gmf_core::exact::{all_node_marginals, DEFAULT_CAP};
use gmf_core::experiment::{run_experiment, ExperimentConfig, PartitionScheme};
use gmf_core::gmf::{run_gmf, GmfConfig, Init};
use gmf_core::models::{ModelRecipe, ModelSpec};
use gmf_core::report::RunReport;
use gmf_core::{Error, FactorGraph, Result};

#[derive(Parser)]
#[command(
    name = "gmf",
    version,
    about = "Generalized mean field inference for discrete graphical models"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Convergence tolerance (GMF message change or BP residual).
    #[arg(long, global = true, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, global = true, default_value_t = 1)]
    restarts: usize,
    /// Cap on enumerated states and intermediate table sizes.
    #[arg(long, global = true, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark model; also writes `<stem>.spec.json`.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Exact marginals and log-partition.
    Exact {
        #[arg(long)]
        model: PathBuf,
    },
    /// Generalized mean field over a partition scheme or partition file.
    Gmf {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        partition: String,
        #[arg(long, value_enum, default_value = "random")]
        init: InitArg,
    },
    /// Naive mean field (singleton partition).
    Mf {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        init: InitArg,
    },
    /// Loopy belief propagation.
    Bp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        damping: f64,
        /// Iteration limit; defaults to --max-sweeps.
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Run a multi-trial experiment and write results.csv and summary.json.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a partition as JSON.
    Partition {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scheme: String,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    Ising {
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        /// Couplings in (-2, 0) instead of (0, 2).
        #[arg(long)]
        repulsive: bool,
    },
    Sigmoid {
        /// Hidden layer sizes, top to bottom.
        #[arg(long, value_delimiter = ',', default_value = "6,6,6")]
        layers: Vec<usize>,
        #[arg(long)]
        observed: Option<usize>,
    },
    Fhmm {
        #[arg(long, default_value_t = 6)]
        chains: usize,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 6)]
        output_dim: usize,
    },
}

fn sidecar_path(model: &Path) -> PathBuf {
    model.with_extension("spec.json")
}

fn load_model(path: &Path) -> Result<(FactorGraph, Option<ModelSpec>)> {
    let graph = FactorGraph::load(path)?;
    let side = sidecar_path(path);
    let spec = if side.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(side)?)?)
    } else {
        None
    };
    Ok((graph, spec))
}

fn resolve_partition(arg: &str, graph: &FactorGraph, spec: Option<&ModelSpec>) -> Result<(Partition, String)> {
    if Path::new(arg).is_file() {
        return Ok((Partition::load(arg, graph.num_variables())?, arg.to_string()));
    }
    let scheme: PartitionScheme = arg.parse()?;
    Ok((scheme.resolve(graph, spec)?, arg.to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn gmf_config(g: &Global, init: InitArg) -> GmfConfig {
    GmfConfig {
        tolerance: g.tolerance,
        max_sweeps: g.max_sweeps,
        init: match init {
            InitArg::Random => Init::Random,
            InitArg::Uniform => Init::Uniform,
        },
        seed: g.seed,
        restarts: g.restarts,
        cap: g.cap,
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Gen { family, out } => {
            let recipe = match family {
                GenFamily::Ising {
                    height,
                    width,
                    repulsive,
                } => ModelRecipe::Ising {
                    height,
                    width,
                    bias_range: (-0.25, 0.25),
                    coupling_range: if repulsive { (-2.0, 0.0) } else { (0.0, 2.0) },
                },
                GenFamily::Sigmoid { layers, observed } => ModelRecipe::Sigmoid {
                    layer_sizes: layers,
                    observed_layer_size: observed,
                    weight_range: (0.0, 1.0),
                },
                GenFamily::Fhmm {
                    chains,
                    steps,
                    states,
                    output_dim,
                } => ModelRecipe::Fhmm {
                    num_chains: chains,
                    num_steps: steps,
                    num_states: states,
                    output_dim,
                },
            };
            let spec = recipe.instantiate(g.seed)?;
            let graph = spec.build(g.cap)?;
            match out {
                Some(path) => {
                    graph.save(&path)?;
                    let mut side = serde_json::to_string_pretty(&spec)?;
                    side.push('\n');
                    std::fs::write(sidecar_path(&path), side)?;
                }
                None => println!("{}", graph.to_json_string()?),
            }
        }
        Command::Exact { model } => {
            let (graph, _) = load_model(&model)?;
            let start = std::time::Instant::now();
            let r = all_node_marginals(&graph, g.cap)?;
            print_json(&RunReport {
                algorithm: "exact".into(),
                elbo: None,
                elbo_trace: Vec::new(),
                log_partition: Some(r.log_partition),
                sweeps: 0,
                converged: true,
                node_marginals: r.node_marginals,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                seed: None,
                partition: None,
                restart_index: None,
            })?;
        }
        Command::Gmf { model, partition, init } => {
            let (graph, spec) = load_model(&model)?;
            let (p, desc) = resolve_partition(&partition, &graph, spec.as_ref())?;
            let r = run_gmf(&graph, &p, &gmf_config(g, init))?;
            print_json(&r.to_report("gmf", &desc))?;
        }
        Command::Mf { model, init } => {
            let (graph, _) = load_model(&model)?;
            let p = Partition::singletons(graph.num_variables());
            let r = run_gmf(&graph, &p, &gmf_config(g, init))?;
            print_json(&r.to_report("mf", "singletons"))?;
        }
        Command::Bp {
            model,
            damping,
            max_iters,
        } => {
            let (graph, _) = load_model(&model)?;
            let config = BpConfig {
                tolerance: g.tolerance,
                max_iters: max_iters.unwrap_or(g.max_sweeps),
                damping,
                seed: g.seed,
            };
            print_json(&run_bp(&graph, &config)?.to_report("bp"))?;
        }
        Command::Experiment { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let output = run_experiment(&config)?;
            output.write(&out)?;
            print!("{}", output.summary_json()?);
        }
        Command::Partition { model, scheme } => {
            let (graph, spec) = load_model(&model)?;
            let (p, _) = resolve_partition(&scheme, &graph, spec.as_ref())?;
            println!("{}", p.to_json_string()?);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) => 2,
        Error::Capacity { .. } => 3,
        Error::State(_) => 4,
        Error::Numerical(_) => 5,
        Error::Io(_) => 6,
        Error::Parse(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
