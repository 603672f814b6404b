use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rats_core::domain::BridgeMetric;
use rats_core::format::export_domain;
use rats_core::harness::{
    evaluate_on, parse_config, sweep, write_episodes_csv, Algorithm, BuiltinDomain, DomainRef,
    EvalConfig, HeuristicKind,
};
use rats_core::validation;
use rats_core::{BridgeSpec, Error, Nsmdp};

#[derive(Parser)]
#[command(name = "rats", version, about = "Risk-averse planning on non-stationary MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one algorithm on one domain.
    Run(RunArgs),
    /// Evaluate every algorithm over a grid of bridge epsilons.
    Sweep(SweepArgs),
    /// Run the randomized property and oracle checks.
    Validate(ValidateArgs),
    /// Write a domain as nsmdp-v1 tables.
    ExportDomain(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Rats,
    DpSnapshot,
    DpNsmdp,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Rats => Algorithm::Rats,
            AlgoArg::DpSnapshot => Algorithm::DpSnapshot,
            AlgoArg::DpNsmdp => Algorithm::DpNsmdp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Zero,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Discrete,
    Manhattan,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct DomainArgs {
    /// `bridge`, or a JSON domain file (nsmdp-v1 tables or a builtin reference).
    #[arg(long)]
    domain: Option<String>,
    /// Bridge epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bridge ground metric.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON evaluation config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long, value_enum)]
    heuristic: Option<HeuristicArg>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Episode length cap.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    memoize: Option<bool>,
    /// Initial state, by index or name; defaults to the domain's start.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Epsilon grid, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    epsilons: Vec<f64>,
    /// Algorithms, comma separated; all by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    algo: Vec<AlgoArg>,
    /// Also write the per-cell summary CSV here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Also check the declared Lipschitz constants of this domain.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on the number of random cases per check.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures before any work starts are configuration errors.
enum Failure {
    Config(Error),
    Run(Error),
    Validation,
}

fn config<T>(r: rats_core::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn run<T>(r: rats_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Config { .. } => Failure::Config(e),
        e => Failure::Run(e),
    })
}

fn config_error(path: &str, message: impl Into<String>) -> Failure {
    Failure::Config(Error::Config {
        path: path.into(),
        message: message.into(),
    })
}

fn resolve_domain(args: &DomainArgs, base: DomainRef) -> Result<DomainRef, Failure> {
    let mut domain = match args.domain.as_deref() {
        None => base,
        Some("bridge") => DomainRef::default(),
        Some(path) => DomainRef::File(path.into()),
    };
    if args.epsilon.is_some() || args.metric.is_some() {
        let DomainRef::Builtin(BuiltinDomain::Bridge(spec)) = &mut domain else {
            return Err(config_error("domain", "--epsilon and --metric apply to the builtin bridge only"));
        };
        if let Some(eps) = args.epsilon {
            spec.epsilon = eps;
        }
        if let Some(metric) = args.metric {
            spec.metric = match metric {
                MetricArg::Discrete => BridgeMetric::Discrete,
                MetricArg::Manhattan => BridgeMetric::Manhattan,
            };
        }
    }
    Ok(domain)
}

fn eval_config(args: &EvalArgs) -> Result<EvalConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(e.into()))?;
            config(parse_config(&text))?
        }
        None => EvalConfig::default(),
    };
    cfg.domain = resolve_domain(&args.domain, cfg.domain)?;
    if let Some(d) = args.dmax {
        cfg.planner.max_depth = d;
    }
    if let Some(h) = args.heuristic {
        cfg.planner.heuristic = match h {
            HeuristicArg::Zero => HeuristicKind::Zero,
            HeuristicArg::Mc => HeuristicKind::Mc,
        };
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(m) = args.memoize {
        cfg.planner.memoize = m;
    }
    config(cfg.validate())?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::Run(e.into()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut w = output(out)?;
    run(serde_json::to_writer_pretty(&mut w, value).map_err(Error::from))?;
    run(writeln!(w).and_then(|_| w.flush()).map_err(Error::from))
}

fn resolve_state(nsmdp: &Nsmdp, arg: &str) -> Result<usize, Failure> {
    arg.parse::<usize>()
        .ok()
        .filter(|&s| s < nsmdp.n_states())
        .or_else(|| nsmdp.states().index_of(arg))
        .ok_or_else(|| config_error("start", format!("unknown state {arg:?}")))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = eval_config(&args.eval)?;
    if let Some(a) = args.algo {
        cfg.algorithm = a.into();
    }
    let nsmdp = config(cfg.domain.load())?;
    if let Some(start) = &args.eval.start {
        cfg.start = Some(resolve_state(&nsmdp, start)?);
    }
    if cfg.horizon > nsmdp.horizon() {
        return Err(config_error(
            "horizon",
            format!("episode horizon {} exceeds the model horizon {}", cfg.horizon, nsmdp.horizon()),
        ));
    }
    let eval = run(evaluate_on(&nsmdp, &cfg))?;
    match args.eval.format {
        Format::Json => write_json(&eval.report, args.eval.out.as_deref()),
        Format::Csv => run(write_episodes_csv(&eval.records, output(args.eval.out.as_deref())?)),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = eval_config(&args.eval)?;
    if cfg.domain.epsilon().is_none() {
        return Err(config_error("domain", "a sweep needs the builtin bridge domain"));
    }
    if let Some(bad) = args.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(config_error("epsilon", format!("{bad} is outside [0, 1]")));
    }
    let algorithms: Vec<Algorithm> = if args.algo.is_empty() {
        Algorithm::ALL.to_vec()
    } else {
        args.algo.iter().map(|&a| a.into()).collect()
    };
    let mut cfg = cfg;
    if let Some(start) = &args.eval.start {
        cfg.start = Some(resolve_state(&config(cfg.domain.load())?, start)?);
    }
    let result = run(sweep(&cfg, &args.epsilons, &algorithms))?;
    if let Some(path) = &args.summary {
        run(result.write_summary_csv(output(Some(path))?))?;
    }
    match args.eval.format {
        Format::Json => write_json(&result, args.eval.out.as_deref()),
        Format::Csv => run(result.write_long_csv(output(args.eval.out.as_deref())?)),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    if !(args.scale > 0.0) {
        return Err(config_error("scale", "must be positive"));
    }
    let mut checks = run(validation::suite(args.seed, args.scale))?;
    if let Some(domain) = &args.domain {
        let args = DomainArgs {
            domain: Some(domain.clone()),
            epsilon: None,
            metric: None,
        };
        let nsmdp = config(resolve_domain(&args, DomainRef::default())?.load())?;
        let start = std::time::Instant::now();
        let report = run(nsmdp.verify_lipschitz(nsmdp.metric()))?;
        checks.push(validation::Check {
            name: "domain-lipschitz".into(),
            pass: report.pass,
            cases: 1,
            worst: (report.max_p_rate - nsmdp.lipschitz_p()).max(report.max_r_rate - nsmdp.lipschitz_r()),
            detail: format!(
                "transition rate {:.6} (declared {}), reward rate {:.6} (declared {})",
                report.max_p_rate,
                nsmdp.lipschitz_p(),
                report.max_r_rate,
                nsmdp.lipschitz_r()
            ),
            elapsed: start.elapsed(),
        });
    }
    for c in &checks {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    match args.format {
        Format::Json => write_json(&checks, args.out.as_deref())?,
        Format::Csv => {
            let mut w = output(args.out.as_deref())?;
            let mut lines = vec!["name,pass,cases,worst".to_string()];
            lines.extend(checks.iter().map(|c| format!("{},{},{},{}", c.name, c.pass, c.cases, c.worst)));
            run(writeln!(w, "{}", lines.join("\n")).and_then(|_| w.flush()).map_err(Error::from))?;
        }
    }
    if checks.iter().all(|c| c.pass) {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn cmd_export(args: ExportArgs) -> Result<(), Failure> {
    let domain = resolve_domain(&args.domain, DomainRef::Builtin(BuiltinDomain::Bridge(BridgeSpec::default())))?;
    let nsmdp = config(domain.load())?;
    let json = run(export_domain(&nsmdp))?;
    let mut w = output(args.out.as_deref())?;
    run(writeln!(w, "{json}").and_then(|_| w.flush()).map_err(Error::from))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::ExportDomain(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // a closed stdout is not an error worth reporting
        Err(Failure::Run(Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(3)
        }
    }
}
