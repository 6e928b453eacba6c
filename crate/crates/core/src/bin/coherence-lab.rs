use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coherence_lab::error::{Error, Result};
use coherence_lab::harness::{self, ReportFormat, SuiteConfig};
use coherence_lab::measures::{self, DiscordOptions, MeasureResult, Method, SmoothParams};
use coherence_lab::qmat::{DensityMatrix, DephasingPattern};
use coherence_lab::{discgame, io, sdp};

#[derive(Parser)]
#[command(name = "coherence-lab", version, about = "Coherence and entanglement measures, SDP solver and property suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semidefinite programs stored as JSON.
    Sdp {
        #[command(subcommand)]
        action: SdpAction,
    },
    /// Evaluate one measure on a state file.
    Measure(MeasureArgs),
    /// Subchannel discrimination game.
    Game {
        #[command(subcommand)]
        action: GameAction,
    },
    /// Property suites.
    Suite {
        #[command(subcommand)]
        action: SuiteAction,
    },
}

#[derive(Subcommand)]
enum SdpAction {
    /// Solve a problem file and print status, values and residuals.
    Solve {
        file: PathBuf,
        /// Write the full solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print per-iteration progress.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureName {
    Cr,
    Cmax,
    Cmin,
    Emax,
    Emin,
    Discord,
    Cmi,
    Monogamy,
}

#[derive(clap::Args)]
struct MeasureArgs {
    #[arg(long, value_enum)]
    name: MeasureName,
    /// Factor indices: dephased factors (cr, cmax, cmin), the measured
    /// factor (discord) or the parts (monogamy; the rest is the memory).
    /// Defaults to every factor, or factor 0 for discord.
    #[arg(long)]
    pattern: Option<String>,
    /// Groups separated by '|', e.g. "0|1,2" (emax, emin: parties; cmi: A|B|C).
    #[arg(long)]
    partition: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include certificate matrices in the output.
    #[arg(long)]
    certificate: bool,
}

#[derive(Subcommand)]
enum GameAction {
    /// Check the discrimination ratio against 2^{C_max(A|B)}.
    Verify {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 0)]
        random_instruments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SuiteAction {
    /// Run suites and write the report.
    Run {
        /// `all` or a comma list such as S1,S4.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Dims such as 2x2x2; omitted: each suite's default classes.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "0,0.01,0.05,0.1")]
        eps: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Solver { .. } | Error::InfeasibleCertificate(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Sdp { action: SdpAction::Solve { file, out, verbose } } => sdp_solve(&file, out, verbose),
        Command::Measure(args) => measure(&args),
        Command::Game { action: GameAction::Verify { state, random_instruments, seed, out } } => {
            let rho = io::load_state(&state)?;
            let g = discgame::verify_theorem1(&rho, random_instruments, seed)?;
            emit(&g, out.as_ref())?;
            Ok(0)
        }
        Command::Suite { action: SuiteAction::Run { suite, dims, trials, seed, eps, report, csv } } => {
            let mut cfg = SuiteConfig::new(harness::parse_suites(&suite)?, trials, seed).with_eps(harness::parse_eps_list(&eps)?);
            if let Some(d) = dims {
                cfg = cfg.with_dims(harness::parse_dims(&d)?);
            }
            let rep = harness::run_suite(&cfg)?;
            harness::emit_report(&rep, ReportFormat::Json, &report)?;
            if let Some(path) = csv {
                harness::emit_report(&rep, ReportFormat::Csv, &path)?;
            }
            for (s, c) in &rep.summary {
                println!(
                    "{s}: {} items, {} verified, {} inconclusive, {} falsified, {} solver failures, {} vacuous",
                    c.items, c.verified, c.inconclusive, c.falsified, c.solver_failure, c.vacuous
                );
            }
            Ok(rep.exit_code() as u8)
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn sdp_solve(file: &PathBuf, out: Option<PathBuf>, verbose: bool) -> Result<u8> {
    let problem: sdp::SdpProblem = io::read_json(file)?;
    problem.validate()?;
    let opts = sdp::SolveOptions { verbose, ..sdp::SolveOptions::default() };
    let sol = sdp::solve(&problem, &opts)?;
    let check = sdp::verify_solution(&problem, &sol, 1e-6);
    println!("status: {}", serde_json::to_value(sol.status)?.as_str().unwrap_or("?"));
    println!("primal value: {}", sol.primal_value);
    println!("dual value: {}", sol.dual_value);
    println!("gap: {:e}", sol.gap());
    println!("max residual: {:e}", sol.max_residual);
    println!("iterations: {}", sol.iterations);
    println!("certificate check: {}", if check.ok { "passed" } else { "failed" });
    for v in &check.violations {
        println!("  violation {} #{}: {:e}", v.kind, v.index, v.amount);
    }
    if let Some(path) = out {
        io::write_json(path, &sol)?;
    }
    Ok(if sol.is_optimal() { 0 } else { 3 })
}

fn index_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad index list '{s}'"))))
        .collect()
}

fn groups(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split('|').map(index_list).collect()
}

fn scalar(value: f64) -> MeasureResult {
    MeasureResult { value, method: Method::ClosedForm, gap: 0.0, flags: BTreeSet::new(), certificate: Vec::new() }
}

fn measure(args: &MeasureArgs) -> Result<u8> {
    let rho: DensityMatrix = io::load_state(&args.state)?;
    let n = rho.factors();
    let smooth = SmoothParams::new(args.eps)?;
    let pattern = || -> Result<DephasingPattern> {
        match &args.pattern {
            Some(p) => DephasingPattern::new(&index_list(p)?, n),
            None => Ok(DephasingPattern::full(n)),
        }
    };
    let partition = || -> Result<Vec<Vec<usize>>> {
        match &args.partition {
            Some(p) => groups(p),
            None => Ok((0..n).map(|k| vec![k]).collect()),
        }
    };
    let result = match args.name {
        MeasureName::Cr => measures::c_r(&rho, &pattern()?)?,
        MeasureName::Cmax => measures::c_max(&rho, &pattern()?, smooth)?,
        MeasureName::Cmin => measures::c_min(&rho, &pattern()?, smooth)?,
        MeasureName::Emax => measures::e_max(&rho, &partition()?, smooth)?,
        MeasureName::Emin => measures::e_min(&rho, &partition()?, smooth)?,
        MeasureName::Discord => {
            let measured = match &args.pattern {
                Some(p) => match index_list(p)?.as_slice() {
                    [k] => *k,
                    _ => return Err(Error::InvalidArgument("discord needs exactly one measured factor".into())),
                },
                None => 0,
            };
            measures::discord(&rho, measured, &DiscordOptions::default())?
        }
        MeasureName::Cmi => {
            let g = match &args.partition {
                Some(p) => groups(p)?,
                None if n == 3 => vec![vec![0], vec![1], vec![2]],
                None => return Err(Error::InvalidArgument("cmi needs --partition A|B|C".into())),
            };
            let [a, b, c] = g.as_slice() else {
                return Err(Error::InvalidArgument("cmi needs three groups A|B|C".into()));
            };
            scalar(measures::conditional_mutual_information(&rho, a, b, c)?)
        }
        MeasureName::Monogamy => {
            let parts = match &args.pattern {
                Some(p) => index_list(p)?,
                None => (0..n.saturating_sub(1)).collect(),
            };
            let memory: Vec<usize> = (0..n).filter(|k| !parts.contains(k)).collect();
            scalar(measures::monogamy_score(&rho, &parts, &memory)?)
        }
    };
    let result = if args.certificate { result } else { result.without_certificate() };
    emit(&result, args.out.as_ref())?;
    Ok(0)
}
