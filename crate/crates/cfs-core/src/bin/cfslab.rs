use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfs_core::cli::{
    cmd_action, cmd_causal, cmd_check, cmd_fock, cmd_gamma, cmd_gen, cmd_minimize, cmd_partition, cmd_slo, cmd_state,
    cut_for, parse_group, Format, GenKind, Output, SampleOptions, SystemDocument,
};
use cfs_core::fixtures::System;
use cfs_core::quantum_state::StateSnapshot;
use cfs_core::{CfsError, Result};

#[derive(Parser)]
#[command(name = "cfslab", version, about = "Finite causal fermion systems laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    #[value(name = "fixA")]
    FixA,
    #[value(name = "fixB")]
    FixB,
    Random,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Time of the cut; defaults to the midpoint of the time labels.
    #[arg(long)]
    cut_time: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Args, Clone)]
struct Docs {
    /// System document (the vacuum measure).
    #[arg(long = "a", alias = "system")]
    a: Option<PathBuf>,
    /// Second document whose points are the interacting targets.
    #[arg(long = "b")]
    b: Option<PathBuf>,
    /// System document given positionally.
    file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a system document.
    Gen {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 4)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Causal action and constraints.
    Action {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
    },
    /// Causal classification of every pair.
    Causal {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
    },
    /// Surface layer forms on the linearized solutions.
    Slo {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
    },
    /// Nonlinear surface layer integral, per term.
    Gamma {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
    },
    /// Partition function; `--out` receives the snapshot.
    Partition {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "torus")]
        group: String,
        #[arg(long)]
        refined: bool,
    },
    /// Evaluates algebra elements, e.g. `ad(z1) fd(p2) a(z1) f(p2)`.
    State {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
        #[arg(long = "word", required = true)]
        words: Vec<String>,
        /// Snapshot file; sampled afresh when absent.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value = "torus")]
        group: String,
    },
    /// Fock representation and density operator; `--out` receives sigma.
    Fock {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        n_cut: usize,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value = "torus")]
        group: String,
    },
    /// Minimizes the causal action; `--out` receives the final document.
    Minimize {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        iters: usize,
    },
    /// Runs the property suite.
    Check {
        #[command(flatten)]
        docs: Docs,
        #[command(flatten)]
        common: Common,
    },
}

fn format_of(f: OutFormat) -> Format {
    match f {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    }
}

fn load(path: &Path) -> Result<System> {
    SystemDocument::from_json(&fs::read_to_string(path)?)?.to_system()
}

fn systems(d: &Docs) -> Result<(System, Option<System>)> {
    let a = d.a.as_ref().or(d.file.as_ref()).ok_or_else(|| CfsError::Invalid("no system document given".into()))?;
    let b = match &d.b {
        Some(p) => Some(load(p)?),
        None => None,
    };
    Ok((load(a)?, b))
}

fn emit(out: &Option<PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn snapshot_or_sample(
    sys: &System,
    other: Option<&System>,
    common: &Common,
    group: &str,
    snapshot: &Option<PathBuf>,
) -> Result<StateSnapshot> {
    match snapshot {
        Some(p) => StateSnapshot::from_json(&fs::read_to_string(p)?),
        None => {
            let o = SampleOptions {
                seed: common.seed,
                samples: common.samples,
                beta: common.beta,
                alpha: common.alpha,
                group: parse_group(group, &sys.rho)?,
                refined: false,
            };
            let cut = cut_for(sys, common.cut_time);
            Ok(cmd_partition(sys, other, &cut, &o, Format::Csv)?.1)
        }
    }
}

fn run(cli: Cli) -> Result<Output> {
    match cli.command {
        Command::Gen { kind, points, common } => {
            let k = match kind {
                Kind::FixA => GenKind::FixA,
                Kind::FixB => GenKind::FixB,
                Kind::Random => GenKind::Random,
            };
            let doc = cmd_gen(k, common.seed, points)?;
            emit(&common.out, &(doc.to_json()? + "\n"))?;
            Ok(Output { body: String::new(), passed: true })
        }
        Command::Action { docs, common } => {
            let (s, _) = systems(&docs)?;
            let o = cmd_action(&s, format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
        Command::Causal { docs, common } => {
            let (s, _) = systems(&docs)?;
            let o = cmd_causal(&s, format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
        Command::Slo { docs, common } => {
            let (s, _) = systems(&docs)?;
            let o = cmd_slo(&s, &cut_for(&s, common.cut_time), format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
        Command::Gamma { docs, common } => {
            let (s, b) = systems(&docs)?;
            let o = cmd_gamma(&s, b.as_ref(), &cut_for(&s, common.cut_time), format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
        Command::Partition { docs, common, group, refined } => {
            let (s, b) = systems(&docs)?;
            let o = SampleOptions {
                seed: common.seed,
                samples: common.samples,
                beta: common.beta,
                alpha: common.alpha,
                group: parse_group(&group, &s.rho)?,
                refined,
            };
            let (out, snap) = cmd_partition(&s, b.as_ref(), &cut_for(&s, common.cut_time), &o, format_of(common.format))?;
            print!("{}", out.body);
            if let Some(p) = &common.out {
                fs::write(p, snap.to_json()?)?;
            }
            Ok(out)
        }
        Command::State { docs, common, words, snapshot, group } => {
            let (s, b) = systems(&docs)?;
            let snap = snapshot_or_sample(&s, b.as_ref(), &common, &group, &snapshot)?;
            let o = cmd_state(&s, b.as_ref(), &snap.cut(), &snap, &words, format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
        Command::Fock { docs, common, n_cut, n_max, snapshot, group } => {
            let (s, b) = systems(&docs)?;
            let snap = snapshot_or_sample(&s, b.as_ref(), &common, &group, &snapshot)?;
            let (o, sigma) = cmd_fock(&s, b.as_ref(), &snap.cut(), &snap, n_cut, n_max)?;
            print!("{}", o.body);
            if let Some(p) = &common.out {
                fs::write(p, sigma)?;
            }
            Ok(o)
        }
        Command::Minimize { docs, common, iters } => {
            let (s, _) = systems(&docs)?;
            let (o, doc) = cmd_minimize(&s, common.seed, iters, format_of(common.format))?;
            print!("{}", o.body);
            if let Some(p) = &common.out {
                fs::write(p, doc.to_json()? + "\n")?;
            }
            Ok(o)
        }
        Command::Check { docs, common } => {
            let (s, _) = systems(&docs)?;
            let o = cmd_check(&s, &cut_for(&s, common.cut_time), common.seed, common.samples, common.tol, format_of(common.format))?;
            emit(&common.out, &o.body)?;
            Ok(o)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("property check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
