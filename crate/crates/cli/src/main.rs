use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semicov_cli::config::{parse_annulus, parse_circle, parse_connector, parse_config};
use semicov_cli::{execute, Command, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "semicov", version, about = "Semiconjugacies of circle and annulus coverings onto z^d")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run a complete TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Semiconj1d(Opts),
    Rotation(Opts),
    Classify(Opts),
    Compare(Opts),
    Semiconj2d(Opts),
    Repellers(Opts),
    StarScan(Opts),
    CounterexampleTable(Opts),
    Perturb(Opts),
}

#[derive(Args, Default)]
struct Opts {
    /// Base config; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Map table: a circle family or an annulus map, depending on the command.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Second circle map for `compare`.
    #[arg(long)]
    other: Option<PathBuf>,
    #[arg(long)]
    connector: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    band: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    nmax: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn build(command: Command, o: Opts) -> Result<RunConfig, RunError> {
    let mut cfg = match &o.config {
        Some(p) => parse_config(&read(p)?)?,
        None => RunConfig::new(command),
    };
    cfg.command = command;
    if let Some(p) = &o.map {
        let text = read(p)?;
        match command {
            Command::Semiconj2d | Command::Repellers | Command::StarScan => cfg.annulus = Some(parse_annulus(&text)?),
            _ => cfg.circle = Some(parse_circle(&text)?),
        }
    }
    if let Some(p) = &o.other {
        cfg.other = Some(parse_circle(&read(p)?)?);
    }
    if let Some(p) = &o.connector {
        cfg.connector = Some(parse_connector(&read(p)?)?);
    }
    cfg.tol = o.tol.unwrap_or(cfg.tol);
    cfg.cells = o.cells.unwrap_or(cfg.cells);
    if let Some(b) = o.band {
        cfg.band = Some([b[0], b[1]]);
    }
    if let Some(g) = o.grid {
        cfg.grid = Some([g[0], g[1]]);
    }
    cfg.depth = o.depth.or(cfg.depth);
    cfg.nmax = o.nmax.or(cfg.nmax);
    cfg.points = o.points.or(cfg.points);
    cfg.samples = o.samples.or(cfg.samples);
    cfg.width = o.width.or(cfg.width);
    cfg.out = o.out.or(cfg.out);
    Ok(cfg)
}

fn dispatch(sub: Sub) -> Result<(RunConfig, Option<PathBuf>), RunError> {
    let (command, opts) = match sub {
        Sub::Run { config, out } => {
            let mut cfg = parse_config(&read(&config)?)?;
            cfg.out = out.or(cfg.out);
            let out = cfg.out.clone();
            return Ok((cfg, out));
        }
        Sub::Semiconj1d(o) => (Command::Semiconj1d, o),
        Sub::Rotation(o) => (Command::Rotation, o),
        Sub::Classify(o) => (Command::Classify, o),
        Sub::Compare(o) => (Command::Compare, o),
        Sub::Semiconj2d(o) => (Command::Semiconj2d, o),
        Sub::Repellers(o) => (Command::Repellers, o),
        Sub::StarScan(o) => (Command::StarScan, o),
        Sub::CounterexampleTable(o) => (Command::CounterexampleTable, o),
        Sub::Perturb(o) => (Command::Perturb, o),
    };
    let cfg = build(command, opts)?;
    let out = cfg.out.clone();
    Ok((cfg, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = dispatch(cli.command).and_then(|(cfg, out)| {
        let outcome = execute(&cfg)?;
        outcome.deliver(out.as_deref())?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            eprintln!("{}", outcome.summary);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
