use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use return_intent::config::RunConfig;
use return_intent::eval::{run_eval, write_eval_csv};
use return_intent::pipeline::IntentEngine;
use return_intent::report::{ReportFormat, ReportWriter};
use return_intent::sim::simulate;
use return_intent::track::{project, write_track, Frame, TrackReader};
use return_intent::Error;

#[derive(Parser)]
#[command(name = "return-intent", version, about = "Infer whether a tracked pedestrian is returning to a vehicle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a track through the filter bank, one report per fix.
    Infer {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Report format.
        #[arg(long, value_parser = parse_format)]
        format: Option<ReportFormat>,
    },
    /// Write a synthetic `t,x,y` track.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Monte Carlo metrics over paired bridged/free tracks, one row per noise level.
    Eval {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Paired trials per noise level.
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Args)]
struct IoArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input track CSV, or `-` for standard input.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path, or `-` for standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EngineArgs {
    /// Quadrature points over the arrival window (even values are raised by one).
    #[arg(long)]
    q: Option<usize>,
    /// Decision threshold.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Simulate a track that ends at the vehicle.
    #[arg(long)]
    bridged: bool,
    /// Arrival time after the start (s).
    #[arg(long)]
    arrival: Option<f64>,
    /// Fix rate (Hz).
    #[arg(long)]
    rate: Option<f64>,
    /// Track length (s).
    #[arg(long)]
    duration: Option<f64>,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BridgeDegenerate { .. } | Error::NumericalDegeneracy(_) | Error::DegenerateEvidence => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn load_config(io: &IoArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &io.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if io.input.is_some() {
        cfg.input = io.input.clone();
    }
    if io.output.is_some() {
        cfg.output = io.output.clone();
    }
    Ok(cfg)
}

fn apply_engine(cfg: &mut RunConfig, args: &EngineArgs) {
    if let Some(q) = args.q {
        cfg.q = q;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
}

fn apply_sim(cfg: &mut RunConfig, args: &SimArgs) {
    let sim = &mut cfg.simulation;
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if args.bridged {
        sim.bridged = true;
    }
    if let Some(a) = args.arrival {
        sim.arrival = a;
    }
    if let Some(r) = args.rate {
        sim.rate = r;
    }
    if let Some(d) = args.duration {
        sim.duration = d;
    }
}

fn is_stdio(path: &Option<PathBuf>) -> bool {
    path.as_deref().is_none_or(|p| p == Path::new("-"))
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    if is_stdio(path) {
        return Ok(Box::new(io::stdout().lock()));
    }
    let p = path.as_deref().expect("checked above");
    let file = File::create(p).map_err(|e| Failure { code: 2, message: format!("{}: {e}", p.display()) })?;
    Ok(Box::new(BufWriter::new(file)))
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn Read>, Failure> {
    if is_stdio(path) {
        return Ok(Box::new(io::stdin().lock()));
    }
    let p = path.as_deref().expect("checked above");
    let file = File::open(p).map_err(|e| Failure { code: 2, message: format!("{}: {e}", p.display()) })?;
    Ok(Box::new(BufReader::new(file)))
}

fn infer(cfg: &RunConfig) -> Result<(), Failure> {
    let model = cfg.model()?;
    let obs = cfg.observation(&model)?;
    let dest = cfg.destination(&model)?;
    let settings = cfg.engine_settings();
    let reader = TrackReader::new(open_input(&cfg.input)?)?;
    let origin = match reader.frame() {
        Frame::Local => None,
        Frame::Geodetic => {
            let [lat, lon] = cfg.vehicle.latlon.ok_or_else(|| Failure {
                code: 2,
                message: "geodetic track needs `vehicle.latlon` in the config".into(),
            })?;
            Some((lat, lon))
        }
    };

    let mut writer: Option<ReportWriter<Box<dyn Write>>> = None;
    let mut engine: Option<IntentEngine> = None;
    for sample in reader {
        let mut sample = sample?;
        if let Some(origin) = origin {
            let (x, y) = project(sample.position[0], sample.position[1], origin)?;
            sample.position = nalgebra::DVector::from_vec(vec![x, y]);
        }
        if engine.is_none() {
            engine = Some(IntentEngine::from_first_fix(&model, &obs, &dest, &sample, &settings)?);
            writer = Some(ReportWriter::new(open_output(&cfg.output)?, cfg.format)?);
        }
        let report =
            engine.as_mut().expect("engine is built on the first fix").observe(&sample.position, sample.t).map_err(
                |e| {
                    let mut f = Failure::from(e);
                    f.message = format!("at t = {}: {}", sample.t, f.message);
                    f
                },
            )?;
        writer.as_mut().expect("writer is opened with the engine").write(&report)?;
    }
    match writer {
        Some(w) => {
            w.finish()?;
            Ok(())
        }
        None => Err(Failure { code: 2, message: "track is empty".into() }),
    }
}

fn simulate_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let model = cfg.model()?;
    let sim = &cfg.simulation;
    let scenario = cfg.scenario(&model, sim.bridged, cfg.simulation_noise_std(), sim.seed)?;
    let (track, _) = simulate(&scenario)?;
    let mut out = open_output(&cfg.output)?;
    write_track(&track, &mut out)?;
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, trials: usize) -> Result<(), Failure> {
    let rows = run_eval(cfg, trials, cfg.simulation.seed)?;
    write_eval_csv(&rows, open_output(&cfg.output)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Infer { io, engine, format } => {
            let mut cfg = load_config(&io)?;
            apply_engine(&mut cfg, &engine);
            if let Some(f) = format {
                cfg.format = f;
            }
            cfg.validate()?;
            infer(&cfg)
        }
        Command::Simulate { io, sim } => {
            let mut cfg = load_config(&io)?;
            apply_sim(&mut cfg, &sim);
            cfg.validate()?;
            simulate_cmd(&cfg)
        }
        Command::Eval { io, engine, sim, trials } => {
            let mut cfg = load_config(&io)?;
            apply_engine(&mut cfg, &engine);
            apply_sim(&mut cfg, &sim);
            if let Some(n) = trials {
                cfg.evaluation.trials = n;
            }
            cfg.validate()?;
            eval_cmd(&cfg, cfg.evaluation.trials)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
