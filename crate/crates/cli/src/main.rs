use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedspec::harness::experiment::run_experiment_with;
use fedspec::harness::metrics::MetricsWriter;
use fedspec::harness::NoopObserver;
use fedspec::{load_config, Error, Mode, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fedspec",
    version,
    about = "Federated MARL spectrum access simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write per-agent, per-episode metrics as CSV.
    Run(RunArgs),
    /// Run the FL participation sweep, one CSV per participant count.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    participants: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Participant counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    participants: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Seeds to run for every participant count; their rows share one file.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    episodes: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn base_config(path: Option<&Path>) -> fedspec::Result<ScenarioConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(args: RunArgs) -> fedspec::Result<()> {
    let mut config = base_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(episodes) = args.episodes {
        config.episodes = episodes;
    }
    if let Some(u) = args.participants {
        config.participants_u = Some(u);
    }
    config.validate()?;

    match args.out {
        Some(path) => {
            let mut writer = MetricsWriter::create(&path)?;
            run_experiment_with(&config, &mut NoopObserver, |r| writer.write(&r))?;
            writer.finish()?;
        }
        None => {
            let stdout = BufWriter::new(io::stdout().lock());
            let mut writer = MetricsWriter::new(stdout, PathBuf::from("<stdout>"))?;
            run_experiment_with(&config, &mut NoopObserver, |r| writer.write(&r))?;
            writer.finish()?;
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> fedspec::Result<()> {
    let mut config = base_config(args.config.as_deref())?;
    config.mode = Mode::Fl;
    if let Some(episodes) = args.episodes {
        config.episodes = episodes;
    }
    let seeds = if args.seeds.is_empty() {
        vec![config.seed]
    } else {
        args.seeds.clone()
    };
    let mut jobs = Vec::with_capacity(args.participants.len());
    for &u in &args.participants {
        let job = ScenarioConfig {
            participants_u: Some(u),
            ..config.clone()
        };
        job.validate()?;
        jobs.push((u, job));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;

    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(u, job)| {
                let path = args.out_dir.join(format!("u{u}.csv"));
                let seeds = &seeds;
                scope.spawn(move || -> fedspec::Result<()> {
                    let mut writer = MetricsWriter::create(&path)?;
                    for &seed in seeds {
                        let run = ScenarioConfig {
                            seed,
                            ..job.clone()
                        };
                        run_experiment_with(&run, &mut NoopObserver, |r| writer.write(&r))?;
                    }
                    writer.finish().map(drop)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect::<fedspec::Result<Vec<()>>>()
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedspec: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
