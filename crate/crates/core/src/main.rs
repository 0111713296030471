use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtraj::experiment::{self, ExperimentConfig};
use qtraj::gallery;

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Quantum trajectory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ergodicity and purification verdicts
    Check(Opts),
    /// Sample the invariant law from one long trajectory
    Invariant(Opts),
    /// W1 between two ensembles over time
    Mixing(Opts),
    /// Wedge-norm contraction E||^2 S_t||
    Ftrace(Opts),
    /// Distance to the maximum-likelihood estimate
    Coupling(Opts),
    /// Purification of the likelihood matrix
    Purify(Opts),
    /// Built-in examples
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
}

#[derive(Subcommand)]
enum GalleryAction {
    List,
    Run {
        name: String,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Clone)]
struct Opts {
    /// JSON experiment config; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gallery: Option<String>,
    /// JSON model file
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    thin: Option<f64>,
    /// Comma-separated times
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    m_atoms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

impl Opts {
    fn resolve(&self) -> qtraj::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if self.gallery.is_some() || self.model.is_some() {
            cfg.gallery = self.gallery.clone();
            cfg.model_file = self.model.clone();
        }
        macro_rules! over {
            ($($dst:expr => $src:expr),*) => { $( if let Some(v) = $src.clone() { $dst = Some(v); } )* };
        }
        over!(cfg.params.gamma => self.gamma, cfg.params.a => self.a, cfg.params.b => self.b,
              cfg.dt => self.dt, cfg.horizon => self.horizon, cfg.samples => self.samples,
              cfg.burn_in => self.burn_in, cfg.thinning => self.thin, cfg.t_grid => self.t_grid,
              cfg.m_atoms => self.m_atoms, cfg.seed => self.seed);
        if self.config.is_none() || self.out != PathBuf::from("out") {
            cfg.out = self.out.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> qtraj::Result<()> {
    let (opts, f): (Opts, Box<dyn Fn(&mut ExperimentConfig) -> qtraj::Result<serde_json::Value>>) = match cli.command {
        Command::Check(o) => (o, Box::new(experiment::cmd_check)),
        Command::Invariant(o) => (o, Box::new(experiment::cmd_invariant)),
        Command::Mixing(o) => (o, Box::new(experiment::cmd_mixing)),
        Command::Ftrace(o) => (o, Box::new(experiment::cmd_ftrace)),
        Command::Coupling(o) => (o, Box::new(experiment::cmd_coupling)),
        Command::Purify(o) => (o, Box::new(experiment::cmd_purify)),
        Command::Gallery { action: GalleryAction::List } => {
            for (name, about) in gallery::list() {
                println!("{name:<18} {about}");
            }
            return Ok(());
        }
        Command::Gallery {
            action: GalleryAction::Run { name, opts },
        } => (opts, Box::new(move |c: &mut ExperimentConfig| experiment::cmd_gallery_run(&name, c))),
    };
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| qtraj::Error::Config(e.to_string()))?;
    }
    let mut cfg = opts.resolve()?;
    let report = f(&mut cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
