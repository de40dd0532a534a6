use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajsynth::cli::{self, ModelType, RunConfig, RunOutput};
use trajsynth::{par, Error, Result};

/// Fit generative models to mobility traces, synthesize corpora and score them.
#[derive(Parser)]
#[command(name = "trajsynth", version)]
struct Cli {
    /// Master seed; required by every command except ingest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving run directories (default: $TRAJSYNTH_OUTPUT_DIR, then ./runs).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct GridArgs {
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    sampling_period: Option<i64>,
}

#[derive(Args, Default)]
struct ModelArgs {
    #[arg(long)]
    model_type: Option<ModelType>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    bandwidth_scale: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    time_buckets: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Project raw user_id,timestamp,lat,lon rows onto the grid.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Simulate a ground-truth corpus (and labelled targets when n_nonmembers > 0).
    Simulate {
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        n_nonmembers: Option<usize>,
        #[arg(long)]
        trace_len: Option<usize>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Fit a vine or Markov model to a corpus.
    Fit {
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Sample a synthetic corpus from a fitted model.
    Generate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        n_traces: Option<usize>,
        #[arg(long)]
        trace_len: Option<usize>,
        #[arg(long)]
        start_time: Option<i64>,
        #[arg(long)]
        model_type: Option<ModelType>,
        #[arg(long)]
        external_path: Option<PathBuf>,
    },
    /// Compare a synthetic corpus with the real one.
    Evaluate {
        real: PathBuf,
        synthetic: PathBuf,
        #[arg(long)]
        targets: Option<PathBuf>,
        /// timings.json files of earlier fit/generate runs to include in the report.
        #[arg(long)]
        timings: Vec<PathBuf>,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        tau_max: Option<usize>,
        #[arg(long)]
        n_permutations: Option<usize>,
        #[arg(long)]
        p_hide: Option<f64>,
    },
    /// Run the reconstruction and membership attacks.
    Attack {
        synthetic: PathBuf,
        targets: PathBuf,
        #[arg(long)]
        p_hide: Option<f64>,
        #[arg(long)]
        order: Option<usize>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl GridArgs {
    fn apply(self, c: &mut RunConfig) {
        if self.level.is_some() {
            c.level = self.level;
        }
        set(&mut c.sampling_period, self.sampling_period);
    }
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.model_type, self.model_type);
        set(&mut c.window, self.window);
        set(&mut c.truncation, self.truncation);
        set(&mut c.bandwidth_scale, self.bandwidth_scale);
        set(&mut c.order, self.order);
        set(&mut c.alpha, self.alpha);
        set(&mut c.time_buckets, self.time_buckets);
    }
}

fn run(cli: Cli) -> Result<RunOutput> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        par::set_threads(n);
    }
    let root = cli::output_root(cli.out_dir.as_deref());
    match cli.command {
        Command::Ingest { input, grid } => {
            grid.apply(&mut cfg);
            cli::cmd_ingest(&root, &cfg, &input)
        }
        Command::Simulate {
            n_users,
            n_nonmembers,
            trace_len,
            grid,
        } => {
            set(&mut cfg.n_users, n_users);
            set(&mut cfg.n_nonmembers, n_nonmembers);
            set(&mut cfg.trace_len, trace_len);
            grid.apply(&mut cfg);
            cli::cmd_simulate(&root, &cfg)
        }
        Command::Fit { corpus, model } => {
            model.apply(&mut cfg);
            cli::cmd_fit(&root, &cfg, &corpus)
        }
        Command::Generate {
            model,
            n_traces,
            trace_len,
            start_time,
            model_type,
            external_path,
        } => {
            set(&mut cfg.n_traces, n_traces);
            set(&mut cfg.trace_len, trace_len);
            set(&mut cfg.start_time, start_time);
            set(&mut cfg.model_type, model_type);
            if external_path.is_some() {
                cfg.external_path = external_path;
            }
            cli::cmd_generate(&root, &cfg, model.as_deref())
        }
        Command::Evaluate {
            real,
            synthetic,
            targets,
            timings,
            top_n,
            tau_max,
            n_permutations,
            p_hide,
        } => {
            set(&mut cfg.top_n, top_n);
            set(&mut cfg.tau_max, tau_max);
            set(&mut cfg.n_permutations, n_permutations);
            set(&mut cfg.p_hide, p_hide);
            cli::cmd_evaluate(&root, &cfg, &real, &synthetic, targets.as_deref(), &timings)
        }
        Command::Attack {
            synthetic,
            targets,
            p_hide,
            order,
        } => {
            set(&mut cfg.p_hide, p_hide);
            set(&mut cfg.order, order);
            cli::cmd_attack(&root, &cfg, &synthetic, &targets)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg={}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("run_dir={}", out.dir.display());
            for f in &out.files {
                println!("wrote={}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error kind={} msg={}", e.kind(), one_line(&e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
