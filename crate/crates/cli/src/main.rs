mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};
use edgeflow::config::{Config, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "edgeflow", version, about = "Learn edge detectors from motion in video")]
struct Cli {
    /// TOML config file (default: $EDGEFLOW_CONFIG, then built-in defaults)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set sedge.forest.n_trees=4
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads (default: number of logical cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match two frames and write the match file
    Match {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a match file as accepted or rejected (JSON on stdout)
    Filter {
        #[arg(long)]
        matches: PathBuf,
        /// Either frame of the pair, for its size
        #[arg(long)]
        frame: PathBuf,
    },
    /// Interpolate dense flow from matches and an edge map
    Flow {
        #[arg(long)]
        matches: PathBuf,
        /// Edge map (.png or .edgm); uniform edges when absent
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Frame giving the size when no edge map is passed
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a .flo file as a color image
    Colorize {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Magnitude mapped to full saturation (default: 99th percentile)
        #[arg(long)]
        max_mag: Option<f32>,
    },
    /// Detect motion edges in a flow field and align them to the image
    MotionEdges {
        /// Forest model; the gradient detector when absent
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Aligned edge PNG
        #[arg(long)]
        out: PathBuf,
        /// Provenance JSON (default: next to --out)
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Detect edges in an image
    Detect {
        /// Forest model; the gradient detector when absent
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write full-precision strengths (.edgm)
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Train a forest from a sample manifest
    ///
    /// Each manifest line is `image supervision [exclusion]`, paths relative
    /// to the manifest. Supervision is a thin edge map; negatives are not
    /// drawn inside the exclusion mask, which defaults to the supervision
    /// dilated by motionedge.harvest.exclusion_radius.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Run the full learning loop over a frame corpus
    Pipeline {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Iterations (overrides pipeline.iterations)
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: u64,
    },
    /// Benchmark edge maps against ground truth (JSON)
    ///
    /// --pred is one edge map or a directory of them; with a directory,
    /// --gt holds `<name>.png` or `<name>/*.png` per prediction.
    EvalEdges {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Match tolerance in pixels (default: pipeline.eval_tolerance)
        #[arg(long)]
        tol: Option<f32>,
        /// Write the JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average endpoint error between two .flo files (JSON on stdout)
    EvalFlow {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Generate a synthetic corpus with true edges and flow
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long)]
        seed: u64,
        /// TOML file with generator parameters
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(edgeflow::Error),
}

impl From<edgeflow::Error> for Failure {
    fn from(e: edgeflow::Error) -> Self {
        match e {
            edgeflow::Error::Config(m) => Failure::Usage(m),
            e => Failure::Data(e),
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<Config, Failure> {
    let path = cli.config.clone().or_else(|| {
        std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    });
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for s in &cli.set {
        cfg.set(s)?;
    }
    Ok(cfg)
}

fn help_footer() -> String {
    let mut s =
        String::from("Config keys and defaults (set with --config FILE, $EDGEFLOW_CONFIG or --set KEY=VALUE):\n");
    for line in Config::default().describe() {
        s.push_str("  ");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn main() -> ExitCode {
    let matches = match Cli::command().after_help(help_footer()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let result = (|| {
        if let Some(n) = cli.jobs {
            if n == 0 {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(e.to_string()))?;
        }
        let cfg = resolve_config(&cli)?;
        commands::dispatch(cli.command, cfg)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
