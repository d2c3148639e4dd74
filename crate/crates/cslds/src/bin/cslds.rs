//! Thin command-line front end over the pipeline library.
//!
//! Usage:
//!   cslds <generate|acquire|recover|evaluate|classify|sweep>
//!         --config <path> [--out <dir>] [--threads <n>]
//!
//! Exit codes: 1 configuration error, 2 i/o error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use cslds::io::config::KvConfig;
use cslds::pipeline;
use cslds::Error;

const USAGE: &str = "\
cslds - compressive sensing of linear dynamical scenes

USAGE:
  cslds <COMMAND> --config <path> [--out <dir>] [--threads <n>]

COMMANDS:
  generate   synthesize a scene (video, model, states, pgm frames)
  acquire    take compressive measurements of a video
  recover    estimate states and observation matrix from a stream
  evaluate   score a reconstruction against ground truth and the oracle
  classify   nearest-neighbor classification of jittered model ensembles
  sweep      run single / monte_carlo / sweep experiments into a CSV

OPTIONS:
  --config <path>   flat key = value configuration file (required)
  --out <dir>       output directory (default: value of out_dir in config,
                    else 'out')
  --threads <n>     worker threads (default: CSLDS_THREADS env, else all)
  --help            print this help
";

struct Args {
    command: String,
    config: PathBuf,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

fn parse_args() -> Result<Args, String> {
    let mut args = std::env::args().skip(1);
    let command = match args.next() {
        Some(c) if c == "--help" || c == "-h" => {
            print!("{USAGE}");
            std::process::exit(0);
        }
        Some(c) => c,
        None => return Err("missing command".into()),
    };
    let mut config = None;
    let mut out = None;
    let mut threads = None;
    while let Some(flag) = args.next() {
        match flag.as_str() {
            "--config" => config = Some(PathBuf::from(args.next().ok_or("--config needs a path")?)),
            "--out" => out = Some(PathBuf::from(args.next().ok_or("--out needs a dir")?)),
            "--threads" => {
                let raw = args.next().ok_or("--threads needs a number")?;
                threads = Some(
                    raw.parse()
                        .map_err(|_| format!("bad thread count '{raw}'"))?,
                );
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(format!("unknown argument '{other}'")),
        }
    }
    Ok(Args {
        command,
        config: config.ok_or("--config is required")?,
        out,
        threads,
    })
}

fn run(args: &Args) -> cslds::Result<()> {
    let threads = args.threads.or_else(|| {
        std::env::var("CSLDS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore the error if a pool already exists (repeated init).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    let cfg = KvConfig::parse_file(&args.config)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    match args.command.as_str() {
        "generate" => pipeline::cmd_generate(&cfg, &out_dir),
        "acquire" => pipeline::cmd_acquire(&cfg, &out_dir),
        "recover" => pipeline::cmd_recover(&cfg, &out_dir),
        "evaluate" => pipeline::cmd_evaluate(&cfg, &out_dir),
        "classify" => pipeline::cmd_classify(&cfg, &out_dir),
        "sweep" => pipeline::cmd_sweep(&cfg, &out_dir),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(1);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
