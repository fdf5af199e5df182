use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use denjoy_koebe::config::{ExperimentConfig, OutputFormat};
use denjoy_koebe::report::{ErrorRecord, SCHEMA_VERSION};
use denjoy_koebe::runner::{run_experiment, Setup};
use denjoy_koebe::{Error, Result};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONSTRUCTION: u8 = 3;
const EXIT_VIOLATIONS: u8 = 4;

#[derive(Parser)]
#[command(name = "denjoy-koebe", version, about = "Distortion bounds along suitable sequences of inverse branches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full verification: constants, enumeration and the bound on every pair.
    Run(Common),
    /// List suitable sequences without checking the bound.
    Enumerate(Common),
    /// Estimate the constants of the bound.
    Constants(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.verification.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if let Some(format) = self.format {
            cfg.output.format = format;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct SequenceListing {
    id: usize,
    root: usize,
    length: usize,
    choices: String,
    tags: String,
    interval: [f64; 2],
}

fn execute(command: &Command) -> Result<u8> {
    let common = match command {
        Command::Run(c) | Command::Enumerate(c) | Command::Constants(c) => c,
    };
    let cfg = common.load()?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    match command {
        Command::Run(_) => {
            let report = if cfg.output.format == OutputFormat::Csv {
                let path = dir.join("distortion.csv");
                let file = File::create(&path).map_err(|e| io_err(&path, e))?;
                let mut w = BufWriter::new(file);
                let report = run_experiment(&cfg, Some(&mut w))?;
                w.flush().map_err(|e| io_err(&path, e))?;
                report
            } else {
                run_experiment(&cfg, None)?
            };
            write_json(&dir.join("report.json"), &report)?;
            let s = &report.summary;
            println!(
                "sequences {} pairs {} degenerate {} violations {} min log-margin {}",
                s.sequences,
                s.pairs,
                s.degenerate_pairs,
                s.violations,
                s.min_log_margin.map_or("n/a".to_string(), |m| format!("{m:.6e}"))
            );
            Ok(if s.passed { 0 } else { EXIT_VIOLATIONS })
        }
        Command::Enumerate(_) => {
            let setup = Setup::build(&cfg)?;
            let en = setup.enumerate(&cfg)?;
            let listing: Vec<SequenceListing> = (0..en.len())
                .map(|id| {
                    let node = &en.nodes[id];
                    let seq = en.sequence(id);
                    SequenceListing {
                        id,
                        root: node.root,
                        length: node.depth,
                        choices: seq.choice_string(),
                        tags: seq.tag_string(),
                        interval: [node.interval.lo, node.interval.hi],
                    }
                })
                .collect();
            match cfg.output.format {
                OutputFormat::Json => write_json(&dir.join("sequences.json"), &listing)?,
                OutputFormat::Csv => {
                    let path = dir.join("sequences.csv");
                    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
                    let mut w = BufWriter::new(file);
                    writeln!(w, "id,root,length,choices,tags,lo,hi")?;
                    for s in &listing {
                        writeln!(w, "{},{},{},{},{},{},{}", s.id, s.root, s.length, s.choices, s.tags, s.interval[0], s.interval[1])?;
                    }
                    w.flush().map_err(|e| io_err(&path, e))?;
                }
            }
            let per_length: Vec<String> = en.levels.iter().map(|l| l.len().to_string()).collect();
            println!("sequences {} per length [{}]", en.len(), per_length.join(", "));
            Ok(0)
        }
        Command::Constants(_) => {
            let setup = Setup::build(&cfg)?;
            let consts = setup.constants(&cfg)?;
            write_json(&dir.join("constants.json"), &consts)?;
            println!("A {:.6e} B {:.6e} K4 {:.6e} L {:.6e}", consts.a, consts.b, consts.k4, consts.l);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match &cli.command {
        Command::Run(c) | Command::Enumerate(c) | Command::Constants(c) => c.jobs,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let outcome = match builder.build() {
        Ok(pool) => pool.install(|| execute(&cli.command)),
        Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (kind, code) = match &e {
                Error::Io(_) => ("io", EXIT_IO),
                Error::Config(_) => ("config", EXIT_CONFIG),
                _ => ("construction", EXIT_CONSTRUCTION),
            };
            let record = ErrorRecord { schema_version: SCHEMA_VERSION, kind: kind.into(), message: e.to_string(), exit_code: code as i32 };
            eprintln!("error: {e}");
            println!("{}", serde_json::to_string(&record).expect("record serializes"));
            ExitCode::from(code)
        }
    }
}
