use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cutstack::commands::{self, Loaded, RyabkoOutput};
use cutstack::formats::{parse_budgets, parse_count, to_json, write_json};
use cutstack::CliError;
use cutstack_core::ryabko::OverflowPolicy;

#[derive(Parser)]
#[command(name = "cutstack", version, about = "Cutting-and-stacking processes: build, sample, measure and verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a process and write it as JSON.
    #[command(subcommand)]
    Build(Build),
    /// Print sampled orbits, one 0/1 line per orbit.
    Sample {
        #[command(flatten)]
        process: ProcessArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = count)]
        len: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Draw start points uniformly from this stage's support (default: top - 1).
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Enclose the probability of a block.
    Prob {
        #[command(flatten)]
        process: ProcessArg,
        #[arg(long)]
        x: String,
        /// Target width, e.g. 1/4096 or 2^-12.
        #[arg(long)]
        eps: Option<String>,
    },
    /// Recover the k table from a sampled orbit and evaluate g(x, k).
    Estimate {
        #[command(flatten)]
        process: ProcessArg,
        #[arg(long)]
        x: String,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Most symbols to read (default: the top stage height, capped at 2^24).
        #[arg(long, value_parser = count)]
        len: Option<u64>,
        #[arg(long)]
        stage: Option<usize>,
    },
    /// Re-check every structural claim of a process file.
    Verify {
        #[command(flatten)]
        process: ProcessArg,
        /// Witness file (one witness or an array) instead of the embedded ones.
        #[arg(long)]
        witness: Option<PathBuf>,
        /// Rerun the adversary and compare traces.
        #[arg(long)]
        rerun: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample the renewal chain given by a list of probabilities, or estimate p_j from it.
    Ryabko {
        /// Comma-separated probabilities, e.g. 1/2,1/3,1/4.
        #[arg(long)]
        p: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = count)]
        len: u64,
        /// `j=2,k=8`: print the frozen estimate of p_j instead of the symbols.
        #[arg(long)]
        estimate: Option<String>,
        #[arg(long, value_enum, default_value_t = Overflow::Fail)]
        overflow: Overflow,
    },
    /// Fraction of orbits whose block frequency deviates by at least 1/k, per length (CSV).
    RateCurve {
        #[command(flatten)]
        process: ProcessArg,
        #[arg(long)]
        x: String,
        #[arg(long)]
        k: u64,
        /// Comma-separated lengths (default: the h' values of the process).
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        stage: Option<usize>,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum Build {
    /// The slow-rate construction, from an explicit k sequence or a target rate.
    Theorem2 {
        /// Strictly increasing, starting at 1, e.g. 1,2,4,7,11.
        #[arg(long)]
        k: Option<String>,
        /// 0, 2^-n or 1/(n+c) with c ≥ 2.
        #[arg(long)]
        rate: Option<String>,
        #[arg(long)]
        stages: Option<usize>,
        /// Longest block counted symbolically.
        #[arg(long)]
        pattern_cap: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// A process on which every listed estimator fails.
    Adversary {
        /// JSON file with an `estimators` list.
        #[arg(long)]
        estimators: PathBuf,
        #[arg(long, default_value_t = 8)]
        stages: usize,
        /// e.g. k=16,m=4096,steps=1e6
        #[arg(long, default_value = "")]
        budgets: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct ProcessArg {
    /// Process file written by `build`.
    #[arg(long = "process")]
    path: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Overflow {
    Fail,
    RepeatLast,
}

fn count(s: &str) -> Result<u64, String> {
    parse_count(s).map_err(|e| e.to_string())
}

fn emit<T: serde::Serialize>(out: &OutArg, value: &T) -> Result<(), CliError> {
    match &out.out {
        Some(path) => Ok(write_json(path, value)?),
        None => {
            println!("{}", to_json(value));
            Ok(())
        }
    }
}

fn load(p: &ProcessArg) -> Result<Loaded, CliError> {
    commands::load(&p.path)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(Build::Theorem2 { k, rate, stages, pattern_cap, out }) => {
            let file = commands::build_theorem2_file(k.as_deref(), rate.as_deref(), stages, pattern_cap)?;
            for c in &file.certificates {
                eprintln!(
                    "n={} h'={} r(h')={} {}",
                    c.n,
                    c.h_prime,
                    c.r_of_h_prime,
                    if c.pass { "PASS" } else { "FAIL" }
                );
            }
            emit(&out, &file)?;
            if file.certificates.iter().any(|c| !c.pass) {
                return Err(CliError::Verification("a rate certificate failed".into()));
            }
            Ok(())
        }
        Command::Build(Build::Adversary { estimators, stages, budgets, out }) => {
            let budgets = parse_budgets(&budgets)?;
            let built = commands::build_adversary_file(&estimators, stages, budgets)?;
            eprint!("{}", built.table);
            emit(&out, &built.file)?;
            match built.abort {
                Some(a) => Err(CliError::Budget(format!(
                    "stage {} needs {} suffix evaluations for estimator {}, cap {}",
                    a.stage, a.suffixes, a.estimator, a.cap
                ))),
                None => Ok(()),
            }
        }
        Command::Sample { process, seed, len, count, stage, jobs } => {
            let l = load(&process)?;
            let m = stage.unwrap_or(l.process.top().saturating_sub(1));
            for line in commands::sample_lines(&l, seed, len, count, Some(m), jobs)? {
                println!("{line}");
            }
            if let Some(tv) = l.process.sampling_tv_bound(m) {
                eprintln!("total variation from the stationary start distribution ≤ {tv}");
            }
            Ok(())
        }
        Command::Prob { process, x, eps } => {
            let l = load(&process)?;
            println!("{}", to_json(&commands::prob(&l, &x, eps.as_deref())?));
            Ok(())
        }
        Command::Estimate { process, x, k, seed, len, stage } => {
            let l = load(&process)?;
            let report = commands::estimate(&l, &x, k, seed, len, stage)?;
            println!("{}", to_json(&report));
            if let Some(e) = &report.error {
                eprintln!("no estimate: the orbit left the set where the k table is recoverable ({e})");
            }
            Ok(())
        }
        Command::Verify { process, witness, rerun, seed } => {
            let l = load(&process)?;
            let report = commands::verify(&l, witness.as_deref(), rerun, seed)?;
            for line in &report.lines {
                println!("{line}");
            }
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "{} check(s) failed",
                    report.lines.iter().filter(|l| l.contains("FAIL")).count()
                )))
            }
        }
        Command::Ryabko { p, seed, len, estimate, overflow } => {
            let policy = match overflow {
                Overflow::Fail => OverflowPolicy::Fail,
                Overflow::RepeatLast => OverflowPolicy::RepeatLast,
            };
            match commands::ryabko(&p, seed, len as usize, estimate.as_deref(), policy)? {
                RyabkoOutput::Symbols(s) => println!("{s}"),
                RyabkoOutput::Estimate(e) => println!("{}", to_json(&e)),
            }
            Ok(())
        }
        Command::RateCurve { process, x, k, lengths, trials, seed, stage, eps, jobs } => {
            let l = load(&process)?;
            let lengths = match lengths {
                Some(s) => commands::parse_list(&s, "length")?,
                None => commands::h_prime_lengths(&l.process).into_iter().filter(|&h| h >= x.len() as u64).collect(),
            };
            let curve = commands::rate_curve(&l, &x, k, &lengths, trials, seed, stage, eps.as_deref(), jobs)?;
            print!("{}", commands::curve_csv(&curve.points));
            eprintln!("target P({x}) in [{}, {}]", curve.target.lo, curve.target.hi);
            for p in &curve.points {
                eprintln!("length {}: {} of {} trials undetermined", p.length, p.undetermined, p.trials);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cutstack: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
