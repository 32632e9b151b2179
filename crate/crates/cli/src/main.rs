//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 a failed gate under `experiment --strict`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sklab::cavity_recursion::{write_stat_csv, RecursionState};
use sklab::lab_harness::{run_experiment, ExperimentConfig, ExperimentKind, OutputFormat};
use sklab::order_params::{
    at_value, build_sequences, rs_free_energy, solve_q, toy_exponent, DEFAULT_QUAD_NODES,
    DEFAULT_TOL,
};
use sklab::sk_model::{
    conditional_first_moment, conditional_first_moment_factored, conditional_second_moment,
    log_partition_exact,
};
use sklab::vectorspace::sample_disorder;
use sklab::{Disorder, Error, ModelParams};

#[derive(Parser, Debug)]
#[command(name = "sklab", version, about = "Numerical laboratory for the SK spin glass at high temperature")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Inverse temperature.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// External field.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// System size(s), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Vec<usize>,
    /// Stage, conditioning level or iteration count.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    replicas: usize,
    /// Base seed; replica r uses seed + r.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = DEFAULT_QUAD_NODES)]
    quad_nodes: usize,
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Replay a saved disorder instance instead of sampling.
    #[arg(long, global = true)]
    disorder_file: Option<PathBuf>,
    /// Use this overlap instead of solving for it (`at`).
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Site mean of the toy model.
    #[arg(long, global = true)]
    m: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replica-symmetric free energy.
    Rs,
    /// Fixed point q.
    SolveQ,
    /// AT value beta^2 E cosh^-4.
    At,
    /// gamma_k, rho_k and their complements for k = 1..K.
    Sequences,
    /// Run the recursion to stage k and print per-replica observables.
    Recursion,
    /// Quenched free energy by enumeration, with the conditional anneal at level k.
    FreeEnergy,
    /// Conditional first and second moments at level k.
    Moments,
    /// Toy-model second-moment exponent.
    Toy,
    /// Run an experiment preset and print its report.
    Experiment(ExperimentArgs),
    /// Sample a disorder matrix and save it in binary form.
    SampleDisorder,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name when no config file is given.
    #[arg(long)]
    preset: Option<String>,
    /// Exit with 3 if any row fails its gate.
    #[arg(long)]
    strict: bool,
}

/// Errors surfaced by the CLI: usage problems or library failures.
enum Failure {
    Usage(String),
    Lib(Error),
    Strict(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("missing required flag {flag}")))
}

impl Global {
    fn params(&self) -> Result<ModelParams, Failure> {
        let beta = need(self.beta, "--beta")?;
        let h = need(self.h, "--h")?;
        Ok(ModelParams::with_numerics(beta, h, self.quad_nodes, self.tol)?)
    }

    fn k(&self) -> Result<usize, Failure> {
        need(self.k, "--k")
    }

    fn single_n(&self) -> Result<usize, Failure> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            [] => Err(Failure::Usage("missing required flag --n".into())),
            _ => Err(Failure::Usage("this command takes a single --n".into())),
        }
    }

    fn format(&self) -> OutputFormat {
        self.format.map(Into::into).unwrap_or_default()
    }

    fn writer(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    /// Disorder instances: the replayed file, or one per replica seed.
    fn disorders(&self, n: usize) -> Result<Vec<Disorder>, Failure> {
        if let Some(path) = &self.disorder_file {
            let d = Disorder::load(path)?;
            if !self.n.is_empty() && d.n() != n {
                return Err(Failure::Usage(format!(
                    "--n {n} does not match the disorder file (N = {})",
                    d.n()
                )));
            }
            return Ok(vec![d]);
        }
        (0..self.replicas as u64)
            .map(|r| sample_disorder(n, self.seed.wrapping_add(r)).map_err(Failure::from))
            .collect()
    }

    fn n_or_file(&self) -> Result<usize, Failure> {
        match (&self.disorder_file, self.n.as_slice()) {
            (Some(path), []) => Ok(Disorder::load(path)?.n()),
            _ => self.single_n(),
        }
    }
}

/// Simple CSV or JSON table on the chosen writer.
fn write_table(g: &Global, header: &[&str], rows: &[Vec<f64>]) -> Outcome {
    let mut w = g.writer()?;
    match g.format() {
        OutputFormat::Csv => {
            writeln!(w, "{}", header.join(","))?;
            for r in rows {
                let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        OutputFormat::Json => {
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| {
                    header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| {
                            // Index columns are carried as f64 but are integers.
                            let value = if matches!(*h, "seed" | "N" | "k") {
                                serde_json::json!(*v as u64)
                            } else {
                                serde_json::json!(v)
                            };
                            (h.to_string(), value)
                        })
                        .collect()
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &objects).map_err(Error::from)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_scalar(g: &Global, value: f64) -> Outcome {
    let mut w = g.writer()?;
    writeln!(w, "{value}")?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Rs => print_scalar(g, rs_free_energy(&g.params()?)?),
        Command::SolveQ => print_scalar(g, solve_q(&g.params()?)?),
        Command::At => {
            let p = g.params()?;
            // At h = 0 and beta <= 1 the relevant overlap is the trivial root.
            let q = match g.q {
                Some(q) => q,
                None if p.h == 0.0 && p.beta <= 1.0 => 0.0,
                None if p.h == 0.0 => {
                    return Err(Failure::Usage("h = 0 with beta > 1: pass the overlap via --q".into()))
                }
                None => solve_q(&p)?,
            };
            print_scalar(g, at_value(&p, q)?)
        }
        Command::Sequences => {
            let o = build_sequences(&g.params()?, g.k()?)?;
            let rows: Vec<Vec<f64>> = (1..=o.len())
                .map(|k| {
                    vec![
                        k as f64,
                        o.gamma_at(k),
                        o.rho_at(k),
                        o.gamma_sq(k),
                        o.rho_gap[k - 1],
                        o.remaining[k - 1],
                    ]
                })
                .collect();
            write_table(g, &["k", "gamma", "rho", "gamma_sq", "q_minus_rho", "q_minus_gamma_sq"], &rows)
        }
        Command::Recursion => {
            let p = g.params()?;
            let k = g.k()?;
            let n = g.n_or_file()?;
            let order = build_sequences(&p, k.max(1))?;
            let mut records = Vec::new();
            for d in g.disorders(n)? {
                let state = RecursionState::run_owned(d, &order, &p, k, true)?;
                records.push(sklab::cavity_recursion::state_stats(&state)?);
            }
            let mut w = g.writer()?;
            match g.format() {
                OutputFormat::Csv => write_stat_csv(&records, &mut w)?,
                OutputFormat::Json => {
                    serde_json::to_writer_pretty(&mut w, &records).map_err(Error::from)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::FreeEnergy => {
            let p = g.params()?;
            let k = g.k.unwrap_or(0);
            let n = g.n_or_file()?;
            let order = build_sequences(&p, k + 1)?;
            let rs = rs_free_energy(&p)?;
            let mut rows = Vec::new();
            for d in g.disorders(n)? {
                let quenched = log_partition_exact(&d, &p)? / n as f64;
                let seed = d.seed();
                let state = RecursionState::run_owned(d, &order, &p, k + 1, false)?;
                let annealed = conditional_first_moment(&state)?;
                rows.push(vec![seed as f64, n as f64, k as f64, quenched, annealed, rs]);
            }
            write_table(g, &["seed", "N", "k", "quenched", "conditional_annealed", "rs"], &rows)
        }
        Command::Moments => {
            let p = g.params()?;
            let k = g.k()?;
            let n = g.n_or_file()?;
            let order = build_sequences(&p, k + 1)?;
            let mut rows = Vec::new();
            for d in g.disorders(n)? {
                let seed = d.seed();
                let state = RecursionState::run_owned(d, &order, &p, k + 1, false)?;
                let first = conditional_first_moment(&state)?;
                let factored = conditional_first_moment_factored(&state)?;
                let second = conditional_second_moment(&state)?;
                rows.push(vec![seed as f64, n as f64, k as f64, first, factored, second, second - 2.0 * first]);
            }
            write_table(
                g,
                &["seed", "N", "k", "first", "first_factored", "second", "deficit"],
                &rows,
            )
        }
        Command::Toy => {
            let beta = need(g.beta, "--beta")?;
            let m = need(g.m, "--m")?;
            print_scalar(g, toy_exponent(beta, m)?)
        }
        Command::SampleDisorder => {
            let n = g.single_n()?;
            let path = g
                .out
                .as_ref()
                .ok_or_else(|| Failure::Usage("sample-disorder needs --out".into()))?;
            sample_disorder(n, g.seed)?.save(path)?;
            Ok(())
        }
        Command::Experiment(args) => experiment(g, args),
    }
}

fn experiment(g: &Global, args: &ExperimentArgs) -> Outcome {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => {
            let kind: ExperimentKind = name.parse()?;
            let mut c = ExperimentConfig::new(
                kind,
                need(g.beta, "--beta")?,
                g.h.unwrap_or(0.0),
                g.n.clone(),
                g.k.unwrap_or(1),
                g.replicas,
            );
            c.base_seed = g.seed;
            c.quad_nodes = Some(g.quad_nodes);
            c.tol = Some(g.tol);
            c.m = g.m;
            c
        }
        (Some(_), Some(_)) => return Err(Failure::Usage("give either --config or --preset".into())),
        (None, None) => return Err(Failure::Usage("experiment needs --config or --preset".into())),
    };
    if let Some(f) = g.format {
        config.format = f.into();
    }
    // The report goes to --out when given, else to the config's out_path
    // (written by the harness), else to stdout.
    let to_stdout = g.out.is_none() && config.out_path.is_none();
    if let Some(out) = &g.out {
        config.out_path = Some(out.to_string_lossy().into_owned());
    }
    config.validate()?;
    let report = run_experiment(&config)?;
    if to_stdout {
        let mut w = BufWriter::new(io::stdout().lock());
        report.write(config.format, &mut w)?;
        w.flush()?;
    }
    let failed = report.failures().count();
    for row in report.failures() {
        log::warn!(
            "gate failed: {} N={:?} k={:?} mean={} target={:?}",
            row.observable,
            row.n,
            row.k,
            row.mean,
            row.target
        );
    }
    if args.strict && failed > 0 {
        return Err(Failure::Strict(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            // Help and version go to stdout, errors to stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `sklab --help` for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
        Err(Failure::Strict(n)) => {
            eprintln!("strict: {n} row(s) failed their gate");
            ExitCode::from(3)
        }
    }
}
