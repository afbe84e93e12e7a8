mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use twoq::{
    compare_orders, ett, expected_length, fluid_curve, fluid_linear, simulate_ett_with, sweep_each,
    transient_prob, Error, QuadConfig, QueueParams, Scenario, SimConfig, SimMethod, TransientQuery,
};

use output::{Emitter, Format};

#[derive(Parser, Debug)]
#[command(
    name = "twoq",
    version,
    about = "Expected total time for a customer who must visit two M/M/1 queues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,

    /// Write to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Relative tolerance for the quadrature.
    #[arg(long, global = true, value_name = "REL", env = "TWOQ_REL_TOL")]
    tol: Option<f64>,

    /// Print the load ρ = λ/μ to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args, Debug, Clone, Copy)]
struct Rates {
    /// Arrival rate λ.
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Service rate μ.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Order {
    Ab,
    Ba,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    TwoStage,
    FullEvent,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expected total time for one or both visiting orders.
    Ett {
        #[command(flatten)]
        rates: Rates,
        #[arg(long)]
        a: u32,
        #[arg(long)]
        b: u32,
        #[arg(long, value_enum, default_value_t = Order::Ab)]
        order: Order,
    },
    /// Both orders, their gap, and the recommended order.
    Compare {
        #[command(flatten)]
        rates: Rates,
        #[arg(long)]
        a: u32,
        #[arg(long)]
        b: u32,
    },
    /// Compare over a grid of queue lengths, e.g. `--a 0..12 --b 3,5,7`.
    Sweep {
        #[command(flatten)]
        rates: Rates,
        #[arg(long, value_parser = parse_counts)]
        a: Counts,
        #[arg(long, value_parser = parse_counts)]
        b: Counts,
    },
    /// Monte Carlo estimate of the expected total time. Works for any load.
    Simulate {
        #[command(flatten)]
        rates: Rates,
        #[arg(long)]
        a: u32,
        #[arg(long)]
        b: u32,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long, value_enum, default_value_t = Method::TwoStage)]
        method: Method,
    },
    /// Expected queue length EL_i(t) on a uniform grid over [0, t-max].
    Curves {
        #[command(flatten)]
        rates: Rates,
        #[arg(long, value_parser = parse_counts)]
        i: Counts,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        steps: u32,
    },
    /// Transition probabilities p_ij(t).
    Pij {
        #[command(flatten)]
        rates: Rates,
        #[arg(long, value_parser = parse_counts)]
        i: Counts,
        #[arg(long, value_parser = parse_counts)]
        j: Counts,
        #[arg(long)]
        t: f64,
    },
    /// Deterministic approximations of the expected total time.
    Fluid {
        #[command(flatten)]
        rates: Rates,
        #[arg(long)]
        a: u32,
        #[arg(long)]
        b: u32,
    },
}

#[derive(Debug, Clone)]
struct Counts(Vec<u32>);

/// `3`, `0..7` (inclusive) or `1,4,9`.
fn parse_counts(s: &str) -> Result<Counts, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let lo: u32 = lo
                .parse()
                .map_err(|_| format!("bad range start in `{part}`"))?;
            let hi: u32 = hi
                .parse()
                .map_err(|_| format!("bad range end in `{part}`"))?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("not a count: `{part}`"))?);
        }
    }
    Ok(Counts(out))
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidParameter(_) => 2,
                Error::Domain(_) => {
                    eprintln!("hint: `twoq simulate` handles loads with λ >= μ");
                    3
                }
                Error::NonConvergence { .. }
                | Error::TruncationInsufficient { .. }
                | Error::GrowthEnvelope { .. } => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn quad_config(cli: &Cli) -> Result<QuadConfig, Error> {
    let mut cfg = QuadConfig::default();
    if let Some(tol) = cli.tol {
        cfg.rel_tol = tol;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn queue(cli: &Cli, rates: &Rates) -> Result<QueueParams, Error> {
    let params = QueueParams::new(rates.lambda, rates.mu)?;
    if cli.verbose {
        eprintln!("rho = {}", output::sig9(params.rho()));
    }
    Ok(params)
}

fn emitter(cli: &Cli, headers: &[&'static str]) -> std::io::Result<Emitter> {
    Emitter::new(cli.format, cli.out.as_deref(), headers)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let quad = quad_config(cli)?;
    match &cli.command {
        Command::Ett { rates, a, b, order } => {
            let params = queue(cli, rates)?;
            let orders: &[(u32, u32, &str)] = match order {
                Order::Ab => &[(*a, *b, "ab")],
                Order::Ba => &[(*b, *a, "ba")],
                Order::Both => &[(*a, *b, "ab"), (*b, *a, "ba")],
            };
            let mut results = Vec::new();
            for &(first, second, name) in orders {
                results.push((
                    name,
                    first,
                    second,
                    ett(&Scenario::new(params, first, second), &quad)?,
                ));
            }
            let mut out = emitter(cli, &["order", "first", "second", "ett", "error_estimate"])?;
            for (name, first, second, e) in results {
                out.row(vec![
                    name.into(),
                    first.into(),
                    second.into(),
                    e.value.into(),
                    e.error_estimate.into(),
                ])?;
            }
            out.finish()?;
        }
        Command::Compare { rates, a, b } => {
            let params = queue(cli, rates)?;
            let r = compare_orders(&params, *a, *b, &quad)?;
            let mut out = emitter(
                cli,
                &[
                    "a",
                    "b",
                    "ett_ab",
                    "ett_ba",
                    "gap",
                    "recommendation",
                    "case",
                ],
            )?;
            out.row(vec![
                r.a.into(),
                r.b.into(),
                r.ett_ab.into(),
                r.ett_ba.into(),
                r.gap().into(),
                r.recommended_order.to_string().into(),
                r.case_label.to_string().into(),
            ])?;
            out.finish()?;
        }
        Command::Sweep { rates, a, b } => {
            let params = queue(cli, rates)?;
            let mut out = emitter(cli, &["a", "b", "ett_ab", "ett_ba", "winner", "case"])?;
            let mut io_error = None;
            let result = sweep_each(&params, &a.0, &b.0, &quad, |row| {
                if io_error.is_none() {
                    io_error = out
                        .row(vec![
                            row.a.into(),
                            row.b.into(),
                            row.ett_ab.into(),
                            row.ett_ba.into(),
                            row.winner.to_string().into(),
                            row.case.to_string().into(),
                        ])
                        .err();
                }
                Ok(())
            });
            if let Some(e) = io_error {
                return Err(e.into());
            }
            // Close the document even on failure so earlier rows stay parseable.
            out.finish()?;
            result?;
        }
        Command::Simulate {
            rates,
            a,
            b,
            reps,
            seed,
            stream,
            method,
        } => {
            let params = queue(cli, rates)?;
            let method = match method {
                Method::TwoStage => SimMethod::TwoStage,
                Method::FullEvent => SimMethod::FullEvent,
            };
            let cfg = SimConfig::new(*reps, *seed).with_stream(*stream);
            let est = simulate_ett_with(&Scenario::new(params, *a, *b), &cfg, method)?;
            let mut out = emitter(cli, &["mean", "std_error", "replications", "seed"])?;
            out.row(vec![
                est.mean.into(),
                est.std_error.into(),
                est.replications.into(),
                est.seed.into(),
            ])?;
            out.finish()?;
        }
        Command::Curves {
            rates,
            i,
            t_max,
            steps,
        } => {
            let params = queue(cli, rates)?;
            if !(*t_max > 0.0 && t_max.is_finite()) || *steps < 1 {
                return Err(Error::InvalidParameter(
                    "--t-max must be positive and --steps at least 1".into(),
                )
                .into());
            }
            let mut out = emitter(cli, &["t", "i", "el"])?;
            for &start in &i.0 {
                for k in 0..=*steps {
                    let t = t_max * f64::from(k) / f64::from(*steps);
                    let el = expected_length(start, t, &params, &quad)?;
                    out.row(vec![t.into(), start.into(), el.value.into()])?;
                }
            }
            out.finish()?;
        }
        Command::Pij { rates, i, j, t } => {
            let params = queue(cli, rates)?;
            let mut out = emitter(cli, &["i", "j", "t", "p", "error_estimate"])?;
            for &from in &i.0 {
                for &to in &j.0 {
                    let p = transient_prob(&TransientQuery::prob(from, to, *t)?, &params, &quad)?;
                    out.row(vec![
                        from.into(),
                        to.into(),
                        (*t).into(),
                        p.value.into(),
                        p.error_estimate.into(),
                    ])?;
                }
            }
            out.finish()?;
        }
        Command::Fluid { rates, a, b } => {
            let params = queue(cli, rates)?;
            let linear = fluid_linear(&params, *a, *b)?;
            // The curve needs EL_b, which can fail for very long queues. The
            // linear value is still worth printing then.
            let curve = fluid_curve(&params, *a, *b, &quad);
            let shown = match &curve {
                Ok(c) => (*c).into(),
                Err(_) => output::Value::Missing,
            };
            let mut out = emitter(cli, &["a", "b", "linear", "curve"])?;
            out.row(vec![(*a).into(), (*b).into(), linear.into(), shown])?;
            out.finish()?;
            curve?;
        }
    }
    Ok(())
}
