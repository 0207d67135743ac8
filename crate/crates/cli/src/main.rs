//! `floerkit`: batch front-end for complex files.
//!
//! Exit codes: 0 success, 1 domain failure (validation, divergence, semicontinuity),
//! 2 input error (unreadable or malformed file, bad arguments).

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use floerkit::format::{format_chain, parse_field_name};
use floerkit::invariants::SemicontinuityReport;
use floerkit::models::{example_96_complex, random_line_family, ModelSpec};
use floerkit::reduce::normalize_columns;
use floerkit::{
    boundary_depth, emit_complex, floer_divergence_check, format_rational, gen_elementary,
    gen_random, parse_complex_with, parse_rational, persistence_barcode, rho, scan_semicontinuity,
    verify_continuation, ComplexData, DivergenceCheck, Error, Field, Operator, Overrides,
    PeriodSystem, Rational, RingMode,
};

const THREADS_ENV: &str = "FLOERKIT_THREADS";

#[derive(Parser)]
#[command(
    name = "floerkit",
    version,
    about = "Filtered Novikov complexes: validation, barcodes, spectral invariants"
)]
struct Cli {
    /// Coefficient field: f2, q or fp:<p>. Overrides the file.
    #[arg(long, global = true, value_parser = field_arg)]
    field: Option<Field>,
    /// Truncation cutoff as p/q. Overrides the file.
    #[arg(long, global = true, value_parser = rational_arg)]
    cutoff: Option<Rational>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Check ∂² = 0, grading, filtration decrease, the divergence condition and continuation data.
    Validate {
        file: PathBuf,
        /// Use N of the available samples, evenly spread (default: all).
        #[arg(long)]
        grid: Option<usize>,
        /// Seed for the random probes of the divergence check.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Barcode CSV at parameter t.
    Barcode {
        file: PathBuf,
        #[arg(long, value_parser = rational_arg)]
        t: Rational,
    },
    /// Spectral invariant of the named cycle.
    Rho {
        file: PathBuf,
        /// Comma-separated generator names summed into the cycle.
        #[arg(long)]
        cycle: String,
        /// One parameter, or a comma-separated list (CSV output).
        #[arg(long, value_parser = rational_list_arg)]
        t: RatList,
        #[arg(long)]
        json: bool,
    },
    /// Boundary depth (longest finite bar).
    Beta {
        file: PathBuf,
        #[arg(long, value_parser = rational_list_arg)]
        t: RatList,
    },
    /// Exact ρ curve over a grid of samples, with semicontinuity at t = 0.
    Scan {
        file: PathBuf,
        #[arg(long)]
        cycle: String,
        /// Comma-separated sample parameters including 0 (default: all samples).
        #[arg(long, value_parser = rational_list_arg)]
        grid: Option<RatList>,
        #[arg(long)]
        json: bool,
    },
    /// Parse a complex file and re-emit it in canonical form.
    Fmt { file: PathBuf },
    /// Emit a generated model as a complex file.
    Gen {
        #[arg(long, value_enum, default_value_t = Kind::Random)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        infinite: usize,
        /// Period vector ω₀, comma-separated (empty for the trivial lattice).
        #[arg(long, default_value = "1,2", value_parser = rational_list_arg)]
        omega0: RatList,
        /// Period vector ω₁ (default: "2,1", or ω₀ for line families).
        #[arg(long, value_parser = rational_list_arg)]
        omega1: Option<RatList>,
        #[arg(long, value_enum, default_value_t = ModeArg::Interval)]
        mode: ModeArg,
        #[arg(long, default_value = "0,8", value_parser = rational_list_arg)]
        action_range: RatList,
        #[arg(long, default_value = "1/2", value_parser = rational_arg)]
        density: Rational,
        #[arg(long, default_value = "0", value_parser = rational_list_arg)]
        samples: RatList,
        /// Line families: slopes are drawn from [−b, b].
        #[arg(long, default_value = "1/2", value_parser = rational_arg)]
        slope_bound: Rational,
        /// Line families: the norm |α| scaling the slopes.
        #[arg(long, default_value = "1", value_parser = rational_arg)]
        alpha: Rational,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Elementary,
    Random,
    Line,
    Example96,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Omega0,
    Omega1,
    Interval,
}

fn field_arg(s: &str) -> Result<Field, String> {
    parse_field_name(s).map_err(|e| e.to_string())
}

fn rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s.trim())
}

/// A comma-separated list of rationals.
#[derive(Clone, Debug)]
struct RatList(Vec<Rational>);

fn rational_list_arg(s: &str) -> Result<RatList, String> {
    if s.trim().is_empty() {
        return Ok(RatList(Vec::new()));
    }
    s.split(',')
        .map(|p| parse_rational(p.trim()))
        .collect::<Result<_, _>>()
        .map(RatList)
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match &e {
            Error::Parse { .. }
            | Error::Malformed(_)
            | Error::MissingSample(_)
            | Error::MissingContinuation { .. }
            | Error::InvalidArgument(_)
            | Error::OutOfUnitInterval { .. }
            | Error::NonPositiveCutoff
            | Error::DimensionMismatch { .. }
            | Error::InfeasibleSpec(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<(String, u8), Failure>;

fn load(path: &PathBuf, overrides: &Overrides) -> Result<ComplexData, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    parse_complex_with(&text, overrides).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
        } => input(format!("{}:{line}:{column}: {message}", path.display())),
        other => other.into(),
    })
}

fn names(cycle: &str) -> Vec<&str> {
    cycle
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn pick_grid(samples: &[Rational], n: Option<usize>) -> Vec<Rational> {
    match n {
        Some(n) if n < samples.len() => {
            if n <= 1 {
                return samples[..n].to_vec();
            }
            let last = samples.len() - 1;
            let mut idx: Vec<usize> = (0..n).map(|i| (i * last + (n - 1) / 2) / (n - 1)).collect();
            idx.dedup();
            idx.into_iter().map(|i| samples[i].clone()).collect()
        }
        _ => samples.to_vec(),
    }
}

fn cmd_validate(cx: &ComplexData, grid: Option<usize>, seed: u64) -> CmdResult {
    let grid = pick_grid(&cx.sample_grid(), grid);
    let cutoff = cx.ring().cutoff.clone();
    let per_s: Vec<Result<(String, bool), Error>> = grid
        .par_iter()
        .map(|s| {
            let mut out = String::new();
            let mut ok = true;
            let report = cx.validate(std::slice::from_ref(s))?;
            for v in &report.violations {
                ok = false;
                let _ = writeln!(out, "violation: {v}");
            }
            let op = normalize_columns(&Operator::from_matrix(cx.boundary().get(s)?));
            match floer_divergence_check(&op, &cutoff, seed)? {
                DivergenceCheck::Pass { probes, inconclusive } => {
                    let _ = writeln!(out, "s={}: divergence check passed ({probes} probes, {inconclusive} inconclusive)", format_rational(s));
                }
                DivergenceCheck::Witness(w) => {
                    ok = false;
                    let _ = writeln!(out, "s={}: divergence witness: {w}", format_rational(s));
                }
            }
            if report.ok() {
                let _ = writeln!(out, "s={}: complex ok", format_rational(s));
            }
            Ok((out, ok))
        })
        .collect();
    let mut out = String::new();
    let mut ok = true;
    for r in per_s {
        let (text, good) = r?;
        out.push_str(&text);
        ok &= good;
    }
    for b in cx.continuations() {
        if !(grid.contains(&b.s) && grid.contains(&b.t)) {
            continue;
        }
        let rep = verify_continuation(&cx.slice(&b.s)?, &cx.slice(&b.t)?, &b.data)?;
        let tag = format!(
            "continuation {} -> {}",
            format_rational(&b.s),
            format_rational(&b.t)
        );
        if rep.ok() {
            let _ = writeln!(out, "{tag}: ok");
        } else {
            ok = false;
            for v in &rep.violations {
                let basis = v
                    .basis
                    .map_or("lattice".to_string(), |j| cx.generators()[j].name.clone());
                let _ = writeln!(out, "{tag}: {:?} fails on {basis}", v.identity);
            }
        }
    }
    let _ = writeln!(out, "{}", if ok { "valid" } else { "invalid" });
    Ok((out, if ok { 0 } else { 1 }))
}

fn cmd_rho(cx: &ComplexData, cycle: &str, ts: &[Rational], as_json: bool) -> CmdResult {
    if ts.is_empty() {
        return Err(input("--t needs at least one value"));
    }
    let chain = cx.chain_of(&names(cycle))?;
    let cutoff = cx.ring().cutoff.clone();
    let results: Vec<_> = ts.par_iter().map(|t| rho(cx, &chain, t, &cutoff)).collect();
    let mut rows = Vec::new();
    for (t, r) in ts.iter().zip(results) {
        rows.push((t, r?));
    }
    let out = if as_json {
        let items: Vec<Value> = rows
            .iter()
            .map(|(t, r)| {
                json!({
                    "t": format_rational(t),
                    "value": r.value,
                    "witness": format_chain(cx, &r.witness),
                    "boundary_preimage": format_chain(cx, &r.boundary_preimage),
                    "spectrum_member": r.spectrum_member,
                    "degenerate": r.degenerate,
                })
            })
            .collect();
        let v = if items.len() == 1 {
            items[0].clone()
        } else {
            Value::Array(items)
        };
        format!("{}\n", serde_json::to_string_pretty(&v).expect("json"))
    } else if rows.len() == 1 {
        format!("{}\n", rows[0].1.value)
    } else {
        let mut s = String::from("t,rho\n");
        for (t, r) in &rows {
            let _ = writeln!(s, "{},{}", format_rational(t), r.value);
        }
        s
    };
    Ok((out, 0))
}

fn cmd_beta(cx: &ComplexData, ts: &[Rational]) -> CmdResult {
    if ts.is_empty() {
        return Err(input("--t needs at least one value"));
    }
    let results: Vec<_> = ts
        .par_iter()
        .map(|t| persistence_barcode(cx, t).map(|b| boundary_depth(&b)))
        .collect();
    let mut values = Vec::new();
    for r in results {
        values.push(r?);
    }
    let out = if values.len() == 1 {
        format!("{}\n", format_rational(&values[0]))
    } else {
        let mut s = String::from("t,beta\n");
        for (t, v) in ts.iter().zip(&values) {
            let _ = writeln!(s, "{},{}", format_rational(t), format_rational(v));
        }
        s
    };
    Ok((out, 0))
}

fn scan_json(rep: &SemicontinuityReport) -> Value {
    let spans: Vec<Value> = rep
        .spans
        .iter()
        .map(|s| {
            let (knots, values) = match &s.curve {
                Some(c) => (
                    c.knots().iter().map(format_rational).collect::<Vec<_>>(),
                    c.knots()
                        .iter()
                        .map(|k| format_rational(&c.eval(k).expect("knot in domain")))
                        .collect::<Vec<_>>(),
                ),
                None => (vec![], vec![]),
            };
            json!({
                "from": format_rational(&s.from),
                "to": format_rational(&s.to),
                "boundary_class": s.curve.is_none(),
                "knots": knots,
                "values": values,
            })
        })
        .collect();
    json!({
        "rho0": rep.rho0,
        "right_limit": rep.right_limit,
        "usc_at_zero": rep.usc_at_zero,
        "lsc_at_zero": rep.lsc_at_zero,
        "samples": rep.samples,
        "spans": spans,
    })
}

fn cmd_scan(
    cx: &ComplexData,
    cycle: &str,
    grid: Option<Vec<Rational>>,
    as_json: bool,
) -> CmdResult {
    let chain = cx.chain_of(&names(cycle))?;
    let grid = grid.unwrap_or_else(|| cx.sample_grid());
    let rep = scan_semicontinuity(cx, &chain, &grid, &cx.ring().cutoff)?;
    let out = if as_json {
        format!(
            "{}\n",
            serde_json::to_string_pretty(&scan_json(&rep)).expect("json")
        )
    } else {
        rep.to_csv()
    };
    Ok((out, if rep.usc_at_zero { 0 } else { 1 }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    cli: &Cli,
    kind: Kind,
    seed: u64,
    pairs: usize,
    infinite: usize,
    omega0: &[Rational],
    omega1: &Option<RatList>,
    mode: ModeArg,
    action_range: &[Rational],
    density: &Rational,
    samples: &[Rational],
    slope_bound: &Rational,
    alpha: &Rational,
) -> CmdResult {
    let cutoff = cli
        .cutoff
        .clone()
        .unwrap_or_else(|| Rational::from_integer(6.into()));
    if let Kind::Example96 = kind {
        return Ok((emit_complex(&example_96_complex(cutoff)?), 0));
    }
    let omega1 = match (omega1, kind) {
        (Some(w), _) => w.0.clone(),
        (None, Kind::Line) => omega0.to_vec(),
        (None, _) => {
            let mut w = omega0.to_vec();
            w.reverse();
            w
        }
    };
    let [lo, hi] = action_range else {
        return Err(input("--action-range takes two values"));
    };
    let spec = ModelSpec {
        seed,
        n_pairs: pairs,
        n_infinite: infinite,
        system: PeriodSystem::new(omega0.to_vec(), omega1)?,
        field: cli.field.unwrap_or_default(),
        mode: match mode {
            ModeArg::Omega0 => RingMode::Omega0,
            ModeArg::Omega1 => RingMode::Omega1,
            ModeArg::Interval => RingMode::Interval,
        },
        cutoff,
        action_range: (lo.clone(), hi.clone()),
        density: density.clone(),
        samples: samples.to_vec(),
        ..ModelSpec::default()
    };
    let cx = match kind {
        Kind::Elementary => gen_elementary(&spec)?,
        Kind::Random => gen_random(&spec)?,
        Kind::Line => random_line_family(&spec, slope_bound, alpha)?.complex,
        Kind::Example96 => unreachable!(),
    };
    Ok((emit_complex(&cx), 0))
}

fn run(cli: &Cli) -> CmdResult {
    let overrides = Overrides {
        field: cli.field,
        cutoff: cli.cutoff.clone(),
    };
    match &cli.command {
        Command::Validate { file, grid, seed } => {
            cmd_validate(&load(file, &overrides)?, *grid, *seed)
        }
        Command::Fmt { file } => Ok((emit_complex(&load(file, &overrides)?), 0)),
        Command::Barcode { file, t } => Ok((
            persistence_barcode(&load(file, &overrides)?, t)?.to_csv(),
            0,
        )),
        Command::Rho {
            file,
            cycle,
            t,
            json,
        } => cmd_rho(&load(file, &overrides)?, cycle, &t.0, *json),
        Command::Beta { file, t } => cmd_beta(&load(file, &overrides)?, &t.0),
        Command::Scan {
            file,
            cycle,
            grid,
            json,
        } => cmd_scan(
            &load(file, &overrides)?,
            cycle,
            grid.as_ref().map(|g| g.0.clone()),
            *json,
        ),
        Command::Gen {
            kind,
            seed,
            pairs,
            infinite,
            omega0,
            omega1,
            mode,
            action_range,
            density,
            samples,
            slope_bound,
            alpha,
        } => cmd_gen(
            cli,
            *kind,
            *seed,
            *pairs,
            *infinite,
            &omega0.0,
            omega1,
            *mode,
            &action_range.0,
            density,
            &samples.0,
            slope_bound,
            alpha,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(&cli) {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
