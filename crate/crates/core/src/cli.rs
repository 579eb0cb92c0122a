//! Command-line surface: `ascert certify|solve|validate|slice|report`.
//!
//! Exit codes: 0 success, 1 mismatch or runtime failure, 2 invalid input,
//! 3 iteration cap reached.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::cert::{certify, CertOptions};
use crate::error::{Error, Result};
use crate::frontends::{build_dual, recover_primal, DualRecovery, FlopMethod};
use crate::io::{parse_partition, parse_problem, problem_hash, write_partition, ProblemFile};
use crate::model::{format_sequence, AffineMap, MpQp, Partition, WorkingSet};
use crate::oracle::{bounding_box, ExternalOracle};
use crate::solver::{objective, solve, SolveStatus, SolverOptions};
use crate::validate::{validate, ValidationOptions, DEFAULT_SAMPLES, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MAX_K: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ascert", version, about = "Iteration-complexity certification for a primal active-set QP method")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition Theta0 by working-set sequence.
    Certify {
        problem: PathBuf,
        #[command(flatten)]
        cert: CertFlags,
        /// Write the partition file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the point solver at one parameter value.
    Solve {
        problem: PathBuf,
        /// Comma-separated parameter vector.
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        /// Solve the dual from lambda = 0 with every constraint in the working set.
        #[arg(long)]
        dual: bool,
        #[arg(long, default_value_t = 0.0)]
        eps_dual: f64,
    },
    /// Compare a partition with the point solver on random parameters.
    Validate {
        problem: PathBuf,
        /// Existing partition file; certified on the fly when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        cert: CertFlags,
    },
    /// Rasterize a 2-D slice of a partition as CSV.
    Slice {
        partition: PathBuf,
        /// 1-based parameter indices of the two axes.
        #[arg(long, default_value = "1,2")]
        dims: String,
        /// Values of every parameter (the two axis entries are ignored).
        #[arg(long, allow_hyphen_values = true)]
        fix: Option<String>,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// lo_i,hi_i,lo_j,hi_j; defaults to the bounding box of Theta0.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summary table over partition files.
    Report { partitions: Vec<PathBuf> },
}

#[derive(Args, Debug, Clone)]
struct CertFlags {
    /// Certify the dual problem (lambda0 = 0, W0 = all constraints).
    #[arg(long)]
    dual: bool,
    /// Replace quadratic region inequalities by half-plane outer approximations.
    #[arg(long)]
    relax: bool,
    /// Add primal feasibility of CSP iterates to their regions.
    #[arg(long)]
    prune: bool,
    #[arg(long)]
    eps_dual: Option<f64>,
    #[arg(long)]
    max_k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Use the projected gradient as the singular-face direction.
    #[arg(long)]
    gradient: bool,
    #[arg(long, default_value_t = FlopMethod::NullSpace)]
    flops: FlopMethod,
    /// External region oracle program for undecided quadratic regions.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::IterationCap(_) => EXIT_MAX_K,
        Error::Parse { .. }
        | Error::Dimension { .. }
        | Error::Invalid(_)
        | Error::InfeasibleStart(_)
        | Error::Unsupported(_)
        | Error::DegenerateWorkingSet(_) => EXIT_INVALID,
        _ => EXIT_MISMATCH,
    }
}

fn read_problem(path: &Path) -> Result<ProblemFile> {
    parse_problem(&std::fs::read_to_string(path)?)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad number '{t}' in '{s}'")))
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    v.parse::<bool>()
        .map_err(|_| Error::Invalid(format!("option {key} expects true or false, got '{v}'")))
}

/// The problem actually certified: primal as written, or its dual.
struct Setup {
    mp: MpQp,
    start: AffineMap,
    w0: WorkingSet,
    recovery: Option<DualRecovery>,
}

fn setup(pf: &ProblemFile, dual: bool) -> Result<Setup> {
    if !dual {
        return Ok(Setup {
            mp: pf.mp.clone(),
            start: pf.start.clone(),
            w0: pf.w0.clone(),
            recovery: None,
        });
    }
    let (d, rec) = build_dual(&pf.mp)?;
    let m = d.n();
    Ok(Setup {
        start: AffineMap::zeros(m, d.p()),
        w0: WorkingSet::all(m),
        mp: d,
        recovery: Some(rec),
    })
}

fn cert_options(pf: &ProblemFile, flags: &CertFlags, default_label: String) -> Result<CertOptions> {
    let mut o = CertOptions::default();
    for (k, v) in &pf.options {
        match k.as_str() {
            "eps_dual" => o.eps_dual = v.parse().map_err(|_| Error::Invalid(format!("bad eps_dual '{v}'")))?,
            "max_k" => o.max_k = Some(v.parse().map_err(|_| Error::Invalid(format!("bad max_k '{v}'")))?),
            "relax_quadratics" => o.relax_quadratics = parse_bool(k, v)?,
            "prune_infeasible_iterates" => o.prune_infeasible_iterates = parse_bool(k, v)?,
            "lp_gradient_direction" => o.lp_gradient_direction = parse_bool(k, v)?,
            "label" => o.label = v.clone(),
            other => return Err(Error::Invalid(format!("unknown option '{other}'"))),
        }
    }
    if o.label.is_empty() {
        o.label = default_label;
    }
    o.relax_quadratics |= flags.relax;
    o.prune_infeasible_iterates |= flags.prune;
    o.lp_gradient_direction |= flags.gradient;
    if let Some(e) = flags.eps_dual {
        o.eps_dual = e;
    }
    if flags.max_k.is_some() {
        o.max_k = flags.max_k;
    }
    o.workers = flags.workers.max(1);
    o.flop_method = flags.flops;
    if let Some(l) = &flags.label {
        o.label = l.clone();
    }
    o.oracle.external = flags.oracle.as_ref().map(|p| ExternalOracle {
        program: p.clone(),
        args: Vec::new(),
    });
    Ok(o)
}

fn default_label(path: &Path, dual: bool) -> String {
    let stem = path.file_stem().map_or("problem".into(), |s| s.to_string_lossy().into_owned());
    if dual {
        format!("{stem}-dual")
    } else {
        stem
    }
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

fn cmd_certify(problem: &Path, flags: &CertFlags, out_path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let pf = read_problem(problem)?;
    let s = setup(&pf, flags.dual)?;
    let opts = cert_options(&pf, flags, default_label(problem, flags.dual))?;
    let t0 = Instant::now();
    let part = certify(&s.mp, &s.w0, &s.start, &opts)?;
    let t = t0.elapsed().as_secs_f64();
    if let Some(p) = out_path {
        std::fs::write(p, write_partition(&part))?;
    }
    writeln!(out, "N_max={} N_reg={} t={:.3}s", part.n_max(), part.n_reg(), t)?;
    Ok(EXIT_OK)
}

fn cmd_solve(problem: &Path, theta: &str, dual: bool, eps_dual: f64, out: &mut dyn Write) -> Result<i32> {
    let pf = read_problem(problem)?;
    let s = setup(&pf, dual)?;
    let th = DVector::from_vec(parse_list(theta)?);
    if th.len() != s.mp.p() {
        return Err(Error::Invalid(format!("--theta needs {} values, got {}", s.mp.p(), th.len())));
    }
    let opts = SolverOptions {
        eps_dual,
        ..SolverOptions::default()
    };
    let log = solve(&s.mp, &th, &s.start.eval(&th), &s.w0, &opts)?;
    writeln!(out, "status={} iterations={}", log.status.name(), log.iterations)?;
    writeln!(out, "{}", format_sequence(&s.w0, &log.wschanges))?;
    if log.status == SolveStatus::Optimal {
        writeln!(out, "x={}", fmt_vec(&log.x))?;
        writeln!(out, "lambda={}", fmt_vec(&log.lam))?;
        writeln!(out, "objective={:.6}", objective(&s.mp, &th, &log.x))?;
        if let Some(rec) = &s.recovery {
            // the dual variables are the primal multipliers
            writeln!(out, "primal_x={}", fmt_vec(&recover_primal(rec, &th, &log.x)))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_validate(
    problem: &Path,
    partition: Option<&Path>,
    samples: usize,
    seed: u64,
    flags: &CertFlags,
    out: &mut dyn Write,
) -> Result<i32> {
    let pf = read_problem(problem)?;
    let s = setup(&pf, flags.dual)?;
    let opts = cert_options(&pf, flags, default_label(problem, flags.dual))?;
    let part = match partition {
        Some(p) => {
            let part = parse_partition(&std::fs::read_to_string(p)?)?;
            if part.meta.problem_hash != problem_hash(&s.mp) {
                writeln!(out, "partition was certified for a different problem (hash mismatch)")?;
                return Ok(EXIT_MISMATCH);
            }
            part
        }
        None => certify(&s.mp, &s.w0, &s.start, &opts)?,
    };
    let relaxed = part
        .meta
        .options
        .iter()
        .any(|(k, v)| k == "relax_quadratics" && v == "true");
    let vopts = ValidationOptions {
        samples,
        seed,
        exact: !relaxed,
        solver: SolverOptions {
            eps_dual: opts.eps_dual,
            lp_gradient_direction: opts.lp_gradient_direction,
            eps_sing: opts.eps_sing,
            ..SolverOptions::default()
        },
        ..ValidationOptions::default()
    };
    let rep = validate(&s.mp, &s.start, &s.w0, &part, &vopts)?;
    writeln!(out, "{}", rep.summary())?;
    for m in rep.mismatches.iter().chain(&rep.iteration_mismatches).take(10) {
        writeln!(
            out,
            "mismatch theta={} solver={:?} (k={}) regions={:?}",
            fmt_vec(&m.theta),
            m.solver_changes,
            m.solver_iterations,
            m.regions
        )?;
    }
    for th in rep.uncovered.iter().take(10) {
        writeln!(out, "uncovered theta={}", fmt_vec(th))?;
    }
    let ok = rep.passed(!relaxed);
    writeln!(out, "{}", if ok { "PASS" } else { "FAIL" })?;
    Ok(if ok { EXIT_OK } else { EXIT_MISMATCH })
}

/// Grid cell centers; cells on region boundaries go to the lowest region id.
pub fn slice_rows(
    part: &Partition,
    dims: (usize, usize),
    fix: &DVector<f64>,
    range: [f64; 4],
    grid: usize,
) -> Vec<(f64, f64, usize, Option<usize>)> {
    let (i, j) = dims;
    let mut rows = Vec::with_capacity(grid * grid);
    for a in 0..grid {
        for b in 0..grid {
            let ti = range[0] + (a as f64 + 0.5) * (range[1] - range[0]) / grid as f64;
            let tj = range[2] + (b as f64 + 0.5) * (range[3] - range[2]) / grid as f64;
            let mut th = fix.clone();
            th[i] = ti;
            th[j] = tj;
            let hit = part
                .regions
                .iter()
                .position(|r| r.theta.contains_unchecked(&th))
                .or_else(|| part.regions.iter().position(|r| r.theta.contains_closure(&th, 1e-9)));
            rows.push((ti, tj, hit.map_or(0, |h| h + 1), hit.map(|h| part.regions[h].k)));
        }
    }
    rows
}

fn cmd_slice(
    path: &Path,
    dims: &str,
    fix: Option<&str>,
    grid: usize,
    range: Option<&str>,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let part = parse_partition(&std::fs::read_to_string(path)?)?;
    let p = part.meta.p;
    let d: Vec<usize> = dims
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad --dims '{dims}'"))))
        .collect::<Result<_>>()?;
    if d.len() != 2 || d[0] == d[1] || d.iter().any(|&x| x == 0 || x > p) {
        return Err(Error::Invalid(format!("--dims needs two distinct indices in 1..={p}")));
    }
    let (i, j) = (d[0] - 1, d[1] - 1);
    let fix = match fix {
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != p {
                return Err(Error::Invalid(format!("--fix needs {p} values, got {}", v.len())));
            }
            DVector::from_vec(v)
        }
        None if p == 2 => DVector::zeros(2),
        None => return Err(Error::Invalid(format!("--fix is required when p = {p} > 2"))),
    };
    if grid == 0 {
        return Err(Error::Invalid("--grid must be positive".into()));
    }
    let range = match range {
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != 4 {
                return Err(Error::Invalid("--range needs lo_i,hi_i,lo_j,hi_j".into()));
            }
            [v[0], v[1], v[2], v[3]]
        }
        None => {
            let (lo, hi) = bounding_box(&part.meta.theta0, p)?;
            [lo[i], hi[i], lo[j], hi[j]]
        }
    };
    let mut csv = format!("theta_{},theta_{},region_id,k\n", i + 1, j + 1);
    for (a, b, id, k) in slice_rows(&part, (i, j), &fix, range, grid) {
        csv.push_str(&format!("{a},{b},{id},{}\n", k.map_or(String::new(), |k| k.to_string())));
    }
    match out_path {
        Some(p) => std::fs::write(p, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

pub fn report_table(parts: &[Partition]) -> String {
    let mut s = format!("{:<24} {:>3} {:>3} {:>3} {:>6} {:>6} {:>10}\n", "label", "p", "n", "m", "N_max", "N_reg", "max_flops");
    for part in parts {
        let m = &part.meta;
        s.push_str(&format!(
            "{:<24} {:>3} {:>3} {:>3} {:>6} {:>6} {:>10}\n",
            m.label,
            m.p,
            m.n,
            m.m,
            part.n_max(),
            part.n_reg(),
            part.max_flops()
        ));
    }
    s
}

fn cmd_report(paths: &[PathBuf], out: &mut dyn Write) -> Result<i32> {
    let parts = paths
        .iter()
        .map(|p| parse_partition(&std::fs::read_to_string(p)?))
        .collect::<Result<Vec<_>>>()?;
    out.write_all(report_table(&parts).as_bytes())?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs one command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let res = match &cli.cmd {
        Command::Certify { problem, cert, out: o } => cmd_certify(problem, cert, o.as_deref(), out),
        Command::Solve {
            problem,
            theta,
            dual,
            eps_dual,
        } => cmd_solve(problem, theta, *dual, *eps_dual, out),
        Command::Validate {
            problem,
            partition,
            samples,
            seed,
            cert,
        } => cmd_validate(problem, partition.as_deref(), *samples, *seed, cert, out),
        Command::Slice {
            partition,
            dims,
            fix,
            grid,
            range,
            out: o,
        } => cmd_slice(partition, dims, fix.as_deref(), *grid, range.as_deref(), o.as_deref(), out),
        Command::Report { partitions } => cmd_report(partitions, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
