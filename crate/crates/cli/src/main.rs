use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spopf_core::case::{parse_case_json, parse_case_matpower, ControlKind, NetworkCase, QuadraticModel};
use spopf_core::diagnostics::{check_derivatives, CheckOptions, Fault};
use spopf_core::homotopy::HomotopyStatus;
use spopf_core::path::fmt17;
use spopf_core::powerflow::{solve_power_flow, PowerFlowOptions};
use spopf_core::scenario::{run_solve, Scenario, TraceLine};

#[derive(Parser)]
#[command(name = "spopf", version, about = "Shortest feasible paths between AC-OPF operating points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a shortest feasible path for a scenario.
    Solve(Box<SolveArgs>),
    /// Solve a single power flow.
    Powerflow(PowerflowArgs),
    /// Compare analytic derivatives with finite differences.
    CheckDerivatives(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Case file (.m or .json); defaults to the scenario's `case`.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report.json, path.csv and trace.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write one JSON line per inner iteration to trace.jsonl.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    enable_det_constraint: bool,
    #[arg(long)]
    no_flow_limits: bool,
    #[arg(long)]
    no_angle_limits: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu_hi: Option<f64>,
    #[arg(long)]
    mu_lo: Option<f64>,
    #[arg(long)]
    eps_st: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eps_tol: Option<f64>,
    #[arg(long)]
    iter_max: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps_ls: Option<f64>,
    #[arg(long)]
    rho_max: Option<f64>,
}

#[derive(Args)]
struct PowerflowArgs {
    #[arg(long)]
    case: PathBuf,
    /// Control assignments, e.g. `P2=1.63,P3=0.85,V1=1.04`. Voltages are
    /// magnitudes; unlisted voltages take the case setpoints.
    #[arg(long)]
    u: String,
    #[arg(long, value_enum, default_value = "pu")]
    power_unit: Unit,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Leave the determinant constraint out of the checked set.
    #[arg(long)]
    no_det: bool,
    /// Corrupt an analytic quantity on purpose (self-test of the checks).
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Pu,
    Mw,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Hessian,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(*a),
        Command::Powerflow(a) => powerflow(a),
        Command::CheckDerivatives(a) => check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn load_case(path: &Path) -> Result<NetworkCase, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => parse_case_json(&text)?,
        _ => parse_case_matpower(&text)?,
    };
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.case)
}

fn solve(a: SolveArgs) -> CliResult {
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let text = fs::read_to_string(&a.scenario).map_err(|e| format!("{}: {e}", a.scenario.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    apply_overrides(&mut scenario, &a);
    let case_path = a
        .case
        .clone()
        .or_else(|| scenario.case_path(&a.scenario))
        .ok_or("no case given: pass --case or set `case` in the scenario")?;
    let case = load_case(&case_path)?;

    fs::create_dir_all(&a.out)?;
    let mut trace = if a.trace {
        Some(BufWriter::new(fs::File::create(a.out.join("trace.jsonl"))?))
    } else {
        None
    };
    let mut write_err: Option<std::io::Error> = None;
    let mut observer = |line: &TraceLine| {
        if let Some(w) = trace.as_mut() {
            let r = serde_json::to_writer(&mut *w, line)
                .map_err(std::io::Error::from)
                .and_then(|_| w.write_all(b"\n"));
            if let Err(e) = r {
                write_err.get_or_insert(e);
            }
        }
    };
    let run = run_solve(&case, &scenario, Some(&mut observer))?;
    if let Some(mut w) = trace {
        w.flush()?;
    }
    if let Some(e) = write_err {
        return Err(e.into());
    }

    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&run.report)?)?;
    let csv = BufWriter::new(fs::File::create(a.out.join("path.csv"))?);
    run.path.write_csv(&run.names, csv)?;

    let r = &run.report;
    println!("status: {:?}", r.status);
    println!("max violation before: {}", fmt17(r.max_violation_before));
    println!("max violation after:  {}", fmt17(r.max_violation_after));
    println!("residual |v|_inf:     {}", fmt17(r.residual_relaxation));
    println!("path-diff%: {:.2}  obj-fun-gap%: {:.2}", r.path_diff_pct, r.obj_fun_gap_pct);
    println!("wall time: {:.3} s", r.wall_time_s);
    Ok(match r.status {
        HomotopyStatus::Success => ExitCode::SUCCESS,
        HomotopyStatus::StagnationFailure => ExitCode::from(2),
        HomotopyStatus::InnerFailure => ExitCode::from(1),
    })
}

fn apply_overrides(s: &mut Scenario, a: &SolveArgs) {
    if a.enable_det_constraint {
        s.constraints.determinant = true;
    }
    if a.no_flow_limits {
        s.constraints.flow_limits = false;
    }
    if a.no_angle_limits {
        s.constraints.angle_limits = false;
    }
    if let Some(k) = a.k {
        s.k = k;
        s.t = None;
    }
    let h = &mut s.homotopy;
    let ipm = &mut s.ipm;
    for (dst, src) in [
        (&mut h.beta, a.beta),
        (&mut h.mu_hi, a.mu_hi),
        (&mut h.mu_lo, a.mu_lo),
        (&mut h.eps_st, a.eps_st),
        (&mut ipm.eps_tol, a.eps_tol),
        (&mut ipm.tau, a.tau),
        (&mut ipm.gamma, a.gamma),
        (&mut ipm.eta, a.eta),
        (&mut ipm.eps_ls, a.eps_ls),
        (&mut ipm.rho_max, a.rho_max),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    if let Some(p) = a.patience {
        h.patience = p;
    }
    if let Some(n) = a.iter_max {
        ipm.iter_max = n;
    }
}

fn parse_assignments(text: &str) -> Result<Vec<(String, f64)>, String> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| format!("expected NAME=VALUE, got {item:?}"))?;
            let v: f64 = v.trim().parse().map_err(|e| format!("{item:?}: {e}"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn powerflow(a: PowerflowArgs) -> CliResult {
    let case = load_case(&a.case)?;
    let model = QuadraticModel::build(&case)?;
    let given = parse_assignments(&a.u)?;
    let scale = match a.power_unit {
        Unit::Pu => 1.0,
        Unit::Mw => 1.0 / case.base_mva,
    };
    let mut u = Vec::with_capacity(model.controls().len());
    for spec in model.controls() {
        let name = spec.name();
        let v = match (given.iter().find(|(k, _)| *k == name), spec.kind) {
            (Some((_, v)), ControlKind::ActivePower) => v * scale,
            (Some((_, v)), ControlKind::VoltageSquared) => v * v,
            (None, ControlKind::VoltageSquared) => {
                let g = case.generator_at(spec.bus).ok_or("generator bus without generator")?;
                g.vset * g.vset
            }
            (None, ControlKind::ActivePower) => return Err(format!("missing value for {name}").into()),
        };
        u.push(v);
    }
    for (k, _) in &given {
        if !model.controls().iter().any(|c| c.name() == *k) {
            return Err(format!("unknown control {k}").into());
        }
    }
    let opts = PowerFlowOptions {
        tol: a.tol,
        max_iter: a.max_iter,
    };
    let r = solve_power_flow(&model, &u, &model.flat_start(&u), opts);
    let n = model.bus_count();
    let buses: Vec<_> = (0..n)
        .map(|b| {
            let (p, q) = model.injection(b);
            let (e, f) = (r.x[b], r.x[n + b]);
            json!({
                "bus": case.buses[b].id,
                "vm": (e * e + f * f).sqrt(),
                "va_deg": f.atan2(e).to_degrees(),
                "p_inj": p.eval(&r.x),
                "q_inj": q.eval(&r.x),
            })
        })
        .collect();
    let out = json!({
        "converged": r.converged,
        "iterations": r.iterations,
        "residual_inf": r.residual_inf,
        "residual_history": r.residual_history,
        "buses": buses,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn check(a: CheckArgs) -> CliResult {
    let case = load_case(&a.case)?;
    let mut opts = CheckOptions {
        seed: a.seed,
        points: a.points,
        fault: a.inject_fault.map(|FaultArg::Hessian| Fault::Hessian),
        ..CheckOptions::default()
    };
    opts.constraints.determinant = !a.no_det;
    let report = check_derivatives(&case, &opts)?;
    println!("{:<14} {:>5} {:>12} {:>10}  result", "family", "order", "max rel err", "threshold");
    for f in &report.families {
        println!(
            "{:<14} {:>5} {:>12.3e} {:>10.0e}  {}",
            f.family,
            f.order,
            f.max_rel_error,
            f.threshold,
            if f.pass { "ok" } else { "FAIL" }
        );
    }
    println!("{} points", report.points);
    Ok(if report.pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
