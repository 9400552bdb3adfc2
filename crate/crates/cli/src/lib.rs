//! Command-line front end: TOML config, solve/value/verify/appell/plot-data
//! subcommands, CSV and structured-text output.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 statistically
//! inconclusive (uncertain region signs from an empirical law, or failed
//! verification bands).

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use astop::argmax_eta::TwoSidedLaw;
use astop::atransform::laws::{BrownianMarginal, ExpLaw, NegExpLaw};
use astop::atransform::{appell_poly, NuLaw};
use astop::levy_models::LevyModel;
use astop::reward::{RewardExpr, RewardTerm};
use astop::solver::{
    value_exit_formula, value_one_sided, EtaMode, McConfig, ScanGrid, StoppingProblem,
    StoppingSolution,
};
use astop::verify::{
    check_averaging, check_dominance, check_eta_law, check_martingale, perturbed_strategies,
    CheckReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "astop", about = "Optimal stopping solver for discounted Brownian rewards")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the stopping problem: boundaries, region, reports, value table.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the value function at a point.
    Value {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite and print one CSV row per check.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the coefficients of the degree-n image polynomial of y^n.
    Appell {
        /// Law spec: exp:<beta>, negexp:<beta>, or bm:<mu>,<sigma>,<t>.
        #[arg(long)]
        law: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the x, g(x), image(x) table over a lo:hi:step grid.
    PlotData {
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    process: ProcessSection,
    q: f64,
    reward: RewardSection,
    eta_mode: EtaModeRaw,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    mc: McSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessSection {
    mu: f64,
    sigma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardSection {
    terms: Vec<TermRaw>,
    #[serde(default)]
    positive_part: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRaw {
    c: f64,
    n: u32,
    r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EtaModeRaw {
    Name(String),
    Table {
        kind: String,
        a: Option<f64>,
        b: Option<f64>,
        samples: Option<usize>,
        step: Option<f64>,
    },
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    grid_lo: Option<f64>,
    grid_hi: Option<f64>,
    grid_step: Option<f64>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct McSection {
    paths: Option<usize>,
    step: Option<f64>,
    seed: Option<u64>,
    horizon_cap: Option<f64>,
}

/// Fully resolved run configuration (defaults applied).
pub struct Resolved {
    pub problem: StoppingProblem,
    pub mc: McConfig,
    pub reward: RewardExpr,
    pub model: LevyModel,
    pub eta_mode: EtaMode,
    pub grid: ScanGrid,
    pub tol: f64,
}

fn parse_config(text: &str, seed_override: Option<u64>) -> Result<Resolved, String> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| format!("config error: {e}"))?;

    let model = LevyModel::new(raw.process.mu, raw.process.sigma, raw.q)
        .map_err(|e| format!("config error: {e}"))?;
    if raw.reward.terms.is_empty() {
        return Err("config error: reward.terms must be non-empty".to_string());
    }
    let terms: Vec<RewardTerm> = raw
        .reward
        .terms
        .iter()
        .map(|t| RewardTerm::new(t.c, t.n, t.r))
        .collect();
    let reward = RewardExpr::new(terms, raw.reward.positive_part)
        .map_err(|e| format!("config error: reward: {e}"))?;

    let mc_step = raw.mc.step.unwrap_or(0.01);
    let eta_mode = match &raw.eta_mode {
        EtaModeRaw::Name(name) => match name.as_str() {
            "monotone_sup" => EtaMode::MonotoneSup,
            "monotone_inf" => EtaMode::MonotoneInf,
            other => {
                return Err(format!(
                    "config error: eta_mode '{other}' needs a table form or is unknown \
                     (expected monotone_sup, monotone_inf, two_sided, empirical)"
                ))
            }
        },
        EtaModeRaw::Table {
            kind,
            a,
            b,
            samples,
            step,
        } => match kind.as_str() {
            "monotone_sup" => EtaMode::MonotoneSup,
            "monotone_inf" => EtaMode::MonotoneInf,
            "two_sided" => {
                let a = a.ok_or("config error: eta_mode.two_sided requires a")?;
                let b = b.ok_or("config error: eta_mode.two_sided requires b")?;
                EtaMode::TwoSided { a, b }
            }
            "empirical" => EtaMode::Empirical {
                samples: samples.unwrap_or(2000),
                step: step.unwrap_or(mc_step),
            },
            other => return Err(format!("config error: unknown eta_mode kind '{other}'")),
        },
    };

    // Grid defaults: centred on the routing threshold (two-sided) or the
    // origin, wide enough that the exponential tails decide the sign, with a
    // step tied to the image's oscillation scale (term rates vs extremum
    // rate). Empirical mode gets a narrower default since every node costs a
    // simulation batch.
    let beta = model.extrema_rates().beta_plus;
    let center = match eta_mode {
        EtaMode::TwoSided { a, b } => (b / a).ln() / (a + b),
        _ => 0.0,
    };
    let halfwidth = match eta_mode {
        EtaMode::Empirical { .. } => 10.0 / beta,
        _ => 50.0 / beta,
    };
    let max_rate = reward
        .terms()
        .iter()
        .map(|t| t.rate.abs())
        .fold(0.0, f64::max);
    let default_step = match eta_mode {
        EtaMode::Empirical { .. } => 0.25 / beta,
        _ => 0.25 / (1.0 + max_rate / beta),
    };
    let grid = ScanGrid {
        lo: raw.solver.grid_lo.unwrap_or(center - halfwidth),
        hi: raw.solver.grid_hi.unwrap_or(center + halfwidth),
        step: raw.solver.grid_step.unwrap_or(default_step),
    };
    let tol = raw.solver.tol.unwrap_or(1e-10);

    let mc = McConfig {
        paths: raw.mc.paths.unwrap_or(100_000),
        step: mc_step,
        seed: seed_override.or(raw.mc.seed).unwrap_or(42),
        horizon_cap: raw.mc.horizon_cap,
    };
    if mc.paths == 0 {
        return Err("config error: mc.paths must be positive".to_string());
    }
    if !(mc.step.is_finite() && mc.step > 0.0) {
        return Err(format!("config error: mc.step must be positive, got {}", mc.step));
    }
    if let Some(cap) = mc.horizon_cap {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(format!(
                "config error: mc.horizon_cap must be positive, got {cap}"
            ));
        }
    }

    let problem = StoppingProblem::new(model, reward.clone(), eta_mode, grid, tol, mc.seed)
        .map_err(|e| format!("config error: {e}"))?;

    Ok(Resolved {
        problem,
        mc,
        reward,
        model,
        eta_mode,
        grid,
        tol,
    })
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// Locale-independent decimal text with 12 significant digits.
fn num(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.11e}")
}

fn eta_mode_text(mode: EtaMode) -> String {
    match mode {
        EtaMode::MonotoneSup => "monotone_sup".into(),
        EtaMode::MonotoneInf => "monotone_inf".into(),
        EtaMode::TwoSided { a, b } => format!("two_sided(a={a},b={b})"),
        EtaMode::Empirical { samples, step } => format!("empirical(samples={samples},step={step})"),
    }
}

fn echo_config(out: &mut String, r: &Resolved) {
    out.push_str("[config]\n");
    let _ = writeln!(out, "process.mu={}", num(r.model.mu()));
    let _ = writeln!(out, "process.sigma={}", num(r.model.sigma()));
    let _ = writeln!(out, "q={}", num(r.model.q()));
    let terms: Vec<String> = r
        .reward
        .terms()
        .iter()
        .map(|t| format!("{{c={},n={},r={}}}", num(t.coef), t.power, num(t.rate)))
        .collect();
    let _ = writeln!(out, "reward.terms=[{}]", terms.join(","));
    let _ = writeln!(out, "reward.positive_part={}", r.reward.is_positive_part());
    let _ = writeln!(out, "eta_mode={}", eta_mode_text(r.eta_mode));
    let _ = writeln!(out, "solver.grid_lo={}", num(r.grid.lo));
    let _ = writeln!(out, "solver.grid_hi={}", num(r.grid.hi));
    let _ = writeln!(out, "solver.grid_step={}", num(r.grid.step));
    let _ = writeln!(out, "solver.tol={}", num(r.tol));
    let _ = writeln!(out, "mc.paths={}", r.mc.paths);
    let _ = writeln!(out, "mc.step={}", num(r.mc.step));
    let _ = writeln!(out, "mc.seed={}", r.mc.seed);
    let cap = r.mc.horizon_cap.unwrap_or((1e8f64).ln() / r.model.q());
    let _ = writeln!(out, "mc.horizon_cap={}", num(cap));
}

/// Value-function evaluator for the table: the closed-form integral in
/// monotone modes, the discounted first-exit identity otherwise.
fn table_value(r: &Resolved, s: &StoppingSolution, x: f64) -> Result<f64, String> {
    match r.eta_mode {
        EtaMode::MonotoneSup | EtaMode::MonotoneInf => {
            value_one_sided(&r.problem, s, x).map_err(|e| e.to_string())
        }
        _ => value_exit_formula(&r.problem, s, x).map_err(|e| e.to_string()),
    }
}

fn solve_document(r: &Resolved) -> Result<(i32, String), String> {
    let solution = r.problem.solve().map_err(|e| format!("solve error: {e}"))?;
    let mut out = String::new();
    out.push_str("# astop solve result\n");
    let inconclusive = !solution.uncertain_nodes.is_empty();
    let _ = writeln!(
        out,
        "status={}",
        if inconclusive { "inconclusive" } else { "ok" }
    );
    echo_config(&mut out, r);

    out.push_str("[boundaries]\nx,residual\n");
    for b in &solution.boundaries {
        let _ = writeln!(out, "{},{}", num(b.x), num(b.residual));
    }
    out.push_str("[region]\nlo,hi\n");
    for iv in &solution.region {
        let _ = writeln!(out, "{},{}", num(iv.lo), num(iv.hi));
    }
    out.push_str("[comonotone]\ninterval_lo,interval_hi,cells_checked,violations,pass\n");
    for rep in &solution.comonotone.per_interval {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(rep.interval.lo),
            num(rep.interval.hi),
            rep.cells_checked,
            rep.violations.len(),
            rep.pass()
        );
    }
    out.push_str("[uncertain]\nx\n");
    for x in &solution.uncertain_nodes {
        let _ = writeln!(out, "{}", num(*x));
    }

    out.push_str("[table]\nx,g,image,value\n");
    let span = r.grid.hi - r.grid.lo;
    let n = ((span / r.grid.step).round() as usize).max(1);
    for i in 0..=n {
        let x = r.grid.lo + span * i as f64 / n as f64;
        let g = r.reward.eval(x);
        let image = r.problem.image_at(x).map_err(|e| e.to_string())?;
        let v = table_value(r, &solution, x)?;
        let _ = writeln!(out, "{},{},{},{}", num(x), num(g), num(image), num(v));
    }
    Ok((
        if inconclusive {
            EXIT_INCONCLUSIVE
        } else {
            EXIT_OK
        },
        out,
    ))
}

fn value_document(r: &Resolved, x: f64) -> Result<(i32, String), String> {
    let solution = r.problem.solve().map_err(|e| format!("solve error: {e}"))?;
    let method = match r.eta_mode {
        EtaMode::MonotoneSup | EtaMode::MonotoneInf => "closed_form_integral",
        _ => "exit_formula",
    };
    let v = table_value(r, &solution, x)?;
    let mut out = String::from("x,value,method\n");
    let _ = writeln!(out, "{},{},{}", num(x), num(v), method);
    Ok((EXIT_OK, out))
}

fn reports_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("name,x,estimate,target,stderr,allowance,pass\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.name,
            num(r.point),
            num(r.estimate),
            num(r.target),
            num(r.stderr),
            num(r.allowance),
            r.pass
        );
    }
    out
}

fn averaging_suite(r: &Resolved) -> Result<Vec<CheckReport>, String> {
    let rates = r.model.extrema_rates();
    let mut laws: Vec<Box<dyn NuLaw>> = vec![
        Box::new(ExpLaw::new(rates.beta_plus).map_err(|e| e.to_string())?),
        Box::new(NegExpLaw::new(rates.beta_minus).map_err(|e| e.to_string())?),
        Box::new(BrownianMarginal::from_model(&r.model, 1.0).map_err(|e| e.to_string())?),
    ];
    if let EtaMode::TwoSided { a, b } = r.eta_mode {
        let x = (b / a).ln() / (a + b) - 5.0;
        laws.push(Box::new(
            TwoSidedLaw::new(a, b, r.model.q(), x).map_err(|e| e.to_string())?,
        ));
    }
    let y_grid = [-10.0, -5.0, 0.0, 5.0, 10.0];
    let mut out = Vec::new();
    for law in &laws {
        // Skip laws whose MGF domain does not cover every term rate.
        let (lo, hi) = law.validity();
        if r.reward.terms().iter().any(|t| t.rate <= lo || t.rate >= hi) {
            continue;
        }
        out.extend(
            check_averaging(law.as_ref(), &r.reward, &y_grid, r.mc.paths, r.mc.seed)
                .map_err(|e| e.to_string())?,
        );
    }
    Ok(out)
}

fn martingale_suite(r: &Resolved) -> Result<Vec<CheckReport>, String> {
    check_martingale(&r.model, &r.reward, &[0.5, 1.0, 2.0], r.mc.paths, r.mc.seed)
        .map_err(|e| e.to_string())
}

fn dominance_suite(r: &Resolved) -> Result<Vec<CheckReport>, String> {
    let solution = r.problem.solve().map_err(|e| e.to_string())?;
    let strategies = perturbed_strategies(&solution);
    let center = match r.eta_mode {
        EtaMode::TwoSided { a, b } => (b / a).ln() / (a + b),
        _ => 0.0,
    };
    let mut xs: Vec<f64> = [center - 10.0, 0.0, center + 10.0]
        .iter()
        .map(|x| x.clamp(r.grid.lo, r.grid.hi))
        .collect();
    xs.dedup();
    check_dominance(&r.problem, &solution, &strategies, &xs, &r.mc).map_err(|e| e.to_string())
}

fn etalaw_suite(r: &Resolved) -> Result<Vec<CheckReport>, String> {
    let EtaMode::TwoSided { a, b } = r.eta_mode else {
        return Err("config error: suite etalaw requires eta_mode two_sided".to_string());
    };
    let t = (b / a).ln() / (a + b);
    let s = (2.0 * r.model.q()).sqrt();
    let xs = [t - 6.0, t - 1.0, t + 5.0, t + 10.0];
    let us = [-s / 2.0, -s / 4.0, s / 4.0, s / 2.0];
    check_eta_law(&r.problem, &xs, &us, r.mc.paths, r.mc.step, r.mc.seed)
        .map_err(|e| e.to_string())
}

fn verify_document(r: &Resolved, suite: &str) -> Result<(i32, String), String> {
    let reports = match suite {
        "averaging" => averaging_suite(r)?,
        "martingale" => martingale_suite(r)?,
        "dominance" => dominance_suite(r)?,
        "etalaw" => etalaw_suite(r)?,
        "all" => {
            let mut all = averaging_suite(r)?;
            all.extend(martingale_suite(r)?);
            all.extend(dominance_suite(r)?);
            if matches!(r.eta_mode, EtaMode::TwoSided { .. }) {
                all.extend(etalaw_suite(r)?);
            }
            all
        }
        other => return Err(format!("unknown suite '{other}'")),
    };
    let all_pass = reports.iter().all(|c| c.pass);
    Ok((
        if all_pass { EXIT_OK } else { EXIT_INCONCLUSIVE },
        reports_csv(&reports),
    ))
}

fn parse_law_spec(spec: &str) -> Result<Box<dyn NuLaw>, String> {
    let (kind, args) = spec
        .split_once(':')
        .ok_or_else(|| format!("bad law spec '{spec}' (expected kind:params)"))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad law parameter '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match (kind, nums.as_slice()) {
        ("exp", [beta]) => Ok(Box::new(ExpLaw::new(*beta).map_err(|e| e.to_string())?)),
        ("negexp", [beta]) => Ok(Box::new(NegExpLaw::new(*beta).map_err(|e| e.to_string())?)),
        ("bm", [mu, sigma, t]) => {
            let model = LevyModel::new(*mu, *sigma, 1.0).map_err(|e| e.to_string())?;
            Ok(Box::new(
                BrownianMarginal::from_model(&model, *t).map_err(|e| e.to_string())?,
            ))
        }
        _ => Err(format!(
            "bad law spec '{spec}' (expected exp:<beta>, negexp:<beta>, or bm:<mu>,<sigma>,<t>)"
        )),
    }
}

fn appell_document(spec: &str, n: u32) -> Result<(i32, String), String> {
    let law = parse_law_spec(spec)?;
    let coeffs = appell_poly(law.as_ref(), n).map_err(|e| e.to_string())?;
    let mut out = String::from("degree,coefficient\n");
    for (d, c) in coeffs.iter().enumerate() {
        let _ = writeln!(out, "{},{}", d, num(*c));
    }
    Ok((EXIT_OK, out))
}

fn parse_grid_spec(spec: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("bad grid spec '{spec}' (expected lo:hi:step)"));
    }
    let vals: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|e| format!("bad grid number '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = (vals[0], vals[1], vals[2]);
    if !(step > 0.0 && lo < hi) {
        return Err(format!("bad grid spec '{spec}': need lo < hi and step > 0"));
    }
    Ok((lo, hi, step))
}

fn plot_document(r: &Resolved, grid: &str) -> Result<(i32, String), String> {
    let (lo, hi, step) = parse_grid_spec(grid)?;
    let mut out = String::from("x,g,image\n");
    let n = ((hi - lo) / step).round() as usize;
    for i in 0..=n {
        let x = lo + i as f64 * step;
        if x > hi + 0.5 * step {
            break;
        }
        let g = r.reward.eval(x);
        let image = r.problem.image_at(x).map_err(|e| e.to_string())?;
        let _ = writeln!(out, "{},{},{}", num(x), num(g), num(image));
    }
    Ok((EXIT_OK, out))
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn load(config: &PathBuf, seed: Option<u64>) -> Result<Resolved, String> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| format!("cannot read config {}: {e}", config.display()))?;
    parse_config(&text, seed)
}

fn deliver(result: (i32, String), out: Option<&PathBuf>) -> (i32, String) {
    let (code, doc) = result;
    match out {
        Some(path) => match std::fs::write(path, &doc) {
            Ok(()) => (code, format!("wrote {}\n", path.display())),
            Err(e) => (EXIT_ERROR, format!("cannot write {}: {e}\n", path.display())),
        },
        None => (code, doc),
    }
}

/// Runs one parsed command; returns (exit code, text output).
pub fn run(cli: Cli) -> (i32, String) {
    let outcome = match &cli.command {
        Command::Solve { config, seed, out } => {
            (load(config, *seed).and_then(|r| solve_document(&r)), out)
        }
        Command::Value {
            x,
            config,
            seed,
            out,
        } => (load(config, *seed).and_then(|r| value_document(&r, *x)), out),
        Command::Verify {
            suite,
            config,
            seed,
            paths,
            out,
        } => (
            load(config, *seed).and_then(|mut r| {
                if let Some(p) = paths {
                    r.mc.paths = *p;
                }
                verify_document(&r, suite)
            }),
            out,
        ),
        Command::Appell { law, n, out } => (appell_document(law, *n), out),
        Command::PlotData { grid, config, out } => {
            (load(config, None).and_then(|r| plot_document(&r, grid)), out)
        }
    };
    match outcome {
        (Ok(result), out) => deliver(result, out.as_ref()),
        (Err(msg), _) => (EXIT_ERROR, format!("error: {msg}\n")),
    }
}

/// Test-friendly entry point: parse argv (without the binary name) and run.
pub fn run_args<I, S>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let mut argv: Vec<std::ffi::OsString> = vec!["astop".into()];
    argv.extend(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli),
        Err(e) => (EXIT_ERROR, e.to_string()),
    }
}
