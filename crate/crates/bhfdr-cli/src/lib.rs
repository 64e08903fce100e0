//! Command implementations behind the `bhfdr` binary.
//!
//! Every command renders to a [`Output`] (stdout text, stderr diagnostics and
//! an exit code) instead of printing directly, so the commands can be driven
//! from tests.
//!
//! Exit codes: 0 success (including degenerate designs, which are flagged in
//! the output), 1 reference comparison outside tolerance, 2 usage or
//! validation error, 3 numerical infeasibility, 4 internal numerical failure.

use std::fmt::Write as _;
use std::path::PathBuf;

use bhfdr::analytic::{
    clt_variances, power_partials, power_report, reduced_fdr_closed, reduced_fdr_design, reduced_fdr_numeric,
    sample_size_avg, sample_size_lambda, AlphaMode, ParamRange, PartialRanges, ReportOptions, DEFAULT_N_MAX,
};
use bhfdr::grid::{compare_report, run_grid, GridConfig, ReferenceTable, ResultRow, Tolerance, Tolerances};
use bhfdr::montecarlo::{run_replicates, summarize, Correlation, SimConfig, DEFAULT_SEED};
use bhfdr::specfun::{norm_cdf, norm_pdf};
use bhfdr::{DesignPoint, Error, Family};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "BHFDR_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "bhfdr", version, about = "Power, sample size and FDF bounds for the BH step-up procedure")]
pub struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic report for one design.
    Power(PowerArgs),
    /// Smallest per-group n reaching a target power.
    Samplesize(SampleSizeArgs),
    /// Reduced FDRs that bound the false-discovery fraction.
    FdrBound(FdrBoundArgs),
    /// Monte-Carlo simulation of one design.
    Simulate(SimulateArgs),
    /// Parameter sweep from a TOML config.
    Grid(GridArgs),
    /// Plot data for the density of the true-positive fraction.
    Density(DensityArgs),
    /// Range-scaled partial derivatives of the average power.
    Partials(PartialsArgs),
}

/// Design parameters shared by every command.
#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Number of simultaneous tests.
    #[arg(long)]
    pub m: u64,
    /// Proportion of non-null tests.
    #[arg(long, conflicts_with = "expected_m", required_unless_present = "expected_m")]
    pub r: Option<f64>,
    /// Expected number of non-null tests (alternative to --r).
    #[arg(long = "expected-m")]
    pub expected_m: Option<f64>,
    /// Nominal FDR of the BH procedure.
    #[arg(long)]
    pub fdr: f64,
    /// Standardised effect size.
    #[arg(long)]
    pub theta: f64,
    /// Test-statistic family.
    #[arg(long, default_value = "folded_t")]
    pub family: Family,
}

impl DesignArgs {
    fn design(&self, n: u32) -> DesignPoint {
        let r = match (self.r, self.expected_m) {
            (Some(r), _) => r,
            (None, Some(e)) => e / self.m as f64,
            (None, None) => f64::NAN,
        };
        DesignPoint { m: self.m, r, f: self.fdr, theta: self.theta, n, family: self.family }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaModeArg {
    Recompute,
    Fixed,
}

impl From<AlphaModeArg> for AlphaMode {
    fn from(a: AlphaModeArg) -> Self {
        match a {
            AlphaModeArg::Recompute => AlphaMode::Recompute,
            AlphaModeArg::Fixed => AlphaMode::Fixed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Per-group sample size.
    #[arg(long)]
    pub n: u32,
    /// λ thresholds for λ-power (repeatable).
    #[arg(long = "lambda", default_values_t = [0.75, 0.9])]
    pub lambdas: Vec<f64>,
    /// Skip the finite-m lower bound.
    #[arg(long)]
    pub no_lower_bound: bool,
    /// Treatment of α when solving for f'.
    #[arg(long, value_enum, default_value = "recompute")]
    pub alpha_mode: AlphaModeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PowerKind {
    /// Average power.
    Avg,
    /// λ-power.
    Lambda,
}

#[derive(Debug, Clone, Args)]
pub struct SampleSizeArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Target power in (0, 1).
    #[arg(long)]
    pub target: f64,
    #[arg(long, value_enum, default_value = "avg")]
    pub kind: PowerKind,
    /// λ for --kind lambda.
    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,
    /// Upper limit of the sample-size search.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: u32,
}

#[derive(Debug, Clone, Args)]
pub struct FdrBoundArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Per-group sample size (required unless --target-power is given).
    #[arg(long, required_unless_present = "target_power")]
    pub n: Option<u32>,
    /// Size the study for this power and report n00, n01, n10, n11.
    #[arg(long)]
    pub target_power: Option<f64>,
    /// λ of the λ-power sample sizes.
    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,
    /// Treatment of α when solving for f'.
    #[arg(long, value_enum, default_value = "recompute")]
    pub alpha_mode: AlphaModeArg,
    /// Upper limit of the sample-size search.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: u32,
}

/// Simulation settings shared by `simulate` and `density`.
#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Monte-Carlo replicates.
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Base RNG seed; replicate k uses stream k.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Within-block correlation for the subject-level generator.
    #[arg(long, requires = "block_size")]
    pub rho: Option<f64>,
    /// Tests per correlated block (required with --rho).
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

impl SimArgs {
    fn correlation(&self) -> Option<Correlation> {
        self.rho.map(|rho| Correlation { rho, block_size: self.block_size.unwrap_or(1) })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Per-group sample size.
    #[arg(long)]
    pub n: u32,
    #[command(flatten)]
    pub sim: SimArgs,
    /// λ thresholds for the empirical λ-power (repeatable).
    #[arg(long = "lambda", default_values_t = [0.75, 0.9])]
    pub lambdas: Vec<f64>,
    /// Points x for P{FDF ≥ x} (repeatable; default f0 of the design).
    #[arg(long = "fdf-excess")]
    pub fdf_excess: Vec<f64>,
    /// Run BH at this FDR instead of --fdr (e.g. a reduced FDR f'); the
    /// FDF tail default stays at f0 of --fdr.
    #[arg(long)]
    pub bh_fdr: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// TOML sweep description.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads (overrides the config).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Reference table to compare against (repeatable).
    #[arg(long)]
    pub compare: Vec<PathBuf>,
    /// Absolute tolerance for analytic columns.
    #[arg(long, default_value_t = 5e-4)]
    pub tolerance: f64,
    /// Tolerance for simulated columns, in Monte-Carlo standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub se_multiple: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Per-group sample size.
    #[arg(long)]
    pub n: u32,
    /// Grid points per side of π_pi.
    #[arg(long, default_value_t = 200)]
    pub half_points: usize,
    /// Grid half-width in CLT standard deviations.
    #[arg(long, default_value_t = 6.0)]
    pub sds: f64,
    /// Add a simulated histogram column.
    #[arg(long)]
    pub simulate: bool,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PartialsArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Per-group sample size.
    #[arg(long)]
    pub n: u32,
    /// Range of r as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "0.025,0.5")]
    pub r_range: (f64, f64),
    /// Range of θ as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "0.6,1.5")]
    pub theta_range: (f64, f64),
    /// Range of f as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "0.01,0.3")]
    pub f_range: (f64, f64),
    /// Difference step as a fraction of each range width.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo < hi) {
        return Err(format!("range needs LO < HI, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// Rendered result of a command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain { .. }
        | Error::Config(_)
        | Error::Schema(_)
        | Error::Boundary(_)
        | Error::EmptyGrid(_)
        | Error::Io(_) => 2,
        Error::InfeasibleBound { .. } | Error::SearchExhausted { .. } | Error::DegenerateDesign => 3,
        Error::Numerical { .. } => 4,
    }
}

fn failure(e: &Error) -> Output {
    let mut stderr = format!("error: {e}\n");
    if let Error::InfeasibleBound { min_feasible_m: Some(m), .. } = e {
        let _ = writeln!(stderr, "hint: the bound becomes feasible for m >= {m}");
    }
    Output { stdout: String::new(), stderr, code: exit_code(e) }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serialisable output") + "\n"
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Output {
    let res = match &cli.command {
        Command::Power(a) => cmd_power(a, cli.json),
        Command::Samplesize(a) => cmd_samplesize(a, cli.json),
        Command::FdrBound(a) => cmd_fdr_bound(a, cli.json),
        Command::Simulate(a) => cmd_simulate(a, cli.json),
        Command::Grid(a) => cmd_grid(a, cli.json),
        Command::Density(a) => cmd_density(a, cli.json),
        Command::Partials(a) => cmd_partials(a, cli.json),
    };
    res.unwrap_or_else(|e| failure(&e))
}

/// Parses `args` (including the program name) and runs the command.
/// Usage errors map to exit code 2, `--help`/`--version` to 0.
pub fn run_args<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                Output { stdout: text, stderr: String::new(), code }
            } else {
                Output { stdout: String::new(), stderr: text, code }
            }
        }
    }
}

fn analytic_row(dp: &DesignPoint, opts: &ReportOptions<f64>) -> bhfdr::Result<ResultRow> {
    let report = power_report(dp, opts)?;
    Ok(ResultRow {
        design: *dp,
        target_power: None,
        fdf: None,
        report: Some(report),
        sim: None,
        correlation: None,
        error: None,
        wall_time_s: None,
    })
}

fn render_report(out: &mut String, row: &ResultRow) {
    let d = &row.design;
    let _ = writeln!(
        out,
        "design: m={} r={} (E[M]={}) f={} theta={} n={} family={}",
        d.m,
        d.r,
        d.expected_m(),
        d.f,
        d.theta,
        d.n,
        d.family
    );
    let Some(r) = &row.report else { return };
    if r.degenerate {
        let _ = writeln!(out, "DEGENERATE: no asymptotic discoveries (limiting positive call fraction gamma = 0)");
    }
    let _ = writeln!(out, "gamma       {:.6}", r.gamma);
    let _ = writeln!(out, "f0          {:.6}", r.f0);
    let _ = writeln!(out, "pi_pi       {:.6}", r.pi_pi);
    let _ = writeln!(out, "pi_oracle   {}", fmt_opt(r.pi_oracle));
    let _ = writeln!(out, "pi_lower    {}", fmt_opt(r.pi_lower));
    if let Some(t) = r.pi_lower_truncation {
        let _ = writeln!(out, "  (lower-bound truncation mass {t:.3e})");
    }
    let _ = writeln!(out, "tau2        {}", fmt_opt(r.tau2));
    let _ = writeln!(out, "sigma2      {}", fmt_opt(r.sigma2));
    let _ = writeln!(out, "alpha2      {}", fmt_opt(r.alpha2));
    for (l, p) in &r.lambda_powers {
        let _ = writeln!(out, "lambda_power({l}) {p:.6}");
    }
    let _ = writeln!(out, "lambda_eq   {}", fmt_opt(r.lambda_eq));
    let _ = writeln!(out, "f_prime     {}", fmt_opt(r.f_reduced_numeric));
    let _ = writeln!(out, "f_dblprime  {}", fmt_opt(r.f_reduced_closed));
    for note in &r.notes {
        let _ = writeln!(out, "note: {note}");
    }
}

fn cmd_power(a: &PowerArgs, as_json: bool) -> bhfdr::Result<Output> {
    let dp = a.design.design(a.n);
    let opts = ReportOptions { lambdas: a.lambdas.clone(), lower_bound: !a.no_lower_bound, alpha_mode: a.alpha_mode.into() };
    let row = analytic_row(&dp, &opts)?;
    let mut stdout = String::new();
    if as_json {
        stdout = json(&row);
    } else {
        render_report(&mut stdout, &row);
    }
    Ok(Output { stdout, stderr: String::new(), code: 0 })
}

fn cmd_samplesize(a: &SampleSizeArgs, as_json: bool) -> bhfdr::Result<Output> {
    let base = a.design.design(2);
    base.validate()?;
    let n = match a.kind {
        PowerKind::Avg => sample_size_avg(&base, base.f, a.target, a.n_max)?,
        PowerKind::Lambda => sample_size_lambda(&base, base.f, base.m, a.lambda, a.target, a.n_max)?,
    };
    let lambdas = match a.kind {
        PowerKind::Avg => vec![0.75, 0.9],
        PowerKind::Lambda => vec![a.lambda],
    };
    let row = analytic_row(&base.with_n(n), &ReportOptions { lambdas, lower_bound: false, ..Default::default() })?;
    let mut stdout = String::new();
    if as_json {
        stdout = json(&row);
    } else {
        let achieved = match a.kind {
            PowerKind::Avg => row.report.as_ref().map(|r| r.pi_pi),
            PowerKind::Lambda => row.report.as_ref().and_then(|r| r.lambda_powers.first().map(|p| p.1)),
        };
        let _ = writeln!(stdout, "n           {n}");
        let _ = writeln!(stdout, "achieved    {}", fmt_opt(achieved));
        let _ = writeln!(stdout, "target      {}", a.target);
    }
    Ok(Output { stdout, stderr: String::new(), code: 0 })
}

fn cmd_fdr_bound(a: &FdrBoundArgs, as_json: bool) -> bhfdr::Result<Output> {
    let base = a.design.design(a.n.unwrap_or(2));
    base.validate()?;
    let mut stdout = String::new();
    if let Some(target) = a.target_power {
        let fd = reduced_fdr_design(&base, target, a.lambda, a.n_max)?;
        let dp = base.with_n(fd.n11);
        let mut row = analytic_row(&dp, &ReportOptions { lower_bound: false, ..Default::default() })?;
        row.target_power = Some(target);
        row.fdf = Some(fd);
        if as_json {
            stdout = json(&row);
        } else {
            let closed = row.report.as_ref().and_then(|r| r.f_reduced_closed);
            let _ = writeln!(stdout, "f_prime     {:.6}", fd.f_prime);
            let _ = writeln!(stdout, "f_dblprime  {}  (closed form at n = n11)", fmt_opt(closed));
            let _ = writeln!(stdout, "n00         {}  (average power, BH(f))", fd.n00);
            let _ = writeln!(stdout, "n01         {}  (average power, BH(f'))", fd.n01);
            let _ = writeln!(stdout, "n10         {}  (lambda-power, BH(f))", fd.n10);
            let _ = writeln!(stdout, "n11         {}  (lambda-power, BH(f'))", fd.n11);
        }
        return Ok(Output { stdout, stderr: String::new(), code: 0 });
    }
    let mm = base.model()?;
    let v = clt_variances(&mm, base.f)?;
    let f_prime = reduced_fdr_numeric(&mm, base.f, base.m, a.alpha_mode.into())?;
    let f_dbl = reduced_fdr_closed(&mm, base.f, base.m);
    #[derive(Serialize)]
    struct Bound {
        design: DesignPoint,
        f_prime: f64,
        f_dblprime: Option<f64>,
        alpha2: f64,
        note: Option<String>,
    }
    let b = Bound {
        design: base,
        f_prime,
        f_dblprime: f_dbl.as_ref().ok().copied(),
        alpha2: v.alpha2,
        note: f_dbl.as_ref().err().map(|e| e.to_string()),
    };
    if as_json {
        stdout = json(&b);
    } else {
        let _ = writeln!(stdout, "f_prime     {f_prime:.6}");
        let _ = writeln!(stdout, "f_dblprime  {}", fmt_opt(b.f_dblprime));
        let _ = writeln!(stdout, "alpha2      {:.6}", v.alpha2);
        if let Some(n) = &b.note {
            let _ = writeln!(stdout, "note: {n}");
        }
    }
    Ok(Output { stdout, stderr: String::new(), code: 0 })
}

fn sim_config(design: DesignPoint, sim: &SimArgs) -> SimConfig {
    SimConfig {
        design,
        reps: sim.reps,
        seed: sim.seed,
        thresholds: vec![0.75, 0.9],
        fdf_excess: vec![design.f0()],
        correlation: sim.correlation(),
        workers: sim.workers,
    }
}

fn cmd_simulate(a: &SimulateArgs, as_json: bool) -> bhfdr::Result<Output> {
    let dp = a.design.design(a.n);
    dp.validate()?;
    let run_dp = dp.with_f(a.bh_fdr.unwrap_or(dp.f));
    let mut cfg = sim_config(run_dp, &a.sim);
    cfg.thresholds = a.lambdas.clone();
    cfg.fdf_excess = if a.fdf_excess.is_empty() { vec![dp.f0()] } else { a.fdf_excess.clone() };
    let outcomes = run_replicates(&cfg)?;
    let summary = summarize(&cfg, &outcomes);
    let mut row = analytic_row(&run_dp, &ReportOptions { lambdas: a.lambdas.clone(), lower_bound: false, ..Default::default() })?;
    row.sim = Some(summary.clone());
    row.correlation = cfg.correlation;
    let mut stdout = String::new();
    if as_json {
        stdout = json(&row);
    } else {
        let _ = writeln!(stdout, "reps        {}  seed {}", summary.reps, summary.seed);
        let _ = writeln!(stdout, "mean TPF    {:.6}  (se {:.6}; analytic pi_pi {:.6})", summary.mean_tpf, summary.se_mean_tpf,
            row.report.as_ref().map_or(f64::NAN, |r| r.pi_pi));
        for (l, p) in &summary.lambda_power_hat {
            let _ = writeln!(stdout, "P(TPF >= {l})  {p:.6}");
        }
        let _ = writeln!(stdout, "FDR hat     {:.6}  (se {:.6})", summary.fdr_hat, summary.se_fdr);
        for (x, p) in &summary.fdf_tail_hat {
            let _ = writeln!(stdout, "P(FDF >= {x})  {p:.6}");
        }
        let _ = writeln!(stdout, "var TPF     {:.6e}", summary.var_tpf);
        let _ = writeln!(stdout, "var FDF     {:.6e}", summary.var_fdf);
    }
    Ok(Output { stdout, stderr: String::new(), code: 0 })
}

fn cmd_grid(a: &GridArgs, as_json: bool) -> bhfdr::Result<Output> {
    let mut cfg = GridConfig::from_file(&a.config)?;
    if let (Some(w), Some(sim)) = (a.workers, cfg.sim.as_mut()) {
        sim.workers = Some(w);
    }
    let rows = run_grid(&cfg)?;
    let n_err = rows.iter().filter(|r| r.error.is_some()).count();
    let mut stdout = String::new();
    let mut stderr = String::new();
    if cfg.output.is_none() {
        for row in &rows {
            stdout.push_str(&json(row));
        }
    }
    let _ = writeln!(stderr, "{} rows computed ({} with recorded errors)", rows.len(), n_err);
    let mut code = 0;
    if !a.compare.is_empty() {
        let tol = Tolerances::new(Tolerance::Abs(a.tolerance))
            .with("sim_mean_tpf", Tolerance::StdErr(a.se_multiple))
            .with("sim_fdr", Tolerance::StdErr(a.se_multiple));
        let mut reports = Vec::new();
        for path in &a.compare {
            let table = ReferenceTable::from_path(path)?;
            let mut t = tol.clone();
            for col in table.value_columns() {
                if col.starts_with("sim_") {
                    t = t.with(col, Tolerance::StdErr(a.se_multiple));
                }
            }
            let report = compare_report(&rows, &table, &t, &[])?;
            let _ = writeln!(
                stderr,
                "{}: {} cells, {} flagged, max |diff| {:.3e}",
                path.display(),
                report.n_cells,
                report.n_flagged,
                report.max_abs_diff
            );
            if !report.pass {
                code = 1;
            }
            reports.push(report);
        }
        if as_json || cfg.output.is_some() {
            stdout.push_str(&json(&reports));
        }
    }
    Ok(Output { stdout, stderr, code })
}

/// One line of density plot data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPoint {
    pub lambda: f64,
    pub clt_density: f64,
    pub sim_density: Option<f64>,
}

/// Density plot data for the TPF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityTable {
    pub design: DesignPoint,
    pub pi_pi: f64,
    pub lambda_eq: f64,
    /// Standard deviation `σ/√m` of the CLT normal.
    pub sd: f64,
    pub points: Vec<DensityPoint>,
    /// Kolmogorov distance between the simulated TPFs and the CLT normal.
    pub kolmogorov: Option<f64>,
}

/// CLT density of the TPF on a grid centred at `π_pi` (so that `π_pi` is a
/// grid point), optionally with a simulated histogram density.
pub fn density_table(
    dp: &DesignPoint,
    half_points: usize,
    sds: f64,
    sim: Option<&SimConfig>,
) -> bhfdr::Result<DensityTable> {
    let v = clt_variances(&dp.model()?, dp.f)?;
    let sd = (v.sigma2 / dp.m as f64).sqrt();
    let h = sds * sd / half_points as f64;
    let k = half_points as i64;
    let lambdas: Vec<f64> = (-k..=k).map(|i| v.pi + i as f64 * h).filter(|l| (0.0..=1.0).contains(l)).collect();
    let (sim_density, kolmogorov) = match sim {
        None => (None, None),
        Some(cfg) => {
            let outcomes = run_replicates(cfg)?;
            let mut tpf: Vec<f64> = outcomes.iter().map(|o| o.tpf()).collect();
            tpf.sort_by(f64::total_cmp);
            let nf = tpf.len() as f64;
            // Histogram with bins centred on the grid points.
            let dens: Vec<f64> = lambdas
                .iter()
                .map(|&l| {
                    let lo = tpf.partition_point(|&x| x < l - h / 2.0);
                    let hi = tpf.partition_point(|&x| x < l + h / 2.0);
                    (hi - lo) as f64 / (nf * h)
                })
                .collect();
            let mut ks: f64 = 0.0;
            for (i, &x) in tpf.iter().enumerate() {
                let cdf = norm_cdf((x - v.pi) / sd);
                ks = ks.max((cdf - i as f64 / nf).abs()).max(((i + 1) as f64 / nf - cdf).abs());
            }
            (Some(dens), Some(ks))
        }
    };
    let points = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| DensityPoint {
            lambda: l,
            clt_density: norm_pdf((l - v.pi) / sd) / sd,
            sim_density: sim_density.as_ref().map(|d| d[i]),
        })
        .collect();
    Ok(DensityTable { design: *dp, pi_pi: v.pi, lambda_eq: v.lambda_eq(dp.m), sd, points, kolmogorov })
}

fn cmd_density(a: &DensityArgs, as_json: bool) -> bhfdr::Result<Output> {
    let dp = a.design.design(a.n);
    dp.validate()?;
    if a.half_points == 0 || !(a.sds > 0.0) {
        return Err(Error::Config("--half-points and --sds must be positive".into()));
    }
    let cfg = a.simulate.then(|| sim_config(dp, &a.sim));
    let table = density_table(&dp, a.half_points, a.sds, cfg.as_ref())?;
    let mut stdout = String::new();
    if as_json {
        stdout = json(&table);
    } else {
        let _ = writeln!(stdout, "lambda,clt_density,sim_density,marker");
        for p in &table.points {
            let sim = p.sim_density.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = writeln!(stdout, "{:.6},{:.6},{},", p.lambda, p.clt_density, sim);
        }
        let _ = writeln!(stdout, "{:.6},,,pi_pi", table.pi_pi);
        let _ = writeln!(stdout, "{:.6},,,lambda_eq", table.lambda_eq);
    }
    let mut stderr = String::new();
    if let Some(ks) = table.kolmogorov {
        let _ = writeln!(stderr, "Kolmogorov distance (simulated vs CLT): {ks:.4}");
    }
    Ok(Output { stdout, stderr, code: 0 })
}

fn cmd_partials(a: &PartialsArgs, as_json: bool) -> bhfdr::Result<Output> {
    let dp = a.design.design(a.n);
    dp.validate()?;
    let ranges = PartialRanges {
        r: ParamRange::new(a.r_range.0, a.r_range.1),
        theta: ParamRange::new(a.theta_range.0, a.theta_range.1),
        f: ParamRange::new(a.f_range.0, a.f_range.1),
    };
    let p = power_partials(&dp, &ranges, a.step)?;
    let mut stdout = String::new();
    if as_json {
        stdout = json(&p);
    } else {
        let _ = writeln!(stdout, "d_r         {:.6}", p.d_r);
        let _ = writeln!(stdout, "d_theta     {:.6}", p.d_theta);
        let _ = writeln!(stdout, "d_f         {:.6}", p.d_f);
    }
    Ok(Output { stdout, stderr: String::new(), code: 0 })
}
