//! Parameter sweeps: grid expansion from a TOML document, evaluation of the
//! analytic report (and optionally a simulation) per design, CSV / JSON-lines
//! persistence with resume, and comparison against reference tables.
//!
//! # Config schema
//!
//! ```toml
//! m = [200]                                 # list, or { lo, hi, step }
//! expected_m = [5, 20]                      # exactly one of expected_m / r
//! f = [0.15]
//! theta = { lo = 0.6, hi = 1.0, step = 0.2 }
//! n = [40, 50]                              # exactly one of n / power_window / fdf_bound
//! family = "folded_t"                       # optional, default folded_t
//! lambdas = [0.75, 0.9]                     # optional
//! lower_bound = true                        # optional
//!
//! [power_window]                            # automatic n per cell
//! lo = 0.5
//! hi = 0.98
//! step = 5
//!
//! [fdf_bound]                               # FDF-bounding study: n is solved
//! target_power = [0.6, 0.8]                 # per row; the simulation runs
//! lambda = 0.9                              # BH at f' with n = n11
//!
//! [sim]                                     # optional simulation per row
//! reps = 1000
//! seed = 20240601
//! fdf_excess = [0.18]                       # optional, default f0
//! correlation = { rho = 0.4, block_size = 100 }   # optional
//! workers = 4                               # optional
//!
//! [output]                                  # optional
//! path = "results/biomarker"                # writes .csv and/or .jsonl
//! format = "both"                           # csv | jsonl | both
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{power_report, reduced_fdr_design, sample_size_avg, FdrDesign, ReportOptions, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::montecarlo::{run_sim, Correlation, SimConfig, SimSummary, DEFAULT_SEED};
use crate::{DesignPoint, Family, PowerReport};

/// A parameter axis: an explicit list or an arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range { lo: f64, hi: f64, step: f64 },
}

impl Values {
    /// The axis values. Range points are `lo + k·step` (no accumulated
    /// rounding) up to `hi` inclusive, with a relative slack of 1e-9.
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self {
            Values::List(v) => Ok(v.clone()),
            Values::Range { lo, hi, step } => {
                if !(*step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!("bad range lo={lo} hi={hi} step={step}")));
                }
                let count = ((hi - lo) / step * (1.0 + 1e-9) + 1e-9).floor() as usize + 1;
                Ok((0..count).map(|k| lo + k as f64 * step).collect())
            }
        }
    }
}

/// Automatic per-cell sample sizes covering an average-power window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerWindow {
    pub lo: f64,
    pub hi: f64,
    /// Increment of `n`; generated sizes are the multiples of `step` between
    /// the sizes reaching `lo` and `hi`.
    pub step: u32,
}

/// FDF-bounding study: each cell is sized for a target power instead of
/// being given `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdfBoundSettings {
    pub target_power: Values,
    /// λ of the λ-power sample sizes `n₁,₀` and `n₁,₁`.
    #[serde(default = "default_fdf_lambda")]
    pub lambda: f64,
}

fn default_fdf_lambda() -> f64 {
    0.9
}

/// Simulation settings applied to every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Defaults to `lambdas` of the grid.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    /// Defaults to `[f₀]` per row.
    #[serde(default)]
    pub fdf_excess: Option<Vec<f64>>,
    #[serde(default)]
    pub correlation: Option<Correlation>,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Output file formats.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    /// Path stem; `.csv` / `.jsonl` are appended.
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// Record per-row wall time. Off by default so that reruns are
    /// byte-identical.
    #[serde(default)]
    pub timing: bool,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.75, 0.9]
}

fn default_true() -> bool {
    true
}

/// Declarative description of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: Values,
    #[serde(default)]
    pub r: Option<Values>,
    #[serde(default)]
    pub expected_m: Option<Values>,
    pub f: Values,
    pub theta: Values,
    #[serde(default)]
    pub n: Option<Values>,
    #[serde(default)]
    pub power_window: Option<PowerWindow>,
    #[serde(default)]
    pub fdf_bound: Option<FdfBoundSettings>,
    #[serde(default)]
    pub family: Option<Family>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_true")]
    pub lower_bound: bool,
    #[serde(default)]
    pub sim: Option<SimSettings>,
    #[serde(default)]
    pub output: Option<OutputSettings>,
}

impl GridConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.r.is_some() == self.expected_m.is_some() {
            problems.push("give exactly one of `r` and `expected_m`".to_string());
        }
        let sizing = [self.n.is_some(), self.power_window.is_some(), self.fdf_bound.is_some()];
        if sizing.iter().filter(|&&b| b).count() != 1 {
            problems.push("give exactly one of `n`, `power_window` and `fdf_bound`".to_string());
        }
        if let Some(fb) = &self.fdf_bound {
            match fb.target_power.expand() {
                Ok(ts) if ts.iter().all(|&t| t > 0.0 && t < 1.0) => {}
                Ok(_) => problems.push("fdf_bound.target_power values must lie in (0, 1)".to_string()),
                Err(e) => problems.push(format!("fdf_bound.target_power: {e}")),
            }
            if !(fb.lambda > 0.0 && fb.lambda < 1.0) {
                problems.push("fdf_bound.lambda must lie in (0, 1)".to_string());
            }
        }
        if let Some(w) = self.power_window {
            if !(w.lo > 0.0 && w.lo < w.hi && w.hi <= 1.0) {
                problems.push(format!("power window must satisfy 0 < lo < hi <= 1, got [{}, {}]", w.lo, w.hi));
            }
            if w.step == 0 {
                problems.push("power window step must be positive".to_string());
            }
        }
        if let Some(s) = &self.sim {
            if s.reps == 0 {
                problems.push("sim.reps must be positive".to_string());
            }
        }
        for (name, v) in [("m", Some(&self.m)), ("r", self.r.as_ref()), ("expected_m", self.expected_m.as_ref()),
            ("f", Some(&self.f)), ("theta", Some(&self.theta)), ("n", self.n.as_ref())]
        {
            if let Some(v) = v {
                if let Err(e) = v.expand() {
                    problems.push(format!("{name}: {e}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

fn to_count(name: &str, x: f64) -> Result<u64> {
    if x >= 1.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
        Ok(x as u64)
    } else {
        Err(Error::Config(format!("{name} must be a positive integer, got {x}")))
    }
}

/// Sample sizes that are multiples of `w.step` between the sizes reaching
/// average power `w.lo` and `w.hi` (the upper end is capped just below 1).
fn window_sizes(base: &DesignPoint, w: &PowerWindow) -> Result<Vec<u32>> {
    let hi_target = w.hi.min(1.0 - 1e-9);
    let n_lo = sample_size_avg(base, base.f, w.lo, DEFAULT_N_MAX)?;
    let n_hi = sample_size_avg(base, base.f, hi_target, DEFAULT_N_MAX)?;
    let first = n_lo.div_ceil(w.step) * w.step;
    Ok((first..=n_hi).step_by(w.step as usize).filter(|&n| n >= 2).collect())
}

/// One cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// The design. In FDF-bounding mode `n` is not known yet and holds the
    /// placeholder 2; the evaluated row carries `n = n₁,₁`.
    pub design: DesignPoint,
    /// Target average/λ-power in FDF-bounding mode.
    pub target_power: Option<f64>,
}

impl GridPoint {
    /// Resume key: the input tuple at full precision.
    pub fn key(&self) -> String {
        match self.target_power {
            Some(t) => format!("{}|target={t:?}", design_key(&self.design)),
            None => design_key(&self.design),
        }
    }
}

/// Cartesian product of the configured axes, in the order
/// `m, r|E[M], f, θ, n|target` (last varies fastest).
pub fn expand_grid(cfg: &GridConfig) -> Result<Vec<GridPoint>> {
    cfg.validate()?;
    let family = cfg.family.unwrap_or(Family::FoldedT);
    let ms = cfg.m.expand()?;
    let fs = cfg.f.expand()?;
    let thetas = cfg.theta.expand()?;
    let (props, by_expected) = match (&cfg.r, &cfg.expected_m) {
        (Some(r), None) => (r.expand()?, false),
        (None, Some(e)) => (e.expand()?, true),
        _ => unreachable!("validated"),
    };
    let ns = match &cfg.n {
        Some(v) => Some(v.expand()?.into_iter().map(|x| to_count("n", x).map(|n| n as u32)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let mut out = Vec::new();
    for &m in &ms {
        let m = to_count("m", m)?;
        for &p in &props {
            let r = if by_expected { p / m as f64 } else { p };
            for &f in &fs {
                for &theta in &thetas {
                    let base = DesignPoint { m, r, f, theta, n: 2, family };
                    base.validate()?;
                    if let Some(fb) = &cfg.fdf_bound {
                        for t in fb.target_power.expand()? {
                            out.push(GridPoint { design: base, target_power: Some(t) });
                        }
                        continue;
                    }
                    let cell = match (&ns, &cfg.power_window) {
                        (Some(ns), _) => ns.clone(),
                        (None, Some(w)) => window_sizes(&base, w)?,
                        _ => unreachable!("validated"),
                    };
                    for n in cell {
                        let dp = base.with_n(n);
                        dp.validate()?;
                        out.push(GridPoint { design: dp, target_power: None });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyGrid("no design points (the power window excludes every n)".into()));
    }
    Ok(out)
}

/// One evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Evaluated design (in FDF-bounding mode, with `n = n₁,₁`).
    pub design: DesignPoint,
    /// Target power in FDF-bounding mode.
    pub target_power: Option<f64>,
    /// Reduced FDR and sample sizes in FDF-bounding mode.
    pub fdf: Option<FdrDesign<f64>>,
    /// Analytic report; `None` only when evaluation failed (see `error`).
    pub report: Option<PowerReport>,
    pub sim: Option<SimSummary>,
    pub correlation: Option<Correlation>,
    pub error: Option<String>,
    pub wall_time_s: Option<f64>,
}

impl ResultRow {
    /// The grid point this row was evaluated from.
    pub fn point(&self) -> GridPoint {
        match self.target_power {
            Some(t) => GridPoint { design: self.design.with_n(2), target_power: Some(t) },
            None => GridPoint { design: self.design, target_power: None },
        }
    }

    /// Resume key, equal to the key of [`ResultRow::point`].
    pub fn key(&self) -> String {
        self.point().key()
    }
}

pub fn design_key(d: &DesignPoint) -> String {
    format!("{}|{:?}|{:?}|{:?}|{}|{}", d.m, d.r, d.f, d.theta, d.n, d.family)
}

/// Evaluates one grid point. Errors are recorded in the row, never raised.
pub fn evaluate_row(cfg: &GridConfig, point: &GridPoint) -> ResultRow {
    let start = Instant::now();
    let opts = ReportOptions { lambdas: cfg.lambdas.clone(), lower_bound: cfg.lower_bound, ..Default::default() };
    let mut error = None;
    let mut dp = point.design;
    let mut sim_f = dp.f;
    let mut fdf = None;
    if let (Some(target), Some(fb)) = (point.target_power, &cfg.fdf_bound) {
        match reduced_fdr_design(&dp, target, fb.lambda, DEFAULT_N_MAX) {
            Ok(d) => {
                dp = dp.with_n(d.n11);
                sim_f = d.f_prime;
                fdf = Some(d);
            }
            Err(e) => {
                return ResultRow {
                    design: dp,
                    target_power: point.target_power,
                    fdf: None,
                    report: None,
                    sim: None,
                    correlation: None,
                    error: Some(format!("fdf bound: {e}")),
                    wall_time_s: None,
                };
            }
        }
    }
    let dp = &dp;
    let report = match power_report(dp, &opts) {
        Ok(r) => Some(r),
        Err(e) => {
            error = Some(e.to_string());
            None
        }
    };
    let mut correlation = None;
    let sim = cfg.sim.as_ref().and_then(|s| {
        correlation = s.correlation;
        let sc = SimConfig {
            design: dp.with_f(sim_f),
            reps: s.reps,
            seed: s.seed,
            thresholds: s.thresholds.clone().unwrap_or_else(|| cfg.lambdas.clone()),
            fdf_excess: s.fdf_excess.clone().unwrap_or_else(|| vec![dp.f0()]),
            correlation: s.correlation,
            workers: None,
        };
        match run_sim(&sc) {
            Ok(summary) => Some(summary),
            Err(e) => {
                let msg = format!("simulation: {e}");
                error = Some(match error.take() {
                    Some(prev) => format!("{prev}; {msg}"),
                    None => msg,
                });
                None
            }
        }
    });
    let timing = cfg.output.as_ref().is_some_and(|o| o.timing);
    ResultRow {
        design: *dp,
        target_power: point.target_power,
        fdf,
        report,
        sim,
        correlation,
        error,
        wall_time_s: timing.then(|| start.elapsed().as_secs_f64()),
    }
}

/// Formats `x` with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Column names of the CSV output for a config.
pub fn csv_header(cfg: &GridConfig) -> Vec<String> {
    let mut h: Vec<String> = ["m", "r", "expected_m", "f", "theta", "n", "family", "gamma", "pi_pi", "pi_oracle",
        "pi_lower", "pi_lower_truncation", "f0", "tau2", "sigma2", "alpha2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(cfg.lambdas.iter().map(|l| format!("lambda_power_{l}")));
    h.extend(["lambda_eq", "f_reduced_closed", "f_reduced_numeric", "degenerate"].map(String::from));
    if cfg.fdf_bound.is_some() {
        h.extend(["target_power", "f_prime", "n00", "n01", "n10", "n11"].map(String::from));
    }
    if let Some(s) = &cfg.sim {
        h.extend(["sim_reps", "sim_seed", "rho", "block_size", "sim_mean_tpf", "sim_se_tpf"].map(String::from));
        let ts = s.thresholds.clone().unwrap_or_else(|| cfg.lambdas.clone());
        h.extend(ts.iter().map(|l| format!("sim_lambda_{l}")));
        h.extend(["sim_fdr", "sim_se_fdr"].map(String::from));
        match &s.fdf_excess {
            Some(xs) => h.extend(xs.iter().map(|x| format!("sim_fdf_tail_{x}"))),
            None => h.push("sim_fdf_tail_f0".to_string()),
        }
    }
    if cfg.output.as_ref().is_some_and(|o| o.timing) {
        h.push("wall_time_s".to_string());
    }
    h.extend(["error", "notes"].map(String::from));
    h
}

fn csv_record(cfg: &GridConfig, row: &ResultRow) -> Vec<String> {
    let d = &row.design;
    let opt = |x: Option<f64>| x.map(fmt_sig6).unwrap_or_default();
    // Design inputs are written exactly so that CSV rows can be keyed on them.
    let mut v = vec![
        d.m.to_string(),
        format!("{}", d.r),
        fmt_sig6(d.expected_m()),
        format!("{}", d.f),
        format!("{}", d.theta),
        d.n.to_string(),
        d.family.to_string(),
    ];
    let rep = row.report.as_ref();
    v.push(opt(rep.map(|r| r.gamma)));
    v.push(opt(rep.map(|r| r.pi_pi)));
    v.push(opt(rep.and_then(|r| r.pi_oracle)));
    v.push(opt(rep.and_then(|r| r.pi_lower)));
    v.push(opt(rep.and_then(|r| r.pi_lower_truncation)));
    v.push(fmt_sig6(d.f0()));
    v.push(opt(rep.and_then(|r| r.tau2)));
    v.push(opt(rep.and_then(|r| r.sigma2)));
    v.push(opt(rep.and_then(|r| r.alpha2)));
    for (i, _) in cfg.lambdas.iter().enumerate() {
        v.push(opt(rep.and_then(|r| r.lambda_powers.get(i).map(|p| p.1))));
    }
    v.push(opt(rep.and_then(|r| r.lambda_eq)));
    v.push(opt(rep.and_then(|r| r.f_reduced_closed)));
    v.push(opt(rep.and_then(|r| r.f_reduced_numeric)));
    v.push(rep.map(|r| r.degenerate.to_string()).unwrap_or_default());
    if cfg.fdf_bound.is_some() {
        v.push(row.target_power.map(|t| format!("{t}")).unwrap_or_default());
        v.push(opt(row.fdf.map(|d| d.f_prime)));
        let sizes = row.fdf.map(|d| [d.n00, d.n01, d.n10, d.n11]);
        for i in 0..4 {
            v.push(sizes.map(|s| s[i].to_string()).unwrap_or_default());
        }
    }
    if let Some(s) = &cfg.sim {
        let sim = row.sim.as_ref();
        v.push(sim.map(|x| x.reps.to_string()).unwrap_or_default());
        v.push(s.seed.to_string());
        v.push(row.correlation.map(|c| c.rho.to_string()).unwrap_or_default());
        v.push(row.correlation.map(|c| c.block_size.to_string()).unwrap_or_default());
        v.push(opt(sim.map(|x| x.mean_tpf)));
        v.push(opt(sim.map(|x| x.se_mean_tpf)));
        let nt = s.thresholds.as_ref().map_or(cfg.lambdas.len(), |t| t.len());
        for i in 0..nt {
            v.push(opt(sim.and_then(|x| x.lambda_power_hat.get(i).map(|p| p.1))));
        }
        v.push(opt(sim.map(|x| x.fdr_hat)));
        v.push(opt(sim.map(|x| x.se_fdr)));
        let nx = s.fdf_excess.as_ref().map_or(1, |x| x.len());
        for i in 0..nx {
            v.push(opt(sim.and_then(|x| x.fdf_tail_hat.get(i).map(|p| p.1))));
        }
    }
    if cfg.output.as_ref().is_some_and(|o| o.timing) {
        v.push(opt(row.wall_time_s));
    }
    v.push(row.error.clone().unwrap_or_default());
    v.push(rep.map(|r| r.notes.join("; ")).unwrap_or_default());
    v
}

/// Reads JSON-lines rows (one [`ResultRow`] per line).
pub fn read_jsonl<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| Error::Schema(format!("JSON-lines row {}: {e}", i + 1)))?,
        );
    }
    Ok(rows)
}

/// Writes rows as JSON-lines at full precision.
pub fn write_jsonl<W: Write>(mut w: W, rows: &[ResultRow]) -> Result<()> {
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::Schema(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Keys of rows already present in a previous (possibly interrupted) run.
fn existing_keys(cfg: &GridConfig, out: &OutputSettings) -> Result<HashSet<String>> {
    let mut keys = HashSet::new();
    let jsonl = out.path.with_extension("jsonl");
    let csv_path = out.path.with_extension("csv");
    match out.format {
        OutputFormat::Jsonl | OutputFormat::Both if jsonl.exists() => {
            // Unparsable lines (e.g. from a hand-edited file) are skipped.
            let text = std::fs::read_to_string(&jsonl)?;
            for line in text.lines() {
                if let Ok(row) = serde_json::from_str::<ResultRow>(line) {
                    keys.insert(row.key());
                }
            }
        }
        OutputFormat::Csv if csv_path.exists() => {
            let mut rdr = csv::Reader::from_path(&csv_path).map_err(|e| Error::Io(e.to_string()))?;
            let target_col = csv_header(cfg).iter().position(|h| h == "target_power");
            for rec in rdr.records().flatten() {
                let get = |i: usize| rec.get(i).unwrap_or_default();
                let parse = |i: usize| get(i).parse::<f64>().ok();
                if let (Ok(m), Some(r), Some(f), Some(theta), Ok(n), Ok(family)) = (
                    get(0).parse::<u64>(),
                    parse(1),
                    parse(3),
                    parse(4),
                    get(5).parse::<u32>(),
                    get(6).parse::<Family>(),
                ) {
                    let design = DesignPoint { m, r, f, theta, n, family };
                    let point = match target_col.and_then(|c| rec.get(c)).and_then(|t| t.parse::<f64>().ok()) {
                        Some(t) => GridPoint { design: design.with_n(2), target_power: Some(t) },
                        None => GridPoint { design, target_power: None },
                    };
                    keys.insert(point.key());
                }
            }
        }
        _ => {}
    }
    Ok(keys)
}

/// Truncates `path` after its last newline, discarding a partially written
/// final line left by an interrupted run so that appended rows start on a
/// fresh line.
fn drop_torn_tail(path: &Path) -> Result<()> {
    let Ok(bytes) = std::fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    Ok(())
}

/// Rows evaluated per parallel batch before flushing to disk.
const FLUSH_BATCH: usize = 16;

/// Evaluates every design of the grid, writing results incrementally when
/// an output is configured. Rows already present in the output files are
/// skipped (resume); the returned list holds only newly computed rows, in
/// grid order.
pub fn run_grid(cfg: &GridConfig) -> Result<Vec<ResultRow>> {
    let designs = expand_grid(cfg)?;
    let workers = cfg.sim.as_ref().and_then(|s| s.workers);
    let pool = match workers {
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build().map_err(|e| Error::Config(e.to_string()))?,
        ),
        None => None,
    };
    let (todo, mut sink) = match &cfg.output {
        Some(out) => {
            for ext in ["csv", "jsonl"] {
                drop_torn_tail(&out.path.with_extension(ext))?;
            }
            let done = existing_keys(cfg, out)?;
            let todo: Vec<GridPoint> = designs.into_iter().filter(|p| !done.contains(&p.key())).collect();
            (todo, Some(Sink::open(cfg, out, !done.is_empty())?))
        }
        None => (designs, None),
    };
    let mut rows = Vec::with_capacity(todo.len());
    for batch in todo.chunks(FLUSH_BATCH) {
        let eval = || batch.par_iter().map(|d| evaluate_row(cfg, d)).collect::<Vec<_>>();
        let computed = match &pool {
            Some(p) => p.install(eval),
            None => eval(),
        };
        if let Some(s) = sink.as_mut() {
            s.write(cfg, &computed)?;
        }
        rows.extend(computed);
    }
    Ok(rows)
}

/// Serialized writer for grid output files.
struct Sink {
    csv: Option<csv::Writer<File>>,
    jsonl: Option<BufWriter<File>>,
}

impl Sink {
    fn open(cfg: &GridConfig, out: &OutputSettings, resuming: bool) -> Result<Self> {
        if let Some(parent) = out.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let open = |p: PathBuf| -> Result<(File, bool)> {
            let fresh = !resuming || !p.exists();
            let file = if fresh {
                File::create(&p)?
            } else {
                OpenOptions::new().append(true).open(&p)?
            };
            Ok((file, fresh))
        };
        let csv = match out.format {
            OutputFormat::Csv | OutputFormat::Both => {
                let (file, fresh) = open(out.path.with_extension("csv"))?;
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
                if fresh {
                    w.write_record(csv_header(cfg)).map_err(|e| Error::Io(e.to_string()))?;
                    w.flush()?;
                }
                Some(w)
            }
            OutputFormat::Jsonl => None,
        };
        let jsonl = match out.format {
            OutputFormat::Jsonl | OutputFormat::Both => Some(BufWriter::new(open(out.path.with_extension("jsonl"))?.0)),
            OutputFormat::Csv => None,
        };
        Ok(Self { csv, jsonl })
    }

    fn write(&mut self, cfg: &GridConfig, rows: &[ResultRow]) -> Result<()> {
        if let Some(w) = self.csv.as_mut() {
            for row in rows {
                w.write_record(csv_record(cfg, row)).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        if let Some(w) = self.jsonl.as_mut() {
            write_jsonl(&mut *w, rows)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Looks up a named numeric field of a row. Recognised names: the scalar
/// report fields (`gamma`, `pi_pi`, `pi_oracle`, `pi_lower`, `tau2`,
/// `sigma2`, `alpha2`, `lambda_eq`, `f_reduced_closed`, `f_reduced_numeric`),
/// `lambda_power_<λ>`, and the simulation fields `sim_mean_tpf`, `sim_fdr`,
/// `sim_lambda_<λ>`, `sim_fdf_tail_<x>`.
///
/// Returns `Ok(None)` when the field is known but absent in this row.
pub fn field_value(row: &ResultRow, name: &str) -> Result<Option<f64>> {
    let rep = row.report.as_ref();
    let sim = row.sim.as_ref();
    let pick = |pairs: Option<&Vec<(f64, f64)>>, key: &str| -> Result<Option<f64>> {
        let x: f64 = key.parse().map_err(|_| Error::Schema(format!("bad threshold in column `{name}`")))?;
        Ok(pairs.and_then(|ps| ps.iter().find(|p| (p.0 - x).abs() < 1e-12).map(|p| p.1)))
    };
    Ok(match name {
        "gamma" => rep.map(|r| r.gamma),
        "pi_pi" => rep.map(|r| r.pi_pi),
        "pi_oracle" => rep.and_then(|r| r.pi_oracle),
        "pi_lower" => rep.and_then(|r| r.pi_lower),
        "tau2" => rep.and_then(|r| r.tau2),
        "sigma2" => rep.and_then(|r| r.sigma2),
        "alpha2" => rep.and_then(|r| r.alpha2),
        "lambda_eq" => rep.and_then(|r| r.lambda_eq),
        "f_reduced_closed" => rep.and_then(|r| r.f_reduced_closed),
        "f_reduced_numeric" => rep.and_then(|r| r.f_reduced_numeric),
        "sim_mean_tpf" => sim.map(|s| s.mean_tpf),
        "sim_fdr" => sim.map(|s| s.fdr_hat),
        "f_prime" => row.fdf.map(|d| d.f_prime),
        "n00" => row.fdf.map(|d| d.n00 as f64),
        "n01" => row.fdf.map(|d| d.n01 as f64),
        "n10" => row.fdf.map(|d| d.n10 as f64),
        "n11" => row.fdf.map(|d| d.n11 as f64),
        _ => {
            if let Some(k) = name.strip_prefix("lambda_power_") {
                return pick(rep.map(|r| &r.lambda_powers), k);
            }
            if let Some(k) = name.strip_prefix("sim_lambda_") {
                return pick(sim.map(|s| &s.lambda_power_hat), k);
            }
            if let Some(k) = name.strip_prefix("sim_fdf_tail_") {
                return pick(sim.map(|s| &s.fdf_tail_hat), k);
            }
            return Err(Error::Schema(format!("unknown reference column `{name}`")));
        }
    })
}

/// Monte-Carlo standard error of a simulated field, if it is one.
fn sim_se(row: &ResultRow, name: &str, value: f64) -> Option<f64> {
    let sim = row.sim.as_ref()?;
    match name {
        "sim_mean_tpf" => Some(sim.se_mean_tpf),
        "sim_fdr" => Some(sim.se_fdr),
        _ if name.starts_with("sim_") => Some(sim.se_proportion(value)),
        _ => None,
    }
}

/// Tolerance applied to a compared column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// Absolute difference.
    Abs(f64),
    /// Multiple of the Monte-Carlo standard error of the computed value
    /// (computed from the reference value for proportions).
    StdErr(f64),
}

/// Per-column tolerances; columns without an entry use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub default: Tolerance,
    pub columns: BTreeMap<String, Tolerance>,
}

impl Tolerances {
    pub fn new(default: Tolerance) -> Self {
        Self { default, columns: BTreeMap::new() }
    }

    pub fn with(mut self, column: &str, tol: Tolerance) -> Self {
        self.columns.insert(column.to_string(), tol);
        self
    }

    fn get(&self, column: &str) -> Tolerance {
        self.columns.get(column).copied().unwrap_or(self.default)
    }
}

/// One compared cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub source: String,
    pub column: String,
    pub reference: f64,
    /// `None` when the row has no value for the column.
    pub computed: Option<f64>,
    pub abs_diff: Option<f64>,
    /// Absolute tolerance applied to this cell.
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of comparing rows against a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub cells: Vec<CellDiff>,
    pub n_cells: usize,
    pub n_flagged: usize,
    pub max_abs_diff: f64,
    pub pass: bool,
}

impl DiscrepancyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CellDiff> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

/// Columns of a reference table that identify the design rather than hold
/// compared values.
const KEY_COLUMNS: [&str; 9] = ["source", "m", "r", "expected_m", "f", "theta", "n", "rho", "block_size"];

/// A reference table: a CSV whose first column `source` labels each row,
/// followed by key columns (`m`, `r` or `expected_m`, `f`, `theta`, `n`,
/// optionally `rho` and `block_size`) and value columns named as in
/// [`field_value`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl ReferenceTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> =
            rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.iter().map(String::from).collect();
        if headers.first().map(String::as_str) != Some("source") {
            return Err(Error::Schema("reference tables must start with a `source` column".into()));
        }
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
            records.push(rec.iter().map(String::from).collect());
        }
        Ok(Self { headers, records })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io(format!("opening {}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Numeric value of column `name` in record `i`.
    pub fn value(&self, i: usize, name: &str) -> Result<Option<f64>> {
        let Some(c) = self.col(name) else { return Ok(None) };
        let cell = self.records[i][c].trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse().map(Some).map_err(|_| Error::Schema(format!("non-numeric cell `{cell}` in column `{name}`")))
    }

    /// The design described by the key columns of record `i` (folded t).
    pub fn design(&self, i: usize) -> Result<DesignPoint> {
        let need = |name: &str| -> Result<f64> {
            self.value(i, name)?.ok_or_else(|| Error::Schema(format!("missing key column `{name}`")))
        };
        let m = to_count("m", need("m")?).map_err(|e| Error::Schema(e.to_string()))?;
        let r = match (self.value(i, "r")?, self.value(i, "expected_m")?) {
            (Some(r), _) => r,
            (None, Some(e)) => e / m as f64,
            (None, None) => return Err(Error::Schema("need an `r` or `expected_m` column".into())),
        };
        let n = to_count("n", need("n")?).map_err(|e| Error::Schema(e.to_string()))? as u32;
        Ok(DesignPoint::new(m, r, need("f")?, need("theta")?, n))
    }

    /// Correlation settings of record `i`, if the table has them.
    pub fn correlation(&self, i: usize) -> Result<Option<Correlation>> {
        match (self.value(i, "rho")?, self.value(i, "block_size")?) {
            (Some(rho), Some(b)) if rho > 0.0 => Ok(Some(Correlation { rho, block_size: b as usize })),
            _ => Ok(None),
        }
    }

    pub fn source(&self, i: usize) -> &str {
        &self.records[i][0]
    }

    /// Value columns (everything that is not a key column).
    pub fn value_columns(&self) -> Vec<&str> {
        self.headers.iter().map(String::as_str).filter(|h| !KEY_COLUMNS.contains(h)).collect()
    }
}

fn same_design(a: &DesignPoint, b: &DesignPoint) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    a.m == b.m && a.n == b.n && close(a.r, b.r) && close(a.f, b.f) && close(a.theta, b.theta)
}

fn same_correlation(a: Option<Correlation>, b: Option<Correlation>) -> bool {
    let norm = |c: Option<Correlation>| c.filter(|c| c.rho > 0.0);
    match (norm(a), norm(b)) {
        (None, None) => true,
        (Some(x), Some(y)) => (x.rho - y.rho).abs() < 1e-12 && x.block_size == y.block_size,
        _ => false,
    }
}

/// Compares `rows` with every value cell of `reference`. Each reference row
/// must match exactly one computed row by design (and correlation, when the
/// table has those columns); unknown columns and unmatched rows are schema
/// errors. Columns listed in `only` restrict the comparison when non-empty.
pub fn compare_report(
    rows: &[ResultRow],
    reference: &ReferenceTable,
    tolerances: &Tolerances,
    only: &[&str],
) -> Result<DiscrepancyReport> {
    let columns: Vec<&str> =
        reference.value_columns().into_iter().filter(|c| only.is_empty() || only.contains(c)).collect();
    let mut cells = Vec::new();
    for i in 0..reference.records.len() {
        let design = reference.design(i)?;
        let corr = reference.correlation(i)?;
        let row = rows
            .iter()
            .find(|r| same_design(&r.design, &design) && same_correlation(r.correlation, corr))
            .ok_or_else(|| Error::Schema(format!("no computed row for reference row `{}`", reference.source(i))))?;
        for &col in &columns {
            let Some(reference_value) = reference.value(i, col)? else { continue };
            let computed = field_value(row, col)?;
            let tolerance = match tolerances.get(col) {
                Tolerance::Abs(t) => t,
                Tolerance::StdErr(k) => match sim_se(row, col, reference_value) {
                    Some(se) => k * se,
                    None => return Err(Error::Schema(format!("column `{col}` has no standard error"))),
                },
            };
            let abs_diff = computed.map(|c| (c - reference_value).abs());
            cells.push(CellDiff {
                source: reference.source(i).to_string(),
                column: col.to_string(),
                reference: reference_value,
                computed,
                abs_diff,
                tolerance,
                pass: abs_diff.is_some_and(|d| d <= tolerance),
            });
        }
    }
    let n_flagged = cells.iter().filter(|c| !c.pass).count();
    let max_abs_diff = cells.iter().filter_map(|c| c.abs_diff).fold(0.0, f64::max);
    Ok(DiscrepancyReport { n_cells: cells.len(), n_flagged, max_abs_diff, pass: n_flagged == 0, cells })
}

/// Evaluates the design of every reference row (analytic only).
pub fn rows_for_reference(reference: &ReferenceTable, lambdas: &[f64], lower_bound: bool) -> Result<Vec<ResultRow>> {
    let cfg = GridConfig {
        m: Values::List(vec![]),
        r: None,
        expected_m: None,
        f: Values::List(vec![]),
        theta: Values::List(vec![]),
        n: None,
        power_window: None,
        fdf_bound: None,
        family: None,
        lambdas: lambdas.to_vec(),
        lower_bound,
        sim: None,
        output: None,
    };
    let points = (0..reference.records.len())
        .map(|i| Ok(GridPoint { design: reference.design(i)?, target_power: None }))
        .collect::<Result<Vec<_>>>()?;
    Ok(points.par_iter().map(|p| evaluate_row(&cfg, p)).collect())
}
