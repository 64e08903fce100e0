//! Monte-Carlo simulation of the BH step-up procedure.
//!
//! Each replicate draws the non-null indicators `ξ_i ~ Bernoulli(r)`, draws
//! `m` two-sample t statistics (directly, or from subject-level data with
//! block compound-symmetry correlation), applies BH and records the counts
//! `(M, J, S, T)`. Replicate `k` uses its own ChaCha stream selected by
//! `(seed, k)`, and results are reduced in replicate order, so a run is
//! bit-for-bit reproducible whatever the number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{DesignPoint, Family, TestDist};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Within-block compound-symmetry correlation of the subject-level data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// Common correlation `ρ ∈ [0, 1)` within a block.
    pub rho: f64,
    /// Number of consecutive tests per block (the last block may be short).
    pub block_size: usize,
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Design; `design.f` is the nominal FDR at which BH is run.
    pub design: DesignPoint,
    pub reps: usize,
    pub seed: u64,
    /// λ values for the empirical λ-power `P{S/M ≥ λ}`.
    pub thresholds: Vec<f64>,
    /// Points `x` for the empirical FDF tail `P{T/J ≥ x}`.
    pub fdf_excess: Vec<f64>,
    /// Subject-level correlated generator; `None` draws statistics directly.
    pub correlation: Option<Correlation>,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SimConfig {
    /// Defaults: λ ∈ {0.75, 0.90}, FDF tail at `f₀`, independent tests.
    pub fn new(design: DesignPoint, reps: usize, seed: u64) -> Self {
        Self {
            design,
            reps,
            seed,
            thresholds: vec![0.75, 0.9],
            fdf_excess: vec![design.f0()],
            correlation: None,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.reps < 1 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if let Some(c) = self.correlation {
            if !(0.0..1.0).contains(&c.rho) {
                return Err(Error::Config(format!("rho must lie in [0, 1), got {}", c.rho)));
            }
            if c.block_size < 1 {
                return Err(Error::Config("block_size must be at least 1".into()));
            }
            if self.design.family != Family::FoldedT {
                return Err(Error::Config("the correlated generator produces t statistics (family folded_t)".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Counts from one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    /// Non-null tests `M`.
    pub m_alt: u64,
    /// Positive calls `J`.
    pub j: u64,
    /// True positives `S`.
    pub s: u64,
    /// False positives `T = J − S`.
    pub t: u64,
}

impl ReplicateOutcome {
    /// True-positive fraction `S/M` (0 when `M = 0`).
    pub fn tpf(&self) -> f64 {
        ratio(self.s, self.m_alt)
    }

    /// False-discovery fraction `T/J` (0 when `J = 0`).
    pub fn fdf(&self) -> f64 {
        ratio(self.t, self.j)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Aggregated simulation estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub reps: usize,
    pub seed: u64,
    /// Mean TPF (simulated average power).
    pub mean_tpf: f64,
    pub se_mean_tpf: f64,
    /// Sample variance of the TPF.
    pub var_tpf: f64,
    /// `(λ, P̂{S/M ≥ λ})`.
    pub lambda_power_hat: Vec<(f64, f64)>,
    /// Mean FDF (empirical FDR).
    pub fdr_hat: f64,
    pub se_fdr: f64,
    /// Sample variance of the FDF.
    pub var_fdf: f64,
    /// `(x, P̂{T/J ≥ x})`.
    pub fdf_tail_hat: Vec<(f64, f64)>,
    /// Mean positive-call fraction `J/m`.
    pub mean_pcf: f64,
}

impl SimSummary {
    /// Monte-Carlo standard error of an estimated proportion.
    pub fn se_proportion(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

/// BH step-up: `J = max{i : P_(i) ≤ i f / m}` (0 if none) and the mask of
/// the `J` smallest p-values.
pub fn bh_reject(pvalues: &[f64], f: f64) -> (usize, Vec<bool>) {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mf = m as f64;
    let j = (1..=m).rev().find(|&i| pvalues[order[i - 1]] <= i as f64 * f / mf).unwrap_or(0);
    let mut mask = vec![false; m];
    for &idx in &order[..j] {
        mask[idx] = true;
    }
    (j, mask)
}

/// Per-configuration constants shared by all replicates.
struct Context {
    m: usize,
    r: f64,
    n: usize,
    df: f64,
    ncp: f64,
    theta: f64,
    f: f64,
    family: Family,
    null: TestDist,
    chi2: Option<ChiSquared<f64>>,
    correlation: Option<Correlation>,
}

impl Context {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let d = &cfg.design;
        let m = usize::try_from(d.m).map_err(|_| Error::Config("m too large".into()))?;
        let null = TestDist::new(d.family, d.df(), 0.0)?;
        let chi2 = match d.family {
            Family::FoldedT => Some(ChiSquared::new(d.df()).map_err(|e| Error::Config(e.to_string()))?),
            Family::FoldedNormal => None,
        };
        Ok(Self {
            m,
            r: d.r,
            n: d.n as usize,
            df: d.df(),
            ncp: d.ncp(),
            theta: d.theta,
            f: d.f,
            family: d.family,
            null,
            chi2,
            correlation: cfg.correlation,
        })
    }

    /// Draws `(|statistic|, is_non_null)` for every test.
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut Vec<(f64, bool)>) {
        out.clear();
        let alt: Vec<bool> = (0..self.m).map(|_| rng.random::<f64>() < self.r).collect();
        match self.correlation {
            None => {
                for &a in &alt {
                    let z: f64 = StandardNormal.sample(rng);
                    let mean = if a { self.ncp } else { 0.0 };
                    let stat = match (&self.chi2, self.family) {
                        (Some(chi2), Family::FoldedT) => (z + mean) / (chi2.sample(rng) / self.df).sqrt(),
                        _ => z + mean,
                    };
                    out.push((stat.abs(), a));
                }
            }
            Some(c) => self.draw_correlated(rng, &alt, c, out),
        }
    }

    /// Subject-level two-group data, compound symmetry within blocks, pooled
    /// two-sample t statistics.
    fn draw_correlated(&self, rng: &mut ChaCha8Rng, alt: &[bool], c: Correlation, out: &mut Vec<(f64, bool)>) {
        let m = self.m;
        let n = self.n;
        let a = c.rho.sqrt();
        let b = (1.0 - c.rho).sqrt();
        let mut sum = [vec![0.0; m], vec![0.0; m]];
        let mut sumsq = [vec![0.0; m], vec![0.0; m]];
        for g in 0..2 {
            for _ in 0..n {
                for start in (0..m).step_by(c.block_size) {
                    let end = (start + c.block_size).min(m);
                    let zb: f64 = StandardNormal.sample(rng);
                    for i in start..end {
                        let e: f64 = StandardNormal.sample(rng);
                        let shift = if g == 1 && alt[i] { self.theta } else { 0.0 };
                        let x = a * zb + b * e + shift;
                        sum[g][i] += x;
                        sumsq[g][i] += x * x;
                    }
                }
            }
        }
        let nf = n as f64;
        for i in 0..m {
            let m0 = sum[0][i] / nf;
            let m1 = sum[1][i] / nf;
            let ss = (sumsq[0][i] - nf * m0 * m0) + (sumsq[1][i] - nf * m1 * m1);
            let sp2 = ss / (2.0 * nf - 2.0);
            let t = (m1 - m0) / (sp2 * 2.0 / nf).sqrt();
            out.push((t.abs(), alt[i]));
        }
    }

    fn replicate(&self, seed: u64, index: u64, buf: &mut Vec<(f64, bool)>) -> ReplicateOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        self.draw(&mut rng, buf);
        let m_alt = buf.iter().filter(|x| x.1).count() as u64;
        for x in buf.iter_mut() {
            // Statistics are finite and non-negative, so the ccdf cannot fail.
            x.0 = self.null.ccdf(x.0).unwrap_or(1.0);
        }
        buf.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let step = self.f / self.m as f64;
        let j = (1..=self.m).rev().find(|&i| buf[i - 1].0 <= i as f64 * step).unwrap_or(0);
        let s = buf[..j].iter().filter(|x| x.1).count() as u64;
        ReplicateOutcome { m_alt, j: j as u64, s, t: j as u64 - s }
    }
}

/// Runs replicate `index` of `cfg` on its own (mainly for tests and audits).
pub fn simulate_replicate(cfg: &SimConfig, index: u64) -> Result<ReplicateOutcome> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    Ok(ctx.replicate(cfg.seed, index, &mut Vec::with_capacity(ctx.m)))
}

/// Draws the absolute statistics and non-null labels of replicate `index`,
/// for auditing a replicate outside the simulation loop.
pub fn replicate_statistics(cfg: &SimConfig, index: u64) -> Result<Vec<(f64, bool)>> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut out = Vec::with_capacity(ctx.m);
    ctx.draw(&mut rng, &mut out);
    Ok(out)
}

/// All replicate outcomes, in replicate order.
pub fn run_replicates(cfg: &SimConfig) -> Result<Vec<ReplicateOutcome>> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let work = || {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map_init(|| Vec::with_capacity(ctx.m), |buf, k| ctx.replicate(cfg.seed, k, buf))
            .collect::<Vec<_>>()
    };
    match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Summarises replicate outcomes (reduction in replicate order).
pub fn summarize(cfg: &SimConfig, outcomes: &[ReplicateOutcome]) -> SimSummary {
    let reps = outcomes.len();
    let nf = reps as f64;
    let mean_var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let mean = v.iter().sum::<f64>() / nf;
        let var = if reps > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
        (mean, var)
    };
    let (mean_tpf, var_tpf) = mean_var(&mut outcomes.iter().map(|o| o.tpf()));
    let (fdr_hat, var_fdf) = mean_var(&mut outcomes.iter().map(|o| o.fdf()));
    let (mean_pcf, _) = mean_var(&mut outcomes.iter().map(|o| o.j as f64 / cfg.design.m as f64));
    let frac = |pred: &dyn Fn(&ReplicateOutcome) -> bool| outcomes.iter().filter(|o| pred(o)).count() as f64 / nf;
    SimSummary {
        reps,
        seed: cfg.seed,
        mean_tpf,
        se_mean_tpf: (var_tpf / nf).sqrt(),
        var_tpf,
        lambda_power_hat: cfg.thresholds.iter().map(|&l| (l, frac(&|o| o.tpf() >= l))).collect(),
        fdr_hat,
        se_fdr: (var_fdf / nf).sqrt(),
        var_fdf,
        fdf_tail_hat: cfg.fdf_excess.iter().map(|&x| (x, frac(&|o| o.fdf() >= x))).collect(),
        mean_pcf,
    }
}

/// Runs the simulation and summarises it.
pub fn run_sim(cfg: &SimConfig) -> Result<SimSummary> {
    let outcomes = run_replicates(cfg)?;
    Ok(summarize(cfg, &outcomes))
}
