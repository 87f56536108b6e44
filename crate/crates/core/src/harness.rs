//! Benchmark grid runner.
//!
//! A spec lists grid values for `n`, `m`, `d` and `epsilon` plus the
//! estimators to compare. Every (cell, estimator, rep) becomes one CSV row.
//! Seeds are derived from the master seed and the row coordinates only, so
//! the output does not depend on execution order or thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aup::{aup_rlhf_fit, AupConfig, AupOptions};
use crate::data::{generate, AnyDataset, Dataset, GenConfig};
use crate::error::{invalid, Error, Result};
use crate::estimators::{fit_group_privacy, fit_mle, fit_rr, fit_userwise_dpsgd, FitConfig, FitResult};
use crate::mech::PrivacyBudget;
use crate::model::{ModelConfig, Observation};

/// The estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mle,
    Rr,
    Userwise,
    Group,
    Aup,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [Self::Mle, Self::Rr, Self::Userwise, Self::Group, Self::Aup];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mle => "mle",
            Self::Rr => "rr",
            Self::Userwise => "userwise",
            Self::Group => "group",
            Self::Aup => "aup",
        }
    }

    pub fn is_private(self) -> bool {
        self != Self::Mle
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown estimator {s:?}; expected mle, rr, userwise, group or aup")))
    }
}

/// Grid values. When `total_items` is set, each `m` is paired with
/// `n = total_items / m` and the `n` list is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(default)]
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub d: Vec<usize>,
    pub epsilon: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_items: Option<usize>,
}

/// Settings applied to every fit of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    /// Used by mle, rr, userwise and group. Its seed is replaced per row.
    pub fit: FitConfig,
    /// Used by aup. Its seed is replaced per row.
    pub aup: AupOptions,
}

/// One benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub grid: Grid,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "one")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(rename = "B", default = "unit")]
    pub bound: f64,
    #[serde(rename = "L", default = "unit")]
    pub feature_bound: f64,
    #[serde(default)]
    pub overrides: Overrides,
    /// Measure wall time per row; off by default so output is
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_delta() -> f64 {
    1e-5
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimators requested"));
        }
        let g = &self.grid;
        if g.m.is_empty() || g.d.is_empty() || g.epsilon.is_empty() || (g.total_items.is_none() && g.n.is_empty()) {
            return Err(invalid("every grid axis needs at least one value"));
        }
        if let Some(t) = g.total_items {
            if let Some(&m) = g.m.iter().find(|&&m| m == 0 || t < m) {
                return Err(invalid(format!("total_items {t} cannot be split into users of {m} items")));
            }
        }
        for &e in &g.epsilon {
            PrivacyBudget::new(e, self.delta)?;
        }
        for &d in &g.d {
            ModelConfig::new(d, self.bound, self.feature_bound, 2)?;
        }
        if g.n.contains(&0) || g.m.contains(&0) {
            return Err(invalid("n and m must be positive"));
        }
        Ok(())
    }

    /// Data cells `(n, m, d)` in output order.
    pub fn data_cells(&self) -> Vec<(usize, usize, usize)> {
        let g = &self.grid;
        let mut cells = Vec::new();
        for &d in &g.d {
            match g.total_items {
                Some(t) => cells.extend(g.m.iter().map(|&m| (t / m, m, d))),
                None => {
                    for &n in &g.n {
                        cells.extend(g.m.iter().map(|&m| (n, m, d)));
                    }
                }
            }
        }
        cells
    }

    fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for (n, m, d) in self.data_cells() {
            for &epsilon in &self.grid.epsilon {
                for &estimator in &self.estimators {
                    for rep in 0..self.reps {
                        jobs.push(Job { estimator, n, m, d, epsilon, rep });
                    }
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    estimator: EstimatorKind,
    n: usize,
    m: usize,
    d: usize,
    epsilon: f64,
    rep: usize,
}

/// One output row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rep: usize,
    /// `||theta_hat - theta*||_2`; NaN when the fit failed.
    pub error_l2: f64,
    pub effective_noise_std: f64,
    pub iterations_done: usize,
    pub halted_early: bool,
    pub wall_seconds: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "estimator,n,m,d,epsilon,delta,rep,error_l2,effective_noise_std,iterations_done,halted_early,wall_seconds,seed";

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words, stable across platforms
/// and releases.
pub fn stable_hash(words: &[u64]) -> u64 {
    words.iter().fold(0x005e_ed0f_u64, |acc, &w| mix(acc ^ mix(w)))
}

fn data_seed(master: u64, job: &Job) -> u64 {
    stable_hash(&[master, 1, job.n as u64, job.m as u64, job.d as u64, job.rep as u64])
}

fn row_seed(master: u64, job: &Job) -> u64 {
    stable_hash(&[
        master,
        2,
        job.n as u64,
        job.m as u64,
        job.d as u64,
        job.epsilon.to_bits(),
        job.estimator as u64,
        job.rep as u64,
    ])
}

/// Runs one estimator on a dataset of either item kind. The randomized
/// response estimator is defined for pairwise data only.
pub fn fit_any(
    kind: EstimatorKind,
    dataset: &AnyDataset,
    budget: &PrivacyBudget,
    fit: &FitConfig,
    aup: &AupOptions,
) -> Result<FitResult> {
    match dataset {
        AnyDataset::Pairwise(ds) if kind == EstimatorKind::Rr => fit_rr(ds, budget, fit),
        AnyDataset::Pairwise(ds) => fit_generic(kind, ds, budget, fit, aup),
        AnyDataset::KWise(_) if kind == EstimatorKind::Rr => {
            Err(Error::Unsupported("randomized response is defined for pairwise labels only".into()))
        }
        AnyDataset::KWise(ds) => fit_generic(kind, ds, budget, fit, aup),
    }
}

fn fit_generic<I: Observation + Send>(
    kind: EstimatorKind,
    ds: &Dataset<I>,
    budget: &PrivacyBudget,
    fit: &FitConfig,
    aup: &AupOptions,
) -> Result<FitResult> {
    match kind {
        EstimatorKind::Mle => fit_mle(ds, fit),
        EstimatorKind::Userwise => fit_userwise_dpsgd(ds, budget, fit),
        EstimatorKind::Group => fit_group_privacy(ds, budget, fit),
        EstimatorKind::Aup => {
            let cfg = AupConfig::theory_defaults(ds.n(), ds.m(), &ds.model(), budget, aup)?;
            aup_rlhf_fit(ds, budget, &cfg)
        }
        EstimatorKind::Rr => Err(Error::Unsupported("randomized response needs pairwise data".into())),
    }
}

fn run_job(spec: &ExperimentSpec, job: &Job) -> ResultRow {
    let seed = row_seed(spec.master_seed, job);
    let start = Instant::now();
    let outcome = (|| {
        let gen = GenConfig::new(job.n, job.m, job.d, spec.bound, spec.feature_bound, data_seed(spec.master_seed, job));
        let (dataset, truth) = generate(&gen)?;
        let budget = PrivacyBudget::new(job.epsilon, spec.delta)?;
        let fit_cfg = FitConfig { seed, ..spec.overrides.fit.clone() };
        let aup_cfg = AupOptions { seed, ..spec.overrides.aup.clone() };
        let fit = fit_any(job.estimator, &AnyDataset::Pairwise(dataset), &budget, &fit_cfg, &aup_cfg)?;
        let error = fit.theta_hat.distance(&truth.theta_star);
        Ok::<_, Error>((fit, error))
    })();
    let wall_seconds = if spec.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let (error_l2, effective_noise_std, iterations_done, halted_early) = match outcome {
        Ok((fit, e)) => (e, fit.effective_noise_std, fit.iterations_done, fit.halted_early),
        Err(_) => (f64::NAN, f64::NAN, 0, false),
    };
    ResultRow {
        estimator: job.estimator,
        n: job.n,
        m: job.m,
        d: job.d,
        epsilon: job.epsilon,
        delta: spec.delta,
        rep: job.rep,
        error_l2,
        effective_noise_std,
        iterations_done,
        halted_early,
        wall_seconds,
        seed,
    }
}

/// Runs every row on the current rayon pool. A failing fit yields a row
/// with NaN error and the run continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let jobs = spec.jobs();
    Ok(jobs.par_iter().map(|job| run_job(spec, job)).collect())
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

/// Writes rows with the fixed header.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
}

/// Mean effective noise of one estimator, rows indexed by epsilon and
/// columns by m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTable {
    pub estimator: EstimatorKind,
    pub epsilons: Vec<f64>,
    pub ms: Vec<usize>,
    /// `values[i][j]` for `epsilons[i]` and `ms[j]`; NaN for empty cells.
    pub values: Vec<Vec<f64>>,
}

impl NoiseTable {
    pub fn get(&self, epsilon: f64, m: usize) -> Option<f64> {
        let i = self.epsilons.iter().position(|&e| e == epsilon)?;
        let j = self.ms.iter().position(|&v| v == m)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon");
        for m in &self.ms {
            s.push_str(&format!(",m={m}"));
        }
        s.push('\n');
        for (e, row) in self.epsilons.iter().zip(&self.values) {
            s.push_str(&e.to_string());
            for v in row {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Averages `effective_noise_std` per (epsilon, m) for every private
/// estimator present. Failed rows are skipped.
pub fn effective_noise_report(rows: &[ResultRow]) -> Result<Vec<NoiseTable>> {
    let private: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator.is_private()).collect();
    if private.is_empty() {
        return Err(invalid("no rows from private estimators"));
    }
    let mut kinds: Vec<EstimatorKind> = private.iter().map(|r| r.estimator).collect();
    kinds.sort_unstable();
    kinds.dedup();
    let mut tables = Vec::new();
    for kind in kinds {
        let mine: Vec<&&ResultRow> = private.iter().filter(|r| r.estimator == kind).collect();
        let mut epsilons: Vec<f64> = mine.iter().map(|r| r.epsilon).collect();
        epsilons.sort_by(f64::total_cmp);
        epsilons.dedup();
        let mut ms: Vec<usize> = mine.iter().map(|r| r.m).collect();
        ms.sort_unstable();
        ms.dedup();
        let values = epsilons
            .iter()
            .map(|&e| {
                ms.iter()
                    .map(|&m| {
                        let v: Vec<f64> = mine
                            .iter()
                            .filter(|r| r.epsilon == e && r.m == m && r.effective_noise_std.is_finite())
                            .map(|r| r.effective_noise_std)
                            .collect();
                        if v.is_empty() {
                            f64::NAN
                        } else {
                            v.iter().sum::<f64>() / v.len() as f64
                        }
                    })
                    .collect()
            })
            .collect();
        tables.push(NoiseTable { estimator: kind, epsilons, ms, values });
    }
    Ok(tables)
}

pub const THEORY_NOTE: &str = "reference, not fit";

/// Rate expressions with all constants set to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    /// `1 / (2 + e^{-2LB} + e^{2LB})`.
    pub gamma: f64,
    /// `L^2 / d`, the coverage constant of sphere-sampled features.
    pub kappa: f64,
    /// `(1 / (gamma kappa)) (e^{eps/m} + 1) / (e^{eps/m} - 1) sqrt((1 + ln(1/alpha)) / (n m))`.
    pub rr_bound: f64,
    /// `1 / sqrt(m n) + sqrt(d) / (sqrt(m) n eps)`.
    pub aup_bound: f64,
    /// `d / sqrt(n m) + sqrt(d) / (sqrt(m) n eps)`.
    pub lower_bound: f64,
    pub note: String,
}

pub fn gamma(bound: f64, feature_bound: f64) -> f64 {
    let lb = 2.0 * bound * feature_bound;
    1.0 / (2.0 + (-lb).exp() + lb.exp())
}

/// Evaluates the reference curves at each `(n, m, epsilon)`; `alpha` is the
/// failure probability in the randomized-response bound.
pub fn theory_curves(model: &ModelConfig, cells: &[(usize, usize, f64)], alpha: f64) -> Vec<TheoryBounds> {
    let g = gamma(model.bound, model.feature_bound);
    let d = model.d as f64;
    let kappa = model.feature_bound * model.feature_bound / d;
    cells
        .iter()
        .map(|&(n, m, epsilon)| {
            let (nf, mf) = (n as f64, m as f64);
            let r = epsilon / mf;
            // (e^r + 1) / (e^r - 1) = 1 / tanh(r / 2)
            let flip = 1.0 / (r / 2.0).tanh();
            let rr_bound = flip / (g * kappa) * ((1.0 + (1.0 / alpha).ln()) / (nf * mf)).sqrt();
            let private = d.sqrt() / (mf.sqrt() * nf * epsilon);
            TheoryBounds {
                n,
                m,
                epsilon,
                gamma: g,
                kappa,
                rr_bound,
                aup_bound: 1.0 / (mf * nf).sqrt() + private,
                lower_bound: d / (nf * mf).sqrt() + private,
                note: THEORY_NOTE.to_string(),
            }
        })
        .collect()
}
