//! The six experiment harnesses and their shared trial machinery.
//!
//! Every trial is a pure function of the configuration and its substream
//! seed `substream_seed(master_seed, trial_id)`; rows are emitted in trial
//! order regardless of scheduling.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value as Json};

use super::config::{Experiment, RunConfig};
use super::table::{Row, Table};
use crate::certificates::{certificate_report_with, CertificateReport, ReportDetail};
use crate::error::{Error, Result};
use crate::problem::{gen_gaussian_map, gen_signal, substream_seed, LinearMap, SignalSpec};
use crate::regularizers::{Regularizer, TOL_ACTIVE};
use crate::solvers::SolveOptions;

mod consistency;
mod fb_trace;
mod identifiability;
mod model_id;
mod noise;
mod sure_curve;

pub use identifiability::contour_p50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSeed {
    pub trial: usize,
    pub seed: u64,
}

/// Result of one experiment run.
#[derive(Debug, Clone)]
pub struct Output {
    pub experiment: Experiment,
    pub table: Table,
    pub curves: Option<Table>,
    pub failures: Vec<TrialFailure>,
    pub seeds: Vec<TrialSeed>,
    /// Derived run-level values (calibrated caps, contours, fits).
    pub summary: Map<String, Json>,
}

/// One scheduled trial; `cell` indexes the harness's parameter cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TrialSpec {
    pub id: usize,
    pub seed: u64,
    pub cell: usize,
}

/// Rows of one trial: data rows and, for some harnesses, summary rows for
/// the curves table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialRows {
    pub rows: Vec<Row>,
    pub side: Vec<Row>,
}

impl From<Vec<Row>> for TrialRows {
    fn from(rows: Vec<Row>) -> Self {
        Self { rows, side: vec![] }
    }
}

pub(crate) trait Harness: Sync {
    fn header(&self) -> &'static [&'static str];
    fn specs(&self) -> Vec<TrialSpec>;
    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows>;
    fn curves(&self, _table: &Table, _side: &[Row]) -> Option<Table> {
        None
    }
    fn summary(&self, _table: &Table, _curves: Option<&Table>) -> Map<String, Json> {
        Map::new()
    }
}

/// `trials` trials for each of `cells` cells, numbered cell-major.
pub(crate) fn grid_specs(master: u64, cells: usize, trials: usize) -> Vec<TrialSpec> {
    (0..cells * trials)
        .map(|id| TrialSpec {
            id,
            seed: substream_seed(master, id as u64),
            cell: id / trials,
        })
        .collect()
}

fn execute<H: Harness>(experiment: Experiment, h: &H) -> Output {
    let specs = h.specs();
    let results: Vec<Result<TrialRows>> = specs.par_iter().map(|s| h.run_trial(s)).collect();
    let mut table = Table::new(h.header());
    let mut side = vec![];
    let mut failures = vec![];
    for (spec, res) in specs.iter().zip(results) {
        match res {
            Ok(out) => {
                out.rows.into_iter().for_each(|r| table.push(r));
                side.extend(out.side);
            }
            Err(e) => failures.push(TrialFailure {
                trial: spec.id,
                seed: spec.seed,
                error: e.to_string(),
            }),
        }
    }
    let curves = h.curves(&table, &side);
    let summary = h.summary(&table, curves.as_ref());
    Output {
        experiment,
        table,
        curves,
        failures,
        seeds: specs.iter().map(|s| TrialSeed { trial: s.id, seed: s.seed }).collect(),
        summary,
    }
}

fn replay<H: Harness>(h: &H, trial: usize) -> Result<TrialRows> {
    let spec = h
        .specs()
        .into_iter()
        .find(|s| s.id == trial)
        .ok_or_else(|| Error::InvalidArgument(format!("no trial {trial} in this configuration")))?;
    h.run_trial(&spec)
}

macro_rules! dispatch {
    ($cfg:expr, |$h:ident| $body:expr) => {
        match $cfg.experiment {
            Experiment::IdentifiabilitySweep => {
                let $h = identifiability::Sweep::new($cfg)?;
                $body
            }
            Experiment::NoiseRobustness => {
                let $h = noise::Robustness::new($cfg)?;
                $body
            }
            Experiment::ModelIdentification => {
                let $h = model_id::Identification::new($cfg)?;
                $body
            }
            Experiment::ConsistencySweep => {
                let $h = consistency::Consistency::new($cfg)?;
                $body
            }
            Experiment::SureCurve => {
                let $h = sure_curve::SureCurve::new($cfg)?;
                $body
            }
            Experiment::FbTrace => {
                let $h = fb_trace::FbTrace::new($cfg)?;
                $body
            }
        }
    };
}

/// Runs every trial of the configured experiment on the current rayon pool.
pub fn run(cfg: &RunConfig) -> Result<Output> {
    cfg.validate()?;
    dispatch!(cfg, |h| Ok(execute(cfg.experiment, &h)))
}

/// Recomputes the rows of a single trial.
pub fn replay_trial(cfg: &RunConfig, trial: usize) -> Result<TrialRows> {
    cfg.validate()?;
    dispatch!(cfg, |h| replay(&h, trial))
}

/// A drawn instance together with its certificate report.
pub(crate) struct Screened {
    pub attempt: usize,
    /// Seed of the accepted attempt; noise streams derive from it.
    pub seed: u64,
    pub phi: LinearMap,
    pub x0: DVector<f64>,
    pub report: CertificateReport,
}

impl Screened {
    pub fn noise_seed(&self, index: u64) -> u64 {
        substream_seed(self.seed, 2 + index)
    }
}

/// Draws `(Φ, x0)` from the substreams of `attempt_seed`.
pub(crate) fn draw_instance(
    cfg: &RunConfig,
    p: usize,
    k: usize,
    attempt_seed: u64,
    normalize: bool,
) -> Result<(LinearMap, DVector<f64>)> {
    let n = cfg.n()?;
    let phi = gen_gaussian_map(p, n, substream_seed(attempt_seed, 0), normalize)?;
    let x0 = gen_signal(&SignalSpec::new(cfg.signal_kind(k), substream_seed(attempt_seed, 1)), n)?;
    Ok((phi, x0))
}

/// Redraws instances until `accept` holds for the certificate report.
pub(crate) fn screen(
    cfg: &RunConfig,
    j: &Regularizer,
    p: usize,
    k: usize,
    trial_seed: u64,
    accept: impl Fn(&CertificateReport) -> bool,
) -> Result<Screened> {
    let max_attempts = cfg.options.max_attempts.unwrap_or(1000);
    for attempt in 0..max_attempts {
        let seed = substream_seed(trial_seed, attempt as u64);
        let (phi, x0) = draw_instance(cfg, p, k, seed, cfg.options.normalize.unwrap_or(true))?;
        let report = certificate_report_with(&phi, j, &x0, ReportDetail::Basic)?;
        if accept(&report) {
            return Ok(Screened {
                attempt,
                seed,
                phi,
                x0,
                report,
            });
        }
    }
    Err(Error::InsufficientData(format!(
        "no acceptable instance in {max_attempts} attempts"
    )))
}

pub(crate) fn identifiable(r: &CertificateReport) -> bool {
    r.identifiable
}

pub(crate) fn outside(r: &CertificateReport) -> bool {
    r.injective && r.position.value == crate::regularizers::Position::Outside
}

pub(crate) fn solve_options(cfg: &RunConfig, tol_rel: f64, trace_every: usize) -> SolveOptions {
    let o = &cfg.options;
    SolveOptions {
        accelerate: o.accelerate.unwrap_or(false),
        max_iter: o.max_iter.unwrap_or(100_000),
        tol_rel: o.tol_rel.unwrap_or(tol_rel),
        trace_every,
        ..SolveOptions::default()
    }
}

/// Tags of `x` and `x0` agree under the activity threshold.
pub(crate) fn model_match(j: &Regularizer, x: &DVector<f64>, x0: &DVector<f64>) -> Result<bool> {
    Ok(j.model_tangent(x, TOL_ACTIVE)?.tag == j.model_tangent(x0, TOL_ACTIVE)?.tag)
}

/// `‖x⋆ − x0‖ ≤ 1e-6·max(1, ‖x0‖)`.
pub(crate) fn exact_recovery(x: &DVector<f64>, x0: &DVector<f64>) -> bool {
    (x - x0).norm() <= 1e-6 * x0.norm().max(1.0)
}

/// Median of the finite entries; NaN when there are none.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Fraction of `true`; NaN for an empty slice.
pub(crate) fn fraction(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (hits, total) = flags.into_iter().fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, f64::NAN, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(fraction([true, false, true, true]), 0.75);
        assert!(fraction([]).is_nan());
    }

    #[test]
    fn grid_specs_are_cell_major() {
        let s = grid_specs(7, 3, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s.iter().map(|t| t.cell).collect::<Vec<_>>(), vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(s[4].seed, substream_seed(7, 4));
        assert!(grid_specs(7, 3, 0).is_empty());
    }
}
