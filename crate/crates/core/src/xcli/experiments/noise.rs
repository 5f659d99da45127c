//! Error growth `‖x⋆ − x0‖` against `‖w‖` with `λ = c‖w‖`.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};

use super::{exact_recovery, grid_specs, identifiable, median, model_match, outside, screen, solve_options, Harness, TrialRows, TrialSpec};
use crate::error::Result;
use crate::linalg::linear_fit;
use crate::problem::gen_noise;
use crate::regularizers::Regularizer;
use crate::solvers::{fb_solve_path, primal_dual_solve, solve_noiseless};
use crate::xcli::config::{LambdaRule, RunConfig};
use crate::xcli::table::{Row, Table};

pub(crate) struct Robustness<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    p: usize,
    k: usize,
    c: f64,
    /// Cell 0 holds identifiable instances, cell 1 non-identifiable controls.
    counts: [usize; 2],
}

const HEADER: &[&str] = &[
    "trial", "seed", "control", "attempt", "position", "noise_level", "noise_norm", "lambda", "error", "exact_recovery",
    "ratio", "model_match", "converged",
];

const CURVES: &[&str] = &["control", "noise_level", "trials", "median_ratio", "max_ratio", "match_rate"];

impl<'a> Robustness<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let c = match cfg.lambda_rule {
            Some(LambdaRule::NoiseMultiple { c }) => c,
            _ => 1.0,
        };
        let controls = if cfg.options.controls.unwrap_or(false) {
            cfg.options.control_trials.unwrap_or(1)
        } else {
            0
        };
        Ok(Self {
            cfg,
            j: cfg.build_regularizer()?,
            p: cfg.p()?,
            k: cfg.k()?,
            c,
            counts: [cfg.trials, controls],
        })
    }
}

impl Harness for Robustness<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        let mut specs = grid_specs(self.cfg.master_seed, 1, self.counts[0]);
        let offset = specs.len();
        specs.extend(grid_specs(self.cfg.master_seed, 1, offset + self.counts[1]).into_iter().skip(offset).map(|s| TrialSpec {
            cell: 1,
            ..s
        }));
        specs
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let control = spec.cell == 1;
        let inst = screen(self.cfg, &self.j, self.p, self.k, spec.seed, if control { outside } else { identifiable })?;
        let opts = solve_options(self.cfg, 1e-12, 0);
        let mut rows = vec![];
        for (i, &sigma) in self.cfg.noise_levels.iter().enumerate() {
            let w = gen_noise(self.p, sigma, inst.noise_seed(i as u64));
            let y = inst.phi.apply(&inst.x0) + &w;
            let norm = w.norm();
            let (x, converged, lambda) = if norm == 0.0 {
                let (x, tr) = solve_noiseless(&inst.phi, &y, &self.j, &opts)?;
                (x, tr.converged, 0.0)
            } else {
                let lambda = self.c * norm;
                let (x, tr) = if self.j.prox_supported() {
                    fb_solve_path(&inst.phi, &y, lambda, &self.j, &opts)?
                } else {
                    primal_dual_solve(&inst.phi, &y, lambda, &self.j, &opts)?
                };
                (x, tr.converged, lambda)
            };
            let error = (&x - &inst.x0).norm();
            rows.push(vec![
                spec.id.into(),
                spec.seed.into(),
                control.into(),
                inst.attempt.into(),
                inst.report.position.value.as_str().into(),
                sigma.into(),
                norm.into(),
                lambda.into(),
                error.into(),
                exact_recovery(&x, &inst.x0).into(),
                (norm > 0.0).then(|| error / norm).into(),
                model_match(&self.j, &x, &inst.x0)?.into(),
                converged.into(),
            ]);
        }
        Ok(rows.into())
    }

    fn curves(&self, table: &Table, _side: &[Row]) -> Option<Table> {
        let (cc, cl, cr, cm) = (
            table.column("control")?,
            table.column("noise_level")?,
            table.column("ratio")?,
            table.column("model_match")?,
        );
        let mut groups: BTreeMap<(bool, u64), Vec<&Row>> = BTreeMap::new();
        for row in &table.rows {
            let level = row[cl].as_f64()?;
            groups.entry((row[cc].as_bool()?, level.to_bits())).or_default().push(row);
        }
        let mut out = Table::new(CURVES);
        for ((control, bits), rows) in groups {
            let ratios: Vec<f64> = rows.iter().filter_map(|r| r[cr].as_f64()).collect();
            let max = ratios.iter().copied().fold(f64::NAN, f64::max);
            out.push(vec![
                control.into(),
                f64::from_bits(bits).into(),
                rows.len().into(),
                median(&ratios).into(),
                max.into(),
                super::fraction(rows.iter().map(|r| r[cm].as_bool().unwrap_or(false))).into(),
            ]);
        }
        Some(out)
    }

    fn summary(&self, table: &Table, _curves: Option<&Table>) -> Map<String, Json> {
        let mut m = Map::new();
        for (label, control) in [("identifiable", false), ("control", true)] {
            if let Some(fit) = error_slope(table, control) {
                m.insert(format!("slope_{label}"), json!({"slope": fit.0, "r_squared": fit.1}));
            }
        }
        m
    }
}

/// Slope and r² of `log error` against `log ‖w‖` over rows with `‖w‖ > 0`.
pub fn error_slope(table: &Table, control: bool) -> Option<(f64, f64)> {
    let (cc, cn, ce) = (table.column("control")?, table.column("noise_norm")?, table.column("error")?);
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter(|r| r[cc].as_bool() == Some(control))
        .filter_map(|r| {
            let (n, e) = (r[cn].as_f64()?, r[ce].as_f64()?);
            (n > 0.0 && e > 0.0).then(|| (n.ln(), e.ln()))
        })
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let (slope, _, r2) = linear_fit(&xs, &ys);
    Some((slope, r2))
}
