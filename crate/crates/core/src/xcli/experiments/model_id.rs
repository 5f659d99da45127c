//! Model identification under small noise, with outside-certificate controls
//! and forward-backward identification diagnostics.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde_json::{json, Map, Value as Json};

use super::{grid_specs, identifiable, median, model_match, outside, screen, solve_options, Harness, Screened, TrialRows, TrialSpec};
use crate::error::Result;
use crate::problem::{gen_noise, substream_seed};
use crate::regularizers::{Regularizer, TOL_ACTIVE};
use crate::solvers::{fb_solve, fb_solve_path, identification_iteration, local_rate_estimate, predicted_local_rate, SolveOptions};
use crate::xcli::config::{LambdaRule, RunConfig};
use crate::xcli::table::{Row, Table};

/// Tolerances defining a successful rate fit.
pub const RATE_R2_MIN: f64 = 0.95;
pub const RATE_ABS_TOL: f64 = 0.05;

/// Pilot instances are drawn from substreams disjoint from the trials.
const PILOT_STREAM: u64 = 0x5049_4c4f_5400_0000;
const BISECTION_STEPS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub lambda_cap: Option<f64>,
    pub ratio_cap: Option<f64>,
    pub lambda: f64,
    /// `‖w‖/λ` used for the interior trials.
    pub noise_ratio: f64,
}

pub(crate) struct Identification<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    p: usize,
    k: usize,
    counts: [usize; 2],
    cal: Calibration,
    control_lambda: f64,
}

const HEADER: &[&str] = &[
    "trial", "seed", "category", "attempt", "position", "margin", "sigma_min_t", "lambda", "noise_norm", "error",
    "model_match", "converged", "iterations", "identification_iteration", "rate", "rate_r2", "rate_points",
    "predicted_rate", "rate_ok",
];

const CURVES: &[&str] = &["category", "trials", "match_rate", "identified_rate", "rate_ok_rate", "median_error"];

/// Unit-norm noise direction of an instance.
fn direction(inst: &Screened, p: usize) -> DVector<f64> {
    let z = gen_noise(p, 1.0, inst.noise_seed(0));
    let n = z.norm();
    z / n
}

impl<'a> Identification<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let o = &cfg.options;
        let controls = if o.controls.unwrap_or(true) {
            o.control_trials.unwrap_or(cfg.trials)
        } else {
            0
        };
        let mut h = Self {
            cfg,
            j: cfg.build_regularizer()?,
            p: cfg.p()?,
            k: cfg.k()?,
            counts: [cfg.trials, controls],
            cal: Calibration {
                lambda_cap: None,
                ratio_cap: None,
                lambda: f64::NAN,
                noise_ratio: 0.0,
            },
            control_lambda: o.control_lambda.unwrap_or(1e-3),
        };
        h.cal = h.calibrate()?;
        Ok(h)
    }

    fn pilots(&self) -> Result<Vec<Screened>> {
        let count = self.cfg.options.pilot_trials.unwrap_or(20);
        (0..count as u64)
            .map(|i| {
                let seed = substream_seed(self.cfg.master_seed ^ PILOT_STREAM, i);
                screen(self.cfg, &self.j, self.p, self.k, seed, identifiable)
            })
            .collect()
    }

    fn matches_all(&self, pilots: &[Screened], lambda: f64, ratio: f64) -> Result<bool> {
        let opts = solve_options(self.cfg, 1e-10, 0);
        for inst in pilots {
            let y = inst.phi.apply(&inst.x0) + direction(inst, self.p) * (ratio * lambda);
            let (x, _) = fb_solve_path(&inst.phi, &y, lambda, &self.j, &opts)?;
            if !model_match(&self.j, &x, &inst.x0)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest value in `[lo, hi]` (log scale) for which `ok` holds, assuming
    /// `ok` holds below and fails above some threshold.
    fn bisect(mut lo: f64, mut hi: f64, ok: impl Fn(f64) -> Result<bool>) -> Result<f64> {
        if ok(hi)? {
            return Ok(hi);
        }
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            if ok(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    fn calibrate(&self) -> Result<Calibration> {
        let o = &self.cfg.options;
        let frac = o.cap_fraction.unwrap_or(0.5);
        let fixed = match self.cfg.lambda_rule {
            Some(LambdaRule::Fixed { value }) => Some(value),
            _ => None,
        };
        if let (Some(lambda), Some(ratio)) = (fixed, o.noise_ratio) {
            return Ok(Calibration {
                lambda_cap: None,
                ratio_cap: None,
                lambda,
                noise_ratio: ratio,
            });
        }
        if self.cfg.trials == 0 {
            return Ok(Calibration {
                lambda_cap: None,
                ratio_cap: None,
                lambda: fixed.unwrap_or(f64::NAN),
                noise_ratio: o.noise_ratio.unwrap_or(0.0),
            });
        }
        let pilots = self.pilots()?;
        let (lambda_cap, lambda) = match fixed {
            Some(l) => (None, l),
            None => {
                let hi = pilots
                    .iter()
                    .map(|s| s.phi.adjoint(&s.phi.apply(&s.x0)).amax())
                    .fold(0.0, f64::max);
                let cap = Self::bisect(hi * 1e-6, hi, |l| self.matches_all(&pilots, l, 0.0))?;
                (Some(cap), frac * cap)
            }
        };
        let (ratio_cap, noise_ratio) = match o.noise_ratio {
            Some(r) => (None, r),
            None => {
                let cap = Self::bisect(1e-6, 1e2, |r| self.matches_all(&pilots, lambda, r))?;
                (Some(cap), frac * cap)
            }
        };
        Ok(Calibration {
            lambda_cap,
            ratio_cap,
            lambda,
            noise_ratio,
        })
    }
}

impl Harness for Identification<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        let total = self.counts[0] + self.counts[1];
        grid_specs(self.cfg.master_seed, 1, total)
            .into_iter()
            .map(|s| TrialSpec {
                cell: usize::from(s.id >= self.counts[0]),
                ..s
            })
            .collect()
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let control = spec.cell == 1;
        let inst = screen(self.cfg, &self.j, self.p, self.k, spec.seed, if control { outside } else { identifiable })?;
        let clean = inst.phi.apply(&inst.x0);
        let (x, trace, lambda, noise_norm) = if control {
            // Noiseless data and vanishing λ.
            let opts = solve_options(self.cfg, 1e-12, 1);
            let (x, tr) = fb_solve_path(&inst.phi, &clean, self.control_lambda, &self.j, &opts)?;
            (x, tr, self.control_lambda, 0.0)
        } else {
            let lambda = self.cal.lambda;
            let w = direction(&inst, self.p) * (self.cal.noise_ratio * lambda);
            let opts = SolveOptions {
                accelerate: false,
                ..solve_options(self.cfg, 1e-13, 1)
            };
            let (x, tr) = fb_solve(&inst.phi, &(clean + &w), lambda, &self.j, &opts)?;
            (x, tr, lambda, w.norm())
        };
        let matched = model_match(&self.j, &x, &inst.x0)?;
        let ident = identification_iteration(&trace);
        let rate = local_rate_estimate(&trace).ok();
        let final_model = self.j.model_tangent(&x, TOL_ACTIVE)?;
        let predicted = predicted_local_rate(&inst.phi, &final_model, trace.step);
        let rate_ok = rate.is_some_and(|r| r.r_squared >= RATE_R2_MIN && (r.rate - predicted).abs() <= RATE_ABS_TOL);
        Ok(vec![vec![
            spec.id.into(),
            spec.seed.into(),
            (if control { "outside" } else { "interior" }).into(),
            inst.attempt.into(),
            inst.report.position.value.as_str().into(),
            inst.report.position.margin.into(),
            inst.report.sigma_min_t.into(),
            lambda.into(),
            noise_norm.into(),
            (&x - &inst.x0).norm().into(),
            matched.into(),
            trace.converged.into(),
            trace.iterations.into(),
            ident.into(),
            rate.map(|r| r.rate).into(),
            rate.map(|r| r.r_squared).into(),
            rate.map(|r| r.points).into(),
            predicted.into(),
            rate_ok.into(),
        ]].into())
    }

    fn curves(&self, table: &Table, _side: &[Row]) -> Option<Table> {
        let (cc, cm, ci, cr, ce) = (
            table.column("category")?,
            table.column("model_match")?,
            table.column("identification_iteration")?,
            table.column("rate_ok")?,
            table.column("error")?,
        );
        let mut groups: BTreeMap<String, Vec<&Row>> = BTreeMap::new();
        for row in &table.rows {
            groups.entry(row[cc].as_str()?.to_string()).or_default().push(row);
        }
        let mut out = Table::new(CURVES);
        for (category, rows) in groups {
            let errors: Vec<f64> = rows.iter().filter_map(|r| r[ce].as_f64()).collect();
            out.push(vec![
                category.into(),
                rows.len().into(),
                super::fraction(rows.iter().map(|r| r[cm].as_bool() == Some(true))).into(),
                super::fraction(rows.iter().map(|r| r[ci].as_f64().is_some())).into(),
                super::fraction(rows.iter().map(|r| r[cr].as_bool() == Some(true))).into(),
                median(&errors).into(),
            ]);
        }
        Some(out)
    }

    fn summary(&self, _table: &Table, _curves: Option<&Table>) -> Map<String, Json> {
        let mut m = Map::new();
        m.insert(
            "calibration".into(),
            json!({
                "lambda_cap": self.cal.lambda_cap,
                "ratio_cap": self.cal.ratio_cap,
                "lambda": self.cal.lambda,
                "noise_ratio": self.cal.noise_ratio,
                "control_lambda": self.control_lambda,
                "cap_fraction": self.cfg.options.cap_fraction.unwrap_or(0.5),
            }),
        );
        m
    }
}
