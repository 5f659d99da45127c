//! Per-iteration forward-backward traces, plain and accelerated.

use super::{grid_specs, identifiable, screen, solve_options, Harness, TrialRows, TrialSpec};
use crate::error::Result;
use crate::problem::gen_noise;
use crate::regularizers::{Regularizer, TOL_ACTIVE};
use crate::solvers::{fb_solve, identification_iteration, local_rate_estimate, predicted_local_rate, SolveOptions};
use crate::xcli::config::{LambdaRule, RunConfig};
use crate::xcli::table::{Row, Table};

pub(crate) struct FbTrace<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    p: usize,
    k: usize,
    lambda: f64,
    sigma: f64,
}

const HEADER: &[&str] = &[
    "trial", "seed", "variant", "iteration", "objective", "log_error", "tag_hash", "identified", "local_rate",
];

const CURVES: &[&str] = &[
    "trial", "seed", "variant", "iterations", "converged", "identification_iteration", "final_objective", "rate",
    "rate_r2", "predicted_rate",
];

impl<'a> FbTrace<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let Some(LambdaRule::Fixed { value }) = cfg.lambda_rule else {
            unreachable!("validated configuration")
        };
        Ok(Self {
            cfg,
            j: cfg.build_regularizer()?,
            p: cfg.p()?,
            k: cfg.k()?,
            lambda: value,
            sigma: cfg.noise_levels.first().copied().unwrap_or(0.0),
        })
    }
}

impl Harness for FbTrace<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        grid_specs(self.cfg.master_seed, 1, self.cfg.trials)
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let inst = screen(self.cfg, &self.j, self.p, self.k, spec.seed, identifiable)?;
        let y = inst.phi.apply(&inst.x0) + gen_noise(self.p, self.sigma, inst.noise_seed(0));
        let mut out = TrialRows::default();
        for (variant, accelerate) in [("plain", false), ("accelerated", true)] {
            let opts = SolveOptions {
                accelerate,
                ..solve_options(self.cfg, 1e-13, 1)
            };
            let (x, tr) = fb_solve(&inst.phi, &y, self.lambda, &self.j, &opts)?;
            let ident = identification_iteration(&tr);
            let rate = local_rate_estimate(&tr).ok();
            let predicted = predicted_local_rate(&inst.phi, &self.j.model_tangent(&x, TOL_ACTIVE)?, tr.step);
            for (i, tag) in tr.tags.iter().enumerate() {
                let n = i * tr.trace_every;
                out.rows.push(vec![
                    spec.id.into(),
                    spec.seed.into(),
                    variant.into(),
                    n.into(),
                    tr.objectives[i].into(),
                    tr.errors_to_final[i].ln().into(),
                    tag.digest().into(),
                    ident.is_some_and(|id| n >= id).into(),
                    rate.map(|r| r.rate).into(),
                ]);
            }
            out.side.push(vec![
                spec.id.into(),
                spec.seed.into(),
                variant.into(),
                tr.iterations.into(),
                tr.converged.into(),
                ident.into(),
                tr.objectives.last().copied().into(),
                rate.map(|r| r.rate).into(),
                rate.map(|r| r.r_squared).into(),
                predicted.into(),
            ]);
        }
        Ok(out)
    }

    fn curves(&self, _table: &Table, side: &[Row]) -> Option<Table> {
        let mut out = Table::new(CURVES);
        side.iter().cloned().for_each(|r| out.push(r));
        Some(out)
    }
}
