//! SURE against the true prediction error along a λ grid.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde_json::{json, Map, Value as Json};

use super::{fraction, grid_specs, solve_options, Harness, TrialRows, TrialSpec};
use crate::error::Result;
use crate::linalg::mean_and_se;
use crate::problem::{gen_gaussian_map, gen_noise, gen_signal, substream_seed, LinearMap, SignalSpec};
use crate::regularizers::Regularizer;
use crate::risk::{sure_path, DofSource, RiskOptions};
use crate::xcli::config::{LambdaRule, RunConfig};
use crate::xcli::table::{Row, Table};

const INSTANCE_STREAM: u64 = 0x5355_5245_0000_0000;

pub(crate) struct SureCurve<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    phi: LinearMap,
    x0: DVector<f64>,
    sigma: f64,
    lambdas: Vec<f64>,
}

const HEADER: &[&str] = &[
    "trial", "seed", "lambda", "dof", "dof_source", "sure", "residual_sq", "true_error", "mc_dof", "mc_se",
    "near_transition", "failure",
];

const CURVES: &[&str] = &[
    "lambda", "replicates", "mean_sure", "se_sure", "mean_true_error", "se_true_error", "difference", "combined_se",
    "paired_se", "within_3se", "near_transition_rate",
];

impl<'a> SureCurve<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let n = cfg.n()?;
        let p = cfg.p()?;
        let base = substream_seed(cfg.master_seed ^ INSTANCE_STREAM, 0);
        let phi = gen_gaussian_map(p, n, substream_seed(base, 0), cfg.options.normalize.unwrap_or(true))?;
        let x0 = gen_signal(&SignalSpec::new(cfg.signal_kind(cfg.k()?), substream_seed(base, 1)), n)?;
        let Some(LambdaRule::Grid { values }) = &cfg.lambda_rule else {
            unreachable!("validated configuration")
        };
        let mut lambdas = values.clone();
        lambdas.sort_by(f64::total_cmp);
        Ok(Self {
            cfg,
            j: cfg.build_regularizer()?,
            phi,
            x0,
            sigma: cfg.noise_levels[0],
            lambdas,
        })
    }
}

impl Harness for SureCurve<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        grid_specs(self.cfg.master_seed, 1, self.cfg.trials)
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let clean = self.phi.apply(&self.x0);
        let y = &clean + gen_noise(self.phi.rows(), self.sigma, substream_seed(spec.seed, 0));
        let probes = self.cfg.options.mc_probes.unwrap_or(32);
        let opts = RiskOptions {
            solve: solve_options(self.cfg, 1e-10, 0),
            mc_probes: probes.max(1),
            // The Monte-Carlo cross-check runs on the first replicate only.
            always_mc: spec.id == 0 && probes > 0,
            check_transition: true,
            epsilon: None,
            seed: substream_seed(spec.seed, 1),
        };
        let curve = sure_path(&self.phi, &y, &self.j, self.sigma, &self.lambdas, &opts)?;
        Ok(curve
            .points
            .iter()
            .map(|pt| {
                let true_error = if pt.failure.is_none() {
                    (self.phi.apply(&pt.x_star) - &clean).norm_squared()
                } else {
                    f64::NAN
                };
                vec![
                    spec.id.into(),
                    spec.seed.into(),
                    pt.lambda.into(),
                    pt.dof.into(),
                    (match pt.dof_source {
                        DofSource::ClosedForm => "closed-form",
                        DofSource::MonteCarlo => "monte-carlo",
                    })
                    .into(),
                    pt.sure.into(),
                    pt.residual_sq.into(),
                    true_error.into(),
                    pt.mc_dof.map(|m| m.0).into(),
                    pt.mc_dof.map(|m| m.1).into(),
                    pt.near_transition.into(),
                    pt.failure.clone().into(),
                ]
            })
            .collect::<Vec<Row>>()
            .into())
    }

    fn curves(&self, table: &Table, _side: &[Row]) -> Option<Table> {
        let (cl, cs, ct, cn) = (
            table.column("lambda")?,
            table.column("sure")?,
            table.column("true_error")?,
            table.column("near_transition")?,
        );
        let mut groups: BTreeMap<u64, Vec<&Row>> = BTreeMap::new();
        for row in &table.rows {
            groups.entry(row[cl].as_f64()?.to_bits()).or_default().push(row);
        }
        let mut out = Table::new(CURVES);
        let mut keys: Vec<u64> = groups.keys().copied().collect();
        keys.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
        for key in keys {
            let rows = &groups[&key];
            let (s, t): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|r| Some((r[cs].as_f64()?, r[ct].as_f64()?)))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .unzip();
            let (ms, ses) = mean_and_se(&s);
            let (mt, set) = mean_and_se(&t);
            let diffs: Vec<f64> = s.iter().zip(&t).map(|(a, b)| a - b).collect();
            let (_, sed) = mean_and_se(&diffs);
            let combined = (ses * ses + set * set).sqrt();
            let diff = ms - mt;
            out.push(vec![
                f64::from_bits(key).into(),
                s.len().into(),
                ms.into(),
                ses.into(),
                mt.into(),
                set.into(),
                diff.into(),
                combined.into(),
                sed.into(),
                (diff.abs() <= 3.0 * combined).into(),
                fraction(rows.iter().map(|r| r[cn].as_bool() == Some(true))).into(),
            ]);
        }
        Some(out)
    }

    fn summary(&self, _table: &Table, curves: Option<&Table>) -> Map<String, Json> {
        let mut m = Map::new();
        if let Some(c) = curves {
            let argmin = |col: &str| {
                let lambdas = c.floats("lambda");
                c.floats(col)
                    .into_iter()
                    .zip(lambdas)
                    .filter(|(v, _)| v.is_finite())
                    // Ties go to the larger λ (rows are increasing in λ).
                    .fold((f64::INFINITY, f64::NAN), |best, (v, l)| if v <= best.0 { (v, l) } else { best })
                    .1
            };
            m.insert("best_lambda_mean_sure".into(), json!(argmin("mean_sure")));
            m.insert("best_lambda_mean_true_error".into(), json!(argmin("mean_true_error")));
        }
        m.insert("sigma".into(), json!(self.sigma));
        m
    }
}
