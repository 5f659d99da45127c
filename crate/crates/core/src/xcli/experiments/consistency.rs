//! Model consistency as `P` grows with `λ_P = scale·P^a`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value as Json};

use super::{fraction, grid_specs, model_match, solve_options, Harness, TrialRows, TrialSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{gen_noise, gen_signal, rng, substream_seed, LinearMap, SignalSpec};
use crate::regularizers::{Regularizer, TOL_ACTIVE};
use crate::solvers::solve_penalized;
use crate::xcli::config::{LambdaRule, RunConfig};
use crate::xcli::table::{Row, Table};

/// Stream for the fixed signal, disjoint from trial streams.
const SIGNAL_STREAM: u64 = 0x5349_474e_414c_0000;

pub(crate) struct Consistency<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    x0: DVector<f64>,
    /// Lower Cholesky factor of the row covariance `Γ_ij = ρ^{|i−j|}`.
    gamma_sqrt: DMatrix<f64>,
    sigma: f64,
    scale: f64,
    cells: Vec<(f64, usize)>,
}

const HEADER: &[&str] = &["trial", "seed", "a", "p", "lambda", "error", "model_match", "converged"];
const CURVES: &[&str] = &["a", "p", "trials", "match_rate", "mean_error"];

impl<'a> Consistency<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let n = cfg.n()?;
        let (a, scale) = match cfg.lambda_rule {
            Some(LambdaRule::PPower { a, scale }) => (a, scale),
            _ => (0.7, 1.0),
        };
        let mut exponents = vec![a];
        if cfg.options.controls.unwrap_or(true) {
            exponents.extend(cfg.options.control_exponents.clone().unwrap_or_else(|| vec![1.0, 0.4]));
        }
        let ps = cfg.p_grid()?;
        let cells = exponents.iter().flat_map(|&a| ps.iter().map(move |&p| (a, p))).collect();
        let rho = cfg.options.rho.unwrap_or(0.0);
        if !(rho.abs() < 1.0) {
            return Err(Error::Config(format!("options.rho must lie in (−1, 1), got {rho}")));
        }
        let gamma = DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()));
        let gamma_sqrt = gamma.cholesky().expect("Toeplitz covariance with |ρ| < 1 is positive definite").l();
        let spec = SignalSpec::new(cfg.signal_kind(cfg.k()?), substream_seed(cfg.master_seed ^ SIGNAL_STREAM, 0));
        Ok(Self {
            cfg,
            j: cfg.build_regularizer()?,
            x0: gen_signal(&spec, n)?,
            gamma_sqrt,
            sigma: cfg.noise_levels.first().copied().unwrap_or(1.0),
            scale,
            cells,
        })
    }

    /// `P × N` design with i.i.d. `N(0, Γ)` rows.
    fn design(&self, p: usize, seed: u64) -> Result<LinearMap> {
        let n = self.x0.len();
        let mut r = rng(seed);
        let z = DMatrix::from_fn(p, n, |_, _| r.sample::<f64, _>(StandardNormal));
        LinearMap::new(z * self.gamma_sqrt.transpose())
    }

    /// `‖Γ_{I^c I} Γ_{II}^{-1} e‖∞` for the population covariance (ℓ1 only).
    fn population_ic(&self) -> Option<f64> {
        if !matches!(self.j, Regularizer::L1) {
            return None;
        }
        let gamma = &self.gamma_sqrt * self.gamma_sqrt.transpose();
        let model = self.j.model_tangent(&self.x0, TOL_ACTIVE).ok()?;
        let support: Vec<usize> = (0..self.x0.len()).filter(|&i| self.x0[i] != 0.0).collect();
        let off: Vec<usize> = (0..self.x0.len()).filter(|&i| self.x0[i] == 0.0).collect();
        let g_ii = gamma.select_rows(&support).select_columns(&support);
        let g_ci = gamma.select_rows(&off).select_columns(&support);
        let s = model.e.select_rows(&support);
        let v = g_ci * linalg::pinv(&g_ii) * s;
        Some(v.amax())
    }
}

impl Harness for Consistency<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        grid_specs(self.cfg.master_seed, self.cells.len(), self.cfg.trials)
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let (a, p) = self.cells[spec.cell];
        let phi = self.design(p, substream_seed(spec.seed, 0))?;
        let y = phi.apply(&self.x0) + gen_noise(p, self.sigma, substream_seed(spec.seed, 1));
        let lambda = self.scale * (p as f64).powf(a);
        let (x, tr) = solve_penalized(&phi, &y, lambda, &self.j, &solve_options(self.cfg, 1e-10, 0))?;
        Ok(vec![vec![
            spec.id.into(),
            spec.seed.into(),
            a.into(),
            p.into(),
            lambda.into(),
            (&x - &self.x0).norm().into(),
            model_match(&self.j, &x, &self.x0)?.into(),
            tr.converged.into(),
        ]].into())
    }

    fn curves(&self, table: &Table, _side: &[Row]) -> Option<Table> {
        let (ca, cp, cm, ce) = (table.column("a")?, table.column("p")?, table.column("model_match")?, table.column("error")?);
        // Keyed by configuration order of the exponents, then P.
        let order: Vec<u64> = {
            let mut v: Vec<u64> = vec![];
            for (a, _) in &self.cells {
                if !v.contains(&a.to_bits()) {
                    v.push(a.to_bits());
                }
            }
            v
        };
        let mut groups: BTreeMap<(usize, usize), Vec<&Row>> = BTreeMap::new();
        for row in &table.rows {
            let a = row[ca].as_f64()?.to_bits();
            let idx = order.iter().position(|&b| b == a)?;
            groups.entry((idx, row[cp].as_f64()? as usize)).or_default().push(row);
        }
        let mut out = Table::new(CURVES);
        for ((idx, p), rows) in groups {
            let errors: Vec<f64> = rows.iter().filter_map(|r| r[ce].as_f64()).collect();
            out.push(vec![
                f64::from_bits(order[idx]).into(),
                p.into(),
                rows.len().into(),
                fraction(rows.iter().map(|r| r[cm].as_bool() == Some(true))).into(),
                (errors.iter().sum::<f64>() / errors.len() as f64).into(),
            ]);
        }
        Some(out)
    }

    fn summary(&self, _table: &Table, _curves: Option<&Table>) -> Map<String, Json> {
        let mut m = Map::new();
        m.insert("x0".into(), json!(self.x0.as_slice()));
        m.insert("population_ic".into(), json!(self.population_ic()));
        m.insert("sigma".into(), json!(self.sigma));
        m
    }
}
