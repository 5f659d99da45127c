//! Fraction of identifiable instances over a `(k, P)` grid.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};

use super::{draw_instance, fraction, grid_specs, Harness, TrialRows, TrialSpec};
use crate::certificates::{certificate_report_with, ReportDetail};
use crate::error::Result;
use crate::regularizers::Regularizer;
use crate::xcli::config::RunConfig;
use crate::xcli::table::{Row, Table, Value};

pub(crate) struct Sweep<'a> {
    cfg: &'a RunConfig,
    j: Regularizer,
    n: usize,
    cells: Vec<(usize, usize)>,
}

const HEADER: &[&str] = &[
    "trial", "seed", "k", "p", "n", "dim_t", "sigma_min_t", "injective", "position", "margin", "ic", "identifiable",
];

const CURVES: &[&str] = &[
    "k", "p", "n", "trials", "frac_injective", "frac_interior", "frac_identifiable", "ref_2k_log_n_over_k", "ref_2k_log_n",
];

/// `2k·log(N/k)`, zero at `k = 0`.
pub fn reference_over_k(k: usize, n: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        2.0 * k as f64 * (n as f64 / k as f64).ln()
    }
}

/// `2k·log(N)`.
pub fn reference_log_n(k: usize, n: usize) -> f64 {
    2.0 * k as f64 * (n as f64).ln()
}

impl<'a> Sweep<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        let n = cfg.n()?;
        let ks = cfg.k_grid()?;
        let ps = cfg.p_grid()?;
        let cells = ks.iter().flat_map(|&k| ps.iter().map(move |&p| (k, p))).collect();
        Ok(Self {
            cfg,
            j: cfg.build_regularizer()?,
            n,
            cells,
        })
    }
}

impl Harness for Sweep<'_> {
    fn header(&self) -> &'static [&'static str] {
        HEADER
    }

    fn specs(&self) -> Vec<TrialSpec> {
        grid_specs(self.cfg.master_seed, self.cells.len(), self.cfg.trials)
    }

    fn run_trial(&self, spec: &TrialSpec) -> Result<TrialRows> {
        let (k, p) = self.cells[spec.cell];
        // The sweep samples the raw standard Gaussian ensemble unless asked otherwise.
        let (phi, x0) = draw_instance(self.cfg, p, k, spec.seed, self.cfg.options.normalize.unwrap_or(false))?;
        let r = certificate_report_with(&phi, &self.j, &x0, ReportDetail::Basic)?;
        Ok(vec![vec![
            spec.id.into(),
            spec.seed.into(),
            k.into(),
            p.into(),
            self.n.into(),
            r.dim_t.into(),
            r.sigma_min_t.into(),
            r.injective.into(),
            r.position.value.as_str().into(),
            r.position.margin.into(),
            r.ic.into(),
            r.identifiable.into(),
        ]].into())
    }

    fn curves(&self, table: &Table, _side: &[Row]) -> Option<Table> {
        let (ck, cp) = (table.column("k")?, table.column("p")?);
        let (ci, cpos, cid) = (table.column("injective")?, table.column("position")?, table.column("identifiable")?);
        let mut cells: BTreeMap<(usize, usize), Vec<&Row>> = BTreeMap::new();
        for row in &table.rows {
            let key = (row[ck].as_f64()? as usize, row[cp].as_f64()? as usize);
            cells.entry(key).or_default().push(row);
        }
        let mut out = Table::new(CURVES);
        for ((k, p), rows) in cells {
            let flag = |c: usize| fraction(rows.iter().map(|r| r[c].as_bool().unwrap_or(false)));
            out.push(vec![
                k.into(),
                p.into(),
                self.n.into(),
                rows.len().into(),
                flag(ci).into(),
                fraction(rows.iter().map(|r| r[cpos].as_str() == Some("interior"))).into(),
                flag(cid).into(),
                reference_over_k(k, self.n).into(),
                reference_log_n(k, self.n).into(),
            ]);
        }
        Some(out)
    }

    fn summary(&self, _table: &Table, curves: Option<&Table>) -> Map<String, Json> {
        let mut m = Map::new();
        let Some(curves) = curves else { return m };
        let mut ks: Vec<usize> = curves.floats("k").into_iter().map(|k| k as usize).collect();
        ks.dedup();
        let contour: Vec<Json> = ks
            .into_iter()
            .map(|k| {
                json!({
                    "k": k,
                    "p50": contour_p50(curves, k),
                    "ref_2k_log_n": reference_log_n(k, self.n),
                    "ref_2k_log_n_over_k": reference_over_k(k, self.n),
                })
            })
            .collect();
        m.insert("contour".into(), Json::Array(contour));
        m
    }
}

/// Smallest `P` at which the identifiable fraction of row `k` reaches 1/2,
/// interpolated linearly between grid points.
///
/// `None` when the fraction never reaches 1/2 on the grid, and the first
/// grid value when it starts above.
pub fn contour_p50(curves: &Table, k: usize) -> Option<f64> {
    let (ck, cp, cf) = (curves.column("k")?, curves.column("p")?, curves.column("frac_identifiable")?);
    let mut pts: Vec<(f64, f64)> = curves
        .rows
        .iter()
        .filter(|r| r[ck] == Value::UInt(k as u64))
        .map(|r| (r[cp].as_f64().unwrap_or(f64::NAN), r[cf].as_f64().unwrap_or(f64::NAN)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = pts.first()?;
    if first.1 >= 0.5 {
        return Some(first.0);
    }
    pts.windows(2).find_map(|w| {
        let ((p0, f0), (p1, f1)) = (w[0], w[1]);
        (f0 < 0.5 && f1 >= 0.5).then(|| p0 + (0.5 - f0) / (f1 - f0) * (p1 - p0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_are_exact() {
        assert_eq!(reference_over_k(0, 200), 0.0);
        assert!((reference_over_k(4, 200) - 8.0 * 50f64.ln()).abs() < 1e-12);
        assert!((reference_log_n(3, 100) - 6.0 * 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn contour_interpolates() {
        let mut t = Table::new(CURVES);
        for (p, f) in [(10usize, 0.0), (20, 0.25), (30, 0.75), (40, 1.0)] {
            let mut row: Row = vec![Value::Empty; CURVES.len()];
            row[0] = 2usize.into();
            row[1] = p.into();
            row[6] = f.into();
            t.push(row);
        }
        assert_eq!(contour_p50(&t, 2), Some(25.0));
        assert_eq!(contour_p50(&t, 3), None);
    }
}
